//! `nigmat` command line.

use std::io::Write;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nigmat_core::interaction::{InteractionConfig, InteractionSession, ORACLE_DELTA};
use nigmat_core::metrics::{
    calibration_map, error_metrics, evaluate, region_sad, trimap_from_alpha,
};
use nigmat_core::nig::DEFAULT_LAMBDA;
use nigmat_core::refine::{refine_matte, refine_windows, sample_coarse, select_pixels_or_empty};
use nigmat_core::toy::data::gen_composites;
use nigmat_core::toy::{
    train_stage1, train_stage2, MattingConfig, MattingNet, Stage1Config, Stage2Config, TrainLog,
};
use nigmat_core::{NigMap, Predictor, Raster, UserMap};
use serde_json::{json, Value};

use crate::checkpoint::Checkpoint;
use crate::error::{io_err, Error, Result};
use crate::fixture::{fixture_sample, load_dataset, load_or_train, save_dataset, FIXTURE_SIZE};
use crate::fras::{load_fras, save_fras};
use crate::png8::{encode_heatmap, save_png8};
use crate::server::serve;
use crate::session::Service;

#[derive(Debug, Parser)]
#[command(
    name = "nigmat",
    version,
    about = "Evidential interactive matting on toy composites"
)]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic composites (image, alpha, fg, bg) as FRAS files.
    GenData(GenData),
    /// Train the evidential matting net.
    TrainStage1(TrainStage1),
    /// Train the patch refiner against a frozen stage-1 net.
    TrainStage2(TrainStage2),
    /// Predict NIG maps and uncertainties for one image.
    Predict(Predict),
    /// Run the interaction loop with an oracle, or serve it over HTTP.
    Interact(Interact),
    /// Sample a coarse matte and refine its uncertain windows.
    Refine(Refine),
    /// Matting metrics of a predicted matte against the ground truth.
    Eval(Eval),
    /// Calibration curve of a prediction against the ground truth.
    Calib(Calib),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory of `NNNN_image.fras` / `NNNN_alpha.fras` pairs. Without
    /// it, composites are generated from the seed.
    #[arg(long, env = "DUG_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = FIXTURE_SIZE)]
    pub size: usize,
}

#[derive(Debug, Args)]
pub struct GenData {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = FIXTURE_SIZE)]
    pub size: usize,
    /// Defaults to `$DUG_DATA_DIR`, then `data`.
    #[arg(long, env = "DUG_DATA_DIR", default_value = "data")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainStage1 {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = Stage1Config::default().steps)]
    pub steps: usize,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Output path; defaults to `<out-dir>/stage1.ckpt`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainStage2 {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = Stage2Config::default().steps)]
    pub steps: usize,
    /// Frozen stage-1 checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output path; defaults to `<out-dir>/stage2.ckpt`.
    #[arg(long)]
    pub refiner: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Predict {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// One-channel map with codes -1, 0, 0.5, 1.
    #[arg(long)]
    pub user_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InteractionArgs {
    #[arg(long, default_value_t = InteractionConfig::default().grid)]
    pub k_grid: usize,
    #[arg(long, default_value_t = InteractionConfig::default().top_n)]
    pub top_n: usize,
    #[arg(long, default_value_t = InteractionConfig::default().threshold_scale)]
    pub threshold_scale: f64,
}

impl InteractionArgs {
    fn config(&self) -> InteractionConfig {
        InteractionConfig {
            grid: self.k_grid,
            top_n: self.top_n,
            threshold_scale: self.threshold_scale,
            oracle_delta: ORACLE_DELTA,
        }
    }
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("mode").required(true).args(["oracle", "serve"])))]
pub struct Interact {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub interaction: InteractionArgs,
    /// Label every proposal from the ground truth.
    #[arg(long)]
    pub oracle: bool,
    /// Serve the session over HTTP.
    #[arg(long)]
    pub serve: bool,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = 1)]
    pub rounds: usize,
    /// Stage-1 checkpoint; a small model is trained from the seed without one.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Without an image, the toy composite for `--seed` is used.
    #[arg(long, requires = "gt")]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Refine {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub refiner: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub gt: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Eval {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Trimap with codes 0, 0.5, 1; derived from the ground truth if absent.
    #[arg(long)]
    pub trimap: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Calib {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub levels: usize,
}

/// Parses `argv` (including the program name) and runs it. Returns the
/// process exit code: 0 on success, 1 on failure, 2 on usage errors.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    let report = match cmd {
        Command::GenData(a) => gen_data(&a)?,
        Command::TrainStage1(a) => train1(&a)?,
        Command::TrainStage2(a) => train2(&a)?,
        Command::Predict(a) => predict(&a)?,
        Command::Interact(a) if a.serve => return interact_serve(&a, out),
        Command::Interact(a) => interact_oracle(&a)?,
        Command::Refine(a) => refine(&a)?,
        Command::Eval(a) => eval(&a)?,
        Command::Calib(a) => calib(&a)?,
    };
    writeln!(out, "{report}").map_err(io_err(Path::new("<stdout>")))
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// Writes γ, both uncertainties and `Var[σ²]` as FRAS plus viewable PNGs.
/// The infinite `Var[σ²]` sentinel is stored as `f32::MAX`.
fn write_maps(dir: &Path, prefix: &str, map: &NigMap) -> Result<()> {
    let f = |name: &str, ext: &str| dir.join(format!("{prefix}{name}.{ext}"));
    save_fras(f("gamma", "fras"), &map.gamma)?;
    save_png8(f("gamma", "png"), &map.gamma)?;
    for (name, r) in [
        ("epistemic", map.epistemic()),
        ("aleatoric", map.aleatoric()),
    ] {
        save_fras(f(name, "fras"), &r)?;
        let p = f(name, "png");
        std::fs::write(&p, encode_heatmap(&r)?).map_err(io_err(&p))?;
    }
    let v = map
        .var_sigma2()
        .map(|v| if v.is_finite() { v } else { f32::MAX });
    save_fras(f("var_sigma2", "fras"), &v)
}

fn training_data(d: &DataArgs, seed: u64) -> Result<Vec<nigmat_core::toy::MattingSample>> {
    match &d.data_dir {
        Some(dir) => load_dataset(dir),
        None => Ok(gen_composites(d.n, d.size, seed)?),
    }
}

fn log_summary(log: &TrainLog) -> Value {
    let l = &log.losses;
    let k = l.len().min(50);
    let mean = |s: &[f64]| {
        if s.is_empty() {
            f64::NAN
        } else {
            s.iter().sum::<f64>() / s.len() as f64
        }
    };
    json!({
        "steps": l.len(),
        "loss_first": mean(&l[..k]),
        "loss_last": mean(&l[l.len() - k..]),
    })
}

fn gen_data(a: &GenData) -> Result<Value> {
    let data = gen_composites(a.n, a.size, a.seed)?;
    save_dataset(&a.out_dir, &data)?;
    Ok(json!({ "n": a.n, "size": a.size, "dir": a.out_dir }))
}

fn train1(a: &TrainStage1) -> Result<Value> {
    let seed = a.common.seed;
    let data = training_data(&a.data, seed)?;
    let mut net = MattingNet::new(MattingConfig {
        image_channels: data[0].image.channels(),
        seed,
        ..MattingConfig::default()
    });
    let cfg = Stage1Config {
        steps: a.steps,
        lambda: a.lambda,
        seed,
        ..Stage1Config::default()
    };
    let log = train_stage1(&mut net, &data, &cfg)?;
    let path = match &a.checkpoint {
        Some(p) => p.clone(),
        None => {
            mkdir(&a.common.out_dir)?;
            a.common.out_dir.join("stage1.ckpt")
        }
    };
    let ck = Checkpoint::from_matting(&net, seed);
    ck.save(&path)?;
    Ok(json!({ "checkpoint": path, "checksum": ck.manifest.checksum, "log": log_summary(&log) }))
}

fn train2(a: &TrainStage2) -> Result<Value> {
    let seed = a.common.seed;
    let net = Checkpoint::load(&a.checkpoint)?.into_matting()?;
    let data = training_data(&a.data, seed)?;
    let cfg = Stage2Config {
        steps: a.steps,
        seed,
        ..Stage2Config::default()
    };
    let (refiner, log) = train_stage2(&net, &data, &cfg)?;
    let path = match &a.refiner {
        Some(p) => p.clone(),
        None => {
            mkdir(&a.common.out_dir)?;
            a.common.out_dir.join("stage2.ckpt")
        }
    };
    let ck = Checkpoint::from_refiner(&refiner, seed);
    ck.save(&path)?;
    Ok(json!({ "refiner": path, "checksum": ck.manifest.checksum, "log": log_summary(&log) }))
}

fn predict(a: &Predict) -> Result<Value> {
    let net = Checkpoint::load(&a.checkpoint)?.into_matting()?;
    let image = load_fras(&a.image)?;
    let user = match &a.user_map {
        Some(p) => UserMap::from_raster(load_fras(p)?)?,
        None => UserMap::empty(image.width(), image.height()),
    };
    let map = net.predict(&image, &user)?;
    mkdir(&a.common.out_dir)?;
    write_maps(&a.common.out_dir, "", &map)?;
    Ok(json!({
        "mean_epistemic": map.epistemic().mean(),
        "mean_aleatoric": map.aleatoric().mean(),
    }))
}

fn interact_inputs(a: &Interact) -> Result<(Raster, Option<Raster>)> {
    match &a.image {
        Some(p) => Ok((load_fras(p)?, a.gt.as_deref().map(load_fras).transpose()?)),
        None => {
            let s = fixture_sample(a.common.seed)?;
            Ok((s.image, Some(s.alpha)))
        }
    }
}

fn interact_oracle(a: &Interact) -> Result<Value> {
    let seed = a.common.seed;
    let cfg = a.interaction.config();
    let (image, gt) = interact_inputs(a)?;
    let gt = gt.ok_or_else(|| Error::Format("--oracle needs a ground truth (--gt)".into()))?;
    let net = load_or_train(a.checkpoint.as_deref(), seed)?;
    let mut session = InteractionSession::start(image, Some(gt.clone()), &net)?;
    let dir = &a.common.out_dir;
    mkdir(dir)?;
    save_png8(dir.join("image.png"), session.image())?;
    save_png8(dir.join("gt.png"), &gt)?;
    write_maps(dir, "round0_", session.fused())?;

    let summary = |s: &InteractionSession| -> Result<(f64, f64)> {
        Ok((
            error_metrics(&s.fused().gamma, &gt)?.sad,
            s.fused().epistemic().mean(),
        ))
    };
    let (sad0, epi0) = summary(&session)?;
    let mut rounds = vec![json!({ "round": 0, "sad": sad0, "mean_epistemic": epi0 })];
    for _ in 0..a.rounds {
        let props = session.proposals(&cfg)?;
        let labels = session
            .oracle_labels(&props, cfg.oracle_delta)
            .expect("session has a ground truth");
        session.run_round(&net, &labels)?;
        let (sad, epi) = summary(&session)?;
        rounds.push(json!({
            "round": session.round(),
            "sad": sad,
            "mean_epistemic": epi,
            "labels": labels.iter().map(|(p, l)| json!({ "patch": p, "label": l })).collect::<Vec<_>>(),
        }));
    }
    write_maps(dir, "fused_", session.fused())?;
    save_fras(dir.join("user_map.fras"), session.user_map().raster())?;
    let post = rounds.last().expect("round 0 is always recorded")["sad"].clone();
    let report = json!({
        "seed": seed,
        "config": cfg,
        "model_checksum": format!("{:016x}", net.checksum()),
        "rounds": rounds,
    });
    write_json(&dir.join("report.json"), &report)?;
    Ok(json!({ "pre_sad": sad0, "post_sad": post, "rounds": a.rounds }))
}

fn interact_serve(a: &Interact, out: &mut dyn Write) -> Result<()> {
    let (image, gt) = interact_inputs(a)?;
    let net = load_or_train(a.checkpoint.as_deref(), a.common.seed)?;
    let service = Service::start(
        format!("seed-{}", a.common.seed),
        net,
        image,
        gt,
        a.interaction.config(),
    )?;
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, a.port));
    serve(service, addr, |bound| {
        let _ = writeln!(out, "listening on http://{bound}");
        let _ = out.flush();
    })
    .map_err(io_err(Path::new("<socket>")))
}

fn refine(a: &Refine) -> Result<Value> {
    let net = Checkpoint::load(&a.checkpoint)?.into_matting()?;
    let refiner = Checkpoint::load(&a.refiner)?.into_refiner()?;
    let image = load_fras(&a.image)?;
    let map = net.predict(&image, &UserMap::empty(image.width(), image.height()))?;
    let coarse = sample_coarse(&map, a.common.seed);
    let mask = select_pixels_or_empty(&map.aleatoric(), &map.var_sigma2())?;
    let refined = refine_matte(&coarse, &mask, &refiner, &image)?;
    let dir = &a.common.out_dir;
    mkdir(dir)?;
    for (name, r) in [
        ("coarse", &coarse),
        ("refined", &refined),
        ("mask", &mask.to_raster()),
    ] {
        save_fras(dir.join(format!("{name}.fras")), r)?;
        save_png8(dir.join(format!("{name}.png")), r)?;
    }
    let mut report = json!({
        "selected": mask.count(),
        "windows": refine_windows(&mask).len(),
    });
    if let Some(p) = &a.gt {
        let gt = load_fras(p)?;
        let tri = trimap_from_alpha(&gt);
        report["sad_t_coarse"] = json!(region_sad(&coarse, &gt, &tri)?.1);
        report["sad_t_refined"] = json!(region_sad(&refined, &gt, &tri)?.1);
    }
    Ok(report)
}

fn eval(a: &Eval) -> Result<Value> {
    let pred = load_fras(&a.pred)?;
    let gt = load_fras(&a.gt)?;
    let tri = match &a.trimap {
        Some(p) => load_fras(p)?,
        None => trimap_from_alpha(&gt),
    };
    Ok(serde_json::to_value(evaluate(&pred, &gt, Some(&tri))?)?)
}

fn calib(a: &Calib) -> Result<Value> {
    if a.levels == 0 {
        return Err(Error::Format("--levels must be positive".into()));
    }
    let net = Checkpoint::load(&a.checkpoint)?.into_matting()?;
    let image = load_fras(&a.image)?;
    let gt = load_fras(&a.gt)?;
    let map = net.predict(&image, &UserMap::empty(image.width(), image.height()))?;
    let levels: Vec<f64> = (1..=a.levels).map(|i| i as f64 / a.levels as f64).collect();
    let curve = calibration_map(&map, &gt, &levels)?;
    Ok(json!({ "max_deviation": curve.max_deviation(), "curve": curve }))
}
