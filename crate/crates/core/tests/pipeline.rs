use nigmat_core::fusion::fuse_fold;
use nigmat_core::interaction::{InteractionConfig, InteractionSession};
use nigmat_core::metrics::error_metrics;
use nigmat_core::refine::{refine_matte, sample_coarse, select_pixels_or_empty, IdentityRefiner};
use nigmat_core::toy::data::{gen_composites, gen_cubic_rescaled};
use nigmat_core::toy::{
    gen_cubic, train_stage1, CubicConfig, CubicNet, MattingConfig, MattingNet, Stage1Config,
};
use nigmat_core::{Predictor, UserMap};

#[test]
fn early_training_reduces_loss_for_almost_every_seed() {
    let data = gen_cubic(1000, (-4.0, 4.0), 3.0, 0);
    let seeds = 20;
    let mut decreased = 0;
    for seed in 0..seeds {
        let mut net = CubicNet::new(64, seed);
        let before = net
            .loss_grad(net.params().values(), &data.x, &data.y, 0.01)
            .0;
        let cfg = CubicConfig {
            steps: 100,
            seed,
            ..CubicConfig::default()
        };
        net.train(&data, &cfg).unwrap();
        let after = net
            .loss_grad(net.params().values(), &data.x, &data.y, 0.01)
            .0;
        decreased += (after < before) as usize;
    }
    assert!(
        decreased * 100 >= 95 * seeds as usize,
        "{decreased}/{seeds}"
    );
}

fn small_net() -> MattingNet {
    let data = gen_composites(6, 64, 3).unwrap();
    let mut net = MattingNet::new(MattingConfig {
        features: 8,
        ..MattingConfig::default()
    });
    let cfg = Stage1Config {
        steps: 40,
        crop: 24,
        ..Stage1Config::default()
    };
    train_stage1(&mut net, &data, &cfg).unwrap();
    net
}

#[test]
fn session_history_and_fusion_stay_consistent() {
    let net = small_net();
    let s = gen_composites(1, 64, 9).unwrap().remove(0);
    let cfg = InteractionConfig {
        grid: 8,
        ..InteractionConfig::default()
    };
    let mut session =
        InteractionSession::start(s.image.clone(), Some(s.alpha.clone()), &net).unwrap();
    let mut expected = vec![0.0f32; 64 * 64];
    for round in 1..=3 {
        let props = session.proposals(&cfg).unwrap();
        assert!(props.len() <= cfg.top_n);
        assert!(props
            .windows(2)
            .all(|w| w[0].mean_uncertainty >= w[1].mean_uncertainty));
        let labels = session.oracle_labels(&props, cfg.oracle_delta).unwrap();
        session.run_round(&net, &labels).unwrap();
        assert_eq!(session.round(), round);
        assert_eq!(session.history().len(), round + 1);
        assert_eq!(session.fused(), &fuse_fold(session.history()).unwrap());
        // the latest prediction is exactly what the net gives for the user map
        assert_eq!(
            session.history().last().unwrap(),
            &net.predict(&s.image, session.user_map()).unwrap()
        );
        // labels are painted in order; a later patch overwrites an earlier one
        for (p, l) in &labels {
            for y in p.y0..p.y1 {
                expected[y * 64 + p.x0..y * 64 + p.x1].fill(l.code());
            }
        }
        assert_eq!(session.user_map().raster().data(), &expected[..]);
    }
    // fusion only adds evidence
    let (first, last) = (&session.history()[0], session.fused());
    assert!(first
        .omega
        .data()
        .iter()
        .zip(last.omega.data())
        .all(|(a, b)| b >= a));
}

#[test]
fn unlabelled_rounds_keep_sad_finite_and_identity_refine_is_noop() {
    let net = small_net();
    let s = gen_composites(1, 64, 10).unwrap().remove(0);
    let map = net.predict(&s.image, &UserMap::empty(64, 64)).unwrap();
    let coarse = sample_coarse(&map, 1);
    assert_eq!(coarse, sample_coarse(&map, 1));
    let mask = select_pixels_or_empty(&map.aleatoric(), &map.var_sigma2()).unwrap();
    let refined = refine_matte(&coarse, &mask, &IdentityRefiner, &s.image).unwrap();
    assert_eq!(refined, coarse);
    assert!(error_metrics(&refined, &s.alpha).unwrap().sad.is_finite());
}

#[test]
fn cubic_fit_reaches_golden_rmse() {
    let train = gen_cubic(1000, (-4.0, 4.0), 3.0, 5);
    let test = gen_cubic_rescaled(1000, (-4.0, 4.0), 3.0, 105, train.rescale);
    let mut net = CubicNet::new(64, 5);
    let cfg = CubicConfig {
        lambda: 0.1,
        seed: 5,
        ..CubicConfig::default()
    };
    net.train(&train, &cfg).unwrap();
    let pred = net.predict(&test.x).unwrap();
    let mse = pred
        .iter()
        .zip(&test.y)
        .map(|(p, y)| (p.gamma - y).powi(2))
        .sum::<f64>()
        / test.y.len() as f64;
    // noise alone contributes 3 / (4³ - (-4)³) ≈ 0.023
    assert!(mse.sqrt() < 0.05, "rmse {}", mse.sqrt());
}
