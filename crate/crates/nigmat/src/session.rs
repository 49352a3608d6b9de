//! One interaction session as served over HTTP, independent of the transport.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use nigmat_core::interaction::{InteractionConfig, InteractionSession, Label, PatchProposal};
use nigmat_core::metrics::{evaluate, trimap_from_alpha, MetricReport};
use nigmat_core::toy::MattingNet;
use nigmat_core::Raster;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::png8::{encode_heatmap, encode_png8};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalWire {
    pub id: String,
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub mean_uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionWire {
    pub session_id: String,
    pub round: usize,
    pub width: usize,
    pub height: usize,
    /// Base64 PNGs. Heatmaps are min–max normalised per image.
    pub image_png: String,
    pub matte_png: String,
    pub epistemic_png: String,
    pub aleatoric_png: String,
    /// Most uncertain first.
    pub proposals: Vec<ProposalWire>,
    pub metrics: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub proposal_id: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAck {
    pub proposal_id: String,
    pub label: Label,
    pub round: usize,
    pub pending: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsWire {
    pub round: usize,
    pub report: MetricReport,
    /// SAD in thousands, MSE in thousandths.
    pub scaled: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelError {
    /// No such proposal in any round.
    Unknown(String),
    /// The proposal belongs to a round that has already been stepped.
    Stale { id: String, round: usize },
}

impl std::fmt::Display for LabelError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelError::Unknown(id) => write!(f, "unknown proposal id {id:?}"),
            LabelError::Stale { id, round } => {
                write!(f, "proposal {id:?} is from a finished round (now {round})")
            }
        }
    }
}

pub fn proposal_id(round: usize, i: usize) -> String {
    format!("r{round}-{i}")
}

fn parse_id(id: &str) -> Option<(usize, usize)> {
    let (r, i) = id.strip_prefix('r')?.split_once('-')?;
    Some((r.parse().ok()?, i.parse().ok()?))
}

pub struct Service {
    id: String,
    net: MattingNet,
    cfg: InteractionConfig,
    session: InteractionSession,
    proposals: Vec<PatchProposal>,
    pending: BTreeMap<usize, Label>,
    wire: SessionWire,
}

impl Service {
    pub fn start(
        id: impl Into<String>,
        net: MattingNet,
        image: Raster,
        gt: Option<Raster>,
        cfg: InteractionConfig,
    ) -> Result<Self> {
        let session = InteractionSession::start(image, gt, &net)?;
        let proposals = session.proposals(&cfg)?;
        let mut s = Service {
            id: id.into(),
            net,
            cfg,
            session,
            proposals,
            pending: BTreeMap::new(),
            wire: placeholder_wire(),
        };
        s.wire = s.render()?;
        Ok(s)
    }

    pub fn session(&self) -> &InteractionSession {
        &self.session
    }

    pub fn proposals(&self) -> &[PatchProposal] {
        &self.proposals
    }

    pub fn wire(&self) -> &SessionWire {
        &self.wire
    }

    pub fn label(&mut self, req: &LabelRequest) -> Result<LabelAck, LabelError> {
        let round = self.session.round();
        match parse_id(&req.proposal_id) {
            Some((r, _)) if r < round => {
                return Err(LabelError::Stale {
                    id: req.proposal_id.clone(),
                    round,
                })
            }
            Some((r, i)) if r == round && i < self.proposals.len() => {
                self.pending.insert(i, req.label);
            }
            _ => return Err(LabelError::Unknown(req.proposal_id.clone())),
        }
        Ok(LabelAck {
            proposal_id: req.proposal_id.clone(),
            label: req.label,
            round,
            pending: self.pending.len(),
        })
    }

    /// Runs one round with every pending label and re-proposes.
    pub fn step(&mut self) -> Result<&SessionWire> {
        let labels: Vec<(PatchProposal, Label)> = self
            .pending
            .iter()
            .map(|(&i, &l)| (self.proposals[i], l))
            .collect();
        self.session.run_round(&self.net, &labels)?;
        self.pending.clear();
        self.proposals = self.session.proposals(&self.cfg)?;
        self.wire = self.render()?;
        Ok(&self.wire)
    }

    pub fn metrics(&self) -> Result<Option<MetricsWire>> {
        let Some(gt) = self.session.gt() else {
            return Ok(None);
        };
        let report = evaluate(
            &self.session.fused().gamma,
            gt,
            Some(&trimap_from_alpha(gt)),
        )?;
        Ok(Some(MetricsWire {
            round: self.session.round(),
            scaled: report.scaled(),
            report,
        }))
    }

    fn render(&self) -> Result<SessionWire> {
        let fused = self.session.fused();
        let b64 = |bytes: Vec<u8>| STANDARD.encode(bytes);
        let round = self.session.round();
        Ok(SessionWire {
            session_id: self.id.clone(),
            round,
            width: fused.width(),
            height: fused.height(),
            image_png: b64(encode_png8(self.session.image())?),
            matte_png: b64(encode_png8(&fused.gamma)?),
            epistemic_png: b64(encode_heatmap(&fused.epistemic())?),
            aleatoric_png: b64(encode_heatmap(&fused.aleatoric())?),
            proposals: self
                .proposals
                .iter()
                .enumerate()
                .map(|(i, p)| ProposalWire {
                    id: proposal_id(round, i),
                    x0: p.x0,
                    y0: p.y0,
                    x1: p.x1,
                    y1: p.y1,
                    mean_uncertainty: p.mean_uncertainty,
                })
                .collect(),
            metrics: self.metrics()?.map(|m| m.report),
        })
    }
}

fn placeholder_wire() -> SessionWire {
    SessionWire {
        session_id: String::new(),
        round: 0,
        width: 0,
        height: 0,
        image_png: String::new(),
        matte_png: String::new(),
        epistemic_png: String::new(),
        aleatoric_png: String::new(),
        proposals: Vec::new(),
        metrics: None,
    }
}
