use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::protocol::JamMessage;
use crate::error::{Error, Result};
use crate::model::FmVae;
use crate::seq::SequenceBatch;
use crate::tensor::{Rng, Tensor};

pub const DEFAULT_STD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Human,
    Model,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub source: Source,
    pub latent: Vec<f64>,
    pub latent3d: [f64; 3],
    pub timestamp_ms: u64,
}

/// Mutable state of one jam session. The trajectory only grows.
#[derive(Clone, Debug)]
pub struct SessionState {
    id: String,
    std: f64,
    last_seq: Option<u64>,
    trajectory: Vec<TrajectoryPoint>,
}

impl SessionState {
    pub fn new(id: impl Into<String>, std: f64) -> Result<Self> {
        check_std(std)?;
        Ok(Self {
            id: id.into(),
            std,
            last_seq: None,
            trajectory: Vec::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn trajectory(&self) -> &[TrajectoryPoint] {
        &self.trajectory
    }

    pub fn last_seq(&self) -> Option<u64> {
        self.last_seq
    }

    /// Accept `seq` if it is strictly greater than every earlier one.
    pub(crate) fn advance_seq(&mut self, seq: u64) -> Result<()> {
        if self.last_seq.is_some_and(|last| seq <= last) {
            return Err(Error::Protocol(format!(
                "sequence number {seq} is not above {}",
                self.last_seq.unwrap_or_default()
            )));
        }
        self.last_seq = Some(seq);
        Ok(())
    }
}

fn check_std(std: f64) -> Result<()> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::invalid(format!(
            "perturbation std must be finite and non-negative, got {std}"
        )));
    }
    Ok(())
}

/// Answer one bars message: encode, perturb, decode.
///
/// Failures come back as an error message and leave `state` untouched.
pub fn handle_bars(
    msg: &JamMessage,
    model: &FmVae,
    state: &mut SessionState,
    rng: &mut Rng,
) -> JamMessage {
    let (seq, session) = match msg {
        JamMessage::Bars { seq, session, .. } => (Some(*seq), Some(session.clone())),
        _ => (None, None),
    };
    match respond(msg, model, state, rng) {
        Ok(r) => r,
        Err(e) => JamMessage::error(
            session.or_else(|| Some(state.id.clone())),
            seq,
            e.to_string(),
        ),
    }
}

fn respond(
    msg: &JamMessage,
    model: &FmVae,
    state: &mut SessionState,
    rng: &mut Rng,
) -> Result<JamMessage> {
    let JamMessage::Bars {
        session,
        seq,
        timestamp_ms,
        bars,
        std,
    } = msg
    else {
        return Err(Error::Protocol(format!(
            "expected bars, got {}",
            msg.type_name()
        )));
    };
    if *session != state.id {
        return Err(Error::Protocol(format!(
            "message for session `{session}` sent to `{}`",
            state.id
        )));
    }
    let cfg = model.config();
    if bars.len() != cfg.n_s {
        return Err(Error::Protocol(format!(
            "expected {} frames, got {}",
            cfg.n_s,
            bars.len()
        )));
    }
    let std = std.unwrap_or(state.std);
    check_std(std)?;
    let x = SequenceBatch::from_sequences(cfg.kind, cfg.n_s, &[bars.concat()])?;
    let (mean, _) = model.posterior(&x)?;
    let z_human = mean.row_slice(0).to_vec();
    // draw before committing so a failed decode does not advance the session
    let mut draw = rng.clone();
    let z_model: Vec<f64> = z_human.iter().map(|m| m + std * draw.normal()).collect();
    let out = model.generate(&Tensor::row(z_model.clone()))?;

    let mut next = state.clone();
    next.advance_seq(*seq)?;
    let mut latents: Vec<Vec<f64>> = next.trajectory.iter().map(|p| p.latent.clone()).collect();
    latents.push(z_human.clone());
    latents.push(z_model.clone());
    let emb = embed3d(&latents);
    let (h3, m3) = (emb[emb.len() - 2], emb[emb.len() - 1]);
    next.trajectory.push(TrajectoryPoint {
        source: Source::Human,
        latent: z_human.clone(),
        latent3d: h3,
        timestamp_ms: *timestamp_ms,
    });
    next.trajectory.push(TrajectoryPoint {
        source: Source::Model,
        latent: z_model.clone(),
        latent3d: m3,
        timestamp_ms: *timestamp_ms,
    });
    *state = next;
    *rng = draw;
    Ok(JamMessage::Response {
        session: session.clone(),
        seq: *seq,
        timestamp_ms: *timestamp_ms,
        bars: out.frames_of(0),
        latent: z_model,
        latent3d: m3,
        human_latent: z_human,
        human_latent3d: h3,
    })
}

/// Three-dimensional view of a set of latents.
///
/// Up to three dimensions are passed through, zero-padded. Wider latents
/// are centred and projected on their top three principal axes, each axis
/// signed so its largest-magnitude component is positive.
pub fn embed3d(latents: &[Vec<f64>]) -> Vec<[f64; 3]> {
    let Some(first) = latents.first() else {
        return Vec::new();
    };
    let d = first.len();
    if d <= 3 {
        return latents
            .iter()
            .map(|z| {
                let mut p = [0.0; 3];
                p[..d].copy_from_slice(z);
                p
            })
            .collect();
    }
    let n = latents.len();
    let mean: Vec<f64> = (0..d)
        .map(|k| latents.iter().map(|z| z[k]).sum::<f64>() / n as f64)
        .collect();
    let x = DMatrix::from_fn(n, d, |i, k| latents[i][k] - mean[k]);
    let eig = SymmetricEigen::new(x.transpose() * &x);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axes: Vec<Vec<f64>> = order[..3]
        .iter()
        .map(|&c| {
            let v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            let pivot = v
                .iter()
                .copied()
                .fold(0.0, |m: f64, a| if a.abs() > m.abs() { a } else { m });
            let s = if pivot < 0.0 { -1.0 } else { 1.0 };
            v.into_iter().map(|a| s * a).collect()
        })
        .collect();
    (0..n)
        .map(|i| {
            let row = x.row(i);
            let mut p = [0.0; 3];
            for (j, axis) in axes.iter().enumerate() {
                p[j] = row.iter().zip(axis).map(|(a, b)| a * b).sum();
            }
            p
        })
        .collect()
}
