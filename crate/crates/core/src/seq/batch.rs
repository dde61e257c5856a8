use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Number of drum categories per frame.
pub const DRUM_VOICES: usize = 9;
/// 88 note-on classes, one note-off, one rest.
pub const CATEGORICAL_CLASSES: usize = 90;
pub const NOTE_OFF: usize = 88;
pub const REST: usize = 89;
pub const MOTION_DIMS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceKind {
    /// 9 hits, 9 velocities, 9 offsets per frame.
    Drum,
    /// One-hot over 88 notes, note-off and rest.
    Categorical,
    /// Joint angles.
    Motion,
}

impl SequenceKind {
    pub fn frame_dims(self) -> usize {
        match self {
            SequenceKind::Drum => 3 * DRUM_VOICES,
            SequenceKind::Categorical => CATEGORICAL_CLASSES,
            SequenceKind::Motion => MOTION_DIMS,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SequenceKind::Drum => "drum",
            SequenceKind::Categorical => "categorical",
            SequenceKind::Motion => "motion",
        }
    }

    /// Channels that carry binary note information (hits / note-ons).
    pub fn binary_channels(self) -> Vec<usize> {
        match self {
            SequenceKind::Drum => (0..DRUM_VOICES).collect(),
            SequenceKind::Categorical => (0..NOTE_OFF).collect(),
            SequenceKind::Motion => vec![],
        }
    }

    /// Check one frame against the kind's value constraints.
    pub fn check_frame(self, frame: &[f64]) -> std::result::Result<(), String> {
        if frame.len() != self.frame_dims() {
            return Err(format!(
                "expected {} values per frame, got {}",
                self.frame_dims(),
                frame.len()
            ));
        }
        if let Some(v) = frame.iter().find(|v| !v.is_finite()) {
            return Err(format!("non-finite value {v}"));
        }
        match self {
            SequenceKind::Drum => {
                let (hits, rest) = frame.split_at(DRUM_VOICES);
                let (vel, off) = rest.split_at(DRUM_VOICES);
                if let Some(h) = hits.iter().find(|h| **h != 0.0 && **h != 1.0) {
                    return Err(format!("hit value {h} is not 0 or 1"));
                }
                if let Some(v) = vel.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(format!("velocity {v} outside [0, 1]"));
                }
                if let Some(o) = off.iter().find(|o| !(-0.5..=0.5).contains(*o)) {
                    return Err(format!("offset {o} outside [-0.5, 0.5]"));
                }
            }
            SequenceKind::Categorical => {
                let ones = frame.iter().filter(|v| **v == 1.0).count();
                let zeros = frame.iter().filter(|v| **v == 0.0).count();
                if ones != 1 || zeros != frame.len() - 1 {
                    return Err(format!("frame is not one-hot ({ones} active entries)"));
                }
            }
            SequenceKind::Motion => {}
        }
        Ok(())
    }
}

impl fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SequenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drum" => Ok(SequenceKind::Drum),
            "categorical" | "piano" | "cello" => Ok(SequenceKind::Categorical),
            "motion" => Ok(SequenceKind::Motion),
            other => Err(Error::invalid(format!("unknown sequence kind `{other}`"))),
        }
    }
}

/// `batch × n_steps × n_dims` frames, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBatch {
    kind: SequenceKind,
    n_steps: usize,
    data: Vec<f64>,
}

impl SequenceBatch {
    pub fn empty(kind: SequenceKind, n_steps: usize) -> Self {
        Self {
            kind,
            n_steps,
            data: Vec::new(),
        }
    }

    /// Build without checking value constraints (used for decoder outputs
    /// and readouts). Only the length is checked.
    pub fn from_raw(kind: SequenceKind, n_steps: usize, data: Vec<f64>) -> Result<Self> {
        let per = n_steps * kind.frame_dims();
        if per == 0 || !data.len().is_multiple_of(per) {
            return Err(Error::shape(
                "SequenceBatch::from_raw",
                format!(
                    "{} values is not a multiple of {n_steps}×{}",
                    data.len(),
                    kind.frame_dims()
                ),
            ));
        }
        Ok(Self {
            kind,
            n_steps,
            data,
        })
    }

    /// Build and validate every frame.
    pub fn new(kind: SequenceKind, n_steps: usize, data: Vec<f64>) -> Result<Self> {
        let b = Self::from_raw(kind, n_steps, data)?;
        b.validate()?;
        Ok(b)
    }

    pub fn from_sequences(kind: SequenceKind, n_steps: usize, seqs: &[Vec<f64>]) -> Result<Self> {
        if seqs.is_empty() {
            return Ok(Self::empty(kind, n_steps));
        }
        Self::new(kind, n_steps, seqs.concat())
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.n_dims();
        for (i, frame) in self.data.chunks(d).enumerate() {
            self.kind.check_frame(frame).map_err(|msg| {
                Error::invalid(format!(
                    "sequence {} frame {}: {msg}",
                    i / self.n_steps,
                    i % self.n_steps
                ))
            })?;
        }
        Ok(())
    }

    pub fn kind(&self) -> SequenceKind {
        self.kind
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_dims(&self) -> usize {
        self.kind.frame_dims()
    }

    pub fn seq_len(&self) -> usize {
        self.n_steps * self.n_dims()
    }

    pub fn len(&self) -> usize {
        if self.n_steps == 0 {
            0
        } else {
            self.data.len() / self.seq_len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn sequence(&self, i: usize) -> &[f64] {
        let n = self.seq_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn frame(&self, i: usize, t: usize) -> &[f64] {
        let d = self.n_dims();
        let start = i * self.seq_len() + t * d;
        &self.data[start..start + d]
    }

    pub fn sequences(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.seq_len().max(1))
    }

    /// Frames at step `t` for every batch item, `batch × n_dims`.
    pub fn step_tensor(&self, t: usize) -> Tensor {
        let d = self.n_dims();
        let b = self.len();
        let mut data = Vec::with_capacity(b * d);
        for i in 0..b {
            data.extend_from_slice(self.frame(i, t));
        }
        Tensor::matrix(b, d, data).expect("frame layout")
    }

    /// `batch × (n_steps · n_dims)` view.
    pub fn flat_tensor(&self) -> Tensor {
        Tensor::matrix(self.len(), self.seq_len(), self.data.clone()).expect("flat layout")
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.seq_len());
        for &i in idx {
            data.extend_from_slice(self.sequence(i));
        }
        Self {
            kind: self.kind,
            n_steps: self.n_steps,
            data,
        }
    }

    pub fn push(&mut self, seq: &[f64]) -> Result<()> {
        if seq.len() != self.seq_len() {
            return Err(Error::shape(
                "SequenceBatch::push",
                format!("{} vs {}", seq.len(), self.seq_len()),
            ));
        }
        self.data.extend_from_slice(seq);
        Ok(())
    }

    pub fn append(&mut self, other: &SequenceBatch) -> Result<()> {
        if other.kind != self.kind || other.n_steps != self.n_steps {
            return Err(Error::invalid("cannot append batches of different layout"));
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    /// Quantize deterministic readouts into valid frames: hits at
    /// probability ≥ 0.5 with clamped velocity/offset, argmax for
    /// categorical frames, motion values unchanged.
    pub fn from_readout(kind: SequenceKind, n_steps: usize, readout: &[f64]) -> Result<Self> {
        let mut b = Self::from_raw(kind, n_steps, readout.to_vec())?;
        let d = kind.frame_dims();
        for frame in b.data.chunks_mut(d) {
            quantize_frame(kind, frame);
        }
        Ok(b)
    }

    /// Split each sequence into its frames.
    pub fn frames_of(&self, i: usize) -> Vec<Vec<f64>> {
        (0..self.n_steps)
            .map(|t| self.frame(i, t).to_vec())
            .collect()
    }
}

/// In-place quantization of one readout frame (see [`SequenceBatch::from_readout`]).
pub fn quantize_frame(kind: SequenceKind, frame: &mut [f64]) {
    match kind {
        SequenceKind::Drum => {
            for v in 0..DRUM_VOICES {
                if frame[v] >= 0.5 {
                    frame[v] = 1.0;
                    frame[DRUM_VOICES + v] = frame[DRUM_VOICES + v].clamp(0.0, 1.0);
                    frame[2 * DRUM_VOICES + v] = frame[2 * DRUM_VOICES + v].clamp(-0.5, 0.5);
                } else {
                    frame[v] = 0.0;
                    frame[DRUM_VOICES + v] = 0.0;
                    frame[2 * DRUM_VOICES + v] = 0.0;
                }
            }
        }
        SequenceKind::Categorical => {
            let best = frame
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
                )
                .0;
            frame.iter_mut().for_each(|v| *v = 0.0);
            frame[best] = 1.0;
        }
        SequenceKind::Motion => {}
    }
}
