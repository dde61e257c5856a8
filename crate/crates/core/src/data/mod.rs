//! Datasets: drum category mapping, file formats, augmentation, splits,
//! musical attributes and synthetic corpora.

mod io;
mod synth;

pub use io::{load_binary, load_midi_csv, load_sequences, save_binary, save_sequences, MidiHit};
pub use synth::{synth_toy_corpus, SynthFamily};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seq::{SequenceBatch, SequenceKind, CATEGORICAL_CLASSES, DRUM_VOICES, NOTE_OFF};
use crate::tensor::Rng;

/// Ordered drum categories and the General MIDI pitch mapped to each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DrumMapping {
    categories: [(&'static str, u8); DRUM_VOICES],
}

impl Default for DrumMapping {
    fn default() -> Self {
        Self {
            categories: [
                ("Bass", 36),
                ("Snare", 38),
                ("High Tom", 50),
                ("Low-Mid Tom", 47),
                ("High Floor Tom", 43),
                ("Open Hi-Hat", 46),
                ("Closed Hi-Hat", 42),
                ("Crash Cymbal", 49),
                ("Ride Cymbal", 51),
            ],
        }
    }
}

impl DrumMapping {
    pub fn new(categories: [(&'static str, u8); DRUM_VOICES]) -> Result<Self> {
        for (i, a) in categories.iter().enumerate() {
            if categories[..i].iter().any(|b| b.1 == a.1) {
                return Err(Error::invalid(format!(
                    "drum mapping: pitch {} used twice",
                    a.1
                )));
            }
        }
        Ok(Self { categories })
    }

    pub fn categories(&self) -> &[(&'static str, u8)] {
        &self.categories
    }

    pub fn voice(&self, pitch: u8) -> Option<usize> {
        self.categories.iter().position(|c| c.1 == pitch)
    }

    pub fn pitch(&self, voice: usize) -> Option<u8> {
        self.categories.get(voice).map(|c| c.1)
    }

    pub fn name(&self, voice: usize) -> Option<&'static str> {
        self.categories.get(voice).map(|c| c.0)
    }
}

/// Drum frames built from MIDI events, plus the number of events dropped
/// because their pitch is not mapped.
#[derive(Clone, Debug, PartialEq)]
pub struct MappedHits {
    pub frames: Vec<[f64; 3 * DRUM_VOICES]>,
    pub dropped: usize,
}

/// Map per-step MIDI events onto the nine categories.
///
/// Velocity is scaled by 1/127 and the tick offset by `1 / ticks_per_step`,
/// clamped to half a step. When two events land on the same voice and step
/// the louder one wins.
pub fn map_midi_hits(
    events: &[MidiHit],
    n_steps: usize,
    ticks_per_step: f64,
    mapping: &DrumMapping,
) -> MappedHits {
    let mut frames = vec![[0.0; 3 * DRUM_VOICES]; n_steps];
    let mut dropped = 0;
    for e in events {
        let Some(v) = mapping.voice(e.pitch) else {
            dropped += 1;
            continue;
        };
        let Some(frame) = frames.get_mut(e.step) else {
            dropped += 1;
            continue;
        };
        let vel = (e.velocity.min(127) as f64) / 127.0;
        if frame[v] == 1.0 && frame[DRUM_VOICES + v] >= vel {
            continue;
        }
        frame[v] = 1.0;
        frame[DRUM_VOICES + v] = vel;
        frame[2 * DRUM_VOICES + v] = (e.offset_ticks as f64 / ticks_per_step).clamp(-0.5, 0.5);
    }
    MappedHits { frames, dropped }
}

/// Shift every note-on by `semitones`. Note-off and rest frames are kept;
/// sequences with a note leaving the keyboard are dropped.
pub fn pitch_shift(x: &SequenceBatch, semitones: i32) -> Result<SequenceBatch> {
    if x.kind() != SequenceKind::Categorical {
        return Err(Error::invalid(format!(
            "pitch_shift needs categorical sequences, got {}",
            x.kind()
        )));
    }
    if semitones.unsigned_abs() as usize >= NOTE_OFF {
        return Err(Error::invalid(format!(
            "pitch_shift: |{semitones}| exceeds the keyboard"
        )));
    }
    let mut out = SequenceBatch::empty(x.kind(), x.n_steps());
    'seq: for s in x.sequences() {
        let mut shifted = vec![0.0; s.len()];
        for (src, dst) in s
            .chunks(CATEGORICAL_CLASSES)
            .zip(shifted.chunks_mut(CATEGORICAL_CLASSES))
        {
            let class = argmax(src);
            let target = if class < NOTE_OFF {
                let k = class as i64 + semitones as i64;
                if !(0..NOTE_OFF as i64).contains(&k) {
                    continue 'seq;
                }
                k as usize
            } else {
                class
            };
            dst[target] = 1.0;
        }
        out.push(&shifted)?;
    }
    Ok(out)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

/// Musical attributes of one sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeRecord {
    /// Hits (drum) or note-ons (categorical) over the whole sequence.
    pub density: usize,
    /// Mean velocity over hits.
    pub velocity: Option<f64>,
    /// Mean offset over hits.
    pub offset: Option<f64>,
    /// Mean key index over note-ons.
    pub pitch: Option<f64>,
}

/// Attribute selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Density,
    Velocity,
    Offset,
    Pitch,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::Density,
        Attribute::Velocity,
        Attribute::Offset,
        Attribute::Pitch,
    ];

    pub fn of(self, r: &AttributeRecord) -> Option<f64> {
        match self {
            Attribute::Density => Some(r.density as f64),
            Attribute::Velocity => r.velocity,
            Attribute::Offset => r.offset,
            Attribute::Pitch => r.pitch,
        }
    }

    /// Attributes defined for a sequence kind.
    pub fn for_kind(kind: SequenceKind) -> &'static [Attribute] {
        match kind {
            SequenceKind::Drum => &[Attribute::Density, Attribute::Velocity, Attribute::Offset],
            SequenceKind::Categorical => &[Attribute::Density, Attribute::Pitch],
            SequenceKind::Motion => &[],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Density => "density",
            Attribute::Velocity => "velocity",
            Attribute::Offset => "offset",
            Attribute::Pitch => "pitch",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown attribute `{s}`")))
    }
}

/// Attributes of a flat sequence of `kind` frames.
pub fn attributes(kind: SequenceKind, seq: &[f64]) -> AttributeRecord {
    let mut rec = AttributeRecord {
        density: 0,
        velocity: None,
        offset: None,
        pitch: None,
    };
    let d = kind.frame_dims();
    match kind {
        SequenceKind::Drum => {
            let (mut vs, mut os) = (0.0, 0.0);
            for f in seq.chunks(d) {
                for v in 0..DRUM_VOICES {
                    if f[v] >= 0.5 {
                        rec.density += 1;
                        vs += f[DRUM_VOICES + v];
                        os += f[2 * DRUM_VOICES + v];
                    }
                }
            }
            if rec.density > 0 {
                rec.velocity = Some(vs / rec.density as f64);
                rec.offset = Some(os / rec.density as f64);
            }
        }
        SequenceKind::Categorical => {
            let mut ps = 0.0;
            for f in seq.chunks(d) {
                let c = argmax(f);
                if c < NOTE_OFF {
                    rec.density += 1;
                    ps += c as f64;
                }
            }
            if rec.density > 0 {
                rec.pitch = Some(ps / rec.density as f64);
            }
        }
        SequenceKind::Motion => {}
    }
    rec
}

/// Attributes of every sequence in a batch.
pub fn batch_attributes(x: &SequenceBatch) -> Vec<AttributeRecord> {
    x.sequences().map(|s| attributes(x.kind(), s)).collect()
}

/// One attribute per sequence; sequences where it is undefined give an error.
pub fn attribute_values(x: &SequenceBatch, attr: Attribute) -> Result<Vec<f64>> {
    batch_attributes(x)
        .iter()
        .enumerate()
        .map(|(i, r)| {
            attr.of(r)
                .ok_or_else(|| Error::invalid(format!("sequence {i} has no {attr} attribute")))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitPolicy {
    Random,
    PercentileBand,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Band {
    /// Central 10% of ranks.
    Middle10,
    /// Central 50% of ranks.
    Middle50,
}

impl Band {
    pub fn fraction(self) -> f64 {
        match self {
            Band::Middle10 => 0.1,
            Band::Middle50 => 0.5,
        }
    }

    fn min_len(self) -> usize {
        match self {
            Band::Middle10 => 10,
            Band::Middle50 => 4,
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Band::Middle10 => "middle-10",
            Band::Middle50 => "middle-50",
        })
    }
}

impl FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "middle-10" | "10" => Ok(Band::Middle10),
            "middle-50" | "50" => Ok(Band::Middle50),
            other => Err(Error::invalid(format!("unknown band `{other}`"))),
        }
    }
}

/// Index lists into a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub policy: SplitPolicy,
    /// Inclusive attribute range of the test band (band splits only).
    pub band: Option<(f64, f64)>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Seeded 80/10/10 split.
pub fn random_split(n: usize, rng: &mut Rng) -> DatasetSplit {
    let order = rng.permutation(n);
    let n_train = (0.8 * n as f64).round() as usize;
    let n_val = ((0.1 * n as f64).round() as usize).min(n - n_train);
    DatasetSplit {
        train: order[..n_train].to_vec(),
        validation: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
        policy: SplitPolicy::Random,
        band: None,
    }
}

/// Hold out the central band of attribute ranks as the test set.
///
/// The band holds `max(1, round(n·frac))` ranks starting at
/// `floor((n - m) / 2)`. The ranks below and above it form the two ends;
/// every ninth end sequence (alternating ends, outermost first) goes to
/// validation and the rest to training.
pub fn percentile_band_split(attrs: &[f64], band: Band) -> Result<DatasetSplit> {
    let n = attrs.len();
    if n < band.min_len() {
        return Err(Error::invalid(format!(
            "percentile split needs at least {} sequences, got {n}",
            band.min_len()
        )));
    }
    if let Some(v) = attrs.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "percentile split: non-finite attribute {v}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| attrs[a].total_cmp(&attrs[b]).then(a.cmp(&b)));
    if attrs[order[0]] == attrs[order[n - 1]] {
        return Err(Error::invalid(
            "percentile split: all attribute values are equal",
        ));
    }
    let m = ((n as f64 * band.fraction()).round() as usize).max(1);
    let start = (n - m) / 2;
    let test = order[start..start + m].to_vec();
    let lo = &order[..start];
    let hi = &order[start + m..];
    // interleave the ends from the outside in so validation sees both
    let mut ends = Vec::with_capacity(n - m);
    let (mut i, mut j) = (0, hi.len());
    while i < lo.len() || j > 0 {
        if i < lo.len() {
            ends.push(lo[i]);
            i += 1;
        }
        if j > 0 {
            j -= 1;
            ends.push(hi[j]);
        }
    }
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (k, idx) in ends.into_iter().enumerate() {
        if k % 9 == 8 {
            validation.push(idx);
        } else {
            train.push(idx);
        }
    }
    Ok(DatasetSplit {
        train,
        validation,
        test,
        policy: SplitPolicy::PercentileBand,
        band: Some((attrs[order[start]], attrs[order[start + m - 1]])),
    })
}
