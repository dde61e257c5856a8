use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seq::{
    SequenceBatch, SequenceKind, CATEGORICAL_CLASSES, DRUM_VOICES, MOTION_DIMS, NOTE_OFF, REST,
};
use crate::tensor::Rng;

const STEPS_PER_BAR: usize = 16;
const MOTION_NOISE: f64 = 0.03;

/// Pattern family of a synthetic sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthFamily {
    Rock,
    Latin,
    Sparse,
    Arpeggio,
    Scale,
    Walk,
    Jog,
    Balance,
    Punch,
    Kick,
}

impl SynthFamily {
    pub fn for_kind(kind: SequenceKind) -> &'static [SynthFamily] {
        use SynthFamily::*;
        match kind {
            SequenceKind::Drum => &[Rock, Latin, Sparse],
            SequenceKind::Categorical => &[Arpeggio, Scale],
            SequenceKind::Motion => &[Walk, Jog, Balance, Punch, Kick],
        }
    }
}

/// `n` synthetic sequences of `n_steps` frames with their families.
///
/// Drums: rock, latin and sparse grooves at four density levels, with a
/// per-sequence velocity level and swing. Categorical: arpeggios and scales
/// over a per-bar root progression. Motion: smooth sinusoid mixtures per
/// movement family with Gaussian noise of std 0.03.
pub fn synth_toy_corpus(
    kind: SequenceKind,
    n: usize,
    n_steps: usize,
    rng: &mut Rng,
) -> Result<(SequenceBatch, Vec<SynthFamily>)> {
    if n == 0 || n_steps == 0 {
        return Err(Error::invalid(
            "synth_toy_corpus: n and n_steps must be positive",
        ));
    }
    let families = SynthFamily::for_kind(kind);
    let mut batch = SequenceBatch::empty(kind, n_steps);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let fam = families[rng.below(families.len())];
        let seq = match kind {
            SequenceKind::Drum => drum_sequence(fam, n_steps, rng),
            SequenceKind::Categorical => melody_sequence(fam, n_steps, rng),
            SequenceKind::Motion => motion_sequence(fam, n_steps, rng),
        };
        batch.push(&seq)?;
        labels.push(fam);
    }
    batch.validate()?;
    Ok((batch, labels))
}

// voice indices in the default mapping
const KICK: usize = 0;
const SNARE: usize = 1;
const HI_TOM: usize = 2;
const MID_TOM: usize = 3;
const FLOOR_TOM: usize = 4;
const OPEN_HAT: usize = 5;
const CLOSED_HAT: usize = 6;
const CRASH: usize = 7;
const RIDE: usize = 8;

fn drum_hits(fam: SynthFamily, level: usize, bar: usize, s: usize) -> Vec<usize> {
    let mut v = Vec::new();
    let even = s.is_multiple_of(2);
    let quarter = s.is_multiple_of(4);
    match fam {
        SynthFamily::Rock => {
            if s == 0 || s == 8 || (level >= 1 && s == 10) || (level >= 3 && s == 3) {
                v.push(KICK);
            }
            if s == 4 || s == 12 {
                v.push(SNARE);
            }
            if level >= 2 && s == 14 {
                v.push(OPEN_HAT);
            } else if quarter || (level >= 1 && even) || level >= 3 {
                v.push(CLOSED_HAT);
            }
            if level >= 2 && bar == 0 && s == 0 {
                v.push(CRASH);
            }
        }
        SynthFamily::Latin => {
            if [0, 3, 8, 11].contains(&s) {
                v.push(KICK);
            }
            if s == 3 || s == 10 {
                v.push(SNARE);
            }
            if level >= 1 && (s == 6 || s == 14) {
                v.push(HI_TOM);
            }
            if level >= 2 && s == 7 {
                v.push(MID_TOM);
            }
            if level >= 2 && s == 15 {
                v.push(FLOOR_TOM);
            }
            if quarter || (level >= 1 && even) || (level >= 3 && (s == 5 || s == 13)) {
                v.push(RIDE);
            }
        }
        SynthFamily::Sparse => {
            if s == 0 || (level >= 1 && s == 10) {
                v.push(KICK);
            }
            if s == 8 {
                v.push(SNARE);
            }
            if level >= 2 && quarter {
                v.push(CLOSED_HAT);
            }
            if level >= 3 && s % 4 == 2 {
                v.push(RIDE);
            }
        }
        _ => unreachable!("not a drum family"),
    }
    v
}

fn drum_sequence(fam: SynthFamily, n_steps: usize, rng: &mut Rng) -> Vec<f64> {
    let level = rng.below(4);
    let vel = rng.uniform_range(0.35, 0.95);
    let swing = rng.uniform_range(0.0, 0.2);
    let d = 3 * DRUM_VOICES;
    let mut out = vec![0.0; n_steps * d];
    for t in 0..n_steps {
        let (bar, s) = (t / STEPS_PER_BAR, t % STEPS_PER_BAR);
        let f = &mut out[t * d..(t + 1) * d];
        for voice in drum_hits(fam, level, bar, s) {
            let accent = if s % 4 == 0 { 1.0 } else { 0.8 };
            f[voice] = 1.0;
            f[DRUM_VOICES + voice] = (vel * accent + 0.03 * rng.normal()).clamp(0.0, 1.0);
            f[2 * DRUM_VOICES + voice] = if s % 2 == 1 { swing } else { 0.0 };
        }
    }
    out
}

const PROGRESSIONS: [[i32; 4]; 3] = [[0, 5, 7, 0], [0, -3, 5, 7], [0, 7, 5, 0]];

fn melody_sequence(fam: SynthFamily, n_steps: usize, rng: &mut Rng) -> Vec<f64> {
    let root = 21 + rng.below(40) as i32;
    let minor = rng.bernoulli(0.5);
    let len = [1, 2, 4][rng.below(3)];
    let staccato = len > 1 && rng.bernoulli(0.5);
    let prog = PROGRESSIONS[rng.below(PROGRESSIONS.len())];
    let third = if minor { 3 } else { 4 };
    let shape: Vec<i32> = match fam {
        SynthFamily::Arpeggio => vec![0, third, 7, 12, 7, third],
        SynthFamily::Scale => {
            let up = if minor {
                [0, 2, 3, 5, 7, 8, 10, 12]
            } else {
                [0, 2, 4, 5, 7, 9, 11, 12]
            };
            up.iter().chain(up[1..7].iter().rev()).copied().collect()
        }
        _ => unreachable!("not a melodic family"),
    };
    let mut out = vec![0.0; n_steps * CATEGORICAL_CLASSES];
    for t in 0..n_steps {
        let bar = t / STEPS_PER_BAR;
        let pos = (t % STEPS_PER_BAR) / len;
        let phase = t % len;
        let class = if phase == 0 {
            (root + prog[bar % 4] + shape[pos % shape.len()]) as usize
        } else if staccato && phase == len - 1 {
            NOTE_OFF
        } else {
            REST
        };
        out[t * CATEGORICAL_CLASSES + class] = 1.0;
    }
    out
}

struct MotionFamily {
    cycles_per_bar: f64,
    loading: Vec<[f64; 3]>,
    phase: Vec<[f64; 3]>,
    bias: Vec<f64>,
}

fn motion_family(fam: SynthFamily) -> MotionFamily {
    let (name, cycles_per_bar) = match fam {
        SynthFamily::Walk => ("walk", 1.0),
        SynthFamily::Jog => ("jog", 2.0),
        SynthFamily::Balance => ("balance", 0.5),
        SynthFamily::Punch => ("punch", 1.0),
        SynthFamily::Kick => ("kick", 1.0),
        _ => unreachable!("not a motion family"),
    };
    // fixed per family, independent of the corpus seed
    let mut r = Rng::new(0x6d6f_7469_6f6e).stream(name);
    let loading = (0..MOTION_DIMS)
        .map(|_| [r.normal() * 0.5, r.normal() * 0.25, r.normal() * 0.1])
        .collect();
    let phase = (0..MOTION_DIMS)
        .map(|_| {
            [
                r.uniform() * 2.0 * PI,
                r.uniform() * 2.0 * PI,
                r.uniform() * 2.0 * PI,
            ]
        })
        .collect();
    let bias = (0..MOTION_DIMS).map(|_| r.normal() * 0.3).collect();
    MotionFamily {
        cycles_per_bar,
        loading,
        phase,
        bias,
    }
}

fn motion_sequence(fam: SynthFamily, n_steps: usize, rng: &mut Rng) -> Vec<f64> {
    let mf = motion_family(fam);
    let phi = rng.uniform() * 2.0 * PI;
    let amp = rng.uniform_range(0.7, 1.3);
    let mut out = Vec::with_capacity(n_steps * MOTION_DIMS);
    for t in 0..n_steps {
        let w = 2.0 * PI * mf.cycles_per_bar * t as f64 / STEPS_PER_BAR as f64;
        for d in 0..MOTION_DIMS {
            let mut v = mf.bias[d];
            for k in 0..3 {
                let kf = (k + 1) as f64;
                v += amp * mf.loading[d][k] * (kf * (w + phi) + mf.phase[d][k]).sin();
            }
            out.push(v + MOTION_NOISE * rng.normal());
        }
    }
    out
}
