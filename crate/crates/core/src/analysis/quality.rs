use serde::{Deserialize, Serialize};

use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::model::FmVae;
use crate::seq::{SequenceKind, CATEGORICAL_CLASSES, DRUM_VOICES};

/// Errors of one predicted sequence against its target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    /// Frame error rate (categorical) or per-beat hit error rate (drum).
    pub delta: f64,
    /// Mean squared velocity error at target hits.
    pub velocity_mse: Option<f64>,
    /// Mean squared offset error at target hits.
    pub offset_mse: Option<f64>,
}

/// Score a quantized prediction against a target of the same kind.
pub fn score_prediction(kind: SequenceKind, pred: &[f64], target: &[f64]) -> Result<SampleScore> {
    if pred.len() != target.len()
        || !pred.len().is_multiple_of(kind.frame_dims())
        || pred.is_empty()
    {
        return Err(Error::shape(
            "score_prediction",
            format!("{} vs {} values", pred.len(), target.len()),
        ));
    }
    let d = kind.frame_dims();
    let n_s = pred.len() / d;
    match kind {
        SequenceKind::Categorical => {
            let argmax = |f: &[f64]| {
                f.iter()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |b, (i, &v)| if v > b.1 { (i, v) } else { b },
                    )
                    .0
            };
            let wrong = pred
                .chunks(CATEGORICAL_CLASSES)
                .zip(target.chunks(CATEGORICAL_CLASSES))
                .filter(|(p, t)| argmax(p) != argmax(t))
                .count();
            Ok(SampleScore {
                delta: wrong as f64 / n_s as f64,
                velocity_mse: None,
                offset_mse: None,
            })
        }
        SequenceKind::Drum => {
            let (mut wrong, mut hits, mut ve, mut oe) = (0usize, 0usize, 0.0, 0.0);
            for (p, t) in pred.chunks(d).zip(target.chunks(d)) {
                for v in 0..DRUM_VOICES {
                    if (p[v] >= 0.5) != (t[v] >= 0.5) {
                        wrong += 1;
                    }
                    if t[v] >= 0.5 {
                        hits += 1;
                        ve += (p[DRUM_VOICES + v] - t[DRUM_VOICES + v]).powi(2);
                        oe += (p[2 * DRUM_VOICES + v] - t[2 * DRUM_VOICES + v]).powi(2);
                    }
                }
            }
            let per_hit = |s: f64| (hits > 0).then(|| s / hits as f64);
            Ok(SampleScore {
                delta: wrong as f64 / (DRUM_VOICES * n_s) as f64,
                velocity_mse: per_hit(ve),
                offset_mse: per_hit(oe),
            })
        }
        SequenceKind::Motion => Err(Error::invalid(
            "score_prediction: no error rate for motion sequences",
        )),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(v: &[f64]) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        Some(Self {
            mean,
            std,
            n: v.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub protocol: String,
    pub delta: Summary,
    pub velocity_mse: Option<Summary>,
    pub offset_mse: Option<Summary>,
    pub samples: Vec<SampleScore>,
}

pub const QUALITY_PROTOCOL: &str =
    "anchors: attribute-nearest training sequence below and above the test band; \
latent: posterior means interpolated at the test attribute's fraction between the anchors; \
output: quantized deterministic decode";

/// Interpolation quality on the held-out attribute band.
///
/// `attrs[i]` is the attribute of `data` sequence `i`; `split` must come
/// from a percentile-band split of those values.
pub fn interp_quality(
    model: &FmVae,
    data: &crate::seq::SequenceBatch,
    attrs: &[f64],
    split: &DatasetSplit,
) -> Result<QualityReport> {
    let (band_lo, band_hi) = split
        .band
        .ok_or_else(|| Error::invalid("interp_quality: split has no attribute band"))?;
    if attrs.len() != data.len() {
        return Err(Error::shape(
            "interp_quality",
            "one attribute per sequence required",
        ));
    }
    if split.test.is_empty() {
        return Err(Error::invalid("interp_quality: empty test band"));
    }
    let nearest =
        |keep: &dyn Fn(f64) -> bool, better: &dyn Fn(f64, f64) -> bool| -> Option<usize> {
            split
                .train
                .iter()
                .copied()
                .filter(|&i| keep(attrs[i]))
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if !better(attrs[i], attrs[b]) => Some(b),
                    _ => Some(i),
                })
        };
    // highest attribute below the band, lowest above it
    let low = nearest(&|a| a < band_lo, &|a, b| a > b);
    let high = nearest(&|a| a > band_hi, &|a, b| a < b);
    let (low, high) = match (low, high) {
        (Some(l), Some(h)) => (l, h),
        _ => {
            return Err(Error::invalid(
                "interp_quality: both ends need training sequences",
            ))
        }
    };
    let anchors = data.select(&[low, high]);
    let (means, _) = model.posterior(&anchors)?;
    let (a_lo, a_hi) = (attrs[low], attrs[high]);

    let mut rows = Vec::with_capacity(split.test.len());
    for &i in &split.test {
        let frac = ((attrs[i] - a_lo) / (a_hi - a_lo)).clamp(0.0, 1.0);
        rows.push(
            means
                .row_slice(0)
                .iter()
                .zip(means.row_slice(1))
                .map(|(a, b)| (1.0 - frac) * a + frac * b)
                .collect::<Vec<f64>>(),
        );
    }
    let pred = model.generate(&crate::tensor::Tensor::from_rows(&rows)?)?;
    let samples = split
        .test
        .iter()
        .enumerate()
        .map(|(k, &i)| score_prediction(data.kind(), pred.sequence(k), data.sequence(i)))
        .collect::<Result<Vec<_>>>()?;
    let collect = |f: fn(&SampleScore) -> Option<f64>| {
        Summary::of(&samples.iter().filter_map(f).collect::<Vec<_>>())
    };
    Ok(QualityReport {
        protocol: QUALITY_PROTOCOL.to_string(),
        delta: Summary::of(&samples.iter().map(|s| s.delta).collect::<Vec<_>>())
            .expect("non-empty"),
        velocity_mse: collect(|s| s.velocity_mse),
        offset_mse: collect(|s| s.offset_mse),
        samples,
    })
}
