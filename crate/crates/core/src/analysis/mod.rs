//! Latent-space evaluation: interpolation paths, smoothness, Riemannian
//! lengths, attribute vectors and interpolation quality.

mod attributes;
mod geometry;
mod quality;

pub use attributes::{
    attribute_correlation, attribute_vector, model_attribute, pearson, AttributeVector,
    Correlation, MIN_RETAINED,
};
pub use geometry::{
    distance_preservation, latent_pairs, metric_stats, posterior_samples, DistanceReport,
    MetricStats,
};
pub use quality::{
    interp_quality, score_prediction, QualityReport, SampleScore, Summary, QUALITY_PROTOCOL,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flatness::LatentMap;
use crate::model::FmVae;
use crate::seq::{SequenceBatch, SequenceKind};
use crate::tensor::{Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    Linear,
    Slerp,
}

/// Endpoints plus `T` interior points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentPath {
    pub points: Vec<Vec<f64>>,
    pub interp: Interp,
}

impl LatentPath {
    pub fn interior(&self) -> usize {
        self.points.len() - 2
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_rows(&self.points).expect("equal-length points")
    }
}

fn check_pair(z0: &[f64], z1: &[f64], t: usize) -> Result<()> {
    if z0.len() != z1.len() || z0.is_empty() {
        return Err(Error::shape(
            "interpolate",
            format!("endpoints of length {} and {}", z0.len(), z1.len()),
        ));
    }
    if t < 1 {
        return Err(Error::invalid(
            "interpolate: need at least one interior point",
        ));
    }
    Ok(())
}

/// `z_t = (1 - t/(T+1)) z0 + t/(T+1) z1` for `t = 0..=T+1`.
pub fn lerp(z0: &[f64], z1: &[f64], t: usize) -> Result<LatentPath> {
    check_pair(z0, z1, t)?;
    let points = (0..=t + 1)
        .map(|k| {
            let tau = k as f64 / (t + 1) as f64;
            z0.iter()
                .zip(z1)
                .map(|(a, b)| (1.0 - tau) * a + tau * b)
                .collect()
        })
        .collect();
    Ok(LatentPath {
        points,
        interp: Interp::Linear,
    })
}

/// Great-circle interpolation `[sin((1-τ)Ω) z0 + sin(τΩ) z1] / sin Ω`.
pub fn slerp(z0: &[f64], z1: &[f64], t: usize) -> Result<LatentPath> {
    check_pair(z0, z1, t)?;
    let n0 = norm(z0);
    let n1 = norm(z1);
    if n0 == 0.0 || n1 == 0.0 {
        return Err(Error::invalid("slerp: zero endpoint"));
    }
    let cos = (dot(z0, z1) / (n0 * n1)).clamp(-1.0, 1.0);
    if cos < -1.0 + 1e-12 {
        return Err(Error::invalid("slerp: antiparallel endpoints"));
    }
    let omega = cos.acos();
    if omega < 1e-9 {
        return Ok(LatentPath {
            interp: Interp::Slerp,
            ..lerp(z0, z1, t)?
        });
    }
    let s = omega.sin();
    let points = (0..=t + 1)
        .map(|k| {
            let tau = k as f64 / (t + 1) as f64;
            let a = ((1.0 - tau) * omega).sin() / s;
            let b = (tau * omega).sin() / s;
            z0.iter().zip(z1).map(|(x, y)| a * x + b * y).collect()
        })
        .collect();
    Ok(LatentPath {
        points,
        interp: Interp::Slerp,
    })
}

pub fn interpolate(interp: Interp, z0: &[f64], z1: &[f64], t: usize) -> Result<LatentPath> {
    match interp {
        Interp::Linear => lerp(z0, z1, t),
        Interp::Slerp => slerp(z0, z1, t),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Largest Hamming distance between consecutive outputs, after binarizing
/// the selected channels of every frame at 0.5. One output per path step.
pub fn hamming_smoothness(outputs: &SequenceBatch, channels: &[usize]) -> Result<f64> {
    if outputs.len() < 2 {
        return Err(Error::invalid(
            "hamming_smoothness: path needs at least two outputs",
        ));
    }
    let d = outputs.n_dims();
    if let Some(c) = channels.iter().find(|&&c| c >= d) {
        return Err(Error::invalid(format!(
            "hamming_smoothness: channel {c} out of range"
        )));
    }
    let bits = |i: usize| -> Vec<bool> {
        outputs
            .sequence(i)
            .chunks(d)
            .flat_map(|f| channels.iter().map(move |&c| f[c] >= 0.5))
            .collect()
    };
    let mut prev = bits(0);
    let mut worst = 0usize;
    for i in 1..outputs.len() {
        let cur = bits(i);
        worst = worst.max(prev.iter().zip(&cur).filter(|(a, b)| a != b).count());
        prev = cur;
    }
    Ok(worst as f64)
}

/// Mean of `|x_{t+1} - 2x_t + x_{t-1}|` over interior rows and all columns.
pub fn second_diff_smoothness(rows: &Tensor) -> Result<f64> {
    let (n, d) = (rows.rows(), rows.cols());
    if n < 3 {
        return Err(Error::invalid(
            "second_diff_smoothness: need at least three steps",
        ));
    }
    let mut total = 0.0;
    for t in 1..n - 1 {
        let (a, b, c) = (
            rows.row_slice(t - 1),
            rows.row_slice(t),
            rows.row_slice(t + 1),
        );
        for k in 0..d {
            total += (c[k] - 2.0 * b[k] + a[k]).abs();
        }
    }
    Ok(total / ((n - 2) * d) as f64)
}

/// Chord-sum length of the decoded straight line from `z0` to `z1` with
/// `T + 1` segments.
pub fn riemannian_length(f: &dyn LatentMap, z0: &[f64], z1: &[f64], t: usize) -> Result<f64> {
    let path = lerp(z0, z1, t)?;
    let out = f.eval_rows(&path.to_tensor())?;
    if !out.is_finite() {
        return Err(Error::invalid(
            "riemannian_length: decoder produced a non-finite value",
        ));
    }
    Ok((1..out.rows())
        .map(|k| {
            out.row_slice(k)
                .iter()
                .zip(out.row_slice(k - 1))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum())
}

/// Radii of an equal-length contour around a centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub target: f64,
    pub radii: Vec<f64>,
    /// `std(radii) / mean(radii)`.
    pub roundness: f64,
}

/// `count` unit directions evenly spaced on the circle spanned by the first
/// two latent axes, starting at angle `offset`.
pub fn circle_directions(n_z: usize, count: usize, offset: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| {
            let a = offset + 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            let mut d = vec![0.0; n_z];
            d[0] = a.cos();
            if n_z > 1 {
                d[1] = a.sin();
            }
            d
        })
        .collect()
}

/// `count` random unit directions.
pub fn random_directions(n_z: usize, count: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..n_z).map(|_| rng.normal()).collect();
            let n = norm(&v);
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

/// For each direction, bisect for the radius whose path length from the
/// centre equals `target` (to 1e-6 in radius).
pub fn contour_distances(
    f: &dyn LatentMap,
    center: &[f64],
    directions: &[Vec<f64>],
    target: f64,
    max_radius: f64,
    segments: usize,
) -> Result<Contour> {
    if directions.len() < 8 {
        return Err(Error::invalid(
            "contour_distances: need at least eight directions",
        ));
    }
    if !(target > 0.0) || !(max_radius > 0.0) {
        return Err(Error::invalid(
            "contour_distances: target and max radius must be positive",
        ));
    }
    let mut radii = Vec::with_capacity(directions.len());
    for d in directions {
        if d.len() != center.len() {
            return Err(Error::shape(
                "contour_distances",
                "direction and centre differ in length",
            ));
        }
        let n = norm(d);
        let unit: Vec<f64> = d.iter().map(|x| x / n).collect();
        let length = |r: f64| {
            let end: Vec<f64> = center.iter().zip(&unit).map(|(c, u)| c + r * u).collect();
            riemannian_length(f, center, &end, segments)
        };
        if length(max_radius)? < target {
            return Err(Error::invalid(format!(
                "contour_distances: length {target} not reached within radius {max_radius}"
            )));
        }
        let (mut lo, mut hi) = (0.0, max_radius);
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if length(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        radii.push(0.5 * (lo + hi));
    }
    let roundness = coefficient_of_variation(&radii);
    Ok(Contour {
        target,
        radii,
        roundness,
    })
}

/// Population standard deviation over the mean.
pub fn coefficient_of_variation(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Per-pair smoothness of decoded interpolations between random pairs of
/// latents. Drum and categorical models give the max-Hamming value over
/// quantized outputs; motion models give the second difference across
/// path steps.
pub fn smoothness_pairs(
    model: &FmVae,
    latents: &Tensor,
    n_pairs: usize,
    interior: usize,
    interp: Interp,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let n = latents.rows();
    if n < 2 {
        return Err(Error::invalid(
            "smoothness_pairs: need at least two latents",
        ));
    }
    let kind = model.config().kind;
    let mut out = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let i = rng.below(n);
        let mut j = rng.below(n - 1);
        if j >= i {
            j += 1;
        }
        let path = interpolate(interp, latents.row_slice(i), latents.row_slice(j), interior)?;
        let z = path.to_tensor();
        let v = match kind {
            SequenceKind::Motion => second_diff_smoothness(&model.decode_rows(&z)?)?,
            _ => hamming_smoothness(&model.generate(&z)?, &kind.binary_channels())?,
        };
        out.push(v);
    }
    Ok(out)
}

/// Second-difference smoothness over time within each sequence.
pub fn temporal_smoothness(x: &SequenceBatch) -> Result<Vec<f64>> {
    (0..x.len())
        .map(|i| {
            second_diff_smoothness(&Tensor::matrix(
                x.n_steps(),
                x.n_dims(),
                x.sequence(i).to_vec(),
            )?)
        })
        .collect()
}

/// Named evaluation output written as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub config: serde_json::Value,
    pub values: serde_json::Value,
    pub seed: u64,
}

impl EvalReport {
    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests;
