use serde::{Deserialize, Serialize};

use super::{coefficient_of_variation, median, norm, riemannian_length};
use crate::error::{Error, Result};
use crate::flatness::{jacobian_auto, metric_tensor, FlatnessConfig, LatentMap};
use crate::model::FmVae;
use crate::seq::SequenceBatch;
use crate::tensor::{Rng, Tensor};

/// Summary of the metric tensor over a set of latent points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub traces: Vec<f64>,
    /// `std(tr G) / mean(tr G)`.
    pub trace_cv: f64,
    /// Mean of `‖G - diag(G)‖_F / ‖G‖_F`.
    pub off_diagonal: f64,
    /// `mean tr(G) / N_z`.
    pub c2: f64,
}

pub fn metric_stats(
    f: &dyn LatentMap,
    points: &Tensor,
    cfg: &FlatnessConfig,
    rng: &mut Rng,
) -> Result<MetricStats> {
    if points.rows() == 0 {
        return Err(Error::invalid("metric_stats: no points"));
    }
    let mut traces = Vec::with_capacity(points.rows());
    let mut off = 0.0;
    for r in 0..points.rows() {
        let g = metric_tensor(&jacobian_auto(f, points.row_slice(r), cfg, rng)?);
        traces.push(g.trace());
        off += g.off_diagonal_ratio();
    }
    let n = traces.len() as f64;
    Ok(MetricStats {
        trace_cv: coefficient_of_variation(&traces),
        off_diagonal: off / n,
        c2: traces.iter().sum::<f64>() / n / points.cols() as f64,
        traces,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    /// Per pair `|D_x - c D_z| / (c D_z)`.
    pub errors: Vec<f64>,
    pub median: f64,
    pub c: f64,
}

/// Compare decoded path lengths `D_x` with scaled latent distances `c·D_z`
/// for pairs of latents.
pub fn distance_preservation(
    f: &dyn LatentMap,
    pairs: &[(Vec<f64>, Vec<f64>)],
    c: f64,
    segments: usize,
) -> Result<DistanceReport> {
    if !(c > 0.0) {
        return Err(Error::invalid(
            "distance_preservation: scale must be positive",
        ));
    }
    let mut errors = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let dz: f64 = norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>());
        if dz == 0.0 {
            continue;
        }
        let dx = riemannian_length(f, a, b, segments)?;
        errors.push((dx - c * dz).abs() / (c * dz));
    }
    if errors.is_empty() {
        return Err(Error::invalid(
            "distance_preservation: no pairs with distinct endpoints",
        ));
    }
    Ok(DistanceReport {
        median: median(&errors),
        errors,
        c,
    })
}

/// `n` random pairs of distinct rows.
pub fn latent_pairs(
    latents: &Tensor,
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let rows = latents.rows();
    if rows < 2 {
        return Err(Error::invalid("latent_pairs: need at least two latents"));
    }
    Ok((0..n)
        .map(|_| {
            let i = rng.below(rows);
            let mut j = rng.below(rows - 1);
            if j >= i {
                j += 1;
            }
            (latents.row_slice(i).to_vec(), latents.row_slice(j).to_vec())
        })
        .collect())
}

/// One draw from `q(z|x)` for each of `n` randomly chosen sequences.
pub fn posterior_samples(
    model: &FmVae,
    data: &SequenceBatch,
    n: usize,
    rng: &mut Rng,
) -> Result<Tensor> {
    if data.is_empty() {
        return Err(Error::invalid("posterior_samples: empty data"));
    }
    let idx: Vec<usize> = (0..n).map(|_| rng.below(data.len())).collect();
    let (mean, std) = model.posterior(&data.select(&idx))?;
    let mut z = mean;
    for (m, s) in z.data_mut().iter_mut().zip(std.data()) {
        *m += s * rng.normal();
    }
    Ok(z)
}
