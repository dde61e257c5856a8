//! Decoder Jacobians, the metric tensor `G = JᵀJ`, latent mixup and the
//! flat-manifold penalty.

mod regularizer;

pub use regularizer::{fm_graph, FmTerms};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::tensor::{Rng, Tensor};

/// A map from latent rows to observation rows (`batch × n_in -> batch × n_out`).
pub trait LatentMap {
    fn eval_rows(&self, z: &Tensor) -> Result<Tensor>;

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval_rows(&Tensor::row(z.to_vec()))?.into_data())
    }
}

/// Adapter turning a per-point closure into a [`LatentMap`].
pub struct FnMap<F>(pub F);

impl<F> LatentMap for FnMap<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    fn eval_rows(&self, z: &Tensor) -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = (0..z.rows())
            .map(|r| (self.0)(z.row_slice(r)))
            .collect::<Result<_>>()?;
        Tensor::from_rows(&rows)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Exact,
    PerDimFd,
    RandomVector,
}

/// `n_out × n_z` Jacobian estimate.
#[derive(Clone, Debug)]
pub struct Jacobian {
    pub matrix: Tensor,
    pub estimator: Estimator,
    pub samples: usize,
    pub scale: f64,
}

/// Symmetric `n_z × n_z` metric.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricTensor(pub Tensor);

impl MetricTensor {
    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0.at(i, i)).sum()
    }

    /// `‖G - diag(G)‖_F / ‖G‖_F`.
    pub fn off_diagonal_ratio(&self) -> f64 {
        let n = self.dim();
        let mut off = 0.0;
        let mut all = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = self.0.at(i, j) * self.0.at(i, j);
                all += v;
                if i != j {
                    off += v;
                }
            }
        }
        if all == 0.0 {
            0.0
        } else {
            (off / all).sqrt()
        }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.dim();
        let m = nalgebra::DMatrix::from_row_slice(n, n, self.0.data());
        let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// Estimator settings for the flat-manifold penalty.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatnessConfig {
    pub sigma_fd: f64,
    pub mu_rand: f64,
    /// `None` means `max(8, n_z / 4)`.
    pub n_rand_samples: Option<usize>,
    pub jac_threshold: usize,
    pub alpha0: f64,
}

impl Default for FlatnessConfig {
    fn default() -> Self {
        Self {
            sigma_fd: 1e-4,
            mu_rand: 1e-3,
            n_rand_samples: None,
            jac_threshold: 16,
            alpha0: 0.1,
        }
    }
}

impl FlatnessConfig {
    pub fn n_rand(&self, n_z: usize) -> usize {
        self.n_rand_samples.unwrap_or_else(|| (n_z / 4).max(8))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_fd > 0.0) || !(self.mu_rand > 0.0) {
            return Err(Error::invalid("sigma_fd and mu_rand must be positive"));
        }
        if self.n_rand_samples == Some(0) {
            return Err(Error::invalid("n_rand_samples must be at least 1"));
        }
        if !(self.alpha0 >= 0.0) {
            return Err(Error::invalid("alpha0 must be non-negative"));
        }
        Ok(())
    }

    pub fn write_kv(&self, m: &mut KvMap) {
        m.set("sigma_fd", self.sigma_fd);
        m.set("mu_rand", self.mu_rand);
        m.set(
            "n_rand_samples",
            self.n_rand_samples
                .map_or("auto".to_string(), |n| n.to_string()),
        );
        m.set("jac_threshold", self.jac_threshold);
        m.set("alpha0", self.alpha0);
    }

    pub fn read_kv(&mut self, m: &KvMap) -> Result<()> {
        m.read_into("sigma_fd", &mut self.sigma_fd)?;
        m.read_into("mu_rand", &mut self.mu_rand)?;
        match m.raw("n_rand_samples") {
            None => {}
            Some("auto") => self.n_rand_samples = None,
            Some(_) => self.n_rand_samples = m.get("n_rand_samples")?,
        }
        m.read_into("jac_threshold", &mut self.jac_threshold)?;
        m.read_into("alpha0", &mut self.alpha0)?;
        Ok(())
    }
}

/// Finite-difference estimator for small latent sizes, random directions
/// above the threshold.
pub fn select_jacobian(n_z: usize, cfg: &FlatnessConfig) -> Estimator {
    if n_z <= cfg.jac_threshold {
        Estimator::PerDimFd
    } else {
        Estimator::RandomVector
    }
}

fn check_finite(t: &Tensor, what: &str) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{what}: latent map produced a non-finite value"
        )))
    }
}

/// Column `t` is `[f(z + σ e_t) - f(z)] / σ`; all probes go through one
/// batched evaluation.
pub fn jacobian_fd(f: &dyn LatentMap, z: &[f64], sigma: f64) -> Result<Jacobian> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("jacobian_fd: sigma must be positive"));
    }
    let n = z.len();
    let mut probes = Vec::with_capacity((n + 1) * n);
    probes.extend_from_slice(z);
    for t in 0..n {
        let mut p = z.to_vec();
        p[t] += sigma;
        probes.extend(p);
    }
    let out = f.eval_rows(&Tensor::matrix(n + 1, n, probes)?)?;
    check_finite(&out, "jacobian_fd")?;
    let m = out.cols();
    let f0 = out.row_slice(0);
    let mut j = vec![0.0; m * n];
    for t in 0..n {
        let ft = out.row_slice(t + 1);
        for i in 0..m {
            j[i * n + t] = (ft[i] - f0[i]) / sigma;
        }
    }
    Ok(Jacobian {
        matrix: Tensor::matrix(m, n, j)?,
        estimator: Estimator::PerDimFd,
        samples: n,
        scale: sigma,
    })
}

/// `(1/μ) mean_k [f(z + μ u_k) - f(z)] u_kᵀ` with `u_k ~ N(0, I)`.
pub fn jacobian_rand(
    f: &dyn LatentMap,
    z: &[f64],
    mu: f64,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<Jacobian> {
    if !(mu > 0.0) {
        return Err(Error::invalid("jacobian_rand: mu must be positive"));
    }
    if n_samples == 0 {
        return Err(Error::invalid("jacobian_rand: need at least one sample"));
    }
    let n = z.len();
    let us = rng.normal_tensor(&[n_samples, n]);
    let mut probes = Vec::with_capacity((n_samples + 1) * n);
    probes.extend_from_slice(z);
    for k in 0..n_samples {
        probes.extend(z.iter().zip(us.row_slice(k)).map(|(a, u)| a + mu * u));
    }
    let out = f.eval_rows(&Tensor::matrix(n_samples + 1, n, probes)?)?;
    check_finite(&out, "jacobian_rand")?;
    let m = out.cols();
    let f0 = out.row_slice(0);
    let mut j = vec![0.0; m * n];
    let w = 1.0 / (mu * n_samples as f64);
    for k in 0..n_samples {
        let fk = out.row_slice(k + 1);
        let u = us.row_slice(k);
        for i in 0..m {
            let d = (fk[i] - f0[i]) * w;
            for t in 0..n {
                j[i * n + t] += d * u[t];
            }
        }
    }
    Ok(Jacobian {
        matrix: Tensor::matrix(m, n, j)?,
        estimator: Estimator::RandomVector,
        samples: n_samples,
        scale: mu,
    })
}

/// Estimate with the configured estimator for this latent size.
pub fn jacobian_auto(
    f: &dyn LatentMap,
    z: &[f64],
    cfg: &FlatnessConfig,
    rng: &mut Rng,
) -> Result<Jacobian> {
    match select_jacobian(z.len(), cfg) {
        Estimator::RandomVector => jacobian_rand(f, z, cfg.mu_rand, cfg.n_rand(z.len()), rng),
        _ => jacobian_fd(f, z, cfg.sigma_fd),
    }
}

/// `G = JᵀJ`, symmetrized.
pub fn metric_tensor(j: &Jacobian) -> MetricTensor {
    let (m, n) = (j.matrix.rows(), j.matrix.cols());
    let a = j.matrix.data();
    let mut g = vec![0.0; n * n];
    for i in 0..m {
        let row = &a[i * n..(i + 1) * n];
        for s in 0..n {
            let rs = row[s];
            if rs == 0.0 {
                continue;
            }
            for t in 0..n {
                g[s * n + t] += rs * row[t];
            }
        }
    }
    for s in 0..n {
        for t in s + 1..n {
            let avg = 0.5 * (g[s * n + t] + g[t * n + s]);
            g[s * n + t] = avg;
            g[t * n + s] = avg;
        }
    }
    MetricTensor(Tensor::matrix(n, n, g).expect("square metric"))
}

/// `c² = (1/N_z) · mean_b tr(G_b)`.
pub fn scale_c2(batch: &[MetricTensor]) -> Result<f64> {
    let first = batch
        .first()
        .ok_or_else(|| Error::invalid("scale_c2: empty batch"))?;
    let n = first.dim() as f64;
    Ok(batch.iter().map(MetricTensor::trace).sum::<f64>() / batch.len() as f64 / n)
}

/// `mean_b ‖G_b - c² I‖²_F`.
pub fn fm_loss(batch: &[MetricTensor], c2: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("fm_loss: empty batch"));
    }
    let mut total = 0.0;
    for g in batch {
        let n = g.dim();
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { c2 } else { 0.0 };
                total += (g.0.at(i, j) - target).powi(2);
            }
        }
    }
    Ok(total / batch.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixupConfig {
    pub alpha0: f64,
}

/// Mixed latent points `(1-α) z_i + α z_j` together with the pairing.
#[derive(Clone, Debug)]
pub struct Mixup {
    pub points: Tensor,
    /// `partner[i] = j`
    pub partner: Vec<usize>,
    pub alpha: Vec<f64>,
}

/// Pairs each row with a row of a shuffled copy of the batch and draws
/// `α ~ U(-α₀, 1 + α₀)` per pair.
pub fn mixup(z: &Tensor, cfg: MixupConfig, rng: &mut Rng) -> Result<Mixup> {
    let b = z.rows();
    if b < 2 {
        return Err(Error::invalid(
            "mixup: batch must contain at least two latents",
        ));
    }
    let partner = rng.permutation(b);
    let alpha: Vec<f64> = (0..b)
        .map(|_| rng.uniform_range(-cfg.alpha0, 1.0 + cfg.alpha0))
        .collect();
    let points = mixup_with(z, &partner, &alpha)?;
    Ok(Mixup {
        points,
        partner,
        alpha,
    })
}

/// Deterministic mixup with explicit partners and mixing weights.
pub fn mixup_with(z: &Tensor, partner: &[usize], alpha: &[f64]) -> Result<Tensor> {
    let (b, n) = (z.rows(), z.cols());
    if partner.len() != b || alpha.len() != b || partner.iter().any(|&j| j >= b) {
        return Err(Error::invalid(
            "mixup: partner/alpha lists must match the batch",
        ));
    }
    let mut out = Vec::with_capacity(b * n);
    for i in 0..b {
        let (zi, zj) = (z.row_slice(i), z.row_slice(partner[i]));
        let a = alpha[i];
        out.extend(zi.iter().zip(zj).map(|(x, y)| (1.0 - a) * x + a * y));
    }
    Tensor::matrix(b, n, out)
}

#[cfg(test)]
mod tests;
