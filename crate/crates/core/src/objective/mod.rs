//! Training objective: reconstruction cost, hierarchical-prior KL bound,
//! the constrained Lagrangian and the optimization loop.

mod adam;
mod prior;
mod recon;
mod train;

pub use adam::Adam;
pub use prior::{
    gaussian_log_density, iw_log_weights, kl_iw_bound, ConditionalGaussian, GaussianMlp,
    HierarchicalPrior, Prior, PriorNet, StandardNormalNet,
};
pub use recon::{recon_terms, ReconTerms};
pub use train::{train, write_log, LossReport, TrainConfig, TrainState};

use crate::error::{Error, Result};

/// `F + λ (C - κ²)`.
pub fn lagrangian(kl: f64, lambda: f64, recon: f64, kappa2: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!(
            "lagrangian: λ must be non-negative, got {lambda}"
        )));
    }
    Ok(kl + lambda * (recon - kappa2))
}

/// Multiplicative ascent on the multiplier: `max(0, λ exp(ν (C - κ²)))`.
pub fn lambda_update(lambda: f64, recon: f64, kappa2: f64, nu: f64) -> f64 {
    let next = lambda * (nu * (recon - kappa2)).exp();
    if next.is_finite() {
        next.max(0.0)
    } else {
        lambda.max(0.0)
    }
}
