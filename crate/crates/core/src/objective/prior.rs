use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::seq::{Linear, STD_FLOOR};
use crate::tensor::{gaussian_reparam, GaussianVars, Graph, ParamStore, Rng, Tensor, Var};

/// A network mapping an input batch to a diagonal Gaussian.
pub trait ConditionalGaussian {
    fn out_dim(&self) -> usize;
    fn forward(&self, g: &mut Graph, store: &ParamStore, input: Var) -> GaussianVars;
}

/// Two ReLU layers followed by mean and `softplus + 1e-6` std heads.
#[derive(Clone, Debug)]
pub struct GaussianMlp {
    l1: Linear,
    l2: Linear,
    mean: Linear,
    raw_std: Linear,
}

impl GaussianMlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        n_in: usize,
        hidden: usize,
        n_out: usize,
        rng: &mut Rng,
    ) -> Self {
        Self {
            l1: Linear::new(store, &format!("{name}.l1"), n_in, hidden, rng),
            l2: Linear::new(store, &format!("{name}.l2"), hidden, hidden, rng),
            mean: Linear::new(store, &format!("{name}.mean"), hidden, n_out, rng),
            raw_std: Linear::new(store, &format!("{name}.raw_std"), hidden, n_out, rng),
        }
    }
}

impl ConditionalGaussian for GaussianMlp {
    fn out_dim(&self) -> usize {
        self.mean.n_out
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, input: Var) -> GaussianVars {
        let h = self.l1.forward(g, store, input);
        let h = g.relu(h);
        let h = self.l2.forward(g, store, h);
        let h = g.relu(h);
        let mean = self.mean.forward(g, store, h);
        let raw = self.raw_std.forward(g, store, h);
        let sp = g.softplus(raw);
        let std = g.add_scalar(sp, STD_FLOOR);
        GaussianVars { mean, std }
    }
}

/// `N(0, I)` regardless of the input.
#[derive(Clone, Copy, Debug)]
pub struct StandardNormalNet {
    pub dim: usize,
}

impl ConditionalGaussian for StandardNormalNet {
    fn out_dim(&self) -> usize {
        self.dim
    }

    fn forward(&self, g: &mut Graph, _store: &ParamStore, input: Var) -> GaussianVars {
        let rows = g.value(input).rows();
        GaussianVars {
            mean: g.constant(Tensor::zeros(&[rows, self.dim])),
            std: g.constant(Tensor::full(&[rows, self.dim], 1.0)),
        }
    }
}

#[derive(Clone, Debug)]
pub enum PriorNet {
    Mlp(GaussianMlp),
    Standard(StandardNormalNet),
}

impl ConditionalGaussian for PriorNet {
    fn out_dim(&self) -> usize {
        match self {
            PriorNet::Mlp(m) => m.out_dim(),
            PriorNet::Standard(s) => s.out_dim(),
        }
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, input: Var) -> GaussianVars {
        match self {
            PriorNet::Mlp(m) => m.forward(g, store, input),
            PriorNet::Standard(s) => s.forward(g, store, input),
        }
    }
}

/// `p_Θ(z) = ∫ p_Θ(z|ζ) p(ζ) dζ` with `p(ζ) = N(0, I)`, plus the auxiliary
/// posterior `q_Φ(ζ|z)` used for importance sampling.
#[derive(Clone, Debug)]
pub struct HierarchicalPrior {
    pub p_z_given_zeta: PriorNet,
    pub q_zeta_given_z: PriorNet,
    pub zeta_dim: usize,
}

impl HierarchicalPrior {
    pub fn new(
        store: &mut ParamStore,
        n_z: usize,
        zeta_dim: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Self {
        let p = GaussianMlp::new(store, "prior.p_z", zeta_dim, hidden, n_z, rng);
        let q = GaussianMlp::new(store, "prior.q_zeta", n_z, hidden, zeta_dim, rng);
        Self {
            p_z_given_zeta: PriorNet::Mlp(p),
            q_zeta_given_z: PriorNet::Mlp(q),
            zeta_dim,
        }
    }

    /// Both networks replaced by `N(0, I)`: the bound collapses to
    /// `log q(z|x) - log N(z; 0, I)`.
    pub fn degenerate(n_z: usize, zeta_dim: usize) -> Self {
        Self {
            p_z_given_zeta: PriorNet::Standard(StandardNormalNet { dim: n_z }),
            q_zeta_given_z: PriorNet::Standard(StandardNormalNet { dim: zeta_dim }),
            zeta_dim,
        }
    }
}

/// Prior over latents used by the KL term.
#[derive(Clone, Debug)]
pub enum Prior {
    StandardNormal,
    Hierarchical(HierarchicalPrior),
}

/// `log N(x; mean, std)` summed over columns: `r×c -> r×1`.
pub fn gaussian_log_density(g: &mut Graph, x: Var, p: GaussianVars) -> Var {
    let c = g.value(x).cols() as f64;
    let d = g.sub(x, p.mean);
    let u = g.div(d, p.std);
    let u2 = g.square(u);
    let ls = g.log(p.std);
    let ls2 = g.scale(ls, 2.0);
    let inner = g.add(u2, ls2);
    let s = g.row_sum(inner);
    let s = g.scale(s, -0.5);
    g.add_scalar(s, -0.5 * c * (2.0 * PI).ln())
}

fn standard_log_density(g: &mut Graph, x: Var) -> Var {
    let c = g.value(x).cols() as f64;
    let x2 = g.square(x);
    let s = g.row_sum(x2);
    let s = g.scale(s, -0.5);
    g.add_scalar(s, -0.5 * c * (2.0 * PI).ln())
}

/// Per-row log importance weights
/// `log p_Θ(z|ζ_i) + log p(ζ_i) - log q_Φ(ζ_i|z)`, one column per sample:
/// `batch × K`.
pub fn iw_log_weights(
    g: &mut Graph,
    store: &ParamStore,
    z: Var,
    prior: &HierarchicalPrior,
    k: usize,
    rng: &mut Rng,
) -> Result<Var> {
    let b = g.value(z).rows();
    let reps = vec![z; k];
    let zk = g.concat_rows(&reps);
    let qz = prior.q_zeta_given_z.forward(g, store, zk);
    let zeta = gaussian_reparam(g, qz, rng)?;
    let log_q = gaussian_log_density(g, zeta, qz);
    let pz = prior.p_z_given_zeta.forward(g, store, zeta);
    let log_pz = gaussian_log_density(g, zk, pz);
    let log_pzeta = standard_log_density(g, zeta);
    let w = g.add(log_pz, log_pzeta);
    let w = g.sub(w, log_q);
    let cols: Vec<Var> = (0..k).map(|i| g.slice_rows(w, i * b, b)).collect();
    Ok(g.concat_cols(&cols))
}

/// Batch-mean KL upper bound `F`:
/// `log q(z|x) - log (1/K) Σ_i w_i` with `w_i` the importance weights.
pub fn kl_iw_bound(
    g: &mut Graph,
    store: &ParamStore,
    z: Var,
    q: GaussianVars,
    prior: &Prior,
    k: usize,
    rng: &mut Rng,
) -> Result<Var> {
    if k < 1 {
        return Err(Error::invalid("kl_iw_bound: K must be at least 1"));
    }
    let log_q = gaussian_log_density(g, z, q);
    let log_p = match prior {
        Prior::StandardNormal => standard_log_density(g, z),
        Prior::Hierarchical(h) => {
            let w = iw_log_weights(g, store, z, h, k, rng)?;
            let lse = g.logsumexp_rows(w);
            g.add_scalar(lse, -(k as f64).ln())
        }
    };
    let per_row = g.sub(log_q, log_p);
    let f = g.mean(per_row);
    g.check()?;
    Ok(f)
}
