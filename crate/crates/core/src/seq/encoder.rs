use super::layers::{GruCell, Linear};
use super::{ModelConfig, SequenceBatch};
use crate::error::{Error, Result};
use crate::tensor::{GaussianVars, Graph, ParamStore, Rng, Tensor, Var};

/// Floor added to the softplus so the posterior std is never zero.
pub const STD_FLOOR: f64 = 1e-6;

/// Stacked bidirectional GRU encoder with a fully-connected head.
#[derive(Clone, Debug)]
pub struct EncoderNet {
    layers: Vec<(GruCell, GruCell)>,
    fc: Linear,
    mean: Linear,
    raw_std: Linear,
    n_steps: usize,
    n_dims: usize,
}

impl EncoderNet {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(cfg.enc_layers);
        let mut n_in = cfg.n_d;
        for l in 0..cfg.enc_layers {
            let fwd = GruCell::new(store, &format!("enc.l{l}.fwd"), n_in, cfg.enc_hidden, rng);
            let bwd = GruCell::new(store, &format!("enc.l{l}.bwd"), n_in, cfg.enc_hidden, rng);
            layers.push((fwd, bwd));
            n_in = 2 * cfg.enc_hidden;
        }
        let fc = Linear::new(store, "enc.fc", 2 * cfg.enc_hidden, cfg.enc_fc, rng);
        let mean = Linear::new(store, "enc.mean", cfg.enc_fc, cfg.n_z, rng);
        let raw_std = Linear::new(store, "enc.raw_std", cfg.enc_fc, cfg.n_z, rng);
        Self {
            layers,
            fc,
            mean,
            raw_std,
            n_steps: cfg.n_s,
            n_dims: cfg.n_d,
        }
    }

    /// Posterior `q(z|x)`: mean and `softplus(raw) + 1e-6` std, each `batch × n_z`.
    pub fn encode(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: &SequenceBatch,
    ) -> Result<GaussianVars> {
        if x.n_steps() != self.n_steps || x.n_dims() != self.n_dims {
            return Err(Error::shape(
                "encode",
                format!(
                    "expected {}×{} frames, got {}×{}",
                    self.n_steps,
                    self.n_dims,
                    x.n_steps(),
                    x.n_dims()
                ),
            ));
        }
        if x.is_empty() {
            return Err(Error::invalid("encode: empty batch"));
        }
        if x.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("encode: non-finite input"));
        }
        let b = x.len();
        let mut inputs: Vec<Var> = (0..self.n_steps)
            .map(|t| g.constant(x.step_tensor(t)))
            .collect();
        let mut final_states = (inputs[0], inputs[0]);
        for (fwd, bwd) in &self.layers {
            let zero = g.constant(Tensor::zeros(&[b, fwd.hidden]));
            let mut hf = zero;
            let mut fwd_out = Vec::with_capacity(self.n_steps);
            for &xt in &inputs {
                hf = fwd.step(g, store, xt, hf)?;
                fwd_out.push(hf);
            }
            let mut hb = zero;
            let mut bwd_out = vec![zero; self.n_steps];
            for t in (0..self.n_steps).rev() {
                hb = bwd.step(g, store, inputs[t], hb)?;
                bwd_out[t] = hb;
            }
            final_states = (hf, hb);
            inputs = fwd_out
                .iter()
                .zip(&bwd_out)
                .map(|(&f, &bk)| g.concat_cols(&[f, bk]))
                .collect();
        }
        let both = g.concat_cols(&[final_states.0, final_states.1]);
        let hidden = self.fc.forward(g, store, both);
        let hidden = g.tanh(hidden);
        let mean = self.mean.forward(g, store, hidden);
        let raw = self.raw_std.forward(g, store, hidden);
        let sp = g.softplus(raw);
        let std = g.add_scalar(sp, STD_FLOOR);
        g.check()?;
        Ok(GaussianVars { mean, std })
    }
}
