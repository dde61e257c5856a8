use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, ParamStore, Rng, Tensor, Var};

/// Fully-connected layer `x W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub n_in: usize,
    pub n_out: usize,
}

impl Linear {
    /// Uniform `±1/√fan_in` weights, zero bias.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        n_in: usize,
        n_out: usize,
        rng: &mut Rng,
    ) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let w = uniform_matrix(n_in, n_out, bound, rng);
        let w = store.add(format!("{name}.w"), w);
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[1, n_out]));
        Self { w, b, n_in, n_out }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        g.affine(x, w, b)
    }
}

pub(crate) fn uniform_matrix(rows: usize, cols: usize, bound: f64, rng: &mut Rng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.uniform_range(-bound, bound))
        .collect();
    Tensor::matrix(rows, cols, data).expect("uniform matrix")
}

/// Random orthogonal `n×n` matrix (Gram-Schmidt on Gaussian columns).
pub(crate) fn orthogonal(n: usize, rng: &mut Rng) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        for _ in 0..2 {
            for c in &cols {
                let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(c) {
                    *x -= d * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            cols.push(v);
        }
    }
    let mut m = vec![0.0; n * n];
    for (j, c) in cols.iter().enumerate() {
        for (i, x) in c.iter().enumerate() {
            m[i * n + j] = *x;
        }
    }
    m
}

/// Gated recurrent unit. Gate blocks in the packed weights are ordered
/// reset, update, candidate.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub w_in: ParamId,
    pub w_hid: ParamId,
    pub b_in: ParamId,
    pub b_hid: ParamId,
    pub n_in: usize,
    pub hidden: usize,
}

impl GruCell {
    /// Orthogonal recurrent blocks, uniform `±1/√fan_in` input weights, zero biases.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        n_in: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Self {
        let bound = 1.0 / (n_in.max(1) as f64).sqrt();
        let w_in = uniform_matrix(n_in, 3 * hidden, bound, rng);
        let mut w_hid = vec![0.0; hidden * 3 * hidden];
        for block in 0..3 {
            let q = orthogonal(hidden, rng);
            for i in 0..hidden {
                for j in 0..hidden {
                    w_hid[i * 3 * hidden + block * hidden + j] = q[i * hidden + j];
                }
            }
        }
        let w_in = store.add(format!("{name}.w_in"), w_in);
        let w_hid = store.add(
            format!("{name}.w_hid"),
            Tensor::matrix(hidden, 3 * hidden, w_hid).expect("square blocks"),
        );
        let b_in = store.add(format!("{name}.b_in"), Tensor::zeros(&[1, 3 * hidden]));
        let b_hid = store.add(format!("{name}.b_hid"), Tensor::zeros(&[1, 3 * hidden]));
        Self {
            w_in,
            w_hid,
            b_in,
            b_hid,
            n_in,
            hidden,
        }
    }

    /// `h' = (1 - u) ∘ h + u ∘ n` with
    /// `r = σ(x W_r + h U_r + b_r)`, `u = σ(x W_u + h U_u + b_u)`,
    /// `n = tanh(x W_n + b_n + r ∘ (h U_n + c_n))`.
    pub fn step(&self, g: &mut Graph, store: &ParamStore, x: Var, h: Var) -> Result<Var> {
        let (xv, hv) = (g.value(x), g.value(h));
        if xv.cols() != self.n_in || hv.cols() != self.hidden || xv.rows() != hv.rows() {
            return Err(Error::shape(
                "gru_step",
                format!(
                    "cell {}→{}, got x {:?} and h {:?}",
                    self.n_in,
                    self.hidden,
                    xv.shape(),
                    hv.shape()
                ),
            ));
        }
        let hs = self.hidden;
        let w_in = g.param(store, self.w_in);
        let b_in = g.param(store, self.b_in);
        let w_hid = g.param(store, self.w_hid);
        let b_hid = g.param(store, self.b_hid);
        let xi = g.affine(x, w_in, b_in);
        let hh = g.affine(h, w_hid, b_hid);

        let xr = g.slice_cols(xi, 0, hs);
        let hr = g.slice_cols(hh, 0, hs);
        let r = g.add(xr, hr);
        let r = g.sigmoid(r);

        let xu = g.slice_cols(xi, hs, hs);
        let hu = g.slice_cols(hh, hs, hs);
        let u = g.add(xu, hu);
        let u = g.sigmoid(u);

        let xn = g.slice_cols(xi, 2 * hs, hs);
        let hn = g.slice_cols(hh, 2 * hs, hs);
        let rhn = g.mul(r, hn);
        let n = g.add(xn, rhn);
        let n = g.tanh(n);

        let diff = g.sub(n, h);
        let blend = g.mul(u, diff);
        Ok(g.add(h, blend))
    }

    /// Single step on plain vectors.
    pub fn step_values(&self, store: &ParamStore, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let xv = g.constant(Tensor::row(x.to_vec()));
        let hv = g.constant(Tensor::row(h.to_vec()));
        let out = self.step(&mut g, store, xv, hv)?;
        Ok(g.value(out).data().to_vec())
    }
}
