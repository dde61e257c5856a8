use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// max over entries of `|analytic - numeric| / (|numeric| + 1e-12)`
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_index: usize,
}

/// Central differences of a scalar function, one entry at a time.
pub fn central_difference(
    f: impl Fn(&Tensor) -> Result<f64>,
    x: &Tensor,
    eps: f64,
) -> Result<Tensor> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite {
                op: "central_difference",
                node: i,
            });
        }
        out.push((up - down) / (2.0 * eps));
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Compare a reported gradient against central differences.
pub fn compare_gradients(analytic: &Tensor, numeric: &Tensor) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_index: 0,
    };
    for (i, (a, n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
        let abs = (a - n).abs();
        let rel = abs / (n.abs() + 1e-12);
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    report
}

/// Check the tape gradient of a scalar graph function `f` at `x`.
pub fn grad_check(
    f: impl Fn(&mut Graph, Var) -> Result<Var>,
    x: &Tensor,
    eps: f64,
) -> Result<GradCheckReport> {
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let loss = f(&mut g, xv)?;
    let grads = g.backward(loss)?;
    let analytic = grads
        .wrt(xv)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()));
    let numeric = central_difference(
        |probe| {
            let mut g = Graph::new();
            let v = g.constant(probe.clone());
            let l = f(&mut g, v)?;
            Ok(g.scalar(l))
        },
        x,
        eps,
    )?;
    Ok(compare_gradients(&analytic, &numeric))
}
