use super::{mixup, select_jacobian, Estimator, FlatnessConfig, MixupConfig};
use crate::error::Result;
use crate::seq::DecoderNet;
use crate::tensor::{Graph, ParamStore, Rng, Tensor, Var};

/// The flat-manifold penalty on the tape.
#[derive(Clone, Debug)]
pub struct FmTerms {
    /// `mean_b ‖G_b - c² I‖²_F` (`1×1`); gradients reach decoder parameters only.
    pub loss: Var,
    /// Batch scale, detached.
    pub c2: f64,
    /// Mixed latent points where `G` was evaluated.
    pub points: Tensor,
    /// `batch × n_z²` metric entries, row-major per item.
    pub metric: Var,
}

/// Evaluate `G` at mixup points of the detached latents `z` and build the
/// penalty. Perturbed copies of the points are stacked and decoded in one
/// pass; `G_st = D_s · D_t` from the finite differences `D`.
pub fn fm_graph(
    g: &mut Graph,
    store: &ParamStore,
    decoder: &DecoderNet,
    z: &Tensor,
    cfg: &FlatnessConfig,
    rng: &mut Rng,
) -> Result<FmTerms> {
    let (b, n) = (z.rows(), z.cols());
    let mix = mixup(z, MixupConfig { alpha0: cfg.alpha0 }, rng)?;
    let points = mix.points;
    let metric = match select_jacobian(n, cfg) {
        Estimator::RandomVector => {
            rand_metric(g, store, decoder, &points, cfg.mu_rand, cfg.n_rand(n), rng)?
        }
        _ => fd_metric(g, store, decoder, &points, cfg.sigma_fd)?,
    };
    // c² = tr(G) / n, averaged over the batch, detached
    let gv = g.value(metric);
    let trace_sum: f64 = (0..b)
        .map(|r| (0..n).map(|i| gv.at(r, i * n + i)).sum::<f64>())
        .sum();
    let c2 = trace_sum / (b * n) as f64;
    let mut eye = vec![0.0; n * n];
    for i in 0..n {
        eye[i * n + i] = c2;
    }
    let target = g.constant(Tensor::row(eye));
    let diff = g.sub(metric, target);
    let sq = g.square(diff);
    let s = g.sum(sq);
    let loss = g.scale(s, 1.0 / b as f64);
    g.check()?;
    Ok(FmTerms {
        loss,
        c2,
        points,
        metric,
    })
}

fn stack_probes(base: &Tensor, offsets: impl Iterator<Item = Tensor>) -> Tensor {
    let mut data = base.data().to_vec();
    let mut rows = base.rows();
    for off in offsets {
        data.extend(base.data().iter().zip(off.data()).map(|(a, d)| a + d));
        rows += base.rows();
    }
    Tensor::matrix(rows, base.cols(), data).expect("probe stack")
}

/// Symmetric assembly of `batch × n²` entries from pairwise row sums.
fn assemble(
    g: &mut Graph,
    n: usize,
    mut entry: impl FnMut(&mut Graph, usize, usize) -> Var,
) -> Var {
    let mut cells: Vec<Option<Var>> = vec![None; n * n];
    for s in 0..n {
        for t in s..n {
            let v = entry(g, s, t);
            cells[s * n + t] = Some(v);
            cells[t * n + s] = Some(v);
        }
    }
    let cols: Vec<Var> = cells.into_iter().map(|c| c.expect("filled")).collect();
    g.concat_cols(&cols)
}

fn fd_metric(
    g: &mut Graph,
    store: &ParamStore,
    decoder: &DecoderNet,
    points: &Tensor,
    sigma: f64,
) -> Result<Var> {
    let (b, n) = (points.rows(), points.cols());
    let offsets = (0..n).map(|t| {
        let mut o = Tensor::zeros(&[b, n]);
        for r in 0..b {
            o.data_mut()[r * n + t] = sigma;
        }
        o
    });
    let probes = stack_probes(points, offsets);
    let zc = g.constant(probes);
    let f = decoder.decode_map(g, store, zc)?;
    let f0 = g.slice_rows(f, 0, b);
    let d: Vec<Var> = (0..n)
        .map(|t| {
            let ft = g.slice_rows(f, (t + 1) * b, b);
            let diff = g.sub(ft, f0);
            g.scale(diff, 1.0 / sigma)
        })
        .collect();
    Ok(assemble(g, n, |g, s, t| {
        let p = g.mul(d[s], d[t]);
        g.row_sum(p)
    }))
}

fn rand_metric(
    g: &mut Graph,
    store: &ParamStore,
    decoder: &DecoderNet,
    points: &Tensor,
    mu: f64,
    k: usize,
    rng: &mut Rng,
) -> Result<Var> {
    let (b, n) = (points.rows(), points.cols());
    let us: Vec<Tensor> = (0..k).map(|_| rng.normal_tensor(&[b, n])).collect();
    let probes = stack_probes(points, us.iter().map(|u| u.map(|v| mu * v)));
    let zc = g.constant(probes);
    let f = decoder.decode_map(g, store, zc)?;
    let f0 = g.slice_rows(f, 0, b);
    let d: Vec<Var> = (0..k)
        .map(|i| {
            let fi = g.slice_rows(f, (i + 1) * b, b);
            let diff = g.sub(fi, f0);
            g.scale(diff, 1.0 / mu)
        })
        .collect();
    // Gram matrix M_kl = D_k · D_l per batch row, as batch × k²
    let gram = assemble(g, k, |g, i, j| {
        let p = g.mul(d[i], d[j]);
        g.row_sum(p)
    });
    // G_st = (1/k²) Σ_kl u_k[s] M_kl u_l[t]
    let inv = 1.0 / (k * k) as f64;
    Ok(assemble(g, n, |g, s, t| {
        let mut w = Vec::with_capacity(b * k * k);
        for r in 0..b {
            for i in 0..k {
                for j in 0..k {
                    w.push(inv * us[i].at(r, s) * us[j].at(r, t));
                }
            }
        }
        let wv = g.constant(Tensor::matrix(b, k * k, w).expect("weights"));
        let p = g.mul(gram, wv);
        g.row_sum(p)
    }))
}
