use super::*;
use crate::seq::{DecoderNet, ModelConfig, SequenceKind};
use crate::tensor::{Graph, ParamStore, Var};

struct Linear(Tensor);

impl LatentMap for Linear {
    fn eval_rows(&self, z: &Tensor) -> Result<Tensor> {
        let a = &self.0;
        let (m, n) = (a.rows(), a.cols());
        let mut out = vec![0.0; z.rows() * m];
        for r in 0..z.rows() {
            for i in 0..m {
                out[r * m + i] = (0..n).map(|j| a.at(i, j) * z.at(r, j)).sum();
            }
        }
        Tensor::matrix(z.rows(), m, out)
    }
}

fn rel_frobenius(a: &Tensor, b: &Tensor) -> f64 {
    let num: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    let den: f64 = b.data().iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn tiny_decoder(n_z: usize, seed: u64) -> (ParamStore, DecoderNet) {
    let cfg = ModelConfig::tiny(SequenceKind::Drum, n_z, 4, 2, 8);
    let mut store = ParamStore::new();
    let dec = DecoderNet::new(&mut store, &cfg, &mut Rng::new(seed));
    (store, dec)
}

struct DecoderMap<'a>(&'a ParamStore, &'a DecoderNet);

impl LatentMap for DecoderMap<'_> {
    fn eval_rows(&self, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let f = self.1.decode_map(&mut g, self.0, zv)?;
        Ok(g.value(f).clone())
    }
}

/// Reverse-mode Jacobian, one backward pass per output coordinate.
fn exact_jacobian(store: &ParamStore, dec: &DecoderNet, z: &[f64]) -> Tensor {
    let mut g = Graph::new();
    let zv = g.input(Tensor::row(z.to_vec()));
    let f = dec.decode_map(&mut g, store, zv).unwrap();
    let m = g.value(f).cols();
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        let ev = g.constant(Tensor::row(e));
        let p = g.mul(f, ev);
        let s = g.sum(p);
        rows.push(g.backward(s).unwrap().wrt(zv).unwrap().data().to_vec());
    }
    Tensor::from_rows(&rows).unwrap()
}

#[test]
fn fd_recovers_linear_map_exactly() {
    let a = Rng::new(1).normal_tensor(&[5, 3]);
    let f = Linear(a.clone());
    for sigma in [1e-4, 0.1, 3.0] {
        let j = jacobian_fd(&f, &[0.3, -1.0, 2.0], sigma).unwrap();
        assert!(j.matrix.max_abs_diff(&a) < 1e-10, "sigma {sigma}");
    }
}

#[test]
fn fd_on_square_map() {
    let f = FnMap(|z: &[f64]| Ok(z.iter().map(|v| v * v).collect()));
    let j = jacobian_fd(&f, &[1.0, 2.0], 1e-5).unwrap();
    let want = Tensor::matrix(2, 2, vec![2.0, 0.0, 0.0, 4.0]).unwrap();
    assert!(j.matrix.max_abs_diff(&want) < 1e-4);
}

#[test]
fn fd_matches_reverse_mode_on_tiny_decoder() {
    let (store, dec) = tiny_decoder(3, 2);
    let z = [0.4, -0.7, 0.1];
    let exact = exact_jacobian(&store, &dec, &z);
    let fd = jacobian_fd(&DecoderMap(&store, &dec), &z, 1e-4).unwrap();
    assert!(fd.matrix.max_abs_diff(&exact) < 1e-3);
}

#[test]
fn fd_rejects_bad_sigma_and_non_finite_maps() {
    let f = FnMap(|z: &[f64]| Ok(z.to_vec()));
    assert!(jacobian_fd(&f, &[1.0], 0.0).is_err());
    let bad = FnMap(|z: &[f64]| Ok(vec![1.0 / (z[0] - 1.0)]));
    assert!(jacobian_fd(&bad, &[1.0], 1e-3).is_err());
}

#[test]
fn rand_concentrates_on_linear_map() {
    let a = Rng::new(3).normal_tensor(&[6, 4]);
    let f = Linear(a.clone());
    let j = jacobian_rand(&f, &[0.1, 0.2, 0.3, 0.4], 1e-3, 10_000, &mut Rng::new(4)).unwrap();
    assert!(rel_frobenius(&j.matrix, &a) < 0.05);
}

#[test]
fn single_sample_rand_is_unbiased() {
    // The relative error of a mean of 100 single-direction estimates is about
    // √((n_z + 1) / 100), so the check is entrywise against the Monte-Carlo
    // standard error rather than a fixed percentage.
    let a = Rng::new(5).normal_tensor(&[4, 3]);
    let f = Linear(a.clone());
    let mut rng = Rng::new(6);
    let runs: Vec<Tensor> = (0..100)
        .map(|_| {
            jacobian_rand(&f, &[0.0, 1.0, -1.0], 1e-3, 1, &mut rng)
                .unwrap()
                .matrix
        })
        .collect();
    for e in 0..12 {
        let v: Vec<f64> = runs.iter().map(|t| t.data()[e]).collect();
        let m = v.iter().sum::<f64>() / 100.0;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 99.0).sqrt();
        assert!(
            (m - a.data()[e]).abs() < 4.0 * sd / 10.0,
            "entry {e}: {m} vs {}",
            a.data()[e]
        );
    }
}

#[test]
fn rand_is_deterministic_per_seed() {
    let f = Linear(Rng::new(7).normal_tensor(&[3, 3]));
    let a = jacobian_rand(&f, &[1.0, 0.0, 0.0], 1e-3, 5, &mut Rng::new(8)).unwrap();
    let b = jacobian_rand(&f, &[1.0, 0.0, 0.0], 1e-3, 5, &mut Rng::new(8)).unwrap();
    assert_eq!(a.matrix, b.matrix);
}

fn jac(m: usize, n: usize, data: Vec<f64>) -> Jacobian {
    Jacobian {
        matrix: Tensor::matrix(m, n, data).unwrap(),
        estimator: Estimator::Exact,
        samples: 0,
        scale: 0.0,
    }
}

#[test]
fn metric_tensor_examples() {
    let g = metric_tensor(&jac(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
    assert_eq!(g.0.data(), &[1.0, 0.0, 0.0, 1.0]);
    let g = metric_tensor(&jac(4, 2, vec![2.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0]));
    assert_eq!(g.0.data(), &[4.0, 0.0, 0.0, 9.0]);
}

#[test]
fn metric_tensor_matches_triple_loop() {
    let mut rng = Rng::new(9);
    for _ in 0..20 {
        let j = jac(7, 4, rng.normal_tensor(&[7, 4]).into_data());
        let g = metric_tensor(&j);
        for s in 0..4 {
            for t in 0..4 {
                let mut want = 0.0;
                for i in 0..7 {
                    want += j.matrix.at(i, s) * j.matrix.at(i, t);
                }
                assert!((g.0.at(s, t) - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn metric_tensor_is_symmetric_psd() {
    let mut rng = Rng::new(10);
    for _ in 0..100 {
        let m = 1 + rng.below(8);
        let n = 1 + rng.below(6);
        let g = metric_tensor(&jac(m, n, rng.normal_tensor(&[m, n]).into_data()));
        for s in 0..n {
            for t in 0..n {
                assert!((g.0.at(s, t) - g.0.at(t, s)).abs() <= 1e-9);
            }
        }
        assert!(g.eigenvalues()[0] >= -1e-8);
    }
}

#[test]
fn mixup_examples() {
    let z = Tensor::matrix(2, 2, vec![0.0, 0.0, 2.0, 4.0]).unwrap();
    assert_eq!(
        mixup_with(&z, &[1, 0], &[0.0, 0.0]).unwrap().row_slice(0),
        &[0.0, 0.0]
    );
    assert_eq!(
        mixup_with(&z, &[1, 0], &[1.0, 1.0]).unwrap().row_slice(0),
        &[2.0, 4.0]
    );
    assert_eq!(
        mixup_with(&z, &[1, 0], &[0.5, 0.5]).unwrap().row_slice(0),
        &[1.0, 2.0]
    );
    let one = Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap();
    assert!(mixup(&one, MixupConfig { alpha0: 0.1 }, &mut Rng::new(0)).is_err());
}

#[test]
fn mixup_alpha_stays_in_range() {
    let z = Rng::new(11).normal_tensor(&[50, 3]);
    let m = mixup(&z, MixupConfig { alpha0: 0.1 }, &mut Rng::new(12)).unwrap();
    assert!(m.alpha.iter().all(|a| (-0.1..=1.1).contains(a)));
    let mut sorted = m.partner.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..50).collect::<Vec<_>>());
}

fn scaled_identity(n: usize, c: f64) -> MetricTensor {
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        d[i * n + i] = c;
    }
    MetricTensor(Tensor::matrix(n, n, d).unwrap())
}

#[test]
fn c2_examples() {
    let batch = [scaled_identity(2, 1.0), scaled_identity(2, 4.0)];
    assert!((scale_c2(&batch).unwrap() - 2.5).abs() < 1e-15);
    let rev = [scaled_identity(2, 4.0), scaled_identity(2, 1.0)];
    assert_eq!(scale_c2(&batch).unwrap(), scale_c2(&rev).unwrap());
    assert_eq!(scale_c2(&[scaled_identity(3, 1.0)]).unwrap(), 1.0);
    assert!(scale_c2(&[]).is_err());
}

#[test]
fn fm_loss_examples() {
    assert_eq!(fm_loss(&[scaled_identity(3, 2.5)], 2.5).unwrap(), 0.0);
    let g = MetricTensor(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 4.0]).unwrap());
    assert!((fm_loss(std::slice::from_ref(&g), 2.5).unwrap() - 4.5).abs() < 1e-15);
    // moving toward c²I along a line strictly decreases the loss
    let target = scaled_identity(2, 2.5);
    let mut last = f64::INFINITY;
    for k in 0..5 {
        let t = k as f64 / 4.0;
        let data =
            g.0.data()
                .iter()
                .zip(target.0.data())
                .map(|(a, b)| (1.0 - t) * a + t * b)
                .collect();
        let l = fm_loss(&[MetricTensor(Tensor::matrix(2, 2, data).unwrap())], 2.5).unwrap();
        assert!(l < last);
        last = l;
    }
}

#[test]
fn estimator_selection() {
    let cfg = FlatnessConfig::default();
    assert_eq!(select_jacobian(2, &cfg), Estimator::PerDimFd);
    assert_eq!(select_jacobian(16, &cfg), Estimator::PerDimFd);
    assert_eq!(select_jacobian(64, &cfg), Estimator::RandomVector);
    let low = FlatnessConfig {
        jac_threshold: 1,
        ..cfg
    };
    assert_eq!(select_jacobian(2, &low), Estimator::RandomVector);
    assert_eq!(FlatnessConfig::default().n_rand(64), 16);
    assert_eq!(FlatnessConfig::default().n_rand(8), 8);
}

#[test]
fn flatness_config_kv_round_trip() {
    let cfg = FlatnessConfig {
        n_rand_samples: Some(12),
        alpha0: 0.25,
        ..FlatnessConfig::default()
    };
    let mut m = KvMap::new();
    cfg.write_kv(&mut m);
    let mut back = FlatnessConfig::default();
    back.read_kv(&m).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn graph_penalty_matches_plain_functions() {
    let (store, dec) = tiny_decoder(3, 13);
    let z = Rng::new(14).normal_tensor(&[4, 3]);
    let cfg = FlatnessConfig::default();
    let mut g = Graph::new();
    let fm = fm_graph(&mut g, &store, &dec, &z, &cfg, &mut Rng::new(15)).unwrap();
    let map = DecoderMap(&store, &dec);
    let metrics: Vec<MetricTensor> = (0..4)
        .map(|r| metric_tensor(&jacobian_fd(&map, fm.points.row_slice(r), cfg.sigma_fd).unwrap()))
        .collect();
    let c2 = scale_c2(&metrics).unwrap();
    assert!((fm.c2 - c2).abs() < 1e-9 * c2.max(1.0));
    let want = fm_loss(&metrics, c2).unwrap();
    assert!((g.scalar(fm.loss) - want).abs() < 1e-9 * want.max(1.0));
}

#[test]
fn graph_penalty_random_estimator_tracks_fd() {
    // above the threshold the random-direction estimator is used; with many
    // directions its c² approaches the finite-difference value
    let (store, dec) = tiny_decoder(18, 16);
    let z = Rng::new(17).normal_tensor(&[2, 18]);
    let fd_cfg = FlatnessConfig {
        jac_threshold: 100,
        ..FlatnessConfig::default()
    };
    let rand_cfg = FlatnessConfig {
        n_rand_samples: Some(400),
        ..FlatnessConfig::default()
    };
    let mut g = Graph::new();
    let a = fm_graph(&mut g, &store, &dec, &z, &fd_cfg, &mut Rng::new(18)).unwrap();
    let mut g2 = Graph::new();
    let b = fm_graph(&mut g2, &store, &dec, &z, &rand_cfg, &mut Rng::new(18)).unwrap();
    assert_eq!(a.points, b.points);
    assert!((a.c2 - b.c2).abs() / a.c2 < 0.2, "{} vs {}", a.c2, b.c2);
}

#[test]
fn graph_penalty_gradient_matches_finite_differences() {
    let (store, dec) = tiny_decoder(2, 19);
    let z = Rng::new(20).normal_tensor(&[3, 2]);
    let cfg = FlatnessConfig {
        sigma_fd: 1e-3,
        ..FlatnessConfig::default()
    };
    let eval = |s: &ParamStore| -> Result<(Graph, Var)> {
        let mut g = Graph::new();
        let fm = fm_graph(&mut g, s, &dec, &z, &cfg, &mut Rng::new(21))?;
        // c² is detached, so compare against the loss with c² frozen
        Ok((g, fm.loss))
    };
    let (g, l) = eval(&store).unwrap();
    let grads = g.backward(l).unwrap();
    let c2 = {
        let mut g = Graph::new();
        fm_graph(&mut g, &store, &dec, &z, &cfg, &mut Rng::new(21))
            .unwrap()
            .c2
    };
    let id = store.find("dec.out.w").unwrap();
    let analytic = grads.param(id).unwrap().clone();
    let numeric = crate::tensor::central_difference(
        |probe| {
            let mut s = store.clone();
            *s.get_mut(id) = probe.clone();
            let mut g = Graph::new();
            let fm = fm_graph(&mut g, &s, &dec, &z, &cfg, &mut Rng::new(21))?;
            // re-center on the frozen c²
            let mv = g.value(fm.metric).clone();
            let n = 2;
            let mut tot = 0.0;
            for r in 0..mv.rows() {
                for i in 0..n {
                    for j in 0..n {
                        let t = if i == j { c2 } else { 0.0 };
                        tot += (mv.at(r, i * n + j) - t).powi(2);
                    }
                }
            }
            Ok(tot / mv.rows() as f64)
        },
        store.get(id),
        1e-6,
    )
    .unwrap();
    let r = crate::tensor::compare_gradients(&analytic, &numeric);
    let scale = numeric.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(r.max_abs_error / scale < 1e-4, "{r:?} (scale {scale})");
}
