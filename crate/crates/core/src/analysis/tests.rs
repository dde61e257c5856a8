use proptest::prelude::*;

use super::*;
use crate::data::{DatasetSplit, SplitPolicy};
use crate::flatness::{FlatnessConfig, FnMap};
use crate::seq::{ModelConfig, DRUM_VOICES};
use crate::tensor::Rng;

fn linear_map(a: Vec<Vec<f64>>) -> impl LatentMap {
    FnMap(move |z: &[f64]| Ok(a.iter().map(|row| dot(row, z)).collect()))
}

fn identity() -> impl LatentMap {
    FnMap(|z: &[f64]| Ok(z.to_vec()))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn lerp_endpoints_and_midpoint() {
    let p = lerp(&[0.0, 0.0], &[4.0, 8.0], 3).unwrap();
    assert_eq!(p.points.len(), 5);
    assert_eq!(p.interior(), 3);
    assert_eq!(p.points[0], vec![0.0, 0.0]);
    assert_eq!(p.points[4], vec![4.0, 8.0]);
    assert_eq!(p.points[2], vec![2.0, 4.0]);
    for q in &p.points {
        // collinear with the endpoints
        assert!((q[1] - 2.0 * q[0]).abs() < 1e-12);
    }
}

#[test]
fn lerp_rejects_bad_input() {
    assert!(lerp(&[0.0], &[1.0, 2.0], 3).is_err());
    assert!(lerp(&[0.0], &[1.0], 0).is_err());
}

#[test]
fn slerp_quarter_circle() {
    let p = slerp(&[1.0, 0.0], &[0.0, 1.0], 1).unwrap();
    assert_eq!(p.interp, Interp::Slerp);
    assert!(close(&p.points[0], &[1.0, 0.0], 1e-15));
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert!(close(&p.points[1], &[h, h], 1e-12));
}

#[test]
fn slerp_errors() {
    assert!(slerp(&[0.0, 0.0], &[1.0, 0.0], 2).is_err());
    assert!(slerp(&[1.0, 2.0], &[-2.0, -4.0], 2).is_err());
}

#[test]
fn slerp_small_angle_matches_lerp() {
    let a = 5e-5_f64;
    let z0 = [1.0, 0.0, 0.5];
    let z1 = [a.cos(), a.sin(), 0.5];
    let s = slerp(&z0, &z1, 7).unwrap();
    let l = lerp(&z0, &z1, 7).unwrap();
    for (p, q) in s.points.iter().zip(&l.points) {
        assert!(close(p, q, 1e-6));
    }
}

proptest! {
    #[test]
    fn slerp_preserves_norm(
        a in prop::collection::vec(-3.0f64..3.0, 4),
        b in prop::collection::vec(-3.0f64..3.0, 4),
        t in 1usize..12,
    ) {
        let na = norm(&a);
        let nb = norm(&b);
        prop_assume!(na > 0.1 && nb > 0.1);
        let b: Vec<f64> = b.iter().map(|x| x * na / nb).collect();
        let cos = dot(&a, &b) / (na * na);
        prop_assume!(cos > -0.999);
        let p = slerp(&a, &b, t).unwrap();
        for q in &p.points {
            prop_assert!((norm(q) - na).abs() < 1e-9);
        }
    }

    #[test]
    fn pearson_affine_invariant(
        x in prop::collection::vec(-5.0f64..5.0, 3..40),
        noise in prop::collection::vec(-5.0f64..5.0, 40),
        a in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        b in -10.0f64..10.0,
    ) {
        let y: Vec<f64> = x.iter().zip(&noise).map(|(u, v)| u + v).collect();
        let base = pearson(&y, &x);
        prop_assume!(base.is_ok());
        let base = base.unwrap();
        prop_assert!((-1.0..=1.0).contains(&base));
        let scaled: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let r = pearson(&scaled, &x).unwrap();
        prop_assert!((r - a.signum() * base).abs() < 1e-9);
    }
}

/// One drum output per path step, with the given hits in a single frame.
fn hit_path(steps: &[&[usize]]) -> SequenceBatch {
    let d = SequenceKind::Drum.frame_dims();
    let seqs: Vec<Vec<f64>> = steps
        .iter()
        .map(|hits| {
            let mut f = vec![0.0; d];
            for &h in *hits {
                f[h] = 1.0;
                f[DRUM_VOICES + h] = 0.8;
            }
            f
        })
        .collect();
    SequenceBatch::from_sequences(SequenceKind::Drum, 1, &seqs).unwrap()
}

#[test]
fn hamming_examples() {
    let ch = SequenceKind::Drum.binary_channels();
    let same = hit_path(&[&[0, 2], &[0, 2], &[0, 2]]);
    assert_eq!(hamming_smoothness(&same, &ch).unwrap(), 0.0);
    let one = hit_path(&[&[0], &[0], &[0, 1], &[0, 1]]);
    assert_eq!(hamming_smoothness(&one, &ch).unwrap(), 1.0);
    let max = hit_path(&[&[], &[0], &[1], &[2], &[2], &[2, 3, 4, 5]]);
    assert_eq!(hamming_smoothness(&max, &ch).unwrap(), 3.0);
    assert!(hamming_smoothness(&hit_path(&[&[0]]), &ch).is_err());
}

proptest! {
    #[test]
    fn hamming_symmetric_under_reversal(
        steps in prop::collection::vec(prop::collection::vec(0usize..DRUM_VOICES, 0..5), 2..10),
    ) {
        let fwd: Vec<&[usize]> = steps.iter().map(|s| s.as_slice()).collect();
        let rev: Vec<&[usize]> = fwd.iter().rev().copied().collect();
        let ch = SequenceKind::Drum.binary_channels();
        prop_assert_eq!(
            hamming_smoothness(&hit_path(&fwd), &ch).unwrap(),
            hamming_smoothness(&hit_path(&rev), &ch).unwrap()
        );
    }
}

#[test]
fn second_diff_examples() {
    let affine = Tensor::from_rows(
        &(0..6)
            .map(|t| vec![2.0 * t as f64 - 1.0, 0.5 * t as f64])
            .collect::<Vec<_>>(),
    )
    .unwrap();
    assert!(second_diff_smoothness(&affine).unwrap().abs() < 1e-12);
    let square =
        Tensor::from_rows(&(0..5).map(|t| vec![(t * t) as f64]).collect::<Vec<_>>()).unwrap();
    assert!((second_diff_smoothness(&square).unwrap() - 2.0).abs() < 1e-12);
    let shifted = Tensor::from_rows(
        &(0..5)
            .map(|t| vec![(t * t) as f64 + 7.5])
            .collect::<Vec<_>>(),
    )
    .unwrap();
    assert!((second_diff_smoothness(&shifted).unwrap() - 2.0).abs() < 1e-12);
    assert!(second_diff_smoothness(&Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap()).is_err());
}

#[test]
fn riemannian_length_identity_and_linear() {
    let z0 = [0.3, -1.0, 2.0];
    let z1 = [1.3, 0.5, -0.25];
    let d: Vec<f64> = z1.iter().zip(&z0).map(|(a, b)| a - b).collect();
    for t in [1, 3, 20, 64] {
        let l = riemannian_length(&identity(), &z0, &z1, t).unwrap();
        assert!((l - norm(&d)).abs() < 1e-12, "T={t}");
    }
    let a = vec![
        vec![1.0, 2.0, 0.0],
        vec![0.0, -1.0, 3.0],
        vec![0.5, 0.5, 0.5],
        vec![2.0, 0.0, 1.0],
    ];
    let ad: Vec<f64> = a.iter().map(|r| dot(r, &d)).collect();
    let f = linear_map(a);
    for t in [1, 5, 33] {
        assert!((riemannian_length(&f, &z0, &z1, t).unwrap() - norm(&ad)).abs() < 1e-9);
    }
}

#[test]
fn riemannian_length_refinement_converges() {
    let f = FnMap(|z: &[f64]| Ok(vec![(2.0 * z[0]).sin(), z[0] * z[1], (z[1] - z[0]).exp()]));
    let (z0, z1) = ([-1.0, 0.5], [1.2, -0.7]);
    let gaps: Vec<f64> = [8, 16, 32, 64]
        .iter()
        .map(|&t| {
            let coarse = riemannian_length(&f, &z0, &z1, t - 1).unwrap();
            let fine = riemannian_length(&f, &z0, &z1, 2 * t - 1).unwrap();
            (fine - coarse).abs()
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn riemannian_length_rejects_non_finite() {
    let f = FnMap(|z: &[f64]| Ok(vec![1.0 / z[0]]));
    assert!(riemannian_length(&f, &[-1.0], &[1.0], 1).is_err());
}

#[test]
fn contour_identity_is_round() {
    let c = contour_distances(
        &identity(),
        &[0.5, -0.5],
        &circle_directions(2, 16, 0.0),
        1.0,
        4.0,
        4,
    )
    .unwrap();
    assert!(c.roundness < 1e-6);
    assert!(c.radii.iter().all(|r| (r - 1.0).abs() < 1e-6));
}

#[test]
fn contour_matches_analytic_ellipse() {
    let f = linear_map(vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
    let dirs = circle_directions(2, 24, 0.1);
    let target = 1.5;
    let c = contour_distances(&f, &[0.0, 0.0], &dirs, target, 10.0, 4).unwrap();
    let analytic: Vec<f64> = dirs
        .iter()
        .map(|d| target / (d[0] * d[0] + 4.0 * d[1] * d[1]).sqrt())
        .collect();
    let expected = coefficient_of_variation(&analytic);
    assert!((c.roundness - expected).abs() / expected < 0.02);
    let axes = contour_distances(
        &f,
        &[0.0, 0.0],
        &circle_directions(2, 8, 0.0),
        target,
        10.0,
        4,
    )
    .unwrap();
    assert!((axes.radii[0] / axes.radii[2] - 2.0).abs() < 1e-5);
}

#[test]
fn contour_rotation_invariant_for_isotropic_map() {
    let f = linear_map(vec![vec![3.0, 0.0], vec![0.0, 3.0]]);
    let a =
        contour_distances(&f, &[0.0, 0.0], &circle_directions(2, 12, 0.0), 2.0, 5.0, 3).unwrap();
    let b =
        contour_distances(&f, &[0.0, 0.0], &circle_directions(2, 12, 0.7), 2.0, 5.0, 3).unwrap();
    assert!((a.roundness - b.roundness).abs() < 1e-6);
}

#[test]
fn contour_errors() {
    let f = identity();
    assert!(
        contour_distances(&f, &[0.0, 0.0], &circle_directions(2, 4, 0.0), 1.0, 4.0, 4).is_err()
    );
    assert!(
        contour_distances(&f, &[0.0, 0.0], &circle_directions(2, 8, 0.0), 5.0, 4.0, 4).is_err()
    );
}

#[test]
fn attribute_vector_centroids() {
    let mut rows = Vec::new();
    let mut vals = Vec::new();
    for k in 0..4 {
        rows.push(vec![-1.0, 0.0]);
        vals.push(k as f64 * 0.01);
        rows.push(vec![1.0, 0.0]);
        vals.push(10.0 + k as f64 * 0.01);
    }
    let v = attribute_vector(&Tensor::from_rows(&rows).unwrap(), &vals, "density").unwrap();
    assert!(close(&v.direction, &[2.0, 0.0], 1e-12));
    let diff: Vec<f64> = v
        .centroid_high
        .iter()
        .zip(&v.centroid_low)
        .map(|(h, l)| h - l)
        .collect();
    assert_eq!(diff, v.direction);
}

#[test]
fn attribute_vector_errors() {
    let z = Tensor::from_rows(&vec![vec![0.0, 1.0]; 8]).unwrap();
    assert!(attribute_vector(&z, &[3.0; 8], "density").is_err());
    assert!(attribute_vector(&z, &[1.0; 7], "density").is_err());
    let small = Tensor::from_rows(&vec![vec![0.0]; 4]).unwrap();
    assert!(attribute_vector(&small, &[1.0, 2.0, 3.0, 4.0], "density").is_err());
}

#[test]
fn attribute_vector_order_invariant() {
    let mut rng = Rng::new(4);
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|_| vec![rng.normal(), rng.normal(), rng.normal()])
        .collect();
    let vals: Vec<f64> = rows.iter().map(|r| r[0] + 0.1 * r[2]).collect();
    let a = attribute_vector(&Tensor::from_rows(&rows).unwrap(), &vals, "x").unwrap();
    let perm = rng.permutation(rows.len());
    let prow: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
    let pval: Vec<f64> = perm.iter().map(|&i| vals[i]).collect();
    let b = attribute_vector(&Tensor::from_rows(&prow).unwrap(), &pval, "x").unwrap();
    assert_eq!(a, b);
}

#[test]
fn attribute_vector_recovers_planted_axis() {
    let mut rng = Rng::new(11);
    let axis = {
        let v = [1.0, -2.0, 0.5, 1.5];
        let n = norm(&v);
        v.map(|x| x / n)
    };
    let rows: Vec<Vec<f64>> = (0..5000)
        .map(|_| (0..4).map(|_| rng.normal()).collect())
        .collect();
    let vals: Vec<f64> = rows
        .iter()
        .map(|r| dot(r, &axis) + 0.1 * rng.normal())
        .collect();
    let v = attribute_vector(&Tensor::from_rows(&rows).unwrap(), &vals, "planted").unwrap();
    let cos = dot(&v.direction, &axis) / norm(&v.direction);
    assert!(
        cos.acos().to_degrees() < 5.0,
        "angle {}",
        cos.acos().to_degrees()
    );
}

/// Latents with distinct second coordinates, so a decoded point identifies
/// its base row.
fn tagged_latents() -> Tensor {
    let rows: Vec<Vec<f64>> = (0..60)
        .map(|i| vec![((i * 7) % 11) as f64 / 5.0 - 1.0, i as f64 / 60.0])
        .collect();
    Tensor::from_rows(&rows).unwrap()
}

fn offset_attribute(z: &Tensor, sign: f64) -> impl Fn(&Tensor) -> Result<Vec<Option<f64>>> + '_ {
    move |pts| {
        Ok((0..pts.rows())
            .map(|r| {
                let base = (pts.at(r, 1) * 60.0).round() as usize;
                Some(sign * (pts.at(r, 0) - z.at(base, 0)))
            })
            .collect())
    }
}

#[test]
fn correlation_planted_signs() {
    let z = tagged_latents();
    let v = [0.5, 0.0];
    let pos =
        attribute_correlation(&offset_attribute(&z, 1.0), &z, &v, 1000, &mut Rng::new(1)).unwrap();
    assert!((pos.r - 1.0).abs() < 1e-12);
    assert!(pos.retained >= MIN_RETAINED);
    assert_eq!(pos.retained + pos.discarded, 1000);
    let neg =
        attribute_correlation(&offset_attribute(&z, -1.0), &z, &v, 1000, &mut Rng::new(1)).unwrap();
    assert!((neg.r + 1.0).abs() < 1e-12);
}

#[test]
fn correlation_null_attribute() {
    let z = tagged_latents();
    let noise = |pts: &Tensor| -> Result<Vec<Option<f64>>> {
        Ok((0..pts.rows())
            .map(|r| {
                Some(
                    Rng::new(pts.at(r, 0).to_bits() ^ pts.at(r, 1).to_bits().rotate_left(17))
                        .uniform(),
                )
            })
            .collect())
    };
    let c = attribute_correlation(&noise, &z, &[0.5, 0.0], 1000, &mut Rng::new(2)).unwrap();
    assert!(c.r.abs() < 0.1, "r = {}", c.r);
}

#[test]
fn correlation_errors() {
    let z = tagged_latents();
    let undefined = |pts: &Tensor| -> Result<Vec<Option<f64>>> { Ok(vec![None; pts.rows()]) };
    assert!(attribute_correlation(&undefined, &z, &[0.5, 0.0], 1000, &mut Rng::new(3)).is_err());
    // every step leaves the range on the second axis
    let far = attribute_correlation(
        &offset_attribute(&z, 1.0),
        &z,
        &[0.0, 50.0],
        500,
        &mut Rng::new(3),
    );
    assert!(far.is_err());
    assert!(attribute_correlation(
        &offset_attribute(&z, 1.0),
        &z,
        &[0.5],
        500,
        &mut Rng::new(3)
    )
    .is_err());
}

#[test]
fn score_prediction_exact_and_random() {
    let mut rng = Rng::new(8);
    let (x, _) = crate::data::synth_toy_corpus(SequenceKind::Drum, 4, 32, &mut rng).unwrap();
    for i in 0..x.len() {
        let s = score_prediction(SequenceKind::Drum, x.sequence(i), x.sequence(i)).unwrap();
        assert_eq!(s.delta, 0.0);
        assert!(s.velocity_mse.is_none_or(|v| v == 0.0));
        assert!(s.offset_mse.is_none_or(|v| v == 0.0));
    }
    // random uniform hits against random binary targets over 1,000+ beats
    let n_s = 120;
    let d = SequenceKind::Drum.frame_dims();
    let mut pred = vec![0.0; n_s * d];
    let mut target = vec![0.0; n_s * d];
    for t in 0..n_s {
        for v in 0..DRUM_VOICES {
            pred[t * d + v] = rng.uniform();
            target[t * d + v] = if rng.bernoulli(0.3) { 1.0 } else { 0.0 };
        }
    }
    let s = score_prediction(SequenceKind::Drum, &pred, &target).unwrap();
    assert!((s.delta - 0.5).abs() < 0.05, "delta {}", s.delta);

    let (m, _) = crate::data::synth_toy_corpus(SequenceKind::Categorical, 2, 16, &mut rng).unwrap();
    let same = score_prediction(SequenceKind::Categorical, m.sequence(0), m.sequence(0)).unwrap();
    assert_eq!(same.delta, 0.0);
    assert!(same.velocity_mse.is_none());
    assert!(score_prediction(SequenceKind::Motion, &[0.0; 50], &[0.0; 50]).is_err());
    assert!(score_prediction(SequenceKind::Drum, &[0.0; 27], &[0.0; 54]).is_err());
}

#[test]
fn quality_degenerate_anchor_equals_reconstruction() {
    let mut rng = Rng::new(5);
    let (x, _) = crate::data::synth_toy_corpus(SequenceKind::Drum, 2, 8, &mut rng).unwrap();
    let mut data = x.clone();
    data.push(x.sequence(0)).unwrap();
    let model = FmVae::new(ModelConfig::tiny(SequenceKind::Drum, 3, 8, 2, 6), false, 9).unwrap();
    let split = DatasetSplit {
        train: vec![0, 1],
        validation: vec![],
        test: vec![2],
        policy: SplitPolicy::PercentileBand,
        band: Some((0.4, 0.6)),
    };
    let report = interp_quality(&model, &data, &[0.0, 1.0, 0.0], &split).unwrap();
    let recon = model.reconstruct(&x.select(&[0])).unwrap();
    let direct = score_prediction(SequenceKind::Drum, recon.sequence(0), x.sequence(0)).unwrap();
    assert_eq!(report.delta.mean, direct.delta);
    assert_eq!(report.samples.len(), 1);
    assert_eq!(report.protocol, QUALITY_PROTOCOL);

    let mut empty = split.clone();
    empty.test.clear();
    assert!(interp_quality(&model, &data, &[0.0, 1.0, 0.0], &empty).is_err());
    let mut one_sided = split;
    one_sided.train = vec![0];
    assert!(interp_quality(&model, &data, &[0.0, 1.0, 0.0], &one_sided).is_err());
}

#[test]
fn metric_stats_of_linear_maps() {
    let cfg = FlatnessConfig::default();
    let pts = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, -1.0], vec![0.3, 2.0]]).unwrap();
    let iso = metric_stats(
        &linear_map(vec![vec![2.0, 0.0], vec![0.0, 2.0], vec![0.0, 0.0]]),
        &pts,
        &cfg,
        &mut Rng::new(1),
    )
    .unwrap();
    assert!(iso.trace_cv < 1e-6);
    assert!(iso.off_diagonal < 1e-6);
    assert!((iso.c2 - 4.0).abs() < 1e-4);
    let shear = metric_stats(
        &linear_map(vec![vec![1.0, 1.0], vec![0.0, 1.0]]),
        &pts,
        &cfg,
        &mut Rng::new(1),
    )
    .unwrap();
    assert!(shear.off_diagonal > 0.1);
    let bend = FnMap(|z: &[f64]| Ok(vec![z[0] * z[0], z[1]]));
    let curved = metric_stats(&bend, &pts, &cfg, &mut Rng::new(1)).unwrap();
    assert!(curved.trace_cv > 0.1);
}

#[test]
fn distance_preservation_exact_for_scaled_isometry() {
    let f = linear_map(vec![vec![0.0, 3.0], vec![-3.0, 0.0]]);
    let pairs = vec![
        (vec![0.0, 0.0], vec![1.0, 2.0]),
        (vec![-1.0, 0.5], vec![2.0, 0.0]),
    ];
    let r = distance_preservation(&f, &pairs, 3.0, 5).unwrap();
    assert!(r.median < 1e-12);
    let wrong = distance_preservation(&f, &pairs, 1.5, 5).unwrap();
    assert!((wrong.median - 1.0).abs() < 1e-12);
    assert!(distance_preservation(&f, &[(vec![1.0], vec![1.0])], 1.0, 5).is_err());
    assert!(distance_preservation(&f, &pairs, 0.0, 5).is_err());
}

#[test]
fn median_and_cv() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    assert!(median(&[]).is_nan());
    assert!(coefficient_of_variation(&[2.0, 2.0, 2.0]).abs() < 1e-15);
    assert!((coefficient_of_variation(&[1.0, 3.0]) - 0.5).abs() < 1e-15);
}
