//! Compare the three Jacobian estimators on a decoder and report the
//! induced metric tensor at a few latent points.
//!
//! cargo run --release --example jacobian_geometry

use fmvae::analysis::{metric_stats, posterior_samples};
use fmvae::data::synth_toy_corpus;
use fmvae::flatness::{jacobian_fd, jacobian_rand, metric_tensor, FlatnessConfig};
use fmvae::model::FmVae;
use fmvae::seq::{ModelConfig, SequenceKind};
use fmvae::tensor::Rng;

fn main() -> fmvae::Result<()> {
    let mut rng = Rng::new(3);
    let (data, _) = synth_toy_corpus(SequenceKind::Drum, 64, 32, &mut rng)?;
    let model = FmVae::new(ModelConfig::preset("desk-drum")?, true, 0)?;
    let z = posterior_samples(&model, &data, 8, &mut rng)?;

    let point = z.row_slice(0);
    let exact = jacobian_fd(&model, point, 1e-5)?;
    let approx = jacobian_rand(&model, point, 1e-4, 4000, &mut rng)?;
    let diff = exact
        .matrix
        .data()
        .iter()
        .zip(approx.matrix.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm = exact
        .matrix
        .data()
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt();
    println!(
        "Jacobian {}x{}: random estimator relative error {:.3}",
        exact.matrix.rows(),
        exact.matrix.cols(),
        diff / norm
    );

    let g = metric_tensor(&exact);
    println!(
        "G at z0: trace {:.4}, off-diagonal ratio {:.3}",
        g.trace(),
        g.off_diagonal_ratio()
    );
    println!(
        "eigenvalues {:?}",
        g.eigenvalues()
            .iter()
            .map(|e| format!("{e:.3e}"))
            .collect::<Vec<_>>()
    );

    let stats = metric_stats(&model, &z, &FlatnessConfig::default(), &mut rng)?;
    println!(
        "over {} posterior samples: trace cv {:.3}, off-diagonal {:.3}, c² {:.4}",
        stats.traces.len(),
        stats.trace_cv,
        stats.off_diagonal,
        stats.c2
    );
    Ok(())
}
