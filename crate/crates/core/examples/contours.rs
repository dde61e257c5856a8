//! Trace an equal-output-distance contour around a posterior mean and
//! report its roundness; flatter decoders give rounder contours.
//!
//! cargo run --release --example contours -- /tmp/desk.fmv

use fmvae::analysis::{circle_directions, contour_distances, riemannian_length};
use fmvae::data::synth_toy_corpus;
use fmvae::model::FmVae;
use fmvae::seq::{ModelConfig, SequenceKind};
use fmvae::tensor::Rng;

fn main() -> fmvae::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(p) => FmVae::load(p.as_ref())?,
        None => FmVae::new(ModelConfig::preset("desk-drum")?, true, 0)?,
    };
    let (data, _) = synth_toy_corpus(SequenceKind::Drum, 8, 32, &mut Rng::new(4))?;
    let (mean, _) = model.posterior(&data)?;
    let center = mean.row_slice(0).to_vec();
    let dirs = circle_directions(center.len(), 16, 0.0);

    let radius = 0.5;
    let reference: Vec<f64> = center
        .iter()
        .zip(&dirs[0])
        .map(|(c, d)| c + radius * d)
        .collect();
    let target = riemannian_length(&model, &center, &reference, 16)?;
    let contour = contour_distances(&model, &center, &dirs, target, 20.0 * radius, 16)?;
    println!("target output length {target:.4}");
    for (k, r) in contour.radii.iter().enumerate() {
        let bar = "#".repeat((r / radius * 20.0).round().min(80.0) as usize);
        println!(
            "{:5.1}°  {r:.4}  {bar}",
            k as f64 * 360.0 / dirs.len() as f64
        );
    }
    println!("roundness (cv of radii) {:.4}", contour.roundness);
    Ok(())
}
