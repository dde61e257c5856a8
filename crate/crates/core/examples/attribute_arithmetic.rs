//! Build a density attribute vector from posterior means and measure how
//! well moving along it controls the decoded density.
//!
//! cargo run --release --example attribute_arithmetic -- /tmp/desk.fmv

use fmvae::analysis::{attribute_correlation, attribute_vector, model_attribute};
use fmvae::data::{attribute_values, synth_toy_corpus, Attribute};
use fmvae::model::FmVae;
use fmvae::seq::{ModelConfig, SequenceKind};
use fmvae::tensor::Rng;

fn main() -> fmvae::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(p) => FmVae::load(p.as_ref())?,
        None => FmVae::new(ModelConfig::preset("desk-drum")?, true, 0)?,
    };
    let mut rng = Rng::new(5);
    let (data, _) = synth_toy_corpus(SequenceKind::Drum, 300, 32, &mut rng)?;
    let (mean, _) = model.posterior(&data)?;
    let density = attribute_values(&data, Attribute::Density)?;

    let v = attribute_vector(&mean, &density, "density")?;
    let length = v.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    println!("density vector: |v| = {length:.3}");

    let attr = model_attribute(&model, Attribute::Density);
    let corr = attribute_correlation(&attr, &mean, &v.direction, 400, &mut rng)?;
    println!(
        "correlation r = {:.3} over {} decodes ({} discarded)",
        corr.r, corr.retained, corr.discarded
    );
    Ok(())
}
