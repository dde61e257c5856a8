//! Interpolate between two encoded grooves with lerp and slerp, print the
//! decoded kick/snare/hat lanes and the path smoothness.
//!
//! cargo run --release --example interpolation -- /tmp/desk.fmv

use fmvae::analysis::{hamming_smoothness, interpolate, riemannian_length, Interp};
use fmvae::data::synth_toy_corpus;
use fmvae::model::FmVae;
use fmvae::seq::{ModelConfig, SequenceKind};
use fmvae::tensor::Rng;

fn lane(seq: &[f64], dims: usize, voice: usize) -> String {
    seq.chunks(dims)
        .map(|f| if f[voice] > 0.5 { 'x' } else { '.' })
        .collect()
}

fn main() -> fmvae::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(p) => FmVae::load(p.as_ref())?,
        None => FmVae::new(ModelConfig::preset("desk-drum")?, true, 0)?,
    };
    let (data, families) = synth_toy_corpus(SequenceKind::Drum, 40, 32, &mut Rng::new(9))?;
    let (mean, _) = model.posterior(&data)?;
    let a = 0;
    let b = families.iter().position(|f| *f != families[0]).unwrap_or(1);
    println!("{:?} -> {:?}", families[a], families[b]);

    let kind = model.config().kind;
    for interp in [Interp::Linear, Interp::Slerp] {
        let path = interpolate(interp, mean.row_slice(a), mean.row_slice(b), 5)?;
        let decoded = model.generate(&path.to_tensor())?;
        println!("\n{interp}:");
        for (k, seq) in decoded.sequences().enumerate() {
            println!(
                "  {k}  kick {}  snare {}",
                lane(seq, decoded.n_dims(), 0),
                lane(seq, decoded.n_dims(), 1)
            );
        }
        let smooth = hamming_smoothness(&decoded, &kind.binary_channels())?;
        let length = riemannian_length(&model, mean.row_slice(a), mean.row_slice(b), 16)?;
        println!("  max Hamming step {smooth}, decoder path length {length:.3}");
    }
    Ok(())
}
