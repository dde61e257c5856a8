//! Generate a synthetic drum corpus, inspect its families and attributes,
//! and round-trip it through the JSONL and binary formats.
//!
//! cargo run --example toy_corpus -- 200

use std::collections::BTreeMap;

use fmvae::data::{
    attribute_values, load_binary, load_sequences, save_binary, save_sequences, synth_toy_corpus,
    Attribute,
};
use fmvae::seq::SequenceKind;
use fmvae::tensor::Rng;

fn main() -> fmvae::Result<()> {
    let n = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(200);
    let (data, families) = synth_toy_corpus(SequenceKind::Drum, n, 32, &mut Rng::new(1))?;

    let mut counts = BTreeMap::new();
    for f in &families {
        *counts.entry(format!("{f:?}")).or_insert(0) += 1;
    }
    println!(
        "{} sequences of {} steps x {} dims",
        data.len(),
        data.n_steps(),
        data.n_dims()
    );
    println!("families: {counts:?}");

    for attr in [Attribute::Density, Attribute::Velocity] {
        let v = attribute_values(&data, attr)?;
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let (lo, hi) = v
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(*x), b.max(*x)));
        println!(
            "{:>9}: mean {mean:.3} range [{lo:.3}, {hi:.3}]",
            attr.as_str()
        );
    }

    let dir = std::env::temp_dir().join("fmvae-toy-corpus");
    std::fs::create_dir_all(&dir)?;
    let (jsonl, bin) = (dir.join("data.jsonl"), dir.join("data.bin"));
    save_sequences(&jsonl, &data)?;
    save_binary(&bin, &data)?;
    assert_eq!(load_sequences(&jsonl, SequenceKind::Drum)?, data);
    assert_eq!(load_binary(&bin)?, data);
    println!("round-tripped through {}", dir.display());
    Ok(())
}
