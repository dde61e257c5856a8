//! Train the desk-scale drum model on the toy corpus with the constrained
//! objective and the flatness term, then save a checkpoint.
//!
//! cargo run --release --example train_desk -- 300 /tmp/desk.fmv

use fmvae::data::synth_toy_corpus;
use fmvae::model::FmVae;
use fmvae::objective::{train, TrainConfig, TrainState};
use fmvae::seq::{ModelConfig, SequenceKind};
use fmvae::tensor::Rng;

fn main() -> fmvae::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);
    let out = args.next().unwrap_or_else(|| "/tmp/desk.fmv".into());

    let (data, _) = synth_toy_corpus(SequenceKind::Drum, 500, 32, &mut Rng::new(1))?;
    let cfg = TrainConfig {
        steps,
        ..TrainConfig::preset("desk-drum")?
    };
    let model = FmVae::new(ModelConfig::preset("desk-drum")?, cfg.use_vhp, cfg.seed)?;
    let mut state = TrainState::new(model, &cfg);
    train(&mut state, &data, &cfg, |_, r| {
        if r.step % 50 == 0 {
            println!(
                "step {:4}  C {:.4} (κ² {:.4})  F {:8.3}  FM {:.4}  λ {:.3e}",
                r.step,
                r.recon,
                cfg.kappa2(),
                r.kl,
                r.fm,
                r.lambda
            );
        }
        Ok(())
    })?;
    state.model.save(out.as_ref())?;
    println!("saved {out}");
    Ok(())
}
