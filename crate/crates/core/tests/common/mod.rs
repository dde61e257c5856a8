#![allow(dead_code)]

use std::path::PathBuf;

use fmvae::data::synth_toy_corpus;
use fmvae::jam::JamMessage;
use fmvae::model::FmVae;
use fmvae::seq::{ModelConfig, SequenceKind};
use fmvae::tensor::Rng;

pub const GOLDEN_MODEL_SEED: u64 = 7;
pub const GOLDEN_SERVER_SEED: u64 = 11;
pub const GOLDEN_SESSION: &str = "golden";

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/jam")
}

pub fn blessing() -> bool {
    std::env::var("FMJ_BLESS").is_ok_and(|v| v == "1")
}

/// Desk-scale drum model with seeded, untrained weights.
pub fn golden_model() -> FmVae {
    FmVae::new(
        ModelConfig::preset("desk-drum").unwrap(),
        true,
        GOLDEN_MODEL_SEED,
    )
    .unwrap()
}

pub fn golden_hello() -> JamMessage {
    JamMessage::Hello {
        session: Some(GOLDEN_SESSION.into()),
        seq: 0,
        timestamp_ms: 1_700_000_000_000,
        std: Some(0.5),
    }
}

/// Two bars from the synthetic drum corpus.
pub fn golden_bars() -> JamMessage {
    let (x, _) = synth_toy_corpus(SequenceKind::Drum, 1, 32, &mut Rng::new(2024)).unwrap();
    JamMessage::Bars {
        session: GOLDEN_SESSION.into(),
        seq: 1,
        timestamp_ms: 1_700_000_002_000,
        bars: x.frames_of(0),
        std: None,
    }
}

/// Read a fixture, or write `fresh` when blessing.
pub fn golden(name: &str, fresh: impl FnOnce() -> String) -> String {
    let path = fixture_dir().join(name);
    if blessing() {
        std::fs::create_dir_all(fixture_dir()).unwrap();
        std::fs::write(&path, fresh()).unwrap();
    }
    std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("missing fixture {}; rerun with FMJ_BLESS=1", path.display()))
}
