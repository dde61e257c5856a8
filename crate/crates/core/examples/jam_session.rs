//! Start a jam broker on a loopback port and play a short headless session
//! against it: each human bar gets a perturbed model answer.
//!
//! cargo run --release --example jam_session

use std::sync::Arc;

use fmvae::data::synth_toy_corpus;
use fmvae::jam::{serve, JamClient, JamMessage, ServeConfig};
use fmvae::model::FmVae;
use fmvae::seq::{ModelConfig, SequenceKind};
use fmvae::tensor::Rng;

fn main() -> fmvae::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(p) => FmVae::load(p.as_ref())?,
        None => FmVae::new(ModelConfig::preset("desk-drum")?, true, 0)?,
    };
    let cfg = ServeConfig {
        addr: "127.0.0.1:0".into(),
        ws_addr: Some("127.0.0.1:0".into()),
        ..ServeConfig::default()
    };
    let server = serve(Arc::new(model), &cfg)?;
    println!(
        "tcp {}  ws {:?}",
        server.local_addr(),
        server.ws_local_addr()
    );

    let mut client = JamClient::connect(server.local_addr())?;
    let ack = client.request(&JamMessage::Hello {
        session: Some("demo".into()),
        seq: 0,
        timestamp_ms: 0,
        std: Some(0.4),
    })?;
    println!("{}", ack.to_json());

    let (human, _) = synth_toy_corpus(SequenceKind::Drum, 4, 32, &mut Rng::new(12))?;
    for (seq, bars) in human.sequences().enumerate() {
        let msg = JamMessage::Bars {
            session: "demo".into(),
            seq: seq as u64 + 1,
            timestamp_ms: 1000 * (seq as u64 + 1),
            bars: bars.chunks(human.n_dims()).map(<[f64]>::to_vec).collect(),
            std: None,
        };
        match client.request(&msg)? {
            JamMessage::Response {
                latent3d,
                human_latent3d,
                ..
            } => println!(
                "bar {}: human {:?} -> model {:?}",
                seq + 1,
                round3(human_latent3d),
                round3(latent3d)
            ),
            other => println!("bar {}: {}", seq + 1, other.to_json()),
        }
    }
    drop(client);
    server.shutdown();
    Ok(())
}

fn round3(p: [f64; 3]) -> [f64; 3] {
    p.map(|v| (v * 1000.0).round() / 1000.0)
}
