//! Recurrent encoder and hierarchical conductor decoder.

mod batch;
mod decoder;
mod encoder;
mod layers;

pub use batch::{
    quantize_frame, SequenceBatch, SequenceKind, CATEGORICAL_CLASSES, DRUM_VOICES, MOTION_DIMS,
    NOTE_OFF, REST,
};
pub use decoder::{readout, DecodeOutput, DecoderNet, Feed};
pub use encoder::{EncoderNet, STD_FLOOR};
pub use layers::{GruCell, Linear};

use crate::error::{Error, Result};
use crate::kv::KvMap;

/// Network dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: SequenceKind,
    pub n_z: usize,
    pub n_s: usize,
    pub n_d: usize,
    pub bars: usize,
    pub enc_hidden: usize,
    pub enc_layers: usize,
    pub enc_fc: usize,
    pub cond_hidden: usize,
    pub dec_hidden: usize,
    /// Dimension of the hierarchical prior's auxiliary variable ζ.
    pub zeta_dim: usize,
    /// Width of the two hidden layers in each prior network.
    pub prior_hidden: usize,
}

impl ModelConfig {
    /// Full-size architecture for a named preset.
    pub fn preset(name: &str) -> Result<Self> {
        let (kind, n_z, n_s, bars, enc) = match name {
            "drum2" => (SequenceKind::Drum, 32, 32, 2, 512),
            "drum4" => (SequenceKind::Drum, 32, 64, 4, 1024),
            "piano" => (SequenceKind::Categorical, 64, 32, 2, 1024),
            "cello" => (SequenceKind::Categorical, 64, 64, 4, 1024),
            "motion" => (SequenceKind::Motion, 2, 32, 2, 1024),
            "desk-drum" => return Ok(Self::desk(SequenceKind::Drum, 4, 32, 2)),
            "desk-motion" => return Ok(Self::desk(SequenceKind::Motion, 2, 32, 2)),
            "desk-piano" => return Ok(Self::desk(SequenceKind::Categorical, 8, 32, 2)),
            other => return Err(Error::invalid(format!("unknown model preset `{other}`"))),
        };
        Ok(Self {
            kind,
            n_z,
            n_s,
            n_d: kind.frame_dims(),
            bars,
            enc_hidden: enc,
            enc_layers: 2,
            enc_fc: enc,
            cond_hidden: 512,
            dec_hidden: 512,
            zeta_dim: n_z,
            prior_hidden: 256,
        })
    }

    /// Small architecture for single-core runs.
    pub fn desk(kind: SequenceKind, n_z: usize, n_s: usize, bars: usize) -> Self {
        Self {
            kind,
            n_z,
            n_s,
            n_d: kind.frame_dims(),
            bars,
            enc_hidden: 24,
            enc_layers: 2,
            enc_fc: 24,
            cond_hidden: 24,
            dec_hidden: 32,
            zeta_dim: n_z,
            prior_hidden: 16,
        }
    }

    /// A very small stack for gradient checks.
    pub fn tiny(kind: SequenceKind, n_z: usize, n_s: usize, bars: usize, hidden: usize) -> Self {
        Self {
            enc_hidden: hidden,
            enc_fc: hidden,
            cond_hidden: hidden,
            dec_hidden: hidden,
            prior_hidden: hidden,
            ..Self::desk(kind, n_z, n_s, bars)
        }
    }

    pub fn steps_per_bar(&self) -> usize {
        self.n_s / self.bars
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("n_z", self.n_z),
            ("n_s", self.n_s),
            ("bars", self.bars),
            ("enc_hidden", self.enc_hidden),
            ("enc_layers", self.enc_layers),
            ("enc_fc", self.enc_fc),
            ("cond_hidden", self.cond_hidden),
            ("dec_hidden", self.dec_hidden),
            ("zeta_dim", self.zeta_dim),
            ("prior_hidden", self.prior_hidden),
        ];
        if let Some((k, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!(
                "model config: {k} must be positive"
            )));
        }
        if !self.n_s.is_multiple_of(self.bars) {
            return Err(Error::invalid(format!(
                "model config: n_s = {} is not divisible by bars = {}",
                self.n_s, self.bars
            )));
        }
        if self.n_d != self.kind.frame_dims() {
            return Err(Error::invalid(format!(
                "model config: n_d = {} but {} frames have {} values",
                self.n_d,
                self.kind,
                self.kind.frame_dims()
            )));
        }
        Ok(())
    }

    pub fn write_kv(&self, m: &mut KvMap) {
        m.set("kind", self.kind);
        m.set("n_z", self.n_z);
        m.set("n_s", self.n_s);
        m.set("n_d", self.n_d);
        m.set("bars", self.bars);
        m.set("enc_hidden", self.enc_hidden);
        m.set("enc_layers", self.enc_layers);
        m.set("enc_fc", self.enc_fc);
        m.set("cond_hidden", self.cond_hidden);
        m.set("dec_hidden", self.dec_hidden);
        m.set("zeta_dim", self.zeta_dim);
        m.set("prior_hidden", self.prior_hidden);
    }

    /// Overlay keys present in `m`. A changed `kind` resets `n_d` unless
    /// `n_d` is given explicitly.
    pub fn read_kv(&mut self, m: &KvMap) -> Result<()> {
        if let Some(kind) = m.get::<SequenceKind>("kind")? {
            self.kind = kind;
            self.n_d = kind.frame_dims();
        }
        m.read_into("n_z", &mut self.n_z)?;
        m.read_into("n_s", &mut self.n_s)?;
        m.read_into("n_d", &mut self.n_d)?;
        m.read_into("bars", &mut self.bars)?;
        m.read_into("enc_hidden", &mut self.enc_hidden)?;
        m.read_into("enc_layers", &mut self.enc_layers)?;
        m.read_into("enc_fc", &mut self.enc_fc)?;
        m.read_into("cond_hidden", &mut self.cond_hidden)?;
        m.read_into("dec_hidden", &mut self.dec_hidden)?;
        m.read_into("zeta_dim", &mut self.zeta_dim)?;
        m.read_into("prior_hidden", &mut self.prior_hidden)?;
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        self.write_kv(&mut m);
        m
    }

    pub fn from_kv(m: &KvMap) -> Result<Self> {
        let base = m.raw("preset").unwrap_or("desk-drum");
        let mut cfg = Self::preset(base)?;
        cfg.read_kv(m)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
