//! The assembled model: encoder, decoder and prior sharing one parameter store.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flatness::LatentMap;
use crate::kv::KvMap;
use crate::objective::{HierarchicalPrior, Prior};
use crate::seq::{DecoderNet, EncoderNet, Feed, ModelConfig, SequenceBatch};
use crate::tensor::{load_checkpoint, save_checkpoint, Graph, ParamStore, Rng, Tensor};

#[derive(Clone, Debug)]
pub struct FmVae {
    config: ModelConfig,
    store: ParamStore,
    encoder: EncoderNet,
    decoder: DecoderNet,
    prior: Prior,
}

/// Path of the configuration written next to a checkpoint.
pub fn config_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".cfg");
    PathBuf::from(s)
}

impl FmVae {
    /// Fresh parameters. `use_vhp = false` gives the standard-normal prior.
    pub fn new(config: ModelConfig, use_vhp: bool, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed).stream("init");
        let mut store = ParamStore::new();
        let encoder = EncoderNet::new(&mut store, &config, &mut rng);
        let decoder = DecoderNet::new(&mut store, &config, &mut rng);
        let prior = if use_vhp {
            Prior::Hierarchical(HierarchicalPrior::new(
                &mut store,
                config.n_z,
                config.zeta_dim,
                config.prior_hidden,
                &mut rng,
            ))
        } else {
            Prior::StandardNormal
        };
        Ok(Self {
            config,
            store,
            encoder,
            decoder,
            prior,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn encoder(&self) -> &EncoderNet {
        &self.encoder
    }

    pub fn decoder(&self) -> &DecoderNet {
        &self.decoder
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn uses_vhp(&self) -> bool {
        matches!(self.prior, Prior::Hierarchical(_))
    }

    /// Posterior mean and std, each `batch × n_z`.
    pub fn posterior(&self, x: &SequenceBatch) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let q = self.encoder.encode(&mut g, &self.store, x)?;
        Ok((g.value(q.mean).clone(), g.value(q.std).clone()))
    }

    /// `f(z)` for each row of `z`: `batch × (n_s · n_d)` readouts.
    pub fn decode_rows(&self, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let f = self.decoder.decode_map(&mut g, &self.store, zv)?;
        Ok(g.value(f).clone())
    }

    /// Deterministic decode quantized to valid frames.
    pub fn generate(&self, z: &Tensor) -> Result<SequenceBatch> {
        let f = self.decode_rows(z)?;
        SequenceBatch::from_readout(self.config.kind, self.config.n_s, f.data())
    }

    /// Decode with sampled feedback; returns the fed-back frames.
    pub fn sample(&self, z: &Tensor, rng: &mut Rng) -> Result<SequenceBatch> {
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let out = self
            .decoder
            .decode(&mut g, &self.store, zv, Feed::Sample(rng))?;
        // fed[t] is the sample drawn after step t - 1; draw the final frame too
        let last = *out.steps.last().expect("non-empty");
        let r = crate::seq::readout(&mut g, self.config.kind, last);
        let mut frames: Vec<Tensor> = out.fed[1..].iter().map(|&v| g.value(v).clone()).collect();
        let mut tail = g.value(r).clone();
        let d = self.config.n_d;
        for row in tail.data_mut().chunks_mut(d) {
            crate::seq::quantize_frame(self.config.kind, row);
        }
        frames.push(tail);
        let b = z.rows();
        let mut data = Vec::with_capacity(b * self.config.n_s * d);
        for i in 0..b {
            for f in &frames {
                data.extend_from_slice(f.row_slice(i));
            }
        }
        SequenceBatch::from_raw(self.config.kind, self.config.n_s, data)
    }

    /// Decode of the posterior mean, quantized.
    pub fn reconstruct(&self, x: &SequenceBatch) -> Result<SequenceBatch> {
        let (mean, _) = self.posterior(x)?;
        self.generate(&mean)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut m = self.config.to_kv();
        m.set("use_vhp", self.uses_vhp());
        m
    }

    /// Write the checkpoint to `path` and the configuration to `path.cfg`.
    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, self.store.entries())?;
        std::fs::write(config_sidecar(path), self.to_kv().render())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let kv = KvMap::load(&config_sidecar(path))?;
        let mut cfg = ModelConfig::preset("desk-drum")?;
        cfg.read_kv(&kv)?;
        let use_vhp = kv.get::<bool>("use_vhp")?.unwrap_or(true);
        Self::load_with(path, cfg, use_vhp)
    }

    /// Load parameters into a model of the given shape.
    pub fn load_with(path: &Path, config: ModelConfig, use_vhp: bool) -> Result<Self> {
        let mut model = Self::new(config, use_vhp, 0)?;
        let entries = load_checkpoint(path)?;
        if entries.len() != model.store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                entries.len(),
                model.store.len()
            )));
        }
        for (name, t) in entries {
            let id = model
                .store
                .find(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor `{name}`")))?;
            if model.store.get(id).shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    t.shape(),
                    model.store.get(id).shape()
                )));
            }
            *model.store.get_mut(id) = t;
        }
        Ok(model)
    }
}

impl LatentMap for FmVae {
    fn eval_rows(&self, z: &Tensor) -> Result<Tensor> {
        self.decode_rows(z)
    }
}
