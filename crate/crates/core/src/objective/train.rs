use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{kl_iw_bound, lambda_update, recon_terms, Adam};
use crate::error::{Error, Result};
use crate::flatness::{fm_graph, FlatnessConfig};
use crate::kv::KvMap;
use crate::model::FmVae;
use crate::seq::{Feed, SequenceBatch};
use crate::tensor::{gaussian_reparam, Graph, Rng};

/// Objective and optimizer hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub kappa: f64,
    pub nu: f64,
    pub k_iw: usize,
    pub eta: f64,
    pub lr: f64,
    pub lr_decay: f64,
    /// Steps before λ starts moving.
    pub warmup: usize,
    pub batch_size: usize,
    pub steps: usize,
    /// Global gradient-norm clip; `0` disables.
    pub grad_clip: f64,
    /// Ceiling on λ; `inf` leaves it unbounded.
    pub lambda_max: f64,
    pub use_vhp: bool,
    pub flat: FlatnessConfig,
    pub seed: u64,
}

impl TrainConfig {
    /// Objective settings for a named preset.
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self {
            kappa: 0.14,
            nu: 1.0,
            k_iw: 8,
            eta: 6000.0,
            lr: 5e-4,
            lr_decay: 0.999,
            warmup: 100,
            batch_size: 64,
            steps: 20_000,
            grad_clip: 0.0,
            lambda_max: f64::INFINITY,
            use_vhp: true,
            flat: FlatnessConfig::default(),
            seed: 0,
        };
        Ok(match name {
            "drum2" => base,
            "drum4" => Self {
                kappa: 0.15,
                k_iw: 16,
                eta: 2500.0,
                ..base
            },
            "piano" => Self {
                kappa: 0.03,
                eta: 2000.0,
                ..base
            },
            "cello" => Self {
                kappa: 0.06,
                eta: 2000.0,
                ..base
            },
            "motion" => Self {
                kappa: 0.08,
                eta: 8000.0,
                ..base
            },
            "desk-drum" => Self {
                kappa: 0.14,
                eta: 150_000.0,
                lr: 3e-3,
                lr_decay: 0.9995,
                batch_size: 32,
                steps: 2000,
                grad_clip: 5.0,
                lambda_max: 1e4,
                ..base
            },
            "desk-motion" => Self {
                kappa: 0.08,
                nu: 50.0,
                eta: 50.0,
                lr: 3e-3,
                lr_decay: 0.9995,
                batch_size: 32,
                steps: 1500,
                grad_clip: 5.0,
                lambda_max: 1e4,
                ..base
            },
            "desk-piano" => Self {
                kappa: 0.5,
                eta: 5.0,
                lr: 3e-3,
                lr_decay: 0.9995,
                batch_size: 32,
                steps: 1500,
                grad_clip: 5.0,
                lambda_max: 1e4,
                ..base
            },
            other => return Err(Error::invalid(format!("unknown training preset `{other}`"))),
        })
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa * self.kappa
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::invalid("kappa must be positive"));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::invalid("eta must be non-negative"));
        }
        if self.k_iw < 1 {
            return Err(Error::invalid("K must be at least 1"));
        }
        if !(self.nu > 0.0) {
            return Err(Error::invalid("nu must be positive"));
        }
        if !(self.lr > 0.0) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid("lr must be positive and lr_decay in (0, 1]"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch_size must be at least 2"));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(Error::invalid("grad_clip must be non-negative"));
        }
        if !(self.lambda_max > 0.0) {
            return Err(Error::invalid("lambda_max must be positive"));
        }
        self.flat.validate()
    }

    pub fn write_kv(&self, m: &mut KvMap) {
        m.set("kappa", self.kappa);
        m.set("nu", self.nu);
        m.set("k_iw", self.k_iw);
        m.set("eta", self.eta);
        m.set("lr", self.lr);
        m.set("lr_decay", self.lr_decay);
        m.set("warmup", self.warmup);
        m.set("batch_size", self.batch_size);
        m.set("steps", self.steps);
        m.set("grad_clip", self.grad_clip);
        m.set("lambda_max", self.lambda_max);
        m.set("use_vhp", self.use_vhp);
        m.set("seed", self.seed);
        self.flat.write_kv(m);
    }

    pub fn read_kv(&mut self, m: &KvMap) -> Result<()> {
        m.read_into("kappa", &mut self.kappa)?;
        m.read_into("nu", &mut self.nu)?;
        m.read_into("k_iw", &mut self.k_iw)?;
        m.read_into("eta", &mut self.eta)?;
        m.read_into("lr", &mut self.lr)?;
        m.read_into("lr_decay", &mut self.lr_decay)?;
        m.read_into("warmup", &mut self.warmup)?;
        m.read_into("batch_size", &mut self.batch_size)?;
        m.read_into("steps", &mut self.steps)?;
        m.read_into("grad_clip", &mut self.grad_clip)?;
        m.read_into("lambda_max", &mut self.lambda_max)?;
        m.read_into("use_vhp", &mut self.use_vhp)?;
        m.read_into("seed", &mut self.seed)?;
        self.flat.read_kv(m)
    }
}

/// One training step's diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: usize,
    /// Batch mean of `C_θ`.
    pub recon: f64,
    /// KL bound `F`.
    pub kl: f64,
    /// Flat-manifold penalty (0 when `η = 0`).
    pub fm: f64,
    /// `F + λ (C - κ²) + η FM`.
    pub total: f64,
    /// Multiplier used in this step.
    pub lambda: f64,
    pub c2: f64,
    pub recon_parts: BTreeMap<String, f64>,
    pub grad_norm: f64,
}

/// Everything that changes during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: FmVae,
    pub lambda: f64,
    pub adam: Adam,
    pub step: usize,
    pub rng: Rng,
    data_rng: Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl TrainState {
    pub fn new(model: FmVae, cfg: &TrainConfig) -> Self {
        let adam = Adam::new(model.store(), cfg.lr, cfg.lr_decay);
        let root = Rng::new(cfg.seed);
        Self {
            model,
            lambda: 1.0,
            adam,
            step: 0,
            rng: root.stream("train"),
            data_rng: root.stream("data"),
            order: Vec::new(),
            cursor: 0,
        }
    }

    /// Next minibatch from a reshuffled pass over `data`.
    pub fn next_batch(&mut self, data: &SequenceBatch, size: usize) -> SequenceBatch {
        let n = data.len();
        let size = size.min(n);
        let mut idx = Vec::with_capacity(size);
        while idx.len() < size {
            if self.cursor >= self.order.len() || self.order.len() != n {
                self.order = self.data_rng.permutation(n);
                self.cursor = 0;
            }
            idx.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        data.select(&idx)
    }

    /// One gradient step on the full objective. On error (including a
    /// non-finite loss or gradient) the state is left untouched.
    pub fn train_step(&mut self, batch: &SequenceBatch, cfg: &TrainConfig) -> Result<LossReport> {
        if batch.len() < 2 {
            return Err(Error::invalid(
                "train_step: batch must contain at least two sequences",
            ));
        }
        let mut rng = self.rng.clone();
        let model = &self.model;
        let store = model.store();
        let kind = model.config().kind;
        let mut g = Graph::new();

        let q = model.encoder().encode(&mut g, store, batch)?;
        let z = gaussian_reparam(&mut g, q, &mut rng)?;
        let out = model
            .decoder()
            .decode(&mut g, store, z, Feed::Teacher(batch))?;
        let recon = recon_terms(&mut g, batch, kind, &out.steps)?;
        let kl = kl_iw_bound(&mut g, store, z, q, model.prior(), cfg.k_iw, &mut rng)?;

        let shifted = g.add_scalar(recon.total, -cfg.kappa2());
        let weighted = g.scale(shifted, self.lambda);
        let mut total = g.add(kl, weighted);
        let (fm_value, c2) = if cfg.eta > 0.0 {
            let zt = g.value(z).clone();
            let fm = fm_graph(&mut g, store, model.decoder(), &zt, &cfg.flat, &mut rng)?;
            let scaled = g.scale(fm.loss, cfg.eta);
            total = g.add(total, scaled);
            (g.scalar(fm.loss), fm.c2)
        } else {
            (0.0, 0.0)
        };
        g.check()?;
        let grads = g.backward(total)?;
        let mut dense = grads.dense(store);
        let norm = dense
            .iter()
            .flat_map(|t| t.data().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                op: "gradient",
                node: total.index(),
            });
        }
        if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
            let k = cfg.grad_clip / norm;
            for t in &mut dense {
                t.data_mut().iter_mut().for_each(|v| *v *= k);
            }
        }

        let c_batch = g.scalar(recon.total);
        let report = LossReport {
            step: self.step,
            recon: c_batch,
            kl: g.scalar(kl),
            fm: fm_value,
            total: g.scalar(total),
            lambda: self.lambda,
            c2,
            recon_parts: recon
                .parts
                .iter()
                .map(|(k, v)| (k.to_string(), g.scalar(*v)))
                .collect(),
            grad_norm: norm,
        };

        // commit
        let mut adam = self.adam.clone();
        let mut store = store.clone();
        adam.step(&mut store, &dense)?;
        if !store.all_finite() {
            return Err(Error::invalid(
                "train_step: update produced non-finite parameters",
            ));
        }
        *self.model.store_mut() = store;
        self.adam = adam;
        if self.step >= cfg.warmup {
            self.lambda =
                lambda_update(self.lambda, c_batch, cfg.kappa2(), cfg.nu).min(cfg.lambda_max);
        }
        self.step += 1;
        self.rng = rng;
        Ok(report)
    }
}

/// Run `cfg.steps` steps over minibatches of `data`, calling `on_step` after each.
pub fn train(
    state: &mut TrainState,
    data: &SequenceBatch,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&TrainState, &LossReport) -> Result<()>,
) -> Result<Vec<LossReport>> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::invalid("training needs at least two sequences"));
    }
    let mut reports = Vec::with_capacity(cfg.steps);
    while state.step < cfg.steps {
        let batch = state.next_batch(data, cfg.batch_size);
        let r = state.train_step(&batch, cfg)?;
        on_step(state, &r)?;
        reports.push(r);
    }
    Ok(reports)
}

/// Append one JSON object per report.
pub fn write_log(w: &mut impl Write, report: &LossReport) -> Result<()> {
    serde_json::to_writer(&mut *w, report)?;
    w.write_all(b"\n")?;
    Ok(())
}
