use super::batch::{SequenceKind, DRUM_VOICES};
use super::layers::{GruCell, Linear};
use super::{ModelConfig, SequenceBatch};
use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamStore, Rng, Tensor, Var};

/// What the low-level decoder consumes as the previous frame.
pub enum Feed<'a> {
    /// Ground-truth frames (training).
    Teacher(&'a SequenceBatch),
    /// The model's own deterministic readout, kept on the tape.
    Readout,
    /// A sample drawn from the emitted distribution.
    Sample(&'a mut Rng),
}

#[derive(Clone, Debug)]
pub struct DecodeOutput {
    /// Raw output parameters per step, each `batch × n_d`: hit logits,
    /// velocities and offsets for drums; class logits for categorical
    /// frames; values for motion.
    pub steps: Vec<Var>,
    /// Conductor hidden state for each bar.
    pub conductor: Vec<Var>,
    /// Frames fed back at each step (teacher, readout or sample).
    pub fed: Vec<Var>,
}

/// Hierarchical decoder: a conductor GRU advances once per bar and seeds
/// a low-level GRU that emits the bar's frames.
#[derive(Clone, Debug)]
pub struct DecoderNet {
    z_to_conductor: Linear,
    conductor: GruCell,
    conductor_to_low: Linear,
    low: GruCell,
    out: Linear,
    kind: SequenceKind,
    n_z: usize,
    bars: usize,
    steps_per_bar: usize,
    cond_hidden: usize,
}

/// Deterministic readout of raw output parameters.
pub fn readout(g: &mut Graph, kind: SequenceKind, raw: Var) -> Var {
    match kind {
        SequenceKind::Drum => {
            let logits = g.slice_cols(raw, 0, DRUM_VOICES);
            let probs = g.sigmoid(logits);
            let rest = g.slice_cols(raw, DRUM_VOICES, 2 * DRUM_VOICES);
            g.concat_cols(&[probs, rest])
        }
        SequenceKind::Categorical => {
            let ls = g.log_softmax_rows(raw);
            g.exp(ls)
        }
        SequenceKind::Motion => raw,
    }
}

fn sample_frames(kind: SequenceKind, readout: &Tensor, rng: &mut Rng) -> Tensor {
    let (b, d) = (readout.rows(), readout.cols());
    let mut out = vec![0.0; b * d];
    for i in 0..b {
        let row = readout.row_slice(i);
        let o = &mut out[i * d..(i + 1) * d];
        match kind {
            SequenceKind::Drum => {
                for v in 0..DRUM_VOICES {
                    if rng.bernoulli(row[v]) {
                        o[v] = 1.0;
                        o[DRUM_VOICES + v] = row[DRUM_VOICES + v].clamp(0.0, 1.0);
                        o[2 * DRUM_VOICES + v] = row[2 * DRUM_VOICES + v].clamp(-0.5, 0.5);
                    }
                }
            }
            SequenceKind::Categorical => {
                let u = rng.uniform();
                let mut acc = 0.0;
                let mut pick = d - 1;
                for (c, p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = c;
                        break;
                    }
                }
                o[pick] = 1.0;
            }
            SequenceKind::Motion => o.copy_from_slice(row),
        }
    }
    Tensor::matrix(b, d, out).expect("sample layout")
}

impl DecoderNet {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let z_to_conductor = Linear::new(store, "dec.z_to_cond", cfg.n_z, cfg.cond_hidden, rng);
        let conductor = GruCell::new(store, "dec.conductor", cfg.n_z, cfg.cond_hidden, rng);
        let conductor_to_low = Linear::new(
            store,
            "dec.cond_to_low",
            cfg.cond_hidden,
            cfg.dec_hidden,
            rng,
        );
        let low = GruCell::new(
            store,
            "dec.low",
            cfg.cond_hidden + cfg.n_d,
            cfg.dec_hidden,
            rng,
        );
        let out = Linear::new(store, "dec.out", cfg.dec_hidden, cfg.n_d, rng);
        Self {
            z_to_conductor,
            conductor,
            conductor_to_low,
            low,
            out,
            kind: cfg.kind,
            n_z: cfg.n_z,
            bars: cfg.bars,
            steps_per_bar: cfg.n_s / cfg.bars,
            cond_hidden: cfg.cond_hidden,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.bars * self.steps_per_bar
    }

    pub fn n_out(&self) -> usize {
        self.n_steps() * self.kind.frame_dims()
    }

    /// Run the decoder from latent codes `z` (`batch × n_z`).
    pub fn decode(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        z: Var,
        mut feed: Feed<'_>,
    ) -> Result<DecodeOutput> {
        let zv = g.value(z);
        if zv.cols() != self.n_z {
            return Err(Error::shape(
                "decode",
                format!("z has {} dims, expected {}", zv.cols(), self.n_z),
            ));
        }
        let b = zv.rows();
        if let Feed::Teacher(t) = &feed {
            if t.n_steps() != self.n_steps() || t.kind() != self.kind || t.len() != b {
                return Err(Error::shape(
                    "decode",
                    format!(
                        "teacher is {} × {} {} frames, expected {} × {} {}",
                        t.len(),
                        t.n_steps(),
                        t.kind(),
                        b,
                        self.n_steps(),
                        self.kind
                    ),
                ));
            }
        }
        let d = self.kind.frame_dims();
        let h0 = self.z_to_conductor.forward(g, store, z);
        let mut hc = g.tanh(h0);
        let mut prev = g.constant(Tensor::zeros(&[b, d]));
        let mut steps = Vec::with_capacity(self.n_steps());
        let mut conductor = Vec::with_capacity(self.bars);
        let mut fed = Vec::with_capacity(self.n_steps());
        for bar in 0..self.bars {
            hc = self.conductor.step(g, store, z, hc)?;
            conductor.push(hc);
            let hl = self.conductor_to_low.forward(g, store, hc);
            let mut hl = g.tanh(hl);
            for s in 0..self.steps_per_bar {
                let t = bar * self.steps_per_bar + s;
                fed.push(prev);
                let x = g.concat_cols(&[hc, prev]);
                hl = self.low.step(g, store, x, hl)?;
                let raw = self.out.forward(g, store, hl);
                steps.push(raw);
                prev = match &mut feed {
                    Feed::Teacher(batch) => g.constant(batch.step_tensor(t)),
                    Feed::Readout => readout(g, self.kind, raw),
                    Feed::Sample(rng) => {
                        let r = readout(g, self.kind, raw);
                        let frames = sample_frames(self.kind, g.value(r), rng);
                        g.constant(frames)
                    }
                };
            }
        }
        g.check()?;
        Ok(DecodeOutput {
            steps,
            conductor,
            fed,
        })
    }

    /// `f(z)`: the flattened deterministic readout, `batch × (n_s · n_d)`,
    /// with the readout fed back autoregressively.
    pub fn decode_map(&self, g: &mut Graph, store: &ParamStore, z: Var) -> Result<Var> {
        let out = self.decode(g, store, z, Feed::Readout)?;
        // fed[t] is the readout of step t - 1
        let mut reads: Vec<Var> = out.fed[1..].to_vec();
        let last = *out.steps.last().expect("at least one step");
        reads.push(readout(g, self.kind, last));
        Ok(g.concat_cols(&reads))
    }

    pub fn cond_hidden(&self) -> usize {
        self.cond_hidden
    }
}
