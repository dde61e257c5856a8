use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{map_midi_hits, DrumMapping};
use crate::error::{Error, Result};
use crate::seq::{SequenceBatch, SequenceKind};
use crate::tensor::{load_checkpoint, save_checkpoint, Tensor};

#[derive(Serialize, Deserialize)]
struct Record {
    kind: SequenceKind,
    frames: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    meta: serde_json::Value,
}

/// One JSON object per line: `{"kind", "frames", "meta"}`.
pub fn save_sequences(path: &Path, x: &SequenceBatch) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    for i in 0..x.len() {
        let rec = Record {
            kind: x.kind(),
            frames: x.frames_of(i),
            meta: serde_json::json!({ "index": i }),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Load a JSONL sequence file. Blank lines are skipped. Every record must
/// have `kind`, a consistent frame count and valid frames.
pub fn load_sequences(path: &Path, kind: SequenceKind) -> Result<SequenceBatch> {
    let file = fs::File::open(path)?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut out: Option<SequenceBatch> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(no, e.to_string()))?;
        if rec.kind != kind {
            return Err(parse_err(
                no,
                format!("record kind {} does not match {kind}", rec.kind),
            ));
        }
        if rec.frames.is_empty() {
            return Err(parse_err(no, "record has no frames".into()));
        }
        for (t, f) in rec.frames.iter().enumerate() {
            kind.check_frame(f)
                .map_err(|m| parse_err(no, format!("frame {t}: {m}")))?;
        }
        let batch = out.get_or_insert_with(|| SequenceBatch::empty(kind, rec.frames.len()));
        if rec.frames.len() != batch.n_steps() {
            return Err(parse_err(
                no,
                format!(
                    "{} frames, earlier records have {}",
                    rec.frames.len(),
                    batch.n_steps()
                ),
            ));
        }
        batch.push(&rec.frames.concat())?;
    }
    Ok(out.unwrap_or_else(|| SequenceBatch::empty(kind, 0)))
}

/// Packed mirror in the checkpoint container: one entry named after the
/// kind with shape `[count, n_steps, n_dims]`.
pub fn save_binary(path: &Path, x: &SequenceBatch) -> Result<()> {
    let t = Tensor::new(vec![x.len(), x.n_steps(), x.n_dims()], x.data().to_vec())?;
    save_checkpoint(path, [(x.kind().as_str(), &t)])
}

pub fn load_binary(path: &Path) -> Result<SequenceBatch> {
    let mut entries = load_checkpoint(path)?;
    if entries.len() != 1 {
        return Err(Error::Checkpoint(format!(
            "sequence file holds {} entries, expected 1",
            entries.len()
        )));
    }
    let (name, t) = entries.pop().expect("one entry");
    let kind: SequenceKind = name.parse()?;
    let shape = t.shape().to_vec();
    if shape.len() != 3 || shape[2] != kind.frame_dims() {
        return Err(Error::Checkpoint(format!(
            "sequence tensor has shape {shape:?} for kind {kind}"
        )));
    }
    if shape[0] == 0 {
        return Ok(SequenceBatch::empty(kind, shape[1]));
    }
    SequenceBatch::new(kind, shape[1], t.into_data())
}

/// One MIDI drum event on the step grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MidiHit {
    pub step: usize,
    pub pitch: u8,
    pub velocity: u8,
    pub offset_ticks: i32,
}

/// Import drum events from CSV with header `step,pitch,velocity,offset_ticks`.
/// Global steps are cut into sequences of `n_steps`; returns the batch and
/// the number of events with unmapped pitches.
pub fn load_midi_csv(
    path: &Path,
    n_steps: usize,
    ticks_per_step: f64,
    mapping: &DrumMapping,
) -> Result<(SequenceBatch, usize)> {
    if n_steps == 0 || !(ticks_per_step > 0.0) {
        return Err(Error::invalid(
            "load_midi_csv: n_steps and ticks_per_step must be positive",
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
    let mut events = Vec::new();
    for rec in reader.deserialize::<MidiHit>() {
        let hit = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        events.push(hit);
    }
    let n_seq = events
        .iter()
        .map(|e| e.step / n_steps + 1)
        .max()
        .unwrap_or(0);
    let mut buckets = vec![Vec::new(); n_seq];
    for e in events {
        buckets[e.step / n_steps].push(MidiHit {
            step: e.step % n_steps,
            ..e
        });
    }
    let mut batch = SequenceBatch::empty(SequenceKind::Drum, n_steps);
    let mut dropped = 0;
    for b in buckets {
        let m = map_midi_hits(&b, n_steps, ticks_per_step, mapping);
        dropped += m.dropped;
        batch.push(&m.frames.concat())?;
    }
    Ok((batch, dropped))
}
