use crate::error::{Error, Result};
use crate::seq::{SequenceBatch, SequenceKind, DRUM_VOICES};
use crate::tensor::{Graph, Tensor, Var};

/// Reconstruction cost `C_θ` and its parts, each a `1×1` node.
#[derive(Clone, Debug)]
pub struct ReconTerms {
    pub total: Var,
    pub parts: Vec<(&'static str, Var)>,
}

/// `C_θ(x, z)` from raw decoder outputs (one `batch × n_d` node per step).
///
/// * drum: mean over batch, steps and voices of the hit cross-entropy plus
///   velocity and offset squared errors at target hits;
/// * categorical: mean cross-entropy per frame;
/// * motion: mean squared error.
pub fn recon_terms(
    g: &mut Graph,
    x: &SequenceBatch,
    kind: SequenceKind,
    steps: &[Var],
) -> Result<ReconTerms> {
    if x.kind() != kind {
        return Err(Error::invalid(format!(
            "recon_terms: target is {} but outputs are {kind}",
            x.kind()
        )));
    }
    if steps.len() != x.n_steps() {
        return Err(Error::shape(
            "recon_terms",
            format!(
                "{} output steps for {} target steps",
                steps.len(),
                x.n_steps()
            ),
        ));
    }
    let b = x.len();
    for &s in steps {
        let v = g.value(s);
        if v.rows() != b || v.cols() != x.n_dims() {
            return Err(Error::shape(
                "recon_terms",
                format!(
                    "output step {:?}, expected [{b}, {}]",
                    v.shape(),
                    x.n_dims()
                ),
            ));
        }
    }
    // stack steps: (n_s · batch) × n_d, step-major
    let out = g.concat_rows(steps);
    let mut target = Vec::with_capacity(b * x.seq_len());
    for t in 0..x.n_steps() {
        target.extend_from_slice(x.step_tensor(t).data());
    }
    let rows = b * x.n_steps();
    let target = Tensor::matrix(rows, x.n_dims(), target)?;

    match kind {
        SequenceKind::Drum => {
            let count = (rows * DRUM_VOICES) as f64;
            let hits = column_block(&target, 0);
            let tv = column_block(&target, DRUM_VOICES);
            let to = column_block(&target, 2 * DRUM_VOICES);
            let y = g.constant(hits);
            let logits = g.slice_cols(out, 0, DRUM_VOICES);
            // softplus(l) - y·l = -[y log σ(l) + (1-y) log(1-σ(l))]
            let sp = g.softplus(logits);
            let yl = g.mul(y, logits);
            let bce = g.sub(sp, yl);
            let bce_sum = g.sum(bce);
            let hit_term = g.scale(bce_sum, 1.0 / count);

            let vel = g.slice_cols(out, DRUM_VOICES, DRUM_VOICES);
            let vel_term = masked_sq(g, vel, tv, y, count);
            let off = g.slice_cols(out, 2 * DRUM_VOICES, DRUM_VOICES);
            let off_term = masked_sq(g, off, to, y, count);

            let s = g.add(hit_term, vel_term);
            let total = g.add(s, off_term);
            Ok(ReconTerms {
                total,
                parts: vec![
                    ("hits", hit_term),
                    ("velocity", vel_term),
                    ("offset", off_term),
                ],
            })
        }
        SequenceKind::Categorical => {
            let y = g.constant(target);
            let ls = g.log_softmax_rows(out);
            let picked = g.mul(y, ls);
            let s = g.sum(picked);
            let total = g.scale(s, -1.0 / rows as f64);
            Ok(ReconTerms {
                total,
                parts: vec![("cross_entropy", total)],
            })
        }
        SequenceKind::Motion => {
            let y = g.constant(target);
            let d = g.sub(out, y);
            let sq = g.square(d);
            let total = g.mean(sq);
            Ok(ReconTerms {
                total,
                parts: vec![("squared_error", total)],
            })
        }
    }
}

fn column_block(t: &Tensor, start: usize) -> Tensor {
    let rows = t.rows();
    let data = (0..rows)
        .flat_map(|r| t.row_slice(r)[start..start + DRUM_VOICES].to_vec())
        .collect();
    Tensor::matrix(rows, DRUM_VOICES, data).expect("column block")
}

fn masked_sq(g: &mut Graph, pred: Var, target: Tensor, mask: Var, count: f64) -> Var {
    let t = g.constant(target);
    let d = g.sub(pred, t);
    let sq = g.square(d);
    let m = g.mul(sq, mask);
    let s = g.sum(m);
    g.scale(s, 1.0 / count)
}
