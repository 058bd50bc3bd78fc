use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// The three batch MDD terms as scalar tape nodes.
#[derive(Clone, Copy, Debug)]
pub struct MddTerms {
    /// `(1/n_b) Σᵢ ‖sᵢ - tᵢ‖²`, rows paired by position.
    pub inter: Var,
    /// Mean squared distance over same-label source pairs.
    pub source_intra: Var,
    /// Mean squared distance over same-pseudo-label target pairs.
    pub target_intra: Var,
}

impl MddTerms {
    pub fn as_array(&self) -> [Var; 3] {
        [self.inter, self.source_intra, self.target_intra]
    }
}

/// Unordered pairs `(i, j)`, `i < j`, sharing a label.
pub fn same_label_pairs(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] == labels[j] {
                left.push(i);
                right.push(j);
            }
        }
    }
    (left, right)
}

fn mean_sq_row_dist(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let diff = tape.sub(a, b)?;
    let sq = tape.square(diff)?;
    let per_row = tape.sum_rows(sq)?;
    tape.mean(per_row)
}

fn intra_term(tape: &mut Tape, feats: Var, labels: &[usize]) -> Result<Var> {
    let (left, right) = same_label_pairs(labels);
    if left.is_empty() {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let a = tape.select_rows(feats, &left)?;
    let b = tape.select_rows(feats, &right)?;
    mean_sq_row_dist(tape, a, b)
}

/// Builds the three batch MDD terms for `n_b` source and `n_b` target rows.
/// A within-domain term with no same-label pair is the constant 0.
pub fn mdd_batch_terms(
    tape: &mut Tape,
    source: Var,
    target: Var,
    source_labels: &[usize],
    target_labels: &[usize],
) -> Result<MddTerms> {
    let (ss, ts) = (tape.shape(source), tape.shape(target));
    if ss != ts {
        return Err(Error::Shape {
            op: "mdd_batch",
            left: ss,
            right: ts,
        });
    }
    if ss.0 == 0 {
        return Err(Error::EmptyReduction { op: "mdd_batch" });
    }
    for (labels, which) in [(source_labels, "source"), (target_labels, "target")] {
        if labels.len() != ss.0 {
            return Err(Error::InvalidArgument(format!(
                "mdd_batch: {} {which} labels for {} rows",
                labels.len(),
                ss.0
            )));
        }
    }
    Ok(MddTerms {
        inter: mean_sq_row_dist(tape, source, target)?,
        source_intra: intra_term(tape, source, source_labels)?,
        target_intra: intra_term(tape, target, target_labels)?,
    })
}

/// Batch MDD: the sum of the three [`MddTerms`].
pub fn mdd_batch(
    tape: &mut Tape,
    source: Var,
    target: Var,
    source_labels: &[usize],
    target_labels: &[usize],
) -> Result<Var> {
    let terms = mdd_batch_terms(tape, source, target, source_labels, target_labels)?;
    let partial = tape.add(terms.inter, terms.source_intra)?;
    tape.add(partial, terms.target_intra)
}
