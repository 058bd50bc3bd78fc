use serde::{Deserialize, Serialize};

use super::{check_same_dim, sq_dist, FiniteDist};
use crate::error::{Error, Result};

/// Pairwise distance used inside the MDD expectations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairNorm {
    /// `‖a - b‖₂²`, the default form.
    #[default]
    SquaredL2,
    /// `‖a - b‖₁`.
    L1,
}

impl PairNorm {
    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            PairNorm::SquaredL2 => sq_dist(a, b),
            PairNorm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

fn expected_dist(a: &FiniteDist, b: &FiniteDist, norm: PairNorm) -> f64 {
    let mut total = 0.0;
    for (i, &pa) in a.probs().iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        let xa = a.points().row(i);
        for (j, &pb) in b.probs().iter().enumerate() {
            if pb == 0.0 {
                continue;
            }
            total += pa * pb * norm.dist(xa, b.points().row(j));
        }
    }
    total
}

/// Exact MDD between two finite distributions by double sums over supports.
pub fn mdd_population(p: &FiniteDist, q: &FiniteDist, norm: PairNorm) -> Result<f64> {
    check_same_dim("mdd_population", p.points(), q.points())?;
    Ok(expected_dist(p, q, norm) + expected_dist(p, p, norm) + expected_dist(q, q, norm))
}

fn check_alphabet(op: &'static str, p: &FiniteDist, q: &FiniteDist) -> Result<()> {
    if p.points() != q.points() {
        return Err(Error::Shape {
            op,
            left: p.points().shape(),
            right: q.points().shape(),
        });
    }
    Ok(())
}

/// Symmetric KL divergence `KL(P‖Q) + KL(Q‖P)`. Returns `f64::INFINITY` when
/// the supports differ.
pub fn jeffreys_kl(p: &FiniteDist, q: &FiniteDist) -> Result<f64> {
    check_alphabet("jeffreys_kl", p, q)?;
    let mut total = 0.0;
    for (&a, &b) in p.probs().iter().zip(q.probs()) {
        match (a > 0.0, b > 0.0) {
            (true, true) => total += (a - b) * (a / b).ln(),
            (false, false) => {}
            _ => return Ok(f64::INFINITY),
        }
    }
    // Each summand is non-negative in exact arithmetic.
    Ok(total.max(0.0))
}

/// `½ Σ |pᵢ - qᵢ|`.
pub fn total_variation(p: &FiniteDist, q: &FiniteDist) -> Result<f64> {
    check_alphabet("total_variation", p, q)?;
    let half: f64 = 0.5
        * p.probs()
            .iter()
            .zip(q.probs())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    Ok(half.min(1.0))
}
