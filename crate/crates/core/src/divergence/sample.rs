use super::{check_same_dim, sq_dist, SampleSet};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

fn mean_pairwise(a: &Tensor, b: &Tensor, f: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let mut total = 0.0;
    for x in a.row_iter() {
        for y in b.row_iter() {
            total += f(x, y);
        }
    }
    total / (a.rows() * b.rows()) as f64
}

/// Orders a pair of sets so every symmetric statistic runs the same float
/// operations whichever way round it was called.
fn canonical<'a>(a: &'a Tensor, b: &'a Tensor) -> (&'a Tensor, &'a Tensor) {
    let key = |t: &Tensor| (t.rows(), t.cols());
    let order = key(a).cmp(&key(b)).then_with(|| {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if order.is_gt() {
        (b, a)
    } else {
        (a, b)
    }
}

fn check_pair(op: &'static str, s: &SampleSet, t: &SampleSet) -> Result<()> {
    if s.is_empty() || t.is_empty() {
        return Err(Error::EmptyReduction { op });
    }
    check_same_dim(op, s.features(), t.features())
}

/// All-pairs MDD between two sample sets. Independent copies are realized as
/// every ordered pair within a set, `i = j` included.
pub fn mdd_full(s: &SampleSet, t: &SampleSet) -> Result<f64> {
    check_pair("mdd_full", s, t)?;
    let (xs, xt) = canonical(s.features(), t.features());
    let cross = mean_pairwise(xs, xt, sq_dist);
    let intra_s = mean_pairwise(xs, xs, sq_dist);
    let intra_t = mean_pairwise(xt, xt, sq_dist);
    Ok(cross + intra_s + intra_t)
}

/// `2 E‖X - Y‖ - E‖X - X'‖ - E‖Y - Y'‖` over all pairs, unsquared norm.
pub fn energy_distance(s: &SampleSet, t: &SampleSet) -> Result<f64> {
    check_pair("energy_distance", s, t)?;
    let dist = |a: &[f64], b: &[f64]| sq_dist(a, b).sqrt();
    let (xs, xt) = canonical(s.features(), t.features());
    let value = 2.0 * mean_pairwise(xs, xt, dist) - mean_pairwise(xs, xs, dist)
        - mean_pairwise(xt, xt, dist);
    // Non-negative in exact arithmetic; clip rounding noise.
    Ok(value.max(0.0))
}

/// Biased (V-statistic) MMD² with a Gaussian kernel of the given bandwidth.
pub fn mmd_gaussian(s: &SampleSet, t: &SampleSet, bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive and finite, got {bandwidth}"
        )));
    }
    check_pair("mmd_gaussian", s, t)?;
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    let k = |a: &[f64], b: &[f64]| (-gamma * sq_dist(a, b)).exp();
    let (xs, xt) = canonical(s.features(), t.features());
    let value = mean_pairwise(xs, xs, k) + mean_pairwise(xt, xt, k) - 2.0 * mean_pairwise(xs, xt, k);
    Ok(value.max(0.0))
}
