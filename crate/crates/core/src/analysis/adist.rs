use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Settings of the domain classifier behind the proxy A-distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ADistanceConfig {
    pub seed: u64,
    /// Cap on full-batch gradient steps.
    pub max_iterations: usize,
    /// Training stops once every gradient component is below this.
    pub tol: f64,
    pub lr: f64,
    pub l2: f64,
}

impl Default for ADistanceConfig {
    fn default() -> Self {
        ADistanceConfig {
            seed: 0,
            max_iterations: 20_000,
            tol: 1e-6,
            lr: 0.5,
            l2: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ADistance {
    /// `2 (1 - 2 err)`, clamped to `[0, 2]`.
    pub value: f64,
    /// Held-out error of the domain classifier.
    pub error: f64,
}

pub fn a_distance_from_error(error: f64) -> f64 {
    (2.0 * (1.0 - 2.0 * error)).clamp(0.0, 2.0)
}

fn split(n: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let test = idx.split_off(n / 2);
    (idx, test)
}

/// Proxy A-distance between two feature sets.
///
/// A linear logistic classifier learns to tell source rows (label 1) from
/// target rows (label 0) on half of each domain and is scored on the other
/// half. Features are standardized with training-half statistics.
pub fn a_distance(source: &Tensor, target: &Tensor, config: &ADistanceConfig) -> Result<ADistance> {
    if source.cols() != target.cols() {
        return Err(Error::Shape {
            op: "a_distance",
            left: source.shape(),
            right: target.shape(),
        });
    }
    if source.rows() < 4 || target.rows() < 4 {
        return Err(Error::InvalidArgument(
            "a_distance needs at least four rows per domain".into(),
        ));
    }
    if !(source.is_finite() && target.is_finite()) {
        return Err(Error::NonFinite { op: "a_distance" });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (s_train, s_test) = split(source.rows(), &mut rng);
    let (t_train, t_test) = split(target.rows(), &mut rng);
    let rows = |idx: &[usize], m: &Tensor, y: f64| -> Vec<(Vec<f64>, f64)> {
        idx.iter().map(|&i| (m.row(i).to_vec(), y)).collect()
    };
    let mut train = rows(&s_train, source, 1.0);
    train.extend(rows(&t_train, target, 0.0));
    let mut test = rows(&s_test, source, 1.0);
    test.extend(rows(&t_test, target, 0.0));

    let d = source.cols();
    let n = train.len() as f64;
    let mut mean = vec![0.0; d];
    for (x, _) in &train {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    let mut std = vec![0.0; d];
    for (x, _) in &train {
        for ((s, v), m) in std.iter_mut().zip(x).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    let std: Vec<f64> = std
        .into_iter()
        .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
        .collect();
    let scale = |data: &mut Vec<(Vec<f64>, f64)>| {
        for (x, _) in data.iter_mut() {
            for ((v, m), s) in x.iter_mut().zip(&mean).zip(&std) {
                *v = (*v - m) / s;
            }
        }
    };
    scale(&mut train);
    scale(&mut test);

    let logit = |w: &[f64], b: f64, x: &[f64]| b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..config.max_iterations {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (x, y) in &train {
            let z = logit(&w, b, x);
            let p = 1.0 / (1.0 + (-z).exp());
            let r = (p - y) / n;
            gb += r;
            for (g, v) in gw.iter_mut().zip(x) {
                *g += r * v;
            }
        }
        let mut largest = gb.abs();
        for (wi, g) in w.iter_mut().zip(gw) {
            let g = g + config.l2 * *wi;
            largest = largest.max(g.abs());
            *wi -= config.lr * g;
        }
        b -= config.lr * gb;
        if largest < config.tol {
            break;
        }
    }
    let wrong = test
        .iter()
        .filter(|(x, y)| (logit(&w, b, x) > 0.0) != (*y == 1.0))
        .count();
    let error = wrong as f64 / test.len() as f64;
    Ok(ADistance {
        value: a_distance_from_error(error),
        error,
    })
}
