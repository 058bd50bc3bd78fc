//! Reference implementations written straight from the formulas, sharing no
//! code with the library beyond plain data types.

#![allow(dead_code)]

use atm::datasets::{apply_shift, gen_two_moons, ShiftSpec};
use atm::trainer::{objective_gradients, Batch};
use atm::{AtmModel, DomainTag, ModelConfig, SampleSet, Tensor, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

pub fn tensor(rows: &[Vec<f64>]) -> Tensor {
    let d = rows[0].len();
    Tensor::new(rows.len(), d, rows.concat()).unwrap()
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        let diff = a[k] - b[k];
        s += diff * diff;
    }
    s
}

/// All-pairs MDD: cross mean plus both within-set means over ordered pairs.
pub fn mdd_full_oracle(s: &[Vec<f64>], t: &[Vec<f64>]) -> f64 {
    let mean_over = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        let mut total = 0.0;
        for x in a {
            for y in b {
                for k in 0..x.len() {
                    total += (x[k] - y[k]) * (x[k] - y[k]);
                }
            }
        }
        total / (a.len() * b.len()) as f64
    };
    mean_over(s, t) + mean_over(s, s) + mean_over(t, t)
}

/// The three batch MDD terms by direct summation: row-aligned cross pairs,
/// then same-label unordered pairs within each domain.
pub fn mdd_batch_oracle(
    sf: &[Vec<f64>],
    tf: &[Vec<f64>],
    ys: &[usize],
    yt: &[usize],
) -> [f64; 3] {
    let n = sf.len();
    let inter = (0..n).map(|i| sq(&sf[i], &tf[i])).sum::<f64>() / n as f64;
    let intra = |f: &[Vec<f64>], y: &[usize]| {
        let mut total = 0.0;
        let mut m = 0usize;
        for i in 0..n {
            for j in i + 1..n {
                if y[i] == y[j] {
                    total += sq(&f[i], &f[j]);
                    m += 1;
                }
            }
        }
        if m == 0 {
            0.0
        } else {
            total / m as f64
        }
    };
    [inter, intra(sf, ys), intra(tf, yt)]
}

type Mat = Vec<Vec<f64>>;

fn to_mat(t: &Tensor) -> Mat {
    t.row_iter().map(|r| r.to_vec()).collect()
}

fn affine(x: &Mat, w: &Tensor, b: &Tensor) -> Mat {
    x.iter()
        .map(|row| {
            (0..w.cols())
                .map(|j| {
                    let mut acc = b.data()[j];
                    for (i, v) in row.iter().enumerate() {
                        acc += v * w.data()[i * w.cols() + j];
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn relu(x: Mat) -> Mat {
    x.into_iter()
        .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
        .collect()
}

fn softmax(x: Mat) -> Mat {
    x.into_iter()
        .map(|r| {
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = r.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = e.iter().sum();
            e.into_iter().map(|v| v / z).collect()
        })
        .collect()
}

/// Everything the objective holds fixed during differentiation.
pub struct Frozen {
    pub source_weights: Vec<f64>,
    pub target_weights: Vec<f64>,
    pub pseudo_labels: Vec<usize>,
}

pub struct Evaluated {
    pub cls: f64,
    pub dom: f64,
    pub mdd: [f64; 3],
    pub frozen: Frozen,
}

/// Forward pass of the full objective from a flat parameter list in
/// checkpoint order: feature layers, predictor, three discriminator layers.
/// With `frozen = None` the entropy weights and pseudo-labels are computed
/// from the current predictions and returned.
pub fn objective_oracle(
    params: &[Tensor],
    xs: &Tensor,
    ys: &[usize],
    xt: &Tensor,
    frozen: Option<&Frozen>,
) -> Evaluated {
    let n_feature_layers = (params.len() - 8) / 2;
    let features = |x: &Tensor| {
        let mut h = to_mat(x);
        for l in 0..n_feature_layers {
            h = relu(affine(&h, &params[2 * l], &params[2 * l + 1]));
        }
        h
    };
    let p_at = 2 * n_feature_layers;
    let (fs, ft) = (features(xs), features(xt));
    let ps = softmax(affine(&fs, &params[p_at], &params[p_at + 1]));
    let pt = softmax(affine(&ft, &params[p_at], &params[p_at + 1]));

    let n = ys.len() as f64;
    let cls = -ys
        .iter()
        .enumerate()
        .map(|(i, &y)| ps[i][y].max(1e-12).ln())
        .sum::<f64>()
        / n;

    let weights = |p: &Mat| {
        let raw: Vec<f64> = p
            .iter()
            .map(|r| {
                let h: f64 = -r.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>();
                1.0 + (-h).exp()
            })
            .collect();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        raw.into_iter().map(|w| w / mean).collect::<Vec<f64>>()
    };
    let argmax = |p: &Mat| {
        p.iter()
            .map(|r| {
                let mut best = 0;
                for (k, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = k;
                    }
                }
                best
            })
            .collect::<Vec<usize>>()
    };
    let frozen = match frozen {
        Some(f) => Frozen {
            source_weights: f.source_weights.clone(),
            target_weights: f.target_weights.clone(),
            pseudo_labels: f.pseudo_labels.clone(),
        },
        None => Frozen {
            source_weights: weights(&ps),
            target_weights: weights(&pt),
            pseudo_labels: argmax(&pt),
        },
    };

    let d_at = p_at + 2;
    let disc = |f: &Mat, p: &Mat| -> Vec<f64> {
        let h: Mat = f
            .iter()
            .zip(p)
            .map(|(fr, pr)| fr.iter().flat_map(|a| pr.iter().map(move |b| a * b)).collect())
            .collect();
        let a = relu(affine(&h, &params[d_at], &params[d_at + 1]));
        let a = relu(affine(&a, &params[d_at + 2], &params[d_at + 3]));
        let z = affine(&a, &params[d_at + 4], &params[d_at + 5]);
        z.iter()
            .map(|r| (1.0 / (1.0 + (-r[0]).exp())).clamp(1e-7, 1.0 - 1e-7))
            .collect()
    };
    let ds = disc(&fs, &ps);
    let dt = disc(&ft, &pt);
    let src = ds
        .iter()
        .zip(&frozen.source_weights)
        .map(|(d, w)| w * d.ln())
        .sum::<f64>()
        / ds.len() as f64;
    let tgt = dt
        .iter()
        .zip(&frozen.target_weights)
        .map(|(d, w)| w * (1.0 - d).ln())
        .sum::<f64>()
        / dt.len() as f64;

    let mdd = mdd_batch_oracle(&fs, &ft, ys, &frozen.pseudo_labels);
    Evaluated {
        cls,
        dom: src + tgt,
        mdd,
        frozen,
    }
}

pub fn masked_total(e: &Evaluated, lambda: f64, alpha: f64, mask: [bool; 3]) -> f64 {
    let mdd: f64 = e
        .mdd
        .iter()
        .zip(mask)
        .filter(|(_, on)| *on)
        .map(|(v, _)| v)
        .sum();
    e.cls + lambda * e.dom + alpha * mdd
}

/// Two-moons source and the same generator, redrawn and rotated 35 degrees,
/// as target.
pub fn two_moons_task(seed: u64) -> (SampleSet, SampleSet) {
    let source = gen_two_moons(1000, 0.1, seed).unwrap();
    let target = gen_two_moons(1000, 0.1, seed + 100).unwrap();
    let target = apply_shift(&target, &ShiftSpec::rotation(35.0), seed)
        .unwrap()
        .with_domain(DomainTag::Target);
    (source, target)
}

/// The two-moons run used by the adaptation criteria.
pub fn two_moons_configs(seed: u64) -> (ModelConfig, TrainConfig) {
    let train = TrainConfig {
        seed,
        max_epochs: 300,
        ..TrainConfig::default()
    };
    assert_eq!(train.alpha, 0.01);
    (ModelConfig::default(), train)
}

/// Tiny model with random biases. Zero biases put rows with all-zero inputs
/// exactly on a ReLU kink, where difference quotients say nothing.
pub fn tiny_model(seed: u64) -> AtmModel {
    let cfg = ModelConfig {
        hidden: vec![5],
        feature_dim: 4,
        classes: 2,
        disc_hidden: 6,
    };
    let mut m = AtmModel::new(3, &cfg, seed).unwrap();
    m.grl_coeff = 1.0;
    let mut r = rng(seed + 1000);
    for (i, p) in m.params_mut().into_iter().enumerate() {
        if i % 2 == 1 {
            for v in p.data_mut() {
                *v = r.random_range(-0.5..0.5);
            }
        }
    }
    m
}

pub fn tiny_batch(seed: u64) -> Batch {
    let mut r = rng(seed);
    Batch {
        xs: tensor(&random_rows(&mut r, 4, 3)),
        ys: random_labels(&mut r, 4, 2),
        xt: tensor(&random_rows(&mut r, 4, 3)),
        yt: None,
    }
}

/// Largest `|analytic - numeric| / max(1, |analytic|)` over every parameter
/// entry, with the numeric side from central differences of the reference
/// objective. Discriminator gradients are compared against the negated
/// difference quotient, since the discriminator ascends the domain term.
pub fn worst_gradient_error(model: &AtmModel, batch: &Batch, config: &TrainConfig) -> f64 {
    let (stats, grads) = objective_gradients(model, batch, config).unwrap();
    let params: Vec<Tensor> = model.params().into_iter().cloned().collect();
    let base = objective_oracle(&params, &batch.xs, &batch.ys, &batch.xt, None);
    let reference = masked_total(&base, config.lambda, config.alpha, config.term_mask);
    assert!((reference - stats.total_loss).abs() < 1e-12);

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (pi, grad) in grads.iter().enumerate() {
        let sign = if model.is_discriminator_param(pi) { -1.0 } else { 1.0 };
        for k in 0..grad.len() {
            let eval = |delta: f64| {
                let mut p = params.clone();
                p[pi].data_mut()[k] += delta;
                let e = objective_oracle(&p, &batch.xs, &batch.ys, &batch.xt, Some(&base.frozen));
                masked_total(&e, config.lambda, config.alpha, config.term_mask)
            };
            let numeric = sign * (eval(h) - eval(-h)) / (2.0 * h);
            let analytic = grad.data()[k];
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(1.0));
        }
    }
    worst
}

