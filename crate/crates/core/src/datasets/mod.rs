//! Synthetic domain-shift data and simple file loaders.

mod io;

pub use io::{load_csv, load_idx, read_idx_images, read_idx_labels, write_csv, write_idx};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::divergence::{DomainTag, SampleSet};
use crate::error::{Error, Result};

/// Two interleaved half circles, `n / 2` points each, labels 0 (upper) and 1
/// (lower), with isotropic Gaussian noise of standard deviation `noise`.
pub fn gen_two_moons(n: usize, noise: f64, seed: u64) -> Result<SampleSet> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "two moons needs an even n >= 2, got {n}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise must be >= 0, got {noise}")));
    }
    let half = n / 2;
    let step = if half > 1 {
        std::f64::consts::PI / (half - 1) as f64
    } else {
        0.0
    };
    let mut rows: Vec<([f64; 2], usize)> = Vec::with_capacity(n);
    for i in 0..half {
        let t = i as f64 * step;
        rows.push(([t.cos(), t.sin()], 0));
    }
    for i in 0..half {
        let t = i as f64 * step;
        rows.push(([1.0 - t.cos(), 0.5 - t.sin()], 1));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.shuffle(&mut rng);
    if noise > 0.0 {
        let normal = Normal::new(0.0, noise).expect("valid std");
        for (point, _) in rows.iter_mut() {
            point[0] += normal.sample(&mut rng);
            point[1] += normal.sample(&mut rng);
        }
    }
    let labels = rows.iter().map(|(_, y)| *y).collect();
    let data = rows.iter().flat_map(|(p, _)| *p).collect();
    SampleSet::new(Tensor::new(n, 2, data)?, Some(labels), DomainTag::Source)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftKind {
    /// Rotation about the origin by `magnitude` degrees (2-d only).
    Rotation,
    /// Constant offset of norm `magnitude` along `direction`.
    Translation,
    /// Each class moved by `magnitude` along its own seeded random direction.
    ClassConditionalShift,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    pub kind: ShiftKind,
    pub magnitude: f64,
    /// Standard deviation of Gaussian noise added after the shift.
    #[serde(default)]
    pub noise: f64,
    /// Translation direction; defaults to the first axis. Normalized before use.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
}

impl ShiftSpec {
    pub fn rotation(degrees: f64) -> Self {
        ShiftSpec {
            kind: ShiftKind::Rotation,
            magnitude: degrees,
            noise: 0.0,
            direction: None,
        }
    }

    pub fn translation(offset: &[f64]) -> Self {
        let norm = offset.iter().map(|x| x * x).sum::<f64>().sqrt();
        ShiftSpec {
            kind: ShiftKind::Translation,
            magnitude: norm,
            noise: 0.0,
            direction: Some(offset.to_vec()),
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.magnitude.is_finite() {
            return Err(Error::InvalidArgument("shift magnitude must be finite".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "shift noise must be >= 0, got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidArgument("direction must be non-zero".into()));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Applies a domain shift; labels and sample count are preserved.
pub fn apply_shift(s: &SampleSet, spec: &ShiftSpec, seed: u64) -> Result<SampleSet> {
    spec.validate()?;
    let d = s.dim();
    let mut out = s.features().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec.kind {
        ShiftKind::Rotation => {
            if d != 2 {
                return Err(Error::InvalidArgument(format!(
                    "rotation needs 2-d samples, got d = {d}"
                )));
            }
            let (sin, cos) = spec.magnitude.to_radians().sin_cos();
            for r in 0..out.rows() {
                let row = out.row_mut(r);
                let (x, y) = (row[0], row[1]);
                row[0] = cos * x - sin * y;
                row[1] = sin * x + cos * y;
            }
        }
        ShiftKind::Translation => {
            let dir = match &spec.direction {
                Some(v) if v.len() == d => unit(v)?,
                Some(v) => {
                    return Err(Error::InvalidArgument(format!(
                        "direction has {} entries for d = {d}",
                        v.len()
                    )))
                }
                None => {
                    let mut e = vec![0.0; d];
                    e[0] = 1.0;
                    e
                }
            };
            let offset: Vec<f64> = dir.iter().map(|x| x * spec.magnitude).collect();
            for r in 0..out.rows() {
                for (v, o) in out.row_mut(r).iter_mut().zip(&offset) {
                    *v += o;
                }
            }
        }
        ShiftKind::ClassConditionalShift => {
            let labels = s
                .labels()
                .ok_or(Error::MissingLabels("class-conditional shift"))?;
            let classes = labels.iter().max().map_or(0, |m| m + 1);
            let mut offsets = Vec::with_capacity(classes);
            for _ in 0..classes {
                let raw: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let dir = unit(&raw)?;
                offsets.push(dir.iter().map(|x| x * spec.magnitude).collect::<Vec<_>>());
            }
            for (r, &y) in labels.iter().enumerate() {
                for (v, o) in out.row_mut(r).iter_mut().zip(&offsets[y]) {
                    *v += o;
                }
            }
        }
    }
    if spec.noise > 0.0 {
        let normal = Normal::new(0.0, spec.noise).expect("valid std");
        for v in out.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    s.with_features(out)
}

/// Per-feature mean and standard deviation (population).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(s: &SampleSet) -> Result<Self> {
        let n = s.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "standardization statistics need n >= 2, got {n}"
            )));
        }
        let x = s.features();
        let mean: Vec<f64> = x
            .sum_over_rows()
            .data()
            .iter()
            .map(|v| v / n as f64)
            .collect();
        let mut var = vec![0.0; s.dim()];
        for row in x.row_iter() {
            for ((acc, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n as f64).sqrt()).collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, s: &SampleSet) -> Result<SampleSet> {
        if self.mean.len() != s.dim() || self.std.len() != s.dim() {
            return Err(Error::Shape {
                op: "standardize",
                left: s.features().shape(),
                right: (1, self.mean.len()),
            });
        }
        let mut x = s.features().clone();
        for r in 0..x.rows() {
            for ((v, m), sd) in x.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v -= m;
                // Constant features are only centered.
                if *sd > 0.0 {
                    *v /= sd;
                }
            }
        }
        s.with_features(x)
    }
}

/// Standardizes with the given statistics, or with statistics fitted on `s`.
/// Target sets should reuse the source statistics.
pub fn standardize(
    s: &SampleSet,
    stats: Option<&Standardizer>,
) -> Result<(SampleSet, Standardizer)> {
    let stats = match stats {
        Some(st) => st.clone(),
        None => Standardizer::fit(s)?,
    };
    Ok((stats.apply(s)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moons_on_circles_without_noise() {
        let s = gen_two_moons(4, 0.0, 3).unwrap();
        let labels = s.labels().unwrap();
        for (row, &y) in s.features().row_iter().zip(labels) {
            let (cx, cy) = if y == 0 { (0.0, 0.0) } else { (1.0, 0.5) };
            let r = ((row[0] - cx).powi(2) + (row[1] - cy).powi(2)).sqrt();
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn moons_balanced_and_seeded() {
        let a = gen_two_moons(100, 0.1, 5).unwrap();
        let b = gen_two_moons(100, 0.1, 5).unwrap();
        assert_eq!(a, b);
        let ones = a.labels().unwrap().iter().filter(|&&y| y == 1).count();
        assert_eq!(ones, 50);
        assert!(gen_two_moons(7, 0.1, 0).is_err());
        assert_ne!(a, gen_two_moons(100, 0.1, 6).unwrap());
    }

    #[test]
    fn rotation_examples() {
        let s = gen_two_moons(20, 0.05, 1).unwrap();
        let same = apply_shift(&s, &ShiftSpec::rotation(0.0), 0).unwrap();
        assert_eq!(same, s);
        let half = ShiftSpec::rotation(180.0);
        let twice = apply_shift(&apply_shift(&s, &half, 0).unwrap(), &half, 0).unwrap();
        for (a, b) in twice.features().data().iter().zip(s.features().data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let wide = SampleSet::new(Tensor::zeros(2, 3), None, DomainTag::Target).unwrap();
        assert!(apply_shift(&wide, &ShiftSpec::rotation(10.0), 0).is_err());
    }

    #[test]
    fn translation_moves_first_coordinate() {
        let s = gen_two_moons(10, 0.1, 2).unwrap();
        let t = apply_shift(&s, &ShiftSpec::translation(&[1.0, 0.0]), 0).unwrap();
        for (a, b) in t.features().row_iter().zip(s.features().row_iter()) {
            assert_eq!(a[0], b[0] + 1.0);
            assert_eq!(a[1], b[1]);
        }
        assert_eq!(t.labels(), s.labels());
    }

    #[test]
    fn class_shift_keeps_labels_and_count() {
        let s = gen_two_moons(30, 0.1, 2).unwrap();
        let spec = ShiftSpec {
            kind: ShiftKind::ClassConditionalShift,
            magnitude: 0.5,
            noise: 0.01,
            direction: None,
        };
        let t = apply_shift(&s, &spec, 4).unwrap();
        assert_eq!(t.len(), s.len());
        assert_eq!(t.labels(), s.labels());
        assert_eq!(t, apply_shift(&s, &spec, 4).unwrap());
    }

    #[test]
    fn standardize_contracts() {
        let x = Tensor::from_rows(&[[1.0, 5.0], [3.0, 5.0], [8.0, 5.0]]).unwrap();
        let s = SampleSet::new(x, None, DomainTag::Source).unwrap();
        let (z, stats) = standardize(&s, None).unwrap();
        // constant column only centered
        assert!(z.features().row_iter().all(|r| r[1] == 0.0));
        assert_eq!(stats.std[1], 0.0);

        let (again, _) = standardize(&z, None).unwrap();
        for (a, b) in again.features().data().iter().zip(z.features().data()) {
            assert!((a - b).abs() < 1e-12);
        }

        let m = gen_two_moons(50, 0.2, 9).unwrap();
        let (once, st) = standardize(&m, None).unwrap();
        let (twice, _) = standardize(&m, Some(&st)).unwrap();
        assert_eq!(once, twice);

        let single = SampleSet::new(Tensor::zeros(1, 2), None, DomainTag::Source).unwrap();
        assert!(standardize(&single, None).is_err());
    }
}
