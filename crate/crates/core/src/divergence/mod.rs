//! Maximum Density Divergence in its population, all-pairs and batch forms,
//! plus the reference divergences it is compared against.
//!
//! MDD between distributions `P` and `Q` is the sum of three expected squared
//! distances: across domains, and within each domain between a sample and an
//! independent copy:
//!
//! ```text
//! MDD(P, Q) = E‖Xs - Xt‖² + E‖Xs - Xs'‖² + E‖Xt - Xt'‖²
//! ```
//!
//! The first term pulls the domains together; the other two reward compact
//! domains. Note that the within-domain terms are positive for any
//! non-degenerate distribution, so `MDD(P, P) > 0` unless `P` is a point mass.

mod audit;
mod batch;
mod population;
mod sample;

pub use audit::{audit_pairs, lemma_audit, lemma_audit_with, AuditFamily, LemmaAuditReport};
pub use batch::{mdd_batch, mdd_batch_terms, same_label_pairs, MddTerms};
pub use population::{jeffreys_kl, mdd_population, total_variation, PairNorm};
pub use sample::{energy_distance, mdd_full, mmd_gaussian};

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Which domain a sample set was drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Source,
    Target,
}

impl DomainTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::Source => "source",
            DomainTag::Target => "target",
        }
    }
}

impl std::str::FromStr for DomainTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(DomainTag::Source),
            "target" => Ok(DomainTag::Target),
            other => Err(Error::InvalidArgument(format!(
                "unknown domain tag {other:?}"
            ))),
        }
    }
}

/// Row-vector samples with optional integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    features: Tensor,
    labels: Option<Vec<usize>>,
    domain: DomainTag,
}

impl SampleSet {
    pub fn new(features: Tensor, labels: Option<Vec<usize>>, domain: DomainTag) -> Result<Self> {
        if features.rows() == 0 || features.cols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "sample set needs at least one row and one column, got {:?}",
                features.shape()
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != features.rows() {
                return Err(Error::InvalidArgument(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    features.rows()
                )));
            }
        }
        Ok(SampleSet {
            features,
            labels,
            domain,
        })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn domain(&self) -> DomainTag {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn with_domain(mut self, domain: DomainTag) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_features(&self, features: Tensor) -> Result<Self> {
        SampleSet::new(features, self.labels.clone(), self.domain)
    }

    pub fn without_labels(&self) -> Self {
        SampleSet {
            features: self.features.clone(),
            labels: None,
            domain: self.domain,
        }
    }

    /// Subset of rows, labels included.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(indices)?;
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        SampleSet::new(features, labels, self.domain)
    }
}

/// A distribution over a finite alphabet, each symbol embedded as a point.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDist {
    probs: Vec<f64>,
    points: Tensor,
}

impl FiniteDist {
    pub fn new(probs: Vec<f64>, points: Tensor) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty probability vector".into()));
        }
        if probs.len() != points.rows() {
            return Err(Error::InvalidArgument(format!(
                "{} probabilities for {} points",
                probs.len(),
                points.rows()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidArgument(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        for i in 0..points.rows() {
            for j in 0..i {
                if points.row(i) == points.row(j) {
                    return Err(Error::InvalidArgument(format!(
                        "alphabet points {j} and {i} coincide"
                    )));
                }
            }
        }
        Ok(FiniteDist { probs, points })
    }

    /// Distribution over `probs.len()` symbols embedded as one-hot rows.
    pub fn one_hot(probs: Vec<f64>) -> Result<Self> {
        let k = probs.len();
        FiniteDist::new(probs, Tensor::identity(k))
    }

    /// All mass on `symbol` of a `k`-symbol one-hot alphabet.
    pub fn point_mass(k: usize, symbol: usize) -> Result<Self> {
        if symbol >= k {
            return Err(Error::InvalidArgument(format!(
                "symbol {symbol} outside alphabet of size {k}"
            )));
        }
        let mut probs = vec![0.0; k];
        probs[symbol] = 1.0;
        FiniteDist::one_hot(probs)
    }

    pub fn uniform(k: usize) -> Result<Self> {
        FiniteDist::one_hot(vec![1.0 / k as f64; k])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn points(&self) -> &Tensor {
        &self.points
    }

    pub fn support_size(&self) -> usize {
        self.probs.len()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn check_same_dim(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.cols() != b.cols() {
        return Err(Error::Shape {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}
