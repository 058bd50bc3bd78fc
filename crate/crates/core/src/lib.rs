//! Maximum Density Divergence (MDD) and Adversarial Tight Match (ATM) for
//! unsupervised domain adaptation, at desk scale.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`diffcore`] | dense matrices and a reverse-mode gradient tape |
//! | [`divergence`] | population, all-pairs and batch MDD, plus energy distance, Gaussian MMD, Jeffreys and total variation |
//! | [`models`] | feature learner, softmax predictor, gradient reversal, multilinear conditioning, discriminator |
//! | [`trainer`] | half-and-half sampling, pseudo-labels, SGD with momentum, the training loop |
//! | [`datasets`] | two moons, domain shifts, CSV and IDX loaders, standardization |
//! | [`analysis`] | target accuracy, proxy A-distance, intra-MDD ablation grid, feature export |
//!
//! The training objective is
//!
//! ```text
//! min_F max_D  CE(source) + lambda * (E log D(h_s) + E log(1 - D(h_t))) + alpha * L_mdd
//! ```
//!
//! realized as a single backward pass through a gradient-reversal stage in
//! front of the discriminator.

pub mod analysis;
pub mod datasets;
pub mod diffcore;
pub mod divergence;
pub mod error;
pub mod models;
pub mod trainer;

pub use diffcore::{grad_check, Tape, Tensor, Var};
pub use divergence::{DomainTag, FiniteDist, SampleSet};
pub use error::{Error, Result};
pub use models::{AtmModel, ModelConfig};
pub use trainer::{MetricsLog, TrainConfig};

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}
