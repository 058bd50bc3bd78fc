//! Training loop for the adversarial tight match objective.

mod metrics;
mod sampler;
mod sgd;

pub use metrics::{MetricsLog, MetricsRow, METRICS_HEADER};
pub use sampler::{half_half_sampler, BatchIndices, HalfHalfSampler};
pub use sgd::{sgd_update, SgdState};

use serde::{Deserialize, Serialize};

use crate::diffcore::{Tape, Tensor};
use crate::divergence::{mdd_batch_terms, SampleSet};
use crate::error::{Error, Result};
use crate::models::{adversarial_loss, AtmModel, ModelConfig};

/// Learning-rate annealing `lr0 * (1 + gamma * progress)^(-beta)`, with
/// `progress` running from 0 to 1 over the whole run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrDecay {
    pub gamma: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the batch MDD loss.
    pub alpha: f64,
    /// Weight of the adversarial domain term.
    pub lambda: f64,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Rows per step, half source and half target. Must be even.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Which of the inter, source-intra and target-intra MDD terms enter the
    /// loss.
    pub term_mask: [bool; 3],
    /// Gradient reversal strength. 0 turns off adaptation through the
    /// discriminator.
    pub grl_coeff: f64,
    /// Ramp the reversal strength as `2 / (1 + exp(-10 p)) - 1` over the run.
    pub grl_ramp: bool,
    pub lr_decay: Option<LrDecay>,
    /// Stop once `total_loss` moved less than `converge_tol` between each of
    /// the last `converge_window` epochs. A window of 0 disables the check.
    pub converge_tol: f64,
    pub converge_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.01,
            lambda: 1.0,
            lr: 0.02,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 32,
            max_epochs: 300,
            seed: 0,
            term_mask: [true; 3],
            grl_coeff: 1.0,
            grl_ramp: true,
            lr_decay: None,
            converge_tol: 1e-6,
            converge_window: 10,
        }
    }
}

impl TrainConfig {
    /// Plain source training: no MDD loss and no adversarial gradient reaching
    /// the feature learner.
    pub fn source_only(&self) -> Self {
        TrainConfig {
            alpha: 0.0,
            grl_coeff: 0.0,
            term_mask: [false; 3],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.alpha) {
            return bad("alpha must be finite and >= 0");
        }
        if !finite_nonneg(self.lambda) {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr must be finite and > 0");
        }
        if !(finite_nonneg(self.momentum) && self.momentum < 1.0) {
            return bad("momentum must be in [0, 1)");
        }
        if !finite_nonneg(self.weight_decay) {
            return bad("weight_decay must be finite and >= 0");
        }
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return bad("batch_size must be even and >= 2");
        }
        if !finite_nonneg(self.grl_coeff) {
            return bad("grl_coeff must be finite and >= 0");
        }
        if let Some(d) = self.lr_decay {
            if !(finite_nonneg(d.gamma) && finite_nonneg(d.beta)) {
                return bad("lr_decay gamma and beta must be finite and >= 0");
            }
        }
        if !finite_nonneg(self.converge_tol) {
            return bad("converge_tol must be finite and >= 0");
        }
        Ok(())
    }

    /// Rows per domain in each step.
    pub fn rows_per_domain(&self) -> usize {
        self.batch_size / 2
    }

    pub fn lr_at(&self, progress: f64) -> f64 {
        match self.lr_decay {
            Some(d) => self.lr * (1.0 + d.gamma * progress).powf(-d.beta),
            None => self.lr,
        }
    }

    pub fn grl_at(&self, progress: f64) -> f64 {
        if self.grl_ramp {
            self.grl_coeff * (2.0 / (1.0 + (-10.0 * progress).exp()) - 1.0)
        } else {
            self.grl_coeff
        }
    }
}

/// Argmax of the current predictor on target rows, ties to the lowest class.
pub fn pseudo_label(model: &AtmModel, target: &Tensor) -> Result<Vec<usize>> {
    model.predict_labels(target)
}

/// One source batch and one target batch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub xs: Tensor,
    pub ys: Vec<usize>,
    pub xt: Tensor,
    /// True target labels, used only to score pseudo-labels.
    pub yt: Option<Vec<usize>>,
}

impl Batch {
    pub fn gather(source: &SampleSet, target: &SampleSet, idx: &BatchIndices) -> Result<Self> {
        let ys = source.labels().ok_or(Error::MissingLabels("source"))?;
        Ok(Batch {
            xs: source.features().select_rows(&idx.source)?,
            ys: idx.source.iter().map(|&i| ys[i]).collect(),
            xt: target.features().select_rows(&idx.target)?,
            yt: target
                .labels()
                .map(|yt| idx.target.iter().map(|&i| yt[i]).collect()),
        })
    }
}

/// Scalars from one optimization step, measured before the update.
#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    pub cls_loss: f64,
    pub dom_loss: f64,
    /// Batch MDD over the masked terms (what enters the loss).
    pub mdd_loss: f64,
    /// Batch MDD over all three terms, whatever the mask.
    pub mdd_value: f64,
    /// `cls_loss + lambda * dom_loss + alpha * mdd_loss`.
    pub total_loss: f64,
    pub pseudo_labels: Vec<usize>,
    /// Pseudo-labels matching the true target labels, when known.
    pub pseudo_correct: Option<usize>,
}

/// Forward and backward pass of the full objective on one batch.
///
/// Returns the step scalars and one gradient per parameter, in
/// [`AtmModel::params`] order. The backpropagated surrogate is
/// `cls - lambda * dom + alpha * mdd`; the reversal stage in front of the
/// discriminator turns that into descent on `total_loss` for the feature
/// learner and predictor and ascent on the domain term for the discriminator.
pub fn objective_gradients(
    model: &AtmModel,
    batch: &Batch,
    config: &TrainConfig,
) -> Result<(StepStats, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true);
    let xs = tape.constant(batch.xs.clone());
    let xt = tape.constant(batch.xt.clone());
    let adv = adversarial_loss(&mut tape, &bound, xs, &batch.ys, xt, config.lambda)?;

    let pseudo = tape.value(adv.target_probs).argmax_rows();
    let terms = mdd_batch_terms(
        &mut tape,
        adv.source_features,
        adv.target_features,
        &batch.ys,
        &pseudo,
    )?;
    let mut mdd_value = 0.0;
    let mut mdd_loss = 0.0;
    let mut masked = None;
    for (term, on) in terms.as_array().into_iter().zip(config.term_mask) {
        let v = tape.value(term).item()?;
        mdd_value += v;
        if on {
            mdd_loss += v;
            masked = Some(match masked {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
    }
    let objective = match masked {
        Some(m) if config.alpha != 0.0 => {
            let scaled = tape.scale(m, config.alpha)?;
            tape.add(adv.objective, scaled)?
        }
        _ => adv.objective,
    };
    let total_loss = adv.parts.total + config.alpha * mdd_loss;
    if !total_loss.is_finite() || !mdd_value.is_finite() {
        return Err(Error::NonFinite {
            op: "objective_gradients",
        });
    }
    tape.backward(objective)?;

    let grads = bound
        .params()
        .iter()
        .map(|&v| {
            tape.grad(v)
                .cloned()
                .ok_or_else(|| Error::InvalidArgument("parameter lost its gradient".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let pseudo_correct = batch
        .yt
        .as_ref()
        .map(|yt| yt.iter().zip(&pseudo).filter(|(a, b)| a == b).count());
    let stats = StepStats {
        cls_loss: adv.parts.cls_loss,
        dom_loss: adv.parts.dom_loss,
        mdd_loss,
        mdd_value,
        total_loss,
        pseudo_labels: pseudo,
        pseudo_correct,
    };
    Ok((stats, grads))
}

/// Runs [`objective_gradients`] and an SGD update on every parameter.
///
/// A fresh tape per step means every parameter gets exactly one gradient
/// accumulation. Non-finite values surface as [`Error::NumericFailure`]
/// tagged with `epoch` and `step`.
#[allow(clippy::too_many_arguments)]
pub fn step(
    model: &mut AtmModel,
    state: &mut SgdState,
    batch: &Batch,
    config: &TrainConfig,
    lr: f64,
    epoch: usize,
    step_index: usize,
) -> Result<StepStats> {
    let numeric = |detail: String| Error::NumericFailure {
        epoch,
        step: step_index,
        detail,
    };
    let (stats, grads) = objective_gradients(model, batch, config).map_err(|e| match e {
        Error::NonFinite { .. } | Error::Domain { .. } => numeric(e.to_string()),
        other => other,
    })?;
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(numeric(format!(
            "non-finite gradient for {}",
            model.param_names()[i]
        )));
    }
    for ((param, grad), velocity) in model
        .params_mut()
        .into_iter()
        .zip(&grads)
        .zip(&mut state.velocity)
    {
        sgd_update(
            param,
            grad,
            velocity,
            lr,
            config.momentum,
            config.weight_decay,
        )?;
    }
    if let Some(i) = model.params().iter().position(|p| !p.is_finite()) {
        return Err(numeric(format!(
            "non-finite parameter {} after update",
            model.param_names()[i]
        )));
    }
    Ok(stats)
}

/// Fraction of rows whose argmax prediction matches the label.
pub fn accuracy(model: &AtmModel, set: &SampleSet) -> Result<Option<f64>> {
    let Some(labels) = set.labels() else {
        return Ok(None);
    };
    let pred = model.predict_labels(set.features())?;
    let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(Some(hits as f64 / labels.len() as f64))
}

fn converged(rows: &[MetricsRow], window: usize, tol: f64) -> bool {
    if window == 0 || rows.len() <= window {
        return false;
    }
    rows[rows.len() - window - 1..]
        .windows(2)
        .all(|w| (w[1].total_loss - w[0].total_loss).abs() < tol)
}

/// Trains a fresh model on labeled `source` and unlabeled `target`.
///
/// Target labels, if present, are used only for the monitoring columns of
/// the log.
pub fn run(
    source: &SampleSet,
    target: &SampleSet,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<(AtmModel, MetricsLog)> {
    config.validate()?;
    if source.labels().is_none() {
        return Err(Error::MissingLabels("source"));
    }
    if source.dim() != target.dim() {
        return Err(Error::InvalidArgument(format!(
            "source has {} columns, target {}",
            source.dim(),
            target.dim()
        )));
    }
    let mut model = AtmModel::new(source.dim(), model_config, config.seed)?;
    let mut state = SgdState::zeros_like(model.params());
    let n_b = config.rows_per_domain();
    let per_epoch = source.len().max(target.len()).div_ceil(n_b);
    let total_steps = (per_epoch * config.max_epochs) as f64;

    let mut log = MetricsLog::default();
    let mut global = 0usize;
    for epoch in 1..=config.max_epochs {
        let mut sums = [0.0; 5];
        let mut steps = 0usize;
        let mut pseudo_hits = 0usize;
        let mut pseudo_seen = 0usize;
        for (i, idx) in half_half_sampler(source, target, n_b, config.seed, epoch)?.enumerate() {
            let progress = global as f64 / total_steps;
            model.grl_coeff = config.grl_at(progress);
            let batch = Batch::gather(source, target, &idx)?;
            let stats = step(
                &mut model,
                &mut state,
                &batch,
                config,
                config.lr_at(progress),
                epoch,
                i,
            )?;
            for (s, v) in sums.iter_mut().zip([
                stats.cls_loss,
                stats.dom_loss,
                stats.mdd_loss,
                stats.total_loss,
                stats.mdd_value,
            ]) {
                *s += v;
            }
            if let Some(hits) = stats.pseudo_correct {
                pseudo_hits += hits;
                pseudo_seen += stats.pseudo_labels.len();
            }
            steps += 1;
            global += 1;
        }
        let mean = |k: usize| sums[k] / steps as f64;
        log.rows.push(MetricsRow {
            epoch,
            cls_loss: mean(0),
            dom_loss: mean(1),
            mdd_loss: mean(2),
            total_loss: mean(3),
            source_acc: accuracy(&model, source)?.unwrap_or(f64::NAN),
            target_acc: accuracy(&model, target)?,
            pseudo_acc: (pseudo_seen > 0).then(|| pseudo_hits as f64 / pseudo_seen as f64),
            mdd_value: mean(4),
        });
        if converged(&log.rows, config.converge_window, config.converge_tol) {
            break;
        }
    }
    Ok((model, log))
}
