//! Evaluation: target accuracy, proxy A-distance, the intra-MDD ablation
//! grid and feature export.

mod adist;
mod features;

pub use adist::{a_distance, a_distance_from_error, ADistance, ADistanceConfig};
pub use features::{export_features, features_csv, read_features, FeatureTable};

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::SampleSet;
use crate::error::{Error, Result};
use crate::models::{AtmModel, ModelConfig};
use crate::trainer::{self, MetricsLog, TrainConfig};
use crate::fmt_f64;

/// Fraction of target rows classified correctly. Needs target labels.
pub fn target_accuracy(model: &AtmModel, target: &SampleSet) -> Result<f64> {
    trainer::accuracy(model, target)?.ok_or(Error::MissingLabels("target"))
}

/// The eight MDD term masks, in grid order `T1..T8`: none, each single term,
/// each pair, all three.
pub const ABLATION_MASKS: [[bool; 3]; 8] = [
    [false, false, false],
    [true, false, false],
    [false, true, false],
    [false, false, true],
    [true, true, false],
    [true, false, true],
    [false, true, true],
    [true, true, true],
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub seed: u64,
    /// Final target accuracy, or why the run failed.
    pub outcome: std::result::Result<f64, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub id: String,
    pub mask: [bool; 3],
    pub runs: Vec<AblationRun>,
}

impl AblationCell {
    pub fn accuracies(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.outcome.clone().ok()).collect()
    }

    /// Mean over successful runs; `None` if every run failed.
    pub fn mean_acc(&self) -> Option<f64> {
        let accs = self.accuracies();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }

    pub fn failures(&self) -> Vec<(u64, &str)> {
        self.runs
            .iter()
            .filter_map(|r| r.outcome.as_ref().err().map(|e| (r.seed, e.as_str())))
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub cells: Vec<AblationCell>,
}

/// Trains every mask in [`ABLATION_MASKS`] under every seed, in parallel.
///
/// Each run uses `base` with only `term_mask` and `seed` replaced, so a cell
/// reproduces a direct [`trainer::run`] with the same settings. A failed run
/// is recorded in its cell and does not stop the others.
pub fn ablation_grid(
    source: &SampleSet,
    target: &SampleSet,
    model: &ModelConfig,
    base: &TrainConfig,
    seeds: &[u64],
) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("ablation needs at least one seed".into()));
    }
    if target.labels().is_none() {
        return Err(Error::MissingLabels("target"));
    }
    base.validate()?;
    let jobs: Vec<(usize, u64)> = (0..ABLATION_MASKS.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let outcomes: Vec<std::result::Result<f64, String>> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let config = TrainConfig {
                term_mask: ABLATION_MASKS[c],
                seed,
                ..base.clone()
            };
            trainer::run(source, target, model, &config)
                .and_then(|(m, _)| target_accuracy(&m, target))
                .map_err(|e| e.to_string())
        })
        .collect();
    let mut cells: Vec<AblationCell> = ABLATION_MASKS
        .iter()
        .enumerate()
        .map(|(c, &mask)| AblationCell {
            id: format!("T{}", c + 1),
            mask,
            runs: Vec::new(),
        })
        .collect();
    for ((c, seed), outcome) in jobs.into_iter().zip(outcomes) {
        cells[c].runs.push(AblationRun { seed, outcome });
    }
    Ok(AblationReport { cells })
}

pub const ABLATION_HEADER: &str = "setting,term1,term2,term3,seed,target_acc";

impl AblationReport {
    pub fn cell(&self, id: &str) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.id == id)
    }

    /// One row per run, then one `mean` row per cell. Failed runs show
    /// `failed` in the accuracy column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(ABLATION_HEADER);
        out.push('\n');
        let flag = |b: bool| u8::from(b);
        for c in &self.cells {
            for r in &c.runs {
                let acc = match &r.outcome {
                    Ok(a) => fmt_f64(*a),
                    Err(_) => "failed".to_string(),
                };
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{acc}",
                    c.id,
                    flag(c.mask[0]),
                    flag(c.mask[1]),
                    flag(c.mask[2]),
                    r.seed
                );
            }
        }
        for c in &self.cells {
            let acc = c.mean_acc().map(fmt_f64).unwrap_or_else(|| "failed".into());
            let _ = writeln!(
                out,
                "{},{},{},{},mean,{acc}",
                c.id,
                flag(c.mask[0]),
                flag(c.mask[1]),
                flag(c.mask[2])
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// `(epoch, pseudo_acc)` for every epoch that has target labels to score.
pub fn pseudo_accuracy_curve(log: &MetricsLog) -> Vec<(usize, f64)> {
    log.rows
        .iter()
        .filter_map(|r| r.pseudo_acc.map(|a| (r.epoch, a)))
        .collect()
}
