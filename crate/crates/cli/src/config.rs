use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use atm::analysis::ADistanceConfig;
use atm::datasets::{apply_shift, gen_two_moons, load_csv, load_idx, standardize, ShiftSpec};
use atm::{DomainTag, ModelConfig, SampleSet, TrainConfig};
use serde::{Deserialize, Serialize};

/// Where one domain's samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    TwoMoons { n: usize, noise: f64, seed: u64 },
    Csv { path: PathBuf },
    Idx { images: PathBuf, labels: PathBuf },
}

impl DataSource {
    fn load(&self, domain: DomainTag, base: &Path) -> Result<SampleSet> {
        let set = match self {
            DataSource::TwoMoons { n, noise, seed } => gen_two_moons(*n, *noise, *seed)?,
            DataSource::Csv { path } => load_csv(&base.join(path), domain)?,
            DataSource::Idx { images, labels } => {
                load_idx(&base.join(images), &base.join(labels), domain)?
            }
        };
        Ok(set.with_domain(domain))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    pub target: DataSource,
    /// Applied to the target samples after loading.
    pub shift: Option<ShiftSpec>,
    /// Seed for any noise the shift adds.
    pub shift_seed: u64,
    /// Standardize each domain with source statistics.
    pub standardize: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::TwoMoons {
                n: 1000,
                noise: 0.1,
                seed: 0,
            },
            target: DataSource::TwoMoons {
                n: 1000,
                noise: 0.1,
                seed: 100,
            },
            shift: Some(ShiftSpec::rotation(35.0)),
            shift_seed: 0,
            standardize: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Seeds for the ablation grid.
    pub seeds: Vec<u64>,
    /// Output directory, relative to the working directory. `--out` wins.
    pub out_dir: PathBuf,
    pub adist: ADistanceConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            seeds: vec![0, 1, 2],
            out_dir: PathBuf::from("out"),
            adist: ADistanceConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub analysis: AnalysisConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Loads both domains; relative data paths resolve against `base`.
    pub fn load_data(&self, base: &Path) -> Result<(SampleSet, SampleSet)> {
        let source = self
            .data
            .source
            .load(DomainTag::Source, base)
            .context("loading source data")?;
        let mut target = self
            .data
            .target
            .load(DomainTag::Target, base)
            .context("loading target data")?;
        if let Some(shift) = &self.data.shift {
            target = apply_shift(&target, shift, self.data.shift_seed)?;
        }
        if self.data.standardize {
            let (s, fitted) = standardize(&source, None)?;
            let (t, _) = standardize(&target, Some(&fitted))?;
            return Ok((s, t));
        }
        Ok((source, target))
    }
}
