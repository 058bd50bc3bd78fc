use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AtmModel, Linear};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointEntry {
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

/// Flat map from parameter name (`features.0.weight`, ...) to shape and
/// row-major values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Checkpoint(pub BTreeMap<String, CheckpointEntry>);

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    fn tensor(&self, name: &str) -> Result<Tensor> {
        let entry = self
            .0
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("checkpoint is missing {name}")))?;
        Tensor::new(entry.shape[0], entry.shape[1], entry.values.clone())
    }

    fn layer(&self, prefix: &str) -> Result<Linear> {
        Ok(Linear {
            weight: self.tensor(&format!("{prefix}.weight"))?,
            bias: self.tensor(&format!("{prefix}.bias"))?,
        })
    }
}

impl AtmModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint(
            self.param_names()
                .into_iter()
                .zip(self.params())
                .map(|(name, t)| {
                    let entry = CheckpointEntry {
                        shape: [t.rows(), t.cols()],
                        values: t.data().to_vec(),
                    };
                    (name, entry)
                })
                .collect(),
        )
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut features = Vec::new();
        while ckpt
            .0
            .contains_key(&format!("features.{}.weight", features.len()))
        {
            features.push(ckpt.layer(&format!("features.{}", features.len()))?);
        }
        let predictor = ckpt.layer("predictor")?;
        let discriminator = [
            ckpt.layer("discriminator.0")?,
            ckpt.layer("discriminator.1")?,
            ckpt.layer("discriminator.2")?,
        ];
        let model = AtmModel::from_layers(features, predictor, discriminator)?;
        let expected = model.param_names().len();
        if ckpt.0.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "checkpoint has {} entries, model uses {expected}",
                ckpt.0.len()
            )));
        }
        Ok(model)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint().to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt = Checkpoint::from_json(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        AtmModel::from_checkpoint(&ckpt)
    }
}
