//! Fitted models on disk: a JSON object
//! `{"format": "sdeclass-model-v1", "config": {..}, "model": {..}}` where
//! `model` holds the weights, and for each drift and the diffusion the basis
//! parameters, coefficients and output transform.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{EstimatorConfig, FittedModel};

pub const MODEL_FORMAT: &str = "sdeclass-model-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub config: EstimatorConfig,
    pub model: FittedModel,
}

impl ModelFile {
    pub fn new(config: EstimatorConfig, model: FittedModel) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            config,
            model,
        }
    }

    fn check(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Config(format!("unsupported model format `{}`", self.format)));
        }
        let k = self.model.weights.len();
        if k < 2 || self.model.drifts.len() != k {
            return Err(Error::Config(format!(
                "model has {} weights and {} drifts",
                k,
                self.model.drifts.len()
            )));
        }
        Ok(())
    }
}

pub fn save_model_to<W: Write>(file: &ModelFile, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, file)?;
    writeln!(out)?;
    Ok(())
}

pub fn save_model(file: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    save_model_to(file, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_model_from<R: Read>(input: R) -> Result<ModelFile> {
    let file: ModelFile = serde_json::from_reader(input)?;
    file.check()?;
    Ok(file)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    load_model_from(std::io::BufReader::new(std::fs::File::open(path)?))
}
