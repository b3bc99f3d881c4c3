//! Model checkpoints: configuration, standardization statistics and
//! parameters in one JSON document.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datasets::{Standardization, LAYOUT_VERSION};
use crate::error::{Error, Result};
use crate::models::{ModelConfig, ProcessModel};
use crate::nn::ParamArchive;

pub const CHECKPOINT_FORMAT: &str = "social-processes-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub layout_version: u32,
    pub model: ModelConfig,
    pub standardization: Standardization,
    #[serde(default)]
    pub epoch: Option<usize>,
    #[serde(default)]
    pub val_nll: Option<f64>,
    pub params: ParamArchive,
}

impl Checkpoint {
    pub fn new(model: &ProcessModel, standardization: Standardization) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            layout_version: LAYOUT_VERSION,
            model: model.config.clone(),
            standardization,
            epoch: None,
            val_nll: None,
            params: model.params.to_archive(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::ser(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::ser(path, e))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::ser(path, format!("unknown format `{}`", ck.format)));
        }
        ck.check_layout(LAYOUT_VERSION)?;
        Ok(ck)
    }

    /// Rejects data written with another sample layout.
    pub fn check_layout(&self, data_version: u32) -> Result<()> {
        if self.layout_version != data_version {
            return Err(Error::LayoutVersion {
                expected: self.layout_version,
                found: data_version,
            });
        }
        Ok(())
    }

    pub fn to_model(&self) -> Result<ProcessModel> {
        let mut m = ProcessModel::new(self.model.clone(), 0)?;
        m.params.load_archive(&self.params)?;
        Ok(m)
    }
}
