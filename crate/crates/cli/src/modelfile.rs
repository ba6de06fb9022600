//! The versioned model file: a magic header, the frozen ingestion schema,
//! and the fitted calibrator.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mbct_core::model::CalibratorModel;

use crate::schema::FittedSchema;

pub const MODEL_MAGIC: &str = "mbct-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub magic: String,
    pub version: u32,
    pub schema: FittedSchema,
    pub model: CalibratorModel,
}

impl ModelFile {
    pub fn new(schema: FittedSchema, model: CalibratorModel) -> Self {
        Self {
            magic: MODEL_MAGIC.to_string(),
            version: MODEL_VERSION,
            schema,
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let file: ModelFile =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if file.magic != MODEL_MAGIC {
            bail!(
                "{} is not a model file (magic '{}')",
                path.display(),
                file.magic
            );
        }
        if file.version != MODEL_VERSION {
            bail!(
                "unsupported model version {} (this build reads {})",
                file.version,
                MODEL_VERSION
            );
        }
        Ok(file)
    }
}
