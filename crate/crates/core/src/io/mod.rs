//! File formats: site CSV, model JSON, run configuration, report CSVs and SVG
//! maps.

pub mod config;
pub mod reports;
pub mod sites;
pub mod svg;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{ConfigFile, FeaturePolicy, RunConfig};
pub use sites::{load_sites, read_sites, save_sites, write_sites, RowError};
pub use svg::{emit_map_svg, render_map_svg};

use crate::geo::GeoError;
use crate::models::DemandModel;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{} invalid row(s):\n{}", .0.len(), .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Rows(Vec<RowError>),
    #[error("duplicate site id `{id}` on lines {first_line} and {second_line}")]
    DuplicateId {
        id: String,
        first_line: u64,
        second_line: u64,
    },
    #[error("sites on lines {first_line} and {second_line} share identical coordinates")]
    DuplicateCoordinates { first_line: u64, second_line: u64 },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("map: {0}")]
    Map(String),
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: DemandModel,
}

pub fn model_to_json(model: &DemandModel) -> Result<String, IoError> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

pub fn model_from_json(text: &str) -> Result<DemandModel, IoError> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(IoError::Schema(format!(
            "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
            file.format_version
        )));
    }
    Ok(file.model)
}

pub fn save_model(model: &DemandModel, path: &Path) -> Result<(), IoError> {
    write_text(path, &model_to_json(model)?)
}

pub fn load_model(path: &Path) -> Result<DemandModel, IoError> {
    model_from_json(&read_text(path)?)
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| IoError::io(path, e))
}
