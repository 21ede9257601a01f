use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use chartforge::pipeline::PipelineConfig;

use crate::{read_file, write_file, CliError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const DATASET_DIR: &str = "dataset";
pub const DATASET_FILE: &str = "tasks.jsonl";
pub const SCRIPTS_DIR: &str = "scripts";
pub const IMAGES_DIR: &str = "images";
pub const REPORTS_DIR: &str = "reports";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const PERCEPTUAL_FILE: &str = "perceptual.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub source: String,
    pub name: String,
    pub layout: String,
    pub tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderInfo {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// The full reply script, so a mock run can be repeated from the
    /// manifest alone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpreter: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shim: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fake_rules: Option<Value>,
}

/// Relative paths of the artifacts inside a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputLayout {
    pub records: String,
    pub dataset: String,
    pub scripts: String,
    pub images: String,
    pub reports: String,
}

impl Default for OutputLayout {
    fn default() -> Self {
        Self {
            records: RECORDS_FILE.into(),
            dataset: format!("{DATASET_DIR}/{DATASET_FILE}"),
            scripts: SCRIPTS_DIR.into(),
            images: IMAGES_DIR.into(),
            reports: REPORTS_DIR.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub label: String,
    pub dataset: DatasetInfo,
    pub config: PipelineConfig,
    pub provider: ProviderInfo,
    pub backend: BackendInfo,
    pub seed: u64,
    pub created_unix_secs: u64,
    pub outputs: OutputLayout,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self, CliError> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = read_file(&path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, run_dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_file(&run_dir.join(MANIFEST_FILE), text.as_bytes())
    }
}

/// Default row label, e.g. `FS gpt-4o-mini Agentic`.
pub fn default_label(config: &PipelineConfig) -> String {
    let budget = if config.max_repair_iterations == 0 {
        "Baseline"
    } else {
        "Agentic"
    };
    format!(
        "{} {} {budget}",
        config.prompt_mode.short_name().to_uppercase(),
        config.model_name
    )
}
