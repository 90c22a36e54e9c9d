use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetFormat;
use crate::detection::EquivalenceMode;
use crate::domain::{Label, StrategySpec, TimeRange};
use crate::oracle::OracleConfig;
use crate::search::UnparseablePolicy;

use super::CliError;

pub const TOOL: &str = "tempamb";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything a `classify` run depends on. Loaded from an optional JSON
/// file, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub format: Option<DatasetFormat>,
    /// Logical field (`id`, `question`, `label`, `source`) to column name.
    pub column_map: BTreeMap<String, String>,
    pub strategy: StrategySpec,
    pub oracle: OracleConfig,
    pub equivalence_mode: EquivalenceMode,
    pub equivalence_template: Option<PathBuf>,
    pub unparseable_policy: UnparseablePolicy,
    /// Label given by a baseline when the response is neither yes nor no.
    pub baseline_unparseable_label: Label,
    pub range: Option<TimeRange>,
    pub cache: Option<PathBuf>,
    /// Questions processed concurrently.
    pub concurrency: usize,
    /// Probes issued concurrently within one question (static plans only).
    pub probe_fan_out: usize,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            format: None,
            column_map: BTreeMap::new(),
            strategy: StrategySpec::Linear,
            oracle: OracleConfig::default(),
            equivalence_mode: EquivalenceMode::default(),
            equivalence_template: None,
            unparseable_policy: UnparseablePolicy::default(),
            baseline_unparseable_label: Label::Unambiguous,
            range: None,
            cache: None,
            concurrency: 1,
            probe_fan_out: 1,
            output: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.dataset.is_none() {
            return Err(CliError::Config("no dataset given".into()));
        }
        if self.concurrency == 0 || self.probe_fan_out == 0 {
            return Err(CliError::Config(
                "concurrency and probe_fan_out must be at least 1".into(),
            ));
        }
        self.oracle.validate().map_err(|e| CliError::Config(e.to_string()))
    }

    /// The fields that determine outcome rows. Resuming requires these to
    /// match the header of the existing output file.
    pub fn reproducible(&self) -> RunConfig {
        RunConfig {
            concurrency: 1,
            probe_fan_out: 1,
            output: None,
            cache: None,
            ..self.clone()
        }
    }
}

/// First line of every outcome file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderLine {
    pub header: Header,
}

impl HeaderLine {
    /// Embeds `config.reproducible()`, so runs that differ only in output
    /// path, cache path or concurrency write identical files.
    pub fn new(config: &RunConfig) -> Self {
        HeaderLine {
            header: Header {
                tool: TOOL.to_string(),
                version: VERSION.to_string(),
                config: config.reproducible(),
            },
        }
    }
}
