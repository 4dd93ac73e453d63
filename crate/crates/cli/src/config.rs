//! Settings file. Command-line flags and `LPGRADE_*` variables take
//! precedence over anything set here.
//!
//! ```toml
//! seed = 7
//!
//! [agree]
//! ci = "bootstrap"
//! resamples = 2000
//!
//! [train]
//! learning_rate = 1e-3
//! ```

use std::path::Path;

use anyhow::Context;
use lpgrade_core::augment::SmoteConfig;
use lpgrade_core::metrics::{DEFAULT_CONFIDENCE, DEFAULT_RESAMPLES};
use lpgrade_core::reliability::DEFAULT_ALPHA_THRESHOLD;
use lpgrade_core::textclf::{HeadConfig, Thresholds, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CiKind;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub irr: IrrConfig,
    pub agree: AgreeConfig,
    pub smote: SmoteConfig,
    pub head: HeadConfig,
    pub train: TrainConfig,
    pub predict: Thresholds,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrrConfig {
    pub threshold: f64,
}

impl Default for IrrConfig {
    fn default() -> Self {
        IrrConfig {
            threshold: DEFAULT_ALPHA_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgreeConfig {
    pub ci: CiKind,
    pub resamples: usize,
    pub confidence: f64,
}

impl Default for AgreeConfig {
    fn default() -> Self {
        AgreeConfig {
            ci: CiKind::Wald,
            resamples: DEFAULT_RESAMPLES,
            confidence: DEFAULT_CONFIDENCE,
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("{}: invalid config", path.display()))
    }
}
