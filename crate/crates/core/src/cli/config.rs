//! Analysis configuration file (JSON); every default is echoed into reports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds::BoundConfig;
use crate::error::{Error, Result};

/// Options of `analyze` and the commands built on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Bound constants; `L` and `N` are overwritten from the checkpoint.
    pub bound: BoundConfig,
    /// Relative rank tolerance; None uses max(rows, cols) * 1.2e-7 per matrix.
    pub rank_tol: Option<f64>,
    /// Grid resolution; None uses ceil(L + ln N).
    pub m: Option<u32>,
    /// Tensor name prefix before `encoder.layer.`.
    pub prefix: String,
    pub head_dim: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { bound: BoundConfig::default(), rank_tol: None, m: None, prefix: String::new(), head_dim: 64 }
    }
}

impl AnalysisConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Activation Lipschitz constant used by the BERT proxies.
    pub fn l_phi(&self) -> f64 {
        self.bound.act_lipschitz
    }
}
