//! Optional TOML run configuration; command-line flags override it.
//!
//! ```toml
//! task = "sequencing"
//! jobs = 4
//! aggregation = "micro"
//! weights = "averaged"
//! disable_families = ["frame"]
//!
//! [train]
//! iterations = 20
//! seed = 7
//! ```

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use eventrel::metrics::Aggregation;
use eventrel::trainer::{TrainConfig, WeightChoice};
use serde::{Deserialize, Serialize};

use crate::TaskArg;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub task: Option<TaskArg>,
    pub jobs: Option<usize>,
    pub aggregation: Option<Aggregation>,
    pub weights: Option<WeightChoice>,
    #[serde(default)]
    pub disable_families: Vec<String>,
    pub train: Option<TrainConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("config {}", path.display()))
    }
}
