//! Optional TOML defaults. A value given on the command line wins over the
//! file, which wins over the built-in default.

use std::path::Path;

use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub field: FieldSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub bench: BenchSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub budget: Option<usize>,
    pub lambda: Option<f64>,
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub order: Option<usize>,
    pub kernel_dims: Option<usize>,
    pub w1: Option<f64>,
    pub w2: Option<f64>,
    pub iters: Option<usize>,
    pub seed: Option<u64>,
    pub batch_size: Option<usize>,
    pub mc_samples: Option<usize>,
    pub lr: Option<f64>,
    pub hidden: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub reference_samples: Option<usize>,
    pub seed: Option<u64>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
    }
}

/// Flag, then config value, then default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}
