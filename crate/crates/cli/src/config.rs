use std::path::PathBuf;

use multidyadic::cases::SmConvention;
use multidyadic::certify::CertConfig;
use multidyadic::grid::TorusSpace;
use multidyadic::kernel::KernelDesc;
use multidyadic::registry;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceConfig {
    pub n: usize,
    /// Per-parameter dimensions; all ones when absent.
    #[serde(default)]
    pub dims: Option<Vec<u32>>,
    #[serde(rename = "L")]
    pub depth: u32,
    pub delta: f64,
    pub r: u32,
}

impl SpaceConfig {
    pub fn build(&self) -> Result<TorusSpace, CliError> {
        let dims = self.dims.clone().unwrap_or_else(|| vec![1; self.n]);
        if dims.len() != self.n {
            return Err(CliError::Usage(format!("{} dims given for n = {}", dims.len(), self.n)));
        }
        TorusSpace::new(dims, self.depth, self.delta, self.r).map_err(|e| CliError::Usage(e.to_string()))
    }
}

/// A registry name or a JSON file holding one kernel descriptor per parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelSpec {
    Name(String),
    File(PathBuf),
}

impl KernelSpec {
    pub fn resolve(&self, n: usize) -> Result<Vec<KernelDesc>, CliError> {
        match self {
            Self::Name(name) => registry::lookup(name, n).map_err(|e| {
                CliError::Usage(format!("{e}; known kernels: {}", registry::NAMES.join(", ")))
            }),
            Self::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("kernel file {}: {e}", path.display())))?;
                let descs: Vec<KernelDesc> = serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("kernel file {}: {e}", path.display())))?;
                if descs.len() != n {
                    return Err(CliError::Usage(format!("kernel file has {} factors, n = {n}", descs.len())));
                }
                Ok(descs)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructConfig {
    pub fixed: bool,
    pub mc: bool,
    pub truncate: Option<u32>,
    pub samples: usize,
    pub convention: SmConvention,
    pub buckets: bool,
    /// Grid for the fixed and truncated modes; the standard grid when absent.
    pub grid_seed: Option<u64>,
    /// Input files; seeded random functions when absent.
    pub f: Option<PathBuf>,
    pub g: Option<PathBuf>,
    /// Largest accepted relative error of the fixed expansion.
    pub tolerance: f64,
    /// Largest accepted `|mean − direct| / stderr` of the Monte Carlo mean.
    pub z_tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub min_depth: u32,
    pub max_depth: u32,
    pub reps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum CommandConfig {
    Reconstruct(ReconstructConfig),
    Certify(CertConfig),
    Bench(BenchConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub space: SpaceConfig,
    pub kernel: KernelSpec,
    pub seed: u64,
    pub command: CommandConfig,
    /// Directory for reports; standard output when absent.
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// SHA-256 of the canonical JSON encoding, output location excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
