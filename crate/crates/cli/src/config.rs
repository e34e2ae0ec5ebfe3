//! TOML config and bench grid files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use choifit::{GeneratorSpec, Method, SolverConfig, DEFAULT_SEED};
use serde::Deserialize;

/// Shared defaults; command-line flags take precedence.
///
/// ```toml
/// seed = 3
/// [solver]
/// toler = 1e-14
/// iterlimit = 3500
/// method = "dr"
/// ```
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Map, Method::Dr]
}

fn default_seeds() -> Vec<u64> {
    vec![DEFAULT_SEED]
}

fn yes() -> bool {
    true
}

/// Grid of generated instances for `bench`.
///
/// ```toml
/// cells = [[12, 8, 12], [12, 8, 6]]   # (n, k, r), m = n
/// methods = ["map", "dr"]
/// seeds = [0, 1]
/// out = "report.csv"
/// [solver]
/// iterlimit = 2000
/// ```
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchGrid {
    #[serde(default)]
    pub cells: Vec<[usize; 3]>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "yes")]
    pub unital: bool,
    pub out: Option<PathBuf>,
    /// Directory for per-cell JSON traces.
    pub traces: Option<PathBuf>,
    /// Replaces the config file's solver table for this grid.
    pub solver: Option<SolverConfig>,
}

impl BenchGrid {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let grid: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        grid.validate().with_context(|| format!("invalid grid {}", path.display()))?;
        Ok(grid)
    }

    pub fn spec(&self, cell: [usize; 3], seed: u64) -> GeneratorSpec {
        let [n, k, r] = cell;
        GeneratorSpec { n, m: n, k, r, unital: self.unital, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            bail!("methods is empty");
        }
        if self.seeds.is_empty() {
            bail!("seeds is empty");
        }
        for &cell in &self.cells {
            self.spec(cell, DEFAULT_SEED).validate().with_context(|| format!("cell {cell:?}"))?;
        }
        Ok(())
    }
}
