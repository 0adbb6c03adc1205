use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tngeo::geo::Selection;

use crate::error::{json, io, BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "geo-binary")]
    GeoBinary,
    #[serde(rename = "geo-integer")]
    GeoInteger,
    #[serde(rename = "sa")]
    Sa,
    #[serde(rename = "random")]
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::GeoBinary, Method::GeoInteger, Method::Sa, Method::Random];

    pub fn name(self) -> &'static str {
        match self {
            Method::GeoBinary => "geo-binary",
            Method::GeoInteger => "geo-integer",
            Method::Sa => "sa",
            Method::Random => "random",
        }
    }

    pub fn is_geo(self) -> bool {
        matches!(self, Method::GeoBinary | Method::GeoInteger)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameter lists; the run matrix is their cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grid {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub n_epochs: Vec<usize>,
    pub chi: Vec<usize>,
    pub selection: Vec<Selection>,
    pub max_iterations: usize,
    /// `None` means `10 M N` per instance.
    pub n_samples: Option<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            beta: vec![0.1, 0.01, 0.001],
            alpha: vec![1e-3, 1e-4],
            n_epochs: vec![1, 3, 5, 10],
            chi: vec![4, 8, 16, 32],
            selection: vec![Selection::All],
            max_iterations: tngeo::geo::DEFAULT_MAX_ITERATIONS,
            n_samples: None,
        }
    }
}

/// One point of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub selection: Selection,
    pub chi: usize,
    pub n_epochs: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl Grid {
    /// Cells in a fixed order: selection, chi, epochs, alpha, beta (last fastest).
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &selection in &self.selection {
            for &chi in &self.chi {
                for &n_epochs in &self.n_epochs {
                    for &alpha in &self.alpha {
                        for &beta in &self.beta {
                            out.push(Cell { selection, chi, n_epochs, alpha, beta });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BenchError::Suite(m.into()));
        if self.beta.is_empty() || self.alpha.is_empty() || self.n_epochs.is_empty() || self.chi.is_empty() || self.selection.is_empty() {
            return bad("every grid axis needs at least one value");
        }
        if self.beta.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return bad("beta must be finite and non-negative");
        }
        if self.alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return bad("alpha must be finite and positive");
        }
        if self.n_epochs.contains(&0) || self.chi.contains(&0) {
            return bad("n_epochs and chi must be at least 1");
        }
        if self.n_samples == Some(0) {
            return bad("n_samples must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    /// Instance files; relative paths are taken from the suite file's directory.
    pub instances: Vec<PathBuf>,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub oracle_budget: Option<u64>,
    /// Also write initial and trained model checkpoints for every GEO run.
    #[serde(default)]
    pub save_models: bool,
}

fn default_repetitions() -> usize {
    10
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

impl Suite {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        let mut suite: Suite = serde_json::from_str(&text).map_err(json(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in &mut suite.instances {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        suite.validate()?;
        Ok(suite)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(BenchError::Suite("repetitions must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(BenchError::Suite("no methods selected".into()));
        }
        if self.workers == Some(0) {
            return Err(BenchError::Suite("workers must be at least 1".into()));
        }
        self.grid.validate()
    }
}
