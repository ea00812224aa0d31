use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::scenario::ScenarioLaw;
use crate::smoothfields::IntervalUnionSet;

/// Batch configuration, read from TOML. Sections that are absent disable
/// the corresponding experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Scenario family for the theorem experiment.
    #[serde(default)]
    pub family: Option<Vec<ScenarioLaw>>,
    #[serde(default)]
    pub lemmas: Option<LemmaConfig>,
    #[serde(default)]
    pub thm1: Option<Thm1Config>,
    #[serde(default)]
    pub fclt: Option<FcltConfig>,
}

fn default_seed() -> u64 {
    20_240_917
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            out_dir: None,
            family: Some(vec![
                ScenarioLaw::Gaussian { mean: 0.0, sd: 0.8 },
                ScenarioLaw::Gaussian { mean: 0.0, sd: 1.2 },
            ]),
            lemmas: Some(LemmaConfig::default()),
            thm1: Some(Thm1Config::default()),
            fclt: Some(FcltConfig::default()),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.lemmas.is_none() && self.thm1.is_none() && self.fclt.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaConfig {
    /// Kernel radii for the mass and remainder checks.
    pub radii: Vec<f64>,
    /// Log-spaced shifts in `[1e-4 r, 10 r]`.
    pub y_points: usize,
    /// Leading constant of the kernel remainder ceiling.
    pub kernel_constant: f64,
    /// Leading constant of the Gaussian-field remainder bound.
    pub gaussian_constant: f64,
    pub gaussian_sets: usize,
    pub gaussian_scales: Vec<f64>,
    pub field_eps: Vec<f64>,
    pub field_n: Vec<usize>,
    pub field_sets: usize,
    pub families: usize,
    pub p_values: Vec<f64>,
    pub c_values: Vec<f64>,
    pub maximal_paths: usize,
    pub maximal_depth: usize,
    pub maximal_n: Vec<usize>,
    pub maximal_b: Vec<f64>,
    /// Random discrete configurations for the DP-vs-enumeration check.
    pub dp_instances: usize,
    pub dp_mc_paths: usize,
    pub dp_mc_n: Vec<usize>,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        Self {
            radii: vec![0.1, 0.5, 1.0, 3.0],
            y_points: 200,
            kernel_constant: 16.0,
            gaussian_constant: 0.4,
            gaussian_sets: 50,
            gaussian_scales: vec![0.25, 0.5, 1.0],
            field_eps: vec![0.5, 1.0],
            field_n: vec![4, 16],
            field_sets: 6,
            families: 100,
            p_values: vec![2.0, 2.5, 3.0],
            c_values: vec![0.1, 1.0, 10.0],
            maximal_paths: 100_000,
            maximal_depth: 32,
            maximal_n: vec![4, 16, 64],
            maximal_b: vec![0.5, 1.0],
            dp_instances: 30,
            dp_mc_paths: 100_000,
            dp_mc_n: vec![4, 16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thm1Config {
    pub n: Vec<usize>,
    pub eps: Vec<f64>,
    pub targets: Vec<IntervalUnionSet>,
    /// Mollifier widths; the smallest DP value over the schedule is kept.
    pub eta: Vec<f64>,
    pub grid_size: usize,
    /// Quadrature nodes per continuous law; the terminal mollifier has kinks
    /// of width `η`, so this must be well above the DP default.
    pub law_nodes: usize,
    pub c4: f64,
    pub c5: f64,
    pub slack: f64,
    /// Points per endpoint of the `x`-grid for the Taylor-error floor.
    pub floor_grid: usize,
    /// Gauss–Legendre order over `Z` for the Taylor-error floor.
    pub floor_z_order: usize,
}

impl Default for Thm1Config {
    fn default() -> Self {
        let set = |v: Vec<(f64, f64)>| IntervalUnionSet::new(v).expect("static target");
        Self {
            n: vec![4, 8, 16],
            eps: vec![0.75, 1.0],
            targets: vec![
                set(vec![(0.5, 1.5)]),
                set(vec![(-1.0, -0.25), (0.25, 1.0)]),
                set(vec![(-0.5, 0.5)]),
            ],
            eta: vec![0.4, 0.2, 0.1, 0.05],
            grid_size: crate::dp::DEFAULT_GRID_POINTS,
            law_nodes: 1024,
            c4: crate::bounds::C4,
            c5: crate::bounds::C5,
            slack: 1e-3,
            floor_grid: 41,
            floor_z_order: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FcltConfig {
    pub law: ScenarioLaw,
    pub n: Vec<usize>,
    pub p: f64,
    pub paths: usize,
    /// Reference Wiener sample size; four times `paths` when absent.
    pub reference_paths: Option<usize>,
    pub bootstrap: usize,
    pub min_paths: usize,
    /// Leading constant of the classical bound.
    pub constant: f64,
    /// Adds a Wiener-vs-Wiener row as a sampling baseline.
    pub baseline: bool,
}

impl Default for FcltConfig {
    fn default() -> Self {
        let s = 3f64.sqrt();
        Self {
            law: ScenarioLaw::Uniform { a: -s, b: s },
            n: vec![16, 64, 256],
            p: 3.0,
            paths: 400,
            reference_paths: None,
            bootstrap: 20,
            min_paths: 20,
            constant: crate::bounds::C3,
            baseline: true,
        }
    }
}

impl FcltConfig {
    pub fn reference_size(&self) -> usize {
        self.reference_paths.unwrap_or(4 * self.paths)
    }
}
