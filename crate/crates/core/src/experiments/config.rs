//! Declarative run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::datasets::{simulate_cox_dataset, simulate_ou_dataset, simulate_sine_dataset, Dataset, ModelSpec};
use crate::error::{invalid, Error, Result};
use crate::estimators::EstimatorConfig;
use crate::filter::{FilterConfig, FilterKind, ProposalKind, ResampleScheme};

/// Where a run gets its data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    File {
        path: PathBuf,
    },
    Sine {
        t_end: f64,
        delta: f64,
        sigma: f64,
    },
    Ou {
        rho: f64,
        sigma: f64,
        n_obs: usize,
        delta: f64,
    },
    Cox {
        a: f64,
        beta: f64,
        rho: f64,
        t_end: f64,
        grid_dt: f64,
    },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Sine {
            t_end: 100.0,
            delta: 1.0,
            sigma: 0.2,
        }
    }
}

impl DatasetSource {
    pub fn load(&self, seed: u64) -> Result<Dataset> {
        match self {
            DatasetSource::File { path } => Dataset::read(path),
            &DatasetSource::Sine { t_end, delta, sigma } => simulate_sine_dataset(t_end, delta, sigma, seed),
            &DatasetSource::Ou { rho, sigma, n_obs, delta } => simulate_ou_dataset(rho, sigma, n_obs, delta, seed),
            &DatasetSource::Cox {
                a,
                beta,
                rho,
                t_end,
                grid_dt,
            } => simulate_cox_dataset(a, beta, rho, t_end, grid_dt, seed),
        }
    }
}

fn default_particles() -> usize {
    1000
}
fn default_estimator() -> EstimatorConfig {
    EstimatorConfig::gpe2(10.0)
}
fn default_replicates() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    #[serde(default = "default_filter_kind")]
    pub kind: FilterKind,
    #[serde(default = "default_particles")]
    pub n_particles: usize,
    /// Absent means resampling at every step.
    #[serde(default)]
    pub resample_threshold: Option<f64>,
    #[serde(default)]
    pub resample_scheme: ResampleScheme,
    #[serde(default)]
    pub proposal: ProposalKind,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub delta_max: Option<f64>,
}

fn default_filter_kind() -> FilterKind {
    FilterKind::Rwpf
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            kind: FilterKind::Rwpf,
            n_particles: default_particles(),
            resample_threshold: None,
            resample_scheme: ResampleScheme::Stratified,
            proposal: ProposalKind::Prior,
            estimator: default_estimator(),
            delta_max: None,
        }
    }
}

impl FilterSection {
    pub fn filter_config(&self) -> Result<FilterConfig> {
        let mut cfg = FilterConfig::new(self.n_particles, self.estimator.clone());
        if let Some(c) = self.resample_threshold {
            cfg.resample_threshold = c;
        }
        cfg.resample_scheme = self.resample_scheme;
        cfg.proposal = self.proposal;
        cfg.delta_max = self.delta_max;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub xt: f64,
    #[serde(default = "one")]
    pub t: f64,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorConfig,
    /// Estimate `μ_g` with the Cox intensity in `g` instead of the transition density.
    #[serde(default)]
    pub include_nu: bool,
}

fn one() -> f64 {
    1.0
}
fn default_draws() -> usize {
    10_000
}

impl Default for EstimateSection {
    fn default() -> Self {
        EstimateSection {
            x0: 0.0,
            xt: 0.0,
            t: 1.0,
            draws: default_draws(),
            estimator: default_estimator(),
            include_nu: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchEstimatorsConfig {
    /// Sample sizes for the variance, `E[κ]` and CV rows.
    pub draws: Vec<usize>,
    /// GPE-2 draws behind the CV reference value.
    pub reference_draws: usize,
    pub oracle_paths: usize,
    pub oracle_dt: f64,
    pub beta: f64,
    /// Interior points of the Durham–Gallant rows.
    pub dg_points: Vec<usize>,
}

impl Default for BenchEstimatorsConfig {
    fn default() -> Self {
        BenchEstimatorsConfig {
            draws: vec![10_000, 100_000],
            reference_draws: 100_000,
            oracle_paths: 100_000,
            oracle_dt: 1e-3,
            beta: 10.0,
            dg_points: vec![1, 5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchFiltersConfig {
    pub replicates: usize,
    /// RWPF2 particle count; the other filters are matched to its CPU cost.
    pub n_particles: usize,
    /// Fixed particle counts for EPPF, ESPF, RWPF1 (skips calibration when present).
    pub matched_particles: Option<[usize; 3]>,
    pub calibration_runs: usize,
    /// Observation subsampling steps for the ESS comparison.
    pub subsample: Vec<usize>,
    pub ess_particles: usize,
    pub pseudo_spacing: f64,
    /// Bridge spacing of the discretisation comparator.
    pub discretisation_spacing: f64,
    pub beta: f64,
}

impl Default for BenchFiltersConfig {
    fn default() -> Self {
        BenchFiltersConfig {
            replicates: default_replicates(),
            n_particles: 1000,
            matched_particles: None,
            calibration_runs: 3,
            subsample: vec![10, 20],
            ess_particles: 1000,
            pseudo_spacing: 1.0,
            discretisation_spacing: 0.5,
            beta: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CltConfig {
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub reference_particles: usize,
    pub reference_runs: usize,
    pub estimator: EstimatorConfig,
    pub proposal: ProposalKind,
}

impl Default for CltConfig {
    fn default() -> Self {
        CltConfig {
            n_grid: vec![250, 500, 1000, 2000, 4000],
            replicates: default_replicates(),
            reference_particles: 32_000,
            reference_runs: 4,
            estimator: default_estimator(),
            proposal: ProposalKind::Ozaki,
        }
    }
}

/// Everything a command needs; every run is reproducible from this and the seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub dataset: DatasetSource,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub bench_estimators: BenchEstimatorsConfig,
    #[serde(default)]
    pub bench_filters: BenchFiltersConfig,
    #[serde(default)]
    pub clt: CltConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// The seed, which every run must have.
    pub fn seed(&self) -> Result<u64> {
        match self.seed {
            Some(s) => Ok(s),
            None => invalid("a seed is required (config `seed` or --seed)"),
        }
    }
}
