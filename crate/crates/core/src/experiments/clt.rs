use super::bench::{run_replicates, FilterVariant};
use super::config::CltConfig;
use super::datasets::Dataset;
use super::report::BenchmarkReport;
use crate::error::{invalid, Result};
use crate::filter::{FilterConfig, FilterKind};
use crate::rng::SeedTree;
use crate::stats::{mean_var, weighted_linear_fit};

/// Root mean square error of the filtering means at one particle count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsePoint {
    pub n_particles: usize,
    pub rmse: f64,
    /// Standard error of `ln rmse`.
    pub log_se: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CltResult {
    pub slope: f64,
    pub slope_se: f64,
    /// 95% interval for the slope.
    pub ci: (f64, f64),
    pub points: Vec<RmsePoint>,
}

impl CltResult {
    pub fn to_report(&self, seed: u64, replicates: usize) -> BenchmarkReport {
        let mut r = BenchmarkReport::new(seed);
        for p in &self.points {
            r.push(format!("N={}", p.n_particles), "log_rmse", p.rmse.ln(), p.log_se, replicates as u64);
        }
        r.push("fit", "slope", self.slope, self.slope_se, self.points.len() as u64);
        r.push("fit", "ci_low", self.ci.0, 0.0, self.points.len() as u64);
        r.push("fit", "ci_high", self.ci.1, 0.0, self.points.len() as u64);
        r
    }
}

/// Regresses `ln RMSE` of RWPF filtering means on `ln N`.
///
/// The reference is the average of several runs at a large particle count; its own
/// Monte Carlo variance (estimated across those runs) is subtracted from each MSE.
pub fn clt_rate_check(cfg: &CltConfig, data: &Dataset, seed: u64) -> Result<CltResult> {
    if cfg.n_grid.len() < 2 || cfg.replicates < 2 || cfg.reference_runs < 2 {
        return invalid("need two particle counts, two replicates and two reference runs");
    }
    let model = data.model.build()?;
    let seeds = SeedTree::new(seed);
    let variant = |n: usize| {
        let mut c = FilterConfig::new(n, cfg.estimator.clone());
        c.proposal = cfg.proposal;
        FilterVariant::new("RWPF", FilterKind::Rwpf, c)
    };

    let reference = run_replicates(
        &variant(cfg.reference_particles),
        model.as_ref(),
        data,
        cfg.reference_runs,
        seeds.child(0),
    )?;
    let ref_mean = reference.mean_of_means();
    let ref_noise = reference
        .across_run_variance()
        .iter()
        .sum::<f64>()
        / ref_mean.len() as f64
        / cfg.reference_runs as f64;

    let mut points = Vec::with_capacity(cfg.n_grid.len());
    for (k, &n) in cfg.n_grid.iter().enumerate() {
        let set = run_replicates(&variant(n), model.as_ref(), data, cfg.replicates, seeds.child(1 + k as u64))?;
        let per_run: Vec<f64> = set
            .means
            .iter()
            .map(|m| m.iter().zip(&ref_mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / m.len() as f64)
            .collect();
        let (mse, var) = mean_var(&per_run);
        let mse = mse - ref_noise;
        if !(mse > 0.0) {
            return Err(crate::Error::Degenerate(format!(
                "error at N={n} is below the reference noise; raise the reference size"
            )));
        }
        let mse_se = (var / per_run.len() as f64).sqrt();
        points.push(RmsePoint {
            n_particles: n,
            rmse: mse.sqrt(),
            log_se: 0.5 * mse_se / mse,
        });
    }
    let x: Vec<f64> = points.iter().map(|p| (p.n_particles as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.rmse.ln()).collect();
    let se: Vec<f64> = points.iter().map(|p| p.log_se).collect();
    let fit = weighted_linear_fit(&x, &y, &se)?;
    Ok(CltResult {
        slope: fit.slope,
        slope_se: fit.slope_se,
        ci: (fit.slope - 1.96 * fit.slope_se, fit.slope + 1.96 * fit.slope_se),
        points,
    })
}
