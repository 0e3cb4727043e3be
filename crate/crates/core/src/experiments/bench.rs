//! Benchmark harnesses for the estimators and the filters.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{BenchEstimatorsConfig, BenchFiltersConfig};
use super::datasets::Dataset;
use super::oracles::fine_grid_mu;
use super::report::BenchmarkReport;
use crate::bridge::BridgeSpec;
use crate::error::{invalid, Result};
use crate::estimators::{draw_mu, BoundsMode, Estimate, EstimatorConfig};
use crate::filter::{run_filter, FilterConfig, FilterKind, ProposalKind};
use crate::models::{eval_phi, DiffusionModel, SineModel};
use crate::rng::SeedTree;
use crate::stats::{batch_mean_se, batch_variance_se, mean_var};

const BATCHES: usize = 50;

/// The endpoint pairs `(x, z)` of the sine benchmarks, with labels.
pub fn sine_pairs() -> [(f64, f64, &'static str); 3] {
    [(0.0, 0.0, "0,0"), (0.0, PI, "0,pi"), (PI, PI, "pi,pi")]
}

/// `n` independent draws of the configured estimator of `μ_φ`; draw `i` uses
/// `seeds.child(i)`.
pub fn mu_draws(
    model: &dyn DiffusionModel,
    x: f64,
    z: f64,
    t: f64,
    cfg: &EstimatorConfig,
    n: usize,
    seeds: SeedTree,
) -> Result<Vec<Estimate>> {
    cfg.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| draw_mu(model, false, x, z, t, cfg, &mut seeds.child(i as u64).rng()))
        .collect()
}

/// The estimators compared on the sine model, labelled.
pub fn sine_estimators(beta: f64, dg_points: &[usize]) -> Vec<(String, EstimatorConfig)> {
    let u = SineModel::PHI_UPPER;
    let mut out = vec![
        ("PE".to_string(), EstimatorConfig::pe(u, u)),
        ("GPE-1".to_string(), EstimatorConfig::gpe1().with_bounds(BoundsMode::Layered)),
        ("GPE-2".to_string(), EstimatorConfig::gpe2(beta).with_bounds(BoundsMode::Layered)),
    ];
    for &m in dg_points {
        out.push((format!("DG-{m}"), EstimatorConfig::durham_gallant(m)));
    }
    out
}

/// Adds mean, variance, `E[κ]`, CV and sign rows for one batch of draws.
fn push_estimator_rows(report: &mut BenchmarkReport, config: &str, draws: &[Estimate], reference: f64) {
    let n = draws.len() as u64;
    let values: Vec<f64> = draws.iter().map(|e| e.value).collect();
    let kappas: Vec<f64> = draws.iter().map(|e| e.kappa as f64).collect();
    let (mean, var) = mean_var(&values);
    let (_, var_se) = batch_variance_se(&values, BATCHES);
    let (k_mean, k_var) = mean_var(&kappas);
    report.push(config, "mean", mean, (var / n as f64).sqrt(), n);
    report.push(config, "variance", var, var_se, n);
    report.push(config, "mean_kappa", k_mean, (k_var / n as f64).sqrt(), n);
    let sq: Vec<f64> = values.iter().map(|v| (v - reference).powi(2)).collect();
    let (mse, mse_se) = batch_mean_se(&sq, BATCHES);
    let cv = mse.sqrt() / reference;
    report.push(config, "cv", cv, mse_se / (2.0 * mse.sqrt() * reference), n);
    let negatives = draws.iter().filter(|e| e.negative).count();
    report.push(config, "negative_count", negatives as f64, 0.0, n);
    report.metadata.kappa_total += draws.iter().map(|e| e.kappa).sum::<u64>();
}

/// Variance, `E[κ]` and CV of every estimator at every endpoint pair, plus the fine-grid
/// mean and `Var(E)` of `exp(−∫φ)`.
///
/// Configurations are labelled `<estimator>@<pair>`; the CV reference is the row
/// `reference_mean` of `GPE-2@<pair>` and the fine-grid rows use `fine-grid@<pair>`.
pub fn bench_estimators(cfg: &BenchEstimatorsConfig, seed: u64) -> Result<BenchmarkReport> {
    let start = Instant::now();
    let model = SineModel;
    let seeds = SeedTree::new(seed);
    let mut report = BenchmarkReport::new(seed);
    let estimators = sine_estimators(cfg.beta, &cfg.dg_points);
    for (p, &(x, z, pair)) in sine_pairs().iter().enumerate() {
        let pair_seeds = seeds.child(p as u64);
        let reference_cfg = EstimatorConfig::gpe2(cfg.beta).with_bounds(BoundsMode::Layered);
        let reference_draws = mu_draws(&model, x, z, 1.0, &reference_cfg, cfg.reference_draws, pair_seeds.child(1_000))?;
        let ref_values: Vec<f64> = reference_draws.iter().map(|e| e.value).collect();
        let (reference, ref_var) = mean_var(&ref_values);
        report.push(
            format!("GPE-2@{pair}"),
            "reference_mean",
            reference,
            (ref_var / ref_values.len() as f64).sqrt(),
            ref_values.len() as u64,
        );

        let spec = BridgeSpec::new(x, z, 0.0, 1.0)?;
        let phi = |w: f64| eval_phi(&model, w);
        let oracle = fine_grid_mu(&phi, &spec, cfg.oracle_dt, cfg.oracle_paths, pair_seeds.child(1_001))?;
        let n = oracle.n_paths as u64;
        report.push(format!("fine-grid@{pair}"), "mean", oracle.mean, oracle.mean_se, n);
        report.push(format!("fine-grid@{pair}"), "var_e", oracle.variance, oracle.variance_se, n);

        for (e, (label, ecfg)) in estimators.iter().enumerate() {
            for (k, &n) in cfg.draws.iter().enumerate() {
                let draws = mu_draws(&model, x, z, 1.0, ecfg, n, pair_seeds.path(&[e as u64, k as u64]))?;
                push_estimator_rows(&mut report, &format!("{label}@{pair}"), &draws, reference);
            }
        }
    }
    report.metadata.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// A labelled filter configuration.
#[derive(Clone, Debug)]
pub struct FilterVariant {
    pub label: String,
    pub kind: FilterKind,
    pub config: FilterConfig,
}

impl FilterVariant {
    pub fn new(label: impl Into<String>, kind: FilterKind, config: FilterConfig) -> Self {
        FilterVariant {
            label: label.into(),
            kind,
            config,
        }
    }

    pub fn with_particles(&self, n: usize) -> Self {
        let mut v = self.clone();
        v.config.n_particles = n;
        v
    }
}

/// Filter output over independent replicate runs, at the non-pseudo steps.
#[derive(Clone, Debug)]
pub struct ReplicateSet {
    pub label: String,
    pub n_particles: usize,
    pub times: Vec<f64>,
    /// `means[r][i]`: filtering mean of run `r` at step `i`.
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub final_ess: Vec<f64>,
    pub wall_secs: f64,
}

impl ReplicateSet {
    fn column(rows: &[Vec<f64>], i: usize) -> Vec<f64> {
        rows.iter().map(|r| r[i]).collect()
    }

    /// Across-run variance of the filtering mean at each step.
    pub fn across_run_variance(&self) -> Vec<f64> {
        (0..self.times.len())
            .map(|i| mean_var(&Self::column(&self.means, i)).1)
            .collect()
    }

    /// Average over runs of the filter's own posterior-variance estimate.
    pub fn mean_posterior_variance(&self) -> Vec<f64> {
        (0..self.times.len())
            .map(|i| mean_var(&Self::column(&self.variances, i)).0)
            .collect()
    }

    pub fn mean_of_means(&self) -> Vec<f64> {
        (0..self.times.len())
            .map(|i| mean_var(&Self::column(&self.means, i)).0)
            .collect()
    }

    /// `σ̂²_i / s²_i` per step, with `σ̂²` an external posterior-variance estimate.
    pub fn ess(&self, posterior_variance: &[f64]) -> Vec<f64> {
        self.across_run_variance()
            .iter()
            .zip(posterior_variance)
            .map(|(s2, v)| v / s2)
            .collect()
    }

    pub fn wall_secs_per_run(&self) -> f64 {
        self.wall_secs / self.means.len() as f64
    }
}

/// Runs `variant` on `data` `replicates` times; run `r` uses `seeds.child(r)`.
pub fn run_replicates(
    variant: &FilterVariant,
    model: &dyn DiffusionModel,
    data: &Dataset,
    replicates: usize,
    seeds: SeedTree,
) -> Result<ReplicateSet> {
    if replicates == 0 {
        return invalid("need at least one replicate");
    }
    let start = Instant::now();
    let mut set = ReplicateSet {
        label: variant.label.clone(),
        n_particles: variant.config.n_particles,
        times: Vec::new(),
        means: Vec::with_capacity(replicates),
        variances: Vec::with_capacity(replicates),
        final_ess: Vec::with_capacity(replicates),
        wall_secs: 0.0,
    };
    for r in 0..replicates {
        let run = run_filter(
            variant.kind,
            model,
            &data.prior,
            data.start_time,
            &data.observations,
            &variant.config,
            None,
            seeds.child(r as u64),
            |_, _| {},
        )?;
        let kept: Vec<_> = run.records.iter().filter(|rec| !rec.is_pseudo).collect();
        if r == 0 {
            set.times = kept.iter().map(|rec| rec.time).collect();
        }
        set.means.push(kept.iter().map(|rec| rec.mean).collect());
        set.variances.push(kept.iter().map(|rec| rec.variance).collect());
        set.final_ess.push(run.final_set.ess_weights);
    }
    set.wall_secs = start.elapsed().as_secs_f64();
    Ok(set)
}

/// EPPF, ESPF, RWPF1 (PE weights) and RWPF2 (GPE-2 weights) for the sine model with
/// particle counts `n`, resampling every step.
pub fn sine_filter_variants(n: [usize; 4], beta: f64) -> Vec<FilterVariant> {
    let u = SineModel::PHI_UPPER;
    let ozaki = |n: usize, est: EstimatorConfig| {
        let mut c = FilterConfig::new(n, est);
        c.proposal = ProposalKind::Ozaki;
        c
    };
    vec![
        FilterVariant::new("EPPF", FilterKind::Eppf, FilterConfig::new(n[0], EstimatorConfig::gpe2(beta))),
        FilterVariant::new("ESPF", FilterKind::Espf, FilterConfig::new(n[1], EstimatorConfig::gpe2(beta))),
        FilterVariant::new("RWPF1", FilterKind::Rwpf, ozaki(n[2], EstimatorConfig::pe(u, u))),
        FilterVariant::new("RWPF2", FilterKind::Rwpf, ozaki(n[3], EstimatorConfig::gpe2(beta))),
    ]
}

/// Particle counts giving each variant the per-run wall time of `reference` at
/// `n_reference` particles, from `runs` timing runs per variant.
pub fn calibrate_particles(
    variants: &[FilterVariant],
    reference: &FilterVariant,
    n_reference: usize,
    model: &dyn DiffusionModel,
    data: &Dataset,
    runs: usize,
    seeds: SeedTree,
) -> Result<Vec<usize>> {
    let runs = runs.max(1);
    let cost = |v: &FilterVariant, n: usize, tag: u64| -> Result<f64> {
        let set = run_replicates(&v.with_particles(n), model, data, runs, seeds.child(tag))?;
        Ok(set.wall_secs_per_run() / n as f64)
    };
    let target = cost(reference, n_reference, 0)? * n_reference as f64;
    variants
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut n = n_reference;
            // Two rounds: the second corrects for costs that are not linear in N.
            for round in 0..2 {
                let per = cost(v, n, 1 + 2 * i as u64 + round)?;
                n = ((target / per / 10.0).round() as usize * 10).max(10);
            }
            Ok(n)
        })
        .collect()
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let (m, v) = mean_var(values);
    (m, (v / values.len() as f64).sqrt())
}

/// Relative efficiency of the sine filters at CPU-matched particle counts and the ESS
/// comparison of RWPF2, the discretisation comparator and pseudo-observation RWPF2 on
/// subsampled data.
///
/// Efficiency of a filter is the step-average of `Var_RWPF2 / Var_filter`, the across-run
/// variances of the filtering mean. ESS rows are labelled `<filter>@every=<k>`.
pub fn bench_filters(cfg: &BenchFiltersConfig, data: &Dataset, seed: u64) -> Result<BenchmarkReport> {
    let start = Instant::now();
    let model = data.model.build()?;
    let seeds = SeedTree::new(seed);
    let mut report = BenchmarkReport::new(seed);

    let n_ref = cfg.n_particles;
    let template = sine_filter_variants([n_ref; 4], cfg.beta);
    let counts = match cfg.matched_particles {
        Some(c) => c.to_vec(),
        None => calibrate_particles(&template[..3], &template[3], n_ref, model.as_ref(), data, cfg.calibration_runs, seeds.child(0))?,
    };
    let variants = sine_filter_variants([counts[0], counts[1], counts[2], n_ref], cfg.beta);
    let sets: Vec<ReplicateSet> = variants
        .iter()
        .enumerate()
        .map(|(i, v)| run_replicates(v, model.as_ref(), data, cfg.replicates, seeds.path(&[1, i as u64])))
        .collect::<Result<_>>()?;
    let reference = sets[3].across_run_variance();
    let reps = cfg.replicates as u64;
    for set in &sets {
        let ratio: Vec<f64> = reference
            .iter()
            .zip(set.across_run_variance())
            .map(|(r, v)| r / v)
            .collect();
        let (eff, eff_se) = mean_se(&ratio);
        report.push(&set.label, "n_particles", set.n_particles as f64, 0.0, reps);
        report.push(&set.label, "relative_efficiency", eff, eff_se, reps);
        report.push(&set.label, "wall_secs_per_run", set.wall_secs_per_run(), 0.0, reps);
    }

    for &every in &cfg.subsample {
        let sub = data.subsample(every)?;
        let times = sub.observation_times();
        let gap = times.first().copied().unwrap_or(1.0) - sub.start_time;
        let ozaki = |est: EstimatorConfig, delta_max: Option<f64>| {
            let mut c = FilterConfig::new(cfg.ess_particles, est);
            c.proposal = ProposalKind::Ozaki;
            c.delta_max = delta_max;
            c
        };
        let points = ((gap / cfg.discretisation_spacing).round() as usize).max(2) - 1;
        let ess_variants = [
            FilterVariant::new("RWPF2", FilterKind::Rwpf, ozaki(EstimatorConfig::gpe2(cfg.beta), None)),
            FilterVariant::new("Discretisation", FilterKind::Rwpf, ozaki(EstimatorConfig::dg(points), None)),
            FilterVariant::new(
                "pseudoRWPF2",
                FilterKind::Rwpf,
                ozaki(EstimatorConfig::gpe2(cfg.beta), Some(cfg.pseudo_spacing)),
            ),
        ];
        let sets: Vec<ReplicateSet> = ess_variants
            .iter()
            .enumerate()
            .map(|(i, v)| run_replicates(v, model.as_ref(), &sub, cfg.replicates, seeds.path(&[2, every as u64, i as u64])))
            .collect::<Result<_>>()?;
        let posterior = sets[2].mean_posterior_variance();
        for set in &sets {
            let (m, se) = mean_se(&set.ess(&posterior));
            report.push(format!("{}@every={every}", set.label), "mean_ess", m, se, reps);
        }
    }
    report.metadata.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Pointwise credible-interval coverage of `|X|` for one filter run on a data set with
/// known truth.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageCheck {
    pub final_ess: f64,
    pub covered: usize,
    pub report_times: usize,
    pub min_ess: f64,
}

/// Runs a filter on `data` and checks whether the central `level` interval of `|X_t|`
/// covers the latent `|X_t|` at every filtering time (including pseudo-observations).
pub fn abs_coverage_check(
    kind: FilterKind,
    data: &Dataset,
    cfg: &FilterConfig,
    level: f64,
    seeds: SeedTree,
) -> Result<CoverageCheck> {
    let model = data.model.build()?;
    let tail = 0.5 * (1.0 - level);
    let mut covered = 0;
    let mut report_times = 0;
    let mut min_ess = f64::INFINITY;
    let run = run_filter(
        kind,
        model.as_ref(),
        &data.prior,
        data.start_time,
        &data.observations,
        cfg,
        None,
        seeds,
        |rec, ps| {
            let lo = ps.quantile(f64::abs, tail);
            let hi = ps.quantile(f64::abs, 1.0 - tail);
            let truth = data.truth_at(rec.time).abs();
            covered += (lo <= truth && truth <= hi) as usize;
            report_times += 1;
            min_ess = min_ess.min(rec.ess_weights);
        },
    )?;
    Ok(CoverageCheck {
        final_ess: run.final_set.ess_weights,
        covered,
        report_times,
        min_ess,
    })
}
