//! The random weight particle filter and shared particle-filter plumbing.
//!
//! Each step chooses ancestors from first-stage weights `β`, resampling only when their
//! effective sample size drops below `C`. It then proposes new states and weights each
//! one by `δ·h·r`, where `r` is an unbiased estimate of the intractable bridge
//! expectation.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{draw_mu, EstimatorConfig};
use crate::exact::{eppf_step, espf_step, ExactStepStats};
use crate::models::DiffusionModel;
use crate::rng::{SeedTree, StreamRng};
use crate::stats::{normal_pdf, weighted_quantile};

/// Seed-tree tag of the resampling stream within a step.
pub(crate) const RESAMPLE_TAG: u64 = u64::MAX;
const PRIOR_TAG: u64 = u64::MAX - 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Particle {
    pub state: f64,
    pub weight: f64,
    pub ancestor: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub time: f64,
    pub ess_weights: f64,
    pub ess_betas: f64,
    pub resampled: bool,
    /// Negative weights clamped to zero in the step that produced this set.
    pub clamp_count: u64,
}

impl ParticleSet {
    /// Equally weighted particles.
    pub fn from_states(states: &[f64], time: f64) -> Self {
        let n = states.len();
        ParticleSet {
            particles: states
                .iter()
                .enumerate()
                .map(|(i, &state)| Particle { state, weight: 1.0, ancestor: i })
                .collect(),
            time,
            ess_weights: n as f64,
            ess_betas: n as f64,
            resampled: false,
            clamp_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn states(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.state).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    /// Weights rescaled to mean one.
    pub fn unit_mean_weights(&self) -> Result<Vec<f64>> {
        let w = self.weights();
        let total: f64 = w.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Degenerate(format!("total particle weight {total} at time {}", self.time)));
        }
        let scale = w.len() as f64 / total;
        Ok(w.into_iter().map(|v| v * scale).collect())
    }

    /// Weighted `q`-quantile of `f(x)`.
    pub fn quantile(&self, f: impl Fn(f64) -> f64, q: f64) -> f64 {
        let values: Vec<f64> = self.particles.iter().map(|p| f(p.state)).collect();
        weighted_quantile(&values, &self.weights(), q)
    }
}

/// Law of the initial state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PriorLaw {
    Point { x: f64 },
    Normal { mean: f64, var: f64 },
}

impl PriorLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            PriorLaw::Point { x } => x,
            PriorLaw::Normal { mean, var } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + var.sqrt() * z
            }
        }
    }
}

/// One observation of the signal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Observation {
    /// `y ~ N(x, σ²)`.
    Noisy { time: f64, value: f64, sigma: f64 },
    /// `ζ(x) = y`, handled by a [`ConstraintSampler`].
    Constrained { time: f64, value: f64 },
    /// An event of a Cox process driven by the signal; pseudo events carry no `ν` factor.
    Event { time: f64, is_pseudo: bool },
    /// A time with no information (`f ≡ 1`).
    Uninformative { time: f64 },
}

impl Observation {
    pub fn time(&self) -> f64 {
        match *self {
            Observation::Noisy { time, .. }
            | Observation::Constrained { time, .. }
            | Observation::Event { time, .. }
            | Observation::Uninformative { time } => time,
        }
    }

    pub fn is_pseudo(&self) -> bool {
        matches!(
            self,
            Observation::Event { is_pseudo: true, .. } | Observation::Uninformative { .. }
        )
    }

    /// Whether `g` includes the Cox intensity over the interval ending here.
    pub fn is_cox(&self) -> bool {
        matches!(self, Observation::Event { .. })
    }

    fn with_time(&self, time: f64, pseudo: bool) -> Observation {
        match self {
            Observation::Event { .. } => Observation::Event { time, is_pseudo: pseudo },
            _ => Observation::Uninformative { time },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleScheme {
    Multinomial,
    #[default]
    Stratified,
    Residual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalKind {
    /// The model's transition law; requires closed-form transition moments.
    #[default]
    Prior,
    /// Locally linearised drift, adapted to Gaussian observations.
    Ozaki,
    /// A user [`ConstraintSampler`] proposing states on `ζ(x) = y`.
    Constraint,
}

/// Proposal for partially observed states: returns a state satisfying the constraint
/// together with its proposal density.
pub trait ConstraintSampler: Send + Sync {
    fn propose(&self, x_prev: f64, delta: f64, y: f64, rng: &mut StreamRng) -> Result<(f64, f64)>;
}

fn default_threshold() -> f64 {
    f64::INFINITY
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub n_particles: usize,
    /// Resample when the ESS of the first-stage weights falls below this. Values above
    /// `N` resample every step.
    #[serde(default = "default_threshold")]
    pub resample_threshold: f64,
    #[serde(default)]
    pub resample_scheme: ResampleScheme,
    #[serde(default)]
    pub proposal: ProposalKind,
    pub estimator: EstimatorConfig,
    /// Maximum spacing between weighting times; pseudo-observations fill larger gaps.
    #[serde(default)]
    pub delta_max: Option<f64>,
}

impl FilterConfig {
    pub fn new(n_particles: usize, estimator: EstimatorConfig) -> Self {
        FilterConfig {
            n_particles,
            resample_threshold: default_threshold(),
            resample_scheme: ResampleScheme::Stratified,
            proposal: ProposalKind::Prior,
            estimator,
            delta_max: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return invalid("need at least one particle");
        }
        if !(self.resample_threshold >= 1.0) {
            return invalid("resample threshold must be at least 1");
        }
        if let Some(d) = self.delta_max {
            if !(d > 0.0) {
                return invalid("pseudo-observation spacing must be positive");
            }
        }
        self.estimator.validate()
    }
}

/// `(Σv)² / Σv²`.
pub fn ess(values: &[f64]) -> Result<f64> {
    let sum: f64 = values.iter().sum();
    let sum_sq: f64 = values.iter().map(|v| v * v).sum();
    if !(sum > 0.0) || !sum_sq.is_finite() {
        return Err(Error::Degenerate(format!("no positive finite weight (sum {sum})")));
    }
    Ok(sum * sum / sum_sq)
}

fn normalise(weights: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::Degenerate(format!("cannot normalise weights with total {total}")));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

fn search(cumulative: &[f64], u: f64) -> usize {
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut c: Vec<f64> = p
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    if let Some(last) = c.last_mut() {
        *last = f64::INFINITY;
    }
    c
}

/// Draws `n` ancestor indices with `E[#copies of j] = n·w_j/Σw`.
pub fn resample<R: Rng + ?Sized>(weights: &[f64], n: usize, scheme: ResampleScheme, rng: &mut R) -> Result<Vec<usize>> {
    let p = normalise(weights)?;
    let cum = cumulative(&p);
    let nf = n as f64;
    Ok(match scheme {
        ResampleScheme::Multinomial => (0..n).map(|_| search(&cum, rng.random::<f64>())).collect(),
        ResampleScheme::Stratified => (0..n)
            .map(|i| search(&cum, (i as f64 + rng.random::<f64>()) / nf))
            .collect(),
        ResampleScheme::Residual => {
            let mut out = Vec::with_capacity(n);
            let mut residual = Vec::with_capacity(p.len());
            for (j, pj) in p.iter().enumerate() {
                let copies = (nf * pj).floor();
                out.extend(std::iter::repeat_n(j, copies as usize));
                residual.push(nf * pj - copies);
            }
            let rest = n - out.len();
            if rest > 0 {
                let rcum = cumulative(&normalise(&residual)?);
                out.extend((0..rest).map(|_| search(&rcum, rng.random::<f64>())));
            }
            out
        }
    })
}

/// Gaussian proposal from the locally linearised drift.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OzakiProposal {
    /// Mean `η` of the linearised transition.
    pub eta: f64,
    /// Variance `τ²` of the linearised transition.
    pub tau2: f64,
    pub mean: f64,
    pub var: f64,
    /// Unnormalised first-stage weight factor `N(y; η, τ² + σ²)`.
    pub beta: f64,
}

/// Linearising `α` around `x` with `k = α'(x)` gives the transition
/// `N(x + α(x)(e^{kΔ} − 1)/k, (e^{2kΔ} − 1)/(2k))`, with the Euler step when `|k| < 1e-6`.
/// Combined with `y ~ N(x, σ²)` this yields the proposal and the predictive weight.
pub fn ozaki_proposal(model: &dyn DiffusionModel, x: f64, y: Option<f64>, delta: f64, sigma: f64) -> OzakiProposal {
    let a = model.drift(x);
    let k = model.drift_derivative(x);
    let (eta, tau2) = if k.abs() < 1e-6 {
        (x + a * delta, delta)
    } else {
        (x + a * (k * delta).exp_m1() / k, (2.0 * k * delta).exp_m1() / (2.0 * k))
    };
    match y {
        Some(y) => {
            let s2 = sigma * sigma;
            OzakiProposal {
                eta,
                tau2,
                mean: (eta * s2 + y * tau2) / (s2 + tau2),
                var: tau2 * s2 / (s2 + tau2),
                beta: normal_pdf(y, eta, tau2 + s2),
            }
        }
        None => OzakiProposal { eta, tau2, mean: eta, var: tau2, beta: 1.0 },
    }
}

/// `h` for Gaussian or constrained observations:
/// `w f N_Δ(x_new − x_prev) exp(A(x_new) − A(x_prev) − lΔ) / (β q)`.
#[allow(clippy::too_many_arguments)]
pub fn weight_h_model_ab(
    w_prev: f64,
    beta: f64,
    x_prev: f64,
    x_new: f64,
    delta: f64,
    model: &dyn DiffusionModel,
    q_density: f64,
    f_value: f64,
) -> Result<f64> {
    if !(q_density > 0.0) {
        return invalid("proposal density must be positive at the proposed state");
    }
    if !(beta > 0.0) {
        return invalid("first-stage weight must be positive for a selected ancestor");
    }
    let log_ratio = model.potential(x_new) - model.potential(x_prev) - model.shift() * delta;
    Ok(w_prev * f_value * normal_pdf(x_new, x_prev, delta) * log_ratio.exp() / (beta * q_density))
}

/// `h` for Cox events: `ν(x_new)` replaces `f`, and is dropped at pseudo-observations.
#[allow(clippy::too_many_arguments)]
pub fn weight_h_model_c(
    w_prev: f64,
    beta: f64,
    x_prev: f64,
    x_new: f64,
    delta: f64,
    model: &dyn DiffusionModel,
    q_density: f64,
    is_pseudo: bool,
) -> Result<f64> {
    let nu = if is_pseudo {
        1.0
    } else {
        model
            .intensity(x_new)
            .ok_or_else(|| Error::Unsupported(format!("model {} has no intensity", model.name())))?
    };
    weight_h_model_ab(w_prev, beta, x_prev, x_new, delta, model, q_density, nu)
}

/// Outcome of the resample-or-carry decision.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub ancestors: Vec<usize>,
    pub deltas: Vec<f64>,
    pub normalised_betas: Vec<f64>,
    pub ess_betas: f64,
    pub resampled: bool,
}

/// Resample from the normalised `β` when their ESS is below `threshold` (`δ = 1`);
/// otherwise keep every particle with `δ_j = β̄_j`.
pub fn pf1_select<R: Rng + ?Sized>(betas: &[f64], threshold: f64, scheme: ResampleScheme, rng: &mut R) -> Result<Selection> {
    let normalised = normalise(betas)?;
    let ess_betas = 1.0 / normalised.iter().map(|b| b * b).sum::<f64>();
    let n = betas.len();
    if ess_betas < threshold {
        Ok(Selection {
            ancestors: resample(&normalised, n, scheme, rng)?,
            deltas: vec![1.0; n],
            normalised_betas: normalised,
            ess_betas,
            resampled: true,
        })
    } else {
        Ok(Selection {
            ancestors: (0..n).collect(),
            deltas: normalised.clone(),
            normalised_betas: normalised,
            ess_betas,
            resampled: false,
        })
    }
}

enum Draw {
    Gaussian { mean: f64, var: f64 },
    Constraint,
}

/// One RWPF step from `ps` to the time of `obs`.
pub fn rwpf_step(
    ps: &ParticleSet,
    obs: &Observation,
    cfg: &FilterConfig,
    model: &dyn DiffusionModel,
    constraint: Option<&dyn ConstraintSampler>,
    seeds: SeedTree,
) -> Result<ParticleSet> {
    let delta = obs.time() - ps.time;
    if !(delta > 0.0) {
        return invalid(format!("observation time {} does not follow {}", obs.time(), ps.time));
    }
    let w = ps.unit_mean_weights()?;
    let n = ps.len();

    let mut draws = Vec::with_capacity(n);
    let mut betas = Vec::with_capacity(n);
    for (p, &wk) in ps.particles.iter().zip(&w) {
        let x = p.state;
        match cfg.proposal {
            ProposalKind::Prior => {
                let (mean, var) = model.transition_moments(x, delta).ok_or_else(|| {
                    Error::Unsupported(format!("prior proposal needs a closed-form transition for {}", model.name()))
                })?;
                draws.push(Draw::Gaussian { mean, var });
                betas.push(wk);
            }
            ProposalKind::Ozaki => {
                let (y, sigma) = match *obs {
                    Observation::Noisy { value, sigma, .. } => (Some(value), sigma),
                    _ => (None, 0.0),
                };
                let oz = ozaki_proposal(model, x, y, delta, sigma);
                draws.push(Draw::Gaussian { mean: oz.mean, var: oz.var });
                betas.push(wk * oz.beta);
            }
            ProposalKind::Constraint => {
                draws.push(Draw::Constraint);
                betas.push(wk);
            }
        }
    }
    if matches!(obs, Observation::Constrained { .. }) && cfg.proposal != ProposalKind::Constraint {
        return invalid("constrained observations need the constraint proposal");
    }

    let mut rng = seeds.child(RESAMPLE_TAG).rng();
    let sel = pf1_select(&betas, cfg.resample_threshold, cfg.resample_scheme, &mut rng)?;

    let propagated: Vec<Result<(Particle, bool)>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut rng = seeds.child(j as u64).rng();
            let k = sel.ancestors[j];
            let x_prev = ps.particles[k].state;
            let (x_new, q) = match draws[k] {
                Draw::Gaussian { mean, var } => {
                    let x_new = Normal::new(mean, var.sqrt())
                        .map_err(|e| Error::InvalidArgument(e.to_string()))?
                        .sample(&mut rng);
                    (x_new, normal_pdf(x_new, mean, var))
                }
                Draw::Constraint => {
                    let sampler = constraint
                        .ok_or_else(|| Error::InvalidArgument("constraint proposal without a sampler".into()))?;
                    let y = match *obs {
                        Observation::Constrained { value, .. } => value,
                        _ => return invalid("constraint proposal needs constrained observations"),
                    };
                    sampler.propose(x_prev, delta, y, &mut rng)?
                }
            };
            let beta = sel.normalised_betas[k];
            let h = match *obs {
                Observation::Noisy { value, sigma, .. } => weight_h_model_ab(
                    w[k],
                    beta,
                    x_prev,
                    x_new,
                    delta,
                    model,
                    q,
                    normal_pdf(value, x_new, sigma * sigma),
                )?,
                Observation::Constrained { .. } | Observation::Uninformative { .. } => {
                    weight_h_model_ab(w[k], beta, x_prev, x_new, delta, model, q, 1.0)?
                }
                Observation::Event { is_pseudo, .. } => {
                    weight_h_model_c(w[k], beta, x_prev, x_new, delta, model, q, is_pseudo)?
                }
            };
            let r = draw_mu(model, obs.is_cox(), x_prev, x_new, delta, &cfg.estimator, &mut rng)?;
            let raw = sel.deltas[j] * h * r.value;
            let clamped = raw < 0.0;
            Ok((
                Particle {
                    state: x_new,
                    weight: raw.max(0.0),
                    ancestor: k,
                },
                clamped,
            ))
        })
        .collect();

    let mut particles = Vec::with_capacity(n);
    let mut clamp_count = 0;
    for item in propagated {
        let (p, clamped) = item?;
        clamp_count += clamped as u64;
        particles.push(p);
    }
    let weights: Vec<f64> = particles.iter().map(|p| p.weight).collect();
    let ess_weights = ess(&weights)
        .map_err(|e| Error::Degenerate(format!("all weights vanished at time {}: {e}", obs.time())))?;
    Ok(ParticleSet {
        particles,
        time: obs.time(),
        ess_weights,
        ess_betas: sel.ess_betas,
        resampled: sel.resampled,
        clamp_count,
    })
}

/// Fills every gap longer than `delta_max` (measured from `start_time`) with the fewest
/// equally spaced no-information observations.
pub fn insert_pseudo_observations(obs: &[Observation], start_time: f64, delta_max: f64) -> Result<Vec<Observation>> {
    if !(delta_max > 0.0) {
        return invalid("pseudo-observation spacing must be positive");
    }
    let mut out = Vec::with_capacity(obs.len());
    let mut prev = start_time;
    for o in obs {
        let gap = o.time() - prev;
        if !(gap > 0.0) {
            return invalid("observation times must be strictly increasing");
        }
        let pieces = ((gap / delta_max) - 1e-9).ceil().max(1.0) as usize;
        for i in 1..pieces {
            out.push(o.with_time(prev + gap * i as f64 / pieces as f64, true));
        }
        out.push(*o);
        prev = o.time();
    }
    Ok(out)
}

/// Self-normalised estimate `Σ w f(x) / Σ w`.
pub fn filter_estimate(ps: &ParticleSet, f: impl Fn(f64) -> f64) -> Result<f64> {
    let total: f64 = ps.particles.iter().map(|p| p.weight).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Degenerate(format!("zero total weight at time {}", ps.time)));
    }
    Ok(ps.particles.iter().map(|p| p.weight * f(p.state)).sum::<f64>() / total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Rwpf,
    /// Bootstrap-style selection with exact propagation.
    Eppf,
    /// Joint rejection sampling of ancestor and new state.
    Espf,
}

/// Per-step trace of a filter run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub is_pseudo: bool,
    pub ess_weights: f64,
    pub ess_betas: f64,
    pub resampled: bool,
    pub clamp_count: u64,
    pub mean: f64,
    pub variance: f64,
    pub proposals: u64,
    pub bridge_evaluations: u64,
}

#[derive(Clone, Debug)]
pub struct FilterRun {
    pub records: Vec<StepRecord>,
    pub final_set: ParticleSet,
    pub total_clamps: u64,
}

/// Initial particle set drawn from `prior`.
pub fn initial_particles(prior: &PriorLaw, n: usize, start_time: f64, seeds: SeedTree) -> ParticleSet {
    let mut rng = seeds.child(PRIOR_TAG).rng();
    let states: Vec<f64> = (0..n).map(|_| prior.sample(&mut rng)).collect();
    ParticleSet::from_states(&states, start_time)
}

/// Runs a filter over `observations`, calling `observer` after every step.
#[allow(clippy::too_many_arguments)]
pub fn run_filter(
    kind: FilterKind,
    model: &dyn DiffusionModel,
    prior: &PriorLaw,
    start_time: f64,
    observations: &[Observation],
    cfg: &FilterConfig,
    constraint: Option<&dyn ConstraintSampler>,
    seeds: SeedTree,
    mut observer: impl FnMut(&StepRecord, &ParticleSet),
) -> Result<FilterRun> {
    cfg.validate()?;
    let observations = match cfg.delta_max {
        Some(d) => insert_pseudo_observations(observations, start_time, d)?,
        None => observations.to_vec(),
    };
    let mut ps = initial_particles(prior, cfg.n_particles, start_time, seeds);
    let mut records = Vec::with_capacity(observations.len());
    let mut total_clamps = 0;
    for (i, obs) in observations.iter().enumerate() {
        let step_seeds = seeds.child(i as u64);
        let mut stats = ExactStepStats::default();
        ps = match kind {
            FilterKind::Rwpf => rwpf_step(&ps, obs, cfg, model, constraint, step_seeds)?,
            FilterKind::Eppf => {
                let betas = ps.weights();
                let (next, s) = eppf_step(&ps, obs, &betas, model, cfg.resample_scheme, step_seeds)?;
                stats = s;
                next
            }
            FilterKind::Espf => {
                let (next, s) = espf_step(&ps, obs, model, step_seeds)?;
                stats = s;
                next
            }
        };
        total_clamps += ps.clamp_count;
        let mean = filter_estimate(&ps, |x| x)?;
        let second = filter_estimate(&ps, |x| x * x)?;
        let record = StepRecord {
            step: i,
            time: ps.time,
            is_pseudo: obs.is_pseudo(),
            ess_weights: ps.ess_weights,
            ess_betas: ps.ess_betas,
            resampled: ps.resampled,
            clamp_count: ps.clamp_count,
            mean,
            variance: (second - mean * mean).max(0.0),
            proposals: stats.proposals,
            bridge_evaluations: stats.bridge_evaluations,
        };
        observer(&record, &ps);
        records.push(record);
    }
    Ok(FilterRun {
        records,
        final_set: ps,
        total_clamps,
    })
}
