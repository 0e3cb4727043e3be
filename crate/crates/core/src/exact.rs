//! Exact simulation of diffusion transitions for bounded `φ`, and the two particle
//! filters built on it.
//!
//! A transition over `Δ` is drawn by proposing `z ~ N(x, Δ)`, accepting with
//! probability `exp(A(z) − sup A)`, and then accepting the bridge from `x` to `z` with
//! probability `exp(−∫(φ − L))` by Poisson thinning.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;

use crate::bridge::{BridgePath, BridgeSpec};
use crate::error::{invalid, Error, Result};
use crate::filter::{resample, Observation, Particle, ParticleSet, ResampleScheme, RESAMPLE_TAG};
use crate::models::DiffusionModel;
use crate::rng::SeedTree;
use crate::stats::{ln_normal_pdf, normal_pdf};

/// Accepts the bridge `spec` with probability `exp(−∫ φ)` given its path, for
/// `0 ≤ φ ≤ phi_upper`. Returns the decision and the number of bridge points drawn.
pub fn poisson_thinning<R: Rng + ?Sized>(
    phi: impl Fn(f64) -> f64,
    phi_upper: f64,
    spec: &BridgeSpec,
    rng: &mut R,
) -> Result<(bool, u64)> {
    if !(phi_upper >= 0.0) {
        return invalid("thinning rate must be non-negative");
    }
    if phi_upper == 0.0 {
        return Ok((true, 0));
    }
    let gaps = Exp::new(phi_upper).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut path = BridgePath::new(*spec);
    let mut s = spec.u;
    let mut evaluations = 0;
    loop {
        s += gaps.sample(rng);
        if s >= spec.t {
            return Ok((true, evaluations));
        }
        let mark = rng.random::<f64>() * phi_upper;
        let w = path.sample_at(s, rng)?;
        evaluations += 1;
        let v = phi(w);
        if v > phi_upper * (1.0 + 1e-12) || v < 0.0 {
            return Err(Error::Invariant(format!(
                "phi({w}) = {v} outside [0, {phi_upper}]; the model bound is wrong"
            )));
        }
        if v >= mark {
            return Ok((false, evaluations));
        }
    }
}

/// [`poisson_thinning`] without the cost count.
pub fn poisson_thinning_accept<R: Rng + ?Sized>(
    phi: impl Fn(f64) -> f64,
    phi_upper: f64,
    spec: &BridgeSpec,
    rng: &mut R,
) -> Result<bool> {
    poisson_thinning(phi, phi_upper, spec, rng).map(|(accepted, _)| accepted)
}

/// Cost meter for exact propagation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ea1Meter {
    pub accepted: u64,
    pub rejected: u64,
    pub bridge_evaluations: u64,
}

impl Ea1Meter {
    pub fn proposals(&self) -> u64 {
        self.accepted + self.rejected
    }
}

/// An exact-propagation request from `x0` over `delta`, with its cost meter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ea1Proposal {
    pub x0: f64,
    pub delta: f64,
    pub meter: Ea1Meter,
}

impl Ea1Proposal {
    pub fn new(x0: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return invalid("time increment must be positive");
        }
        Ok(Ea1Proposal {
            x0,
            delta,
            meter: Ea1Meter::default(),
        })
    }

    /// Draws `X_Δ | X_0 = x0` exactly.
    pub fn draw<R: Rng + ?Sized>(&mut self, model: &dyn DiffusionModel, rng: &mut R) -> Result<f64> {
        let bounds = Ea1Bounds::of(model)?;
        loop {
            let z = self.x0 + self.delta.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal);
            if bounds.accept(model, self.x0, z, self.delta, &mut self.meter, rng)? {
                return Ok(z);
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Ea1Bounds {
    phi_lower: f64,
    phi_upper: f64,
    potential_sup: f64,
}

impl Ea1Bounds {
    fn of(model: &dyn DiffusionModel) -> Result<Self> {
        let (phi_lower, phi_upper) = model.phi_global_bounds().ok_or_else(|| {
            Error::Unsupported(format!("exact propagation needs bounded phi; {} has none", model.name()))
        })?;
        let potential_sup = model.potential_sup().ok_or_else(|| {
            Error::Unsupported(format!("exact propagation needs sup A; {} has none", model.name()))
        })?;
        Ok(Ea1Bounds {
            phi_lower,
            phi_upper,
            potential_sup,
        })
    }

    /// Steps (iii) and (iv): the potential test, then thinning.
    fn accept<R: Rng + ?Sized>(
        &self,
        model: &dyn DiffusionModel,
        x0: f64,
        z: f64,
        delta: f64,
        meter: &mut Ea1Meter,
        rng: &mut R,
    ) -> Result<bool> {
        let ok = rng.random::<f64>() < (model.potential(z) - self.potential_sup).exp() && {
            let spec = BridgeSpec::new(x0, z, 0.0, delta)?;
            let lower = self.phi_lower;
            let (ok, evals) =
                poisson_thinning(|w| model.phi(w) - lower, self.phi_upper - lower, &spec, rng)?;
            meter.bridge_evaluations += evals;
            ok
        };
        if ok {
            meter.accepted += 1;
        } else {
            meter.rejected += 1;
        }
        Ok(ok)
    }
}

/// Draws `X_Δ | X_0 = x0` exactly for a model with bounded `φ` and `A`.
pub fn ea1_propagate<R: Rng + ?Sized>(model: &dyn DiffusionModel, x0: f64, delta: f64, rng: &mut R) -> Result<f64> {
    Ea1Proposal::new(x0, delta)?.draw(model, rng)
}

/// Cost of one exact-filter step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExactStepStats {
    pub proposals: u64,
    pub bridge_evaluations: u64,
}

fn gaussian_likelihood(obs: &Observation, x: f64) -> Result<f64> {
    match *obs {
        Observation::Noisy { value, sigma, .. } => Ok(normal_pdf(value, x, sigma * sigma)),
        Observation::Uninformative { .. } => Ok(1.0),
        _ => Err(Error::Unsupported("exact filters take Gaussian or uninformative observations".into())),
    }
}

fn step_delta(ps: &ParticleSet, obs: &Observation) -> Result<f64> {
    let delta = obs.time() - ps.time;
    if !(delta > 0.0) {
        return invalid(format!("observation time {} does not follow {}", obs.time(), ps.time));
    }
    Ok(delta)
}

fn finish(particles: Vec<Particle>, time: f64, ess_betas: f64, resampled: bool) -> Result<ParticleSet> {
    let w: Vec<f64> = particles.iter().map(|p| p.weight).collect();
    let ess_weights = crate::filter::ess(&w)?;
    Ok(ParticleSet {
        particles,
        time,
        ess_weights,
        ess_betas,
        resampled,
        clamp_count: 0,
    })
}

/// Exact propagation filter step: ancestors drawn with probabilities `∝ betas`, each
/// propagated exactly, weighted by `(w_k/Σw)/(β_k/Σβ) · f(y | x_new)`.
pub fn eppf_step(
    ps: &ParticleSet,
    obs: &Observation,
    betas: &[f64],
    model: &dyn DiffusionModel,
    scheme: ResampleScheme,
    seeds: SeedTree,
) -> Result<(ParticleSet, ExactStepStats)> {
    let delta = step_delta(ps, obs)?;
    Ea1Bounds::of(model)?;
    let n = ps.len();
    if betas.len() != n || !(betas.iter().sum::<f64>() > 0.0) {
        return invalid("first-stage weights must be positive somewhere and match the particle count");
    }
    let beta_total: f64 = betas.iter().sum();
    let w_total: f64 = ps.particles.iter().map(|p| p.weight).sum();
    let ancestors = resample(betas, n, scheme, &mut seeds.child(RESAMPLE_TAG).rng())?;
    let ess_betas = crate::filter::ess(betas)?;

    let results: Vec<Result<(Particle, Ea1Meter)>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut rng = seeds.child(j as u64).rng();
            let k = ancestors[j];
            let mut prop = Ea1Proposal::new(ps.particles[k].state, delta)?;
            let x = prop.draw(model, &mut rng)?;
            let correction = (ps.particles[k].weight / w_total) / (betas[k] / beta_total);
            let weight = correction * gaussian_likelihood(obs, x)?;
            Ok((Particle { state: x, weight, ancestor: k }, prop.meter))
        })
        .collect();

    let mut stats = ExactStepStats::default();
    let mut particles = Vec::with_capacity(n);
    for r in results {
        let (p, m) = r?;
        stats.proposals += m.proposals();
        stats.bridge_evaluations += m.bridge_evaluations;
        particles.push(p);
    }
    Ok((finish(particles, obs.time(), ess_betas, true)?, stats))
}

/// Exact simulation filter step: each new particle is an accepted draw of the pair
/// (ancestor, new state) from the filtering recursion itself, so weights are uniform.
///
/// Ancestors are proposed with probability `∝ w_k exp(−A(x_k)) N(y; x_k, σ² + Δ)` and
/// new states from `N(η, τ)` with `η = (x σ² + Δ y)/(σ² + Δ)` and `τ = σ²Δ/(σ² + Δ)`,
/// followed by the exact-propagation acceptance steps.
pub fn espf_step(
    ps: &ParticleSet,
    obs: &Observation,
    model: &dyn DiffusionModel,
    seeds: SeedTree,
) -> Result<(ParticleSet, ExactStepStats)> {
    let delta = step_delta(ps, obs)?;
    let bounds = Ea1Bounds::of(model)?;
    let y = match *obs {
        Observation::Noisy { value, sigma, .. } => Some((value, sigma * sigma)),
        Observation::Uninformative { .. } => None,
        _ => return Err(Error::Unsupported("exact filters take Gaussian or uninformative observations".into())),
    };
    let n = ps.len();
    let log_w: Vec<f64> = ps
        .particles
        .iter()
        .map(|p| {
            let fit = y.map_or(0.0, |(v, s2)| ln_normal_pdf(v, p.state, s2 + delta));
            p.weight.ln() - model.potential(p.state) + fit
        })
        .collect();
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Degenerate("no ancestor has positive proposal weight".into()));
    }
    let weights: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let cumulative: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect();
    let ess_betas = crate::filter::ess(&weights)?;

    let results: Vec<Result<(Particle, Ea1Meter)>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut rng = seeds.child(j as u64).rng();
            let mut meter = Ea1Meter::default();
            loop {
                let u: f64 = rng.random();
                let k = cumulative.partition_point(|&c| c <= u).min(n - 1);
                let x = ps.particles[k].state;
                let (eta, tau) = match y {
                    Some((v, s2)) => ((x * s2 + delta * v) / (s2 + delta), s2 * delta / (s2 + delta)),
                    None => (x, delta),
                };
                let z = Normal::new(eta, tau.sqrt())
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?
                    .sample(&mut rng);
                if bounds.accept(model, x, z, delta, &mut meter, &mut rng)? {
                    return Ok((
                        Particle {
                            state: z,
                            weight: 1.0 / n as f64,
                            ancestor: k,
                        },
                        meter,
                    ));
                }
            }
        })
        .collect();

    let mut stats = ExactStepStats::default();
    let mut particles = Vec::with_capacity(n);
    for r in results {
        let (p, m) = r?;
        stats.proposals += m.proposals();
        stats.bridge_evaluations += m.bridge_evaluations;
        particles.push(p);
    }
    Ok((finish(particles, obs.time(), ess_betas, true)?, stats))
}
