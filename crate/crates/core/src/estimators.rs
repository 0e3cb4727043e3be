//! Estimators of `μ_g = E[exp(−∫_u^t g(W_s) ds)]` under a Brownian bridge, and the
//! transition-density estimates built from them.
//!
//! The Poisson estimator (PE) and the generalised Poisson estimators (GPE-1, GPE-2) are
//! unbiased. The discretised comparators (`Dg`, `DurhamGallant`) are consistent but
//! biased. `ExactTransition` is a deterministic stand-in for models with a known
//! Gaussian transition law.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::bridge::{
    BoundedPath, BridgePath, BridgeSpec, GloballyBoundedBridge, LayeredBridge, DEFAULT_SERIES_TOL,
};
use crate::error::{invalid, Error, Result};
use crate::models::DiffusionModel;
use crate::quadrature::adaptive_simpson;
use crate::stats::{ln_normal_pdf, mean_var, normal_pdf};

/// Floor applied to the negative-binomial mean of GPE-2.
pub const GAMMA_FLOOR: f64 = 1e-8;

/// A scalar path functional `g` with a range oracle.
pub trait PathFunctional: Sync {
    fn eval(&self, x: f64) -> f64;

    /// `(inf g, sup g)` over `[lo, hi]`.
    fn range(&self, lo: f64, hi: f64) -> Result<(f64, f64)>;

    /// Bounds valid over the whole real line, if known.
    fn global_bounds(&self) -> Option<(f64, f64)> {
        None
    }

    /// `∫ g` along the straight line from `x` to `z` over `duration`.
    fn chord_integral(&self, x: f64, z: f64, duration: f64) -> f64 {
        adaptive_simpson(|s| self.eval(x + (z - x) * s), 0.0, 1.0, 1e-8) * duration
    }
}

/// `g = φ` or `g = φ + ν` of a model.
#[derive(Clone, Copy, Debug)]
pub struct ModelFunctional<'a> {
    pub model: &'a dyn DiffusionModel,
    pub include_nu: bool,
}

impl<'a> ModelFunctional<'a> {
    pub fn phi(model: &'a dyn DiffusionModel) -> Self {
        ModelFunctional { model, include_nu: false }
    }

    pub fn new(model: &'a dyn DiffusionModel, include_nu: bool) -> Result<Self> {
        model.check_nu(include_nu)?;
        Ok(ModelFunctional { model, include_nu })
    }
}

impl PathFunctional for ModelFunctional<'_> {
    fn eval(&self, x: f64) -> f64 {
        self.model.g(self.include_nu, x)
    }

    fn range(&self, lo: f64, hi: f64) -> Result<(f64, f64)> {
        self.model.g_range(self.include_nu, lo, hi)
    }

    fn global_bounds(&self) -> Option<(f64, f64)> {
        if self.include_nu {
            None
        } else {
            self.model.phi_global_bounds()
        }
    }

    fn chord_integral(&self, x: f64, z: f64, duration: f64) -> f64 {
        self.model.g_chord_integral(self.include_nu, x, z, duration)
    }
}

/// `g ≡ c`.
#[derive(Clone, Copy, Debug)]
pub struct ConstantFunctional(pub f64);

impl PathFunctional for ConstantFunctional {
    fn eval(&self, _x: f64) -> f64 {
        self.0
    }

    fn range(&self, _lo: f64, _hi: f64) -> Result<(f64, f64)> {
        Ok((self.0, self.0))
    }

    fn global_bounds(&self) -> Option<(f64, f64)> {
        Some((self.0, self.0))
    }

    fn chord_integral(&self, _x: f64, _z: f64, duration: f64) -> f64 {
        self.0 * duration
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Pe,
    Gpe1,
    Gpe2,
    /// Exponential of a trapezoid rule along bridge points.
    Dg,
    /// Durham–Gallant importance sampler with the modified Brownian bridge proposal.
    DurhamGallant,
    /// Closed-form transition density (models with Gaussian transitions only).
    ExactTransition,
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Pe => "PE",
            EstimatorKind::Gpe1 => "GPE-1",
            EstimatorKind::Gpe2 => "GPE-2",
            EstimatorKind::Dg => "DG",
            EstimatorKind::DurhamGallant => "DG-IS",
            EstimatorKind::ExactTransition => "exact",
        }
    }

    pub fn is_unbiased(&self) -> bool {
        matches!(self, EstimatorKind::Pe | EstimatorKind::Gpe1 | EstimatorKind::Gpe2 | EstimatorKind::ExactTransition)
    }
}

/// Where the path bounds `(L_W, U_W)` of the GPE family come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsMode {
    /// Global bounds when `g` has them, otherwise a layered bridge.
    #[default]
    Auto,
    Layered,
    Global,
}

fn default_beta() -> f64 {
    10.0
}
fn default_dg_points() -> usize {
    1
}
fn default_layer_factor() -> f64 {
    std::f64::consts::FRAC_1_SQRT_2
}
fn default_series_tol() -> f64 {
    DEFAULT_SERIES_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// PE shift `c`; defaults to the global upper bound of `g`.
    #[serde(default)]
    pub c: Option<f64>,
    /// PE rate `λ`; defaults to the global upper bound of `g`.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Negative-binomial dispersion of GPE-2.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Interior points of the discretised comparators.
    #[serde(default = "default_dg_points")]
    pub dg_points: usize,
    /// Layer width as a multiple of `√(t − u)`.
    #[serde(default = "default_layer_factor")]
    pub layer_width_factor: f64,
    #[serde(default)]
    pub bounds: BoundsMode,
    #[serde(default = "default_series_tol")]
    pub series_tol: f64,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        EstimatorConfig {
            kind,
            c: None,
            lambda: None,
            beta: default_beta(),
            dg_points: default_dg_points(),
            layer_width_factor: default_layer_factor(),
            bounds: BoundsMode::Auto,
            series_tol: default_series_tol(),
        }
    }

    pub fn pe(c: f64, lambda: f64) -> Self {
        EstimatorConfig {
            c: Some(c),
            lambda: Some(lambda),
            ..Self::new(EstimatorKind::Pe)
        }
    }

    pub fn gpe1() -> Self {
        Self::new(EstimatorKind::Gpe1)
    }

    pub fn gpe2(beta: f64) -> Self {
        EstimatorConfig {
            beta,
            ..Self::new(EstimatorKind::Gpe2)
        }
    }

    pub fn dg(points: usize) -> Self {
        EstimatorConfig {
            dg_points: points,
            ..Self::new(EstimatorKind::Dg)
        }
    }

    pub fn durham_gallant(points: usize) -> Self {
        EstimatorConfig {
            dg_points: points,
            ..Self::new(EstimatorKind::DurhamGallant)
        }
    }

    pub fn with_bounds(mut self, bounds: BoundsMode) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l > 0.0) {
                return invalid("PE rate lambda must be positive");
            }
        }
        if !(self.beta > 0.0) {
            return invalid("GPE-2 dispersion must be positive");
        }
        if self.dg_points == 0 {
            return invalid("discretised estimators need at least one interior point");
        }
        if !(self.layer_width_factor > (1.0f64 / 3.0).sqrt()) {
            return invalid("layer width factor must exceed sqrt(1/3)");
        }
        if !(self.series_tol > 0.0) {
            return invalid("series tolerance must be positive");
        }
        Ok(())
    }
}

/// One draw of an estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    /// Bridge evaluations used.
    pub kappa: u64,
    pub negative: bool,
    pub kind: EstimatorKind,
}

impl Estimate {
    fn new(value: f64, kappa: u64, kind: EstimatorKind) -> Self {
        Estimate {
            value,
            kappa,
            negative: value < 0.0,
            kind,
        }
    }
}

/// Law of the number of bridge evaluations in a GPE.
#[derive(Clone, Debug, PartialEq)]
pub enum KappaLaw {
    Poisson { mean: f64 },
    NegBinomial { mean: f64, dispersion: f64 },
    /// Probabilities on `0..len`.
    Discrete(Vec<f64>),
}

impl KappaLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u64> {
        match self {
            KappaLaw::Poisson { mean } => Ok(sample_poisson(*mean, rng)),
            KappaLaw::NegBinomial { mean, dispersion } => {
                let gamma = Gamma::new(*dispersion, mean / dispersion)
                    .map_err(|e| Error::InvalidArgument(format!("negative binomial: {e}")))?;
                let rate = gamma.sample(rng);
                Ok(sample_poisson(rate, rng))
            }
            KappaLaw::Discrete(p) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (k, pk) in p.iter().enumerate() {
                    acc += pk;
                    if u < acc {
                        return Ok(k as u64);
                    }
                }
                Ok(p.iter().rposition(|&pk| pk > 0.0).unwrap_or(0) as u64)
            }
        }
    }

    pub fn ln_pmf(&self, k: u64) -> f64 {
        let kf = k as f64;
        match self {
            KappaLaw::Poisson { mean } => {
                if *mean == 0.0 {
                    return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
                }
                -mean + kf * mean.ln() - ln_gamma(kf + 1.0)
            }
            KappaLaw::NegBinomial { mean, dispersion: b } => {
                ln_gamma(b + kf) - ln_gamma(*b) - ln_gamma(kf + 1.0) + b * (b / (b + mean)).ln()
                    + if k == 0 { 0.0 } else { kf * (mean / (b + mean)).ln() }
            }
            KappaLaw::Discrete(p) => p.get(k as usize).map_or(f64::NEG_INFINITY, |v| v.ln()),
        }
    }
}

fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Checks `L − ε ≤ g ≤ U + ε` for a value produced inside a bounded path.
fn check_bounds(v: f64, lower: f64, upper: f64) -> Result<()> {
    let slack = 1e-9 * (1.0 + upper.abs().max(lower.abs()));
    if v > upper + slack || v < lower - slack {
        return Err(Error::Invariant(format!("g = {v} outside path bounds [{lower}, {upper}]")));
    }
    Ok(())
}

fn uniform_times<R: Rng + ?Sized>(spec: &BridgeSpec, kappa: u64, rng: &mut R) -> Vec<f64> {
    let mut times: Vec<f64> = (0..kappa)
        .map(|_| spec.u + rng.random::<f64>() * spec.duration())
        .collect();
    times.sort_by(f64::total_cmp);
    times
}

/// PE: `e^{(λ−c)T} λ^{−κ} Π (c − g(W_ψ))` with `κ ~ Poisson(λT)`. May be negative.
pub fn poisson_estimator<R: Rng + ?Sized>(
    g: &dyn PathFunctional,
    spec: &BridgeSpec,
    c: f64,
    lambda: f64,
    rng: &mut R,
) -> Result<Estimate> {
    if !(lambda > 0.0) {
        return invalid("PE rate lambda must be positive");
    }
    let t = spec.duration();
    let kappa = sample_poisson(lambda * t, rng);
    let mut path = BridgePath::new(*spec);
    let mut product = 1.0;
    for s in uniform_times(spec, kappa, rng) {
        let w = path.sample_at(s, rng)?;
        product *= (c - g.eval(w)) / lambda;
    }
    Ok(Estimate::new(((lambda - c) * t).exp() * product, kappa, EstimatorKind::Pe))
}

/// A bridge carrying path bounds, either from a layer or from global bounds on `g`.
#[derive(Clone, Debug)]
pub enum BoundedBridge {
    Layered(LayeredBridge),
    Global(GloballyBoundedBridge),
}

impl BoundedPath for BoundedBridge {
    fn spec(&self) -> &BridgeSpec {
        match self {
            BoundedBridge::Layered(b) => b.spec(),
            BoundedBridge::Global(b) => b.spec(),
        }
    }

    fn path_bounds(&self) -> Option<(f64, f64)> {
        match self {
            BoundedBridge::Layered(b) => b.path_bounds(),
            BoundedBridge::Global(b) => b.path_bounds(),
        }
    }

    fn value_at<R: Rng + ?Sized>(&mut self, s: f64, rng: &mut R) -> Result<f64> {
        match self {
            BoundedBridge::Layered(b) => b.value_at(s, rng),
            BoundedBridge::Global(b) => b.value_at(s, rng),
        }
    }
}

/// Builds the bounded path used by the GPE family.
pub fn bounded_bridge<R: Rng + ?Sized>(
    g: &dyn PathFunctional,
    spec: &BridgeSpec,
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<BoundedBridge> {
    let global = match cfg.bounds {
        BoundsMode::Layered => None,
        BoundsMode::Auto => g.global_bounds(),
        BoundsMode::Global => Some(
            g.global_bounds()
                .ok_or_else(|| Error::Unsupported("g has no global bounds".into()))?,
        ),
    };
    if let Some(bounds) = global {
        return Ok(BoundedBridge::Global(GloballyBoundedBridge::new(*spec, bounds)));
    }
    let a = cfg.layer_width_factor * spec.duration().sqrt();
    let mut bridge = LayeredBridge::sample_with_tol(*spec, a, cfg.series_tol, rng)?;
    bridge.bounds_for_g(|lo, hi| g.range(lo, hi))?;
    Ok(BoundedBridge::Layered(bridge))
}

fn bounds_of(path: &impl BoundedPath) -> Result<(f64, f64)> {
    path.path_bounds()
        .ok_or_else(|| Error::InvalidArgument("path bounds must be set before estimation".into()))
}

/// Product `Π (U − g(W_ψ))` over `kappa` uniform times, scaled by `scale` per factor.
fn bounded_product<R: Rng + ?Sized>(
    g: &dyn PathFunctional,
    path: &mut impl BoundedPath,
    kappa: u64,
    scale: f64,
    rng: &mut R,
) -> Result<f64> {
    let (lower, upper) = bounds_of(path)?;
    let spec = *path.spec();
    let mut product = 1.0;
    for s in uniform_times(&spec, kappa, rng) {
        let v = g.eval(path.value_at(s, rng)?);
        check_bounds(v, lower, upper)?;
        product *= ((upper - v) / scale).max(0.0);
    }
    Ok(product)
}

/// GPE with an arbitrary count law:
/// `e^{−UT} T^κ / (κ! p(κ)) · Π (U − g(W_ψ))`.
pub fn gpe<R: Rng + ?Sized>(
    g: &dyn PathFunctional,
    path: &mut impl BoundedPath,
    law: &KappaLaw,
    rng: &mut R,
) -> Result<Estimate> {
    let (_, upper) = bounds_of(path)?;
    let t = path.spec().duration();
    let kappa = law.sample(rng)?;
    let ln_p = law.ln_pmf(kappa);
    if ln_p == f64::NEG_INFINITY {
        return invalid(format!("count law gives zero mass to drawn kappa = {kappa}"));
    }
    let kf = kappa as f64;
    let ln_prefactor = -upper * t + kf * t.ln() - ln_gamma(kf + 1.0) - ln_p;
    let product = bounded_product(g, path, kappa, 1.0, rng)?;
    Ok(Estimate::new(ln_prefactor.exp() * product, kappa, kind_of(law)))
}

fn kind_of(law: &KappaLaw) -> EstimatorKind {
    match law {
        KappaLaw::Poisson { .. } => EstimatorKind::Gpe1,
        _ => EstimatorKind::Gpe2,
    }
}

/// GPE-1: `κ ~ Poisson((U − L)T)`, value `e^{−LT} Π (U − g)/(U − L) ∈ [0, e^{−LT}]`.
pub fn gpe1<R: Rng + ?Sized>(g: &dyn PathFunctional, path: &mut impl BoundedPath, rng: &mut R) -> Result<Estimate> {
    let (lower, upper) = bounds_of(path)?;
    let t = path.spec().duration();
    let base = (-lower * t).exp();
    if upper <= lower {
        return Ok(Estimate::new(base, 0, EstimatorKind::Gpe1));
    }
    let kappa = sample_poisson((upper - lower) * t, rng);
    let product = bounded_product(g, path, kappa, upper - lower, rng)?;
    Ok(Estimate::new(base * product.min(1.0), kappa, EstimatorKind::Gpe1))
}

/// `γ_W = T·U − ∫ g(chord)`, floored at [`GAMMA_FLOOR`].
pub fn gpe2_gamma(g: &dyn PathFunctional, spec: &BridgeSpec, upper: f64) -> f64 {
    let t = spec.duration();
    (t * upper - g.chord_integral(spec.x, spec.z, t)).max(GAMMA_FLOOR)
}

/// GPE-2: negative-binomial count with mean `γ_W` and dispersion `beta`.
pub fn gpe2<R: Rng + ?Sized>(
    g: &dyn PathFunctional,
    path: &mut impl BoundedPath,
    beta: f64,
    rng: &mut R,
) -> Result<Estimate> {
    let (_, upper) = bounds_of(path)?;
    let gamma = gpe2_gamma(g, path.spec(), upper);
    gpe2_with_gamma(g, path, beta, gamma, rng)
}

/// GPE-2 with a caller-supplied negative-binomial mean.
pub fn gpe2_with_gamma<R: Rng + ?Sized>(
    g: &dyn PathFunctional,
    path: &mut impl BoundedPath,
    beta: f64,
    gamma: f64,
    rng: &mut R,
) -> Result<Estimate> {
    if !(beta > 0.0) || !(gamma > 0.0) {
        return invalid("GPE-2 needs positive dispersion and mean");
    }
    let (_, upper) = bounds_of(path)?;
    let t = path.spec().duration();
    let law = KappaLaw::NegBinomial { mean: gamma, dispersion: beta };
    let kappa = law.sample(rng)?;
    let kf = kappa as f64;
    let ln_prefactor = -upper * t + kf * t.ln() + ln_gamma(beta) + (beta + kf) * (beta + gamma).ln()
        - ln_gamma(beta + kf)
        - beta * beta.ln()
        - kf * gamma.ln();
    let product = bounded_product(g, path, kappa, 1.0, rng)?;
    Ok(Estimate::new(ln_prefactor.exp() * product, kappa, EstimatorKind::Gpe2))
}

/// `exp(−trapezoid ∫g)` along the bridge sampled at `points` equally spaced interior times.
pub fn dg_estimator<R: Rng + ?Sized>(
    g: &dyn PathFunctional,
    spec: &BridgeSpec,
    points: usize,
    rng: &mut R,
) -> Result<f64> {
    if points == 0 {
        return invalid("need at least one interior point");
    }
    let h = spec.duration() / (points + 1) as f64;
    let mut prev = spec.x;
    let mut integral = 0.5 * g.eval(spec.x);
    for k in 1..=points {
        let s = spec.u + k as f64 * h;
        let w = crate::bridge::bridge_interpolate(s - h, prev, spec.t, spec.z, s, rng);
        integral += g.eval(w);
        prev = w;
    }
    integral += 0.5 * g.eval(spec.z);
    Ok((-integral * h).exp())
}

/// Durham–Gallant estimate of `p_t(z | x)`: an Euler likelihood over `points` interior
/// points, importance sampled from the modified Brownian bridge.
pub fn durham_gallant_density<R: Rng + ?Sized>(
    model: &dyn DiffusionModel,
    x: f64,
    z: f64,
    t: f64,
    points: usize,
    rng: &mut R,
) -> Result<f64> {
    if points == 0 || !(t > 0.0) {
        return invalid("need t > 0 and at least one interior point");
    }
    let h = t / (points + 1) as f64;
    let mut cur = x;
    let mut ln_w = 0.0;
    for k in 0..points {
        let remaining = t - k as f64 * h;
        let mean = cur + (z - cur) * h / remaining;
        let var = h * (remaining - h) / remaining;
        let next = Normal::new(mean, var.sqrt())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(rng);
        ln_w += ln_normal_pdf(next, cur + model.drift(cur) * h, h) - ln_normal_pdf(next, mean, var);
        cur = next;
    }
    ln_w += ln_normal_pdf(z, cur + model.drift(cur) * h, h);
    Ok(ln_w.exp())
}

/// `N_t(z − x) · exp(A(z) − A(x) − l·t)`, the factor multiplying `μ_φ` in the
/// transition density.
pub fn density_prefactor(model: &dyn DiffusionModel, x: f64, z: f64, t: f64) -> f64 {
    normal_pdf(z, x, t) * (model.potential(z) - model.potential(x) - model.shift() * t).exp()
}

/// One draw of the configured estimator of `μ_g` for the bridge from `x` to `z` over `t`.
pub fn draw_mu<R: Rng + ?Sized>(
    model: &dyn DiffusionModel,
    include_nu: bool,
    x: f64,
    z: f64,
    t: f64,
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<Estimate> {
    let g = ModelFunctional::new(model, include_nu)?;
    let spec = BridgeSpec::new(x, z, 0.0, t)?;
    match cfg.kind {
        EstimatorKind::Pe => {
            let upper = g.global_bounds().map(|b| b.1);
            let c = cfg.c.or(upper).ok_or_else(|| {
                Error::InvalidArgument("PE needs explicit c and lambda when g has no global bound".into())
            })?;
            let lambda = cfg.lambda.or(upper).unwrap_or(c);
            poisson_estimator(&g, &spec, c, lambda, rng)
        }
        EstimatorKind::Gpe1 => {
            let mut path = bounded_bridge(&g, &spec, cfg, rng)?;
            gpe1(&g, &mut path, rng)
        }
        EstimatorKind::Gpe2 => {
            let mut path = bounded_bridge(&g, &spec, cfg, rng)?;
            gpe2(&g, &mut path, cfg.beta, rng)
        }
        EstimatorKind::Dg => {
            let v = dg_estimator(&g, &spec, cfg.dg_points, rng)?;
            Ok(Estimate::new(v, cfg.dg_points as u64, EstimatorKind::Dg))
        }
        EstimatorKind::DurhamGallant | EstimatorKind::ExactTransition => {
            if include_nu {
                return Err(Error::Unsupported(format!(
                    "{} estimates transition densities only",
                    cfg.kind.label()
                )));
            }
            let density = if cfg.kind == EstimatorKind::DurhamGallant {
                durham_gallant_density(model, x, z, t, cfg.dg_points, rng)?
            } else {
                let (mean, var) = model.transition_moments(x, t).ok_or_else(|| {
                    Error::Unsupported(format!("model {} has no closed-form transition", model.name()))
                })?;
                normal_pdf(z, mean, var)
            };
            let kappa = if cfg.kind == EstimatorKind::DurhamGallant { cfg.dg_points as u64 } else { 0 };
            Ok(Estimate::new(density / density_prefactor(model, x, z, t), kappa, cfg.kind))
        }
    }
}

/// One draw of a transition-density estimate `N_t(z − x)·exp(A(z) − A(x) − l·t)·r`.
pub fn transition_density_estimate<R: Rng + ?Sized>(
    model: &dyn DiffusionModel,
    x0: f64,
    xt: f64,
    t: f64,
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<Estimate> {
    cfg.validate()?;
    let r = draw_mu(model, false, x0, xt, t, cfg, rng)?;
    Ok(Estimate {
        value: density_prefactor(model, x0, xt, t) * r.value,
        ..r
    })
}

/// The count law `p_k ∝ √f_k` minimising `Σ f_k / p_k`.
pub fn optimal_kappa_pmf(f: &[f64]) -> Result<Vec<f64>> {
    if f.is_empty() {
        return invalid("need a non-empty sequence");
    }
    if f.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return invalid("all terms must be positive and finite");
    }
    let roots: Vec<f64> = f.iter().map(|v| v.sqrt()).collect();
    let total: f64 = roots.iter().sum();
    Ok(roots.into_iter().map(|r| r / total).collect())
}

/// `Σ f_k / p_k`, the second-moment functional minimised by [`optimal_kappa_pmf`].
pub fn pmf_cost(f: &[f64], p: &[f64]) -> f64 {
    f.iter().zip(p).map(|(fk, pk)| fk / pk).sum()
}

/// `λ_W = (T ∫ (U − g(W_s))² ds)^{1/2}` by the trapezoid rule over sampled `(s, W_s)`.
pub fn stochastic_rate(g: &dyn PathFunctional, path: &[(f64, f64)], upper: f64) -> f64 {
    if path.len() < 2 {
        return 0.0;
    }
    let t = path[path.len() - 1].0 - path[0].0;
    let sq = |w: f64| (upper - g.eval(w)).powi(2);
    let integral: f64 = path
        .windows(2)
        .map(|p| 0.5 * (p[1].0 - p[0].0) * (sq(p[0].1) + sq(p[1].1)))
        .sum();
    (t * integral).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatorDiagnostics {
    pub n: usize,
    pub sample_mean: f64,
    pub sample_variance: f64,
    pub mean_kappa: f64,
    /// Root mean square error about the reference, divided by the reference.
    pub coefficient_of_variation: f64,
    pub negative_count: usize,
    pub lambda_w_estimate: Option<f64>,
}

/// Summary statistics of estimator draws; the CV uses `reference` when given and the
/// sample mean otherwise.
pub fn estimator_diagnostics(samples: &[Estimate], reference: Option<f64>) -> Result<EstimatorDiagnostics> {
    if samples.len() < 2 {
        return invalid("need at least two samples");
    }
    let values: Vec<f64> = samples.iter().map(|e| e.value).collect();
    let (mean, var) = mean_var(&values);
    let n = values.len() as f64;
    let reference = reference.unwrap_or(mean);
    let mse = var * (n - 1.0) / n + (mean - reference).powi(2);
    Ok(EstimatorDiagnostics {
        n: samples.len(),
        sample_mean: mean,
        sample_variance: var,
        mean_kappa: samples.iter().map(|e| e.kappa as f64).sum::<f64>() / n,
        coefficient_of_variation: mse.sqrt() / reference,
        negative_count: samples.iter().filter(|e| e.negative).count(),
        lambda_w_estimate: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{OuCoxModel, SineModel};
    use crate::rng::SeedTree;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn spec(x: f64, z: f64) -> BridgeSpec {
        BridgeSpec::new(x, z, 0.0, 1.0).unwrap()
    }

    fn draws(n: usize, seed: u64, mut f: impl FnMut(&mut crate::rng::StreamRng) -> Estimate) -> Vec<Estimate> {
        let mut rng = SeedTree::new(seed).rng();
        (0..n).map(|_| f(&mut rng)).collect()
    }

    #[test]
    fn pe_constant_g() {
        let g = ConstantFunctional(1.0);
        let sp = spec(0.0, 0.0);
        let est = draws(100_000, 1, |r| poisson_estimator(&g, &sp, 1.0, 1.0, r).unwrap());
        for e in &est {
            assert_eq!(e.value, if e.kappa == 0 { 1.0 } else { 0.0 });
        }
        let d = estimator_diagnostics(&est, None).unwrap();
        let se = (d.sample_variance / d.n as f64).sqrt();
        assert!((d.sample_mean - (-1f64).exp()).abs() < 3.0 * se);
    }

    #[test]
    fn gpe_constant_g() {
        let g = ConstantFunctional(0.7);
        let sp = spec(0.3, -0.2);
        let mut rng = SeedTree::new(2).rng();
        let target = (-0.7f64).exp();
        for law in [
            KappaLaw::Poisson { mean: 1.3 },
            KappaLaw::Discrete(vec![0.5, 0.25, 0.25]),
        ] {
            let mut total = 0.0;
            let n = 20_000;
            for _ in 0..n {
                let mut path = GloballyBoundedBridge::new(sp, (0.7, 0.7));
                let e = gpe(&g, &mut path, &law, &mut rng).unwrap();
                if e.kappa == 0 {
                    assert!((e.value - target / law.ln_pmf(0).exp()).abs() < 1e-12);
                } else {
                    assert_eq!(e.value, 0.0);
                }
                total += e.value;
            }
            let p0 = law.ln_pmf(0).exp();
            let se = target * ((1.0 - p0) / p0 / n as f64).sqrt();
            assert!((total / n as f64 - target).abs() < 3.0 * se);
        }
        let mut path = GloballyBoundedBridge::new(sp, (0.7, 0.7));
        let e = gpe1(&g, &mut path, &mut rng).unwrap();
        assert_eq!((e.value, e.kappa), (target, 0));
    }

    #[test]
    fn gpe2_constant_g_uses_floor() {
        let g = ConstantFunctional(0.4);
        let sp = spec(0.0, 1.0);
        assert_eq!(gpe2_gamma(&g, &sp, 0.4), GAMMA_FLOOR);
        let mut rng = SeedTree::new(3).rng();
        let n = 10_000;
        let mut sum = 0.0;
        let mut positive_kappa = 0;
        for _ in 0..n {
            let mut path = GloballyBoundedBridge::new(sp, (0.4, 0.4));
            let e = gpe2(&g, &mut path, 10.0, &mut rng).unwrap();
            sum += e.value;
            positive_kappa += (e.kappa > 0) as usize;
        }
        assert!(positive_kappa <= 1);
        assert!((sum / n as f64 - (-0.4f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn gpe_requires_bounds() {
        let g = ConstantFunctional(0.0);
        let mut rng = SeedTree::new(4).rng();
        let mut b = LayeredBridge::with_layer(spec(0.0, 0.0), 1.0, 1).unwrap();
        assert!(gpe1(&g, &mut b, &mut rng).is_err());
    }

    #[test]
    fn gpe1_within_bound_and_nonnegative() {
        let g = ModelFunctional::phi(&SineModel);
        let cfg = EstimatorConfig::gpe1().with_bounds(BoundsMode::Layered);
        let mut rng = SeedTree::new(5).rng();
        for (x, z) in [(0.0, 0.0), (0.0, PI)] {
            for _ in 0..2000 {
                let mut path = bounded_bridge(&g, &spec(x, z), &cfg, &mut rng).unwrap();
                let (l, _) = path.path_bounds().unwrap();
                let e = gpe1(&g, &mut path, &mut rng).unwrap();
                assert!(e.value >= 0.0 && e.value <= (-l).exp());
            }
        }
    }

    #[test]
    fn ou_density_is_unbiased() {
        let model = OuCoxModel::ou(0.5).unwrap();
        let cfg = EstimatorConfig::gpe2(10.0);
        let n = 100_000;
        let est = draws(n, 6, |r| transition_density_estimate(&model, 0.0, 0.5, 1.0, &cfg, r).unwrap());
        let (m, v) = mean_var(&est.iter().map(|e| e.value).collect::<Vec<_>>());
        let (mean, var) = model.transition_moments(0.0, 1.0).unwrap();
        let exact = normal_pdf(0.5, mean, var);
        assert!((m - exact).abs() < 3.0 * (v / n as f64).sqrt(), "{m} vs {exact}");
        assert!(est.iter().all(|e| e.value >= 0.0));
    }

    #[test]
    fn exact_transition_reproduces_density() {
        let model = OuCoxModel::ou(0.5).unwrap();
        let cfg = EstimatorConfig::new(EstimatorKind::ExactTransition);
        let mut rng = SeedTree::new(7).rng();
        let e = transition_density_estimate(&model, 0.2, -0.4, 0.7, &cfg, &mut rng).unwrap();
        let (mean, var) = model.transition_moments(0.2, 0.7).unwrap();
        assert!((e.value - normal_pdf(-0.4, mean, var)).abs() < 1e-14);
        assert!(transition_density_estimate(&SineModel, 0.0, 0.0, 1.0, &cfg, &mut rng).is_err());
    }

    #[test]
    fn discretised_estimators_are_exact_for_constant_g() {
        let g = ConstantFunctional(0.8);
        let mut rng = SeedTree::new(8).rng();
        for m in [1, 5] {
            let v = dg_estimator(&g, &spec(0.0, 2.0), m, &mut rng).unwrap();
            assert!((v - (-0.8f64).exp()).abs() < 1e-14);
        }
        assert!(dg_estimator(&g, &spec(0.0, 2.0), 0, &mut rng).is_err());
    }

    #[test]
    fn durham_gallant_is_exact_for_brownian_motion() {
        let bm = crate::models::CustomModel::new("bm", |_| 0.0, |_| 0.0, |_| 0.0, 0.0);
        let mut rng = SeedTree::new(9).rng();
        for m in [1, 5] {
            let p = durham_gallant_density(&bm, 0.3, 1.1, 2.0, m, &mut rng).unwrap();
            assert!((p - normal_pdf(1.1, 0.3, 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn pe_defaults_need_global_bound() {
        let model = OuCoxModel::ou(0.5).unwrap();
        let mut rng = SeedTree::new(10).rng();
        let cfg = EstimatorConfig::new(EstimatorKind::Pe);
        assert!(draw_mu(&model, false, 0.0, 0.0, 1.0, &cfg, &mut rng).is_err());
        assert!(draw_mu(&SineModel, false, 0.0, 0.0, 1.0, &cfg, &mut rng).is_ok());
        let sine_with_nu = EstimatorConfig::gpe2(10.0);
        assert!(draw_mu(&SineModel, true, 0.0, 0.0, 1.0, &sine_with_nu, &mut rng).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::gpe2(0.0).validate().is_err());
        assert!(EstimatorConfig::dg(0).validate().is_err());
        assert!(EstimatorConfig::pe(1.0, -1.0).validate().is_err());
        assert!(EstimatorConfig::gpe2(10.0).validate().is_ok());
        let parsed: EstimatorConfig = serde_json::from_str(r#"{"kind":"gpe2"}"#).unwrap();
        assert_eq!(parsed, EstimatorConfig::gpe2(10.0));
    }

    #[test]
    fn optimal_pmf_examples() {
        assert_eq!(optimal_kappa_pmf(&[1.0, 1.0]).unwrap(), vec![0.5, 0.5]);
        let p = optimal_kappa_pmf(&[1.0, 4.0]).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15 && (p[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!(optimal_kappa_pmf(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn diagnostics_examples() {
        let e = |v| Estimate::new(v, 1, EstimatorKind::Pe);
        let d = estimator_diagnostics(&[e(0.0), e(2.0)], None).unwrap();
        assert_eq!((d.sample_mean, d.sample_variance), (1.0, 2.0));
        let d = estimator_diagnostics(&[e(3.0); 4], None).unwrap();
        assert_eq!(d.sample_variance, 0.0);
        assert!(estimator_diagnostics(&[e(1.0)], None).is_err());
    }

    #[test]
    fn kappa_law_pmfs_sum_to_one() {
        for law in [
            KappaLaw::Poisson { mean: 2.5 },
            KappaLaw::NegBinomial { mean: 0.7, dispersion: 10.0 },
        ] {
            let total: f64 = (0..200).map(|k| law.ln_pmf(k).exp()).sum();
            assert!((total - 1.0).abs() < 1e-12);
            let mean: f64 = (0..200).map(|k| k as f64 * law.ln_pmf(k).exp()).sum();
            let expected = match law {
                KappaLaw::Poisson { mean } | KappaLaw::NegBinomial { mean, .. } => mean,
                _ => unreachable!(),
            };
            assert!((mean - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn stochastic_rate_of_constant_gap() {
        let g = ConstantFunctional(0.25);
        let path = [(0.0, 0.0), (0.5, 1.0), (2.0, -1.0)];
        assert!((stochastic_rate(&g, &path, 1.0) - 1.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn optimal_pmf_beats_random_pmfs(
            f in proptest::collection::vec(0.01f64..10.0, 6),
            q in proptest::collection::vec(0.01f64..1.0, 6),
        ) {
            let p = optimal_kappa_pmf(&f).unwrap();
            let total: f64 = q.iter().sum();
            let q: Vec<f64> = q.iter().map(|v| v / total).collect();
            prop_assert!(pmf_cost(&f, &p) <= pmf_cost(&f, &q) * (1.0 + 1e-12));
        }

        #[test]
        fn gpe2_draws_are_nonnegative(x in -4.0f64..4.0, z in -4.0f64..4.0, seed in 0u64..1000) {
            let g = ModelFunctional::phi(&SineModel);
            let cfg = EstimatorConfig::gpe2(10.0).with_bounds(BoundsMode::Layered);
            let mut rng = SeedTree::new(seed).rng();
            let mut path = bounded_bridge(&g, &spec(x, z), &cfg, &mut rng).unwrap();
            let e = gpe2(&g, &mut path, 10.0, &mut rng).unwrap();
            prop_assert!(e.value >= 0.0 && e.value.is_finite());
        }
    }
}
