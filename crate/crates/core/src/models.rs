//! Diffusion signal models.
//!
//! A model is a unit-diffusion SDE `dX = α(X) ds + dB` whose drift is the gradient of a
//! potential `A`. Its transition density factorises as
//!
//! ```text
//! p_t(z | x) = N_t(z − x) · exp(A(z) − A(x) − l·t) · E[exp(−∫_0^t φ(W_s) ds)]
//! ```
//!
//! where the expectation is over a Brownian bridge from `x` to `z` and
//! `φ = (α² + α')/2 − l` is shifted by `l` to be non-negative. Cox-process observation
//! models add an intensity `ν`, and the bridge functional becomes `g = φ + ν`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::quadrature::adaptive_simpson;

/// Relative tolerance used when a chord integral has no closed form.
pub const CHORD_REL_TOL: f64 = 1e-8;

pub trait DiffusionModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn drift(&self, x: f64) -> f64;

    /// `α'(x)`, which equals the Laplacian of the potential in one dimension.
    fn drift_derivative(&self, x: f64) -> f64;

    fn potential(&self, x: f64) -> f64;

    /// The shift `l` in `φ = (α² + α')/2 − l`.
    fn shift(&self) -> f64;

    fn phi(&self, x: f64) -> f64 {
        let a = self.drift(x);
        0.5 * (a * a + self.drift_derivative(x)) - self.shift()
    }

    /// Bounds on `φ` valid over the whole state space, when they exist.
    fn phi_global_bounds(&self) -> Option<(f64, f64)> {
        None
    }

    /// `sup_x A(x)`, needed by the exact algorithm's biased-Brownian proposal.
    fn potential_sup(&self) -> Option<f64> {
        None
    }

    /// Cox-process intensity `ν(x)`, if the model carries one.
    fn intensity(&self, _x: f64) -> Option<f64> {
        None
    }

    fn has_intensity(&self) -> bool {
        false
    }

    /// `δ ≥ 0` with `g(u) ≥ −δ(1 + |u|)`, when such a linear lower bound is known.
    fn linear_lower_bound_delta(&self) -> Option<f64> {
        None
    }

    /// Mean and variance of `X_t | X_0 = x0` when the transition law is Gaussian.
    fn transition_moments(&self, _x0: f64, _t: f64) -> Option<(f64, f64)> {
        None
    }

    /// `g = φ` or `g = φ + ν`.
    fn g(&self, include_nu: bool, x: f64) -> f64 {
        let phi = self.phi(x);
        if include_nu {
            phi + self.intensity(x).unwrap_or(0.0)
        } else {
            phi
        }
    }

    /// `(inf g, sup g)` over `[lo, hi]`.
    ///
    /// The default scans a grid and polishes the extremes by golden-section search, then
    /// widens the result by a small guard band. Shipped models override this with exact
    /// critical-point analysis.
    fn g_range(&self, include_nu: bool, lo: f64, hi: f64) -> Result<(f64, f64)> {
        check_interval(lo, hi)?;
        self.check_nu(include_nu)?;
        Ok(numeric_range(|x| self.g(include_nu, x), lo, hi))
    }

    /// `∫_0^T g(x + (z − x)s/T) ds`, the integral of `g` along the straight chord.
    fn g_chord_integral(&self, include_nu: bool, x: f64, z: f64, duration: f64) -> f64 {
        let f = |s: f64| self.g(include_nu, x + (z - x) * s / duration);
        adaptive_simpson(f, 0.0, duration, CHORD_REL_TOL)
    }

    fn check_nu(&self, include_nu: bool) -> Result<()> {
        if include_nu && !self.has_intensity() {
            return Err(Error::Unsupported(format!(
                "model '{}' has no Cox intensity",
                self.name()
            )));
        }
        Ok(())
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if !(lo <= hi) {
        return invalid(format!("interval [{lo}, {hi}] has lo > hi"));
    }
    Ok(())
}

/// `φ(x)` for any model.
pub fn eval_phi(model: &dyn DiffusionModel, x: f64) -> f64 {
    model.phi(x)
}

/// `(inf g, sup g)` over `[lo, hi]` with `g = φ` or `g = φ + ν`.
pub fn g_range_over_interval(
    model: &dyn DiffusionModel,
    include_nu: bool,
    lo: f64,
    hi: f64,
) -> Result<(f64, f64)> {
    model.g_range(include_nu, lo, hi)
}

/// The sine diffusion `dX = sin(X) ds + dB`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SineModel;

impl SineModel {
    pub const PHI_UPPER: f64 = 9.0 / 8.0;

    fn phi_range(lo: f64, hi: f64) -> (f64, f64) {
        let phi = |x: f64| SineModel.phi(x);
        let (mut mn, mut mx) = {
            let (a, b) = (phi(lo), phi(hi));
            (a.min(b), a.max(b))
        };
        if hi - lo >= 2.0 * PI {
            return (0.0, Self::PHI_UPPER);
        }
        // Critical points: multiples of π (φ = 1 at even, 0 at odd) and ±π/3 + 2kπ (φ = 9/8).
        let k0 = (lo / PI).ceil() as i64;
        let k1 = (hi / PI).floor() as i64;
        for k in k0..=k1 {
            let v = if k.rem_euclid(2) == 0 { 1.0 } else { 0.0 };
            mn = mn.min(v);
            mx = mx.max(v);
        }
        for base in [PI / 3.0, -PI / 3.0] {
            let j0 = ((lo - base) / (2.0 * PI)).ceil() as i64;
            let j1 = ((hi - base) / (2.0 * PI)).floor() as i64;
            if j0 <= j1 {
                mx = Self::PHI_UPPER;
            }
        }
        (mn.max(0.0), mx.min(Self::PHI_UPPER))
    }
}

fn sinc(v: f64) -> f64 {
    if v.abs() < 1e-4 {
        1.0 - v * v / 6.0
    } else {
        v.sin() / v
    }
}

impl DiffusionModel for SineModel {
    fn name(&self) -> &str {
        "sine"
    }

    fn drift(&self, x: f64) -> f64 {
        x.sin()
    }

    fn drift_derivative(&self, x: f64) -> f64 {
        x.cos()
    }

    fn potential(&self, x: f64) -> f64 {
        -x.cos()
    }

    fn shift(&self) -> f64 {
        -0.5
    }

    fn phi(&self, x: f64) -> f64 {
        let (s, c) = x.sin_cos();
        0.5 * (s * s + c + 1.0)
    }

    fn phi_global_bounds(&self) -> Option<(f64, f64)> {
        Some((0.0, Self::PHI_UPPER))
    }

    fn potential_sup(&self) -> Option<f64> {
        Some(1.0)
    }

    fn linear_lower_bound_delta(&self) -> Option<f64> {
        Some(0.0)
    }

    fn g_range(&self, include_nu: bool, lo: f64, hi: f64) -> Result<(f64, f64)> {
        check_interval(lo, hi)?;
        self.check_nu(include_nu)?;
        Ok(Self::phi_range(lo, hi))
    }

    fn g_chord_integral(&self, include_nu: bool, x: f64, z: f64, duration: f64) -> f64 {
        debug_assert!(!include_nu);
        // φ(u) = 3/4 − cos(2u)/4 + cos(u)/2, averaged over u uniform on the chord.
        let m = 0.5 * (x + z);
        let d = z - x;
        let mean = 0.75 - 0.25 * (2.0 * m).cos() * sinc(d) + 0.5 * m.cos() * sinc(0.5 * d);
        duration * mean
    }
}

/// Ornstein–Uhlenbeck signal `dX = −ρX ds + dB` with Cox intensity `ν(x) = a + β|x|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OuCoxModel {
    pub rho: f64,
    pub a: f64,
    pub beta: f64,
}

impl OuCoxModel {
    pub fn new(rho: f64, a: f64, beta: f64) -> Result<Self> {
        if !(rho > 0.0) || !(a >= 0.0) || !(beta >= 0.0) {
            return invalid(format!("OU-Cox parameters need rho > 0, a >= 0, beta >= 0; got {rho}, {a}, {beta}"));
        }
        Ok(OuCoxModel { rho, a, beta })
    }

    /// Plain OU signal, for Gaussian observations.
    pub fn ou(rho: f64) -> Result<Self> {
        Self::new(rho, 0.0, 0.0)
    }

    /// Stationary variance `1/(2ρ)`.
    pub fn stationary_variance(&self) -> f64 {
        0.5 / self.rho
    }
}

impl DiffusionModel for OuCoxModel {
    fn name(&self) -> &str {
        "ou_cox"
    }

    fn drift(&self, x: f64) -> f64 {
        -self.rho * x
    }

    fn drift_derivative(&self, _x: f64) -> f64 {
        -self.rho
    }

    fn potential(&self, x: f64) -> f64 {
        -0.5 * self.rho * x * x
    }

    fn shift(&self) -> f64 {
        -0.5 * self.rho
    }

    fn phi(&self, x: f64) -> f64 {
        0.5 * self.rho * self.rho * x * x
    }

    fn potential_sup(&self) -> Option<f64> {
        Some(0.0)
    }

    fn intensity(&self, x: f64) -> Option<f64> {
        Some(self.a + self.beta * x.abs())
    }

    fn has_intensity(&self) -> bool {
        true
    }

    fn linear_lower_bound_delta(&self) -> Option<f64> {
        Some(0.0)
    }

    fn transition_moments(&self, x0: f64, t: f64) -> Option<(f64, f64)> {
        let decay = (-self.rho * t).exp();
        Some((decay * x0, -(-2.0 * self.rho * t).exp_m1() / (2.0 * self.rho)))
    }

    fn g_range(&self, include_nu: bool, lo: f64, hi: f64) -> Result<(f64, f64)> {
        check_interval(lo, hi)?;
        // g is even and non-decreasing in |x|.
        let nearest = 0.0f64.clamp(lo, hi);
        let farthest = if lo.abs() > hi.abs() { lo } else { hi };
        Ok((self.g(include_nu, nearest), self.g(include_nu, farthest)))
    }

    fn g_chord_integral(&self, include_nu: bool, x: f64, z: f64, duration: f64) -> f64 {
        let mean_sq = (x * x + x * z + z * z) / 3.0;
        let mut mean = 0.5 * self.rho * self.rho * mean_sq;
        if include_nu {
            let mean_abs = if x * z >= 0.0 {
                0.5 * (x + z).abs()
            } else {
                0.5 * (x * x + z * z) / (z - x).abs()
            };
            mean += self.a + self.beta * mean_abs;
        }
        duration * mean
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied model built from closures.
///
/// The shift `l` is a required parameter: it must make `φ` non-negative, and there is
/// no general way to compute it.
#[derive(Clone)]
pub struct CustomModel {
    name: String,
    drift: ScalarFn,
    drift_derivative: ScalarFn,
    potential: ScalarFn,
    shift: f64,
    intensity: Option<ScalarFn>,
    phi_bounds: Option<(f64, f64)>,
    potential_sup: Option<f64>,
    delta: Option<f64>,
}

impl CustomModel {
    pub fn new(
        name: impl Into<String>,
        drift: impl Fn(f64) -> f64 + Send + Sync + 'static,
        drift_derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        potential: impl Fn(f64) -> f64 + Send + Sync + 'static,
        shift: f64,
    ) -> Self {
        CustomModel {
            name: name.into(),
            drift: Arc::new(drift),
            drift_derivative: Arc::new(drift_derivative),
            potential: Arc::new(potential),
            shift,
            intensity: None,
            phi_bounds: None,
            potential_sup: None,
            delta: None,
        }
    }

    pub fn with_intensity(mut self, nu: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.intensity = Some(Arc::new(nu));
        self
    }

    pub fn with_phi_bounds(mut self, lower: f64, upper: f64) -> Self {
        self.phi_bounds = Some((lower, upper));
        self
    }

    pub fn with_potential_sup(mut self, sup: f64) -> Self {
        self.potential_sup = Some(sup);
        self
    }

    pub fn with_linear_lower_bound(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }
}

impl fmt::Debug for CustomModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomModel")
            .field("name", &self.name)
            .field("shift", &self.shift)
            .field("has_intensity", &self.intensity.is_some())
            .field("phi_bounds", &self.phi_bounds)
            .finish()
    }
}

impl DiffusionModel for CustomModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    fn drift_derivative(&self, x: f64) -> f64 {
        (self.drift_derivative)(x)
    }

    fn potential(&self, x: f64) -> f64 {
        (self.potential)(x)
    }

    fn shift(&self) -> f64 {
        self.shift
    }

    fn phi_global_bounds(&self) -> Option<(f64, f64)> {
        self.phi_bounds
    }

    fn potential_sup(&self) -> Option<f64> {
        self.potential_sup
    }

    fn intensity(&self, x: f64) -> Option<f64> {
        self.intensity.as_ref().map(|nu| nu(x))
    }

    fn has_intensity(&self) -> bool {
        self.intensity.is_some()
    }

    fn linear_lower_bound_delta(&self) -> Option<f64> {
        self.delta
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    f(0.5 * (a + b)).min(fc).min(fd)
}

/// Grid scan plus golden-section polishing, padded by a guard band.
pub(crate) fn numeric_range(g: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    if lo == hi {
        let v = g(lo);
        return (v, v);
    }
    const CELLS: usize = 512;
    let h = (hi - lo) / CELLS as f64;
    let xs: Vec<f64> = (0..=CELLS).map(|i| lo + i as f64 * h).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    let arg = |better: &dyn Fn(f64, f64) -> bool| {
        (0..=CELLS).fold(0, |best, i| if better(vals[i], vals[best]) { i } else { best })
    };
    let imin = arg(&|a, b| a < b);
    let imax = arg(&|a, b| a > b);
    let window = |i: usize| (xs[i.saturating_sub(1)], xs[(i + 1).min(CELLS)]);

    let (a, b) = window(imin);
    let mn = golden_min(&g, a, b).min(vals[imin]);
    let (a, b) = window(imax);
    let mx = -golden_min(&|x| -g(x), a, b);
    let mx = mx.max(vals[imax]);

    let guard = 1e-9 * (1.0 + mn.abs().max(mx.abs())) + 1e-6 * (mx - mn);
    (mn - guard, mx + guard)
}

/// `η(z) = ∫_{u*}^{z} 1/Σ(v) dv`, the Lamperti transform of a scalar diffusion with
/// diffusion coefficient `Σ`.
pub fn lamperti_transform_1d(
    sigma_fn: impl Fn(f64) -> f64,
    u_star: f64,
    z: f64,
) -> Result<f64> {
    if u_star == z {
        return Ok(0.0);
    }
    let (lo, hi) = (u_star.min(z), u_star.max(z));
    let probes = 1024;
    for i in 0..=probes {
        let v = lo + (hi - lo) * i as f64 / probes as f64;
        let s = sigma_fn(v);
        if !(s > 0.0) {
            return Err(Error::Domain(format!("diffusion coefficient {s} at {v} is not positive")));
        }
    }
    let mut bad = None;
    let value = adaptive_simpson(
        |v| {
            let s = sigma_fn(v);
            if !(s > 0.0) {
                bad = Some(v);
                return 0.0;
            }
            1.0 / s
        },
        u_star,
        z,
        1e-10,
    );
    match bad {
        Some(v) => Err(Error::Domain(format!("diffusion coefficient not positive at {v}"))),
        None => Ok(value),
    }
}
