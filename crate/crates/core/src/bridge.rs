//! Brownian bridges and the layered bridge construction.
//!
//! A [`LayeredBridge`] is a Brownian bridge from `x` at time `u` to `z` at time `t`
//! together with a layer index `J`. With `A_j = [min(x,z) − j·a, max(x,z) + j·a]`, the
//! path lies in `D_J`: it leaves `A_{J−1}` but stays inside `A_J`. Knowing `J` bounds
//! the whole path, which in turn bounds any continuous functional `g` along it.
//!
//! Layer probabilities come from the classical alternating series for the probability
//! that a Brownian bridge stays between two barriers. Partial sums of that series
//! bracket the true value once the index passes a known threshold, so every Bernoulli
//! decision made from it is exact: when a uniform draw falls inside the current bracket
//! the series is simply extended.
//!
//! A path touching a layer boundary counts as leaving that layer. The event has
//! probability zero and the convention only matters for the strict inequalities below.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};

/// Default truncation tolerance for the non-crossing series.
pub const DEFAULT_SERIES_TOL: f64 = 1e-10;
const MIN_SERIES_TOL: f64 = 1e-15;
const MAX_SERIES_TERMS: usize = 100_000;

/// Endpoints and time window of a one-dimensional Brownian bridge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BridgeSpec {
    pub x: f64,
    pub z: f64,
    pub u: f64,
    pub t: f64,
}

impl BridgeSpec {
    pub fn new(x: f64, z: f64, u: f64, t: f64) -> Result<Self> {
        if !(t > u) {
            return invalid(format!("bridge end time {t} must exceed start time {u}"));
        }
        if !x.is_finite() || !z.is_finite() {
            return invalid("bridge endpoints must be finite");
        }
        Ok(BridgeSpec { x, z, u, t })
    }

    pub fn duration(&self) -> f64 {
        self.t - self.u
    }

    /// `[min(x,z), max(x,z)]`, the layer-0 set.
    pub fn hull(&self) -> (f64, f64) {
        (self.x.min(self.z), self.x.max(self.z))
    }

    fn check_time(&self, s: f64) -> Result<()> {
        if !(self.u <= s && s <= self.t) {
            return invalid(format!("time {s} outside bridge window [{}, {}]", self.u, self.t));
        }
        Ok(())
    }
}

/// Draws `W_s` for a bridge pinned at `(s0, w0)` and `(s1, w1)`, `s0 < s < s1`.
pub fn bridge_interpolate<R: Rng + ?Sized>(s0: f64, w0: f64, s1: f64, w1: f64, s: f64, rng: &mut R) -> f64 {
    let span = s1 - s0;
    let mean = w0 + (s - s0) / span * (w1 - w0);
    let var = (s - s0) * (s1 - s) / span;
    let z: f64 = StandardNormal.sample(rng);
    mean + var.sqrt() * z
}

/// Draws `W_s` given the known points (sorted by time, including both endpoints).
pub fn bridge_point<R: Rng + ?Sized>(
    spec: &BridgeSpec,
    known: &[(f64, f64)],
    s: f64,
    rng: &mut R,
) -> Result<f64> {
    spec.check_time(s)?;
    let idx = known.partition_point(|p| p.0 < s);
    if idx < known.len() && known[idx].0 == s {
        return Ok(known[idx].1);
    }
    if idx == 0 || idx == known.len() {
        return invalid("known points must bracket the query time");
    }
    let (s0, w0) = known[idx - 1];
    let (s1, w1) = known[idx];
    Ok(bridge_interpolate(s0, w0, s1, w1, s, rng))
}

/// A Brownian bridge with a growing set of sampled points.
#[derive(Clone, Debug)]
pub struct BridgePath {
    spec: BridgeSpec,
    points: Vec<(f64, f64)>,
}

impl BridgePath {
    pub fn new(spec: BridgeSpec) -> Self {
        BridgePath {
            points: vec![(spec.u, spec.x), (spec.t, spec.z)],
            spec,
        }
    }

    pub fn spec(&self) -> &BridgeSpec {
        &self.spec
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn sample_at<R: Rng + ?Sized>(&mut self, s: f64, rng: &mut R) -> Result<f64> {
        let w = bridge_point(&self.spec, &self.points, s, rng)?;
        let idx = self.points.partition_point(|p| p.0 < s);
        if idx == self.points.len() || self.points[idx].0 != s {
            self.points.insert(idx, (s, w));
        }
        Ok(w)
    }
}

/// Certified bracket `[lower, upper]` around a probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Envelope {
    pub lower: f64,
    pub upper: f64,
}

impl Envelope {
    pub const ZERO: Envelope = Envelope { lower: 0.0, upper: 0.0 };

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Bracket for `P(lower < W_s < upper for all s)` for a bridge from `x` to `z` over
/// `duration`, with width below `tol`.
///
/// Writing `D = upper − lower`, the crossing probability is `Σ_j (σ_j − τ_j)` with
///
/// ```text
/// σ_j = exp(−2(Dj + lower − x)(Dj + lower − z)/T) + exp(−2(Dj − upper + x)(Dj − upper + z)/T)
/// τ_j = exp(−2jD(Dj + x − z)/T) + exp(−2jD(Dj − x + z)/T)
/// ```
///
/// and the partial sums `S_{2k} = 1 − Σ_{j≤k}(σ_j − τ_j)`, `S_{2k+1} = S_{2k} − σ_{k+1}`
/// alternate monotonically around the answer for `k ≥ ⌈√(T + D²)/(2D)⌉`.
pub fn noncrossing_envelope(x: f64, z: f64, duration: f64, lower: f64, upper: f64, tol: f64) -> Envelope {
    if !(lower < x && x < upper && lower < z && z < upper) {
        return Envelope::ZERO;
    }
    let d = upper - lower;
    let t = duration;
    let k_bar = ((t + d * d).sqrt() / (2.0 * d)).ceil().max(1.0) as usize;
    let mut even = 1.0;
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 1.0;
    for j in 1..=MAX_SERIES_TERMS {
        let jf = j as f64;
        let dj = d * jf;
        let sigma = (-2.0 * (dj + lower - x) * (dj + lower - z) / t).exp()
            + (-2.0 * (dj - upper + x) * (dj - upper + z) / t).exp();
        let tau = (-2.0 * dj * (dj + x - z) / t).exp() + (-2.0 * dj * (dj - x + z) / t).exp();
        let odd = even - sigma;
        even = odd + tau;
        if j > k_bar {
            lo = lo.max(odd);
        }
        if j >= k_bar {
            hi = hi.min(even);
        }
        if j > k_bar && (hi - lo < tol || (sigma == 0.0 && tau == 0.0)) {
            break;
        }
    }
    let lower = lo.clamp(0.0, 1.0);
    Envelope {
        lower,
        upper: hi.clamp(lower, 1.0),
    }
}

/// `P(lower < W_s < upper ∀ s ∈ [u, t])`, accurate to `tol`. Endpoints on or outside a
/// barrier give 0.
pub fn two_sided_noncrossing_prob(spec: &BridgeSpec, lower: f64, upper: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return invalid("series tolerance must be positive");
    }
    Ok(noncrossing_envelope(spec.x, spec.z, spec.duration(), lower, upper, tol).midpoint())
}

/// Default layer width `√((t − u)/2)`.
pub fn default_layer_width(duration: f64) -> f64 {
    (0.5 * duration).sqrt()
}

fn check_layer_width(duration: f64, a: f64) -> Result<()> {
    if !(a > (duration / 3.0).sqrt()) {
        return invalid(format!(
            "layer width {a} must exceed sqrt(duration/3) = {}",
            (duration / 3.0).sqrt()
        ));
    }
    Ok(())
}

/// The set `A_j = [min(x,z) − j·a, max(x,z) + j·a]`.
pub fn layer_rectangle(spec: &BridgeSpec, a: f64, j: u32) -> (f64, f64) {
    let (lo, hi) = spec.hull();
    (lo - j as f64 * a, hi + j as f64 * a)
}

/// Draws the layer index `J`, with `P(J ≤ j)` the probability of staying inside `A_j`.
pub fn sample_layer<R: Rng + ?Sized>(spec: &BridgeSpec, a: f64, rng: &mut R) -> Result<u32> {
    sample_layer_with_tol(spec, a, DEFAULT_SERIES_TOL, rng)
}

fn sample_layer_with_tol<R: Rng + ?Sized>(spec: &BridgeSpec, a: f64, tol: f64, rng: &mut R) -> Result<u32> {
    check_layer_width(spec.duration(), a)?;
    let u: f64 = rng.random();
    for j in 1..=100_000u32 {
        let (lo, hi) = layer_rectangle(spec, a, j);
        let mut tol_j = tol;
        loop {
            let env = noncrossing_envelope(spec.x, spec.z, spec.duration(), lo, hi, tol_j);
            if u < env.lower {
                return Ok(j);
            }
            if u >= env.upper {
                break;
            }
            if tol_j <= MIN_SERIES_TOL {
                if u < env.midpoint() {
                    return Ok(j);
                }
                break;
            }
            tol_j = (tol_j * 1e-3).max(MIN_SERIES_TOL);
        }
    }
    invalid("layer sampling did not terminate")
}

/// `P(J = j)` for `j = 1..=jmax`.
pub fn layer_distribution(spec: &BridgeSpec, a: f64, jmax: u32, tol: f64) -> Result<Vec<f64>> {
    check_layer_width(spec.duration(), a)?;
    let mut prev = 0.0;
    let mut probs = Vec::with_capacity(jmax as usize);
    for j in 1..=jmax {
        let (lo, hi) = layer_rectangle(spec, a, j);
        let cdf = noncrossing_envelope(spec.x, spec.z, spec.duration(), lo, hi, tol).midpoint();
        probs.push(cdf - prev);
        prev = cdf;
    }
    Ok(probs)
}

/// A Brownian bridge conditioned on its layer, with lazily sampled interior points.
#[derive(Clone, Debug)]
pub struct LayeredBridge {
    spec: BridgeSpec,
    a: f64,
    layer: u32,
    tol: f64,
    points: Vec<(f64, f64)>,
    /// Per segment: probability of staying inside `A_J`.
    outer: Vec<Envelope>,
    /// Per segment: probability of staying inside `A_{J−1}`.
    inner: Vec<Envelope>,
    bounds: Option<(f64, f64)>,
    proposals: u64,
}

impl LayeredBridge {
    /// Samples the layer and returns the bridge with only its endpoints known.
    pub fn sample<R: Rng + ?Sized>(spec: BridgeSpec, a: f64, rng: &mut R) -> Result<Self> {
        let layer = sample_layer(&spec, a, rng)?;
        Self::with_layer(spec, a, layer)
    }

    /// As [`LayeredBridge::sample`] with an explicit series tolerance.
    pub fn sample_with_tol<R: Rng + ?Sized>(spec: BridgeSpec, a: f64, tol: f64, rng: &mut R) -> Result<Self> {
        if !(tol > 0.0) {
            return invalid("series tolerance must be positive");
        }
        let layer = sample_layer_with_tol(&spec, a, tol, rng)?;
        let mut bridge = Self::with_layer(spec, a, layer)?;
        bridge.tol = tol;
        Ok(bridge)
    }

    /// A bridge conditioned on a given layer.
    pub fn with_layer(spec: BridgeSpec, a: f64, layer: u32) -> Result<Self> {
        check_layer_width(spec.duration(), a)?;
        if layer == 0 {
            return invalid("layer index starts at 1");
        }
        let mut bridge = LayeredBridge {
            spec,
            a,
            layer,
            tol: DEFAULT_SERIES_TOL,
            points: vec![(spec.u, spec.x), (spec.t, spec.z)],
            outer: Vec::new(),
            inner: Vec::new(),
            bounds: None,
            proposals: 0,
        };
        bridge.outer.push(bridge.segment(0, 1, layer, bridge.tol));
        bridge.inner.push(bridge.segment(0, 1, layer - 1, bridge.tol));
        Ok(bridge)
    }

    pub fn spec(&self) -> &BridgeSpec {
        &self.spec
    }

    pub fn width(&self) -> f64 {
        self.a
    }

    pub fn layer(&self) -> u32 {
        self.layer
    }

    /// Sampled points including both endpoints, sorted by time.
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.bounds
    }

    /// Total proposals drawn by the rejection sampler.
    pub fn proposals(&self) -> u64 {
        self.proposals
    }

    /// The layer-`J` set, which contains the whole path.
    pub fn rectangle(&self) -> (f64, f64) {
        layer_rectangle(&self.spec, self.a, self.layer)
    }

    fn segment(&self, i: usize, k: usize, j: u32, tol: f64) -> Envelope {
        let (s0, w0) = self.points[i];
        let (s1, w1) = self.points[k];
        let (lo, hi) = layer_rectangle(&self.spec, self.a, j);
        noncrossing_envelope(w0, w1, s1 - s0, lo, hi, tol)
    }

    /// Products of the segment envelopes excluding segment `skip`, as `(lo, hi)` pairs
    /// for the outer and inner sets.
    fn other_products(&self, skip: usize, tol: Option<f64>) -> ((f64, f64), (f64, f64)) {
        let mut outer = (1.0, 1.0);
        let mut inner = (1.0, 1.0);
        for i in 0..self.outer.len() {
            if i == skip {
                continue;
            }
            let (o, n) = match tol {
                Some(tol) => (
                    self.segment(i, i + 1, self.layer, tol),
                    self.segment(i, i + 1, self.layer - 1, tol),
                ),
                None => (self.outer[i], self.inner[i]),
            };
            outer = (outer.0 * o.lower, outer.1 * o.upper);
            inner = (inner.0 * n.lower, inner.1 * n.upper);
        }
        (outer, inner)
    }

    /// Draws `W_s` from the bridge law conditioned on `D_J` and on every point sampled so
    /// far, then records it.
    ///
    /// Proposals come from the unconditioned bridge between the neighbouring points and
    /// are accepted with probability `P(D_J | points ∪ {W_s})`, which is a difference of
    /// products of non-crossing probabilities over the segments.
    pub fn sample_at<R: Rng + ?Sized>(&mut self, s: f64, rng: &mut R) -> Result<f64> {
        self.spec.check_time(s)?;
        let idx = self.points.partition_point(|p| p.0 < s);
        if idx < self.points.len() && self.points[idx].0 == s {
            return Ok(self.points[idx].1);
        }
        let seg = idx - 1;
        let (s0, w0) = self.points[seg];
        let (s1, w1) = self.points[idx];
        let outer_set = layer_rectangle(&self.spec, self.a, self.layer);
        let inner_set = layer_rectangle(&self.spec, self.a, self.layer - 1);
        let (mut others_outer, mut others_inner) = self.other_products(seg, None);

        loop {
            self.proposals += 1;
            let w = bridge_interpolate(s0, w0, s1, w1, s, rng);
            if !(outer_set.0 < w && w < outer_set.1) {
                continue;
            }
            let uniform: f64 = rng.random();
            let mut tol = self.tol;
            let accept = loop {
                let ol = noncrossing_envelope(w0, w, s - s0, outer_set.0, outer_set.1, tol);
                let or = noncrossing_envelope(w, w1, s1 - s, outer_set.0, outer_set.1, tol);
                let il = noncrossing_envelope(w0, w, s - s0, inner_set.0, inner_set.1, tol);
                let ir = noncrossing_envelope(w, w1, s1 - s, inner_set.0, inner_set.1, tol);
                let lo = others_outer.0 * ol.lower * or.lower - others_inner.1 * il.upper * ir.upper;
                let hi = others_outer.1 * ol.upper * or.upper - others_inner.0 * il.lower * ir.lower;
                if uniform < lo {
                    break true;
                }
                if uniform >= hi {
                    break false;
                }
                if tol <= MIN_SERIES_TOL {
                    break uniform < 0.5 * (lo + hi);
                }
                tol = (tol * 1e-3).max(MIN_SERIES_TOL);
                (others_outer, others_inner) = self.other_products(seg, Some(tol));
            };
            if accept {
                self.points.insert(idx, (s, w));
                let left = (self.segment(seg, idx, self.layer, self.tol), self.segment(seg, idx, self.layer - 1, self.tol));
                let right = (
                    self.segment(idx, idx + 1, self.layer, self.tol),
                    self.segment(idx, idx + 1, self.layer - 1, self.tol),
                );
                self.outer[seg] = left.0;
                self.inner[seg] = left.1;
                self.outer.insert(idx, right.0);
                self.inner.insert(idx, right.1);
                return Ok(w);
            }
        }
    }

    /// Applies a range oracle to the layer set and stores the resulting `(L_W, U_W)`.
    pub fn bounds_for_g(
        &mut self,
        g_range: impl FnOnce(f64, f64) -> Result<(f64, f64)>,
    ) -> Result<(f64, f64)> {
        let (lo, hi) = self.rectangle();
        let bounds = g_range(lo, hi)?;
        self.bounds = Some(bounds);
        Ok(bounds)
    }
}

/// Independent layered bridges, one per coordinate, sharing a time window.
#[derive(Clone, Debug)]
pub struct ProductLayeredBridge {
    coords: Vec<LayeredBridge>,
}

impl ProductLayeredBridge {
    pub fn sample<R: Rng + ?Sized>(specs: &[BridgeSpec], a: &[f64], rng: &mut R) -> Result<Self> {
        if specs.is_empty() || specs.len() != a.len() {
            return invalid("need one layer width per coordinate");
        }
        if specs.iter().any(|s| s.u != specs[0].u || s.t != specs[0].t) {
            return invalid("coordinates must share the time window");
        }
        let coords = specs
            .iter()
            .zip(a)
            .map(|(spec, &a)| LayeredBridge::sample(*spec, a, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProductLayeredBridge { coords })
    }

    pub fn coords(&self) -> &[LayeredBridge] {
        &self.coords
    }

    /// The hyperrectangle containing the path.
    pub fn rectangle(&self) -> Vec<(f64, f64)> {
        self.coords.iter().map(LayeredBridge::rectangle).collect()
    }

    pub fn sample_at<R: Rng + ?Sized>(&mut self, s: f64, rng: &mut R) -> Result<Vec<f64>> {
        self.coords.iter_mut().map(|c| c.sample_at(s, rng)).collect()
    }
}

/// A bridge whose functional `g` is bounded by a known `(L, U)` along the whole path.
pub trait BoundedPath {
    fn spec(&self) -> &BridgeSpec;
    fn path_bounds(&self) -> Option<(f64, f64)>;
    fn value_at<R: Rng + ?Sized>(&mut self, s: f64, rng: &mut R) -> Result<f64>;
}

impl BoundedPath for LayeredBridge {
    fn spec(&self) -> &BridgeSpec {
        &self.spec
    }

    fn path_bounds(&self) -> Option<(f64, f64)> {
        self.bounds
    }

    fn value_at<R: Rng + ?Sized>(&mut self, s: f64, rng: &mut R) -> Result<f64> {
        self.sample_at(s, rng)
    }
}

/// A plain bridge paired with bounds on `g` that hold over the whole state space.
#[derive(Clone, Debug)]
pub struct GloballyBoundedBridge {
    path: BridgePath,
    bounds: (f64, f64),
}

impl GloballyBoundedBridge {
    pub fn new(spec: BridgeSpec, bounds: (f64, f64)) -> Self {
        GloballyBoundedBridge {
            path: BridgePath::new(spec),
            bounds,
        }
    }
}

impl BoundedPath for GloballyBoundedBridge {
    fn spec(&self) -> &BridgeSpec {
        self.path.spec()
    }

    fn path_bounds(&self) -> Option<(f64, f64)> {
        Some(self.bounds)
    }

    fn value_at<R: Rng + ?Sized>(&mut self, s: f64, rng: &mut R) -> Result<f64> {
        self.path.sample_at(s, rng)
    }
}
