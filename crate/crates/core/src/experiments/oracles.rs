//! Brute-force Monte Carlo references built from finely discretised Brownian bridges.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bridge::BridgeSpec;
use crate::error::{invalid, Result};
use crate::rng::{SeedTree, StreamRng};
use crate::stats::{batch_variance_se, mean_var};

const CHUNK: usize = 1024;

/// Summary of `exp(−∫g(W_s)ds)` over independent discretised bridge paths.
#[derive(Clone, Debug, PartialEq)]
pub struct FineGridSummary {
    pub n_paths: usize,
    pub dt: f64,
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
}

/// Fills `path` with a Brownian bridge from `x` to `z` over `steps` equal steps of `dt`.
fn fill_bridge(path: &mut [f64], x: f64, z: f64, dt: f64, rng: &mut StreamRng) {
    let steps = path.len() - 1;
    let sd = dt.sqrt();
    path[0] = 0.0;
    for k in 1..=steps {
        let e: f64 = StandardNormal.sample(rng);
        path[k] = path[k - 1] + sd * e;
    }
    let end = path[steps];
    for (k, v) in path.iter_mut().enumerate() {
        let frac = k as f64 / steps as f64;
        *v = x + *v + frac * (z - x - end);
    }
}

fn grid_steps(t: f64, dt: f64) -> Result<usize> {
    if !(t > 0.0) || !(dt > 0.0) || dt > t {
        return invalid("need 0 < dt <= t");
    }
    Ok((t / dt).round().max(1.0) as usize)
}

/// Per-path values of `exp(−∫g)` using the trapezoid rule on a grid of spacing `dt`.
/// Path `i` uses the stream `seeds.child(i)`.
pub fn fine_grid_values(
    g: &(dyn Fn(f64) -> f64 + Sync),
    spec: &BridgeSpec,
    dt: f64,
    n_paths: usize,
    seeds: SeedTree,
) -> Result<Vec<f64>> {
    let steps = grid_steps(spec.duration(), dt)?;
    let h = spec.duration() / steps as f64;
    let mut out = vec![0.0; n_paths];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let mut path = vec![0.0; steps + 1];
        for (i, slot) in chunk.iter_mut().enumerate() {
            let mut rng = seeds.child((c * CHUNK + i) as u64).rng();
            fill_bridge(&mut path, spec.x, spec.z, h, &mut rng);
            let inner: f64 = path[1..steps].iter().map(|&w| g(w)).sum();
            let integral = h * (inner + 0.5 * (g(path[0]) + g(path[steps])));
            *slot = (-integral).exp();
        }
    });
    Ok(out)
}

/// Mean and variance of `exp(−∫g)` with batch-means standard errors.
pub fn fine_grid_mu(
    g: &(dyn Fn(f64) -> f64 + Sync),
    spec: &BridgeSpec,
    dt: f64,
    n_paths: usize,
    seeds: SeedTree,
) -> Result<FineGridSummary> {
    if n_paths < 60 {
        return invalid("need at least 60 paths for batched standard errors");
    }
    let values = fine_grid_values(g, spec, dt, n_paths, seeds)?;
    let (mean, variance) = mean_var(&values);
    let (_, variance_se) = batch_variance_se(&values, 50);
    Ok(FineGridSummary {
        n_paths,
        dt,
        mean,
        mean_se: (variance / n_paths as f64).sqrt(),
        variance,
        variance_se,
    })
}

/// Probability that a bridge segment from `w0` to `w1` over `dt` stays strictly inside
/// `(lo, hi)`, treating the two barriers as independent.
fn segment_inside(w0: f64, w1: f64, dt: f64, lo: f64, hi: f64) -> f64 {
    if !(w0 > lo && w0 < hi && w1 > lo && w1 < hi) {
        return 0.0;
    }
    let cross = |d0: f64, d1: f64| {
        let e = 2.0 * d0 * d1 / dt;
        if e > 40.0 {
            0.0
        } else {
            (-e).exp()
        }
    };
    (1.0 - cross(hi - w0, hi - w1)) * (1.0 - cross(w0 - lo, w1 - lo))
}

/// Discretised bridge paths, each carrying its value at a probe time and the conditional
/// probabilities, given the grid, of staying inside each layer set `A_0 ..= A_jmax`.
#[derive(Clone, Debug)]
pub struct ClassifiedPaths {
    pub jmax: u32,
    pub probe: Vec<f64>,
    /// Row-major `n_paths × (jmax + 1)`.
    pub inside: Vec<f64>,
}

/// A probability estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proportion {
    pub p: f64,
    pub se: f64,
}

impl ClassifiedPaths {
    pub fn len(&self) -> usize {
        self.probe.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probe.is_empty()
    }

    fn row(&self, i: usize) -> &[f64] {
        let w = self.jmax as usize + 1;
        &self.inside[i * w..(i + 1) * w]
    }

    /// Conditional probability of layer `j` for path `i`.
    fn layer_weight(&self, i: usize, j: u32) -> f64 {
        let row = self.row(i);
        if j == 0 {
            row[0]
        } else {
            row[j as usize] - row[j as usize - 1]
        }
    }

    /// `P(J = j)` for `j = 1..=jmax`.
    pub fn layer_probabilities(&self) -> Vec<Proportion> {
        (1..=self.jmax)
            .map(|j| {
                let v: Vec<f64> = (0..self.len()).map(|i| self.layer_weight(i, j)).collect();
                let (m, var) = mean_var(&v);
                Proportion {
                    p: m,
                    se: (var / v.len() as f64).sqrt(),
                }
            })
            .collect()
    }

    /// Histogram of the probe value conditional on `J = j`, normalised to sum to one
    /// over `bins` equal cells of `[lo, hi]`; standard errors by the delta method.
    pub fn probe_histogram(&self, j: u32, lo: f64, hi: f64, bins: usize) -> Vec<Proportion> {
        let n = self.len() as f64;
        let weights: Vec<f64> = (0..self.len()).map(|i| self.layer_weight(i, j)).collect();
        let total: f64 = weights.iter().sum::<f64>() / n;
        let width = (hi - lo) / bins as f64;
        let cell = |x: f64| -> Option<usize> {
            if x < lo || x >= hi {
                None
            } else {
                Some((((x - lo) / width) as usize).min(bins - 1))
            }
        };
        let mut sums = vec![0.0; bins];
        for (i, &w) in weights.iter().enumerate() {
            if let Some(b) = cell(self.probe[i]) {
                sums[b] += w;
            }
        }
        (0..bins)
            .map(|b| {
                let p = sums[b] / n / total;
                // Ratio estimator: residuals w (1{bin} − p) / E[w].
                let mut acc = 0.0;
                for (i, &w) in weights.iter().enumerate() {
                    let ind = if cell(self.probe[i]) == Some(b) { 1.0 } else { 0.0 };
                    let r = w * (ind - p);
                    acc += r * r;
                }
                Proportion {
                    p,
                    se: (acc / (n - 1.0)).sqrt() / total / n.sqrt(),
                }
            })
            .collect()
    }
}

/// Simulates `n_paths` bridges on a grid of spacing `dt` and classifies them against the
/// layer sets of width `a`. `probe_time` is rounded to the nearest grid time.
pub fn classified_bridge_oracle(
    spec: &BridgeSpec,
    a: f64,
    jmax: u32,
    dt: f64,
    probe_time: f64,
    n_paths: usize,
    seeds: SeedTree,
) -> Result<ClassifiedPaths> {
    if !(a > 0.0) || jmax == 0 {
        return invalid("need a positive layer width and at least one layer");
    }
    if !(probe_time > spec.u && probe_time < spec.t) {
        return invalid("probe time must lie strictly inside the bridge window");
    }
    let steps = grid_steps(spec.duration(), dt)?;
    let h = spec.duration() / steps as f64;
    let probe_idx = (((probe_time - spec.u) / h).round() as usize).clamp(1, steps - 1);
    let (lo0, hi0) = spec.hull();
    let width = jmax as usize + 1;
    let mut probe = vec![0.0; n_paths];
    let mut inside = vec![0.0; n_paths * width];
    probe
        .par_chunks_mut(CHUNK)
        .zip(inside.par_chunks_mut(CHUNK * width))
        .enumerate()
        .for_each(|(c, (pchunk, ichunk))| {
            let mut path = vec![0.0; steps + 1];
            for (i, slot) in pchunk.iter_mut().enumerate() {
                let mut rng = seeds.child((c * CHUNK + i) as u64).rng();
                fill_bridge(&mut path, spec.x, spec.z, h, &mut rng);
                *slot = path[probe_idx];
                let row = &mut ichunk[i * width..(i + 1) * width];
                for (j, r) in row.iter_mut().enumerate() {
                    let (lo, hi) = (lo0 - j as f64 * a, hi0 + j as f64 * a);
                    let mut p = 1.0;
                    for seg in path.windows(2) {
                        p *= segment_inside(seg[0], seg[1], h, lo, hi);
                        if p == 0.0 {
                            break;
                        }
                    }
                    *r = p;
                }
            }
        });
    Ok(ClassifiedPaths { jmax, probe, inside })
}
