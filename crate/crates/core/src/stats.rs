//! Statistical utilities: Gaussian densities, summary statistics, batch standard
//! errors, goodness-of-fit tests and small regressions.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::error::{invalid, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    ln_normal_pdf(x, mean, var).exp()
}

pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -LN_SQRT_2PI - 0.5 * var.ln() - 0.5 * d * d / var
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Sample mean and unbiased sample variance.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1) as f64)
}

/// Mean and its standard error from `batches` contiguous batch means.
pub fn batch_mean_se(values: &[f64], batches: usize) -> (f64, f64) {
    batch_statistic(values, batches, |b| mean_var(b).0)
}

/// Sample variance and its standard error from `batches` contiguous batch variances.
pub fn batch_variance_se(values: &[f64], batches: usize) -> (f64, f64) {
    let (_, se) = batch_statistic(values, batches, |b| mean_var(b).1);
    (mean_var(values).1, se)
}

fn batch_statistic(values: &[f64], batches: usize, stat: impl Fn(&[f64]) -> f64) -> (f64, f64) {
    let batches = batches.max(2).min(values.len() / 2).max(1);
    let size = values.len() / batches;
    let per: Vec<f64> = (0..batches).map(|b| stat(&values[b * size..(b + 1) * size])).collect();
    let (m, v) = mean_var(&per);
    (m, (v / batches as f64).sqrt())
}

/// Kolmogorov survival function `P(K > λ)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_survival((s + 0.12 + 0.11 / s) * d)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against `cdf`.
///
/// With `domain = Some((lo, hi))` the supremum is taken over `[lo, hi]` only, for
/// reference CDFs that are trusted on that window alone. The p-value then comes from the
/// unrestricted null law and is conservative.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64, domain: Option<(f64, f64)>) -> TestResult {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let (lo, hi) = domain.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        if x < lo || x > hi {
            continue;
        }
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    for edge in [lo, hi] {
        if edge.is_finite() {
            let below = xs.partition_point(|&x| x <= edge) as f64 / n;
            d = d.max((cdf(edge) - below).abs());
        }
    }
    TestResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    }
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    TestResult {
        statistic: d,
        p_value: ks_p_value(d, na * nb / (na + nb)),
    }
}

fn chi_square_p(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(stat)
}

/// Merges adjacent cells until every merged cell has expected weight ≥ `min`.
fn merge_cells(expected: &[f64], min: f64) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    let mut acc = 0.0;
    for (i, &e) in expected.iter().enumerate() {
        acc += e;
        if acc >= min {
            groups.push(start..i + 1);
            start = i + 1;
            acc = 0.0;
        }
    }
    if start < expected.len() {
        match groups.last_mut() {
            Some(last) => last.end = expected.len(),
            None => groups.push(0..expected.len()),
        }
    }
    groups
}

/// Pearson goodness-of-fit test of `observed` counts against cell probabilities.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<TestResult> {
    if observed.len() != probs.len() {
        return invalid("observed and probability vectors differ in length");
    }
    let n: u64 = observed.iter().sum();
    let expected: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
    let groups = merge_cells(&expected, 5.0);
    let mut stat = 0.0;
    for g in &groups {
        let o: f64 = observed[g.clone()].iter().sum::<u64>() as f64;
        let e: f64 = expected[g.clone()].iter().sum();
        if e > 0.0 {
            stat += (o - e) * (o - e) / e;
        }
    }
    Ok(TestResult {
        statistic: stat,
        p_value: chi_square_p(stat, groups.len().saturating_sub(1)),
    })
}

/// Chi-square test that two histograms share the same cell probabilities.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<TestResult> {
    if a.len() != b.len() {
        return invalid("histograms differ in length");
    }
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return invalid("empty histogram");
    }
    let total = (na + nb) as f64;
    let pooled: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x + y) as f64).collect();
    let min_share = (na.min(nb)) as f64 / total;
    let groups = merge_cells(&pooled.iter().map(|p| p * min_share).collect::<Vec<_>>(), 5.0);
    let mut stat = 0.0;
    for g in &groups {
        let oa = a[g.clone()].iter().sum::<u64>() as f64;
        let ob = b[g.clone()].iter().sum::<u64>() as f64;
        let col = oa + ob;
        let ea = col * na as f64 / total;
        let eb = col * nb as f64 / total;
        if ea > 0.0 {
            stat += (oa - ea).powi(2) / ea;
        }
        if eb > 0.0 {
            stat += (ob - eb).powi(2) / eb;
        }
    }
    Ok(TestResult {
        statistic: stat,
        p_value: chi_square_p(stat, groups.len().saturating_sub(1)),
    })
}

/// Histogram of `values` on `bins` equal cells over `[lo, hi]`; values outside are dropped.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    let w = (hi - lo) / bins as f64;
    for &v in values {
        if v >= lo && v < hi {
            counts[(((v - lo) / w) as usize).min(bins - 1)] += 1;
        }
    }
    counts
}

/// Weighted `q`-quantile (smallest value whose cumulative normalised weight reaches `q`).
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for &i in &idx {
        acc += weights[i] / total;
        if acc >= q {
            return values[i];
        }
    }
    values[*idx.last().expect("non-empty")]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
}

/// Weighted least squares with known per-point standard errors.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], se: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() != se.len() || x.len() < 2 {
        return invalid("need at least two points with matching lengths");
    }
    let w: Vec<f64> = se.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    let sxy: f64 = (0..x.len()).map(|i| w[i] * (x[i] - xm) * (y[i] - ym)).sum();
    let slope = sxy / sxx;
    Ok(LinearFit {
        intercept: ym - slope * xm,
        slope,
        slope_se: (1.0 / sxx).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn moments_of_two_points() {
        assert_eq!(mean_var(&[0.0, 2.0]), (1.0, 2.0));
    }

    #[test]
    fn normal_helpers() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-10);
        assert!((normal_pdf(0.0, 0.0, 1.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // Classical critical values: P(K > 1.36) ≈ 0.05, P(K > 1.63) ≈ 0.01.
        assert!((kolmogorov_survival(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_survival(1.628) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn ks_accepts_correct_and_rejects_wrong_law() {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(3);
        let xs: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(ks_one_sample(&xs, normal_cdf, None).p_value > 0.01);
        assert!(ks_one_sample(&xs, |x| normal_cdf(x - 0.1), None).p_value < 0.01);
        let ys: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(ks_two_sample(&xs, &ys).p_value > 0.01);
        let zs: Vec<f64> = ys.iter().map(|y| 1.3 * y).collect();
        assert!(ks_two_sample(&xs, &zs).p_value < 0.01);
    }

    #[test]
    fn chi_square_tests() {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(4);
        let a: Vec<f64> = (0..20000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..20000).map(|_| rng.random::<f64>()).collect();
        let ha = histogram(&a, 0.0, 1.0, 20);
        let hb = histogram(&b, 0.0, 1.0, 20);
        assert!(chi_square_gof(&ha, &[0.05; 20]).unwrap().p_value > 0.01);
        assert!(chi_square_homogeneity(&ha, &hb).unwrap().p_value > 0.01);
        let skew: Vec<f64> = b.iter().map(|v| v.powf(1.1)).collect();
        let hs = histogram(&skew, 0.0, 1.0, 20);
        assert!(chi_square_homogeneity(&ha, &hs).unwrap().p_value < 0.01);
    }

    #[test]
    fn weighted_quantile_and_fit() {
        assert_eq!(weighted_quantile(&[3.0, 1.0, 2.0], &[1.0, 1.0, 2.0], 0.5), 2.0);
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let fit = weighted_linear_fit(&x, &y, &[0.1; 4]).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12 && (fit.intercept - 1.0).abs() < 1e-12);
        // Quadrupling the replicate count halves per-point standard errors and the CI.
        let wide = weighted_linear_fit(&x, &y, &[0.2; 4]).unwrap();
        assert!((wide.slope_se / fit.slope_se - 2.0).abs() < 1e-12);
    }

    #[test]
    fn batch_standard_error_scales() {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(5);
        let xs: Vec<f64> = (0..40000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (m, se) = batch_mean_se(&xs, 40);
        assert!(m.abs() < 4.0 * se);
        assert!((se - 1.0 / 200.0).abs() < 0.0025);
    }
}
