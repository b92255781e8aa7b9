//! Verification primitives: goodness-of-fit tests, covariance with jackknife
//! standard errors and exact discrete laws.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::factorial::ln_factorial;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("{test} needs at least {need} samples, got {got}")]
    TooFewSamples { test: &'static str, need: usize, got: usize },
    #[error("pmf has no mass on the observed support")]
    EmptyPmf,
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Outcome of one statistical check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub se_distance: Option<f64>,
    pub sample_size: usize,
    /// p-value floor, or the number of standard errors allowed.
    pub threshold: f64,
    pub passed: bool,
}

impl TestReport {
    /// A verdict from a p-value: pass iff `p > threshold`.
    pub fn from_p(name: impl Into<String>, statistic: f64, p: f64, n: usize, threshold: f64) -> Self {
        TestReport {
            name: name.into(),
            statistic,
            p_value: Some(p),
            se_distance: None,
            sample_size: n,
            threshold,
            passed: p > threshold,
        }
    }

    /// A verdict from `|estimate − target| / se`: pass iff at most `threshold`.
    pub fn from_se(name: impl Into<String>, estimate: f64, target: f64, se: f64, n: usize, threshold: f64) -> Self {
        let dist = if se > 0.0 {
            (estimate - target).abs() / se
        } else if estimate == target {
            0.0
        } else {
            f64::INFINITY
        };
        TestReport {
            name: name.into(),
            statistic: estimate,
            p_value: None,
            se_distance: Some(dist),
            sample_size: n,
            threshold,
            passed: dist <= threshold,
        }
    }

    /// An exact check: `violations` must be zero.
    pub fn exact(name: impl Into<String>, violations: usize, n: usize) -> Self {
        TestReport {
            name: name.into(),
            statistic: violations as f64,
            p_value: None,
            se_distance: None,
            sample_size: n,
            threshold: 0.0,
            passed: violations == 0,
        }
    }
}

/// Kolmogorov limiting tail `P(sup|B| > λ)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test: exact statistic, asymptotic p-value
/// with Stephens' small-sample correction.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64, name: &str, threshold: f64) -> Result<TestReport, StatsError> {
    let n = samples.len();
    if n < 10 {
        return Err(StatsError::TooFewSamples { test: "ks_test", need: 10, got: n });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    let sq = nf.sqrt();
    let p = kolmogorov_tail((sq + 0.12 + 0.11 / sq) * d);
    Ok(TestReport::from_p(name, d, p, n, threshold))
}

/// Pearson χ² of integer samples against `pmf` on `lo..=hi`. Mass outside the
/// range is folded into the end bins; adjacent bins are merged until each has
/// expected count at least 5.
pub fn chi2_discrete(
    samples: &[u64],
    pmf: impl Fn(u64) -> f64,
    lo: u64,
    hi: u64,
    name: &str,
    threshold: f64,
) -> Result<TestReport, StatsError> {
    let n = samples.len();
    if n < 10 {
        return Err(StatsError::TooFewSamples { test: "chi2_discrete", need: 10, got: n });
    }
    let nf = n as f64;
    let width = (hi - lo + 1) as usize;
    let mut probs: Vec<f64> = (lo..=hi).map(&pmf).collect();
    let total: f64 = compensated_sum(probs.iter().copied());
    if !(total > 0.0) {
        return Err(StatsError::EmptyPmf);
    }
    let outside = (1.0 - total).max(0.0);
    probs[0] += outside / 2.0;
    probs[width - 1] += outside / 2.0;
    let mut observed = vec![0.0; width];
    for &s in samples {
        let i = s.clamp(lo, hi) - lo;
        observed[i as usize] += 1.0;
    }
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut e, mut o) = (0.0, 0.0);
    for i in 0..width {
        e += probs[i] * nf;
        o += observed[i];
        if e >= 5.0 {
            bins.push((e, o));
            e = 0.0;
            o = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += e;
                last.1 += o;
            }
            None => bins.push((e, o)),
        }
    }
    let stat: f64 = bins.iter().map(|&(e, o)| (o - e) * (o - e) / e).sum();
    let df = bins.len().saturating_sub(1);
    let p = if df == 0 {
        if stat == 0.0 { 1.0 } else { 0.0 }
    } else {
        let chi = ChiSquared::new(df as f64).expect("positive degrees of freedom");
        1.0 - chi.cdf(stat)
    };
    Ok(TestReport::from_p(name, stat, p, n, threshold))
}

/// Sample covariance (n − 1 normalization) and its jackknife standard error.
pub fn cov_with_se(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    assert_eq!(x.len(), y.len(), "paired samples");
    let n = x.len();
    if n < 30 {
        return Err(StatsError::TooFewSamples { test: "cov_with_se", need: 30, got: n });
    }
    let nf = n as f64;
    let mx = compensated_sum(x.iter().copied()) / nf;
    let my = compensated_sum(y.iter().copied()) / nf;
    let dx: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let dy: Vec<f64> = y.iter().map(|v| v - my).collect();
    let sx = compensated_sum(dx.iter().copied());
    let sy = compensated_sum(dy.iter().copied());
    let sxy = compensated_sum(dx.iter().zip(&dy).map(|(a, b)| a * b));
    let cov = (sxy - sx * sy / nf) / (nf - 1.0);
    let loo: Vec<f64> = dx
        .iter()
        .zip(&dy)
        .map(|(&a, &b)| {
            let m = nf - 1.0;
            ((sxy - a * b) - (sx - a) * (sy - b) / m) / (m - 1.0)
        })
        .collect();
    let mean_loo = compensated_sum(loo.iter().copied()) / nf;
    let ss = compensated_sum(loo.iter().map(|c| (c - mean_loo) * (c - mean_loo)));
    Ok((cov, ((nf - 1.0) / nf * ss).sqrt()))
}

/// Sample mean and its standard error.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = compensated_sum(x.iter().copied()) / n;
    let v = compensated_sum(x.iter().map(|v| (v - m) * (v - m))) / (n - 1.0);
    (m, (v / n).sqrt())
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `P(X = k)` for `X` counting successes in `draws` draws without replacement
/// from `population` items of which `successes` are successes.
pub fn hypergeometric_pmf(population: u64, successes: u64, draws: u64, k: u64) -> f64 {
    if successes > population || draws > population {
        return 0.0;
    }
    if k > successes || k > draws || draws - k > population - successes {
        return 0.0;
    }
    (ln_choose(successes, k) + ln_choose(population - successes, draws - k) - ln_choose(population, draws)).exp()
}

pub fn binomial_pmf(n: u64, p: f64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    (ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = std::iter::once(1.0).chain(std::iter::repeat(1e-16).take(10_000));
        assert_abs_diff_eq!(compensated_sum(xs), 1.0 + 1e-12, epsilon = 1e-15);
    }

    #[test]
    fn ks_p_values_are_calibrated() {
        let mut r = rng::stream(21, 0);
        let ps: Vec<f64> = (0..200)
            .map(|_| {
                let xs: Vec<f64> = (0..10_000).map(|_| r.sample(StandardNormal)).collect();
                ks_test(&xs, normal_cdf, "normal", 1e-3).unwrap().p_value.unwrap()
            })
            .collect();
        let meta = ks_test(&ps, |p| p.clamp(0.0, 1.0), "meta", 1e-3).unwrap();
        assert!(meta.passed, "{meta:?}");
    }

    #[test]
    fn ks_detects_degenerate_samples() {
        let rep = ks_test(&[0.5; 100], normal_cdf, "const", 1e-3).unwrap();
        assert!(rep.p_value.unwrap() < 1e-10);
        assert!(ks_test(&[0.5; 9], normal_cdf, "few", 1e-3).is_err());
    }

    #[test]
    fn ks_statistic_scale_for_uniforms() {
        let mut r = rng::stream(22, 0);
        let xs = rng::uniform_keys(&mut r, 40_000);
        let d = ks_test(&xs, |x| x, "u", 1e-3).unwrap().statistic;
        assert!(d < 3.0 / 200.0);
    }

    #[test]
    fn chi2_binomial_calibrated_and_sensitive() {
        let mut r = rng::stream(23, 0);
        let n = 20u64;
        let draw = |r: &mut rng::StreamRng| (0..n).filter(|_| r.random::<bool>()).count() as u64;
        let ps: Vec<f64> = (0..200)
            .map(|_| {
                let xs: Vec<u64> = (0..2_000).map(|_| draw(&mut r)).collect();
                chi2_discrete(&xs, |k| binomial_pmf(n, 0.5, k), 0, n, "coin", 1e-3).unwrap().p_value.unwrap()
            })
            .collect();
        assert!(ks_test(&ps, |p| p, "meta", 1e-3).unwrap().passed);
        let det = chi2_discrete(&[10; 500], |k| binomial_pmf(n, 0.5, k), 0, n, "det", 1e-3).unwrap();
        assert!(det.p_value.unwrap() < 1e-10);
    }

    #[test]
    fn hypergeometric_matches_enumeration() {
        // Enumerate every draw subset of a labelled population of size ≤ 12.
        for population in 1u64..=12 {
            for successes in 0..=population {
                for draws in 0..=population {
                    let mut counts = vec![0u64; population as usize + 1];
                    let mut total = 0u64;
                    for mask in 0u32..(1 << population) {
                        if mask.count_ones() as u64 != draws {
                            continue;
                        }
                        let hits = (mask & ((1u32 << successes) - 1)).count_ones();
                        counts[hits as usize] += 1;
                        total += 1;
                    }
                    for k in 0..=population {
                        let exact = counts[k as usize] as f64 / total as f64;
                        assert_abs_diff_eq!(hypergeometric_pmf(population, successes, draws, k), exact, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn covariance_cases() {
        let mut r = rng::stream(24, 0);
        let x: Vec<f64> = (0..5_000).map(|_| r.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..5_000).map(|_| r.sample(StandardNormal)).collect();
        let (vxx, _) = cov_with_se(&x, &x).unwrap();
        let m = x.iter().sum::<f64>() / 5_000.0;
        let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 4_999.0;
        assert_abs_diff_eq!(vxx, var, epsilon = 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_abs_diff_eq!(cov_with_se(&x, &neg).unwrap().0, -var, epsilon = 1e-12);
        let (c, se) = cov_with_se(&x, &y).unwrap();
        assert!(c.abs() < 3.0 * se, "{c} {se}");
        assert!((se - (1.0f64 / 5_000.0).sqrt()).abs() < 0.003);
        assert!(cov_with_se(&x[..29], &y[..29]).is_err());
    }

    #[test]
    fn jackknife_matches_brute_force() {
        let mut r = rng::stream(25, 0);
        let x: Vec<f64> = (0..40).map(|_| r.random()).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v + r.random::<f64>()).collect();
        let cov = |a: &[f64], b: &[f64]| {
            let n = a.len() as f64;
            let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
            a.iter().zip(b).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>() / (n - 1.0)
        };
        let loo: Vec<f64> = (0..40)
            .map(|i| {
                let a: Vec<f64> = x.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| *v).collect();
                let b: Vec<f64> = y.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| *v).collect();
                cov(&a, &b)
            })
            .collect();
        let m = loo.iter().sum::<f64>() / 40.0;
        let se = (39.0 / 40.0 * loo.iter().map(|c| (c - m).powi(2)).sum::<f64>()).sqrt();
        let (c, s) = cov_with_se(&x, &y).unwrap();
        assert_abs_diff_eq!(c, cov(&x, &y), epsilon = 1e-12);
        assert_abs_diff_eq!(s, se, epsilon = 1e-12);
    }

    #[test]
    fn kolmogorov_tail_reference_points() {
        assert_abs_diff_eq!(kolmogorov_tail(1.358), 0.05, epsilon = 5e-4);
        assert_abs_diff_eq!(kolmogorov_tail(1.628), 0.01, epsilon = 5e-4);
    }
}
