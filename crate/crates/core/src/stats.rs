//! Estimator statistics: confidence intervals, goodness-of-fit tests and a
//! couple of small regressions used by the experiment reports.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{param, Result};

/// Two-sided standard normal quantile for a confidence `level`.
pub fn normal_quantile(level: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(1.0 - (1.0 - level) / 2.0)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, level: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials {
        return Err(param(format!(
            "wilson interval needs 0 <= successes <= trials and trials > 0, got {successes}/{trials}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(param(format!("confidence level must lie in (0,1), got {level}")));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = normal_quantile(level);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    Ok((lo, hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution, P[K > x].
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // Jacobi-theta form converges fast for small x.
        let pi2 = std::f64::consts::PI.powi(2);
        let s: f64 = (1..=8)
            .map(|k| {
                let j = (2 * k - 1) as f64;
                (-(j * j) * pi2 / (8.0 * x * x)).exp()
            })
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let kf = k as f64;
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * kf * kf * x * x).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sn = n_eff.sqrt();
    kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)
}

fn sorted(sample: &[f64]) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(param("empty sample"));
    }
    if sample.iter().any(|x| x.is_nan()) {
        return Err(param("sample contains NaN"));
    }
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

/// One-sample Kolmogorov-Smirnov test against a continuous `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    let v = sorted(sample)?;
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let d = d.clamp(0.0, 1.0);
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    })
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
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
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, na * nb / (na + nb)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    /// Degrees of freedom after pooling. Zero means every bin was pooled
    /// into one and the test carries no information (`p_value` is 1).
    pub dof: usize,
    pub p_value: f64,
}

fn chi_square_p(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let chi = ChiSquared::new(dof as f64).expect("positive dof");
    (1.0 - chi.cdf(statistic)).clamp(0.0, 1.0)
}

/// Pearson goodness-of-fit. `probs` are the model cell probabilities of the
/// bins in `observed` (the last bin should carry the tail mass). Adjacent
/// bins are pooled left to right until each expected count is at least 5.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], fitted_params: usize) -> Result<ChiSquareResult> {
    if observed.len() != probs.len() || observed.is_empty() {
        return Err(param("observed and probability vectors must be nonempty and equal length"));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(param("no observations"));
    }
    let n = total as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        o_acc += o as f64;
        e_acc += p * n;
        if e_acc >= 5.0 {
            bins.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => bins.push((o_acc, e_acc)),
        }
    }
    let statistic: f64 = bins
        .iter()
        .filter(|(_, e)| *e > 0.0)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = bins.len().saturating_sub(1 + fitted_params);
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value: chi_square_p(statistic, dof),
    })
}

/// Pearson chi-square test that two count histograms share one law. Bins are
/// pooled left to right until both expected counts reach 5.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<ChiSquareResult> {
    let len = a.len().max(b.len());
    let get = |v: &[u64], i: usize| v.get(i).copied().unwrap_or(0) as f64;
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    if na == 0.0 || nb == 0.0 {
        return Err(param("both samples must be nonempty"));
    }
    let n = na + nb;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut ca, mut cb) = (0.0, 0.0);
    for i in 0..len {
        ca += get(a, i);
        cb += get(b, i);
        let col = ca + cb;
        if col * na / n >= 5.0 && col * nb / n >= 5.0 {
            bins.push((ca, cb));
            ca = 0.0;
            cb = 0.0;
        }
    }
    if ca > 0.0 || cb > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += ca;
                last.1 += cb;
            }
            None => bins.push((ca, cb)),
        }
    }
    let mut statistic = 0.0;
    for &(oa, ob) in &bins {
        let col = oa + ob;
        let (ea, eb) = (col * na / n, col * nb / n);
        statistic += (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb;
    }
    let dof = bins.len().saturating_sub(1);
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value: chi_square_p(statistic, dof),
    })
}

/// Sample mean and unbiased variance.
pub fn mean_var(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    if sample.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = sample.iter().sum::<f64>() / n;
    if sample.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Pearson correlation coefficient.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, _) = mean_var(x);
    let (my, _) = mean_var(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_se: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(param("linear fit needs at least two paired points"));
    }
    let n = x.len() as f64;
    let (mx, _) = mean_var(x);
    let (my, _) = mean_var(y);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(param("linear fit needs variation in x"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let slope_se = if x.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        slope_se,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
}

/// Two-parameter logistic regression by Newton-Raphson. Returns `None` when
/// the data carry no information about the slope (no variation in `x` or in
/// `y`, or separation).
pub fn logistic_fit(x: &[f64], y: &[bool]) -> Option<LogisticFit> {
    if x.len() != y.len() || x.len() < 3 {
        return None;
    }
    let ones = y.iter().filter(|b| **b).count();
    if ones == 0 || ones == y.len() {
        return None;
    }
    let (mx, vx) = mean_var(x);
    if !(vx > 0.0) {
        return None;
    }
    let sx = vx.sqrt();
    // Work on standardised x for conditioning.
    let xs: Vec<f64> = x.iter().map(|v| (v - mx) / sx).collect();
    let (mut b0, mut b1) = (0.0f64, 0.0f64);
    let mut cov11 = f64::NAN;
    for _ in 0..100 {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (xi, &yi) in xs.iter().zip(y) {
            let p = 1.0 / (1.0 + (-(b0 + b1 * xi)).exp());
            let r = if yi { 1.0 } else { 0.0 } - p;
            let w = p * (1.0 - p);
            g0 += r;
            g1 += r * xi;
            h00 += w;
            h01 += w * xi;
            h11 += w * xi * xi;
        }
        let det = h00 * h11 - h01 * h01;
        if !(det > 0.0) {
            return None;
        }
        let d0 = (h11 * g0 - h01 * g1) / det;
        let d1 = (h00 * g1 - h01 * g0) / det;
        b0 += d0;
        b1 += d1;
        cov11 = h00 / det;
        if d0.abs() < 1e-12 && d1.abs() < 1e-12 {
            break;
        }
    }
    if !b1.is_finite() || b1.abs() > 50.0 {
        return None;
    }
    Some(LogisticFit {
        intercept: b0 - b1 * mx / sx,
        slope: b1 / sx,
        slope_se: cov11.sqrt() / sx,
    })
}

/// Nearest-rank quantile.
pub fn quantile(sample: &[f64], q: f64) -> Option<f64> {
    let v = sorted(sample).ok()?;
    let idx = ((v.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize;
    Some(v[idx])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::Stream;
    use rand::Rng;

    /// Independent evaluation of the Wilson bounds with the z value written
    /// out, not taken from the normal quantile routine.
    fn wilson_by_hand(s: f64, n: f64) -> (f64, f64) {
        let z = 1.959963984540054f64;
        let p = s / n;
        let a = p + z * z / (2.0 * n);
        let b = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt();
        let c = 1.0 + z * z / n;
        ((a - b) / c, (a + b) / c)
    }

    #[test]
    fn wilson_examples() {
        let (lo, _) = wilson_interval(0, 100, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        let (_, hi) = wilson_interval(100, 100, 0.95).unwrap();
        assert_eq!(hi, 1.0);
        let (lo, hi) = wilson_interval(50, 100, 0.95).unwrap();
        let (elo, ehi) = wilson_by_hand(50.0, 100.0);
        assert!((lo - elo).abs() < 1e-9 && (hi - ehi).abs() < 1e-9);
        assert!((lo - 0.4038).abs() < 1e-4 && (hi - 0.5962).abs() < 1e-4);
    }

    #[test]
    fn wilson_rejects_bad_ranges() {
        assert!(wilson_interval(5, 4, 0.95).is_err());
        assert!(wilson_interval(0, 0, 0.95).is_err());
        assert!(wilson_interval(1, 4, 1.0).is_err());
    }

    #[test]
    fn kolmogorov_survival_known_values() {
        // P[K > 1.36] ~ 0.049, the classical 5% critical value.
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-3);
        // Both series agree where they meet.
        let lo = {
            let pi2 = std::f64::consts::PI.powi(2);
            let x = 1.18f64;
            let s: f64 = (1..=8).map(|k| (-((2 * k - 1) as f64).powi(2) * pi2 / (8.0 * x * x)).exp()).sum();
            1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s
        };
        assert!((lo - kolmogorov_survival(1.18)).abs() < 1e-9);
    }

    #[test]
    fn ks_self_test_is_calibrated() {
        let mut rng = Stream::from_seed(11);
        let mut pass = 0;
        for _ in 0..100 {
            let s: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
            let r = ks_statistic(&s, |x| x.clamp(0.0, 1.0)).unwrap();
            assert!((0.0..=1.0).contains(&r.statistic));
            if r.p_value > 0.01 {
                pass += 1;
            }
        }
        assert!(pass >= 98, "only {pass} of 100 passed");
    }

    #[test]
    fn ks_constant_sample_is_far() {
        let s = vec![0.3; 50];
        let r = ks_statistic(&s, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(r.statistic >= 0.5);
        assert!(ks_statistic(&[], |x| x).is_err());
    }

    #[test]
    fn ks_two_sample_identical_is_zero() {
        let a = [0.1, 0.5, 0.2, 0.9];
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        let r = ks_two_sample(&[0.0, 0.1], &[1.0, 2.0]).unwrap();
        assert_eq!(r.statistic, 1.0);
    }

    #[test]
    fn chi_square_pooling_and_degenerate_case() {
        let r = chi_square_gof(&[50, 50], &[0.5, 0.5], 0).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.dof, 1);
        // Everything pooled into one bin: no information.
        let r = chi_square_gof(&[9, 1], &[0.999, 0.001], 0).unwrap();
        assert_eq!(r.dof, 0);
        assert_eq!(r.p_value, 1.0);
        let r = chi_square_homogeneity(&[30, 20, 10], &[30, 20, 10]).unwrap();
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn chi_square_detects_wrong_law() {
        let r = chi_square_gof(&[900, 100], &[0.5, 0.5], 0).unwrap();
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn regressions() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
        let mut rng = Stream::from_seed(5);
        let xs: Vec<f64> = (0..4000).map(|i| (i % 5) as f64).collect();
        let ys: Vec<bool> = xs.iter().map(|_| rng.random::<f64>() < 0.3).collect();
        let lf = logistic_fit(&xs, &ys).unwrap();
        assert!(lf.slope.abs() < 4.0 * lf.slope_se);
        assert!(logistic_fit(&[1.0, 1.0, 1.0], &[true, false, true]).is_none());
    }
}
