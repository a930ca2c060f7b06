//! Sample statistics: k-statistics, jackknife errors, correlations and
//! weighted straight-line fits.

use serde::Serialize;

use crate::error::{Error, Result};

/// Compensated (Neumaier) sum.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(xs: &[f64]) -> f64 {
    neumaier_sum(xs.iter().copied()) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mu = mean(xs);
    neumaier_sum(xs.iter().map(|x| (x - mu) * (x - mu))) / (n - 1.0)
}

/// k-statistics `k1..k4` from central power sums of `n` samples.
fn k_stats(n: f64, s2: f64, s3: f64, s4: f64) -> [f64; 3] {
    let m2 = s2 / n;
    let m3 = s3 / n;
    let m4 = s4 / n;
    let k2 = n / (n - 1.0) * m2;
    let k3 = n * n / ((n - 1.0) * (n - 2.0)) * m3;
    let k4 = n * n * ((n + 1.0) * m4 - 3.0 * (n - 1.0) * m2 * m2) / ((n - 1.0) * (n - 2.0) * (n - 3.0));
    [k2, k3, k4]
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Mean, variance and third/fourth cumulants of one observable across ensemble members.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulantReport {
    pub n_samples: usize,
    pub mean: Estimate,
    pub variance: Estimate,
    /// Needs at least 4 samples (3 for the value, one more for its jackknife).
    pub cumulant3: Option<Estimate>,
    /// Needs at least 5 samples.
    pub cumulant4: Option<Estimate>,
}

/// Unbiased cumulant estimates with leave-one-out jackknife standard errors.
pub fn cumulants(samples: &[f64]) -> Result<CumulantReport> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Estimator(format!(
            "need at least 2 samples for a variance, got {n}"
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Estimator("non-finite sample".into()));
    }
    let mu = mean(samples);
    let ys: Vec<f64> = samples.iter().map(|x| x - mu).collect();
    let s1 = neumaier_sum(ys.iter().copied());
    let s2 = neumaier_sum(ys.iter().map(|y| y * y));
    let s3 = neumaier_sum(ys.iter().map(|y| y * y * y));
    let s4 = neumaier_sum(ys.iter().map(|y| y * y * y * y));
    let nf = n as f64;

    // Central sums of the sample with element i removed, from the shifted power sums.
    let leave_one_out = |i: usize| -> (f64, [f64; 3]) {
        let m = nf - 1.0;
        let y = ys[i];
        let t1 = s1 - y;
        let t2 = s2 - y * y;
        let t3 = s3 - y * y * y;
        let t4 = s4 - y * y * y * y;
        let c = t1 / m;
        let c2 = t2 - 2.0 * c * t1 + m * c * c;
        let c3 = t3 - 3.0 * c * t2 + 3.0 * c * c * t1 - m * c * c * c;
        let c4 = t4 - 4.0 * c * t3 + 6.0 * c * c * t2 - 4.0 * c * c * c * t1 + m * c.powi(4);
        (mu + c, [c2, c3, c4])
    };

    let full = k_stats(nf, s2 - s1 * s1 / nf, s3, s4);
    let variance_value = full[0];
    let mean_err = (variance_value / nf).sqrt();

    let jackknife = |stat: &dyn Fn(f64, [f64; 3]) -> f64| -> f64 {
        let vals: Vec<f64> = (0..n)
            .map(|i| {
                let (_, c) = leave_one_out(i);
                stat(nf - 1.0, c)
            })
            .collect();
        let avg = mean(&vals);
        ((nf - 1.0) / nf * neumaier_sum(vals.iter().map(|v| (v - avg) * (v - avg)))).sqrt()
    };

    let variance_err = if n >= 3 {
        jackknife(&|m, c| k_stats(m, c[0], c[1], c[2])[0])
    } else {
        f64::NAN
    };
    let cumulant3 = (n >= 4).then(|| Estimate {
        value: full[1],
        stderr: jackknife(&|m, c| k_stats(m, c[0], c[1], c[2])[1]),
    });
    let cumulant4 = (n >= 5).then(|| Estimate {
        value: full[2],
        stderr: jackknife(&|m, c| k_stats(m, c[0], c[1], c[2])[2]),
    });

    Ok(CumulantReport {
        n_samples: n,
        mean: Estimate {
            value: mu,
            stderr: mean_err,
        },
        variance: Estimate {
            value: variance_value.max(0.0),
            stderr: variance_err,
        },
        cumulant3,
        cumulant4,
    })
}

/// Sample covariance of two equally long series.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    neumaier_sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my))) / (n - 1.0)
}

/// Pearson correlation; `None` when either series has zero variance.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let vx = variance(xs);
    let vy = variance(ys);
    if vx <= 0.0 || vy <= 0.0 {
        return None;
    }
    Some(covariance(xs, ys) / (vx * vy).sqrt())
}

/// Weighted least-squares straight line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub n_points: usize,
}

impl LineFit {
    /// Two-sided interval at `z` standard errors.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.slope - z * self.slope_stderr, self.slope + z * self.slope_stderr)
    }
}

/// Fit with weights `1/σ²`. The slope error comes from the supplied `σ`.
pub fn weighted_line_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() != sigma.len() {
        return Err(Error::Estimator("fit inputs have different lengths".into()));
    }
    if x.len() < 2 {
        return Err(Error::Estimator("need at least two points for a line".into()));
    }
    let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    let sw = neumaier_sum(w.iter().copied());
    let sx = neumaier_sum(w.iter().zip(x).map(|(w, x)| w * x));
    let sy = neumaier_sum(w.iter().zip(y).map(|(w, y)| w * y));
    let xm = sx / sw;
    let ym = sy / sw;
    let sxx = neumaier_sum(w.iter().zip(x).map(|(w, x)| w * (x - xm) * (x - xm)));
    let sxy = neumaier_sum(w.iter().zip(x).zip(y).map(|((w, x), y)| w * (x - xm) * (y - ym)));
    if sxx <= 0.0 {
        return Err(Error::Estimator("fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    Ok(LineFit {
        slope,
        intercept: ym - slope * xm,
        slope_stderr: (1.0 / sxx).sqrt(),
        n_points: x.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, StandardNormal};

    fn naive_central(xs: &[f64], r: i32) -> f64 {
        let mu = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - mu).powi(r)).sum::<f64>() / xs.len() as f64
    }

    #[test]
    fn constant_samples_have_no_spread() {
        let r = cumulants(&[2.5; 40]).unwrap();
        assert_eq!(r.mean.value, 2.5);
        assert_eq!(r.variance.value, 0.0);
        assert_eq!(r.cumulant3.unwrap().value, 0.0);
        assert_eq!(r.cumulant4.unwrap().value, 0.0);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(cumulants(&[1.0]), Err(Error::Estimator(_))));
        let r = cumulants(&[1.0, 2.0, 4.0]).unwrap();
        assert!(r.cumulant3.is_none() && r.cumulant4.is_none());
        assert_relative_eq!(r.variance.value, 7.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn k_statistics_match_textbook_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..37).map(|_| rng.gen_range(-1.0..3.0f64).powi(3)).collect();
        let n = xs.len() as f64;
        let (m2, m3, m4) = (naive_central(&xs, 2), naive_central(&xs, 3), naive_central(&xs, 4));
        let r = cumulants(&xs).unwrap();
        assert_relative_eq!(r.variance.value, n / (n - 1.0) * m2, max_relative = 1e-12);
        assert_relative_eq!(r.cumulant3.unwrap().value, n * n * m3 / ((n - 1.0) * (n - 2.0)), max_relative = 1e-12);
        let k4 = n * n * ((n + 1.0) * m4 - 3.0 * (n - 1.0) * m2 * m2) / ((n - 1.0) * (n - 2.0) * (n - 3.0));
        assert_relative_eq!(r.cumulant4.unwrap().value, k4, max_relative = 1e-12);
    }

    #[test]
    fn jackknife_matches_brute_force_leave_one_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<f64> = (0..25).map(|_| rng.gen_range(0.0..5.0)).collect();
        let r = cumulants(&xs).unwrap();
        let n = xs.len();
        let mut loo = Vec::new();
        for i in 0..n {
            let sub: Vec<f64> = xs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| *x).collect();
            loo.push(cumulants(&sub).unwrap().cumulant4.unwrap().value);
        }
        let avg = loo.iter().sum::<f64>() / n as f64;
        let se = ((n as f64 - 1.0) / n as f64 * loo.iter().map(|v| (v - avg).powi(2)).sum::<f64>()).sqrt();
        assert_relative_eq!(r.cumulant4.unwrap().stderr, se, max_relative = 1e-9);
    }

    #[test]
    fn unit_gaussian_cumulants() {
        let mut rng = ChaCha8Rng::seed_from_u64(12345);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let r = cumulants(&xs).unwrap();
        assert!((r.variance.value - 1.0).abs() < 0.03);
        assert!(r.cumulant4.unwrap().value.abs() < 0.1);
        assert!(r.cumulant3.unwrap().value.abs() < 3.0 * r.cumulant3.unwrap().stderr + 0.01);
    }

    #[test]
    fn uniform_and_exponential_cumulants_within_errors() {
        // U(0,1): κ2 = 1/12, κ3 = 0, κ4 = −1/120. Exp(1): κn = (n − 1)!.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let u: Vec<f64> = (0..20_000).map(|_| rng.gen::<f64>()).collect();
        let r = cumulants(&u).unwrap();
        assert!((r.variance.value - 1.0 / 12.0).abs() < 3.0 * r.variance.stderr);
        let k4 = r.cumulant4.unwrap();
        assert!((k4.value + 1.0 / 120.0).abs() < 3.0 * k4.stderr);

        let exp = Exp::new(1.0).unwrap();
        let e: Vec<f64> = (0..20_000).map(|_| exp.sample(&mut rng)).collect();
        let r = cumulants(&e).unwrap();
        let k3 = r.cumulant3.unwrap();
        assert!((k3.value - 2.0).abs() < 3.0 * k3.stderr, "{k3:?}");
        let k4 = r.cumulant4.unwrap();
        assert!((k4.value - 6.0).abs() < 3.0 * k4.stderr, "{k4:?}");
    }

    #[test]
    fn standard_errors_shrink_like_inverse_sqrt_m() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let big: Vec<f64> = (0..16_000).map(|_| rng.sample(StandardNormal)).collect();
        let small = cumulants(&big[..1000]).unwrap();
        let large = cumulants(&big).unwrap();
        let ratio = small.variance.stderr / large.variance.stderr;
        assert!((ratio - 4.0).abs() < 0.6, "ratio {ratio}");
        let ratio = small.mean.stderr / large.mean.stderr;
        assert!((ratio - 4.0).abs() < 0.6, "ratio {ratio}");
    }

    #[test]
    fn straight_line_fit_recovers_slope() {
        let x: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| 0.5 * x - 2.0).collect();
        let fit = weighted_line_fit(&x, &y, &[0.1; 8]).unwrap();
        assert_relative_eq!(fit.slope, 0.5, epsilon = 1e-14);
        assert_relative_eq!(fit.intercept, -2.0, epsilon = 1e-13);
        assert!(weighted_line_fit(&[1.0, 1.0], &[0.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn correlation_edge_cases() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(correlation(&a, &a).unwrap(), 1.0, epsilon = 1e-15);
        assert!(correlation(&a, &[1.0; 4]).is_none());
    }
}
