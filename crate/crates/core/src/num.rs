//! Small numeric helpers shared across the model and sampler.

use statrs::function::gamma::ln_gamma;

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// log(1 + e^x), stable for large |x|.
pub fn softplus(x: f64) -> f64 {
    if x > 33.0 {
        x
    } else if x < -33.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// log C(n, k) via log-gamma.
pub fn ln_choose(n: u32, k: u32) -> f64 {
    debug_assert!(k <= n);
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma(f64::from(n) + 1.0) - ln_gamma(f64::from(k) + 1.0) - ln_gamma(f64::from(n - k) + 1.0)
}

/// Binomial log-pmf parameterized by the log-odds eta = logit(theta).
/// Finite for every valid (y, m) and every finite eta.
pub fn binomial_logpmf_logit(y: u32, m: u32, eta: f64) -> f64 {
    ln_choose(m, y) + f64::from(y) * eta - f64::from(m) * softplus(eta)
}

pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (d * d / var + var.ln() + (2.0 * std::f64::consts::PI).ln())
}

/// log-pdf of Dirichlet(a, b) on the 2-simplex point (p, 1-p). The flat
/// (1, 1) case is exactly zero.
pub fn ln_dirichlet2_pdf(p: f64, a: f64, b: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NEG_INFINITY;
    }
    if a == 1.0 && b == 1.0 {
        return 0.0;
    }
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * p.ln() + (b - 1.0) * (1.0 - p).ln()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divide by n).
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Median of a sample (average of the middle two for even counts).
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Empirical quantile by linear interpolation on the order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    }
}

pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_and_softplus() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(-3.0) - 1.0 / (1.0 + 3.0f64.exp())).abs() < 1e-15);
        assert!((softplus(0.0) - 2.0f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((logit(logistic(1.7)) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn binomial_logpmf_matches_direct_sum() {
        // Independent route: sum of log factors.
        let direct = |y: u32, m: u32, theta: f64| {
            let mut acc = 0.0;
            for i in 0..y {
                acc += ((m - i) as f64).ln() - ((i + 1) as f64).ln();
            }
            acc + f64::from(y) * theta.ln() + f64::from(m - y) * (1.0 - theta).ln()
        };
        for (y, m, theta) in [(73u32, 664u32, 73.0 / 664.0), (1, 2, 0.5), (0, 10, 0.2)] {
            let got = binomial_logpmf_logit(y, m, logit(theta));
            assert!((got - direct(y, m, theta)).abs() < 1e-10);
        }
        assert_eq!(binomial_logpmf_logit(0, 0, 1.3), 0.0);
    }

    #[test]
    fn dirichlet2_flat_is_zero() {
        assert_eq!(ln_dirichlet2_pdf(0.3, 1.0, 1.0), 0.0);
        assert!(ln_dirichlet2_pdf(1.5, 1.0, 1.0).is_infinite());
    }

    #[test]
    fn summary_stats() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert_eq!(variance(&xs), 1.25);
        assert_eq!(median(&xs), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
    }
}
