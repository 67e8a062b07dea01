//! Small statistics toolkit for the validation reports.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub ci95: (f64, f64),
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    let sd = var.sqrt();
    let se = sd / (n as f64).sqrt();
    Summary { n, mean, sd, se, ci95: (mean - Z95 * se, mean + Z95 * se) }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One-sample Kolmogorov-Smirnov statistic `sup |F_n − F|`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// `P(D_n ≥ d)` from the Kolmogorov limit law with Stephens' small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)
}

/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`; the dual theta series below λ = 1.18.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let q = if lambda < 1.18 {
        let y = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=6).map(|k| ((2 * k - 1) as f64).powi(2) * y).map(f64::exp).sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s
    } else {
        2.0 * (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum::<f64>()
    };
    q.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit of `observed` against category probabilities `expected`
/// (summing to 1); `None` with fewer than two categories.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> Option<ChiSquare> {
    if observed.len() < 2 {
        return None;
    }
    let n: u64 = observed.iter().sum();
    let statistic = observed
        .iter()
        .zip(expected)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let df = observed.len() - 1;
    let p_value = 1.0 - ChiSquared::new(df as f64).ok()?.cdf(statistic);
    Some(ChiSquare { statistic, df, p_value })
}

/// `(k − n p) / sqrt(n p (1 − p))`.
pub fn binomial_z(k: u64, n: u64, p: f64) -> f64 {
    let n = n as f64;
    let sigma = (n * p * (1.0 - p)).sqrt();
    if sigma == 0.0 {
        return if (k as f64 - n * p).abs() < 0.5 { 0.0 } else { f64::INFINITY };
    }
    (k as f64 - n * p) / sigma
}

/// Exponential rate from right-censored waiting times: events over exposure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CensoredMean {
    pub events: u64,
    pub exposure: f64,
    /// `exposure / events`.
    pub mean: f64,
    /// `mean / sqrt(events)`.
    pub se: f64,
}

impl CensoredMean {
    pub fn new(events: u64, exposure: f64) -> Self {
        let mean = exposure / events as f64;
        CensoredMean { events, exposure, mean, se: mean / (events as f64).sqrt() }
    }

    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - Z95 * self.se, self.mean + Z95 * self.se)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_single_sample() {
        // one sample at CDF value u: D = max(u, 1 − u)
        for u in [0.1, 0.5, 0.8] {
            assert!((ks_statistic(&[u], |x| x) - u.max(1.0 - u)).abs() < 1e-15);
        }
    }

    #[test]
    fn kolmogorov_branches_agree() {
        let series = |l: f64| {
            2.0 * (1..=200)
                .map(|k| (if k % 2 == 1 { 1.0 } else { -1.0 }) * (-2.0 * (k * k) as f64 * l * l).exp())
                .sum::<f64>()
        };
        for l in [0.6, 0.9, 1.1, 1.18, 1.5] {
            assert!((kolmogorov_q(l) - series(l)).abs() < 1e-9, "{l}");
        }
        // tabulated critical value: Q(1.6276) = 0.01
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn chi_square_df_and_value() {
        let c = chi_square(&[30, 70], &[0.5, 0.5]).unwrap();
        assert_eq!(c.df, 1);
        assert!((c.statistic - 16.0).abs() < 1e-12);
        assert!(c.p_value < 1e-3);
        assert!(chi_square(&[10], &[1.0]).is_none());
    }

    #[test]
    fn summary_of_constant() {
        let s = summarize(&[2.0, 2.0, 2.0]);
        assert_eq!((s.mean, s.sd), (2.0, 0.0));
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }
}
