//! Excursions of an unfit mutant family.
//!
//! The jump chain of a subcritical birth-death process started from one
//! individual steps up with probability `ρ = b/(b + d + Σ c n̄)`. The number of
//! birth events before extinction is `k` with probability
//! `(2k)!/(k!(k+1)!) ρ^k (1−ρ)^(k+1)`, and
//! `λ(ρ) = Σ_{ℓ≥1} (2ℓ)!/((ℓ−1)!(ℓ+1)!) ρ^ℓ (1−ρ)^(ℓ+1)` is its mean.
//! Both are evaluated in log space; consecutive term ratios tend to `4ρ(1−ρ) < 1`.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::AnalysisError;
use crate::lotka_volterra::LvEquilibrium;
use crate::model::TraitGraphModel;
use crate::tolerances::Tolerances;

/// `ρ(w,v)` together with its subcriticality flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BirthFraction {
    pub rho: f64,
    /// `ρ < 1/2`, equivalent to `f(w,v) < 0`.
    pub subcritical: bool,
}

pub fn birth_fraction(model: &TraitGraphModel, eq: &LvEquilibrium, w: usize) -> BirthFraction {
    let pressure: f64 = eq.iter().map(|(u, n)| model.competition(w, u) * n).sum();
    let b = model.birth(w);
    let rho = b / (b + model.death(w) + pressure);
    BirthFraction { rho, subcritical: rho < 0.5 }
}

fn check_rho(rho: f64) -> Result<(), AnalysisError> {
    if rho > 0.0 && rho < 0.5 {
        Ok(())
    } else {
        Err(AnalysisError::Supercritical(rho))
    }
}

/// Probability of exactly `k` births during one excursion.
pub fn excursion_pmf(rho: f64, k: u64) -> Result<f64, AnalysisError> {
    check_rho(rho)?;
    let k = k as f64;
    let log_catalan = ln_gamma(2.0 * k + 1.0) - ln_gamma(k + 1.0) - ln_gamma(k + 2.0);
    Ok((log_catalan + k * rho.ln() + (k + 1.0) * (-rho).ln_1p()).exp())
}

/// `λ(ρ)` with the truncation error bound of the summed series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectedBirths {
    pub value: f64,
    /// Geometric bound on the neglected tail (term ratios never exceed `4ρ(1−ρ)`).
    pub tail_bound: f64,
    pub terms: u64,
}

/// Mean number of births in an excursion, `λ(ρ)`.
pub fn expected_births(rho: f64) -> Result<ExpectedBirths, AnalysisError> {
    check_rho(rho)?;
    let cutoff = Tolerances::DEFAULT.excursion_term;
    let log_q = rho.ln() + (-rho).ln_1p();
    let q = 4.0 * rho * (1.0 - rho);
    // ℓ = 1 term: 2!/(0!·2!) ρ (1−ρ)² = ρ(1−ρ)²
    let mut log_term = rho.ln() + 2.0 * (-rho).ln_1p();
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut l = 1u64;
    loop {
        let term = log_term.exp();
        // Kahan summation: the series can run for thousands of terms near ρ = 1/2.
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if term < cutoff && l > 1 {
            return Ok(ExpectedBirths { value: sum, tail_bound: term * q / (1.0 - q), terms: l });
        }
        let lf = l as f64;
        // t_{ℓ+1}/t_ℓ = (2ℓ+2)(2ℓ+1) / (ℓ(ℓ+2)) · ρ(1−ρ), never above 4ρ(1−ρ)
        log_term += ((2.0 * lf + 2.0) * (2.0 * lf + 1.0)).ln() - (lf * (lf + 2.0)).ln() + log_q;
        l += 1;
    }
}

/// Excursion law for a fixed `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcursionLaw {
    pub rho: f64,
    pub mean_births: f64,
}

impl ExcursionLaw {
    pub fn new(rho: f64) -> Result<Self, AnalysisError> {
        Ok(ExcursionLaw { rho, mean_births: expected_births(rho)?.value })
    }

    pub fn pmf(&self, k: u64) -> f64 {
        excursion_pmf(self.rho, k).expect("rho validated at construction")
    }

    /// Rows `(k, pmf(k))` until the pmf drops below the series cutoff (at least `min_rows`).
    pub fn table(&self, min_rows: u64) -> Vec<(u64, f64)> {
        let cutoff = Tolerances::DEFAULT.excursion_term;
        let mut rows = Vec::new();
        for k in 0.. {
            let p = self.pmf(k);
            rows.push((k, p));
            if k + 1 >= min_rows && p < cutoff && k > 0 {
                break;
            }
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_zero_is_one_minus_rho() {
        assert!((excursion_pmf(0.3, 0).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn supercritical_rejected() {
        assert!(expected_births(0.5).is_err());
        assert!(excursion_pmf(0.6, 1).is_err());
        assert!(expected_births(0.0).is_err());
    }

    #[test]
    fn small_rho_vanishes() {
        assert!(expected_births(1e-8).unwrap().value < 2e-8);
    }
}
