//! Monte Carlo checks of the limit laws against the simulator at finite `K`.
//!
//! Every theoretical reference value is recomputed from `adyn_core` when a
//! report is built.

use std::collections::BTreeMap;

use adyn_core::lnk::{run_lnk, BetaTrajectory};
use adyn_core::lotka_volterra::lv_equilibrium;
use adyn_core::rates::{exit_law, trait_arrival_rate};
use adyn_core::{EscDescriptor, StabilityDegree, TraitGraphModel, TraitSet};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::SimError;
use crate::simulator::{
    beta_of, esc_initial_counts, simulate_replicate, FixWatch, RecordOptions, SimConfig, SimulationRecord,
    StopCondition,
};
use crate::stats::{binomial_z, chi_square, ks_p_value, ks_statistic, median, summarize, CensoredMean, ChiSquare, Summary, Z95};

pub const MIN_REPLICATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Allowed relative error of the mean rescaled time.
    pub mean_tolerance: f64,
    /// KS significance level.
    pub ks_alpha: f64,
    /// Allowed binomial z-score of each fixation frequency.
    pub split_sigma: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { mean_tolerance: 0.25, ks_alpha: 0.01, split_sigma: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateBudget {
    /// Raw-time horizon as a multiple of the predicted mean `1/(R K μ^L)`.
    pub horizon_multiple: f64,
    pub max_events: u64,
}

impl Default for ReplicateBudget {
    fn default() -> Self {
        ReplicateBudget { horizon_multiple: 50.0, max_events: 500_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitRow {
    pub trait_id: String,
    pub count: u64,
    pub frequency: f64,
    pub expected: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdicts {
    pub mean: bool,
    pub ks: bool,
    pub split: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitLawReport {
    pub resident: String,
    pub k: u64,
    pub replicates: usize,
    pub completed: usize,
    /// Replicates that ran out of budget before `T_fix`.
    pub censored: usize,
    pub partial: bool,
    pub seed: u64,
    pub exponent: u32,
    /// `K μ_K^L = K^(1 − L/α)`.
    pub time_scale: f64,
    pub exit_rate: f64,
    pub theory_mean: f64,
    pub rescaled: Summary,
    pub relative_error: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub split: Vec<SplitRow>,
    /// Fixations by traits outside `V_mut` (descendants of a mutant that had not
    /// fixed yet); excluded from the split frequencies.
    pub unexpected_triggers: u64,
    pub chi_square: Option<ChiSquare>,
    pub thresholds: Thresholds,
    pub verdicts: Verdicts,
    #[serde(skip)]
    pub rescaled_times: Vec<f64>,
}

impl ExitLawReport {
    pub fn times_csv(&self) -> String {
        let mut out = String::from("replicate_order,rescaled_t_fix\n");
        for (i, t) in self.rescaled_times.iter().enumerate() {
            out.push_str(&format!("{i},{t}\n"));
        }
        out
    }
}

fn check_replicates(replicates: usize) -> Result<(), SimError> {
    if replicates < MIN_REPLICATES {
        return Err(SimError::Precondition(format!(
            "{replicates} replicates requested, at least {MIN_REPLICATES} are needed"
        )));
    }
    Ok(())
}

fn finite_degree(esc: &EscDescriptor, model: &TraitGraphModel) -> Result<u32, SimError> {
    match esc.stability_degree {
        StabilityDegree::Finite(l) => Ok(l),
        StabilityDegree::Infinite => Err(SimError::Precondition(format!(
            "{} has no fit trait in reach",
            model.format_set(&esc.resident)
        ))),
    }
}

/// Run `replicates` simulations from the ESC state to `T_fix` and compare with the exit law.
pub fn estimate_exit_law(
    model: &TraitGraphModel,
    esc: &EscDescriptor,
    k: u64,
    replicates: usize,
    seed: u64,
    budget: ReplicateBudget,
    thresholds: Thresholds,
) -> Result<ExitLawReport, SimError> {
    check_replicates(replicates)?;
    finite_degree(esc, model)?;
    let law = exit_law(model, esc)?;
    let l = law.time_scale_exponent;
    let time_scale = (k as f64).powf(1.0 - l as f64 / model.alpha());
    let theory_mean = 1.0 / law.exit_rate;
    let config = SimConfig {
        k,
        stop: StopCondition::at_fixation(budget.horizon_multiple * theory_mean / time_scale, FixWatch::new(model, esc, k))
            .with_max_events(budget.max_events),
        record: RecordOptions::default(),
    };
    let initial = esc_initial_counts(model, esc, k);
    let records: Vec<SimulationRecord> = (0..replicates as u64)
        .into_par_iter()
        .map(|i| simulate_replicate(model, &config, &initial, seed, i))
        .collect::<Result<_, _>>()?;

    let hits: Vec<(f64, usize)> =
        records.iter().filter_map(|r| r.t_fix.map(|f| (f.time * time_scale, f.trait_index))).collect();
    let rescaled_times: Vec<f64> = hits.iter().map(|h| h.0).collect();
    let completed = hits.len();
    let rescaled = summarize(&rescaled_times);
    let rate = law.exit_rate;
    let ks = ks_statistic(&rescaled_times, |t| 1.0 - (-rate * t).exp());
    let ks_p = ks_p_value(ks, completed);

    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for &(_, w) in &hits {
        *counts.entry(w).or_default() += 1;
    }
    let unexpected_triggers: u64 =
        counts.iter().filter(|(w, _)| !law.fixation_split.contains_key(w)).map(|(_, c)| c).sum();
    // frequencies among V_mut triggers; the rest is reported separately
    let n = completed as u64 - unexpected_triggers;
    let split: Vec<SplitRow> = law
        .fixation_split
        .iter()
        .map(|(&w, &p)| {
            let c = counts.get(&w).copied().unwrap_or(0);
            SplitRow { trait_id: model.id(w).to_string(), count: c, frequency: c as f64 / n as f64, expected: p, z: binomial_z(c, n, p) }
        })
        .collect();
    let chi = chi_square(
        &split.iter().map(|s| s.count).collect::<Vec<_>>(),
        &split.iter().map(|s| s.expected).collect::<Vec<_>>(),
    );
    let relative_error = (rescaled.mean - theory_mean).abs() / theory_mean;
    let verdicts = Verdicts {
        mean: relative_error <= thresholds.mean_tolerance,
        ks: ks_p >= thresholds.ks_alpha,
        split: split.iter().all(|s| s.z.abs() <= thresholds.split_sigma),
    };
    Ok(ExitLawReport {
        resident: model.format_set(&esc.resident),
        k,
        replicates,
        completed,
        censored: replicates - completed,
        partial: completed < replicates,
        seed,
        exponent: l,
        time_scale,
        exit_rate: rate,
        theory_mean,
        rescaled,
        relative_error,
        ks_statistic: ks,
        ks_p_value: ks_p,
        split,
        unexpected_triggers,
        chi_square: chi,
        thresholds,
        verdicts,
        rescaled_times,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendRow {
    pub k: u64,
    pub mean: f64,
    pub se: f64,
    pub theory_mean: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitLawTrend {
    pub rows: Vec<TrendRow>,
    /// `|mean − 1/R|` does not grow with `K` beyond the joint 95% band.
    pub non_increasing: bool,
}

pub fn exit_law_trend(reports: &[ExitLawReport]) -> ExitLawTrend {
    let mut rows: Vec<TrendRow> = reports
        .iter()
        .map(|r| TrendRow {
            k: r.k,
            mean: r.rescaled.mean,
            se: r.rescaled.se,
            theory_mean: r.theory_mean,
            abs_error: (r.rescaled.mean - r.theory_mean).abs(),
        })
        .collect();
    rows.sort_by_key(|r| r.k);
    let non_increasing = rows
        .windows(2)
        .all(|w| w[1].abs_error <= w[0].abs_error + Z95 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt());
    ExitLawTrend { rows, non_increasing }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArrivalReport {
    pub target: String,
    pub k: u64,
    pub replicates: usize,
    pub seed: u64,
    pub distance: Option<u32>,
    /// `K μ_K^d`.
    pub time_scale: f64,
    /// `1/R̃`, absent for targets without a valid arrival path.
    pub theory_mean: Option<f64>,
    pub arrivals_per_replicate: Vec<usize>,
    /// Rescaled inter-arrival mean pooled over all indices (events over exposure).
    pub pooled: Option<CensoredMean>,
    pub first: Option<CensoredMean>,
    pub second: Option<CensoredMean>,
    pub relative_error: Option<f64>,
    /// First and second inter-arrival CIs overlap.
    pub index_independent: Option<bool>,
}

/// Times of mutant births into `target` before `T_fix`, run from the ESC state.
/// Waiting times cut off by `T_fix` or the horizon count as censored exposure.
pub fn estimate_mutant_arrivals(
    model: &TraitGraphModel,
    esc: &EscDescriptor,
    k: u64,
    target: usize,
    replicates: usize,
    seed: u64,
    horizon: f64,
) -> Result<ArrivalReport, SimError> {
    check_replicates(replicates)?;
    let distance = esc.distance(target);
    let time_scale = distance.map_or(f64::NAN, |d| (k as f64).powf(1.0 - d as f64 / model.alpha()));
    let theory_mean = trait_arrival_rate(model, esc, target).ok().map(|r| 1.0 / r);
    let config = SimConfig {
        k,
        stop: StopCondition::at_fixation(horizon, FixWatch::new(model, esc, k)),
        record: RecordOptions { arrivals_of: Some(target), ..RecordOptions::default() },
    };
    let initial = esc_initial_counts(model, esc, k);
    let records: Vec<SimulationRecord> = (0..replicates as u64)
        .into_par_iter()
        .map(|i| simulate_replicate(model, &config, &initial, seed, i))
        .collect::<Result<_, _>>()?;

    // per index: (observed arrivals, exposure in raw time)
    let mut by_index: Vec<(u64, f64)> = Vec::new();
    for r in &records {
        let end = r.final_state.time;
        let mut prev = 0.0;
        for i in 0..=r.arrivals.len() {
            if by_index.len() <= i {
                by_index.push((0, 0.0));
            }
            match r.arrivals.get(i) {
                Some(&t) => {
                    by_index[i].0 += 1;
                    by_index[i].1 += t - prev;
                    prev = t;
                }
                None => by_index[i].1 += end - prev,
            }
        }
    }
    let rescale = |events: u64, exposure: f64| (events > 0).then(|| CensoredMean::new(events, exposure * time_scale));
    let total_events: u64 = by_index.iter().map(|b| b.0).sum();
    let total_exposure: f64 = by_index.iter().map(|b| b.1).sum();
    let pooled = rescale(total_events, total_exposure);
    let first = by_index.first().and_then(|b| rescale(b.0, b.1));
    let second = by_index.get(1).and_then(|b| rescale(b.0, b.1));
    let index_independent = match (first, second) {
        (Some(a), Some(b)) => Some((a.mean - b.mean).abs() <= Z95 * (a.se.powi(2) + b.se.powi(2)).sqrt()),
        _ => None,
    };
    let relative_error = match (pooled, theory_mean) {
        (Some(p), Some(t)) => Some((p.mean - t).abs() / t),
        _ => None,
    };
    Ok(ArrivalReport {
        target: model.id(target).to_string(),
        k,
        replicates,
        seed,
        distance,
        time_scale,
        theory_mean,
        arrivals_per_replicate: records.iter().map(|r| r.arrivals.len()).collect(),
        pooled,
        first,
        second,
        relative_error,
        index_independent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrefactorRow {
    pub trait_id: String,
    pub distance: u32,
    pub theory: f64,
    /// Time average of `N_w / (K μ_K^d)`.
    pub measured: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrefactorReport {
    pub resident: String,
    pub k: u64,
    pub burn_in: f64,
    pub horizon: f64,
    pub seed: u64,
    pub rows: Vec<PrefactorRow>,
    /// The run left the ESC (a fixation happened) before the horizon.
    pub fixation: bool,
}

impl PrefactorReport {
    pub fn max_relative_error(&self) -> f64 {
        self.rows.iter().map(|r| r.relative_error).fold(0.0, f64::max)
    }
}

/// Time-averaged sizes on `V_α` from an ESC start against the prefactors `a_w`.
pub fn estimate_prefactors(
    model: &TraitGraphModel,
    esc: &EscDescriptor,
    k: u64,
    burn_in: f64,
    horizon: f64,
    seed: u64,
) -> Result<PrefactorReport, SimError> {
    if horizon <= burn_in {
        return Err(SimError::Precondition("horizon must exceed the burn-in".into()));
    }
    let config = SimConfig {
        k,
        stop: StopCondition::at_fixation(horizon, FixWatch::new(model, esc, k)),
        record: RecordOptions { occupation_from: Some(burn_in), ..RecordOptions::default() },
    };
    let record = simulate_replicate(model, &config, &esc_initial_counts(model, esc, k), seed, 0)?;
    let occ = record.occupation.as_ref().expect("occupation requested");
    let rows = esc
        .v_alpha
        .iter()
        .map(|w| {
            let d = esc.distance(w).expect("V_alpha is reachable");
            let theory = esc.prefactor(w).expect("prefactor on V_alpha");
            let measured = occ.time_average(w) / (k as f64).powf(1.0 - d as f64 / model.alpha());
            PrefactorRow {
                trait_id: model.id(w).to_string(),
                distance: d,
                theory,
                measured,
                relative_error: (measured - theory).abs() / theory,
            }
        })
        .collect();
    Ok(PrefactorReport {
        resident: model.format_set(&esc.resident),
        k,
        burn_in,
        horizon,
        seed,
        rows,
        fixation: record.t_fix.is_some(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LnkOptions {
    /// End of the comparison window on the `ln K` time scale.
    pub window_end: f64,
    /// Half-width of the excluded neighbourhood around each invasion time.
    pub delta: f64,
    /// Grid step on the `ln K` time scale.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LnkRow {
    pub k: u64,
    pub distances: Vec<f64>,
    pub median: f64,
    /// Runs in which the whole population died out inside the window.
    pub extinct_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LnkComparison {
    pub resident_end: String,
    pub invasion_times: Vec<f64>,
    pub options: LnkOptions,
    pub seed: u64,
    pub rows: Vec<LnkRow>,
    /// Medians strictly decrease along the sorted `K` list.
    pub decreasing: bool,
}

/// Initial counts for a `β` profile: macroscopic traits at `n̄_w K`, others at
/// `K^β − 1` rounded.
pub fn counts_for_beta(model: &TraitGraphModel, traj: &BetaTrajectory, k: u64) -> Result<Vec<u64>, SimError> {
    let kf = k as f64;
    let beta0 = traj.beta_at(0.0);
    let macroscopic = TraitSet::new((0..model.n()).filter(|&w| beta0[w] >= 1.0));
    let eq = lv_equilibrium(model, &macroscopic).map_err(|r| SimError::Precondition(r.describe(model)))?;
    Ok((0..model.n())
        .map(|w| match eq.density(w) {
            x if macroscopic.contains(w) => (x * kf).round() as u64,
            _ if beta0[w] > 0.0 => (kf.powf(beta0[w]) - 1.0).round().max(0.0) as u64,
            _ => 0,
        })
        .collect())
}

/// Sup-distance between simulated `β^K(t ln K)` and the `ln K` limit trajectory.
pub fn compare_lnk(
    model: &TraitGraphModel,
    ks: &[u64],
    initial_beta: &[f64],
    seeds: u64,
    seed: u64,
    options: LnkOptions,
) -> Result<LnkComparison, SimError> {
    let traj = run_lnk(model, initial_beta)?;
    let Some(end) = traj.termination.esc() else {
        return Err(SimError::Precondition(format!(
            "the ln K run ends in {}, not at an ESC",
            traj.termination.label()
        )));
    };
    let invasions = traj.phase_boundaries();
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    let mut rows = Vec::new();
    for &k in &ks {
        let lnk = (k as f64).ln();
        let config = SimConfig {
            k,
            stop: StopCondition::horizon(options.window_end * lnk),
            record: RecordOptions { grid: Some(options.step * lnk), ..RecordOptions::default() },
        };
        let initial = counts_for_beta(model, &traj, k)?;
        let runs: Vec<(f64, bool)> = (0..seeds)
            .into_par_iter()
            .map(|i| {
                let r = simulate_replicate(model, &config, &initial, seed, i)?;
                let mut sup = 0.0f64;
                for s in &r.samples {
                    let theta = s.time / lnk;
                    if theta > options.window_end || invasions.iter().any(|&b| (theta - b).abs() < options.delta) {
                        continue;
                    }
                    let want = traj.beta_at(theta);
                    for (w, &c) in s.counts.iter().enumerate() {
                        sup = sup.max((beta_of(c, k) - want[w]).abs());
                    }
                }
                Ok((sup, r.final_state.total() == 0))
            })
            .collect::<Result<_, SimError>>()?;
        let distances: Vec<f64> = runs.iter().map(|r| r.0).collect();
        rows.push(LnkRow {
            k,
            median: median(&distances),
            extinct_runs: runs.iter().filter(|r| r.1).count(),
            distances,
        });
    }
    let decreasing = rows.windows(2).all(|w| w[1].median < w[0].median);
    Ok(LnkComparison {
        resident_end: model.format_set(end),
        invasion_times: invasions,
        options,
        seed,
        rows,
        decreasing,
    })
}
