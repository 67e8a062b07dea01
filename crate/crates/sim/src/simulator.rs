//! Exact stochastic simulation (direct-method SSA) of the individual-based process.
//!
//! Per trait `v` three channels:
//! - clear birth `N_v b(v) (1 − μ_K M_v)`, where `M_v` is the mutation mass of `v`
//!   (1, or 0 for a vertex without out-edges)
//! - mutant birth into `v`: `μ_K Σ_u N_u b(u) m(u,v)`
//! - death `N_v (d(v) + Σ_w c(v,w) N_w / K)`
//!
//! The competition loads and mutant inflows are updated incrementally on every
//! event and resynchronised from scratch every [`RESYNC_EVENTS`] events; the
//! largest relative drift seen at a resync is reported.

use adyn_core::{EscDescriptor, TraitGraphModel, TraitSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::SimError;

pub const RESYNC_EVENTS: u64 = 1_000_000;
pub const RATE_OVERFLOW: f64 = 1e15;

/// `N^K` at one instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationState {
    pub counts: Vec<u64>,
    pub time: f64,
    pub k: u64,
}

impl PopulationState {
    /// `β^K_v = ln(1 + N_v) / ln K`.
    pub fn beta(&self, v: usize) -> f64 {
        beta_of(self.counts[v], self.k)
    }

    pub fn mu(&self, model: &TraitGraphModel) -> f64 {
        model.mutation_probability(self.k as f64)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn beta_of(n: u64, k: u64) -> f64 {
    (n as f64).ln_1p() / (k as f64).ln()
}

/// Smallest count `N` with `β^K ≥ 1/α`, i.e. `1 + N ≥ K^(1/α)`.
pub fn fixation_threshold(model: &TraitGraphModel, k: u64) -> u64 {
    let x = (k as f64).powf(1.0 / model.alpha());
    let r = x.round();
    // K^(1/α) integral up to rounding: 1 + N ≥ x exactly at N = x − 1
    let x = if (x - r).abs() <= 1e-9 * x { r } else { x };
    (x.ceil() as u64).saturating_sub(1)
}

/// Initial ESC state: `round(a_w K μ_K^d(v,w))` on `V_α`, zero elsewhere.
pub fn esc_initial_counts(model: &TraitGraphModel, esc: &EscDescriptor, k: u64) -> Vec<u64> {
    let kf = k as f64;
    (0..model.n())
        .map(|w| match (esc.prefactor(w), esc.distance(w)) {
            (Some(a), Some(d)) if esc.v_alpha.contains(w) => {
                (a * kf.powf(1.0 - d as f64 / model.alpha())).round() as u64
            }
            _ => 0,
        })
        .collect()
}

/// `T_fix` watch: traits outside `V_α` of the initial residents and the count threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct FixWatch {
    pub outside: Vec<bool>,
    pub threshold: u64,
}

impl FixWatch {
    pub fn new(model: &TraitGraphModel, esc: &EscDescriptor, k: u64) -> Self {
        FixWatch {
            outside: (0..model.n()).map(|w| !esc.v_alpha.contains(w)).collect(),
            threshold: fixation_threshold(model, k),
        }
    }

    fn hit(&self, counts: &[u64]) -> Option<usize> {
        (0..counts.len()).find(|&w| self.outside[w] && counts[w] >= self.threshold)
    }
}

/// `T_ESC` band: every `V_α(target)` trait within `ε_K = C / ln K` of its target
/// exponent and every other trait extinct.
#[derive(Debug, Clone, PartialEq)]
pub struct EscBand {
    pub target: TraitSet,
    pub inside: Vec<bool>,
    pub beta: Vec<f64>,
    pub epsilon: f64,
}

impl EscBand {
    pub fn new(model: &TraitGraphModel, target: &EscDescriptor, k: u64, band_constant: f64) -> Self {
        EscBand {
            target: target.resident.clone(),
            inside: (0..model.n()).map(|w| target.v_alpha.contains(w)).collect(),
            beta: target.beta_profile.clone(),
            epsilon: band_constant / (k as f64).ln(),
        }
    }

    pub fn contains(&self, counts: &[u64], k: u64) -> bool {
        counts.iter().enumerate().all(|(w, &n)| {
            if self.inside[w] {
                (beta_of(n, k) - self.beta[w]).abs() < self.epsilon
            } else {
                n == 0
            }
        })
    }
}

/// `2 max_{w ∈ V_α} |ln a_w| + 1`: wide enough for the prefactor offset
/// `ln a_w / ln K` of the quasi-stationary state.
pub fn default_band_constant(esc: &EscDescriptor) -> f64 {
    2.0 * esc.prefactors.values().map(|a| a.ln().abs()).fold(0.0, f64::max) + 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopCondition {
    pub horizon: f64,
    pub max_events: u64,
    pub fix: Option<FixWatch>,
    pub stop_on_fix: bool,
    /// Armed from the start, or after `T_fix` when a fix watch is present.
    pub esc: Option<EscBand>,
    pub stop_on_esc: bool,
}

impl StopCondition {
    pub fn horizon(horizon: f64) -> Self {
        StopCondition { horizon, max_events: u64::MAX, fix: None, stop_on_fix: false, esc: None, stop_on_esc: false }
    }

    pub fn at_fixation(horizon: f64, watch: FixWatch) -> Self {
        StopCondition { fix: Some(watch), stop_on_fix: true, ..Self::horizon(horizon) }
    }

    pub fn at_esc(horizon: f64, fix: Option<FixWatch>, band: EscBand) -> Self {
        StopCondition { fix, esc: Some(band), stop_on_esc: true, ..Self::horizon(horizon) }
    }

    pub fn with_max_events(mut self, max_events: u64) -> Self {
        self.max_events = max_events;
        self
    }
}

/// What gets written into the record besides the stopping times.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordOptions {
    /// Keep every `stride`-th event (0 keeps none).
    pub stride: u64,
    /// Keep the state at the grid times `0, Δ, 2Δ, …`.
    pub grid: Option<f64>,
    /// Accumulate `∫ N_w dt` from this time on.
    pub occupation_from: Option<f64>,
    /// Record the times of mutant births into this trait.
    pub arrivals_of: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub k: u64,
    pub stop: StopCondition,
    pub record: RecordOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Horizon,
    Fixation,
    EscReached,
    Extinct,
    EventBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixEvent {
    pub time: f64,
    pub trait_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub time: f64,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Occupation {
    pub from: f64,
    pub until: f64,
    /// `∫ N_w dt` over `[from, until]`.
    pub integrals: Vec<f64>,
}

impl Occupation {
    pub fn time_average(&self, w: usize) -> f64 {
        self.integrals[w] / (self.until - self.from)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationRecord {
    pub k: u64,
    pub seed: u64,
    pub stream: u64,
    pub initial: Vec<u64>,
    pub samples: Vec<Sample>,
    pub t_fix: Option<FixEvent>,
    pub t_esc: Option<f64>,
    pub end: EndReason,
    pub final_state: PopulationState,
    pub events: u64,
    /// Largest relative gap between the incremental and recomputed total rate.
    pub max_rate_drift: f64,
    pub occupation: Option<Occupation>,
    pub arrivals: Vec<f64>,
}

impl SimulationRecord {
    pub fn to_csv(&self, model: &TraitGraphModel) -> String {
        let mut out = String::from("t");
        for id in model.ids() {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for s in &self.samples {
            out.push_str(&s.time.to_string());
            for c in &s.counts {
                out.push(',');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Incremental rate bookkeeping.
struct Rates<'a> {
    model: &'a TraitGraphModel,
    n: usize,
    k: f64,
    mu: f64,
    clear: Vec<f64>,
    /// `Σ_w c(v,w) N_w`.
    load: Vec<f64>,
    /// `Σ_u N_u b(u) m(u,v)`.
    inflow: Vec<f64>,
    per_trait: Vec<f64>,
    total: f64,
}

impl<'a> Rates<'a> {
    fn new(model: &'a TraitGraphModel, k: u64, counts: &[u64]) -> Self {
        let n = model.n();
        let mu = model.mutation_probability(k as f64);
        let clear = (0..n).map(|v| model.birth(v) * (1.0 - mu * model.mutation_mass(v))).collect();
        let mut r = Rates {
            model,
            n,
            k: k as f64,
            mu,
            clear,
            load: vec![0.0; n],
            inflow: vec![0.0; n],
            per_trait: vec![0.0; n],
            total: 0.0,
        };
        r.resync(counts);
        r
    }

    fn channels(&self, v: usize, nv: u64) -> [f64; 3] {
        let nv = nv as f64;
        [
            nv * self.clear[v],
            self.mu * self.inflow[v].max(0.0),
            nv * (self.model.death(v) + self.load[v].max(0.0) / self.k),
        ]
    }

    /// Recompute everything from the counts; returns the relative drift of the total.
    fn resync(&mut self, counts: &[u64]) -> f64 {
        let m = self.model;
        for v in 0..self.n {
            self.load[v] = (0..self.n).map(|w| m.competition(v, w) * counts[w] as f64).sum();
            self.inflow[v] = m.in_edges(v).iter().map(|&(u, x)| counts[u] as f64 * m.birth(u) * x).sum();
        }
        let mut total = 0.0;
        for v in 0..self.n {
            self.per_trait[v] = self.channels(v, counts[v]).iter().sum();
            total += self.per_trait[v];
        }
        let drift = if total > 0.0 { (self.total - total).abs() / total } else { self.total.abs() };
        self.total = total;
        drift
    }

    fn apply(&mut self, counts: &[u64], x: usize, delta: f64) {
        let m = self.model;
        for v in 0..self.n {
            self.load[v] += delta * m.competition(v, x);
        }
        for &(w, p) in m.out_edges(x) {
            self.inflow[w] += delta * m.birth(x) * p;
        }
        for v in 0..self.n {
            let new: f64 = self.channels(v, counts[v]).iter().sum();
            self.total += new - self.per_trait[v];
            self.per_trait[v] = new;
        }
    }
}

pub fn simulate(
    model: &TraitGraphModel,
    config: &SimConfig,
    initial: &[u64],
    seed: u64,
) -> Result<SimulationRecord, SimError> {
    simulate_replicate(model, config, initial, seed, 0)
}

/// Replicate `stream` of the seed: ChaCha streams are disjoint, so replicates
/// are independent and each is reproducible on its own.
pub fn simulate_replicate(
    model: &TraitGraphModel,
    config: &SimConfig,
    initial: &[u64],
    seed: u64,
    stream: u64,
) -> Result<SimulationRecord, SimError> {
    let n = model.n();
    let k = config.k;
    if k < 2 {
        return Err(SimError::InvalidK(k));
    }
    if initial.len() != n {
        return Err(SimError::BadInitial { expected: n, got: initial.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let stop = &config.stop;
    let opts = &config.record;
    let mut counts = initial.to_vec();
    let mut rates = Rates::new(model, k, &counts);
    let mut time = 0.0f64;
    let mut events = 0u64;
    let mut max_drift = 0.0f64;
    let mut samples = Vec::new();
    let mut next_grid = 0.0f64;
    let mut occupation = opts.occupation_from.map(|from| Occupation { from, until: from, integrals: vec![0.0; n] });
    let mut arrivals = Vec::new();
    let mut t_fix: Option<FixEvent> = None;
    let mut t_esc: Option<f64> = None;

    let mut esc_armed = stop.fix.is_none();
    if let Some(watch) = &stop.fix {
        if let Some(w) = watch.hit(&counts) {
            t_fix = Some(FixEvent { time: 0.0, trait_index: w });
            esc_armed = true;
        }
    }
    if esc_armed && stop.esc.as_ref().is_some_and(|b| b.contains(&counts, k)) {
        t_esc = Some(0.0);
    }

    let end = loop {
        if stop.stop_on_fix && t_fix.is_some() {
            break EndReason::Fixation;
        }
        if stop.stop_on_esc && t_esc.is_some() {
            break EndReason::EscReached;
        }
        if events >= stop.max_events {
            break EndReason::EventBudget;
        }
        if rates.total > RATE_OVERFLOW {
            return Err(SimError::RateOverflow { time, total: rates.total });
        }
        if rates.total <= 0.0 || counts.iter().all(|&c| c == 0) {
            // absorbed: nothing can happen any more
            record_until(&mut samples, &mut next_grid, opts.grid, time, &counts);
            break EndReason::Extinct;
        }

        let u: f64 = rng.random();
        let dt = -(1.0 - u).ln() / rates.total;
        let t_next = time + dt;
        if t_next > stop.horizon {
            record_until(&mut samples, &mut next_grid, opts.grid, stop.horizon, &counts);
            accumulate(&mut occupation, time, stop.horizon, &counts);
            time = stop.horizon;
            break EndReason::Horizon;
        }
        record_until(&mut samples, &mut next_grid, opts.grid, t_next, &counts);
        accumulate(&mut occupation, time, t_next, &counts);
        time = t_next;

        // pick trait, then channel
        let mut target = rates.total * rng.random::<f64>();
        let mut v = n;
        for x in 0..n {
            if target < rates.per_trait[x] {
                v = x;
                break;
            }
            target -= rates.per_trait[x];
        }
        if v == n {
            // rounding left the draw past the last channel
            v = (0..n).rev().find(|&x| rates.per_trait[x] > 0.0).expect("positive total rate");
            target = rates.per_trait[v] * 0.5;
        }
        let [clear, mutant, _] = rates.channels(v, counts[v]);
        let delta = if target < clear + mutant {
            if target >= clear && opts.arrivals_of == Some(v) {
                arrivals.push(time);
            }
            1.0
        } else {
            -1.0
        };
        if delta > 0.0 {
            counts[v] += 1;
        } else {
            counts[v] -= 1;
        }
        rates.apply(&counts, v, delta);
        events += 1;
        if events % RESYNC_EVENTS == 0 {
            max_drift = max_drift.max(rates.resync(&counts));
        }
        if opts.stride > 0 && events % opts.stride == 0 {
            samples.push(Sample { time, counts: counts.clone() });
        }

        if t_fix.is_none() && delta > 0.0 {
            if let Some(watch) = &stop.fix {
                if watch.outside[v] && counts[v] >= watch.threshold {
                    t_fix = Some(FixEvent { time, trait_index: v });
                    esc_armed = true;
                }
            }
        }
        if esc_armed && t_esc.is_none() && stop.esc.as_ref().is_some_and(|b| b.contains(&counts, k)) {
            t_esc = Some(time);
        }
    };

    if opts.stride > 0 && samples.last().is_none_or(|s| s.time < time) {
        samples.push(Sample { time, counts: counts.clone() });
    }
    if let Some(o) = &mut occupation {
        o.until = o.until.max(o.from);
    }
    Ok(SimulationRecord {
        k,
        seed,
        stream,
        initial: initial.to_vec(),
        samples,
        t_fix,
        t_esc,
        end,
        final_state: PopulationState { counts, time, k },
        events,
        max_rate_drift: max_drift,
        occupation,
        arrivals,
    })
}

fn record_until(samples: &mut Vec<Sample>, next: &mut f64, grid: Option<f64>, until: f64, counts: &[u64]) {
    let Some(step) = grid else { return };
    while *next <= until && next.is_finite() {
        samples.push(Sample { time: *next, counts: counts.to_vec() });
        *next += step;
    }
}

fn accumulate(occ: &mut Option<Occupation>, t0: f64, t1: f64, counts: &[u64]) {
    let Some(o) = occ else { return };
    let lo = t0.max(o.from);
    if t1 > lo {
        for (acc, &c) in o.integrals.iter_mut().zip(counts) {
            *acc += c as f64 * (t1 - lo);
        }
        o.until = t1;
    }
}

/// Total rate of the generator at `counts`, computed directly from the definition.
pub fn total_rate(model: &TraitGraphModel, k: u64, counts: &[u64]) -> f64 {
    let n = model.n();
    let kf = k as f64;
    let mu = model.mutation_probability(kf);
    let mut total = 0.0;
    for v in 0..n {
        let nv = counts[v] as f64;
        total += nv * model.birth(v) * (1.0 - mu * model.mutation_mass(v));
        total += mu * (0..n).map(|u| counts[u] as f64 * model.birth(u) * model.mutation(u, v)).sum::<f64>();
        total += nv * (model.death(v) + (0..n).map(|w| model.competition(v, w) * counts[w] as f64).sum::<f64>() / kf);
    }
    total
}

/// First sampled time at which a trait outside `V_α(esc)` reaches `β^K ≥ 1/α`.
/// Exact when the record keeps every event (`stride = 1`).
pub fn detect_t_fix(model: &TraitGraphModel, record: &SimulationRecord, esc: &EscDescriptor) -> Option<FixEvent> {
    let watch = FixWatch::new(model, esc, record.k);
    std::iter::once((0.0, &record.initial))
        .chain(record.samples.iter().map(|s| (s.time, &s.counts)))
        .find_map(|(time, counts)| watch.hit(counts).map(|w| FixEvent { time, trait_index: w }))
}

/// First sampled time inside the `ε_K = C / ln K` band around `target`.
pub fn detect_t_esc(
    model: &TraitGraphModel,
    record: &SimulationRecord,
    target: &EscDescriptor,
    band_constant: f64,
) -> Option<f64> {
    let band = EscBand::new(model, target, record.k, band_constant);
    std::iter::once((0.0, &record.initial))
        .chain(record.samples.iter().map(|s| (s.time, &s.counts)))
        .find(|(_, counts)| band.contains(counts, record.k))
        .map(|(t, _)| t)
}
