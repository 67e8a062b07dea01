//! Deterministic `ln K`-time-scale dynamics of the exponents `β_w = ln(1+N_w)/ln K`.
//!
//! Within phase `ℓ` (residents `v^(ℓ−1)`, started at `s_{ℓ−1}`):
//!
//! ```text
//! β_w(t) = max_u [β_u(s_{ℓ−1}) + (t − t_{u,ℓ} ∧ t) f(u, v^(ℓ−1)) − d(u,w)/α] ∨ 0
//! ```
//!
//! where `t_{u,ℓ} = s_{ℓ−1}` for traits alive at the phase start and otherwise the
//! first time an in-neighbour of `u` reaches `1/α`. Every term is affine in `t`
//! after its birth time, so events are found by exact line intersection:
//! 1. births `t_{u,ℓ}` (an in-neighbour crosses `1/α`)
//! 2. invasion `s_ℓ` (a non-resident reaches 1); residents are then replaced by
//!    the support of the unique saturated stable LV equilibrium of `v^(ℓ−1) ∪ {w}`
//!
//! The run stops at an ESC or at one of four degenerate situations:
//! (a) several traits reach 1 at `s_ℓ`; (b) no unique stable LV equilibrium;
//! (c) a living trait dies exactly at `s_ℓ`; (d) a birth time equals `s_ℓ`.

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::AnalysisError;
use crate::esc::{certify_esc, EscDescriptor};
use crate::lotka_volterra::{fitness_profile, lv_equilibrium, lv_flow, saturated_equilibria, LvEquilibrium};
use crate::model::{TraitGraphModel, TraitSet};
use crate::tolerances::Tolerances;

/// Why the algorithm stopped.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    /// Stationary `β` at an ESC, reached at `time`.
    EscReached { resident: TraitSet, time: f64 },
    /// More than one trait reached 1 at the same invasion time.
    CriterionA { time: f64, traits: TraitSet },
    /// The macroscopic traits have no unique stable LV equilibrium.
    CriterionB { time: f64, candidate: TraitSet },
    /// A living trait went extinct exactly at an invasion time.
    CriterionC { time: f64, traits: TraitSet },
    /// A birth time coincided with an invasion time.
    CriterionD { time: f64, traits: TraitSet },
    /// Phase cap exceeded.
    Horizon { phases: usize },
}

impl Termination {
    pub fn esc(&self) -> Option<&TraitSet> {
        match self {
            Termination::EscReached { resident, .. } => Some(resident),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Termination::EscReached { .. } => "esc_reached",
            Termination::CriterionA { .. } => "criterion_a",
            Termination::CriterionB { .. } => "criterion_b",
            Termination::CriterionC { .. } => "criterion_c",
            Termination::CriterionD { .. } => "criterion_d",
            Termination::Horizon { .. } => "horizon",
        }
    }
}

/// One phase `[s_{ℓ−1}, s_ℓ]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Phase {
    pub start: f64,
    /// `s_ℓ`, or for the last phase the time from which `β` is stationary
    /// (or the termination time).
    pub end: f64,
    pub residents: TraitSet,
    pub start_beta: Vec<f64>,
    /// `t_{w,ℓ}`; `None` for traits not born during the phase.
    pub birth_times: Vec<Option<f64>>,
    /// `f(u, residents)`.
    pub fitness: Vec<f64>,
    /// Trait that reached 1 at `end`, if the phase ended by an invasion.
    pub invader: Option<usize>,
}

/// Spot check of the LV selection at an invasion time by integrating the flow.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowCheck {
    pub time: f64,
    pub candidate: TraitSet,
    pub selected: TraitSet,
    pub flow_support: Option<TraitSet>,
    pub agrees: bool,
}

/// Piecewise-affine limit trajectory of `β`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaTrajectory {
    pub initial_beta: Vec<f64>,
    pub phases: Vec<Phase>,
    pub termination: Termination,
    pub final_beta: Vec<f64>,
    pub flow_checks: Vec<FlowCheck>,
    /// How the LV selection at invasion times is certified.
    pub certificate: &'static str,
    #[serde(skip)]
    offsets: Vec<Option<f64>>,
    #[serde(skip)]
    n: usize,
}

const CERTIFICATE: &str =
    "local: positivity + negative Jacobian spectrum + saturation; global attractivity spot-checked by LV flow";

impl Phase {
    fn term(&self, offsets: &[Option<f64>], n: usize, u: usize, w: usize, t: f64) -> Option<f64> {
        let o = offsets[u * n + w]?;
        let grow = match self.birth_times[u] {
            Some(tau) if t > tau => (t - tau) * self.fitness[u],
            _ => 0.0,
        };
        Some(self.start_beta[u] + grow - o)
    }

    fn beta(&self, offsets: &[Option<f64>], n: usize, w: usize, t: f64) -> f64 {
        (0..n).filter_map(|u| self.term(offsets, n, u, w, t)).fold(0.0, f64::max)
    }
}

impl BetaTrajectory {
    /// `β(t)`; constant after the last phase.
    pub fn beta_at(&self, t: f64) -> Vec<f64> {
        match self.phases.iter().find(|p| t <= p.end).or(self.phases.last()) {
            None => self.final_beta.clone(),
            Some(p) if t > p.end => self.final_beta.clone(),
            Some(p) => (0..self.n).map(|w| p.beta(&self.offsets, self.n, w, t.max(p.start))).collect(),
        }
    }

    /// Invasion times `s_1, s_2, …`.
    pub fn phase_boundaries(&self) -> Vec<f64> {
        self.phases.iter().filter(|p| p.invader.is_some()).map(|p| p.end).collect()
    }

    /// Time of the last recorded state (stationarity or termination).
    pub fn end_time(&self) -> f64 {
        self.phases.last().map_or(0.0, |p| p.end)
    }

    /// All kinks of the piecewise-affine trajectory with the `β` vector there.
    /// Linear interpolation between consecutive rows is exact.
    pub fn breakpoints(&self) -> Vec<(f64, Vec<f64>)> {
        let n = self.n;
        let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
        if self.phases.is_empty() {
            rows.push((0.0, self.final_beta.clone()));
            return rows;
        }
        for p in &self.phases {
            let mut times = vec![p.start, p.end];
            times.extend(p.birth_times.iter().flatten().copied());
            for w in 0..n {
                // lines (value at start, slope, activation) of every term for target w
                let lines: Vec<(f64, f64, f64)> = (0..n)
                    .filter_map(|u| {
                        let o = self.offsets[u * n + w]?;
                        let tau = p.birth_times[u]?;
                        Some((p.start_beta[u] - o, p.fitness[u], tau))
                    })
                    .collect();
                for (i, &(a, fa, ta)) in lines.iter().enumerate() {
                    if fa != 0.0 {
                        times.push(ta - a / fa);
                    }
                    for &(b, fb, tb) in &lines[i + 1..] {
                        if fa != fb {
                            // a + fa (t − ta) = b + fb (t − tb)
                            times.push((b - a + fa * ta - fb * tb) / (fa - fb));
                        }
                    }
                    // kinks against constant terms
                    for u in 0..n {
                        if let Some(o) = self.offsets[u * n + w] {
                            if fa != 0.0 {
                                let c = p.start_beta[u] - o;
                                times.push(ta + (c - a) / fa);
                            }
                        }
                    }
                }
            }
            times.retain(|t| t.is_finite() && *t >= p.start && *t <= p.end);
            times.sort_by(f64::total_cmp);
            times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            for t in times {
                if rows.last().is_some_and(|(lt, _)| (t - lt).abs() < 1e-12) {
                    continue;
                }
                rows.push((t, (0..n).map(|w| p.beta(&self.offsets, n, w, t)).collect()));
            }
        }
        rows
    }

    pub fn to_csv(&self, model: &TraitGraphModel) -> String {
        let mut out = String::from("t");
        for w in 0..model.n() {
            out.push(',');
            out.push_str(model.id(w));
        }
        out.push('\n');
        for (t, b) in self.breakpoints() {
            out.push_str(&format!("{t}"));
            for x in b {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self, model: &TraitGraphModel) -> Value {
        let set = |s: &TraitSet| s.iter().map(|v| model.id(v).to_string()).collect::<Vec<_>>();
        let termination = match &self.termination {
            Termination::EscReached { resident, time } => {
                json!({"kind": "esc_reached", "resident": set(resident), "time": time})
            }
            Termination::CriterionA { time, traits }
            | Termination::CriterionC { time, traits }
            | Termination::CriterionD { time, traits } => {
                json!({"kind": self.termination.label(), "time": time, "traits": set(traits)})
            }
            Termination::CriterionB { time, candidate } => {
                json!({"kind": "criterion_b", "time": time, "candidate": set(candidate)})
            }
            Termination::Horizon { phases } => json!({"kind": "horizon", "phases": phases}),
        };
        json!({
            "phases": self.phases.iter().map(|p| json!({
                "start": p.start,
                "end": p.end,
                "residents": set(&p.residents),
                "invader": p.invader.map(|w| model.id(w).to_string()),
            })).collect::<Vec<_>>(),
            "termination": termination,
            "final_beta": (0..model.n()).map(|w| (model.id(w).to_string(), self.final_beta[w])).collect::<std::collections::BTreeMap<_, _>>(),
            "flow_checks": self.flow_checks.iter().map(|c| json!({
                "time": c.time,
                "candidate": set(&c.candidate),
                "selected": set(&c.selected),
                "flow_support": c.flow_support.as_ref().map(set),
                "agrees": c.agrees,
            })).collect::<Vec<_>>(),
            "certificate": self.certificate,
        })
    }
}

struct Ctx<'a> {
    model: &'a TraitGraphModel,
    tol: Tolerances,
    n: usize,
    inv_alpha: f64,
    offsets: Vec<Option<f64>>,
}

/// First time `≥ t_c` at which some term for target `w` reaches `level`.
/// With `rising_only`, terms already at the level count only if their slope is positive.
fn first_hit(ctx: &Ctx, p: &Phase, w: usize, level: f64, t_c: f64, rising_only: bool) -> f64 {
    let n = ctx.n;
    let mut best = f64::INFINITY;
    for u in 0..n {
        let Some(o) = ctx.offsets[u * n + w] else { continue };
        let slope = p.fitness[u];
        let value_now = p.term(&ctx.offsets, n, u, w, t_c).expect("offset exists");
        let active_slope = p.birth_times[u].is_some() && slope > 0.0;
        if value_now >= level - ctx.tol.lnk_tie && (!rising_only || active_slope) {
            best = best.min(t_c);
            continue;
        }
        if let Some(tau) = p.birth_times[u] {
            if slope > 0.0 {
                let t0 = t_c.max(tau);
                let v0 = p.start_beta[u] - o + (t0 - tau) * slope;
                best = best.min(t0 + (level - v0) / slope);
            }
        }
    }
    best
}

fn select_support(
    ctx: &Ctx,
    candidate: &TraitSet,
) -> Result<Option<LvEquilibrium>, AnalysisError> {
    let mut found = saturated_equilibria(ctx.model, candidate)?;
    Ok(if found.len() == 1 { found.pop() } else { None })
}

fn flow_check(ctx: &Ctx, time: f64, old: &LvEquilibrium, invader: usize, candidate: &TraitSet, selected: &TraitSet) -> FlowCheck {
    let mut init = vec![0.0; ctx.n];
    for (v, x) in old.iter() {
        init[v] = x;
    }
    init[invader] = 1e-3;
    let flow_support = lv_flow(ctx.model, candidate, &init, 5000.0, 1).ok().map(|f| f.final_support);
    let agrees = flow_support.as_ref() == Some(selected);
    FlowCheck { time, candidate: candidate.clone(), selected: selected.clone(), flow_support, agrees }
}

/// Run the `ln K` algorithm from `initial_beta` (one entry per vertex, in `[0,1]`).
pub fn run_lnk(model: &TraitGraphModel, initial_beta: &[f64]) -> Result<BetaTrajectory, AnalysisError> {
    run_lnk_with(model, initial_beta, &Tolerances::DEFAULT)
}

pub fn run_lnk_with(
    model: &TraitGraphModel,
    initial_beta: &[f64],
    tol: &Tolerances,
) -> Result<BetaTrajectory, AnalysisError> {
    let n = model.n();
    if initial_beta.len() != n || initial_beta.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return Err(AnalysisError::Precondition(format!(
            "initial beta needs {n} entries in [0,1]"
        )));
    }
    let alpha = model.alpha();
    let offsets: Vec<Option<f64>> = (0..n * n)
        .map(|k| model.distance(k / n, k % n).map(|d| d as f64 / alpha))
        .collect();
    let ctx = Ctx { model, tol: *tol, n, inv_alpha: 1.0 / alpha, offsets };
    let mut traj = BetaTrajectory {
        initial_beta: initial_beta.to_vec(),
        phases: Vec::new(),
        termination: Termination::Horizon { phases: 0 },
        final_beta: Vec::new(),
        flow_checks: Vec::new(),
        certificate: CERTIFICATE,
        offsets: ctx.offsets.clone(),
        n,
    };

    // initial spreading β_w(0) = max_u [β̃_u − d(u,w)/α]₊
    let mut beta: Vec<f64> = (0..n)
        .map(|w| {
            (0..n)
                .filter_map(|u| ctx.offsets[u * n + w].map(|o| initial_beta[u] - o))
                .fold(0.0, f64::max)
        })
        .collect();
    let macroscopic = TraitSet::new((0..n).filter(|&w| initial_beta[w] >= 1.0 - tol.lnk_tie));
    if macroscopic.is_empty() {
        return Err(AnalysisError::Precondition("no trait starts at beta = 1".into()));
    }
    // the initial residents sit at their own equilibrium when they have one; otherwise
    // (a mutant that fixed with α < 1 starts at β = 1 next to its parent) resolve it
    // like an invasion
    let initial = match lv_equilibrium(model, &macroscopic) {
        Ok(eq) => Some(eq),
        Err(_) => select_support(&ctx, &macroscopic)?,
    };
    let Some(mut eq) = initial else {
        traj.termination = Termination::CriterionB { time: 0.0, candidate: macroscopic };
        traj.final_beta = beta;
        return Ok(traj);
    };
    for w in macroscopic.iter() {
        beta[w] = 1.0;
    }
    let mut s = 0.0;

    for _ in 0..tol.lnk_max_phases {
        let fitness = fitness_profile(model, &eq)?.fitness;
        let mut phase = Phase {
            start: s,
            end: f64::INFINITY,
            residents: eq.support.clone(),
            birth_times: beta.iter().map(|&b| (b > tol.lnk_tie).then_some(s)).collect(),
            start_beta: beta.clone(),
            fitness,
            invader: None,
        };
        let residents = eq.support.clone();
        let mut t_c = s;
        loop {
            let mut next_birth = f64::INFINITY;
            let mut born = Vec::new();
            for u in 0..n {
                if phase.birth_times[u].is_some() {
                    continue;
                }
                let tb = model
                    .in_edges(u)
                    .iter()
                    .map(|&(x, _)| first_hit(&ctx, &phase, x, ctx.inv_alpha, t_c, false))
                    .fold(f64::INFINITY, f64::min);
                if tb < next_birth - tol.lnk_tie {
                    next_birth = tb;
                    born.clear();
                    born.push(u);
                } else if (tb - next_birth).abs() <= tol.lnk_tie {
                    born.push(u);
                }
            }
            let next_invasion = (0..n)
                .filter(|w| !residents.contains(*w))
                .map(|w| first_hit(&ctx, &phase, w, 1.0, t_c, true))
                .fold(f64::INFINITY, f64::min);

            if next_birth.is_finite() && next_birth < next_invasion - tol.lnk_tie {
                for &u in &born {
                    phase.birth_times[u] = Some(next_birth);
                }
                t_c = next_birth;
                continue;
            }
            if next_invasion.is_infinite() {
                // no further events: decay to the stationary profile
                let (end, stationary) = stationary_profile(&ctx, &phase);
                phase.end = end;
                // an already stationary start contributes no phase
                if end > phase.start {
                    traj.phases.push(phase);
                }
                traj.final_beta = stationary;
                let esc = certify_esc(model, &residents)
                    .map_err(|r| r.to_error(model, &residents))?;
                traj.termination = Termination::EscReached { resident: esc.resident, time: end };
                return Ok(traj);
            }

            let s_new = next_invasion;
            phase.end = s_new;
            let at_end: Vec<f64> = (0..n).map(|w| phase.beta(&ctx.offsets, n, w, s_new)).collect();
            if (next_birth - s_new).abs() <= tol.lnk_tie {
                traj.final_beta = at_end;
                traj.phases.push(phase);
                traj.termination = Termination::CriterionD { time: s_new, traits: TraitSet::new(born) };
                return Ok(traj);
            }
            let invaders = TraitSet::new(
                (0..n).filter(|&w| !residents.contains(w) && at_end[w] >= 1.0 - tol.lnk_tie),
            );
            if invaders.len() != 1 {
                traj.final_beta = at_end;
                traj.phases.push(phase);
                traj.termination = Termination::CriterionA { time: s_new, traits: invaders };
                return Ok(traj);
            }
            let dying = TraitSet::new((0..n).filter(|&w| dies_at(&ctx, &phase, w, s_new)));
            if !dying.is_empty() {
                traj.final_beta = at_end;
                traj.phases.push(phase);
                traj.termination = Termination::CriterionC { time: s_new, traits: dying };
                return Ok(traj);
            }
            let w_star = invaders.iter().next().expect("one invader");
            phase.invader = Some(w_star);
            let candidate = residents.with(w_star);
            let Some(next_eq) = select_support(&ctx, &candidate)? else {
                traj.final_beta = at_end;
                traj.phases.push(phase);
                traj.termination = Termination::CriterionB { time: s_new, candidate };
                return Ok(traj);
            };
            traj.flow_checks.push(flow_check(&ctx, s_new, &eq, w_star, &candidate, &next_eq.support));
            traj.phases.push(phase);
            beta = at_end.iter().map(|b| b.clamp(0.0, 1.0)).collect();
            for w in candidate.iter() {
                beta[w] = 1.0;
            }
            eq = next_eq;
            s = s_new;
            break;
        }
    }
    traj.termination = Termination::Horizon { phases: traj.phases.len() };
    traj.final_beta = beta;
    Ok(traj)
}

/// A trait whose exponent reaches 0 exactly at `t` coming from above.
fn dies_at(ctx: &Ctx, p: &Phase, w: usize, t: f64) -> bool {
    let n = ctx.n;
    let tie = ctx.tol.lnk_tie;
    let mut max_val = f64::NEG_INFINITY;
    let mut falling_at_zero = false;
    for u in 0..n {
        let Some(v) = p.term(&ctx.offsets, n, u, w, t) else { continue };
        max_val = max_val.max(v);
        let active = p.birth_times[u].is_some_and(|tau| tau < t);
        if v.abs() <= tie && active && p.fitness[u] < 0.0 {
            falling_at_zero = true;
        }
    }
    falling_at_zero && max_val <= tie
}

/// Time from which the last phase is constant, and the constant profile.
fn stationary_profile(ctx: &Ctx, p: &Phase) -> (f64, Vec<f64>) {
    let n = ctx.n;
    let mut end = p.start;
    let mut profile = vec![0.0; n];
    for w in 0..n {
        let mut floor = 0.0f64;
        for u in 0..n {
            let Some(o) = ctx.offsets[u * n + w] else { continue };
            let constant = p.birth_times[u].is_none() || p.fitness[u] == 0.0;
            if constant {
                floor = floor.max(p.start_beta[u] - o);
            }
        }
        profile[w] = floor;
        for u in 0..n {
            let Some(o) = ctx.offsets[u * n + w] else { continue };
            if let Some(tau) = p.birth_times[u] {
                let f = p.fitness[u];
                if f < 0.0 {
                    let v0 = p.start_beta[u] - o;
                    if v0 > floor {
                        end = end.max(tau + (v0 - floor) / -f);
                    }
                }
            }
        }
    }
    (end, profile)
}

/// Outcome of `v_ESC(v, w)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AfterFixation {
    pub mutant: usize,
    pub trajectory: BetaTrajectory,
}

impl AfterFixation {
    pub fn target(&self) -> Option<&TraitSet> {
        self.trajectory.termination.esc()
    }
}

/// Initial profile right after `w` fixes in `esc`: `β_w = 1/α` (capped at 1 for `α < 1`),
/// `β_u = (1 − d(v,u)/α)₊` otherwise.
pub fn after_fixation_profile(model: &TraitGraphModel, esc: &EscDescriptor, w: usize) -> Vec<f64> {
    let mut beta = esc.beta_profile.clone();
    beta[w] = (1.0 / model.alpha()).min(1.0);
    beta
}

/// `v_ESC(v, w)`: run the `ln K` algorithm after fixation of `w ∈ V_mut(v)`.
pub fn esc_after_fixation(
    model: &TraitGraphModel,
    esc: &EscDescriptor,
    w: usize,
) -> Result<AfterFixation, AnalysisError> {
    if !esc.mutant_candidates.contains(w) {
        return Err(AnalysisError::Precondition(format!(
            "{} is not a mutant candidate of {}",
            model.id(w),
            model.format_set(&esc.resident)
        )));
    }
    let trajectory = run_lnk(model, &after_fixation_profile(model, esc, w))?;
    Ok(AfterFixation { mutant: w, trajectory })
}
