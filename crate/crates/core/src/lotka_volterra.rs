//! Mutation-free Lotka-Volterra system
//! `ṅ_v = (b(v) − d(v) − Σ_w c(v,w) n_w) n_v`.
//!
//! - coexistence equilibria by a restricted linear solve, accepted when positive
//!   and locally asymptotically stable (eigenvalues of `−diag(n̄)·C`)
//! - invasion fitness `f(w,v) = b(w) − d(w) − Σ_u c(w,u) n̄_u`
//! - Dormand-Prince 5(4) integration of the flow

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::AnalysisError;
use crate::model::{TraitGraphModel, TraitSet};
use crate::tolerances::Tolerances;

/// Accepted coexistence equilibrium on `support`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LvEquilibrium {
    pub support: TraitSet,
    /// Densities aligned with `support` (units of K individuals).
    pub values: Vec<f64>,
    /// Largest real part of the Jacobian spectrum.
    pub stability_margin: f64,
}

impl LvEquilibrium {
    /// `n̄_v`, zero off the support.
    pub fn density(&self, v: usize) -> f64 {
        self.support
            .as_slice()
            .binary_search(&v)
            .map(|i| self.values[i])
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.support.iter().zip(self.values.iter().copied())
    }
}

/// Why a support carries no accepted equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LvRejection {
    InvalidSupport,
    /// Singular (or numerically singular) restricted competition matrix.
    Degenerate,
    NotPositive { vertex: usize, value: f64 },
    Unstable { margin: f64 },
}

impl LvRejection {
    pub fn describe(&self, model: &TraitGraphModel) -> String {
        match self {
            LvRejection::InvalidSupport => "invalid support".into(),
            LvRejection::Degenerate => "degenerate (singular) Lotka-Volterra system".into(),
            LvRejection::NotPositive { vertex, value } => {
                format!("equilibrium density of {} is {value:e}", model.id(*vertex))
            }
            LvRejection::Unstable { margin } => {
                format!("equilibrium is not locally stable (max Re λ = {margin:e})")
            }
        }
    }
}

fn restricted(model: &TraitGraphModel, support: &TraitSet) -> (DMatrix<f64>, DVector<f64>) {
    let s = support.as_slice();
    let c = DMatrix::from_fn(s.len(), s.len(), |i, j| model.competition(s[i], s[j]));
    let r = DVector::from_fn(s.len(), |i, _| model.growth(s[i]));
    (c, r)
}

/// Solve the equilibrium equations on `support` and certify positivity and local stability.
pub fn lv_equilibrium(
    model: &TraitGraphModel,
    support: &TraitSet,
) -> Result<LvEquilibrium, LvRejection> {
    lv_equilibrium_with(model, support, &Tolerances::DEFAULT)
}

pub fn lv_equilibrium_with(
    model: &TraitGraphModel,
    support: &TraitSet,
    tol: &Tolerances,
) -> Result<LvEquilibrium, LvRejection> {
    if support.is_empty() || support.iter().any(|v| v >= model.n()) {
        return Err(LvRejection::InvalidSupport);
    }
    let (c, r) = restricted(model, support);
    let sv = c.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if smax <= 0.0 || smin / smax < tol.lv_singular {
        return Err(LvRejection::Degenerate);
    }
    let n = c.clone().full_piv_lu().solve(&r).ok_or(LvRejection::Degenerate)?;
    let residual = &c * &n - &r;
    for i in 0..n.len() {
        let scale = r[i].abs() + (0..n.len()).map(|j| (c[(i, j)] * n[j]).abs()).sum::<f64>();
        if residual[i].abs() > tol.lv_residual * scale.max(1.0) {
            return Err(LvRejection::Degenerate);
        }
    }
    for (i, v) in support.iter().enumerate() {
        if !(n[i] > tol.lv_positive) {
            return Err(LvRejection::NotPositive { vertex: v, value: n[i] });
        }
    }
    let jac = -DMatrix::from_diagonal(&n) * &c;
    let margin = jac
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(margin < -tol.lv_stability) {
        return Err(LvRejection::Unstable { margin });
    }
    Ok(LvEquilibrium { support: support.clone(), values: n.iter().copied().collect(), stability_margin: margin })
}

/// Raw `b(w) − d(w) − Σ c(w,u) n̄_u` without any assumption check.
pub fn fitness_value(model: &TraitGraphModel, eq: &LvEquilibrium, w: usize) -> f64 {
    model.growth(w) - eq.iter().map(|(u, n)| model.competition(w, u) * n).sum::<f64>()
}

/// Invasion fitness `f(w, support)`. Residents return exactly 0 (structural zero);
/// a numerically zero value for a non-resident is an assumption violation.
pub fn invasion_fitness(
    model: &TraitGraphModel,
    eq: &LvEquilibrium,
    w: usize,
) -> Result<f64, AnalysisError> {
    model.check_index(w)?;
    if eq.support.contains(w) {
        return Ok(0.0);
    }
    let f = fitness_value(model, eq, w);
    if f.abs() < Tolerances::DEFAULT.zero_fitness {
        return Err(AnalysisError::ZeroFitness {
            trait_label: model.id(w).to_string(),
            resident: model.format_set(&eq.support),
            value: f,
        });
    }
    Ok(f)
}

/// `f(·, v)` for every vertex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitnessProfile {
    pub resident: TraitSet,
    pub fitness: Vec<f64>,
}

impl FitnessProfile {
    pub fn of(&self, w: usize) -> f64 {
        self.fitness[w]
    }
}

pub fn fitness_profile(
    model: &TraitGraphModel,
    eq: &LvEquilibrium,
) -> Result<FitnessProfile, AnalysisError> {
    let fitness = (0..model.n())
        .map(|w| invasion_fitness(model, eq, w))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FitnessProfile { resident: eq.support.clone(), fitness })
}

/// All accepted equilibria on subsets of `candidate` that no other candidate trait can invade.
///
/// A boundary equilibrium `S ⊂ M` is asymptotically stable for the LV system on `M`
/// iff it is locally stable on `S` and every `w ∈ M∖S` has `f(w,S) < 0`.
pub fn saturated_equilibria(
    model: &TraitGraphModel,
    candidate: &TraitSet,
) -> Result<Vec<LvEquilibrium>, AnalysisError> {
    model.check_set(candidate)?;
    if candidate.len() > 20 {
        return Err(AnalysisError::Precondition(format!(
            "candidate set of {} traits is too large for subset search",
            candidate.len()
        )));
    }
    let items = candidate.as_slice();
    let mut found = Vec::new();
    for mask in 1u64..(1 << items.len()) {
        let sub = TraitSet::new((0..items.len()).filter(|i| mask >> i & 1 == 1).map(|i| items[i]));
        let Ok(eq) = lv_equilibrium(model, &sub) else { continue };
        let mut saturated = true;
        for &w in items {
            if !sub.contains(w) && invasion_fitness(model, &eq, w)? > 0.0 {
                saturated = false;
                break;
            }
        }
        if saturated {
            found.push(eq);
        }
    }
    Ok(found)
}

/// Sampled LV trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LvFlow {
    /// Traits integrated (the `support` argument).
    pub traits: TraitSet,
    pub times: Vec<f64>,
    /// `states[k][i]`: density of `traits[i]` at `times[k]`.
    pub states: Vec<Vec<f64>>,
    /// Traits above the support threshold at the horizon.
    pub final_support: TraitSet,
}

impl LvFlow {
    pub fn to_csv(&self, model: &TraitGraphModel) -> String {
        let mut out = String::from("t");
        for v in self.traits.iter() {
            out.push(',');
            out.push_str(model.id(v));
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t}"));
            for x in s {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("flow has at least one sample")
    }
}

// Dormand-Prince 5(4) tableau; the field is autonomous so the nodes c_i are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate the LV flow restricted to `support` from `initial` (indexed by vertex).
/// Returns `samples + 1` equally spaced samples on `[0, horizon]`.
pub fn lv_flow(
    model: &TraitGraphModel,
    support: &TraitSet,
    initial: &[f64],
    horizon: f64,
    samples: usize,
) -> Result<LvFlow, AnalysisError> {
    let tol = Tolerances::DEFAULT;
    model.check_set(support)?;
    if initial.len() != model.n() {
        return Err(AnalysisError::Precondition(format!(
            "initial state has {} entries, model has {} vertices",
            initial.len(),
            model.n()
        )));
    }
    if initial.iter().any(|&x| !(x >= 0.0)) {
        return Err(AnalysisError::Precondition("initial densities must be nonnegative".into()));
    }
    if !(horizon >= 0.0) {
        return Err(AnalysisError::Precondition("horizon must be nonnegative".into()));
    }
    let (c, r) = restricted(model, support);
    let dim = support.len();
    let rhs = |y: &[f64], out: &mut [f64]| {
        for i in 0..dim {
            let mut g = r[i];
            for j in 0..dim {
                g -= c[(i, j)] * y[j];
            }
            out[i] = g * y[i];
        }
    };

    let samples = samples.max(1);
    let mut y: Vec<f64> = support.iter().map(|v| initial[v]).collect();
    if let Some(&big) = y.iter().find(|x| **x > tol.ode_blowup) {
        return Err(AnalysisError::FlowBlowUp { time: 0.0, value: big });
    }
    let mut times = vec![0.0];
    let mut states = vec![y.clone()];
    let mut t = 0.0;
    let mut h = (horizon / samples as f64).min(0.1).max(1e-6);
    let mut k = vec![vec![0.0; dim]; 7];
    let mut tmp = vec![0.0; dim];
    let mut ynew = vec![0.0; dim];

    for s in 1..=samples {
        let target = horizon * s as f64 / samples as f64;
        while t < target {
            let step = h.min(target - t);
            rhs(&y, &mut k[0]);
            for st in 1..7 {
                for i in 0..dim {
                    tmp[i] = y[i] + step * (0..st).map(|j| A[st][j] * k[j][i]).sum::<f64>();
                }
                rhs(&tmp, &mut k[st]);
            }
            // The 7th stage is evaluated at the 5th-order solution (FSAL).
            ynew.copy_from_slice(&tmp);
            let mut err = 0.0;
            for i in 0..dim {
                let e = step * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
                let sc = tol.ode_atol + tol.ode_rtol * y[i].abs().max(ynew[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / dim as f64).sqrt();
            if err <= 1.0 {
                t += step;
                y.copy_from_slice(&ynew);
                if let Some(&big) = y.iter().find(|x| x.abs() > tol.ode_blowup || !x.is_finite()) {
                    return Err(AnalysisError::FlowBlowUp { time: t, value: big });
                }
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (step * factor).max(1e-12);
            if err > 1.0 && step <= 1e-12 {
                return Err(AnalysisError::FlowBlowUp { time: t, value: f64::NAN });
            }
        }
        times.push(target);
        states.push(y.clone());
    }
    let final_support =
        TraitSet::new(support.iter().zip(&y).filter(|(_, &x)| x > tol.ode_support).map(|(v, _)| v));
    Ok(LvFlow { traits: support.clone(), times, states, final_support })
}
