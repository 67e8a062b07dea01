//! Fitness-valley crossing rates out of an ESC.
//!
//! For a shortest path `γ` of length `L = L(v)` from the residents to a fit
//! trait, with `F = ⌊α⌋`:
//!
//! ```text
//! R(v,γ) = n̄_{γ₀} · Π_{i=1..F} b(γ_{i−1}) m(γ_{i−1},γ_i) / |f(γ_i,v)|
//!        · b(γ_F) m(γ_F,γ_{F+1})
//!        · Π_{j=F+1..L−1} λ(ρ(γ_j,v)) m(γ_j,γ_{j+1})
//!        · f(γ_L,v) / b(γ_L)
//! ```
//!
//! Rates are per unit of the `1/(K μ_K^L)` time scale; `K` never enters here.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::AnalysisError;
use crate::esc::{EscDescriptor, StabilityDegree};
use crate::excursions::{birth_fraction, expected_births};
use crate::model::{shortest_paths, MutationPath, TraitGraphModel, TraitSet};
use crate::tolerances::Tolerances;

/// `R(v,γ)` split into its three blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRateBreakdown {
    pub path: MutationPath,
    /// `n̄_{γ₀} Π_{i≤F} b m/|f|`: mutant supply inside `V_α` up to `γ_F`.
    pub within_block: f64,
    /// `b(γ_F) m(γ_F, γ_{F+1})`.
    pub boundary_factor: f64,
    /// `Π λ(ρ) m` over the excursion stretch; 1 when the stretch is empty.
    pub excursion_block: f64,
    /// `f(γ_L)/b(γ_L)`.
    pub fixation_factor: f64,
    /// Arrival rate of `γ_L` mutants along `γ` (everything but the fixation factor).
    pub arrival_rate: f64,
    pub total: f64,
}

fn path_error(model: &TraitGraphModel, path: &MutationPath, msg: String) -> AnalysisError {
    AnalysisError::InvalidPath(format!("{}: {msg}", model.format_path(path)))
}

/// `R(v,γ)` for one admissible shortest path.
pub fn path_rate(
    model: &TraitGraphModel,
    esc: &EscDescriptor,
    path: &MutationPath,
) -> Result<PathRateBreakdown, AnalysisError> {
    let StabilityDegree::Finite(l) = esc.stability_degree else {
        return Err(AnalysisError::Precondition("absorbing ESC has no exit paths".into()));
    };
    let l = l as usize;
    let g = path.vertices();
    if path.len() != l {
        return Err(path_error(model, path, format!("length {} differs from L = {l}", path.len())));
    }
    if !esc.resident.contains(g[0]) {
        return Err(path_error(model, path, "does not start at a resident".into()));
    }
    for (i, pair) in g.windows(2).enumerate() {
        if model.mutation(pair[0], pair[1]) <= 0.0 {
            return Err(path_error(model, path, format!("step {i} is not an edge")));
        }
    }
    let f = |w: usize| esc.fitness.of(w);
    let floor = model.floor_alpha() as usize;
    for (i, &w) in g.iter().enumerate().take(l).skip(1) {
        if f(w) >= 0.0 {
            return Err(path_error(
                model,
                path,
                format!("intermediate trait at index {i} ({}) is not unfit", model.id(w)),
            ));
        }
    }
    if f(g[l]) <= 0.0 {
        return Err(path_error(model, path, format!("end trait at index {l} is not fit")));
    }

    let mut within_block = esc.equilibrium.density(g[0]);
    for i in 1..=floor {
        within_block *= model.birth(g[i - 1]) * model.mutation(g[i - 1], g[i]) / f(g[i]).abs();
    }
    let boundary_factor = model.birth(g[floor]) * model.mutation(g[floor], g[floor + 1]);
    let mut excursion_block = 1.0;
    for j in floor + 1..l {
        let rho = birth_fraction(model, &esc.equilibrium, g[j]).rho;
        excursion_block *= expected_births(rho)?.value * model.mutation(g[j], g[j + 1]);
    }
    let fixation_factor = f(g[l]) / model.birth(g[l]);
    let arrival_rate = within_block * boundary_factor * excursion_block;
    Ok(PathRateBreakdown {
        path: path.clone(),
        within_block,
        boundary_factor,
        excursion_block,
        fixation_factor,
        arrival_rate,
        total: arrival_rate * fixation_factor,
    })
}

/// `R(v,w)` with its per-path contributions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraitRate {
    pub target: usize,
    pub rate: f64,
    pub paths: Vec<PathRateBreakdown>,
}

/// `R(v,w) = Σ_γ R(v,γ)` over all shortest paths ending in `w ∈ V_mut(v)`.
pub fn trait_rate(
    model: &TraitGraphModel,
    esc: &EscDescriptor,
    w: usize,
) -> Result<TraitRate, AnalysisError> {
    if !esc.mutant_candidates.contains(w) {
        return Err(AnalysisError::Precondition(format!(
            "{} is not a mutant candidate of {}",
            model.id(w),
            model.format_set(&esc.resident)
        )));
    }
    let paths = shortest_paths(model, &esc.resident, w)?
        .iter()
        .map(|p| path_rate(model, esc, p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TraitRate { target: w, rate: paths.iter().map(|p| p.total).sum(), paths })
}

/// Exit law of an ESC: `R(v,w)`, `R(v)` and the fixation split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitLaw {
    pub resident: TraitSet,
    pub per_trait: Vec<TraitRate>,
    pub exit_rate: f64,
    pub fixation_split: BTreeMap<usize, f64>,
    /// `L(v)`: rates are per unit of `1/(K μ_K^L)` time.
    pub time_scale_exponent: u32,
}

impl ExitLaw {
    pub fn rate_of(&self, w: usize) -> Option<f64> {
        self.per_trait.iter().find(|t| t.target == w).map(|t| t.rate)
    }

    pub fn split_of(&self, w: usize) -> Option<f64> {
        self.fixation_split.get(&w).copied()
    }

    pub fn to_json(&self, model: &TraitGraphModel) -> Value {
        let per_trait: Vec<Value> = self
            .per_trait
            .iter()
            .map(|t| {
                json!({
                    "target": model.id(t.target),
                    "rate": t.rate,
                    "split": self.fixation_split[&t.target],
                    "paths": t.paths.iter().map(|p| json!({
                        "path": p.path.vertices().iter().map(|&v| model.id(v)).collect::<Vec<_>>(),
                        "within_block": p.within_block,
                        "boundary_factor": p.boundary_factor,
                        "excursion_block": p.excursion_block,
                        "fixation_factor": p.fixation_factor,
                        "arrival_rate": p.arrival_rate,
                        "total": p.total,
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({
            "resident": self.resident.iter().map(|v| model.id(v)).collect::<Vec<_>>(),
            "exit_rate": self.exit_rate,
            "time_scale_exponent": self.time_scale_exponent,
            "per_trait": per_trait,
        })
    }
}

/// `R(v)` and the split `R(v,w)/R(v)`. Absorbing ESCs (`L = ∞`) have no exit law.
pub fn exit_law(model: &TraitGraphModel, esc: &EscDescriptor) -> Result<ExitLaw, AnalysisError> {
    let StabilityDegree::Finite(l) = esc.stability_degree else {
        return Err(AnalysisError::Precondition(format!(
            "{} is absorbing (L = inf)",
            model.format_set(&esc.resident)
        )));
    };
    let per_trait = esc
        .mutant_candidates
        .iter()
        .map(|w| trait_rate(model, esc, w))
        .collect::<Result<Vec<_>, _>>()?;
    let exit_rate: f64 = per_trait.iter().map(|t| t.rate).sum();
    let fixation_split: BTreeMap<usize, f64> =
        per_trait.iter().map(|t| (t.target, t.rate / exit_rate)).collect();
    debug_assert!(
        (fixation_split.values().sum::<f64>() - 1.0).abs() < Tolerances::DEFAULT.split_sum * 10.0
    );
    Ok(ExitLaw { resident: esc.resident.clone(), per_trait, exit_rate, fixation_split, time_scale_exponent: l })
}

/// `R̃_{v,γ} = a_{γ₀} b(γ₀) m(γ₀,γ₁) Π_{j=1..|γ|−1} λ(ρ(γ_j,v)) m(γ_j,γ_{j+1})` for a path
/// starting on `∂V_α`: the arrival rate of `γ_end` mutants along `γ` (no fixation factor).
pub fn pathwise_arrival_rate(
    model: &TraitGraphModel,
    esc: &EscDescriptor,
    path: &MutationPath,
) -> Result<f64, AnalysisError> {
    let g = path.vertices();
    if path.is_empty() {
        return Err(path_error(model, path, "needs at least one edge".into()));
    }
    if !esc.boundary.contains(g[0]) {
        return Err(path_error(model, path, "does not start on the boundary of V_alpha".into()));
    }
    let a0 = esc
        .prefactor(g[0])
        .ok_or_else(|| path_error(model, path, "start has no prefactor".into()))?;
    let mut rate = a0 * model.birth(g[0]) * model.mutation(g[0], g[1]);
    for j in 1..path.len() {
        let w = g[j];
        if esc.fitness.of(w) >= 0.0 {
            return Err(path_error(model, path, format!("interior trait at index {j} is not unfit")));
        }
        let rho = birth_fraction(model, &esc.equilibrium, w).rho;
        rate *= expected_births(rho)?.value * model.mutation(w, g[j + 1]);
    }
    if rate <= 0.0 {
        return Err(path_error(model, path, "contains a non-edge".into()));
    }
    Ok(rate)
}

/// `R̃_w`: arrival rate of `w` mutants summed over shortest paths from `∂V_α`.
/// Mutants arrive on the `1/(K μ_K^d(v,w))` time scale.
pub fn trait_arrival_rate(
    model: &TraitGraphModel,
    esc: &EscDescriptor,
    w: usize,
) -> Result<f64, AnalysisError> {
    match esc.distance(w) {
        Some(d) if d > model.floor_alpha() => {}
        _ => {
            return Err(AnalysisError::Precondition(format!(
                "{} is not reachable beyond the boundary of V_alpha",
                model.id(w)
            )))
        }
    }
    shortest_paths(model, &esc.boundary, w)?
        .iter()
        .map(|p| pathwise_arrival_rate(model, esc, p))
        .sum()
}
