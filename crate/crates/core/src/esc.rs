//! Mutation-spreading neighbourhoods, stability degrees and ESC certification.
//!
//! For a coexisting resident set `v`:
//! - `V_α(v) = {w : d(v,w) < α}`, `∂V_α(v) = {w : d(v,w) = ⌊α⌋}`
//! - `L(v) = min{d(v,w) : f(w,v) > 0}` (∞ without fit traits, 0 without coexistence)
//! - `v` is an ESC iff `L(v) > α`; traits in `V_α` then sit at `K^(1−d/α)` with
//!   prefactors `a_w` given by the layer recursion
//!   `a_w = Σ_{(u,w)∈E, d(u)=d(w)−1} a_u b(u) m(u,w) / |f(w,v)|`, `a_w = n̄_w` on residents.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};
use serde_json::{json, Value};

use crate::error::AnalysisError;
use crate::lotka_volterra::{fitness_profile, lv_equilibrium, FitnessProfile, LvEquilibrium, LvRejection};
use crate::model::{TraitGraphModel, TraitSet};

/// Stability degree `L ∈ ℕ ∪ {∞}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StabilityDegree {
    Finite(u32),
    Infinite,
}

impl StabilityDegree {
    pub fn exceeds(self, alpha: f64) -> bool {
        match self {
            StabilityDegree::Finite(l) => l as f64 > alpha,
            StabilityDegree::Infinite => true,
        }
    }

    pub fn finite(self) -> Option<u32> {
        match self {
            StabilityDegree::Finite(l) => Some(l),
            StabilityDegree::Infinite => None,
        }
    }
}

impl fmt::Display for StabilityDegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StabilityDegree::Finite(l) => write!(f, "{l}"),
            StabilityDegree::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for StabilityDegree {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            StabilityDegree::Finite(l) => s.serialize_u32(*l),
            StabilityDegree::Infinite => s.serialize_str("inf"),
        }
    }
}

/// `(V_α(v), ∂V_α(v))`.
pub fn mutation_neighbourhood(
    model: &TraitGraphModel,
    resident: &TraitSet,
) -> Result<(TraitSet, TraitSet), AnalysisError> {
    model.check_set(resident)?;
    let dist = model.distances_from(resident);
    Ok(neighbourhood_from(model, &dist))
}

fn neighbourhood_from(model: &TraitGraphModel, dist: &[Option<u32>]) -> (TraitSet, TraitSet) {
    let alpha = model.alpha();
    let floor = model.floor_alpha();
    let inside = dist
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_some_and(|d| (d as f64) < alpha))
        .map(|(w, _)| w);
    let boundary = dist.iter().enumerate().filter(|(_, d)| **d == Some(floor)).map(|(w, _)| w);
    (TraitSet::new(inside), TraitSet::new(boundary))
}

fn degree_from(fitness: &FitnessProfile, dist: &[Option<u32>]) -> StabilityDegree {
    fitness
        .fitness
        .iter()
        .zip(dist)
        .filter(|(&f, _)| f > 0.0)
        .filter_map(|(_, d)| *d)
        .min()
        .map_or(StabilityDegree::Infinite, StabilityDegree::Finite)
}

/// `L(v)`; 0 when `v` carries no accepted coexistence equilibrium.
pub fn stability_degree(
    model: &TraitGraphModel,
    resident: &TraitSet,
) -> Result<StabilityDegree, AnalysisError> {
    model.check_set(resident)?;
    let Ok(eq) = lv_equilibrium(model, resident) else {
        return Ok(StabilityDegree::Finite(0));
    };
    let fitness = fitness_profile(model, &eq)?;
    Ok(degree_from(&fitness, &model.distances_from(resident)))
}

/// `V_mut(v)`: fit traits at distance `L(v)`. Empty when `L(v) = ∞`.
pub fn mutant_candidates(
    model: &TraitGraphModel,
    resident: &TraitSet,
) -> Result<TraitSet, AnalysisError> {
    model.check_set(resident)?;
    let eq = lv_equilibrium(model, resident).map_err(|r| AnalysisError::NoCoexistence {
        resident: model.format_set(resident),
        reason: r.describe(model),
    })?;
    let fitness = fitness_profile(model, &eq)?;
    let dist = model.distances_from(resident);
    Ok(candidates_from(&fitness, &dist, degree_from(&fitness, &dist)))
}

fn candidates_from(fitness: &FitnessProfile, dist: &[Option<u32>], l: StabilityDegree) -> TraitSet {
    match l {
        StabilityDegree::Infinite => TraitSet::default(),
        StabilityDegree::Finite(l) => TraitSet::new(
            (0..dist.len()).filter(|&w| fitness.of(w) > 0.0 && dist[w] == Some(l)),
        ),
    }
}

/// Certified evolutionary stable condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscDescriptor {
    pub resident: TraitSet,
    pub equilibrium: LvEquilibrium,
    pub fitness: FitnessProfile,
    /// `d(v, w)` for every vertex, `None` when unreachable.
    pub distances: Vec<Option<u32>>,
    pub v_alpha: TraitSet,
    pub boundary: TraitSet,
    pub stability_degree: StabilityDegree,
    pub mutant_candidates: TraitSet,
    /// `(1 − d(v,w)/α)₊` for every vertex.
    pub beta_profile: Vec<f64>,
    /// `a_w` for `w ∈ V_α` (units of `K μ_K^d(v,w)` individuals).
    pub prefactors: BTreeMap<usize, f64>,
}

impl EscDescriptor {
    pub fn distance(&self, w: usize) -> Option<u32> {
        self.distances[w]
    }

    pub fn prefactor(&self, w: usize) -> Option<f64> {
        self.prefactors.get(&w).copied()
    }

    pub fn is_absorbing(&self) -> bool {
        self.stability_degree == StabilityDegree::Infinite
    }

    pub fn to_json(&self, model: &TraitGraphModel) -> Value {
        let ids = |s: &TraitSet| s.iter().map(|v| model.id(v).to_string()).collect::<Vec<_>>();
        let beta: BTreeMap<String, f64> =
            (0..model.n()).map(|w| (model.id(w).to_string(), self.beta_profile[w])).collect();
        let a: BTreeMap<String, f64> =
            self.prefactors.iter().map(|(&w, &a)| (model.id(w).to_string(), a)).collect();
        let eq: BTreeMap<String, f64> =
            self.equilibrium.iter().map(|(v, n)| (model.id(v).to_string(), n)).collect();
        json!({
            "resident": ids(&self.resident),
            "equilibrium": eq,
            "stability_margin": self.equilibrium.stability_margin,
            "L": self.stability_degree,
            "v_alpha": ids(&self.v_alpha),
            "boundary": ids(&self.boundary),
            "v_mut": ids(&self.mutant_candidates),
            "beta_profile": beta,
            "prefactors": a,
        })
    }
}

/// Why a resident set is not an ESC.
#[derive(Debug, Clone, PartialEq)]
pub enum EscRejection {
    Empty,
    NoCoexistence(LvRejection),
    FitInsideNeighbourhood { vertex: usize, fitness: f64 },
    Assumption(AnalysisError),
}

impl EscRejection {
    pub fn to_error(&self, model: &TraitGraphModel, resident: &TraitSet) -> AnalysisError {
        let resident_s = model.format_set(resident);
        match self {
            EscRejection::Empty => AnalysisError::EmptyResidents,
            EscRejection::NoCoexistence(r) => {
                AnalysisError::NoCoexistence { resident: resident_s, reason: r.describe(model) }
            }
            EscRejection::FitInsideNeighbourhood { vertex, fitness } => AnalysisError::NotAnEsc {
                resident: resident_s,
                reason: format!(
                    "trait {} inside the mutation neighbourhood is fit (f = {fitness})",
                    model.id(*vertex)
                ),
            },
            EscRejection::Assumption(e) => e.clone(),
        }
    }
}

/// Certify `resident` as an ESC and fill its descriptor.
pub fn certify_esc(model: &TraitGraphModel, resident: &TraitSet) -> Result<EscDescriptor, EscRejection> {
    if resident.is_empty() {
        return Err(EscRejection::Empty);
    }
    model.check_set(resident).map_err(EscRejection::Assumption)?;
    let eq = lv_equilibrium(model, resident).map_err(EscRejection::NoCoexistence)?;
    let fitness = fitness_profile(model, &eq).map_err(EscRejection::Assumption)?;
    let distances = model.distances_from(resident);
    let (v_alpha, boundary) = neighbourhood_from(model, &distances);
    if let Some(w) = v_alpha.iter().find(|&w| fitness.of(w) > 0.0) {
        return Err(EscRejection::FitInsideNeighbourhood { vertex: w, fitness: fitness.of(w) });
    }
    let stability_degree = degree_from(&fitness, &distances);
    debug_assert!(stability_degree.exceeds(model.alpha()));
    let mutant_candidates = candidates_from(&fitness, &distances, stability_degree);
    let alpha = model.alpha();
    let beta_profile = distances
        .iter()
        .map(|d| d.map_or(0.0, |d| (1.0 - d as f64 / alpha).max(0.0)))
        .collect();
    let prefactors = layer_prefactors(model, &eq, &fitness, &distances, &v_alpha);
    Ok(EscDescriptor {
        resident: resident.clone(),
        equilibrium: eq,
        fitness,
        distances,
        v_alpha,
        boundary,
        stability_degree,
        mutant_candidates,
        beta_profile,
        prefactors,
    })
}

/// `a_w` for every `w ∈ V_α` by the layer recursion (identical to the shortest-path sum).
pub fn equilibrium_prefactors(model: &TraitGraphModel, esc: &EscDescriptor) -> BTreeMap<usize, f64> {
    layer_prefactors(model, &esc.equilibrium, &esc.fitness, &esc.distances, &esc.v_alpha)
}

fn layer_prefactors(
    model: &TraitGraphModel,
    eq: &LvEquilibrium,
    fitness: &FitnessProfile,
    distances: &[Option<u32>],
    v_alpha: &TraitSet,
) -> BTreeMap<usize, f64> {
    let mut a: BTreeMap<usize, f64> = eq.iter().collect();
    let mut layer: Vec<usize> = v_alpha.iter().filter(|&w| distances[w] == Some(0)).collect();
    let mut depth = 0;
    while !layer.is_empty() {
        depth += 1;
        let next: Vec<usize> = v_alpha.iter().filter(|&w| distances[w] == Some(depth)).collect();
        for &w in &next {
            let inflow: f64 = model
                .in_edges(w)
                .iter()
                .filter(|(u, _)| distances[*u] == Some(depth - 1))
                .map(|&(u, m)| a[&u] * model.birth(u) * m)
                .sum();
            a.insert(w, inflow / fitness.of(w).abs());
        }
        layer = next;
    }
    a
}
