//! Analysis side of the adyn toolkit.
//!
//! Individual-based adaptive dynamics on a finite trait graph: each trait `v`
//! has birth rate `b(v)`, death rate `d(v)`, logistic competition `c(v,w)/K`
//! and mutates along graph edges with probability `μ_K = K^(-1/α)` per birth.
//! In the rare-mutation, large-population limit the population jumps between
//! evolutionary stable conditions (ESCs). This crate computes that limit
//! structure in closed form; nothing here depends on `K`.
//!
//! Module map:
//! - [`model`]: trait graph, parameters, JSON config, distances and paths
//! - [`lotka_volterra`]: coexistence equilibria, invasion fitness, ODE flow
//! - [`esc`]: neighbourhoods `V_α`, stability degree, ESC certification, prefactors
//! - [`excursions`]: subcritical excursion law and expected birth count `λ(ρ)`
//! - [`rates`]: path, trait and exit rates of fitness-valley crossings
//! - [`lnk`]: the piecewise-affine `β` dynamics on the `ln K` time scale
//! - [`meta_graph`]: metastability graph, L-scale collapse, jump-chain sampling

pub mod error;
pub mod esc;
pub mod excursions;
pub mod lnk;
pub mod lotka_volterra;
pub mod meta_graph;
pub mod model;
pub mod rates;
pub mod tolerances;

pub use error::{AnalysisError, ModelError};
pub use esc::{certify_esc, EscDescriptor, StabilityDegree};
pub use model::{MutationPath, TraitGraphModel, TraitSet};
pub use tolerances::Tolerances;
