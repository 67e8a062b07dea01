//! Numerical tolerances used across the analysis.
//!
//! Every threshold lives here so that a reader can audit them in one place.

/// Numerical thresholds. [`Tolerances::DEFAULT`] is what every public entry
/// point uses unless a `_with` variant takes an explicit value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// `|α − round(α)|` must exceed this.
    pub alpha_integer: f64,
    /// Allowed deviation of `Σ_w m(v,w)` from 1.
    pub kernel_sum: f64,
    /// Equilibrium densities must exceed this to count as positive.
    pub lv_positive: f64,
    /// Largest Jacobian real part must be below `-lv_stability`.
    pub lv_stability: f64,
    /// Relative residual allowed in the equilibrium equations.
    pub lv_residual: f64,
    /// Smallest pivot ratio of the LU factorisation before a system counts as singular.
    pub lv_singular: f64,
    /// `|f(w,v)|` below this is an assumption violation.
    pub zero_fitness: f64,
    /// Relative tolerance of the adaptive Runge-Kutta integrator.
    pub ode_rtol: f64,
    /// Absolute tolerance of the integrator.
    pub ode_atol: f64,
    /// Components above this are kept in the reported flow support.
    pub ode_support: f64,
    /// Density above which the flow is declared to blow up.
    pub ode_blowup: f64,
    /// Series for `λ(ρ)` and the excursion pmf stop once a term drops below this.
    pub excursion_term: f64,
    /// Event-time tie tolerance in the `ln K` algorithm.
    pub lnk_tie: f64,
    /// Phase cap of the `ln K` algorithm.
    pub lnk_max_phases: usize,
    /// Conservation tolerance for exit splits.
    pub split_sum: f64,
    /// Conservation tolerance for collapsed L-scale probabilities.
    pub collapse_sum: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        alpha_integer: 1e-9,
        kernel_sum: 1e-9,
        lv_positive: 1e-10,
        lv_stability: 1e-10,
        lv_residual: 1e-10,
        lv_singular: 1e-12,
        zero_fitness: 1e-9,
        ode_rtol: 1e-8,
        ode_atol: 1e-12,
        ode_support: 1e-6,
        ode_blowup: 1e12,
        excursion_term: 1e-14,
        lnk_tie: 1e-9,
        lnk_max_phases: 1000,
        split_sum: 1e-12,
        collapse_sum: 1e-9,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}
