//! Per-point optimisation of `p . f(x, u)` over the control set: the unconstrained
//! maximum used by the safety equation and the safe-set-constrained minimum used by the
//! performance equation.

use crate::convex::dot;
use crate::safe_controls::{SafeControlSet, SafeKind};
use crate::system::SystemModel;

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianResult {
    pub value: f64,
    pub argopt: Vec<f64>,
    /// Set when the constraint could not be honoured and the fallback control was used.
    pub flagged: bool,
}

/// `max_u p . f(x, u)`. A zero `f2^T p` returns the zero control.
pub fn hamiltonian_max(system: &SystemModel, x: &[f64], p: &[f64]) -> HamiltonianResult {
    let (pf1, a) = system.costate_terms(x, p);
    let u = system.control_set.argmax_linear(&a);
    HamiltonianResult {
        value: pf1 + dot(&a, &u),
        argopt: u,
        flagged: false,
    }
}

/// `min_{u in C} p . f(x, u) + r_val` with `C` the safe-control set at the same point.
///
/// `r_val` is the running cost at `x`; the running cost must not depend on `u` here.
pub fn hamiltonian_min_constrained(
    system: &SystemModel,
    x: &[f64],
    p: &[f64],
    r_val: f64,
    constraint: &SafeControlSet,
) -> HamiltonianResult {
    let (pf1, a) = system.costate_terms(x, p);
    let set = &system.control_set;
    let (u, flagged) = match &constraint.kind {
        SafeKind::Full => (set.argmin_linear(&a), false),
        SafeKind::Band => match set.min_linear_on_slab(&a, &constraint.normal, constraint.b_lo, constraint.b_hi) {
            Ok(u) => (u, false),
            Err(_) => (set.argmax_linear(&constraint.normal), true),
        },
        SafeKind::Fallback => (
            constraint
                .fallback_control
                .clone()
                .unwrap_or_else(|| set.argmax_linear(&constraint.normal)),
            true,
        ),
    };
    HamiltonianResult {
        value: pf1 + dot(&a, &u) + r_val,
        argopt: u,
        flagged,
    }
}
