//! The set of safe controls read off a solved safety value function.
//!
//! Where `V_s(x, t) > 0` every admissible control is safe. Elsewhere the admissible controls are
//! those whose instantaneous rate of change of `V_s`, `dV_s/dt + grad V_s . f(x, u)`, lies in
//! `[-gamma, 0]`; with `c0 = dV_s/dt + grad V_s . f1(x)` and `a = f2(x)^T grad V_s` that is the
//! slab `-gamma - c0 <= a.u <= -c0`. When the slab misses the control set the single control
//! maximising `a.u` is returned instead and the result is marked as a fallback.

use crate::convex::dot;
use crate::error::Result;
use crate::grid::ValueField;
use crate::system::{ControlSet, SystemModel};

/// Widening of each slab edge so that a `gamma = 0` plane stays a well-posed constraint.
pub const BAND_TOL: f64 = 1e-7;
/// Slack on the slab/control-set intersection test.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SafeKind {
    Full,
    Band,
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafeControlSet {
    pub kind: SafeKind,
    /// `V_s` at the query point.
    pub value: f64,
    /// `a = f2^T grad V_s`; empty for [`SafeKind::Full`].
    pub normal: Vec<f64>,
    pub b_lo: f64,
    pub b_hi: f64,
    pub gamma: f64,
    pub fallback_control: Option<Vec<f64>>,
    /// The spatial query was clamped into the grid.
    pub clamped: bool,
}

impl SafeControlSet {
    pub fn full(value: f64) -> Self {
        Self {
            kind: SafeKind::Full,
            value,
            normal: Vec::new(),
            b_lo: f64::NEG_INFINITY,
            b_hi: f64::INFINITY,
            gamma: 0.0,
            fallback_control: None,
            clamped: false,
        }
    }

    /// Membership of `u`: admissible, and inside the slab (band) or equal to the fallback control.
    pub fn contains(&self, control_set: &ControlSet, u: &[f64], tol: f64) -> bool {
        if !control_set.contains(u, tol) {
            return false;
        }
        match self.kind {
            SafeKind::Full => true,
            SafeKind::Band => {
                let au = dot(&self.normal, u);
                au >= self.b_lo - tol && au <= self.b_hi + tol
            }
            SafeKind::Fallback => self
                .fallback_control
                .as_ref()
                .is_some_and(|f| f.iter().zip(u).all(|(a, b)| (a - b).abs() <= tol)),
        }
    }
}

/// Safe-control set at `(x, t)`.
pub fn query(vs: &ValueField, system: &SystemModel, x: &[f64], t: f64, gamma: f64) -> Result<SafeControlSet> {
    let v = vs.value_at(x, t)?;
    if v.value > 0.0 {
        let mut s = SafeControlSet::full(v.value);
        s.clamped = v.clamped;
        return Ok(s);
    }
    band_at(vs, system, x, t, gamma)
}

/// The slab constraint at `(x, t)` regardless of the sign of `V_s`.
pub fn band_at(vs: &ValueField, system: &SystemModel, x: &[f64], t: f64, gamma: f64) -> Result<SafeControlSet> {
    let v = vs.value_at(x, t)?;
    let grad = vs.gradient_at(x, t)?;
    let vt = vs.time_derivative(x, t)?;
    let (drift_rate, normal) = system.costate_terms(x, &grad.value);
    Ok(from_rates(
        &system.control_set,
        v.value,
        vt.value + drift_rate,
        normal.to_vec(),
        gamma,
        v.clamped,
    ))
}

/// Slab `[-gamma - c0, -c0]` on `a.u`, widened by [`BAND_TOL`], or the fallback when it misses the set.
pub(crate) fn from_rates(
    control_set: &ControlSet,
    value: f64,
    c0: f64,
    normal: Vec<f64>,
    gamma: f64,
    clamped: bool,
) -> SafeControlSet {
    let b_lo = -gamma - c0 - BAND_TOL;
    let b_hi = -c0 + BAND_TOL;
    let neg: Vec<f64> = normal.iter().map(|v| -v).collect();
    let reach_hi = control_set.support(&normal);
    let reach_lo = -control_set.support(&neg);
    let missed = reach_hi < b_lo - FEASIBILITY_TOL || reach_lo > b_hi + FEASIBILITY_TOL;
    let fallback_control = missed.then(|| control_set.argmax_linear(&normal));
    SafeControlSet {
        kind: if missed { SafeKind::Fallback } else { SafeKind::Band },
        value,
        normal,
        b_lo,
        b_hi,
        gamma,
        fallback_control,
        clamped,
    }
}

/// Node-exact variant of [`query`] for solver sweeps.
pub(crate) fn query_node(
    vs: &ValueField,
    system: &SystemModel,
    flat: usize,
    x: &[f64],
    t: f64,
    gamma: f64,
) -> SafeControlSet {
    let value = vs.node_value(flat, t);
    if value > 0.0 {
        return SafeControlSet::full(value);
    }
    let mut grad = vec![0.0; x.len()];
    vs.node_gradient(flat, t, &mut grad);
    let vt = vs.node_time_derivative(flat, t);
    let (drift_rate, normal) = system.costate_terms(x, &grad);
    from_rates(&system.control_set, value, vt + drift_rate, normal.to_vec(), gamma, false)
}
