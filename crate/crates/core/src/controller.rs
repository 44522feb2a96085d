//! Closed-loop synthesis: minimise `grad V . f(x, u) + r(x, u)` over the safe-control set.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::convex::{dot, projected_gradient};
pub use crate::convex::min_linear_on_ball_hyperplane;
use crate::error::{Error, Result};
use crate::grid::ValueField;
use crate::rollout::Policy;
use crate::safe_controls::{self, SafeControlSet, SafeKind};
use crate::system::{ProblemSpec, SystemModel};

pub const PG_ITERATIONS: usize = 100;
pub const PG_STEP_TOL: f64 = 1e-10;
const PG_FD_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveConstraint {
    None,
    Band,
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    pub u: Vec<f64>,
    pub active_constraint: ActiveConstraint,
    /// `grad V . f(x, u) + r(x, u)` at the returned control.
    pub objective: f64,
    pub safe_set: SafeControlSet,
}

/// Optimal safe control at `(x, t)` with the `gamma = 0` safe-control set.
pub fn synthesize(
    v: &ValueField,
    vs: &ValueField,
    system: &SystemModel,
    spec: &ProblemSpec,
    x: &[f64],
    t: f64,
) -> Result<ControlDecision> {
    synthesize_with_gamma(v, vs, system, spec, x, t, 0.0)
}

pub fn synthesize_with_gamma(
    v: &ValueField,
    vs: &ValueField,
    system: &SystemModel,
    spec: &ProblemSpec,
    x: &[f64],
    t: f64,
    gamma: f64,
) -> Result<ControlDecision> {
    let safe = safe_controls::query(vs, system, x, t, gamma)?;
    let p = v.gradient_at(x, t)?.value;
    let (pf1, c) = system.costate_terms(x, &p);
    let set = &system.control_set;
    let fallback = |safe: &SafeControlSet| {
        safe.fallback_control
            .clone()
            .unwrap_or_else(|| set.argmax_linear(&safe.normal))
    };
    let (linear_u, active) = match safe.kind {
        SafeKind::Full => (set.argmin_linear(&c), ActiveConstraint::None),
        SafeKind::Band => match set.min_linear_on_slab(&c, &safe.normal, safe.b_lo, safe.b_hi) {
            Ok(u) => (u, ActiveConstraint::Band),
            Err(_) => (fallback(&safe), ActiveConstraint::Fallback),
        },
        SafeKind::Fallback => (fallback(&safe), ActiveConstraint::Fallback),
    };
    let u = if spec.control_dependent_cost && active != ActiveConstraint::Fallback {
        let objective = |u: &[f64]| dot(&c, u) + (spec.running_cost)(x, u);
        let project = |u: &mut [f64]| {
            let q = match safe.kind {
                SafeKind::Band => set.project_slab(u, &safe.normal, safe.b_lo, safe.b_hi),
                _ => Ok(set.project(u)),
            };
            if let Ok(q) = q {
                u.copy_from_slice(&q);
            }
        };
        projected_gradient(objective, project, &linear_u, PG_ITERATIONS, PG_STEP_TOL, PG_FD_EPS)
    } else {
        linear_u
    };
    let objective = pf1 + dot(&c, &u) + (spec.running_cost)(x, &u);
    Ok(ControlDecision {
        u,
        active_constraint: active,
        objective,
        safe_set: safe,
    })
}

/// The synthesised controller as a rollout policy, with per-call bookkeeping.
pub struct SynthesisPolicy<'a> {
    pub v: &'a ValueField,
    pub vs: &'a ValueField,
    pub system: &'a SystemModel,
    pub spec: &'a ProblemSpec,
    pub gamma: f64,
    /// Wall-clock seconds of every call.
    pub latencies: Vec<f64>,
    pub fallbacks: usize,
    pub calls: usize,
}

impl<'a> SynthesisPolicy<'a> {
    pub fn new(v: &'a ValueField, vs: &'a ValueField, system: &'a SystemModel, spec: &'a ProblemSpec) -> Self {
        Self {
            v,
            vs,
            system,
            spec,
            gamma: 0.0,
            latencies: Vec::new(),
            fallbacks: 0,
            calls: 0,
        }
    }
}

impl Policy for SynthesisPolicy<'_> {
    fn act(&mut self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let start = Instant::now();
        let d = synthesize_with_gamma(self.v, self.vs, self.system, self.spec, x, t, self.gamma)
            .map_err(|e| Error::Policy(format!("synthesis at t = {t}: {e}")))?;
        self.latencies.push(start.elapsed().as_secs_f64());
        self.calls += 1;
        if d.active_constraint == ActiveConstraint::Fallback {
            self.fallbacks += 1;
        }
        Ok(d.u)
    }
}
