//! Backward solve of the control-constrained performance equation
//! `dV/dt + min_{u in C_s(x, t)} { grad V . f(x, u) + r(x) } = 0`, `V(x, T) = phi(x)`.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ValueField};
use crate::hamiltonian::hamiltonian_min_constrained;
use crate::safe_controls::query_node;
use crate::scheme::{Marcher, SolverSettings};
use crate::system::{ProblemSpec, SystemModel};

#[derive(Debug, Clone)]
pub struct PerformanceSolution {
    pub field: ValueField,
    /// Nodes with `V_s(x, 0) < 0`; the value there carries no optimality meaning.
    pub unreliable_nodes: Vec<usize>,
    /// Share of Hamiltonian evaluations that had to use the fallback control.
    pub fallback_fraction: f64,
}

/// Performance value function with the `gamma = 0` safe-control set.
pub fn solve_performance(
    system: &SystemModel,
    spec: &ProblemSpec,
    vs: &ValueField,
    grid: &GridSpec,
    settings: &SolverSettings,
) -> Result<PerformanceSolution> {
    solve_performance_with_gamma(system, spec, vs, grid, settings, 0.0)
}

pub fn solve_performance_with_gamma(
    system: &SystemModel,
    spec: &ProblemSpec,
    vs: &ValueField,
    grid: &GridSpec,
    settings: &SolverSettings,
    gamma: f64,
) -> Result<PerformanceSolution> {
    if vs.grid() != grid {
        return Err(Error::Contract("safety field lives on a different grid".into()));
    }
    if spec.control_dependent_cost {
        return Err(Error::Contract(
            "the grid solver needs a running cost that does not depend on the control".into(),
        ));
    }
    let intervals = settings.store_intervals(spec.horizon)?;
    let ladder_ok = vs.times().len() == intervals + 1
        && vs
            .times()
            .iter()
            .enumerate()
            .all(|(k, &t)| (t - spec.horizon * k as f64 / intervals.max(1) as f64).abs() <= 1e-9);
    if !ladder_ok {
        return Err(Error::Contract(format!(
            "safety field stamps do not match the horizon {} with store_dt {}",
            spec.horizon, settings.store_dt
        )));
    }
    if !(gamma >= 0.0) {
        return Err(Error::Contract(format!("gamma must be >= 0, got {gamma}")));
    }
    let zero_u = vec![0.0; system.control_dim];
    let r: Vec<f64> = grid.sample(|x| (spec.running_cost)(x, &zero_u));
    let phi = grid.sample(|x| (spec.terminal_cost)(x));
    if let Some(bad) = r.iter().chain(&phi).position(|v| !v.is_finite()) {
        return Err(Error::Contract(format!("costs are not finite at node {}", bad % grid.len())));
    }
    let evaluations = AtomicUsize::new(0);
    let fallbacks = AtomicUsize::new(0);
    let marcher = Marcher {
        grid,
        alpha: system.speed_bounds(grid),
        settings,
        horizon: spec.horizon,
    };
    let field = marcher.run(
        phi,
        |flat, x, p, t| {
            let safe = query_node(vs, system, flat, x, t, gamma);
            let h = hamiltonian_min_constrained(system, x, p, r[flat], &safe);
            evaluations.fetch_add(1, Ordering::Relaxed);
            if h.flagged {
                fallbacks.fetch_add(1, Ordering::Relaxed);
            }
            h.value
        },
        |_, _, _| {},
    )?;
    let unreliable_nodes = (0..grid.len()).filter(|&k| vs.first()[k] < 0.0).collect();
    let total = evaluations.into_inner();
    Ok(PerformanceSolution {
        field,
        unreliable_nodes,
        fallback_fraction: if total == 0 {
            0.0
        } else {
            fallbacks.into_inner() as f64 / total as f64
        },
    })
}
