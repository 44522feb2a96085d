//! Backward solve of the safety variational inequality
//! `min{ dV_s/dt + max_u grad V_s . f(x, u), l(x) - V_s } = 0`, `V_s(x, T) = l(x)`.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ValueField};
use crate::hamiltonian::hamiltonian_max;
use crate::scheme::{Marcher, SolverSettings};
use crate::system::SystemModel;

/// Safety value function on `grid` over `[0, horizon]`.
///
/// After every internal step each node is clamped to `min(V_new, l, V_previous)`. The
/// obstacle term enforces `V_s <= l`; the previous-step term keeps the discrete solution
/// nondecreasing in `t`, which the exact value function is for time-invariant data.
pub fn solve_safety<L>(
    system: &SystemModel,
    constraint: L,
    grid: &GridSpec,
    horizon: f64,
    settings: &SolverSettings,
) -> Result<ValueField>
where
    L: Fn(&[f64]) -> f64,
{
    if grid.dim() != system.state_dim {
        return Err(Error::Contract(format!(
            "grid dimension {} does not match state dimension {}",
            grid.dim(),
            system.state_dim
        )));
    }
    let l = grid.sample(constraint);
    if let Some(bad) = l.iter().position(|v| !v.is_finite()) {
        return Err(Error::Contract(format!("constraint is not finite at node {bad}")));
    }
    let marcher = Marcher {
        grid,
        alpha: system.speed_bounds(grid),
        settings,
        horizon,
    };
    marcher.run(
        l.clone(),
        |_, x, p, _| hamiltonian_max(system, x, p).value,
        |v, old, _| {
            for ((vi, &li), &oi) in v.iter_mut().zip(&l).zip(old) {
                *vi = vi.min(li).min(oi);
            }
        },
    )
}
