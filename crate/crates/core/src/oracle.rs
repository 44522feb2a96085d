//! Brute-force backward dynamic programming on coarse grids with a finite control sample.
//!
//! Every recursion steps each node forward by one Runge-Kutta step of length `dt` per sampled
//! control and reads the next-time slice by multilinear interpolation. These are slow,
//! simple references for the PDE solvers and for the state- versus control-constrained
//! equivalence check.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ValueField};
use crate::safe_controls::{self, SafeKind};
use crate::system::{ProblemSpec, SystemModel, CONTROL_TOL};

/// Cost assigned to states from which the state constraint is violated.
pub const BIG: f64 = 1e6;

/// Values at or above this are treated as infeasible when comparing.
pub const INFEASIBLE_THRESHOLD: f64 = 0.5 * BIG;

pub const DEFAULT_DT: f64 = 0.05;

fn ladder(horizon: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(Error::Config(format!("oracle needs dt > 0 and horizon >= 0, got {dt} / {horizon}")));
    }
    let k = (horizon / dt).round();
    if (k * dt - horizon).abs() > 1e-9 {
        return Err(Error::Config(format!("oracle dt {dt} does not divide horizon {horizon}")));
    }
    let k = k as usize;
    Ok((0..=k).map(|j| horizon * j as f64 / k.max(1) as f64).collect())
}

fn check_samples(system: &SystemModel, samples: &[Vec<f64>]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Contract("control sample is empty".into()));
    }
    for u in samples {
        if u.len() != system.control_dim || !system.control_set.contains(u, CONTROL_TOL) {
            return Err(Error::Contract(format!("sampled control {u:?} is not admissible")));
        }
    }
    Ok(())
}

/// Next-slice value at a stepped state; states outside the grid read the clamped
/// interpolant, optionally capped by an exactly evaluated bound.
fn read_next(grid: &GridSpec, next: &[f64], x_next: &[f64], cap: Option<f64>) -> f64 {
    let probe = grid
        .interpolate(next, x_next)
        .expect("dimensions checked by caller");
    match cap {
        Some(c) if probe.clamped => probe.value.min(c),
        _ => probe.value,
    }
}

/// Interpolated next value of the state-constrained recursion. Corners at [`BIG`] are treated
/// as missing and the remaining weights renormalised, so infeasibility does not leak into
/// feasible cells through interpolation; a cell with no feasible corner reads [`BIG`].
fn read_next_feasible(grid: &GridSpec, next: &[f64], x_next: &[f64]) -> f64 {
    let stencil = grid.weights(x_next).expect("dimensions checked by caller");
    let (mut acc, mut mass) = (0.0, 0.0);
    for &(k, w) in &stencil.value {
        if next[k] < INFEASIBLE_THRESHOLD {
            acc += w * next[k];
            mass += w;
        }
    }
    if mass > 0.0 {
        acc / mass
    } else {
        BIG
    }
}

/// Safety value by `V(x, t) = max_u min(l(x), V(x + step(x, u), t + dt))`, `V(x, T) = l(x)`.
pub fn dp_safety<L>(
    system: &SystemModel,
    constraint: L,
    grid: &GridSpec,
    horizon: f64,
    dt: f64,
    samples: &[Vec<f64>],
) -> Result<ValueField>
where
    L: Fn(&[f64]) -> f64 + Sync,
{
    check_samples(system, samples)?;
    let times = ladder(horizon, dt)?;
    let l = grid.sample(&constraint);
    let steps = times.len() - 1;
    let mut slices = vec![l.clone()];
    for _ in 0..steps {
        let next = slices.last().expect("terminal slice present");
        let cur: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|flat| {
                let x = grid.node(flat);
                let best = samples
                    .iter()
                    .map(|u| {
                        let y = system.rk4_step(&x, u, dt);
                        read_next(grid, next, &y, Some(constraint(&y)))
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                l[flat].min(best)
            })
            .collect();
        slices.push(cur);
    }
    slices.reverse();
    ValueField::new(grid.clone(), times, slices)
}

/// Optimal cost of the state-constrained problem: [`BIG`] wherever the constraint is violated
/// at the node or after the sampled step, otherwise `min_u r(x, u) dt + V(next, t + dt)`.
///
/// Next-time values are read with infeasible corners masked out (see [`read_next_feasible`]).
pub fn dp_state_constrained(
    system: &SystemModel,
    spec: &ProblemSpec,
    grid: &GridSpec,
    horizon: f64,
    dt: f64,
    samples: &[Vec<f64>],
) -> Result<ValueField> {
    check_samples(system, samples)?;
    let times = ladder(horizon, dt)?;
    let l = grid.sample(|x| (spec.constraint)(x));
    let terminal: Vec<f64> = (0..grid.len())
        .map(|k| if l[k] < 0.0 { BIG } else { (spec.terminal_cost)(&grid.node(k)) })
        .collect();
    let mut slices = vec![terminal];
    for _ in 1..times.len() {
        let next = slices.last().expect("terminal slice present");
        let cur: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|flat| {
                if l[flat] < 0.0 {
                    return BIG;
                }
                let x = grid.node(flat);
                samples
                    .iter()
                    .map(|u| {
                        let y = system.rk4_step(&x, u, dt);
                        if (spec.constraint)(&y) < 0.0 {
                            BIG
                        } else {
                            ((spec.running_cost)(&x, u) * dt + read_next_feasible(grid, next, &y)).min(BIG)
                        }
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        slices.push(cur);
    }
    slices.reverse();
    ValueField::new(grid.clone(), times, slices)
}

/// Controls considered at one `(node, t)` of the control-constrained recursion: the samples
/// accepted by the safe-control set plus each sample projected onto its band, or the fallback
/// control alone when nothing survives.
fn admissible_samples(
    vs: &ValueField,
    system: &SystemModel,
    x: &[f64],
    t: f64,
    samples: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let safe = safe_controls::query(vs, system, x, t, 0.0)?;
    let set = &system.control_set;
    let mut out: Vec<Vec<f64>> = samples
        .iter()
        .filter(|u| safe.contains(set, u, CONTROL_TOL))
        .cloned()
        .collect();
    if safe.kind == SafeKind::Band {
        for u in samples {
            if let Ok(p) = set.project_slab(u, &safe.normal, safe.b_lo, safe.b_hi) {
                if safe.contains(set, &p, CONTROL_TOL) {
                    out.push(p);
                }
            }
        }
    }
    if out.is_empty() {
        out.push(
            safe.fallback_control
                .clone()
                .unwrap_or_else(|| set.argmax_linear(&safe.normal)),
        );
    }
    Ok(out)
}

/// Optimal cost when the control at every `(x, t)` is restricted to the safe-control set
/// read from `vs`.
pub fn dp_control_constrained(
    system: &SystemModel,
    spec: &ProblemSpec,
    vs: &ValueField,
    grid: &GridSpec,
    horizon: f64,
    dt: f64,
    samples: &[Vec<f64>],
) -> Result<ValueField> {
    check_samples(system, samples)?;
    let times = ladder(horizon, dt)?;
    let mut slices = vec![grid.sample(|x| (spec.terminal_cost)(x))];
    for j in (0..times.len() - 1).rev() {
        let t = times[j];
        let next = slices.last().expect("terminal slice present");
        let cur: Result<Vec<f64>> = (0..grid.len())
            .into_par_iter()
            .map(|flat| {
                let x = grid.node(flat);
                let controls = admissible_samples(vs, system, &x, t, samples)?;
                Ok(controls
                    .iter()
                    .map(|u| {
                        let y = system.rk4_step(&x, u, dt);
                        (spec.running_cost)(&x, u) * dt + read_next(grid, next, &y, None)
                    })
                    .fold(f64::INFINITY, f64::min))
            })
            .collect();
        slices.push(cur?);
    }
    slices.reverse();
    ValueField::new(grid.clone(), times, slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{frozen_system, single_integrator};
    use std::sync::Arc;

    fn grid() -> GridSpec {
        GridSpec::new(vec![-2.0, -2.0], vec![2.0, 2.0], vec![11, 11]).unwrap()
    }

    fn unit_costs(horizon: f64) -> ProblemSpec {
        ProblemSpec {
            running_cost: Arc::new(|_x: &[f64], _u: &[f64]| 1.0),
            terminal_cost: Arc::new(|_x: &[f64]| 0.0),
            constraint: Arc::new(|x: &[f64]| 1.5 - x[0].abs().max(x[1].abs())),
            horizon,
            control_dependent_cost: false,
        }
    }

    #[test]
    fn zero_horizon_returns_constraint() {
        let sys = single_integrator(2, 1.0).unwrap();
        let g = grid();
        let l = |x: &[f64]| x[0] - 0.3 * x[1];
        let v = dp_safety(&sys, l, &g, 0.0, 0.05, &sys.control_set.samples(2, 16)).unwrap();
        assert_eq!(v.times(), &[0.0]);
        assert_eq!(v.first(), g.sample(l).as_slice());
    }

    #[test]
    fn frozen_state_keeps_constraint() {
        let sys = frozen_system(2, 2, 1.0).unwrap();
        let g = grid();
        let l = |x: &[f64]| x[0] * x[1] - 0.2;
        let v = dp_safety(&sys, l, &g, 0.5, 0.05, &sys.control_set.samples(2, 16)).unwrap();
        let expect = g.sample(l);
        for s in v.slices() {
            assert_eq!(s, &expect);
        }
    }

    #[test]
    fn unit_running_cost_on_frozen_system() {
        let sys = frozen_system(2, 2, 1.0).unwrap();
        let g = grid();
        let spec = unit_costs(2.0);
        let samples = sys.control_set.samples(2, 16);
        let vs = dp_safety(&sys, |x| (spec.constraint)(x), &g, 2.0, 0.05, &samples).unwrap();
        let v = dp_control_constrained(&sys, &spec, &vs, &g, 2.0, 0.05, &samples).unwrap();
        assert!(v.first().iter().all(|x| (x - 2.0).abs() < 1e-9));
    }

    #[test]
    fn state_constrained_marks_violations() {
        let sys = single_integrator(2, 1.0).unwrap();
        let g = grid();
        let spec = unit_costs(1.0);
        let v = dp_state_constrained(&sys, &spec, &g, 1.0, 0.05, &sys.control_set.samples(2, 16)).unwrap();
        for flat in 0..g.len() {
            let x = g.node(flat);
            if (spec.constraint)(&x) < 0.0 {
                assert!(v.slices().iter().all(|s| s[flat] == BIG));
            } else {
                assert!((v.first()[flat] - 1.0).abs() < 1e-9, "x = {x:?}");
            }
        }
    }

    #[test]
    fn inadmissible_sample_is_rejected() {
        let sys = single_integrator(2, 1.0).unwrap();
        let r = dp_safety(&sys, |x| x[0], &grid(), 0.1, 0.05, &[vec![2.0, 0.0]]);
        assert!(matches!(r, Err(Error::Contract(_))));
    }
}
