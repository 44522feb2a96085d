mod common;

use cosafe::oracle::{dp_control_constrained, dp_safety, dp_state_constrained, INFEASIBLE_THRESHOLD};
use cosafe::rollout::rollout;
use cosafe::{sample_initial_states, Policy, Result, SynthesisPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn terminal_slice_is_terminal_cost() {
    let (bench, fields) = common::solved();
    let phi = bench.grid.sample(|x| (bench.spec.terminal_cost)(x));
    for (a, b) in fields.performance.field.last().iter().zip(&phi) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn value_is_nonnegative() {
    let (_, fields) = common::solved();
    let min = fields
        .performance
        .field
        .slices()
        .iter()
        .flatten()
        .fold(f64::INFINITY, |m, &v| m.min(v));
    assert!(min >= -1e-6, "min {min}");
}

#[test]
fn unreliable_nodes_are_exactly_the_unsafe_ones() {
    let (_, fields) = common::solved();
    let expected: Vec<usize> = (0..fields.vs.first().len())
        .filter(|&k| fields.vs.first()[k] < 0.0)
        .collect();
    assert_eq!(fields.performance.unreliable_nodes, expected);
}

#[test]
fn dynamic_programming_principle_holds_along_safe_rollouts() {
    let (bench, fields) = common::solved();
    let v = &fields.performance.field;
    let b = &bench.config.benchmark;
    let states = sample_initial_states(&fields.vs, &b.arena_lo, &b.arena_hi, 100, 11, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (delta, dt) = (0.05, 0.01);
    let tol = 10.0 * bench.grid.max_spacing();
    for x in &states {
        let t0 = (rng.gen_range(0.0..(bench.spec.horizon - delta)) / dt).floor() * dt;
        let mut inner = SynthesisPolicy::new(v, &fields.vs, &bench.system, &bench.spec);
        let mut shifted = |y: &[f64], s: f64| -> Result<Vec<f64>> { inner.act(y, s + t0) };
        let tr = rollout(&bench.system, &bench.spec, &mut shifted, x, delta, dt, f64::INFINITY).unwrap();
        assert!(tr.error.is_none(), "{:?}", tr.error);
        let end = tr.states.last().unwrap();
        let lhs = v.value_at(x, t0).unwrap().value;
        let rhs = tr.running_cost_integral + v.value_at(end, t0 + delta).unwrap().value;
        assert!(lhs <= rhs + tol, "x {x:?} t {t0}: {lhs} > {rhs} + {tol}");
    }
}

#[test]
fn solver_is_deterministic() {
    let bench = common::coarse_benchmark(21);
    let a = bench.solve().unwrap();
    let b = bench.solve().unwrap();
    assert_eq!(a.performance.field, b.performance.field);
    assert_eq!(a.performance.unreliable_nodes, b.performance.unreliable_nodes);
}

/// Nodes with oracle safety value at least `2h` at time zero and finite constrained cost.
fn trusted_nodes(bench: &cosafe::Benchmark, vs_dp: &cosafe::ValueField, v1: &cosafe::ValueField) -> Vec<bool> {
    let h = bench.grid.max_spacing();
    (0..bench.grid.len())
        .map(|k| vs_dp.first()[k] >= 2.0 * h && v1.first()[k] < INFEASIBLE_THRESHOLD)
        .collect()
}

#[test]
fn coarse_solver_and_oracles_agree() {
    let bench = common::coarse_benchmark(21);
    let fields = bench.solve().unwrap();
    let oc = &bench.config.oracle;
    let samples = bench.system.control_set.samples(2, oc.directions);
    let (sys, spec, grid, horizon) = (&bench.system, &bench.spec, &bench.grid, bench.spec.horizon);
    let vs_dp = dp_safety(sys, |x| (spec.constraint)(x), grid, horizon, oc.dt, &samples).unwrap();
    let v1 = dp_state_constrained(sys, spec, grid, horizon, oc.dt, &samples).unwrap();
    let v = dp_control_constrained(sys, spec, &fields.vs, grid, horizon, oc.dt, &samples).unwrap();
    let keep = trusted_nodes(&bench, &vs_dp, &v1);
    assert!(keep.iter().any(|&k| k), "mask is empty");
    let h = grid.max_spacing();
    let equivalence = common::max_abs_diff(v1.first(), v.first(), |k| keep[k]);
    let cross = common::max_abs_diff(fields.performance.field.first(), v.first(), |k| keep[k]);
    assert!(equivalence <= 5.0 * h, "state- vs control-constrained gap {equivalence}, 5h = {}", 5.0 * h);
    assert!(cross <= 5.0 * h, "solver vs oracle gap {cross}, 5h = {}", 5.0 * h);
}
