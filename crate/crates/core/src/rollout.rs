//! Closed-loop simulation, initial-state sampling and benchmark metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ValueField;
use crate::system::{ProblemSpec, SystemModel, CONTROL_TOL};

/// Tie tolerance for cost comparisons between methods.
pub const COST_TIE_TOL: f64 = 1e-9;
/// Draw budget for rejection sampling of initial states.
pub const MAX_DRAWS: usize = 1_000_000;
/// Lowest acceptance rate tolerated once [`MAX_DRAWS`] draws have been made.
pub const MIN_ACCEPTANCE: f64 = 0.01;

/// A feedback law `u = pi(x, t)`; implementations may keep internal state (warm starts, RNG).
pub trait Policy {
    fn act(&mut self, x: &[f64], t: f64) -> Result<Vec<f64>>;
}

impl<F> Policy for F
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>>,
{
    fn act(&mut self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self(x, t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub running_cost_integral: f64,
    /// `min_t l(x(t))` over the simulated states.
    pub min_constraint: f64,
    pub success: bool,
    /// Set when the policy failed and the run was cut short.
    pub error: Option<String>,
}

/// Success tolerance on the constraint: twice the grid spacing plus the simulation step.
pub fn kappa(grid_spacing: f64, dt: f64) -> f64 {
    2.0 * (grid_spacing + dt)
}

/// Integrate the closed loop from `x0` over `[0, horizon]` with classical Runge-Kutta steps and
/// a zero-order hold on the control.
///
/// The running cost uses the trapezoid rule on the step ladder, and `success` means
/// `min_constraint >= -kappa` with the run reaching the horizon.
pub fn rollout<P: Policy + ?Sized>(
    system: &SystemModel,
    spec: &ProblemSpec,
    policy: &mut P,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    kappa: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::Contract(format!("rollout step must be positive, got {dt}")));
    }
    let steps = (horizon / dt).round();
    if (steps * dt - horizon).abs() > 1e-9 {
        return Err(Error::Contract(format!("step {dt} does not divide horizon {horizon}")));
    }
    if x0.len() != system.state_dim {
        return Err(Error::Contract("initial state has the wrong dimension".into()));
    }
    let steps = steps as usize;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        controls: Vec::with_capacity(steps),
        running_cost_integral: 0.0,
        min_constraint: (spec.constraint)(x0),
        success: false,
        error: None,
    };
    let mut x = x0.to_vec();
    for k in 0..steps {
        let t = k as f64 * dt;
        let u = match policy.act(&x, t) {
            Ok(u) if u.len() == system.control_dim && system.control_set.contains(&u, CONTROL_TOL) => u,
            Ok(u) => {
                traj.error = Some(format!("policy returned inadmissible control {u:?} at t = {t}"));
                return Ok(traj);
            }
            Err(e) => {
                traj.error = Some(e.to_string());
                return Ok(traj);
            }
        };
        let next = system.rk4_step(&x, &u, dt);
        traj.running_cost_integral += 0.5 * dt * ((spec.running_cost)(&x, &u) + (spec.running_cost)(&next, &u));
        traj.min_constraint = traj.min_constraint.min((spec.constraint)(&next));
        traj.times.push((k + 1) as f64 * dt);
        traj.states.push(next.clone());
        traj.controls.push(u);
        x = next;
    }
    traj.success = traj.min_constraint >= -kappa;
    Ok(traj)
}

/// `n` states drawn uniformly from the box `[lo, hi]` with `V_s(x, 0) >= margin`.
pub fn sample_initial_states(
    vs: &ValueField,
    lo: &[f64],
    hi: &[f64],
    n: usize,
    seed: u64,
    margin: f64,
) -> Result<Vec<Vec<f64>>> {
    if !(margin >= 0.0) {
        return Err(Error::Contract(format!("margin must be >= 0, got {margin}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut draws = 0usize;
    let t0 = vs.t_first();
    while out.len() < n {
        if draws >= MAX_DRAWS && (out.len() as f64) < MIN_ACCEPTANCE * draws as f64 {
            return Err(Error::Config(format!(
                "acceptance rate {:.2e} after {draws} draws: no region with V_s >= {margin}",
                out.len() as f64 / draws as f64
            )));
        }
        draws += 1;
        let x: Vec<f64> = lo.iter().zip(hi).map(|(&a, &b)| rng.gen_range(a..b)).collect();
        if vs.value_at(&x, t0)?.value >= margin {
            out.push(x);
        }
    }
    Ok(out)
}

/// Outcome of one method over a shared list of initial states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: String,
    pub initial_states: Vec<Vec<f64>>,
    pub successes: Vec<bool>,
    pub costs: Vec<f64>,
    pub min_constraints: Vec<f64>,
    pub offline_seconds: f64,
    /// Median wall-clock seconds per policy call.
    pub online_median_seconds: f64,
}

impl MethodRun {
    pub fn from_trajectories(
        method: &str,
        initial_states: Vec<Vec<f64>>,
        trajectories: &[Trajectory],
        offline_seconds: f64,
        online_median_seconds: f64,
    ) -> Self {
        Self {
            method: method.to_string(),
            initial_states,
            successes: trajectories.iter().map(|t| t.success).collect(),
            costs: trajectories.iter().map(|t| t.running_cost_integral).collect(),
            min_constraints: trajectories.iter().map(|t| t.min_constraint).collect(),
            offline_seconds,
            online_median_seconds,
        }
    }

    pub fn success_rate(&self) -> f64 {
        if self.successes.is_empty() {
            return 0.0;
        }
        self.successes.iter().filter(|&&s| s).count() as f64 / self.successes.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub baseline: String,
    pub common_successes: usize,
    /// Share of common-success seeds where the baseline costs more than the reference.
    pub higher_cost_fraction: f64,
    /// Mean of `100 (cost_baseline - cost_reference) / cost_reference` over common seeds.
    pub mean_percent_higher_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub success_rate: f64,
    pub per_seed_costs: Vec<f64>,
}

/// Wall-clock figures, the only part of the metrics that varies between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: String,
    pub offline_seconds: f64,
    pub online_median_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutMetrics {
    pub reference: String,
    pub methods: Vec<MethodSummary>,
    pub pairwise: Vec<PairwiseComparison>,
    pub timing: Vec<MethodTiming>,
}

impl RolloutMetrics {
    /// Copy with the timing block emptied; identical runs agree on it bit for bit.
    pub fn without_timing(&self) -> Self {
        Self {
            timing: Vec::new(),
            ..self.clone()
        }
    }
}

/// Table of success rates and cost comparisons against the first run (the reference).
pub fn compare(runs: &[MethodRun]) -> Result<RolloutMetrics> {
    let reference = runs
        .first()
        .ok_or_else(|| Error::Contract("compare needs at least one method".into()))?;
    for r in runs {
        if r.initial_states != reference.initial_states {
            return Err(Error::Contract(format!(
                "method {} was rolled out from a different initial-state list than {}",
                r.method, reference.method
            )));
        }
        if r.costs.len() != r.initial_states.len() || r.successes.len() != r.initial_states.len() {
            return Err(Error::Contract(format!("method {} has ragged per-seed records", r.method)));
        }
    }
    let methods = runs
        .iter()
        .map(|r| MethodSummary {
            method: r.method.clone(),
            success_rate: r.success_rate(),
            per_seed_costs: r.costs.clone(),
        })
        .collect();
    let timing = runs
        .iter()
        .map(|r| MethodTiming {
            method: r.method.clone(),
            offline_seconds: r.offline_seconds,
            online_median_seconds: r.online_median_seconds,
        })
        .collect();
    let pairwise = runs[1..]
        .iter()
        .map(|b| {
            let common: Vec<usize> = (0..b.costs.len())
                .filter(|&k| b.successes[k] && reference.successes[k])
                .collect();
            let higher = common
                .iter()
                .filter(|&&k| b.costs[k] > reference.costs[k] + COST_TIE_TOL)
                .count();
            let ratios: Vec<f64> = common
                .iter()
                .filter(|&&k| reference.costs[k].abs() > 1e-12)
                .map(|&k| 100.0 * (b.costs[k] - reference.costs[k]) / reference.costs[k])
                .collect();
            PairwiseComparison {
                baseline: b.method.clone(),
                common_successes: common.len(),
                higher_cost_fraction: if common.is_empty() {
                    0.0
                } else {
                    higher as f64 / common.len() as f64
                },
                mean_percent_higher_cost: if ratios.is_empty() {
                    0.0
                } else {
                    ratios.iter().sum::<f64>() / ratios.len() as f64
                },
            }
        })
        .collect();
    Ok(RolloutMetrics {
        reference: reference.method.clone(),
        methods,
        pairwise,
        timing,
    })
}

/// Median of a sample; zero for an empty one.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
