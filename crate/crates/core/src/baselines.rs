//! Comparison controllers: penalty-based MPPI, MPPI behind a safety filter, and a
//! receding-horizon single-shooting planner.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex::projected_gradient;
use crate::error::{Error, Result};
use crate::grid::ValueField;
use crate::rollout::Policy;
use crate::safe_controls::{self, SafeKind};
use crate::system::{ProblemSpec, SystemModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MppiParams {
    pub horizon_steps: usize,
    pub dt: f64,
    pub samples: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub penalty: f64,
    /// Seconds between replans; the last plan's first control is held in between.
    pub replan_interval: f64,
}

impl Default for MppiParams {
    fn default() -> Self {
        Self {
            horizon_steps: 100,
            dt: 0.02,
            samples: 1024,
            lambda: 1.0,
            sigma: 0.5,
            penalty: 1e3,
            replan_interval: 0.02,
        }
    }
}

/// Result of one MPPI optimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct MppiPlan {
    pub control: Vec<f64>,
    pub best_sample: usize,
    pub best_first_control: Vec<f64>,
    pub costs: Vec<f64>,
}

/// Cost of an open-loop control sequence: `sum_k r(x_k, u_k) dt + w max(0, -l(x_{k+1}))`.
fn penalised_cost<'u>(
    system: &SystemModel,
    spec: &ProblemSpec,
    x0: &[f64],
    seq: impl Iterator<Item = &'u [f64]>,
    dt: f64,
    w: f64,
) -> f64 {
    let mut x = x0.to_vec();
    let mut next = vec![0.0; x.len()];
    let mut cost = 0.0;
    for u in seq {
        system.rk4_step_into(&x, u, dt, &mut next);
        cost += (spec.running_cost)(&x, u) * dt + w * (-(spec.constraint)(&next)).max(0.0);
        std::mem::swap(&mut x, &mut next);
    }
    cost
}

pub struct MppiPolicy<'a> {
    system: &'a SystemModel,
    spec: &'a ProblemSpec,
    params: MppiParams,
    rng: ChaCha8Rng,
    nominal: Vec<Vec<f64>>,
    held: Option<(f64, Vec<f64>)>,
    pub calls: usize,
    pub plans: usize,
}

impl<'a> MppiPolicy<'a> {
    pub fn new(system: &'a SystemModel, spec: &'a ProblemSpec, params: MppiParams, seed: u64) -> Result<Self> {
        if params.horizon_steps == 0 || params.samples == 0 || !(params.dt > 0.0) {
            return Err(Error::Config("MPPI needs positive horizon, samples and dt".into()));
        }
        if !(params.lambda >= 0.0) || !(params.sigma >= 0.0) || !(params.penalty >= 0.0) {
            return Err(Error::Config("MPPI lambda, sigma and penalty must be >= 0".into()));
        }
        let nominal = vec![vec![0.0; system.control_dim]; params.horizon_steps];
        Ok(Self {
            system,
            spec,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            nominal,
            held: None,
            calls: 0,
            plans: 0,
        })
    }

    pub fn nominal(&self) -> &[Vec<f64>] {
        &self.nominal
    }

    pub fn set_nominal(&mut self, nominal: Vec<Vec<f64>>) -> Result<()> {
        if nominal.len() != self.params.horizon_steps
            || nominal.iter().any(|u| u.len() != self.system.control_dim)
        {
            return Err(Error::Contract("nominal sequence has the wrong shape".into()));
        }
        self.nominal = nominal;
        Ok(())
    }

    /// One MPPI update from state `x`: perturb, score, reweight, then shift the nominal.
    pub fn plan(&mut self, x: &[f64]) -> Result<MppiPlan> {
        let p = &self.params;
        let m = self.system.control_dim;
        let set = &self.system.control_set;
        let noise = Normal::new(0.0, p.sigma).map_err(|e| Error::Config(format!("MPPI noise: {e}")))?;
        // noise is drawn sequentially so that results do not depend on thread scheduling;
        // sample k, step i, component j lives at (k * H + i) * m + j
        let len = p.horizon_steps * m;
        let mut sequences = vec![0.0; p.samples * len];
        for seq in sequences.chunks_exact_mut(len) {
            for (u, nom) in seq.chunks_exact_mut(m).zip(&self.nominal) {
                for j in 0..m {
                    u[j] = nom[j] + noise.sample(&mut self.rng);
                }
                set.project_in_place(u);
            }
        }
        let (system, spec) = (self.system, self.spec);
        let costs: Vec<f64> = sequences
            .par_chunks_exact(len)
            .map(|s| penalised_cost(system, spec, x, s.chunks_exact(m), p.dt, p.penalty))
            .collect();
        let (best, beta) = costs
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, &c)| if c < acc.1 { (k, c) } else { acc });
        let weights: Vec<f64> = if p.lambda == 0.0 {
            (0..p.samples).map(|k| if k == best { 1.0 } else { 0.0 }).collect()
        } else {
            let raw: Vec<f64> = costs.iter().map(|c| (-(c - beta) / p.lambda).exp()).collect();
            let z: f64 = raw.iter().sum();
            raw.iter().map(|w| w / z).collect()
        };
        let mut updated = self.nominal.clone();
        for (step, u) in updated.iter_mut().enumerate() {
            let mut delta = vec![0.0; m];
            for (k, s) in sequences.chunks_exact(len).enumerate() {
                if weights[k] != 0.0 {
                    for j in 0..m {
                        delta[j] += weights[k] * (s[step * m + j] - self.nominal[step][j]);
                    }
                }
            }
            for j in 0..m {
                u[j] += delta[j];
            }
            *u = set.project(u);
        }
        let control = updated[0].clone();
        let last = updated[updated.len() - 1].clone();
        updated.remove(0);
        updated.push(last);
        self.nominal = updated;
        self.plans += 1;
        Ok(MppiPlan {
            control,
            best_first_control: sequences[best * len..best * len + m].to_vec(),
            best_sample: best,
            costs,
        })
    }
}

impl Policy for MppiPolicy<'_> {
    fn act(&mut self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.calls += 1;
        if let Some((t_plan, u)) = &self.held {
            if t - t_plan < self.params.replan_interval - 1e-9 {
                return Ok(u.clone());
            }
        }
        let plan = self.plan(x)?;
        self.held = Some((t, plan.control.clone()));
        Ok(plan.control)
    }
}

/// Least-restrictive safety filter around a nominal policy.
pub struct FilteredPolicy<'a, P> {
    pub nominal: P,
    vs: &'a ValueField,
    system: &'a SystemModel,
    threshold: f64,
    pub interventions: usize,
    pub fallbacks: usize,
    pub calls: usize,
}

impl<'a, P: Policy> FilteredPolicy<'a, P> {
    pub fn new(nominal: P, vs: &'a ValueField, system: &'a SystemModel, threshold: f64) -> Self {
        Self {
            nominal,
            vs,
            system,
            threshold,
            interventions: 0,
            fallbacks: 0,
            calls: 0,
        }
    }

    /// Keep `u_nom` where `V_s > threshold`; otherwise the closest control in the safe band,
    /// or the fallback control when the band misses the control set.
    pub fn filter(&mut self, u_nom: &[f64], x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.calls += 1;
        let set = &self.system.control_set;
        if self.vs.value_at(x, t)?.value > self.threshold {
            return Ok(set.project(u_nom));
        }
        self.interventions += 1;
        let band = safe_controls::band_at(self.vs, self.system, x, t, 0.0)?;
        if band.kind == SafeKind::Band {
            if let Ok(u) = set.project_slab(u_nom, &band.normal, band.b_lo, band.b_hi) {
                return Ok(u);
            }
        }
        self.fallbacks += 1;
        Ok(band
            .fallback_control
            .unwrap_or_else(|| set.argmax_linear(&band.normal)))
    }
}

impl<P: Policy> Policy for FilteredPolicy<'_, P> {
    fn act(&mut self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let u = self.nominal.act(x, t)?;
        self.filter(&u, x, t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcParams {
    pub horizon_steps: usize,
    pub dt: f64,
    pub penalty: f64,
    pub iterations: usize,
    pub fd_eps: f64,
    pub replan_interval: f64,
}

impl Default for MpcParams {
    fn default() -> Self {
        Self {
            horizon_steps: 20,
            dt: 0.05,
            penalty: 1e3,
            iterations: 200,
            fd_eps: 1e-6,
            replan_interval: 0.05,
        }
    }
}

/// Receding-horizon single shooting over piecewise-constant controls, minimising
/// `sum_k r dt + penalty sum_k max(0, -l(x_{k+1}))^2` by projected gradient descent.
pub struct MpcPolicy<'a> {
    system: &'a SystemModel,
    spec: &'a ProblemSpec,
    params: MpcParams,
    warm: Vec<f64>,
    held: Option<(f64, Vec<f64>)>,
    pub calls: usize,
}

impl<'a> MpcPolicy<'a> {
    pub fn new(system: &'a SystemModel, spec: &'a ProblemSpec, params: MpcParams) -> Result<Self> {
        if params.horizon_steps == 0 || !(params.dt > 0.0) || !(params.fd_eps > 0.0) {
            return Err(Error::Config("MPC needs positive horizon, dt and finite-difference step".into()));
        }
        let warm = vec![0.0; params.horizon_steps * system.control_dim];
        Ok(Self {
            system,
            spec,
            params,
            warm,
            held: None,
            calls: 0,
        })
    }

    fn cost(&self, x0: &[f64], flat: &[f64]) -> f64 {
        let m = self.system.control_dim;
        let mut x = x0.to_vec();
        let mut cost = 0.0;
        for u in flat.chunks(m) {
            let next = self.system.rk4_step(&x, u, self.params.dt);
            let violation = (-(self.spec.constraint)(&next)).max(0.0);
            cost += (self.spec.running_cost)(&x, u) * self.params.dt + self.params.penalty * violation * violation;
            x = next;
        }
        cost
    }

    /// Optimise the control sequence from `x`, returning its first control and shifting the warm start.
    pub fn plan(&mut self, x: &[f64]) -> Vec<f64> {
        let m = self.system.control_dim;
        let set = &self.system.control_set;
        let project = |flat: &mut [f64]| {
            for u in flat.chunks_mut(m) {
                let p = set.project(u);
                u.copy_from_slice(&p);
            }
        };
        let sol = projected_gradient(
            |flat: &[f64]| self.cost(x, flat),
            project,
            &self.warm,
            self.params.iterations,
            1e-10,
            self.params.fd_eps,
        );
        let first = sol[..m].to_vec();
        let mut shifted = sol[m..].to_vec();
        shifted.extend_from_slice(&sol[sol.len() - m..]);
        self.warm = shifted;
        first
    }
}

impl Policy for MpcPolicy<'_> {
    fn act(&mut self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.calls += 1;
        if let Some((t_plan, u)) = &self.held {
            if t - t_plan < self.params.replan_interval - 1e-9 {
                return Ok(u.clone());
            }
        }
        let u = self.plan(x);
        self.held = Some((t, u.clone()));
        Ok(u)
    }
}
