//! End-to-end benchmark pipeline: solve both value functions, sample initial states, roll out
//! each method from the same states and tabulate the comparison.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{FilteredPolicy, MpcPolicy, MppiPolicy};
use crate::config::ExperimentConfig;
use crate::controller::SynthesisPolicy;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ValueField};
use crate::performance::{solve_performance_with_gamma, PerformanceSolution};
use crate::rollout::{self, kappa, median, MethodRun, Policy, RolloutMetrics, Trajectory};
use crate::safety::solve_safety;
use crate::system::{benchmark_instance, ProblemSpec, SystemModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ours,
    Mppi,
    MppiFiltered,
    Mpc,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ours, Method::Mppi, Method::MppiFiltered, Method::Mpc];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Mppi => "mppi",
            Method::MppiFiltered => "mppi-filtered",
            Method::Mpc => "mpc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}; expected ours, mppi, mppi-filtered or mpc")))
    }
}

/// Solved value functions with their offline solve times.
#[derive(Debug, Clone)]
pub struct Fields {
    pub vs: ValueField,
    pub performance: PerformanceSolution,
    pub safety_seconds: f64,
    pub performance_seconds: f64,
}

/// Rollouts of one method with diagnostics.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub run: MethodRun,
    pub trajectories: Vec<Trajectory>,
    /// Share of policy calls that used the fallback control (ours and the filter only).
    pub fallback_fraction: f64,
    /// Per-call wall-clock seconds of every policy call.
    pub latencies: Vec<f64>,
}

/// The benchmark instance built from a configuration.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub config: ExperimentConfig,
    pub hash: String,
    pub system: SystemModel,
    pub spec: ProblemSpec,
    pub grid: GridSpec,
}

impl Benchmark {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (system, spec) = benchmark_instance(&config.benchmark)?;
        let b = &config.benchmark;
        let grid = GridSpec::padded(&b.arena_lo, &b.arena_hi, &config.grid.nodes, config.grid.pad)?;
        Ok(Self {
            hash: config.hash(),
            config,
            system,
            spec,
            grid,
        })
    }

    pub fn solve_safety(&self) -> Result<(ValueField, f64)> {
        let start = Instant::now();
        let vs = solve_safety(
            &self.system,
            |x| (self.spec.constraint)(x),
            &self.grid,
            self.spec.horizon,
            &self.config.solver,
        )?;
        Ok((vs, start.elapsed().as_secs_f64()))
    }

    pub fn solve_performance(&self, vs: &ValueField) -> Result<(PerformanceSolution, f64)> {
        let start = Instant::now();
        let sol = solve_performance_with_gamma(
            &self.system,
            &self.spec,
            vs,
            &self.grid,
            &self.config.solver,
            self.config.gamma,
        )?;
        Ok((sol, start.elapsed().as_secs_f64()))
    }

    pub fn solve(&self) -> Result<Fields> {
        let (vs, safety_seconds) = self.solve_safety()?;
        let (performance, performance_seconds) = self.solve_performance(&vs)?;
        Ok(Fields {
            vs,
            performance,
            safety_seconds,
            performance_seconds,
        })
    }

    pub fn kappa(&self) -> f64 {
        kappa(self.grid.max_spacing(), self.config.rollout.dt)
    }

    pub fn initial_states(&self, vs: &ValueField) -> Result<Vec<Vec<f64>>> {
        let b = &self.config.benchmark;
        let r = &self.config.rollout;
        rollout::sample_initial_states(vs, &b.arena_lo, &b.arena_hi, r.count, r.seed, r.margin)
    }

    fn simulate<P: Policy + ?Sized>(&self, policy: &mut P, x0: &[f64]) -> Result<Trajectory> {
        rollout::rollout(
            &self.system,
            &self.spec,
            policy,
            x0,
            self.spec.horizon,
            self.config.rollout.dt,
            self.kappa(),
        )
    }

    /// Seed of the sampling RNG for rollout `index`.
    fn rollout_seed(&self, index: usize) -> u64 {
        self.config.rollout.seed.wrapping_add(1 + index as u64)
    }

    /// Roll `method` out from every state in `states`.
    pub fn run_method(&self, method: Method, fields: &Fields, states: &[Vec<f64>]) -> Result<MethodOutcome> {
        let vs = &fields.vs;
        let v = &fields.performance.field;
        type Row = (Trajectory, Vec<f64>, usize, usize);
        let rows: Vec<Result<Row>> = states
            .par_iter()
            .enumerate()
            .map(|(i, x0)| -> Result<Row> {
                match method {
                    Method::Ours => {
                        let mut p = SynthesisPolicy::new(v, vs, &self.system, &self.spec);
                        p.gamma = self.config.gamma;
                        let tr = self.simulate(&mut p, x0)?;
                        Ok((tr, p.latencies, p.fallbacks, p.calls))
                    }
                    Method::Mppi => {
                        let mut p = timed(MppiPolicy::new(&self.system, &self.spec, self.config.mppi.clone(), self.rollout_seed(i))?);
                        let tr = self.simulate(&mut p, x0)?;
                        Ok((tr, p.latencies, 0, p.calls))
                    }
                    Method::MppiFiltered => {
                        let nominal = MppiPolicy::new(&self.system, &self.spec, self.config.mppi.clone(), self.rollout_seed(i))?;
                        let mut p = timed(FilteredPolicy::new(nominal, vs, &self.system, self.config.filter.threshold));
                        let tr = self.simulate(&mut p, x0)?;
                        Ok((tr, p.latencies, p.inner.fallbacks, p.calls))
                    }
                    Method::Mpc => {
                        let mut p = timed(MpcPolicy::new(&self.system, &self.spec, self.config.mpc.clone())?);
                        let tr = self.simulate(&mut p, x0)?;
                        Ok((tr, p.latencies, 0, p.calls))
                    }
                }
            })
            .collect();
        let mut trajectories = Vec::with_capacity(states.len());
        let mut latencies = Vec::new();
        let (mut fallbacks, mut calls) = (0, 0);
        for row in rows {
            let (tr, lat, fb, c) = row?;
            trajectories.push(tr);
            latencies.extend(lat);
            fallbacks += fb;
            calls += c;
        }
        let offline = match method {
            Method::Ours => fields.safety_seconds + fields.performance_seconds,
            Method::MppiFiltered => fields.safety_seconds,
            Method::Mppi | Method::Mpc => 0.0,
        };
        let run = MethodRun::from_trajectories(method.as_str(), states.to_vec(), &trajectories, offline, median(&latencies));
        Ok(MethodOutcome {
            run,
            trajectories,
            fallback_fraction: if calls == 0 { 0.0 } else { fallbacks as f64 / calls as f64 },
            latencies,
        })
    }
}

/// Wraps a policy and records the wall-clock time of every call.
pub struct Timed<P> {
    pub inner: P,
    pub latencies: Vec<f64>,
    pub calls: usize,
}

pub fn timed<P>(inner: P) -> Timed<P> {
    Timed {
        inner,
        latencies: Vec::new(),
        calls: 0,
    }
}

impl<P: Policy> Policy for Timed<P> {
    fn act(&mut self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let start = Instant::now();
        let u = self.inner.act(x, t)?;
        self.latencies.push(start.elapsed().as_secs_f64());
        self.calls += 1;
        Ok(u)
    }
}

/// Metrics document written by `rollout` and `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config_hash: String,
    pub kappa: f64,
    pub margin: f64,
    pub grid_nodes: [usize; 2],
    pub metrics: RolloutMetrics,
    /// Per-method fallback share of policy calls, in method order.
    pub fallback_fractions: Vec<(String, f64)>,
}

impl BenchmarkReport {
    pub fn new(bench: &Benchmark, outcomes: &[MethodOutcome]) -> Result<Self> {
        let runs: Vec<MethodRun> = outcomes.iter().map(|o| o.run.clone()).collect();
        Ok(Self {
            config_hash: bench.hash.clone(),
            kappa: bench.kappa(),
            margin: bench.config.rollout.margin,
            grid_nodes: bench.config.grid.nodes,
            metrics: rollout::compare(&runs)?,
            fallback_fractions: outcomes
                .iter()
                .map(|o| (o.run.method.clone(), o.fallback_fraction))
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("pid".parse::<Method>().is_err());
    }
}
