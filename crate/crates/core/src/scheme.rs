//! Backward-in-time marching for `V_t + H(x, grad V, t) = 0` on a grid: first-order
//! one-sided differences, global Lax-Friedrichs dissipation and two-stage TVD Runge-Kutta.
//!
//! Going backward by `dt` the semi-discrete update is
//! `V(t - dt) = V(t) + dt * [ H(x, (p+ + p-)/2, t) + sum_i alpha_i (p+_i - p-_i) / 2 ]`.
//! Boundary nodes use linearly extrapolated ghost values, which makes `p+ = p-` there.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AxisBuf, GridSpec, ValueField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dissipation {
    GlobalLaxFriedrichs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub cfl: f64,
    pub store_dt: f64,
    pub dissipation: Dissipation,
    pub spatial_order: u8,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            store_dt: 0.01,
            dissipation: Dissipation::GlobalLaxFriedrichs,
            spatial_order: 1,
        }
    }
}

impl SolverSettings {
    /// Number of stored intervals covering `horizon`.
    pub fn store_intervals(&self, horizon: f64) -> Result<usize> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if self.spatial_order != 1 {
            return Err(Error::Config(format!(
                "only first-order spatial differences are available, got order {}",
                self.spatial_order
            )));
        }
        if !(self.store_dt > 0.0) {
            return Err(Error::Config(format!("store_dt must be positive, got {}", self.store_dt)));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be >= 0, got {horizon}")));
        }
        let k = (horizon / self.store_dt).round();
        if (k * self.store_dt - horizon).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "store_dt {} does not divide horizon {horizon}",
                self.store_dt
            )));
        }
        Ok(k as usize)
    }
}

/// One-sided differences at a node, with linear-extrapolation ghosts at the boundary.
#[inline]
pub(crate) fn one_sided(grid: &GridSpec, strides: &[usize], v: &[f64], flat: usize, idx: &[usize], axis: usize) -> (f64, f64) {
    let h = grid.spacing(axis);
    let s = strides[axis];
    let k = idx[axis];
    let n = grid.n()[axis];
    if k == 0 {
        let d = (v[flat + s] - v[flat]) / h;
        (d, d)
    } else if k + 1 == n {
        let d = (v[flat] - v[flat - s]) / h;
        (d, d)
    } else {
        ((v[flat] - v[flat - s]) / h, (v[flat + s] - v[flat]) / h)
    }
}

/// Backward marcher shared by the safety and performance solvers.
pub(crate) struct Marcher<'a> {
    pub grid: &'a GridSpec,
    pub alpha: Vec<f64>,
    pub settings: &'a SolverSettings,
    pub horizon: f64,
}

impl<'a> Marcher<'a> {
    /// Internal step count per stored interval and the resulting step.
    fn substeps(&self, interval: f64) -> Result<(usize, f64)> {
        if self.alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Solver {
                step: 0,
                node: 0,
                message: format!("invalid dissipation bounds {:?}", self.alpha),
            });
        }
        let rate: f64 = (0..self.grid.dim())
            .map(|i| self.alpha[i] / self.grid.spacing(i))
            .sum();
        if rate == 0.0 {
            return Ok((1, interval));
        }
        let dt_cfl = self.settings.cfl / rate;
        if !(dt_cfl > 0.0) {
            return Err(Error::Solver {
                step: 0,
                node: 0,
                message: format!("CFL step {dt_cfl} is not positive"),
            });
        }
        let m = (interval / dt_cfl - 1e-12).ceil().max(1.0) as usize;
        Ok((m, interval / m as f64))
    }

    /// `dt`-scaled right-hand side at time `t` for every node.
    fn rhs<H>(&self, v: &[f64], t: f64, hamiltonian: &H, out: &mut [f64])
    where
        H: Fn(usize, &[f64], &[f64], f64) -> f64 + Sync,
    {
        let grid = self.grid;
        let d = grid.dim();
        let strides = grid.strides();
        out.par_iter_mut().enumerate().for_each(|(flat, o)| {
            let idx = grid.multi_index(flat);
            let mut x: AxisBuf<f64> = AxisBuf::from_elem(0.0, d);
            grid.node_into(flat, &mut x);
            let mut p: AxisBuf<f64> = AxisBuf::from_elem(0.0, d);
            let mut diss = 0.0;
            for i in 0..d {
                let (pm, pp) = one_sided(grid, &strides, v, flat, &idx, i);
                p[i] = 0.5 * (pm + pp);
                diss += 0.5 * self.alpha[i] * (pp - pm);
            }
            *o = hamiltonian(flat, &x, &p, t) + diss;
        });
    }

    /// March from `terminal` at `t = horizon` back to `t = 0`.
    ///
    /// `post(new, old, t)` runs after every full internal step (obstacle clamps etc.).
    pub fn run<H, P>(&self, terminal: Vec<f64>, hamiltonian: H, post: P) -> Result<ValueField>
    where
        H: Fn(usize, &[f64], &[f64], f64) -> f64 + Sync,
        P: Fn(&mut [f64], &[f64], f64),
    {
        let intervals = self.settings.store_intervals(self.horizon)?;
        let grid = self.grid.clone();
        if intervals == 0 {
            return ValueField::new(grid, vec![self.horizon], vec![terminal]);
        }
        let interval = self.horizon / intervals as f64;
        let (m, dt) = self.substeps(interval)?;
        let n = self.grid.len();
        let mut slices = vec![terminal];
        let mut v = slices[0].clone();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut stage = vec![0.0; n];
        let mut step = 0;
        for j in (0..intervals).rev() {
            let t_hi = self.horizon * (j + 1) as f64 / intervals as f64;
            for s in 0..m {
                let t = t_hi - s as f64 * dt;
                self.rhs(&v, t, &hamiltonian, &mut k1);
                for i in 0..n {
                    stage[i] = v[i] + dt * k1[i];
                }
                self.rhs(&stage, t - dt, &hamiltonian, &mut k2);
                let old = v.clone();
                for i in 0..n {
                    v[i] = 0.5 * (v[i] + stage[i] + dt * k2[i]);
                }
                post(&mut v, &old, t - dt);
                if let Some(bad) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::Solver {
                        step,
                        node: bad,
                        message: format!("non-finite value at t = {}", t - dt),
                    });
                }
                step += 1;
            }
            slices.push(v.clone());
        }
        slices.reverse();
        let times = (0..=intervals)
            .map(|k| self.horizon * k as f64 / intervals as f64)
            .collect();
        ValueField::new(grid, times, slices)
    }
}
