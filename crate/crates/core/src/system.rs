//! Control-affine dynamics `f(x, u) = f1(x) + f2(x) u`, convex control sets, and the
//! cost / constraint data of a problem instance. Ships the 2D drifting-boat benchmark.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::convex::{self, dot, norm};
use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Tolerance on control-set membership for [`SystemModel::flow`].
pub const CONTROL_TOL: f64 = 1e-9;

pub(crate) type Buf = SmallVec<[f64; 8]>;

pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type CostFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlSet {
    EuclideanBall { radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl ControlSet {
    pub fn ball(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self::EuclideanBall { radius })
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::Config(format!("box needs lo < hi per axis, got {lo:?} / {hi:?}")));
        }
        Ok(Self::Box { lo, hi })
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        match self {
            Self::EuclideanBall { radius } => norm(u) <= radius + tol,
            Self::Box { lo, hi } => u
                .iter()
                .enumerate()
                .all(|(j, &v)| v >= lo[j] - tol && v <= hi[j] + tol),
        }
    }

    /// Maximiser of `c.u`; a zero objective returns the minimum-norm admissible control.
    pub fn argmax_linear(&self, c: &[f64]) -> Vec<f64> {
        let neg: Buf = c.iter().map(|v| -v).collect();
        self.argmin_linear(&neg)
    }

    pub fn argmin_linear(&self, c: &[f64]) -> Vec<f64> {
        match self {
            Self::EuclideanBall { radius } => {
                let n = norm(c);
                if n == 0.0 {
                    vec![0.0; c.len()]
                } else {
                    c.iter().map(|v| -radius * v / n).collect()
                }
            }
            Self::Box { lo, hi } => convex::box_argmin(c, lo, hi),
        }
    }

    /// Support function `max_u c.u`.
    pub fn support(&self, c: &[f64]) -> f64 {
        match self {
            Self::EuclideanBall { radius } => radius * norm(c),
            Self::Box { lo, hi } => c
                .iter()
                .enumerate()
                .map(|(j, &v)| if v > 0.0 { v * hi[j] } else { v * lo[j] })
                .sum(),
        }
    }

    /// Minimiser of `c.u` over the set intersected with `a.u = b`.
    pub fn min_linear_on_plane(&self, c: &[f64], a: &[f64], b: f64) -> Result<Vec<f64>> {
        match self {
            Self::EuclideanBall { radius } => convex::min_linear_on_ball_hyperplane(c, a, b, *radius),
            Self::Box { lo, hi } => convex::min_linear_on_box_hyperplane(c, a, b, lo, hi),
        }
    }

    /// Minimiser of `c.u` over the set intersected with `lo <= a.u <= hi`.
    pub fn min_linear_on_slab(&self, c: &[f64], a: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
        let free = self.argmin_linear(c);
        let af = dot(a, &free);
        if af > hi {
            self.min_linear_on_plane(c, a, hi)
        } else if af < lo {
            self.min_linear_on_plane(c, a, lo)
        } else {
            Ok(free)
        }
    }

    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        let mut out = y.to_vec();
        self.project_in_place(&mut out);
        out
    }

    pub fn project_in_place(&self, y: &mut [f64]) {
        match self {
            Self::EuclideanBall { radius } => {
                let n = norm(y);
                if n > *radius {
                    for v in y.iter_mut() {
                        *v = *v * radius / n;
                    }
                }
            }
            Self::Box { lo, hi } => {
                for (j, v) in y.iter_mut().enumerate() {
                    *v = v.clamp(lo[j], hi[j]);
                }
            }
        }
    }

    pub fn project_slab(&self, y: &[f64], a: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
        match self {
            Self::EuclideanBall { radius } => convex::project_ball_slab(y, a, lo, hi, *radius),
            Self::Box { lo: blo, hi: bhi } => convex::project_box_slab(y, a, lo, hi, blo, bhi),
        }
    }

    /// Bound on `|row . u|` over the set.
    pub fn row_bound(&self, row: &[f64]) -> f64 {
        match self {
            Self::EuclideanBall { radius } => radius * norm(row),
            Self::Box { lo, hi } => row
                .iter()
                .enumerate()
                .map(|(j, r)| r.abs() * lo[j].abs().max(hi[j].abs()))
                .sum(),
        }
    }

    /// Finite control sample: the centre plus `directions` points on the boundary
    /// (ball, 2D) or the centre, corners and face midpoints (box).
    pub fn samples(&self, dim: usize, directions: usize) -> Vec<Vec<f64>> {
        match self {
            Self::EuclideanBall { radius } => {
                let mut out = vec![vec![0.0; dim]];
                match dim {
                    1 => {
                        out.push(vec![*radius]);
                        out.push(vec![-*radius]);
                    }
                    2 => {
                        for k in 0..directions {
                            let th = 2.0 * std::f64::consts::PI * k as f64 / directions as f64;
                            out.push(vec![radius * th.cos(), radius * th.sin()]);
                        }
                    }
                    _ => {
                        for j in 0..dim {
                            for s in [-1.0, 1.0] {
                                let mut u = vec![0.0; dim];
                                u[j] = s * radius;
                                out.push(u);
                            }
                        }
                    }
                }
                out
            }
            Self::Box { lo, hi } => {
                let mut out = Vec::new();
                let levels = |j: usize| [lo[j], 0.5 * (lo[j] + hi[j]), hi[j]];
                let total = 3usize.pow(dim as u32);
                for mut code in 0..total {
                    let mut u = vec![0.0; dim];
                    for (j, uj) in u.iter_mut().enumerate() {
                        *uj = levels(j)[code % 3];
                        code /= 3;
                    }
                    out.push(u);
                }
                out
            }
        }
    }
}

#[derive(Clone)]
pub struct SystemModel {
    pub state_dim: usize,
    pub control_dim: usize,
    /// `f1(x)`, written into a `state_dim` buffer.
    pub drift: VectorFn,
    /// `f2(x)`, written row-major into a `state_dim * control_dim` buffer.
    pub control_jacobian: VectorFn,
    pub control_set: ControlSet,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("control_set", &self.control_set)
            .finish_non_exhaustive()
    }
}

impl SystemModel {
    /// `f(x, u)`, after checking that `u` is admissible.
    pub fn flow(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.state_dim || u.len() != self.control_dim {
            return Err(Error::Contract(format!(
                "state/control dims {}/{} do not match model {}/{}",
                x.len(),
                u.len(),
                self.state_dim,
                self.control_dim
            )));
        }
        if !self.control_set.contains(u, CONTROL_TOL) {
            return Err(Error::Contract(format!("control {u:?} outside the control set")));
        }
        let mut out = vec![0.0; self.state_dim];
        self.flow_into(x, u, &mut out);
        Ok(out)
    }

    /// Unchecked `f(x, u)` into `out`.
    pub fn flow_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.drift)(x, out);
        let mut g: Buf = SmallVec::from_elem(0.0, self.state_dim * self.control_dim);
        (self.control_jacobian)(x, &mut g);
        let m = self.control_dim;
        for (i, o) in out.iter_mut().enumerate() {
            *o += dot(&g[i * m..(i + 1) * m], u);
        }
    }

    /// One classical Runge-Kutta step of length `dt` with `u` held constant.
    pub fn rk4_step(&self, x: &[f64], u: &[f64], dt: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim];
        self.rk4_step_into(x, u, dt, &mut out);
        out
    }

    /// [`SystemModel::rk4_step`] writing into `out`, which may not alias `x`.
    pub fn rk4_step_into(&self, x: &[f64], u: &[f64], dt: f64, out: &mut [f64]) {
        let n = self.state_dim;
        let mut k: [Buf; 4] = std::array::from_fn(|_| SmallVec::from_elem(0.0, n));
        let mut y: Buf = SmallVec::from_elem(0.0, n);
        self.flow_into(x, u, &mut k[0]);
        for (s, scale) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
            for i in 0..n {
                y[i] = x[i] + scale * dt * k[s - 1][i];
            }
            self.flow_into(&y, u, &mut k[s]);
        }
        for i in 0..n {
            out[i] = x[i] + dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
    }

    /// `(p . f1(x), f2(x)^T p)`: the affine pieces of `p . f(x, u)` in `u`.
    pub fn costate_terms(&self, x: &[f64], p: &[f64]) -> (f64, Buf) {
        let mut f1: Buf = SmallVec::from_elem(0.0, self.state_dim);
        (self.drift)(x, &mut f1);
        let mut g: Buf = SmallVec::from_elem(0.0, self.state_dim * self.control_dim);
        (self.control_jacobian)(x, &mut g);
        let m = self.control_dim;
        let mut a: Buf = SmallVec::from_elem(0.0, m);
        for i in 0..self.state_dim {
            for j in 0..m {
                a[j] += g[i * m + j] * p[i];
            }
        }
        (dot(p, &f1), a)
    }

    /// Per-axis bound on `|f_i(x, u)|` over the grid nodes and the whole control set; this is
    /// the Lax-Friedrichs dissipation coefficient for any Hamiltonian linear in `p` through `f`.
    pub fn speed_bounds(&self, grid: &GridSpec) -> Vec<f64> {
        let n = self.state_dim;
        let m = self.control_dim;
        let mut alpha = vec![0.0f64; n];
        let mut x = vec![0.0; n];
        let mut f1 = vec![0.0; n];
        let mut g = vec![0.0; n * m];
        for k in 0..grid.len() {
            grid.node_into(k, &mut x);
            (self.drift)(&x, &mut f1);
            (self.control_jacobian)(&x, &mut g);
            for i in 0..n {
                let b = f1[i].abs() + self.control_set.row_bound(&g[i * m..(i + 1) * m]);
                alpha[i] = alpha[i].max(b);
            }
        }
        alpha
    }
}

#[derive(Clone)]
pub struct ProblemSpec {
    /// `r(x, u)`, cost per second.
    pub running_cost: CostFn,
    /// `phi(x)`.
    pub terminal_cost: ScalarFn,
    /// `l(x)`; the state constraint is `l(x) >= 0`.
    pub constraint: ScalarFn,
    pub horizon: f64,
    /// Whether `r` varies with `u`. When false, synthesis and the constrained
    /// Hamiltonian use the closed-form linear kernels.
    pub control_dependent_cost: bool,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("horizon", &self.horizon)
            .field("control_dependent_cost", &self.control_dependent_cost)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub arena_lo: [f64; 2],
    pub arena_hi: [f64; 2],
    pub obstacles: Vec<Obstacle>,
    pub goal: [f64; 2],
    pub horizon: f64,
    pub control_radius: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            arena_lo: [-3.0, -2.0],
            arena_hi: [2.0, 2.0],
            obstacles: vec![
                Obstacle {
                    center: [-1.5, -0.5],
                    radius: 0.5,
                },
                Obstacle {
                    center: [0.0, 0.75],
                    radius: 0.5,
                },
            ],
            goal: [1.5, 0.0],
            horizon: 2.0,
            control_radius: 1.0,
        }
    }
}

/// Signed distance to the interior of an axis-aligned box: positive inside.
pub fn box_signed_distance(x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut inside = f64::INFINITY;
    let mut outside = 0.0;
    for i in 0..x.len() {
        let below = lo[i] - x[i];
        let above = x[i] - hi[i];
        inside = inside.min(-below).min(-above);
        let e = below.max(above).max(0.0);
        outside += e * e;
    }
    if outside > 0.0 {
        -outside.sqrt()
    } else {
        inside
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        for i in 0..2 {
            if !(self.arena_lo[i] < self.arena_hi[i]) {
                return Err(Error::Config(format!("arena axis {i} needs lo < hi")));
            }
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be >= 0, got {}", self.horizon)));
        }
        if !(self.control_radius > 0.0) {
            return Err(Error::Config("control radius must be positive".into()));
        }
        for (k, o) in self.obstacles.iter().enumerate() {
            if !(o.radius > 0.0) {
                return Err(Error::Config(format!("obstacle {k} needs a positive radius")));
            }
            let d = ((self.goal[0] - o.center[0]).powi(2) + (self.goal[1] - o.center[1]).powi(2)).sqrt();
            if d <= o.radius {
                return Err(Error::Config(format!(
                    "obstacle {k} at {:?} (radius {}) covers the goal {:?}",
                    o.center, o.radius, self.goal
                )));
            }
        }
        Ok(())
    }

    /// `l(x)`: signed distance to the arena interior, capped by the distance to every obstacle.
    pub fn constraint_value(&self, x: &[f64]) -> f64 {
        let mut l = box_signed_distance(x, &self.arena_lo, &self.arena_hi);
        for o in &self.obstacles {
            let d = ((x[0] - o.center[0]).powi(2) + (x[1] - o.center[1]).powi(2)).sqrt();
            l = l.min(d - o.radius);
        }
        l
    }
}

/// Dynamics `(u1 + 2 - x2^2 / 2, u2)` with a Euclidean-ball control set.
pub fn boat_model(control_radius: f64) -> Result<SystemModel> {
    Ok(SystemModel {
        state_dim: 2,
        control_dim: 2,
        drift: Arc::new(|x: &[f64], out: &mut [f64]| {
            out[0] = 2.0 - 0.5 * x[1] * x[1];
            out[1] = 0.0;
        }),
        control_jacobian: Arc::new(|_x: &[f64], out: &mut [f64]| {
            out.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        }),
        control_set: ControlSet::ball(control_radius)?,
    })
}

/// The 2D benchmark: boat dynamics, arena-plus-obstacles constraint, distance-to-goal running
/// cost, no terminal cost.
pub fn benchmark_instance(config: &BenchmarkConfig) -> Result<(SystemModel, ProblemSpec)> {
    config.validate()?;
    let system = boat_model(config.control_radius)?;
    let goal = config.goal;
    let geometry = config.clone();
    let spec = ProblemSpec {
        running_cost: Arc::new(move |x: &[f64], _u: &[f64]| {
            ((x[0] - goal[0]).powi(2) + (x[1] - goal[1]).powi(2)).sqrt()
        }),
        terminal_cost: Arc::new(|_x: &[f64]| 0.0),
        constraint: Arc::new(move |x: &[f64]| geometry.constraint_value(x)),
        horizon: config.horizon,
        control_dependent_cost: false,
    };
    Ok((system, spec))
}

/// `dx/dt = u` in `dim` dimensions with a ball of the given radius.
pub fn single_integrator(dim: usize, radius: f64) -> Result<SystemModel> {
    Ok(SystemModel {
        state_dim: dim,
        control_dim: dim,
        drift: Arc::new(|_x: &[f64], out: &mut [f64]| out.fill(0.0)),
        control_jacobian: Arc::new(move |_x: &[f64], out: &mut [f64]| {
            out.fill(0.0);
            for i in 0..dim {
                out[i * dim + i] = 1.0;
            }
        }),
        control_set: ControlSet::ball(radius)?,
    })
}

/// A system that never moves: `f1 = 0`, `f2 = 0`.
pub fn frozen_system(state_dim: usize, control_dim: usize, radius: f64) -> Result<SystemModel> {
    Ok(SystemModel {
        state_dim,
        control_dim,
        drift: Arc::new(|_x: &[f64], out: &mut [f64]| out.fill(0.0)),
        control_jacobian: Arc::new(|_x: &[f64], out: &mut [f64]| out.fill(0.0)),
        control_set: ControlSet::ball(radius)?,
    })
}
