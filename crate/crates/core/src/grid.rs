//! Uniform node-centred Cartesian grids and time-stamped scalar fields.
//!
//! Node `k` on axis `i` sits at `lo[i] + k * h[i]` with `h[i] = (hi[i] - lo[i]) / (n[i] - 1)`,
//! so both endpoints are nodes. Slices are flattened row-major in axis order
//! `(x1, x2, ...)`: the last axis varies fastest.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Stack buffer for per-axis scratch data.
pub(crate) type AxisBuf<T> = SmallVec<[T; 4]>;

/// Relative distance below which a query coordinate snaps onto a node.
const NODE_SNAP: f64 = 1e-10;
/// Slack allowed on time-range checks.
const TIME_SLACK: f64 = 1e-9;

/// A result that also reports whether the query point was clamped into the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe<T> {
    pub value: T,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    lo: Vec<f64>,
    hi: Vec<f64>,
    n: Vec<usize>,
}

/// Cell location of a point: lower corner per axis and fractional offset in `[0, 1]`.
#[derive(Debug, Clone)]
struct Cell {
    corner: AxisBuf<usize>,
    frac: AxisBuf<f64>,
    clamped: bool,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.len() != n.len() {
            return Err(Error::Config(format!(
                "grid axes disagree: lo {}, hi {}, n {}",
                lo.len(),
                hi.len(),
                n.len()
            )));
        }
        for i in 0..lo.len() {
            if !(lo[i].is_finite() && hi[i].is_finite()) || hi[i] <= lo[i] {
                return Err(Error::Config(format!(
                    "axis {i}: need finite lo < hi, got [{}, {}]",
                    lo[i], hi[i]
                )));
            }
            if n[i] < 2 {
                return Err(Error::Config(format!("axis {i}: need at least 2 nodes, got {}", n[i])));
            }
        }
        Ok(Self { lo, hi, n })
    }

    /// Grid whose outermost `pad` cells on every side lie outside `[lo, hi]`.
    ///
    /// With `n` nodes per axis the box `[lo, hi]` is covered by `n - 1 - 2 pad` cells.
    pub fn padded(lo: &[f64], hi: &[f64], n: &[usize], pad: usize) -> Result<Self> {
        let mut glo = Vec::with_capacity(lo.len());
        let mut ghi = Vec::with_capacity(lo.len());
        for i in 0..lo.len() {
            let cells = n[i] as isize - 1 - 2 * pad as isize;
            if cells < 1 {
                return Err(Error::Config(format!(
                    "axis {i}: {} nodes cannot hold a pad of {pad} cells",
                    n[i]
                )));
            }
            let h = (hi[i] - lo[i]) / cells as f64;
            glo.push(lo[i] - pad as f64 * h);
            ghi.push(hi[i] + pad as f64 * h);
        }
        Self::new(glo, ghi, n.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.n[axis] - 1) as f64
    }

    /// Largest spacing over all axes.
    pub fn max_spacing(&self) -> f64 {
        (0..self.dim()).map(|i| self.spacing(i)).fold(0.0, f64::max)
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, axis: usize, k: usize) -> f64 {
        if k + 1 == self.n[axis] {
            self.hi[axis]
        } else {
            self.lo[axis] + k as f64 * self.spacing(axis)
        }
    }

    /// Flat-index stride of each axis.
    pub fn strides(&self) -> AxisBuf<usize> {
        let d = self.dim();
        let mut s: AxisBuf<usize> = SmallVec::from_elem(1, d);
        for i in (0..d.saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.n[i + 1];
        }
        s
    }

    pub fn multi_index(&self, mut flat: usize) -> AxisBuf<usize> {
        let d = self.dim();
        let mut idx: AxisBuf<usize> = SmallVec::from_elem(0, d);
        for i in (0..d).rev() {
            idx[i] = flat % self.n[i];
            flat /= self.n[i];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.n).fold(0, |acc, (&k, &n)| acc * n + k)
    }

    /// Coordinates of the node with flat index `flat`.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.node_into(flat, &mut x);
        x
    }

    pub fn node_into(&self, flat: usize, out: &mut [f64]) {
        let idx = self.multi_index(flat);
        for (i, &k) in idx.iter().enumerate() {
            out[i] = self.coord(i, k);
        }
    }

    /// Sample a function at every node, in flat order.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        (0..self.len())
            .map(|k| {
                self.node_into(k, &mut x);
                f(&x)
            })
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lo[i] && v <= self.hi[i])
    }

    /// Nearest point of the grid box.
    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| v.clamp(self.lo[i], self.hi[i]))
            .collect()
    }

    fn locate(&self, x: &[f64]) -> Result<Cell> {
        if x.len() != self.dim() {
            return Err(Error::Query(format!(
                "point has {} coordinates, grid has {} axes",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Query(format!("non-finite query point {x:?}")));
        }
        let d = self.dim();
        let mut corner: AxisBuf<usize> = SmallVec::with_capacity(d);
        let mut frac: AxisBuf<f64> = SmallVec::with_capacity(d);
        let mut clamped = false;
        for i in 0..d {
            let last = (self.n[i] - 1) as f64;
            let mut s = (x[i] - self.lo[i]) / self.spacing(i);
            if s < 0.0 || s > last {
                clamped = true;
                s = s.clamp(0.0, last);
            }
            let r = s.round();
            if (s - r).abs() <= NODE_SNAP * last.max(1.0) {
                s = r;
            }
            let k = (s.floor() as usize).min(self.n[i] - 2);
            corner.push(k);
            frac.push(s - k as f64);
        }
        Ok(Cell {
            corner,
            frac,
            clamped,
        })
    }

    /// Visit the `2^d` corners of a cell with their multilinear weights, skipping zero weights.
    fn for_each_corner(&self, cell: &Cell, mut visit: impl FnMut(usize, f64)) {
        let d = self.dim();
        let strides = self.strides();
        for mask in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for i in 0..d {
                let upper = (mask >> i) & 1 == 1;
                let f = cell.frac[i];
                w *= if upper { f } else { 1.0 - f };
                flat += (cell.corner[i] + upper as usize) * strides[i];
            }
            if w != 0.0 {
                visit(flat, w);
            }
        }
    }

    fn check_slice(&self, slice: &[f64]) -> Result<()> {
        if slice.len() != self.len() {
            return Err(Error::Query(format!(
                "slice has {} entries, grid has {} nodes",
                slice.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// Multilinear interpolation of node values.
    ///
    /// Points outside the grid are clamped onto its boundary and flagged.
    pub fn interpolate(&self, slice: &[f64], x: &[f64]) -> Result<Probe<f64>> {
        self.check_slice(slice)?;
        let cell = self.locate(x)?;
        let mut v = 0.0;
        let mut first = true;
        self.for_each_corner(&cell, |k, w| {
            if first && w == 1.0 {
                v = slice[k];
            } else {
                v += w * slice[k];
            }
            first = false;
        });
        Ok(Probe {
            value: v,
            clamped: cell.clamped,
        })
    }

    /// Nonzero multilinear weights `(node, weight)` at `x`; the flag reports clamping.
    pub fn weights(&self, x: &[f64]) -> Result<Probe<Vec<(usize, f64)>>> {
        let cell = self.locate(x)?;
        let mut out = Vec::with_capacity(1 << self.dim());
        self.for_each_corner(&cell, |k, w| out.push((k, w)));
        Ok(Probe {
            value: out,
            clamped: cell.clamped,
        })
    }

    /// Finite-difference gradient at a node: central in the interior, one-sided on the boundary.
    pub fn node_gradient(&self, slice: &[f64], flat: usize, out: &mut [f64]) {
        let idx = self.multi_index(flat);
        let strides = self.strides();
        for i in 0..self.dim() {
            let h = self.spacing(i);
            let k = idx[i];
            let s = strides[i];
            out[i] = if k == 0 {
                (slice[flat + s] - slice[flat]) / h
            } else if k + 1 == self.n[i] {
                (slice[flat] - slice[flat - s]) / h
            } else {
                (slice[flat + s] - slice[flat - s]) / (2.0 * h)
            };
        }
    }

    /// Gradient at an arbitrary point: node gradients interpolated multilinearly.
    pub fn gradient(&self, slice: &[f64], x: &[f64]) -> Result<Probe<Vec<f64>>> {
        self.check_slice(slice)?;
        let cell = self.locate(x)?;
        let d = self.dim();
        let mut g = vec![0.0; d];
        let mut node_g: AxisBuf<f64> = SmallVec::from_elem(0.0, d);
        self.for_each_corner(&cell, |k, w| {
            self.node_gradient(slice, k, &mut node_g);
            for i in 0..d {
                g[i] += w * node_g[i];
            }
        });
        Ok(Probe {
            value: g,
            clamped: cell.clamped,
        })
    }
}

/// Time-stamped scalar fields on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    grid: GridSpec,
    times: Vec<f64>,
    slices: Vec<Vec<f64>>,
}

impl ValueField {
    pub fn new(grid: GridSpec, times: Vec<f64>, slices: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != slices.len() {
            return Err(Error::Format(format!(
                "{} time stamps for {} slices",
                times.len(),
                slices.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Format("time stamps must be strictly increasing".into()));
        }
        for (j, s) in slices.iter().enumerate() {
            if s.len() != grid.len() {
                return Err(Error::Format(format!(
                    "slice {j} has {} values, grid has {} nodes",
                    s.len(),
                    grid.len()
                )));
            }
            if let Some(k) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::Format(format!("slice {j} node {k} is not finite")));
            }
        }
        Ok(Self {
            grid,
            times,
            slices,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }

    pub fn slice(&self, j: usize) -> &[f64] {
        &self.slices[j]
    }

    pub fn first(&self) -> &[f64] {
        &self.slices[0]
    }

    pub fn last(&self) -> &[f64] {
        &self.slices[self.slices.len() - 1]
    }

    pub fn t_first(&self) -> f64 {
        self.times[0]
    }

    pub fn t_last(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn into_parts(self) -> (GridSpec, Vec<f64>, Vec<Vec<f64>>) {
        (self.grid, self.times, self.slices)
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < self.t_first() - TIME_SLACK || t > self.t_last() + TIME_SLACK {
            return Err(Error::Query(format!(
                "time {t} outside stored range [{}, {}]",
                self.t_first(),
                self.t_last()
            )));
        }
        Ok(t.clamp(self.t_first(), self.t_last()))
    }

    /// Index `j` of the stored interval `[t_j, t_{j+1}]` holding `t`; a stamp opens its interval.
    fn interval(&self, t: f64) -> usize {
        let j = self.times.partition_point(|&s| s <= t);
        j.saturating_sub(1).min(self.times.len().saturating_sub(2))
    }

    fn time_weights(&self, t: f64) -> Result<(usize, f64)> {
        let t = self.check_time(t)?;
        if self.times.len() == 1 {
            return Ok((0, 0.0));
        }
        let j = self.interval(t);
        let w = (t - self.times[j]) / (self.times[j + 1] - self.times[j]);
        Ok((j, w))
    }

    /// Value at `(x, t)`, multilinear in space and linear in time.
    pub fn value_at(&self, x: &[f64], t: f64) -> Result<Probe<f64>> {
        let (j, w) = self.time_weights(t)?;
        let a = self.grid.interpolate(&self.slices[j], x)?;
        if w == 0.0 {
            return Ok(a);
        }
        let b = self.grid.interpolate(&self.slices[j + 1], x)?;
        if w == 1.0 {
            return Ok(b);
        }
        Ok(Probe {
            value: (1.0 - w) * a.value + w * b.value,
            clamped: a.clamped,
        })
    }

    /// Spatial gradient at `(x, t)`, linear in time between slices.
    pub fn gradient_at(&self, x: &[f64], t: f64) -> Result<Probe<Vec<f64>>> {
        let (j, w) = self.time_weights(t)?;
        let a = self.grid.gradient(&self.slices[j], x)?;
        if w == 0.0 {
            return Ok(a);
        }
        let b = self.grid.gradient(&self.slices[j + 1], x)?;
        let value = a
            .value
            .iter()
            .zip(&b.value)
            .map(|(ga, gb)| (1.0 - w) * ga + w * gb)
            .collect();
        Ok(Probe {
            value,
            clamped: a.clamped,
        })
    }

    /// Difference quotient of the two stored slices bracketing `t`, each interpolated at `x`.
    pub fn time_derivative(&self, x: &[f64], t: f64) -> Result<Probe<f64>> {
        let t = self.check_time(t)?;
        if self.times.len() < 2 {
            return Err(Error::Query("time derivative needs at least two slices".into()));
        }
        let j = self.interval(t);
        let a = self.grid.interpolate(&self.slices[j], x)?;
        let b = self.grid.interpolate(&self.slices[j + 1], x)?;
        Ok(Probe {
            value: (b.value - a.value) / (self.times[j + 1] - self.times[j]),
            clamped: a.clamped,
        })
    }

    /// Time derivative at node `flat` of the interval holding `t`.
    pub(crate) fn node_time_derivative(&self, flat: usize, t: f64) -> f64 {
        if self.times.len() < 2 {
            return 0.0;
        }
        let j = self.interval(t.clamp(self.t_first(), self.t_last()));
        (self.slices[j + 1][flat] - self.slices[j][flat]) / (self.times[j + 1] - self.times[j])
    }

    /// Node value at time `t`, linear between slices.
    pub(crate) fn node_value(&self, flat: usize, t: f64) -> f64 {
        if self.times.len() == 1 {
            return self.slices[0][flat];
        }
        let t = t.clamp(self.t_first(), self.t_last());
        let j = self.interval(t);
        let w = (t - self.times[j]) / (self.times[j + 1] - self.times[j]);
        if w == 0.0 {
            self.slices[j][flat]
        } else {
            (1.0 - w) * self.slices[j][flat] + w * self.slices[j + 1][flat]
        }
    }

    /// Node gradient at time `t`, linear between slices.
    pub(crate) fn node_gradient(&self, flat: usize, t: f64, out: &mut [f64]) {
        if self.times.len() == 1 {
            self.grid.node_gradient(&self.slices[0], flat, out);
            return;
        }
        let t = t.clamp(self.t_first(), self.t_last());
        let j = self.interval(t);
        let w = (t - self.times[j]) / (self.times[j + 1] - self.times[j]);
        self.grid.node_gradient(&self.slices[j], flat, out);
        if w != 0.0 {
            let mut other: AxisBuf<f64> = SmallVec::from_elem(0.0, out.len());
            self.grid.node_gradient(&self.slices[j + 1], flat, &mut other);
            for (o, b) in out.iter_mut().zip(&other) {
                *o = (1.0 - w) * *o + w * b;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> GridSpec {
        GridSpec::new(vec![-1.0, -1.0], vec![2.0, 2.0], vec![n, n]).unwrap()
    }

    #[test]
    fn rejects_bad_axes() {
        assert!(GridSpec::new(vec![0.0], vec![0.0], vec![3]).is_err());
        assert!(GridSpec::new(vec![0.0], vec![1.0], vec![1]).is_err());
        assert!(GridSpec::new(vec![0.0, 0.0], vec![1.0], vec![3]).is_err());
    }

    #[test]
    fn padded_grid_keeps_box_on_nodes() {
        let g = GridSpec::padded(&[-3.0, -2.0], &[2.0, 2.0], &[70, 70], 4).unwrap();
        let h = g.spacing(0);
        assert!((h - 5.0 / 61.0).abs() < 1e-12);
        assert!((g.coord(0, 4) + 3.0).abs() < 1e-12);
        assert!((g.coord(0, 65) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_field_interpolates_to_constant() {
        let g = unit_grid(7);
        let s = vec![3.0; g.len()];
        let p = g.interpolate(&s, &[0.123, 1.77]).unwrap();
        assert_eq!(p.value, 3.0);
        assert!(!p.clamped);
    }

    #[test]
    fn affine_field_is_exact() {
        let g = unit_grid(5);
        let s = g.sample(|x| x[0] + 2.0 * x[1]);
        let p = g.interpolate(&s, &[0.3, 0.7]).unwrap();
        assert!((p.value - 1.7).abs() < 1e-12);
        let grad = g.gradient(&s, &[0.3, 0.7]).unwrap().value;
        assert!((grad[0] - 1.0).abs() < 1e-12 && (grad[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn node_queries_are_bitwise() {
        let g = unit_grid(9);
        let s = g.sample(|x| (x[0] * 1.3).sin() + x[1].powi(3));
        for k in [0, 5, 40, 80] {
            let x = g.node(k);
            assert_eq!(g.interpolate(&s, &x).unwrap().value.to_bits(), s[k].to_bits());
        }
    }

    #[test]
    fn central_difference_of_quadratic() {
        // h = 0.1 on [0, 2]
        let g = GridSpec::new(vec![0.0, 0.0], vec![2.0, 2.0], vec![21, 21]).unwrap();
        let s = g.sample(|x| x[0] * x[0]);
        let grad = g.gradient(&s, &[1.0, 0.5]).unwrap().value;
        assert!((grad[0] - 2.0).abs() < 1e-12);
        assert!(grad[1].abs() < 1e-12);
    }

    #[test]
    fn constant_field_has_zero_gradient() {
        let g = unit_grid(6);
        let s = vec![-4.5; g.len()];
        let grad = g.gradient(&s, &[0.1, -0.9]).unwrap().value;
        assert_eq!(grad, vec![0.0, 0.0]);
    }

    #[test]
    fn outside_points_clamp_and_flag() {
        let g = unit_grid(4);
        let s = g.sample(|x| x[0]);
        let p = g.interpolate(&s, &[5.0, 0.0]).unwrap();
        assert!(p.clamped);
        assert!((p.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_point_is_rejected() {
        let g = unit_grid(4);
        let s = vec![0.0; g.len()];
        assert!(matches!(g.interpolate(&s, &[f64::NAN, 0.0]), Err(Error::Query(_))));
        assert!(matches!(g.gradient(&s, &[0.0, f64::INFINITY]), Err(Error::Query(_))));
    }

    fn ladder(g: &GridSpec, n: usize, dt: f64, f: impl Fn(f64) -> f64) -> ValueField {
        let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let slices = times.iter().map(|&t| vec![f(t); g.len()]).collect();
        ValueField::new(g.clone(), times, slices).unwrap()
    }

    #[test]
    fn time_derivative_cases() {
        let g = unit_grid(3);
        let flat = ladder(&g, 5, 0.01, |_| 1.5);
        assert_eq!(flat.time_derivative(&[0.2, 0.2], 0.025).unwrap().value, 0.0);

        let lin = ladder(&g, 21, 0.01, |t| t);
        for t in [0.0, 0.037, 0.2] {
            let d = lin.time_derivative(&[0.0, 1.0], t).unwrap().value;
            assert!((d - 1.0).abs() < 1e-9, "t={t}: {d}");
        }

        let times = vec![0.10, 0.11];
        let slices = times.iter().map(|&t: &f64| vec![t * t; g.len()]).collect();
        let quad = ValueField::new(g.clone(), times, slices).unwrap();
        let d = quad.time_derivative(&[0.5, 0.5], 0.105).unwrap().value;
        assert!((d - 0.21).abs() < 1e-12);
    }

    #[test]
    fn time_outside_range_is_an_error() {
        let g = unit_grid(3);
        let f = ladder(&g, 3, 0.5, |t| t);
        assert!(matches!(f.time_derivative(&[0.0, 0.0], 1.5), Err(Error::Query(_))));
        assert!(matches!(f.value_at(&[0.0, 0.0], -0.1), Err(Error::Query(_))));
    }

    #[test]
    fn field_rejects_non_finite_values() {
        let g = unit_grid(2);
        let mut s = vec![0.0; g.len()];
        s[1] = f64::NAN;
        assert!(ValueField::new(g, vec![0.0], vec![s]).is_err());
    }
}
