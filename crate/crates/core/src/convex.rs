//! Closed-form kernels for linear objectives and Euclidean projections on
//! balls, boxes and their intersections with a hyperplane or a slab
//! `{u : lo <= a.u <= hi}`.

use crate::error::{Error, Result};

/// Slack accepted on feasibility tests of the hyperplane offset.
pub const FEAS_TOL: f64 = 1e-9;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimise `c.u` subject to `|u| <= radius` and `a.u = b`.
///
/// The feasible set is a disc centred at `(b/|a|^2) a` in the plane orthogonal to `a`;
/// the minimiser steps from that centre against the tangential part of `c`. A purely
/// normal `c` makes every feasible point optimal and the centre (minimum norm) is returned.
pub fn min_linear_on_ball_hyperplane(c: &[f64], a: &[f64], b: f64, radius: f64) -> Result<Vec<f64>> {
    let aa = dot(a, a);
    if aa <= 0.0 || !aa.is_finite() {
        return Err(Error::Contract("hyperplane normal must be non-zero".into()));
    }
    let an = aa.sqrt();
    if b.abs() > radius * an + FEAS_TOL {
        return Err(Error::Infeasible(format!(
            "plane offset {b} beyond ball support {}",
            radius * an
        )));
    }
    let s = b / aa;
    let center: Vec<f64> = a.iter().map(|ai| s * ai).collect();
    let disc = (radius * radius - b * b / aa).max(0.0).sqrt();
    let ca = dot(c, a) / aa;
    let c_perp: Vec<f64> = c.iter().zip(a).map(|(ci, ai)| ci - ca * ai).collect();
    let cp = norm(&c_perp);
    // tangential part below rounding noise of c
    if cp <= 1e-14 * norm(c).max(f64::MIN_POSITIVE) || disc == 0.0 {
        return Ok(center);
    }
    Ok(center
        .iter()
        .zip(&c_perp)
        .map(|(m, q)| m - disc * q / cp)
        .collect())
}

/// Euclidean projection of `y` onto `{|u| <= radius, a.u = b}`.
pub fn project_ball_hyperplane(y: &[f64], a: &[f64], b: f64, radius: f64) -> Result<Vec<f64>> {
    let aa = dot(a, a);
    if aa <= 0.0 {
        return Err(Error::Contract("hyperplane normal must be non-zero".into()));
    }
    if b.abs() > radius * aa.sqrt() + FEAS_TOL {
        return Err(Error::Infeasible(format!("plane offset {b} misses the ball")));
    }
    let s = b / aa;
    let disc = (radius * radius - b * b / aa).max(0.0).sqrt();
    let shift = (dot(a, y) - b) / aa;
    // in-plane offset of the plane projection from the disc centre
    let w: Vec<f64> = y
        .iter()
        .zip(a)
        .map(|(yi, ai)| yi - shift * ai - s * ai)
        .collect();
    let wn = norm(&w);
    let scale = if wn > disc { disc / wn } else { 1.0 };
    Ok(a.iter().zip(&w).map(|(ai, wi)| s * ai + scale * wi).collect())
}

pub fn project_ball(y: &[f64], radius: f64) -> Vec<f64> {
    let n = norm(y);
    if n <= radius {
        y.to_vec()
    } else {
        y.iter().map(|v| v * radius / n).collect()
    }
}

/// Euclidean projection of `y` onto `{|u| <= radius, lo <= a.u <= hi}`.
///
/// The minimiser has either only the ball constraint active or one of the two
/// planes active, so the nearest feasible candidate among those is exact.
pub fn project_ball_slab(y: &[f64], a: &[f64], lo: f64, hi: f64, radius: f64) -> Result<Vec<f64>> {
    let p = project_ball(y, radius);
    let ap = dot(a, &p);
    if ap >= lo - FEAS_TOL && ap <= hi + FEAS_TOL {
        return Ok(p);
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for b in [lo, hi] {
        if let Ok(q) = project_ball_hyperplane(y, a, b, radius) {
            let d: f64 = q.iter().zip(y).map(|(qi, yi)| (qi - yi).powi(2)).sum();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, q));
            }
        }
    }
    best.map(|(_, q)| q)
        .ok_or_else(|| Error::Infeasible("slab misses the ball".into()))
}

/// Minimise `c.u` over the box `[blo, bhi]` intersected with `a.u = b` (a fractional knapsack).
pub fn min_linear_on_box_hyperplane(
    c: &[f64],
    a: &[f64],
    b: f64,
    blo: &[f64],
    bhi: &[f64],
) -> Result<Vec<f64>> {
    let mut u = box_argmin(c, blo, bhi);
    let gap = b - dot(a, &u);
    if gap.abs() <= FEAS_TOL {
        return Ok(u);
    }
    let dir = gap.signum();
    // (price per unit of a.u moved, coordinate, move sign, capacity in a.u units)
    let mut moves: Vec<(f64, usize, f64, f64)> = Vec::new();
    for j in 0..u.len() {
        if a[j] == 0.0 {
            continue;
        }
        let step = dir * a[j].signum();
        let room = if step > 0.0 { bhi[j] - u[j] } else { u[j] - blo[j] };
        if room > 0.0 {
            moves.push((c[j] * step / a[j].abs(), j, step, a[j].abs() * room));
        }
    }
    moves.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut left = gap.abs();
    for (_, j, step, cap) in moves {
        let take = left.min(cap);
        u[j] += step * take / a[j].abs();
        left -= take;
        if left <= 0.0 {
            break;
        }
    }
    if left > FEAS_TOL {
        return Err(Error::Infeasible(format!("plane a.u = {b} misses the box")));
    }
    Ok(u)
}

/// Bang-bang minimiser of `c.u` over a box; flat coordinates take the smallest-magnitude value.
pub fn box_argmin(c: &[f64], blo: &[f64], bhi: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .map(|(j, &cj)| {
            if cj > 0.0 {
                blo[j]
            } else if cj < 0.0 {
                bhi[j]
            } else {
                0.0f64.clamp(blo[j], bhi[j])
            }
        })
        .collect()
}

/// Euclidean projection of `y` onto the box intersected with the slab, by bisection on the
/// multiplier of the violated plane.
pub fn project_box_slab(
    y: &[f64],
    a: &[f64],
    lo: f64,
    hi: f64,
    blo: &[f64],
    bhi: &[f64],
) -> Result<Vec<f64>> {
    let at = |lam: f64| -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(j, &v)| (v - lam * a[j]).clamp(blo[j], bhi[j]))
            .collect()
    };
    let p = at(0.0);
    let ap = dot(a, &p);
    if ap >= lo - FEAS_TOL && ap <= hi + FEAS_TOL {
        return Ok(p);
    }
    // a.u(lam) is non-increasing in lam
    let (target, sign) = if ap > hi { (hi, 1.0) } else { (lo, -1.0) };
    let mut outer = 1.0;
    let mut tries = 0;
    while sign * (dot(a, &at(sign * outer)) - target) > 0.0 {
        outer *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(Error::Infeasible("slab misses the box".into()));
        }
    }
    let (mut l, mut r) = (0.0, outer);
    for _ in 0..200 {
        let m = 0.5 * (l + r);
        if sign * (dot(a, &at(sign * m)) - target) > 0.0 {
            l = m;
        } else {
            r = m;
        }
    }
    Ok(at(sign * r))
}

/// Forward-difference gradient of `f` at `x`.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], fx: f64, eps: f64, out: &mut [f64]) {
    let mut y = x.to_vec();
    for i in 0..x.len() {
        let step = eps * (1.0 + x[i].abs());
        y[i] = x[i] + step;
        out[i] = (f(&y) - fx) / step;
        y[i] = x[i];
    }
}

/// Projected gradient descent with forward-difference gradients and Armijo backtracking.
///
/// Runs at most `iterations` accepted steps and stops early once a step moves the iterate by
/// less than `step_tol`. `project` must map onto a convex set containing the iterates.
pub fn projected_gradient<F, P>(f: F, project: P, x0: &[f64], iterations: usize, step_tol: f64, fd_eps: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
    P: Fn(&mut [f64]),
{
    let mut x = x0.to_vec();
    project(&mut x);
    if iterations == 0 {
        return x;
    }
    let mut fx = f(&x);
    let mut g = vec![0.0; x.len()];
    let mut step = 1.0;
    for _ in 0..iterations {
        fd_gradient(&f, &x, fx, fd_eps, &mut g);
        let mut accepted = None;
        for _ in 0..40 {
            let mut y: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            project(&mut y);
            let fy = f(&y);
            let d: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
            if fy <= fx + dot(&g, &d) + 0.5 * dot(&d, &d) / step {
                accepted = Some((y, fy, norm(&d)));
                break;
            }
            step *= 0.5;
        }
        let Some((y, fy, moved)) = accepted else { break };
        x = y;
        fx = fy;
        step = (2.0 * step).min(1e3);
        if moved < step_tol {
            break;
        }
    }
    x
}
