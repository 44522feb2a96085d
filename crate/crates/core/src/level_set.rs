//! Zero level set of a 2-D node field as polylines (marching squares).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

type Point = [f64; 2];

/// Crossing of the edge between nodes `a` and `b`, keyed by the unordered node pair.
fn crossing(grid: &GridSpec, slice: &[f64], a: usize, b: usize) -> ((usize, usize), Point) {
    let (pa, pb) = (grid.node(a), grid.node(b));
    let (va, vb) = (slice[a], slice[b]);
    let s = if va == vb { 0.5 } else { va / (va - vb) };
    let key = (a.min(b), a.max(b));
    (key, [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])])
}

/// Polylines tracing `slice = 0` on a 2-D grid. Nodes with value exactly zero count as inside
/// (nonnegative). Closed curves repeat their first point at the end.
pub fn zero_level_polylines(grid: &GridSpec, slice: &[f64]) -> Result<Vec<Vec<Point>>> {
    if grid.dim() != 2 {
        return Err(Error::Contract("level sets are traced on 2-D grids only".into()));
    }
    if slice.len() != grid.len() {
        return Err(Error::Contract("slice does not match the grid".into()));
    }
    let (n0, n1) = (grid.n()[0], grid.n()[1]);
    let idx = |i: usize, j: usize| i * n1 + j;
    let mut points: HashMap<(usize, usize), Point> = HashMap::new();
    let mut segments: Vec<[(usize, usize); 2]> = Vec::new();
    for i in 0..n0 - 1 {
        for j in 0..n1 - 1 {
            // corners counter-clockwise in (x1, x2)
            let c = [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)];
            let inside: Vec<bool> = c.iter().map(|&k| slice[k] >= 0.0).collect();
            let edges: Vec<(usize, usize)> = (0..4)
                .filter(|&e| inside[e] != inside[(e + 1) % 4])
                .map(|e| (c[e], c[(e + 1) % 4]))
                .collect();
            let mut keys = Vec::with_capacity(4);
            for &(a, b) in &edges {
                let (key, p) = crossing(grid, slice, a, b);
                points.insert(key, p);
                keys.push(key);
            }
            match keys.len() {
                2 => segments.push([keys[0], keys[1]]),
                4 => {
                    // saddle: split by the sign of the cell centre
                    let centre: f64 = c.iter().map(|&k| slice[k]).sum::<f64>() / 4.0;
                    if (centre >= 0.0) == inside[0] {
                        segments.push([keys[0], keys[1]]);
                        segments.push([keys[2], keys[3]]);
                    } else {
                        segments.push([keys[0], keys[3]]);
                        segments.push([keys[1], keys[2]]);
                    }
                }
                _ => {}
            }
        }
    }

    let mut adjacency: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (s, seg) in segments.iter().enumerate() {
        for key in seg {
            adjacency.entry(*key).or_default().push(s);
        }
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    // open chains first (start at endpoints of degree one), then the closed loops
    let mut starts: Vec<usize> = (0..segments.len())
        .filter(|&s| segments[s].iter().any(|k| adjacency[k].len() == 1))
        .collect();
    starts.extend(0..segments.len());
    for s0 in starts {
        if used[s0] {
            continue;
        }
        let seg = segments[s0];
        let first = if adjacency[&seg[0]].len() != 1 && adjacency[&seg[1]].len() == 1 {
            seg[1]
        } else {
            seg[0]
        };
        let mut chain = vec![first];
        let mut current = s0;
        let mut at = first;
        loop {
            used[current] = true;
            let seg = segments[current];
            let next = if seg[0] == at { seg[1] } else { seg[0] };
            chain.push(next);
            at = next;
            match adjacency[&at].iter().find(|&&s| !used[s]) {
                Some(&s) => current = s,
                None => break,
            }
        }
        lines.push(chain.iter().map(|k| points[k]).collect());
    }
    Ok(lines)
}
