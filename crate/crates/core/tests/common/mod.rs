#![allow(dead_code)]

use std::sync::OnceLock;

use cosafe::{Benchmark, ExperimentConfig, Fields, GridSpec};

/// The default 70x70 benchmark with both value functions, solved once per test binary.
pub fn solved() -> &'static (Benchmark, Fields) {
    static CELL: OnceLock<(Benchmark, Fields)> = OnceLock::new();
    CELL.get_or_init(|| {
        let bench = Benchmark::new(ExperimentConfig::default()).expect("default config is valid");
        let fields = bench.solve().expect("benchmark solves");
        (bench, fields)
    })
}

/// Coarse grid over the benchmark arena, `nodes` per axis inside the box plus one padding cell.
pub fn coarse_grid(bench: &Benchmark, nodes: usize) -> GridSpec {
    let b = &bench.config.benchmark;
    GridSpec::padded(&b.arena_lo, &b.arena_hi, &[nodes, nodes], bench.config.oracle.coarse_pad)
        .expect("coarse grid")
}

/// Benchmark rebuilt on a coarse grid.
pub fn coarse_benchmark(nodes: usize) -> Benchmark {
    let mut cfg = ExperimentConfig::default();
    cfg.grid.nodes = [nodes, nodes];
    cfg.grid.pad = cfg.oracle.coarse_pad;
    Benchmark::new(cfg).expect("coarse config is valid")
}

pub fn max_abs_diff(a: &[f64], b: &[f64], keep: impl Fn(usize) -> bool) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .filter(|(k, _)| keep(*k))
        .map(|(_, (x, y))| (x - y).abs())
        .fold(0.0, f64::max)
}
