//! Shared inputs for the benchmarks.

use hir_core::sim::SimInputs;
use hir_core::{parse, Module};
use std::path::PathBuf;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn source(name: &str) -> String {
    std::fs::read_to_string(corpus_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn load(name: &str) -> Module {
    parse(&source(name), name).unwrap_or_else(|d| panic!("{name}: {d:?}"))
}

fn ramp(n: usize, mul: i64, add: i64) -> Vec<i64> {
    (0..n as i64).map(|i| i * mul + add).collect()
}

/// Deterministic stimulus for a corpus kernel.
pub fn inputs(top: &str) -> SimInputs {
    let s = SimInputs::default();
    match top {
        "transpose" => s.tensor("A", &ramp(64, 3, -5)),
        "stencil" => {
            let x = ramp(66, 7, 1);
            s.tensor("X0", &x).tensor("X1", &x).tensor("X2", &x).tensor("W", &[2, -1, 3])
        }
        "histogram" => s.tensor("X", &ramp(64, 13, 2)),
        "gemm" => s.tensor("A", &ramp(256, 1, 0)).tensor("B", &ramp(256, -1, 9)),
        "conv" => {
            let x = ramp(64, 5, -3);
            s.tensor("X0", &x).tensor("X1", &x).tensor("X2", &x).tensor("K", &ramp(9, 1, -4))
        }
        _ => s,
    }
}

/// The five corpus kernels, as `(file, top)`.
pub const KERNELS: [(&str, &str); 5] = [
    ("transpose.hir", "transpose"),
    ("stencil.hir", "stencil"),
    ("histogram.hir", "histogram"),
    ("gemm.hir", "gemm"),
    ("conv.hir", "conv"),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stimulus_covers_every_kernel() {
        for (file, top) in KERNELS {
            let r = hir_core::sim::run(&load(file), top, &inputs(top)).unwrap();
            assert!(r.ub.is_empty() && r.timing_faults.is_empty(), "{top}");
        }
    }
}
