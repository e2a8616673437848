//! Random stimulus for the corpus programs and plain-software references for
//! what they compute.

use hir_core::sim::SimInputs;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub struct Case {
    pub file: &'static str,
    pub top: &'static str,
    pub inputs: SimInputs,
    /// Expected final contents of output tensors.
    pub expect: BTreeMap<String, Vec<i64>>,
    pub expect_results: Vec<i64>,
}

pub const KERNELS: [&str; 5] = ["transpose", "stencil", "histogram", "gemm", "conv"];

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn words(r: &mut ChaCha8Rng, n: usize) -> Vec<i32> {
    (0..n).map(|_| r.gen::<i32>()).collect()
}

fn wide(v: &[i32]) -> Vec<i64> {
    v.iter().map(|x| *x as i64).collect()
}

fn tensors(inputs: &mut SimInputs, names: &[&str], data: &[i32]) {
    for n in names {
        *inputs = std::mem::take(inputs).tensor(n, &wide(data));
    }
}

/// Three-tap filter over `x`, wrapping on 32 bits.
pub fn fir3(x: &[i32], w: &[i32], n: usize) -> Vec<i32> {
    (0..n)
        .map(|i| {
            w[0].wrapping_mul(x[i]).wrapping_add(w[1].wrapping_mul(x[i + 1])).wrapping_add(w[2].wrapping_mul(x[i + 2]))
        })
        .collect()
}

pub fn transpose(seed: u64) -> Case {
    let mut r = rng(seed);
    let a = words(&mut r, 64);
    let mut b = vec![0; 64];
    for i in 0..8 {
        for j in 0..8 {
            b[j * 8 + i] = a[i * 8 + j];
        }
    }
    let inputs = SimInputs::default().tensor("A", &wide(&a));
    Case { file: "transpose.hir", top: "transpose", inputs, expect: [("B".into(), wide(&b))].into(), expect_results: vec![] }
}

pub fn stencil(seed: u64) -> Case {
    let mut r = rng(seed);
    let x = words(&mut r, 66);
    let w = words(&mut r, 3);
    let mut inputs = SimInputs::default();
    tensors(&mut inputs, &["X0", "X1", "X2"], &x);
    inputs = inputs.tensor("W", &wide(&w));
    let y = fir3(&x, &w, 64);
    Case { file: "stencil.hir", top: "stencil", inputs, expect: [("Y".into(), wide(&y))].into(), expect_results: vec![] }
}

pub fn histogram(seed: u64) -> Case {
    let mut r = rng(seed);
    let x = words(&mut r, 64);
    let mut h = vec![0i64; 16];
    for v in &x {
        h[(v & 15) as usize] += 1;
    }
    let inputs = SimInputs::default().tensor("X", &wide(&x));
    Case { file: "histogram.hir", top: "histogram", inputs, expect: [("H".into(), h)].into(), expect_results: vec![] }
}

pub fn gemm(seed: u64) -> Case {
    let mut r = rng(seed);
    let a = words(&mut r, 256);
    let b = words(&mut r, 256);
    let mut c = vec![0i32; 256];
    for i in 0..16 {
        for j in 0..16 {
            let mut s = 0i32;
            for k in 0..16 {
                s = s.wrapping_add(a[i * 16 + k].wrapping_mul(b[k * 16 + j]));
            }
            c[i * 16 + j] = s;
        }
    }
    let inputs = SimInputs::default().tensor("A", &wide(&a)).tensor("B", &wide(&b));
    Case { file: "gemm.hir", top: "gemm", inputs, expect: [("C".into(), wide(&c))].into(), expect_results: vec![] }
}

pub fn conv(seed: u64) -> Case {
    let mut r = rng(seed);
    let x = words(&mut r, 64);
    let k = words(&mut r, 9);
    let mut y = vec![0i32; 36];
    for row in 0..6 {
        for col in 0..6 {
            let mut s = 0i32;
            for a in 0..3 {
                for b in 0..3 {
                    s = s.wrapping_add(x[(row + a) * 8 + col + b].wrapping_mul(k[a * 3 + b]));
                }
            }
            y[row * 6 + col] = s;
        }
    }
    let mut inputs = SimInputs::default();
    tensors(&mut inputs, &["X0", "X1", "X2"], &x);
    inputs = inputs.tensor("K", &wide(&k));
    Case { file: "conv.hir", top: "conv", inputs, expect: [("Y".into(), wide(&y))].into(), expect_results: vec![] }
}

/// Two filters in series; `top` is `task_overlap` or `task_seq`.
pub fn task(top: &'static str, seed: u64) -> Case {
    let mut r = rng(seed);
    let x = words(&mut r, 66);
    let w = words(&mut r, 3);
    let mut inputs = SimInputs::default();
    tensors(&mut inputs, &["X0", "X1", "X2"], &x);
    inputs = inputs.tensor("W", &wide(&w));
    let t = fir3(&x, &w, 64);
    let y = fir3(&t, &w, 62);
    Case { file: "task_parallel.hir", top, inputs, expect: [("Y".into(), wide(&y))].into(), expect_results: vec![] }
}

pub fn delays(seed: u64) -> Case {
    let x = rng(seed).gen::<i32>() as i64;
    let inputs = SimInputs::default().scalar("x", x);
    Case { file: "delays.hir", top: "delays", inputs, expect: BTreeMap::new(), expect_results: vec![x, x] }
}

pub fn narrowing(_seed: u64) -> Case {
    let m: Vec<i64> = (0..256).collect();
    Case { file: "narrowing.hir", top: "narrowing", inputs: SimInputs::default(), expect: [("M".into(), m)].into(), expect_results: vec![] }
}

pub fn scale(seed: u64) -> Case {
    let a = words(&mut rng(seed), 16);
    let b: Vec<i64> = a.iter().enumerate().map(|(i, v)| v.wrapping_mul(2).wrapping_add(4 * i as i32) as i64).collect();
    let inputs = SimInputs::default().tensor("A", &wide(&a));
    Case { file: "scale.hir", top: "scale", inputs, expect: [("B".into(), b)].into(), expect_results: vec![] }
}

pub fn kernel(name: &str, seed: u64) -> Case {
    match name {
        "transpose" => transpose(seed),
        "stencil" => stencil(seed),
        "histogram" => histogram(seed),
        "gemm" => gemm(seed),
        "conv" => conv(seed),
        "task_overlap" | "task_seq" => task(if name == "task_overlap" { "task_overlap" } else { "task_seq" }, seed),
        "delays" => delays(seed),
        "narrowing" => narrowing(seed),
        "scale" => scale(seed),
        _ => panic!("no stimulus for {name}"),
    }
}

/// Every simulatable top in the clean corpus.
pub const ALL_TOPS: [&str; 10] =
    ["transpose", "stencil", "histogram", "gemm", "conv", "task_overlap", "task_seq", "delays", "narrowing", "scale"];

/// Output mismatches between a run and a case's reference, as readable lines.
pub fn mismatches(case: &Case, r: &hir_core::sim::SimResult) -> Vec<String> {
    let mut out = Vec::new();
    for (name, want) in &case.expect {
        let got = &r.tensors[name];
        for (i, (g, w)) in got.iter().zip(want).enumerate() {
            if *g != Some(*w) {
                out.push(format!("{}: {name}[{i}] = {g:?}, expected {w}", case.top));
            }
        }
    }
    let want: Vec<Option<i64>> = case.expect_results.iter().map(|v| Some(*v)).collect();
    if r.results != want {
        out.push(format!("{}: results {:?}, expected {:?}", case.top, r.results, want));
    }
    out
}
