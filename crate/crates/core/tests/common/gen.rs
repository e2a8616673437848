//! Random well-scheduled programs: a pipelined loop over `A` into `B` and a
//! straight-line chain on `%x` stored to `R`.

use hir_core::sim::SimInputs;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::fmt::Write as _;

pub struct Program {
    pub src: String,
    pub n: usize,
    pub width: u32,
    consts: HashMap<String, i64>,
    scalar: Vec<(String, Def)>,
    body: Vec<(String, Def)>,
    scalar_out: String,
    body_out: String,
}

#[derive(Clone)]
enum Def {
    Bin(&'static str, String, String),
    Copy(String),
    /// `i * c`, truncated to the element width.
    ScaledIv(String),
    Read,
}

struct Gen {
    r: ChaCha8Rng,
    out: String,
    next: usize,
    w: u32,
    defs: Vec<(String, Def)>,
}

impl Gen {
    fn fresh(&mut self, stem: &str) -> String {
        self.next += 1;
        format!("%{stem}{}", self.next)
    }

    fn line(&mut self, indent: usize, s: &str) {
        writeln!(self.out, "{}{s}", "  ".repeat(indent)).unwrap();
    }

    /// A few add/sub/mult ops over `pool` at `at`, appended to it.
    fn arith(&mut self, indent: usize, pool: &mut Vec<String>, consts: &[String], at: &str) {
        let w = self.w;
        for _ in 0..self.r.gen_range(1..=3) {
            let op = *["add", "sub", "mult"].choose(&mut self.r).unwrap();
            let a = pool.choose(&mut self.r).unwrap().clone();
            let b = if self.r.gen_bool(0.5) { pool.choose(&mut self.r).unwrap().clone() } else { consts.choose(&mut self.r).unwrap().clone() };
            let v = self.fresh("v");
            self.line(indent, &format!("{v} = {op} {a}, {b} at {at} : i{w}"));
            self.defs.push((v.clone(), Def::Bin(op, a, b)));
            pool.push(v);
        }
    }
}

fn at(root: &str, off: u64) -> String {
    if off == 0 {
        root.to_string()
    } else {
        format!("{root} offset {off}")
    }
}

pub fn program(seed: u64) -> Program {
    let mut g = Gen { r: ChaCha8Rng::seed_from_u64(seed), out: String::new(), next: 0, w: 0, defs: Vec::new() };
    let w = *[8u32, 16, 32].choose(&mut g.r).unwrap();
    g.w = w;
    let n: usize = g.r.gen_range(1..=12);
    let storage = if g.r.gen_bool(0.3) { ", reg" } else { "" };
    if g.r.gen_bool(0.5) {
        writeln!(g.out, "// generated from seed {seed}").unwrap();
    }
    writeln!(
        g.out,
        "def @g(%A: memref<{n}xi{w}, [packed], r{storage}>, %B: memref<{n}xi{w}, [packed], w>, \
         %R: memref<1xi{w}, [packed], w>, %x: i{w} delay 0) at %t {{"
    )
    .unwrap();
    g.line(1, "%c0 = constant 0");
    g.line(1, "%c1 = constant 1");
    let mut consts = vec!["%c1".to_string()];
    let mut values = HashMap::from([("%c1".to_string(), 1)]);
    for k in 0..g.r.gen_range(1..=3) {
        let v: i64 = g.r.gen_range(-9..=9);
        g.line(1, &format!("%k{k} = constant {v}"));
        consts.push(format!("%k{k}"));
        values.insert(format!("%k{k}"), v);
    }

    // Scalar chain, starting at %t.
    let mut pool = vec!["%x".to_string()];
    let mut off = 0;
    for _ in 0..g.r.gen_range(1..=3) {
        g.arith(1, &mut pool, &consts, &at("%t", off));
        let src = pool.last().unwrap().clone();
        let by = g.r.gen_range(1..=3);
        if g.r.gen_bool(0.5) {
            // A second, shorter tap on the same value.
            let d = g.fresh("d");
            let short = g.r.gen_range(1..=by);
            g.line(1, &format!("{d} = delay {src} by {short} at {} : i{w}", at("%t", off)));
        }
        let d = g.fresh("d");
        g.line(1, &format!("{d} = delay {src} by {by} at {} : i{w}", at("%t", off)));
        g.defs.push((d.clone(), Def::Copy(src)));
        off += by;
        pool = vec![d];
    }
    let last = pool.last().unwrap().clone();
    g.line(1, &format!("mem_write {last} to %R[%c0] at {}", at("%t", off)));
    let scalar = std::mem::take(&mut g.defs);

    // Loop, starting after the scalar chain.
    let (start, bound) = if g.r.gen_bool(0.5) {
        let split = g.r.gen_range(0..=n);
        g.line(1, &format!("%ts = time %t offset {}", off + 1));
        g.line(1, &format!("%na = constant {split}"));
        g.line(1, &format!("%nb = constant {}", n - split));
        g.line(1, &format!("%n = add %na, %nb at %ts : i32"));
        ("%ts".to_string(), "%n".to_string())
    } else {
        g.line(1, &format!("%n = constant {n}"));
        (at("%t", off + 1), "%n".to_string())
    };
    let depth: u64 = g.r.gen_range(1..=2);
    let ii: u64 = g.r.gen_range(1..=3);
    g.line(1, &format!("%tf = for %i : i32 = %c0 to {bound} step %c1 iter_time %ti at {start} {{"));
    // Register reads return in the same cycle, so issue them a cycle later.
    let (idx, read_at) = if storage.is_empty() {
        ("%i", "%ti")
    } else {
        g.line(2, "%ir = delay %i by 1 at %ti : i32");
        ("%ir", "%ti offset 1")
    };
    g.line(2, &format!("%a = mem_read %A[{idx}] at {read_at} : i{w}"));
    g.defs.push(("%a".into(), Def::Read));
    let mut pool = vec!["%a".to_string()];
    if g.r.gen_bool(0.4) {
        g.line(2, &format!("%a2 = mem_read %A[{idx}] at {read_at} : i{w}"));
        g.defs.push(("%a2".into(), Def::Read));
        pool.push("%a2".into());
    }
    if g.r.gen_bool(0.5) {
        let c = consts.choose(&mut g.r).unwrap().clone();
        g.line(2, &format!("%m = mult %i, {c} at %ti : i32"));
        g.line(2, "%m1 = delay %m by 1 at %ti : i32");
        g.line(2, &format!("%mw = bit_slice %m1 [{} : 0] at %ti offset 1 : i{w}", w - 1));
        g.defs.push(("%mw".into(), Def::ScaledIv(c)));
        pool.push("%mw".into());
    }
    g.arith(2, &mut pool, &consts, "%ti offset 1");
    let mut v = pool.last().unwrap().clone();
    if depth == 2 {
        let d = g.fresh("d");
        g.line(2, &format!("{d} = delay {v} by 1 at %ti offset 1 : i{w}"));
        g.defs.push((d.clone(), Def::Copy(v.clone())));
        let mut p2 = vec![d];
        g.arith(2, &mut p2, &consts, "%ti offset 2");
        v = p2.last().unwrap().clone();
    }
    g.line(2, &format!("%id = delay %i by {depth} at %ti : i32"));
    g.line(2, &format!("mem_write {v} to %B[%id] at {}", at("%ti", depth)));
    g.line(2, &format!("yield at {}", at("%ti", ii)));
    g.line(1, "}");
    g.line(1, &format!("return at %tf offset {depth}"));
    g.out.push_str("}\n");
    Program { src: g.out, n, width: w, consts: values, scalar, body: g.defs, scalar_out: last, body_out: v }
}

impl Program {
    fn wrap(&self, v: i64) -> i64 {
        let sh = 64 - self.width;
        (v << sh) >> sh
    }

    fn eval(&self, defs: &[(String, Def)], env: &mut HashMap<String, i64>, iv: i64, a: i64) {
        for (name, d) in defs {
            let v = match d {
                Def::Bin(op, x, y) => {
                    let (x, y) = (env[x], env[y]);
                    match *op {
                        "add" => x.wrapping_add(y),
                        "sub" => x.wrapping_sub(y),
                        _ => x.wrapping_mul(y),
                    }
                }
                Def::Copy(x) => env[x],
                Def::ScaledIv(c) => iv.wrapping_mul(env[c]),
                Def::Read => a,
            };
            env.insert(name.clone(), self.wrap(v));
        }
    }

    /// Expected `(B, R[0])` for input tensor `a` and scalar `x`.
    pub fn reference(&self, a: &[i64], x: i64) -> (Vec<i64>, i64) {
        let mut env = self.consts.clone();
        env.insert("%x".into(), x);
        self.eval(&self.scalar, &mut env, 0, 0);
        let r = env[&self.scalar_out];
        let b = (0..self.n)
            .map(|i| {
                let mut env = self.consts.clone();
                self.eval(&self.body, &mut env, i as i64, a[i]);
                env[&self.body_out]
            })
            .collect();
        (b, r)
    }
}

pub fn inputs(p: &Program, seed: u64) -> SimInputs {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let lim = 1i64 << (p.width - 1);
    let a: Vec<i64> = (0..p.n).map(|_| r.gen_range(-lim..lim)).collect();
    SimInputs::default().tensor("A", &a).scalar("x", r.gen_range(-lim..lim))
}
