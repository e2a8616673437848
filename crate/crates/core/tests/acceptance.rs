//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero if any of them fails.

mod common;

use common::gen;
use common::kernels::{self, mismatches, ALL_TOPS, KERNELS};
use hir_core::backend::{lower, LowerOptions};
use hir_core::frontend::{parse, print, structurally_equal};
use hir_core::passes::{run_pipeline, DEFAULT_PIPELINE};
use hir_core::sim::{run, SimInputs};
use hir_core::verify::verify_module;
use hir_core::Module;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

enum Outcome {
    Pass(String),
    Skip(String),
}

type Check = fn() -> Result<Outcome, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn verify_errors(m: &Module) -> Vec<String> {
    verify_module(m).into_iter().filter(|d| d.is_error()).map(|d| d.to_string()).collect()
}

/// The one error in a corpus program: its class, its location and the
/// statement it sits in.
fn single_error(file: &str) -> Result<(String, String, String, Duration), String> {
    let src = std::fs::read_to_string(common::corpus_dir().join(file)).unwrap();
    let t = Instant::now();
    let m = parse(&src, file).map_err(|d| format!("{file} does not parse: {d:?}"))?;
    let errs: Vec<_> = verify_module(&m).into_iter().filter(|d| d.is_error()).collect();
    let took = t.elapsed();
    ensure(errs.len() == 1, || format!("{file}: expected one error, got {}", errs.len()))?;
    let line = src.lines().nth(errs[0].span.line as usize - 1).unwrap_or("").trim().to_string();
    Ok((errs[0].class.as_str().to_string(), errs[0].span.to_string(), line, took))
}

fn diagnostics() -> Result<Outcome, String> {
    // Each error points at the offending operand: %i in the write, %m in the add.
    let (class, loc, stmt, t1) = single_error("err_add.hir")?;
    ensure(class == "stale-iteration-value" && loc == "err_add.hir:11:24" && stmt.starts_with("mem_write"), || {
        format!("err_add: {class} at {loc} in `{stmt}`")
    })?;
    let (class2, loc2, stmt2, t2) = single_error("mac.hir")?;
    ensure(class2 == "pipeline-imbalance" && loc2 == "mac.hir:7:12" && stmt2.starts_with("%r = add"), || {
        format!("mac: {class2} at {loc2} in `{stmt2}`")
    })?;
    let slow = t1.max(t2);
    ensure(slow < Duration::from_millis(100), || format!("verification took {slow:?}"))?;
    Ok(Outcome::Pass(format!("{class} at {loc}, {class2} at {loc2}, slowest {slow:.1?}")))
}

fn oracle_equivalence() -> Result<Outcome, String> {
    let t = Instant::now();
    let mut runs = 0;
    for k in KERNELS {
        let m = common::load(&format!("{k}.hir"));
        for seed in 0..50 {
            let case = kernels::kernel(k, seed);
            let r = run(&m, case.top, &case.inputs).map_err(|d| d.to_string())?;
            let bad = mismatches(&case, &r);
            ensure(bad.is_empty(), || format!("{k} seed {seed}: {}", bad[0]))?;
            runs += 1;
        }
    }
    let took = t.elapsed();
    ensure(took < Duration::from_secs(30), || format!("took {took:?}"))?;
    Ok(Outcome::Pass(format!("{runs} runs bit-exact in {took:.2?}")))
}

fn stencil_program(n: u64, ii: u64, latency: u64) -> String {
    let src = std::fs::read_to_string(common::corpus_dir().join("stencil.hir")).unwrap();
    src.replace("66xi32", &format!("{}xi32", n + 2))
        .replace("64xi32", &format!("{n}xi32"))
        .replace("%c64 = constant 64", &format!("%c64 = constant {n}"))
        .replace("yield at %ti offset 1", &format!("yield at %ti offset {ii}"))
        .replace("return at %tf offset 3", &format!("return at %tf offset {}", latency - ii))
}

fn latency_law() -> Result<Outcome, String> {
    let (start, latency) = (1, 4);
    for n in 1..=32u64 {
        for ii in 1..=4u64 {
            let m = parse(&stencil_program(n, ii, latency), "stencil.hir").map_err(|d| format!("{d:?}"))?;
            let errs = verify_errors(&m);
            ensure(errs.is_empty(), || format!("N={n} II={ii}: {}", errs[0]))?;
            let x: Vec<i64> = (0..n as i64 + 2).collect();
            let inputs = SimInputs::default().tensor("X0", &x).tensor("X1", &x).tensor("X2", &x).tensor("W", &[1, 2, 3]);
            let r = run(&m, "stencil", &inputs).map_err(|d| d.to_string())?;
            let want = start + (n - 1) * ii + latency + 1;
            ensure(r.completion_cycle == want, || format!("N={n} II={ii}: cycle {} expected {want}", r.completion_cycle))?;
        }
    }
    Ok(Outcome::Pass("128 (N, II) points cycle-exact".into()))
}

fn task_overlap() -> Result<Outcome, String> {
    let m = common::load("task_parallel.hir");
    let a = kernels::task("task_overlap", 11);
    let b = kernels::task("task_seq", 11);
    let ra = run(&m, a.top, &a.inputs).map_err(|d| d.to_string())?;
    let rb = run(&m, b.top, &b.inputs).map_err(|d| d.to_string())?;
    ensure(ra.tensors == rb.tensors, || "outputs differ".into())?;
    ensure(mismatches(&a, &ra).is_empty(), || "outputs differ from reference".into())?;
    ensure(ra.completion_cycle < rb.completion_cycle, || {
        format!("overlapped {} not below sequential {}", ra.completion_cycle, rb.completion_cycle)
    })?;
    Ok(Outcome::Pass(format!("overlapped {} cycles, sequential {}", ra.completion_cycle, rb.completion_cycle)))
}

fn pass_safety() -> Result<Outcome, String> {
    let mut checked = 0;
    for top in ALL_TOPS {
        let m = common::load(kernels::kernel(top, 0).file);
        for pass in DEFAULT_PIPELINE {
            let (t, _) = run_pipeline(&m, &[pass]).map_err(|d| format!("{top} {pass}: {d}"))?;
            let errs = verify_errors(&t);
            ensure(errs.is_empty(), || format!("{top} after {pass}: {}", errs[0]))?;
            for seed in 0..50 {
                let case = kernels::kernel(top, seed);
                let a = run(&m, case.top, &case.inputs).map_err(|d| d.to_string())?;
                let b = run(&t, case.top, &case.inputs).map_err(|d| d.to_string())?;
                ensure(a.outputs() == b.outputs(), || format!("{top} after {pass}, seed {seed}: outputs differ"))?;
                ensure(a.completion_cycle == b.completion_cycle, || {
                    format!("{top} after {pass}: cycle {} became {}", a.completion_cycle, b.completion_cycle)
                })?;
                checked += 1;
            }
        }
    }
    Ok(Outcome::Pass(format!("{} passes x {} programs, {checked} paired runs", DEFAULT_PIPELINE.len(), ALL_TOPS.len())))
}

fn narrowing() -> Result<Outcome, String> {
    let m = common::load("narrowing.hir");
    let (t, _) = run_pipeline(&m, &["narrow_precision"]).map_err(|d| d.to_string())?;
    let out = lower(&t, &LowerOptions::default()).map_err(|d| format!("{d:?}"))?;
    let widths: Vec<u32> = out.resources.counters().map(|c| c.width).collect();
    ensure(widths == [4, 5, 8, 9], || format!("counter widths {widths:?}"))?;
    let a = run(&m, "narrowing", &SimInputs::default()).map_err(|d| d.to_string())?;
    let b = run(&t, "narrowing", &SimInputs::default()).map_err(|d| d.to_string())?;
    ensure(a.outputs() == b.outputs() && a.completion_cycle == b.completion_cycle, || "simulation changed".into())?;
    Ok(Outcome::Pass(format!("counter widths {widths:?}, simulation unchanged")))
}

fn delay_sharing() -> Result<Outcome, String> {
    let m = common::load("delays.hir");
    let before = lower(&m, &LowerOptions::default()).map_err(|d| format!("{d:?}"))?.resources.registers;
    let (t, _) = run_pipeline(&m, &["dedup_time_and_delays"]).map_err(|d| d.to_string())?;
    let after = lower(&t, &LowerOptions::default()).map_err(|d| format!("{d:?}"))?.resources.registers;
    ensure(after == 5, || format!("{after} registers after sharing"))?;
    Ok(Outcome::Pass(format!("{before} registers before, {after} after")))
}

fn round_trip() -> Result<Outcome, String> {
    let fixed_point = |name: &str, src: &str| -> Result<(), String> {
        let m = parse(src, name).map_err(|d| format!("{name}: {d:?}"))?;
        let text = print(&m);
        let m2 = parse(&text, name).map_err(|d| format!("{name} reprint: {d:?}"))?;
        ensure(structurally_equal(&m, &m2) && print(&m2) == text, || format!("{name} is not a fixed point"))
    };
    let corpus = common::corpus();
    for (name, src) in &corpus {
        fixed_point(name, src)?;
    }
    for seed in 0..1000 {
        fixed_point(&format!("fuzz{seed}.hir"), &gen::program(seed).src)?;
    }
    Ok(Outcome::Pass(format!("{} corpus files and 1000 generated programs", corpus.len())))
}

fn verilog_audit() -> Result<Outcome, String> {
    let mut ops = 0;
    let clean = common::clean_corpus();
    for (name, m) in &clean {
        let a = lower(m, &LowerOptions::default()).map_err(|d| format!("{name}: {d:?}"))?;
        let b = lower(&m.clone(), &LowerOptions::default()).map_err(|d| format!("{d:?}"))?;
        ensure(a.verilog == b.verilog, || format!("{name}: emission differs between runs"))?;
        for f in m.functions() {
            let plan = a.plan.functions.iter().find(|p| p.name == f.name).ok_or(format!("{name}: no plan for {}", f.name))?;
            let mut n = 0;
            catch_unwind(AssertUnwindSafe(|| common::audit::audit(f, &f.body, &mut Vec::new(), plan, &mut n)))
                .map_err(|e| format!("{name}: {}", panic_text(&e)))?;
            ensure(n == plan.ops.len(), || format!("{name}: plan has unaudited ops"))?;
            ops += n;
        }
    }
    Ok(Outcome::Pass(format!("{} programs byte-identical, {ops} scheduled ops audited", clean.len())))
}

fn cosim() -> Result<Outcome, String> {
    let path = std::env::var_os("PATH").unwrap_or_default();
    let found = ["iverilog", "verilator"].into_iter().find(|b| std::env::split_paths(&path).any(|d| d.join(b).is_file()));
    Ok(Outcome::Skip(match found {
        None => "no Verilog simulator on PATH".into(),
        Some(b) => format!("{b} found, but no co-simulation harness is wired up"),
    }))
}

fn panic_text(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let checks: [(&str, Check); 10] = [
        ("diagnostics", diagnostics),
        ("oracle equivalence", oracle_equivalence),
        ("latency law", latency_law),
        ("task overlap", task_overlap),
        ("pass safety", pass_safety),
        ("precision narrowing", narrowing),
        ("delay sharing", delay_sharing),
        ("round trip", round_trip),
        ("verilog determinism and audit", verilog_audit),
        ("co-simulation", cosim),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let t = Instant::now();
        let res = catch_unwind(check).unwrap_or_else(|e| Err(format!("panicked: {}", panic_text(&e))));
        let took = t.elapsed();
        let line = match res {
            Ok(Outcome::Pass(d)) => format!("PASS  {d}"),
            Ok(Outcome::Skip(d)) => format!("SKIP  {d}"),
            Err(e) => {
                failed += 1;
                format!("FAIL  {e}")
            }
        };
        println!("criterion {:>2} {name:<30} {line} [{took:.2?}]", i + 1);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
