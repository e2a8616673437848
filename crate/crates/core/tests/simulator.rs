mod common;

use common::kernels::{self, mismatches, ALL_TOPS, KERNELS};
use hir_core::frontend::parse;
use hir_core::sim::{run, SimInputs, UbKind};
use hir_core::verify::verify_module;

#[test]
fn every_corpus_top_runs_clean() {
    for top in ALL_TOPS {
        let case = kernels::kernel(top, 1);
        let m = common::load(case.file);
        let r = run(&m, case.top, &case.inputs).unwrap_or_else(|d| panic!("{top}: {d}"));
        let bad = mismatches(&case, &r);
        assert!(r.ub.is_empty(), "{top}: {:?}", r.ub);
        assert!(r.timing_faults.is_empty(), "{top}: {:?}", r.timing_faults);
        assert!(bad.is_empty(), "{top}: {:?}", &bad[..bad.len().min(5)]);
    }
}

#[test]
fn kernels_match_software_references() {
    for k in KERNELS {
        let m = common::load(&format!("{k}.hir"));
        for seed in 0..50 {
            let case = kernels::kernel(k, seed);
            let r = run(&m, case.top, &case.inputs).unwrap();
            let bad = mismatches(&case, &r);
            assert!(bad.is_empty(), "{k} seed {seed}: {:?}", &bad[..bad.len().min(5)]);
        }
    }
}

#[test]
fn transpose_of_identity_is_identity() {
    let m = common::load("transpose.hir");
    let eye: Vec<i64> = (0..64).map(|k| (k / 8 == k % 8) as i64).collect();
    let r = run(&m, "transpose", &SimInputs::default().tensor("A", &eye)).unwrap();
    assert_eq!(r.tensors["B"], eye.iter().map(|v| Some(*v)).collect::<Vec<_>>());
}

/// The corpus filter with trip count `n`, initiation interval `ii` and a
/// return placed at the end of the last iteration's body.
fn stencil_program(n: u64, ii: u64) -> String {
    let src = std::fs::read_to_string(common::corpus_dir().join("stencil.hir")).unwrap();
    let latency = 4;
    src.replace("66xi32", &format!("{}xi32", n + 2))
        .replace("64xi32", &format!("{n}xi32"))
        .replace("%c64 = constant 64", &format!("%c64 = constant {n}"))
        .replace("yield at %ti offset 1", &format!("yield at %ti offset {ii}"))
        .replace("return at %tf offset 3", &format!("return at %tf offset {}", latency - ii))
}

#[test]
fn pipelined_latency_law() {
    let (start, latency) = (1u64, 4u64);
    for n in 1..=32u64 {
        for ii in 1..=4u64 {
            let src = stencil_program(n, ii);
            let m = parse(&src, "stencil.hir").unwrap();
            let errors: Vec<_> = verify_module(&m).into_iter().filter(|d| d.is_error()).collect();
            assert!(errors.is_empty(), "n={n} ii={ii}: {errors:?}");
            let x: Vec<i64> = (0..n as i64 + 2).map(|v| v * 3 - 7).collect();
            let inputs =
                SimInputs::default().tensor("X0", &x).tensor("X1", &x).tensor("X2", &x).tensor("W", &[2, -1, 5]);
            let r = run(&m, "stencil", &inputs).unwrap();
            let expect = start + (n - 1) * ii + latency + 1;
            assert_eq!(r.completion_cycle, expect, "n={n} ii={ii}");
            // Independent of the return op: the last write lands one cycle
            // before the body's latency is used up.
            let last_write = r.trace.cycles.iter().rev().find(|(_, c)| c.ports.iter().any(|p| p.write)).unwrap().0;
            assert_eq!(last_write + 2, expect, "n={n} ii={ii}");
            assert!(r.ub.is_empty() && r.timing_faults.is_empty());
            let y: Vec<Option<i64>> =
                (0..n as usize).map(|i| Some(2 * x[i] - x[i + 1] + 5 * x[i + 2])).collect();
            assert_eq!(r.tensors["Y"], y);
        }
    }
}

#[test]
fn overlapped_tasks_finish_first_with_same_outputs() {
    let m = common::load("task_parallel.hir");
    for seed in 0..5 {
        let a = kernels::task("task_overlap", seed);
        let b = kernels::task("task_seq", seed);
        let ra = run(&m, a.top, &a.inputs).unwrap();
        let rb = run(&m, b.top, &b.inputs).unwrap();
        assert!(ra.completion_cycle < rb.completion_cycle);
        assert_eq!(ra.tensors, rb.tensors);
        assert!(mismatches(&a, &ra).is_empty());
        assert!(ra.ub.is_empty() && ra.timing_faults.is_empty());
    }
}

#[test]
fn traces_are_deterministic() {
    for top in ["gemm", "task_overlap", "histogram"] {
        let case = kernels::kernel(top, 7);
        let m = common::load(case.file);
        let a = run(&m, case.top, &case.inputs).unwrap();
        let b = run(&m, case.top, &case.inputs).unwrap();
        assert_eq!(a.trace.to_vcd(top), b.trace.to_vcd(top));
        assert_eq!(a.trace.to_csv(), b.trace.to_csv());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

const REENTRY: &str = "def @f(%A: memref<4xi32, [packed], w>) at %t {
  %c0 = constant 0
  %c1 = constant 1
  %c3 = constant 3
  %c4 = constant 4
  %to = for %i : i32 = %c0 to %c3 step %c1 iter_time %ti at %t offset 1 {
    %tin = for %j : i32 = %c0 to %c4 step %c1 iter_time %tj at %ti {
      mem_write %j to %A[%j] at %tj
      yield at %tj offset 1
    }
    yield at %ti offset II
  }
  return at %to offset 6
}
";

#[test]
fn restarting_a_busy_loop_is_reentry() {
    // The inner loop needs five cycles; restarting it every cycle re-enters it.
    let m = parse(&REENTRY.replace("offset II", "offset 1"), "re.hir").unwrap();
    let r = run(&m, "f", &SimInputs::default()).unwrap();
    let reentries: Vec<_> = r.ub.iter().filter(|e| e.kind == UbKind::LoopReentry).collect();
    assert_eq!(reentries.iter().map(|e| e.cycle).collect::<Vec<_>>(), [2, 3]);
    assert_eq!(reentries[0].loc, "re.hir:7:5");
    // The overlapping copies also fight over the write port.
    assert!(r.ub.iter().any(|e| e.kind == UbKind::PortConflict));
    // Waiting for it to finish is fine.
    let m = parse(&REENTRY.replace("offset II", "offset 5"), "re.hir").unwrap();
    let r = run(&m, "f", &SimInputs::default()).unwrap();
    assert!(r.ub.is_empty(), "{:?}", r.ub);
}

#[test]
fn sequential_outer_and_pipelined_inner_loops_never_reenter() {
    for top in ["transpose", "stencil", "gemm", "conv"] {
        let case = kernels::kernel(top, 3);
        let r = run(&common::load(case.file), case.top, &case.inputs).unwrap();
        assert!(r.ub.iter().all(|e| e.kind != UbKind::LoopReentry), "{top}");
    }
}

#[test]
fn stale_iteration_value_is_caught_at_run_time() {
    let m = common::load("err_add.hir");
    let a: Vec<i64> = (0..16).collect();
    let r = run(&m, "add", &SimInputs::default().tensor("A", &a).tensor("B", &a)).unwrap();
    assert!(!r.timing_faults.is_empty());
    assert!(r.timing_faults.iter().all(|f| f.value == "%i" && f.loc == "err_add.hir:11:5"));
    assert!(r.tensors["C"].iter().all(Option::is_none));
}

#[test]
fn unbalanced_extern_result_is_read_too_early() {
    let m = common::load("mac.hir");
    let r = run(&m, "mac", &SimInputs::default().scalar("a", 3).scalar("b", 4).scalar("c", 5)).unwrap();
    assert_eq!(r.results, [None]);
    assert_eq!(r.timing_faults[0].value, "%m");
    // One cycle later the product is there.
    let fixed = std::fs::read_to_string(common::corpus_dir().join("mac.hir"))
        .unwrap()
        .replace("%c: i32 delay 2) -> (i32 delay 2)", "%c: i32 delay 3) -> (i32 delay 3)")
        .replace("at %t offset 2", "at %t offset 3");
    let m = parse(&fixed, "mac.hir").unwrap();
    assert!(verify_module(&m).iter().all(|d| !d.is_error()));
    let r = run(&m, "mac", &SimInputs::default().scalar("a", 3).scalar("b", 4).scalar("c", 5)).unwrap();
    assert_eq!(r.results, [Some(17)]);
    assert!(r.timing_faults.is_empty());
}

#[test]
fn calls_reset_callee_memories() {
    let src = "def @g(%x: i32 delay 0) -> (i32 delay 2) at %t {
  %c0 = constant 0
  %w, %r = alloc : memref<1xi32, [packed], w, reg>, memref<1xi32, [packed], r, reg>
  %v = mem_read %r[%c0] at %t : i32
  mem_write %x to %w[%c0] at %t
  %u = mem_read %r[%c0] at %t offset 1 : i32
  %v1 = delay %v by 1 at %t : i32
  %s = add %u, %v1 at %t offset 1 : i32
  %s1 = delay %s by 1 at %t offset 1 : i32
  return (%s1) at %t offset 2
}

def @f(%a: i32 delay 0) -> (i32 delay 4) at %t {
  %r0 = call @g(%a) at %t : i32
  %r1 = call @g(%r0) at %t offset 2 : i32
  return (%r1) at %t offset 4
}
";
    let m = parse(src, "calls.hir").unwrap();
    let r = run(&m, "f", &SimInputs::default().scalar("a", 5)).unwrap();
    // Each call's first read sees a fresh, unwritten cell.
    let kinds: Vec<_> = r.ub.iter().map(|e| (e.kind, e.cycle)).collect();
    assert_eq!(kinds, [(UbKind::UninitializedRead, 0), (UbKind::UninitializedRead, 2)]);
    assert_eq!(r.results, [None]);
}

#[test]
fn verified_programs_stay_free_of_static_ub() {
    for top in ALL_TOPS {
        for seed in 100..110 {
            let case = kernels::kernel(top, seed);
            let m = common::load(case.file);
            let r = run(&m, case.top, &case.inputs).unwrap();
            assert!(r.timing_faults.is_empty(), "{top}");
            assert!(
                r.ub.iter().all(|e| matches!(e.kind, UbKind::PortConflict)),
                "{top}: {:?}",
                r.ub
            );
        }
    }
}
