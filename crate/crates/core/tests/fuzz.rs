mod common;

use common::gen::{inputs, program, Program};
use hir_core::backend::{lower, LowerOptions};
use hir_core::frontend::{parse, print, structurally_equal};
use hir_core::passes::{module_op_count, run_pass, run_pipeline, DEFAULT_PIPELINE};
use hir_core::sim::{run, SimInputs, SimResult};
use hir_core::verify::verify_module;
use hir_core::Module;
use proptest::prelude::*;

fn sim(m: &Module, p: &Program, seed: u64) -> (SimInputs, SimResult) {
    let i = inputs(p, seed);
    let r = run(m, "g", &i).unwrap();
    (i, r)
}

#[test]
fn thousand_generated_programs_round_trip() {
    for seed in 0..1000 {
        let p = program(seed);
        let m = parse(&p.src, "g.hir").unwrap_or_else(|d| panic!("seed {seed}: {d:?}\n{}", p.src));
        let text = print(&m);
        let m2 = parse(&text, "g.hir").unwrap();
        assert!(structurally_equal(&m, &m2), "seed {seed}\n{text}");
        assert_eq!(print(&m2), text, "seed {seed}");
    }
}

#[test]
fn generated_programs_match_their_reference() {
    for seed in 0..300 {
        let p = program(seed);
        let m = parse(&p.src, "g.hir").unwrap();
        let errors: Vec<_> = verify_module(&m).into_iter().filter(|d| d.is_error()).collect();
        assert!(errors.is_empty(), "seed {seed}: {errors:?}\n{}", p.src);
        let (i, r) = sim(&m, &p, seed);
        assert!(r.ub.is_empty() && r.timing_faults.is_empty(), "seed {seed}: {:?} {:?}\n{}", r.ub, r.timing_faults, p.src);
        let a: Vec<i64> = i.tensors["A"].as_array().unwrap().iter().map(|v| v.as_i64().unwrap()).collect();
        let (b, x) = p.reference(&a, i.scalars["x"]);
        assert_eq!(r.tensors["B"], b.into_iter().map(Some).collect::<Vec<_>>(), "seed {seed}\n{}", p.src);
        assert_eq!(r.tensors["R"], [Some(x)], "seed {seed}\n{}", p.src);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn passes_preserve_behaviour(seed in any::<u64>(), pass in prop::sample::select(DEFAULT_PIPELINE.to_vec())) {
        let p = program(seed);
        let m = parse(&p.src, "g.hir").unwrap();
        let (t, reports) = run_pipeline(&m, &[pass]).unwrap();
        let r = &reports[0];
        prop_assert_eq!(r.ops_after, r.ops_before - r.removed + r.added);
        prop_assert_eq!(module_op_count(&t), r.ops_after);
        let (_, before) = sim(&m, &p, seed);
        let (_, after) = sim(&t, &p, seed);
        prop_assert_eq!(before.outputs(), after.outputs());
        prop_assert_eq!(before.completion_cycle, after.completion_cycle);
        prop_assert!(after.ub.is_empty() && after.timing_faults.is_empty());
    }

    #[test]
    fn pipeline_is_idempotent(seed in any::<u64>()) {
        let m = parse(&program(seed).src, "g.hir").unwrap();
        let (once, _) = run_pipeline(&m, DEFAULT_PIPELINE).unwrap();
        let (twice, _) = run_pipeline(&once, DEFAULT_PIPELINE).unwrap();
        prop_assert_eq!(print(&once), print(&twice));
    }

    #[test]
    fn passes_never_grow_programs(seed in any::<u64>()) {
        let mut m = parse(&program(seed).src, "g.hir").unwrap();
        for pass in DEFAULT_PIPELINE {
            let before = module_op_count(&m);
            run_pass(&mut m, pass).unwrap();
            prop_assert!(module_op_count(&m) <= before, "{}", pass);
        }
    }

    #[test]
    fn emission_is_a_function_of_the_program(seed in any::<u64>()) {
        // Printing twice gives the same text, so line numbers line up.
        let m = parse(&print(&parse(&program(seed).src, "g.hir").unwrap()), "g.hir").unwrap();
        let a = lower(&m, &LowerOptions::default()).unwrap();
        let b = lower(&parse(&print(&m), "g.hir").unwrap(), &LowerOptions::default()).unwrap();
        prop_assert_eq!(a.verilog, b.verilog);
    }

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>()) {
        let p = program(seed);
        let m = parse(&p.src, "g.hir").unwrap();
        let (_, a) = sim(&m, &p, seed);
        let (_, b) = sim(&m, &p, seed);
        prop_assert_eq!(a.trace, b.trace);
    }
}
