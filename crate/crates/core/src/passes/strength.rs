use super::{remove_dead_constants, remove_ops, PassReport};
use crate::analysis::{FuncInfo, UnrollCtx};
use crate::ir::*;

struct Rewrite {
    lp: OpId,
    mult: OpId,
    result: ValueId,
    init: i64,
    step: i64,
}

/// Turns `mult %i, c` at the iteration instant of a `for` loop into an
/// accumulator that starts at `lb*c` and advances by `step*c`.
pub fn strength_reduce(m: &mut Module, report: &mut PassReport) {
    let snapshot = m.clone();
    for f in m.functions_mut() {
        let orig = snapshot.function(&f.name).unwrap();
        let fi = FuncInfo::new(orig, &snapshot);
        let mut rewrites = Vec::new();
        orig.body.walk(&mut |op| {
            if let Some(l) = op.as_loop() {
                find(&fi, op.id, l, &mut rewrites);
            }
        });
        if rewrites.is_empty() {
            continue;
        }
        for rw in &rewrites {
            let mut idx = 0;
            f.body.walk_mut(&mut |op| {
                if op.id == rw.lp {
                    let l = op.as_loop_mut().unwrap();
                    idx = l.accums.len();
                    l.accums.push(Accumulator { value: rw.result, init: rw.init, step: rw.step });
                }
            });
            f.values[rw.result.index()].def = ValueDef::Accumulator(rw.lp, idx);
            let span = orig.find_op(rw.mult).unwrap().span.clone();
            report.note(&span, format!("mult of induction variable replaced by accumulator %{}", f.name(rw.result)));
            report.removed += remove_ops(&mut f.body, &mut |op| op.id == rw.mult);
            report.rewritten += 1;
        }
        remove_dead_constants(f, report);
    }
}

fn find(fi: &FuncInfo, id: OpId, l: &LoopOp, out: &mut Vec<Rewrite>) {
    let meta = &fi.loops[&id];
    if l.kind != LoopKind::Sequential {
        return;
    }
    let (Some(lb), Some(ub), Some(step)) = (meta.lb, meta.ub, meta.step) else { return };
    let Some(iw) = fi.func.ty(l.iv).int_width() else { return };
    // The iv must not wrap at its own width, or the two forms diverge.
    if lb < 0 || ub < 0 || bits_for(ub as u64) > iw {
        return;
    }
    for op in &l.body.ops {
        let OpKind::Binary { op: BinOp::Mult, lhs, rhs, at } = &op.kind else { continue };
        let c = if *lhs == l.iv {
            fi.consts.get(rhs)
        } else if *rhs == l.iv {
            fi.consts.get(lhs)
        } else {
            None
        };
        let Some(&c) = c else { continue };
        match fi.resolve(at, &UnrollCtx::new()) {
            Ok(ci) if ci.root == l.iter_time && ci.offset == 0 => {}
            _ => continue,
        }
        out.push(Rewrite {
            lp: id,
            mult: op.id,
            result: op.results[0],
            init: lb.wrapping_mul(c),
            step: step.wrapping_mul(c),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse, print};

    fn run(src: &str) -> (String, PassReport) {
        let mut m = parse(src, "s.hir").unwrap();
        let mut r = PassReport::default();
        strength_reduce(&mut m, &mut r);
        (print(&m), r)
    }

    const SRC: &str = "def @f(%M: memref<64xi32, [packed], w>) at %t {
  %lb = constant 2
  %ub = constant 20
  %s = constant 3
  %c = constant 5
  %done = for %i : i32 = %lb to %ub step %s iter_time %ti at %t offset 1 {
    %a = mult %i, %c at %ti : i32
    mem_write %a to %M[%i] at %ti
    yield at %ti offset 1
  }
  return at %done
}
";

    #[test]
    fn mult_becomes_accumulator() {
        let (out, r) = run(SRC);
        assert!(out.contains("accum %a : i32 = 10 by 15"), "{out}");
        assert!(!out.contains("mult"));
        assert!(!out.contains("%c = constant"));
        assert_eq!(r.rewritten, 1);
    }

    #[test]
    fn later_offset_is_skipped() {
        let (_, r) = run(&SRC.replace("mult %i, %c at %ti :", "mult %i, %c at %ti offset 1 :").replace("yield at %ti offset 1", "yield at %ti offset 2"));
        assert_eq!(r.rewritten, 0);
    }
}
