use super::PassReport;
use crate::analysis::FuncInfo;
use crate::ir::*;

/// Width the loop counter needs: it must hold every iv value and the first
/// value that fails the guard.
pub fn counter_width(lb: i64, ub: i64, step: i64) -> Option<u32> {
    let n = crate::analysis::trip_count(lb, ub, step)?;
    if lb < 0 || ub < 0 {
        return None;
    }
    let last = (lb as u64).checked_add(n.checked_mul(step as u64)?)?;
    Some(bits_for(last.max(ub as u64)).max(bits_for(lb as u64)))
}

/// Shrinks induction variables of constant-bound loops to the counter width.
pub fn narrow_precision(m: &mut Module, report: &mut PassReport) {
    let snapshot = m.clone();
    for f in m.functions_mut() {
        let orig = snapshot.function(&f.name).unwrap();
        let fi = FuncInfo::new(orig, &snapshot);
        let mut changes = Vec::new();
        orig.body.walk(&mut |op| {
            let Some(l) = op.as_loop() else { return };
            if l.kind != LoopKind::Sequential {
                return;
            }
            let meta = &fi.loops[&op.id];
            let (Some(lb), Some(ub), Some(step)) = (meta.lb, meta.ub, meta.step) else { return };
            let Some(nw) = counter_width(lb, ub, step) else { return };
            let Some(w) = orig.ty(l.iv).int_width() else { return };
            if nw >= w {
                return;
            }
            // A slice reaching past the new width would read zero-extension bits.
            let mut sliced_high = false;
            orig.body.walk(&mut |o| {
                if let OpKind::BitSlice { src, hi, .. } = &o.kind {
                    sliced_high |= *src == l.iv && *hi >= nw;
                }
            });
            if !sliced_high {
                changes.push((l.iv, w, nw, op.span.clone()));
            }
        });
        for (iv, w, nw, span) in changes {
            f.values[iv.index()].ty = Type::Int(nw);
            report.rewritten += 1;
            report.note(&span, format!("induction variable %{} narrowed from i{w} to i{nw}", f.name(iv)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse, print};

    #[test]
    fn widths_follow_guard_value() {
        assert_eq!(counter_width(0, 15, 1), Some(4));
        assert_eq!(counter_width(0, 16, 1), Some(5));
        assert_eq!(counter_width(0, 255, 1), Some(8));
        assert_eq!(counter_width(0, 256, 1), Some(9));
        assert_eq!(counter_width(0, 10, 3), Some(4));
        assert_eq!(counter_width(-1, 10, 1), None);
    }

    #[test]
    fn runtime_bound_untouched() {
        let src = "def @f(%n: i32 delay 0) at %t {
  %c0 = constant 0
  %c1 = constant 1
  %done = for %i : i32 = %c0 to %n step %c1 iter_time %ti at %t {
    yield at %ti offset 1
  }
  return at %done
}
";
        let mut m = parse(src, "n.hir").unwrap();
        let mut r = PassReport::default();
        narrow_precision(&mut m, &mut r);
        assert_eq!(r.rewritten, 0);
        assert!(print(&m).contains("for %i : i32"));
    }

    #[test]
    fn const_bound_narrowed() {
        let src = "def @f() at %t {
  %c0 = constant 0
  %c1 = constant 1
  %c16 = constant 16
  %done = for %i : i32 = %c0 to %c16 step %c1 iter_time %ti at %t {
    yield at %ti offset 1
  }
  return at %done
}
";
        let mut m = parse(src, "n.hir").unwrap();
        let mut r = PassReport::default();
        narrow_precision(&mut m, &mut r);
        assert!(print(&m).contains("for %i : i5"));
    }
}
