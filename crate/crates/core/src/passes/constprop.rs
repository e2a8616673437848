use super::{remove_dead_constants, remove_ops, replace_uses, PassReport};
use crate::ir::*;
use std::collections::HashMap;

enum Rewrite {
    Fold(i64),
    Forward(ValueId),
}

/// Folds ops whose operands are constants, applies the identities
/// `x*1`, `x+0`, `x-0`, `x*0`, and drops constants nobody uses.
pub fn constant_propagation(m: &mut Module, report: &mut PassReport) {
    for f in m.functions_mut() {
        loop {
            let consts = f.constants();
            let mut rewrites: Vec<(OpId, Rewrite)> = Vec::new();
            f.body.walk(&mut |op| {
                if let Some(r) = fold(f, &consts, op) {
                    rewrites.push((op.id, r));
                }
            });
            if rewrites.is_empty() {
                break;
            }
            // Folds are independent; a forward may invalidate later rewrites, so take one per round.
            let mut forwarded = false;
            rewrites.retain(|(_, r)| match r {
                Rewrite::Fold(_) => true,
                Rewrite::Forward(_) => !std::mem::replace(&mut forwarded, true),
            });
            for (id, rw) in rewrites {
                match rw {
                    Rewrite::Fold(value) => {
                        let mut result = None;
                        f.body.walk_mut(&mut |op| {
                            if op.id == id {
                                report.note(&op.span, format!("{} folded to constant {value}", op.mnemonic()));
                                op.kind = OpKind::Constant { value };
                                result = Some(op.results[0]);
                            }
                        });
                        if let Some(v) = result {
                            f.values[v.index()].ty = Type::Const;
                            report.removed += 1;
                            report.added += 1;
                        }
                    }
                    Rewrite::Forward(x) => {
                        let mut result = None;
                        f.body.walk(&mut |op| {
                            if op.id == id {
                                result = Some((op.results[0], op.span.clone(), op.mnemonic()));
                            }
                        });
                        let Some((v, span, mn)) = result else { continue };
                        replace_uses(f, v, x);
                        report.removed += remove_ops(&mut f.body, &mut |op| op.id == id);
                        report.note(&span, format!("{mn} replaced by %{}", f.name(x)));
                    }
                }
            }
        }
        remove_dead_constants(f, report);
    }
}

fn fold(f: &Function, consts: &HashMap<ValueId, i64>, op: &Op) -> Option<Rewrite> {
    let c = |v: &ValueId| consts.get(v).copied();
    let width = || op.results.first().and_then(|r| f.ty(*r).int_width());
    match &op.kind {
        OpKind::Binary { op: b, lhs, rhs, .. } => {
            let w = width()?;
            match (c(lhs), c(rhs)) {
                (Some(x), Some(y)) => Some(Rewrite::Fold(b.eval(const_bits(x, w), const_bits(y, w), w) as i64)),
                (x, y) => {
                    let same_ty = |v: &ValueId| *f.ty(*v) == Type::Int(w);
                    let is = |k: Option<i64>, n: u64| k.is_some_and(|k| const_bits(k, w) == n);
                    match b {
                        BinOp::Mult if is(x, 0) || is(y, 0) => Some(Rewrite::Fold(0)),
                        BinOp::Mult if is(y, 1) && same_ty(lhs) => Some(Rewrite::Forward(*lhs)),
                        BinOp::Mult if is(x, 1) && same_ty(rhs) => Some(Rewrite::Forward(*rhs)),
                        BinOp::Add if is(y, 0) && same_ty(lhs) => Some(Rewrite::Forward(*lhs)),
                        BinOp::Add if is(x, 0) && same_ty(rhs) => Some(Rewrite::Forward(*rhs)),
                        BinOp::Sub if is(y, 0) && same_ty(lhs) => Some(Rewrite::Forward(*lhs)),
                        _ => None,
                    }
                }
            }
        }
        OpKind::BitSlice { src, hi, lo, .. } => {
            let v = const_bits(c(src)?, 64);
            Some(Rewrite::Fold(mask(v >> lo, hi - lo + 1) as i64))
        }
        OpKind::Select { cond, if_true, if_false, .. } => {
            let w = width()?;
            let pick = if const_bits(c(cond)?, 1) == 1 { if_true } else { if_false };
            match c(pick) {
                Some(k) => Some(Rewrite::Fold(const_bits(k, w) as i64)),
                None if *f.ty(*pick) == Type::Int(w) => Some(Rewrite::Forward(*pick)),
                None => None,
            }
        }
        OpKind::Delay { src, .. } => Some(Rewrite::Fold(const_bits(c(src)?, width()?) as i64)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse, print};

    fn run(src: &str) -> (String, PassReport) {
        let mut m = parse(src, "c.hir").unwrap();
        let mut r = PassReport::default();
        constant_propagation(&mut m, &mut r);
        (print(&m), r)
    }

    #[test]
    fn folds_add_of_constants() {
        let (out, r) = run("def @f() -> (i32 delay 0) at %t {\n  %a = constant 3\n  %b = constant 4\n  %s = add %a, %b at %t : i32\n  return (%s) at %t\n}\n");
        assert!(out.contains("%s = constant 7"), "{out}");
        assert!(!out.contains("add"));
        assert!(!out.contains("%a = constant"));
        assert_eq!(r.removed, 3);
        assert_eq!(r.added, 1);
    }

    #[test]
    fn mult_by_one_forwards_operand() {
        let (out, _) = run("def @f(%x: i32 delay 0) -> (i32 delay 0) at %t {\n  %one = constant 1\n  %y = mult %x, %one at %t : i32\n  return (%y) at %t\n}\n");
        assert!(out.contains("return (%x) at %t"), "{out}");
        assert!(!out.contains("mult"));
    }

    #[test]
    fn wraparound_fold() {
        let (out, _) = run("def @f() -> (i8 delay 0) at %t {\n  %a = constant 3\n  %b = constant 4\n  %s = sub %a, %b at %t : i8\n  return (%s) at %t\n}\n");
        assert!(out.contains("%s = constant 255"), "{out}");
    }
}
