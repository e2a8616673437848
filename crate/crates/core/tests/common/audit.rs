//! Independent check of the lowering plan's event depths.

use hir_core::backend::FunctionPlan;
use hir_core::ir::*;
use std::collections::HashMap;

/// Canonical offset of `e`, computed from the IR without the library's resolver.
pub fn oracle(f: &Function, e: &TimeExpr, ctx: &HashMap<OpId, u64>) -> (String, u64) {
    let mut ops: HashMap<OpId, &Op> = HashMap::new();
    f.body.walk(&mut |op| {
        ops.insert(op.id, op);
    });
    let konst = |v: ValueId| match f.value(v).def {
        ValueDef::OpResult(o, 0) => match ops[&o].kind {
            OpKind::Constant { value } => Some(value),
            _ => None,
        },
        _ => None,
    };
    let unroll_ii = |l: &LoopOp| {
        l.body.ops.iter().find_map(|o| match &o.kind {
            OpKind::Yield { at } if at.base == l.iter_time => Some(at.offset),
            _ => None,
        })
    };
    let (mut base, mut off) = (e.base, e.offset);
    loop {
        match f.value(base).def {
            ValueDef::OpResult(o, 0) => match &ops[&o].kind {
                OpKind::Time { at } => {
                    off += at.offset;
                    base = at.base;
                }
                OpKind::Loop(l) if l.kind == LoopKind::Unrolled && unroll_ii(l).is_some() => {
                    let (lb, ub, st) = (konst(l.lb).unwrap(), konst(l.ub).unwrap(), konst(l.step).unwrap());
                    let n = if lb >= ub { 0 } else { ((ub - lb + st - 1) / st) as u64 };
                    let (r, s) = oracle(f, &l.start, ctx);
                    return (r, s + n * unroll_ii(l).unwrap() + 1 + off);
                }
                _ => return (f.name(base).to_string(), off),
            },
            ValueDef::IterTime(lid) => {
                let OpKind::Loop(l) = &ops[&lid].kind else { unreachable!() };
                match (l.kind, unroll_ii(l), ctx.get(&lid)) {
                    (LoopKind::Unrolled, Some(ii), Some(idx)) => {
                        let (r, s) = oracle(f, &l.start, ctx);
                        return (r, s + idx * ii + off);
                    }
                    _ => return (f.name(base).to_string(), off),
                }
            }
            _ => return (f.name(base).to_string(), off),
        }
    }
}

pub fn audit(f: &Function, r: &Region, ctx: &mut Vec<(OpId, u64)>, plan: &FunctionPlan, n: &mut usize) {
    for op in &r.ops {
        if let Some(at) = op.schedule() {
            let map: HashMap<OpId, u64> = ctx.iter().copied().collect();
            let (root, off) = oracle(f, at, &map);
            let inst: Vec<u64> = ctx.iter().map(|c| c.1).collect();
            let loc = op.span.to_string();
            let entry = plan
                .ops
                .iter()
                .find(|s| s.loc == loc && s.instance == inst)
                .unwrap_or_else(|| panic!("{loc} {inst:?} missing from plan"));
            assert_eq!(entry.depth, off, "{loc} {inst:?}");
            assert!(entry.root.starts_with(&format!("ev_{root}")), "{loc}: {} vs {root}", entry.root);
            let ev = plan.events.iter().find(|e| e.name == entry.event).expect("event wire declared");
            assert_eq!((ev.root.as_str(), ev.depth), (entry.root.as_str(), off));
            *n += 1;
        }
        if let OpKind::Loop(l) = &op.kind {
            if l.kind == LoopKind::Unrolled {
                let konst = |v: ValueId| f.const_value(v).unwrap();
                let (lb, ub, st) = (konst(l.lb), konst(l.ub), konst(l.step));
                let mut i = lb;
                let mut idx = 0;
                while i < ub {
                    ctx.push((op.id, idx));
                    audit(f, &l.body, ctx, plan, n);
                    ctx.pop();
                    i += st;
                    idx += 1;
                }
            } else {
                audit(f, &l.body, ctx, plan, n);
            }
        }
    }
}
