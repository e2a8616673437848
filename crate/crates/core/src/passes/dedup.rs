use super::{remove_ops, replace_uses, use_counts, PassReport};
use crate::analysis::{FuncInfo, UnrollCtx};
use crate::ir::*;
use std::collections::HashMap;

/// Removes derived time variables by folding them into their roots, then
/// shares shift registers between delays of the same value.
pub fn dedup_time_and_delays(m: &mut Module, report: &mut PassReport) {
    for f in m.functions_mut() {
        fold_time_vars(f, report);
    }
    let snapshot = m.clone();
    for f in m.functions_mut() {
        let orig = snapshot.function(&f.name).unwrap();
        let fi = FuncInfo::new(orig, &snapshot);
        let mut dups = Vec::new();
        share_region(&fi, f, &mut dups, report);
        for (old, new) in dups {
            replace_uses(f, old, new);
        }
    }
}

fn fold_time_vars(f: &mut Function, report: &mut PassReport) {
    let mut defs: HashMap<ValueId, TimeExpr> = HashMap::new();
    f.body.walk(&mut |op| {
        if let OpKind::Time { at } = &op.kind {
            defs.insert(op.results[0], at.clone());
        }
    });
    if defs.is_empty() {
        return;
    }
    let fold = |e: &mut TimeExpr| {
        while let Some(d) = defs.get(&e.base) {
            e.offset += d.offset;
            e.base = d.base;
        }
    };
    f.body.walk_mut(&mut |op| {
        if let Some(at) = op.schedule_mut() {
            fold(at);
        }
        if let Some(l) = op.as_loop_mut() {
            fold(&mut l.start);
        }
    });
    let uses = use_counts(f);
    let mut spans = Vec::new();
    f.body.walk(&mut |op| {
        if matches!(op.kind, OpKind::Time { .. }) && !uses.contains_key(&op.results[0]) {
            spans.push((op.span.clone(), op.results[0]));
        }
    });
    for (span, v) in spans {
        report.note(&span, format!("time variable %{} folded into its base", f.name(v)));
    }
    report.removed += remove_ops(&mut f.body, &mut |op| {
        matches!(op.kind, OpKind::Time { .. }) && !uses.contains_key(&op.results[0])
    });
}

/// Groups delays of one source at one instant and rewrites them into a
/// single chain with a tap per distinct depth.
fn share_region(fi: &FuncInfo, f: &mut Function, dups: &mut Vec<(ValueId, ValueId)>, report: &mut PassReport) {
    // Work on each region separately; delays in different regions never share.
    fn visit(fi: &FuncInfo, region: &mut Region, dups: &mut Vec<(ValueId, ValueId)>, report: &mut PassReport) {
        let mut groups: HashMap<(ValueId, String, String), Vec<usize>> = HashMap::new();
        for (i, op) in region.ops.iter().enumerate() {
            if let OpKind::Delay { src, at, .. } = &op.kind {
                let when = match fi.resolve(at, &UnrollCtx::new()) {
                    Ok(ci) => format!("c{}+{}", ci.root.0, ci.offset),
                    Err(_) => format!("r{}+{}", at.base.0, at.offset),
                };
                let ty = fi.func.ty(op.results[0]).to_string();
                groups.entry((*src, when, ty)).or_default().push(i);
            }
        }
        let mut groups: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() > 1).collect();
        groups.sort();
        let mut dead = Vec::new();
        let mut placed: HashMap<usize, Vec<Op>> = HashMap::new();
        for g in groups {
            let first = g[0];
            let OpKind::Delay { src, at: anchor, .. } = region.ops[first].kind.clone() else { unreachable!() };
            let mut members: Vec<(u64, usize)> = g
                .iter()
                .map(|&i| match region.ops[i].kind {
                    OpKind::Delay { by, .. } => (by, i),
                    _ => unreachable!(),
                })
                .collect();
            members.sort();
            let mut chain: Vec<Op> = Vec::new();
            let mut prev: Option<(u64, ValueId)> = None;
            for (by, i) in members {
                let op = &region.ops[i];
                dead.push(i);
                match prev {
                    Some((d, v)) if d == by => {
                        dups.push((op.results[0], v));
                        report.removed += 1;
                        report.note(&op.span, format!("delay merged into %{}", fi.func.name(v)));
                        continue;
                    }
                    _ => {}
                }
                let mut new = op.clone();
                if let Some((d, v)) = prev {
                    new.kind = OpKind::Delay { src: v, by: by - d, at: anchor.shifted(d) };
                    report.rewritten += 1;
                    report.note(&op.span, format!("delay rewritten as a tap {} cycles after %{}", by - d, fi.func.name(v)));
                } else {
                    new.kind = OpKind::Delay { src, by, at: anchor.clone() };
                }
                prev = Some((by, new.results[0]));
                chain.push(new);
            }
            placed.insert(first, chain);
        }
        if !dead.is_empty() {
            let old = std::mem::take(&mut region.ops);
            for (i, op) in old.into_iter().enumerate() {
                if let Some(chain) = placed.remove(&i) {
                    region.ops.extend(chain);
                } else if !dead.contains(&i) {
                    region.ops.push(op);
                }
            }
        }
        for op in &mut region.ops {
            if let OpKind::Loop(l) = &mut op.kind {
                visit(fi, &mut l.body, dups, report);
            }
        }
    }
    visit(fi, &mut f.body, dups, report);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse, print};

    fn run(src: &str) -> (String, PassReport) {
        let mut m = parse(src, "d.hir").unwrap();
        let mut r = PassReport::default();
        dedup_time_and_delays(&mut m, &mut r);
        (print(&m), r)
    }

    #[test]
    fn delays_2_and_5_chain() {
        let src = "def @f(%x: i32 delay 0) -> (i32 delay 2, i32 delay 5) at %t {
  %d2 = delay %x by 2 at %t : i32
  %d5 = delay %x by 5 at %t : i32
  return (%d2, %d5) at %t offset 5
}
";
        let (out, r) = run(src);
        assert!(out.contains("%d5 = delay %d2 by 3 at %t offset 2 : i32"), "{out}");
        assert_eq!(r.rewritten, 1);
    }

    #[test]
    fn equal_delays_merge() {
        let src = "def @f(%x: i32 delay 0) -> (i32 delay 3) at %t {
  %a = delay %x by 3 at %t : i32
  %b = delay %x by 3 at %t : i32
  %s = add %a, %b at %t offset 3 : i32
  return (%s) at %t offset 3
}
";
        let (out, r) = run(src);
        assert!(out.contains("%s = add %a, %a"), "{out}");
        assert_eq!(out.matches("delay %x").count(), 1);
        assert_eq!(r.removed, 1);
    }

    #[test]
    fn time_vars_fold() {
        let src = "def @f(%x: i32 delay 0) -> (i32 delay 3) at %t {
  %t1 = time %t offset 1
  %t2 = time %t1 offset 1
  %a = delay %x by 3 at %t : i32
  return (%a) at %t2 offset 1
}
";
        let (out, r) = run(src);
        assert!(!out.contains("time %t"), "{out}");
        assert!(out.contains("return (%a) at %t offset 3"), "{out}");
        assert_eq!(r.removed, 2);
    }

    #[test]
    fn different_sources_untouched() {
        let src = "def @f(%x: i32 delay 0, %y: i32 delay 0) -> (i32 delay 2, i32 delay 5) at %t {
  %a = delay %x by 2 at %t : i32
  %b = delay %y by 5 at %t : i32
  return (%a, %b) at %t offset 5
}
";
        let (_, r) = run(src);
        assert!(!r.changed());
    }
}
