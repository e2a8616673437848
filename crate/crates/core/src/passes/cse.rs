use super::{remove_ops, replace_uses, PassReport};
use crate::analysis::{FuncInfo, UnrollCtx};
use crate::ir::*;
use std::collections::{HashMap, HashSet};

/// Merges ops with the same opcode, operands and attributes that are
/// scheduled at the same canonical instant.
pub fn cse(m: &mut Module, report: &mut PassReport) {
    let snapshot = m.clone();
    for f in m.functions_mut() {
        let orig = snapshot.function(&f.name).unwrap();
        let fi = FuncInfo::new(orig, &snapshot);
        let mut repl: HashMap<ValueId, ValueId> = HashMap::new();
        let mut dead: HashSet<OpId> = HashSet::new();
        let mut scopes: Vec<HashMap<String, Vec<ValueId>>> = Vec::new();
        scan(&fi, &orig.body, &mut scopes, &mut repl, &mut dead, report);
        if dead.is_empty() {
            continue;
        }
        for (old, new) in &repl {
            replace_uses(f, *old, *new);
        }
        report.removed += remove_ops(&mut f.body, &mut |op| dead.contains(&op.id));
    }
}

fn key(fi: &FuncInfo, op: &Op, repl: &HashMap<ValueId, ValueId>) -> Option<String> {
    let r = |v: &ValueId| repl.get(v).copied().unwrap_or(*v).0;
    let at = match op.schedule() {
        Some(at) => {
            let ci = fi.resolve(at, &UnrollCtx::new()).ok()?;
            format!("@{}+{}", ci.root.0, ci.offset)
        }
        None => String::new(),
    };
    let tys: Vec<String> = op.results.iter().map(|v| fi.func.ty(*v).to_string()).collect();
    let body = match &op.kind {
        OpKind::Constant { value } => format!("const {value}"),
        OpKind::Binary { op: b, lhs, rhs, .. } => format!("{} {} {}", b.mnemonic(), r(lhs), r(rhs)),
        OpKind::BitSlice { src, hi, lo, .. } => format!("slice {} {hi} {lo}", r(src)),
        OpKind::Select { cond, if_true, if_false, .. } => format!("select {} {} {}", r(cond), r(if_true), r(if_false)),
        OpKind::MemRead { mem, indices, .. } => {
            format!("read {} {:?}", r(mem), indices.iter().map(r).collect::<Vec<_>>())
        }
        OpKind::Delay { src, by, .. } => format!("delay {} {by}", r(src)),
        _ => return None,
    };
    Some(format!("{body} {at} : {}", tys.join(",")))
}

fn scan(
    fi: &FuncInfo,
    region: &Region,
    scopes: &mut Vec<HashMap<String, Vec<ValueId>>>,
    repl: &mut HashMap<ValueId, ValueId>,
    dead: &mut HashSet<OpId>,
    report: &mut PassReport,
) {
    scopes.push(HashMap::new());
    for op in &region.ops {
        if let Some(k) = key(fi, op, repl) {
            let found = scopes.iter().rev().find_map(|s| s.get(&k)).cloned();
            match found {
                Some(prev) => {
                    for (old, new) in op.results.iter().zip(prev) {
                        repl.insert(*old, new);
                    }
                    dead.insert(op.id);
                    report.note(&op.span, format!("{} merged with an identical op", op.mnemonic()));
                }
                None => {
                    scopes.last_mut().unwrap().insert(k, op.results.clone());
                }
            }
        }
        if let OpKind::Loop(l) = &op.kind {
            scan(fi, &l.body, scopes, repl, dead, report);
        }
    }
    scopes.pop();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse, print};

    fn run(src: &str) -> (String, PassReport) {
        let mut m = parse(src, "c.hir").unwrap();
        let mut r = PassReport::default();
        cse(&mut m, &mut r);
        (print(&m), r)
    }

    #[test]
    fn merges_same_instant_only() {
        let src = "def @f(%x: i32 delay 0) -> (i32 delay 1) at %t {
  %a = add %x, %x at %t : i32
  %b = add %x, %x at %t : i32
  %s = add %a, %b at %t : i32
  %d = delay %s by 1 at %t : i32
  return (%d) at %t offset 1
}
";
        let (out, r) = run(src);
        assert!(out.contains("%s = add %a, %a at %t : i32"), "{out}");
        assert_eq!(r.removed, 1);
    }

    #[test]
    fn different_instants_are_kept() {
        let src = "def @f(%x: i32 delay 0) -> (i32 delay 1) at %t {
  %a = delay %x by 1 at %t : i32
  %b = add %a, %a at %t offset 1 : i32
  %c = add %x, %x at %t : i32
  %d = delay %c by 1 at %t : i32
  %e = add %b, %d at %t offset 1 : i32
  return (%e) at %t offset 1
}
";
        let (_, r) = run(src);
        assert_eq!(r.removed, 0);
    }

    #[test]
    fn duplicate_reads_merge() {
        let src = "def @f(%M: memref<4xi32, [packed], r>) -> (i32 delay 1) at %t {
  %c1 = constant 1
  %a = mem_read %M[%c1] at %t : i32
  %b = mem_read %M[%c1] at %t : i32
  %s = add %a, %b at %t offset 1 : i32
  return (%s) at %t offset 1
}
";
        let (out, r) = run(src);
        assert_eq!(out.matches("mem_read").count(), 1);
        assert_eq!(r.removed, 1);
    }
}
