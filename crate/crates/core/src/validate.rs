//! Structural well-formedness: scoping, op placement, types, arities and
//! port permissions. Runs before any timing analysis.

use crate::analysis::{FuncInfo, Ii};
use crate::diag::{DiagClass, Diagnostic, Span};
use crate::ir::*;
use std::collections::{HashMap, HashSet};

pub fn validate_structure(m: &Module) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut seen: HashMap<&str, &Span> = HashMap::new();
    for item in &m.items {
        let (name, span) = match item {
            Item::Extern(e) => (e.name.as_str(), &e.span),
            Item::Func(f) => (f.name.as_str(), &f.span),
        };
        if let Some(prev) = seen.insert(name, span) {
            diags.push(
                Diagnostic::error(DiagClass::DuplicateFunction, span.clone(), format!("@{name} is defined more than once"))
                    .with_related(prev.clone(), "previous definition"),
            );
        }
    }
    for f in m.functions() {
        let before = diags.len();
        FuncChecker { m, f, diags: &mut diags, order: HashMap::new() }.run();
        if diags.len() == before {
            check_initiation_intervals(m, f, &mut diags);
        }
    }
    check_recursion(m, &mut diags);
    diags
}

struct FuncChecker<'a> {
    m: &'a Module,
    f: &'a Function,
    diags: &'a mut Vec<Diagnostic>,
    /// Textual position of each op.
    order: HashMap<OpId, usize>,
}

impl<'a> FuncChecker<'a> {
    fn err(&mut self, class: DiagClass, span: &Span, msg: String) {
        self.diags.push(Diagnostic::error(class, span.clone(), msg));
    }

    fn name(&self, v: ValueId) -> &str {
        self.f.name(v)
    }

    fn run(&mut self) {
        let mut n = 0;
        self.f.body.walk(&mut |op| {
            self.order.insert(op.id, n);
            n += 1;
        });
        let mut visible: Vec<ValueId> = vec![self.f.root_time];
        visible.extend(self.f.params.iter().map(|p| p.value));
        let mut vis: HashSet<ValueId> = visible.into_iter().collect();
        self.region(&self.f.body, None, &mut vis);
        let returns = self.f.body.ops.iter().filter(|o| matches!(o.kind, OpKind::Return { .. })).count();
        if returns != 1 {
            self.err(
                DiagClass::ReturnCount,
                &self.f.span,
                format!("@{} must contain exactly one return at its top level, found {returns}", self.f.name),
            );
        }
    }

    fn check_use(&mut self, v: ValueId, op: &Op, vis: &HashSet<ValueId>) -> bool {
        if vis.contains(&v) {
            return true;
        }
        let info = self.f.value(v);
        if info.def == ValueDef::Unresolved {
            // Already reported by the parser.
            return false;
        }
        let def_op = match info.def {
            ValueDef::OpResult(o, _) | ValueDef::InductionVar(o) | ValueDef::Accumulator(o, _) | ValueDef::IterTime(o) => {
                Some(o)
            }
            _ => None,
        };
        let later = def_op.and_then(|d| self.order.get(&d)).is_some_and(|&d| d >= self.order[&op.id]);
        let name = info.name.clone();
        if later {
            self.err(DiagClass::UseBeforeDef, &op.span, format!("%{name} is used before its definition"));
        } else if info.ty.is_time() {
            self.err(DiagClass::TimeNotVisible, &op.span, format!("time variable %{name} is not visible here"));
        } else {
            self.err(DiagClass::UseBeforeDef, &op.span, format!("%{name} is not in scope here"));
        }
        false
    }

    fn region(&mut self, r: &'a Region, owner: Option<&'a LoopOp>, vis: &mut HashSet<ValueId>) {
        let mut added = Vec::new();
        let mut yields = 0;
        for op in &r.ops {
            let mut ok = true;
            for v in op.all_operands() {
                ok &= self.check_use(v, op, vis);
            }
            if ok {
                self.op(op);
            }
            match &op.kind {
                OpKind::Yield { .. } => {
                    yields += 1;
                    if owner.is_none() {
                        self.err(DiagClass::MisplacedOp, &op.span, "yield outside a loop body".into());
                    }
                }
                OpKind::Return { .. } if owner.is_some() => {
                    self.err(DiagClass::MisplacedOp, &op.span, "return inside a loop body".into());
                }
                OpKind::Alloc if owner.is_some() => {
                    self.err(DiagClass::MisplacedOp, &op.span, "alloc must appear at function top level".into());
                }
                OpKind::Loop(l) => {
                    let inner: Vec<ValueId> =
                        [l.iv, l.iter_time].into_iter().chain(l.accums.iter().map(|a| a.value)).collect();
                    for v in &inner {
                        vis.insert(*v);
                    }
                    self.region(&l.body, Some(l), vis);
                    for v in &inner {
                        vis.remove(v);
                    }
                }
                _ => {}
            }
            for v in &op.results {
                vis.insert(*v);
                added.push(*v);
            }
        }
        if let Some(l) = owner {
            if yields != 1 {
                let span = r.ops.first().map(|o| o.span.clone()).unwrap_or_else(|| self.f.value(l.iter_time).span.clone());
                self.err(
                    DiagClass::YieldCount,
                    &span,
                    format!("loop body must contain exactly one yield, found {yields}"),
                );
            }
        }
        for v in added {
            vis.remove(&v);
        }
    }

    fn is_int_like(&self, v: ValueId) -> bool {
        matches!(self.f.ty(v), Type::Int(_) | Type::Const)
    }

    /// Width check for a value flowing into a slot of `width` bits.
    fn fits(&self, v: ValueId, width: u32) -> bool {
        match self.f.ty(v) {
            Type::Const => true,
            Type::Int(w) => *w <= width,
            _ => false,
        }
    }

    fn expect_time(&mut self, at: &TimeExpr, op: &Op) {
        if !self.f.ty(at.base).is_time() {
            let n = self.name(at.base).to_string();
            self.err(DiagClass::TypeMismatch, &op.span, format!("%{n} is not a time variable"));
        }
    }

    fn op(&mut self, op: &Op) {
        if let Some(at) = op.schedule() {
            self.expect_time(at, op);
        }
        let f = self.f;
        let rty = |i: usize| f.ty(op.results[i]).clone();
        match &op.kind {
            OpKind::Constant { .. } | OpKind::Time { .. } | OpKind::Yield { .. } => {}
            OpKind::Binary { lhs, rhs, .. } => {
                let Type::Int(w) = rty(0) else {
                    self.err(DiagClass::TypeMismatch, &op.span, format!("{} must produce an integer", op.mnemonic()));
                    return;
                };
                let operands = if lhs == rhs { vec![*lhs] } else { vec![*lhs, *rhs] };
                for v in operands {
                    if !self.is_int_like(v) {
                        let n = self.name(v).to_string();
                        self.err(DiagClass::TypeMismatch, &op.span, format!("operand %{n} of {} is not an integer", op.mnemonic()));
                    } else if !self.fits(v, w) {
                        let n = self.name(v).to_string();
                        self.err(
                            DiagClass::TypeMismatch,
                            &op.span,
                            format!("operand %{n} : {} is wider than the result type i{w}", f.ty(v)),
                        );
                    }
                }
            }
            OpKind::BitSlice { src, hi, lo, .. } => {
                let Some(sw) = f.ty(*src).int_width() else {
                    let n = self.name(*src).to_string();
                    self.err(DiagClass::TypeMismatch, &op.span, format!("bit_slice source %{n} is not an integer"));
                    return;
                };
                if hi < lo || *hi >= sw {
                    self.err(DiagClass::TypeMismatch, &op.span, format!("bit range [{hi} : {lo}] is invalid for i{sw}"));
                } else if rty(0) != Type::Int(hi - lo + 1) {
                    self.err(
                        DiagClass::TypeMismatch,
                        &op.span,
                        format!("bit_slice [{hi} : {lo}] produces i{}, declared {}", hi - lo + 1, rty(0)),
                    );
                }
            }
            OpKind::Select { cond, if_true, if_false, .. } => {
                if !matches!(f.ty(*cond), Type::Int(1) | Type::Const) {
                    self.err(DiagClass::TypeMismatch, &op.span, "select condition must be i1".into());
                }
                let Type::Int(w) = rty(0) else {
                    self.err(DiagClass::TypeMismatch, &op.span, "select must produce an integer".into());
                    return;
                };
                for v in [*if_true, *if_false] {
                    if !self.fits(v, w) {
                        let n = self.name(v).to_string();
                        self.err(DiagClass::TypeMismatch, &op.span, format!("select operand %{n} does not fit i{w}"));
                    }
                }
            }
            OpKind::MemRead { mem, indices, .. } => {
                if let Some(mt) = self.memref_access(op, *mem, indices) {
                    if !mt.port.can_read() {
                        let n = self.name(*mem).to_string();
                        self.err(DiagClass::PortPermission, &op.span, format!("mem_read through write-only port %{n}"));
                    }
                    if rty(0) != mt.elem.as_type() {
                        self.err(
                            DiagClass::TypeMismatch,
                            &op.span,
                            format!("mem_read result is {} but the element type is {}", rty(0), mt.elem),
                        );
                    }
                }
            }
            OpKind::MemWrite { value, mem, indices, .. } => {
                if let Some(mt) = self.memref_access(op, *mem, indices) {
                    if !mt.port.can_write() {
                        let n = self.name(*mem).to_string();
                        self.err(DiagClass::PortPermission, &op.span, format!("mem_write through read-only port %{n}"));
                    }
                    let ok = match mt.elem {
                        ElemType::Int(w) => self.fits(*value, w),
                        ElemType::Float(_) => *f.ty(*value) == mt.elem.as_type(),
                    };
                    if !ok {
                        let n = self.name(*value).to_string();
                        self.err(
                            DiagClass::TypeMismatch,
                            &op.span,
                            format!("cannot store %{n} : {} into {}", f.ty(*value), mt.elem),
                        );
                    }
                }
            }
            OpKind::Delay { src, .. } => {
                let st = f.ty(*src);
                let ok = match (st, rty(0)) {
                    (Type::Const, Type::Int(_)) => true,
                    (Type::Int(a), Type::Int(b)) => *a <= b,
                    (a, b) => a.is_primitive() && *a == b,
                };
                if !ok {
                    self.err(DiagClass::TypeMismatch, &op.span, format!("cannot delay {st} into {}", rty(0)));
                }
            }
            OpKind::Call { callee, args, .. } => {
                let Some(sig) = self.m.signature(callee) else {
                    self.err(DiagClass::UnknownCallee, &op.span, format!("call to unknown function @{callee}"));
                    return;
                };
                if sig.params.len() != args.len() {
                    self.err(
                        DiagClass::Arity,
                        &op.span,
                        format!("@{callee} takes {} argument(s), {} given", sig.params.len(), args.len()),
                    );
                    return;
                }
                if sig.results.len() != op.results.len() {
                    self.err(
                        DiagClass::Arity,
                        &op.span,
                        format!("@{callee} returns {} value(s), {} named", sig.results.len(), op.results.len()),
                    );
                    return;
                }
                for (i, (a, (pty, _))) in args.iter().zip(&sig.params).enumerate() {
                    if !arg_compatible(f.ty(*a), pty) {
                        let n = self.name(*a).to_string();
                        self.err(
                            DiagClass::TypeMismatch,
                            &op.span,
                            format!("argument {i} %{n} : {} does not match parameter type {pty}", f.ty(*a)),
                        );
                    }
                }
                for (i, r) in sig.results.iter().enumerate() {
                    if rty(i) != r.ty {
                        self.err(
                            DiagClass::TypeMismatch,
                            &op.span,
                            format!("result {i} of @{callee} is {}, declared {}", r.ty, rty(i)),
                        );
                    }
                }
            }
            OpKind::Loop(l) => self.loop_header(op, l),
            OpKind::Return { values, .. } => {
                if values.len() != f.results.len() {
                    self.err(
                        DiagClass::Arity,
                        &op.span,
                        format!("@{} returns {} value(s), return lists {}", f.name, f.results.len(), values.len()),
                    );
                    return;
                }
                for (v, r) in values.iter().zip(&f.results) {
                    if !arg_compatible(f.ty(*v), &r.ty) {
                        let n = self.name(*v).to_string();
                        self.err(
                            DiagClass::TypeMismatch,
                            &op.span,
                            format!("returned %{n} : {} does not match result type {}", f.ty(*v), r.ty),
                        );
                    }
                }
            }
            OpKind::Alloc => {
                let tys: Vec<&MemrefType> = op.results.iter().filter_map(|v| f.ty(*v).as_memref()).collect();
                if tys.len() != op.results.len() {
                    self.err(DiagClass::TypeMismatch, &op.span, "alloc results must be memrefs".into());
                } else if tys.windows(2).any(|w| !w[0].same_tensor_shape(w[1])) {
                    self.err(DiagClass::TypeMismatch, &op.span, "alloc ports must share one tensor shape".into());
                }
            }
        }
    }

    fn memref_access(&mut self, op: &Op, mem: ValueId, indices: &[ValueId]) -> Option<MemrefType> {
        let Some(mt) = self.f.ty(mem).as_memref().cloned() else {
            let n = self.name(mem).to_string();
            self.err(DiagClass::TypeMismatch, &op.span, format!("%{n} is not a memref"));
            return None;
        };
        if indices.len() != mt.rank() {
            self.err(
                DiagClass::Arity,
                &op.span,
                format!("memref of rank {} indexed with {} subscript(s)", mt.rank(), indices.len()),
            );
            return None;
        }
        for (idx, kind) in indices.iter().zip(&mt.dims) {
            if !self.is_int_like(*idx) {
                let n = self.name(*idx).to_string();
                self.err(DiagClass::TypeMismatch, &op.span, format!("index %{n} is not an integer"));
            } else if *kind == DimKind::Distributed && !self.f.ty(*idx).is_const() {
                let n = self.name(*idx).to_string();
                self.err(
                    DiagClass::DistributedIndexNotConst,
                    &op.span,
                    format!("index %{n} into a distributed dimension must be a compile-time constant"),
                );
            }
        }
        Some(mt)
    }

    fn loop_header(&mut self, op: &Op, l: &LoopOp) {
        let f = self.f;
        match l.kind {
            LoopKind::Unrolled => {
                let vals: Vec<Option<i64>> = [l.lb, l.ub, l.step].iter().map(|v| f.const_value(*v)).collect();
                if vals.iter().any(Option::is_none) {
                    self.err(
                        DiagClass::UnrollBoundsNotConst,
                        &op.span,
                        "unroll_for bounds and step must be constants".into(),
                    );
                } else if vals[2].unwrap() <= 0 {
                    self.err(DiagClass::UnrollBoundsNotConst, &op.span, "unroll_for step must be positive".into());
                }
            }
            LoopKind::Sequential => {
                let Some(w) = f.ty(l.iv).int_width() else {
                    self.err(DiagClass::TypeMismatch, &op.span, "induction variable must be an integer".into());
                    return;
                };
                for v in [l.lb, l.ub, l.step] {
                    if !self.fits(v, w) {
                        let n = self.name(v).to_string();
                        self.err(
                            DiagClass::TypeMismatch,
                            &op.span,
                            format!("loop bound %{n} : {} does not fit the induction variable type i{w}", f.ty(v)),
                        );
                    }
                }
                if let Some(s) = f.const_value(l.step) {
                    if s <= 0 {
                        self.err(DiagClass::TypeMismatch, &op.span, "loop step must be positive".into());
                    }
                }
                for a in &l.accums {
                    if f.ty(a.value).int_width().is_none() {
                        self.err(DiagClass::TypeMismatch, &op.span, "accumulators must be integers".into());
                    }
                }
            }
        }
    }
}

/// Value of type `have` may be passed where `want` is expected.
fn arg_compatible(have: &Type, want: &Type) -> bool {
    match (have, want) {
        (Type::Const, Type::Int(_)) => true,
        (Type::Int(a), Type::Int(b)) => a <= b,
        (Type::Memref(a), Type::Memref(b)) => {
            a.same_tensor_shape(b) && (!b.port.can_read() || a.port.can_read()) && (!b.port.can_write() || a.port.can_write())
        }
        (a, b) => a == b,
    }
}

fn check_initiation_intervals(m: &Module, f: &Function, diags: &mut Vec<Diagnostic>) {
    let fi = FuncInfo::new(f, m);
    let mut metas: Vec<_> = fi.loops.values().collect();
    metas.sort_by_key(|l| l.op);
    for meta in metas {
        if meta.kind == LoopKind::Sequential && meta.ii == Ii::Const(0) {
            let y = fi.yield_of(meta.op).unwrap();
            diags.push(Diagnostic::error(
                DiagClass::ZeroInitiationInterval,
                y.span.clone(),
                "a for loop must not yield at its own iteration start".to_string(),
            ));
        }
    }
}

fn check_recursion(m: &Module, diags: &mut Vec<Diagnostic>) {
    let mut edges: HashMap<&str, Vec<(&str, &Span)>> = HashMap::new();
    for f in m.functions() {
        let mut calls = Vec::new();
        f.body.walk(&mut |op| {
            if let OpKind::Call { callee, .. } = &op.kind {
                calls.push((callee.as_str(), &op.span));
            }
        });
        edges.insert(f.name.as_str(), calls);
    }
    // Colors: 1 = on stack, 2 = done.
    let mut color: HashMap<&str, u8> = HashMap::new();
    let mut reported = HashSet::new();
    fn dfs<'a>(
        n: &'a str,
        edges: &HashMap<&'a str, Vec<(&'a str, &'a Span)>>,
        color: &mut HashMap<&'a str, u8>,
        reported: &mut HashSet<&'a str>,
        diags: &mut Vec<Diagnostic>,
    ) {
        color.insert(n, 1);
        for (callee, span) in edges.get(n).map(Vec::as_slice).unwrap_or_default() {
            match color.get(callee) {
                Some(1) => {
                    if reported.insert(n) {
                        diags.push(Diagnostic::error(
                            DiagClass::Recursion,
                            (*span).clone(),
                            format!("call from @{n} to @{callee} forms a cycle; recursion has no hardware realization"),
                        ));
                    }
                }
                None if edges.contains_key(callee) => dfs(callee, edges, color, reported, diags),
                _ => {}
            }
        }
        color.insert(n, 2);
    }
    let mut names: Vec<&str> = edges.keys().copied().collect();
    names.sort();
    for n in names {
        if !color.contains_key(n) {
            dfs(n, &edges, &mut color, &mut reported, diags);
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::diag::DiagClass;
    use crate::frontend::parse_unchecked;

    fn classes(src: &str) -> Vec<DiagClass> {
        let (_, d) = parse_unchecked(src, "v.hir");
        d.into_iter().map(|d| d.class).collect()
    }

    #[test]
    fn use_before_def() {
        let src = "def @f(%a: i32 delay 0) -> (i32 delay 0) at %t {\n  %y = add %x, %a at %t : i32\n  %x = add %a, %a at %t : i32\n  return (%y) at %t\n}\n";
        assert_eq!(classes(src), vec![DiagClass::UseBeforeDef]);
    }

    #[test]
    fn inner_time_is_not_visible_outside() {
        let src = "def @f() at %t {\n  %c0 = constant 0\n  %c4 = constant 4\n  %c1 = constant 1\n  for %i : i32 = %c0 to %c4 step %c1 iter_time %ti at %t {\n    yield at %ti offset 1\n  }\n  return at %ti\n}\n";
        assert_eq!(classes(src), vec![DiagClass::TimeNotVisible]);
    }

    #[test]
    fn missing_yield_and_return() {
        let src = "def @f() at %t {\n  %c0 = constant 0\n  %c4 = constant 4\n  %c1 = constant 1\n  for %i : i32 = %c0 to %c4 step %c1 iter_time %ti at %t {\n  }\n}\n";
        let c = classes(src);
        assert!(c.contains(&DiagClass::YieldCount));
        assert!(c.contains(&DiagClass::ReturnCount));
    }

    #[test]
    fn distributed_index_must_be_const() {
        let src = "def @f(%A: memref<4xi32, [dist], r>, %i: i32 delay 0) at %t {\n  %v = mem_read %A[%i] at %t : i32\n  return at %t\n}\n";
        assert_eq!(classes(src), vec![DiagClass::DistributedIndexNotConst]);
    }

    #[test]
    fn port_permissions() {
        let src = "def @f(%A: memref<4xi32, [packed], r>, %v: i32 delay 0) at %t {\n  %c = constant 0\n  mem_write %v to %A[%c] at %t\n  return at %t\n}\n";
        assert_eq!(classes(src), vec![DiagClass::PortPermission]);
    }

    #[test]
    fn zero_ii_for_loop() {
        let src = "def @f() at %t {\n  %c0 = constant 0\n  %c4 = constant 4\n  %c1 = constant 1\n  %d = for %i : i32 = %c0 to %c4 step %c1 iter_time %ti at %t {\n    yield at %ti\n  }\n  return at %d\n}\n";
        assert_eq!(classes(src), vec![DiagClass::ZeroInitiationInterval]);
    }

    #[test]
    fn recursion_and_unknown_callee() {
        let src = "def @a(%x: i32 delay 0) at %t {\n  call @b(%x) at %t\n  return at %t\n}\n\ndef @b(%x: i32 delay 0) at %t {\n  call @a(%x) at %t\n  call @nope() at %t\n  return at %t\n}\n";
        let c = classes(src);
        assert!(c.contains(&DiagClass::Recursion));
        assert!(c.contains(&DiagClass::UnknownCallee));
    }

    #[test]
    fn operand_wider_than_result() {
        let src = "def @f(%a: i32 delay 0) -> (i8 delay 0) at %t {\n  %y = add %a, %a at %t : i8\n  return (%y) at %t\n}\n";
        assert_eq!(classes(src), vec![DiagClass::TypeMismatch]);
    }

    #[test]
    fn unroll_needs_const_bounds() {
        let src = "def @f(%n: i32 delay 0) at %t {\n  %c0 = constant 0\n  %c1 = constant 1\n  unroll_for %k = %c0 to %n step %c1 iter_time %tk at %t {\n    yield at %tk\n  }\n  return at %t\n}\n";
        assert_eq!(classes(src), vec![DiagClass::UnrollBoundsNotConst]);
    }
}
