//! Schedule verification: every operand must be valid at the instant it is
//! consumed, call operands must match callee signature delays, and no memref
//! port may serve two different addresses in one cycle.

use crate::analysis::{CanonicalInstant, FuncInfo, Ii, UnrollCtx, Validity};
use crate::diag::{DiagClass, Diagnostic};
use crate::ir::*;
use serde::Serialize;
use std::collections::HashSet;

/// Static timing facts about one loop.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LoopTimingSummary {
    pub iv: String,
    pub unrolled: bool,
    /// `None` when the yield is anchored to another loop's completion.
    pub ii: Option<u64>,
    pub trip_count: Option<u64>,
    pub body_latency: Option<u64>,
    /// Cycles from loop start to the completion event, when static.
    pub completion: Option<u64>,
}

pub fn loop_timing_summary(m: &Module, f: &Function) -> Vec<LoopTimingSummary> {
    let fi = FuncInfo::new(f, m);
    let mut ids: Vec<_> = fi.loops.keys().copied().collect();
    ids.sort();
    ids.iter()
        .map(|id| {
            let meta = &fi.loops[id];
            let ii = meta.ii.as_const();
            LoopTimingSummary {
                iv: f.name(meta.iv).to_string(),
                unrolled: meta.kind == LoopKind::Unrolled,
                ii,
                trip_count: meta.trip_count,
                body_latency: meta.body_latency,
                completion: match (meta.trip_count, ii) {
                    (Some(n), Some(ii)) => Some(n * ii + 1),
                    _ => None,
                },
            }
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Checker {
    Value,
    Staleness,
    Call,
}

pub fn check_value_timing(m: &Module, f: &Function) -> Vec<Diagnostic> {
    timing(m, f, Checker::Value)
}

pub fn check_loop_staleness(m: &Module, f: &Function) -> Vec<Diagnostic> {
    timing(m, f, Checker::Staleness)
}

pub fn check_call_alignment(m: &Module, f: &Function) -> Vec<Diagnostic> {
    timing(m, f, Checker::Call)
}

/// All four checks in order: value timing, staleness, call alignment, memref conflicts.
pub fn verify(m: &Module, f: &Function) -> Vec<Diagnostic> {
    let fi = FuncInfo::new(f, m);
    let all = TimingWalk::run(&fi);
    let mut out = Vec::new();
    for c in [Checker::Value, Checker::Staleness, Checker::Call] {
        out.extend(all.iter().filter(|(k, _)| *k == c).map(|(_, d)| d.clone()));
    }
    out.extend(memref_conflicts(&fi));
    out
}

/// Verifies every function of the module, in source order.
pub fn verify_module(m: &Module) -> Vec<Diagnostic> {
    m.functions().flat_map(|f| verify(m, f)).collect()
}

fn timing(m: &Module, f: &Function, which: Checker) -> Vec<Diagnostic> {
    let fi = FuncInfo::new(f, m);
    TimingWalk::run(&fi).into_iter().filter(|(k, _)| *k == which).map(|(_, d)| d).collect()
}

pub fn check_memref_conflicts(m: &Module, f: &Function) -> Vec<Diagnostic> {
    memref_conflicts(&FuncInfo::new(f, m))
}

fn instant_str(fi: &FuncInfo, ci: CanonicalInstant) -> String {
    if ci.offset == 0 {
        format!("%{}", fi.func.name(ci.root))
    } else {
        format!("%{} + {}", fi.func.name(ci.root), ci.offset)
    }
}

/// Lower/upper bound of the cycle of `(root, 0)` measured from `target`, which
/// must be an enclosing root.
pub(crate) fn rel_bounds(fi: &FuncInfo, root: ValueId, target: ValueId, ctx: &UnrollCtx) -> Option<(u64, u64)> {
    if root == target {
        return Some((0, 0));
    }
    let (l, is_done) = match fi.func.value(root).def {
        ValueDef::IterTime(l) => (l, false),
        ValueDef::OpResult(l, 0) if fi.loops.contains_key(&l) => (l, true),
        _ => return None,
    };
    let meta = &fi.loops[&l];
    let start = fi.resolve(&fi.ops[&l].as_loop()?.start, ctx).ok()?;
    let (lo, hi) = rel_bounds(fi, start.root, target, ctx)?;
    let n = meta.trip_count?;
    let (plo, phi) = period(fi, l, ctx)?;
    if is_done {
        Some((lo + start.offset + n * plo + 1, hi + start.offset + n * phi + 1))
    } else {
        if n == 0 {
            return None;
        }
        Some((lo + start.offset, hi + start.offset + (n - 1) * phi))
    }
}

/// Bounds on the distance between consecutive iteration starts of a loop.
fn period(fi: &FuncInfo, l: OpId, ctx: &UnrollCtx) -> Option<(u64, u64)> {
    let meta = &fi.loops[&l];
    if let Ii::Const(ii) = meta.ii {
        return Some((ii, ii));
    }
    let y = meta.yield_at?;
    let (lo, hi) = rel_bounds(fi, y.root, meta.iter_time, ctx)?;
    Some((lo + y.offset, hi + y.offset))
}

struct TimingWalk<'a, 'b> {
    fi: &'b FuncInfo<'a>,
    out: Vec<(Checker, Diagnostic)>,
    seen: HashSet<(OpId, usize, DiagClass)>,
}

impl<'a, 'b> TimingWalk<'a, 'b> {
    fn run(fi: &'b FuncInfo<'a>) -> Vec<(Checker, Diagnostic)> {
        let mut w = TimingWalk { fi, out: Vec::new(), seen: HashSet::new() };
        w.region(&fi.func.body, &UnrollCtx::new());
        w.out
    }

    fn push(&mut self, k: Checker, op: &Op, slot: usize, d: Diagnostic) {
        if self.seen.insert((op.id, slot, d.class)) {
            self.out.push((k, d));
        }
    }

    fn region(&mut self, r: &Region, ctx: &UnrollCtx) {
        for op in &r.ops {
            self.op(op, ctx);
            if let OpKind::Loop(l) = &op.kind {
                let meta = &self.fi.loops[&op.id];
                match (l.kind, meta.trip_count) {
                    (LoopKind::Unrolled, Some(n)) => {
                        for idx in 0..n {
                            let mut inner = ctx.clone();
                            inner.insert(op.id, idx);
                            self.region(&l.body, &inner);
                        }
                    }
                    _ => self.region(&l.body, ctx),
                }
            }
        }
    }

    fn op(&mut self, op: &Op, ctx: &UnrollCtx) {
        let fi = self.fi;
        let f = fi.func;
        if matches!(op.kind, OpKind::Constant { .. } | OpKind::Alloc | OpKind::Time { .. } | OpKind::Yield { .. }) {
            return;
        }
        let Some(at) = op.schedule() else { return };
        let u = match fi.resolve(at, ctx) {
            Ok(u) => u,
            Err(e) => {
                self.push(
                    Checker::Value,
                    op,
                    usize::MAX,
                    Diagnostic::error(DiagClass::TimingMismatch, op.span.clone(), format!("cannot resolve schedule: {e}")),
                );
                return;
            }
        };
        if let OpKind::Delay { by, .. } = op.kind {
            if let Some(l) = fi.parent_loop[&op.id] {
                let meta = &fi.loops[&l];
                if let (LoopKind::Sequential, Ii::Const(ii)) = (meta.kind, meta.ii) {
                    if by > ii {
                        self.push(
                            Checker::Staleness,
                            op,
                            usize::MAX - 1,
                            Diagnostic::warning(
                                DiagClass::CrossIterationDelay,
                                op.span.clone(),
                                format!(
                                    "delay by {by} outlives the initiation interval {ii}; the value is carried into later iterations"
                                ),
                            ),
                        );
                    }
                }
            }
        }
        match &op.kind {
            OpKind::Call { callee, args, .. } => {
                let Some(sig) = fi.module.signature(callee) else { return };
                for (i, (a, (pty, delay))) in args.iter().zip(&sig.params).enumerate() {
                    if matches!(pty, Type::Memref(_)) {
                        continue;
                    }
                    let want = u.shifted(*delay);
                    match fi.validity(*a, ctx) {
                        Ok(Validity::At(d)) if d != want => {
                            let msg = format!(
                                "argument {i} (%{}) of @{callee} is valid at {} but the callee expects it at {}",
                                f.name(*a),
                                instant_str(fi, d),
                                instant_str(fi, want)
                            );
                            self.push(Checker::Call, op, i, Diagnostic::error(DiagClass::PipelineImbalance, op.use_span(*a).clone(), msg));
                        }
                        _ => {}
                    }
                }
            }
            OpKind::Return { values, .. } => {
                for (i, (v, r)) in values.iter().zip(&f.results).enumerate() {
                    let want = CanonicalInstant { root: f.root_time, offset: r.delay };
                    self.check_use(op, i, *v, want, ctx, "returned");
                }
            }
            _ => {
                for (i, v) in op.data_operands().into_iter().enumerate() {
                    self.check_use(op, i, v, u, ctx, "used");
                }
            }
        }
    }

    fn check_use(&mut self, op: &Op, slot: usize, v: ValueId, u: CanonicalInstant, ctx: &UnrollCtx, verb: &str) {
        let fi = self.fi;
        let f = fi.func;
        let d = match fi.validity(v, ctx) {
            Ok(Validity::At(d)) => d,
            Ok(_) => return,
            Err(e) => {
                let d = Diagnostic::error(DiagClass::TimingMismatch, op.use_span(v).clone(), format!("cannot time %{}: {e}", f.name(v)));
                self.push(Checker::Value, op, slot, d);
                return;
            }
        };
        if d == u {
            return;
        }
        let name = f.name(v);
        let info = f.value(v);
        // Call results are registered at the callee's declared delay.
        if let ValueDef::OpResult(def, idx) = info.def {
            if let OpKind::Call { callee, .. } = &fi.ops[&def].kind {
                let msg = format!(
                    "result {idx} of @{callee} (%{name}) is valid at {} but {verb} at {}",
                    instant_str(fi, d),
                    instant_str(fi, u)
                );
                self.push(Checker::Call, op, slot, Diagnostic::error(DiagClass::PipelineImbalance, op.use_span(v).clone(), msg));
                return;
            }
        }
        if let ValueDef::InductionVar(l) | ValueDef::Accumulator(l, _) = info.def {
            let held = fi.parent_loop[&op.id] != Some(l) || u.root != d.root;
            if held {
                self.check_hold(op, slot, v, l, u, ctx);
                return;
            }
        }
        if u.root == d.root {
            let meta = fi.loop_meta_of_root(d.root).filter(|m| m.iter_time == d.root && m.kind == LoopKind::Sequential);
            if let Some(Ii::Const(ii)) = meta.map(|m| m.ii) {
                if u.offset >= d.offset + ii {
                    let msg = format!(
                        "%{name} is valid at {} but {verb} at {}, after the loop has started its next iteration (II = {ii})",
                        instant_str(fi, d),
                        instant_str(fi, u)
                    );
                    self.push(
                        Checker::Staleness,
                        op,
                        slot,
                        Diagnostic::error(DiagClass::StaleIterationValue, op.use_span(v).clone(), msg),
                    );
                    return;
                }
            }
            let hint = if u.offset > d.offset {
                format!("; insert delay by {}", u.offset - d.offset)
            } else {
                format!("; it is needed {} cycle(s) earlier", d.offset - u.offset)
            };
            let msg = format!("%{name} is valid at {} but {verb} at {}{hint}", instant_str(fi, d), instant_str(fi, u));
            self.push(Checker::Value, op, slot, Diagnostic::error(DiagClass::TimingMismatch, op.use_span(v).clone(), msg));
        } else {
            let msg = format!(
                "%{name} is valid at {} but {verb} at {}, which is not a fixed distance from it",
                instant_str(fi, d),
                instant_str(fi, u)
            );
            self.push(Checker::Value, op, slot, Diagnostic::error(DiagClass::TimingMismatch, op.use_span(v).clone(), msg));
        }
    }

    /// An induction variable keeps its value until the loop's next yield.
    fn check_hold(&mut self, op: &Op, slot: usize, v: ValueId, l: OpId, u: CanonicalInstant, ctx: &UnrollCtx) {
        let fi = self.fi;
        let meta = &fi.loops[&l];
        let name = fi.func.name(v);
        let use_b = rel_bounds(fi, u.root, meta.iter_time, ctx).map(|(lo, hi)| (lo + u.offset, hi + u.offset));
        let yield_b =
            meta.yield_at.and_then(|y| rel_bounds(fi, y.root, meta.iter_time, ctx).map(|(lo, hi)| (lo + y.offset, hi + y.offset)));
        match (use_b, yield_b) {
            (Some((_, uhi)), Some((ylo, _))) if uhi < ylo => {}
            (Some((ulo, _)), Some((_, yhi))) if ulo >= yhi => {
                let msg = format!(
                    "%{name} is used at {}, after its loop has already advanced to the next iteration",
                    instant_str(fi, u)
                );
                self.push(Checker::Staleness, op, slot, Diagnostic::error(DiagClass::StaleIterationValue, op.use_span(v).clone(), msg));
            }
            _ => {
                let msg = format!(
                    "cannot prove %{name} is still held at {}; its loop may have advanced",
                    instant_str(fi, u)
                );
                self.push(
                    Checker::Staleness,
                    op,
                    slot,
                    Diagnostic::warning(DiagClass::StaleIterationValue, op.use_span(v).clone(), msg),
                );
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum AddrTerm {
    Const(i64),
    Value(ValueId),
}

struct Access<'a> {
    op: &'a Op,
    mem: ValueId,
    at: CanonicalInstant,
    bank: Vec<i64>,
    addr: Vec<AddrTerm>,
}

fn collect_accesses<'a>(fi: &FuncInfo<'a>, r: &'a Region, ctx: &UnrollCtx, out: &mut Vec<Access<'a>>) {
    for op in &r.ops {
        match &op.kind {
            OpKind::MemRead { mem, indices, at } | OpKind::MemWrite { mem, indices, at, .. } => {
                let (Ok(ci), Some(mt)) = (fi.resolve(at, ctx), fi.func.ty(*mem).as_memref()) else { continue };
                let mut bank = Vec::new();
                let mut addr = Vec::new();
                for (idx, kind) in indices.iter().zip(&mt.dims) {
                    let c = fi.const_eval(*idx, ctx);
                    match kind {
                        DimKind::Distributed => bank.push(c.unwrap_or(-1)),
                        DimKind::Packed => addr.push(c.map(AddrTerm::Const).unwrap_or(AddrTerm::Value(*idx))),
                    }
                }
                out.push(Access { op, mem: *mem, at: ci, bank, addr });
            }
            OpKind::Loop(l) => {
                let meta = &fi.loops[&op.id];
                match (l.kind, meta.trip_count) {
                    (LoopKind::Unrolled, Some(n)) => {
                        for idx in 0..n {
                            let mut inner = ctx.clone();
                            inner.insert(op.id, idx);
                            collect_accesses(fi, &l.body, &inner, out);
                        }
                    }
                    _ => collect_accesses(fi, &l.body, ctx, out),
                }
            }
            _ => {}
        }
    }
}

fn memref_conflicts(fi: &FuncInfo) -> Vec<Diagnostic> {
    let mut acc = Vec::new();
    collect_accesses(fi, &fi.func.body, &UnrollCtx::new(), &mut acc);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, a) in acc.iter().enumerate() {
        for b in &acc[i + 1..] {
            if a.mem != b.mem || a.at.root != b.at.root || a.bank != b.bank {
                continue;
            }
            let same_iter = a.at.offset == b.at.offset;
            let cross_iter = !same_iter && {
                let meta = fi.loop_meta_of_root(a.at.root).filter(|m| m.iter_time == a.at.root);
                match meta.map(|m| (m.ii, m.trip_count)) {
                    Some((Ii::Const(ii), trip)) if ii > 0 => {
                        let gap = a.at.offset.abs_diff(b.at.offset);
                        gap % ii == 0 && trip.is_none_or(|n| gap / ii < n)
                    }
                    _ => false,
                }
            };
            if !same_iter && !cross_iter {
                continue;
            }
            let all_const = |x: &Access| x.addr.iter().all(|t| matches!(t, AddrTerm::Const(_)));
            let (late, early) = if a.op.span.line >= b.op.span.line { (a, b) } else { (b, a) };
            let key = (early.op.id, late.op.id);
            if all_const(a) && all_const(b) {
                if a.addr == b.addr {
                    continue;
                }
                if seen.insert(key) {
                    out.push(
                        Diagnostic::error(
                            DiagClass::PortConflict,
                            late.op.span.clone(),
                            format!(
                                "port %{} is accessed at two different addresses at {}",
                                fi.func.name(a.mem),
                                instant_str(fi, late.at)
                            ),
                        )
                        .with_related(early.op.span.clone(), "other access"),
                    );
                }
                continue;
            }
            if same_iter && a.addr == b.addr {
                continue;
            }
            if seen.insert(key) {
                let when = if same_iter { "in the same cycle".to_string() } else { "in overlapping iterations".to_string() };
                out.push(
                    Diagnostic::warning(
                        DiagClass::PortConflictPossible,
                        late.op.span.clone(),
                        format!(
                            "port %{} may be accessed at two addresses {when}; a runtime assertion will guard this",
                            fi.func.name(a.mem)
                        ),
                    )
                    .with_related(early.op.span.clone(), "other access"),
                );
            }
        }
    }
    out
}
