//! Timing model shared by the verifier, the optimizer, the backend and the
//! simulator: canonical instants, loop metadata, latencies and validity.

use crate::ir::*;
use std::collections::HashMap;

/// A time variable resolved to a root instant plus a constant offset.
///
/// Roots are the function start, the iteration start of a `for` loop, and the
/// completion of a `for` loop. `unroll_for` instants fold into their parent's
/// root once the iteration index is known.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalInstant {
    pub root: ValueId,
    pub offset: u64,
}

impl CanonicalInstant {
    pub fn shifted(self, by: u64) -> Self {
        CanonicalInstant { root: self.root, offset: self.offset + by }
    }

    pub fn as_time_expr(self) -> TimeExpr {
        TimeExpr::new(self.root, self.offset)
    }
}

/// Iteration index chosen for each enclosing `unroll_for`.
pub type UnrollCtx = HashMap<OpId, u64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ii {
    Const(u64),
    /// Yield anchored to a root other than the iteration start.
    Variable,
}

impl Ii {
    pub fn as_const(self) -> Option<u64> {
        match self {
            Ii::Const(v) => Some(v),
            Ii::Variable => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LoopMeta {
    pub op: OpId,
    pub kind: LoopKind,
    pub parent: Option<OpId>,
    pub iv: ValueId,
    pub iter_time: ValueId,
    pub done: Option<ValueId>,
    pub lb: Option<i64>,
    pub ub: Option<i64>,
    pub step: Option<i64>,
    pub trip_count: Option<u64>,
    pub ii: Ii,
    /// Instant of the yield, relative to the loop's own roots.
    pub yield_at: Option<CanonicalInstant>,
    /// Max over body ops of (offset + latency) relative to the iteration start,
    /// when every contribution is statically known.
    pub body_latency: Option<u64>,
}

impl LoopMeta {
    /// Iteration index -> induction variable value.
    pub fn iv_at(&self, idx: u64) -> Option<i64> {
        Some(self.lb? + idx as i64 * self.step?)
    }
}

pub fn trip_count(lb: i64, ub: i64, step: i64) -> Option<u64> {
    if step <= 0 {
        return None;
    }
    if lb >= ub {
        return Some(0);
    }
    Some(((ub - lb + step - 1) / step) as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Validity {
    /// Compile-time constant.
    Always,
    /// Memrefs and time variables.
    Untimed,
    At(CanonicalInstant),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Latency {
    Fixed(u64),
    PerResult(Vec<u64>),
}

impl Latency {
    pub fn of_result(&self, idx: usize) -> u64 {
        match self {
            Latency::Fixed(c) => *c,
            Latency::PerResult(v) => v.get(idx).copied().unwrap_or(0),
        }
    }

    pub fn max(&self) -> u64 {
        match self {
            Latency::Fixed(c) => *c,
            Latency::PerResult(v) => v.iter().copied().max().unwrap_or(0),
        }
    }
}

/// Cycles from an op's start to its results (or, for writes, its effect).
///
/// Writes take one cycle; reads take one cycle from RAM and zero from register
/// arrays; arithmetic is combinational; `delay by d` takes d; calls take the
/// per-result delay of the callee signature.
pub fn latency_of(op: &Op, func: &Function, module: &Module) -> Latency {
    match &op.kind {
        OpKind::MemWrite { .. } => Latency::Fixed(1),
        OpKind::MemRead { mem, .. } => {
            Latency::Fixed(func.ty(*mem).as_memref().map(MemrefType::read_latency).unwrap_or(1))
        }
        OpKind::Delay { by, .. } => Latency::Fixed(*by),
        OpKind::Call { callee, .. } => match module.signature(callee) {
            Some(sig) => Latency::PerResult(sig.results.iter().map(|r| r.delay).collect()),
            None => Latency::Fixed(0),
        },
        _ => Latency::Fixed(0),
    }
}

/// Per-function index used by every analysis.
pub struct FuncInfo<'a> {
    pub func: &'a Function,
    pub module: &'a Module,
    pub consts: HashMap<ValueId, i64>,
    pub ops: HashMap<OpId, &'a Op>,
    /// Innermost loop whose body contains the op.
    pub parent_loop: HashMap<OpId, Option<OpId>>,
    pub loops: HashMap<OpId, LoopMeta>,
}

impl<'a> FuncInfo<'a> {
    pub fn new(func: &'a Function, module: &'a Module) -> Self {
        let mut info = FuncInfo {
            func,
            module,
            consts: func.constants(),
            ops: HashMap::new(),
            parent_loop: HashMap::new(),
            loops: HashMap::new(),
        };
        info.index_region(&func.body, None);
        info.compute_loops(&func.body);
        info
    }

    fn index_region(&mut self, region: &'a Region, parent: Option<OpId>) {
        for op in &region.ops {
            self.ops.insert(op.id, op);
            self.parent_loop.insert(op.id, parent);
            if let OpKind::Loop(l) = &op.kind {
                self.index_region(&l.body, Some(op.id));
            }
        }
    }

    /// Post-order so inner loops are known before their parents need them.
    fn compute_loops(&mut self, region: &'a Region) {
        for op in &region.ops {
            let OpKind::Loop(l) = &op.kind else { continue };
            self.compute_loops(&l.body);
            let lb = self.consts.get(&l.lb).copied();
            let ub = self.consts.get(&l.ub).copied();
            let step = self.consts.get(&l.step).copied();
            let trip = match (lb, ub, step) {
                (Some(a), Some(b), Some(c)) => trip_count(a, b, c),
                _ => None,
            };
            let mut meta = LoopMeta {
                op: op.id,
                kind: l.kind,
                parent: self.parent_loop[&op.id],
                iv: l.iv,
                iter_time: l.iter_time,
                done: op.results.first().copied(),
                lb,
                ub,
                step,
                trip_count: trip,
                ii: Ii::Variable,
                yield_at: None,
                body_latency: None,
            };
            // The loop itself stays opaque while its own yield is resolved.
            self.loops.insert(op.id, meta.clone());
            let yield_at = l.body.ops.iter().find_map(|o| match &o.kind {
                OpKind::Yield { at } => Some(at.clone()),
                _ => None,
            });
            if let Some(at) = yield_at {
                if let Ok(ci) = self.resolve(&at, &UnrollCtx::new()) {
                    meta.yield_at = Some(ci);
                    if ci.root == l.iter_time {
                        meta.ii = Ii::Const(ci.offset);
                    }
                }
            }
            self.loops.insert(op.id, meta.clone());
            meta.body_latency = self.region_latency(&l.body, l.iter_time, &UnrollCtx::new());
            self.loops.insert(op.id, meta);
        }
    }

    /// Latest (offset + latency) over ops of `region` relative to `root`, expanding
    /// unrolled loops and bounding nested `for` loops with static trip counts.
    fn region_latency(&self, region: &Region, root: ValueId, ctx: &UnrollCtx) -> Option<u64> {
        let mut max = 0u64;
        for op in &region.ops {
            let Some(at) = op.schedule() else { continue };
            let ci = self.resolve(at, ctx).ok()?;
            if ci.root != root {
                // Anchored to a nested loop completion: not statically bounded.
                return None;
            }
            match &op.kind {
                OpKind::Loop(l) => {
                    let meta = &self.loops[&op.id];
                    match l.kind {
                        LoopKind::Unrolled => {
                            let n = meta.trip_count?;
                            for idx in 0..n {
                                let mut inner = ctx.clone();
                                inner.insert(op.id, idx);
                                max = max.max(self.region_latency(&l.body, root, &inner)?);
                            }
                            let ii = meta.ii.as_const()?;
                            max = max.max(ci.offset + n * ii + 1);
                        }
                        LoopKind::Sequential => {
                            let n = meta.trip_count?;
                            let ii = meta.ii.as_const()?;
                            let body = meta.body_latency?;
                            let last = ci.offset + n.saturating_sub(1) * ii;
                            max = max.max(last + body).max(ci.offset + n * ii + 1);
                        }
                    }
                }
                _ => {
                    let lat = latency_of(op, self.func, self.module).max();
                    max = max.max(ci.offset + lat);
                }
            }
        }
        Some(max)
    }

    /// Resolves `e` to its canonical instant.
    pub fn resolve(&self, e: &TimeExpr, ctx: &UnrollCtx) -> Result<CanonicalInstant, String> {
        let mut base = e.base;
        let mut off = e.offset;
        for _ in 0..=self.func.values.len() {
            let info = self.func.value(base);
            if !info.ty.is_time() {
                return Err(format!("%{} is not a time variable", info.name));
            }
            match info.def {
                ValueDef::RootTime => return Ok(CanonicalInstant { root: base, offset: off }),
                ValueDef::IterTime(l) => {
                    let meta = self.loops.get(&l);
                    if let (Some(meta), Some(idx)) = (meta, ctx.get(&l)) {
                        if meta.kind == LoopKind::Unrolled {
                            if let Ii::Const(ii) = meta.ii {
                                let lop = self.ops[&l].as_loop().unwrap();
                                let start = self.resolve(&lop.start, ctx)?;
                                return Ok(start.shifted(idx * ii + off));
                            }
                        }
                    }
                    return Ok(CanonicalInstant { root: base, offset: off });
                }
                ValueDef::OpResult(op, 0) => {
                    let op = self.ops.get(&op).ok_or_else(|| format!("%{} has no defining op", info.name))?;
                    match &op.kind {
                        OpKind::Time { at } => {
                            base = at.base;
                            off += at.offset;
                        }
                        OpKind::Loop(l) => {
                            if let Some(meta) = self.loops.get(&op.id) {
                                if let (LoopKind::Unrolled, Ii::Const(ii), Some(n)) = (meta.kind, meta.ii, meta.trip_count)
                                {
                                    let start = self.resolve(&l.start, ctx)?;
                                    return Ok(start.shifted(n * ii + 1 + off));
                                }
                            }
                            return Ok(CanonicalInstant { root: base, offset: off });
                        }
                        _ => return Err(format!("%{} is not a time variable", info.name)),
                    }
                }
                _ => return Err(format!("%{} is not a time variable", info.name)),
            }
        }
        Err("cyclic time variable definition".into())
    }

    /// Innermost loop whose body the value lives in.
    pub fn scope_of_value(&self, v: ValueId) -> Option<OpId> {
        match self.func.value(v).def {
            ValueDef::Unresolved | ValueDef::Param(_) | ValueDef::RootTime => None,
            ValueDef::OpResult(op, _) => self.parent_loop.get(&op).copied().flatten(),
            ValueDef::InductionVar(l) | ValueDef::Accumulator(l, _) | ValueDef::IterTime(l) => Some(l),
        }
    }

    /// Loops enclosing `op`, innermost first.
    pub fn enclosing_loops(&self, op: OpId) -> Vec<OpId> {
        let mut out = Vec::new();
        let mut cur = self.parent_loop.get(&op).copied().flatten();
        while let Some(l) = cur {
            out.push(l);
            cur = self.parent_loop.get(&l).copied().flatten();
        }
        out
    }

    pub fn loop_meta_of_root(&self, root: ValueId) -> Option<&LoopMeta> {
        match self.func.value(root).def {
            ValueDef::IterTime(l) => self.loops.get(&l),
            ValueDef::OpResult(op, 0) => self.loops.get(&op),
            _ => None,
        }
    }

    /// Compile-time value of a const-typed operand under an unroll context.
    pub fn const_eval(&self, v: ValueId, ctx: &UnrollCtx) -> Option<i64> {
        if let Some(c) = self.consts.get(&v) {
            return Some(*c);
        }
        if let ValueDef::InductionVar(l) = self.func.value(v).def {
            let meta = self.loops.get(&l)?;
            if meta.kind == LoopKind::Unrolled {
                return meta.iv_at(*ctx.get(&l)?);
            }
        }
        None
    }

    /// Validity instant of a value, as seen from inside `ctx`.
    pub fn validity(&self, v: ValueId, ctx: &UnrollCtx) -> Result<Validity, String> {
        let info = self.func.value(v);
        match &info.ty {
            Type::Const => return Ok(Validity::Always),
            Type::Memref(_) | Type::Time => return Ok(Validity::Untimed),
            _ => {}
        }
        match info.def {
            ValueDef::Param(i) => Ok(Validity::At(CanonicalInstant {
                root: self.func.root_time,
                offset: self.func.params[i].delay,
            })),
            ValueDef::InductionVar(l) | ValueDef::Accumulator(l, _) => {
                let meta = &self.loops[&l];
                Ok(Validity::At(CanonicalInstant { root: meta.iter_time, offset: 0 }))
            }
            ValueDef::OpResult(op, idx) => {
                let op = self.ops[&op];
                if let OpKind::Constant { .. } = op.kind {
                    return Ok(Validity::Always);
                }
                let at = op.schedule().ok_or("unscheduled op")?;
                let ci = self.resolve(at, ctx)?;
                Ok(Validity::At(ci.shifted(latency_of(op, self.func, self.module).of_result(idx))))
            }
            _ => Err(format!("%{} has no definition", info.name)),
        }
    }

    /// Yield op of a loop body.
    pub fn yield_of(&self, l: OpId) -> Option<&'a Op> {
        let lop = self.ops.get(&l)?.as_loop()?;
        lop.body.ops.iter().find(|o| matches!(o.kind, OpKind::Yield { .. }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    fn info_of(src: &str) -> Module {
        parse(src, "t.hir").expect("parse")
    }

    #[test]
    fn resolves_parentless_base() {
        let m = info_of("def @f() at %t {\n  return at %t offset 3\n}\n");
        let f = m.function("f").unwrap();
        let fi = FuncInfo::new(f, &m);
        let ci = fi.resolve(&TimeExpr::new(f.root_time, 3), &UnrollCtx::new()).unwrap();
        assert_eq!(ci, CanonicalInstant { root: f.root_time, offset: 3 });
    }

    #[test]
    fn resolves_derived_time_by_offset_addition() {
        let m = info_of("def @f() at %t {\n  %ti = time %t offset 1\n  return at %ti offset 2\n}\n");
        let f = m.function("f").unwrap();
        let fi = FuncInfo::new(f, &m);
        let ti = f.values.iter().position(|v| v.name == "ti").unwrap();
        let ci = fi.resolve(&TimeExpr::new(ValueId(ti as u32), 2), &UnrollCtx::new()).unwrap();
        assert_eq!(ci, CanonicalInstant { root: f.root_time, offset: 3 });
        // idempotent
        assert_eq!(fi.resolve(&ci.as_time_expr(), &UnrollCtx::new()).unwrap(), ci);
    }

    #[test]
    fn trip_counts() {
        assert_eq!(trip_count(0, 16, 1), Some(16));
        assert_eq!(trip_count(2, 17, 3), Some(5));
        assert_eq!(trip_count(5, 5, 1), Some(0));
        assert_eq!(trip_count(7, 3, 1), Some(0));
        assert_eq!(trip_count(0, 3, 0), None);
    }
}
