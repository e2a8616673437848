//! Cycle-accurate interpreter.
//!
//! Every scheduled op becomes an activation queued at the absolute cycle its
//! time expression resolves to. Loop iterations and calls get their own
//! frames, so overlapping iterations of a pipelined loop never share values.
//! Within a cycle activations fire in dataflow order; memory reads see the
//! state from before the cycle and writes commit at its end.

mod io;
mod trace;

pub use io::{ScriptTxn, SimInputs};
pub use trace::{CycleRecord, PortTxn, Trace};

use crate::diag::{DiagClass, Diagnostic, Span};
use crate::ir::*;
use io::{flatten, input_error};
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};

pub const DEFAULT_MAX_CYCLES: u64 = 1_000_000;

/// Activations one cycle may fire before the run is declared stuck.
const CYCLE_ACTIVATION_LIMIT: usize = 5_000_000;

/// A two-state bit pattern plus the poison flag.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Val {
    pub bits: u64,
    pub poison: bool,
}

impl Val {
    pub const POISON: Val = Val { bits: 0, poison: true };

    pub fn of(bits: u64) -> Val {
        Val { bits, poison: false }
    }

    pub fn signed(self, width: u32) -> Option<i64> {
        (!self.poison).then(|| sext(self.bits, width))
    }
}

/// Sign-extends the low `width` bits.
pub fn sext(bits: u64, width: u32) -> i64 {
    if width == 0 || width >= 64 {
        bits as i64
    } else {
        let s = 64 - width;
        ((bits << s) as i64) >> s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum UbKind {
    OutOfBounds,
    PortConflict,
    UninitializedRead,
    BoundInversion,
    LoopReentry,
}

impl UbKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UbKind::OutOfBounds => "out-of-bounds",
            UbKind::PortConflict => "port-conflict",
            UbKind::UninitializedRead => "uninitialized-read",
            UbKind::BoundInversion => "bound-inversion",
            UbKind::LoopReentry => "loop-reentry",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UbEvent {
    pub kind: UbKind,
    pub cycle: u64,
    pub loc: String,
    pub details: String,
}

impl std::fmt::Display for UbEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "cycle {}: {}: {}: {}", self.cycle, self.loc, self.kind.as_str(), self.details)
    }
}

/// A value consumed in a cycle where it does not hold: too early, too late,
/// or after its loop moved on. The consumer sees poison.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TimingFault {
    pub cycle: u64,
    pub loc: String,
    pub value: String,
    pub details: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimResult {
    pub top: String,
    pub completion_cycle: u64,
    /// Function results, sign-extended; `None` is poison.
    pub results: Vec<Option<i64>>,
    /// Final contents of every memref argument; `None` is unwritten or poison.
    pub tensors: BTreeMap<String, Vec<Option<i64>>>,
    pub ub: Vec<UbEvent>,
    pub timing_faults: Vec<TimingFault>,
    #[serde(skip)]
    pub trace: Trace,
}

impl SimResult {
    /// Results and tensors only, for comparing runs.
    pub fn outputs(&self) -> (&[Option<i64>], &BTreeMap<String, Vec<Option<i64>>>) {
        (&self.results, &self.tensors)
    }
}

#[derive(Clone, Copy, Debug)]
enum Until {
    Always,
    /// Only in the cycle the value becomes ready.
    Exact,
    /// From ready until the yield of this iteration frame.
    Held(usize),
}

#[derive(Clone, Copy, Debug)]
struct Slot {
    val: Val,
    ready: u64,
    until: Until,
}

struct Frame<'m> {
    parent: Option<usize>,
    func: &'m Function,
    /// Call-instance prefix for names; empty for the top function.
    path: String,
    /// Enclosing `unroll_for` indices, outermost first.
    unroll: Vec<u64>,
    vals: HashMap<ValueId, Slot>,
    times: HashMap<ValueId, u64>,
    ports: HashMap<ValueId, usize>,
    run: Option<usize>,
    yield_at: Option<u64>,
}

struct Tensor {
    mt: MemrefType,
    cells: Vec<Option<Val>>,
}

struct Port {
    tensor: usize,
    name: String,
}

struct LoopRun<'m> {
    op: &'m Op,
    lop: &'m LoopOp,
    frame: usize,
    key: String,
    idx: u64,
    iv: u64,
    ub: u64,
    step: u64,
}

struct ExternCall<'m> {
    decl: &'m ExternDecl,
    args: Vec<Option<Val>>,
}

enum Dest {
    Value(usize, ValueId),
    Result(usize),
}

enum Sink {
    Param(usize, ValueId),
    ExternArg(usize, usize),
}

enum Act<'m> {
    Op(usize, &'m Op),
    Sample { caller: usize, arg: ValueId, to: Sink, span: &'m Span },
    Deliver { from: usize, src: ValueId, to: Dest, span: &'m Span },
    ExternOut { call: usize, j: usize, to: Dest, span: &'m Span },
    Script { port: usize, cell: usize, bank: u64, data: u64 },
}

/// Simulation state; advance it with [`SimState::step`].
pub struct SimState<'m> {
    module: &'m Module,
    top: &'m Function,
    cycle: u64,
    frames: Vec<Frame<'m>>,
    runs: Vec<LoopRun<'m>>,
    externs: Vec<ExternCall<'m>>,
    tensors: Vec<Tensor>,
    ports: Vec<Port>,
    pending: BTreeMap<u64, Vec<Act<'m>>>,
    waiting: Vec<(usize, &'m Op)>,
    writes: Vec<(usize, usize, Val)>,
    port_log: HashMap<(usize, u64), Vec<u64>>,
    /// Loop instance -> completion cycle, `None` while running.
    active: HashMap<String, Option<u64>>,
    traced: HashMap<ValueId, String>,
    completion: Option<u64>,
    results: Vec<Val>,
    ub: Vec<UbEvent>,
    faults: Vec<TimingFault>,
    trace: Trace,
    fatal: Option<Diagnostic>,
}

/// Runs `top` to completion and then drains every activation still queued.
pub fn run(m: &Module, top: &str, inputs: &SimInputs) -> Result<SimResult, Diagnostic> {
    let max = inputs.max_cycles.unwrap_or(DEFAULT_MAX_CYCLES);
    let mut st = SimState::new(m, top, inputs)?;
    while !st.finished() {
        st.skip_idle();
        if st.cycle > max {
            return Err(Diagnostic::error(
                DiagClass::SimTimeout,
                st.top.span.clone(),
                format!("@{top} did not finish within {max} cycles"),
            ));
        }
        st.step()?;
    }
    st.into_result()
}

fn width_of(t: &Type) -> u32 {
    match t {
        Type::Int(w) | Type::Float(w) => *w,
        Type::Const => 64,
        _ => 1,
    }
}

fn flat_index(mt: &MemrefType, idx: &[u64]) -> usize {
    idx.iter().zip(&mt.shape).fold(0u64, |a, (i, e)| a * e + i) as usize
}

fn unroll_suffix(u: &[u64]) -> String {
    u.iter().map(|i| format!("_u{i}")).collect()
}

impl<'m> SimState<'m> {
    pub fn new(m: &'m Module, top: &str, inputs: &SimInputs) -> Result<Self, Diagnostic> {
        let f = m.function(top).ok_or_else(|| input_error(format!("no function named @{top}")))?;
        let mut st = SimState {
            module: m,
            top: f,
            cycle: 0,
            frames: Vec::new(),
            runs: Vec::new(),
            externs: Vec::new(),
            tensors: Vec::new(),
            ports: Vec::new(),
            pending: BTreeMap::new(),
            waiting: Vec::new(),
            writes: Vec::new(),
            port_log: HashMap::new(),
            active: HashMap::new(),
            traced: HashMap::new(),
            completion: None,
            results: vec![Val::POISON; f.results.len()],
            ub: Vec::new(),
            faults: Vec::new(),
            trace: Trace::default(),
            fatal: None,
        };
        let fr = st.new_frame(None, f, String::new(), Vec::new(), None);

        let mut scalars: Vec<&str> = Vec::new();
        let mut mems: Vec<&str> = Vec::new();
        for p in &f.params {
            let name = f.name(p.value);
            match f.ty(p.value) {
                Type::Memref(mt) => {
                    mems.push(name);
                    let words: u64 = mt.shape.iter().product();
                    let mut cells = vec![None; words as usize];
                    if let Some(v) = inputs.tensors.get(name) {
                        let mut flat = Vec::new();
                        flatten(name, v, &mut flat)?;
                        if flat.len() as u64 != words {
                            return Err(input_error(format!(
                                "tensor '{name}' has {} elements but %{name} holds {words}",
                                flat.len()
                            )));
                        }
                        let w = mt.elem.width();
                        cells = flat.iter().map(|x| x.map(|x| Val::of(mask(x as u64, w)))).collect();
                    } else if mt.port.can_read() && !inputs.ports.contains_key(name) {
                        return Err(input_error(format!("no tensor or port script for %{name}")));
                    }
                    let t = st.tensors.len();
                    st.tensors.push(Tensor { mt: mt.clone(), cells });
                    let port = st.ports.len();
                    st.ports.push(Port { tensor: t, name: name.to_string() });
                    st.frames[fr].ports.insert(p.value, port);
                    for txn in inputs.ports.get(name).into_iter().flatten() {
                        if !mt.in_bounds(&txn.index) {
                            return Err(input_error(format!(
                                "port script for %{name}: index {:?} does not fit shape {:?}",
                                txn.index, mt.shape
                            )));
                        }
                        let act = Act::Script {
                            port,
                            cell: flat_index(mt, &txn.index),
                            bank: mt.bank_of(&txn.index),
                            data: mask(txn.data as u64, mt.elem.width()),
                        };
                        st.pending.entry(txn.cycle).or_default().push(act);
                    }
                }
                t => {
                    scalars.push(name);
                    let Some(v) = inputs.scalars.get(name) else {
                        return Err(input_error(format!("no value for scalar argument %{name}")));
                    };
                    let slot = Slot { val: Val::of(mask(*v as u64, width_of(t))), ready: p.delay, until: Until::Exact };
                    st.frames[fr].vals.insert(p.value, slot);
                }
            }
        }
        for k in inputs.scalars.keys() {
            if !scalars.contains(&k.as_str()) {
                return Err(input_error(format!("@{top} has no scalar argument %{k}")));
            }
        }
        for k in inputs.tensors.keys().chain(inputs.ports.keys()) {
            if !mems.contains(&k.as_str()) {
                return Err(input_error(format!("@{top} has no memref argument %{k}")));
            }
        }
        for n in &inputs.trace {
            let Some(i) = f.values.iter().position(|v| &v.name == n) else {
                return Err(input_error(format!("cannot trace %{n}: no such value in @{top}")));
            };
            st.traced.insert(ValueId(i as u32), n.clone());
        }

        st.bind_time(fr, f.root_time, 0);
        st.deliver_results(fr, f, None);
        st.elaborate(fr, &f.body);
        Ok(st)
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// No activation is left to fire.
    pub fn finished(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn completion_cycle(&self) -> Option<u64> {
        self.completion
    }

    pub fn ub_events(&self) -> &[UbEvent] {
        &self.ub
    }

    pub fn timing_faults(&self) -> &[TimingFault] {
        &self.faults
    }

    /// Jumps over cycles in which nothing is scheduled.
    pub fn skip_idle(&mut self) {
        if let Some(&next) = self.pending.keys().next() {
            if next > self.cycle {
                self.cycle = next;
            }
        }
    }

    /// Fires every activation of the current cycle, commits its writes and
    /// advances the cycle counter by one.
    pub fn step(&mut self) -> Result<(), Diagnostic> {
        let now = self.cycle;
        let mut fired = 0usize;
        while let Some(acts) = self.pending.remove(&now) {
            let mut blocked = Vec::new();
            let mut progress = false;
            for a in acts {
                if self.ready(&a) {
                    self.fire(a);
                    fired += 1;
                    progress = true;
                } else {
                    blocked.push(a);
                }
            }
            if !progress {
                // Whatever is left reads values that never arrive this cycle.
                let at = blocked.iter().position(|a| matches!(a, Act::Op(..))).unwrap_or(0);
                let first = blocked.remove(at);
                self.fire(first);
                fired += 1;
            }
            if let Some(d) = self.fatal.take() {
                return Err(d);
            }
            if fired > CYCLE_ACTIVATION_LIMIT {
                return Err(Diagnostic::error(
                    DiagClass::SimTimeout,
                    self.top.span.clone(),
                    format!("cycle {now} never settles; a loop is probably stepping in zero cycles"),
                ));
            }
            if !blocked.is_empty() {
                let fresh = self.pending.remove(&now).unwrap_or_default();
                blocked.extend(fresh);
                self.pending.insert(now, blocked);
            }
        }
        for (t, cell, v) in std::mem::take(&mut self.writes) {
            let w = self.tensors[t].mt.elem.width();
            self.tensors[t].cells[cell] = Some(Val { bits: mask(v.bits, w), poison: v.poison });
        }
        self.port_log.clear();
        self.cycle += 1;
        Ok(())
    }

    /// The loop-reentry event for starting loop instance `key` now, if its
    /// previous activation has not completed.
    pub fn check_loop_reentry(&self, key: &str, span: &Span) -> Option<UbEvent> {
        let busy = match self.active.get(key)? {
            None => true,
            Some(done) => *done > self.cycle,
        };
        busy.then(|| UbEvent {
            kind: UbKind::LoopReentry,
            cycle: self.cycle,
            loc: span.to_string(),
            details: format!("loop {key} restarted before its previous activation completed"),
        })
    }

    pub fn into_result(self) -> Result<SimResult, Diagnostic> {
        let f = self.top;
        let Some(completion_cycle) = self.completion else {
            return Err(Diagnostic::error(
                DiagClass::Internal,
                f.span.clone(),
                format!("@{} never reached its return", f.name),
            ));
        };
        let results = self.results.iter().zip(&f.results).map(|(v, r)| v.signed(width_of(&r.ty))).collect();
        let mut tensors = BTreeMap::new();
        for p in &f.params {
            if let Some(&port) = self.frames[0].ports.get(&p.value) {
                let t = &self.tensors[self.ports[port].tensor];
                let w = t.mt.elem.width();
                let cells = t.cells.iter().map(|c| c.and_then(|v| v.signed(w))).collect();
                tensors.insert(f.name(p.value).to_string(), cells);
            }
        }
        Ok(SimResult {
            top: f.name.clone(),
            completion_cycle,
            results,
            tensors,
            ub: self.ub,
            timing_faults: self.faults,
            trace: self.trace,
        })
    }

    fn new_frame(
        &mut self,
        parent: Option<usize>,
        func: &'m Function,
        path: String,
        unroll: Vec<u64>,
        run: Option<usize>,
    ) -> usize {
        self.frames.push(Frame {
            parent,
            func,
            path,
            unroll,
            vals: HashMap::new(),
            times: HashMap::new(),
            ports: HashMap::new(),
            run,
            yield_at: None,
        });
        self.frames.len() - 1
    }

    fn push(&mut self, cycle: u64, act: Act<'m>) {
        self.pending.entry(cycle).or_default().push(act);
    }

    fn elaborate(&mut self, fr: usize, region: &'m Region) {
        for op in &region.ops {
            match &op.kind {
                OpKind::Constant { value } => {
                    let slot = Slot { val: Val::of(*value as u64), ready: 0, until: Until::Always };
                    self.frames[fr].vals.insert(op.results[0], slot);
                }
                OpKind::Alloc => self.alloc(fr, op),
                _ => self.schedule(fr, op),
            }
        }
    }

    fn alloc(&mut self, fr: usize, op: &'m Op) {
        let f = self.frames[fr].func;
        let Some(mt) = op.results.first().and_then(|r| f.ty(*r).as_memref()) else { return };
        let words: u64 = mt.shape.iter().product();
        let t = self.tensors.len();
        self.tensors.push(Tensor { mt: mt.clone(), cells: vec![None; words as usize] });
        let frame = &self.frames[fr];
        let sfx = unroll_suffix(&frame.unroll);
        let names: Vec<String> = op.results.iter().map(|r| format!("{}{}{sfx}", frame.path, f.name(*r))).collect();
        for (r, name) in op.results.iter().zip(names) {
            let port = self.ports.len();
            self.ports.push(Port { tensor: t, name });
            self.frames[fr].ports.insert(*r, port);
        }
    }

    fn time_of(&self, mut fr: usize, v: ValueId) -> Option<u64> {
        loop {
            let frame = &self.frames[fr];
            if let Some(c) = frame.times.get(&v) {
                return Some(*c);
            }
            fr = frame.parent?;
        }
    }

    fn schedule(&mut self, fr: usize, op: &'m Op) {
        let at = op.schedule().expect("scheduled op");
        let Some(base) = self.time_of(fr, at.base) else {
            self.waiting.push((fr, op));
            return;
        };
        let c = base + at.offset;
        if c < self.cycle {
            self.fatal = Some(Diagnostic::error(
                DiagClass::Internal,
                op.span.clone(),
                format!("{} resolved to cycle {c}, which has already passed", op.mnemonic()),
            ));
            return;
        }
        match &op.kind {
            OpKind::Time { .. } => self.bind_time(fr, op.results[0], c),
            OpKind::Yield { .. } => {
                self.frames[fr].yield_at = Some(c);
                self.push(c, Act::Op(fr, op));
            }
            _ => self.push(c, Act::Op(fr, op)),
        }
    }

    fn bind_time(&mut self, fr: usize, v: ValueId, c: u64) {
        let frame = &mut self.frames[fr];
        frame.times.insert(v, c);
        let name = format!("{}{}{}", frame.path, frame.func.name(v), unroll_suffix(&frame.unroll));
        self.trace.at(c).events.push(name);
        loop {
            let before = self.waiting.len();
            if before == 0 {
                break;
            }
            for (f, op) in std::mem::take(&mut self.waiting) {
                self.schedule(f, op);
            }
            if self.waiting.len() == before {
                break;
            }
        }
    }

    fn lookup(&self, mut fr: usize, v: ValueId) -> Option<Slot> {
        loop {
            let frame = &self.frames[fr];
            if let Some(s) = frame.vals.get(&v) {
                return Some(*s);
            }
            fr = frame.parent?;
        }
    }

    fn port_of(&self, mut fr: usize, v: ValueId) -> Option<usize> {
        loop {
            let frame = &self.frames[fr];
            if let Some(p) = frame.ports.get(&v) {
                return Some(*p);
            }
            fr = frame.parent?;
        }
    }

    fn holds(&self, s: &Slot, now: u64) -> bool {
        match s.until {
            Until::Always => true,
            Until::Exact => now == s.ready,
            Until::Held(fr) => now >= s.ready && self.frames[fr].yield_at.is_none_or(|y| now < y),
        }
    }

    fn fault(&mut self, span: &Span, fr: usize, v: ValueId, details: String) {
        let name = self.frames[fr].func.name(v).to_string();
        self.faults.push(TimingFault { cycle: self.cycle, loc: span.to_string(), value: format!("%{name}"), details });
    }

    fn ub_event(&mut self, kind: UbKind, span: &Span, details: String) {
        self.ub.push(UbEvent { kind, cycle: self.cycle, loc: span.to_string(), details });
    }

    /// Reads `v` as seen from frame `fr` in the current cycle.
    fn read(&mut self, fr: usize, v: ValueId, span: &Span) -> Val {
        let now = self.cycle;
        match self.lookup(fr, v) {
            None => {
                self.fault(span, fr, v, "not available in this cycle".into());
                Val::POISON
            }
            Some(s) if self.holds(&s, now) => s.val,
            Some(s) => {
                let details = match s.until {
                    Until::Held(_) => format!("valid from cycle {} until its loop advanced", s.ready),
                    _ => format!("valid only in cycle {}", s.ready),
                };
                self.fault(span, fr, v, details);
                Val::POISON
            }
        }
    }

    fn set(&mut self, fr: usize, v: ValueId, val: Val, ready: u64, until: Until) {
        let w = width_of(self.frames[fr].func.ty(v));
        let val = Val { bits: mask(val.bits, w), poison: val.poison };
        self.frames[fr].vals.insert(v, Slot { val, ready, until });
        if fr == 0 {
            if let Some(n) = self.traced.get(&v) {
                let n = n.clone();
                self.trace.at(ready).values.push((n, val.signed(w)));
            }
        }
    }

    fn ready(&self, a: &Act) -> bool {
        match a {
            Act::Op(fr, op) => match &op.kind {
                OpKind::Call { .. } | OpKind::Return { .. } | OpKind::Yield { .. } => true,
                _ => op.data_operands().iter().all(|v| {
                    matches!(self.frames[*fr].func.ty(*v), Type::Memref(_) | Type::Time)
                        || self.lookup(*fr, *v).is_some()
                }),
            },
            Act::Sample { caller, arg, .. } => self.lookup(*caller, *arg).is_some(),
            Act::Deliver { from, src, .. } => self.lookup(*from, *src).is_some(),
            Act::ExternOut { call, .. } => self.externs[*call].args.iter().all(Option::is_some),
            Act::Script { .. } => true,
        }
    }

    fn fire(&mut self, a: Act<'m>) {
        let now = self.cycle;
        match a {
            Act::Op(fr, op) => self.fire_op(fr, op),
            Act::Sample { caller, arg, to, span } => {
                let v = self.read(caller, arg, span);
                match to {
                    Sink::Param(fr, p) => self.set(fr, p, v, now, Until::Exact),
                    Sink::ExternArg(k, i) => self.externs[k].args[i] = Some(v),
                }
            }
            Act::Deliver { from, src, to, span } => {
                let v = self.read(from, src, span);
                self.deliver(to, v);
            }
            Act::ExternOut { call, j, to, span } => {
                let v = self.extern_result(call, j, span);
                self.deliver(to, v);
            }
            Act::Script { port, cell, bank, data } => {
                let t = self.ports[port].tensor;
                self.writes.push((t, cell, Val::of(data)));
                let w = self.tensors[t].mt.elem.width();
                self.trace.at(now).ports.push(PortTxn {
                    port: format!("{}_script", self.ports[port].name),
                    bank,
                    write: true,
                    addr: Some(cell as u64),
                    data: Some(sext(data, w)),
                });
            }
        }
    }

    fn deliver(&mut self, to: Dest, v: Val) {
        let now = self.cycle;
        match to {
            Dest::Value(fr, dst) => self.set(fr, dst, v, now, Until::Exact),
            Dest::Result(j) => {
                let w = width_of(&self.top.results[j].ty);
                self.results[j] = Val { bits: mask(v.bits, w), poison: v.poison };
                self.trace.at(now).values.push((format!("res{j}"), self.results[j].signed(w)));
            }
        }
    }

    fn fire_op(&mut self, fr: usize, op: &'m Op) {
        let now = self.cycle;
        let f = self.frames[fr].func;
        let span = &op.span;
        match &op.kind {
            OpKind::Binary { op: b, lhs, rhs, .. } => {
                let r = op.results[0];
                if let Type::Float(_) = f.ty(r) {
                    self.fatal = Some(Diagnostic::error(
                        DiagClass::Unsupported,
                        span.clone(),
                        "the simulator has no floating-point arithmetic",
                    ));
                    return;
                }
                let w = width_of(f.ty(r));
                let (x, y) = (self.read(fr, *lhs, span), self.read(fr, *rhs, span));
                let v = Val { bits: b.eval(mask(x.bits, w), mask(y.bits, w), w), poison: x.poison || y.poison };
                self.set(fr, r, v, now, Until::Exact);
            }
            OpKind::BitSlice { src, hi, lo, .. } => {
                let s = self.read(fr, *src, span);
                let bits = if *lo >= 64 { 0 } else { mask(s.bits >> lo, hi - lo + 1) };
                self.set(fr, op.results[0], Val { bits, poison: s.poison }, now, Until::Exact);
            }
            OpKind::Select { cond, if_true, if_false, .. } => {
                let c = self.read(fr, *cond, span);
                let t = self.read(fr, *if_true, span);
                let e = self.read(fr, *if_false, span);
                let v = if c.poison {
                    Val::POISON
                } else if c.bits & 1 == 1 {
                    t
                } else {
                    e
                };
                self.set(fr, op.results[0], v, now, Until::Exact);
            }
            OpKind::MemRead { mem, indices, .. } => {
                let idx: Vec<Val> = indices.iter().map(|i| self.read(fr, *i, span)).collect();
                let lat = f.ty(*mem).as_memref().map_or(1, MemrefType::read_latency);
                let v = self.access(fr, *mem, &idx, None, span);
                self.set(fr, op.results[0], v, now + lat, Until::Exact);
            }
            OpKind::MemWrite { value, mem, indices, .. } => {
                let v = self.read(fr, *value, span);
                let idx: Vec<Val> = indices.iter().map(|i| self.read(fr, *i, span)).collect();
                self.access(fr, *mem, &idx, Some(v), span);
            }
            OpKind::Delay { src, by, .. } => {
                let v = self.read(fr, *src, span);
                self.set(fr, op.results[0], v, now + by, Until::Exact);
            }
            OpKind::Call { callee, args, .. } => self.call(fr, op, callee, args),
            OpKind::Loop(l) => self.start_loop(fr, op, l),
            OpKind::Yield { .. } => self.end_iteration(fr),
            OpKind::Return { .. } => {
                let frame = &self.frames[fr];
                let name = format!("{}return", frame.path);
                self.trace.at(now).events.push(name);
                if fr == 0 {
                    self.completion = Some(now);
                }
            }
            OpKind::Constant { .. } | OpKind::Time { .. } | OpKind::Alloc => {}
        }
    }

    /// One memory transaction. Returns the read data (poison for writes).
    fn access(&mut self, fr: usize, mem: ValueId, idx: &[Val], write: Option<Val>, span: &Span) -> Val {
        let Some(port) = self.port_of(fr, mem) else {
            self.fatal =
                Some(Diagnostic::error(DiagClass::Internal, span.clone(), "memref operand is not bound to a port"));
            return Val::POISON;
        };
        let t = self.ports[port].tensor;
        let mt = self.tensors[t].mt.clone();
        let now = self.cycle;
        let pname = self.ports[port].name.clone();
        if idx.iter().any(|v| v.poison) {
            self.trace.at(now).ports.push(PortTxn {
                port: pname,
                bank: 0,
                write: write.is_some(),
                addr: None,
                data: write.and_then(|v| v.signed(mt.elem.width())),
            });
            return Val::POISON;
        }
        let raw: Vec<u64> = idx.iter().map(|v| v.bits).collect();
        if !mt.in_bounds(&raw) {
            let shown: Vec<i64> = raw.iter().map(|b| *b as i64).collect();
            self.ub_event(UbKind::OutOfBounds, span, format!("%{pname}{shown:?} is outside shape {:?}", mt.shape));
            return Val::POISON;
        }
        let bank = mt.bank_of(&raw);
        let cell = flat_index(&mt, &raw);
        let log = self.port_log.entry((port, bank)).or_default();
        let clash = log.iter().find(|a| **a != cell as u64).copied();
        log.push(cell as u64);
        if let Some(other) = clash {
            self.ub_event(
                UbKind::PortConflict,
                span,
                format!("port %{pname} bank {bank} accessed at cells {other} and {cell} in one cycle"),
            );
        }
        let w = mt.elem.width();
        match write {
            Some(v) => {
                self.trace.at(now).ports.push(PortTxn {
                    port: pname,
                    bank,
                    write: true,
                    addr: Some(cell as u64),
                    data: v.signed(w),
                });
                self.writes.push((t, cell, v));
                Val::POISON
            }
            None => {
                let v = match self.tensors[t].cells[cell] {
                    Some(v) => v,
                    None => {
                        self.ub_event(UbKind::UninitializedRead, span, format!("%{pname}{raw:?} was never written"));
                        Val::POISON
                    }
                };
                self.trace.at(now).ports.push(PortTxn {
                    port: pname,
                    bank,
                    write: false,
                    addr: Some(cell as u64),
                    data: v.signed(w),
                });
                v
            }
        }
    }

    fn deliver_results(&mut self, callee_fr: usize, g: &'m Function, caller: Option<(usize, &'m Op)>) {
        let Some(ret) = g.body.ops.iter().find(|o| matches!(o.kind, OpKind::Return { .. })) else { return };
        let OpKind::Return { values, .. } = &ret.kind else { return };
        let start = self.time_of(callee_fr, g.root_time).unwrap_or(self.cycle);
        for (j, (v, sig)) in values.iter().zip(&g.results).enumerate() {
            let to = match caller {
                Some((fr, op)) => Dest::Value(fr, op.results[j]),
                None => Dest::Result(j),
            };
            self.push(start + sig.delay, Act::Deliver { from: callee_fr, src: *v, to, span: &ret.span });
        }
    }

    fn call(&mut self, fr: usize, op: &'m Op, callee: &str, args: &[ValueId]) {
        let now = self.cycle;
        if let Some(g) = self.module.function(callee) {
            let frame = &self.frames[fr];
            let path = format!("{}call{}{}_{}.", frame.path, op.id.0, unroll_suffix(&frame.unroll), callee);
            let nf = self.new_frame(None, g, path, Vec::new(), None);
            for (p, a) in g.params.iter().zip(args) {
                if g.ty(p.value).as_memref().is_some() {
                    if let Some(port) = self.port_of(fr, *a) {
                        self.frames[nf].ports.insert(p.value, port);
                    }
                } else {
                    let s = Act::Sample { caller: fr, arg: *a, to: Sink::Param(nf, p.value), span: &op.span };
                    self.push(now + p.delay, s);
                }
            }
            self.bind_time(nf, g.root_time, now);
            self.deliver_results(nf, g, Some((fr, op)));
            self.elaborate(nf, &g.body);
            return;
        }
        let Some(decl) = self.module.extern_decl(callee) else {
            self.fatal = Some(Diagnostic::error(DiagClass::UnknownCallee, op.span.clone(), format!("no callee @{callee}")));
            return;
        };
        if decl.model.is_none() {
            self.fatal = Some(Diagnostic::error(
                DiagClass::Unsupported,
                op.span.clone(),
                format!("extern @{callee} has no behavioral model to simulate"),
            ));
            return;
        }
        let k = self.externs.len();
        let args_init =
            decl.params.iter().map(|(_, t, _)| if t.as_memref().is_some() { Some(Val::of(0)) } else { None }).collect();
        self.externs.push(ExternCall { decl, args: args_init });
        for (i, ((_, t, d), a)) in decl.params.iter().zip(args).enumerate() {
            if t.as_memref().is_none() {
                self.push(now + d, Act::Sample { caller: fr, arg: *a, to: Sink::ExternArg(k, i), span: &op.span });
            }
        }
        for (j, r) in decl.results.iter().enumerate() {
            let to = Dest::Value(fr, op.results[j]);
            self.push(now + r.delay, Act::ExternOut { call: k, j, to, span: &op.span });
        }
    }

    fn extern_result(&mut self, call: usize, j: usize, span: &Span) -> Val {
        let ec = &self.externs[call];
        let w = width_of(&ec.decl.results[j].ty);
        let args: Vec<Val> = ec.args.iter().map(|a| a.unwrap_or(Val::POISON)).collect();
        let poison = args.iter().any(|a| a.poison);
        let arg = |i: usize| args.get(i).map_or(0, |a| mask(a.bits, w));
        let bits = match ec.decl.model.as_deref().unwrap_or_default() {
            "mul" => arg(0).wrapping_mul(arg(1)),
            "add" => arg(0).wrapping_add(arg(1)),
            "sub" => arg(0).wrapping_sub(arg(1)),
            "id" | "pass" => arg(0),
            other => {
                self.fatal = Some(Diagnostic::error(
                    DiagClass::Unsupported,
                    span.clone(),
                    format!("unknown extern model '{other}' (known: mul, add, sub, id)"),
                ));
                0
            }
        };
        Val { bits: mask(bits, w), poison }
    }

    fn start_loop(&mut self, fr: usize, op: &'m Op, l: &'m LoopOp) {
        let now = self.cycle;
        let frame = &self.frames[fr];
        let key = format!("{}{}#{}{}", frame.path, frame.func.name(l.iv), op.id.0, unroll_suffix(&frame.unroll));
        if let Some(e) = self.check_loop_reentry(&key, &op.span) {
            self.ub.push(e);
        }
        self.active.insert(key.clone(), None);
        let lb = self.read(fr, l.lb, &op.span);
        let ub = self.read(fr, l.ub, &op.span);
        let step = self.read(fr, l.step, &op.span);
        let r = self.runs.len();
        self.runs.push(LoopRun { op, lop: l, frame: fr, key, idx: 0, iv: lb.bits, ub: ub.bits, step: step.bits });
        let poisoned = lb.poison || ub.poison || step.poison;
        if poisoned {
            self.ub_event(UbKind::BoundInversion, &op.span, "loop bounds are poison; the loop is skipped".into());
        } else if lb.bits > ub.bits {
            let name = self.frames[fr].func.name(l.iv).to_string();
            self.ub_event(
                UbKind::BoundInversion,
                &op.span,
                format!("loop %{name} starts with lb {} > ub {}", lb.bits as i64, ub.bits as i64),
            );
        }
        if !poisoned && lb.bits < ub.bits {
            self.iteration(r);
        } else {
            self.finish_loop(r, now + 1);
        }
    }

    fn iteration(&mut self, r: usize) {
        let now = self.cycle;
        let run = &self.runs[r];
        let (op, l, pfr, idx) = (run.op, run.lop, run.frame, run.idx);
        let parent = &self.frames[pfr];
        let (func, path) = (parent.func, parent.path.clone());
        let mut unroll = parent.unroll.clone();
        if l.kind == LoopKind::Unrolled {
            unroll.push(idx);
        }
        let nf = self.new_frame(Some(pfr), func, path, unroll, Some(r));
        let iv_until = if l.kind == LoopKind::Unrolled { Until::Always } else { Until::Held(nf) };
        self.set(nf, l.iv, Val::of(self.runs[r].iv), now, iv_until);
        for a in &l.accums {
            let v = (a.init as u64).wrapping_add((a.step as u64).wrapping_mul(idx));
            self.set(nf, a.value, Val::of(v), now, Until::Held(nf));
        }
        let _ = op;
        self.bind_time(nf, l.iter_time, now);
        self.elaborate(nf, &l.body);
    }

    fn end_iteration(&mut self, fr: usize) {
        let now = self.cycle;
        let Some(r) = self.frames[fr].run else { return };
        let run = &mut self.runs[r];
        let next = run.iv.wrapping_add(run.step);
        if next < run.ub && next > run.iv {
            run.iv = next;
            run.idx += 1;
            self.iteration(r);
        } else {
            self.finish_loop(r, now + 1);
        }
    }

    fn finish_loop(&mut self, r: usize, done: u64) {
        let run = &self.runs[r];
        let (key, fr, op) = (run.key.clone(), run.frame, run.op);
        self.active.insert(key, Some(done));
        if let Some(dv) = op.loop_done() {
            self.bind_time(fr, dv, done);
        }
    }
}
