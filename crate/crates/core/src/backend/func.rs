use super::memory::{address, lower_memref, Access, Index};
use super::*;
use crate::analysis::{CanonicalInstant, FuncInfo, Ii, UnrollCtx};
use crate::passes::counter_width;
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Module-header port declarations for one memref argument.
pub(crate) fn memref_port_decls(prefix: &str, mt: &MemrefType) -> Vec<String> {
    let aw = memory::addr_width(mt.words_per_bank());
    let w = mt.elem.width();
    let mut out = Vec::new();
    for b in 0..mt.bank_count() {
        let p = format!("{prefix}_b{b}");
        out.push(format!("output {}{p}_addr", range(aw)));
        if mt.port.can_read() {
            out.push(format!("output {p}_rd_en"));
            out.push(format!("input {}{p}_rd_data", range(w)));
        }
        if mt.port.can_write() {
            out.push(format!("output {p}_wr_en"));
            out.push(format!("output {}{p}_wr_data", range(w)));
        }
    }
    out
}

struct Src {
    en: String,
    addr: String,
    /// Write data; `None` for reads.
    data: Option<String>,
    loc: String,
}

struct PortState {
    prefix: String,
    mt: MemrefType,
    /// Index into `allocs`, or `None` for a function argument.
    alloc: Option<usize>,
    banks: BTreeMap<u64, Vec<Src>>,
}

struct AllocState {
    name: String,
    mt: MemrefType,
    ports: Vec<ValueId>,
    span: Span,
}

struct Chain {
    name: String,
    source: String,
    width: u32,
    depth: u64,
    taps: Vec<(String, u64)>,
    root: String,
    offset: u64,
    locs: Vec<String>,
}

struct Lw<'a> {
    f: &'a Function,
    m: &'a Module,
    fi: FuncInfo<'a>,
    opts: &'a LowerOptions,
    decls: Vec<String>,
    body: String,
    /// Root pulse name -> depths requested from it.
    events: BTreeMap<String, BTreeSet<u64>>,
    root_spans: HashMap<String, Span>,
    plan: FunctionPlan,
    res: FunctionResources,
    ports: HashMap<ValueId, PortState>,
    allocs: Vec<AllocState>,
    accesses: HashMap<usize, Vec<Access>>,
    chains: Vec<Chain>,
    chain_tail: HashMap<String, usize>,
    ncall: usize,
    diags: Vec<Diagnostic>,
}

pub(crate) fn lower_function(
    m: &Module,
    f: &Function,
    opts: &LowerOptions,
) -> Result<(String, FunctionPlan, FunctionResources), Vec<Diagnostic>> {
    let mut lw = Lw {
        f,
        m,
        fi: FuncInfo::new(f, m),
        opts,
        decls: Vec::new(),
        body: String::new(),
        events: BTreeMap::new(),
        root_spans: HashMap::new(),
        plan: FunctionPlan { name: f.name.clone(), ..Default::default() },
        res: FunctionResources { name: f.name.clone(), ..Default::default() },
        ports: HashMap::new(),
        allocs: Vec::new(),
        accesses: HashMap::new(),
        chains: Vec::new(),
        chain_tail: HashMap::new(),
        ncall: 0,
        diags: Vec::new(),
    };
    let header = lw.header();
    let root = lw.root_name(f.root_time, &UnrollCtx::new());
    lw.decl(format!("wire {root};"));
    lw.root_spans.insert(root.clone(), f.span.clone());
    lw.assign(&f.span, &root, "start");
    lw.region(&f.body, &UnrollCtx::new());
    lw.finish_chains();
    lw.finish_ports();
    lw.finish_events();
    if !lw.diags.is_empty() {
        return Err(lw.diags);
    }
    let res = &mut lw.res;
    res.registers = res.shift_register_stages + res.counter_bits + res.holding_registers;
    let mut out = String::new();
    loc_comment(&mut out, "", &f.span);
    out.push_str(&header);
    for d in &lw.decls {
        out.push_str("  ");
        out.push_str(d);
        out.push('\n');
    }
    out.push('\n');
    out.push_str(&lw.body);
    out.push_str(&emit_assertions(&lw.plan));
    out.push_str("endmodule\n");
    Ok((out, lw.plan, lw.res))
}

impl<'a> Lw<'a> {
    fn decl(&mut self, d: String) {
        self.decls.push(d);
    }

    fn header(&mut self) -> String {
        let f = self.f;
        let mut ports = vec!["input clk".to_string(), "input rst".to_string(), "input start".to_string()];
        for p in &f.params {
            let name = ident(f.name(p.value));
            match f.ty(p.value) {
                Type::Memref(mt) => {
                    let prefix = format!("m_{name}");
                    ports.extend(memref_port_decls(&prefix, mt));
                    self.ports.insert(p.value, PortState { prefix, mt: mt.clone(), alloc: None, banks: BTreeMap::new() });
                }
                t => ports.push(format!("input {}p_{name}", range(bus_width(t)))),
            }
        }
        for (j, r) in f.results.iter().enumerate() {
            ports.push(format!("output {}res_{j}", range(bus_width(&r.ty))));
        }
        ports.push("output done".into());
        format!("module {} (\n  {}\n);\n", ident(&f.name), ports.join(",\n  "))
    }

    /// Unroll indices of the loops enclosing the definition of `v`.
    fn instance(&self, v: ValueId, ctx: &UnrollCtx) -> Vec<u64> {
        let start = match self.f.value(v).def {
            ValueDef::IterTime(l) | ValueDef::InductionVar(l) | ValueDef::Accumulator(l, _) => Some(l),
            ValueDef::OpResult(op, _) => self.fi.parent_loop.get(&op).copied().flatten(),
            _ => None,
        };
        self.unroll_indices(start, ctx)
    }

    fn unroll_indices(&self, innermost: Option<OpId>, ctx: &UnrollCtx) -> Vec<u64> {
        let Some(l) = innermost else { return Vec::new() };
        let mut chain = vec![l];
        chain.extend(self.fi.enclosing_loops(l));
        chain
            .iter()
            .rev()
            .filter(|l| self.fi.loops[l].kind == LoopKind::Unrolled)
            .filter_map(|l| ctx.get(l).copied())
            .collect()
    }

    fn suffix(idx: &[u64]) -> String {
        idx.iter().map(|i| format!("_u{i}")).collect()
    }

    fn vname(&self, v: ValueId, ctx: &UnrollCtx) -> String {
        let n = ident(self.f.name(v));
        match self.f.value(v).def {
            ValueDef::Param(_) => format!("p_{n}"),
            _ => format!("v_{n}{}", Self::suffix(&self.instance(v, ctx))),
        }
    }

    fn val(&self, v: ValueId, ctx: &UnrollCtx, w: u32) -> String {
        match self.fi.const_eval(v, ctx) {
            Some(c) => lit(c, w),
            None => self.vname(v, ctx),
        }
    }

    fn root_name(&self, root: ValueId, ctx: &UnrollCtx) -> String {
        format!("ev_{}{}", ident(self.f.name(root)), Self::suffix(&self.instance(root, ctx)))
    }

    fn event_at(&mut self, root: &str, depth: u64) -> String {
        self.events.entry(root.to_string()).or_default().insert(depth);
        if depth == 0 {
            root.to_string()
        } else {
            format!("{root}_d{depth}")
        }
    }

    fn resolve(&mut self, at: &TimeExpr, ctx: &UnrollCtx, span: &Span) -> Option<(String, u64)> {
        match self.fi.resolve(at, ctx) {
            Ok(CanonicalInstant { root, offset }) => {
                let name = self.root_name(root, ctx);
                self.root_spans.entry(name.clone()).or_insert_with(|| self.f.value(root).span.clone());
                Some((name, offset))
            }
            Err(e) => {
                self.diags.push(Diagnostic::error(DiagClass::Internal, span.clone(), format!("no event wire: {e}")));
                None
            }
        }
    }

    fn event(&mut self, at: &TimeExpr, ctx: &UnrollCtx, span: &Span) -> String {
        match self.resolve(at, ctx, span) {
            Some((root, off)) => self.event_at(&root, off),
            None => "1'b0".into(),
        }
    }

    fn record(&mut self, op: &Op, ctx: &UnrollCtx) {
        let Some(at) = op.schedule() else { return };
        let Some((root, depth)) = self.resolve(at, ctx, &op.span) else { return };
        let event = self.event_at(&root, depth);
        let instance = self.unroll_indices(self.fi.parent_loop.get(&op.id).copied().flatten(), ctx);
        self.plan.ops.push(ScheduledOp { loc: op.span.to_string(), op: op.mnemonic().into(), instance, root, depth, event });
    }

    fn wire(&mut self, v: ValueId, ctx: &UnrollCtx) -> (String, u32) {
        let w = bus_width(self.f.ty(v));
        let n = self.vname(v, ctx);
        self.decl(format!("wire {}{n};", range(w)));
        (n, w)
    }

    fn assign(&mut self, span: &Span, lhs: &str, rhs: &str) {
        loc_comment(&mut self.body, "  ", span);
        self.body.push_str(&format!("  assign {lhs} = {rhs};\n"));
    }

    fn region(&mut self, r: &'a Region, ctx: &UnrollCtx) {
        for op in &r.ops {
            self.record(op, ctx);
            self.op(op, ctx);
        }
    }

    fn op(&mut self, op: &'a Op, ctx: &UnrollCtx) {
        let span = &op.span;
        match &op.kind {
            OpKind::Constant { .. } | OpKind::Time { .. } | OpKind::Yield { .. } => {}
            OpKind::Binary { op: b, lhs, rhs, .. } => {
                let (n, w) = self.wire(op.results[0], ctx);
                let rhs = format!(
                    "{} {} {}",
                    self.val(*lhs, ctx, w),
                    match b {
                        BinOp::Add => "+",
                        BinOp::Sub => "-",
                        BinOp::Mult => "*",
                    },
                    self.val(*rhs, ctx, w)
                );
                self.assign(span, &n, &rhs);
                *self.res.arith.entry(b.mnemonic().into()).or_insert(0) += 1;
            }
            OpKind::BitSlice { src, hi, lo, .. } => {
                let (n, w) = self.wire(op.results[0], ctx);
                let rhs = match self.fi.const_eval(*src, ctx) {
                    Some(c) => lit((const_bits(c, 64) >> lo) as i64, w),
                    None => format!("{}[{hi}:{lo}]", self.vname(*src, ctx)),
                };
                self.assign(span, &n, &rhs);
            }
            OpKind::Select { cond, if_true, if_false, .. } => {
                let (n, w) = self.wire(op.results[0], ctx);
                let rhs = format!(
                    "{} ? {} : {}",
                    self.val(*cond, ctx, 1),
                    self.val(*if_true, ctx, w),
                    self.val(*if_false, ctx, w)
                );
                self.assign(span, &n, &rhs);
                *self.res.arith.entry("select".into()).or_insert(0) += 1;
            }
            OpKind::MemRead { mem, indices, at } => {
                let en = self.event(at, ctx, span);
                let (n, _) = self.wire(op.results[0], ctx);
                if let Some(p) = self.access(*mem, indices, ctx, en, None, span) {
                    self.assign(span, &n, &format!("{p}_rd_data"));
                }
            }
            OpKind::MemWrite { value, mem, indices, at } => {
                let en = self.event(at, ctx, span);
                let w = self.f.ty(*mem).as_memref().map(|m| m.elem.width()).unwrap_or(1);
                let data = self.val(*value, ctx, w);
                self.access(*mem, indices, ctx, en, Some(data), span);
            }
            OpKind::Delay { src, by, at } => self.delay(op, *src, *by, at, ctx),
            OpKind::Call { callee, args, at } => self.call(op, callee, args, at, ctx),
            OpKind::Loop(l) => match l.kind {
                LoopKind::Sequential => self.seq_loop(op, l, ctx),
                LoopKind::Unrolled => self.unrolled(op, l, ctx),
            },
            OpKind::Return { values, at } => {
                let ev = self.event(at, ctx, span);
                self.assign(span, "done", &ev);
                for (j, v) in values.iter().enumerate() {
                    let w = bus_width(&self.f.results[j].ty);
                    let rhs = self.val(*v, ctx, w);
                    self.assign(span, &format!("res_{j}"), &rhs);
                }
            }
            OpKind::Alloc => {
                let Some(mt) = op.results.first().and_then(|r| self.f.ty(*r).as_memref()).cloned() else { return };
                let idx = self.allocs.len();
                let name = format!("mem_{}", ident(self.f.name(op.results[0])));
                for r in &op.results {
                    let pmt = self.f.ty(*r).as_memref().unwrap().clone();
                    let prefix = format!("m_{}", ident(self.f.name(*r)));
                    self.ports.insert(*r, PortState { prefix, mt: pmt, alloc: Some(idx), banks: BTreeMap::new() });
                }
                self.allocs.push(AllocState { name, mt, ports: op.results.clone(), span: span.clone() });
            }
        }
    }

    /// Adds an access to a port and returns the bank's signal prefix.
    fn access(
        &mut self,
        mem: ValueId,
        indices: &[ValueId],
        ctx: &UnrollCtx,
        en: String,
        data: Option<String>,
        span: &Span,
    ) -> Option<String> {
        let mt = self.ports.get(&mem)?.mt.clone();
        let idx: Vec<Index> = indices
            .iter()
            .map(|i| match self.fi.const_eval(*i, ctx) {
                Some(c) => Index::Const(c as u64),
                None => Index::Signal(self.vname(*i, ctx)),
            })
            .collect();
        for (d, (i, v)) in idx.iter().zip(indices).enumerate() {
            self.bounds_assertion(&mt, d, i, *v, &en, span);
        }
        let (bank, addr) = address(&mt, &idx);
        let pname = self.f.name(mem).to_string();
        let port = self.ports.get_mut(&mem)?;
        let prefix = format!("{}_b{bank}", port.prefix);
        let write = data.is_some();
        port.banks.entry(bank).or_default().push(Src { en: en.clone(), addr: addr.clone(), data, loc: span.to_string() });
        if let Some(a) = port.alloc {
            let consts = idx.iter().map(|i| if let Index::Const(c) = i { Some(*c) } else { None }).collect();
            self.accesses.entry(a).or_default().push(Access { port: pname, indices: consts, span: span.clone() });
            if !write {
                let name = self.allocs[a].name.clone();
                self.plan.assertions.push(AssertionSite {
                    kind: AssertionKind::InitializedRead,
                    loc: span.to_string(),
                    enable: en,
                    condition: format!("vld_{name}_b{bank}[{addr}]"),
                    message: format!("read of an uninitialized element of %{}", self.f.name(mem)),
                    folded: None,
                });
            }
        }
        Some(prefix)
    }

    fn bounds_assertion(&mut self, mt: &MemrefType, d: usize, i: &Index, v: ValueId, en: &str, span: &Span) {
        let ext = mt.shape[d];
        let folded = match i {
            Index::Const(c) => Some(*c < ext),
            Index::Signal(_) => self.static_range(v).map(|(lo, hi)| lo >= 0 && (hi as u64) < ext).filter(|ok| *ok),
        };
        let cond = match i {
            Index::Const(c) => format!("{c} < {ext}"),
            Index::Signal(n) => format!("{n} < {}", lit(ext as i64, 64)),
        };
        self.plan.assertions.push(AssertionSite {
            kind: AssertionKind::InBounds,
            loc: span.to_string(),
            enable: en.to_string(),
            condition: cond,
            message: format!("index {d} out of bounds (extent {ext})"),
            folded,
        });
    }

    /// Value range of a `for` induction variable with constant bounds.
    fn static_range(&self, v: ValueId) -> Option<(i64, i64)> {
        let ValueDef::InductionVar(l) = self.f.value(v).def else { return None };
        let meta = &self.fi.loops[&l];
        let n = meta.trip_count?;
        if n == 0 {
            return Some((0, 0));
        }
        Some((meta.lb?, meta.iv_at(n - 1)?))
    }

    fn delay(&mut self, op: &Op, src: ValueId, by: u64, at: &TimeExpr, ctx: &UnrollCtx) {
        let (n, w) = self.wire(op.results[0], ctx);
        let source = self.val(src, ctx, w);
        if by == 0 {
            self.assign(&op.span, &n, &source);
            return;
        }
        let Some((root, offset)) = self.resolve(at, ctx, &op.span) else { return };
        if let Some(&c) = self.chain_tail.get(&source) {
            let ch = &mut self.chains[c];
            if ch.width == w && ch.root == root && ch.offset + ch.depth == offset {
                ch.depth += by;
                ch.taps.push((n.clone(), ch.depth));
                ch.locs.push(op.span.to_string());
                self.chain_tail.remove(&source);
                self.chain_tail.insert(n, c);
                return;
            }
        }
        self.chain_tail.insert(n.clone(), self.chains.len());
        self.chains.push(Chain {
            name: format!("sr_{}", n.trim_start_matches("v_")),
            source,
            width: w,
            depth: by,
            taps: vec![(n, by)],
            root,
            offset,
            locs: vec![op.span.to_string()],
        });
    }

    fn call(&mut self, op: &Op, callee: &str, args: &[ValueId], at: &TimeExpr, ctx: &UnrollCtx) {
        let start = self.event(at, ctx, &op.span);
        let inst = format!("call{}_{}", self.ncall, ident(callee));
        self.ncall += 1;
        let (params, external): (Vec<(String, Type)>, bool) = match self.m.function(callee) {
            Some(g) => (g.params.iter().map(|p| (g.name(p.value).to_string(), g.ty(p.value).clone())).collect(), false),
            None => match self.m.extern_decl(callee) {
                Some(e) => (e.params.iter().map(|(n, t, _)| (n.clone(), t.clone())).collect(), true),
                None => return,
            },
        };
        let mut conns = vec![".clk(clk)".to_string()];
        if !external {
            conns.push(".rst(rst)".into());
        }
        conns.push(format!(".start({start})"));
        for ((pname, pty), arg) in params.iter().zip(args) {
            let pn = ident(pname);
            match pty {
                Type::Memref(cmt) => {
                    for b in 0..cmt.bank_count() {
                        let theirs = format!("m_{pn}_b{b}");
                        let mine = format!("{inst}_{theirs}");
                        let aw = memory::addr_width(cmt.words_per_bank());
                        let w = cmt.elem.width();
                        self.decl(format!("wire {}{mine}_addr;", range(aw)));
                        conns.push(format!(".{theirs}_addr({mine}_addr)"));
                        let Some(port) = self.ports.get(arg) else { continue };
                        let here = format!("{}_b{b}", port.prefix);
                        let alloc = port.alloc;
                        let mut srcs = Vec::new();
                        if cmt.port.can_read() {
                            self.decl(format!("wire {mine}_rd_en;"));
                            conns.push(format!(".{theirs}_rd_en({mine}_rd_en)"));
                            conns.push(format!(".{theirs}_rd_data({here}_rd_data)"));
                            srcs.push(Src {
                                en: format!("{mine}_rd_en"),
                                addr: format!("{mine}_addr"),
                                data: None,
                                loc: op.span.to_string(),
                            });
                        }
                        if cmt.port.can_write() {
                            self.decl(format!("wire {mine}_wr_en;"));
                            self.decl(format!("wire {}{mine}_wr_data;", range(w)));
                            conns.push(format!(".{theirs}_wr_en({mine}_wr_en)"));
                            conns.push(format!(".{theirs}_wr_data({mine}_wr_data)"));
                            srcs.push(Src {
                                en: format!("{mine}_wr_en"),
                                addr: format!("{mine}_addr"),
                                data: Some(format!("{mine}_wr_data")),
                                loc: op.span.to_string(),
                            });
                        }
                        let port = self.ports.get_mut(arg).unwrap();
                        port.banks.entry(b).or_default().extend(srcs);
                        if let Some(a) = alloc {
                            let mut idx = vec![None; cmt.rank()];
                            // Pick any index tuple that lands in bank b.
                            let mut rem = b;
                            for d in (0..cmt.rank()).rev() {
                                if cmt.dims[d] == DimKind::Distributed {
                                    idx[d] = Some(rem % cmt.shape[d]);
                                    rem /= cmt.shape[d];
                                }
                            }
                            let pname = self.f.name(*arg).to_string();
                            self.accesses.entry(a).or_default().push(Access { port: pname, indices: idx, span: op.span.clone() });
                        }
                    }
                }
                t => {
                    let v = self.val(*arg, ctx, bus_width(t));
                    conns.push(format!(".p_{pn}({v})"));
                }
            }
        }
        for (j, r) in op.results.iter().enumerate() {
            let (n, _) = self.wire(*r, ctx);
            conns.push(format!(".res_{j}({n})"));
        }
        if !external {
            conns.push(".done()".into());
        }
        loc_comment(&mut self.body, "  ", &op.span);
        self.body.push_str(&format!("  {} {inst} (\n    {}\n  );\n", ident(callee), conns.join(",\n    ")));
        self.plan.calls.push(CallInstance {
            instance: inst,
            callee: callee.to_string(),
            external,
            loc: op.span.to_string(),
            start_event: start,
        });
    }

    fn seq_loop(&mut self, op: &'a Op, l: &'a LoopOp, ctx: &UnrollCtx) {
        let span = &op.span;
        let meta = self.fi.loops[&op.id].clone();
        let s = self.event(&l.start, ctx, span);
        let ti = self.root_name(l.iter_time, ctx);
        let inst = Self::suffix(&self.instance(l.iter_time, ctx));
        let name = format!("loop_{}{inst}", ident(self.f.name(l.iv)));
        let y = match self.fi.yield_of(op.id).and_then(|y| y.schedule()) {
            Some(at) => self.event(at, ctx, span),
            None => "1'b0".into(),
        };
        let iw = bus_width(self.f.ty(l.iv));
        let cw = match (meta.lb, meta.ub, meta.step) {
            (Some(a), Some(b), Some(c)) => counter_width(a, b, c).unwrap_or(iw).max(iw),
            _ => iw,
        };
        let mut latched = 0;
        let lb = self.val(l.lb, ctx, cw);
        let mut bound = |lw: &mut Self, v: ValueId, what: &str| -> (String, String, Bound) {
            match lw.fi.const_eval(v, ctx) {
                Some(c) => (lit(c, cw), lit(c, cw), Bound::Const(c)),
                None => {
                    let w = bus_width(lw.f.ty(v));
                    let q = format!("{name}_{what}_q");
                    lw.decl(format!("reg {}{q};", range(w)));
                    latched += w;
                    let live = lw.vname(v, ctx);
                    (live.clone(), q.clone(), Bound::Signal(live))
                }
            }
        };
        let (ub_now, ub_q, ub_b) = bound(self, l.ub, "ub");
        let (step_now, step_q, step_b) = bound(self, l.step, "step");
        let lb_b = match self.fi.const_eval(l.lb, ctx) {
            Some(c) => Bound::Const(c),
            None => Bound::Signal(lb.clone()),
        };
        let done = match op.loop_done() {
            Some(d) => self.root_name(d, ctx),
            None => format!("{name}_done"),
        };
        let iv = self.vname(l.iv, ctx);
        let r = range(cw);
        self.decl(format!("wire {ti};"));
        self.decl(format!("wire {done};"));
        self.decl(format!("reg {r}{name}_cnt;"));
        self.decl(format!("reg {name}_done_r;"));
        self.decl(format!("wire {r}{name}_next;"));
        self.decl(format!("wire {name}_more;"));
        self.decl(format!("wire {}{iv};", range(iw)));
        let b = &mut self.body;
        loc_comment(b, "  ", span);
        b.push_str(&format!("  assign {name}_next = {name}_cnt + {step_q};\n"));
        b.push_str(&format!("  assign {name}_more = {name}_next < {ub_q};\n"));
        b.push_str(&format!("  assign {ti} = ({s} && ({lb} < {ub_now})) || ({y} && {name}_more);\n"));
        b.push_str(&format!("  assign {iv} = {s} ? {lb} : ({y} ? {name}_next : {name}_cnt);\n"));
        b.push_str(&format!("  assign {done} = {name}_done_r;\n"));
        loc_comment(b, "  ", span);
        b.push_str("  always @(posedge clk) begin\n");
        b.push_str(&format!(
            "    if (rst) {name}_done_r <= 1'b0;\n    else {name}_done_r <= ({s} && !({lb} < {ub_now})) || ({y} && !{name}_more);\n"
        ));
        b.push_str(&format!("    if ({s}) {name}_cnt <= {lb};\n    else if ({y}) {name}_cnt <= {name}_next;\n"));
        if let Bound::Signal(_) = ub_b {
            b.push_str(&format!("    if ({s}) {ub_q} <= {ub_now};\n"));
        }
        if let Bound::Signal(_) = step_b {
            b.push_str(&format!("    if ({s}) {step_q} <= {step_now};\n"));
        }
        b.push_str("  end\n");
        let mut accs = Vec::new();
        for a in &l.accums {
            let aw = bus_width(self.f.ty(a.value));
            let av = self.vname(a.value, ctx);
            let (init, step) = (lit(a.init, aw), lit(a.step, aw));
            self.decl(format!("reg {}{av}_r;", range(aw)));
            self.decl(format!("wire {}{av};", range(aw)));
            let b = &mut self.body;
            loc_comment(b, "  ", span);
            b.push_str(&format!("  assign {av} = {s} ? {init} : ({y} ? {av}_r + {step} : {av}_r);\n"));
            b.push_str(&format!(
                "  always @(posedge clk) begin\n    if ({s}) {av}_r <= {init};\n    else if ({y}) {av}_r <= {av}_r + {step};\n  end\n"
            ));
            accs.push((av, aw));
        }
        let lb_static = matches!((&lb_b, &ub_b), (Bound::Const(a), Bound::Const(b)) if a <= b);
        let lb_const_bad = matches!((&lb_b, &ub_b), (Bound::Const(a), Bound::Const(b)) if a > b);
        self.plan.assertions.push(AssertionSite {
            kind: AssertionKind::LoopBounds,
            loc: span.to_string(),
            enable: s.clone(),
            condition: format!("{lb} <= {ub_now}"),
            message: format!("loop over %{} starts with lower bound above upper bound", self.f.name(l.iv)),
            folded: if lb_static { Some(true) } else if lb_const_bad { Some(false) } else { None },
        });
        self.res.counter_bits += (cw + accs.iter().map(|a| a.1).sum::<u32>()) as u64;
        self.res.holding_registers += latched as u64;
        self.res.counters.push(CounterInfo { iv: self.f.name(l.iv).into(), loc: span.to_string(), width: cw });
        self.plan.loops.push(LoopController {
            name,
            loc: span.to_string(),
            iv,
            counter_width: cw,
            lb: lb_b,
            ub: ub_b,
            step: step_b,
            ii: meta.ii.as_const(),
            trip_count: meta.trip_count,
            start_event: s,
            iter_event: ti.clone(),
            yield_event: y,
            done_event: done,
            accumulators: accs,
            latched_bits: latched,
        });
        self.root_spans.insert(ti.clone(), span.clone());
        self.root_spans.insert(self.plan.loops.last().unwrap().done_event.clone(), span.clone());
        self.events.entry(ti).or_default().insert(0);
        self.region(&l.body, ctx);
    }

    fn unrolled(&mut self, op: &'a Op, l: &'a LoopOp, ctx: &UnrollCtx) {
        let meta = self.fi.loops[&op.id].clone();
        let Some(n) = meta.trip_count else { return };
        let variable = meta.ii == Ii::Variable;
        let yield_at = self.fi.yield_of(op.id).and_then(|y| y.schedule()).cloned();
        let mut prev: Option<String> = None;
        for idx in 0..n {
            let mut inner = ctx.clone();
            inner.insert(op.id, idx);
            if variable {
                let ti = self.root_name(l.iter_time, &inner);
                let src = match &prev {
                    None => self.event(&l.start, ctx, &op.span),
                    Some(p) => p.clone(),
                };
                self.decl(format!("wire {ti};"));
                self.assign(&op.span, &ti, &src);
                self.events.entry(ti).or_default().insert(0);
            }
            self.region(&l.body, &inner);
            if variable {
                if let Some(at) = &yield_at {
                    prev = Some(self.event(at, &inner, &op.span));
                }
            }
        }
        if let (true, Some(done)) = (variable, op.loop_done()) {
            let name = self.root_name(done, ctx);
            let src = match &yield_at {
                Some(at) if n > 0 => {
                    let mut last = ctx.clone();
                    last.insert(op.id, n - 1);
                    self.resolve(&at.shifted(1), &last, &op.span).map(|(r, o)| self.event_at(&r, o))
                }
                _ => Some(self.event(&l.start.shifted(1), ctx, &op.span)),
            };
            self.decl(format!("wire {name};"));
            self.assign(&op.span, &name, &src.unwrap_or_else(|| "1'b0".into()));
            self.events.entry(name).or_default().insert(0);
        }
    }

    fn finish_chains(&mut self) {
        for c in std::mem::take(&mut self.chains) {
            let r = range(c.width);
            self.decl(format!("reg {r}{} [1:{}];", c.name, c.depth));
            let mut text = String::new();
            for l in &c.locs {
                text.push_str(&format!("  // {l}\n"));
            }
            text.push_str("  always @(posedge clk) begin\n");
            for k in 1..=c.depth {
                let en = self.event_at(&c.root, c.offset + k - 1);
                let from = if k == 1 { c.source.clone() } else { format!("{}[{}]", c.name, k - 1) };
                text.push_str(&format!("    if ({en}) {}[{k}] <= {from};\n", c.name));
            }
            text.push_str("  end\n");
            for (tap, d) in &c.taps {
                text.push_str(&format!("  assign {tap} = {}[{d}];\n", c.name));
            }
            self.body.push_str(&text);
            self.res.shift_register_stages += c.depth;
            self.res.shift_register_bits += c.depth * c.width as u64;
            self.plan.shift_registers.push(ShiftChain {
                name: c.name,
                source: c.source,
                width: c.width,
                depth: c.depth,
                taps: c.taps.into_iter().map(|(value, depth)| Tap { value, depth }).collect(),
                enable_root: c.root,
                enable_offset: c.offset,
                locs: c.locs,
            });
        }
    }

    fn finish_ports(&mut self) {
        // Storage bindings first, so the port limit is checked before any text is produced.
        let mut params: Vec<ValueId> = self.f.params.iter().map(|p| p.value).filter(|v| self.ports.contains_key(v)).collect();
        params.sort();
        for v in &params {
            let p = &self.ports[v];
            let acc: Vec<Access> = Vec::new();
            let b = lower_memref(
                self.f.name(*v),
                &p.mt,
                &[(self.f.name(*v).to_string(), p.mt.port)],
                &acc,
                true,
                self.opts.ram_style,
                self.opts.port_limit,
                &self.f.value(*v).span,
            )
            .unwrap();
            self.plan.memories.push(b);
        }
        for (i, a) in self.allocs.iter().enumerate() {
            let ports: Vec<(String, PortKind)> = a
                .ports
                .iter()
                .map(|p| (self.f.name(*p).to_string(), self.f.ty(*p).as_memref().unwrap().port))
                .collect();
            let acc = self.accesses.get(&i).map(Vec::as_slice).unwrap_or(&[]);
            match lower_memref(
                &a.name,
                &a.mt,
                &ports,
                acc,
                false,
                self.opts.ram_style,
                self.opts.port_limit,
                &a.span,
            ) {
                Ok(b) => {
                    match b.kind {
                        StorageKind::Registers => self.res.register_arrays += b.banks,
                        _ => self.res.ram_instances += b.banks,
                    }
                    self.plan.memories.push(b);
                }
                Err(d) => self.diags.push(d),
            }
        }
        // Port muxes.
        let mut order: Vec<ValueId> = self.ports.keys().copied().collect();
        order.sort();
        for v in order {
            let p = self.ports.get(&v).unwrap();
            let aw = memory::addr_width(p.mt.words_per_bank());
            let w = p.mt.elem.width();
            let is_param = p.alloc.is_none();
            let banks: Vec<u64> = if is_param { (0..p.mt.bank_count()).collect() } else { p.banks.keys().copied().collect() };
            let mut text = String::new();
            let mut decls = Vec::new();
            let mut asserts = Vec::new();
            for b in banks {
                let pre = format!("{}_b{b}", p.prefix);
                let empty = Vec::new();
                let srcs = p.banks.get(&b).unwrap_or(&empty);
                let reads: Vec<&Src> = srcs.iter().filter(|s| s.data.is_none()).collect();
                let writes: Vec<&Src> = srcs.iter().filter(|s| s.data.is_some()).collect();
                let mux = |items: &[&Src], f: &dyn Fn(&Src) -> String, zero: String| {
                    let mut e = zero;
                    for s in items.iter().rev() {
                        e = format!("{} ? {} : {e}", s.en, f(s));
                    }
                    e
                };
                let ors = |items: &[&Src]| {
                    if items.is_empty() {
                        "1'b0".to_string()
                    } else {
                        items.iter().map(|s| s.en.as_str()).collect::<Vec<_>>().join(" | ")
                    }
                };
                let all: Vec<&Src> = srcs.iter().collect();
                if !is_param {
                    decls.push(format!("wire {}{pre}_addr;", range(aw)));
                }
                text.push_str(&format!("  // {} %{} bank {b}\n", self.f.value(v).span, self.f.name(v)));
                text.push_str(&format!("  assign {pre}_addr = {};\n", mux(&all, &|s| s.addr.clone(), lit(0, aw))));
                let readable = if is_param { p.mt.port.can_read() } else { !reads.is_empty() };
                let writable = if is_param { p.mt.port.can_write() } else { !writes.is_empty() };
                if readable {
                    if !is_param {
                        decls.push(format!("wire {pre}_rd_en;"));
                    }
                    text.push_str(&format!("  assign {pre}_rd_en = {};\n", ors(&reads)));
                }
                if writable {
                    if !is_param {
                        decls.push(format!("wire {pre}_wr_en;"));
                        decls.push(format!("wire {}{pre}_wr_data;", range(w)));
                    }
                    text.push_str(&format!("  assign {pre}_wr_en = {};\n", ors(&writes)));
                    text.push_str(&format!(
                        "  assign {pre}_wr_data = {};\n",
                        mux(&writes, &|s| s.data.clone().unwrap(), lit(0, w))
                    ));
                }
                for i in 0..all.len() {
                    for j in i + 1..all.len() {
                        let (a, c) = (all[i], all[j]);
                        if a.addr == c.addr && a.data == c.data {
                            continue;
                        }
                        asserts.push(AssertionSite {
                            kind: AssertionKind::PortExclusive,
                            loc: c.loc.clone(),
                            enable: format!("{} && {}", a.en, c.en),
                            condition: format!("{} == {}", a.addr, c.addr),
                            message: format!("two transactions on port %{} in one cycle (other at {})", self.f.name(v), a.loc),
                            folded: None,
                        });
                    }
                }
            }
            self.decls.extend(decls);
            self.body.push_str(&text);
            self.plan.assertions.extend(asserts);
        }
        // Storage arrays.
        for a in &self.allocs {
            let w = a.mt.elem.width();
            let words = a.mt.words_per_bank();
            let kind = self.plan.memories.iter().find(|m| m.name == a.name).map(|m| m.kind);
            let Some(kind) = kind else { continue };
            for b in 0..a.mt.bank_count() {
                let arr = format!("{}_b{b}", a.name);
                let live: Vec<&PortState> =
                    a.ports.iter().filter_map(|p| self.ports.get(p)).filter(|p| p.banks.contains_key(&b)).collect();
                if live.is_empty() {
                    continue;
                }
                let attr = match kind {
                    StorageKind::Block => "(* ram_style = \"block\" *) ",
                    StorageKind::Dist => "(* ram_style = \"distributed\" *) ",
                    _ => "",
                };
                self.decls.push(format!("{attr}reg {}{arr} [0:{}];", range(w), words - 1));
                let mut text = String::new();
                loc_comment(&mut text, "  ", &a.span);
                text.push_str("  always @(posedge clk) begin\n");
                for p in &live {
                    let pre = format!("{}_b{b}", p.prefix);
                    if p.banks[&b].iter().any(|s| s.data.is_some()) {
                        text.push_str(&format!("    if ({pre}_wr_en) {arr}[{pre}_addr] <= {pre}_wr_data;\n"));
                    }
                }
                text.push_str("  end\n");
                for p in &live {
                    let pre = format!("{}_b{b}", p.prefix);
                    if !p.banks[&b].iter().any(|s| s.data.is_none()) {
                        continue;
                    }
                    if kind == StorageKind::Registers {
                        self.decls.push(format!("wire {}{pre}_rd_data;", range(w)));
                        text.push_str(&format!("  assign {pre}_rd_data = {arr}[{pre}_addr];\n"));
                    } else {
                        self.decls.push(format!("reg {}{pre}_rd_data;", range(w)));
                        text.push_str(&format!(
                            "  always @(posedge clk) if ({pre}_rd_en) {pre}_rd_data <= {arr}[{pre}_addr];\n"
                        ));
                    }
                }
                self.body.push_str(&text);
            }
        }
    }

    fn finish_events(&mut self) {
        let events = std::mem::take(&mut self.events);
        for (root, depths) in &events {
            let max = depths.iter().copied().max().unwrap_or(0);
            for d in depths {
                let name = if *d == 0 { root.clone() } else { format!("{root}_d{d}") };
                self.plan.events.push(EventWire { name, root: root.clone(), depth: *d });
            }
            if max == 0 {
                continue;
            }
            let sr = format!("{root}_sr");
            if let Some(span) = self.root_spans.get(root) {
                loc_comment(&mut self.body, "  ", span);
            }
            self.decls.push(format!("reg [{max}:1] {sr};"));
            let shift = if max == 1 { root.clone() } else { format!("{{{sr}[{}:1], {root}}}", max - 1) };
            self.body.push_str(&format!(
                "  always @(posedge clk) {sr} <= rst ? {max}'d0 : {shift};\n"
            ));
            for d in depths.iter().filter(|d| **d > 0) {
                self.decls.push(format!("wire {root}_d{d};"));
                self.body.push_str(&format!("  assign {root}_d{d} = {sr}[{d}];\n"));
            }
        }
    }
}
