//! Verilog generation. Schedules become one-bit event pulses delayed through
//! flop chains, `for` loops become counters, memrefs become banked arrays and
//! delays become clock-enabled shift registers.

mod assertions;
mod externs;
mod func;
mod memory;

pub use assertions::emit_assertions;
pub use externs::emit_extern_decl;
pub use memory::{lower_memref, StorageBinding, StorageKind};

use crate::diag::{DiagClass, Diagnostic, Span};
use crate::ir::*;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RamStyle {
    /// Follow the storage kind declared in the IR.
    #[default]
    Auto,
    Block,
    Dist,
    Reg,
}

impl FromStr for RamStyle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(RamStyle::Auto),
            "block" => Ok(RamStyle::Block),
            "dist" => Ok(RamStyle::Dist),
            "reg" => Ok(RamStyle::Reg),
            _ => Err(format!("unknown ram style '{s}' (expected auto, block, dist or reg)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LowerOptions {
    pub ram_style: RamStyle,
    /// Ports one RAM may expose.
    pub port_limit: usize,
    /// Lower only this function and what it calls.
    pub top: Option<String>,
}

impl Default for LowerOptions {
    fn default() -> Self {
        LowerOptions { ram_style: RamStyle::Auto, port_limit: 2, top: None }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct LoweringPlan {
    pub functions: Vec<FunctionPlan>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FunctionPlan {
    pub name: String,
    pub events: Vec<EventWire>,
    pub ops: Vec<ScheduledOp>,
    pub shift_registers: Vec<ShiftChain>,
    pub loops: Vec<LoopController>,
    pub memories: Vec<StorageBinding>,
    pub calls: Vec<CallInstance>,
    pub assertions: Vec<AssertionSite>,
}

/// `name` is the root pulse delayed by `depth` flops.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EventWire {
    pub name: String,
    pub root: String,
    pub depth: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScheduledOp {
    pub loc: String,
    pub op: String,
    /// Unroll indices of the enclosing `unroll_for` loops, outermost first.
    pub instance: Vec<u64>,
    pub root: String,
    pub depth: u64,
    pub event: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Tap {
    pub value: String,
    pub depth: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ShiftChain {
    pub name: String,
    pub source: String,
    pub width: u32,
    pub depth: u64,
    pub taps: Vec<Tap>,
    /// Stage k is clock-enabled by this root delayed by `enable_offset + k - 1`.
    pub enable_root: String,
    pub enable_offset: u64,
    pub locs: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Bound {
    Const(i64),
    Signal(String),
}

#[derive(Clone, Debug, Serialize)]
pub struct LoopController {
    pub name: String,
    pub loc: String,
    pub iv: String,
    pub counter_width: u32,
    pub lb: Bound,
    pub ub: Bound,
    pub step: Bound,
    pub ii: Option<u64>,
    pub trip_count: Option<u64>,
    pub start_event: String,
    pub iter_event: String,
    pub yield_event: String,
    pub done_event: String,
    /// Accumulator registers as (value, width).
    pub accumulators: Vec<(String, u32)>,
    /// Bits latched at the start pulse for runtime bounds.
    pub latched_bits: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct CallInstance {
    pub instance: String,
    pub callee: String,
    pub external: bool,
    pub loc: String,
    pub start_event: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssertionKind {
    InBounds,
    PortExclusive,
    InitializedRead,
    LoopBounds,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssertionSite {
    pub kind: AssertionKind,
    pub loc: String,
    /// Checked in cycles where this holds.
    pub enable: String,
    pub condition: String,
    pub message: String,
    /// `Some(true)` when the check was proven statically and dropped.
    pub folded: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FunctionResources {
    pub name: String,
    pub registers: u64,
    pub shift_register_stages: u64,
    pub shift_register_bits: u64,
    pub counter_bits: u64,
    pub holding_registers: u64,
    pub ram_instances: u64,
    pub register_arrays: u64,
    pub arith: BTreeMap<String, u64>,
    pub counters: Vec<CounterInfo>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CounterInfo {
    pub iv: String,
    pub loc: String,
    pub width: u32,
}

/// Register estimate. One register per shift-register stage, per counter bit
/// and per latched bound bit; event flops are not counted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ResourceReport {
    pub registers: u64,
    pub shift_register_stages: u64,
    pub counter_bits: u64,
    pub holding_registers: u64,
    pub ram_instances: u64,
    pub register_arrays: u64,
    pub arith: BTreeMap<String, u64>,
    pub functions: Vec<FunctionResources>,
}

impl ResourceReport {
    fn add(&mut self, f: FunctionResources) {
        self.registers += f.registers;
        self.shift_register_stages += f.shift_register_stages;
        self.counter_bits += f.counter_bits;
        self.holding_registers += f.holding_registers;
        self.ram_instances += f.ram_instances;
        self.register_arrays += f.register_arrays;
        for (k, v) in &f.arith {
            *self.arith.entry(k.clone()).or_insert(0) += v;
        }
        self.functions.push(f);
    }

    /// Every counter in the design, in lowering order.
    pub fn counters(&self) -> impl Iterator<Item = &CounterInfo> {
        self.functions.iter().flat_map(|f| f.counters.iter())
    }
}

impl std::fmt::Display for ResourceReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "registers {} (shift stages {}, counter bits {}, holding {}), rams {}, register arrays {}",
            self.registers,
            self.shift_register_stages,
            self.counter_bits,
            self.holding_registers,
            self.ram_instances,
            self.register_arrays
        )?;
        for (k, v) in &self.arith {
            writeln!(f, "  {k}: {v}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Lowered {
    pub verilog: String,
    pub plan: LoweringPlan,
    pub resources: ResourceReport,
}

/// Lowers every function (or everything reachable from `opts.top`) to Verilog.
pub fn lower(m: &Module, opts: &LowerOptions) -> Result<Lowered, Vec<Diagnostic>> {
    let keep = reachable(m, opts.top.as_deref())?;
    let mut verilog = String::new();
    let mut plan = LoweringPlan::default();
    let mut resources = ResourceReport::default();
    let mut diags = Vec::new();
    for item in &m.items {
        match item {
            Item::Extern(e) if keep.contains(e.name.as_str()) => match emit_extern_decl(e) {
                Ok(text) => {
                    verilog.push_str(&text);
                    verilog.push('\n');
                }
                Err(d) => diags.push(d),
            },
            Item::Func(f) if keep.contains(f.name.as_str()) => match func::lower_function(m, f, opts) {
                Ok((text, fplan, res)) => {
                    verilog.push_str(&text);
                    verilog.push('\n');
                    plan.functions.push(fplan);
                    resources.add(res);
                }
                Err(mut d) => diags.append(&mut d),
            },
            _ => {}
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    Ok(Lowered { verilog, plan, resources })
}

fn reachable<'a>(m: &'a Module, top: Option<&str>) -> Result<BTreeSet<&'a str>, Vec<Diagnostic>> {
    let all = || {
        m.items
            .iter()
            .map(|i| match i {
                Item::Extern(e) => e.name.as_str(),
                Item::Func(f) => f.name.as_str(),
            })
            .collect()
    };
    let Some(top) = top else { return Ok(all()) };
    let Some(f) = m.function(top) else {
        return Err(vec![Diagnostic::error(
            DiagClass::UnknownCallee,
            Span::default(),
            format!("top function '@{top}' is not defined"),
        )]);
    };
    let mut seen = BTreeSet::new();
    let mut stack = vec![f.name.as_str()];
    while let Some(name) = stack.pop() {
        if !seen.insert(name) {
            continue;
        }
        if let Some(f) = m.function(name) {
            f.body.walk(&mut |op| {
                if let OpKind::Call { callee, .. } = &op.kind {
                    if let Some(Item::Extern(e)) = m.items.iter().find(|i| matches!(i, Item::Extern(e) if &e.name == callee)) {
                        stack.push(e.name.as_str());
                    } else if let Some(g) = m.function(callee) {
                        stack.push(g.name.as_str());
                    }
                }
            });
        }
    }
    Ok(seen)
}

/// Verilog identifier for an IR name.
pub(crate) fn ident(name: &str) -> String {
    let mut s: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit()) {
        s.insert(0, '_');
    }
    s
}

/// `[w-1:0] ` or nothing for single bits.
pub(crate) fn range(w: u32) -> String {
    if w <= 1 {
        String::new()
    } else {
        format!("[{}:0] ", w - 1)
    }
}

pub(crate) fn lit(v: i64, w: u32) -> String {
    format!("{}'d{}", w.max(1), const_bits(v, w.max(1)))
}

pub(crate) fn bus_width(t: &Type) -> u32 {
    match t {
        Type::Int(w) | Type::Float(w) => *w,
        _ => 1,
    }
}

pub(crate) fn loc_comment(out: &mut String, indent: &str, span: &Span) {
    let _ = writeln!(out, "{indent}// {span}");
}
