//! In-memory form of the IR.
//!
//! A [`Module`] holds functions and extern declarations. Each [`Function`] owns
//! an arena of SSA values ([`ValueInfo`], addressed by [`ValueId`]) and a tree
//! of [`Region`]s made of [`Op`]s. Every scheduled op carries a [`TimeExpr`]:
//! a time variable plus a non-negative cycle offset.

use crate::diag::Span;
use std::collections::HashSet;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpId(pub u32);

impl ValueId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElemType {
    Int(u32),
    Float(u32),
}

impl ElemType {
    pub fn width(self) -> u32 {
        match self {
            ElemType::Int(w) | ElemType::Float(w) => w,
        }
    }

    pub fn as_type(self) -> Type {
        match self {
            ElemType::Int(w) => Type::Int(w),
            ElemType::Float(w) => Type::Float(w),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DimKind {
    Packed,
    Distributed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PortKind {
    Read,
    Write,
    ReadWrite,
}

impl PortKind {
    pub fn can_read(self) -> bool {
        matches!(self, PortKind::Read | PortKind::ReadWrite)
    }

    pub fn can_write(self) -> bool {
        matches!(self, PortKind::Write | PortKind::ReadWrite)
    }
}

/// Storage backing a tensor. Register arrays read in zero cycles, RAMs in one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Storage {
    #[default]
    Ram,
    Reg,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MemrefType {
    pub elem: ElemType,
    pub shape: Vec<u64>,
    pub dims: Vec<DimKind>,
    pub port: PortKind,
    pub storage: Storage,
}

impl MemrefType {
    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Number of independent buffers: product of distributed extents.
    pub fn bank_count(&self) -> u64 {
        self.shape
            .iter()
            .zip(&self.dims)
            .filter(|(_, k)| **k == DimKind::Distributed)
            .map(|(e, _)| *e)
            .product()
    }

    /// Words held by each bank: product of packed extents.
    pub fn words_per_bank(&self) -> u64 {
        self.shape
            .iter()
            .zip(&self.dims)
            .filter(|(_, k)| **k == DimKind::Packed)
            .map(|(e, _)| *e)
            .product()
    }

    /// Row-major bank number over the distributed dimensions.
    pub fn bank_of(&self, indices: &[u64]) -> u64 {
        let mut bank = 0;
        for ((idx, ext), kind) in indices.iter().zip(&self.shape).zip(&self.dims) {
            if *kind == DimKind::Distributed {
                bank = bank * ext + idx;
            }
        }
        bank
    }

    /// Row-major word address over the packed dimensions, in declaration order.
    pub fn packed_offset(&self, indices: &[u64]) -> u64 {
        let mut addr = 0;
        for ((idx, ext), kind) in indices.iter().zip(&self.shape).zip(&self.dims) {
            if *kind == DimKind::Packed {
                addr = addr * ext + idx;
            }
        }
        addr
    }

    pub fn in_bounds(&self, indices: &[u64]) -> bool {
        indices.len() == self.shape.len() && indices.iter().zip(&self.shape).all(|(i, e)| i < e)
    }

    pub fn read_latency(&self) -> u64 {
        match self.storage {
            Storage::Ram => 1,
            Storage::Reg => 0,
        }
    }

    /// Same tensor layout and element type, ignoring the port kind.
    pub fn same_tensor_shape(&self, other: &MemrefType) -> bool {
        self.elem == other.elem && self.shape == other.shape && self.dims == other.dims && self.storage == other.storage
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Type {
    Int(u32),
    Float(u32),
    /// Compile-time integer; has no validity instant.
    Const,
    Time,
    Memref(MemrefType),
}

impl Type {
    pub fn is_const(&self) -> bool {
        matches!(self, Type::Const)
    }

    pub fn is_time(&self) -> bool {
        matches!(self, Type::Time)
    }

    pub fn is_primitive(&self) -> bool {
        matches!(self, Type::Int(_) | Type::Float(_))
    }

    pub fn int_width(&self) -> Option<u32> {
        match self {
            Type::Int(w) => Some(*w),
            _ => None,
        }
    }

    pub fn as_memref(&self) -> Option<&MemrefType> {
        match self {
            Type::Memref(m) => Some(m),
            _ => None,
        }
    }

    /// Carries data at a single validity instant.
    pub fn is_timed(&self) -> bool {
        self.is_primitive()
    }
}

/// `base offset N`: N cycles after the instant named by `base`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TimeExpr {
    pub base: ValueId,
    pub offset: u64,
}

impl TimeExpr {
    pub fn new(base: ValueId, offset: u64) -> Self {
        TimeExpr { base, offset }
    }

    pub fn shifted(&self, by: u64) -> Self {
        TimeExpr { base: self.base, offset: self.offset + by }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ValueDef {
    /// Referenced by name but no definition seen yet.
    Unresolved,
    Param(usize),
    /// Function start instant.
    RootTime,
    OpResult(OpId, usize),
    InductionVar(OpId),
    Accumulator(OpId, usize),
    /// Iteration start instant of a loop.
    IterTime(OpId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueInfo {
    pub name: String,
    pub ty: Type,
    pub def: ValueDef,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mult,
}

impl BinOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mult => "mult",
        }
    }

    /// Two's-complement wraparound at `width` bits; result is the unsigned bit pattern.
    pub fn eval(self, a: u64, b: u64, width: u32) -> u64 {
        let r = match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mult => a.wrapping_mul(b),
        };
        mask(r, width)
    }
}

pub fn mask(v: u64, width: u32) -> u64 {
    if width >= 64 {
        v
    } else {
        v & ((1u64 << width) - 1)
    }
}

/// Unsigned bit pattern of a compile-time integer at `width` bits.
pub fn const_bits(v: i64, width: u32) -> u64 {
    mask(v as u64, width)
}

/// Bits needed to represent `v` (at least one).
pub fn bits_for(v: u64) -> u32 {
    (64 - v.leading_zeros()).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LoopKind {
    Sequential,
    Unrolled,
}

/// Secondary induction variable: `init`, then `+ step` at every iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulator {
    pub value: ValueId,
    pub init: i64,
    pub step: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopOp {
    pub kind: LoopKind,
    pub iv: ValueId,
    pub lb: ValueId,
    pub ub: ValueId,
    pub step: ValueId,
    pub accums: Vec<Accumulator>,
    pub iter_time: ValueId,
    pub start: TimeExpr,
    pub body: Region,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    Constant { value: i64 },
    /// Names a fixed delay from another time variable.
    Time { at: TimeExpr },
    Binary { op: BinOp, lhs: ValueId, rhs: ValueId, at: TimeExpr },
    BitSlice { src: ValueId, hi: u32, lo: u32, at: TimeExpr },
    Select { cond: ValueId, if_true: ValueId, if_false: ValueId, at: TimeExpr },
    MemRead { mem: ValueId, indices: Vec<ValueId>, at: TimeExpr },
    MemWrite { value: ValueId, mem: ValueId, indices: Vec<ValueId>, at: TimeExpr },
    Delay { src: ValueId, by: u64, at: TimeExpr },
    Call { callee: String, args: Vec<ValueId>, at: TimeExpr },
    /// `for` / `unroll_for`. The optional result is the loop-completion time variable.
    Loop(Box<LoopOp>),
    Yield { at: TimeExpr },
    Return { values: Vec<ValueId>, at: TimeExpr },
    /// Instantiates a tensor; each result is one port onto it.
    Alloc,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Op {
    pub id: OpId,
    pub kind: OpKind,
    pub results: Vec<ValueId>,
    pub span: Span,
    /// Where each operand was written, in source order. Empty for ops built by passes.
    pub operand_spans: Vec<(ValueId, Span)>,
}

impl Op {
    /// Location of the first use of `v` in this op, or the op itself.
    pub fn use_span(&self, v: ValueId) -> &Span {
        self.operand_spans.iter().find(|(u, _)| *u == v).map(|(_, s)| s).unwrap_or(&self.span)
    }

    pub fn mnemonic(&self) -> &'static str {
        match &self.kind {
            OpKind::Constant { .. } => "constant",
            OpKind::Time { .. } => "time",
            OpKind::Binary { op, .. } => op.mnemonic(),
            OpKind::BitSlice { .. } => "bit_slice",
            OpKind::Select { .. } => "select",
            OpKind::MemRead { .. } => "mem_read",
            OpKind::MemWrite { .. } => "mem_write",
            OpKind::Delay { .. } => "delay",
            OpKind::Call { .. } => "call",
            OpKind::Loop(l) => match l.kind {
                LoopKind::Sequential => "for",
                LoopKind::Unrolled => "unroll_for",
            },
            OpKind::Yield { .. } => "yield",
            OpKind::Return { .. } => "return",
            OpKind::Alloc => "alloc",
        }
    }

    /// The instant at which the op starts, if it is scheduled.
    pub fn schedule(&self) -> Option<&TimeExpr> {
        match &self.kind {
            OpKind::Constant { .. } | OpKind::Alloc => None,
            OpKind::Time { at }
            | OpKind::Binary { at, .. }
            | OpKind::BitSlice { at, .. }
            | OpKind::Select { at, .. }
            | OpKind::MemRead { at, .. }
            | OpKind::MemWrite { at, .. }
            | OpKind::Delay { at, .. }
            | OpKind::Call { at, .. }
            | OpKind::Yield { at }
            | OpKind::Return { at, .. } => Some(at),
            OpKind::Loop(l) => Some(&l.start),
        }
    }

    pub fn schedule_mut(&mut self) -> Option<&mut TimeExpr> {
        match &mut self.kind {
            OpKind::Constant { .. } | OpKind::Alloc => None,
            OpKind::Time { at }
            | OpKind::Binary { at, .. }
            | OpKind::BitSlice { at, .. }
            | OpKind::Select { at, .. }
            | OpKind::MemRead { at, .. }
            | OpKind::MemWrite { at, .. }
            | OpKind::Delay { at, .. }
            | OpKind::Call { at, .. }
            | OpKind::Yield { at }
            | OpKind::Return { at, .. } => Some(at),
            OpKind::Loop(l) => Some(&mut l.start),
        }
    }

    /// Data operands consumed at the op's schedule (not including time bases).
    pub fn data_operands(&self) -> Vec<ValueId> {
        match &self.kind {
            OpKind::Constant { .. } | OpKind::Time { .. } | OpKind::Yield { .. } | OpKind::Alloc => vec![],
            OpKind::Binary { lhs, rhs, .. } => vec![*lhs, *rhs],
            OpKind::BitSlice { src, .. } | OpKind::Delay { src, .. } => vec![*src],
            OpKind::Select { cond, if_true, if_false, .. } => vec![*cond, *if_true, *if_false],
            OpKind::MemRead { mem, indices, .. } => std::iter::once(*mem).chain(indices.iter().copied()).collect(),
            OpKind::MemWrite { value, mem, indices, .. } => {
                [*value, *mem].into_iter().chain(indices.iter().copied()).collect()
            }
            OpKind::Call { args, .. } => args.clone(),
            OpKind::Loop(l) => vec![l.lb, l.ub, l.step],
            OpKind::Return { values, .. } => values.clone(),
        }
    }

    /// Every value this op refers to, including time bases.
    pub fn all_operands(&self) -> Vec<ValueId> {
        let mut v = self.data_operands();
        if let Some(at) = self.schedule() {
            v.push(at.base);
        }
        v
    }

    pub fn map_operands(&mut self, mut f: impl FnMut(ValueId) -> ValueId) {
        match &mut self.kind {
            OpKind::Constant { .. } | OpKind::Alloc => {}
            OpKind::Time { at } | OpKind::Yield { at } => at.base = f(at.base),
            OpKind::Binary { lhs, rhs, at, .. } => {
                *lhs = f(*lhs);
                *rhs = f(*rhs);
                at.base = f(at.base);
            }
            OpKind::BitSlice { src, at, .. } | OpKind::Delay { src, at, .. } => {
                *src = f(*src);
                at.base = f(at.base);
            }
            OpKind::Select { cond, if_true, if_false, at } => {
                *cond = f(*cond);
                *if_true = f(*if_true);
                *if_false = f(*if_false);
                at.base = f(at.base);
            }
            OpKind::MemRead { mem, indices, at } => {
                *mem = f(*mem);
                indices.iter_mut().for_each(|i| *i = f(*i));
                at.base = f(at.base);
            }
            OpKind::MemWrite { value, mem, indices, at } => {
                *value = f(*value);
                *mem = f(*mem);
                indices.iter_mut().for_each(|i| *i = f(*i));
                at.base = f(at.base);
            }
            OpKind::Call { args, at, .. } => {
                args.iter_mut().for_each(|a| *a = f(*a));
                at.base = f(at.base);
            }
            OpKind::Loop(l) => {
                l.lb = f(l.lb);
                l.ub = f(l.ub);
                l.step = f(l.step);
                l.start.base = f(l.start.base);
            }
            OpKind::Return { values, at } => {
                values.iter_mut().for_each(|v| *v = f(*v));
                at.base = f(at.base);
            }
        }
    }

    pub fn as_loop(&self) -> Option<&LoopOp> {
        match &self.kind {
            OpKind::Loop(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_loop_mut(&mut self) -> Option<&mut LoopOp> {
        match &mut self.kind {
            OpKind::Loop(l) => Some(l),
            _ => None,
        }
    }

    /// Loop-completion time variable of a loop op.
    pub fn loop_done(&self) -> Option<ValueId> {
        match &self.kind {
            OpKind::Loop(_) => self.results.first().copied(),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Region {
    pub ops: Vec<Op>,
}

impl Region {
    /// Pre-order walk over every op, descending into loop bodies.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Op)) {
        for op in &self.ops {
            f(op);
            if let OpKind::Loop(l) = &op.kind {
                l.body.walk(f);
            }
        }
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Op)) {
        for op in &mut self.ops {
            f(op);
            if let OpKind::Loop(l) = &mut op.kind {
                l.body.walk_mut(f);
            }
        }
    }

    /// Applies `f` to every region, innermost last.
    pub fn walk_regions_mut(&mut self, f: &mut impl FnMut(&mut Region)) {
        f(self);
        for op in &mut self.ops {
            if let OpKind::Loop(l) = &mut op.kind {
                l.body.walk_regions_mut(f);
            }
        }
    }

    pub fn op_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: ValueId,
    /// Cycles after function start at which the argument is valid. Zero for memrefs.
    pub delay: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultSig {
    pub ty: Type,
    pub delay: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub results: Vec<ResultSig>,
    pub root_time: ValueId,
    pub body: Region,
    pub values: Vec<ValueInfo>,
    pub next_op: u32,
    pub span: Span,
}

impl Function {
    /// Empty function with a start time variable named `root`.
    pub fn new(name: impl Into<String>, root: impl Into<String>, span: Span) -> Self {
        let mut f = Function {
            name: name.into(),
            params: Vec::new(),
            results: Vec::new(),
            root_time: ValueId(0),
            body: Region::default(),
            values: Vec::new(),
            next_op: 0,
            span: span.clone(),
        };
        f.root_time = f.add_value(root, Type::Time, ValueDef::RootTime, span);
        f
    }

    pub fn add_value(&mut self, name: impl Into<String>, ty: Type, def: ValueDef, span: Span) -> ValueId {
        let id = ValueId(self.values.len() as u32);
        self.values.push(ValueInfo { name: name.into(), ty, def, span });
        id
    }

    pub fn add_param(&mut self, name: impl Into<String>, ty: Type, delay: u64, span: Span) -> ValueId {
        let idx = self.params.len();
        let v = self.add_value(name, ty, ValueDef::Param(idx), span);
        self.params.push(Param { value: v, delay });
        v
    }

    pub fn fresh_op_id(&mut self) -> OpId {
        let id = OpId(self.next_op);
        self.next_op += 1;
        id
    }

    pub fn value(&self, v: ValueId) -> &ValueInfo {
        &self.values[v.index()]
    }

    pub fn ty(&self, v: ValueId) -> &Type {
        &self.values[v.index()].ty
    }

    pub fn name(&self, v: ValueId) -> &str {
        &self.values[v.index()].name
    }

    /// A value name not used anywhere in the function, derived from `hint`.
    pub fn fresh_name(&self, hint: &str) -> String {
        let used: HashSet<&str> = self.values.iter().map(|v| v.name.as_str()).collect();
        if !used.contains(hint) {
            return hint.to_string();
        }
        (0..).map(|i| format!("{hint}_{i}")).find(|n| !used.contains(n.as_str())).unwrap()
    }

    pub fn signature(&self) -> Signature {
        Signature {
            params: self.params.iter().map(|p| (self.ty(p.value).clone(), p.delay)).collect(),
            results: self.results.clone(),
        }
    }

    /// Finds an op anywhere in the body.
    pub fn find_op(&self, id: OpId) -> Option<&Op> {
        let mut found = None;
        self.body.walk(&mut |op| {
            if op.id == id {
                found = Some(op);
            }
        });
        found
    }

    /// Value defined by a `constant` op, if any.
    pub fn const_value(&self, v: ValueId) -> Option<i64> {
        match self.value(v).def {
            ValueDef::OpResult(op, 0) => match self.find_op(op)?.kind {
                OpKind::Constant { value } => Some(value),
                _ => None,
            },
            _ => None,
        }
    }

    /// Table of `constant` op values indexed by result value.
    pub fn constants(&self) -> std::collections::HashMap<ValueId, i64> {
        let mut m = std::collections::HashMap::new();
        self.body.walk(&mut |op| {
            if let OpKind::Constant { value } = op.kind {
                m.insert(op.results[0], value);
            }
        });
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExternDecl {
    pub name: String,
    pub params: Vec<(String, Type, u64)>,
    pub results: Vec<ResultSig>,
    /// Behavioral model used by the simulator.
    pub model: Option<String>,
    pub span: Span,
}

impl ExternDecl {
    pub fn signature(&self) -> Signature {
        Signature { params: self.params.iter().map(|(_, t, d)| (t.clone(), *d)).collect(), results: self.results.clone() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Signature {
    pub params: Vec<(Type, u64)>,
    pub results: Vec<ResultSig>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Item {
    Extern(ExternDecl),
    Func(Function),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Module {
    pub items: Vec<Item>,
}

impl Module {
    pub fn functions(&self) -> impl Iterator<Item = &Function> {
        self.items.iter().filter_map(|i| match i {
            Item::Func(f) => Some(f),
            _ => None,
        })
    }

    pub fn functions_mut(&mut self) -> impl Iterator<Item = &mut Function> {
        self.items.iter_mut().filter_map(|i| match i {
            Item::Func(f) => Some(f),
            _ => None,
        })
    }

    pub fn externs(&self) -> impl Iterator<Item = &ExternDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Extern(e) => Some(e),
            _ => None,
        })
    }

    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions().find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut Function> {
        self.functions_mut().find(|f| f.name == name)
    }

    pub fn extern_decl(&self, name: &str) -> Option<&ExternDecl> {
        self.externs().find(|e| e.name == name)
    }

    pub fn signature(&self, name: &str) -> Option<Signature> {
        self.function(name).map(Function::signature).or_else(|| self.extern_decl(name).map(ExternDecl::signature))
    }
}

impl fmt::Display for ElemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElemType::Int(w) => write!(f, "i{w}"),
            ElemType::Float(w) => write!(f, "f{w}"),
        }
    }
}

impl fmt::Display for MemrefType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "memref<")?;
        for e in &self.shape {
            write!(f, "{e}x")?;
        }
        write!(f, "{}, [", self.elem)?;
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            f.write_str(match d {
                DimKind::Packed => "packed",
                DimKind::Distributed => "dist",
            })?;
        }
        f.write_str("], ")?;
        f.write_str(match self.port {
            PortKind::Read => "r",
            PortKind::Write => "w",
            PortKind::ReadWrite => "rw",
        })?;
        if self.storage == Storage::Reg {
            f.write_str(", reg")?;
        }
        f.write_str(">")
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int(w) => write!(f, "i{w}"),
            Type::Float(w) => write!(f, "f{w}"),
            Type::Const => f.write_str("const"),
            Type::Time => f.write_str("!time"),
            Type::Memref(m) => m.fmt(f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mt(shape: &[u64], dims: &[DimKind]) -> MemrefType {
        MemrefType {
            elem: ElemType::Int(32),
            shape: shape.to_vec(),
            dims: dims.to_vec(),
            port: PortKind::ReadWrite,
            storage: Storage::Ram,
        }
    }

    #[test]
    fn banking_of_mixed_memref() {
        let m = mt(&[4, 16], &[DimKind::Distributed, DimKind::Packed]);
        assert_eq!(m.bank_count(), 4);
        assert_eq!(m.words_per_bank(), 16);
        assert_eq!(m.bank_of(&[3, 5]), 3);
        assert_eq!(m.packed_offset(&[3, 5]), 5);
    }

    #[test]
    fn all_packed_is_row_major() {
        let m = mt(&[8, 8], &[DimKind::Packed, DimKind::Packed]);
        assert_eq!(m.bank_count(), 1);
        assert_eq!(m.words_per_bank(), 64);
        assert_eq!(m.packed_offset(&[2, 5]), 21);
    }

    #[test]
    fn wraparound_arithmetic() {
        assert_eq!(BinOp::Add.eval(0xffff_ffff, 1, 32), 0);
        assert_eq!(BinOp::Sub.eval(0, 1, 8), 0xff);
        assert_eq!(BinOp::Mult.eval(0x10000, 0x10000, 32), 0);
        assert_eq!(const_bits(-2, 8), 0xfe);
        assert_eq!(bits_for(16), 5);
        assert_eq!(bits_for(15), 4);
        assert_eq!(bits_for(0), 1);
    }

    #[test]
    fn memref_type_prints_canonically() {
        let mut m = mt(&[4, 16], &[DimKind::Distributed, DimKind::Packed]);
        assert_eq!(m.to_string(), "memref<4x16xi32, [dist, packed], rw>");
        m.storage = Storage::Reg;
        m.port = PortKind::Read;
        assert_eq!(m.to_string(), "memref<4x16xi32, [dist, packed], r, reg>");
    }
}
