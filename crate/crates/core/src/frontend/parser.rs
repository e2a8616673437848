//! Recursive-descent parser. One token of lookahead; every op starts either
//! with a keyword or with the list of result names followed by `=`.

use super::lexer::{lex, Tok, Token};
use crate::diag::{DiagClass, Diagnostic, Span};
use crate::ir::*;
use std::collections::HashMap;
use std::sync::Arc;

type PResult<T> = Result<T, Diagnostic>;

pub(crate) struct Parser {
    toks: Vec<Token>,
    pos: usize,
    pub(crate) diags: Vec<Diagnostic>,
}

/// Per-function parsing state.
struct FnState {
    func: Function,
    names: HashMap<String, ValueId>,
    /// Call results whose types come from the callee signature after the whole module is read.
    untyped_calls: Vec<(String, Vec<ValueId>)>,
    /// Operand uses of the op being parsed.
    uses: Vec<(ValueId, Span)>,
}

impl FnState {
    fn define(&mut self, name: &str, ty: Type, def: ValueDef, span: Span) -> Result<ValueId, Diagnostic> {
        if let Some(&v) = self.names.get(name) {
            let info = &mut self.func.values[v.index()];
            if info.def == ValueDef::Unresolved {
                info.ty = ty;
                info.def = def;
                info.span = span;
                return Ok(v);
            }
            let prev = info.span.clone();
            return Err(Diagnostic::error(DiagClass::DuplicateName, span, format!("%{name} is defined more than once"))
                .with_related(prev, "previous definition"));
        }
        let v = self.func.add_value(name, ty, def, span);
        self.names.insert(name.to_string(), v);
        Ok(v)
    }

    fn use_value(&mut self, name: &str, span: &Span) -> ValueId {
        if let Some(&v) = self.names.get(name) {
            return v;
        }
        let v = self.func.add_value(name, Type::Int(32), ValueDef::Unresolved, span.clone());
        self.names.insert(name.to_string(), v);
        v
    }
}

impl Parser {
    pub(crate) fn new(src: &str, file: &str) -> Self {
        let file: Arc<str> = Arc::from(file);
        let (toks, diags) = lex(src, &file);
        Parser { toks, pos: 0, diags }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span.clone()
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span.clone()
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, what: &str) -> Diagnostic {
        Diagnostic::error(
            DiagClass::SyntaxError,
            self.span(),
            format!("expected {what}, found {}", self.peek().describe()),
        )
    }

    fn expect(&mut self, tok: Tok) -> PResult<Span> {
        if *self.peek() == tok {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Span> {
        if self.is_kw(kw) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&format!("'{kw}'")))
        }
    }

    fn value_name(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Value(n) => {
                let s = self.bump().span;
                Ok((n, s))
            }
            _ => Err(self.unexpected("a %value name")),
        }
    }

    fn func_name(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Func(n) => {
                self.bump();
                Ok(n)
            }
            _ => Err(self.unexpected("an @function name")),
        }
    }

    fn uint(&mut self) -> PResult<u64> {
        match self.peek() {
            Tok::Int(v) => {
                let v = *v;
                self.bump();
                Ok(v)
            }
            _ => Err(self.unexpected("an integer")),
        }
    }

    fn sint(&mut self) -> PResult<i64> {
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let span = self.span();
        let v = self.uint()?;
        let v = if neg { -(v as i128) } else { v as i128 };
        i64::try_from(v).map_err(|_| Diagnostic::error(DiagClass::SyntaxError, span, "integer literal out of range"))
    }

    /// Non-negative cycle count; a leading '-' is reported as a negative offset.
    fn cycles(&mut self) -> PResult<u64> {
        if *self.peek() == Tok::Minus {
            let span = self.span();
            return Err(Diagnostic::error(DiagClass::NegativeOffset, span, "offset must be non-negative"));
        }
        self.uint()
    }

    fn skip_to_item(&mut self) {
        while !matches!(self.peek(), Tok::Eof) && !self.is_kw("def") && !self.is_kw("extern") {
            self.bump();
        }
    }

    pub(crate) fn parse_module(&mut self) -> Module {
        let mut module = Module::default();
        let mut untyped = Vec::new();
        while *self.peek() != Tok::Eof {
            let res = if self.is_kw("extern") {
                self.parse_extern().map(Item::Extern)
            } else if self.is_kw("def") {
                self.parse_def().map(|(f, calls)| {
                    untyped.push((f.name.clone(), calls));
                    Item::Func(f)
                })
            } else {
                Err(self.unexpected("'def' or 'extern'"))
            };
            match res {
                Ok(item) => module.items.push(item),
                Err(d) => {
                    self.diags.push(d);
                    self.bump();
                    self.skip_to_item();
                }
            }
        }
        // Fill in call result types from callee signatures.
        for (fname, calls) in untyped {
            let sigs: Vec<_> = calls.iter().map(|(callee, _)| module.signature(callee)).collect();
            let f = module.function_mut(&fname).unwrap();
            for ((_, results), sig) in calls.iter().zip(sigs) {
                if let Some(sig) = sig {
                    for (v, r) in results.iter().zip(&sig.results) {
                        f.values[v.index()].ty = r.ty.clone();
                    }
                }
            }
        }
        module
    }

    fn parse_type(&mut self) -> PResult<Type> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Ident(w) if w == "memref" => {
                self.bump();
                Ok(Type::Memref(self.parse_memref_body()?))
            }
            Tok::Ident(w) if w == "const" => {
                self.bump();
                Ok(Type::Const)
            }
            Tok::Bang => {
                self.bump();
                self.expect_kw("time")?;
                Ok(Type::Time)
            }
            Tok::Ident(w) => {
                self.bump();
                match scalar_type(&w) {
                    Some(ElemType::Int(n)) => Ok(Type::Int(n)),
                    Some(ElemType::Float(n)) => Ok(Type::Float(n)),
                    None => Err(Diagnostic::error(DiagClass::UnknownType, span, format!("unknown type '{w}'"))),
                }
            }
            _ => Err(self.unexpected("a type")),
        }
    }

    fn parse_memref_body(&mut self) -> PResult<MemrefType> {
        self.expect(Tok::Lt)?;
        let span = self.span();
        let word = match self.bump().tok {
            Tok::ShapeWord(w) => w,
            other => {
                return Err(Diagnostic::error(
                    DiagClass::SyntaxError,
                    span,
                    format!("expected a memref shape like 4x16xi32, found {}", other.describe()),
                ))
            }
        };
        let parts: Vec<&str> = word.split('x').collect();
        let bad = || Diagnostic::error(DiagClass::UnknownType, span.clone(), format!("malformed memref shape '{word}'"));
        let (elem_str, dims) = parts.split_last().ok_or_else(bad)?;
        let elem = scalar_type(elem_str).ok_or_else(bad)?;
        let mut shape = Vec::new();
        for d in dims {
            let e: u64 = d.parse().map_err(|_| bad())?;
            if e == 0 {
                return Err(Diagnostic::error(DiagClass::UnknownType, span, "memref extents must be positive"));
            }
            shape.push(e);
        }
        if shape.is_empty() {
            return Err(bad());
        }
        self.expect(Tok::Comma)?;
        self.expect(Tok::LBracket)?;
        let mut kinds = Vec::new();
        loop {
            let s = self.span();
            match self.bump().tok {
                Tok::Ident(k) if k == "packed" => kinds.push(DimKind::Packed),
                Tok::Ident(k) if k == "dist" => kinds.push(DimKind::Distributed),
                other => {
                    return Err(Diagnostic::error(
                        DiagClass::SyntaxError,
                        s,
                        format!("expected 'packed' or 'dist', found {}", other.describe()),
                    ))
                }
            }
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        self.expect(Tok::RBracket)?;
        if kinds.len() != shape.len() {
            return Err(Diagnostic::error(
                DiagClass::UnknownType,
                span,
                format!("memref has {} dimensions but {} dimension kinds", shape.len(), kinds.len()),
            ));
        }
        self.expect(Tok::Comma)?;
        let s = self.span();
        let port = match self.bump().tok {
            Tok::Ident(p) if p == "r" => PortKind::Read,
            Tok::Ident(p) if p == "w" => PortKind::Write,
            Tok::Ident(p) if p == "rw" => PortKind::ReadWrite,
            other => {
                return Err(Diagnostic::error(
                    DiagClass::SyntaxError,
                    s,
                    format!("expected port kind r, w or rw, found {}", other.describe()),
                ))
            }
        };
        let mut storage = Storage::Ram;
        if *self.peek() == Tok::Comma {
            self.bump();
            let s = self.span();
            storage = match self.bump().tok {
                Tok::Ident(k) if k == "reg" => Storage::Reg,
                Tok::Ident(k) if k == "ram" => Storage::Ram,
                other => {
                    return Err(Diagnostic::error(
                        DiagClass::SyntaxError,
                        s,
                        format!("expected storage 'reg' or 'ram', found {}", other.describe()),
                    ))
                }
            };
        }
        self.expect(Tok::Gt)?;
        Ok(MemrefType { elem, shape, dims: kinds, port, storage })
    }

    fn parse_delay_annot(&mut self) -> PResult<u64> {
        if self.eat_kw("delay") {
            self.cycles()
        } else {
            Ok(0)
        }
    }

    fn parse_results_sig(&mut self) -> PResult<Vec<ResultSig>> {
        let mut results = Vec::new();
        if *self.peek() == Tok::Arrow {
            self.bump();
            self.expect(Tok::LParen)?;
            if *self.peek() != Tok::RParen {
                loop {
                    let ty = self.parse_type()?;
                    let delay = self.parse_delay_annot()?;
                    results.push(ResultSig { ty, delay });
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
        }
        Ok(results)
    }

    fn parse_extern(&mut self) -> PResult<ExternDecl> {
        let start = self.expect_kw("extern")?;
        let name = self.func_name()?;
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let (pname, _) = self.value_name()?;
                self.expect(Tok::Colon)?;
                let ty = self.parse_type()?;
                let delay = self.parse_delay_annot()?;
                params.push((pname, ty, delay));
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        let results = self.parse_results_sig()?;
        let model = if self.eat_kw("model") {
            match self.bump().tok {
                Tok::Ident(m) => Some(m),
                other => {
                    return Err(Diagnostic::error(
                        DiagClass::SyntaxError,
                        self.prev_span(),
                        format!("expected a model name, found {}", other.describe()),
                    ))
                }
            }
        } else {
            None
        };
        Ok(ExternDecl { name, params, results, model, span: start.to(&self.prev_span()) })
    }

    fn parse_def(&mut self) -> PResult<(Function, Vec<(String, Vec<ValueId>)>)> {
        let start = self.expect_kw("def")?;
        let name = self.func_name()?;
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let (pname, pspan) = self.value_name()?;
                self.expect(Tok::Colon)?;
                let ty = self.parse_type()?;
                let delay = self.parse_delay_annot()?;
                params.push((pname, pspan, ty, delay));
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        let results = self.parse_results_sig()?;
        self.expect_kw("at")?;
        let (root, root_span) = self.value_name()?;
        let header = start.to(&self.prev_span());
        let mut st = FnState {
            func: Function::new(name, root.clone(), header),
            names: HashMap::new(),
            untyped_calls: Vec::new(),
            uses: Vec::new(),
        };
        st.func.values[0].span = root_span;
        st.names.insert(root, st.func.root_time);
        for (pname, pspan, ty, delay) in params {
            if st.names.contains_key(&pname) {
                return Err(Diagnostic::error(DiagClass::DuplicateName, pspan, format!("%{pname} is defined more than once")));
            }
            let v = st.func.add_param(pname.clone(), ty, delay, pspan);
            st.names.insert(pname, v);
        }
        st.func.results = results;
        let body = self.parse_block(&mut st)?;
        st.func.body = body;
        for v in &st.func.values {
            if v.def == ValueDef::Unresolved {
                self.diags.push(Diagnostic::error(
                    DiagClass::UndefinedValue,
                    v.span.clone(),
                    format!("%{} is never defined", v.name),
                ));
            }
        }
        Ok((st.func, st.untyped_calls))
    }

    fn parse_block(&mut self, st: &mut FnState) -> PResult<Region> {
        self.expect(Tok::LBrace)?;
        let mut region = Region::default();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return Err(self.unexpected("'}'"));
            }
            match self.parse_op(st) {
                Ok(op) => region.ops.push(op),
                Err(d) if d.class == DiagClass::DuplicateName => self.diags.push(d),
                Err(d) => return Err(d),
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(region)
    }

    fn parse_time(&mut self, st: &mut FnState) -> PResult<TimeExpr> {
        self.expect_kw("at")?;
        self.parse_time_ref(st)
    }

    fn parse_time_ref(&mut self, st: &mut FnState) -> PResult<TimeExpr> {
        let (name, span) = self.value_name()?;
        let base = st.use_value(&name, &span);
        let offset = if self.eat_kw("offset") { self.cycles()? } else { 0 };
        Ok(TimeExpr { base, offset })
    }

    fn operand(&mut self, st: &mut FnState) -> PResult<ValueId> {
        let (name, span) = self.value_name()?;
        let v = st.use_value(&name, &span);
        st.uses.push((v, span));
        Ok(v)
    }

    fn operand_list(&mut self, st: &mut FnState, close: Tok) -> PResult<Vec<ValueId>> {
        let mut out = Vec::new();
        if *self.peek() != close {
            loop {
                out.push(self.operand(st)?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(close)?;
        Ok(out)
    }

    fn opt_type(&mut self) -> PResult<Option<Type>> {
        if *self.peek() == Tok::Colon {
            self.bump();
            Ok(Some(self.parse_type()?))
        } else {
            Ok(None)
        }
    }

    fn parse_op(&mut self, st: &mut FnState) -> PResult<Op> {
        let start = self.span();
        st.uses.clear();
        // Result names, if any.
        let mut results: Vec<(String, Span)> = Vec::new();
        if matches!(self.peek(), Tok::Value(_)) {
            loop {
                results.push(self.value_name()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
            self.expect(Tok::Eq)?;
        }
        let kw_span = self.span();
        let kw = match self.bump().tok {
            Tok::Ident(k) => k,
            other => {
                return Err(Diagnostic::error(
                    DiagClass::SyntaxError,
                    kw_span,
                    format!("expected an operation, found {}", other.describe()),
                ))
            }
        };
        let id = st.func.fresh_op_id();
        let n_results = |want: usize, this: &Parser| -> PResult<()> {
            if results.len() != want {
                Err(Diagnostic::error(
                    DiagClass::SyntaxError,
                    kw_span.clone(),
                    format!("'{kw}' produces {want} result(s), {} named", results.len()),
                ))
            } else {
                let _ = this;
                Ok(())
            }
        };
        let op_type = |st: &FnState, v: ValueId| st.func.ty(v).clone();
        let (kind, result_types): (OpKind, Vec<Type>) = match kw.as_str() {
            "constant" => {
                n_results(1, self)?;
                let value = self.sint()?;
                (OpKind::Constant { value }, vec![Type::Const])
            }
            "time" => {
                n_results(1, self)?;
                let at = self.parse_time_ref(st)?;
                (OpKind::Time { at }, vec![Type::Time])
            }
            "add" | "sub" | "mult" => {
                n_results(1, self)?;
                let op = match kw.as_str() {
                    "add" => BinOp::Add,
                    "sub" => BinOp::Sub,
                    _ => BinOp::Mult,
                };
                let lhs = self.operand(st)?;
                self.expect(Tok::Comma)?;
                let rhs = self.operand(st)?;
                let at = self.parse_time(st)?;
                let ty = self.opt_type()?.unwrap_or_else(|| {
                    let w = [lhs, rhs].iter().filter_map(|v| op_type(st, *v).int_width()).max().unwrap_or(32);
                    Type::Int(w)
                });
                (OpKind::Binary { op, lhs, rhs, at }, vec![ty])
            }
            "bit_slice" => {
                n_results(1, self)?;
                let src = self.operand(st)?;
                self.expect(Tok::LBracket)?;
                let hi = self.uint()? as u32;
                self.expect(Tok::Colon)?;
                let lo = self.uint()? as u32;
                self.expect(Tok::RBracket)?;
                let at = self.parse_time(st)?;
                let ty = self.opt_type()?.unwrap_or(Type::Int(hi.saturating_sub(lo) + 1));
                (OpKind::BitSlice { src, hi, lo, at }, vec![ty])
            }
            "select" => {
                n_results(1, self)?;
                let cond = self.operand(st)?;
                self.expect(Tok::Comma)?;
                let if_true = self.operand(st)?;
                self.expect(Tok::Comma)?;
                let if_false = self.operand(st)?;
                let at = self.parse_time(st)?;
                let ty = self.opt_type()?.unwrap_or_else(|| {
                    let w = [if_true, if_false].iter().filter_map(|v| op_type(st, *v).int_width()).max().unwrap_or(32);
                    Type::Int(w)
                });
                (OpKind::Select { cond, if_true, if_false, at }, vec![ty])
            }
            "mem_read" => {
                n_results(1, self)?;
                let mem = self.operand(st)?;
                self.expect(Tok::LBracket)?;
                let indices = self.operand_list(st, Tok::RBracket)?;
                let at = self.parse_time(st)?;
                let ty = self.opt_type()?.unwrap_or_else(|| match op_type(st, mem) {
                    Type::Memref(m) => m.elem.as_type(),
                    _ => Type::Int(32),
                });
                (OpKind::MemRead { mem, indices, at }, vec![ty])
            }
            "mem_write" => {
                n_results(0, self)?;
                let value = self.operand(st)?;
                self.expect_kw("to")?;
                let mem = self.operand(st)?;
                self.expect(Tok::LBracket)?;
                let indices = self.operand_list(st, Tok::RBracket)?;
                let at = self.parse_time(st)?;
                (OpKind::MemWrite { value, mem, indices, at }, vec![])
            }
            "delay" => {
                n_results(1, self)?;
                let src = self.operand(st)?;
                self.expect_kw("by")?;
                let by = self.cycles()?;
                let at = self.parse_time(st)?;
                let ty = self.opt_type()?.unwrap_or_else(|| op_type(st, src));
                (OpKind::Delay { src, by, at }, vec![ty])
            }
            "call" => {
                let callee = self.func_name()?;
                self.expect(Tok::LParen)?;
                let args = self.operand_list(st, Tok::RParen)?;
                let at = self.parse_time(st)?;
                let mut tys = Vec::new();
                if *self.peek() == Tok::Colon {
                    self.bump();
                    loop {
                        tys.push(self.parse_type()?);
                        if *self.peek() == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                let explicit = !tys.is_empty();
                if explicit && tys.len() != results.len() {
                    return Err(Diagnostic::error(
                        DiagClass::SyntaxError,
                        kw_span,
                        format!("call names {} result(s) but lists {} type(s)", results.len(), tys.len()),
                    ));
                }
                if !explicit {
                    tys = vec![Type::Int(32); results.len()];
                }
                let op_kind = OpKind::Call { callee: callee.clone(), args, at };
                let op = self.finish_op(st, id, op_kind, results, tys, start)?;
                if !explicit {
                    st.untyped_calls.push((callee, op.results.clone()));
                }
                return Ok(op);
            }
            "for" | "unroll_for" => return self.parse_loop(st, id, &kw, results, start),
            "yield" => {
                n_results(0, self)?;
                let at = self.parse_time(st)?;
                (OpKind::Yield { at }, vec![])
            }
            "return" => {
                n_results(0, self)?;
                let values = if *self.peek() == Tok::LParen {
                    self.bump();
                    self.operand_list(st, Tok::RParen)?
                } else {
                    Vec::new()
                };
                let at = self.parse_time(st)?;
                (OpKind::Return { values, at }, vec![])
            }
            "alloc" => {
                if results.is_empty() {
                    return Err(Diagnostic::error(DiagClass::SyntaxError, kw_span, "'alloc' must name at least one port"));
                }
                self.expect(Tok::Colon)?;
                let mut tys = Vec::new();
                loop {
                    tys.push(self.parse_type()?);
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
                if tys.len() != results.len() {
                    return Err(Diagnostic::error(
                        DiagClass::SyntaxError,
                        kw_span,
                        format!("alloc names {} port(s) but lists {} type(s)", results.len(), tys.len()),
                    ));
                }
                (OpKind::Alloc, tys)
            }
            other => {
                return Err(Diagnostic::error(DiagClass::SyntaxError, kw_span, format!("unknown operation '{other}'")))
            }
        };
        self.finish_op(st, id, kind, results, result_types, start)
    }

    fn finish_op(
        &mut self,
        st: &mut FnState,
        id: OpId,
        kind: OpKind,
        results: Vec<(String, Span)>,
        types: Vec<Type>,
        start: Span,
    ) -> PResult<Op> {
        let span = start.to(&self.prev_span());
        let mut ids = Vec::new();
        for (i, ((name, rspan), ty)) in results.into_iter().zip(types).enumerate() {
            match st.define(&name, ty, ValueDef::OpResult(id, i), rspan) {
                Ok(v) => ids.push(v),
                Err(d) => {
                    self.diags.push(d);
                    let anon = st.func.fresh_name(&name);
                    ids.push(st.func.add_value(anon, Type::Int(32), ValueDef::OpResult(id, i), span.clone()));
                }
            }
        }
        Ok(Op { id, kind, results: ids, span, operand_spans: std::mem::take(&mut st.uses) })
    }

    fn parse_loop(
        &mut self,
        st: &mut FnState,
        id: OpId,
        kw: &str,
        mut results: Vec<(String, Span)>,
        start: Span,
    ) -> PResult<Op> {
        let kind = if kw == "for" { LoopKind::Sequential } else { LoopKind::Unrolled };
        if results.len() > 1 {
            return Err(Diagnostic::error(DiagClass::SyntaxError, start, "a loop produces at most one result"));
        }
        let (iv_name, iv_span) = self.value_name()?;
        let iv_ty = match kind {
            LoopKind::Unrolled => {
                if *self.peek() == Tok::Colon {
                    self.bump();
                    self.expect_kw("const")?;
                }
                Type::Const
            }
            LoopKind::Sequential => self.opt_type()?.unwrap_or(Type::Int(32)),
        };
        self.expect(Tok::Eq)?;
        let lb = self.operand(st)?;
        self.expect_kw("to")?;
        let ub = self.operand(st)?;
        self.expect_kw("step")?;
        let step = self.operand(st)?;
        let mut accum_decls = Vec::new();
        while self.eat_kw("accum") {
            let (name, span) = self.value_name()?;
            let ty = self.opt_type()?.unwrap_or(Type::Int(32));
            self.expect(Tok::Eq)?;
            let init = self.sint()?;
            self.expect_kw("by")?;
            let by = self.sint()?;
            accum_decls.push((name, span, ty, init, by));
        }
        self.expect_kw("iter_time")?;
        let (tname, tspan) = self.value_name()?;
        let start_at = self.parse_time(st)?;
        let header = start.to(&self.prev_span());
        let operand_spans = std::mem::take(&mut st.uses);
        let iv = st.define(&iv_name, iv_ty, ValueDef::InductionVar(id), iv_span)?;
        let mut accums = Vec::new();
        for (i, (name, span, ty, init, by)) in accum_decls.into_iter().enumerate() {
            let v = st.define(&name, ty, ValueDef::Accumulator(id, i), span)?;
            accums.push(Accumulator { value: v, init, step: by });
        }
        let iter_time = st.define(&tname, Type::Time, ValueDef::IterTime(id), tspan)?;
        let body = self.parse_block(st)?;
        if self.eat_kw("yield_result") {
            if !results.is_empty() {
                return Err(Diagnostic::error(
                    DiagClass::SyntaxError,
                    self.prev_span(),
                    "loop completion is named twice",
                ));
            }
            results.push(self.value_name()?);
        }
        let mut ids = Vec::new();
        if let Some((name, rspan)) = results.into_iter().next() {
            ids.push(st.define(&name, Type::Time, ValueDef::OpResult(id, 0), rspan)?);
        }
        Ok(Op {
            id,
            kind: OpKind::Loop(Box::new(LoopOp { kind, iv, lb, ub, step, accums, iter_time, start: start_at, body })),
            results: ids,
            span: header,
            operand_spans,
        })
    }
}

fn scalar_type(s: &str) -> Option<ElemType> {
    let (head, rest) = s.split_at(1.min(s.len()));
    let w: u32 = rest.parse().ok()?;
    if w == 0 || w > 64 {
        return None;
    }
    match head {
        "i" => Some(ElemType::Int(w)),
        "f" if w == 16 || w == 32 || w == 64 => Some(ElemType::Float(w)),
        _ => None,
    }
}
