use crate::ir::*;
use std::fmt::Write;

pub fn print_module(m: &Module) -> String {
    let mut out = String::new();
    for (i, item) in m.items.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        match item {
            Item::Extern(e) => print_extern(&mut out, e),
            Item::Func(f) => print_function(&mut out, f),
        }
    }
    out
}

fn results_sig(out: &mut String, results: &[ResultSig]) {
    if results.is_empty() {
        return;
    }
    out.push_str(" -> (");
    for (i, r) in results.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_typed_delay(out, &r.ty, r.delay);
    }
    out.push(')');
}

fn write_typed_delay(out: &mut String, ty: &Type, delay: u64) {
    if matches!(ty, Type::Memref(_)) && delay == 0 {
        write!(out, "{ty}").unwrap();
    } else {
        write!(out, "{ty} delay {delay}").unwrap();
    }
}

fn print_extern(out: &mut String, e: &ExternDecl) {
    write!(out, "extern @{}(", e.name).unwrap();
    for (i, (name, ty, delay)) in e.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "%{name}: ").unwrap();
        write_typed_delay(out, ty, *delay);
    }
    out.push(')');
    results_sig(out, &e.results);
    if let Some(m) = &e.model {
        write!(out, " model {m}").unwrap();
    }
    out.push('\n');
}

pub fn print_function(out: &mut String, f: &Function) {
    write!(out, "def @{}(", f.name).unwrap();
    for (i, p) in f.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "%{}: ", f.name(p.value)).unwrap();
        write_typed_delay(out, f.ty(p.value), p.delay);
    }
    out.push(')');
    results_sig(out, &f.results);
    writeln!(out, " at %{} {{", f.name(f.root_time)).unwrap();
    print_region(out, f, &f.body, 1);
    out.push_str("}\n");
}

fn print_region(out: &mut String, f: &Function, r: &Region, depth: usize) {
    for op in &r.ops {
        print_op(out, f, op, depth);
    }
}

fn time(f: &Function, t: &TimeExpr) -> String {
    if t.offset == 0 {
        format!("%{}", f.name(t.base))
    } else {
        format!("%{} offset {}", f.name(t.base), t.offset)
    }
}

fn list(f: &Function, vs: &[ValueId]) -> String {
    vs.iter().map(|v| format!("%{}", f.name(*v))).collect::<Vec<_>>().join(", ")
}

fn print_op(out: &mut String, f: &Function, op: &Op, depth: usize) {
    let pad = "  ".repeat(depth);
    let n = |v: ValueId| format!("%{}", f.name(v));
    let res_ty = |i: usize| f.ty(op.results[i]).to_string();
    out.push_str(&pad);
    match &op.kind {
        OpKind::Constant { value } => write!(out, "{} = constant {value}", n(op.results[0])).unwrap(),
        OpKind::Time { at } => write!(out, "{} = time {}", n(op.results[0]), time(f, at)).unwrap(),
        OpKind::Binary { op: b, lhs, rhs, at } => write!(
            out,
            "{} = {} {}, {} at {} : {}",
            n(op.results[0]),
            b.mnemonic(),
            n(*lhs),
            n(*rhs),
            time(f, at),
            res_ty(0)
        )
        .unwrap(),
        OpKind::BitSlice { src, hi, lo, at } => write!(
            out,
            "{} = bit_slice {} [{hi} : {lo}] at {} : {}",
            n(op.results[0]),
            n(*src),
            time(f, at),
            res_ty(0)
        )
        .unwrap(),
        OpKind::Select { cond, if_true, if_false, at } => write!(
            out,
            "{} = select {}, {}, {} at {} : {}",
            n(op.results[0]),
            n(*cond),
            n(*if_true),
            n(*if_false),
            time(f, at),
            res_ty(0)
        )
        .unwrap(),
        OpKind::MemRead { mem, indices, at } => write!(
            out,
            "{} = mem_read {}[{}] at {} : {}",
            n(op.results[0]),
            n(*mem),
            list(f, indices),
            time(f, at),
            res_ty(0)
        )
        .unwrap(),
        OpKind::MemWrite { value, mem, indices, at } => write!(
            out,
            "mem_write {} to {}[{}] at {}",
            n(*value),
            n(*mem),
            list(f, indices),
            time(f, at)
        )
        .unwrap(),
        OpKind::Delay { src, by, at } => write!(
            out,
            "{} = delay {} by {by} at {} : {}",
            n(op.results[0]),
            n(*src),
            time(f, at),
            res_ty(0)
        )
        .unwrap(),
        OpKind::Call { callee, args, at } => {
            if !op.results.is_empty() {
                write!(out, "{} = ", list(f, &op.results)).unwrap();
            }
            write!(out, "call @{callee}({}) at {}", list(f, args), time(f, at)).unwrap();
            if !op.results.is_empty() {
                let tys: Vec<String> = (0..op.results.len()).map(res_ty).collect();
                write!(out, " : {}", tys.join(", ")).unwrap();
            }
        }
        OpKind::Loop(l) => {
            if let Some(done) = op.results.first() {
                write!(out, "{} = ", n(*done)).unwrap();
            }
            match l.kind {
                LoopKind::Sequential => write!(out, "for {} : {}", n(l.iv), f.ty(l.iv)).unwrap(),
                LoopKind::Unrolled => write!(out, "unroll_for {}", n(l.iv)).unwrap(),
            }
            write!(out, " = {} to {} step {}", n(l.lb), n(l.ub), n(l.step)).unwrap();
            for a in &l.accums {
                write!(out, " accum {} : {} = {} by {}", n(a.value), f.ty(a.value), a.init, a.step).unwrap();
            }
            writeln!(out, " iter_time {} at {} {{", n(l.iter_time), time(f, &l.start)).unwrap();
            print_region(out, f, &l.body, depth + 1);
            out.push_str(&pad);
            out.push('}');
        }
        OpKind::Yield { at } => write!(out, "yield at {}", time(f, at)).unwrap(),
        OpKind::Return { values, at } => {
            out.push_str("return");
            if !values.is_empty() {
                write!(out, " ({})", list(f, values)).unwrap();
            }
            write!(out, " at {}", time(f, at)).unwrap();
        }
        OpKind::Alloc => {
            let tys: Vec<String> = (0..op.results.len()).map(res_ty).collect();
            write!(out, "{} = alloc : {}", list(f, &op.results), tys.join(", ")).unwrap();
        }
    }
    out.push('\n');
}
