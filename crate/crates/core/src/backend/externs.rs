use super::{ident, range};
use crate::diag::{DiagClass, Diagnostic};
use crate::ir::*;
use std::fmt::Write as _;

/// Port list shared by the black-box shell and by call sites.
pub(crate) fn extern_ports(e: &ExternDecl) -> Result<Vec<String>, Diagnostic> {
    let mut ports = vec!["input clk".to_string(), "input start".to_string()];
    for (name, ty, _) in &e.params {
        match ty {
            Type::Int(w) | Type::Float(w) => ports.push(format!("input {}p_{}", range(*w), ident(name))),
            Type::Memref(mt) => ports.extend(super::func::memref_port_decls(&format!("m_{}", ident(name)), mt)),
            other => {
                return Err(Diagnostic::error(
                    DiagClass::Unsupported,
                    e.span.clone(),
                    format!("extern @{} takes a parameter of type {other}, which has no hardware interface", e.name),
                ))
            }
        }
    }
    for (j, r) in e.results.iter().enumerate() {
        match &r.ty {
            Type::Int(w) | Type::Float(w) => ports.push(format!("output {}res_{j}", range(*w))),
            other => {
                return Err(Diagnostic::error(
                    DiagClass::Unsupported,
                    e.span.clone(),
                    format!("extern @{} returns {other}; only scalar results are supported", e.name),
                ))
            }
        }
    }
    Ok(ports)
}

/// Black-box shell for an external module. The real module replaces it when
/// `HIR_EXTERN_<NAME>` is defined. There are no handshake wires: every
/// result arrives at its declared delay after `start`.
pub fn emit_extern_decl(e: &ExternDecl) -> Result<String, Diagnostic> {
    let ports = extern_ports(e)?;
    let name = ident(&e.name);
    let mut out = String::new();
    writeln!(out, "// {}", e.span).unwrap();
    for (j, r) in e.results.iter().enumerate() {
        let kind = if r.delay == 0 { "combinational" } else { "pipelined" };
        writeln!(out, "// res_{j}: {kind}, valid {} cycles after start", r.delay).unwrap();
    }
    writeln!(out, "`ifndef HIR_EXTERN_{}", name.to_uppercase()).unwrap();
    writeln!(out, "(* black_box *)").unwrap();
    writeln!(out, "module {name} (").unwrap();
    writeln!(out, "  {}", ports.join(",\n  ")).unwrap();
    writeln!(out, ");").unwrap();
    writeln!(out, "endmodule").unwrap();
    writeln!(out, "`endif").unwrap();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    #[test]
    fn shell_has_no_handshake() {
        let m = parse("extern @mult3(%a: i32 delay 0, %b: i32 delay 0) -> (i32 delay 3) model mul\n", "e.hir").unwrap();
        let e = m.extern_decl("mult3").unwrap();
        let v = emit_extern_decl(e).unwrap();
        assert!(v.contains("module mult3 ("));
        assert!(v.contains("input [31:0] p_a"));
        assert!(v.contains("output [31:0] res_0"));
        assert!(v.contains("valid 3 cycles after start"));
        assert!(!v.contains("ready") && !v.contains("valid_in"));
    }

    #[test]
    fn zero_delay_is_combinational() {
        let m = parse("extern @inc(%a: i8) -> (i8)\n", "e.hir").unwrap();
        let v = emit_extern_decl(m.extern_decl("inc").unwrap()).unwrap();
        assert!(v.contains("combinational"));
    }
}
