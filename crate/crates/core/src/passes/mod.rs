//! IR-to-IR optimizations. Every pass must keep a schedule-valid function
//! schedule-valid; [`run_pipeline`] re-verifies after each one.

mod constprop;
mod cse;
mod dedup;
mod narrow;
mod strength;

pub use constprop::constant_propagation;
pub use cse::cse;
pub use dedup::dedup_time_and_delays;
pub use narrow::{counter_width, narrow_precision};
pub use strength::strength_reduce;

use crate::diag::{has_errors, DiagClass, Diagnostic, Span};
use crate::ir::*;
use crate::validate::validate_structure;
use crate::verify::verify_module;
use serde::Serialize;
use std::collections::HashMap;
use std::fmt;

pub const DEFAULT_PIPELINE: &[&str] = &["constprop", "cse", "strength_reduce", "narrow_precision", "dedup_time_and_delays"];

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PassReport {
    pub pass: String,
    pub ops_before: usize,
    pub ops_after: usize,
    pub removed: usize,
    pub added: usize,
    pub rewritten: usize,
    /// `file:line:col: what happened`, one per rewrite.
    pub locations: Vec<String>,
}

impl PassReport {
    fn new(pass: &str) -> Self {
        PassReport { pass: pass.to_string(), ..Default::default() }
    }

    pub(crate) fn note(&mut self, span: &Span, what: impl fmt::Display) {
        self.locations.push(format!("{span}: {what}"));
    }

    pub fn changed(&self) -> bool {
        self.removed + self.added + self.rewritten > 0
    }
}

impl fmt::Display for PassReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: {} ops -> {} ops (removed {}, added {}, rewritten {})",
            self.pass, self.ops_before, self.ops_after, self.removed, self.added, self.rewritten
        )?;
        for l in &self.locations {
            writeln!(f, "  {l}")?;
        }
        Ok(())
    }
}

type PassFn = fn(&mut Module, &mut PassReport);

fn lookup(name: &str) -> Option<PassFn> {
    Some(match name {
        "constprop" => constant_propagation,
        "cse" => cse,
        "strength_reduce" => strength_reduce,
        "narrow_precision" => narrow_precision,
        "dedup_time_and_delays" => dedup_time_and_delays,
        _ => return None,
    })
}

pub fn module_op_count(m: &Module) -> usize {
    m.functions().map(|f| f.body.op_count()).sum()
}

/// Runs one named pass over every function.
pub fn run_pass(m: &mut Module, name: &str) -> Result<PassReport, Diagnostic> {
    let pass = lookup(name).ok_or_else(|| unknown_pass(name))?;
    let mut report = PassReport::new(name);
    report.ops_before = module_op_count(m);
    pass(m, &mut report);
    report.ops_after = module_op_count(m);
    Ok(report)
}

fn unknown_pass(name: &str) -> Diagnostic {
    Diagnostic::error(
        DiagClass::UnknownPass,
        Span::default(),
        format!("unknown pass '{name}'; available: {}", DEFAULT_PIPELINE.join(", ")),
    )
}

/// Applies `passes` in order, verifying after each. Stops at the first pass
/// that leaves errors behind.
pub fn run_pipeline(m: &Module, passes: &[&str]) -> Result<(Module, Vec<PassReport>), Diagnostic> {
    if let Some(bad) = passes.iter().find(|p| lookup(p).is_none()) {
        return Err(unknown_pass(bad));
    }
    let mut m = m.clone();
    let mut reports = Vec::new();
    for name in passes {
        let report = run_pass(&mut m, name)?;
        let mut diags = validate_structure(&m);
        if !has_errors(&diags) {
            diags.extend(verify_module(&m));
        }
        if let Some(d) = diags.iter().find(|d| d.is_error()) {
            return Err(Diagnostic::error(
                DiagClass::PassBroke,
                d.span.clone(),
                format!("pass '{name}' broke the schedule: [{}] {}", d.class, d.message),
            ));
        }
        reports.push(report);
    }
    Ok((m, reports))
}

/// Number of references to each value, including schedule bases.
pub(crate) fn use_counts(f: &Function) -> HashMap<ValueId, usize> {
    let mut uses = HashMap::new();
    f.body.walk(&mut |op| {
        for v in op.all_operands() {
            *uses.entry(v).or_insert(0) += 1;
        }
    });
    uses
}

pub(crate) fn replace_uses(f: &mut Function, old: ValueId, new: ValueId) {
    f.body.walk_mut(&mut |op| op.map_operands(|v| if v == old { new } else { v }));
}

/// Removes ops for which `pred` holds from every region; returns how many went.
pub(crate) fn remove_ops(r: &mut Region, pred: &mut impl FnMut(&Op) -> bool) -> usize {
    let before = r.ops.len();
    r.ops.retain(|op| !pred(op));
    let mut n = before - r.ops.len();
    for op in &mut r.ops {
        if let OpKind::Loop(l) = &mut op.kind {
            n += remove_ops(&mut l.body, pred);
        }
    }
    n
}

/// Removes `constant` ops whose results are never referenced.
pub(crate) fn remove_dead_constants(f: &mut Function, report: &mut PassReport) {
    loop {
        let uses = use_counts(f);
        let n = remove_ops(&mut f.body, &mut |op| {
            matches!(op.kind, OpKind::Constant { .. }) && uses.get(&op.results[0]).copied().unwrap_or(0) == 0
        });
        if n == 0 {
            break;
        }
        report.removed += n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse, print};

    #[test]
    fn empty_pipeline_is_identity() {
        let m = parse("def @f() at %t {\n  return at %t\n}\n", "p.hir").unwrap();
        let (out, reports) = run_pipeline(&m, &[]).unwrap();
        assert_eq!(print(&out), print(&m));
        assert!(reports.is_empty());
    }

    #[test]
    fn unknown_pass_is_rejected() {
        let m = parse("def @f() at %t {\n  return at %t\n}\n", "p.hir").unwrap();
        assert_eq!(run_pipeline(&m, &["nope"]).unwrap_err().class, DiagClass::UnknownPass);
    }
}
