//! Textual form: lexer, parser and canonical printer.

pub mod lexer;
mod parser;
mod printer;

use crate::diag::{has_errors, Diagnostic};
use crate::ir::Module;
use crate::validate::validate_structure;

pub use printer::print_module as print;

/// Parses and structurally validates a module.
///
/// Returns every error found; warnings are dropped on success.
pub fn parse(src: &str, file: &str) -> Result<Module, Vec<Diagnostic>> {
    let (m, diags) = parse_unchecked(src, file);
    match m {
        Some(m) if !has_errors(&diags) => Ok(m),
        _ => Err(diags.into_iter().filter(Diagnostic::is_error).collect()),
    }
}

/// Parses and validates, returning whatever module could be built together
/// with all diagnostics. The module is `None` only when nothing was parsed.
pub fn parse_unchecked(src: &str, file: &str) -> (Option<Module>, Vec<Diagnostic>) {
    let mut p = parser::Parser::new(src, file);
    let m = p.parse_module();
    let mut diags = std::mem::take(&mut p.diags);
    if !has_errors(&diags) {
        diags.extend(validate_structure(&m));
    }
    let empty = m.items.is_empty() && has_errors(&diags);
    (if empty { None } else { Some(m) }, diags)
}

/// Two modules print to the same canonical text.
pub fn structurally_equal(a: &Module, b: &Module) -> bool {
    print(a) == print(b)
}
