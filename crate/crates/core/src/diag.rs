//! Diagnostics shared by the parser, the structural validator, the schedule
//! verifier, the optimizer and the backend.

use serde::Serialize;
use std::fmt;
use std::sync::Arc;

/// A source region. Lines and columns are 1-based.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Span {
    pub file: Arc<str>,
    pub line: u32,
    pub col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl Span {
    pub fn new(file: Arc<str>, line: u32, col: u32, end_line: u32, end_col: u32) -> Self {
        Span { file, line, col, end_line, end_col }
    }

    /// Smallest span covering both `self` and `other`.
    pub fn to(&self, other: &Span) -> Span {
        Span {
            file: self.file.clone(),
            line: self.line,
            col: self.col,
            end_line: other.end_line,
            end_col: other.end_col,
        }
    }

    pub fn is_unknown(&self) -> bool {
        self.line == 0
    }

    /// Whether `(line, col)` lies inside this span.
    pub fn contains(&self, line: u32, col: u32) -> bool {
        (line, col) >= (self.line, self.col) && (line, col) <= (self.end_line, self.end_col)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let file = if self.file.is_empty() { "<input>" } else { &self.file };
        write!(f, "{}:{}:{}", file, self.line, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

macro_rules! diag_classes {
    ($($variant:ident => $text:literal),* $(,)?) => {
        /// Every kind of problem the toolkit can report.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum DiagClass {
            $($variant),*
        }

        impl DiagClass {
            pub fn as_str(self) -> &'static str {
                match self {
                    $(DiagClass::$variant => $text),*
                }
            }

            pub fn all() -> &'static [DiagClass] {
                &[$(DiagClass::$variant),*]
            }
        }
    };
}

diag_classes! {
    // frontend
    LexError => "lex-error",
    SyntaxError => "syntax-error",
    DuplicateName => "duplicate-name",
    UnknownType => "unknown-type",
    NegativeOffset => "negative-offset",
    // structure
    UseBeforeDef => "use-before-def",
    UndefinedValue => "undefined-value",
    TimeNotVisible => "time-not-visible",
    YieldCount => "yield-count",
    ReturnCount => "return-count",
    UnrollBoundsNotConst => "unroll-bounds-not-const",
    DistributedIndexNotConst => "distributed-index-not-const",
    TypeMismatch => "type-mismatch",
    Arity => "arity-mismatch",
    UnknownCallee => "unknown-callee",
    PortPermission => "port-permission",
    ZeroInitiationInterval => "zero-initiation-interval",
    Recursion => "recursion",
    MisplacedOp => "misplaced-op",
    DuplicateFunction => "duplicate-function",
    // schedule verification
    TimingMismatch => "timing-mismatch",
    StaleIterationValue => "stale-iteration-value",
    CrossIterationDelay => "cross-iteration-delay",
    PipelineImbalance => "pipeline-imbalance",
    PortConflict => "port-conflict",
    PortConflictPossible => "port-conflict-possible",
    // optimizer / backend
    UnknownPass => "unknown-pass",
    PassBroke => "pass-broke-schedule",
    PortLimit => "port-limit",
    RamStyle => "ram-style",
    Unsupported => "unsupported",
    // simulator
    SimInput => "sim-input",
    SimTimeout => "sim-timeout",
    Internal => "internal",
}

impl fmt::Display for DiagClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for DiagClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub class: DiagClass,
    pub span: Span,
    pub message: String,
    pub related: Vec<(Span, String)>,
}

impl Diagnostic {
    pub fn error(class: DiagClass, span: Span, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Error, class, span, message: message.into(), related: Vec::new() }
    }

    pub fn warning(class: DiagClass, span: Span, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Warning, class, span, message: message.into(), related: Vec::new() }
    }

    pub fn with_related(mut self, span: Span, note: impl Into<String>) -> Self {
        self.related.push((span, note.into()));
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// One JSON object: `{class, file, line, col, message}` plus severity.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "class": self.class.as_str(),
            "severity": self.severity,
            "file": &*self.span.file,
            "line": self.span.line,
            "col": self.span.col,
            "message": self.message,
        })
    }

    /// Renders `file:line:col: error[class]: message`, optionally with ANSI color.
    pub fn render(&self, color: bool) -> String {
        let mut out = if color {
            let code = match self.severity {
                Severity::Error => "31",
                Severity::Warning => "33",
            };
            format!("{}: \x1b[1;{}m{}[{}]\x1b[0m: {}", self.span, code, self.severity, self.class, self.message)
        } else {
            format!("{}: {}[{}]: {}", self.span, self.severity, self.class, self.message)
        };
        for (span, note) in &self.related {
            out.push_str(&format!("\n{}: note: {}", span, note));
        }
        out
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(false))
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_compiler_style_line() {
        let d = Diagnostic::error(
            DiagClass::StaleIterationValue,
            Span::new("err_add.hir".into(), 9, 5, 9, 40),
            "induction variable %i is stale",
        );
        assert_eq!(d.to_string(), "err_add.hir:9:5: error[stale-iteration-value]: induction variable %i is stale");
        let j = d.to_json();
        assert_eq!(j["class"], "stale-iteration-value");
        assert_eq!(j["line"], 9);
        assert_eq!(j["col"], 5);
    }

    #[test]
    fn class_names_are_unique() {
        let mut names: Vec<_> = DiagClass::all().iter().map(|c| c.as_str()).collect();
        names.sort();
        let n = names.len();
        names.dedup();
        assert_eq!(n, names.len());
    }
}
