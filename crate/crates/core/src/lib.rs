//! Compiler toolkit for an explicitly scheduled hardware IR: parser, schedule
//! verifier, optimizer, Verilog backend and cycle-accurate simulator.

pub mod analysis;
pub mod backend;
pub mod diag;
pub mod frontend;
pub mod ir;
pub mod passes;
pub mod sim;
pub mod validate;
pub mod verify;

pub use diag::{DiagClass, Diagnostic, Severity, Span};
pub use frontend::{parse, print};
pub use ir::Module;
