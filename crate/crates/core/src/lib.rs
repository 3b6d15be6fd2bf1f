//! Timed component models: a textual modelling language, a discrete-time
//! execution kernel, bounded model and refinement checking, Event-B
//! emission and golden-trace simulation oracles.

pub mod check;
pub mod diag;
pub mod emit;
pub mod eval;
pub mod kernel;
pub mod model;
pub mod oracle;
pub mod parser;
pub mod program;
pub mod refine;
pub mod run;
pub mod validate;

pub use diag::{DiagCode, Diagnostic, Severity, Span};
pub use model::Model;
pub use program::{Program, Value};
pub use validate::{load_file, load_str, type_of, validate, ValidModel};
