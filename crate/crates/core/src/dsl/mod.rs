//! The `.cbm` modeling language: entities, datasources and KPI definitions.
//!
//! [`parse_model`] turns source text into a [`Model`] (or a report of lexical
//! and syntax errors); [`validate_model`] checks the semantic rules and
//! returns every violation it finds. [`print_model`] renders a model back to
//! canonical source.

mod ast;
mod diag;
mod lexer;
mod parser;
mod printer;
mod validate;

pub use ast::*;
pub use diag::{Diagnostic, Severity, ValidationReport};
pub use parser::{parse_model, parse_model_bytes};
pub use printer::print_model;
pub use validate::validate_model;

/// Parses and validates in one step.
pub fn load_model(text: &str) -> Result<Model, ValidationReport> {
    let model = parse_model(text)?;
    let report = validate_model(&model);
    if report.is_empty() {
        Ok(model)
    } else {
        Err(report)
    }
}
