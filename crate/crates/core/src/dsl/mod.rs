//! Scenario snippet language.
//!
//! A scene script has four sections: a fixed header plus one snippet each for
//! adversary behavior, road geometry and spawn position. Snippets use an
//! indentation-sensitive surface syntax (`behavior`, `do`, `try:`,
//! `interrupt when`, `take`, `param NAME = Range(lo, hi)`); see
//! `docs/grammar.md` for the full grammar.

mod ast;
mod lexer;
mod parser;
mod print;
mod script;

use thiserror::Error;

pub use ast::*;
pub use lexer::canonicalize;
pub use parser::{parse_snippet, MAX_TRY_DEPTH};
pub use print::serialize;
pub use script::{
    assemble_script, compatible, list_params, maneuvers_for, placements_for, validate, AssembleError, Header, Issue,
    SceneScript, ScriptError, ValidationReport,
};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum DslError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("unknown primitive `{0}`")]
    UnknownPrimitive(String),
    #[error("`{construct}` is not allowed in a {kind} snippet")]
    WrongComponent { kind: ComponentKind, construct: String },
}

impl DslError {
    pub(crate) fn syntax(line: usize, col: usize, message: impl Into<String>) -> Self {
        DslError::Syntax {
            line,
            col,
            message: message.into(),
        }
    }
}
