//! The input language: a small C-like imperative language with integer and
//! real variables, `coin_flip()` / `uniform()` generators, and `know (...)`
//! assumptions. The trailing `know` of a program is its outcome event.

mod ast;
mod lexer;
mod parser;
mod printer;
mod validate;

use std::fmt;

use thiserror::Error;

pub use ast::*;
pub use parser::parse_unchecked;
pub use validate::{validate, Diagnostic};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(line: usize, col: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            col,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LangError {
    #[error("syntax error at {0}")]
    Syntax(#[from] ParseError),
    #[error("invalid program:{}", Diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
}

struct Diagnostics<'a>(&'a [Diagnostic]);

impl fmt::Display for Diagnostics<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.0 {
            write!(f, "\n  {d}")?;
        }
        Ok(())
    }
}

/// Parses and validates a program whose outcome is its trailing `know`.
pub fn parse(src: &str) -> Result<Program, LangError> {
    parse_with_query(src, None)
}

/// Parses and validates a program. When `query` is given it becomes the
/// outcome and every `know` of the source stays an assumption.
pub fn parse_with_query(src: &str, query: Option<&str>) -> Result<Program, LangError> {
    let p = parse_unchecked(src, query)?;
    let diags = validate(&p);
    if diags.is_empty() {
        Ok(p)
    } else {
        Err(LangError::Invalid(diags))
    }
}
