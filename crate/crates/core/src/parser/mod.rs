//! Query text to syntax tree, plus the sugar expansion that runs before
//! type checking.

pub mod ast;
mod desugar;
mod grammar;
mod lexer;
mod pretty;

pub use ast::*;
pub use desugar::{desugar, has_sugar, DesugarError};
pub use grammar::parse_statement;
pub use lexer::{tokenize, Kw, Tok, Token};
pub use pretty::{print_cond, print_model, print_query, print_scalar, print_statement, print_table};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("syntax error at line {line}, column {col}: {message}{}", expected_suffix(.expected))]
pub struct ParseError {
    pub message: String,
    pub line: u32,
    pub col: u32,
    pub expected: Vec<String>,
}

fn expected_suffix(expected: &[String]) -> String {
    if expected.is_empty() {
        String::new()
    } else {
        format!(" (expected one of: {})", expected.join(", "))
    }
}

/// Parses a single query. Result directives (`ORDER BY`, trailing `LIMIT`)
/// are rejected here; use [`parse_statement`] to accept them.
pub fn parse(src: &str) -> Result<Query, ParseError> {
    let st = parse_statement(src)?;
    if !st.order_by.is_empty() || st.limit.is_some() {
        return Err(ParseError {
            message: "ORDER BY and LIMIT apply to statements, not queries".into(),
            line: 1,
            col: 1,
            expected: Vec::new(),
        });
    }
    Ok(st.query)
}
