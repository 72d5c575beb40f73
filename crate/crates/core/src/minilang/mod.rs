//! QScript: a small imperative scripting language with string variables,
//! request-parameter reads, concatenation, branching, loops and a query
//! execution statement.
//!
//! ```text
//! program   := stmt* ;
//! stmt      := "var" IDENT "=" expr ";" | IDENT "=" expr ";" | IDENT "+=" expr ";"
//!            | "if" "(" cond ")" block ("else" block)? | "while" "(" cond ")" block
//!            | "executeQuery" "(" expr ")" ";" ;
//! block     := "{" stmt* "}" ;
//! expr      := term ("+" term)* ;
//! term      := STRING_LITERAL | IDENT | "getParam" "(" STRING_LITERAL ")"
//!            | "sanitize_string" "(" expr ")" | "sanitize_numeric" "(" expr ")" ;
//! cond      := expr ("=="|"!="|"<"|"<="|">"|">=") expr ;
//! ```
//!
//! `//` starts a comment that runs to the end of the line.

mod ast;
mod emit;
mod parser;

pub use ast::*;
pub use emit::{emit_expr, emit_source};
pub use parser::{parse_program, parse_program_with, ParseOptions, SyntaxError};
