//! Automatic SQL-injection sanitization for QScript programs.
//!
//! The pipeline: parse a program ([`minilang`]), build its string flow
//! graph ([`flowgraph`]), reconstruct the abstract queries that can reach
//! each `executeQuery` ([`qfs`]), parse those against a database schema to
//! decide whether each user input needs the string or the numeric
//! sanitizer ([`sqlschema`]), then rewrite the program with sanitizer calls
//! ([`instrument`]). [`runtime`] provides the sanitizers and an interpreter
//! that logs executed queries; [`eval`] runs original and instrumented
//! programs side by side over labelled attack/legitimate inputs.

pub mod eval;
pub mod flowgraph;
pub mod instrument;
pub mod minilang;
pub mod par;
pub mod pipeline;
pub mod qfs;
pub mod runtime;
pub mod sqlschema;

pub use minilang::SanitizerKind;
