//! The two sanitizers, an interpreter for QScript, and the query log it
//! writes. The "database" only records the queries it is handed.

mod interp;
mod log;
mod sanitize;

pub use interp::{
    run_program, run_program_with, step_budget_from_env, InputVector, RunError, RunOptions,
    DEFAULT_STEP_BUDGET, STEP_BUDGET_ENV,
};
pub use log::{LogEntry, LogParseError, QueryLog};
pub use sanitize::{is_numeral, sanitize, sanitize_numeric, sanitize_string, ESCAPABLE};
