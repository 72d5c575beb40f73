use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::sanitize::sanitize;
use crate::minilang::{Cond, Expr, ExprKind, SourceLocation, Stmt, StmtKind};

/// Request parameters by name. A parameter that is absent reads as `""`.
pub type InputVector = BTreeMap<String, String>;

pub const DEFAULT_STEP_BUDGET: u64 = 10_000;
pub const STEP_BUDGET_ENV: &str = "ASSISTKIT_STEP_BUDGET";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Maximum number of statements plus loop-condition checks.
    pub step_budget: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }
}

/// Reads the step budget from `ASSISTKIT_STEP_BUDGET`, falling back to the
/// default when the variable is unset or not a positive integer.
pub fn step_budget_from_env() -> u64 {
    std::env::var(STEP_BUDGET_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or(DEFAULT_STEP_BUDGET)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("{loc}: step budget of {budget} exceeded")]
    StepBudget { loc: SourceLocation, budget: u64 },
    #[error("{loc}: use of undeclared variable `{name}`")]
    Undeclared { name: String, loc: SourceLocation },
}

/// Runs `program` and returns the queries it executed, in order.
pub fn run_program(program: &[Stmt], inputs: &InputVector) -> Result<Vec<String>, RunError> {
    run_program_with(program, inputs, RunOptions::default())
}

pub fn run_program_with(
    program: &[Stmt],
    inputs: &InputVector,
    options: RunOptions,
) -> Result<Vec<String>, RunError> {
    let mut interp = Interp {
        inputs,
        vars: HashMap::new(),
        steps: 0,
        budget: options.step_budget,
        log: Vec::new(),
    };
    interp.block(program)?;
    Ok(interp.log)
}

struct Interp<'a> {
    inputs: &'a InputVector,
    vars: HashMap<String, String>,
    steps: u64,
    budget: u64,
    log: Vec<String>,
}

impl Interp<'_> {
    fn step(&mut self, loc: &SourceLocation) -> Result<(), RunError> {
        self.steps += 1;
        if self.steps > self.budget {
            return Err(RunError::StepBudget {
                loc: loc.clone(),
                budget: self.budget,
            });
        }
        Ok(())
    }

    fn var_mut(&mut self, name: &str, loc: &SourceLocation) -> Result<&mut String, RunError> {
        self.vars.get_mut(name).ok_or_else(|| RunError::Undeclared {
            name: name.to_string(),
            loc: loc.clone(),
        })
    }

    fn eval(&self, expr: &Expr) -> Result<String, RunError> {
        Ok(match &expr.kind {
            ExprKind::StringLiteral(s) => s.clone(),
            ExprKind::VarRef(name) => {
                self.vars
                    .get(name)
                    .cloned()
                    .ok_or_else(|| RunError::Undeclared {
                        name: name.clone(),
                        loc: expr.loc.clone(),
                    })?
            }
            ExprKind::GetParam(p) => self.inputs.get(p).cloned().unwrap_or_default(),
            ExprKind::Concat(l, r) => {
                let mut s = self.eval(l)?;
                s.push_str(&self.eval(r)?);
                s
            }
            ExprKind::Sanitize(kind, inner) => sanitize(*kind, &self.eval(inner)?),
        })
    }

    fn test(&self, cond: &Cond) -> Result<bool, RunError> {
        Ok(cond
            .op
            .holds(&self.eval(&cond.left)?, &self.eval(&cond.right)?))
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<(), RunError> {
        for stmt in stmts {
            self.step(&stmt.loc)?;
            match &stmt.kind {
                StmtKind::VarDecl { name, value } => {
                    let v = self.eval(value)?;
                    self.vars.insert(name.clone(), v);
                }
                StmtKind::Assign { name, value } => {
                    let v = self.eval(value)?;
                    *self.var_mut(name, &stmt.loc)? = v;
                }
                StmtKind::ConcatAssign { name, value } => {
                    let v = self.eval(value)?;
                    self.var_mut(name, &stmt.loc)?.push_str(&v);
                }
                StmtKind::If {
                    cond,
                    then_branch,
                    else_branch,
                } => {
                    if self.test(cond)? {
                        self.block(then_branch)?;
                    } else {
                        self.block(else_branch)?;
                    }
                }
                StmtKind::While { cond, body } => {
                    while self.test(cond)? {
                        self.block(body)?;
                        self.step(&cond.loc)?;
                    }
                }
                StmtKind::ExecuteQuery(arg) => {
                    let q = self.eval(arg)?;
                    self.log.push(q);
                }
            }
        }
        Ok(())
    }
}
