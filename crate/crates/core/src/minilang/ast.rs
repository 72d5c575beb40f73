use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};

/// Position of a syntax node in its source file. Lines and columns are
/// 1-based; columns count characters, not bytes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SourceLocation {
    pub file: Arc<str>,
    pub line: u32,
    pub column: u32,
}

impl SourceLocation {
    pub fn new(file: impl Into<Arc<str>>, line: u32, column: u32) -> Self {
        debug_assert!(line >= 1 && column >= 1);
        Self {
            file: file.into(),
            line,
            column,
        }
    }
}

impl fmt::Display for SourceLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

impl Serialize for SourceLocation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// The two sanitizer families an input can be routed through.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SanitizerKind {
    String,
    Numeric,
}

impl SanitizerKind {
    /// Name of the QScript builtin that applies this sanitizer.
    pub fn builtin(self) -> &'static str {
        match self {
            SanitizerKind::String => "sanitize_string",
            SanitizerKind::Numeric => "sanitize_numeric",
        }
    }
}

impl fmt::Display for SanitizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SanitizerKind::String => f.write_str("string"),
            SanitizerKind::Numeric => f.write_str("numeric"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub loc: SourceLocation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmtKind {
    VarDecl {
        name: String,
        value: Expr,
    },
    Assign {
        name: String,
        value: Expr,
    },
    /// `name += value;`
    ConcatAssign {
        name: String,
        value: Expr,
    },
    If {
        cond: Cond,
        then_branch: Vec<Stmt>,
        else_branch: Vec<Stmt>,
    },
    While {
        cond: Cond,
        body: Vec<Stmt>,
    },
    ExecuteQuery(Expr),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub loc: SourceLocation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprKind {
    StringLiteral(String),
    VarRef(String),
    GetParam(String),
    Concat(Box<Expr>, Box<Expr>),
    Sanitize(SanitizerKind, Box<Expr>),
}

impl Expr {
    pub fn new(kind: ExprKind, loc: SourceLocation) -> Self {
        Self { kind, loc }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, left: &str, right: &str) -> bool {
        match self {
            CmpOp::Eq => left == right,
            CmpOp::Ne => left != right,
            CmpOp::Lt => left < right,
            CmpOp::Le => left <= right,
            CmpOp::Gt => left > right,
            CmpOp::Ge => left >= right,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cond {
    pub left: Expr,
    pub op: CmpOp,
    pub right: Expr,
    pub loc: SourceLocation,
}

/// A parsed QScript program.
pub type Program = Vec<Stmt>;

/// Compares two programs while ignoring every `SourceLocation`.
pub fn structurally_equal(a: &[Stmt], b: &[Stmt]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| stmt_eq(x, y))
}

fn stmt_eq(a: &Stmt, b: &Stmt) -> bool {
    use StmtKind::*;
    match (&a.kind, &b.kind) {
        (
            VarDecl {
                name: n1,
                value: v1,
            },
            VarDecl {
                name: n2,
                value: v2,
            },
        )
        | (
            Assign {
                name: n1,
                value: v1,
            },
            Assign {
                name: n2,
                value: v2,
            },
        )
        | (
            ConcatAssign {
                name: n1,
                value: v1,
            },
            ConcatAssign {
                name: n2,
                value: v2,
            },
        ) => n1 == n2 && expr_eq(v1, v2),
        (
            If {
                cond: c1,
                then_branch: t1,
                else_branch: e1,
            },
            If {
                cond: c2,
                then_branch: t2,
                else_branch: e2,
            },
        ) => cond_eq(c1, c2) && structurally_equal(t1, t2) && structurally_equal(e1, e2),
        (While { cond: c1, body: b1 }, While { cond: c2, body: b2 }) => {
            cond_eq(c1, c2) && structurally_equal(b1, b2)
        }
        (ExecuteQuery(e1), ExecuteQuery(e2)) => expr_eq(e1, e2),
        _ => false,
    }
}

fn cond_eq(a: &Cond, b: &Cond) -> bool {
    a.op == b.op && expr_eq(&a.left, &b.left) && expr_eq(&a.right, &b.right)
}

fn expr_eq(a: &Expr, b: &Expr) -> bool {
    use ExprKind::*;
    match (&a.kind, &b.kind) {
        (StringLiteral(x), StringLiteral(y))
        | (VarRef(x), VarRef(y))
        | (GetParam(x), GetParam(y)) => x == y,
        (Concat(l1, r1), Concat(l2, r2)) => expr_eq(l1, l2) && expr_eq(r1, r2),
        (Sanitize(k1, e1), Sanitize(k2, e2)) => k1 == k2 && expr_eq(e1, e2),
        _ => false,
    }
}

/// Calls `f` on every expression of the program in source order
/// (operands before the expression that contains them).
pub fn walk_exprs<'a>(program: &'a [Stmt], f: &mut impl FnMut(&'a Expr)) {
    fn expr<'a>(e: &'a Expr, f: &mut impl FnMut(&'a Expr)) {
        match &e.kind {
            ExprKind::Concat(l, r) => {
                expr(l, f);
                expr(r, f);
            }
            ExprKind::Sanitize(_, inner) => expr(inner, f),
            _ => {}
        }
        f(e);
    }
    for stmt in program {
        match &stmt.kind {
            StmtKind::VarDecl { value, .. }
            | StmtKind::Assign { value, .. }
            | StmtKind::ConcatAssign { value, .. }
            | StmtKind::ExecuteQuery(value) => expr(value, f),
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                expr(&cond.left, f);
                expr(&cond.right, f);
                walk_exprs(then_branch, f);
                walk_exprs(else_branch, f);
            }
            StmtKind::While { cond, body } => {
                expr(&cond.left, f);
                expr(&cond.right, f);
                walk_exprs(body, f);
            }
        }
    }
}

/// Calls `f` on every statement, pre-order.
pub fn walk_stmts<'a>(program: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for stmt in program {
        f(stmt);
        match &stmt.kind {
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => {
                walk_stmts(then_branch, f);
                walk_stmts(else_branch, f);
            }
            StmtKind::While { body, .. } => walk_stmts(body, f),
            _ => {}
        }
    }
}

/// Total number of AST nodes (statements, conditions and expressions).
pub fn node_count(program: &[Stmt]) -> usize {
    let mut stmts = 0;
    let mut conds = 0;
    walk_stmts(program, &mut |s| {
        stmts += 1;
        if matches!(s.kind, StmtKind::If { .. } | StmtKind::While { .. }) {
            conds += 1;
        }
    });
    let mut exprs = 0;
    walk_exprs(program, &mut |_| exprs += 1);
    stmts + conds + exprs
}
