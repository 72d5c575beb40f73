//! Sanitizer placement and AST rewriting.
//!
//! From every user-input node the flow graph is followed forward through
//! assignments to the first concatenation; the operand that carries the
//! input into that concatenation is wrapped in the chosen sanitizer. An
//! input that reaches `executeQuery` without any concatenation is wrapped
//! at the call argument instead.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::flowgraph::{ConcatSite, FlowGraph, FlowNodeKind, NodeId};
use crate::minilang::{Expr, ExprKind, SourceLocation, Stmt, StmtKind};
use crate::sqlschema::{PlaceholderResolution, Resolved};
use crate::SanitizerKind;

/// The syntactic place a sanitizer call goes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Site {
    /// Operand of `a + b`, located at the `+` token.
    Operator,
    /// Operand of `name += b;`, located at the statement.
    CompoundAssign,
    /// The whole argument of `executeQuery`, located at the statement.
    ExecuteArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OperandSide {
    Left,
    Right,
    /// Used with [`Site::ExecuteArg`].
    Whole,
}

/// The operand of one concatenation (or query call) that a placeholder
/// first flows into.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct InsertionPoint {
    pub loc: SourceLocation,
    pub site: Site,
    pub side: OperandSide,
    #[serde(serialize_with = "ser_opt_node")]
    pub concat: Option<NodeId>,
    #[serde(serialize_with = "ser_node")]
    pub placeholder: NodeId,
    pub name: String,
}

impl InsertionPoint {
    fn target(&self) -> (SourceLocation, Site, OperandSide) {
        (self.loc.clone(), self.site, self.side)
    }
}

fn ser_node<S: serde::Serializer>(id: &NodeId, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u32(id.0)
}

fn ser_opt_node<S: serde::Serializer>(id: &Option<NodeId>, s: S) -> Result<S::Ok, S::Error> {
    match id {
        Some(id) => s.serialize_some(&id.0),
        None => s.serialize_none(),
    }
}

/// Finds, for each placeholder, every first concatenation reached along
/// forward edges, keeping only those whose result can still reach an
/// execution point. Output is sorted by location.
pub fn locate_insertion_points(graph: &FlowGraph, placeholders: &[NodeId]) -> Vec<InsertionPoint> {
    let mut relevant = vec![false; graph.len()];
    for ep in graph.exec_points() {
        for (i, hit) in graph.backward_cone(ep.node).into_iter().enumerate() {
            relevant[i] |= hit;
        }
    }
    let mut points = BTreeSet::new();
    for &p in placeholders {
        let name = graph.display_name(p);
        let mut seen = vec![false; graph.len()];
        let mut queue = VecDeque::from([p]);
        seen[p.index()] = true;
        while let Some(id) = queue.pop_front() {
            for ep in graph.exec_points().iter().filter(|ep| ep.node == id) {
                points.insert(InsertionPoint {
                    loc: ep.loc.clone(),
                    site: Site::ExecuteArg,
                    side: OperandSide::Whole,
                    concat: None,
                    placeholder: p,
                    name: name.clone(),
                });
            }
            for &succ in graph.succs(id) {
                let node = graph.node(succ);
                match &node.kind {
                    FlowNodeKind::Concat { left, right, site } => {
                        if !relevant[succ.index()] {
                            continue;
                        }
                        let site = match site {
                            ConcatSite::Operator => Site::Operator,
                            ConcatSite::CompoundAssign => Site::CompoundAssign,
                        };
                        for (edge, side) in [(left, OperandSide::Left), (right, OperandSide::Right)]
                        {
                            if edge.from == id {
                                points.insert(InsertionPoint {
                                    loc: node.loc.clone(),
                                    site,
                                    side,
                                    concat: Some(succ),
                                    placeholder: p,
                                    name: name.clone(),
                                });
                            }
                        }
                    }
                    FlowNodeKind::Assign { .. } => {
                        if !seen[succ.index()] {
                            seen[succ.index()] = true;
                            queue.push_back(succ);
                        }
                    }
                    FlowNodeKind::InitLiteral(_) | FlowNodeKind::InitAnyString { .. } => {}
                }
            }
        }
    }
    points.into_iter().collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictPolicy {
    /// Use the numeric sanitizer, which is safe in both positions.
    Numeric,
    /// Leave the placeholder alone and fail the run.
    #[default]
    Error,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnresolvablePolicy {
    /// Escape it as a string.
    #[default]
    String,
    Skip,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PlanOptions {
    pub conflict: ConflictPolicy,
    pub unresolvable: UnresolvablePolicy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    #[serde(serialize_with = "ser_opt_node")]
    pub placeholder: Option<NodeId>,
    pub name: String,
    pub message: String,
    pub action: String,
}

/// One sanitizer call to insert. Several placeholders can share an operand
/// (after a branch merge), so an entry lists all of them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PlanEntry {
    pub loc: SourceLocation,
    pub site: Site,
    pub side: OperandSide,
    pub sanitizer: SanitizerKind,
    pub placeholders: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SanitizationPlan {
    pub entries: Vec<PlanEntry>,
    pub diagnostics: Vec<Diagnostic>,
    /// Set when a conflict was found under [`ConflictPolicy::Error`].
    pub failed: bool,
}

pub fn build_plan(
    points: &[InsertionPoint],
    resolutions: &[PlaceholderResolution],
    options: PlanOptions,
) -> SanitizationPlan {
    let by_node: BTreeMap<NodeId, &PlaceholderResolution> =
        resolutions.iter().map(|r| (r.placeholder, r)).collect();
    let mut plan = SanitizationPlan::default();

    // kind chosen per placeholder; None means "do not sanitize"
    let mut chosen: BTreeMap<NodeId, Option<SanitizerKind>> = BTreeMap::new();
    for point in points {
        if chosen.contains_key(&point.placeholder) {
            continue;
        }
        let diag = |severity, message: String, action: &str| Diagnostic {
            severity,
            placeholder: Some(point.placeholder),
            name: point.name.clone(),
            message,
            action: action.to_string(),
        };
        let kind = match by_node.get(&point.placeholder).map(|r| &r.resolved) {
            Some(Resolved::Kind(kind)) => Some(*kind),
            Some(Resolved::Conflict(kinds)) => {
                let used: Vec<_> = kinds.iter().map(|k| k.to_string()).collect();
                let message = format!("{} is used as {}", point.name, used.join(" and "));
                match options.conflict {
                    ConflictPolicy::Numeric => {
                        plan.diagnostics.push(diag(
                            Severity::Warning,
                            message,
                            "sanitized as numeric",
                        ));
                        Some(SanitizerKind::Numeric)
                    }
                    ConflictPolicy::Error => {
                        plan.failed = true;
                        plan.diagnostics
                            .push(diag(Severity::Error, message, "not sanitized"));
                        None
                    }
                }
            }
            unresolved => {
                let reason = match unresolved {
                    Some(Resolved::Unresolvable(reason)) => reason.clone(),
                    _ => "placeholder occurs in no query".to_string(),
                };
                let message = format!("{}: {reason}", point.name);
                match options.unresolvable {
                    UnresolvablePolicy::String => {
                        plan.diagnostics.push(diag(
                            Severity::Warning,
                            message,
                            "sanitized as string",
                        ));
                        Some(SanitizerKind::String)
                    }
                    UnresolvablePolicy::Skip => {
                        plan.diagnostics
                            .push(diag(Severity::Warning, message, "skipped"));
                        None
                    }
                }
            }
        };
        chosen.insert(point.placeholder, kind);
    }

    // operand -> (kinds wanted by its placeholders, placeholder names)
    type Wanted = (Vec<SanitizerKind>, Vec<String>);
    let mut targets: BTreeMap<(SourceLocation, Site, OperandSide), Wanted> = BTreeMap::new();
    for point in points {
        let Some(kind) = chosen[&point.placeholder] else {
            continue;
        };
        if point.site == Site::ExecuteArg {
            plan.diagnostics.push(Diagnostic {
                severity: Severity::Warning,
                placeholder: Some(point.placeholder),
                name: point.name.clone(),
                message: format!(
                    "{} reaches executeQuery at {} without concatenation",
                    point.name, point.loc
                ),
                action: format!("sanitized the whole query argument as {kind}"),
            });
        }
        let (kinds, names) = targets.entry(point.target()).or_default();
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
        if !names.contains(&point.name) {
            names.push(point.name.clone());
        }
    }
    for ((loc, site, side), (kinds, placeholders)) in targets {
        let sanitizer = if kinds.len() == 1 {
            kinds[0]
        } else {
            plan.diagnostics.push(Diagnostic {
                severity: Severity::Warning,
                placeholder: None,
                name: placeholders.join(","),
                message: format!(
                    "placeholders sharing the operand at {loc} need different sanitizers"
                ),
                action: "sanitized as numeric".to_string(),
            });
            SanitizerKind::Numeric
        };
        plan.entries.push(PlanEntry {
            loc,
            site,
            side,
            sanitizer,
            placeholders,
        });
    }
    plan
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstrumentError {
    #[error("{loc}: no {site:?} site matches this plan entry")]
    StaleLocation { loc: SourceLocation, site: Site },
}

type Pending = BTreeMap<(SourceLocation, Site), Vec<(OperandSide, SanitizerKind)>>;

/// Wraps every planned operand in its sanitizer. Operands already wrapped in
/// the same sanitizer are left as they are.
pub fn instrument_program(
    program: &[Stmt],
    plan: &SanitizationPlan,
) -> Result<Vec<Stmt>, InstrumentError> {
    let mut pending = Pending::new();
    for e in &plan.entries {
        pending
            .entry((e.loc.clone(), e.site))
            .or_default()
            .push((e.side, e.sanitizer));
    }
    let mut out = program.to_vec();
    rewrite_block(&mut out, &mut pending);
    match pending.into_keys().next() {
        Some((loc, site)) => Err(InstrumentError::StaleLocation { loc, site }),
        None => Ok(out),
    }
}

fn wrap(expr: &mut Expr, kind: SanitizerKind) {
    if matches!(expr.kind, ExprKind::Sanitize(k, _) if k == kind) {
        return;
    }
    let loc = expr.loc.clone();
    let inner = std::mem::replace(
        expr,
        Expr::new(ExprKind::StringLiteral(String::new()), loc.clone()),
    );
    *expr = Expr::new(ExprKind::Sanitize(kind, Box::new(inner)), loc);
}

fn rewrite_expr(expr: &mut Expr, pending: &mut Pending) {
    let loc = expr.loc.clone();
    match &mut expr.kind {
        ExprKind::Concat(l, r) => {
            rewrite_expr(l, pending);
            rewrite_expr(r, pending);
            if let Some(todo) = pending.remove(&(loc, Site::Operator)) {
                for (side, kind) in todo {
                    match side {
                        OperandSide::Left => wrap(l, kind),
                        _ => wrap(r, kind),
                    }
                }
            }
        }
        ExprKind::Sanitize(_, inner) => rewrite_expr(inner, pending),
        ExprKind::StringLiteral(_) | ExprKind::VarRef(_) | ExprKind::GetParam(_) => {}
    }
}

fn rewrite_block(stmts: &mut [Stmt], pending: &mut Pending) {
    for stmt in stmts {
        let loc = stmt.loc.clone();
        match &mut stmt.kind {
            StmtKind::VarDecl { value, .. } | StmtKind::Assign { value, .. } => {
                rewrite_expr(value, pending)
            }
            StmtKind::ConcatAssign { name, value } => {
                rewrite_expr(value, pending);
                let Some(todo) = pending.remove(&(loc.clone(), Site::CompoundAssign)) else {
                    continue;
                };
                let mut left_kind = None;
                for (side, kind) in todo {
                    match side {
                        OperandSide::Left => left_kind = Some(kind),
                        _ => wrap(value, kind),
                    }
                }
                // `q += v` has no left operand expression to wrap, so it
                // becomes `q = sanitize(q) + v`.
                if let Some(kind) = left_kind {
                    let var = Expr::new(ExprKind::VarRef(name.clone()), loc.clone());
                    let mut left = var;
                    wrap(&mut left, kind);
                    let right = std::mem::replace(
                        value,
                        Expr::new(ExprKind::StringLiteral(String::new()), loc.clone()),
                    );
                    stmt.kind = StmtKind::Assign {
                        name: name.clone(),
                        value: Expr::new(ExprKind::Concat(Box::new(left), Box::new(right)), loc),
                    };
                }
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                rewrite_expr(&mut cond.left, pending);
                rewrite_expr(&mut cond.right, pending);
                rewrite_block(then_branch, pending);
                rewrite_block(else_branch, pending);
            }
            StmtKind::While { cond, body } => {
                rewrite_expr(&mut cond.left, pending);
                rewrite_expr(&mut cond.right, pending);
                rewrite_block(body, pending);
            }
            StmtKind::ExecuteQuery(arg) => {
                rewrite_expr(arg, pending);
                if let Some(todo) = pending.remove(&(loc, Site::ExecuteArg)) {
                    for (_, kind) in todo {
                        wrap(arg, kind);
                    }
                }
            }
        }
    }
}

/// Input nodes that can reach an execution point along edges carrying no
/// sanitizer, paired with the execution point's location. Empty for a
/// correctly instrumented program.
pub fn unprotected_inputs(graph: &FlowGraph) -> Vec<(NodeId, SourceLocation)> {
    let mut out = Vec::new();
    for input in graph.inputs() {
        let mut seen = vec![false; graph.len()];
        let mut queue = VecDeque::from([input.id]);
        seen[input.id.index()] = true;
        while let Some(id) = queue.pop_front() {
            for ep in graph.exec_points() {
                if ep.node == id && ep.sanitizer.is_none() {
                    out.push((input.id, ep.loc.clone()));
                }
            }
            for &succ in graph.succs(id) {
                let plain = graph
                    .node(succ)
                    .preds()
                    .iter()
                    .any(|e| e.from == id && e.sanitizer.is_none());
                if plain && !seen[succ.index()] {
                    seen[succ.index()] = true;
                    queue.push_back(succ);
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}
