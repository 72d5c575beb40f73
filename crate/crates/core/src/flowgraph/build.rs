//! Flow-graph construction from a QScript AST.
//!
//! Two passes. The first computes reaching definitions over the structured
//! control flow (branches join by union, loops iterate to a fixed point)
//! and records, for every variable use, the set of definitions that can
//! reach it. The second walks the program once in source order and creates
//! nodes; a use reached by several definitions becomes an assign node that
//! merges them. Definitions reached only around a loop back-edge may not
//! exist yet when the use is visited, so predecessors are patched at the end.

use std::collections::{BTreeMap, BTreeSet};

use super::*;
use crate::minilang::{Cond, Expr, ExprKind, Stmt, StmtKind};

type DefKey = SourceLocation;
type Env = BTreeMap<String, BTreeSet<DefKey>>;

pub fn build_flow_graph(program: &[Stmt]) -> Result<FlowGraph, FlowError> {
    let mut defs = ReachingDefs::default();
    let mut env = Env::new();
    defs.block(program, &mut env)?;

    let mut builder = Builder {
        reaching: defs.uses,
        nodes: Vec::new(),
        def_nodes: BTreeMap::new(),
        exec_points: Vec::new(),
        uses: BTreeMap::new(),
    };
    builder.block(program);
    builder.finish()
}

#[derive(Default)]
struct ReachingDefs {
    /// use location -> (variable, definitions reaching it)
    uses: BTreeMap<SourceLocation, (String, BTreeSet<DefKey>)>,
}

impl ReachingDefs {
    fn record_use(&mut self, name: &str, loc: &SourceLocation, env: &Env) -> Result<(), FlowError> {
        let reaching = env.get(name).filter(|set| !set.is_empty()).ok_or_else(|| {
            FlowError::UndeclaredVariable {
                name: name.to_string(),
                loc: loc.clone(),
            }
        })?;
        self.uses
            .entry(loc.clone())
            .or_insert_with(|| (name.to_string(), BTreeSet::new()))
            .1
            .extend(reaching.iter().cloned());
        Ok(())
    }

    fn expr(&mut self, expr: &Expr, env: &Env) -> Result<(), FlowError> {
        match &expr.kind {
            ExprKind::VarRef(name) => self.record_use(name, &expr.loc, env),
            ExprKind::Concat(l, r) => {
                self.expr(l, env)?;
                self.expr(r, env)
            }
            ExprKind::Sanitize(_, inner) => self.expr(inner, env),
            ExprKind::StringLiteral(_) | ExprKind::GetParam(_) => Ok(()),
        }
    }

    fn cond(&mut self, cond: &Cond, env: &Env) -> Result<(), FlowError> {
        self.expr(&cond.left, env)?;
        self.expr(&cond.right, env)
    }

    fn block(&mut self, stmts: &[Stmt], env: &mut Env) -> Result<(), FlowError> {
        for stmt in stmts {
            match &stmt.kind {
                StmtKind::VarDecl { name, value } => {
                    self.expr(value, env)?;
                    env.insert(name.clone(), BTreeSet::from([stmt.loc.clone()]));
                }
                StmtKind::Assign { name, value } => {
                    self.expr(value, env)?;
                    if env.get(name).is_none_or(|s| s.is_empty()) {
                        return Err(FlowError::UndeclaredVariable {
                            name: name.clone(),
                            loc: stmt.loc.clone(),
                        });
                    }
                    env.insert(name.clone(), BTreeSet::from([stmt.loc.clone()]));
                }
                StmtKind::ConcatAssign { name, value } => {
                    self.record_use(name, &stmt.loc, env)?;
                    self.expr(value, env)?;
                    env.insert(name.clone(), BTreeSet::from([stmt.loc.clone()]));
                }
                StmtKind::If {
                    cond,
                    then_branch,
                    else_branch,
                } => {
                    self.cond(cond, env)?;
                    let mut then_env = env.clone();
                    self.block(then_branch, &mut then_env)?;
                    self.block(else_branch, env)?;
                    join(env, then_env);
                }
                StmtKind::While { cond, body } => {
                    let entry = env.clone();
                    loop {
                        self.cond(cond, env)?;
                        let mut body_env = env.clone();
                        self.block(body, &mut body_env)?;
                        let mut header = entry.clone();
                        join(&mut header, body_env);
                        if header == *env {
                            break;
                        }
                        *env = header;
                    }
                }
                StmtKind::ExecuteQuery(arg) => self.expr(arg, env)?,
            }
        }
        Ok(())
    }
}

fn join(into: &mut Env, other: Env) {
    for (name, defs) in other {
        into.entry(name).or_default().extend(defs);
    }
}

#[derive(Clone)]
enum Ref {
    Node(NodeId),
    Def(DefKey),
}

#[derive(Clone)]
struct Operand {
    target: Ref,
    sanitizer: Option<SanitizerKind>,
}

impl Operand {
    fn plain(target: Ref) -> Self {
        Self {
            target,
            sanitizer: None,
        }
    }
}

enum PendingKind {
    Literal(String),
    Input(String),
    Assign(String, Vec<Operand>),
    Concat(Operand, Operand, ConcatSite),
}

struct Builder {
    reaching: BTreeMap<SourceLocation, (String, BTreeSet<DefKey>)>,
    nodes: Vec<(PendingKind, SourceLocation)>,
    def_nodes: BTreeMap<DefKey, NodeId>,
    exec_points: Vec<(Operand, SourceLocation)>,
    uses: BTreeMap<SourceLocation, Ref>,
}

impl Builder {
    fn push(&mut self, kind: PendingKind, loc: &SourceLocation) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push((kind, loc.clone()));
        id
    }

    fn resolve_use(&mut self, loc: &SourceLocation) -> Operand {
        let (name, defs) = self
            .reaching
            .get(loc)
            .cloned()
            .expect("reaching definitions are recorded for every use");
        let target = if defs.len() == 1 {
            Ref::Def(defs.into_iter().next().unwrap())
        } else {
            let preds = defs
                .into_iter()
                .map(|k| Operand::plain(Ref::Def(k)))
                .collect();
            Ref::Node(self.push(PendingKind::Assign(name, preds), loc))
        };
        self.uses.insert(loc.clone(), target.clone());
        Operand::plain(target)
    }

    fn expr(&mut self, expr: &Expr) -> Operand {
        let id = match &expr.kind {
            ExprKind::StringLiteral(text) => {
                self.push(PendingKind::Literal(text.clone()), &expr.loc)
            }
            ExprKind::GetParam(param) => self.push(PendingKind::Input(param.clone()), &expr.loc),
            ExprKind::VarRef(_) => return self.resolve_use(&expr.loc),
            ExprKind::Concat(l, r) => {
                let left = self.expr(l);
                let right = self.expr(r);
                self.push(
                    PendingKind::Concat(left, right, ConcatSite::Operator),
                    &expr.loc,
                )
            }
            ExprKind::Sanitize(kind, inner) => {
                let mut operand = self.expr(inner);
                operand.sanitizer = Some(*kind);
                return operand;
            }
        };
        Operand::plain(Ref::Node(id))
    }

    fn cond(&mut self, cond: &Cond) {
        self.expr(&cond.left);
        self.expr(&cond.right);
    }

    fn block(&mut self, stmts: &[Stmt]) {
        for stmt in stmts {
            match &stmt.kind {
                StmtKind::VarDecl { name, value } | StmtKind::Assign { name, value } => {
                    let operand = self.expr(value);
                    let id = self.push(PendingKind::Assign(name.clone(), vec![operand]), &stmt.loc);
                    self.def_nodes.insert(stmt.loc.clone(), id);
                }
                StmtKind::ConcatAssign { value, .. } => {
                    let left = self.resolve_use(&stmt.loc);
                    let right = self.expr(value);
                    let id = self.push(
                        PendingKind::Concat(left, right, ConcatSite::CompoundAssign),
                        &stmt.loc,
                    );
                    self.def_nodes.insert(stmt.loc.clone(), id);
                }
                StmtKind::If {
                    cond,
                    then_branch,
                    else_branch,
                } => {
                    self.cond(cond);
                    self.block(then_branch);
                    self.block(else_branch);
                }
                StmtKind::While { cond, body } => {
                    self.cond(cond);
                    self.block(body);
                }
                StmtKind::ExecuteQuery(arg) => {
                    let operand = self.expr(arg);
                    self.exec_points.push((operand, stmt.loc.clone()));
                }
            }
        }
    }

    fn node_of(&self, target: &Ref) -> NodeId {
        match target {
            Ref::Node(id) => *id,
            Ref::Def(key) => self.def_nodes[key],
        }
    }

    fn edge(&self, operand: &Operand) -> Edge {
        Edge {
            from: self.node_of(&operand.target),
            sanitizer: operand.sanitizer,
        }
    }

    fn finish(self) -> Result<FlowGraph, FlowError> {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, (kind, loc))| {
                let kind = match kind {
                    PendingKind::Literal(text) => FlowNodeKind::InitLiteral(text.clone()),
                    PendingKind::Input(param) => FlowNodeKind::InitAnyString {
                        param: param.clone(),
                    },
                    PendingKind::Assign(var, preds) => {
                        let mut preds: Vec<Edge> = preds.iter().map(|p| self.edge(p)).collect();
                        preds.sort();
                        preds.dedup();
                        FlowNodeKind::Assign {
                            var: var.clone(),
                            preds,
                        }
                    }
                    PendingKind::Concat(left, right, site) => FlowNodeKind::Concat {
                        left: self.edge(left),
                        right: self.edge(right),
                        site: *site,
                    },
                };
                FlowNode {
                    id: NodeId(i as u32),
                    kind,
                    loc: loc.clone(),
                }
            })
            .collect();
        let exec_points = self
            .exec_points
            .iter()
            .map(|(operand, loc)| ExecPoint {
                node: self.node_of(&operand.target),
                loc: loc.clone(),
                sanitizer: operand.sanitizer,
            })
            .collect();
        let uses = self
            .uses
            .iter()
            .map(|(loc, target)| (loc.clone(), self.node_of(target)))
            .collect();
        FlowGraph::assemble(nodes, exec_points, uses)
    }
}
