//! String flow graph: a dataflow graph over string-producing program points.
//!
//! Nodes come in three families: initialization (a literal, or an
//! arbitrary string read from a request parameter), assignment (a variable
//! taking the union of one or more reaching values) and concatenation
//! (exactly two ordered operands). Loops in the program show up as cycles.

mod build;

use std::collections::{BTreeMap, VecDeque};
use std::fmt::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::minilang::{SanitizerKind, SourceLocation};

pub use build::build_flow_graph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// A predecessor reference. `sanitizer` is set when the value passes
/// through a sanitizer call on its way into the consuming node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub from: NodeId,
    pub sanitizer: Option<SanitizerKind>,
}

impl Edge {
    pub fn plain(from: NodeId) -> Self {
        Self {
            from,
            sanitizer: None,
        }
    }
}

/// Which syntactic form produced a concatenation node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcatSite {
    /// `a + b`; the node's location is the `+` token.
    Operator,
    /// `name += b;`; the node's location is the statement.
    CompoundAssign,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FlowNodeKind {
    InitLiteral(String),
    InitAnyString {
        param: String,
    },
    Assign {
        var: String,
        preds: Vec<Edge>,
    },
    Concat {
        left: Edge,
        right: Edge,
        site: ConcatSite,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowNode {
    pub id: NodeId,
    pub kind: FlowNodeKind,
    pub loc: SourceLocation,
}

impl FlowNode {
    pub fn preds(&self) -> Vec<Edge> {
        match &self.kind {
            FlowNodeKind::InitLiteral(_) | FlowNodeKind::InitAnyString { .. } => Vec::new(),
            FlowNodeKind::Assign { preds, .. } => preds.clone(),
            FlowNodeKind::Concat { left, right, .. } => vec![*left, *right],
        }
    }

    pub fn is_input(&self) -> bool {
        matches!(self.kind, FlowNodeKind::InitAnyString { .. })
    }

    pub fn label(&self) -> String {
        match &self.kind {
            FlowNodeKind::InitLiteral(text) => format!("init {text:?}"),
            FlowNodeKind::InitAnyString { param } => format!("init any_string ({param})"),
            FlowNodeKind::Assign { var, .. } => format!("assign {var}"),
            FlowNodeKind::Concat { .. } => "concat".to_string(),
        }
    }
}

/// The argument of one `executeQuery` statement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecPoint {
    pub node: NodeId,
    /// Location of the `executeQuery` statement.
    pub loc: SourceLocation,
    /// Sanitizer wrapped directly around the argument, if any.
    pub sanitizer: Option<SanitizerKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowError {
    #[error("{loc}: use of undeclared variable `{name}`")]
    UndeclaredVariable { name: String, loc: SourceLocation },
    #[error("malformed flow graph: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug)]
pub struct FlowGraph {
    nodes: Vec<FlowNode>,
    succs: Vec<Vec<NodeId>>,
    exec_points: Vec<ExecPoint>,
    display: Vec<u32>,
    uses: BTreeMap<SourceLocation, NodeId>,
}

impl FlowGraph {
    /// Assembles a graph from explicit parts, checking the structural
    /// invariants. Node ids must equal their position in `nodes`.
    pub fn from_parts(
        nodes: Vec<FlowNode>,
        exec_points: Vec<ExecPoint>,
    ) -> Result<Self, FlowError> {
        Self::assemble(nodes, exec_points, BTreeMap::new())
    }

    fn assemble(
        nodes: Vec<FlowNode>,
        mut exec_points: Vec<ExecPoint>,
        uses: BTreeMap<SourceLocation, NodeId>,
    ) -> Result<Self, FlowError> {
        let n = nodes.len();
        let exists = |id: NodeId| id.index() < n;
        let mut succs = vec![Vec::new(); n];
        for (i, node) in nodes.iter().enumerate() {
            if node.id.index() != i {
                return Err(FlowError::Malformed(format!(
                    "node at position {i} has id {}",
                    node.id
                )));
            }
            if let FlowNodeKind::Assign { preds, .. } = &node.kind {
                if preds.is_empty() {
                    return Err(FlowError::Malformed(format!(
                        "assign node {} has no predecessor",
                        node.id
                    )));
                }
            }
            for edge in node.preds() {
                if !exists(edge.from) {
                    return Err(FlowError::Malformed(format!(
                        "node {} references missing node {}",
                        node.id, edge.from
                    )));
                }
                let list = &mut succs[edge.from.index()];
                if !list.contains(&node.id) {
                    list.push(node.id);
                }
            }
        }
        for point in &exec_points {
            if !exists(point.node) {
                return Err(FlowError::Malformed(format!(
                    "execution point {} is not a node",
                    point.node
                )));
            }
        }
        exec_points.sort_by(|a, b| a.loc.cmp(&b.loc));
        let display = display_order(&nodes, &exec_points);
        Ok(Self {
            nodes,
            succs,
            exec_points,
            display,
            uses,
        })
    }

    pub fn nodes(&self) -> &[FlowNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &FlowNode {
        &self.nodes[id.index()]
    }

    pub fn get(&self, id: NodeId) -> Option<&FlowNode> {
        self.nodes.get(id.index())
    }

    pub fn succs(&self, id: NodeId) -> &[NodeId] {
        &self.succs[id.index()]
    }

    /// Execution points, ordered by the location of their statement.
    pub fn exec_points(&self) -> &[ExecPoint] {
        &self.exec_points
    }

    /// The node resolved for a variable use (a `VarRef`, or the implicit
    /// left operand of `+=`) at `loc`.
    pub fn use_node(&self, loc: &SourceLocation) -> Option<NodeId> {
        self.uses.get(loc).copied()
    }

    /// Placeholder display name: `r` followed by the node's rank in source
    /// order. Nodes feeding some execution point are ranked first, so the
    /// names read like the temporaries of the query-relevant graph.
    pub fn display_name(&self, id: NodeId) -> String {
        format!("r{}", self.display[id.index()])
    }

    pub fn inputs(&self) -> impl Iterator<Item = &FlowNode> {
        self.nodes.iter().filter(|n| n.is_input())
    }

    /// Input nodes whose value cannot reach any execution point.
    pub fn dead_inputs(&self) -> Vec<NodeId> {
        let mut live = vec![false; self.len()];
        for ep in &self.exec_points {
            for (i, hit) in self.backward_cone(ep.node).into_iter().enumerate() {
                live[i] |= hit;
            }
        }
        self.inputs()
            .filter(|n| !live[n.id.index()])
            .map(|n| n.id)
            .collect()
    }

    /// Nodes from which `target` can be reached (including `target`).
    pub fn backward_cone(&self, target: NodeId) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([target]);
        seen[target.index()] = true;
        while let Some(id) = queue.pop_front() {
            for edge in self.node(id).preds() {
                if !seen[edge.from.index()] {
                    seen[edge.from.index()] = true;
                    queue.push_back(edge.from);
                }
            }
        }
        seen
    }

    /// Graphviz rendering, one box per node labelled with kind and location.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph flow {\n  node [shape=box, fontname=\"monospace\"];\n");
        for node in &self.nodes {
            let label = format!(
                "{} {}\\n{}",
                self.display_name(node.id),
                node.label(),
                node.loc
            );
            let _ = writeln!(
                out,
                "  {} [label=\"{}\"];",
                node.id,
                label.replace('"', "\\\"")
            );
        }
        for node in &self.nodes {
            let preds = node.preds();
            let concat = matches!(node.kind, FlowNodeKind::Concat { .. });
            for (i, edge) in preds.iter().enumerate() {
                let mut attrs = Vec::new();
                if concat {
                    attrs.push(format!("label=\"{}\"", if i == 0 { "L" } else { "R" }));
                }
                if let Some(kind) = edge.sanitizer {
                    attrs.push(format!("color=blue, xlabel=\"{}\"", kind.builtin()));
                }
                let attrs = if attrs.is_empty() {
                    String::new()
                } else {
                    format!(" [{}]", attrs.join(", "))
                };
                let _ = writeln!(out, "  {} -> {}{};", edge.from, node.id, attrs);
            }
        }
        for (i, point) in self.exec_points.iter().enumerate() {
            let _ = writeln!(
                out,
                "  exec{i} [shape=ellipse, label=\"executeQuery\\n{}\"];\n  {} -> exec{i};",
                point.loc, point.node
            );
        }
        out.push_str("}\n");
        out
    }
}

/// Execution-point node ids in statement order.
pub fn find_execution_points(graph: &FlowGraph) -> Vec<NodeId> {
    graph.exec_points().iter().map(|p| p.node).collect()
}

fn display_order(nodes: &[FlowNode], exec_points: &[ExecPoint]) -> Vec<u32> {
    let mut relevant = vec![false; nodes.len()];
    let mut stack: Vec<NodeId> = exec_points.iter().map(|p| p.node).collect();
    while let Some(id) = stack.pop() {
        if std::mem::replace(&mut relevant[id.index()], true) {
            continue;
        }
        stack.extend(nodes[id.index()].preds().into_iter().map(|e| e.from));
    }
    let mut rank = vec![0; nodes.len()];
    let mut next = 1;
    for pass in [true, false] {
        for (i, r) in relevant.iter().enumerate() {
            if *r == pass {
                rank[i] = next;
                next += 1;
            }
        }
    }
    rank
}
