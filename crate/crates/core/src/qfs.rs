//! Query fragment sets: the abstract queries (literal text interleaved with
//! input placeholders) that can flow to a node of the string flow graph.
//!
//! Per node kind:
//! - literal initialization: the literal itself;
//! - arbitrary-string initialization: a placeholder for that node;
//! - assignment: the union over its predecessors;
//! - concatenation: left fragments joined with right fragments, either the
//!   full cross product ([`Mode::Exact`]) or a pairing in which every
//!   fragment from each side is used at least once ([`Mode::Covering`]).
//!
//! Each node is computed at most once per invocation. A node reached again
//! while its own computation is still open contributes the empty set, so
//! loops are unrolled exactly once: queries built across several loop
//! iterations are not represented.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::flowgraph::{FlowGraph, FlowNodeKind, NodeId};
use crate::minilang::SourceLocation;
use crate::par::{self, Parallelism};

pub const DEFAULT_CAP: usize = 4096;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Literal(String),
    Placeholder { node: NodeId, name: String },
}

/// A query shape. Adjacent literals are always merged and empty literals
/// dropped, so two queries with the same rendering and the same placeholder
/// nodes compare equal.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AbstractQuery {
    segments: Vec<Segment>,
}

impl AbstractQuery {
    pub fn new(segments: impl IntoIterator<Item = Segment>) -> Self {
        let mut q = Self::default();
        for s in segments {
            q.push(s);
        }
        q
    }

    pub fn literal(text: impl Into<String>) -> Self {
        Self::new([Segment::Literal(text.into())])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    fn push(&mut self, segment: Segment) {
        match segment {
            Segment::Literal(text) if text.is_empty() => {}
            Segment::Literal(text) => match self.segments.last_mut() {
                Some(Segment::Literal(prev)) => prev.push_str(&text),
                _ => self.segments.push(Segment::Literal(text)),
            },
            placeholder => self.segments.push(placeholder),
        }
    }

    pub fn concat(&self, other: &AbstractQuery) -> AbstractQuery {
        let mut out = self.clone();
        for s in &other.segments {
            out.push(s.clone());
        }
        out
    }

    pub fn placeholders(&self) -> impl Iterator<Item = (NodeId, &str)> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Placeholder { node, name } => Some((*node, name.as_str())),
            Segment::Literal(_) => None,
        })
    }

    pub fn has_placeholders(&self) -> bool {
        self.placeholders().next().is_some()
    }

    /// Text form with placeholders written as `«name»`.
    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for AbstractQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.segments {
            match s {
                Segment::Literal(text) => f.write_str(text)?,
                Segment::Placeholder { name, .. } => write!(f, "«{name}»")?,
            }
        }
        Ok(())
    }
}

impl Serialize for AbstractQuery {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = serializer.serialize_struct("AbstractQuery", 2)?;
        st.serialize_field("rendered", &self.render())?;
        st.serialize_field("segments", &self.segments)?;
        st.end()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    #[default]
    Covering,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QfsOptions {
    pub mode: Mode,
    /// Upper bound on the size of any fragment set.
    pub cap: usize,
    /// Reuse each node's result within one invocation. Turning this off
    /// recomputes shared subgraphs and exists for cross-checking.
    pub memoize: bool,
}

impl Default for QfsOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Covering,
            cap: DEFAULT_CAP,
            memoize: true,
        }
    }
}

impl QfsOptions {
    pub fn new(mode: Mode, cap: usize) -> Self {
        Self {
            mode,
            cap,
            memoize: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QueryFragmentSet {
    /// Sorted and free of duplicates.
    pub fragments: Vec<AbstractQuery>,
    /// Some concatenation used the covering pairing instead of the full
    /// cross product.
    pub truncated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowKind {
    CrossProduct,
    Union,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QfsError {
    #[error(
        "{loc}: fragment overflow at {name} ({kind:?}): {size} fragments exceed the cap of {cap}"
    )]
    Overflow {
        node: NodeId,
        name: String,
        loc: SourceLocation,
        kind: OverflowKind,
        size: usize,
        cap: usize,
    },
    #[error("{0} is not a node of this graph")]
    UnknownNode(NodeId),
    #[error("{0} is not an execution point")]
    NotExecPoint(NodeId),
    #[error("cap must be at least 1")]
    ZeroCap,
}

impl QfsError {
    pub fn is_cross_product_overflow(&self) -> bool {
        matches!(
            self,
            QfsError::Overflow {
                kind: OverflowKind::CrossProduct,
                ..
            }
        )
    }
}

type Fragments = Arc<Vec<AbstractQuery>>;

#[derive(Clone)]
enum State {
    Unvisited,
    Open,
    Done(Memo),
}

#[derive(Clone)]
struct Memo {
    set: Fragments,
    /// Some concatenation in this node's cone used the covering pairing.
    truncated: bool,
    /// The computation cut a cycle at a node that was still open. Such a
    /// result depends on where the traversal entered the cycle, so it is
    /// only reused within the call that produced it.
    cut: bool,
}

/// Fragment computation over a graph. Results that do not depend on a cycle
/// cut are memoized for the lifetime of the engine, so querying several
/// execution points through one engine gives the same answers as a fresh
/// engine per point.
pub struct QfsEngine<'g> {
    graph: &'g FlowGraph,
    options: QfsOptions,
    state: Vec<State>,
    truncated: bool,
}

impl<'g> QfsEngine<'g> {
    pub fn new(graph: &'g FlowGraph, options: QfsOptions) -> Self {
        Self {
            graph,
            options,
            state: vec![State::Unvisited; graph.len()],
            truncated: false,
        }
    }

    /// Fragments already computed for `id`, if any.
    pub fn memoized(&self, id: NodeId) -> Option<&[AbstractQuery]> {
        match self.state.get(id.index()) {
            Some(State::Done(memo)) => Some(memo.set.as_slice()),
            _ => None,
        }
    }

    /// Whether any result computed so far used the covering pairing.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn fragments(&mut self, id: NodeId) -> Result<QueryFragmentSet, QfsError> {
        if self.graph.get(id).is_none() {
            return Err(QfsError::UnknownNode(id));
        }
        if self.options.cap == 0 {
            return Err(QfsError::ZeroCap);
        }
        let (set, truncated) = if self.options.memoize {
            let result = self.run_memoized(id);
            self.forget_cut_results();
            let memo = result?;
            (memo.set, memo.truncated)
        } else {
            let mut open = vec![false; self.graph.len()];
            self.run_plain(id, &mut open)?
        };
        self.truncated |= truncated;
        Ok(QueryFragmentSet {
            fragments: set.as_ref().clone(),
            truncated,
        })
    }

    /// Drops results that are only valid for the call that made them, and
    /// nodes left open by an overflow.
    fn forget_cut_results(&mut self) {
        for state in &mut self.state {
            match state {
                State::Done(memo) if !memo.cut => {}
                State::Unvisited => {}
                _ => *state = State::Unvisited,
            }
        }
    }

    fn run_memoized(&mut self, root: NodeId) -> Result<Memo, QfsError> {
        // Explicit stack so that long chains do not exhaust the call stack.
        // Each frame is a node plus the index of the next predecessor to
        // visit.
        if let State::Done(memo) = &self.state[root.index()] {
            return Ok(memo.clone());
        }
        let mut stack: Vec<(NodeId, usize)> = vec![(root, 0)];
        self.state[root.index()] = State::Open;
        while let Some(&mut (id, ref mut next)) = stack.last_mut() {
            let preds = self.graph.node(id).preds();
            if *next < preds.len() {
                let p = preds[*next].from;
                *next += 1;
                if matches!(self.state[p.index()], State::Unvisited) {
                    self.state[p.index()] = State::Open;
                    stack.push((p, 0));
                }
                continue;
            }
            stack.pop();
            let (mut truncated, mut cut) = (false, false);
            let sets: Vec<Fragments> = preds
                .iter()
                .map(|e| match &self.state[e.from.index()] {
                    State::Done(memo) => {
                        truncated |= memo.truncated;
                        cut |= memo.cut;
                        memo.set.clone()
                    }
                    _ => {
                        cut = true;
                        Arc::new(Vec::new())
                    }
                })
                .collect();
            let (set, own) = self.combine(id, &sets)?;
            self.state[id.index()] = State::Done(Memo {
                set,
                truncated: truncated || own,
                cut,
            });
        }
        match &self.state[root.index()] {
            State::Done(memo) => Ok(memo.clone()),
            _ => unreachable!("root is finished when the stack drains"),
        }
    }

    fn run_plain(&mut self, id: NodeId, open: &mut [bool]) -> Result<(Fragments, bool), QfsError> {
        if open[id.index()] {
            return Ok((Arc::new(Vec::new()), false));
        }
        open[id.index()] = true;
        let mut sets = Vec::new();
        let mut truncated = false;
        for e in self.graph.node(id).preds() {
            let (set, t) = self.run_plain(e.from, open)?;
            truncated |= t;
            sets.push(set);
        }
        open[id.index()] = false;
        let (set, own) = self.combine(id, &sets)?;
        Ok((set, truncated || own))
    }

    /// Fragments of `id` from those of its predecessors, and whether the
    /// covering pairing dropped combinations here.
    fn combine(&self, id: NodeId, preds: &[Fragments]) -> Result<(Fragments, bool), QfsError> {
        let node = self.graph.node(id);
        let overflow = |kind, size| QfsError::Overflow {
            node: id,
            name: self.graph.display_name(id),
            loc: node.loc.clone(),
            kind,
            size,
            cap: self.options.cap,
        };
        let mut truncated = false;
        let mut out = match &node.kind {
            FlowNodeKind::InitLiteral(text) => vec![AbstractQuery::literal(text.clone())],
            FlowNodeKind::InitAnyString { .. } => {
                vec![AbstractQuery::new([Segment::Placeholder {
                    node: id,
                    name: self.graph.display_name(id),
                }])]
            }
            FlowNodeKind::Assign { .. } => {
                let mut all: Vec<AbstractQuery> =
                    preds.iter().flat_map(|s| s.iter().cloned()).collect();
                all.sort();
                all.dedup();
                if all.len() > self.options.cap {
                    return Err(overflow(OverflowKind::Union, all.len()));
                }
                all
            }
            FlowNodeKind::Concat { .. } => {
                let (left, right) = (&preds[0], &preds[1]);
                match self.options.mode {
                    Mode::Exact => {
                        let size = left.len().saturating_mul(right.len());
                        if size > self.options.cap {
                            return Err(overflow(OverflowKind::CrossProduct, size));
                        }
                        left.iter()
                            .flat_map(|l| right.iter().map(move |r| l.concat(r)))
                            .collect()
                    }
                    Mode::Covering => {
                        let pairs = covering_pairs(left.len(), right.len());
                        truncated = pairs.len() < left.len() * right.len();
                        pairs
                            .into_iter()
                            .map(|(i, j)| left[i].concat(&right[j]))
                            .collect()
                    }
                }
            }
        };
        out.sort();
        out.dedup();
        Ok((Arc::new(out), truncated))
    }
}

/// Index pairs used by covering mode: walk the longer side and cycle
/// through the shorter one.
pub fn covering_pairs(left: usize, right: usize) -> Vec<(usize, usize)> {
    if left == 0 || right == 0 {
        return Vec::new();
    }
    if left >= right {
        (0..left).map(|i| (i, i % right)).collect()
    } else {
        (0..right).map(|j| (j % left, j)).collect()
    }
}

/// Fragments flowing to node `n`, computed in a fresh invocation.
pub fn find_query_fragments(
    graph: &FlowGraph,
    n: NodeId,
    mode: Mode,
    cap: usize,
) -> Result<QueryFragmentSet, QfsError> {
    QfsEngine::new(graph, QfsOptions::new(mode, cap)).fragments(n)
}

/// Sorts queries by their rendered text (ties broken structurally).
pub fn sort_rendered(queries: &mut [AbstractQuery]) {
    queries.sort_by_cached_key(|q| (q.render(), q.clone()));
}

/// The abstract queries that can be executed at `exec_point`, ordered by
/// their rendered text.
pub fn abstract_queries_at(
    graph: &FlowGraph,
    exec_point: NodeId,
    mode: Mode,
    cap: usize,
) -> Result<Vec<AbstractQuery>, QfsError> {
    if !graph.exec_points().iter().any(|p| p.node == exec_point) {
        return Err(QfsError::NotExecPoint(exec_point));
    }
    let mut queries = find_query_fragments(graph, exec_point, mode, cap)?.fragments;
    sort_rendered(&mut queries);
    Ok(queries)
}

/// Fragment sets for every execution point, each computed in its own
/// invocation, in execution-point order.
pub fn queries_for_all_exec_points(
    graph: &FlowGraph,
    options: QfsOptions,
    parallelism: Parallelism,
) -> Vec<Result<QueryFragmentSet, QfsError>> {
    par::map(graph.exec_points(), parallelism, |point| {
        let mut set = QfsEngine::new(graph, options).fragments(point.node)?;
        sort_rendered(&mut set.fragments);
        Ok(set)
    })
}
