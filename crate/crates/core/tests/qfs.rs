mod common;

use std::collections::{BTreeSet, HashMap};

use assistkit::flowgraph::{
    build_flow_graph, ConcatSite, Edge, ExecPoint, FlowGraph, FlowNode, FlowNodeKind, NodeId,
};
use assistkit::minilang::{parse_program, SourceLocation};
use assistkit::par::Parallelism;
use assistkit::qfs::{
    abstract_queries_at, find_query_fragments, queries_for_all_exec_points, AbstractQuery, Mode,
    QfsEngine, QfsError, QfsOptions, Segment,
};
use common::{enumerate_paths, symbolic, ProgramGen};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const BIG_CAP: usize = 1 << 16;

fn graph(src: &str) -> FlowGraph {
    build_flow_graph(&parse_program(src).unwrap()).unwrap()
}

fn rendered(qs: &[AbstractQuery]) -> Vec<String> {
    qs.iter().map(|q| q.render()).collect()
}

#[test]
fn exact_mode_matches_path_enumeration() {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    for i in 0..300 {
        let src = ProgramGen::new(&mut rng).generate();
        let program = parse_program(&src).unwrap();
        let g = build_flow_graph(&program).unwrap();
        let facts = enumerate_paths(&program);
        assert_eq!(
            facts.queries.len(),
            g.exec_points().len(),
            "program {i}:\n{src}"
        );
        for ep in g.exec_points() {
            let qs = abstract_queries_at(&g, ep.node, Mode::Exact, BIG_CAP).unwrap();
            let ours: BTreeSet<_> = qs.iter().map(|q| symbolic(&g, q)).collect();
            assert_eq!(
                ours, facts.queries[&ep.loc],
                "program {i} at {}:\n{src}",
                ep.loc
            );
        }
    }
}

#[test]
fn loop_yields_single_iteration_queries() {
    let src = common::corpus_file("analysis/loop.qs");
    let g = graph(&src);
    let ep = g.exec_points()[0].node;
    for mode in [Mode::Exact, Mode::Covering] {
        let qs = abstract_queries_at(&g, ep, mode, BIG_CAP).unwrap();
        assert_eq!(rendered(&qs), ["S", "SX"]);
    }
}

#[test]
fn walkthrough_queries() {
    let g = graph(&common::corpus_file("bookstore_mini.qs"));
    let qs = abstract_queries_at(&g, g.exec_points()[0].node, Mode::Exact, BIG_CAP).unwrap();
    assert_eq!(
        rendered(&qs),
        [
            "SELECT * FROM BOOKS WHERE",
            "SELECT * FROM BOOKS WHERE author = '«r4»'",
            "SELECT * FROM BOOKS WHERE price < «r11»",
        ]
    );
}

#[test]
fn cross_product_overflow_names_the_concat() {
    // 3 x 3 combinations with a cap of 8
    let src = r#"
var a = "1";
if (a == "x") { a = "2"; } else { if (a == "y") { a = "3"; } }
var b = "4";
if (b == "x") { b = "5"; } else { if (b == "y") { b = "6"; } }
executeQuery(a + b);
"#;
    let g = graph(src);
    let err = find_query_fragments(&g, g.exec_points()[0].node, Mode::Exact, 8).unwrap_err();
    assert!(err.is_cross_product_overflow(), "{err}");
    match err {
        QfsError::Overflow { loc, size, cap, .. } => {
            assert_eq!((loc.line, size, cap), (6, 9, 8));
        }
        other => panic!("{other:?}"),
    }
    let covering = find_query_fragments(&g, g.exec_points()[0].node, Mode::Covering, 8).unwrap();
    assert!(covering.truncated);
    assert_eq!(covering.fragments.len(), 3);
}

/// Random graph that may contain cycles through assign nodes.
fn random_graph(rng: &mut StdRng, n: usize) -> FlowGraph {
    let loc = |i: usize| SourceLocation::new("g", i as u32 + 1, 1);
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let pick = |rng: &mut StdRng| NodeId(rng.random_range(0..n) as u32);
        let kind = if i < 4 || rng.random_bool(0.15) {
            if rng.random_bool(0.5) {
                FlowNodeKind::InitLiteral(format!("l{i}"))
            } else {
                FlowNodeKind::InitAnyString {
                    param: format!("p{i}"),
                }
            }
        } else if rng.random_bool(0.5) {
            let k = rng.random_range(1..=3);
            let mut preds: Vec<Edge> = (0..k).map(|_| Edge::plain(pick(rng))).collect();
            preds.sort();
            preds.dedup();
            FlowNodeKind::Assign {
                var: format!("v{i}"),
                preds,
            }
        } else {
            FlowNodeKind::Concat {
                left: Edge::plain(pick(rng)),
                right: Edge::plain(pick(rng)),
                site: ConcatSite::Operator,
            }
        };
        nodes.push(FlowNode {
            id: NodeId(i as u32),
            kind,
            loc: loc(i),
        });
    }
    let exec_points = (0..3)
        .map(|k| ExecPoint {
            node: NodeId(rng.random_range(0..n) as u32),
            loc: loc(n + k),
            sanitizer: None,
        })
        .collect();
    FlowGraph::from_parts(nodes, exec_points).unwrap()
}

#[test]
fn terminates_on_cyclic_graphs() {
    let mut rng = StdRng::seed_from_u64(7);
    for n in [5, 50, 500, 10_000] {
        for _ in 0..3 {
            let g = random_graph(&mut rng, n);
            for ep in g.exec_points() {
                // either a result or a reported overflow; never a hang or a crash
                match find_query_fragments(&g, ep.node, Mode::Covering, 64) {
                    Ok(set) => assert!(set.fragments.len() <= 64),
                    Err(e) => assert!(matches!(e, QfsError::Overflow { .. }), "{e}"),
                }
                let _ = find_query_fragments(&g, ep.node, Mode::Exact, 64);
            }
        }
    }
}

/// Random acyclic graph: every predecessor has a smaller id.
fn random_dag(rng: &mut StdRng, n: usize) -> FlowGraph {
    let loc = |i: usize| SourceLocation::new("d", i as u32 + 1, 1);
    let mut nodes = Vec::new();
    for i in 0..n {
        let kind = if i < 3 || rng.random_bool(0.2) {
            if rng.random_bool(0.5) {
                FlowNodeKind::InitLiteral(["a", "b", "'", ""][i % 4].to_string())
            } else {
                FlowNodeKind::InitAnyString {
                    param: format!("p{i}"),
                }
            }
        } else {
            let pick = |rng: &mut StdRng| {
                Edge::plain(NodeId(rng.random_range(i.saturating_sub(6)..i) as u32))
            };
            if rng.random_bool(0.4) {
                let mut preds = vec![pick(rng), pick(rng)];
                preds.sort();
                preds.dedup();
                FlowNodeKind::Assign {
                    var: "v".into(),
                    preds,
                }
            } else {
                FlowNodeKind::Concat {
                    left: pick(rng),
                    right: pick(rng),
                    site: ConcatSite::Operator,
                }
            }
        };
        nodes.push(FlowNode {
            id: NodeId(i as u32),
            kind,
            loc: loc(i),
        });
    }
    let ep = ExecPoint {
        node: NodeId(n as u32 - 1),
        loc: loc(n),
        sanitizer: None,
    };
    FlowGraph::from_parts(nodes, vec![ep]).unwrap()
}

/// Independent reference: the set of strings a node can produce, by plain
/// structural recursion (no memo table, no cycle handling).
fn reference(
    g: &FlowGraph,
    id: NodeId,
    memo: &mut HashMap<NodeId, BTreeSet<Vec<Segment>>>,
) -> BTreeSet<Vec<Segment>> {
    if let Some(v) = memo.get(&id) {
        return v.clone();
    }
    let norm = |segs: Vec<Segment>| AbstractQuery::new(segs).segments().to_vec();
    let out: BTreeSet<Vec<Segment>> = match &g.node(id).kind {
        FlowNodeKind::InitLiteral(s) => [norm(vec![Segment::Literal(s.clone())])].into(),
        FlowNodeKind::InitAnyString { .. } => [vec![Segment::Placeholder {
            node: id,
            name: g.display_name(id),
        }]]
        .into(),
        FlowNodeKind::Assign { preds, .. } => preds
            .iter()
            .flat_map(|e| reference(g, e.from, memo))
            .collect(),
        FlowNodeKind::Concat { left, right, .. } => {
            let l = reference(g, left.from, memo);
            let r = reference(g, right.from, memo);
            l.iter()
                .flat_map(|a| {
                    r.iter()
                        .map(move |b| norm(a.iter().chain(b).cloned().collect()))
                })
                .collect()
        }
    };
    memo.insert(id, out.clone());
    out
}

#[test]
fn memoization_agrees_with_recomputation_on_acyclic_graphs() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.random_range(4..40);
        let g = random_dag(&mut rng, n);
        let target = NodeId(n as u32 - 1);
        let memo = QfsEngine::new(&g, QfsOptions::new(Mode::Exact, BIG_CAP)).fragments(target);
        let plain = QfsEngine::new(
            &g,
            QfsOptions {
                memoize: false,
                ..QfsOptions::new(Mode::Exact, BIG_CAP)
            },
        )
        .fragments(target);
        let (Ok(memo), Ok(plain)) = (memo, plain) else {
            continue;
        };
        assert_eq!(memo, plain);
        let expected = reference(&g, target, &mut HashMap::new());
        let got: BTreeSet<_> = memo
            .fragments
            .iter()
            .map(|q| q.segments().to_vec())
            .collect();
        assert_eq!(got, expected);
    }
}

#[test]
fn covering_mode_covers_every_fragment_and_stays_within_exact() {
    let mut rng = StdRng::seed_from_u64(13);
    for _ in 0..200 {
        let n = rng.random_range(4..30);
        let g = random_dag(&mut rng, n);
        let target = NodeId(n as u32 - 1);
        let Ok(exact) = find_query_fragments(&g, target, Mode::Exact, BIG_CAP) else {
            continue;
        };
        let covering = find_query_fragments(&g, target, Mode::Covering, BIG_CAP).unwrap();
        let exact: BTreeSet<_> = exact.fragments.into_iter().collect();
        for q in &covering.fragments {
            assert!(exact.contains(q), "{q} not among exact results");
        }
        assert!(!covering.fragments.is_empty() || exact.is_empty());
        // each concat: every left and right fragment appears in some result
        for node in g.nodes() {
            if let FlowNodeKind::Concat { left, right, .. } = &node.kind {
                let mut engine = QfsEngine::new(&g, QfsOptions::new(Mode::Covering, BIG_CAP));
                let out = engine.fragments(node.id).unwrap().fragments;
                let l = find_query_fragments(&g, left.from, Mode::Covering, BIG_CAP)
                    .unwrap()
                    .fragments;
                let r = find_query_fragments(&g, right.from, Mode::Covering, BIG_CAP)
                    .unwrap()
                    .fragments;
                for a in &l {
                    assert!(out.iter().any(|q| r.iter().any(|b| &a.concat(b) == q)));
                }
                for b in &r {
                    assert!(out.iter().any(|q| l.iter().any(|a| &a.concat(b) == q)));
                }
            }
        }
    }
}

#[test]
fn sequential_and_parallel_agree() {
    let mut rng = StdRng::seed_from_u64(17);
    for _ in 0..30 {
        let g = random_graph(&mut rng, 200);
        let opts = QfsOptions::new(Mode::Covering, 256);
        let seq = queries_for_all_exec_points(&g, opts, Parallelism::Sequential);
        let par = queries_for_all_exec_points(&g, opts, Parallelism::Parallel);
        assert_eq!(seq, par);
    }
}

#[test]
fn results_are_deterministic() {
    let src = common::corpus_file("employee_update.qs");
    let a = graph(&src);
    let b = graph(&src);
    let qa = abstract_queries_at(&a, a.exec_points()[0].node, Mode::Exact, BIG_CAP).unwrap();
    let qb = abstract_queries_at(&b, b.exec_points()[0].node, Mode::Exact, BIG_CAP).unwrap();
    assert_eq!(qa, qb);
    assert_eq!(qa.len(), 2);
}

#[test]
fn shared_engine_matches_fresh_computation_per_point() {
    let mut rng = StdRng::seed_from_u64(19);
    for i in 0..60 {
        let g = if i % 2 == 0 {
            random_graph(&mut rng, 120)
        } else {
            let src = ProgramGen::new(&mut rng).generate();
            graph(&src)
        };
        for mode in [Mode::Exact, Mode::Covering] {
            let opts = QfsOptions::new(mode, 512);
            let mut shared = QfsEngine::new(&g, opts);
            for ep in g.exec_points() {
                let fresh = QfsEngine::new(&g, opts).fragments(ep.node);
                assert_eq!(
                    shared.fragments(ep.node),
                    fresh,
                    "graph {i}, {mode:?}, {}",
                    ep.loc
                );
            }
        }
    }
}
