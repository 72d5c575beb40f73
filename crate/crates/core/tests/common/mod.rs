//! Helpers shared by the integration tests: corpus access, a generator of
//! random loop-free programs, and a brute-force path enumerator used as the
//! oracle for the flow analysis.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use assistkit::flowgraph::FlowGraph;
use assistkit::minilang::{Expr, ExprKind, SourceLocation, Stmt, StmtKind};
use assistkit::qfs::{AbstractQuery, Segment};
use rand::seq::IndexedRandom;
use rand::Rng;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

pub fn corpus_file(name: &str) -> String {
    let path = corpus_dir().join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Programs with a test suite, all typed against `apps.schema`.
pub const CORPUS: &[&str] = &[
    "bookstore_mini",
    "login",
    "product",
    "classifieds",
    "orders_loop",
    "employee_update",
    "search",
];

const LITERALS: &[&str] = &["SELECT ", "x", "'", " WHERE ", "", "1", "a b"];

/// Builds random loop-free programs. Accumulator variables are rebuilt
/// from branch-independent terms, so no concatenation ever combines two
/// values that depend on the same branch decision.
pub struct ProgramGen<'r, R: Rng> {
    rng: &'r mut R,
    pub max_ifs: usize,
    pub max_concats: usize,
    ifs: usize,
    concats: usize,
    prelude: Vec<String>,
    accs: Vec<String>,
    out: String,
}

impl<'r, R: Rng> ProgramGen<'r, R> {
    pub fn new(rng: &'r mut R) -> Self {
        Self {
            rng,
            max_ifs: 6,
            max_concats: 8,
            ifs: 0,
            concats: 0,
            prelude: Vec::new(),
            accs: Vec::new(),
            out: String::new(),
        }
    }

    fn atom(&mut self) -> String {
        match self.rng.random_range(0..3) {
            0 => format!("{:?}", LITERALS.choose(self.rng).unwrap()),
            1 => format!("getParam(\"u{}\")", self.rng.random_range(0..3)),
            _ => match self.prelude.choose(self.rng) {
                Some(v) => v.clone(),
                None => "\"p\"".to_string(),
            },
        }
    }

    fn terms(&mut self) -> String {
        let mut s = self.atom();
        if self.concats < self.max_concats && self.rng.random_bool(0.4) {
            self.concats += 1;
            s = format!("{s} + {}", self.atom());
        }
        s
    }

    fn line(&mut self, depth: usize, text: &str) {
        for _ in 0..depth {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn stmt(&mut self, depth: usize) {
        let acc = self.accs.choose(self.rng).unwrap().clone();
        if depth < 2 && self.ifs < self.max_ifs && self.rng.random_bool(0.3) {
            self.ifs += 1;
            let cond = match self.prelude.choose(self.rng) {
                Some(v) if self.rng.random_bool(0.5) => format!("{v} == \"x\""),
                _ => format!("getParam(\"c{}\") != \"\"", self.ifs),
            };
            self.line(depth, &format!("if ({cond}) {{"));
            self.block(depth + 1);
            if self.rng.random_bool(0.5) {
                self.line(depth, "} else {");
                self.block(depth + 1);
            }
            self.line(depth, "}");
            return;
        }
        let room = self.concats < self.max_concats;
        match self.rng.random_range(0..5) {
            0 | 1 if room => {
                self.concats += 1;
                let t = self.terms();
                self.line(depth, &format!("{acc} += {t};"));
            }
            2 if room => {
                self.concats += 1;
                let t = self.terms();
                self.line(depth, &format!("{acc} = {acc} + {t};"));
            }
            3 if room && self.rng.random_bool(0.5) => {
                self.concats += 1;
                let t = self.terms();
                self.line(depth, &format!("executeQuery({acc} + {t});"));
            }
            3 => self.line(depth, &format!("executeQuery({acc});")),
            _ => {
                let t = self.terms();
                self.line(depth, &format!("{acc} = {t};"));
            }
        }
    }

    fn block(&mut self, depth: usize) {
        let n = self.rng.random_range(1..=3);
        for _ in 0..n {
            self.stmt(depth);
        }
    }

    pub fn generate(mut self) -> String {
        for i in 0..self.rng.random_range(0..=2) {
            let init = self.atom();
            self.line(0, &format!("var p{i} = {init};"));
            self.prelude.push(format!("p{i}"));
        }
        for j in 0..self.rng.random_range(1..=2) {
            let t = self.terms();
            self.line(0, &format!("var a{j} = {t};"));
            self.accs.push(format!("a{j}"));
        }
        let n = self.rng.random_range(2..=5);
        for _ in 0..n {
            self.stmt(0);
        }
        let acc = self.accs[0].clone();
        self.line(0, &format!("executeQuery({acc});"));
        self.out
    }
}

/// A symbolic string: literal text and user inputs identified by the
/// location of their `getParam` call.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Sym {
    Lit(String),
    Input(SourceLocation),
}

pub fn normalize(parts: Vec<Sym>) -> Vec<Sym> {
    let mut out: Vec<Sym> = Vec::new();
    for p in parts {
        match (out.last_mut(), p) {
            (_, Sym::Lit(s)) if s.is_empty() => {}
            (Some(Sym::Lit(prev)), Sym::Lit(s)) => prev.push_str(&s),
            (_, p) => out.push(p),
        }
    }
    out
}

/// Converts a computed query to symbolic form using input locations.
pub fn symbolic(graph: &FlowGraph, q: &AbstractQuery) -> Vec<Sym> {
    normalize(
        q.segments()
            .iter()
            .map(|s| match s {
                Segment::Literal(t) => Sym::Lit(t.clone()),
                Segment::Placeholder { node, .. } => Sym::Input(graph.node(*node).loc.clone()),
            })
            .collect(),
    )
}

/// Result of enumerating every control-flow path of a loop-free program.
#[derive(Default)]
pub struct PathFacts {
    /// executeQuery location -> symbolic queries over all paths reaching it
    pub queries: BTreeMap<SourceLocation, BTreeSet<Vec<Sym>>>,
    /// variable-use location -> definitions that are the latest on some path
    pub reaching: BTreeMap<SourceLocation, BTreeSet<SourceLocation>>,
}

#[derive(Clone, Default)]
struct State {
    vals: BTreeMap<String, Vec<Sym>>,
    defs: BTreeMap<String, SourceLocation>,
}

fn eval(expr: &Expr, st: &State, facts: &mut PathFacts) -> Vec<Sym> {
    match &expr.kind {
        ExprKind::StringLiteral(s) => normalize(vec![Sym::Lit(s.clone())]),
        ExprKind::GetParam(_) => vec![Sym::Input(expr.loc.clone())],
        ExprKind::VarRef(name) => {
            facts
                .reaching
                .entry(expr.loc.clone())
                .or_default()
                .insert(st.defs[name].clone());
            st.vals[name].clone()
        }
        ExprKind::Concat(l, r) => {
            let mut v = eval(l, st, facts);
            v.extend(eval(r, st, facts));
            normalize(v)
        }
        ExprKind::Sanitize(_, inner) => eval(inner, st, facts),
    }
}

/// Walks `stmts` from each state in `states`, splitting at every branch.
fn walk(stmts: &[Stmt], states: Vec<State>, facts: &mut PathFacts) -> Vec<State> {
    let mut states = states;
    for stmt in stmts {
        let mut next = Vec::new();
        for mut st in states {
            match &stmt.kind {
                StmtKind::VarDecl { name, value } | StmtKind::Assign { name, value } => {
                    let v = eval(value, &st, facts);
                    st.vals.insert(name.clone(), v);
                    st.defs.insert(name.clone(), stmt.loc.clone());
                    next.push(st);
                }
                StmtKind::ConcatAssign { name, value } => {
                    facts
                        .reaching
                        .entry(stmt.loc.clone())
                        .or_default()
                        .insert(st.defs[name].clone());
                    let mut v = st.vals[name].clone();
                    v.extend(eval(value, &st, facts));
                    st.vals.insert(name.clone(), normalize(v));
                    st.defs.insert(name.clone(), stmt.loc.clone());
                    next.push(st);
                }
                StmtKind::If {
                    cond,
                    then_branch,
                    else_branch,
                } => {
                    eval(&cond.left, &st, facts);
                    eval(&cond.right, &st, facts);
                    next.extend(walk(then_branch, vec![st.clone()], facts));
                    next.extend(walk(else_branch, vec![st], facts));
                }
                StmtKind::While { .. } => panic!("path enumeration needs a loop-free program"),
                StmtKind::ExecuteQuery(arg) => {
                    let q = eval(arg, &st, facts);
                    facts.queries.entry(stmt.loc.clone()).or_default().insert(q);
                    next.push(st);
                }
            }
        }
        states = next;
    }
    states
}

pub fn enumerate_paths(program: &[Stmt]) -> PathFacts {
    let mut facts = PathFacts::default();
    walk(program, vec![State::default()], &mut facts);
    facts
}

/// Reference string sanitizer built from a leftmost-first regex: an escaped
/// pair is kept, a lone backslash is doubled and a bare quote is escaped.
pub fn oracle_sanitize_string(s: &str) -> String {
    use std::sync::OnceLock;
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    let re = RE.get_or_init(|| regex::Regex::new(r#"\\['"\\]|\\|['"]"#).unwrap());
    re.replace_all(s, |c: &regex::Captures| {
        let m = &c[0];
        match m {
            "\\" => "\\\\".to_string(),
            "'" | "\"" => format!("\\{m}"),
            pair => pair.to_string(),
        }
    })
    .into_owned()
}

/// Every quote is preceded by an odd run of backslashes and the string does
/// not end in an odd run.
pub fn hazard_free(s: &str) -> bool {
    let mut run = 0usize;
    for c in s.chars() {
        match c {
            '\\' => run += 1,
            '\'' | '"' => {
                if run.is_multiple_of(2) {
                    return false;
                }
                run = 0;
            }
            _ => run = 0,
        }
    }
    run.is_multiple_of(2)
}

pub fn numeral_regex() -> regex::Regex {
    regex::Regex::new(r"^\s*-?[0-9]+(\.[0-9]+)?\s*$").unwrap()
}

/// Random string over an alphabet rich in quotes, backslashes and numeral
/// characters.
pub fn random_string<R: Rng>(rng: &mut R, max_len: usize) -> String {
    const ALPHABET: &[char] = &[
        '\'', '"', '\\', '\\', 'a', 'Z', ' ', '0', '1', '9', '-', '.', ';', '=', '\n', '\t', 'é',
        '€',
    ];
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

pub fn apps_schema() -> assistkit::sqlschema::Schema {
    assistkit::sqlschema::load_schema(&corpus_file("apps.schema")).unwrap()
}

/// Default analysis of a corpus program against `apps.schema`.
pub fn analyze_corpus(name: &str) -> assistkit::pipeline::Analysis {
    let file = format!("{name}.qs");
    assistkit::pipeline::analyze(
        &file,
        &corpus_file(&file),
        &apps_schema(),
        &Default::default(),
    )
    .unwrap()
}

/// Sanitizer chosen for each parameter by the analysis.
pub fn param_kinds(
    a: &assistkit::pipeline::Analysis,
) -> BTreeMap<String, assistkit::SanitizerKind> {
    let mut out = BTreeMap::new();
    for r in &a.report.resolutions {
        if let (
            assistkit::sqlschema::Resolved::Kind(k),
            assistkit::flowgraph::FlowNodeKind::InitAnyString { param },
        ) = (&r.resolved, &a.graph.node(r.placeholder).kind)
        {
            out.insert(param.clone(), *k);
        }
    }
    out
}
