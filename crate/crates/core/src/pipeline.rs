//! End-to-end analysis: parse, build the flow graph, compute the queries at
//! each execution point, type their placeholders against the schema and
//! plan the sanitizer calls.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::flowgraph::{build_flow_graph, FlowError, FlowGraph};
use crate::instrument::{
    build_plan, instrument_program, locate_insertion_points, InsertionPoint, InstrumentError,
    PlanOptions, SanitizationPlan,
};
use crate::minilang::{
    emit_source, parse_program_with, ParseOptions, SourceLocation, Stmt, SyntaxError,
};
use crate::par::Parallelism;
use crate::qfs::{queries_for_all_exec_points, QfsError, QfsOptions};
use crate::sqlschema::{
    parse_abstract_query, resolve_placeholders, ParseOutcome, PlaceholderResolution, Schema,
};

#[derive(Clone, Copy, Debug, Default)]
pub struct AnalysisOptions {
    pub qfs: QfsOptions,
    pub plan: PlanOptions,
    pub parallelism: Parallelism,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Qfs(#[from] QfsError),
    #[error("internal error: {0}")]
    Instrument(#[from] InstrumentError),
}

#[derive(Clone, Debug, Serialize)]
pub struct ExecPointReport {
    pub loc: SourceLocation,
    pub node: String,
    /// Some concatenation paired fragments instead of taking all pairs.
    pub truncated: bool,
    pub queries: Vec<ParseOutcome>,
    pub resolutions: Vec<PlaceholderResolution>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Lint {
    pub name: String,
    pub param: String,
    pub loc: SourceLocation,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// A placeholder was used both as a string and as a number and the
    /// conflict policy is `error`.
    Conflict,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub parse_ms: f64,
    pub flowgraph_ms: f64,
    pub queries_ms: f64,
    pub typing_ms: f64,
    pub plan_ms: f64,
}

/// Everything the analysis produced, in a stable serialization order.
#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub program: String,
    pub exec_points: Vec<ExecPointReport>,
    /// Resolutions over the queries of all execution points together.
    pub resolutions: Vec<PlaceholderResolution>,
    pub insertion_points: Vec<InsertionPoint>,
    pub plan: SanitizationPlan,
    pub lints: Vec<Lint>,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn queries(&self) -> impl Iterator<Item = &ParseOutcome> {
        self.exec_points.iter().flat_map(|e| &e.queries)
    }
}

pub struct Analysis {
    pub program: Vec<Stmt>,
    pub graph: FlowGraph,
    pub report: AnalysisReport,
}

impl Analysis {
    /// The program with the planned sanitizer calls inserted.
    pub fn instrumented(&self) -> Result<Vec<Stmt>, PipelineError> {
        Ok(instrument_program(&self.program, &self.report.plan)?)
    }

    pub fn instrumented_source(&self) -> Result<String, PipelineError> {
        Ok(emit_source(&self.instrumented()?))
    }
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

/// Runs the analysis on QScript `source`. Existing sanitizer calls are
/// accepted so instrumented output can be analysed again. Timings are
/// always measured; drop them from the report for byte-stable output.
pub fn analyze(
    program_id: &str,
    source: &str,
    schema: &Schema,
    options: &AnalysisOptions,
) -> Result<Analysis, PipelineError> {
    let mut timings = Timings::default();

    let t = Instant::now();
    let parse_opts = ParseOptions::default()
        .file(program_id)
        .allow_sanitizers(true);
    let program = parse_program_with(source, &parse_opts)?;
    timings.parse_ms = ms(t);

    let t = Instant::now();
    let graph = build_flow_graph(&program)?;
    timings.flowgraph_ms = ms(t);

    let t = Instant::now();
    let sets = queries_for_all_exec_points(&graph, options.qfs, options.parallelism)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    timings.queries_ms = ms(t);

    let t = Instant::now();
    let mut exec_points = Vec::new();
    for (ep, set) in graph.exec_points().iter().zip(sets) {
        let queries: Vec<ParseOutcome> = set
            .fragments
            .iter()
            .map(|q| parse_abstract_query(q, schema))
            .collect();
        exec_points.push(ExecPointReport {
            loc: ep.loc.clone(),
            node: graph.display_name(ep.node),
            truncated: set.truncated,
            resolutions: resolve_placeholders(&queries),
            queries,
        });
    }
    let resolutions = resolve_placeholders(exec_points.iter().flat_map(|e| &e.queries));
    timings.typing_ms = ms(t);

    let t = Instant::now();
    let inputs: Vec<_> = graph.inputs().map(|n| n.id).collect();
    let insertion_points = locate_insertion_points(&graph, &inputs);
    let plan = build_plan(&insertion_points, &resolutions, options.plan);
    timings.plan_ms = ms(t);

    let lints = graph
        .dead_inputs()
        .into_iter()
        .map(|id| {
            let node = graph.node(id);
            let param = match &node.kind {
                crate::flowgraph::FlowNodeKind::InitAnyString { param } => param.clone(),
                _ => unreachable!("dead inputs are input nodes"),
            };
            Lint {
                name: graph.display_name(id),
                param,
                loc: node.loc.clone(),
                message: "input never reaches a query".into(),
            }
        })
        .collect();

    let status = if plan.failed {
        Status::Conflict
    } else {
        Status::Ok
    };
    let report = AnalysisReport {
        program: program_id.to_string(),
        exec_points,
        resolutions,
        insertion_points,
        plan,
        lints,
        status,
        timings: Some(timings),
    };
    Ok(Analysis {
        program,
        graph,
        report,
    })
}
