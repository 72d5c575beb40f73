//! Differential evaluation: run the original and the instrumented program
//! on labelled inputs and compare the queries they execute.
//!
//! Test-suite format, one input per line:
//!
//! ```text
//! # comment
//! ATTACK action=author&author=%27%3BDROP+TABLE+BOOKS%3B--
//! LEGIT action=price&price=25
//! ```
//!
//! Besides the byte comparison, every logged query is parsed with the SQL
//! grammar. An attack counts as successful when a query of the instrumented
//! program fails to parse or has a different token structure from a
//! reference run in which every non-empty user value that reaches a query is
//! replaced by the benign value `1`.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::flowgraph::{FlowGraph, FlowNodeKind};
use crate::minilang::Stmt;
use crate::par::{self, Parallelism};
use crate::runtime::{run_program_with, InputVector, RunOptions};
use crate::sqlschema::{parse_concrete, Schema};

/// Value substituted for user inputs in reference runs.
pub const BENIGN_VALUE: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Attack,
    Legit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TestInput {
    pub id: String,
    pub line: usize,
    pub label: Label,
    pub params: InputVector,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("test suite line {line}: {message}")]
pub struct SuiteError {
    pub line: usize,
    pub message: String,
}

pub fn parse_suite(text: &str) -> Result<Vec<TestInput>, SuiteError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let label = match label {
            "ATTACK" => Label::Attack,
            "LEGIT" => Label::Legit,
            other => {
                return Err(SuiteError {
                    line: i + 1,
                    message: format!("expected ATTACK or LEGIT, found `{other}`"),
                })
            }
        };
        let params = form_urlencoded::parse(rest.trim().as_bytes())
            .map(|(k, v)| (k.into_owned(), v.into_owned()))
            .collect();
        out.push(TestInput {
            id: (out.len() + 1).to_string(),
            line: i + 1,
            label,
            params,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    AttackNeutralized,
    AttackUnchanged,
    LegitUnchanged,
    LegitModified,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InputResult {
    pub id: String,
    pub line: usize,
    pub label: Label,
    pub classification: Classification,
    /// Attacks only: the instrumented program still issued a query whose
    /// structure the input changed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack_succeeded: Option<bool>,
    /// Unchanged attacks only: the original query kept its structure too,
    /// so the attack was harmless to begin with.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub harmless: Option<bool>,
    /// Legitimate inputs only: the instrumented queries differ from the
    /// original ones in structure or in decoded literal values.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structurally_modified: Option<bool>,
    pub original: Vec<String>,
    pub instrumented: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EvalSummary {
    pub total: usize,
    pub attack_neutralized: usize,
    pub attack_unchanged: usize,
    pub attack_unchanged_harmless: usize,
    pub legit_unchanged: usize,
    pub legit_modified: usize,
    /// Legitimate inputs modified under the byte comparison.
    pub false_positives: usize,
    /// Legitimate inputs modified under the structural comparison.
    pub structural_false_positives: usize,
    /// Attacks that changed query structure despite instrumentation.
    pub false_negatives: usize,
    pub run_errors: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EvalResult {
    pub program: String,
    pub summary: EvalSummary,
    pub inputs: Vec<InputResult>,
}

impl EvalResult {
    /// No successful attack and no structural change to a legitimate query.
    pub fn passed(&self) -> bool {
        self.summary.false_negatives == 0 && self.summary.structural_false_positives == 0
    }
}

/// Parameters whose value can reach an execution point.
pub fn host_params(graph: &FlowGraph) -> BTreeSet<String> {
    let dead: BTreeSet<_> = graph.dead_inputs().into_iter().collect();
    graph
        .inputs()
        .filter(|n| !dead.contains(&n.id))
        .filter_map(|n| match &n.kind {
            FlowNodeKind::InitAnyString { param } => Some(param.clone()),
            _ => None,
        })
        .collect()
}

pub struct EvalSetup<'a> {
    pub program_id: &'a str,
    pub original: &'a [Stmt],
    pub instrumented: &'a [Stmt],
    pub schema: &'a Schema,
    pub host_params: &'a BTreeSet<String>,
    pub run: RunOptions,
    pub parallelism: Parallelism,
}

type Log = Result<Vec<String>, String>;

pub fn evaluate(setup: &EvalSetup<'_>, suite: &[TestInput]) -> EvalResult {
    let inputs = par::map(suite, setup.parallelism, |input| evaluate_one(setup, input));
    let mut summary = EvalSummary {
        total: inputs.len(),
        ..Default::default()
    };
    for r in &inputs {
        match r.classification {
            Classification::AttackNeutralized => summary.attack_neutralized += 1,
            Classification::AttackUnchanged => {
                summary.attack_unchanged += 1;
                if r.harmless == Some(true) {
                    summary.attack_unchanged_harmless += 1;
                }
            }
            Classification::LegitUnchanged => summary.legit_unchanged += 1,
            Classification::LegitModified => {
                summary.legit_modified += 1;
                summary.false_positives += 1;
            }
        }
        if r.structurally_modified == Some(true) {
            summary.structural_false_positives += 1;
        }
        if r.attack_succeeded == Some(true) {
            summary.false_negatives += 1;
        }
        if r.error.is_some() {
            summary.run_errors += 1;
        }
    }
    EvalResult {
        program: setup.program_id.to_string(),
        summary,
        inputs,
    }
}

fn run(program: &[Stmt], inputs: &InputVector, options: RunOptions) -> Log {
    run_program_with(program, inputs, options).map_err(|e| e.to_string())
}

/// Every query in `log` parses and matches the token structure of the
/// corresponding reference query.
fn same_structure(schema: &Schema, log: &Log, reference: &Log) -> bool {
    let (Ok(log), Ok(reference)) = (log, reference) else {
        return false;
    };
    log.len() == reference.len()
        && log.iter().zip(reference).all(|(q, r)| {
            match (parse_concrete(q, schema), parse_concrete(r, schema)) {
                (Ok(a), Ok(b)) => a.skeleton == b.skeleton,
                _ => false,
            }
        })
}

/// Same structure and same decoded literal values.
fn same_meaning(schema: &Schema, a: &Log, b: &Log) -> bool {
    let (Ok(a), Ok(b)) = (a, b) else {
        return false;
    };
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            match (parse_concrete(x, schema), parse_concrete(y, schema)) {
                (Ok(x), Ok(y)) => x == y,
                _ => false,
            }
        })
}

fn benign_inputs(setup: &EvalSetup<'_>, params: &InputVector) -> InputVector {
    let mut benign = params.clone();
    // empty values stay empty so emptiness checks take the same branch
    for (k, v) in benign.iter_mut() {
        if setup.host_params.contains(k) && !v.is_empty() {
            *v = BENIGN_VALUE.to_string();
        }
    }
    benign
}

fn parses(schema: &Schema, log: &Log) -> bool {
    log.as_ref()
        .is_ok_and(|qs| qs.iter().all(|q| parse_concrete(q, schema).is_ok()))
}

fn evaluate_one(setup: &EvalSetup<'_>, input: &TestInput) -> InputResult {
    let original = run(setup.original, &input.params, setup.run);
    let instrumented = run(setup.instrumented, &input.params, setup.run);
    let identical = original == instrumented;
    let error = [&original, &instrumented]
        .into_iter()
        .find_map(|l| l.as_ref().err().cloned());

    let mut result = InputResult {
        id: input.id.clone(),
        line: input.line,
        label: input.label,
        classification: Classification::LegitUnchanged,
        attack_succeeded: None,
        harmless: None,
        structurally_modified: None,
        original: original.clone().unwrap_or_default(),
        instrumented: instrumented.clone().unwrap_or_default(),
        error,
    };
    match input.label {
        Label::Attack => {
            let benign = benign_inputs(setup, &input.params);
            let reference_instrumented = run(setup.instrumented, &benign, setup.run);
            result.attack_succeeded = Some(!same_structure(
                setup.schema,
                &instrumented,
                &reference_instrumented,
            ));
            if identical {
                result.classification = Classification::AttackUnchanged;
                let reference_original = run(setup.original, &benign, setup.run);
                result.harmless =
                    Some(same_structure(setup.schema, &original, &reference_original));
            } else {
                result.classification = Classification::AttackNeutralized;
            }
        }
        Label::Legit => {
            result.classification = if identical {
                Classification::LegitUnchanged
            } else {
                Classification::LegitModified
            };
            // When the original query is itself malformed (an unescaped
            // apostrophe in a name, say) there is nothing to compare values
            // against, so only the structure is checked.
            let kept = identical
                || if parses(setup.schema, &original) {
                    same_meaning(setup.schema, &original, &instrumented)
                } else {
                    let benign = benign_inputs(setup, &input.params);
                    same_structure(
                        setup.schema,
                        &instrumented,
                        &run(setup.instrumented, &benign, setup.run),
                    )
                };
            result.structurally_modified = Some(!kept);
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_format() {
        let suite = parse_suite("# c\n\nATTACK a=%27x&b=1+2\nLEGIT\nLEGIT a=O%27Brien\n").unwrap();
        assert_eq!(suite.len(), 3);
        assert_eq!(suite[0].label, Label::Attack);
        assert_eq!(suite[0].params["a"], "'x");
        assert_eq!(suite[0].params["b"], "1 2");
        assert_eq!(suite[0].line, 3);
        assert!(suite[1].params.is_empty());
        assert_eq!(suite[2].id, "3");
        assert!(parse_suite("MAYBE a=1").is_err());
        assert!(parse_suite("").unwrap().is_empty());
    }
}
