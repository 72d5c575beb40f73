//! Schema loading, SQL-subset parsing of abstract queries, and the choice of
//! sanitizer for every placeholder.

mod schema;
mod sql;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::flowgraph::NodeId;
use crate::qfs::{AbstractQuery, Segment};
use crate::SanitizerKind;

pub use schema::{load_schema, Attribute, Domain, Schema, SchemaError, Table};
pub use sql::SqlError;

/// A placeholder tied to the attribute it is compared with or assigned to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Binding {
    #[serde(serialize_with = "ser_node")]
    pub placeholder: NodeId,
    pub name: String,
    pub table: String,
    pub attribute: String,
    pub domain: Domain,
    /// True when the placeholder sits inside a quoted string literal.
    pub quoted: bool,
}

impl Binding {
    pub fn sanitizer(&self) -> SanitizerKind {
        domain_sanitizer(self.domain)
    }
}

pub fn domain_sanitizer(domain: Domain) -> SanitizerKind {
    match domain {
        Domain::String { .. } => SanitizerKind::String,
        Domain::Numeric => SanitizerKind::Numeric,
    }
}

fn ser_node<S: serde::Serializer>(id: &NodeId, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u32(id.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ParseStatus {
    Valid { bindings: Vec<Binding> },
    Invalid { segment: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseOutcome {
    pub query: AbstractQuery,
    #[serde(flatten)]
    pub status: ParseStatus,
}

impl ParseOutcome {
    pub fn is_valid(&self) -> bool {
        matches!(self.status, ParseStatus::Valid { .. })
    }

    pub fn bindings(&self) -> &[Binding] {
        match &self.status {
            ParseStatus::Valid { bindings } => bindings,
            ParseStatus::Invalid { .. } => &[],
        }
    }
}

pub fn parse_abstract_query(query: &AbstractQuery, schema: &Schema) -> ParseOutcome {
    let status = match sql::parse(query, schema) {
        Ok(parsed) => ParseStatus::Valid {
            bindings: parsed.bindings,
        },
        Err(e) => ParseStatus::Invalid {
            segment: e.segment,
            message: e.message,
        },
    };
    ParseOutcome {
        query: query.clone(),
        status,
    }
}

/// Token-level shape of a concrete query: keywords, identifiers and
/// punctuation in order, with every literal collapsed to `VALUE`, plus the
/// decoded literal values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryShape {
    pub skeleton: Vec<String>,
    pub values: Vec<String>,
}

/// Parses a concrete query (no placeholders) with the same grammar.
pub fn parse_concrete(text: &str, schema: &Schema) -> Result<QueryShape, SqlError> {
    let parsed = sql::parse(&AbstractQuery::literal(text), schema)?;
    Ok(QueryShape {
        skeleton: parsed.skeleton,
        values: parsed.values,
    })
}

/// Renders a valid abstract query as concrete SQL, replacing each placeholder
/// with a representative value of its bound domain: `v` inside quotes, `0`
/// in numeric position.
pub fn instantiate(outcome: &ParseOutcome) -> Option<String> {
    let ParseStatus::Valid { bindings } = &outcome.status else {
        return None;
    };
    let mut out = String::new();
    let mut bound = bindings.iter();
    for seg in outcome.query.segments() {
        match seg {
            Segment::Literal(text) => out.push_str(text),
            Segment::Placeholder { .. } => {
                let b = bound.next()?;
                out.push_str(if b.quoted { "v" } else { "0" });
            }
        }
    }
    Some(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", content = "detail", rename_all = "snake_case")]
pub enum Resolved {
    Kind(SanitizerKind),
    Conflict(Vec<SanitizerKind>),
    Unresolvable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlaceholderResolution {
    #[serde(serialize_with = "ser_node")]
    pub placeholder: NodeId,
    pub name: String,
    pub resolved: Resolved,
}

/// Combines the bindings of every valid query. Placeholders are reported in
/// node order.
pub fn resolve_placeholders<'a>(
    outcomes: impl IntoIterator<Item = &'a ParseOutcome>,
) -> Vec<PlaceholderResolution> {
    let mut seen: BTreeMap<NodeId, (String, Vec<SanitizerKind>)> = BTreeMap::new();
    for outcome in outcomes {
        for (node, name) in outcome.query.placeholders() {
            seen.entry(node)
                .or_insert_with(|| (name.to_string(), Vec::new()));
        }
        for b in outcome.bindings() {
            let kinds = &mut seen
                .get_mut(&b.placeholder)
                .expect("bound placeholders occur in the query")
                .1;
            let kind = b.sanitizer();
            if !kinds.contains(&kind) {
                kinds.push(kind);
            }
        }
    }
    seen.into_iter()
        .map(|(placeholder, (name, mut kinds))| {
            kinds.sort();
            let resolved = match kinds.len() {
                0 => Resolved::Unresolvable("placeholder occurs only in invalid queries".into()),
                1 => Resolved::Kind(kinds[0]),
                _ => Resolved::Conflict(kinds),
            };
            PlaceholderResolution {
                placeholder,
                name,
                resolved,
            }
        })
        .collect()
}
