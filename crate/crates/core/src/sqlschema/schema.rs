use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Domain {
    String { max_len: Option<u32> },
    Numeric,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::String { max_len: None } => f.write_str("STRING"),
            Domain::String { max_len: Some(n) } => write!(f, "STRING({n})"),
            Domain::Numeric => f.write_str("NUMERIC"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Attribute {
    pub name: String,
    pub domain: Domain,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Table {
    pub name: String,
    pub attributes: Vec<Attribute>,
}

impl Table {
    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes
            .iter()
            .find(|a| a.name.eq_ignore_ascii_case(name))
    }
}

/// Tables and the domains of their attributes. Names are matched without
/// regard to ASCII case.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Schema {
    tables: Vec<Table>,
}

impl Schema {
    pub fn new(tables: Vec<Table>) -> Result<Self, SchemaError> {
        if tables.is_empty() {
            return Err(SchemaError::Empty);
        }
        for (i, t) in tables.iter().enumerate() {
            if tables[..i]
                .iter()
                .any(|o| o.name.eq_ignore_ascii_case(&t.name))
            {
                return Err(SchemaError::DuplicateTable {
                    line: 0,
                    table: t.name.clone(),
                });
            }
            for (j, a) in t.attributes.iter().enumerate() {
                if t.attributes[..j]
                    .iter()
                    .any(|o| o.name.eq_ignore_ascii_case(&a.name))
                {
                    return Err(SchemaError::DuplicateAttribute {
                        line: 0,
                        table: t.name.clone(),
                        attribute: a.name.clone(),
                    });
                }
            }
        }
        Ok(Self { tables })
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables
            .iter()
            .find(|t| t.name.eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("empty schema")]
    Empty,
    #[error("line {line}: duplicate table `{table}`")]
    DuplicateTable { line: usize, table: String },
    #[error("line {line}: duplicate attribute `{attribute}` in table `{table}`")]
    DuplicateAttribute {
        line: usize,
        table: String,
        attribute: String,
    },
    #[error("line {line}: unknown domain `{domain}` (expected STRING, STRING(n) or NUMERIC)")]
    UnknownDomain { line: usize, domain: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Int(u64),
    Sym(char),
}

/// Reads the schema format:
///
/// ```text
/// # comment
/// TABLE BOOKS (author STRING, title STRING(80), price NUMERIC);
/// ```
pub fn load_schema(source: &str) -> Result<Schema, SchemaError> {
    let mut tokens = Vec::new();
    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let text = raw.split('#').next().unwrap_or("");
        let mut chars = text.chars().peekable();
        while let Some(&c) = chars.peek() {
            if c.is_whitespace() {
                chars.next();
            } else if c.is_ascii_alphabetic() || c == '_' {
                let mut w = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        w.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push((Tok::Word(w), line));
            } else if c.is_ascii_digit() {
                let mut n = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        n.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                let value = n.parse().map_err(|_| SchemaError::Syntax {
                    line,
                    message: format!("number `{n}` out of range"),
                })?;
                tokens.push((Tok::Int(value), line));
            } else if "(),;".contains(c) {
                tokens.push((Tok::Sym(c), line));
                chars.next();
            } else {
                return Err(SchemaError::Syntax {
                    line,
                    message: format!("unexpected character `{c}`"),
                });
            }
        }
    }
    if tokens.is_empty() {
        return Err(SchemaError::Empty);
    }

    let last_line = tokens.last().map(|t| t.1).unwrap_or(1);
    let mut pos = 0;
    let mut tables: Vec<Table> = Vec::new();
    let syntax = |line: usize, message: String| SchemaError::Syntax { line, message };
    let describe = |t: Option<&(Tok, usize)>| match t {
        Some((Tok::Word(w), _)) => format!("`{w}`"),
        Some((Tok::Int(n), _)) => format!("`{n}`"),
        Some((Tok::Sym(c), _)) => format!("`{c}`"),
        None => "end of input".to_string(),
    };
    let line_of = |t: Option<&(Tok, usize)>| t.map(|t| t.1).unwrap_or(last_line);

    while pos < tokens.len() {
        match &tokens[pos] {
            (Tok::Word(w), _) if w.eq_ignore_ascii_case("TABLE") => pos += 1,
            (_, line) => {
                return Err(syntax(
                    *line,
                    format!("expected `TABLE`, found {}", describe(tokens.get(pos))),
                ))
            }
        }
        let (table_name, table_line) = match tokens.get(pos) {
            Some((Tok::Word(w), line)) => (w.clone(), *line),
            t => {
                return Err(syntax(
                    line_of(t),
                    format!("expected table name, found {}", describe(t)),
                ))
            }
        };
        pos += 1;
        if tables
            .iter()
            .any(|t| t.name.eq_ignore_ascii_case(&table_name))
        {
            return Err(SchemaError::DuplicateTable {
                line: table_line,
                table: table_name,
            });
        }
        if tokens.get(pos).map(|t| &t.0) != Some(&Tok::Sym('(')) {
            let t = tokens.get(pos);
            return Err(syntax(
                line_of(t),
                format!("expected `(`, found {}", describe(t)),
            ));
        }
        pos += 1;
        let mut attributes: Vec<Attribute> = Vec::new();
        loop {
            let (attr, attr_line) = match tokens.get(pos) {
                Some((Tok::Word(w), line)) => (w.clone(), *line),
                t => {
                    return Err(syntax(
                        line_of(t),
                        format!("expected attribute name, found {}", describe(t)),
                    ))
                }
            };
            pos += 1;
            let domain = match tokens.get(pos) {
                Some((Tok::Word(d), line)) => {
                    pos += 1;
                    if d.eq_ignore_ascii_case("NUMERIC") {
                        Domain::Numeric
                    } else if d.eq_ignore_ascii_case("STRING") {
                        let mut max_len = None;
                        if tokens.get(pos).map(|t| &t.0) == Some(&Tok::Sym('(')) {
                            let n = match tokens.get(pos + 1) {
                                Some((Tok::Int(n), _)) if *n >= 1 && *n <= u32::MAX as u64 => {
                                    *n as u32
                                }
                                t => {
                                    return Err(syntax(
                                        line_of(t),
                                        format!("expected positive length, found {}", describe(t)),
                                    ))
                                }
                            };
                            if tokens.get(pos + 2).map(|t| &t.0) != Some(&Tok::Sym(')')) {
                                let t = tokens.get(pos + 2);
                                return Err(syntax(
                                    line_of(t),
                                    format!("expected `)`, found {}", describe(t)),
                                ));
                            }
                            pos += 3;
                            max_len = Some(n);
                        }
                        Domain::String { max_len }
                    } else {
                        return Err(SchemaError::UnknownDomain {
                            line: *line,
                            domain: d.clone(),
                        });
                    }
                }
                t => {
                    return Err(syntax(
                        line_of(t),
                        format!("expected domain, found {}", describe(t)),
                    ))
                }
            };
            if attributes
                .iter()
                .any(|a| a.name.eq_ignore_ascii_case(&attr))
            {
                return Err(SchemaError::DuplicateAttribute {
                    line: attr_line,
                    table: table_name,
                    attribute: attr,
                });
            }
            attributes.push(Attribute { name: attr, domain });
            match tokens.get(pos) {
                Some((Tok::Sym(','), _)) => pos += 1,
                Some((Tok::Sym(')'), _)) => {
                    pos += 1;
                    break;
                }
                t => {
                    return Err(syntax(
                        line_of(t),
                        format!("expected `,` or `)`, found {}", describe(t)),
                    ))
                }
            }
        }
        match tokens.get(pos) {
            Some((Tok::Sym(';'), _)) => pos += 1,
            t => {
                return Err(syntax(
                    line_of(t),
                    format!("expected `;`, found {}", describe(t)),
                ))
            }
        }
        tables.push(Table {
            name: table_name,
            attributes,
        });
    }
    Schema::new(tables)
}
