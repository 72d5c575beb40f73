//! Recursive-descent parser for the SQL subset, run over abstract queries.
//!
//! ```text
//! statement := (select | insert | update | delete) ";"?
//! select    := SELECT ("*" | column ("," column)*) FROM table (WHERE cond)?
//! insert    := INSERT INTO table "(" column ("," column)* ")"
//!              VALUES "(" value ("," value)* ")"
//! update    := UPDATE table SET column "=" value ("," column "=" value)* (WHERE cond)?
//! delete    := DELETE FROM table (WHERE cond)?
//! cond      := comparison ((AND | OR) comparison)*
//! comparison:= operand ("=" | "<>" | "<" | "<=" | ">" | ">=") operand
//! operand   := column | value
//! column    := IDENT ("." IDENT)?
//! value     := 'string' | "-"? NUMERAL | NULL | placeholder
//! ```
//!
//! String literals use backslash escapes; `--` starts a comment running to
//! the end of the line. A placeholder may sit inside a string literal
//! (string position) or stand alone where a value is expected (numeric
//! position). Anywhere else it is a structural position and the query is
//! rejected.

use crate::flowgraph::NodeId;
use crate::qfs::{AbstractQuery, Segment};

use super::schema::{Domain, Schema, Table};
use super::Binding;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SqlError {
    /// Index of the query segment where parsing failed.
    pub segment: usize,
    pub message: String,
}

/// Result of a successful parse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedStatement {
    pub bindings: Vec<Binding>,
    /// One entry per grammar token: keywords upper-cased, identifiers
    /// lower-cased and prefixed with `id:`, every value collapsed to `VALUE`.
    pub skeleton: Vec<String>,
    /// Decoded values in order of appearance (string contents without
    /// quotes and escapes, numerals as written, `NULL`).
    pub values: Vec<String>,
}

const KEYWORDS: &[&str] = &[
    "SELECT", "FROM", "WHERE", "AND", "OR", "INSERT", "INTO", "VALUES", "UPDATE", "SET", "DELETE",
    "NULL",
];

#[derive(Debug, Clone, PartialEq, Eq)]
enum StrPart {
    Text(String),
    Hole(NodeId, String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Number(String),
    Str(Vec<StrPart>),
    Hole(NodeId, String),
    Sym(&'static str),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Hole(_, name) => format!("placeholder «{name}»"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::End => "end of query".into(),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self, Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }
}

enum Item {
    Char(char),
    Hole(NodeId, String),
}

fn lex(query: &AbstractQuery) -> Result<Vec<(Tok, usize)>, SqlError> {
    let mut items: Vec<(Item, usize)> = Vec::new();
    for (i, seg) in query.segments().iter().enumerate() {
        match seg {
            Segment::Literal(text) => items.extend(text.chars().map(|c| (Item::Char(c), i))),
            Segment::Placeholder { node, name } => items.push((Item::Hole(*node, name.clone()), i)),
        }
    }
    let last_seg = query.segments().len().saturating_sub(1);
    let err = |segment, message: String| SqlError { segment, message };
    let ch = |pos: usize| match items.get(pos) {
        Some((Item::Char(c), _)) => Some(*c),
        _ => None,
    };

    let mut out = Vec::new();
    let mut pos = 0;
    while pos < items.len() {
        let seg = items[pos].1;
        let c = match &items[pos].0 {
            Item::Hole(node, name) => {
                out.push((Tok::Hole(*node, name.clone()), seg));
                pos += 1;
                continue;
            }
            Item::Char(c) => *c,
        };
        if c.is_whitespace() {
            pos += 1;
        } else if c == '-' && ch(pos + 1) == Some('-') {
            while pos < items.len() && ch(pos) != Some('\n') {
                if let (Item::Hole(_, name), s) = &items[pos] {
                    return Err(err(*s, format!("placeholder «{name}» inside a comment")));
                }
                pos += 1;
            }
        } else if c == '\'' {
            pos += 1;
            let mut parts: Vec<StrPart> = Vec::new();
            let mut text = String::new();
            loop {
                match items.get(pos) {
                    None => return Err(err(seg, "unterminated string literal".into())),
                    Some((Item::Hole(node, name), _)) => {
                        if !text.is_empty() {
                            parts.push(StrPart::Text(std::mem::take(&mut text)));
                        }
                        parts.push(StrPart::Hole(*node, name.clone()));
                        pos += 1;
                    }
                    Some((Item::Char('\''), _)) => {
                        pos += 1;
                        break;
                    }
                    Some((Item::Char('\\'), _)) => match items.get(pos + 1) {
                        Some((Item::Char(next), _)) => {
                            text.push(*next);
                            pos += 2;
                        }
                        _ => {
                            text.push('\\');
                            pos += 1;
                        }
                    },
                    Some((Item::Char(c), _)) => {
                        text.push(*c);
                        pos += 1;
                    }
                }
            }
            if !text.is_empty() || parts.is_empty() {
                parts.push(StrPart::Text(text));
            }
            out.push((Tok::Str(parts), seg));
        } else if c.is_ascii_digit() {
            let mut n = String::new();
            while let Some(d) = ch(pos).filter(char::is_ascii_digit) {
                n.push(d);
                pos += 1;
            }
            if ch(pos) == Some('.') && ch(pos + 1).is_some_and(|d| d.is_ascii_digit()) {
                n.push('.');
                pos += 1;
                while let Some(d) = ch(pos).filter(char::is_ascii_digit) {
                    n.push(d);
                    pos += 1;
                }
            }
            if ch(pos).is_some_and(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                return Err(err(
                    items[pos].1,
                    format!("malformed number starting `{n}`"),
                ));
            }
            out.push((Tok::Number(n), seg));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut w = String::new();
            while let Some(d) = ch(pos).filter(|d| d.is_ascii_alphanumeric() || *d == '_') {
                w.push(d);
                pos += 1;
            }
            out.push((Tok::Word(w), seg));
        } else {
            let two: String = [Some(c), ch(pos + 1)].into_iter().flatten().collect();
            let sym = match two.as_str() {
                "<>" => Some("<>"),
                "<=" => Some("<="),
                ">=" => Some(">="),
                _ => None,
            };
            if let Some(sym) = sym {
                out.push((Tok::Sym(sym), seg));
                pos += 2;
                continue;
            }
            let sym = match c {
                '*' => "*",
                ',' => ",",
                '(' => "(",
                ')' => ")",
                ';' => ";",
                '.' => ".",
                '=' => "=",
                '<' => "<",
                '>' => ">",
                '-' => "-",
                other => return Err(err(seg, format!("unexpected character `{other}`"))),
            };
            out.push((Tok::Sym(sym), seg));
            pos += 1;
        }
    }
    out.push((Tok::End, last_seg));
    Ok(out)
}

/// A parsed value operand, before it is tied to an attribute.
struct Value {
    holes: Vec<(NodeId, String, bool)>,
    seg: usize,
}

enum Operand {
    Column(usize),
    Value(Value),
}

struct Parser<'a> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    schema: &'a Schema,
    table: Option<&'a Table>,
    bindings: Vec<Binding>,
    skeleton: Vec<String>,
    values: Vec<String>,
}

type PResult<T> = Result<T, SqlError>;

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn seg(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn fail<T>(&self, expected: &str) -> PResult<T> {
        let message = match self.peek() {
            Tok::Hole(_, name) => {
                format!("placeholder «{name}» in structural position (expected {expected})")
            }
            other => format!("expected {expected}, found {}", other.describe()),
        };
        Err(SqlError {
            segment: self.seg(),
            message,
        })
    }

    fn keyword(&mut self, kw: &str) -> PResult<()> {
        if self.peek().is_keyword(kw) {
            self.pos += 1;
            self.skeleton.push(kw.to_string());
            Ok(())
        } else {
            self.fail(&format!("`{kw}`"))
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        self.keyword(kw).is_ok()
    }

    fn sym(&mut self, sym: &'static str) -> PResult<()> {
        if *self.peek() == Tok::Sym(sym) {
            self.pos += 1;
            self.skeleton.push(sym.to_string());
            Ok(())
        } else {
            self.fail(&format!("`{sym}`"))
        }
    }

    fn eat_sym(&mut self, sym: &'static str) -> bool {
        self.sym(sym).is_ok()
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Word(w) if !KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(&w)) => {
                self.pos += 1;
                self.skeleton.push(format!("id:{}", w.to_ascii_lowercase()));
                Ok(w)
            }
            _ => self.fail(what),
        }
    }

    fn table(&mut self) -> PResult<()> {
        let seg = self.seg();
        let name = self.ident("table name")?;
        match self.schema.table(&name) {
            Some(t) => {
                self.table = Some(t);
                Ok(())
            }
            None => Err(SqlError {
                segment: seg,
                message: format!("unknown table `{name}`"),
            }),
        }
    }

    /// Parses a column reference and returns its attribute index.
    fn column(&mut self) -> PResult<usize> {
        let seg = self.seg();
        let first = self.ident("column name")?;
        let table = self.table.expect("table is parsed before columns");
        let name = if self.eat_sym(".") {
            if !first.eq_ignore_ascii_case(&table.name) {
                return Err(SqlError {
                    segment: seg,
                    message: format!("unknown table `{first}`"),
                });
            }
            self.ident("column name")?
        } else {
            first
        };
        table
            .attributes
            .iter()
            .position(|a| a.name.eq_ignore_ascii_case(&name))
            .ok_or_else(|| SqlError {
                segment: seg,
                message: format!("unknown attribute `{name}` in table `{}`", table.name),
            })
    }

    fn is_value_start(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Str(_) | Tok::Number(_) | Tok::Hole(..) | Tok::Sym("-")
        ) || self.peek().is_keyword("NULL")
    }

    fn value(&mut self) -> PResult<Value> {
        let seg = self.seg();
        let value = match self.peek().clone() {
            Tok::Str(parts) => {
                self.pos += 1;
                let mut holes = Vec::new();
                let mut text = String::new();
                for part in parts {
                    match part {
                        StrPart::Text(t) => text.push_str(&t),
                        StrPart::Hole(node, name) => {
                            text.push_str(&format!("«{name}»"));
                            holes.push((node, name, true));
                        }
                    }
                }
                self.values.push(text);
                Value { holes, seg }
            }
            Tok::Number(n) => {
                self.pos += 1;
                self.values.push(n);
                Value { holes: vec![], seg }
            }
            Tok::Sym("-") => {
                self.pos += 1;
                match self.peek().clone() {
                    Tok::Number(n) => {
                        self.pos += 1;
                        self.values.push(format!("-{n}"));
                        Value { holes: vec![], seg }
                    }
                    _ => return self.fail("numeral after `-`"),
                }
            }
            Tok::Hole(node, name) => {
                self.pos += 1;
                self.values.push(format!("«{name}»"));
                Value {
                    holes: vec![(node, name, false)],
                    seg,
                }
            }
            Tok::Word(w) if w.eq_ignore_ascii_case("NULL") => {
                self.pos += 1;
                self.values.push("NULL".into());
                Value { holes: vec![], seg }
            }
            _ => return self.fail("value"),
        };
        self.skeleton.push("VALUE".into());
        Ok(value)
    }

    fn operand(&mut self) -> PResult<Operand> {
        if self.is_value_start() {
            Ok(Operand::Value(self.value()?))
        } else if matches!(self.peek(), Tok::Word(_)) {
            Ok(Operand::Column(self.column()?))
        } else {
            self.fail("comparison operand")
        }
    }

    /// Ties every placeholder in `value` to attribute `attr`.
    fn bind(&mut self, attr: usize, value: Value) -> PResult<()> {
        let table = self.table.expect("table is parsed before values");
        let attribute = &table.attributes[attr];
        for (node, name, quoted) in value.holes {
            if !quoted && matches!(attribute.domain, Domain::String { .. }) {
                return Err(SqlError {
                    segment: value.seg,
                    message: format!(
                        "unquoted placeholder «{name}» compared with string attribute `{}`",
                        attribute.name
                    ),
                });
            }
            self.bindings.push(Binding {
                placeholder: node,
                name,
                table: table.name.clone(),
                attribute: attribute.name.clone(),
                domain: attribute.domain,
                quoted,
            });
        }
        Ok(())
    }

    fn comparison(&mut self) -> PResult<()> {
        let left = self.operand()?;
        let op = match self.peek() {
            Tok::Sym(s @ ("=" | "<>" | "<" | "<=" | ">" | ">=")) => *s,
            _ => return self.fail("comparison operator"),
        };
        self.sym(op)?;
        let right = self.operand()?;
        match (left, right) {
            (Operand::Column(c), Operand::Value(v)) | (Operand::Value(v), Operand::Column(c)) => {
                self.bind(c, v)
            }
            (Operand::Column(_), Operand::Column(_)) => Ok(()),
            (Operand::Value(a), Operand::Value(b)) => match a.holes.first().or(b.holes.first()) {
                Some((_, name, _)) => Err(SqlError {
                    segment: if a.holes.is_empty() { b.seg } else { a.seg },
                    message: format!("placeholder «{name}» is not compared with an attribute"),
                }),
                None => Ok(()),
            },
        }
    }

    fn condition(&mut self) -> PResult<()> {
        self.comparison()?;
        while self.eat_keyword("AND") || self.eat_keyword("OR") {
            self.comparison()?;
        }
        Ok(())
    }

    fn where_clause(&mut self) -> PResult<()> {
        if self.eat_keyword("WHERE") {
            self.condition()?;
        }
        Ok(())
    }

    fn statement(&mut self) -> PResult<()> {
        let tok = self.peek().clone();
        if tok.is_keyword("SELECT") {
            self.keyword("SELECT")?;
            // columns may only be resolved once the table is known
            let mut columns = Vec::new();
            if !self.eat_sym("*") {
                loop {
                    let seg = self.seg();
                    let mark = self.skeleton.len();
                    let first = self.ident("column name or `*`")?;
                    let second = if self.eat_sym(".") {
                        Some(self.ident("column name")?)
                    } else {
                        None
                    };
                    columns.push((seg, mark, first, second));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            }
            self.keyword("FROM")?;
            self.table()?;
            let table = self.table.unwrap();
            for (seg, _, first, second) in columns {
                let name = match second {
                    Some(col) if first.eq_ignore_ascii_case(&table.name) => col,
                    Some(_) => {
                        return Err(SqlError {
                            segment: seg,
                            message: format!("unknown table `{first}`"),
                        })
                    }
                    None => first,
                };
                if table.attribute(&name).is_none() {
                    return Err(SqlError {
                        segment: seg,
                        message: format!("unknown attribute `{name}` in table `{}`", table.name),
                    });
                }
            }
            self.where_clause()?;
        } else if tok.is_keyword("INSERT") {
            self.keyword("INSERT")?;
            self.keyword("INTO")?;
            self.table()?;
            self.sym("(")?;
            let mut columns = vec![self.column()?];
            while self.eat_sym(",") {
                columns.push(self.column()?);
            }
            self.sym(")")?;
            self.keyword("VALUES")?;
            self.sym("(")?;
            let mut values = vec![self.value()?];
            while self.eat_sym(",") {
                values.push(self.value()?);
            }
            if values.len() != columns.len() {
                return Err(SqlError {
                    segment: self.seg(),
                    message: format!("{} columns but {} values", columns.len(), values.len()),
                });
            }
            self.sym(")")?;
            for (c, v) in columns.into_iter().zip(values) {
                self.bind(c, v)?;
            }
        } else if tok.is_keyword("UPDATE") {
            self.keyword("UPDATE")?;
            self.table()?;
            self.keyword("SET")?;
            loop {
                let c = self.column()?;
                self.sym("=")?;
                let v = self.value()?;
                self.bind(c, v)?;
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.where_clause()?;
        } else if tok.is_keyword("DELETE") {
            self.keyword("DELETE")?;
            self.keyword("FROM")?;
            self.table()?;
            self.where_clause()?;
        } else {
            return self.fail("SELECT, INSERT, UPDATE or DELETE");
        }
        self.eat_sym(";");
        if *self.peek() != Tok::End {
            return self.fail("end of query");
        }
        Ok(())
    }
}

pub fn parse(query: &AbstractQuery, schema: &Schema) -> Result<ParsedStatement, SqlError> {
    let tokens = lex(query)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        schema,
        table: None,
        bindings: Vec::new(),
        skeleton: Vec::new(),
        values: Vec::new(),
    };
    parser.statement()?;
    Ok(ParsedStatement {
        bindings: parser.bindings,
        skeleton: parser.skeleton,
        values: parser.values,
    })
}
