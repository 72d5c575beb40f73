use thiserror::Error;

/// One executed query, tagged with the program and input that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub program_id: String,
    pub input_id: String,
    pub query: String,
}

/// Append-only record of executed queries.
///
/// The text form has one entry per line with three tab-separated fields.
/// Backslash, tab, newline and carriage return are written as `\\`, `\t`,
/// `\n` and `\r` in every field.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryLog {
    entries: Vec<LogEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("query log line {line}: {message}")]
pub struct LogParseError {
    pub line: usize,
    pub message: String,
}

fn escape(field: &str, out: &mut String) {
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
}

fn unescape(field: &str) -> Option<String> {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            _ => return None,
        });
    }
    Some(out)
}

impl QueryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, program_id: &str, input_id: &str, query: impl Into<String>) {
        self.entries.push(LogEntry {
            program_id: program_id.to_string(),
            input_id: input_id.to_string(),
            query: query.into(),
        });
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            escape(&e.program_id, &mut out);
            out.push('\t');
            escape(&e.input_id, &mut out);
            out.push('\t');
            escape(&e.query, &mut out);
            out.push('\n');
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self, LogParseError> {
        let mut log = QueryLog::new();
        for (i, line) in text.lines().enumerate() {
            let err = |message: &str| LogParseError {
                line: i + 1,
                message: message.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [p, inp, q] = fields[..] else {
                return Err(err("expected 3 tab-separated fields"));
            };
            let field = |f: &str| unescape(f).ok_or_else(|| err("bad escape sequence"));
            log.entries.push(LogEntry {
                program_id: field(p)?,
                input_id: field(inp)?,
                query: field(q)?,
            });
        }
        Ok(log)
    }
}
