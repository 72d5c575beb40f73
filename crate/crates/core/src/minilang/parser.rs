use std::sync::Arc;

use thiserror::Error;

use super::ast::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{loc}: syntax error: {message}")]
pub struct SyntaxError {
    pub loc: SourceLocation,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub file: Arc<str>,
    /// Accept `sanitize_string(..)` / `sanitize_numeric(..)` calls. Off for
    /// user-authored programs; on when reading instrumenter output.
    pub allow_sanitizers: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            file: Arc::from("<input>"),
            allow_sanitizers: false,
        }
    }
}

impl ParseOptions {
    pub fn file(mut self, file: impl Into<Arc<str>>) -> Self {
        self.file = file.into();
        self
    }

    pub fn allow_sanitizers(mut self, allow: bool) -> Self {
        self.allow_sanitizers = allow;
        self
    }
}

/// Parses a user-authored program with default options.
pub fn parse_program(source: &str) -> Result<Program, SyntaxError> {
    parse_program_with(source, &ParseOptions::default())
}

pub fn parse_program_with(source: &str, options: &ParseOptions) -> Result<Program, SyntaxError> {
    let tokens = Lexer::new(source, options.file.clone()).tokenize()?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        allow_sanitizers: options.allow_sanitizers,
    };
    let mut program = Vec::new();
    while !parser.at(&Tok::Eof) {
        program.push(parser.stmt()?);
    }
    Ok(program)
}

pub(crate) const KEYWORDS: &[&str] = &[
    "var",
    "if",
    "else",
    "while",
    "executeQuery",
    "getParam",
    "sanitize_string",
    "sanitize_numeric",
];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Keyword(&'static str),
    Str(String),
    Assign,
    PlusAssign,
    Plus,
    Semi,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Cmp(CmpOp),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(name) => format!("identifier `{name}`"),
            Tok::Keyword(kw) => format!("keyword `{kw}`"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::Assign => "`=`".to_string(),
            Tok::PlusAssign => "`+=`".to_string(),
            Tok::Plus => "`+`".to_string(),
            Tok::Semi => "`;`".to_string(),
            Tok::LParen => "`(`".to_string(),
            Tok::RParen => "`)`".to_string(),
            Tok::LBrace => "`{`".to_string(),
            Tok::RBrace => "`}`".to_string(),
            Tok::Cmp(op) => format!("`{}`", op.symbol()),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    file: Arc<str>,
    line: u32,
    column: u32,
}

impl<'a> Lexer<'a> {
    fn new(source: &'a str, file: Arc<str>) -> Self {
        Self {
            chars: source.chars().peekable(),
            file,
            line: 1,
            column: 1,
        }
    }

    fn loc(&self) -> SourceLocation {
        SourceLocation::new(self.file.clone(), self.line, self.column)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, loc: SourceLocation, message: impl Into<String>) -> SyntaxError {
        SyntaxError {
            loc,
            message: message.into(),
        }
    }

    fn tokenize(mut self) -> Result<Vec<(Tok, SourceLocation)>, SyntaxError> {
        let mut out = Vec::new();
        loop {
            // whitespace and `//` line comments
            while let Some(&c) = self.chars.peek() {
                if c.is_whitespace() {
                    self.bump();
                } else if c == '/' {
                    let mut ahead = self.chars.clone();
                    ahead.next();
                    if ahead.next() != Some('/') {
                        break;
                    }
                    while let Some(&c) = self.chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                } else {
                    break;
                }
            }
            let loc = self.loc();
            let Some(c) = self.bump() else {
                out.push((Tok::Eof, loc));
                return Ok(out);
            };
            let tok = match c {
                '"' => Tok::Str(self.string_body(&loc)?),
                '+' => {
                    if self.chars.peek() == Some(&'=') {
                        self.bump();
                        Tok::PlusAssign
                    } else {
                        Tok::Plus
                    }
                }
                '=' => {
                    if self.chars.peek() == Some(&'=') {
                        self.bump();
                        Tok::Cmp(CmpOp::Eq)
                    } else {
                        Tok::Assign
                    }
                }
                '!' => {
                    if self.chars.peek() == Some(&'=') {
                        self.bump();
                        Tok::Cmp(CmpOp::Ne)
                    } else {
                        return Err(self.error(loc, "unexpected character `!`"));
                    }
                }
                '<' | '>' => {
                    let eq = self.chars.peek() == Some(&'=');
                    if eq {
                        self.bump();
                    }
                    Tok::Cmp(match (c, eq) {
                        ('<', false) => CmpOp::Lt,
                        ('<', true) => CmpOp::Le,
                        ('>', false) => CmpOp::Gt,
                        _ => CmpOp::Ge,
                    })
                }
                ';' => Tok::Semi,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut word = String::from(c);
                    while let Some(&c) = self.chars.peek() {
                        if c.is_ascii_alphanumeric() || c == '_' {
                            word.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    match KEYWORDS.iter().find(|kw| **kw == word) {
                        Some(kw) => Tok::Keyword(kw),
                        None => Tok::Ident(word),
                    }
                }
                other => return Err(self.error(loc, format!("unexpected character `{other}`"))),
            };
            out.push((tok, loc));
        }
    }

    fn string_body(&mut self, start: &SourceLocation) -> Result<String, SyntaxError> {
        let mut text = String::new();
        loop {
            let loc = self.loc();
            match self.bump() {
                None => return Err(self.error(start.clone(), "unterminated string literal")),
                Some('"') => return Ok(text),
                Some('\\') => match self.bump() {
                    Some(c @ ('"' | '\\')) => text.push(c),
                    Some(c) => {
                        return Err(self.error(loc, format!("invalid escape sequence `\\{c}`")))
                    }
                    None => return Err(self.error(start.clone(), "unterminated string literal")),
                },
                Some(c) => text.push(c),
            }
        }
    }
}

struct Parser {
    tokens: Vec<(Tok, SourceLocation)>,
    pos: usize,
    allow_sanitizers: bool,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn peek_loc(&self) -> SourceLocation {
        self.tokens[self.pos].1.clone()
    }

    fn at(&self, tok: &Tok) -> bool {
        self.peek() == tok
    }

    fn advance(&mut self) -> (Tok, SourceLocation) {
        let item = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        item
    }

    fn unexpected(&self, expected: &str) -> SyntaxError {
        SyntaxError {
            loc: self.peek_loc(),
            message: format!("expected {expected}, found {}", self.peek().describe()),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<SourceLocation, SyntaxError> {
        if *self.peek() == tok {
            Ok(self.advance().1)
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.advance();
                Ok(name)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn stmt(&mut self) -> Result<Stmt, SyntaxError> {
        let loc = self.peek_loc();
        let kind = match self.peek().clone() {
            Tok::Keyword("var") => {
                self.advance();
                let name = self.ident()?;
                self.expect(Tok::Assign)?;
                let value = self.expr()?;
                self.expect(Tok::Semi)?;
                StmtKind::VarDecl { name, value }
            }
            Tok::Keyword("if") => {
                self.advance();
                self.expect(Tok::LParen)?;
                let cond = self.cond()?;
                self.expect(Tok::RParen)?;
                let then_branch = self.block()?;
                let else_branch = if self.at(&Tok::Keyword("else")) {
                    self.advance();
                    self.block()?
                } else {
                    Vec::new()
                };
                StmtKind::If {
                    cond,
                    then_branch,
                    else_branch,
                }
            }
            Tok::Keyword("while") => {
                self.advance();
                self.expect(Tok::LParen)?;
                let cond = self.cond()?;
                self.expect(Tok::RParen)?;
                let body = self.block()?;
                StmtKind::While { cond, body }
            }
            Tok::Keyword("executeQuery") => {
                self.advance();
                self.expect(Tok::LParen)?;
                let arg = self.expr()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Semi)?;
                StmtKind::ExecuteQuery(arg)
            }
            Tok::Ident(name) => {
                self.advance();
                let compound = match self.peek() {
                    Tok::Assign => false,
                    Tok::PlusAssign => true,
                    _ => return Err(self.unexpected("`=` or `+=`")),
                };
                self.advance();
                let value = self.expr()?;
                self.expect(Tok::Semi)?;
                if compound {
                    StmtKind::ConcatAssign { name, value }
                } else {
                    StmtKind::Assign { name, value }
                }
            }
            _ => return Err(self.unexpected("statement")),
        };
        Ok(Stmt { kind, loc })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        self.expect(Tok::LBrace)?;
        let mut stmts = Vec::new();
        while !self.at(&Tok::RBrace) {
            if self.at(&Tok::Eof) {
                return Err(self.unexpected("`}`"));
            }
            stmts.push(self.stmt()?);
        }
        self.advance();
        Ok(stmts)
    }

    fn cond(&mut self) -> Result<Cond, SyntaxError> {
        let left = self.expr()?;
        let op = match self.peek() {
            Tok::Cmp(op) => *op,
            _ => return Err(self.unexpected("comparison operator")),
        };
        let loc = self.advance().1;
        let right = self.expr()?;
        Ok(Cond {
            left,
            op,
            right,
            loc,
        })
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut left = self.term()?;
        while self.at(&Tok::Plus) {
            let loc = self.advance().1;
            let right = self.term()?;
            left = Expr::new(ExprKind::Concat(Box::new(left), Box::new(right)), loc);
        }
        Ok(left)
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let loc = self.peek_loc();
        let kind = match self.peek().clone() {
            Tok::Str(text) => {
                self.advance();
                ExprKind::StringLiteral(text)
            }
            Tok::Ident(name) => {
                self.advance();
                ExprKind::VarRef(name)
            }
            Tok::Keyword("getParam") => {
                self.advance();
                self.expect(Tok::LParen)?;
                let name = match self.peek().clone() {
                    Tok::Str(name) => {
                        self.advance();
                        name
                    }
                    _ => return Err(self.unexpected("parameter name string")),
                };
                self.expect(Tok::RParen)?;
                ExprKind::GetParam(name)
            }
            Tok::Keyword(kw @ ("sanitize_string" | "sanitize_numeric")) => {
                if !self.allow_sanitizers {
                    return Err(SyntaxError {
                        loc,
                        message: format!(
                            "`{kw}` is reserved for instrumented programs (enable sanitizer syntax to read them)"
                        ),
                    });
                }
                self.advance();
                let kind = if kw == "sanitize_string" {
                    SanitizerKind::String
                } else {
                    SanitizerKind::Numeric
                };
                self.expect(Tok::LParen)?;
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                ExprKind::Sanitize(kind, Box::new(inner))
            }
            _ => return Err(self.unexpected("expression")),
        };
        Ok(Expr::new(kind, loc))
    }
}
