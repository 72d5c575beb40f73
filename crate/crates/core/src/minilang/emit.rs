use std::fmt::Write;

use super::ast::*;

/// Renders a program as QScript source. Re-parsing the output (with
/// sanitizer syntax enabled) yields a structurally equal program.
pub fn emit_source(program: &[Stmt]) -> String {
    let mut out = String::new();
    emit_block(&mut out, program, 0);
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("    ");
    }
}

fn emit_block(out: &mut String, stmts: &[Stmt], depth: usize) {
    for stmt in stmts {
        emit_stmt(out, stmt, depth);
    }
}

fn emit_stmt(out: &mut String, stmt: &Stmt, depth: usize) {
    indent(out, depth);
    match &stmt.kind {
        StmtKind::VarDecl { name, value } => {
            let _ = writeln!(out, "var {name} = {};", emit_expr(value));
        }
        StmtKind::Assign { name, value } => {
            let _ = writeln!(out, "{name} = {};", emit_expr(value));
        }
        StmtKind::ConcatAssign { name, value } => {
            let _ = writeln!(out, "{name} += {};", emit_expr(value));
        }
        StmtKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            let _ = writeln!(out, "if ({}) {{", emit_cond(cond));
            emit_block(out, then_branch, depth + 1);
            indent(out, depth);
            if else_branch.is_empty() {
                out.push_str("}\n");
            } else {
                out.push_str("} else {\n");
                emit_block(out, else_branch, depth + 1);
                indent(out, depth);
                out.push_str("}\n");
            }
        }
        StmtKind::While { cond, body } => {
            let _ = writeln!(out, "while ({}) {{", emit_cond(cond));
            emit_block(out, body, depth + 1);
            indent(out, depth);
            out.push_str("}\n");
        }
        StmtKind::ExecuteQuery(arg) => {
            let _ = writeln!(out, "executeQuery({});", emit_expr(arg));
        }
    }
}

fn emit_cond(cond: &Cond) -> String {
    format!(
        "{} {} {}",
        emit_expr(&cond.left),
        cond.op.symbol(),
        emit_expr(&cond.right)
    )
}

pub fn emit_expr(expr: &Expr) -> String {
    match &expr.kind {
        ExprKind::StringLiteral(text) => quote(text),
        ExprKind::VarRef(name) => name.clone(),
        ExprKind::GetParam(name) => format!("getParam({})", quote(name)),
        ExprKind::Concat(left, right) => {
            // `+` is left-associative and there are no parentheses in the
            // grammar, so a right operand can never itself be a concat.
            debug_assert!(!matches!(right.kind, ExprKind::Concat(..)));
            format!("{} + {}", emit_expr(left), emit_expr(right))
        }
        ExprKind::Sanitize(kind, inner) => format!("{}({})", kind.builtin(), emit_expr(inner)),
    }
}

fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

#[cfg(test)]
mod tests {
    use super::super::parser::{parse_program, parse_program_with, ParseOptions};
    use super::*;

    #[test]
    fn empty_program_emits_nothing() {
        assert!(emit_source(&[]).trim().is_empty());
    }

    #[test]
    fn sanitize_call_form() {
        let loc = SourceLocation::new("t.qs", 1, 1);
        let e = |k| Expr::new(k, loc.clone());
        let program = vec![Stmt {
            kind: StmtKind::ConcatAssign {
                name: "query".into(),
                value: e(ExprKind::Sanitize(
                    SanitizerKind::String,
                    Box::new(e(ExprKind::GetParam("author".into()))),
                )),
            },
            loc: loc.clone(),
        }];
        let text = emit_source(&program);
        assert!(
            text.contains(r#"sanitize_string(getParam("author"))"#),
            "{text}"
        );
    }

    #[test]
    fn round_trip_with_else_and_escapes() {
        let src = r#"
            var q = "it's \"quoted\" \\ ";
            if (getParam("a") != "") { q += getParam("a") + "x"; } else { }
            while (q < "b") { q = q + "b"; }
            executeQuery(q);
        "#;
        let p = parse_program(src).unwrap();
        let again = parse_program_with(&emit_source(&p), &ParseOptions::default()).unwrap();
        assert!(structurally_equal(&p, &again));
    }
}
