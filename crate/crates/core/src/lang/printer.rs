//! Renders an AST back to source text that parses to the same structure.

use std::fmt::Write;

use super::ast::*;

pub fn to_source(program: &Program) -> String {
    let mut out = String::new();
    match &program.wrapper {
        Some(w) => {
            let _ = writeln!(out, "def {}({}):", w.name, w.params.join(", "));
            block(&mut out, &program.body, 1);
        }
        None => block(&mut out, &program.body, 0),
    }
    out
}

fn block(out: &mut String, body: &[Stmt], level: usize) {
    if body.is_empty() {
        indent(out, level);
        out.push_str("pass\n");
    }
    for s in body {
        stmt(out, s, level);
    }
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn stmt(out: &mut String, s: &Stmt, level: usize) {
    indent(out, level);
    match &s.kind {
        StmtKind::Assign { target, value } => {
            let _ = writeln!(out, "{target} = {}", expr(value));
        }
        StmtKind::AugAssign { target, op, value } => {
            let _ = writeln!(out, "{target} {}= {}", op.symbol(), expr(value));
        }
        StmtKind::If { branches, orelse } => {
            for (i, (cond, body)) in branches.iter().enumerate() {
                if i > 0 {
                    indent(out, level);
                }
                let kw = if i == 0 { "if" } else { "elif" };
                let _ = writeln!(out, "{kw} {}:", expr(cond));
                block(out, body, level + 1);
            }
            if let Some(body) = orelse {
                indent(out, level);
                out.push_str("else:\n");
                block(out, body, level + 1);
            }
        }
        StmtKind::For { var, iter, body } => {
            let _ = writeln!(out, "for {var} in {}:", expr(iter));
            block(out, body, level + 1);
        }
        StmtKind::Return(None) => out.push_str("return\n"),
        StmtKind::Return(Some(v)) => {
            let _ = writeln!(out, "return {}", expr(v));
        }
        StmtKind::Expr(e) => {
            let _ = writeln!(out, "{}", expr(e));
        }
        StmtKind::Pass => out.push_str("pass\n"),
        StmtKind::Break => out.push_str("break\n"),
        StmtKind::Continue => out.push_str("continue\n"),
    }
}

fn is_compound(e: &Expr) -> bool {
    matches!(
        e.kind,
        ExprKind::Unary { .. }
            | ExprKind::Binary { .. }
            | ExprKind::Compare { .. }
            | ExprKind::BoolOp { .. }
    )
}

fn operand(e: &Expr) -> String {
    if is_compound(e) {
        format!("({})", expr(e))
    } else {
        expr(e)
    }
}

fn postfix_base(e: &Expr) -> String {
    if is_compound(e) || matches!(e.kind, ExprKind::Int(_) | ExprKind::Float(_)) {
        format!("({})", expr(e))
    } else {
        expr(e)
    }
}

pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\0' => out.push_str("\\0"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

pub fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Int(i) => i.to_string(),
        ExprKind::Float(f) => format!("{f:?}"),
        ExprKind::Str(s) => quote(s),
        ExprKind::Bool(true) => "True".into(),
        ExprKind::Bool(false) => "False".into(),
        ExprKind::None => "None".into(),
        ExprKind::List(items) => {
            format!("[{}]", items.iter().map(expr).collect::<Vec<_>>().join(", "))
        }
        ExprKind::Name(n) => n.clone(),
        ExprKind::Attr { value, attr } => format!("{}.{attr}", postfix_base(value)),
        ExprKind::Index { value, index } => format!("{}[{}]", postfix_base(value), expr(index)),
        ExprKind::Slice { value, lower, upper, step } => {
            let part = |p: &Option<Box<Expr>>| p.as_deref().map(expr).unwrap_or_default();
            let mut s = format!("{}[{}:{}", postfix_base(value), part(lower), part(upper));
            if step.is_some() {
                s.push(':');
                s.push_str(&part(step));
            }
            s.push(']');
            s
        }
        ExprKind::Call { func, args, kwargs } => {
            let mut parts: Vec<String> = args.iter().map(expr).collect();
            parts.extend(kwargs.iter().map(|(k, v)| format!("{k}={}", expr(v))));
            format!("{}({})", postfix_base(func), parts.join(", "))
        }
        ExprKind::Unary { op: UnaryOp::Neg, operand: o } => format!("-{}", operand(o)),
        ExprKind::Unary { op: UnaryOp::Not, operand: o } => format!("not {}", operand(o)),
        ExprKind::Binary { op, left, right } => {
            format!("{} {} {}", operand(left), op.symbol(), operand(right))
        }
        ExprKind::Compare { left, rest } => {
            let mut s = operand(left);
            for (op, e) in rest {
                let _ = write!(s, " {} {}", op.symbol(), operand(e));
            }
            s
        }
        ExprKind::BoolOp { op, left, right } => {
            let kw = match op {
                BoolOp::And => "and",
                BoolOp::Or => "or",
            };
            format!("{} {kw} {}", operand(left), operand(right))
        }
    }
}
