use std::fmt::Write;

use super::{Expr, FieldKind, Model};

/// Renders a model as canonical `.cbm` source: entities, then datasources,
/// then KPIs, each block separated by a blank line.
pub fn print_model(model: &Model) -> String {
    let mut blocks = Vec::new();
    for e in &model.entities {
        let mut s = format!("entity {} {{\n", e.name);
        for f in &e.fields {
            let _ = write!(s, "  {}: ", f.name);
            match &f.kind {
                FieldKind::Enum(values) => {
                    let _ = write!(s, "enum({})", values.join(", "));
                }
                other => s.push_str(other.keyword()),
            }
            if let Some(unit) = &f.unit {
                let _ = write!(s, " unit {}", quote(unit));
            }
            if f.optional {
                s.push_str(" optional");
            }
            s.push('\n');
        }
        s.push('}');
        blocks.push(s);
    }
    if !model.datasources.is_empty() {
        blocks.push(
            model
                .datasources
                .iter()
                .map(|d| format!("datasource {}: {}", d.name, d.entity))
                .collect::<Vec<_>>()
                .join("\n"),
        );
    }
    for k in &model.kpis {
        let mut s = format!("kpi {} {{\n  source: {}\n  expr: ", k.name, k.source);
        print_expr(&k.expr, &mut s);
        s.push('\n');
        if let Some(w) = &k.window {
            let _ = writeln!(s, "  window: {w}");
        }
        if let Some(u) = &k.unit {
            let _ = writeln!(s, "  unit: {}", quote(u));
        }
        if let Some(t) = &k.target {
            let _ = writeln!(s, "  target: {} {}", t.cmp, t.bound);
        }
        if let Some(b) = k.baseline {
            let _ = writeln!(s, "  baseline: {b}");
        }
        if let Some(g) = &k.group_by {
            let _ = writeln!(s, "  group_by: {g}");
        }
        s.push('}');
        blocks.push(s);
    }
    let mut out = blocks.join("\n\n");
    if !out.is_empty() {
        out.push('\n');
    }
    out
}

/// Prints an expression with the minimum parentheses needed to re-parse to
/// the same tree (operators are left-associative).
pub fn print_expr(expr: &Expr, out: &mut String) {
    match expr {
        Expr::Number { value } => {
            let _ = write!(out, "{value}");
        }
        Expr::Count => out.push_str("count()"),
        Expr::Agg { func, field, .. } => {
            let _ = write!(out, "{}({field})", func.name());
        }
        Expr::Binary { op, lhs, rhs } => {
            let prec = op.precedence();
            let wrap_lhs = matches!(**lhs, Expr::Binary { op: l, .. } if l.precedence() < prec);
            let wrap_rhs = matches!(**rhs, Expr::Binary { op: r, .. } if r.precedence() <= prec);
            print_operand(lhs, wrap_lhs, out);
            let _ = write!(out, " {} ", op.symbol());
            print_operand(rhs, wrap_rhs, out);
        }
    }
}

fn print_operand(e: &Expr, wrap: bool, out: &mut String) {
    if wrap {
        out.push('(');
        print_expr(e, out);
        out.push(')');
    } else {
        print_expr(e, out);
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
