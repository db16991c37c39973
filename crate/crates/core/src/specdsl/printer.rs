use std::fmt::Write as _;

use super::{Policy, SpecDocument};
use crate::algebra::{AggFunc, AggItem, Cond, Expr, Operand, Query};
use crate::model::KeyValue;

pub fn print_document(doc: &SpecDocument) -> String {
    let mut s = String::new();
    for t in &doc.tables {
        let keys: Vec<String> = t
            .keys
            .iter()
            .map(|k| format!("{}: {}", k.name, k.ty))
            .collect();
        let _ = write!(s, "table {}({}", t.name, keys.join(", "));
        if !t.values.is_empty() {
            let _ = write!(s, " | {}", t.values.join(", "));
        }
        s.push_str(");\n");
    }
    for p in &doc.policies {
        let policy = match p.policy {
            Policy::Exact => "exact".to_string(),
            Policy::Error => "error".to_string(),
            Policy::Null => "null".to_string(),
            Policy::Guess(c) => format!("guess({c:?})"),
        };
        let _ = writeln!(s, "policy {}.{} = {policy};", p.table, p.column);
    }
    for (k, v) in &doc.settings {
        let _ = writeln!(s, "set {k} = {v:?};");
    }
    for v in &doc.views {
        let qs: Vec<String> = v.queries.iter().map(print_query).collect();
        let _ = writeln!(s, "view {} := {};", v.name, qs.join("\n    fuse "));
    }
    s
}

pub fn print_query(q: &Query) -> String {
    match q {
        Query::Rel(n) => n.clone(),
        Query::Select(c, i) => format!("select({})({})", print_cond(c), print_query(i)),
        Query::ProjectAway(a, i) => format!("projaway({})({})", a.join(", "), print_query(i)),
        Query::Join(l, r) => format!("({} join {})", print_query(l), print_query(r)),
        Query::DiscUnion(d, l, r) => format!("({} dunion[{d}] {})", print_query(l), print_query(r)),
        Query::Diff(l, r) => format!("({} minus {})", print_query(l), print_query(r)),
        Query::Rename { from, to, input } => {
            format!("rename({from} -> {to})({})", print_query(input))
        }
        Query::Derive { attr, expr, input } => format!(
            "derive({attr} := {})({})",
            print_expr(expr),
            print_query(input)
        ),
        Query::Aggregate {
            keys,
            values,
            input,
        } => {
            let items: Vec<String> = values.iter().map(|v| format!("sum {v}")).collect();
            format!(
                "agg({}; {})({})",
                keys.join(", "),
                items.join(", "),
                print_query(input)
            )
        }
        Query::GroupBy { keys, items, input } => {
            let items: Vec<String> = items.iter().map(print_item).collect();
            format!(
                "agg({}; {})({})",
                keys.join(", "),
                items.join(", "),
                print_query(input)
            )
        }
        Query::KeyShift { attr, delta, input } => {
            let sign = if *delta < 0 { '-' } else { '+' };
            format!(
                "shift({attr} {sign} {})({})",
                delta.unsigned_abs(),
                print_query(input)
            )
        }
        Query::Coalesce(a, i) => format!("coalesce({})({})", a.join(", "), print_query(i)),
    }
}

fn print_item(i: &AggItem) -> String {
    let mut s = match (i.func, &i.attr) {
        (AggFunc::Count, _) => "count".to_string(),
        (f, Some(a)) => format!("{} {a}", f.name()),
        (f, None) => f.name().to_string(),
    };
    if let Some(a) = &i.alias {
        let _ = write!(s, " as {a}");
    }
    s
}

pub fn print_cond(c: &Cond) -> String {
    match c {
        Cond::True => "true".into(),
        Cond::Eq(a, b) => format!("{} = {}", print_operand(a), print_operand(b)),
        Cond::Lt(a, b) => format!("{} < {}", print_operand(a), print_operand(b)),
        Cond::Not(c) => format!("not ({})", print_cond(c)),
        Cond::And(a, b) => format!("({} and {})", print_cond(a), print_cond(b)),
    }
}

fn print_operand(o: &Operand) -> String {
    match o {
        Operand::Attr(a) => a.clone(),
        Operand::Lit(KeyValue::Text(s)) => {
            format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
        }
        Operand::Lit(KeyValue::Decimal(d)) => format!("{:?}", d.0),
        Operand::Lit(v) => v.to_string(),
    }
}

pub fn print_expr(e: &Expr) -> String {
    match e {
        Expr::Num(v) => format!("{v:?}"),
        Expr::Attr(a) => a.clone(),
        Expr::Add(a, b) => format!("({} + {})", print_expr(a), print_expr(b)),
        Expr::Sub(a, b) => format!("({} - {})", print_expr(a), print_expr(b)),
        Expr::Mul(a, b) => format!("({} * {})", print_expr(a), print_expr(b)),
        Expr::Div(a, b) => format!("({} / {})", print_expr(a), print_expr(b)),
    }
}
