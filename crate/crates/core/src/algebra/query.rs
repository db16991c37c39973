//! Query trees over finite maps.

use crate::model::KeyValue;

/// Selection condition over key attributes.
#[derive(Debug, Clone, PartialEq)]
pub enum Cond {
    True,
    Eq(Operand, Operand),
    Lt(Operand, Operand),
    Not(Box<Cond>),
    And(Box<Cond>, Box<Cond>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Attr(String),
    Lit(KeyValue),
}

impl Cond {
    #[allow(clippy::should_implement_trait)]
    pub fn not(c: Cond) -> Cond {
        Cond::Not(Box::new(c))
    }

    pub fn and(a: Cond, b: Cond) -> Cond {
        Cond::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Cond, b: Cond) -> Cond {
        Cond::not(Cond::and(Cond::not(a), Cond::not(b)))
    }

    pub fn attrs(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_attrs(&mut out);
        out
    }

    fn collect_attrs<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Cond::True => {}
            Cond::Eq(a, b) | Cond::Lt(a, b) => {
                for o in [a, b] {
                    if let Operand::Attr(n) = o {
                        out.push(n);
                    }
                }
            }
            Cond::Not(c) => c.collect_attrs(out),
            Cond::And(a, b) => {
                a.collect_attrs(out);
                b.collect_attrs(out);
            }
        }
    }
}

/// Derivation expression over the attributes of one row.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Attr(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
}

#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn attr(name: impl Into<String>) -> Expr {
        Expr::Attr(name.into())
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Div(Box::new(a), Box::new(b))
    }
}

/// Aggregate function in grouping sugar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggFunc {
    Sum,
    Count,
    Avg,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Sum => "sum",
            AggFunc::Count => "count",
            AggFunc::Avg => "avg",
        }
    }
}

/// One output column of a grouping: `sum v`, `avg v as a`, `count as n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggItem {
    pub func: AggFunc,
    /// Source value attribute; `None` only for `count`.
    pub attr: Option<String>,
    pub alias: Option<String>,
}

impl AggItem {
    pub fn sum(attr: impl Into<String>) -> Self {
        AggItem {
            func: AggFunc::Sum,
            attr: Some(attr.into()),
            alias: None,
        }
    }

    pub fn output_name(&self) -> String {
        match (&self.alias, &self.attr) {
            (Some(a), _) => a.clone(),
            (None, Some(a)) => a.clone(),
            (None, None) => "count".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    Rel(String),
    Select(Cond, Box<Query>),
    /// Projects away the listed value attributes.
    ProjectAway(Vec<String>, Box<Query>),
    Join(Box<Query>, Box<Query>),
    /// Discriminated union adding key `attr` (0 for left rows, 1 for right).
    DiscUnion(String, Box<Query>, Box<Query>),
    Diff(Box<Query>, Box<Query>),
    Rename {
        from: String,
        to: String,
        input: Box<Query>,
    },
    Derive {
        attr: String,
        expr: Expr,
        input: Box<Query>,
    },
    /// Primitive sum aggregation: group on `keys`, sum `values`.
    Aggregate {
        keys: Vec<String>,
        values: Vec<String>,
        input: Box<Query>,
    },
    /// Grouping with named sum/count/avg outputs; desugars to primitives.
    GroupBy {
        keys: Vec<String>,
        items: Vec<AggItem>,
        input: Box<Query>,
    },
    /// `attr := attr + delta` on an integer, date or week key.
    KeyShift {
        attr: String,
        delta: i64,
        input: Box<Query>,
    },
    /// Coalescing on the discriminant keys `attrs`.
    Coalesce(Vec<String>, Box<Query>),
}

pub const COUNT_ATTR: &str = "__n";

impl Query {
    pub fn rel(name: impl Into<String>) -> Query {
        Query::Rel(name.into())
    }

    pub fn select(self, c: Cond) -> Query {
        Query::Select(c, Box::new(self))
    }

    pub fn project_away(self, attrs: &[&str]) -> Query {
        Query::ProjectAway(
            attrs.iter().map(|s| s.to_string()).collect(),
            Box::new(self),
        )
    }

    pub fn join(self, other: Query) -> Query {
        Query::Join(Box::new(self), Box::new(other))
    }

    pub fn dunion(self, attr: &str, other: Query) -> Query {
        Query::DiscUnion(attr.to_string(), Box::new(self), Box::new(other))
    }

    pub fn minus(self, other: Query) -> Query {
        Query::Diff(Box::new(self), Box::new(other))
    }

    pub fn rename(self, from: &str, to: &str) -> Query {
        Query::Rename {
            from: from.into(),
            to: to.into(),
            input: Box::new(self),
        }
    }

    pub fn derive(self, attr: &str, expr: Expr) -> Query {
        Query::Derive {
            attr: attr.into(),
            expr,
            input: Box::new(self),
        }
    }

    pub fn aggregate(self, keys: &[&str], values: &[&str]) -> Query {
        Query::Aggregate {
            keys: keys.iter().map(|s| s.to_string()).collect(),
            values: values.iter().map(|s| s.to_string()).collect(),
            input: Box::new(self),
        }
    }

    pub fn shift(self, attr: &str, delta: i64) -> Query {
        Query::KeyShift {
            attr: attr.into(),
            delta,
            input: Box::new(self),
        }
    }

    pub fn coalesce(self, attrs: &[&str]) -> Query {
        Query::Coalesce(
            attrs.iter().map(|s| s.to_string()).collect(),
            Box::new(self),
        )
    }

    /// Direct sub-queries, left to right.
    pub fn children(&self) -> Vec<&Query> {
        match self {
            Query::Rel(_) => vec![],
            Query::Select(_, q)
            | Query::ProjectAway(_, q)
            | Query::Rename { input: q, .. }
            | Query::Derive { input: q, .. }
            | Query::Aggregate { input: q, .. }
            | Query::GroupBy { input: q, .. }
            | Query::KeyShift { input: q, .. }
            | Query::Coalesce(_, q) => vec![q],
            Query::Join(a, b) | Query::DiscUnion(_, a, b) | Query::Diff(a, b) => vec![a, b],
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    pub fn contains_coalesce(&self) -> bool {
        matches!(self, Query::Coalesce(..)) || self.children().iter().any(|c| c.contains_coalesce())
    }

    /// Relation names referenced, in first-occurrence order.
    pub fn relations(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_relations(&mut out);
        out
    }

    fn collect_relations(&self, out: &mut Vec<String>) {
        if let Query::Rel(n) = self {
            if !out.contains(n) {
                out.push(n.clone());
            }
        }
        for c in self.children() {
            c.collect_relations(out);
        }
    }

    /// Op name used in error paths.
    pub fn op_name(&self) -> &'static str {
        match self {
            Query::Rel(_) => "relation",
            Query::Select(..) => "select",
            Query::ProjectAway(..) => "projaway",
            Query::Join(..) => "join",
            Query::DiscUnion(..) => "dunion",
            Query::Diff(..) => "minus",
            Query::Rename { .. } => "rename",
            Query::Derive { .. } => "derive",
            Query::Aggregate { .. } => "agg",
            Query::GroupBy { .. } => "agg",
            Query::KeyShift { .. } => "shift",
            Query::Coalesce(..) => "coalesce",
        }
    }
}

/// Expands a grouping with named outputs into primitive operators over
/// `input`:
///
/// 1. `count`/`avg` need a row counter: derive `__n := 1`.
/// 2. sum-aggregate the distinct source attributes (and `__n`).
/// 3. rename each summed attribute to a temporary, derive each output
///    from the temporaries, then project the temporaries away.
pub fn expand_group_by(keys: &[String], items: &[AggItem], input: Query) -> Query {
    let needs_count = items
        .iter()
        .any(|i| matches!(i.func, AggFunc::Count | AggFunc::Avg));
    let mut q = input;
    if needs_count {
        q = q.derive(COUNT_ATTR, Expr::Num(1.0));
    }
    let mut summed: Vec<String> = Vec::new();
    for item in items {
        if let (AggFunc::Sum | AggFunc::Avg, Some(a)) = (item.func, &item.attr) {
            if !summed.contains(a) {
                summed.push(a.clone());
            }
        }
    }
    if needs_count {
        summed.push(COUNT_ATTR.to_string());
    }
    q = Query::Aggregate {
        keys: keys.to_vec(),
        values: summed.clone(),
        input: Box::new(q),
    };
    let tmp = |a: &str| format!("__sum_{a}");
    for a in &summed {
        q = q.rename(a, &tmp(a));
    }
    for item in items {
        let out = item.output_name();
        let expr = match (item.func, &item.attr) {
            (AggFunc::Sum, Some(a)) => Expr::attr(tmp(a)),
            (AggFunc::Avg, Some(a)) => Expr::div(Expr::attr(tmp(a)), Expr::attr(tmp(COUNT_ATTR))),
            (AggFunc::Count, _) => Expr::attr(tmp(COUNT_ATTR)),
            (_, None) => Expr::attr(tmp(COUNT_ATTR)),
        };
        q = q.derive(&out, expr);
    }
    let temps: Vec<String> = summed.iter().map(|a| tmp(a)).collect();
    Query::ProjectAway(temps, Box::new(q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn or_desugars_to_not_and() {
        let a = Cond::Eq(
            Operand::Attr("a".into()),
            Operand::Lit(KeyValue::Integer(1)),
        );
        let b = Cond::Lt(Operand::Attr("b".into()), Operand::Attr("c".into()));
        let o = Cond::or(a.clone(), b.clone());
        assert_eq!(o, Cond::not(Cond::and(Cond::not(a), Cond::not(b))));
        assert_eq!(o.attrs(), vec!["a", "b", "c"]);
    }

    #[test]
    fn group_by_expansion_shape() {
        let q = expand_group_by(
            &["w".to_string()],
            &[AggItem {
                func: AggFunc::Avg,
                attr: Some("d".into()),
                alias: Some("a".into()),
            }],
            Query::rel("R"),
        );
        // projaway(temps)(derive(a)(rename(rename(agg(derive(__n)(R))))))
        let Query::ProjectAway(temps, inner) = &q else {
            panic!("{q:?}")
        };
        assert_eq!(temps, &vec!["__sum_d".to_string(), "__sum___n".to_string()]);
        assert!(matches!(**inner, Query::Derive { ref attr, .. } if attr == "a"));
        assert_eq!(q.relations(), vec!["R".to_string()]);
    }
}
