//! Well-formedness rules `Σ ⊢ q : K ▷ V`.
//!
//! Besides the signature, the checker tracks which value attributes are
//! certainly variable-free (derived only from literals and keys). A product
//! needs one such factor and a divisor must be one, which keeps every
//! derivation linear.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use super::query::{expand_group_by, AggFunc, Cond, Expr, Operand, Query};
use crate::model::{KeyAttr, KeyType, Signature};

pub type Schema = BTreeMap<String, Signature>;

/// Name of the well-formedness rule a query violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Relation,
    Selection,
    ProjectionAway,
    Join,
    DiscriminatedUnion,
    Difference,
    Renaming,
    Derivation,
    Aggregation,
    KeyShift,
    Coalescing,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Relation => "relation",
            Rule::Selection => "selection",
            Rule::ProjectionAway => "projection-away",
            Rule::Join => "join",
            Rule::DiscriminatedUnion => "discriminated-union",
            Rule::Difference => "difference",
            Rule::Renaming => "renaming",
            Rule::Derivation => "derivation",
            Rule::Aggregation => "aggregation",
            Rule::KeyShift => "key-shift",
            Rule::Coalescing => "coalescing",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{rule} rule violated at {path}: {message}")]
pub struct TypeError {
    /// Slash-separated operator path from the root, e.g. `join/left:select`.
    pub path: String,
    pub rule: Rule,
    pub message: String,
}

/// Violation reported by a single-operator rule, before the path is known.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleViolation {
    pub rule: Rule,
    pub message: String,
}

fn violation(rule: Rule, message: impl Into<String>) -> RuleViolation {
    RuleViolation {
        rule,
        message: message.into(),
    }
}

type RuleResult<T> = Result<T, RuleViolation>;

pub fn typecheck(q: &Query, schema: &Schema) -> Result<Signature, TypeError> {
    check(q, schema, "root").map(|t| t.sig)
}

/// Signature plus the value attributes known to be variable-free.
#[derive(Debug, Clone)]
pub(crate) struct Typed {
    pub sig: Signature,
    pub ground: BTreeSet<String>,
}

pub(crate) fn check(q: &Query, schema: &Schema, path: &str) -> Result<Typed, TypeError> {
    let here = format!("{path}/{}", q.op_name());
    let wrap = |v: RuleViolation| TypeError {
        path: here.clone(),
        rule: v.rule,
        message: v.message,
    };
    let child = |q: &Query, tag: &str| check(q, schema, &format!("{here}{tag}"));
    match q {
        Query::Rel(name) => schema
            .get(name)
            .map(|sig| Typed {
                sig: sig.clone(),
                ground: BTreeSet::new(),
            })
            .ok_or_else(|| {
                wrap(violation(
                    Rule::Relation,
                    format!("unknown relation `{name}`"),
                ))
            }),
        Query::Select(c, input) => {
            let t = child(input, "")?;
            select_sig(&t.sig, c).map_err(wrap)?;
            Ok(t)
        }
        Query::ProjectAway(attrs, input) => {
            let t = child(input, "")?;
            let sig = project_away_sig(&t.sig, attrs).map_err(wrap)?;
            let ground = t
                .ground
                .into_iter()
                .filter(|a| !attrs.contains(a))
                .collect();
            Ok(Typed { sig, ground })
        }
        Query::Join(l, r) => {
            let a = child(l, ":left")?;
            let b = child(r, ":right")?;
            let sig = join_sig(&a.sig, &b.sig).map_err(wrap)?;
            Ok(Typed {
                sig,
                ground: a.ground.union(&b.ground).cloned().collect(),
            })
        }
        Query::DiscUnion(d, l, r) => {
            let a = child(l, ":left")?;
            let b = child(r, ":right")?;
            let sig = dunion_sig(&a.sig, &b.sig, d).map_err(wrap)?;
            Ok(Typed {
                sig,
                ground: a.ground.intersection(&b.ground).cloned().collect(),
            })
        }
        Query::Diff(l, r) => {
            let a = child(l, ":left")?;
            let b = child(r, ":right")?;
            diff_sig(&a.sig, &b.sig).map_err(wrap)?;
            Ok(a)
        }
        Query::Rename { from, to, input } => {
            let t = child(input, "")?;
            let sig = rename_sig(&t.sig, from, to).map_err(wrap)?;
            let ground = t
                .ground
                .into_iter()
                .map(|a| if &a == from { to.clone() } else { a })
                .collect();
            Ok(Typed { sig, ground })
        }
        Query::Derive { attr, expr, input } => {
            let t = child(input, "")?;
            let sig = derive_sig(&t.sig, attr).map_err(wrap)?;
            let is_ground = expr_linearity(&t.sig, &t.ground, expr).map_err(wrap)?;
            let mut ground = t.ground;
            if is_ground {
                ground.insert(attr.clone());
            }
            Ok(Typed { sig, ground })
        }
        Query::Aggregate {
            keys,
            values,
            input,
        } => {
            let t = child(input, "")?;
            let sig = aggregate_sig(&t.sig, keys, values).map_err(wrap)?;
            let ground = t
                .ground
                .into_iter()
                .filter(|a| values.contains(a))
                .collect();
            Ok(Typed { sig, ground })
        }
        Query::GroupBy { keys, items, input } => {
            let t = child(input, "")?;
            group_by_precheck(&t.sig, keys, items).map_err(wrap)?;
            let expanded = expand_group_by(keys, items, (**input).clone());
            // the expansion re-checks `input`; errors inside it were
            // already reported above with the right path.
            check(&expanded, schema, &here)
        }
        Query::KeyShift {
            attr,
            delta: _,
            input,
        } => {
            let t = child(input, "")?;
            shift_sig(&t.sig, attr).map_err(wrap)?;
            Ok(t)
        }
        Query::Coalesce(attrs, input) => {
            let t = child(input, "")?;
            let sig = coalesce_sig(&t.sig, attrs).map_err(wrap)?;
            Ok(Typed {
                sig,
                ground: BTreeSet::new(),
            })
        }
    }
}

pub fn select_sig(sig: &Signature, c: &Cond) -> RuleResult<()> {
    check_cond(sig, c)
}

fn operand_type(sig: &Signature, o: &Operand) -> RuleResult<KeyType> {
    match o {
        Operand::Lit(v) => Ok(v.key_type()),
        Operand::Attr(a) => sig.key_type(a).ok_or_else(|| {
            if sig.value_index(a).is_some() {
                violation(
                    Rule::Selection,
                    format!("condition mentions value attribute `{a}`; conditions range over K"),
                )
            } else {
                violation(
                    Rule::Selection,
                    format!("unknown attribute `{a}` in condition"),
                )
            }
        }),
    }
}

fn check_cond(sig: &Signature, c: &Cond) -> RuleResult<()> {
    match c {
        Cond::True => Ok(()),
        Cond::Eq(a, b) | Cond::Lt(a, b) => {
            let (ta, tb) = (operand_type(sig, a)?, operand_type(sig, b)?);
            if ta != tb {
                return Err(violation(
                    Rule::Selection,
                    format!("cannot compare {ta} with {tb}"),
                ));
            }
            Ok(())
        }
        Cond::Not(c) => check_cond(sig, c),
        Cond::And(a, b) => {
            check_cond(sig, a)?;
            check_cond(sig, b)
        }
    }
}

pub fn project_away_sig(sig: &Signature, attrs: &[String]) -> RuleResult<Signature> {
    for a in attrs {
        if sig.value_index(a).is_none() {
            let why = if sig.key_index(a).is_some() {
                "is a key attribute"
            } else {
                "is unknown"
            };
            return Err(violation(
                Rule::ProjectionAway,
                format!("W ⊆ V fails: `{a}` {why}"),
            ));
        }
    }
    let values = sig
        .values()
        .iter()
        .filter(|v| !attrs.contains(v))
        .cloned()
        .collect();
    Ok(Signature::new(sig.keys().to_vec(), values).expect("subset of a valid signature"))
}

pub fn join_sig(l: &Signature, r: &Signature) -> RuleResult<Signature> {
    for v in l.values() {
        if r.value_index(v).is_some() {
            return Err(violation(
                Rule::Join,
                format!("V1 ∩ V2 = ∅ fails: both sides have value `{v}`"),
            ));
        }
        if r.key_index(v).is_some() {
            return Err(violation(
                Rule::Join,
                format!("`{v}` is a value on the left but a key on the right"),
            ));
        }
    }
    for k in r.values() {
        if l.key_index(k).is_some() {
            return Err(violation(
                Rule::Join,
                format!("`{k}` is a key on the left but a value on the right"),
            ));
        }
    }
    let mut keys = l.keys().to_vec();
    for k in r.keys() {
        match l.key_type(&k.name) {
            Some(t) if t != k.ty => {
                return Err(violation(
                    Rule::Join,
                    format!("shared key `{}` has types {t} and {}", k.name, k.ty),
                ))
            }
            Some(_) => {}
            None => keys.push(k.clone()),
        }
    }
    let values = l.values().iter().chain(r.values()).cloned().collect();
    Signature::new(keys, values).map_err(|e| violation(Rule::Join, e.to_string()))
}

pub fn dunion_sig(l: &Signature, r: &Signature, d: &str) -> RuleResult<Signature> {
    if !l.same_attrs(r) {
        return Err(violation(
            Rule::DiscriminatedUnion,
            format!("both sides must share K ▷ V, found {l} and {r}"),
        ));
    }
    if l.has_attr(d) {
        return Err(violation(
            Rule::DiscriminatedUnion,
            format!("discriminant `{d}` already exists"),
        ));
    }
    let mut keys = l.keys().to_vec();
    keys.push(KeyAttr::new(d, KeyType::Integer));
    Ok(Signature::new(keys, l.values().to_vec()).expect("fresh discriminant"))
}

pub fn diff_sig(l: &Signature, r: &Signature) -> RuleResult<()> {
    if !r.values().is_empty() {
        return Err(violation(
            Rule::Difference,
            "right operand must have no value attributes (K ▷ ∅); project them away first",
        ));
    }
    let kl: BTreeSet<_> = l.keys().iter().map(|k| (&k.name, k.ty)).collect();
    let kr: BTreeSet<_> = r.keys().iter().map(|k| (&k.name, k.ty)).collect();
    if kl != kr {
        return Err(violation(
            Rule::Difference,
            format!("key sets differ: {l} vs {r}"),
        ));
    }
    Ok(())
}

pub fn rename_sig(sig: &Signature, from: &str, to: &str) -> RuleResult<Signature> {
    if !sig.has_attr(from) {
        return Err(violation(
            Rule::Renaming,
            format!("unknown attribute `{from}`"),
        ));
    }
    if from != to && sig.has_attr(to) {
        return Err(violation(
            Rule::Renaming,
            format!("target `{to}` already exists"),
        ));
    }
    let keys = sig
        .keys()
        .iter()
        .map(|k| {
            if k.name == from {
                KeyAttr::new(to, k.ty)
            } else {
                k.clone()
            }
        })
        .collect();
    let values = sig
        .values()
        .iter()
        .map(|v| if v == from { to.to_string() } else { v.clone() })
        .collect();
    Ok(Signature::new(keys, values).expect("rename keeps names unique"))
}

pub fn derive_sig(sig: &Signature, attr: &str) -> RuleResult<Signature> {
    if sig.has_attr(attr) {
        return Err(violation(
            Rule::Derivation,
            format!("derived attribute `{attr}` already exists"),
        ));
    }
    let mut values = sig.values().to_vec();
    values.push(attr.to_string());
    Ok(Signature::new(sig.keys().to_vec(), values).expect("fresh attribute"))
}

/// Checks `K,V ⊢ e : ℝ` and linearity. Returns whether `e` is certainly
/// variable-free.
pub(crate) fn expr_linearity(
    sig: &Signature,
    ground: &BTreeSet<String>,
    e: &Expr,
) -> RuleResult<bool> {
    match e {
        Expr::Num(_) => Ok(true),
        Expr::Attr(a) => {
            if let Some(t) = sig.key_type(a) {
                if !t.is_numeric() {
                    return Err(violation(
                        Rule::Derivation,
                        format!("key `{a}` of type {t} cannot be used as a number"),
                    ));
                }
                Ok(true)
            } else if sig.value_index(a).is_some() {
                Ok(ground.contains(a))
            } else {
                Err(violation(
                    Rule::Derivation,
                    format!("unknown attribute `{a}` in expression"),
                ))
            }
        }
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            Ok(expr_linearity(sig, ground, a)? & expr_linearity(sig, ground, b)?)
        }
        Expr::Mul(a, b) => {
            let (ga, gb) = (
                expr_linearity(sig, ground, a)?,
                expr_linearity(sig, ground, b)?,
            );
            if !ga && !gb {
                return Err(violation(
                    Rule::Derivation,
                    "product of two symbolic subexpressions is not linear",
                ));
            }
            Ok(ga && gb)
        }
        Expr::Div(a, b) => {
            let ga = expr_linearity(sig, ground, a)?;
            if !expr_linearity(sig, ground, b)? {
                return Err(violation(Rule::Derivation, "divisor must be variable-free"));
            }
            Ok(ga)
        }
    }
}

pub fn aggregate_sig(sig: &Signature, keys: &[String], values: &[String]) -> RuleResult<Signature> {
    let mut out_keys = Vec::new();
    for k in keys {
        match sig.keys().iter().find(|a| &a.name == k) {
            Some(a) => out_keys.push(a.clone()),
            None if sig.value_index(k).is_some() => {
                return Err(violation(
                    Rule::Aggregation,
                    format!("K' ⊆ K fails: cannot group on value `{k}`"),
                ))
            }
            None => {
                return Err(violation(
                    Rule::Aggregation,
                    format!("unknown grouping attribute `{k}`"),
                ))
            }
        }
    }
    for v in values {
        if sig.value_index(v).is_none() {
            let why = if sig.key_index(v).is_some() {
                "is a key"
            } else {
                "is unknown"
            };
            return Err(violation(
                Rule::Aggregation,
                format!("V' ⊆ V fails: `{v}` {why}"),
            ));
        }
    }
    Signature::new(out_keys, values.to_vec())
        .map_err(|e| violation(Rule::Aggregation, e.to_string()))
}

fn group_by_precheck(
    sig: &Signature,
    keys: &[String],
    items: &[super::query::AggItem],
) -> RuleResult<()> {
    let sources: Vec<String> = items.iter().filter_map(|i| i.attr.clone()).collect();
    aggregate_sig(sig, keys, &sources)?;
    let mut outs = BTreeSet::new();
    for i in items {
        if i.func != AggFunc::Count && i.attr.is_none() {
            return Err(violation(
                Rule::Aggregation,
                format!("{} needs an attribute", i.func.name()),
            ));
        }
        let out = i.output_name();
        if keys.contains(&out) || !outs.insert(out.clone()) {
            return Err(violation(
                Rule::Aggregation,
                format!("output `{out}` is defined twice"),
            ));
        }
    }
    Ok(())
}

pub fn shift_sig(sig: &Signature, attr: &str) -> RuleResult<()> {
    match sig.key_type(attr) {
        Some(t) if t.is_shiftable() => Ok(()),
        Some(t) => Err(violation(
            Rule::KeyShift,
            format!("key `{attr}` of type {t} cannot be shifted"),
        )),
        None => Err(violation(
            Rule::KeyShift,
            format!("`{attr}` is not a key attribute"),
        )),
    }
}

pub fn coalesce_sig(sig: &Signature, attrs: &[String]) -> RuleResult<Signature> {
    if attrs.is_empty() {
        return Err(violation(
            Rule::Coalescing,
            "no discriminant attributes given",
        ));
    }
    for d in attrs {
        if sig.key_index(d).is_none() {
            return Err(violation(
                Rule::Coalescing,
                format!("D ⊆ K fails: `{d}` is not a key"),
            ));
        }
    }
    let keys = sig
        .keys()
        .iter()
        .filter(|k| !attrs.contains(&k.name))
        .cloned()
        .collect();
    Ok(Signature::new(keys, sig.values().to_vec()).expect("subset of a valid signature"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::query::AggItem;
    use crate::model::KeyValue;

    fn schema() -> Schema {
        let mut s = Schema::new();
        s.insert(
            "ReportedDistrict".into(),
            Signature::new(
                vec![
                    KeyAttr::new("district", KeyType::Text),
                    KeyAttr::new("week", KeyType::Week),
                ],
                vec!["cases".into()],
            )
            .unwrap(),
        );
        s.insert(
            "R".into(),
            Signature::new(
                vec![
                    KeyAttr::new("A", KeyType::Integer),
                    KeyAttr::new("B", KeyType::Integer),
                ],
                vec!["C".into(), "D".into()],
            )
            .unwrap(),
        );
        s.insert(
            "S".into(),
            Signature::new(
                vec![KeyAttr::new("B", KeyType::Integer)],
                vec!["E".into(), "F".into()],
            )
            .unwrap(),
        );
        s
    }

    #[test]
    fn aggregation_over_districts() {
        let q = Query::rel("ReportedDistrict").aggregate(&["week"], &["cases"]);
        let sig = typecheck(&q, &schema()).unwrap();
        assert_eq!(sig.key_names().collect::<Vec<_>>(), vec!["week"]);
        assert_eq!(sig.values(), &["cases".to_string()]);
    }

    #[test]
    fn projecting_away_a_key_names_the_rule() {
        let q = Query::rel("R").project_away(&["A"]);
        let err = typecheck(&q, &schema()).unwrap_err();
        assert_eq!(err.rule, Rule::ProjectionAway);
        assert!(err.message.contains("W ⊆ V"), "{err}");
    }

    #[test]
    fn join_of_microbenchmark_schema() {
        let sig = typecheck(&Query::rel("R").join(Query::rel("S")), &schema()).unwrap();
        assert_eq!(sig.key_names().collect::<Vec<_>>(), vec!["A", "B"]);
        assert_eq!(sig.values(), &["C", "D", "E", "F"].map(String::from));
    }

    #[test]
    fn rejections() {
        let s = schema();
        let sel_val = Query::rel("R").select(Cond::Eq(
            Operand::Attr("C".into()),
            Operand::Lit(KeyValue::Integer(1)),
        ));
        assert_eq!(typecheck(&sel_val, &s).unwrap_err().rule, Rule::Selection);

        let self_join = Query::rel("R").join(Query::rel("R"));
        assert_eq!(typecheck(&self_join, &s).unwrap_err().rule, Rule::Join);

        let bad_union = Query::rel("R").dunion("Z", Query::rel("S"));
        assert_eq!(
            typecheck(&bad_union, &s).unwrap_err().rule,
            Rule::DiscriminatedUnion
        );

        let nonlinear = Query::rel("R").derive("X", Expr::mul(Expr::attr("C"), Expr::attr("D")));
        assert_eq!(
            typecheck(&nonlinear, &s).unwrap_err().rule,
            Rule::Derivation
        );

        let group_value = Query::rel("R").aggregate(&["C"], &["D"]);
        assert_eq!(
            typecheck(&group_value, &s).unwrap_err().rule,
            Rule::Aggregation
        );

        let agg_key = Query::rel("R").aggregate(&["A"], &["B"]);
        assert_eq!(typecheck(&agg_key, &s).unwrap_err().rule, Rule::Aggregation);

        let text_key_expr = Query::rel("ReportedDistrict").derive("x", Expr::attr("district"));
        assert_eq!(
            typecheck(&text_key_expr, &s).unwrap_err().rule,
            Rule::Derivation
        );

        let diff_values = Query::rel("R").minus(Query::rel("R"));
        assert_eq!(
            typecheck(&diff_values, &s).unwrap_err().rule,
            Rule::Difference
        );

        let lit_mismatch = Query::rel("R").select(Cond::Lt(
            Operand::Attr("A".into()),
            Operand::Lit(KeyValue::text("x")),
        ));
        assert_eq!(
            typecheck(&lit_mismatch, &s).unwrap_err().rule,
            Rule::Selection
        );
    }

    #[test]
    fn product_with_constant_attribute_is_linear() {
        let q3 = Query::rel("R")
            .derive("W", Expr::Num(1.0))
            .derive("X", Expr::mul(Expr::attr("W"), Expr::attr("C")));
        let sig = typecheck(&q3, &schema()).unwrap();
        assert_eq!(sig.values(), &["C", "D", "W", "X"].map(String::from));
    }

    #[test]
    fn average_macro_typechecks() {
        let q = Query::GroupBy {
            keys: vec!["A".into()],
            items: vec![
                AggItem {
                    func: AggFunc::Avg,
                    attr: Some("C".into()),
                    alias: Some("m".into()),
                },
                AggItem {
                    func: AggFunc::Count,
                    attr: None,
                    alias: Some("n".into()),
                },
            ],
            input: Box::new(Query::rel("R")),
        };
        let sig = typecheck(&q, &schema()).unwrap();
        assert_eq!(sig.values(), &["m", "n"].map(String::from));
    }

    #[test]
    fn error_path_points_at_operator() {
        let q = Query::rel("R").join(Query::rel("S").project_away(&["B"]));
        let err = typecheck(&q, &schema()).unwrap_err();
        assert_eq!(err.path, "root/join:right/projaway");
    }
}
