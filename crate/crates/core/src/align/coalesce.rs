//! Coalescing and fusion.

use std::collections::BTreeMap;

use super::constraint::{ConstrainedSTable, Constraint, ConstraintSet};
use crate::algebra::{disc_union, rules, CoalesceHook, EvalError, TypeError};
use crate::model::{
    Catalog, KeyTuple, KeyValue, LinExpr, ModelError, STable, Signature, VarKind, VarLabel,
};

/// Coalesces `t` on the discriminant keys `attrs`. Rows agreeing on the
/// remaining keys but carrying different value tuples are merged into one
/// row whose every value is a fresh Llun `L`, with `L = t[B]` emitted for
/// each merged row `t`. Other rows are passed through.
pub fn coalesce(
    attrs: &[String],
    t: &STable,
    catalog: &Catalog,
    source: &str,
    out: &mut ConstraintSet,
) -> Result<STable, EvalError> {
    let sig = rules::coalesce_sig(t.signature(), attrs).map_err(|v| {
        EvalError::Type(TypeError {
            path: "coalesce".into(),
            rule: v.rule,
            message: v.message,
        })
    })?;
    let keep: Vec<usize> = sig
        .key_names()
        .map(|n| t.signature().key_index(n).unwrap())
        .collect();
    let mut groups: BTreeMap<KeyTuple, Vec<&Vec<LinExpr>>> = BTreeMap::new();
    for (k, vs) in t.rows() {
        groups
            .entry(keep.iter().map(|&i| k[i].clone()).collect())
            .or_default()
            .push(vs);
    }
    let mut table = STable::new(sig.clone());
    for (key, rows) in groups {
        if rows.iter().all(|r| *r == rows[0]) {
            table.put(key, rows[0].clone());
            continue;
        }
        let rendered: Vec<String> = key.iter().map(KeyValue::to_string).collect();
        let mut vals = Vec::with_capacity(sig.values().len());
        for (i, attr) in sig.values().iter().enumerate() {
            let l = catalog.alloc(
                VarKind::Llun,
                VarLabel::new(source, rendered.clone(), attr.clone()),
            );
            for r in &rows {
                out.push(Constraint::new(LinExpr::var(l), r[i].clone()));
            }
            vals.push(LinExpr::var(l));
        }
        table.put(key, vals);
    }
    Ok(table)
}

/// Coalescing hook recording equations into a constraint set.
pub struct Coalescer<'a> {
    pub catalog: &'a Catalog,
    pub source: String,
    pub constraints: ConstraintSet,
}

impl<'a> Coalescer<'a> {
    pub fn new(catalog: &'a Catalog, source: impl Into<String>) -> Self {
        Coalescer {
            catalog,
            source: source.into(),
            constraints: ConstraintSet::new(),
        }
    }
}

impl CoalesceHook for Coalescer<'_> {
    fn coalesce(&mut self, attrs: &[String], table: STable) -> Result<STable, EvalError> {
        coalesce(
            attrs,
            &table,
            self.catalog,
            &self.source,
            &mut self.constraints,
        )
    }
}

/// A key name not used by `sig`.
pub(crate) fn fresh_discriminant(sig: &Signature) -> String {
    let mut name = "__part".to_string();
    let mut i = 0;
    while sig.has_attr(&name) {
        i += 1;
        name = format!("__part{i}");
    }
    name
}

/// Fuses tables sharing one signature: a single discriminated union over
/// all of them followed by one coalescing on the discriminant.
pub fn fuse(
    tables: &[STable],
    catalog: &Catalog,
    source: &str,
) -> Result<ConstrainedSTable, EvalError> {
    let first = tables.first().ok_or_else(|| {
        EvalError::Model(ModelError::SignatureMismatch(
            "no tables".into(),
            "at least one".into(),
        ))
    })?;
    for t in &tables[1..] {
        if !t.signature().same_attrs(first.signature()) {
            return Err(ModelError::SignatureMismatch(
                first.signature().to_string(),
                t.signature().to_string(),
            )
            .into());
        }
    }
    if tables.len() == 1 {
        return Ok(ConstrainedSTable {
            table: first.clone(),
            constraints: ConstraintSet::new(),
        });
    }
    let d = fresh_discriminant(first.signature());
    let sig =
        rules::dunion_sig(first.signature(), first.signature(), &d).expect("fresh discriminant");
    let union = disc_union(tables, sig)?;
    let mut constraints = ConstraintSet::new();
    let table = coalesce(&[d], &union, catalog, source, &mut constraints)?;
    Ok(ConstrainedSTable { table, constraints })
}
