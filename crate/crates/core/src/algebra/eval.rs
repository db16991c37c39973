//! Inline evaluation: each value cell holds its own sparse expression.

use std::collections::{BTreeMap, HashMap};

use super::query::{expand_group_by, Cond, Expr, Operand, Query};
use super::typecheck::{self, typecheck, TypeError};
use super::EvalError;
use crate::model::{Instance, KeyTuple, KeyValue, LinExpr, STable, Signature, Valuation};

/// Evaluates coalescing nodes. Plain query evaluation has no constraint
/// store, so it uses [`NoCoalesce`]; the alignment layer supplies one that
/// allocates variables and records equations.
pub trait CoalesceHook {
    fn coalesce(&mut self, attrs: &[String], table: STable) -> Result<STable, EvalError>;
}

pub struct NoCoalesce;

impl CoalesceHook for NoCoalesce {
    fn coalesce(&mut self, _attrs: &[String], _table: STable) -> Result<STable, EvalError> {
        Err(EvalError::CoalesceWithoutConstraints)
    }
}

/// Symbolic evaluation of a coalescing-free query.
pub fn eval_symbolic(q: &Query, inst: &Instance) -> Result<STable, EvalError> {
    typecheck(q, &inst.schema())?;
    eval_with(q, inst, &mut NoCoalesce)
}

/// Evaluation over a ground instance. Fails if any input value mentions a
/// variable.
pub fn eval_ground(q: &Query, inst: &Instance) -> Result<STable, EvalError> {
    for name in q.relations() {
        if let Some(t) = inst.get(&name) {
            if !t.is_ground() {
                return Err(EvalError::NotGround(name));
            }
        }
    }
    eval_symbolic(q, inst)
}

pub fn apply_valuation(t: &STable, h: &Valuation) -> STable {
    t.apply_valuation(h)
}

/// Evaluates `q` without typechecking first. Callers are expected to have
/// run [`typecheck`]; operator preconditions are still re-checked per node.
pub fn eval_with(
    q: &Query,
    inst: &Instance,
    hook: &mut dyn CoalesceHook,
) -> Result<STable, EvalError> {
    let rule = |v: typecheck::RuleViolation| {
        EvalError::Type(TypeError {
            path: q.op_name().to_string(),
            rule: v.rule,
            message: v.message,
        })
    };
    match q {
        Query::Rel(name) => inst
            .get(name)
            .cloned()
            .ok_or_else(|| EvalError::UnknownRelation(name.clone())),
        Query::Select(c, input) => {
            let t = eval_with(input, inst, hook)?;
            typecheck::select_sig(t.signature(), c).map_err(rule)?;
            select(&t, c)
        }
        Query::ProjectAway(attrs, input) => {
            let t = eval_with(input, inst, hook)?;
            let sig = typecheck::project_away_sig(t.signature(), attrs).map_err(rule)?;
            Ok(project_away(&t, sig))
        }
        Query::Join(l, r) => {
            let a = eval_with(l, inst, hook)?;
            let b = eval_with(r, inst, hook)?;
            let sig = typecheck::join_sig(a.signature(), b.signature()).map_err(rule)?;
            Ok(join(&a, &b, sig))
        }
        Query::DiscUnion(d, l, r) => {
            let a = eval_with(l, inst, hook)?;
            let b = eval_with(r, inst, hook)?;
            let sig = typecheck::dunion_sig(a.signature(), b.signature(), d).map_err(rule)?;
            disc_union(&[a, b], sig)
        }
        Query::Diff(l, r) => {
            let a = eval_with(l, inst, hook)?;
            let b = eval_with(r, inst, hook)?;
            typecheck::diff_sig(a.signature(), b.signature()).map_err(rule)?;
            Ok(difference(&a, &b))
        }
        Query::Rename { from, to, input } => {
            let t = eval_with(input, inst, hook)?;
            let sig = typecheck::rename_sig(t.signature(), from, to).map_err(rule)?;
            Ok(retag(t, sig))
        }
        Query::Derive { attr, expr, input } => {
            let t = eval_with(input, inst, hook)?;
            let sig = typecheck::derive_sig(t.signature(), attr).map_err(rule)?;
            derive(&t, expr, sig)
        }
        Query::Aggregate {
            keys,
            values,
            input,
        } => {
            let t = eval_with(input, inst, hook)?;
            let sig = typecheck::aggregate_sig(t.signature(), keys, values).map_err(rule)?;
            Ok(aggregate(&t, sig))
        }
        Query::GroupBy { keys, items, input } => {
            eval_with(&expand_group_by(keys, items, (**input).clone()), inst, hook)
        }
        Query::KeyShift { attr, delta, input } => {
            let t = eval_with(input, inst, hook)?;
            typecheck::shift_sig(t.signature(), attr).map_err(rule)?;
            key_shift(&t, attr, *delta)
        }
        Query::Coalesce(attrs, input) => {
            let t = eval_with(input, inst, hook)?;
            typecheck::coalesce_sig(t.signature(), attrs).map_err(rule)?;
            hook.coalesce(attrs, t)
        }
    }
}

fn operand_value<'a>(sig: &Signature, key: &'a [KeyValue], o: &'a Operand) -> &'a KeyValue {
    match o {
        Operand::Lit(v) => v,
        Operand::Attr(a) => &key[sig.key_index(a).expect("typechecked condition")],
    }
}

/// Evaluates a selection condition on one key tuple.
pub fn eval_cond(sig: &Signature, key: &[KeyValue], c: &Cond) -> Result<bool, EvalError> {
    Ok(match c {
        Cond::True => true,
        Cond::Eq(a, b) => operand_value(sig, key, a)
            .try_cmp(operand_value(sig, key, b))?
            .is_eq(),
        Cond::Lt(a, b) => operand_value(sig, key, a)
            .try_cmp(operand_value(sig, key, b))?
            .is_lt(),
        Cond::Not(c) => !eval_cond(sig, key, c)?,
        Cond::And(a, b) => eval_cond(sig, key, a)? && eval_cond(sig, key, b)?,
    })
}

pub(crate) fn select(t: &STable, c: &Cond) -> Result<STable, EvalError> {
    let mut out = STable::new(t.signature().clone());
    for (k, vs) in t.rows() {
        if eval_cond(t.signature(), k, c)? {
            out.put(k.clone(), vs.clone());
        }
    }
    Ok(out)
}

pub(crate) fn project_away(t: &STable, sig: Signature) -> STable {
    let keep: Vec<usize> = sig
        .values()
        .iter()
        .map(|v| t.signature().value_index(v).unwrap())
        .collect();
    let mut out = STable::new(sig);
    for (k, vs) in t.rows() {
        out.put(k.clone(), keep.iter().map(|&i| vs[i].clone()).collect());
    }
    out
}

/// Positions in `from` of each key of `onto`, for the keys they share.
pub(crate) fn shared_key_positions(
    left: &Signature,
    right: &Signature,
) -> (Vec<usize>, Vec<usize>) {
    let mut li = Vec::new();
    let mut ri = Vec::new();
    for (j, k) in right.keys().iter().enumerate() {
        if let Some(i) = left.key_index(&k.name) {
            li.push(i);
            ri.push(j);
        }
    }
    (li, ri)
}

/// Natural join on shared keys; cartesian product when none are shared.
pub(crate) fn join(a: &STable, b: &STable, sig: Signature) -> STable {
    let (li, ri) = shared_key_positions(a.signature(), b.signature());
    let extra: Vec<usize> = (0..b.signature().keys().len())
        .filter(|j| !ri.contains(j))
        .collect();
    let mut index: HashMap<Vec<&KeyValue>, Vec<(&KeyTuple, &Vec<LinExpr>)>> = HashMap::new();
    for (k, vs) in b.rows() {
        index
            .entry(ri.iter().map(|&j| &k[j]).collect())
            .or_default()
            .push((k, vs));
    }
    let mut out = STable::new(sig);
    for (ka, va) in a.rows() {
        let probe: Vec<&KeyValue> = li.iter().map(|&i| &ka[i]).collect();
        if let Some(matches) = index.get(&probe) {
            for (kb, vb) in matches {
                let mut key = ka.clone();
                key.extend(extra.iter().map(|&j| kb[j].clone()));
                let mut vals = va.clone();
                vals.extend(vb.iter().cloned());
                out.put(key, vals);
            }
        }
    }
    out
}

/// Discriminated union of `parts`, tagging rows of the i-th part with `i`.
/// `sig` is the first part's signature extended by the discriminant.
pub(crate) fn disc_union(parts: &[STable], sig: Signature) -> Result<STable, EvalError> {
    let base = Signature::new(
        sig.keys()[..sig.keys().len() - 1].to_vec(),
        sig.values().to_vec(),
    )
    .expect("prefix of valid signature");
    let mut out = STable::new(sig);
    for (i, part) in parts.iter().enumerate() {
        let part = part.aligned_to(&base)?;
        for (k, vs) in part.into_rows() {
            let mut key = k;
            key.push(KeyValue::Integer(i as i64));
            out.put(key, vs);
        }
    }
    Ok(out)
}

pub(crate) fn difference(a: &STable, b: &STable) -> STable {
    let perm: Vec<usize> = b
        .signature()
        .key_names()
        .map(|n| a.signature().key_index(n).unwrap())
        .collect();
    let mut out = STable::new(a.signature().clone());
    for (k, vs) in a.rows() {
        let probe: KeyTuple = perm.iter().map(|&i| k[i].clone()).collect();
        if !b.contains_key(&probe) {
            out.put(k.clone(), vs.clone());
        }
    }
    out
}

pub(crate) fn retag(t: STable, sig: Signature) -> STable {
    let mut out = STable::new(sig);
    for (k, vs) in t.into_rows() {
        out.put(k, vs);
    }
    out
}

/// Evaluates a derivation expression on one row.
pub fn eval_expr(
    sig: &Signature,
    key: &[KeyValue],
    vals: &[LinExpr],
    e: &Expr,
) -> Result<LinExpr, EvalError> {
    Ok(match e {
        Expr::Num(c) => LinExpr::constant(*c),
        Expr::Attr(a) => match sig.key_index(a) {
            Some(i) => LinExpr::constant(
                key[i]
                    .as_f64()
                    .ok_or_else(|| EvalError::NonNumericKey(a.clone()))?,
            ),
            None => vals[sig
                .value_index(a)
                .ok_or_else(|| EvalError::UnknownAttribute(a.clone()))?]
            .clone(),
        },
        Expr::Add(a, b) => eval_expr(sig, key, vals, a)?.add(&eval_expr(sig, key, vals, b)?),
        Expr::Sub(a, b) => eval_expr(sig, key, vals, a)?.sub(&eval_expr(sig, key, vals, b)?),
        Expr::Mul(a, b) => {
            let (x, y) = (eval_expr(sig, key, vals, a)?, eval_expr(sig, key, vals, b)?);
            if x.is_ground() {
                y.scale(x.constant_term())
            } else if y.is_ground() {
                x.scale(y.constant_term())
            } else {
                return Err(EvalError::NonlinearProduct);
            }
        }
        Expr::Div(a, b) => {
            let (x, y) = (eval_expr(sig, key, vals, a)?, eval_expr(sig, key, vals, b)?);
            if !y.is_ground() {
                return Err(EvalError::Divisor(format!(
                    "divisor {y} mentions variables"
                )));
            }
            if y.constant_term() == 0.0 {
                return Err(EvalError::Divisor("division by zero".into()));
            }
            x.div_scalar(y.constant_term())
        }
    })
}

fn derive(t: &STable, e: &Expr, sig: Signature) -> Result<STable, EvalError> {
    let mut out = STable::new(sig);
    for (k, vs) in t.rows() {
        let v = eval_expr(t.signature(), k, vs, e)?;
        let mut vals = vs.clone();
        vals.push(v);
        out.put(k.clone(), vals);
    }
    Ok(out)
}

/// Sum aggregation; rows are folded in key order starting from zero.
pub(crate) fn aggregate(t: &STable, sig: Signature) -> STable {
    let kpos: Vec<usize> = sig
        .key_names()
        .map(|n| t.signature().key_index(n).unwrap())
        .collect();
    let vpos: Vec<usize> = sig
        .values()
        .iter()
        .map(|n| t.signature().value_index(n).unwrap())
        .collect();
    let mut groups: BTreeMap<KeyTuple, Vec<LinExpr>> = BTreeMap::new();
    for (k, vs) in t.rows() {
        let g = groups
            .entry(kpos.iter().map(|&i| k[i].clone()).collect())
            .or_insert_with(|| vec![LinExpr::zero(); vpos.len()]);
        for (acc, &i) in g.iter_mut().zip(&vpos) {
            *acc = acc.add(&vs[i]);
        }
    }
    let mut out = STable::new(sig);
    for (k, vs) in groups {
        out.put(k, vs);
    }
    out
}

pub(crate) fn key_shift(t: &STable, attr: &str, delta: i64) -> Result<STable, EvalError> {
    let i = t.signature().key_index(attr).expect("typechecked key");
    let mut out = STable::new(t.signature().clone());
    for (k, vs) in t.rows() {
        let mut key = k.clone();
        key[i] = key[i].shift(delta)?;
        out.put(key, vs.clone());
    }
    Ok(out)
}
