//! Partitioned representation: one ground table of constants plus, per value
//! attribute `B`, a coefficient table `R_B : K, X ▷ C` listing the nonzero
//! coefficient `C` of variable `X` in row `K`.
//!
//! Every operator is translated into ordinary relational operations over
//! these ground tables. Additions go through a zero-filtering aggregation
//! and scalar multiples through a zero-filtering derivation, so no
//! coefficient table ever stores a zero.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::algebra::{
    self, eval_cond, expand_group_by, rules, typecheck, CoalesceHook, EvalError, Expr, NoCoalesce,
    Query, RuleViolation, TypeError,
};
use crate::model::{Instance, KeyTuple, KeyValue, LinExpr, STable, Signature, VarId};

/// Coefficient table `K, X ▷ C`.
pub type CoeffTable = BTreeMap<(KeyTuple, VarId), f64>;

/// Named partitioned inputs.
pub type PInstance = BTreeMap<String, PartitionedTable>;

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedTable {
    base: STable,
    coeffs: BTreeMap<String, CoeffTable>,
}

impl PartitionedTable {
    pub fn from_inline(t: &STable) -> Self {
        let sig = t.signature().clone();
        let mut coeffs: BTreeMap<String, CoeffTable> = sig
            .values()
            .iter()
            .map(|v| (v.clone(), CoeffTable::new()))
            .collect();
        let mut base = STable::new(sig.clone());
        for (k, vs) in t.rows() {
            for (name, e) in sig.values().iter().zip(vs) {
                let table = coeffs.get_mut(name).expect("one table per value attribute");
                for &(x, c) in e.terms() {
                    table.insert((k.clone(), x), c);
                }
            }
            base.put(
                k.clone(),
                vs.iter()
                    .map(|e| LinExpr::constant(e.constant_term()))
                    .collect(),
            );
        }
        PartitionedTable { base, coeffs }
    }

    pub fn to_inline(&self) -> STable {
        let sig = self.base.signature();
        let mut out = STable::new(sig.clone());
        for (k, vs) in self.base.rows() {
            let vals = sig
                .values()
                .iter()
                .zip(vs)
                .map(|(name, c0)| {
                    LinExpr::from_terms(c0.constant_term(), row_terms(&self.coeffs[name], k))
                })
                .collect();
            out.put(k.clone(), vals);
        }
        out
    }

    pub fn signature(&self) -> &Signature {
        self.base.signature()
    }

    /// The ground table of constant terms.
    pub fn base(&self) -> &STable {
        &self.base
    }

    pub fn coeffs(&self, attr: &str) -> Option<&CoeffTable> {
        self.coeffs.get(attr)
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// Number of coefficient rows whose coefficient is zero.
    pub fn zero_coefficient_rows(&self) -> usize {
        self.coeffs
            .values()
            .flat_map(|t| t.values())
            .filter(|c| **c == 0.0)
            .count()
    }

    /// Writes `<name>.csv` with the constants and `<name>.<attr>.csv` per
    /// value attribute with columns `(K…, var, coeff)`.
    pub fn dump_csv(&self, dir: &Path, name: &str) -> io::Result<()> {
        let sig = self.base.signature();
        let keys: Vec<&str> = sig.key_names().collect();
        let mut base = csv_line(
            keys.iter()
                .copied()
                .chain(sig.values().iter().map(String::as_str)),
        );
        for (k, vs) in self.base.rows() {
            let cells: Vec<String> = k
                .iter()
                .map(KeyValue::to_string)
                .chain(vs.iter().map(|e| e.constant_term().to_string()))
                .collect();
            base.push_str(&csv_line(cells.iter().map(String::as_str)));
        }
        std::fs::write(dir.join(format!("{name}.csv")), base)?;
        for attr in sig.values() {
            let mut out = csv_line(keys.iter().copied().chain(["var", "coeff"]));
            for ((k, x), c) in &self.coeffs[attr] {
                let cells: Vec<String> = k
                    .iter()
                    .map(KeyValue::to_string)
                    .chain([x.to_string(), c.to_string()])
                    .collect();
                out.push_str(&csv_line(cells.iter().map(String::as_str)));
            }
            std::fs::write(dir.join(format!("{name}.{attr}.csv")), out)?;
        }
        Ok(())
    }
}

fn csv_line<'a>(cells: impl Iterator<Item = &'a str>) -> String {
    let mut line = String::new();
    for (i, cell) in cells.enumerate() {
        if i > 0 {
            line.push(',');
        }
        if cell.contains([',', '"', '\n']) {
            let _ = write!(line, "\"{}\"", cell.replace('"', "\"\""));
        } else {
            line.push_str(cell);
        }
    }
    line.push('\n');
    line
}

fn key_range(key: &KeyTuple) -> std::ops::RangeInclusive<(KeyTuple, VarId)> {
    (key.clone(), VarId(0))..=(key.clone(), VarId(u32::MAX))
}

fn row_terms<'a>(t: &'a CoeffTable, key: &KeyTuple) -> impl Iterator<Item = (VarId, f64)> + 'a {
    t.range(key_range(key)).map(|((_, x), c)| (*x, *c))
}

pub fn from_instance(inst: &Instance) -> PInstance {
    inst.tables()
        .map(|(n, t)| (n.clone(), PartitionedTable::from_inline(t)))
        .collect()
}

/// Evaluates a coalescing-free query.
pub fn eval_partitioned(q: &Query, inputs: &PInstance) -> Result<PartitionedTable, EvalError> {
    eval_partitioned_with(q, inputs, &mut NoCoalesce)
}

/// Evaluates `q`, delegating coalescing nodes to `hook` on the inline form.
pub fn eval_partitioned_with(
    q: &Query,
    inputs: &PInstance,
    hook: &mut dyn CoalesceHook,
) -> Result<PartitionedTable, EvalError> {
    let schema = inputs
        .iter()
        .map(|(n, t)| (n.clone(), t.signature().clone()))
        .collect();
    typecheck(q, &schema)?;
    eval_node(q, inputs, hook)
}

/// Zero-filtering sum aggregation over `(K', X)`: contributions are folded
/// in input order starting from zero, and zero sums are dropped.
fn gamma_tilde(rows: impl Iterator<Item = ((KeyTuple, VarId), f64)>) -> CoeffTable {
    let mut out = CoeffTable::new();
    for (kx, c) in rows {
        *out.entry(kx).or_insert(0.0) += c;
    }
    out.retain(|_, c| *c != 0.0);
    out
}

/// Zero-filtering derivation `C := α(K)·C`.
fn eps_tilde(t: &CoeffTable, alpha: impl Fn(&KeyTuple) -> f64) -> CoeffTable {
    t.iter()
        .map(|((k, x), c)| ((k.clone(), *x), alpha(k) * c))
        .filter(|(_, c)| *c != 0.0)
        .collect()
}

fn eval_node(
    q: &Query,
    inputs: &PInstance,
    hook: &mut dyn CoalesceHook,
) -> Result<PartitionedTable, EvalError> {
    let rule = |v: RuleViolation| {
        EvalError::Type(TypeError {
            path: q.op_name().to_string(),
            rule: v.rule,
            message: v.message,
        })
    };
    match q {
        Query::Rel(name) => inputs
            .get(name)
            .cloned()
            .ok_or_else(|| EvalError::UnknownRelation(name.clone())),
        Query::Select(c, input) => {
            let t = eval_node(input, inputs, hook)?;
            rules::select_sig(t.signature(), c).map_err(rule)?;
            let sig = t.signature().clone();
            let base = algebra::select(&t.base, c)?;
            let mut coeffs = t.coeffs;
            for table in coeffs.values_mut() {
                let mut kept = CoeffTable::new();
                for ((k, x), v) in std::mem::take(table) {
                    if eval_cond(&sig, &k, c)? {
                        kept.insert((k, x), v);
                    }
                }
                *table = kept;
            }
            Ok(PartitionedTable { base, coeffs })
        }
        Query::ProjectAway(attrs, input) => {
            let t = eval_node(input, inputs, hook)?;
            let sig = rules::project_away_sig(t.signature(), attrs).map_err(rule)?;
            let mut coeffs = t.coeffs;
            for a in attrs {
                coeffs.remove(a);
            }
            Ok(PartitionedTable {
                base: algebra::project_away(&t.base, sig),
                coeffs,
            })
        }
        Query::Join(l, r) => {
            let a = eval_node(l, inputs, hook)?;
            let b = eval_node(r, inputs, hook)?;
            let sig = rules::join_sig(a.signature(), b.signature()).map_err(rule)?;
            Ok(join(&a, &b, sig))
        }
        Query::DiscUnion(d, l, r) => {
            let a = eval_node(l, inputs, hook)?;
            let b = eval_node(r, inputs, hook)?;
            let sig = rules::dunion_sig(a.signature(), b.signature(), d).map_err(rule)?;
            disc_union(&a, &b, sig)
        }
        Query::Diff(l, r) => {
            let a = eval_node(l, inputs, hook)?;
            let b = eval_node(r, inputs, hook)?;
            rules::diff_sig(a.signature(), b.signature()).map_err(rule)?;
            let base = algebra::difference(&a.base, &b.base);
            let mut coeffs = a.coeffs;
            for table in coeffs.values_mut() {
                table.retain(|(k, _), _| base.contains_key(k));
            }
            Ok(PartitionedTable { base, coeffs })
        }
        Query::Rename { from, to, input } => {
            let t = eval_node(input, inputs, hook)?;
            let sig = rules::rename_sig(t.signature(), from, to).map_err(rule)?;
            let mut coeffs = t.coeffs;
            if let Some(table) = coeffs.remove(from) {
                coeffs.insert(to.clone(), table);
            }
            Ok(PartitionedTable {
                base: algebra::retag(t.base, sig),
                coeffs,
            })
        }
        Query::Derive { attr, expr, input } => {
            let t = eval_node(input, inputs, hook)?;
            let sig = rules::derive_sig(t.signature(), attr).map_err(rule)?;
            let col = eval_column(&t, expr)?;
            let mut base = STable::new(sig);
            for (k, vs) in t.base.into_rows() {
                let mut vals = vs;
                vals.push(LinExpr::constant(col.base[&k]));
                base.put(k, vals);
            }
            let mut coeffs = t.coeffs;
            coeffs.insert(attr.clone(), col.coeffs);
            Ok(PartitionedTable { base, coeffs })
        }
        Query::Aggregate {
            keys,
            values,
            input,
        } => {
            let t = eval_node(input, inputs, hook)?;
            let sig = rules::aggregate_sig(t.signature(), keys, values).map_err(rule)?;
            let kpos: Vec<usize> = sig
                .key_names()
                .map(|n| t.signature().key_index(n).unwrap())
                .collect();
            let coeffs = values
                .iter()
                .map(|v| {
                    let rows = t.coeffs[v].iter().map(|((k, x), c)| {
                        ((kpos.iter().map(|&i| k[i].clone()).collect(), *x), *c)
                    });
                    (v.clone(), gamma_tilde(rows))
                })
                .collect();
            Ok(PartitionedTable {
                base: algebra::aggregate(&t.base, sig),
                coeffs,
            })
        }
        Query::GroupBy { keys, items, input } => eval_node(
            &expand_group_by(keys, items, (**input).clone()),
            inputs,
            hook,
        ),
        Query::KeyShift { attr, delta, input } => {
            let t = eval_node(input, inputs, hook)?;
            rules::shift_sig(t.signature(), attr).map_err(rule)?;
            let i = t.signature().key_index(attr).expect("typechecked key");
            let base = algebra::key_shift(&t.base, attr, *delta)?;
            let mut coeffs = BTreeMap::new();
            for (name, table) in t.coeffs {
                let mut shifted = CoeffTable::new();
                for ((mut k, x), c) in table {
                    k[i] = k[i].shift(*delta)?;
                    shifted.insert((k, x), c);
                }
                coeffs.insert(name, shifted);
            }
            Ok(PartitionedTable { base, coeffs })
        }
        Query::Coalesce(attrs, input) => {
            let t = eval_node(input, inputs, hook)?;
            rules::coalesce_sig(t.signature(), attrs).map_err(rule)?;
            let out = hook.coalesce(attrs, t.to_inline())?;
            Ok(PartitionedTable::from_inline(&out))
        }
    }
}

/// Joins every coefficient table with the key columns of the other side.
fn join(a: &PartitionedTable, b: &PartitionedTable, sig: Signature) -> PartitionedTable {
    let (li, ri) = algebra::shared_key_positions(a.signature(), b.signature());
    let extra: Vec<usize> = (0..b.signature().keys().len())
        .filter(|j| !ri.contains(j))
        .collect();

    let mut b_keys: HashMap<Vec<&KeyValue>, Vec<&KeyTuple>> = HashMap::new();
    for (kb, _) in b.base.rows() {
        b_keys
            .entry(ri.iter().map(|&j| &kb[j]).collect())
            .or_default()
            .push(kb);
    }
    let mut a_keys: HashMap<Vec<&KeyValue>, Vec<&KeyTuple>> = HashMap::new();
    for (ka, _) in a.base.rows() {
        a_keys
            .entry(li.iter().map(|&i| &ka[i]).collect())
            .or_default()
            .push(ka);
    }
    let merge = |ka: &KeyTuple, kb: &KeyTuple| -> KeyTuple {
        let mut k = ka.clone();
        k.extend(extra.iter().map(|&j| kb[j].clone()));
        k
    };

    let mut coeffs = BTreeMap::new();
    for (name, table) in &a.coeffs {
        let mut out = CoeffTable::new();
        for ((ka, x), c) in table {
            let probe: Vec<&KeyValue> = li.iter().map(|&i| &ka[i]).collect();
            for kb in b_keys.get(&probe).into_iter().flatten() {
                out.insert((merge(ka, kb), *x), *c);
            }
        }
        coeffs.insert(name.clone(), out);
    }
    for (name, table) in &b.coeffs {
        let mut out = CoeffTable::new();
        for ((kb, x), c) in table {
            let probe: Vec<&KeyValue> = ri.iter().map(|&j| &kb[j]).collect();
            for ka in a_keys.get(&probe).into_iter().flatten() {
                out.insert((merge(ka, kb), *x), *c);
            }
        }
        coeffs.insert(name.clone(), out);
    }
    PartitionedTable {
        base: algebra::join(&a.base, &b.base, sig),
        coeffs,
    }
}

fn disc_union(
    a: &PartitionedTable,
    b: &PartitionedTable,
    sig: Signature,
) -> Result<PartitionedTable, EvalError> {
    let base = algebra::disc_union(&[a.base.clone(), b.base.clone()], sig)?;
    let perm: Vec<usize> = a
        .signature()
        .key_names()
        .map(|n| b.signature().key_index(n).unwrap())
        .collect();
    let mut coeffs = BTreeMap::new();
    for (name, left) in &a.coeffs {
        let mut out = CoeffTable::new();
        for ((k, x), c) in left {
            let mut key = k.clone();
            key.push(KeyValue::Integer(0));
            out.insert((key, *x), *c);
        }
        for ((k, x), c) in &b.coeffs[name] {
            let mut key: KeyTuple = perm.iter().map(|&j| k[j].clone()).collect();
            key.push(KeyValue::Integer(1));
            out.insert((key, *x), *c);
        }
        coeffs.insert(name.clone(), out);
    }
    Ok(PartitionedTable { base, coeffs })
}

/// One derived column: constants per row plus its coefficient table.
struct Column {
    base: BTreeMap<KeyTuple, f64>,
    coeffs: CoeffTable,
}

impl Column {
    fn symbolic_rows(&self) -> HashSet<&KeyTuple> {
        self.coeffs.keys().map(|(k, _)| k).collect()
    }
}

/// Evaluates a derivation expression one operator at a time, each step
/// being a constant, a sum of two columns or a per-row scalar multiple.
fn eval_column(t: &PartitionedTable, e: &Expr) -> Result<Column, EvalError> {
    let sig = t.signature();
    Ok(match e {
        Expr::Num(c) => Column {
            base: t.base.rows().map(|(k, _)| (k.clone(), *c)).collect(),
            coeffs: CoeffTable::new(),
        },
        Expr::Attr(a) => match sig.key_index(a) {
            Some(i) => {
                let mut base = BTreeMap::new();
                for (k, _) in t.base.rows() {
                    base.insert(
                        k.clone(),
                        k[i].as_f64()
                            .ok_or_else(|| EvalError::NonNumericKey(a.clone()))?,
                    );
                }
                Column {
                    base,
                    coeffs: CoeffTable::new(),
                }
            }
            None => {
                let j = sig
                    .value_index(a)
                    .ok_or_else(|| EvalError::UnknownAttribute(a.clone()))?;
                Column {
                    base: t
                        .base
                        .rows()
                        .map(|(k, vs)| (k.clone(), vs[j].constant_term()))
                        .collect(),
                    coeffs: t.coeffs[a].clone(),
                }
            }
        },
        Expr::Add(x, y) => {
            let (x, y) = (eval_column(t, x)?, eval_column(t, y)?);
            let base = x
                .base
                .iter()
                .map(|(k, c)| (k.clone(), c + y.base[k]))
                .collect();
            Column {
                base,
                coeffs: gamma_tilde(x.coeffs.into_iter().chain(y.coeffs)),
            }
        }
        Expr::Sub(x, y) => {
            let (x, y) = (eval_column(t, x)?, eval_column(t, y)?);
            let base = x
                .base
                .iter()
                .map(|(k, c)| (k.clone(), c - y.base[k]))
                .collect();
            let neg = eps_tilde(&y.coeffs, |_| -1.0);
            Column {
                base,
                coeffs: gamma_tilde(x.coeffs.into_iter().chain(neg)),
            }
        }
        Expr::Mul(x, y) => {
            let (x, y) = (eval_column(t, x)?, eval_column(t, y)?);
            let (xs, ys) = (x.symbolic_rows(), y.symbolic_rows());
            // Per row, the ground factor scales the other one.
            let mut scale_y = BTreeMap::new();
            let mut scale_x = BTreeMap::new();
            for k in x.base.keys() {
                if !xs.contains(k) {
                    scale_y.insert(k.clone(), x.base[k]);
                } else if !ys.contains(k) {
                    scale_x.insert(k.clone(), y.base[k]);
                } else {
                    return Err(EvalError::NonlinearProduct);
                }
            }
            let mut base = BTreeMap::new();
            for (k, alpha) in &scale_y {
                base.insert(
                    k.clone(),
                    if *alpha == 0.0 {
                        0.0
                    } else {
                        alpha * y.base[k]
                    },
                );
            }
            for (k, alpha) in &scale_x {
                base.insert(
                    k.clone(),
                    if *alpha == 0.0 {
                        0.0
                    } else {
                        alpha * x.base[k]
                    },
                );
            }
            let ys_part = eps_tilde(
                &y.coeffs
                    .into_iter()
                    .filter(|((k, _), _)| scale_y.contains_key(k))
                    .collect(),
                |k| scale_y[k],
            );
            let xs_part = eps_tilde(
                &x.coeffs
                    .into_iter()
                    .filter(|((k, _), _)| scale_x.contains_key(k))
                    .collect(),
                |k| scale_x[k],
            );
            let mut coeffs = ys_part;
            coeffs.extend(xs_part);
            Column { base, coeffs }
        }
        Expr::Div(x, y) => {
            let (x, y) = (eval_column(t, x)?, eval_column(t, y)?);
            if let Some((k, _)) = y.coeffs.keys().next() {
                return Err(EvalError::Divisor(format!(
                    "divisor mentions variables at ({})",
                    crate::model::render_key(k)
                )));
            }
            if y.base.values().any(|d| *d == 0.0) {
                return Err(EvalError::Divisor("division by zero".into()));
            }
            let base = x
                .base
                .iter()
                .map(|(k, c)| (k.clone(), c / y.base[k]))
                .collect();
            let coeffs = x
                .coeffs
                .iter()
                .map(|((k, v), c)| ((k.clone(), *v), c / y.base[k]))
                .filter(|(_, c)| *c != 0.0)
                .collect();
            Column { base, coeffs }
        }
    })
}
