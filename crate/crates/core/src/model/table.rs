//! Signatures, s-tables, valuations and instances.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use super::catalog::Catalog;
use super::key::{KeyType, KeyValue};
use super::linexpr::{LinExpr, VarId};
use super::ModelError;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KeyAttr {
    pub name: String,
    pub ty: KeyType,
}

impl KeyAttr {
    pub fn new(name: impl Into<String>, ty: KeyType) -> Self {
        KeyAttr {
            name: name.into(),
            ty,
        }
    }
}

/// Finite map signature `K ▷ V`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Signature {
    keys: Vec<KeyAttr>,
    values: Vec<String>,
}

impl Signature {
    pub fn new(keys: Vec<KeyAttr>, values: Vec<String>) -> Result<Self, ModelError> {
        let mut seen = BTreeSet::new();
        for name in keys.iter().map(|k| &k.name).chain(values.iter()) {
            if !seen.insert(name.as_str()) {
                return Err(ModelError::DuplicateAttribute(name.clone()));
            }
        }
        Ok(Signature { keys, values })
    }

    pub fn keys(&self) -> &[KeyAttr] {
        &self.keys
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn key_names(&self) -> impl Iterator<Item = &str> {
        self.keys.iter().map(|k| k.name.as_str())
    }

    pub fn key_index(&self, name: &str) -> Option<usize> {
        self.keys.iter().position(|k| k.name == name)
    }

    pub fn key_type(&self, name: &str) -> Option<KeyType> {
        self.keys.iter().find(|k| k.name == name).map(|k| k.ty)
    }

    pub fn value_index(&self, name: &str) -> Option<usize> {
        self.values.iter().position(|v| v == name)
    }

    pub fn has_attr(&self, name: &str) -> bool {
        self.key_index(name).is_some() || self.value_index(name).is_some()
    }

    /// Same key attributes (with types) and value attributes, in any order.
    pub fn same_attrs(&self, other: &Signature) -> bool {
        let ka: BTreeSet<_> = self.keys.iter().map(|k| (&k.name, k.ty)).collect();
        let kb: BTreeSet<_> = other.keys.iter().map(|k| (&k.name, k.ty)).collect();
        let va: BTreeSet<_> = self.values.iter().collect();
        let vb: BTreeSet<_> = other.values.iter().collect();
        ka == kb && va == vb
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let keys: Vec<String> = self
            .keys
            .iter()
            .map(|k| format!("{}: {}", k.name, k.ty))
            .collect();
        write!(
            f,
            "{{{}}} ▷ {{{}}}",
            keys.join(", "),
            self.values.join(", ")
        )
    }
}

pub type KeyTuple = Vec<KeyValue>;

/// A symbolic table: a finite map from ground key tuples to tuples of
/// linear expressions. Rows are kept ordered by key tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct STable {
    sig: Signature,
    rows: BTreeMap<KeyTuple, Vec<LinExpr>>,
}

impl STable {
    pub fn new(sig: Signature) -> Self {
        STable {
            sig,
            rows: BTreeMap::new(),
        }
    }

    pub fn signature(&self) -> &Signature {
        &self.sig
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Adds a row; a second row for the same key violates the FD.
    pub fn insert(&mut self, key: KeyTuple, values: Vec<LinExpr>) -> Result<(), ModelError> {
        self.check_row(&key, &values)?;
        if self.rows.contains_key(&key) {
            return Err(ModelError::DuplicateKey(render_key(&key)));
        }
        self.rows.insert(key, values);
        Ok(())
    }

    /// Inserts or replaces a row without the FD check. Used by operators
    /// whose typing already guarantees distinct keys.
    pub(crate) fn put(&mut self, key: KeyTuple, values: Vec<LinExpr>) {
        debug_assert_eq!(key.len(), self.sig.keys.len());
        debug_assert_eq!(values.len(), self.sig.values.len());
        self.rows.insert(key, values);
    }

    fn check_row(&self, key: &KeyTuple, values: &[LinExpr]) -> Result<(), ModelError> {
        if key.len() != self.sig.keys.len() || values.len() != self.sig.values.len() {
            return Err(ModelError::Arity {
                expected: (self.sig.keys.len(), self.sig.values.len()),
                found: (key.len(), values.len()),
            });
        }
        for (k, attr) in key.iter().zip(&self.sig.keys) {
            if k.key_type() != attr.ty {
                return Err(ModelError::KeyTypeMismatch {
                    attr: attr.name.clone(),
                    expected: attr.ty,
                    found: k.key_type(),
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &[KeyValue]) -> Option<&[LinExpr]> {
        self.rows.get(key).map(|v| v.as_slice())
    }

    pub fn contains_key(&self, key: &[KeyValue]) -> bool {
        self.rows.contains_key(key)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&KeyTuple, &Vec<LinExpr>)> {
        self.rows.iter()
    }

    pub fn into_rows(self) -> impl Iterator<Item = (KeyTuple, Vec<LinExpr>)> {
        self.rows.into_iter()
    }

    pub fn is_ground(&self) -> bool {
        self.rows
            .values()
            .all(|vs| vs.iter().all(LinExpr::is_ground))
    }

    /// Every variable mentioned in the table, sorted.
    pub fn vars(&self) -> BTreeSet<VarId> {
        self.rows
            .values()
            .flat_map(|vs| vs.iter().flat_map(|e| e.vars().collect::<Vec<_>>()))
            .collect()
    }

    pub fn apply_valuation(&self, h: &Valuation) -> STable {
        STable {
            sig: self.sig.clone(),
            rows: self
                .rows
                .iter()
                .map(|(k, vs)| {
                    (
                        k.clone(),
                        vs.iter().map(|e| LinExpr::constant(h.eval(e))).collect(),
                    )
                })
                .collect(),
        }
    }

    /// Reorders columns to match `target`, which must have the same
    /// attributes.
    pub fn aligned_to(&self, target: &Signature) -> Result<STable, ModelError> {
        if &self.sig == target {
            return Ok(self.clone());
        }
        if !self.sig.same_attrs(target) {
            return Err(ModelError::SignatureMismatch(
                self.sig.to_string(),
                target.to_string(),
            ));
        }
        let kperm: Vec<usize> = target
            .keys
            .iter()
            .map(|k| self.sig.key_index(&k.name).unwrap())
            .collect();
        let vperm: Vec<usize> = target
            .values
            .iter()
            .map(|v| self.sig.value_index(v).unwrap())
            .collect();
        let mut out = STable::new(target.clone());
        for (k, vs) in &self.rows {
            out.put(
                kperm.iter().map(|&i| k[i].clone()).collect(),
                vperm.iter().map(|&i| vs[i].clone()).collect(),
            );
        }
        Ok(out)
    }
}

pub fn render_key(key: &[KeyValue]) -> String {
    key.iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl fmt::Display for STable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.sig)?;
        for (k, vs) in &self.rows {
            let vals: Vec<String> = vs.iter().map(|e| e.to_string()).collect();
            writeln!(f, "  ({}) -> ({})", render_key(k), vals.join(", "))?;
        }
        Ok(())
    }
}

/// Total assignment of reals to variables; unset variables read as 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Valuation {
    values: Vec<f64>,
}

impl Valuation {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (VarId, f64)>) -> Self {
        let mut h = Valuation::zero();
        for (v, x) in pairs {
            h.set(v, x);
        }
        h
    }

    pub fn set(&mut self, var: VarId, value: f64) {
        let i = var.index();
        if i >= self.values.len() {
            self.values.resize(i + 1, 0.0);
        }
        self.values[i] = value;
    }

    pub fn get(&self, var: VarId) -> f64 {
        self.values.get(var.index()).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, e: &LinExpr) -> f64 {
        e.eval_with(|v| self.get(v))
    }

    /// Non-zero entries in id order.
    pub fn nonzero(&self) -> impl Iterator<Item = (VarId, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, x)| **x != 0.0)
            .map(|(i, x)| (VarId(i as u32), *x))
    }
}

/// Named s-tables over one shared variable catalog. Variables are global:
/// the same id in two tables is the same unknown.
#[derive(Debug, Clone, Default)]
pub struct Instance {
    tables: BTreeMap<String, STable>,
    catalog: Arc<Catalog>,
}

impl Instance {
    pub fn new(catalog: Arc<Catalog>) -> Self {
        Instance {
            tables: BTreeMap::new(),
            catalog,
        }
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn insert(&mut self, name: impl Into<String>, table: STable) {
        self.tables.insert(name.into(), table);
    }

    pub fn get(&self, name: &str) -> Option<&STable> {
        self.tables.get(name)
    }

    pub fn tables(&self) -> impl Iterator<Item = (&String, &STable)> {
        self.tables.iter()
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn schema(&self) -> BTreeMap<String, Signature> {
        self.tables
            .iter()
            .map(|(n, t)| (n.clone(), t.signature().clone()))
            .collect()
    }

    /// Same tables over a deep copy of the catalog, so allocations made
    /// while evaluating against the copy leave `self` untouched.
    pub fn fork(&self) -> Instance {
        Instance {
            tables: self.tables.clone(),
            catalog: Arc::new(self.catalog.snapshot()),
        }
    }

    pub fn apply_valuation(&self, h: &Valuation) -> Instance {
        Instance {
            tables: self
                .tables
                .iter()
                .map(|(n, t)| (n.clone(), t.apply_valuation(h)))
                .collect(),
            catalog: self.catalog.clone(),
        }
    }

    pub fn is_ground(&self) -> bool {
        self.tables.values().all(STable::is_ground)
    }
}
