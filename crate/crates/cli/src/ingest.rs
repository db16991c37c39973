//! CSV ingestion with uncertainty encoding.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use concord_core::model::{
    Catalog, Instance, KeyValue, LinExpr, ModelError, STable, Signature, VarKind, VarLabel,
};
use concord_core::specdsl::{Policy, SpecDocument, TableDecl};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{table}: header {found:?} does not match the declared attributes {expected:?}")]
    SchemaMismatch {
        table: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{table} row {row}: key `{column}` is empty")]
    NullKey {
        table: String,
        row: usize,
        column: String,
    },
    #[error("{table} row {row}, column `{column}`: cannot read `{value}` as a number")]
    NumberParse {
        table: String,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{table} row {row}: {source}")]
    Key {
        table: String,
        row: usize,
        source: ModelError,
    },
    #[error("{table}: {source}")]
    Csv { table: String, source: csv::Error },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Per-column encoding, resolved against a table declaration.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingPolicy {
    pub columns: Vec<Policy>,
}

impl EncodingPolicy {
    pub fn for_table(doc: &SpecDocument, decl: &TableDecl) -> Self {
        EncodingPolicy {
            columns: decl.values.iter().map(|v| doc.policy(&decl.name, v)).collect(),
        }
    }

    pub fn exact(n_values: usize) -> Self {
        EncodingPolicy {
            columns: vec![Policy::Exact; n_values],
        }
    }
}

/// Encodes one cell. `label` names the variable if one is needed.
pub fn encode_cell(
    raw: &str,
    policy: Policy,
    catalog: &Catalog,
    label: impl FnOnce() -> VarLabel,
) -> Result<LinExpr, std::num::ParseFloatError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(match policy {
            Policy::Guess(c) => {
                let x = catalog.alloc(VarKind::Error, label());
                LinExpr::from_terms(c, [(x, c)])
            }
            _ => LinExpr::var(catalog.alloc(VarKind::Null, label())),
        });
    }
    let v: f64 = raw.parse()?;
    Ok(match policy {
        Policy::Error if v == 0.0 => LinExpr::var(catalog.alloc(VarKind::Error, label())),
        Policy::Error => {
            let x = catalog.alloc(VarKind::Error, label());
            LinExpr::from_terms(v, [(x, v)])
        }
        Policy::Exact | Policy::Null | Policy::Guess(_) => LinExpr::constant(v),
    })
}

/// Reads one table. The header must list the key attributes then the value
/// attributes, in declaration order.
pub fn read_table<R: Read>(
    reader: R,
    name: &str,
    sig: &Signature,
    policy: &EncodingPolicy,
    catalog: &Catalog,
) -> Result<STable, IngestError> {
    let csv_err = |source| IngestError::Csv {
        table: name.to_string(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let expected: Vec<String> = sig
        .key_names()
        .map(str::to_string)
        .chain(sig.values().iter().cloned())
        .collect();
    let found: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if found != expected {
        return Err(IngestError::SchemaMismatch {
            table: name.into(),
            expected,
            found,
        });
    }
    let nk = sig.keys().len();
    let mut table = STable::new(sig.clone());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = i + 1;
        let mut key = Vec::with_capacity(nk);
        for (k, attr) in sig.keys().iter().enumerate() {
            let raw = rec.get(k).unwrap_or("").trim();
            if raw.is_empty() {
                return Err(IngestError::NullKey {
                    table: name.into(),
                    row,
                    column: attr.name.clone(),
                });
            }
            key.push(
                KeyValue::parse_as(attr.ty, raw).map_err(|source| IngestError::Key {
                    table: name.into(),
                    row,
                    source,
                })?,
            );
        }
        let rendered: Vec<String> = key.iter().map(ToString::to_string).collect();
        let mut values = Vec::with_capacity(sig.values().len());
        for (j, attr) in sig.values().iter().enumerate() {
            let raw = rec.get(nk + j).unwrap_or("");
            let label = || VarLabel::new(name, rendered.clone(), attr.clone());
            let e = encode_cell(raw, policy.columns[j], catalog, label).map_err(|_| {
                IngestError::NumberParse {
                    table: name.into(),
                    row,
                    column: attr.clone(),
                    value: raw.to_string(),
                }
            })?;
            values.push(e);
        }
        table
            .insert(key, values)
            .map_err(|source| IngestError::Key {
                table: name.into(),
                row,
                source,
            })?;
    }
    Ok(table)
}

pub fn load_csv(
    path: &Path,
    name: &str,
    sig: &Signature,
    policy: &EncodingPolicy,
    catalog: &Catalog,
) -> Result<STable, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_table(file, name, sig, policy, catalog)
}

/// Loads `<dir>/<table>.csv` for every declared table, in declaration
/// order, into one instance with a fresh catalog.
pub fn load_instance(doc: &SpecDocument, dir: &Path) -> Result<Instance, IngestError> {
    let catalog = Arc::new(Catalog::new());
    let mut inst = Instance::new(catalog.clone());
    for decl in &doc.tables {
        let sig = Signature::new(decl.keys.clone(), decl.values.clone()).map_err(|source| {
            IngestError::Key {
                table: decl.name.clone(),
                row: 0,
                source,
            }
        })?;
        let policy = EncodingPolicy::for_table(doc, decl);
        let path = dir.join(format!("{}.csv", decl.name));
        let table = load_csv(&path, &decl.name, &sig, &policy, &catalog)?;
        inst.insert(decl.name.clone(), table);
    }
    Ok(inst)
}
