//! Values, variables, linear expressions and tables shared by every module.

mod catalog;
mod key;
mod linexpr;
mod table;

pub use catalog::{Catalog, VarInfo, VarKind, VarLabel};
pub use key::{IsoWeek, KeyType, KeyValue};
pub use linexpr::{LinExpr, VarId};
pub use table::{render_key, Instance, KeyAttr, KeyTuple, STable, Signature, Valuation};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown key type `{0}`")]
    UnknownKeyType(String),
    #[error("invalid key value: {0}")]
    InvalidKey(String),
    #[error("cannot compare {0} with {1}")]
    CrossTypeComparison(KeyType, KeyType),
    #[error("key type {0} does not support shifting")]
    NotShiftable(KeyType),
    #[error("attribute `{0}` declared twice")]
    DuplicateAttribute(String),
    #[error("duplicate key ({0}) violates the functional dependency")]
    DuplicateKey(String),
    #[error("row arity {found:?} does not match signature arity {expected:?}")]
    Arity {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("key `{attr}` expects {expected}, found {found}")]
    KeyTypeMismatch {
        attr: String,
        expected: KeyType,
        found: KeyType,
    },
    #[error("signature {0} does not match {1}")]
    SignatureMismatch(String, String),
}
