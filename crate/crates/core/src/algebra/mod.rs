//! Query language over finite maps: syntax, well-formedness and the inline
//! (expression-per-cell) evaluator.

mod eval;
mod query;
mod typecheck;

pub(crate) use eval::{
    aggregate, difference, disc_union, join, key_shift, project_away, retag, select,
    shared_key_positions,
};
pub use eval::{
    apply_valuation, eval_cond, eval_expr, eval_ground, eval_symbolic, eval_with, CoalesceHook,
    NoCoalesce,
};
pub use query::{expand_group_by, AggFunc, AggItem, Cond, Expr, Operand, Query, COUNT_ATTR};
pub use typecheck::{typecheck, Rule, RuleViolation, Schema, TypeError};
pub(crate) mod rules {
    pub(crate) use super::typecheck::*;
}

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("invalid divisor: {0}")]
    Divisor(String),
    #[error("product of two symbolic expressions is not linear")]
    NonlinearProduct,
    #[error("key `{0}` is not numeric")]
    NonNumericKey(String),
    #[error("relation `{0}` is not ground")]
    NotGround(String),
    #[error("coalescing needs a constraint store; evaluate through the alignment layer")]
    CoalesceWithoutConstraints,
    #[error(transparent)]
    Model(#[from] ModelError),
}
