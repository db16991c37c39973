//! Symbolic evaluation of finite-map queries over uncertain tables.
//!
//! Uncertain and missing numbers are encoded as linear expressions over
//! global variables. Queries are evaluated symbolically, overlapping
//! sources are fused by coalescing (which emits linear equations), and the
//! distance to agreement is measured by a weighted least-squares program.
//!
//! Modules:
//! - [`model`]: keys, variables, linear expressions, tables.
//! - [`algebra`]: query trees, the typechecker and the inline evaluator.
//! - [`partitioned`]: the constants-plus-coefficient-tables backend.
//! - [`align`]: coalescing, fusion and alignment specifications.
//! - [`solver`]: QP assembly, the KKT solver, a dense oracle, export.
//! - [`specdsl`]: the textual specification language.

pub mod algebra;
pub mod align;
pub mod model;
pub mod partitioned;
pub mod solver;
pub mod specdsl;
