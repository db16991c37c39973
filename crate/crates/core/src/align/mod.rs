//! Fusion, coalescing, alignment specifications and the equations they
//! produce.

mod coalesce;
mod constraint;

pub use coalesce::{coalesce, fuse, Coalescer};
pub use constraint::{render_expr, ConstrainedSTable, Constraint, ConstraintSet};

use crate::algebra::{eval_with, typecheck, EvalError, Query, Rule, Schema, TypeError};
use crate::model::{Instance, STable, Signature};
use crate::partitioned::{self, PInstance, PartitionedTable};

/// `name := q₁ ⊔ … ⊔ qₖ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewDef {
    pub name: String,
    pub queries: Vec<Query>,
}

/// Source schema plus ordered view definitions; each definition may read
/// the sources and every earlier view.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlignmentSpec {
    pub source: Schema,
    pub views: Vec<ViewDef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Inline,
    Partitioned,
}

fn spec_error(path: String, message: String) -> TypeError {
    TypeError {
        path,
        rule: Rule::Coalescing,
        message,
    }
}

impl AlignmentSpec {
    /// Typechecks every definition and returns the derived schema.
    pub fn check(&self) -> Result<Schema, TypeError> {
        let mut schema = self.source.clone();
        let mut derived = Schema::new();
        for v in &self.views {
            if schema.contains_key(&v.name) {
                return Err(spec_error(
                    v.name.clone(),
                    format!("`{}` is defined twice", v.name),
                ));
            }
            if v.queries.is_empty() {
                return Err(spec_error(
                    v.name.clone(),
                    "a view needs at least one query".into(),
                ));
            }
            let mut sig: Option<Signature> = None;
            for (i, q) in v.queries.iter().enumerate() {
                let s = typecheck(q, &schema).map_err(|mut e| {
                    e.path = format!("{}#{}/{}", v.name, i + 1, e.path);
                    e
                })?;
                match &sig {
                    Some(first) if !first.same_attrs(&s) => {
                        return Err(spec_error(
                            format!("{}#{}", v.name, i + 1),
                            format!("fused queries disagree: {first} vs {s}"),
                        ))
                    }
                    Some(_) => {}
                    None => sig = Some(s),
                }
            }
            let sig = sig.expect("non-empty");
            schema.insert(v.name.clone(), sig.clone());
            derived.insert(v.name.clone(), sig);
        }
        Ok(derived)
    }
}

/// Evaluates every definition in order with the inline backend.
pub fn run_spec(
    spec: &AlignmentSpec,
    inst: &Instance,
) -> Result<(Instance, ConstraintSet), EvalError> {
    run_spec_with(spec, inst, Backend::Inline)
}

/// Evaluates every definition in order, fusing each view's queries.
/// Returns the views (sharing `inst`'s catalog) and the accumulated
/// equations, Lluns not yet eliminated.
pub fn run_spec_with(
    spec: &AlignmentSpec,
    inst: &Instance,
    backend: Backend,
) -> Result<(Instance, ConstraintSet), EvalError> {
    spec.check()?;
    let catalog = inst.catalog().clone();
    let mut scope = inst.clone();
    let mut pscope: PInstance = match backend {
        Backend::Partitioned => partitioned::from_instance(inst),
        Backend::Inline => PInstance::new(),
    };
    let mut views = Instance::new(catalog.clone());
    let mut phi = ConstraintSet::new();
    for v in &spec.views {
        let mut hook = Coalescer::new(&catalog, v.name.clone());
        let mut results: Vec<STable> = Vec::with_capacity(v.queries.len());
        for q in &v.queries {
            results.push(match backend {
                Backend::Inline => eval_with(q, &scope, &mut hook)?,
                Backend::Partitioned => {
                    partitioned::eval_partitioned_with(q, &pscope, &mut hook)?.to_inline()
                }
            });
        }
        let fused = fuse(&results, &catalog, &v.name)?;
        phi.extend(hook.constraints);
        phi.extend(fused.constraints);
        if backend == Backend::Partitioned {
            pscope.insert(v.name.clone(), PartitionedTable::from_inline(&fused.table));
        }
        scope.insert(v.name.clone(), fused.table.clone());
        views.insert(v.name.clone(), fused.table);
    }
    Ok((views, phi))
}
