//! Linear equations and their sets.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::model::{Catalog, LinExpr, STable, Valuation, VarId, VarKind};

/// `lhs = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub lhs: LinExpr,
    pub rhs: LinExpr,
}

impl Constraint {
    pub fn new(lhs: LinExpr, rhs: LinExpr) -> Self {
        Constraint { lhs, rhs }
    }

    /// `lhs − rhs`, which must vanish.
    pub fn residual(&self) -> LinExpr {
        self.lhs.sub(&self.rhs)
    }

    /// Both sides are the same expression.
    pub fn is_trivial(&self) -> bool {
        self.lhs == self.rhs
    }

    pub fn holds(&self, h: &Valuation, tol: f64) -> bool {
        (h.eval(&self.lhs) - h.eval(&self.rhs)).abs() <= tol * (1.0 + h.eval(&self.lhs).abs())
    }
}

/// Replaces every defined variable by its definition in one pass.
fn substitute_all(e: &LinExpr, defs: &HashMap<VarId, LinExpr>) -> LinExpr {
    if !e.vars().any(|v| defs.contains_key(&v)) {
        return e.clone();
    }
    let mut constant = e.constant_term();
    let mut terms = Vec::new();
    for &(v, c) in e.terms() {
        match defs.get(&v) {
            Some(d) => {
                constant += c * d.constant_term();
                terms.extend(d.terms().iter().map(|&(w, a)| (w, c * a)));
            }
            None => terms.push((v, c)),
        }
    }
    LinExpr::from_terms(constant, terms)
}

/// Conjunction of equations plus definitions of eliminated variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    equations: Vec<Constraint>,
    /// `(L, e)` meaning `L := e`, in elimination order. Each `e` only
    /// mentions variables that were never eliminated.
    definitions: Vec<(VarId, LinExpr)>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_equations(equations: Vec<Constraint>) -> Self {
        ConstraintSet {
            equations,
            definitions: Vec::new(),
        }
    }

    pub fn push(&mut self, c: Constraint) {
        self.equations.push(c);
    }

    pub fn extend(&mut self, other: ConstraintSet) {
        self.equations.extend(other.equations);
        self.definitions.extend(other.definitions);
    }

    pub fn equations(&self) -> &[Constraint] {
        &self.equations
    }

    pub fn definitions(&self) -> &[(VarId, LinExpr)] {
        &self.definitions
    }

    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    /// Variables mentioned by the equations.
    pub fn vars(&self) -> BTreeSet<VarId> {
        self.equations
            .iter()
            .flat_map(|c| c.lhs.vars().chain(c.rhs.vars()))
            .collect()
    }

    /// Rewrites each group `L = e₁, L = e₂, …` of a Llun `L` into
    /// `e₁ = e₂, e₁ = e₃, …`, substituting `L := e₁` everywhere else.
    /// Equations that become syntactically trivial are dropped.
    pub fn eliminate_lluns(&self, catalog: &Catalog) -> ConstraintSet {
        let mut defs: HashMap<VarId, LinExpr> = self.definitions.iter().cloned().collect();
        let mut definitions = self.definitions.clone();
        let mut equations = Vec::new();
        for c in &self.equations {
            let lhs = substitute_all(&c.lhs, &defs);
            let rhs = substitute_all(&c.rhs, &defs);
            if let [(l, coeff)] = c.lhs.terms() {
                let fresh = *coeff == 1.0
                    && c.lhs.constant_term() == 0.0
                    && !defs.contains_key(l)
                    && catalog.kind(*l) == Some(VarKind::Llun)
                    && rhs.coeff(*l) == 0.0;
                if fresh {
                    defs.insert(*l, rhs.clone());
                    definitions.push((*l, rhs));
                    continue;
                }
            }
            let eq = Constraint::new(lhs, rhs);
            if !eq.is_trivial() {
                equations.push(eq);
            }
        }
        ConstraintSet {
            equations,
            definitions,
        }
    }

    /// Fills in eliminated variables from their definitions.
    pub fn reconstruct(&self, h: &mut Valuation) {
        for (l, e) in &self.definitions {
            let v = h.eval(e);
            h.set(*l, v);
        }
    }

    /// Every equation holds under `h` up to a relative tolerance.
    pub fn holds(&self, h: &Valuation, tol: f64) -> bool {
        self.equations.iter().all(|c| c.holds(h, tol))
    }

    /// One line per equation with variables printed by label.
    pub fn render(&self, catalog: &Catalog) -> String {
        let mut out = String::new();
        for c in &self.equations {
            let _ = writeln!(
                out,
                "{} = {}",
                render_expr(&c.lhs, catalog),
                render_expr(&c.rhs, catalog)
            );
        }
        for (l, e) in &self.definitions {
            let _ = writeln!(
                out,
                "{} := {}",
                render_var(*l, catalog),
                render_expr(e, catalog)
            );
        }
        out
    }
}

fn render_var(v: VarId, catalog: &Catalog) -> String {
    match catalog.info(v) {
        Some(info) if !info.label.source.is_empty() => format!("{v}<{}:{}>", info.kind, info.label),
        Some(info) => format!("{v}<{}>", info.kind),
        None => v.to_string(),
    }
}

pub fn render_expr(e: &LinExpr, catalog: &Catalog) -> String {
    let mut s = format!("{}", e.constant_term());
    for &(v, c) in e.terms() {
        let sign = if c < 0.0 { '-' } else { '+' };
        let _ = write!(s, " {sign} {}*{}", c.abs(), render_var(v, catalog));
    }
    s
}

/// A table together with the equations its variables must satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedSTable {
    pub table: STable,
    pub constraints: ConstraintSet,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VarLabel;

    #[test]
    fn elimination_chains_through_later_uses() {
        let cat = Catalog::new();
        let x = cat.alloc(VarKind::Error, VarLabel::default());
        let y = cat.alloc(VarKind::Error, VarLabel::default());
        let l = cat.alloc(VarKind::Llun, VarLabel::default());
        let m = cat.alloc(VarKind::Llun, VarLabel::default());
        let mut cs = ConstraintSet::new();
        cs.push(Constraint::new(
            LinExpr::var(l),
            LinExpr::from_terms(1.0, [(x, 1.0)]),
        ));
        cs.push(Constraint::new(
            LinExpr::var(l),
            LinExpr::from_terms(2.0, [(y, 1.0)]),
        ));
        cs.push(Constraint::new(LinExpr::var(m), LinExpr::var(l).scale(2.0)));
        cs.push(Constraint::new(LinExpr::var(m), LinExpr::constant(4.0)));
        let e = cs.eliminate_lluns(&cat);
        assert_eq!(
            e.equations(),
            &[
                Constraint::new(
                    LinExpr::from_terms(1.0, [(x, 1.0)]),
                    LinExpr::from_terms(2.0, [(y, 1.0)])
                ),
                Constraint::new(LinExpr::from_terms(2.0, [(x, 2.0)]), LinExpr::constant(4.0)),
            ]
        );
        let mut h = Valuation::from_pairs([(x, 1.0)]);
        e.reconstruct(&mut h);
        assert_eq!(h.get(l), 2.0);
        assert_eq!(h.get(m), 4.0);
    }

    #[test]
    fn constant_pair_stays_contradictory() {
        let cat = Catalog::new();
        let l = cat.alloc(VarKind::Llun, VarLabel::default());
        let mut cs = ConstraintSet::new();
        cs.push(Constraint::new(LinExpr::var(l), 3.0.into()));
        cs.push(Constraint::new(LinExpr::var(l), 5.0.into()));
        let e = cs.eliminate_lluns(&cat);
        assert_eq!(e.equations(), &[Constraint::new(3.0.into(), 5.0.into())]);
    }
}
