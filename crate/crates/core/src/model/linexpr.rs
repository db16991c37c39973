//! Sparse linear expressions `a0 + Σ ai·xi`.

use std::fmt;
use std::ops::{Add, Neg, Sub};

/// Identifier of a variable in the global variable space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// A linear expression with a constant term and sparse coefficients.
///
/// Terms are kept sorted by variable and never hold a coefficient equal to
/// `0.0`, so structural equality is semantic equality of the coefficient
/// vectors. The zero test is exact; no epsilon is applied here.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinExpr {
    constant: f64,
    terms: Vec<(VarId, f64)>,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr {
            constant: c,
            terms: Vec::new(),
        }
    }

    /// `coeff · var`, or zero when `coeff == 0`.
    pub fn term(var: VarId, coeff: f64) -> Self {
        let terms = if coeff == 0.0 {
            Vec::new()
        } else {
            vec![(var, coeff)]
        };
        LinExpr {
            constant: 0.0,
            terms,
        }
    }

    pub fn var(var: VarId) -> Self {
        Self::term(var, 1.0)
    }

    /// Builds an expression from arbitrary `(var, coeff)` pairs, summing
    /// duplicates and dropping zeros.
    pub fn from_terms(constant: f64, terms: impl IntoIterator<Item = (VarId, f64)>) -> Self {
        let mut terms: Vec<(VarId, f64)> = terms.into_iter().collect();
        terms.sort_by_key(|(v, _)| *v);
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match merged.last_mut() {
                Some((last, acc)) if *last == v => *acc += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|(_, c)| *c != 0.0);
        LinExpr {
            constant,
            terms: merged,
        }
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn terms(&self) -> &[(VarId, f64)] {
        &self.terms
    }

    pub fn coeff(&self, var: VarId) -> f64 {
        self.terms
            .binary_search_by_key(&var, |(v, _)| *v)
            .map(|i| self.terms[i].1)
            .unwrap_or(0.0)
    }

    /// True when the expression has no variable terms.
    pub fn is_ground(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.terms.iter().map(|(v, _)| *v)
    }

    pub fn scale(&self, alpha: f64) -> LinExpr {
        if alpha == 0.0 {
            return LinExpr::zero();
        }
        LinExpr {
            constant: alpha * self.constant,
            terms: self
                .terms
                .iter()
                .map(|&(v, c)| (v, alpha * c))
                .filter(|(_, c)| *c != 0.0)
                .collect(),
        }
    }

    /// Divides every coefficient and the constant by `d`.
    pub fn div_scalar(&self, d: f64) -> LinExpr {
        LinExpr {
            constant: self.constant / d,
            terms: self
                .terms
                .iter()
                .map(|&(v, c)| (v, c / d))
                .filter(|(_, c)| *c != 0.0)
                .collect(),
        }
    }

    fn merge(&self, other: &LinExpr, sign: f64) -> LinExpr {
        let mut terms = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut i, mut j) = (0, 0);
        while i < self.terms.len() || j < other.terms.len() {
            let next = match (self.terms.get(i), other.terms.get(j)) {
                (Some(&(va, ca)), Some(&(vb, cb))) if va == vb => {
                    i += 1;
                    j += 1;
                    (va, if sign > 0.0 { ca + cb } else { ca - cb })
                }
                (Some(&(va, ca)), Some(&(vb, _))) if va < vb => {
                    i += 1;
                    (va, ca)
                }
                (Some(&(va, ca)), None) => {
                    i += 1;
                    (va, ca)
                }
                (_, Some(&(vb, cb))) => {
                    j += 1;
                    (vb, sign * cb)
                }
                (None, None) => unreachable!(),
            };
            if next.1 != 0.0 {
                terms.push(next);
            }
        }
        let constant = if sign > 0.0 {
            self.constant + other.constant
        } else {
            self.constant - other.constant
        };
        LinExpr { constant, terms }
    }

    pub fn add(&self, other: &LinExpr) -> LinExpr {
        self.merge(other, 1.0)
    }

    pub fn sub(&self, other: &LinExpr) -> LinExpr {
        self.merge(other, -1.0)
    }

    /// Evaluates under `value`, which supplies the value of every variable.
    pub fn eval_with(&self, value: impl Fn(VarId) -> f64) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(v, c)| acc + c * value(v))
    }

    /// Replaces `var` with `replacement`.
    pub fn substitute(&self, var: VarId, replacement: &LinExpr) -> LinExpr {
        let c = self.coeff(var);
        if c == 0.0 {
            return self.clone();
        }
        let mut rest = self.clone();
        rest.terms.retain(|(v, _)| *v != var);
        rest.add(&replacement.scale(c))
    }

    /// Largest absolute value among the constant and the coefficients.
    pub fn max_abs(&self) -> f64 {
        self.terms
            .iter()
            .fold(self.constant.abs(), |m, (_, c)| m.max(c.abs()))
    }
}

impl From<f64> for LinExpr {
    fn from(c: f64) -> Self {
        LinExpr::constant(c)
    }
}

impl Add for &LinExpr {
    type Output = LinExpr;
    fn add(self, rhs: &LinExpr) -> LinExpr {
        LinExpr::add(self, rhs)
    }
}

impl Sub for &LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: &LinExpr) -> LinExpr {
        LinExpr::sub(self, rhs)
    }
}

impl Neg for &LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scale(-1.0)
    }
}

impl fmt::Display for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "{}", self.constant);
        }
        let mut first = true;
        if self.constant != 0.0 {
            write!(f, "{}", self.constant)?;
            first = false;
        }
        for (v, c) in &self.terms {
            if first {
                write!(f, "{c}·{v}")?;
                first = false;
            } else if *c < 0.0 {
                write!(f, " - {}·{v}", -c)?;
            } else {
                write!(f, " + {c}·{v}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn x(i: u32) -> VarId {
        VarId(i)
    }

    #[test]
    fn district_expressions_add() {
        let a = LinExpr::from_terms(75.0, [(x(1), 75.0)]);
        let b = LinExpr::from_terms(75.0, [(x(2), 75.0)]);
        let s = a.add(&b);
        assert_eq!(s, LinExpr::from_terms(150.0, [(x(1), 75.0), (x(2), 75.0)]));
    }

    #[test]
    fn additive_identity_and_cancellation() {
        let e = LinExpr::from_terms(2.0, [(x(0), 3.0)]);
        assert_eq!(e.add(&LinExpr::zero()), e);
        let neg = LinExpr::from_terms(-2.0, [(x(0), -3.0)]);
        let z = e.add(&neg);
        assert_eq!(z, LinExpr::zero());
        assert!(z.terms().is_empty());
    }

    #[test]
    fn scaling_examples() {
        let e = LinExpr::from_terms(1000.0, [(x(7), 1000.0)]);
        assert_eq!(e.scale(0.015), LinExpr::from_terms(15.0, [(x(7), 15.0)]));
        assert_eq!(e.scale(1.0), e);
        let z = LinExpr::from_terms(5.0, [(x(1), 2.0)]).scale(0.0);
        assert_eq!(z, LinExpr::zero());
        assert!(z.terms().is_empty());
    }

    #[test]
    fn eval_examples() {
        let e = LinExpr::from_terms(1000.0, [(x(0), 1000.0)]);
        let h = |v: VarId| if v == x(0) { -0.1 } else { 0.0 };
        assert!((e.eval_with(h) - 900.0).abs() < 1e-12);
        assert_eq!(LinExpr::constant(20.0).eval_with(|_| 7.0), 20.0);
        assert_eq!(LinExpr::var(x(13)).eval_with(|_| 100.0), 100.0);
    }

    #[test]
    fn substitute_replaces_variable() {
        let e = LinExpr::from_terms(1.0, [(x(0), 2.0), (x(1), 1.0)]);
        let r = LinExpr::from_terms(3.0, [(x(2), 1.0)]);
        let s = e.substitute(x(0), &r);
        assert_eq!(s, LinExpr::from_terms(7.0, [(x(1), 1.0), (x(2), 2.0)]));
        assert_eq!(e.substitute(x(9), &r), e);
    }

    fn arb_expr() -> impl Strategy<Value = LinExpr> {
        (
            -100.0f64..100.0,
            prop::collection::vec(
                (
                    0u32..8,
                    prop_oneof![Just(0.0), -10.0f64..10.0, Just(1.0), Just(-1.0)],
                ),
                0..6,
            ),
        )
            .prop_map(|(c, t)| LinExpr::from_terms(c, t.into_iter().map(|(v, c)| (VarId(v), c))))
    }

    fn canonical(e: &LinExpr) -> bool {
        e.terms().iter().all(|(_, c)| *c != 0.0) && e.terms().windows(2).all(|w| w[0].0 < w[1].0)
    }

    proptest! {
        #[test]
        fn results_stay_canonical(a in arb_expr(), b in arb_expr(), alpha in prop_oneof![Just(0.0), -3.0f64..3.0]) {
            prop_assert!(canonical(&a.add(&b)));
            prop_assert!(canonical(&a.sub(&b)));
            prop_assert!(canonical(&a.scale(alpha)));
            prop_assert!(canonical(&a.sub(&a)));
        }

        #[test]
        fn add_commutes(a in arb_expr(), b in arb_expr()) {
            prop_assert_eq!(a.add(&b), b.add(&a));
        }

        #[test]
        fn add_associates_and_scale_distributes(a in arb_expr(), b in arb_expr(), c in arb_expr(), alpha in -3.0f64..3.0) {
            let l = a.add(&b).add(&c);
            let r = a.add(&b.add(&c));
            let h = |v: VarId| (v.0 as f64) * 0.37 - 1.1;
            prop_assert!((l.eval_with(h) - r.eval_with(h)).abs() <= 1e-12 * (1.0 + l.max_abs() + r.max_abs()) * 10.0);
            let l = a.add(&b).scale(alpha);
            let r = a.scale(alpha).add(&b.scale(alpha));
            for (v, cl) in l.terms() {
                prop_assert!((cl - r.coeff(*v)).abs() <= 1e-12 * (1.0 + cl.abs()) * 10.0);
            }
        }
    }

    #[test]
    fn eval_is_a_homomorphism() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let gen = |rng: &mut rand_chacha::ChaCha8Rng| {
                let n = rng.random_range(0..6);
                LinExpr::from_terms(
                    rng.random_range(-1e3..1e3),
                    (0..n).map(|_| {
                        (
                            VarId(rng.random_range(0..10)),
                            rng.random_range(-50.0..50.0),
                        )
                    }),
                )
            };
            let a = gen(&mut rng);
            let b = gen(&mut rng);
            let vals: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
            let h = |v: VarId| vals[v.index()];
            let lhs = a.add(&b).eval_with(h);
            let rhs = a.eval_with(h) + b.eval_with(h);
            assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs().max(rhs.abs())));
        }
    }
}
