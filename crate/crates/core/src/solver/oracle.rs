//! Dense reference solver: the unregularized KKT system solved with an SVD
//! pseudo-inverse. Meant for small systems and cross-checks only.

use nalgebra::{DMatrix, DVector};

use super::QpProblem;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub x: Vec<f64>,
    pub discord: f64,
    pub feasible: bool,
    pub feasibility_residual: f64,
}

/// Minimizes `Σ wᵢxᵢ²` subject to `Ax = b` by pseudo-inverting
/// `[2W Aᵀ; A 0]`.
pub fn solve_dense(p: &QpProblem) -> OracleSolution {
    let n = p.vars.len();
    let m = p.rows.len();
    if n + m == 0 {
        let feasible = p.contradictions == 0;
        return OracleSolution {
            x: Vec::new(),
            discord: 0.0,
            feasible,
            feasibility_residual: 0.0,
        };
    }
    let mut k = DMatrix::<f64>::zeros(n + m, n + m);
    let mut rhs = DVector::<f64>::zeros(n + m);
    for (i, v) in p.vars.iter().enumerate() {
        k[(i, i)] = 2.0 * v.weight;
    }
    for (r, row) in p.rows.iter().enumerate() {
        for &(c, a) in row {
            k[(n + r, c)] += a;
            k[(c, n + r)] += a;
        }
        rhs[n + r] = p.rhs[r];
    }
    let svd = k.svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(1.0);
    let sol = svd.solve(&rhs, eps).expect("both factors computed");
    let x: Vec<f64> = sol.iter().take(n).copied().collect();
    let discord = p.objective(&x);
    let feasibility_residual = p.feasibility_residual(&x);
    let feasible = p.contradictions == 0 && feasibility_residual <= p.feasibility_threshold(1e-6);
    OracleSolution {
        feasible,
        x,
        discord,
        feasibility_residual,
    }
}
