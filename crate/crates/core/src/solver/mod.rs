//! Weighted least-squares repair: assemble `min Σ wᵢxᵢ² s.t. Ax = b` from a
//! constraint set, solve it, and classify the instance.

mod export;
mod ldl;
mod oracle;

pub use export::{read_qp, write_qp, QpFormatError};
pub use ldl::{minimum_degree, Ldl, UpperCsc, ZeroPivot};
pub use oracle::{solve_dense, OracleSolution};

use std::collections::{BTreeMap, HashSet};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::align::ConstraintSet;
use crate::model::{Catalog, Instance, Valuation, VarId, VarKind};

#[derive(Debug, Clone, PartialEq)]
pub struct QpVar {
    pub id: VarId,
    pub kind: VarKind,
    pub weight: f64,
    pub label: String,
}

/// Equality-constrained QP with a diagonal objective.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QpProblem {
    pub vars: Vec<QpVar>,
    /// Sparse rows over indices into `vars`.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
    /// Rows of the form `0 = b` with `b ≠ 0` found while assembling.
    pub contradictions: usize,
}

impl QpProblem {
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `Σ wᵢxᵢ²` with the true weights.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.vars
            .iter()
            .zip(x)
            .map(|(v, xi)| v.weight * xi * xi)
            .sum()
    }

    pub fn feasibility_residual(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, b)| (row.iter().map(|&(c, a)| a * x[c]).sum::<f64>() - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn rhs_norm(&self) -> f64 {
        self.rhs.iter().fold(0.0, |m, b| m.max(b.abs()))
    }

    /// `tol · (1 + ‖b‖∞)`.
    pub fn feasibility_threshold(&self, tol: f64) -> f64 {
        tol * (1.0 + self.rhs_norm())
    }
}

/// Builds the QP. Each equation `lhs = rhs` becomes `Σ aᵢxᵢ = −a₀` scaled so
/// its largest coefficient is 1 with a positive leading coefficient; exact
/// duplicates and `0 = 0` rows are dropped. Weights come from the catalog.
pub fn assemble(phi: &ConstraintSet, catalog: &Catalog) -> QpProblem {
    let mut normalized: Vec<(Vec<(VarId, f64)>, f64)> = Vec::new();
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut contradictions = 0;
    for c in phi.equations() {
        let r = c.residual();
        let b = -r.constant_term();
        if r.is_ground() {
            if b != 0.0 {
                contradictions += 1;
            }
            continue;
        }
        let scale = r.terms().iter().fold(0.0f64, |m, (_, a)| m.max(a.abs()));
        let sign = if r.terms()[0].1 < 0.0 { -1.0 } else { 1.0 };
        let s = sign / scale;
        let terms: Vec<(VarId, f64)> = r.terms().iter().map(|&(v, a)| (v, a * s)).collect();
        let b = if b == 0.0 { 0.0 } else { b * s };
        let fingerprint: Vec<u64> = terms
            .iter()
            .flat_map(|(v, a)| [u64::from(v.0), a.to_bits()])
            .chain([b.to_bits()])
            .collect();
        if seen.insert(fingerprint) {
            normalized.push((terms, b));
        }
    }
    let ids: BTreeMap<VarId, usize> = {
        let mut set: Vec<VarId> = normalized
            .iter()
            .flat_map(|(t, _)| t.iter().map(|(v, _)| *v))
            .collect();
        set.sort();
        set.dedup();
        set.into_iter().enumerate().map(|(i, v)| (v, i)).collect()
    };
    let vars = ids
        .keys()
        .map(|&id| match catalog.info(id) {
            Some(info) => QpVar {
                id,
                kind: info.kind,
                weight: info.weight(),
                label: info.label.to_string(),
            },
            None => QpVar {
                id,
                kind: VarKind::Error,
                weight: VarKind::Error.default_weight(),
                label: String::new(),
            },
        })
        .collect();
    let mut rows = Vec::with_capacity(normalized.len());
    let mut rhs = Vec::with_capacity(normalized.len());
    for (terms, b) in normalized {
        rows.push(terms.into_iter().map(|(v, a)| (ids[&v], a)).collect());
        rhs.push(b);
    }
    QpProblem {
        vars,
        rows,
        rhs,
        contradictions,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Concordant,
    Discordant,
    Infeasible,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Concordant => "concordant",
            Status::Discordant => "discordant",
            Status::Infeasible => "infeasible",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: Status,
    /// `None` when infeasible.
    pub discord: Option<f64>,
    /// `None` when infeasible. Includes values of eliminated Lluns when
    /// produced by [`solve_constraints`].
    pub valuation: Option<Valuation>,
    /// Largest of the scaled stationarity and feasibility residuals.
    pub kkt_residual: f64,
    pub discord_per_variable: Option<f64>,
    pub n_vars: usize,
    pub n_constraints: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub feasibility_tol: f64,
    pub concordance_tol: f64,
    /// Added to the Hessian diagonal of zero-weight variables.
    pub ridge: f64,
    /// Negative diagonal on the constraint block.
    pub dual_reg: f64,
    pub refinement_steps: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feasibility_tol: 1e-6,
            concordance_tol: 1e-9,
            ridge: 1e-10,
            dual_reg: 1e-10,
            refinement_steps: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("KKT system is singular after regularization")]
    SingularSystem,
}

/// Connected components of the variable/row incidence graph.
fn components(p: &QpProblem) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n = p.vars.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for row in &p.rows {
        let first = find(&mut parent, row[0].0);
        for &(c, _) in &row[1..] {
            let r = find(&mut parent, c);
            if r != first {
                parent[r] = first;
            }
        }
    }
    let mut groups: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for v in 0..n {
        let r = find(&mut parent, v);
        groups.entry(r).or_default().0.push(v);
    }
    for (i, row) in p.rows.iter().enumerate() {
        let r = find(&mut parent, row[0].0);
        groups.entry(r).or_default().1.push(i);
    }
    groups.into_values().collect()
}

/// KKT system of one component: `k` carries the dual regularization,
/// `k_true` does not.
struct Block {
    n_primal: usize,
    k: UpperCsc,
    k_true: UpperCsc,
    rhs: Vec<f64>,
}

fn block(p: &QpProblem, vars: &[usize], rows: &[usize], opts: &SolveOptions) -> Block {
    let local: BTreeMap<usize, usize> = vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let n = vars.len();
    let mut reg = Vec::new();
    let mut tru = Vec::new();
    for (i, &v) in vars.iter().enumerate() {
        let w = 2.0 * p.vars[v].weight;
        let ridge = if p.vars[v].weight == 0.0 {
            opts.ridge
        } else {
            0.0
        };
        reg.push((i, i, w + ridge));
        tru.push((i, i, w + ridge));
    }
    let mut rhs = vec![0.0; n + rows.len()];
    for (r, &ri) in rows.iter().enumerate() {
        for &(c, a) in &p.rows[ri] {
            reg.push((local[&c], n + r, a));
            tru.push((local[&c], n + r, a));
        }
        reg.push((n + r, n + r, -opts.dual_reg));
        rhs[n + r] = p.rhs[ri];
    }
    let size = n + rows.len();
    Block {
        n_primal: n,
        k: UpperCsc::from_triplets(size, &reg),
        k_true: UpperCsc::from_triplets(size, &tru),
        rhs,
    }
}

/// Primal variables first, so their pivots are the diagonal weights and the
/// remaining dual block is negative definite; the dual block is ordered by
/// minimum degree on its own pattern.
fn kkt_ordering(b: &Block) -> Vec<usize> {
    let n = b.n_primal;
    let m = b.k.n - n;
    let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in n..b.k.n {
        for p in b.k.colptr[j]..b.k.colptr[j + 1] {
            let i = b.k.rowidx[p];
            if i < n {
                rows_of[i].push(j - n);
            }
        }
    }
    let mut t: Vec<(usize, usize, f64)> = (0..m).map(|r| (r, r, 1.0)).collect();
    for rows in &rows_of {
        for (a, &r) in rows.iter().enumerate() {
            for &s in &rows[a + 1..] {
                t.push((r.min(s), r.max(s), 1.0));
            }
        }
    }
    let dual = minimum_degree(&UpperCsc::from_triplets(m, &t));
    (0..n).chain(dual.into_iter().map(|r| n + r)).collect()
}

fn residual_norm(k: &UpperCsc, x: &[f64], rhs: &[f64]) -> f64 {
    k.mul(x)
        .iter()
        .zip(rhs)
        .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

fn solve_block(b: &Block, opts: &SolveOptions) -> Result<Vec<f64>, SolveError> {
    let scale = 1.0 + b.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let perm = kkt_ordering(b);
    let sparse = Ldl::factor(&b.k.permute(&perm)).ok().map(|f| {
        let apply = |r: &[f64]| -> Vec<f64> {
            let mut y: Vec<f64> = perm.iter().map(|&p| r[p]).collect();
            f.solve_in_place(&mut y);
            let mut out = vec![0.0; r.len()];
            for (k, &p) in perm.iter().enumerate() {
                out[p] = y[k];
            }
            out
        };
        // Iterative refinement against the system without dual regularization.
        let mut x = apply(&b.rhs);
        let mut best = residual_norm(&b.k_true, &x, &b.rhs);
        for _ in 0..opts.refinement_steps {
            if best <= 1e-14 * scale {
                break;
            }
            let r: Vec<f64> = b
                .k_true
                .mul(&x)
                .iter()
                .zip(&b.rhs)
                .map(|(a, c)| c - a)
                .collect();
            let d = apply(&r);
            let cand: Vec<f64> = x.iter().zip(&d).map(|(a, c)| a + c).collect();
            let res = residual_norm(&b.k_true, &cand, &b.rhs);
            if res.is_nan() || res >= best {
                break;
            }
            x = cand;
            best = res;
        }
        (x, best)
    });
    if let Some((x, res)) = &sparse {
        if *res <= 1e-9 * scale {
            return Ok(x.clone());
        }
    }
    let dense = [&b.k_true, &b.k].into_iter().filter_map(|k| {
        dense_lu(k, &b.rhs).map(|x| {
            let r = residual_norm(&b.k_true, &x, &b.rhs);
            (x, r)
        })
    });
    sparse
        .into_iter()
        .chain(dense)
        .filter(|(x, r)| r.is_finite() && x.iter().all(|v| v.is_finite()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(x, _)| x)
        .ok_or(SolveError::SingularSystem)
}

/// Dense LU with partial pivoting.
fn dense_lu(k: &UpperCsc, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = k.n;
    let d = k.to_dense();
    let m = DMatrix::from_fn(n, n, |i, j| d[i][j]);
    let x = m.lu().solve(&DVector::from_column_slice(rhs))?;
    Some(x.iter().copied().collect())
}

/// Solves the QP. Components of the incidence graph are solved separately.
pub fn solve(p: &QpProblem) -> Result<SolveResult, SolveError> {
    solve_with(p, &SolveOptions::default())
}

pub fn solve_with(p: &QpProblem, opts: &SolveOptions) -> Result<SolveResult, SolveError> {
    let n = p.vars.len();
    let mut x = vec![0.0; n];
    let mut lambda = vec![0.0; p.rows.len()];
    for (vars, rows) in components(p) {
        if rows.is_empty() {
            continue;
        }
        let b = block(p, &vars, &rows, opts);
        let sol = solve_block(&b, opts)?;
        for (i, &v) in vars.iter().enumerate() {
            x[v] = sol[i];
        }
        for (r, &ri) in rows.iter().enumerate() {
            lambda[ri] = sol[vars.len() + r];
        }
    }
    Ok(classify(p, x, &lambda, opts))
}

fn classify(p: &QpProblem, x: Vec<f64>, lambda: &[f64], opts: &SolveOptions) -> SolveResult {
    let feas = p.feasibility_residual(&x);
    let mut grad: Vec<f64> = p
        .vars
        .iter()
        .zip(&x)
        .map(|(v, xi)| 2.0 * v.weight * xi)
        .collect();
    for (row, l) in p.rows.iter().zip(lambda) {
        for &(c, a) in row {
            grad[c] += a * l;
        }
    }
    let xnorm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let stat = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let kkt_residual = (stat / (1.0 + xnorm)).max(feas / (1.0 + p.rhs_norm()));
    let base = SolveResult {
        status: Status::Infeasible,
        discord: None,
        valuation: None,
        kkt_residual,
        discord_per_variable: None,
        n_vars: p.vars.len(),
        n_constraints: p.rows.len() + p.contradictions,
    };
    if p.contradictions > 0
        || feas > p.feasibility_threshold(opts.feasibility_tol)
        || !feas.is_finite()
    {
        return base;
    }
    let discord = p.objective(&x);
    let status = if discord <= opts.concordance_tol {
        Status::Concordant
    } else {
        Status::Discordant
    };
    let valuation = Valuation::from_pairs(p.vars.iter().zip(&x).map(|(v, xi)| (v.id, *xi)));
    SolveResult {
        status,
        discord: Some(discord),
        valuation: Some(valuation),
        discord_per_variable: Some(if base.n_vars == 0 {
            0.0
        } else {
            discord / base.n_vars as f64
        }),
        ..base
    }
}

/// Eliminates Lluns, assembles, solves, and fills eliminated Lluns back
/// into the valuation.
pub fn solve_constraints(
    phi: &ConstraintSet,
    catalog: &Catalog,
    opts: &SolveOptions,
) -> Result<SolveResult, SolveError> {
    let reduced = phi.eliminate_lluns(catalog);
    let p = assemble(&reduced, catalog);
    let mut r = solve_with(&p, opts)?;
    if let Some(h) = r.valuation.as_mut() {
        reduced.reconstruct(h);
    }
    Ok(r)
}

/// Status only.
pub fn check_concordance(phi: &ConstraintSet, catalog: &Catalog) -> Result<Status, SolveError> {
    Ok(solve_constraints(phi, catalog, &SolveOptions::default())?.status)
}

/// Grounds every table of `j` under the solved valuation; `None` when the
/// system is infeasible.
pub fn extract_concordant_instance(j: &Instance, result: &SolveResult) -> Option<Instance> {
    result.valuation.as_ref().map(|h| j.apply_valuation(h))
}
