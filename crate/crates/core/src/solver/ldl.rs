//! Sparse LDLᵀ factorization of symmetric quasi-definite matrices with a
//! minimum-degree fill-reducing ordering.

use std::collections::{BTreeSet, HashSet};

const NONE: usize = usize::MAX;

/// Symmetric matrix stored as its upper triangle, column-compressed.
#[derive(Debug, Clone)]
pub struct UpperCsc {
    pub n: usize,
    pub colptr: Vec<usize>,
    pub rowidx: Vec<usize>,
    pub values: Vec<f64>,
}

impl UpperCsc {
    /// Builds from `(row, col, value)` triplets with `row ≤ col`; duplicates
    /// are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            debug_assert!(i <= j);
            cols[j].push((i, v));
        }
        let mut colptr = vec![0];
        let mut rowidx = Vec::new();
        let mut values = Vec::new();
        for mut col in cols {
            col.sort_by_key(|(i, _)| *i);
            let mut last = NONE;
            for (i, v) in col {
                if i == last {
                    *values.last_mut().unwrap() += v;
                } else {
                    rowidx.push(i);
                    values.push(v);
                    last = i;
                }
            }
            colptr.push(rowidx.len());
        }
        UpperCsc {
            n,
            colptr,
            rowidx,
            values,
        }
    }

    /// `y = A x` for the full symmetric matrix.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (j, w) in self.colptr.windows(2).enumerate() {
            for p in w[0]..w[1] {
                let i = self.rowidx[p];
                let v = self.values[p];
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// `P A Pᵀ` where `perm[k]` is the original index placed at `k`.
    pub fn permute(&self, perm: &[usize]) -> UpperCsc {
        let mut pinv = vec![0; self.n];
        for (k, &p) in perm.iter().enumerate() {
            pinv[p] = k;
        }
        let mut t = Vec::with_capacity(self.values.len());
        for j in 0..self.n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let (a, b) = (pinv[self.rowidx[p]], pinv[j]);
                t.push((a.min(b), a.max(b), self.values[p]));
            }
        }
        UpperCsc::from_triplets(self.n, &t)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (j, w) in self.colptr.windows(2).enumerate() {
            for p in w[0]..w[1] {
                let i = self.rowidx[p];
                d[i][j] = self.values[p];
                d[j][i] = self.values[p];
            }
        }
        d
    }
}

/// Greedy minimum-degree ordering on the graph of off-diagonal nonzeros.
/// Ties go to the lowest index.
pub fn minimum_degree(a: &UpperCsc) -> Vec<usize> {
    let n = a.n;
    let mut adj: Vec<HashSet<usize>> = vec![HashSet::new(); n];
    for j in 0..n {
        for p in a.colptr[j]..a.colptr[j + 1] {
            let i = a.rowidx[p];
            if i != j {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    }
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (adj[v].len(), v)).collect();
    let mut order = Vec::with_capacity(n);
    while let Some((_, v)) = queue.pop_first() {
        order.push(v);
        let nbrs: Vec<usize> = adj[v].drain().collect();
        for &u in &nbrs {
            queue.remove(&(adj[u].len(), u));
            adj[u].remove(&v);
            for &w in &nbrs {
                if w != u {
                    adj[u].insert(w);
                }
            }
            queue.insert((adj[u].len(), u));
        }
    }
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroPivot(pub usize);

/// `A = L D Lᵀ` with unit lower-triangular `L` stored by columns.
#[derive(Debug, Clone)]
pub struct Ldl {
    n: usize,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    dinv: Vec<f64>,
}

impl Ldl {
    pub fn factor(a: &UpperCsc) -> Result<Ldl, ZeroPivot> {
        let n = a.n;
        // elimination tree and column counts
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for p in a.colptr[j]..a.colptr[j + 1] {
                let mut i = a.rowidx[p];
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let mut li = vec![0; lp[n]];
        let mut lx = vec![0.0; lp[n]];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        let mut next = lp[..n].to_vec();
        let mut yvals = vec![0.0; n];
        let mut marked = vec![false; n];
        let mut yidx: Vec<usize> = Vec::with_capacity(n);
        let mut buf: Vec<usize> = Vec::with_capacity(n);

        for k in 0..n {
            yidx.clear();
            for p in a.colptr[k]..a.colptr[k + 1] {
                let b = a.rowidx[p];
                if b == k {
                    d[k] = a.values[p];
                    continue;
                }
                yvals[b] = a.values[p];
                if marked[b] {
                    continue;
                }
                buf.clear();
                let mut i = b;
                while i != NONE && i < k && !marked[i] {
                    marked[i] = true;
                    buf.push(i);
                    i = etree[i];
                }
                yidx.extend(buf.iter().rev());
            }
            for &c in yidx.iter().rev() {
                let yc = yvals[c];
                for q in lp[c]..next[c] {
                    yvals[li[q]] -= lx[q] * yc;
                }
                let slot = next[c];
                li[slot] = k;
                lx[slot] = yc * dinv[c];
                d[k] -= yc * lx[slot];
                next[c] += 1;
                yvals[c] = 0.0;
                marked[c] = false;
            }
            if d[k] == 0.0 || !d[k].is_finite() {
                return Err(ZeroPivot(k));
            }
            dinv[k] = 1.0 / d[k];
        }
        Ok(Ldl {
            n,
            lp,
            li,
            lx,
            dinv,
        })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        for i in 0..self.n {
            let xi = x[i];
            for q in self.lp[i]..self.lp[i + 1] {
                x[self.li[q]] -= self.lx[q] * xi;
            }
        }
        for (xi, d) in x.iter_mut().zip(&self.dinv) {
            *xi *= d;
        }
        for i in (0..self.n).rev() {
            let mut s = x[i];
            for q in self.lp[i]..self.lp[i + 1] {
                s -= self.lx[q] * x[self.li[q]];
            }
            x[i] = s;
        }
    }

    pub fn nnz(&self) -> usize {
        self.lx.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quasi_definite(
        n: usize,
        m: usize,
        entries: &[(usize, usize, f64)],
        diag: &[f64],
    ) -> UpperCsc {
        let mut t: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, diag[i])).collect();
        for r in 0..m {
            t.push((n + r, n + r, -1e-3));
        }
        for &(r, c, v) in entries {
            t.push((c, n + r, v));
        }
        UpperCsc::from_triplets(n + m, &t)
    }

    proptest! {
        #[test]
        fn solves_quasi_definite_systems(
            diag in prop::collection::vec(0.1f64..5.0, 6),
            entries in prop::collection::vec((0usize..3, 0usize..6, -3.0f64..3.0), 1..12),
            rhs in prop::collection::vec(-10.0f64..10.0, 9),
        ) {
            let a = quasi_definite(6, 3, &entries, &diag);
            let perm = minimum_degree(&a);
            let pa = a.permute(&perm);
            let f = Ldl::factor(&pa).unwrap();
            let mut x: Vec<f64> = perm.iter().map(|&p| rhs[p]).collect();
            f.solve_in_place(&mut x);
            let mut sol = vec![0.0; 9];
            for (k, &p) in perm.iter().enumerate() {
                sol[p] = x[k];
            }
            let back = a.mul(&sol);
            for (u, v) in back.iter().zip(&rhs) {
                prop_assert!((u - v).abs() <= 1e-8 * (1.0 + v.abs()) * 1e3);
            }
        }
    }

    #[test]
    fn ordering_is_a_permutation() {
        let a = UpperCsc::from_triplets(
            4,
            &[
                (0, 0, 1.0),
                (0, 3, 1.0),
                (1, 3, 1.0),
                (2, 3, 1.0),
                (3, 3, 1.0),
            ],
        );
        let mut p = minimum_degree(&a);
        assert_eq!(p[3], 3);
        p.sort();
        assert_eq!(p, vec![0, 1, 2, 3]);
    }

    #[test]
    fn zero_pivot_is_reported() {
        let a = UpperCsc::from_triplets(2, &[(0, 0, 0.0), (1, 1, 1.0)]);
        assert_eq!(Ldl::factor(&a).unwrap_err(), ZeroPivot(0));
    }
}
