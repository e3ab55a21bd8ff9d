//! Sparse `LDL^T` factorization without pivoting for symmetric
//! quasi-definite and inertia-corrected KKT matrices.
//!
//! The symbolic phase fixes a fill-reducing permutation and the elimination
//! tree once per sparsity pattern; numeric factorizations then reuse it. The
//! number of positive and negative pivots is reported so callers can detect
//! wrong inertia and regularize.

use crate::ordering::{invert, minimum_degree};
use crate::sparse::CscMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LdlError {
    #[error("matrix is not upper triangular (entry ({row}, {col}))")]
    NotUpperTriangular { row: usize, col: usize },
    #[error("zero pivot at position {0}")]
    ZeroPivot(usize),
    #[error("pattern does not match the symbolic analysis")]
    PatternMismatch,
}

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct LdlSymbolic {
    n: usize,
    perm: Vec<usize>,
    /// Source pattern (upper triangle of the unpermuted matrix).
    colptr: Vec<usize>,
    rowind: Vec<usize>,
    /// Permuted upper-triangular pattern.
    pcolptr: Vec<usize>,
    prowind: Vec<usize>,
    /// `map[p]` is the slot in the permuted pattern of source slot `p`.
    map: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LdlFactor {
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    positive: usize,
    negative: usize,
}

impl LdlSymbolic {
    /// `a` must hold the upper triangle including the full diagonal.
    pub fn analyze(a: &CscMatrix, class: &[u8]) -> Result<Self, LdlError> {
        let n = a.n;
        let mut pairs = Vec::with_capacity(a.rowind.len());
        for j in 0..n {
            for p in a.colptr[j]..a.colptr[j + 1] {
                let i = a.rowind[p];
                if i > j {
                    return Err(LdlError::NotUpperTriangular { row: i, col: j });
                }
                pairs.push((i, j));
            }
        }
        let perm = minimum_degree(n, &pairs, class);
        let iperm = invert(&perm);

        // permuted upper pattern, keeping track of where each source entry lands
        let mut counts = vec![0usize; n];
        let mut entries = Vec::with_capacity(pairs.len());
        for (src, &(i, j)) in pairs.iter().enumerate() {
            let (pi, pj) = (iperm[i], iperm[j]);
            let (r, c) = if pi <= pj { (pi, pj) } else { (pj, pi) };
            counts[c] += 1;
            entries.push((c, r, src));
        }
        entries.sort_unstable();
        let mut pcolptr = vec![0usize; n + 1];
        for j in 0..n {
            pcolptr[j + 1] = pcolptr[j] + counts[j];
        }
        let mut prowind = Vec::with_capacity(entries.len());
        let mut map = vec![0usize; entries.len()];
        for (slot, &(_, r, src)) in entries.iter().enumerate() {
            prowind.push(r);
            map[src] = slot;
        }

        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &row in &prowind[pcolptr[j]..pcolptr[j + 1]] {
                let mut i = row;
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
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        Ok(Self {
            n,
            perm,
            colptr: a.colptr.clone(),
            rowind: a.rowind.clone(),
            pcolptr,
            prowind,
            map,
            etree,
            lp,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// True when `a` has exactly the pattern this analysis was built for.
    pub fn matches(&self, a: &CscMatrix) -> bool {
        a.n == self.n && a.colptr == self.colptr && a.rowind == self.rowind
    }

    /// Numeric factorization. Pivots with magnitude at or below
    /// `pivot_tol` are reported as [`LdlError::ZeroPivot`].
    pub fn factor(&self, a: &CscMatrix, pivot_tol: f64) -> Result<LdlFactor, LdlError> {
        if !self.matches(a) {
            return Err(LdlError::PatternMismatch);
        }
        let n = self.n;
        let mut pvals = vec![0.0; self.prowind.len()];
        for (src, &v) in a.values.iter().enumerate() {
            pvals[self.map[src]] += v;
        }

        let nnz_l = self.lp[n];
        let mut li = vec![0usize; nnz_l];
        let mut lx = vec![0.0; nnz_l];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        let mut next = self.lp[..n].to_vec();
        let mut y_vals = vec![0.0; n];
        let mut y_used = vec![false; n];
        let mut y_idx: Vec<usize> = Vec::with_capacity(n);
        let mut buffer: Vec<usize> = Vec::with_capacity(n);
        let (mut positive, mut negative) = (0usize, 0usize);

        for k in 0..n {
            y_idx.clear();
            for p in self.pcolptr[k]..self.pcolptr[k + 1] {
                let b = self.prowind[p];
                if b == k {
                    d[k] = pvals[p];
                    continue;
                }
                y_vals[b] = pvals[p];
                if !y_used[b] {
                    y_used[b] = true;
                    buffer.clear();
                    buffer.push(b);
                    let mut up = self.etree[b];
                    while up != NONE && up < k {
                        if y_used[up] {
                            break;
                        }
                        y_used[up] = true;
                        buffer.push(up);
                        up = self.etree[up];
                    }
                    y_idx.extend(buffer.iter().rev());
                }
            }
            for t in (0..y_idx.len()).rev() {
                let c = y_idx[t];
                let yc = y_vals[c];
                let end = next[c];
                for q in self.lp[c]..end {
                    y_vals[li[q]] -= lx[q] * yc;
                }
                li[end] = k;
                lx[end] = yc * dinv[c];
                d[k] -= yc * lx[end];
                next[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            if !(d[k].abs() > pivot_tol) {
                return Err(LdlError::ZeroPivot(k));
            }
            if d[k] > 0.0 {
                positive += 1;
            } else {
                negative += 1;
            }
            dinv[k] = 1.0 / d[k];
        }
        Ok(LdlFactor {
            perm: self.perm.clone(),
            lp: self.lp.clone(),
            li,
            lx,
            d,
            dinv,
            positive,
            negative,
        })
    }
}

impl LdlFactor {
    /// `(positive pivots, negative pivots)`.
    pub fn inertia(&self) -> (usize, usize) {
        (self.positive, self.negative)
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let xi = x[i];
            for q in self.lp[i]..self.lp[i + 1] {
                x[self.li[q]] -= self.lx[q] * xi;
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for q in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[q] * x[self.li[q]];
            }
            x[i] = acc;
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }
}
