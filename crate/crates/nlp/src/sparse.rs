//! Minimal compressed-column storage and coordinate helpers.

use std::collections::BTreeMap;

/// Square matrix in compressed sparse column form. Row indices within a
/// column are sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub n: usize,
    pub colptr: Vec<usize>,
    pub rowind: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    /// Builds the upper-triangular pattern holding every `(row, col)` pair
    /// (mirrored into `row <= col`) plus the full diagonal. Returns the matrix
    /// with zero values and, for each input pair, its slot in `values`.
    pub fn upper_from_pattern(n: usize, pairs: &[(usize, usize)]) -> (Self, Vec<usize>) {
        let mut cols: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); n];
        for (j, col) in cols.iter_mut().enumerate() {
            col.insert(j, 0);
        }
        for &(r, c) in pairs {
            let (lo, hi) = if r <= c { (r, c) } else { (c, r) };
            cols[hi].insert(lo, 0);
        }
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowind = Vec::new();
        colptr.push(0);
        for col in cols.iter_mut() {
            for (row, slot) in col.iter_mut() {
                *slot = rowind.len();
                rowind.push(*row);
            }
            colptr.push(rowind.len());
        }
        let slots = pairs
            .iter()
            .map(|&(r, c)| {
                let (lo, hi) = if r <= c { (r, c) } else { (c, r) };
                cols[hi][&lo]
            })
            .collect();
        let nnz = rowind.len();
        (
            Self {
                n,
                colptr,
                rowind,
                values: vec![0.0; nnz],
            },
            slots,
        )
    }

    pub fn diagonal_slot(&self, j: usize) -> usize {
        // the diagonal is the last entry of an upper-triangular column
        self.colptr[j + 1] - 1
    }

    /// `y += A x` treating `self` as the upper triangle of a symmetric matrix.
    pub fn sym_upper_mul_add(&self, x: &[f64], y: &mut [f64]) {
        for j in 0..self.n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let i = self.rowind[p];
                let v = self.values[p];
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
    }
}

/// `y += J x` for a coordinate-format matrix.
pub fn coo_mul_add(pattern: &[(usize, usize)], vals: &[f64], x: &[f64], y: &mut [f64]) {
    for (&(r, c), v) in pattern.iter().zip(vals) {
        y[r] += v * x[c];
    }
}

/// `y += J^T x` for a coordinate-format matrix.
pub fn coo_tmul_add(pattern: &[(usize, usize)], vals: &[f64], x: &[f64], y: &mut [f64]) {
    for (&(r, c), v) in pattern.iter().zip(vals) {
        y[c] += v * x[r];
    }
}

/// `y += H x` where the coordinate pattern holds the lower triangle of a
/// symmetric matrix.
pub fn coo_sym_lower_mul_add(pattern: &[(usize, usize)], vals: &[f64], x: &[f64], y: &mut [f64]) {
    for (&(r, c), v) in pattern.iter().zip(vals) {
        y[r] += v * x[c];
        if r != c {
            y[c] += v * x[r];
        }
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
}

pub fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|a| a.abs()).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
