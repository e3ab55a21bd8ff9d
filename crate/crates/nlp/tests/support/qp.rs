//! Quadratic programs with known KKT points, shared by the oracle tests.
#![allow(dead_code)]

use hiopf_nlp::NlpProblem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// min ½xᵀQx + cᵀx  s.t. Ax = b, Gx <= g, l <= x <= u (dense data).
#[derive(Clone)]
pub struct Qp {
    pub q: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub gv: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Qp {
    pub fn n(&self) -> usize {
        self.c.len()
    }
}

fn dense_pattern(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect()
}

impl NlpProblem for Qp {
    fn num_vars(&self) -> usize {
        self.n()
    }
    fn num_eq(&self) -> usize {
        self.b.len()
    }
    fn num_ineq(&self) -> usize {
        self.gv.len()
    }
    fn bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        lower.copy_from_slice(&self.lower);
        upper.copy_from_slice(&self.upper);
    }
    fn initial_point(&self, x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
    }
    fn objective(&self, x: &[f64]) -> f64 {
        let n = self.n();
        let mut f = 0.0;
        for i in 0..n {
            f += self.c[i] * x[i];
            for j in 0..n {
                f += 0.5 * x[i] * self.q[i][j] * x[j];
            }
        }
        f
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        for i in 0..self.n() {
            grad[i] = self.c[i] + self.q[i].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    fn eq_values(&self, x: &[f64], out: &mut [f64]) {
        for (r, row) in self.a.iter().enumerate() {
            out[r] = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - self.b[r];
        }
    }
    fn ineq_values(&self, x: &[f64], out: &mut [f64]) {
        for (r, row) in self.g.iter().enumerate() {
            out[r] = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - self.gv[r];
        }
    }
    fn eq_jacobian_pattern(&self) -> Vec<(usize, usize)> {
        dense_pattern(self.b.len(), self.n())
    }
    fn eq_jacobian_values(&self, _x: &[f64], vals: &mut [f64]) {
        for (v, a) in vals.iter_mut().zip(self.a.iter().flatten()) {
            *v = *a;
        }
    }
    fn ineq_jacobian_pattern(&self) -> Vec<(usize, usize)> {
        dense_pattern(self.gv.len(), self.n())
    }
    fn ineq_jacobian_values(&self, _x: &[f64], vals: &mut [f64]) {
        for (v, a) in vals.iter_mut().zip(self.g.iter().flatten()) {
            *v = *a;
        }
    }
    fn hessian_pattern(&self) -> Vec<(usize, usize)> {
        (0..self.n()).flat_map(|i| (0..=i).map(move |j| (i, j))).collect()
    }
    fn hessian_values(&self, _x: &[f64], obj_factor: f64, _l: &[f64], _nu: &[f64], vals: &mut [f64]) {
        let mut k = 0;
        for i in 0..self.n() {
            for j in 0..=i {
                vals[k] = obj_factor * self.q[i][j];
                k += 1;
            }
        }
    }
}

pub fn unconstrained(n: usize) -> Qp {
    Qp {
        q: vec![vec![0.0; n]; n],
        c: vec![0.0; n],
        a: vec![],
        b: vec![],
        g: vec![],
        gv: vec![],
        lower: vec![f64::NEG_INFINITY; n],
        upper: vec![f64::INFINITY; n],
    }
}

pub fn equality_qp() -> Qp {
    let mut p = unconstrained(2);
    p.q = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    p.a = vec![vec![1.0, 1.0]];
    p.b = vec![1.0];
    p
}

/// Random strictly convex QP whose unique KKT point is built in.
pub struct KnownQp {
    pub qp: Qp,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub nu: Vec<f64>,
    pub zl: Vec<f64>,
    pub zu: Vec<f64>,
}

pub fn random_qp(seed: u64) -> KnownQp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=20);
    let m = rng.gen_range(0..=n / 3);
    let p = rng.gen_range(0..=n / 3);
    let sym = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    };
    let r = sym(n, n, &mut rng);
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            q[i][j] = (0..n).map(|k| r[k][i] * r[k][j]).sum::<f64>() / n as f64;
        }
        q[i][i] += 0.5;
    }
    let a = sym(m, n, &mut rng);
    let g = sym(p, n, &mut rng);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let lambda: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let b: Vec<f64> = a.iter().map(|row| row.iter().zip(&x).map(|(u, v)| u * v).sum()).collect();
    let mut nu = vec![0.0; p];
    let mut gv = vec![0.0; p];
    for j in 0..p {
        let gx: f64 = g[j].iter().zip(&x).map(|(u, v)| u * v).sum();
        if rng.gen_bool(0.5) {
            nu[j] = rng.gen_range(0.5..3.0);
            gv[j] = gx;
        } else {
            gv[j] = gx + rng.gen_range(0.5..2.0);
        }
    }
    // at most n/3 active bounds keeps the active set independent
    let mut lower = vec![f64::NEG_INFINITY; n];
    let mut upper = vec![f64::INFINITY; n];
    let mut zl = vec![0.0; n];
    let mut zu = vec![0.0; n];
    for i in 0..n {
        match rng.gen_range(0..6) {
            0 if i % 3 == 0 => {
                lower[i] = x[i];
                upper[i] = x[i] + rng.gen_range(1.0..3.0);
                zl[i] = rng.gen_range(0.5..3.0);
            }
            1 if i % 3 == 0 => {
                upper[i] = x[i];
                zu[i] = rng.gen_range(0.5..3.0);
            }
            2 => {
                lower[i] = x[i] - rng.gen_range(0.5..2.0);
                upper[i] = x[i] + rng.gen_range(0.5..2.0);
            }
            3 => lower[i] = x[i] - rng.gen_range(0.5..2.0),
            _ => {}
        }
    }
    let mut c = vec![0.0; n];
    for i in 0..n {
        let mut v: f64 = q[i].iter().zip(&x).map(|(u, w)| u * w).sum();
        v += (0..m).map(|r| a[r][i] * lambda[r]).sum::<f64>();
        v += (0..p).map(|j| g[j][i] * nu[j]).sum::<f64>();
        v += zu[i] - zl[i];
        c[i] = -v;
    }
    KnownQp {
        qp: Qp {
            q,
            c,
            a,
            b,
            g,
            gv,
            lower,
            upper,
        },
        x,
        lambda,
        nu,
        zl,
        zu,
    }
}
