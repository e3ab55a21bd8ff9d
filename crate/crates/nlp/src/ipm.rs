//! Primal-dual interior-point method.
//!
//! Inequalities `h(x) <= 0` get slacks `s > 0` with `h(x) + s = 0`; variable
//! bounds are kept as barrier terms. Each iteration solves the condensed
//! Newton system
//!
//! ```text
//! [ W + Σx + Jhᵀ Σs Jh + δw I    Jcᵀ  ] [dx]   [ -∇φμ ]
//! [ Jc                          -δc I ] [dλ] = [ -c   ]
//! ```
//!
//! where `δw` is raised until the matrix has inertia `(n, m, 0)`. Steps are
//! cut back by fraction-to-boundary rules and accepted by backtracking on an
//! ℓ1 merit function, with second-order corrections on the first trial.

use crate::ldl::{LdlError, LdlFactor, LdlSymbolic};
use crate::problem::NlpProblem;
use crate::sparse::{coo_mul_add, coo_tmul_add, dot, norm1, norm2, norm_inf, CscMatrix};
use crate::NlpError;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Tolerance on the (scaled) Euclidean KKT residual norms.
    pub tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    /// Lower limit of the fraction-to-boundary factor τ.
    pub tau_min: f64,
    /// Relative distance initial points are pushed inside their bounds.
    pub bound_push: f64,
    /// Same as `bound_push` for warm starts that carry multipliers.
    pub warm_bound_push: f64,
    /// Monotone barrier reduction factor (μ ← μ · factor).
    pub mu_decrease: f64,
    /// Least-squares multiplier estimates larger than this are discarded.
    pub lambda_init_max: f64,
    pub refinement_steps: usize,
    /// The objective is scaled down so its gradient at the starting point
    /// is at most this large in the max norm.
    pub max_gradient: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            mu_init: 0.1,
            tau_min: 0.99,
            bound_push: 1e-2,
            warm_bound_push: 1e-9,
            mu_decrease: 0.2,
            lambda_init_max: 1e8,
            refinement_steps: 3,
            max_gradient: 100.0,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<(), NlpError> {
        if !(self.tol > 0.0) {
            return Err(NlpError::InvalidOption(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.mu_init > 0.0) {
            return Err(NlpError::InvalidOption(format!("mu_init must be positive, got {}", self.mu_init)));
        }
        if !(self.tau_min > 0.0 && self.tau_min < 1.0) {
            return Err(NlpError::InvalidOption(format!("tau_min must lie in (0, 1), got {}", self.tau_min)));
        }
        if !(self.mu_decrease > 0.0 && self.mu_decrease < 1.0) {
            return Err(NlpError::InvalidOption(format!(
                "mu_decrease must lie in (0, 1), got {}",
                self.mu_decrease
            )));
        }
        if !(self.bound_push > 0.0 && self.warm_bound_push > 0.0) {
            return Err(NlpError::InvalidOption("bound pushes must be positive".into()));
        }
        Ok(())
    }
}

/// Starting point, optionally with multipliers from an earlier solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub lambda: Option<Vec<f64>>,
    pub nu: Option<Vec<f64>>,
    pub z_lower: Option<Vec<f64>>,
    pub z_upper: Option<Vec<f64>>,
}

impl WarmStart {
    pub fn primal(x: Vec<f64>) -> Self {
        Self {
            x,
            ..Self::default()
        }
    }

    /// Full primal-dual warm start from an earlier solution.
    pub fn from_solution(sol: &PrimalDualSolution) -> Self {
        Self {
            x: sol.x.clone(),
            lambda: Some(sol.lambda.clone()),
            nu: Some(sol.nu.clone()),
            z_lower: Some(sol.z_lower.clone()),
            z_upper: Some(sol.z_upper.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    /// The line search could not make progress.
    InfeasibleStep,
    /// The Newton system stayed singular after regularization.
    NumericalFailure,
}

/// Euclidean norms of the KKT residual blocks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktNorms {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualSolution {
    pub x: Vec<f64>,
    /// Equality multipliers.
    pub lambda: Vec<f64>,
    /// Inequality multipliers (`>= 0`).
    pub nu: Vec<f64>,
    /// Lower-bound multipliers (`>= 0`, zero where the bound is absent).
    pub z_lower: Vec<f64>,
    /// Upper-bound multipliers (`>= 0`, zero where the bound is absent).
    pub z_upper: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt: KktNorms,
    /// Stationarity level the termination test accepted (`tol` times the
    /// multiplier scaling in effect at exit, in unscaled objective units).
    pub stationarity_tolerance: f64,
}

impl PrimalDualSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Symbolic factorization reused across solves of problems sharing one
/// sparsity structure.
#[derive(Debug, Clone, Default)]
pub struct SolverCache {
    symbolic: Option<LdlSymbolic>,
}

impl SolverCache {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Solves from the problem's own initial point.
pub fn solve<P: NlpProblem + ?Sized>(
    problem: &P,
    options: &SolverOptions,
) -> Result<PrimalDualSolution, NlpError> {
    solve_warm(problem, options, None, &mut SolverCache::new())
}

/// KKT residual norms of `sol` for `problem`: stationarity
/// `∇f + Jcᵀλ + Jhᵀν − z_l + z_u`, feasibility `(c, max(h, 0), bound
/// violations)` and complementarity `(ν∘h, z_l∘(x−l), z_u∘(u−x))`.
pub fn kkt_residual<P: NlpProblem + ?Sized>(problem: &P, sol: &PrimalDualSolution) -> KktNorms {
    let n = problem.num_vars();
    let m = problem.num_eq();
    let p = problem.num_ineq();
    let x = &sol.x;
    let mut lower = vec![f64::NEG_INFINITY; n];
    let mut upper = vec![f64::INFINITY; n];
    problem.bounds(&mut lower, &mut upper);

    let mut stat = vec![0.0; n];
    problem.gradient(x, &mut stat);
    let jc_pat = problem.eq_jacobian_pattern();
    let mut jc = vec![0.0; jc_pat.len()];
    problem.eq_jacobian_values(x, &mut jc);
    coo_tmul_add(&jc_pat, &jc, &sol.lambda, &mut stat);
    let jh_pat = problem.ineq_jacobian_pattern();
    let mut jh = vec![0.0; jh_pat.len()];
    problem.ineq_jacobian_values(x, &mut jh);
    coo_tmul_add(&jh_pat, &jh, &sol.nu, &mut stat);
    for i in 0..n {
        stat[i] += sol.z_upper[i] - sol.z_lower[i];
    }

    let mut feas = vec![0.0; m];
    problem.eq_values(x, &mut feas);
    let mut h = vec![0.0; p];
    problem.ineq_values(x, &mut h);
    feas.extend(h.iter().map(|v| v.max(0.0)));
    feas.extend((0..n).map(|i| (lower[i] - x[i]).max(0.0) + (x[i] - upper[i]).max(0.0)));

    let mut comp: Vec<f64> = h.iter().zip(&sol.nu).map(|(hv, nv)| hv * nv).collect();
    for i in 0..n {
        if lower[i].is_finite() {
            comp.push(sol.z_lower[i] * (x[i] - lower[i]));
        }
        if upper[i].is_finite() {
            comp.push(sol.z_upper[i] * (upper[i] - x[i]));
        }
    }
    KktNorms {
        stationarity: norm2(&stat),
        feasibility: norm2(&feas),
        complementarity: norm2(&comp),
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIterations => "max-iter",
            SolveStatus::InfeasibleStep => "infeasible-step",
            SolveStatus::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

const MULTIPLIER_SAFEGUARD: f64 = 1e10;
const ARMIJO_ETA: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
const MAX_SOC: usize = 4;
const MAX_STALLED_STEPS: usize = 5;

/// Fixed problem structure and the KKT assembly plan derived from it.
struct Layout {
    n: usize,
    m: usize,
    p: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    has_l: Vec<bool>,
    has_u: Vec<bool>,
    jc_pat: Vec<(usize, usize)>,
    jh_pat: Vec<(usize, usize)>,
    hess_pat: Vec<(usize, usize)>,
    kkt: CscMatrix,
    hess_slots: Vec<usize>,
    jc_slots: Vec<usize>,
    /// `(slot, jh index a, jh index b, row, multiplicity)` for `Jhᵀ Σs Jh`.
    jhtj: Vec<(usize, usize, usize, usize, f64)>,
}

impl Layout {
    fn new<P: NlpProblem + ?Sized>(problem: &P) -> Result<Self, NlpError> {
        let n = problem.num_vars();
        let m = problem.num_eq();
        let p = problem.num_ineq();
        let mut lower = vec![f64::NEG_INFINITY; n];
        let mut upper = vec![f64::INFINITY; n];
        problem.bounds(&mut lower, &mut upper);
        for i in 0..n {
            if lower[i] > upper[i] || lower[i].is_nan() || upper[i].is_nan() {
                return Err(NlpError::InvalidBounds {
                    index: i,
                    lower: lower[i],
                    upper: upper[i],
                });
            }
            if lower[i] == upper[i] {
                // open up fixed variables so the barrier stays defined
                let gap = 1e-8 * lower[i].abs().max(1.0);
                lower[i] -= gap;
                upper[i] += gap;
            }
        }
        let has_l = lower.iter().map(|v| v.is_finite()).collect();
        let has_u = upper.iter().map(|v| v.is_finite()).collect();
        let jc_pat = problem.eq_jacobian_pattern();
        let jh_pat = problem.ineq_jacobian_pattern();
        let hess_pat = problem.hessian_pattern();
        for &(r, c) in &jc_pat {
            if r >= m || c >= n {
                return Err(NlpError::Dimension(format!("equality Jacobian entry ({r}, {c}) out of range")));
            }
        }
        for &(r, c) in &jh_pat {
            if r >= p || c >= n {
                return Err(NlpError::Dimension(format!("inequality Jacobian entry ({r}, {c}) out of range")));
            }
        }
        for &(r, c) in &hess_pat {
            if r >= n || c >= n {
                return Err(NlpError::Dimension(format!("Hessian entry ({r}, {c}) out of range")));
            }
        }

        let mut by_row: Vec<Vec<usize>> = vec![Vec::new(); p];
        for (k, &(r, _)) in jh_pat.iter().enumerate() {
            by_row[r].push(k);
        }
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        pairs.extend_from_slice(&hess_pat);
        let jc_start = pairs.len();
        pairs.extend(jc_pat.iter().map(|&(r, c)| (n + r, c)));
        let jhtj_start = pairs.len();
        let mut jhtj_terms = Vec::new();
        for (r, idx) in by_row.iter().enumerate() {
            for (ai, &a) in idx.iter().enumerate() {
                for &b in &idx[ai..] {
                    let (ca, cb) = (jh_pat[a].1, jh_pat[b].1);
                    let mult = if a != b && ca == cb { 2.0 } else { 1.0 };
                    pairs.push((ca, cb));
                    jhtj_terms.push((a, b, r, mult));
                }
            }
        }
        let (kkt, slots) = CscMatrix::upper_from_pattern(n + m, &pairs);
        let hess_slots = slots[..jc_start].to_vec();
        let jc_slots = slots[jc_start..jhtj_start].to_vec();
        let jhtj = jhtj_terms
            .into_iter()
            .zip(&slots[jhtj_start..])
            .map(|((a, b, r, mult), &slot)| (slot, a, b, r, mult))
            .collect();
        Ok(Self {
            n,
            m,
            p,
            lower,
            upper,
            has_l,
            has_u,
            jc_pat,
            jh_pat,
            hess_pat,
            kkt,
            hess_slots,
            jc_slots,
            jhtj,
        })
    }

    fn class(&self) -> Vec<u8> {
        (0..self.n + self.m).map(|i| u8::from(i >= self.n)).collect()
    }
}

/// Function values and first derivatives at one point.
struct Eval {
    f: f64,
    grad: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
    jc: Vec<f64>,
    jh: Vec<f64>,
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|a| a.is_finite())
}

fn evaluate<P: NlpProblem + ?Sized>(problem: &P, lay: &Layout, x: &[f64]) -> Eval {
    let mut grad = vec![0.0; lay.n];
    problem.gradient(x, &mut grad);
    let mut c = vec![0.0; lay.m];
    problem.eq_values(x, &mut c);
    let mut h = vec![0.0; lay.p];
    problem.ineq_values(x, &mut h);
    let mut jc = vec![0.0; lay.jc_pat.len()];
    problem.eq_jacobian_values(x, &mut jc);
    let mut jh = vec![0.0; lay.jh_pat.len()];
    problem.ineq_jacobian_values(x, &mut jh);
    Eval {
        f: problem.objective(x),
        grad,
        c,
        h,
        jc,
        jh,
    }
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    s: Vec<f64>,
    lambda: Vec<f64>,
    nu: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
}

struct Direction {
    dx: Vec<f64>,
    ds: Vec<f64>,
    dlambda: Vec<f64>,
    dnu: Vec<f64>,
    dzl: Vec<f64>,
    dzu: Vec<f64>,
}

/// Optimality errors of the barrier problem for a given μ (μ = 0 gives the
/// errors of the original problem).
#[derive(Debug)]
struct Errors {
    stationarity: f64,
    feasibility: f64,
    complementarity: f64,
    s_d: f64,
    s_c: f64,
}

impl Errors {
    fn overall(&self) -> f64 {
        (self.stationarity / self.s_d)
            .max(self.feasibility)
            .max(self.complementarity / self.s_c)
    }
}

fn errors(lay: &Layout, ev: &Eval, it: &Iterate, mu: f64) -> Errors {
    let n = lay.n;
    let mut rd = ev.grad.clone();
    coo_tmul_add(&lay.jc_pat, &ev.jc, &it.lambda, &mut rd);
    coo_tmul_add(&lay.jh_pat, &ev.jh, &it.nu, &mut rd);
    let mut comp_sq = 0.0;
    let mut mult_sum = norm1(&it.lambda) + norm1(&it.nu);
    let mut bound_sum = norm1(&it.nu);
    let mut count = lay.m + lay.p;
    let mut bcount = lay.p;
    for i in 0..n {
        if lay.has_l[i] {
            rd[i] -= it.zl[i];
            let r = it.zl[i] * (it.x[i] - lay.lower[i]) - mu;
            comp_sq += r * r;
            mult_sum += it.zl[i];
            bound_sum += it.zl[i];
            count += 1;
            bcount += 1;
        }
        if lay.has_u[i] {
            rd[i] += it.zu[i];
            let r = it.zu[i] * (lay.upper[i] - it.x[i]) - mu;
            comp_sq += r * r;
            mult_sum += it.zu[i];
            bound_sum += it.zu[i];
            count += 1;
            bcount += 1;
        }
    }
    for j in 0..lay.p {
        let r = it.nu[j] * it.s[j] - mu;
        comp_sq += r * r;
    }
    let mut feas_sq: f64 = ev.c.iter().map(|v| v * v).sum();
    feas_sq += ev.h.iter().zip(&it.s).map(|(h, s)| (h + s) * (h + s)).sum::<f64>();
    const S_MAX: f64 = 100.0;
    let s_d = if count > 0 {
        (mult_sum / count as f64).max(S_MAX) / S_MAX
    } else {
        1.0
    };
    let s_c = if bcount > 0 {
        (bound_sum / bcount as f64).max(S_MAX) / S_MAX
    } else {
        1.0
    };
    Errors {
        stationarity: norm2(&rd),
        feasibility: feas_sq.sqrt(),
        complementarity: comp_sq.sqrt(),
        s_d,
        s_c,
    }
}

fn barrier_value(lay: &Layout, f: f64, x: &[f64], s: &[f64], mu: f64) -> f64 {
    let mut logs = 0.0;
    for i in 0..lay.n {
        if lay.has_l[i] {
            logs += (x[i] - lay.lower[i]).ln();
        }
        if lay.has_u[i] {
            logs += (lay.upper[i] - x[i]).ln();
        }
    }
    logs += s.iter().map(|v| v.ln()).sum::<f64>();
    f - mu * logs
}

fn infeasibility(c: &[f64], h: &[f64], s: &[f64]) -> f64 {
    norm1(c) + h.iter().zip(s).map(|(a, b)| (a + b).abs()).sum::<f64>()
}

/// Largest step in `(0, 1]` keeping `v + α dv >= (1 − τ) v` for positive `v`.
fn fraction_to_boundary(v: &[f64], dv: &[f64], tau: f64, mask: Option<&[bool]>) -> f64 {
    let mut alpha: f64 = 1.0;
    for i in 0..v.len() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        if dv[i] < 0.0 {
            alpha = alpha.min(-tau * v[i] / dv[i]);
        }
    }
    alpha
}

struct Kkt {
    factor: LdlFactor,
}

struct Engine<'a, P: NlpProblem + ?Sized> {
    problem: &'a P,
    opts: &'a SolverOptions,
    lay: Layout,
    symbolic: LdlSymbolic,
    last_delta_w: f64,
    delta_c: f64,
    /// lower bound on δw, raised after steps cut short by the line search
    delta_w_floor: f64,
}

impl<'a, P: NlpProblem + ?Sized> Engine<'a, P> {
    fn assemble(&mut self, hess: &[f64], sigma_x: &[f64], sigma_s: &[f64], jc: &[f64], jh: &[f64], dw: f64) {
        let lay = &mut self.lay;
        let vals = &mut lay.kkt.values;
        vals.iter_mut().for_each(|v| *v = 0.0);
        for (&slot, &v) in lay.hess_slots.iter().zip(hess) {
            vals[slot] += v;
        }
        for (&slot, &v) in lay.jc_slots.iter().zip(jc) {
            vals[slot] += v;
        }
        for &(slot, a, b, r, mult) in &lay.jhtj {
            vals[slot] += mult * jh[a] * sigma_s[r] * jh[b];
        }
        for i in 0..lay.n {
            let d = lay.kkt.colptr[i + 1] - 1;
            vals[d] += sigma_x[i] + dw;
        }
        for r in 0..lay.m {
            let j = lay.n + r;
            let d = lay.kkt.colptr[j + 1] - 1;
            vals[d] -= self.delta_c;
        }
    }

    /// Factors the KKT matrix, raising δw until the inertia is `(n, m)`.
    fn factor(&mut self, hess: &[f64], sigma_x: &[f64], sigma_s: &[f64], jc: &[f64], jh: &[f64], mu: f64) -> Option<Kkt> {
        let (n, m) = (self.lay.n, self.lay.m);
        let mut dw = self.delta_w_floor;
        loop {
            self.assemble(hess, sigma_x, sigma_s, jc, jh, dw);
            let outcome = self.symbolic.factor(&self.lay.kkt, 1e-30);
            match outcome {
                Ok(f) if f.inertia() == (n, m) => {
                    if dw > self.delta_w_floor {
                        self.last_delta_w = dw;
                    }
                    return Some(Kkt { factor: f });
                }
                Ok(f) => {
                    if self.delta_c == 0.0 && f.inertia().1 < m {
                        self.delta_c = 1e-8 * mu.powf(0.25);
                    }
                }
                Err(LdlError::ZeroPivot(_)) if self.delta_c == 0.0 => {
                    self.delta_c = 1e-8 * mu.powf(0.25);
                    continue;
                }
                Err(_) => {}
            }
            dw = if dw == self.delta_w_floor {
                if self.last_delta_w == 0.0 {
                    1e-4f64.max(2.0 * dw)
                } else {
                    (self.last_delta_w / 3.0).max(1e-20).max(2.0 * dw)
                }
            } else if self.last_delta_w == 0.0 {
                dw * 100.0
            } else {
                dw * 8.0
            };
            if dw > 1e40 {
                return None;
            }
        }
    }

    /// Solves with the current factorization plus iterative refinement.
    fn solve_refined(&self, kkt: &Kkt, rhs: &[f64]) -> Vec<f64> {
        let mut sol = rhs.to_vec();
        kkt.factor.solve(&mut sol);
        let scale = 1.0 + norm_inf(rhs);
        for _ in 0..self.opts.refinement_steps {
            let mut res = rhs.to_vec();
            let mut ax = vec![0.0; rhs.len()];
            self.lay.kkt.sym_upper_mul_add(&sol, &mut ax);
            for (r, a) in res.iter_mut().zip(&ax) {
                *r -= a;
            }
            if norm_inf(&res) <= 1e-14 * scale {
                break;
            }
            kkt.factor.solve(&mut res);
            for (s, r) in sol.iter_mut().zip(&res) {
                *s += r;
            }
        }
        sol
    }

    fn sigmas(&self, it: &Iterate) -> (Vec<f64>, Vec<f64>) {
        let lay = &self.lay;
        let mut sx = vec![0.0; lay.n];
        for i in 0..lay.n {
            if lay.has_l[i] {
                sx[i] += it.zl[i] / (it.x[i] - lay.lower[i]);
            }
            if lay.has_u[i] {
                sx[i] += it.zu[i] / (lay.upper[i] - it.x[i]);
            }
        }
        let ss = it.nu.iter().zip(&it.s).map(|(v, s)| v / s).collect();
        (sx, ss)
    }

    /// Right-hand side of the condensed system for constraint residuals
    /// `(c, rh)`.
    fn rhs(&self, ev: &Eval, it: &Iterate, mu: f64, sigma_s: &[f64], c: &[f64], rh: &[f64]) -> Vec<f64> {
        let lay = &self.lay;
        let mut top: Vec<f64> = ev.grad.iter().map(|g| -g).collect();
        let mut tmp = vec![0.0; lay.n];
        coo_tmul_add(&lay.jc_pat, &ev.jc, &it.lambda, &mut tmp);
        let w: Vec<f64> = (0..lay.p).map(|j| mu / it.s[j] + sigma_s[j] * rh[j]).collect();
        coo_tmul_add(&lay.jh_pat, &ev.jh, &w, &mut tmp);
        for i in 0..lay.n {
            top[i] -= tmp[i];
            if lay.has_l[i] {
                top[i] += mu / (it.x[i] - lay.lower[i]);
            }
            if lay.has_u[i] {
                top[i] -= mu / (lay.upper[i] - it.x[i]);
            }
        }
        top.extend(c.iter().map(|v| -v));
        top
    }

    fn recover(&self, ev: &Eval, it: &Iterate, mu: f64, sol: Vec<f64>, rh: &[f64], sigma_s: &[f64]) -> Direction {
        let lay = &self.lay;
        let dx = sol[..lay.n].to_vec();
        let dlambda = sol[lay.n..].to_vec();
        let mut jdx = vec![0.0; lay.p];
        coo_mul_add(&lay.jh_pat, &ev.jh, &dx, &mut jdx);
        let ds: Vec<f64> = (0..lay.p).map(|j| -rh[j] - jdx[j]).collect();
        let dnu = (0..lay.p)
            .map(|j| mu / it.s[j] - it.nu[j] - sigma_s[j] * ds[j])
            .collect();
        let mut dzl = vec![0.0; lay.n];
        let mut dzu = vec![0.0; lay.n];
        for i in 0..lay.n {
            if lay.has_l[i] {
                let gap = it.x[i] - lay.lower[i];
                dzl[i] = mu / gap - it.zl[i] - it.zl[i] / gap * dx[i];
            }
            if lay.has_u[i] {
                let gap = lay.upper[i] - it.x[i];
                dzu[i] = mu / gap - it.zu[i] + it.zu[i] / gap * dx[i];
            }
        }
        Direction {
            dx,
            ds,
            dlambda,
            dnu,
            dzl,
            dzu,
        }
    }

    fn max_primal_step(&self, it: &Iterate, d: &Direction, tau: f64) -> f64 {
        let lay = &self.lay;
        let gl: Vec<f64> = (0..lay.n).map(|i| it.x[i] - lay.lower[i]).collect();
        let gu: Vec<f64> = (0..lay.n).map(|i| lay.upper[i] - it.x[i]).collect();
        let neg: Vec<f64> = d.dx.iter().map(|v| -v).collect();
        fraction_to_boundary(&it.s, &d.ds, tau, None)
            .min(fraction_to_boundary(&gl, &d.dx, tau, Some(&lay.has_l)))
            .min(fraction_to_boundary(&gu, &neg, tau, Some(&lay.has_u)))
    }

    fn max_dual_step(&self, it: &Iterate, d: &Direction, tau: f64) -> f64 {
        let lay = &self.lay;
        fraction_to_boundary(&it.nu, &d.dnu, tau, None)
            .min(fraction_to_boundary(&it.zl, &d.dzl, tau, Some(&lay.has_l)))
            .min(fraction_to_boundary(&it.zu, &d.dzu, tau, Some(&lay.has_u)))
    }

    /// Merit value at a trial primal point, or `None` if evaluation fails.
    fn trial_merit(&self, x: &[f64], s: &[f64], mu: f64, penalty: f64) -> Option<(f64, Vec<f64>, Vec<f64>)> {
        let lay = &self.lay;
        for i in 0..lay.n {
            if (lay.has_l[i] && x[i] <= lay.lower[i]) || (lay.has_u[i] && x[i] >= lay.upper[i]) {
                return None;
            }
        }
        if s.iter().any(|v| *v <= 0.0) {
            return None;
        }
        let f = self.problem.objective(x);
        let mut c = vec![0.0; lay.m];
        self.problem.eq_values(x, &mut c);
        let mut h = vec![0.0; lay.p];
        self.problem.ineq_values(x, &mut h);
        if !f.is_finite() || !finite(&c) || !finite(&h) {
            return None;
        }
        let phi = barrier_value(lay, f, x, s, mu) + penalty * infeasibility(&c, &h, s);
        Some((phi, c, h))
    }
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(yi, xi)| yi + a * xi).collect()
}

fn safeguard(z: &mut [f64], gap: impl Fn(usize) -> Option<f64>, mu: f64) {
    for (i, zi) in z.iter_mut().enumerate() {
        if let Some(g) = gap(i) {
            let lo = mu / (MULTIPLIER_SAFEGUARD * g);
            let hi = MULTIPLIER_SAFEGUARD * mu / g;
            *zi = zi.clamp(lo.min(hi), hi.max(lo));
        }
    }
}

struct Scaled<'a, P: ?Sized> {
    inner: &'a P,
    scale: f64,
}

impl<P: NlpProblem + ?Sized> NlpProblem for Scaled<'_, P> {
    fn num_vars(&self) -> usize {
        self.inner.num_vars()
    }
    fn num_eq(&self) -> usize {
        self.inner.num_eq()
    }
    fn num_ineq(&self) -> usize {
        self.inner.num_ineq()
    }
    fn bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        self.inner.bounds(lower, upper);
    }
    fn initial_point(&self, x: &mut [f64]) {
        self.inner.initial_point(x);
    }
    fn objective(&self, x: &[f64]) -> f64 {
        self.scale * self.inner.objective(x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        self.inner.gradient(x, grad);
        grad.iter_mut().for_each(|g| *g *= self.scale);
    }
    fn eq_values(&self, x: &[f64], out: &mut [f64]) {
        self.inner.eq_values(x, out);
    }
    fn ineq_values(&self, x: &[f64], out: &mut [f64]) {
        self.inner.ineq_values(x, out);
    }
    fn eq_jacobian_pattern(&self) -> Vec<(usize, usize)> {
        self.inner.eq_jacobian_pattern()
    }
    fn eq_jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        self.inner.eq_jacobian_values(x, vals);
    }
    fn ineq_jacobian_pattern(&self) -> Vec<(usize, usize)> {
        self.inner.ineq_jacobian_pattern()
    }
    fn ineq_jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        self.inner.ineq_jacobian_values(x, vals);
    }
    fn hessian_pattern(&self) -> Vec<(usize, usize)> {
        self.inner.hessian_pattern()
    }
    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], nu: &[f64], vals: &mut [f64]) {
        self.inner.hessian_values(x, self.scale * obj_factor, lambda, nu, vals);
    }
}

/// Solves `problem` from a warm start (or its own initial point), reusing
/// the symbolic factorization stored in `cache` when the structure matches.
pub fn solve_warm<P: NlpProblem + ?Sized>(
    problem: &P,
    options: &SolverOptions,
    warm: Option<&WarmStart>,
    cache: &mut SolverCache,
) -> Result<PrimalDualSolution, NlpError> {
    options.validate()?;
    let n = problem.num_vars();
    let mut x0 = vec![0.0; n];
    match warm {
        Some(w) if w.x.len() == n => x0.copy_from_slice(&w.x),
        _ => problem.initial_point(&mut x0),
    }
    let mut grad = vec![0.0; n];
    problem.gradient(&x0, &mut grad);
    let gmax = norm_inf(&grad);
    let scale = if gmax.is_finite() && gmax > options.max_gradient {
        options.max_gradient / gmax
    } else {
        1.0
    };
    let mult = |v: &Option<Vec<f64>>| v.as_ref().map(|v| v.iter().map(|a| a * scale).collect());
    let scaled_warm = warm.map(|w| WarmStart {
        x: w.x.clone(),
        lambda: mult(&w.lambda),
        nu: mult(&w.nu),
        z_lower: mult(&w.z_lower),
        z_upper: mult(&w.z_upper),
    });
    let scaled = Scaled { inner: problem, scale };
    let mut sol = solve_scaled(&scaled, options, scaled_warm.as_ref(), cache)?;
    for v in [&mut sol.lambda, &mut sol.nu, &mut sol.z_lower, &mut sol.z_upper] {
        v.iter_mut().for_each(|a| *a /= scale);
    }
    sol.objective = problem.objective(&sol.x);
    sol.stationarity_tolerance /= scale;
    sol.kkt = kkt_residual(problem, &sol);
    Ok(sol)
}

fn solve_scaled<P: NlpProblem + ?Sized>(
    problem: &P,
    options: &SolverOptions,
    warm: Option<&WarmStart>,
    cache: &mut SolverCache,
) -> Result<PrimalDualSolution, NlpError> {
    let lay = Layout::new(problem)?;
    let (n, m, p) = (lay.n, lay.m, lay.p);

    let symbolic = match cache.symbolic.take() {
        Some(sym) if sym.matches(&lay.kkt) => sym,
        _ => LdlSymbolic::analyze(&lay.kkt, &lay.class())?,
    };

    // starting point, pushed strictly inside the bounds
    let mut x = vec![0.0; n];
    match warm {
        Some(w) => {
            if w.x.len() != n {
                return Err(NlpError::Dimension(format!("warm start has {} entries, expected {n}", w.x.len())));
            }
            x.copy_from_slice(&w.x);
        }
        None => problem.initial_point(&mut x),
    }
    let dual_warm = warm.is_some_and(|w| w.z_lower.is_some() || w.z_upper.is_some() || w.nu.is_some());
    let k1 = if dual_warm { options.warm_bound_push } else { options.bound_push };
    for i in 0..n {
        let (l, u) = (lay.lower[i], lay.upper[i]);
        let inside = (!lay.has_l[i] || x[i] > l) && (!lay.has_u[i] || x[i] < u);
        if dual_warm && inside {
            continue;
        }
        match (lay.has_l[i], lay.has_u[i]) {
            (true, true) => {
                let pl = (k1 * l.abs().max(1.0)).min(k1 * (u - l));
                let pu = (k1 * u.abs().max(1.0)).min(k1 * (u - l));
                x[i] = x[i].clamp(l + pl, u - pu);
                if !(x[i] > l && x[i] < u) {
                    x[i] = 0.5 * (l + u);
                }
            }
            (true, false) => x[i] = x[i].max(l + k1 * l.abs().max(1.0)),
            (false, true) => x[i] = x[i].min(u - k1 * u.abs().max(1.0)),
            (false, false) => {}
        }
    }
    let mut mu = options.mu_init;
    let mut ev = evaluate(problem, &lay, &x);
    if !ev.f.is_finite() || !finite(&ev.grad) || !finite(&ev.c) || !finite(&ev.h) {
        return Err(NlpError::Dimension("callbacks returned non-finite values at the starting point".into()));
    }
    let s: Vec<f64> = ev
        .h
        .iter()
        .map(|&h| if dual_warm && h < 0.0 { -h } else { (-h).max(k1 * h.abs().max(1.0)) })
        .collect();
    let pick = |opt: Option<&Vec<f64>>, len: usize, default: &dyn Fn(usize) -> f64| -> Vec<f64> {
        match opt {
            Some(v) if v.len() == len => v.clone(),
            _ => (0..len).map(default).collect(),
        }
    };
    let warm_nu = warm.and_then(|w| w.nu.as_ref());
    let warm_zl = warm.and_then(|w| w.z_lower.as_ref());
    let warm_zu = warm.and_then(|w| w.z_upper.as_ref());
    let nu = pick(warm_nu, p, &|_| 1.0);
    let zl = pick(warm_zl, n, &|i| if lay.has_l[i] { 1.0 } else { 0.0 });
    let zu = pick(warm_zu, n, &|i| if lay.has_u[i] { 1.0 } else { 0.0 });
    let mut it = Iterate {
        x,
        s,
        lambda: vec![0.0; m],
        nu: nu.iter().map(|v| v.max(1e-12 * mu)).collect(),
        zl: (0..n).map(|i| if lay.has_l[i] { zl[i].max(1e-12 * mu) } else { 0.0 }).collect(),
        zu: (0..n).map(|i| if lay.has_u[i] { zu[i].max(1e-12 * mu) } else { 0.0 }).collect(),
    };

    let mut eng = Engine {
        problem,
        opts: options,
        lay,
        symbolic,
        last_delta_w: 0.0,
        delta_c: 0.0,
        delta_w_floor: 0.0,
    };

    match warm.and_then(|w| w.lambda.as_ref()) {
        Some(l) if l.len() == m => it.lambda.clone_from(l),
        _ if m > 0 => {
            // least-squares multiplier estimate
            let lay = &eng.lay;
            let zero_h = vec![0.0; lay.hess_pat.len()];
            let zero_sx = vec![0.0; n];
            let zero_ss = vec![0.0; p];
            let mut rhs = ev.grad.clone();
            coo_tmul_add(&lay.jh_pat, &ev.jh, &it.nu, &mut rhs);
            for i in 0..n {
                rhs[i] = -(rhs[i] - it.zl[i] + it.zu[i]);
            }
            rhs.extend(std::iter::repeat_n(0.0, m));
            let jc = ev.jc.clone();
            let jh = ev.jh.clone();
            eng.assemble(&zero_h, &zero_sx, &zero_ss, &jc, &jh, 1.0);
            if let Ok(f) = eng.symbolic.factor(&eng.lay.kkt, 1e-30) {
                if f.inertia() == (n, m) {
                    let kkt = Kkt { factor: f };
                    let sol = eng.solve_refined(&kkt, &rhs);
                    let lam = &sol[n..];
                    if finite(lam) && norm_inf(lam) <= options.lambda_init_max {
                        it.lambda = lam.to_vec();
                    }
                }
            }
        }
        _ => {}
    }

    // complementarity is measured in the Euclidean norm over every pair
    let pairs = p + eng.lay.has_l.iter().chain(&eng.lay.has_u).filter(|&&b| b).count();
    let mu_min = options.tol / (10.0 * (pairs.max(1) as f64).sqrt());
    if dual_warm && pairs > 0 {
        // resume the barrier where the warm point's complementarity is
        let lay = &eng.lay;
        let mut comp: f64 = it.s.iter().zip(&it.nu).map(|(s, v)| s * v).sum();
        for i in 0..n {
            if lay.has_l[i] {
                comp += (it.x[i] - lay.lower[i]) * it.zl[i];
            }
            if lay.has_u[i] {
                comp += (lay.upper[i] - it.x[i]) * it.zu[i];
            }
        }
        mu = (comp / pairs as f64).clamp(mu_min, options.mu_init);
    }
    let mut penalty: f64 = 0.0;
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let mut stalled = 0usize;
    let mut hess = vec![0.0; eng.lay.hess_pat.len()];
    let mut s_d;

    loop {
        let err0 = errors(&eng.lay, &ev, &it, 0.0);
        s_d = err0.s_d;
        if err0.overall() <= options.tol {
            status = SolveStatus::Optimal;
            break;
        }
        if iterations >= options.max_iter {
            break;
        }
        loop {
            let e = errors(&eng.lay, &ev, &it, mu);
            if mu > mu_min && e.overall() <= 10.0 * mu {
                mu = (options.mu_decrease * mu).min(mu.powf(1.5)).max(mu_min);
            } else {
                break;
            }
        }
        let tau = options.tau_min.max(1.0 - mu);

        problem.hessian_values(&it.x, 1.0, &it.lambda, &it.nu, &mut hess);
        let (sigma_x, sigma_s) = eng.sigmas(&it);
        let rh: Vec<f64> = ev.h.iter().zip(&it.s).map(|(h, s)| h + s).collect();
        let Some(kkt) = eng.factor(&hess, &sigma_x, &sigma_s, &ev.jc, &ev.jh, mu) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let rhs = eng.rhs(&ev, &it, mu, &sigma_s, &ev.c, &rh);
        let sol = eng.solve_refined(&kkt, &rhs);
        if !finite(&sol) {
            status = SolveStatus::NumericalFailure;
            break;
        }
        let mut dir = eng.recover(&ev, &it, mu, sol, &rh, &sigma_s);

        // merit penalty large enough for dir to be a descent direction
        let lay = &eng.lay;
        let mut gx = ev.grad.clone();
        for i in 0..n {
            if lay.has_l[i] {
                gx[i] -= mu / (it.x[i] - lay.lower[i]);
            }
            if lay.has_u[i] {
                gx[i] += mu / (lay.upper[i] - it.x[i]);
            }
        }
        let gs: Vec<f64> = it.s.iter().map(|s| -mu / s).collect();
        let slope_f = dot(&gx, &dir.dx) + dot(&gs, &dir.ds);
        let theta = infeasibility(&ev.c, &ev.h, &it.s);
        let mult_inf = norm_inf(&axpy(1.0, &dir.dlambda, &it.lambda)).max(norm_inf(&axpy(1.0, &dir.dnu, &it.nu)));
        penalty = penalty.max(1.05 * mult_inf);
        if theta > 0.0 {
            let required = slope_f / (0.9 * theta);
            if required > penalty {
                penalty = required + 1.0;
            }
        }
        let slope = slope_f - penalty * theta;
        let phi0 = barrier_value(lay, ev.f, &it.x, &it.s, mu) + penalty * theta;

        let alpha_max = eng.max_primal_step(&it, &dir, tau);
        let mut alpha = alpha_max;
        let mut accepted = false;
        let noise = 1e-14 * phi0.abs().max(1.0);
        for trial in 0..MAX_BACKTRACKS {
            let xt = axpy(alpha, &dir.dx, &it.x);
            let st = axpy(alpha, &dir.ds, &it.s);
            let outcome = eng.trial_merit(&xt, &st, mu, penalty);
            if let Some((phi, ct, ht)) = &outcome {
                if *phi <= phi0 + ARMIJO_ETA * alpha * slope.min(0.0) + noise {
                    accepted = true;
                    break;
                }
                if trial == 0 && infeasibility(ct, ht, &st) >= theta {
                    // second-order corrections for the constraint curvature
                    let mut c_soc: Vec<f64> = ev.c.iter().zip(ct).map(|(a, b)| alpha * a + b).collect();
                    let mut rh_soc: Vec<f64> = (0..p).map(|j| alpha * rh[j] + ht[j] + st[j]).collect();
                    let mut theta_prev = infeasibility(ct, ht, &st);
                    for _ in 0..MAX_SOC {
                        let rhs_soc = eng.rhs(&ev, &it, mu, &sigma_s, &c_soc, &rh_soc);
                        let sol_soc = eng.solve_refined(&kkt, &rhs_soc);
                        if !finite(&sol_soc) {
                            break;
                        }
                        let cand = eng.recover(&ev, &it, mu, sol_soc, &rh_soc, &sigma_s);
                        let a_soc = eng.max_primal_step(&it, &cand, tau);
                        let xs = axpy(a_soc, &cand.dx, &it.x);
                        let ss = axpy(a_soc, &cand.ds, &it.s);
                        let Some((phi_s, cs, hs)) = eng.trial_merit(&xs, &ss, mu, penalty) else {
                            break;
                        };
                        if phi_s <= phi0 + ARMIJO_ETA * alpha * slope.min(0.0) + noise {
                            dir = cand;
                            alpha = a_soc;
                            accepted = true;
                            break;
                        }
                        let theta_s = infeasibility(&cs, &hs, &ss);
                        if theta_s > 0.99 * theta_prev {
                            break;
                        }
                        theta_prev = theta_s;
                        for (c, v) in c_soc.iter_mut().zip(&cs) {
                            *c = a_soc * *c + v;
                        }
                        for j in 0..p {
                            rh_soc[j] = a_soc * rh_soc[j] + hs[j] + ss[j];
                        }
                    }
                    if accepted {
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            stalled += 1;
            if stalled >= MAX_STALLED_STEPS {
                status = SolveStatus::InfeasibleStep;
                break;
            }
            // take a short step anyway so the barrier update can continue
            alpha = alpha_max * 2f64.powi(-10);
        } else {
            stalled = 0;
        }
        if alpha < 1e-2 * alpha_max {
            eng.delta_w_floor = (4.0 * eng.delta_w_floor).clamp(1e-6, 1.0);
        } else if alpha == alpha_max {
            eng.delta_w_floor = if eng.delta_w_floor > 1e-8 { eng.delta_w_floor / 10.0 } else { 0.0 };
        }

        let alpha_d = eng.max_dual_step(&it, &dir, tau);
        it.x = axpy(alpha, &dir.dx, &it.x);
        it.s = axpy(alpha, &dir.ds, &it.s);
        it.lambda = axpy(alpha, &dir.dlambda, &it.lambda);
        it.nu = axpy(alpha_d, &dir.dnu, &it.nu);
        it.zl = axpy(alpha_d, &dir.dzl, &it.zl);
        it.zu = axpy(alpha_d, &dir.dzu, &it.zu);
        {
            let lay = &eng.lay;
            let x = &it.x;
            safeguard(&mut it.zl, |i| lay.has_l[i].then(|| x[i] - lay.lower[i]), mu);
            safeguard(&mut it.zu, |i| lay.has_u[i].then(|| lay.upper[i] - x[i]), mu);
            let s = &it.s;
            safeguard(&mut it.nu, |j| Some(s[j]), mu);
        }
        for i in 0..n {
            if !eng.lay.has_l[i] {
                it.zl[i] = 0.0;
            }
            if !eng.lay.has_u[i] {
                it.zu[i] = 0.0;
            }
        }
        iterations += 1;
        ev = evaluate(problem, &eng.lay, &it.x);
        if !ev.f.is_finite() || !finite(&ev.grad) {
            status = SolveStatus::NumericalFailure;
            break;
        }
    }

    cache.symbolic = Some(eng.symbolic);
    let mut sol = PrimalDualSolution {
        objective: ev.f,
        x: it.x,
        lambda: it.lambda,
        nu: it.nu,
        z_lower: it.zl,
        z_upper: it.zu,
        status,
        iterations,
        kkt: KktNorms::default(),
        stationarity_tolerance: options.tol * s_d,
    };
    sol.kkt = kkt_residual(problem, &sol);
    Ok(sol)
}
