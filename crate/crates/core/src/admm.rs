//! Consensus ADMM over the lifted partition structure.
//!
//! Shapes used throughout: `z[c]` is the state of the `c`-th global coupling
//! node, `y[k][c]` and `xc[k][c]` are the dual and the local copy for the
//! `c`-th coupling node of part `k` (in `views[k].coupling` order).

use std::time::Instant;

use hiopf_nlp::{kkt_residual, solve_warm, PrimalDualSolution, SolveStatus, SolverCache, SolverOptions, WarmStart};
use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::opf::{Coupling, OpfData, OpfModel};
use crate::partition::LiftedStructure;

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmOptions {
    pub rho: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_steps: usize,
    /// Size of the worker pool for subproblem solves.
    pub workers: usize,
    pub solver: SolverOptions,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self {
            rho: 1e6,
            eps_abs: 5e-4,
            eps_rel: 5e-4,
            max_steps: 500,
            workers: 1,
            solver: SolverOptions::default(),
        }
    }
}

impl AdmmOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(CoreError::Argument(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.eps_abs > 0.0 && self.eps_rel > 0.0) {
            return Err(CoreError::Argument("stopping tolerances must be positive".into()));
        }
        if self.workers == 0 {
            return Err(CoreError::Argument("at least one worker is required".into()));
        }
        Ok(())
    }
}

/// Starting point `(x⁰, z⁰, y⁰)`. `x[k]` holds one state per node of
/// `views[k].extended`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialPoint {
    pub x: Vec<Vec<Vec<f64>>>,
    pub z: Vec<Vec<f64>>,
    pub y: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub r_norm: f64,
    pub s_norm: f64,
    pub objective: f64,
    pub aug_lagrangian: f64,
    pub step_seconds: f64,
}

pub const TRACE_HEADER: &str = "step,r_norm,s_norm,objective,aug_lagrangian,step_seconds";

impl TraceRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e}",
            self.step, self.r_norm, self.s_norm, self.objective, self.aug_lagrangian, self.step_seconds
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdmmStatus {
    Converged,
    MaxSteps,
}

#[derive(Debug, Clone)]
pub struct AdmmState {
    pub step: usize,
    /// Variable vector of each part's model.
    pub x: Vec<Vec<f64>>,
    pub solutions: Vec<Option<PrimalDualSolution>>,
    pub z: Vec<Vec<f64>>,
    pub y: Vec<Vec<Vec<f64>>>,
    pub r: Vec<Vec<Vec<f64>>>,
    pub s: Vec<Vec<Vec<f64>>>,
    pub r_norm: f64,
    pub s_norm: f64,
    pub eps_pri: f64,
    pub eps_dual: f64,
}

/// Norms of the first-order residual blocks of the lifted problem.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Certificate {
    /// `‖∇ₓL‖` over all parts.
    pub stationarity_x: f64,
    /// `‖Bᵀy‖`.
    pub stationarity_z: f64,
    /// `‖Ax + Bz‖`.
    pub primal: f64,
    /// Power balance, inequality and bound violations.
    pub feasibility: f64,
    /// Norm of the negative part of the inequality and bound multipliers.
    pub dual_sign: f64,
    pub complementarity: f64,
    /// Sum of the stationarity levels the subproblem solves accepted.
    pub subproblem_tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    pub status: AdmmStatus,
    pub state: AdmmState,
    pub trace: Vec<TraceRow>,
    pub certificate: Certificate,
    /// Interior-point iterations per step, per part.
    pub solver_iterations: Vec<Vec<usize>>,
}

fn position(list: &[usize], i: usize) -> usize {
    list.binary_search(&i).expect("coupling node listed for the part")
}

/// `z(i) = (1/|K_i|) Σ_{k∈K_i} (x_k(i) + y_k(i)/ρ)`, summed in ascending `k`.
pub fn z_update(lifted: &LiftedStructure, xc: &[Vec<Vec<f64>>], y: &[Vec<Vec<f64>>], rho: f64) -> Vec<Vec<f64>> {
    lifted
        .global_coupling
        .iter()
        .map(|&i| {
            let ks = &lifted.sharers[i];
            let mut acc: Vec<f64> = Vec::new();
            for &k in ks {
                let c = position(&lifted.views[k].coupling, i);
                let (xs, ys) = (&xc[k][c], &y[k][c]);
                if acc.is_empty() {
                    acc = vec![0.0; xs.len()];
                }
                for ((a, xv), yv) in acc.iter_mut().zip(xs).zip(ys) {
                    *a += xv + yv / rho;
                }
            }
            let m = ks.len() as f64;
            acc.iter().map(|a| a / m).collect()
        })
        .collect()
}

/// Pure average `z(i) = (1/|K_i|) Σ x_k(i)`.
pub fn z_average(lifted: &LiftedStructure, xc: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let zero: Vec<Vec<Vec<f64>>> = xc.iter().map(|p| p.iter().map(|s| vec![0.0; s.len()]).collect()).collect();
    z_update(lifted, xc, &zero, 1.0)
}

/// `y_k(i) += ρ (x_k(i) − z(i))`.
pub fn y_update(
    lifted: &LiftedStructure,
    xc: &[Vec<Vec<f64>>],
    z: &[Vec<f64>],
    y: &[Vec<Vec<f64>>],
    rho: f64,
) -> Vec<Vec<Vec<f64>>> {
    let mut out = y.to_vec();
    for (k, v) in lifted.views.iter().enumerate() {
        for (c, &i) in v.coupling.iter().enumerate() {
            let zi = &z[lifted.coupling_position[i].expect("coupling node")];
            for ((o, xv), zv) in out[k][c].iter_mut().zip(&xc[k][c]).zip(zi) {
                *o += rho * (xv - zv);
            }
        }
    }
    out
}

fn norm_nested(v: &[Vec<Vec<f64>>]) -> f64 {
    let mut acc = 0.0;
    for part in v {
        for s in part {
            for a in s {
                acc += a * a;
            }
        }
    }
    acc.sqrt()
}

/// `Σ_{k∈K_i} y_k(i)` for every global coupling node.
pub fn dual_sums(lifted: &LiftedStructure, y: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let zero: Vec<Vec<f64>> = lifted.global_coupling.iter().map(|_| Vec::new()).collect();
    let mut out = zero;
    for (pos, &i) in lifted.global_coupling.iter().enumerate() {
        for &k in &lifted.sharers[i] {
            let ys = &y[k][position(&lifted.views[k].coupling, i)];
            if out[pos].is_empty() {
                out[pos] = vec![0.0; ys.len()];
            }
            for (a, b) in out[pos].iter_mut().zip(ys) {
                *a += b;
            }
        }
    }
    out
}

/// Primal residual `r_k(i) = x_k(i) − z(i)` and dual residual
/// `s_k(i) = ρ (z_prev(i) − z(i))` with their Euclidean norms.
#[allow(clippy::type_complexity)]
pub fn residuals(
    lifted: &LiftedStructure,
    xc: &[Vec<Vec<f64>>],
    z_prev: &[Vec<f64>],
    z: &[Vec<f64>],
    rho: f64,
) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>, f64, f64) {
    let mut r = Vec::with_capacity(lifted.k());
    let mut s = Vec::with_capacity(lifted.k());
    for (k, v) in lifted.views.iter().enumerate() {
        let mut rk = Vec::with_capacity(v.coupling.len());
        let mut sk = Vec::with_capacity(v.coupling.len());
        for (c, &i) in v.coupling.iter().enumerate() {
            let pos = lifted.coupling_position[i].expect("coupling node");
            rk.push(xc[k][c].iter().zip(&z[pos]).map(|(a, b)| a - b).collect());
            sk.push(z_prev[pos].iter().zip(&z[pos]).map(|(a, b)| rho * (a - b)).collect());
        }
        r.push(rk);
        s.push(sk);
    }
    let (rn, sn) = (norm_nested(&r), norm_nested(&s));
    (r, s, rn, sn)
}

/// `(ε_pri, ε_dual)` for the given norms.
pub fn tolerances(options: &AdmmOptions, n_x: usize, n_y: usize, ax: f64, bz: f64, aty: f64) -> (f64, f64) {
    let pri = (n_x as f64).sqrt() * options.eps_abs + options.eps_rel * ax.max(bz);
    let dual = (n_y as f64).sqrt() * options.eps_abs + options.eps_rel * aty;
    (pri, dual)
}

/// Stop when both residuals are below their tolerances (or exactly zero).
pub fn check_stop(r_norm: f64, s_norm: f64, eps_pri: f64, eps_dual: f64) -> bool {
    (r_norm < eps_pri || r_norm == 0.0) && (s_norm < eps_dual || s_norm == 0.0)
}

struct Part<'a> {
    model: OpfModel<'a>,
    cache: SolverCache,
    solution: Option<PrimalDualSolution>,
    x: Vec<f64>,
}

fn coupling_states(model: &OpfModel, coupling: &[usize], x: &[f64]) -> Vec<Vec<f64>> {
    coupling
        .iter()
        .map(|&i| model.state_of(x, i).expect("coupling node in the model"))
        .collect()
}

fn targets(lifted: &LiftedStructure, k: usize, z: &[Vec<f64>]) -> Vec<Vec<f64>> {
    lifted.views[k]
        .coupling
        .iter()
        .map(|&i| z[lifted.coupling_position[i].expect("coupling node")].clone())
        .collect()
}

/// Flat-start `(x⁰, z⁰, y⁰ = 0)`.
pub fn cold_start(data: &OpfData, lifted: &LiftedStructure) -> InitialPoint {
    InitialPoint {
        x: lifted
            .views
            .iter()
            .map(|v| v.extended.iter().map(|&i| data.flat_state(i)).collect())
            .collect(),
        z: lifted.global_coupling.iter().map(|&i| data.flat_state(i)).collect(),
        y: lifted
            .views
            .iter()
            .map(|v| v.coupling.iter().map(|&i| vec![0.0; data.state_dim(i)]).collect())
            .collect(),
    }
}

fn check_shapes(data: &OpfData, lifted: &LiftedStructure, start: &InitialPoint) -> Result<()> {
    let bad = |what: &str| Err(CoreError::Argument(format!("initial point: {what} has the wrong shape")));
    if start.x.len() != lifted.k() || start.y.len() != lifted.k() || start.z.len() != lifted.global_coupling.len() {
        return bad("part count");
    }
    for (k, v) in lifted.views.iter().enumerate() {
        if start.x[k].len() != v.extended.len()
            || v.extended.iter().zip(&start.x[k]).any(|(&i, s)| s.len() != data.state_dim(i))
        {
            return bad("x");
        }
        if start.y[k].len() != v.coupling.len()
            || v.coupling.iter().zip(&start.y[k]).any(|(&i, s)| s.len() != data.state_dim(i))
        {
            return bad("y");
        }
    }
    if lifted
        .global_coupling
        .iter()
        .zip(&start.z)
        .any(|(&i, s)| s.len() != data.state_dim(i))
    {
        return bad("z");
    }
    Ok(())
}

/// Runs ADMM from `start` (flat start with zero duals when `None`).
/// `on_step` sees the state and trace row after every coordination step.
pub fn run(
    data: &OpfData,
    lifted: &LiftedStructure,
    options: &AdmmOptions,
    start: Option<&InitialPoint>,
    mut on_step: impl FnMut(&AdmmState, &TraceRow),
) -> Result<AdmmOutcome> {
    options.validate()?;
    let cold = cold_start(data, lifted);
    let warm = start.is_some();
    let start = start.unwrap_or(&cold);
    check_shapes(data, lifted, start)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| CoreError::Argument(format!("worker pool: {e}")))?;

    let mut parts = Vec::with_capacity(lifted.k());
    for k in 0..lifted.k() {
        let model = OpfModel::subproblem(data, lifted, k)?;
        let ext = &lifted.views[k].extended;
        let x = model.x_from_states(|i| start.x[k][ext.binary_search(&i).expect("extended node")].clone());
        parts.push(Part {
            model,
            cache: SolverCache::new(),
            solution: None,
            x,
        });
    }
    let n_x: usize = parts.iter().map(|p| p.x.len()).sum();
    let n_y: usize = lifted
        .views
        .iter()
        .map(|v| v.coupling.iter().map(|&i| data.state_dim(i)).sum::<usize>())
        .sum();

    let mut state = AdmmState {
        step: 0,
        x: parts.iter().map(|p| p.x.clone()).collect(),
        solutions: vec![None; lifted.k()],
        z: start.z.clone(),
        y: start.y.clone(),
        r: Vec::new(),
        s: Vec::new(),
        r_norm: f64::INFINITY,
        s_norm: f64::INFINITY,
        eps_pri: 0.0,
        eps_dual: 0.0,
    };
    let mut trace = Vec::new();
    let mut solver_iterations = Vec::new();
    let mut status = AdmmStatus::MaxSteps;

    while state.step < options.max_steps {
        let t0 = Instant::now();
        let step = state.step;
        for (k, p) in parts.iter_mut().enumerate() {
            p.model.set_coupling(Coupling {
                rho: options.rho,
                z: targets(lifted, k, &state.z),
                y: state.y[k].clone(),
            })?;
        }
        let results: Vec<Result<()>> = pool.install(|| {
            parts
                .par_iter_mut()
                .enumerate()
                .map(|(k, p)| {
                    let ws = match &p.solution {
                        Some(sol) => WarmStart::from_solution(sol),
                        None => WarmStart::primal(p.x.clone()),
                    };
                    let use_warm = p.solution.is_some() || warm;
                    let sol = solve_warm(&p.model, &options.solver, use_warm.then_some(&ws), &mut p.cache).map_err(
                        |source| CoreError::Solver {
                            context: format!("part {k} at step {step}"),
                            source,
                        },
                    )?;
                    match sol.status {
                        SolveStatus::Optimal => {}
                        SolveStatus::MaxIterations => {
                            warn!("part {k} at step {step}: subproblem hit the iteration limit")
                        }
                        other => {
                            return Err(CoreError::SolverStatus {
                                context: format!("part {k} at step {step}"),
                                status: format!("{other:?}"),
                            })
                        }
                    }
                    p.x.clone_from(&sol.x);
                    p.solution = Some(sol);
                    Ok(())
                })
                .collect()
        });
        for r in results {
            r?;
        }
        solver_iterations.push(parts.iter().map(|p| p.solution.as_ref().map_or(0, |s| s.iterations)).collect());

        let xc: Vec<Vec<Vec<f64>>> = parts
            .iter()
            .enumerate()
            .map(|(k, p)| coupling_states(&p.model, &lifted.views[k].coupling, &p.x))
            .collect();
        let z_prev = std::mem::take(&mut state.z);
        let z = z_update(lifted, &xc, &state.y, options.rho);
        let y = y_update(lifted, &xc, &z, &state.y, options.rho);
        let (r, s, r_norm, s_norm) = residuals(lifted, &xc, &z_prev, &z, options.rho);

        let ax = norm_nested(&xc);
        let bz = lifted
            .global_coupling
            .iter()
            .zip(&z)
            .map(|(&i, zi)| lifted.sharers[i].len() as f64 * zi.iter().map(|a| a * a).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        let (eps_pri, eps_dual) = tolerances(options, n_x, n_y, ax, bz, norm_nested(&y));

        let objective: f64 = parts.iter().map(|p| p.model.local_cost(&p.x)).sum();
        let mut aug = objective;
        for (k, rk) in r.iter().enumerate() {
            for (c, rc) in rk.iter().enumerate() {
                for (rv, yv) in rc.iter().zip(&y[k][c]) {
                    aug += yv * rv + 0.5 * options.rho * rv * rv;
                }
            }
        }

        state.step += 1;
        state.x = parts.iter().map(|p| p.x.clone()).collect();
        state.solutions = parts.iter().map(|p| p.solution.clone()).collect();
        state.z = z;
        state.y = y;
        state.r = r;
        state.s = s;
        state.r_norm = r_norm;
        state.s_norm = s_norm;
        state.eps_pri = eps_pri;
        state.eps_dual = eps_dual;

        let row = TraceRow {
            step: state.step,
            r_norm,
            s_norm,
            objective,
            aug_lagrangian: aug,
            step_seconds: t0.elapsed().as_secs_f64(),
        };
        debug!(
            "step {} r {:.3e}/{:.3e} s {:.3e}/{:.3e} f {:.6e}",
            row.step, r_norm, eps_pri, s_norm, eps_dual, objective
        );
        on_step(&state, &row);
        trace.push(row);
        if check_stop(r_norm, s_norm, eps_pri, eps_dual) {
            status = AdmmStatus::Converged;
            break;
        }
    }

    let certificate = kkt_certificate(data, lifted, &state)?;
    Ok(AdmmOutcome {
        status,
        state,
        trace,
        certificate,
        solver_iterations,
    })
}

/// Evaluates the first-order residual blocks of the lifted problem at
/// `(x, z, y)` with the multipliers of the last subproblem solves.
pub fn kkt_certificate(data: &OpfData, lifted: &LiftedStructure, state: &AdmmState) -> Result<Certificate> {
    let mut cert = Certificate::default();
    let mut acc = [0.0f64; 4];
    for k in 0..lifted.k() {
        let Some(sol) = &state.solutions[k] else {
            return Err(CoreError::Argument(format!("part {k} has no subproblem solution")));
        };
        let mut model = OpfModel::subproblem(data, lifted, k)?;
        model.set_coupling(Coupling {
            rho: 0.0,
            z: targets(lifted, k, &state.z),
            y: state.y[k].clone(),
        })?;
        let norms = kkt_residual(&model, sol);
        acc[0] += norms.stationarity.powi(2);
        acc[1] += norms.feasibility.powi(2);
        acc[2] += norms.complementarity.powi(2);
        acc[3] += sol
            .nu
            .iter()
            .chain(&sol.z_lower)
            .chain(&sol.z_upper)
            .map(|v| v.min(0.0).powi(2))
            .sum::<f64>();
        cert.subproblem_tolerance += sol.stationarity_tolerance;
    }
    cert.stationarity_x = acc[0].sqrt();
    cert.feasibility = acc[1].sqrt();
    cert.complementarity = acc[2].sqrt();
    cert.dual_sign = acc[3].sqrt();
    cert.stationarity_z = dual_sums(lifted, &state.y)
        .iter()
        .flatten()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt();
    let mut primal = 0.0;
    for k in 0..lifted.k() {
        let model = OpfModel::subproblem(data, lifted, k)?;
        for &i in &lifted.views[k].coupling {
            let xs = model.state_of(&state.x[k], i).expect("coupling node");
            let zi = &state.z[lifted.coupling_position[i].expect("coupling node")];
            for (a, b) in xs.iter().zip(zi) {
                primal += (a - b) * (a - b);
            }
        }
    }
    cert.primal = primal.sqrt();
    Ok(cert)
}
