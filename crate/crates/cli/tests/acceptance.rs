//! Acceptance suite: one PASS/FAIL line per criterion.

#[path = "../../nlp/tests/support/qp.rs"]
mod qp;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use hiopf_core::admm::{dual_sums, run, z_average, z_update, AdmmOptions, AdmmOutcome, AdmmStatus, InitialPoint, TraceRow};
use hiopf_core::coarsen::*;
use hiopf_core::graph::Graph;
use hiopf_core::network::{Admittance, NetworkCase, DEFAULT_SLACK_COST};
use hiopf_core::opf::{Coupling, OpfData, OpfModel};
use hiopf_core::partition::{build_lifted, coupling_sets, partition_graph, LiftedStructure, Partitioning};
use hiopf_nlp::{solve, NlpProblem, SolverOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE_MAX_NODES: usize = 6;
const ORACLE_MAX_K: usize = 3;
const ORACLE_SECONDS: f64 = 60.0;
const IDENTITY_REL: f64 = 1e-6;
const CONSERVATION_REL: f64 = 1e-12;
const CONSERVATION_SEEDS: u64 = 5;
const AGGREGATION_RANDOM_GRAPHS: usize = 4000;
const FD_POINTS: usize = 20;
const FD_STEP: f64 = 1e-6;
const JACOBIAN_REL: f64 = 1e-6;
const HESSIAN_REL: f64 = 1e-5;
const NLP_MATCH: f64 = 1e-6;
const NLP_RANDOM_QPS: u64 = 10;
const DUAL_SUM_PER_RHO: f64 = 1e-8;
const Z_FORM_REL: f64 = 1e-12;
const GRID_CASES: [&str; 3] = ["case14", "case30", "case118"];
const GRID_K: [usize; 2] = [2, 4];
const GRID_RHO: [f64; 2] = [1e5, 1e6];
const GRID_MAX_STEPS: usize = 500;
const GRID_EPS: f64 = 5e-4;
const GRID_GAP_PERCENT: f64 = 1.5;
const WARM_MIN_CASES: usize = 2;

struct Verdict {
    pass: bool,
    detail: String,
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(format!("{name}.m"))
}

fn data(name: &str) -> OpfData {
    let case = NetworkCase::from_file(fixture(name)).unwrap().with_slack_generators(DEFAULT_SLACK_COST);
    OpfData::from_case(&case).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

// ---- 1: coupling sets

fn set_partitions(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, n: usize, k: usize, used: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            if used == k {
                out.push(prefix.clone());
            }
            return;
        }
        for b in 0..(used + 1).min(k) {
            prefix.push(b);
            rec(prefix, n, k, used.max(b + 1), out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), n, k, 0, &mut out);
    out
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let (mut graphs, mut cases, mut mismatches) = (0usize, 0usize, 0usize);
    for n in 1..=ORACLE_MAX_NODES {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        let assignments: Vec<Vec<Vec<usize>>> = (1..=n.min(ORACLE_MAX_K)).map(|k| set_partitions(n, k)).collect();
        for mask in 0u32..(1 << pairs.len()) {
            let edges: Vec<_> = pairs.iter().enumerate().filter(|(e, _)| mask >> e & 1 == 1).map(|(_, &p)| p).collect();
            let g = Graph::from_edges(n, &edges);
            if !g.is_connected() {
                continue;
            }
            graphs += 1;
            for (k, list) in (1..).zip(&assignments) {
                for assignment in list {
                    cases += 1;
                    // closed neighborhood of each part, then pairwise overlaps
                    let mut nb = vec![BTreeSet::new(); k];
                    for i in 0..n {
                        nb[assignment[i]].insert(i);
                    }
                    for &(a, b) in &edges {
                        nb[assignment[a]].insert(b);
                        nb[assignment[b]].insert(a);
                    }
                    let want: Vec<Vec<usize>> = (0..k)
                        .map(|q| {
                            let s: BTreeSet<usize> = (0..k).filter(|&o| o != q).flat_map(|o| nb[q].intersection(&nb[o]).copied()).collect();
                            s.into_iter().collect()
                        })
                        .collect();
                    let all: Vec<usize> = want.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
                    let p = Partitioning::new(k, assignment.clone()).unwrap();
                    let (per_part, global) = coupling_sets(&g, &p);
                    if per_part != want || global != all {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        pass: mismatches == 0 && secs < ORACLE_SECONDS,
        detail: format!("{graphs} graphs, {cases} partitionings, {mismatches} mismatches, {secs:.1}s"),
    }
}

// ---- 2: identity coarsening

fn central_objective(d: &OpfData) -> f64 {
    let sol = solve(&OpfModel::central(d), &SolverOptions::default()).unwrap();
    assert!(sol.is_optimal(), "central solve: {}", sol.status);
    sol.objective
}

fn criterion_2() -> Verdict {
    let d = data("case14");
    let g = d.graph();
    let mut worst = 0.0f64;
    for k in [2, 3, 4] {
        let p = partition_graph(&g, k, 0).unwrap();
        let coarse = CoarseCase::build(&d, singleton_subpartitions(&p), k).unwrap();
        let sol = solve_coarse(&coarse, CoarseMode::Central, &AdmmOptions::default()).unwrap();
        worst = worst.max(rel(sol.objective, central_objective(&d)));
    }
    Verdict {
        pass: worst <= IDENTITY_REL,
        detail: format!("largest relative objective difference {worst:.2e} (K = 2, 3, 4)"),
    }
}

// ---- 3: aggregation

fn brute_force(n: usize, diag: &[(f64, f64)], edges: &BTreeMap<(usize, usize), (f64, f64)>, phi: &[usize]) -> BTreeMap<(usize, usize), (f64, f64)> {
    let mut out: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    let mut add = |key, (g, b): (f64, f64)| {
        let e = out.entry(key).or_default();
        e.0 += g;
        e.1 += b;
    };
    for i in 0..n {
        add((phi[i], phi[i]), diag[i]);
    }
    for (&(i, j), &(g, b)) in edges {
        let (a, c) = (phi[i], phi[j]);
        if a == c {
            add((a, a), (2.0 * g, 2.0 * b));
        } else {
            add((a, c), (g, b));
            add((c, a), (g, b));
        }
    }
    out
}

/// Compares aggregation against the brute-force sums; values are dyadic so
/// both orders of summation are exact.
fn aggregation_matches(n: usize, edges: &BTreeMap<(usize, usize), (f64, f64)>, diag: &[(f64, f64)], phi: &[usize]) -> bool {
    let mut entries = BTreeMap::new();
    for (i, d) in diag.iter().enumerate() {
        entries.insert((i, i), *d);
    }
    for (&(i, j), &v) in edges {
        entries.insert((i, j), v);
        entries.insert((j, i), v);
    }
    let y = Admittance::from_entries(n, &entries);
    let nc = phi.iter().max().map_or(0, |m| m + 1);
    let c = aggregate_admittance(&y, phi, nc);
    let expect = brute_force(n, diag, edges, phi);
    (0..nc).all(|a| (0..nc).all(|b| c.get(a, b).unwrap_or((0.0, 0.0)) == expect.get(&(a, b)).copied().unwrap_or((0.0, 0.0))))
}

fn dyadic(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(-64i32..64) as f64 / 8.0
}

fn criterion_3() -> Verdict {
    let mut worst = 0.0f64;
    for name in GRID_CASES {
        let d = data(name);
        let g = d.graph();
        let total = |d: &OpfData| (d.p_load.iter().sum::<f64>(), d.q_load.iter().sum::<f64>());
        let (pf, qf) = total(&d);
        for seed in 0..CONSERVATION_SEEDS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = rng.gen_range(2..=4);
            let p = partition_graph(&g, k, seed).unwrap();
            let smallest = p.parts().iter().map(Vec::len).min().unwrap();
            let sub = subpartition(&g, &p, Some(rng.gen_range(1..=smallest)), seed).unwrap();
            let c = CoarseCase::build(&d, sub, k).unwrap();
            let (pc, qc) = total(&c.data);
            worst = worst.max(rel(pc, pf)).max(rel(qc, qf));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let mut checked = 0usize;
    let mut failures = 0usize;
    // every graph and grouping up to 5 nodes
    for n in 1..=5usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        let groupings: Vec<Vec<usize>> = (1..=n).flat_map(|k| set_partitions(n, k)).collect();
        for mask in 0u32..(1 << pairs.len()) {
            let edges: BTreeMap<_, _> = pairs
                .iter()
                .enumerate()
                .filter(|(e, _)| mask >> e & 1 == 1)
                .map(|(_, &p)| (p, (dyadic(&mut rng), dyadic(&mut rng))))
                .collect();
            let diag: Vec<_> = (0..n).map(|_| (dyadic(&mut rng), dyadic(&mut rng))).collect();
            for phi in &groupings {
                checked += 1;
                failures += usize::from(!aggregation_matches(n, &edges, &diag, phi));
            }
        }
    }
    // random graphs and groupings on 6 to 8 nodes
    for _ in 0..AGGREGATION_RANDOM_GRAPHS {
        let n = rng.gen_range(6..=8);
        let mut edges = BTreeMap::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen_bool(0.4) {
                    edges.insert((a, b), (dyadic(&mut rng), dyadic(&mut rng)));
                }
            }
        }
        let diag: Vec<_> = (0..n).map(|_| (dyadic(&mut rng), dyadic(&mut rng))).collect();
        let raw: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let uniq: Vec<usize> = raw.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let phi: Vec<usize> = raw.iter().map(|v| uniq.binary_search(v).unwrap()).collect();
        checked += 1;
        failures += usize::from(!aggregation_matches(n, &edges, &diag, &phi));
    }
    Verdict {
        pass: worst <= CONSERVATION_REL && failures == 0,
        detail: format!("load conservation worst {worst:.1e} over 3 cases x {CONSERVATION_SEEDS} seeds; admittance {failures}/{checked} mismatches"),
    }
}

// ---- 4: derivatives

fn fd_errors(model: &OpfModel, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.num_vars();
    let m = model.num_eq();
    let scaled = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
    let (mut jac, mut hess) = (0.0f64, 0.0f64);
    let grad_l = |x: &[f64], lambda: &[f64], w: f64| {
        let (_, grad, jg, _) = model.eval_objective_gradient_jacobian(x);
        let mut out: Vec<f64> = grad.iter().map(|g| w * g).collect();
        for (r, c, v) in jg {
            out[c] += lambda[r] * v;
        }
        out
    };
    for _ in 0..FD_POINTS {
        let x: Vec<f64> = model.flat_start().iter().map(|&v| v + rng.gen_range(-0.2..0.2)).collect();
        let (_, _, jg, _) = model.eval_objective_gradient_jacobian(&x);
        let mut j = vec![vec![0.0; n]; m];
        for (r, c, v) in jg {
            j[r][c] += v;
        }
        for c in 0..n {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[c] += FD_STEP;
            xm[c] -= FD_STEP;
            let (gp, _) = model.eval_constraints(&xp).unwrap();
            let (gm, _) = model.eval_constraints(&xm).unwrap();
            for r in 0..m {
                jac = jac.max(scaled(j[r][c], (gp[r] - gm[r]) / (2.0 * FD_STEP)));
            }
        }
        let lambda: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = 0.7;
        let mut hv = vec![0.0; n];
        for (r, c, val) in model.lagrangian_hessian(&x, &lambda, w) {
            hv[r] += val * v[c];
            if r != c {
                hv[c] += val * v[r];
            }
        }
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + FD_STEP * b).collect();
        let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - FD_STEP * b).collect();
        let (gp, gm) = (grad_l(&xp, &lambda, w), grad_l(&xm, &lambda, w));
        for c in 0..n {
            hess = hess.max(scaled(hv[c], (gp[c] - gm[c]) / (2.0 * FD_STEP)));
        }
    }
    (jac, hess)
}

fn criterion_4() -> Verdict {
    let (mut jac, mut hess, mut models) = (0.0f64, 0.0f64, 0usize);
    for (seed, name) in (0u64..).zip(["case2", "case4_path", "case14", "case30", "case118"]) {
        let d = data(name);
        let mut list = vec![OpfModel::central(&d)];
        let g = d.graph();
        let k = if d.n() > 4 { 3 } else { 2 };
        let lifted = build_lifted(&g, &partition_graph(&g, k, seed).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in 0..k {
            let mut m = OpfModel::subproblem(&d, &lifted, p).unwrap();
            let nodes = m.coupling_nodes();
            let z = nodes.iter().map(|&i| d.flat_state(i)).collect();
            let y = nodes.iter().map(|&i| (0..d.state_dim(i)).map(|_| rng.gen_range(-100.0..100.0)).collect()).collect();
            m.set_coupling(Coupling { rho: 1e3, z, y }).unwrap();
            list.push(m);
        }
        for m in &list {
            let (j, h) = fd_errors(m, seed + 100);
            jac = jac.max(j);
            hess = hess.max(h);
            models += 1;
        }
    }
    Verdict {
        pass: jac <= JACOBIAN_REL && hess <= HESSIAN_REL,
        detail: format!("{models} models x {FD_POINTS} points: jacobian {jac:.1e}, hessian-vector {hess:.1e}"),
    }
}

// ---- 5: NLP kernel

fn criterion_5() -> Verdict {
    let options = SolverOptions::default();
    let close = |a: f64, b: f64| (a - b).abs() <= NLP_MATCH * (1.0 + b.abs());
    let mut failed = Vec::new();

    let mut p = qp::unconstrained(1);
    p.q[0][0] = 2.0;
    p.c[0] = -2.0;
    p.g = vec![vec![-1.0]];
    p.gv = vec![0.0];
    let s = solve(&p, &options).unwrap();
    if !(s.is_optimal() && close(s.x[0], 1.0) && s.nu[0].abs() <= NLP_MATCH) {
        failed.push("interior minimum".to_string());
    }

    let mut p = qp::unconstrained(1);
    p.c[0] = 1.0;
    p.g = vec![vec![-1.0]];
    p.gv = vec![-2.0];
    let s = solve(&p, &options).unwrap();
    if !(s.is_optimal() && close(s.x[0], 2.0) && close(s.nu[0], 1.0)) {
        failed.push("active inequality".to_string());
    }

    let s = solve(&qp::equality_qp(), &options).unwrap();
    if !(s.is_optimal() && close(s.x[0], 0.5) && close(s.x[1], 0.5) && close(s.lambda[0], -0.5)) {
        failed.push("equality QP".to_string());
    }

    for seed in 0..NLP_RANDOM_QPS {
        let known = qp::random_qp(seed);
        let s = solve(&known.qp, &options).unwrap();
        let ok = s.is_optimal()
            && s.x.iter().zip(&known.x).all(|(a, b)| close(*a, *b))
            && s.lambda.iter().zip(&known.lambda).all(|(a, b)| close(*a, *b))
            && s.nu.iter().zip(&known.nu).all(|(a, b)| close(*a, *b));
        if !ok {
            failed.push(format!("random QP {seed}"));
        }
    }
    Verdict {
        pass: failed.is_empty(),
        detail: if failed.is_empty() {
            format!("3 analytic problems and {NLP_RANDOM_QPS} random QPs match")
        } else {
            format!("mismatch on {}", failed.join(", "))
        },
    }
}

// ---- grid runs for 6 to 10

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Scheme {
    Decentralized,
    Hierarchical,
}

struct GridRun {
    case: &'static str,
    k: usize,
    rho: f64,
    scheme: Scheme,
    outcome: AdmmOutcome,
    gap_percent: f64,
    worst_dual_sum: f64,
    worst_z_form: f64,
    trace_bits: Vec<[u64; 5]>,
}

fn coupling_values(l: &LiftedStructure, r: &[Vec<Vec<f64>>], z: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
    l.views
        .iter()
        .enumerate()
        .map(|(k, v)| {
            v.coupling
                .iter()
                .enumerate()
                .map(|(c, &i)| r[k][c].iter().zip(&z[l.coupling_position[i].unwrap()]).map(|(a, b)| a + b).collect())
                .collect()
        })
        .collect()
}

fn bits(trace: &[TraceRow]) -> Vec<[u64; 5]> {
    trace
        .iter()
        .map(|t| [t.step as u64, t.r_norm.to_bits(), t.s_norm.to_bits(), t.objective.to_bits(), t.aug_lagrangian.to_bits()])
        .collect()
}

fn grid(workers: usize) -> Vec<GridRun> {
    let mut runs = Vec::new();
    for case in GRID_CASES {
        let d = data(case);
        let central = central_objective(&d);
        let g = d.graph();
        for k in GRID_K {
            let p = partition_graph(&g, k, 0).unwrap();
            let lifted = build_lifted(&g, &p);
            for rho in GRID_RHO {
                let options = AdmmOptions {
                    rho,
                    eps_abs: GRID_EPS,
                    eps_rel: GRID_EPS,
                    max_steps: GRID_MAX_STEPS,
                    workers,
                    ..AdmmOptions::default()
                };
                for scheme in [Scheme::Decentralized, Scheme::Hierarchical] {
                    let start: Option<InitialPoint> = (scheme == Scheme::Hierarchical).then(|| {
                        let coarse = CoarseCase::build(&d, subpartition(&g, &p, None, 0).unwrap(), k).unwrap();
                        let sol = solve_coarse(&coarse, CoarseMode::Central, &options).unwrap();
                        project_solution(&d, &lifted, &coarse, &sol).0
                    });
                    let (mut worst_dual_sum, mut worst_z_form) = (0.0f64, 0.0f64);
                    let outcome = run(&d, &lifted, &options, start.as_ref(), |state, _| {
                        for sum in dual_sums(&lifted, &state.y) {
                            for v in sum {
                                worst_dual_sum = worst_dual_sum.max(v.abs() / rho);
                            }
                        }
                        let xc = coupling_values(&lifted, &state.r, &state.z);
                        let general = z_update(&lifted, &xc, &state.y, rho);
                        for (a, b) in general.iter().flatten().zip(z_average(&lifted, &xc).iter().flatten()) {
                            worst_z_form = worst_z_form.max((a - b).abs() / a.abs().max(1.0));
                        }
                    })
                    .unwrap();
                    let objective = outcome.trace.last().map_or(f64::NAN, |t| t.objective);
                    runs.push(GridRun {
                        case,
                        k,
                        rho,
                        scheme,
                        gap_percent: 100.0 * (objective - central) / central.abs(),
                        trace_bits: bits(&outcome.trace),
                        outcome,
                        worst_dual_sum,
                        worst_z_form,
                    });
                }
            }
        }
    }
    runs
}

fn label(r: &GridRun) -> String {
    format!("{} K={} rho={:.0e} {:?}", r.case, r.k, r.rho, r.scheme)
}

fn criterion_6(runs: &[GridRun]) -> Verdict {
    let dual = runs.iter().map(|r| r.worst_dual_sum).fold(0.0, f64::max);
    let z = runs.iter().map(|r| r.worst_z_form).fold(0.0, f64::max);
    let steps: usize = runs.iter().map(|r| r.outcome.trace.len()).sum();
    Verdict {
        pass: dual <= DUAL_SUM_PER_RHO && z <= Z_FORM_REL,
        detail: format!("{} runs, {steps} steps: max |sum y|/rho {dual:.1e}, z forms {z:.1e}", runs.len()),
    }
}

/// Recomputes ‖x_k(i) − z(i)‖ from the final iterate.
fn primal_norm(d: &OpfData, lifted: &LiftedStructure, out: &AdmmOutcome) -> f64 {
    let mut sum = 0.0;
    for (k, v) in lifted.views.iter().enumerate() {
        let model = OpfModel::subproblem(d, lifted, k).unwrap();
        for &i in &v.coupling {
            let xi = model.state_of(&out.state.x[k], i).unwrap();
            let zi = &out.state.z[lifted.coupling_position[i].unwrap()];
            sum += xi.iter().zip(zi).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    }
    sum.sqrt()
}

fn criterion_7(runs: &[GridRun]) -> Verdict {
    let mut converged = 0;
    let mut failed = Vec::new();
    for r in runs.iter().filter(|r| r.outcome.status == AdmmStatus::Converged) {
        converged += 1;
        let d = data(r.case);
        let g = d.graph();
        let lifted = build_lifted(&g, &partition_graph(&g, r.k, 0).unwrap());
        let c = &r.outcome.certificate;
        let st = &r.outcome.state;
        let independent = primal_norm(&d, &lifted, &r.outcome);
        let ok = c.primal == st.r_norm
            && rel(independent, st.r_norm) <= 1e-12
            && c.stationarity_x <= st.s_norm + c.subproblem_tolerance;
        if !ok {
            failed.push(format!(
                "{}: primal {:e} vs {:e} (recomputed {:e}), stationarity {:e} vs {:e}",
                label(r),
                c.primal,
                st.r_norm,
                independent,
                c.stationarity_x,
                st.s_norm + c.subproblem_tolerance
            ));
        }
    }
    Verdict {
        pass: converged > 0 && failed.is_empty(),
        detail: if failed.is_empty() {
            format!("{converged} converged runs close")
        } else {
            failed.join("; ")
        },
    }
}

fn criterion_8(runs: &[GridRun]) -> Verdict {
    let mut lines = Vec::new();
    let mut ok = 0;
    for r in runs {
        let converged = r.outcome.status == AdmmStatus::Converged;
        let pass = converged && r.gap_percent.abs() <= GRID_GAP_PERCENT;
        ok += usize::from(pass);
        lines.push(format!(
            "      {:<40} {:>9} steps {:>3} gap {:>8.3}% {}",
            label(r),
            if converged { "converged" } else { "max-steps" },
            r.outcome.state.step,
            r.gap_percent,
            if pass { "ok" } else { "FAIL" }
        ));
    }
    Verdict {
        pass: ok == runs.len(),
        detail: format!("{ok}/{} runs within {GRID_MAX_STEPS} steps and {GRID_GAP_PERCENT}% gap\n{}", runs.len(), lines.join("\n")),
    }
}

/// Steps to convergence, or one past the limit for runs that did not stop.
fn effective_steps(r: &GridRun) -> usize {
    match r.outcome.status {
        AdmmStatus::Converged => r.outcome.state.step,
        AdmmStatus::MaxSteps => GRID_MAX_STEPS + 1,
    }
}

fn criterion_9(runs: &[GridRun]) -> Verdict {
    let mut settings = Vec::new();
    let mut all = true;
    for k in GRID_K {
        for rho in GRID_RHO {
            let mut better = 0;
            let mut notes = Vec::new();
            for case in GRID_CASES {
                let find = |s| runs.iter().find(|r| r.case == case && r.k == k && r.rho == rho && r.scheme == s).unwrap();
                let (d, h) = (find(Scheme::Decentralized), find(Scheme::Hierarchical));
                let (ds, hs) = (effective_steps(d), effective_steps(h));
                let show = |s: usize| if s > GRID_MAX_STEPS { format!(">{GRID_MAX_STEPS}") } else { s.to_string() };
                if hs <= GRID_MAX_STEPS && hs <= ds {
                    better += 1;
                }
                let reduction = if ds <= GRID_MAX_STEPS && hs <= GRID_MAX_STEPS {
                    format!("{:+.1}%", 100.0 * (ds as f64 - hs as f64) / ds as f64)
                } else {
                    "n/a".to_string()
                };
                notes.push(format!("{case} {}->{} ({reduction})", show(ds), show(hs)));
            }
            all &= better >= WARM_MIN_CASES;
            settings.push(format!("      K={k} rho={rho:.0e}: {better}/3 [{}]", notes.join(", ")));
        }
    }
    Verdict {
        pass: all,
        detail: format!("hierarchical <= decentralized on >= {WARM_MIN_CASES} of 3 cases per setting\n{}", settings.join("\n")),
    }
}

fn criterion_10(one: &[GridRun], four: &[GridRun]) -> Verdict {
    let differing: Vec<String> = one
        .iter()
        .zip(four)
        .filter(|(a, b)| a.trace_bits != b.trace_bits || a.outcome.state.z != b.outcome.state.z)
        .map(|(a, _)| label(a))
        .collect();
    Verdict {
        pass: differing.is_empty(),
        detail: if differing.is_empty() {
            format!("{} runs bit-identical with 1 and 4 workers", one.len())
        } else {
            format!("traces differ: {}", differing.join(", "))
        },
    }
}

fn main() -> ExitCode {
    // libtest-style flags from `cargo test` are accepted and ignored
    let mut all = true;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        all &= v.pass;
        println!(
            "criterion {n:>2} {:<4} {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
    };
    report(1, "coupling-set oracle", &mut criterion_1);
    report(2, "identity coarsening", &mut criterion_2);
    report(3, "aggregation conservation", &mut criterion_3);
    report(4, "derivative correctness", &mut criterion_4);
    report(5, "nlp kernel oracle", &mut criterion_5);
    let t = Instant::now();
    let one = grid(1);
    println!("grid runs with 1 worker: {} runs [{:.1}s]", one.len(), t.elapsed().as_secs_f64());
    report(6, "consensus-dual invariant", &mut || criterion_6(&one));
    report(7, "certificate closure", &mut || criterion_7(&one));
    report(8, "end-to-end convergence", &mut || criterion_8(&one));
    report(9, "warm-start benefit", &mut || criterion_9(&one));
    report(10, "determinism", &mut || criterion_10(&one, &grid(4)));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
