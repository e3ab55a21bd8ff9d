mod common;

use hiopf_core::admm::{dual_sums, run, z_average, z_update, AdmmOptions, AdmmStatus, TraceRow};
use hiopf_core::opf::{OpfData, OpfModel};
use hiopf_core::partition::{build_lifted, partition_graph, LiftedStructure, Partitioning};
use hiopf_nlp::{solve, SolverOptions};

fn lifted(data: &OpfData, k: usize) -> LiftedStructure {
    let g = data.graph();
    build_lifted(&g, &partition_graph(&g, k, 0).unwrap())
}

fn coupling_values(l: &LiftedStructure, r: &[Vec<Vec<f64>>], z: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
    l.views
        .iter()
        .enumerate()
        .map(|(k, v)| {
            v.coupling
                .iter()
                .enumerate()
                .map(|(c, &i)| {
                    let zi = &z[l.coupling_position[i].unwrap()];
                    r[k][c].iter().zip(zi).map(|(a, b)| a + b).collect()
                })
                .collect()
        })
        .collect()
}

#[test]
fn single_part_stops_after_one_step_at_the_central_optimum() {
    let data = common::data("case14");
    let g = data.graph();
    let l = build_lifted(&g, &Partitioning::new(1, vec![0; data.n()]).unwrap());
    let out = run(&data, &l, &AdmmOptions::default(), None, |_, _| {}).unwrap();
    assert_eq!(out.status, AdmmStatus::Converged);
    assert_eq!(out.state.step, 1);
    assert_eq!((out.state.r_norm, out.state.s_norm), (0.0, 0.0));
    let central = solve(&OpfModel::central(&data), &SolverOptions::default()).unwrap();
    let f = out.trace[0].objective;
    assert!((f - central.objective).abs() <= 1e-6 * central.objective.abs());
}

#[test]
fn duals_sum_to_zero_and_z_is_the_average() {
    let data = common::data("case30");
    let l = lifted(&data, 3);
    let options = AdmmOptions {
        rho: 1e5,
        max_steps: 40,
        ..AdmmOptions::default()
    };
    let mut checked = 0;
    run(&data, &l, &options, None, |state, _| {
        for sum in dual_sums(&l, &state.y) {
            for v in sum {
                assert!(v.abs() <= 1e-8 * options.rho, "dual sum {v:e} at step {}", state.step);
            }
        }
        let xc = coupling_values(&l, &state.r, &state.z);
        let general = z_update(&l, &xc, &state.y, options.rho);
        for (a, b) in general.iter().flatten().zip(z_average(&l, &xc).iter().flatten()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        checked += 1;
    })
    .unwrap();
    assert_eq!(checked, 40);
}

fn without_timing(trace: &[TraceRow]) -> Vec<[u64; 5]> {
    trace
        .iter()
        .map(|t| {
            [
                t.step as u64,
                t.r_norm.to_bits(),
                t.s_norm.to_bits(),
                t.objective.to_bits(),
                t.aug_lagrangian.to_bits(),
            ]
        })
        .collect()
}

#[test]
fn worker_count_does_not_change_the_trace() {
    let data = common::data("case30");
    let l = lifted(&data, 4);
    let base = AdmmOptions {
        rho: 1e5,
        max_steps: 30,
        ..AdmmOptions::default()
    };
    let one = run(&data, &l, &base, None, |_, _| {}).unwrap();
    let four = run(&data, &l, &AdmmOptions { workers: 4, ..base }, None, |_, _| {}).unwrap();
    assert_eq!(without_timing(&one.trace), without_timing(&four.trace));
    assert_eq!(one.state.z, four.state.z);
}

#[test]
fn certificate_closes_on_a_converged_run() {
    let data = common::data("case14");
    let l = lifted(&data, 2);
    let options = AdmmOptions {
        rho: 1e5,
        ..AdmmOptions::default()
    };
    let out = run(&data, &l, &options, None, |_, _| {}).unwrap();
    assert_eq!(out.status, AdmmStatus::Converged);
    let c = &out.certificate;
    assert_eq!(c.primal, out.state.r_norm);
    assert!(c.stationarity_x <= out.state.s_norm + c.subproblem_tolerance);
    assert!(c.stationarity_z <= 1e-8 * options.rho);
    assert!(c.feasibility <= 1e-6);
}

#[test]
fn trace_has_one_row_per_step() {
    let data = common::data("case4_path");
    let l = lifted(&data, 2);
    let mut rows = 0;
    let out = run(&data, &l, &AdmmOptions { max_steps: 25, ..AdmmOptions::default() }, None, |_, _| rows += 1).unwrap();
    assert_eq!(out.trace.len(), rows);
    assert!(out.trace.iter().enumerate().all(|(i, t)| t.step == i + 1));
}
