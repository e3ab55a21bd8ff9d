//! parse → slack → partition → lift → [coarsen → coarse solve → project] → run

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use hiopf_core::admm::{self, AdmmStatus, TRACE_HEADER};
use hiopf_core::coarsen::{
    coarse_network_case, project_solution, solve_coarse, subpartition, CoarseCase, CoarseMode,
};
use hiopf_core::graph::Graph;
use hiopf_core::network::NetworkCase;
use hiopf_core::opf::{OpfData, OpfModel};
use hiopf_core::partition::{build_lifted, coupling_sets, partition_graph, Partitioning};
use hiopf_core::CoreError;
use hiopf_nlp::solve_warm;
use log::info;

use crate::config::{RunConfig, Scheme};
use crate::report::{Comparison, RunReport, SchemeOutcome, SolverSettings, Timings};
use crate::CliError;

fn tag(module: &'static str) -> impl Fn(CoreError) -> CliError {
    move |e| CliError::new(module, e.to_string())
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::new("io", format!("{}: {e}", path.display()))
}

pub fn load(cfg: &RunConfig) -> Result<(NetworkCase, OpfData), CliError> {
    let case = NetworkCase::from_file(&cfg.case).map_err(tag("network-model"))?;
    case.validate().map_err(tag("network-model"))?;
    if !(cfg.slack_cost > 0.0) {
        return Err(CliError::new("network-model", "slack cost must be positive"));
    }
    let case = case.with_slack_generators(cfg.slack_cost);
    let data = OpfData::from_case(&case).map_err(tag("network-model"))?;
    Ok((case, data))
}

pub fn partition(cfg: &RunConfig, g: &Graph) -> Result<Partitioning, CliError> {
    partition_graph(g, cfg.partitions, cfg.seed).map_err(tag("partitioner"))
}

fn solver_settings(cfg: &RunConfig) -> SolverSettings {
    let o = cfg.solver_options();
    SolverSettings {
        tol: o.tol,
        max_iter: o.max_iter,
        mu_init: o.mu_init,
        max_gradient: o.max_gradient,
    }
}

/// Writes the trace header and one flushed line per step.
struct TraceWriter {
    path: PathBuf,
    out: BufWriter<File>,
    error: Option<std::io::Error>,
}

impl TraceWriter {
    fn create(path: &Path) -> Result<Self, CliError> {
        let mut out = BufWriter::new(File::create(path).map_err(io(path))?);
        writeln!(out, "{TRACE_HEADER}").and_then(|_| out.flush()).map_err(io(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            out,
            error: None,
        })
    }

    fn push(&mut self, line: &str) {
        if self.error.is_none() {
            if let Err(e) = writeln!(self.out, "{line}").and_then(|_| self.out.flush()) {
                self.error = Some(e);
            }
        }
    }

    fn finish(self) -> Result<(), CliError> {
        match self.error {
            Some(e) => Err(io(&self.path)(e)),
            None => Ok(()),
        }
    }
}

/// Runs one scheme. The trace CSV goes to `trace` when given.
pub fn run_scheme(cfg: &RunConfig, trace: Option<&Path>) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let (_, data) = load(cfg)?;
    let options = cfg.admm_options();
    options.validate().map_err(tag("admm"))?;
    let g = data.graph();
    let mut timings = Timings::default();
    let mut report = RunReport {
        case: cfg.case.display().to_string(),
        config: cfg.clone(),
        solver: solver_settings(cfg),
        status: String::new(),
        converged: false,
        steps: 0,
        objective: f64::NAN,
        r_norm: None,
        s_norm: None,
        eps_pri: None,
        eps_dual: None,
        certificate: None,
        fine_nodes: data.n(),
        fine_edges: g.num_edges(),
        coupling_nodes: 0,
        coarse_nodes: None,
        coarse_objective: None,
        orphan_duals: 0,
        solver_iterations: 0,
        timings: Timings::default(),
    };

    if cfg.scheme == Scheme::Centralized {
        let t = Instant::now();
        let model = OpfModel::central(&data);
        let sol = solve_warm(&model, &options.solver, None, &mut Default::default())
            .map_err(|e| CliError::new("nlp-solver", e.to_string()))?;
        timings.coordination_seconds = t.elapsed().as_secs_f64();
        report.status = sol.status.to_string();
        report.converged = sol.is_optimal();
        report.objective = sol.objective;
        report.solver_iterations = sol.iterations;
        if let Some(p) = trace {
            TraceWriter::create(p)?.finish()?;
        }
    } else {
        let t = Instant::now();
        let p = partition(cfg, &g)?;
        let lifted = build_lifted(&g, &p);
        timings.partition_seconds = t.elapsed().as_secs_f64();
        report.coupling_nodes = lifted.global_coupling.len();

        let initial = if cfg.scheme == Scheme::Hierarchical {
            let t = Instant::now();
            let sub = subpartition(&g, &p, cfg.subparts_per_partition, cfg.seed).map_err(tag("coarsener"))?;
            let coarse = CoarseCase::build(&data, sub, cfg.partitions).map_err(tag("coarsener"))?;
            let csol = solve_coarse(&coarse, CoarseMode::Central, &options).map_err(tag("coarsener"))?;
            timings.coarse_seconds = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let (point, orphans) = project_solution(&data, &lifted, &coarse, &csol);
            timings.projection_seconds = t.elapsed().as_secs_f64();
            report.coarse_nodes = Some(coarse.data.n());
            report.coarse_objective = Some(csol.objective);
            report.orphan_duals = orphans;
            info!("coarse problem: {} nodes, objective {:.6}", coarse.data.n(), csol.objective);
            Some(point)
        } else {
            None
        };

        let t = Instant::now();
        let mut writer = trace.map(TraceWriter::create).transpose()?;
        let result = admm::run(&data, &lifted, &options, initial.as_ref(), |state, row| {
            if let Some(w) = writer.as_mut() {
                w.push(&row.csv_line());
            }
            log::debug!("step {} r {:.3e} s {:.3e}", state.step, state.r_norm, state.s_norm);
        });
        if let Some(w) = writer {
            w.finish()?;
        }
        let out = result.map_err(tag("admm"))?;
        timings.coordination_seconds = t.elapsed().as_secs_f64();
        report.status = match out.status {
            AdmmStatus::Converged => "converged",
            AdmmStatus::MaxSteps => "max-steps",
        }
        .into();
        report.converged = out.status == AdmmStatus::Converged;
        report.steps = out.state.step;
        report.objective = out.trace.last().map_or(f64::NAN, |r| r.objective);
        report.r_norm = Some(out.state.r_norm);
        report.s_norm = Some(out.state.s_norm);
        report.eps_pri = Some(out.state.eps_pri);
        report.eps_dual = Some(out.state.eps_dual);
        report.certificate = Some(out.certificate);
        report.solver_iterations = out.solver_iterations.iter().flatten().sum();
    }
    timings.total_seconds = start.elapsed().as_secs_f64();
    report.timings = timings;
    Ok(report)
}

/// `solve`: report.json and trace.csv under the output directory.
pub fn cmd_solve(cfg: &RunConfig) -> Result<RunReport, CliError> {
    std::fs::create_dir_all(&cfg.out).map_err(io(&cfg.out))?;
    let report = run_scheme(cfg, Some(&cfg.out.join("trace.csv")))?;
    let path = cfg.out.join("report.json");
    std::fs::write(&path, report.to_json()).map_err(io(&path))?;
    Ok(report)
}

/// `compare`: each scheme in its own subdirectory, then comparison.json.
pub fn cmd_compare(cfg: &RunConfig, schemes: &[Scheme]) -> Result<Comparison, CliError> {
    let mut unique = schemes.to_vec();
    unique.dedup();
    if unique.len() < 2 {
        return Err(CliError::new("config", "compare needs at least two schemes"));
    }
    let mut runs = Vec::new();
    for &scheme in &unique {
        let c = RunConfig {
            scheme,
            out: cfg.out.join(scheme.name()),
            ..cfg.clone()
        };
        match cmd_solve(&c) {
            Ok(report) => runs.push(SchemeOutcome {
                scheme,
                report: Some(report),
                error: None,
            }),
            Err(e) => {
                log::error!("{} run failed: {e}", scheme.name());
                runs.push(SchemeOutcome {
                    scheme,
                    report: None,
                    error: Some(e.to_string()),
                })
            }
        }
    }
    let cmp = Comparison::from_runs(cfg.case.display().to_string(), runs);
    let path = cfg.out.join("comparison.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cmp).expect("comparison serializes")).map_err(io(&path))?;
    Ok(cmp)
}

pub fn stats_line(label: &str, g: &Graph, p: &Partitioning) -> String {
    let (_, coupling) = coupling_sets(g, p);
    format!(
        "{label}: nodes {} edges {} partitions {} coupling {}",
        g.n(),
        g.num_edges(),
        p.k,
        coupling.len()
    )
}

/// `partition`: partition.txt; returns the statistics line.
pub fn cmd_partition(cfg: &RunConfig) -> Result<String, CliError> {
    let (_, data) = load(cfg)?;
    let g = data.graph();
    let p = partition(cfg, &g)?;
    std::fs::create_dir_all(&cfg.out).map_err(io(&cfg.out))?;
    let path = cfg.out.join("partition.txt");
    std::fs::write(&path, p.to_text(&data.labels)).map_err(io(&path))?;
    Ok(stats_line("fine", &g, &p))
}

/// `coarsen`: partition.txt, coarse.json and coarse_map.txt; returns the
/// fine and coarse statistics lines.
pub fn cmd_coarsen(cfg: &RunConfig) -> Result<String, CliError> {
    let (case, data) = load(cfg)?;
    let g = data.graph();
    let p = partition(cfg, &g)?;
    let sub = subpartition(&g, &p, cfg.subparts_per_partition, cfg.seed).map_err(tag("coarsener"))?;
    let coarse = CoarseCase::build(&data, sub, cfg.partitions).map_err(tag("coarsener"))?;
    let exported = coarse_network_case(&case, &coarse).map_err(tag("coarsener"))?;
    std::fs::create_dir_all(&cfg.out).map_err(io(&cfg.out))?;
    let files = [
        ("partition.txt", p.to_text(&data.labels)),
        ("coarse.json", exported.to_json().map_err(tag("coarsener"))?),
        ("coarse_map.txt", coarse.map_text(&data)),
    ];
    for (name, text) in files {
        let path = cfg.out.join(name);
        std::fs::write(&path, text).map_err(io(&path))?;
    }
    Ok(format!(
        "{}\n{}",
        stats_line("fine", &g, &p),
        stats_line("coarse", &coarse.graph.graph, &coarse.graph.partitioning)
    ))
}
