//! Run reports and scheme comparisons.

use std::collections::BTreeMap;

use hiopf_core::admm::Certificate;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Scheme};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub partition_seconds: f64,
    pub coarse_seconds: f64,
    pub projection_seconds: f64,
    pub coordination_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    pub max_gradient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub case: String,
    pub config: RunConfig,
    pub solver: SolverSettings,
    /// `converged`, `max-steps`, or the NLP status of a central solve.
    pub status: String,
    pub converged: bool,
    /// Coordination steps (0 for the centralized scheme).
    pub steps: usize,
    pub objective: f64,
    pub r_norm: Option<f64>,
    pub s_norm: Option<f64>,
    pub eps_pri: Option<f64>,
    pub eps_dual: Option<f64>,
    pub certificate: Option<Certificate>,
    pub fine_nodes: usize,
    pub fine_edges: usize,
    pub coupling_nodes: usize,
    pub coarse_nodes: Option<usize>,
    pub coarse_objective: Option<f64>,
    /// Fine dual slots started at zero because their coarse image had none.
    pub orphan_duals: usize,
    pub solver_iterations: usize,
    pub timings: Timings,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeOutcome {
    pub scheme: Scheme,
    pub report: Option<RunReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub case: String,
    pub runs: Vec<SchemeOutcome>,
    /// Objective gap of each coordinated scheme to the centralized one, in percent.
    pub gap_percent: BTreeMap<String, f64>,
    /// Fewer hierarchical than decentralized steps, in percent of the latter.
    pub step_reduction_percent: Option<f64>,
    pub complete: bool,
}

pub fn gap_percent(objective: f64, centralized: f64) -> f64 {
    100.0 * (objective - centralized) / centralized.abs()
}

pub fn step_reduction_percent(decentralized: usize, hierarchical: usize) -> f64 {
    100.0 * (decentralized as f64 - hierarchical as f64) / decentralized as f64
}

impl Comparison {
    pub fn from_runs(case: String, runs: Vec<SchemeOutcome>) -> Self {
        let report = |s: Scheme| runs.iter().find(|r| r.scheme == s).and_then(|r| r.report.as_ref());
        let mut gap = BTreeMap::new();
        if let Some(c) = report(Scheme::Centralized) {
            for s in [Scheme::Decentralized, Scheme::Hierarchical] {
                if let Some(r) = report(s) {
                    gap.insert(s.name().to_string(), gap_percent(r.objective, c.objective));
                }
            }
        }
        let step_reduction_percent = match (report(Scheme::Decentralized), report(Scheme::Hierarchical)) {
            (Some(d), Some(h)) if d.steps > 0 => Some(step_reduction_percent(d.steps, h.steps)),
            _ => None,
        };
        let complete = runs.iter().all(|r| r.report.is_some());
        Self {
            case,
            runs,
            gap_percent: gap,
            step_reduction_percent,
            complete,
        }
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<14} {:>10} {:>7} {:>16} {:>9} {:>11}\n", "scheme", "status", "steps", "objective", "gap %", "time s");
        for r in &self.runs {
            match &r.report {
                Some(rep) => {
                    let gap = self.gap_percent.get(r.scheme.name()).map_or("-".into(), |g| format!("{g:.4}"));
                    out += &format!(
                        "{:<14} {:>10} {:>7} {:>16.6} {:>9} {:>11.3}\n",
                        r.scheme.name(),
                        rep.status,
                        rep.steps,
                        rep.objective,
                        gap,
                        rep.timings.total_seconds
                    );
                }
                None => out += &format!("{:<14} failed: {}\n", r.scheme.name(), r.error.as_deref().unwrap_or("")),
            }
        }
        if let Some(red) = self.step_reduction_percent {
            out += &format!("step reduction: {red:.1}%\n");
        }
        out
    }
}
