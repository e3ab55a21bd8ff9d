//! Run configuration: defaults, an optional `key = value` file, then flags.

use std::path::{Path, PathBuf};

use hiopf_core::admm::AdmmOptions;
use hiopf_core::network::DEFAULT_SLACK_COST;
use hiopf_nlp::SolverOptions;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Centralized,
    Decentralized,
    Hierarchical,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Centralized => "centralized",
            Scheme::Decentralized => "decentralized",
            Scheme::Hierarchical => "hierarchical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub case: PathBuf,
    pub scheme: Scheme,
    pub partitions: usize,
    /// `None` picks roughly four fine nodes per subpartition.
    pub subparts_per_partition: Option<usize>,
    pub rho: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_steps: usize,
    pub seed: u64,
    pub workers: usize,
    pub slack_cost: f64,
    pub out: PathBuf,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let admm = AdmmOptions::default();
        let solver = SolverOptions::default();
        Self {
            case: PathBuf::new(),
            scheme: Scheme::Hierarchical,
            partitions: 2,
            subparts_per_partition: None,
            rho: admm.rho,
            eps_abs: admm.eps_abs,
            eps_rel: admm.eps_rel,
            max_steps: admm.max_steps,
            seed: 0,
            workers: admm.workers,
            slack_cost: DEFAULT_SLACK_COST,
            out: PathBuf::from("hiopf-out"),
            solver_tol: solver.tol,
            solver_max_iter: solver.max_iter,
        }
    }
}

/// Every field optional; used for both the config file and the flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Overrides {
    pub case: Option<PathBuf>,
    pub scheme: Option<Scheme>,
    #[serde(alias = "k")]
    pub partitions: Option<usize>,
    pub subparts_per_partition: Option<usize>,
    pub rho: Option<f64>,
    pub eps_abs: Option<f64>,
    pub eps_rel: Option<f64>,
    pub max_steps: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub slack_cost: Option<f64>,
    pub out: Option<PathBuf>,
    pub solver_tol: Option<f64>,
    pub solver_max_iter: Option<usize>,
}

impl Overrides {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::new("config", format!("{}: {}", path.display(), e.message)))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        // underscores and dashes are both accepted in keys
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::new("config", e.message()))?;
        let normalized: toml::Table = table.into_iter().map(|(k, v)| (k.replace('_', "-"), v)).collect();
        normalized
            .try_into()
            .map_err(|e: toml::de::Error| CliError::new("config", e.message()))
    }

    pub fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { c.$f = v.clone(); } )* };
        }
        set!(case, scheme, partitions, rho, eps_abs, eps_rel, max_steps, seed, workers, slack_cost, out, solver_tol, solver_max_iter);
        if self.subparts_per_partition.is_some() {
            c.subparts_per_partition = self.subparts_per_partition;
        }
    }
}

impl RunConfig {
    /// Defaults, then the file, then the flags.
    pub fn resolve(file: Option<&Overrides>, flags: &Overrides) -> Result<Self, CliError> {
        let mut c = Self::default();
        if let Some(f) = file {
            f.apply(&mut c);
        }
        flags.apply(&mut c);
        if c.case.as_os_str().is_empty() {
            return Err(CliError::new("config", "no case file given (use --case)"));
        }
        if c.partitions == 0 {
            return Err(CliError::new("config", "at least one partition is required"));
        }
        Ok(c)
    }

    pub fn admm_options(&self) -> AdmmOptions {
        AdmmOptions {
            rho: self.rho,
            eps_abs: self.eps_abs,
            eps_rel: self.eps_rel,
            max_steps: self.max_steps,
            workers: self.workers,
            solver: self.solver_options(),
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver_tol,
            max_iter: self.solver_max_iter,
            ..SolverOptions::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file = Overrides::parse("rho = 1e5\nmax_steps = 40\nscheme = \"decentralized\"\ncase = \"a.m\"").unwrap();
        let flags = Overrides {
            rho: Some(2e5),
            ..Overrides::default()
        };
        let c = RunConfig::resolve(Some(&file), &flags).unwrap();
        assert_eq!(c.rho, 2e5);
        assert_eq!(c.max_steps, 40);
        assert_eq!(c.scheme, Scheme::Decentralized);
        assert_eq!(c.eps_abs, 5e-4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Overrides::parse("rhoo = 1").is_err());
    }

    #[test]
    fn dashed_and_underscored_keys_agree() {
        let a = Overrides::parse("eps-abs = 0.1").unwrap();
        let b = Overrides::parse("eps_abs = 0.1").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_case_is_an_error() {
        assert!(RunConfig::resolve(None, &Overrides::default()).is_err());
    }
}
