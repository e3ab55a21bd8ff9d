//! Power-network data: buses, branches, generators, MATPOWER import and the
//! nodal admittance matrix.
//!
//! All electrical quantities are per unit on `base_mva`. Buses are addressed
//! internally by their position in `NetworkCase::buses`; ids are labels.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub active_load: f64,
    pub reactive_load: f64,
    pub is_reference: bool,
    #[serde(default)]
    pub shunt_g: f64,
    #[serde(default)]
    pub shunt_b: f64,
    /// Per-bus voltage limits; the case-wide limits apply when absent.
    #[serde(default)]
    pub v_min: Option<f64>,
    #[serde(default)]
    pub v_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    pub charging: f64,
    /// Off-nominal turns ratio on the from side (1 for lines).
    #[serde(default = "unit")]
    pub tap: f64,
    /// Per-branch angle-difference limits in radians.
    #[serde(default)]
    pub angle_min: Option<f64>,
    #[serde(default)]
    pub angle_max: Option<f64>,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    /// Cost per p.u. of active power.
    pub unit_cost: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    #[serde(default)]
    pub is_artificial_slack: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    #[serde(default)]
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    /// Default angle-difference limits (radians).
    pub angle_limits: (f64, f64),
    /// Default voltage-magnitude limits (p.u.).
    pub voltage_limits: (f64, f64),
}

pub const DEFAULT_ANGLE_LIMIT: f64 = std::f64::consts::FRAC_PI_3;
pub const DEFAULT_VOLTAGE_LIMITS: (f64, f64) = (0.9, 1.1);
pub const SLACK_P_BOUNDS: (f64, f64) = (0.0, 10.0);
pub const SLACK_Q_BOUNDS: (f64, f64) = (-10.0, 10.0);
pub const DEFAULT_SLACK_COST: f64 = 1e4;

impl NetworkCase {
    /// Reads a MATPOWER `.m` file or the JSON form written by [`Self::to_json`].
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut case = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)?
        } else {
            parse_matpower(&text)?
        };
        if case.name.is_empty() {
            if let Some(stem) = path.file_stem() {
                case.name = stem.to_string_lossy().into_owned();
            }
        }
        Ok(case)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let case: Self = serde_json::from_str(text)?;
        case.validate()?;
        Ok(case)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Map from bus id to dense index.
    pub fn bus_index(&self) -> BTreeMap<usize, usize> {
        self.buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect()
    }

    /// Undirected graph over dense bus indices (parallel branches merged).
    pub fn graph(&self) -> Graph {
        let index = self.bus_index();
        let edges: Vec<(usize, usize)> = self
            .branches
            .iter()
            .map(|br| (index[&br.from_bus], index[&br.to_bus]))
            .collect();
        Graph::from_edges(self.buses.len(), &edges)
    }

    pub fn reference_buses(&self) -> Vec<usize> {
        self.buses.iter().filter(|b| b.is_reference).map(|b| b.id).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_mva > 0.0) {
            return Err(CoreError::Validation(format!("base_mva must be positive, got {}", self.base_mva)));
        }
        let mut ids = BTreeSet::new();
        for b in &self.buses {
            if !ids.insert(b.id) {
                return Err(CoreError::Integrity(format!("duplicate bus id {}", b.id)));
            }
            if !b.active_load.is_finite() || !b.reactive_load.is_finite() {
                return Err(CoreError::Integrity(format!("bus {} has a non-finite load", b.id)));
            }
        }
        for br in &self.branches {
            for bus in [br.from_bus, br.to_bus] {
                if !ids.contains(&bus) {
                    return Err(CoreError::Integrity(format!(
                        "branch {}-{} references unknown bus {bus}",
                        br.from_bus, br.to_bus
                    )));
                }
            }
            if br.from_bus == br.to_bus {
                return Err(CoreError::Integrity(format!("branch loops on bus {}", br.from_bus)));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(CoreError::SingularBranch {
                    from: br.from_bus,
                    to: br.to_bus,
                });
            }
        }
        let mut gen_ids = BTreeSet::new();
        for g in &self.generators {
            if !ids.contains(&g.bus) {
                return Err(CoreError::Integrity(format!(
                    "generator {} references unknown bus {}",
                    g.id, g.bus
                )));
            }
            if !gen_ids.insert(g.id) {
                return Err(CoreError::Integrity(format!("duplicate generator id {}", g.id)));
            }
            if g.p_min > g.p_max || g.q_min > g.q_max {
                return Err(CoreError::Integrity(format!("generator {} has inverted limits", g.id)));
            }
        }
        if !self.buses.iter().any(|b| b.is_reference) {
            return Err(CoreError::Integrity("no reference bus".into()));
        }
        if !self.graph().is_connected() {
            return Err(CoreError::Integrity("network graph is not connected".into()));
        }
        Ok(())
    }

    /// Returns a copy with one artificial slack generator per bus.
    pub fn with_slack_generators(&self, slack_cost: f64) -> Self {
        let mut case = self.clone();
        let max_real = self
            .generators
            .iter()
            .filter(|g| !g.is_artificial_slack)
            .map(|g| g.unit_cost)
            .fold(f64::NEG_INFINITY, f64::max);
        if slack_cost <= max_real {
            warn!("slack cost {slack_cost} does not exceed the largest generator cost {max_real}");
        }
        let mut next_id = self.generators.iter().map(|g| g.id + 1).max().unwrap_or(0);
        for b in &self.buses {
            case.generators.push(Generator {
                id: next_id,
                bus: b.id,
                unit_cost: slack_cost,
                p_min: SLACK_P_BOUNDS.0,
                p_max: SLACK_P_BOUNDS.1,
                q_min: SLACK_Q_BOUNDS.0,
                q_max: SLACK_Q_BOUNDS.1,
                is_artificial_slack: true,
            });
            next_id += 1;
        }
        case
    }

    pub fn admittance(&self) -> Result<Admittance> {
        build_admittance(self)
    }
}

/// Sparse nodal admittance matrix over dense bus indices. Each row lists
/// `(column, G, B)` sorted by column and always holds the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Admittance {
    pub rows: Vec<Vec<(usize, f64, f64)>>,
}

impl Admittance {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<(f64, f64)> {
        let row = &self.rows[i];
        row.binary_search_by_key(&j, |e| e.0).ok().map(|k| (row[k].1, row[k].2))
    }

    pub fn from_entries(n: usize, entries: &BTreeMap<(usize, usize), (f64, f64)>) -> Self {
        let mut rows: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); n];
        for i in 0..n {
            if !entries.contains_key(&(i, i)) {
                rows[i].push((i, 0.0, 0.0));
            }
        }
        for (&(i, j), &(g, b)) in entries {
            rows[i].push((j, g, b));
        }
        for row in &mut rows {
            row.sort_by_key(|e| e.0);
        }
        Self { rows }
    }
}

/// Y-bus with the standard two-port branch model (real taps only) plus bus
/// shunts.
pub fn build_admittance(case: &NetworkCase) -> Result<Admittance> {
    let index = case.bus_index();
    let mut entries: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    let mut add = |i: usize, j: usize, g: f64, b: f64| {
        let e = entries.entry((i, j)).or_insert((0.0, 0.0));
        e.0 += g;
        e.1 += b;
    };
    for (k, bus) in case.buses.iter().enumerate() {
        add(k, k, bus.shunt_g, bus.shunt_b);
    }
    for br in &case.branches {
        if br.r == 0.0 && br.x == 0.0 {
            return Err(CoreError::SingularBranch {
                from: br.from_bus,
                to: br.to_bus,
            });
        }
        let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
        let d = br.r * br.r + br.x * br.x;
        let (gs, bs) = (br.r / d, -br.x / d);
        let tap = if br.tap == 0.0 { 1.0 } else { br.tap };
        let t2 = tap * tap;
        add(f, f, gs / t2, (bs + br.charging / 2.0) / t2);
        add(t, t, gs, bs + br.charging / 2.0);
        add(f, t, -gs / tap, -bs / tap);
        add(t, f, -gs / tap, -bs / tap);
    }
    Ok(Admittance::from_entries(case.buses.len(), &entries))
}

/// Adds one artificial slack generator per bus (see
/// [`NetworkCase::with_slack_generators`]).
pub fn add_slack_generators(case: &NetworkCase, slack_cost: f64) -> NetworkCase {
    case.with_slack_generators(slack_cost)
}

// ---------------------------------------------------------------------------
// MATPOWER import

/// Numeric matrix assigned to `mpc.<name>`, or `None` if absent.
fn matrix_section(text: &str, name: &str) -> Result<Option<Vec<Vec<f64>>>> {
    let key = format!("mpc.{name}");
    let mut lines = text.lines();
    let mut found = false;
    let mut body = String::new();
    for line in lines.by_ref() {
        let code = line.split('%').next().unwrap_or("");
        if let Some(rest) = code.trim_start().strip_prefix(&key) {
            let rest = rest.trim_start();
            if let Some(after_eq) = rest.strip_prefix('=') {
                let after_eq = after_eq.trim_start();
                let Some(inner) = after_eq.strip_prefix('[') else {
                    return Err(CoreError::Parse {
                        section: name.into(),
                        message: "expected a numeric matrix".into(),
                    });
                };
                found = true;
                body.push_str(inner);
                body.push('\n');
                break;
            }
        }
    }
    if !found {
        return Ok(None);
    }
    let mut closed = body.contains(']');
    if !closed {
        for line in lines {
            let code = line.split('%').next().unwrap_or("");
            body.push_str(code);
            body.push('\n');
            if code.contains(']') {
                closed = true;
                break;
            }
        }
    }
    if !closed {
        return Err(CoreError::Parse {
            section: name.into(),
            message: "unterminated matrix".into(),
        });
    }
    let body = &body[..body.find(']').unwrap_or(body.len())];
    let mut rows = Vec::new();
    for row in body.split([';', '\n']) {
        let row = row.trim();
        if row.is_empty() {
            continue;
        }
        let vals = row
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| CoreError::Parse {
                    section: name.into(),
                    message: format!("bad number '{t}'"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(vals);
    }
    Ok(Some(rows))
}

fn scalar(text: &str, name: &str) -> Option<f64> {
    let key = format!("mpc.{name}");
    text.lines().find_map(|line| {
        let code = line.split('%').next()?.trim();
        let rest = code.strip_prefix(&key)?.trim_start().strip_prefix('=')?;
        rest.trim().trim_end_matches(';').trim().parse().ok()
    })
}

fn required(text: &str, name: &str, min_cols: usize) -> Result<Vec<Vec<f64>>> {
    let rows = matrix_section(text, name)?.ok_or_else(|| CoreError::Parse {
        section: name.into(),
        message: "section missing".into(),
    })?;
    for (k, r) in rows.iter().enumerate() {
        if r.len() < min_cols {
            return Err(CoreError::Parse {
                section: name.into(),
                message: format!("row {} has {} columns, expected at least {min_cols}", k + 1, r.len()),
            });
        }
    }
    Ok(rows)
}

fn as_id(v: f64, section: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(CoreError::Parse {
            section: section.into(),
            message: format!("invalid bus number {v}"),
        })
    }
}

/// Angle limit in degrees; ±360 (or beyond) means unconstrained.
fn angle_limit(deg: Option<&f64>) -> Option<f64> {
    match deg {
        Some(&d) if d.abs() < 360.0 => Some(d.to_radians()),
        _ => None,
    }
}

/// Parses a MATPOWER version-2 case file.
pub fn parse_matpower(text: &str) -> Result<NetworkCase> {
    let base_mva = scalar(text, "baseMVA").ok_or_else(|| CoreError::Parse {
        section: "baseMVA".into(),
        message: "section missing".into(),
    })?;
    let bus_rows = required(text, "bus", 13)?;
    let gen_rows = required(text, "gen", 10)?;
    let branch_rows = required(text, "branch", 11)?;
    let cost_rows = required(text, "gencost", 4)?;

    let mut buses = Vec::new();
    let mut isolated = BTreeSet::new();
    for row in &bus_rows {
        let id = as_id(row[0], "bus")?;
        if row[1] == 4.0 {
            isolated.insert(id);
            continue;
        }
        buses.push(Bus {
            id,
            active_load: row[2] / base_mva,
            reactive_load: row[3] / base_mva,
            is_reference: row[1] == 3.0,
            shunt_g: row[4] / base_mva,
            shunt_b: row[5] / base_mva,
            v_min: Some(row[12]),
            v_max: Some(row[11]),
        });
    }
    let ids: BTreeSet<usize> = buses.iter().map(|b| b.id).collect();
    let check = |bus: usize, what: &str| -> Result<()> {
        if ids.contains(&bus) || isolated.contains(&bus) {
            Ok(())
        } else {
            Err(CoreError::Integrity(format!("{what} references unknown bus {bus}")))
        }
    };

    let mut branches = Vec::new();
    for (k, row) in branch_rows.iter().enumerate() {
        let (f, t) = (as_id(row[0], "branch")?, as_id(row[1], "branch")?);
        check(f, &format!("branch {}", k + 1))?;
        check(t, &format!("branch {}", k + 1))?;
        if row[10] <= 0.0 || isolated.contains(&f) || isolated.contains(&t) {
            continue;
        }
        if row.get(9).copied().unwrap_or(0.0) != 0.0 {
            return Err(CoreError::Unsupported(format!(
                "branch {f}-{t} has a phase shift of {} degrees",
                row[9]
            )));
        }
        // older files use 0/0 for "no limit"
        let both_zero = row.get(11) == Some(&0.0) && row.get(12) == Some(&0.0);
        branches.push(Branch {
            from_bus: f,
            to_bus: t,
            r: row[2],
            x: row[3],
            charging: row[4],
            tap: if row[8] == 0.0 { 1.0 } else { row[8] },
            angle_min: if both_zero { None } else { angle_limit(row.get(11)) },
            angle_max: if both_zero { None } else { angle_limit(row.get(12)) },
        });
    }

    if cost_rows.len() < gen_rows.len() {
        return Err(CoreError::Parse {
            section: "gencost".into(),
            message: format!("{} rows for {} generators", cost_rows.len(), gen_rows.len()),
        });
    }
    let mut generators = Vec::new();
    let mut dropped_terms = 0usize;
    for (k, row) in gen_rows.iter().enumerate() {
        let bus = as_id(row[0], "gen")?;
        check(bus, &format!("generator {}", k + 1))?;
        if row[7] <= 0.0 || isolated.contains(&bus) {
            continue;
        }
        let cost = &cost_rows[k];
        let linear = match cost[0] as i64 {
            2 => {
                let ncost = cost[3] as usize;
                let coeffs = cost.get(4..4 + ncost).ok_or_else(|| CoreError::Parse {
                    section: "gencost".into(),
                    message: format!("row {} is shorter than its NCOST", k + 1),
                })?;
                if coeffs.iter().rev().skip(2).any(|c| *c != 0.0) {
                    dropped_terms += 1;
                }
                if ncost >= 2 {
                    coeffs[ncost - 2]
                } else {
                    0.0
                }
            }
            1 => {
                // piecewise linear: slope of the first segment
                if cost.len() >= 8 && cost[6] != cost[4] {
                    dropped_terms += 1;
                    (cost[7] - cost[5]) / (cost[6] - cost[4])
                } else {
                    0.0
                }
            }
            other => {
                return Err(CoreError::Parse {
                    section: "gencost".into(),
                    message: format!("unknown cost model {other}"),
                })
            }
        };
        generators.push(Generator {
            id: k + 1,
            bus,
            unit_cost: linear * base_mva,
            p_min: row[9] / base_mva,
            p_max: row[8] / base_mva,
            q_min: row[4] / base_mva,
            q_max: row[3] / base_mva,
            is_artificial_slack: false,
        });
    }
    if dropped_terms > 0 {
        warn!("kept only the linear cost coefficient of {dropped_terms} generators");
    }

    let case = NetworkCase {
        name: String::new(),
        base_mva,
        buses,
        branches,
        generators,
        angle_limits: (-DEFAULT_ANGLE_LIMIT, DEFAULT_ANGLE_LIMIT),
        voltage_limits: DEFAULT_VOLTAGE_LIMITS,
    };
    case.validate()?;
    Ok(case)
}
