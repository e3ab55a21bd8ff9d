//! Supervisory layer: subpartitions, the aggregated coarse network, its
//! solution, and the projection of that solution onto the fine lifted
//! problem.

use std::collections::BTreeMap;

use hiopf_nlp::{solve_warm, PrimalDualSolution, SolverCache};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::admm::{self, AdmmOptions, InitialPoint};
use crate::error::{CoreError, Result};
use crate::graph::Graph;
use crate::network::{Branch, Bus, Generator, NetworkCase};
use crate::opf::{EdgeData, GenData, OpfData, OpfModel};
use crate::partition::{build_lifted, coupling_sets, partition_graph, LiftedStructure, Partitioning};
use crate::network::Admittance;

/// Subpartitions nested in the parts of a partitioning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubpartitionStructure {
    /// Fine nodes of each coarse node, ascending.
    pub sets: Vec<Vec<usize>>,
    /// Part containing each subpartition.
    pub parent: Vec<usize>,
    /// Coarse node of each fine node.
    pub phi: Vec<usize>,
}

impl SubpartitionStructure {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Partitioning of the coarse nodes inherited from their parents.
    pub fn coarse_partitioning(&self, k: usize) -> Result<Partitioning> {
        Partitioning::new(k, self.parent.clone())
    }
}

/// Roughly four fine nodes per subpartition.
pub fn default_subparts(part_size: usize) -> usize {
    ((part_size as f64 / 4.0).round() as usize).clamp(1, part_size.max(1))
}

/// Splits every part of `p` with the partitioner. `per_part = None` picks
/// [`default_subparts`] for each part.
pub fn subpartition(g: &Graph, p: &Partitioning, per_part: Option<usize>, seed: u64) -> Result<SubpartitionStructure> {
    if per_part == Some(0) {
        return Err(CoreError::Argument("at least one subpartition per part is required".into()));
    }
    let mut sets = Vec::new();
    let mut parent = Vec::new();
    let mut phi = vec![0; g.n()];
    for (k, members) in p.parts().into_iter().enumerate() {
        let count = per_part.unwrap_or_else(|| default_subparts(members.len()));
        if count > members.len() {
            return Err(CoreError::Argument(format!(
                "part {k} has {} nodes, cannot form {count} subpartitions",
                members.len()
            )));
        }
        let local = partition_graph(&g.induced(&members), count, seed)?;
        for sub in local.parts() {
            let set: Vec<usize> = sub.iter().map(|&l| members[l]).collect();
            for &i in &set {
                phi[i] = sets.len();
            }
            sets.push(set);
            parent.push(k);
        }
    }
    Ok(SubpartitionStructure { sets, parent, phi })
}

/// One subpartition per node; the coarse network is the fine one relabelled.
pub fn singleton_subpartitions(p: &Partitioning) -> SubpartitionStructure {
    let mut sets = Vec::new();
    let mut parent = Vec::new();
    let mut phi = vec![0; p.assignment.len()];
    for (k, members) in p.parts().into_iter().enumerate() {
        for i in members {
            phi[i] = sets.len();
            sets.push(vec![i]);
            parent.push(k);
        }
    }
    SubpartitionStructure { sets, parent, phi }
}

/// Quotient graph over subpartitions.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseGraph {
    pub graph: Graph,
    /// Fine edges `(i, j)` (with `i < j`) between each pair of coarse
    /// nodes `(a, b)`, `a <= b`; `a == b` are the internal bundles.
    pub bundles: BTreeMap<(usize, usize), Vec<(usize, usize)>>,
    pub partitioning: Partitioning,
    pub coupling: Vec<Vec<usize>>,
    pub global_coupling: Vec<usize>,
}

pub fn build_coarse_graph(g: &Graph, sub: &SubpartitionStructure, k: usize) -> Result<CoarseGraph> {
    let mut bundles: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    for (i, j) in g.edges() {
        let (a, b) = (sub.phi[i], sub.phi[j]);
        bundles.entry((a.min(b), a.max(b))).or_default().push((i, j));
    }
    let edges: Vec<(usize, usize)> = bundles.keys().copied().filter(|(a, b)| a != b).collect();
    let graph = Graph::from_edges(sub.len(), &edges);
    let partitioning = sub.coarse_partitioning(k)?;
    let (coupling, global_coupling) = coupling_sets(&graph, &partitioning);
    Ok(CoarseGraph {
        graph,
        bundles,
        partitioning,
        coupling,
        global_coupling,
    })
}

/// Aggregated network: the coarse graph plus OPF data over coarse nodes.
#[derive(Debug, Clone)]
pub struct CoarseCase {
    pub sub: SubpartitionStructure,
    pub graph: CoarseGraph,
    pub data: OpfData,
}

impl CoarseCase {
    pub fn build(fine: &OpfData, sub: SubpartitionStructure, k: usize) -> Result<Self> {
        let graph = build_coarse_graph(&fine.graph(), &sub, k)?;
        let data = aggregate_data(fine, &graph, &sub);
        Ok(Self { sub, graph, data })
    }

    pub fn lifted(&self) -> LiftedStructure {
        build_lifted(&self.graph.graph, &self.graph.partitioning)
    }

    /// `fine_id coarse_id` lines.
    pub fn map_text(&self, fine: &OpfData) -> String {
        fine.labels
            .iter()
            .zip(&self.sub.phi)
            .map(|(f, &c)| format!("{f} {}\n", self.data.labels[c]))
            .collect()
    }
}

/// Coarse admittance: each fine entry `(i, j)` lands in `(φ(i), φ(j))`.
/// On the diagonal this is `Σ G_ii + Σ_internal 2 G_ij`.
pub fn aggregate_admittance(y: &Admittance, phi: &[usize], n_coarse: usize) -> Admittance {
    let mut entries: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for (i, row) in y.rows.iter().enumerate() {
        for &(j, g, b) in row {
            let e = entries.entry((phi[i], phi[j])).or_insert((0.0, 0.0));
            e.0 += g;
            e.1 += b;
        }
    }
    Admittance::from_entries(n_coarse, &entries)
}

pub fn aggregate_data(fine: &OpfData, cg: &CoarseGraph, sub: &SubpartitionStructure) -> OpfData {
    let nc = sub.len();
    let mean = |set: &[usize], v: &[f64]| set.iter().map(|&i| v[i]).sum::<f64>() / set.len() as f64;
    let mut gens: Vec<GenData> = fine
        .gens
        .iter()
        .map(|g| GenData {
            node: sub.phi[g.node],
            ..g.clone()
        })
        .collect();
    gens.sort_by_key(|g| g.id);

    // angle limits averaged over each bundle, oriented from the lower coarse node
    let mut fine_limits: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for e in &fine.edges {
        fine_limits.insert((e.a, e.b), (e.min, e.max));
    }
    let mut edges = Vec::new();
    for (&(a, b), bundle) in &cg.bundles {
        if a == b {
            continue;
        }
        let (mut lo, mut hi) = (0.0, 0.0);
        for &(i, j) in bundle {
            let (mn, mx) = fine_limits[&(i, j)];
            if sub.phi[i] == a {
                lo += mn;
                hi += mx;
            } else {
                lo -= mx;
                hi -= mn;
            }
        }
        let m = bundle.len() as f64;
        edges.push(EdgeData {
            a,
            b,
            min: lo / m,
            max: hi / m,
        });
    }

    OpfData::assemble(
        sub.sets.iter().map(|s| fine.labels[s[0]]).collect(),
        aggregate_admittance(&fine.y, &sub.phi, nc),
        sub.sets.iter().map(|s| s.iter().map(|&i| fine.p_load[i]).sum()).collect(),
        sub.sets.iter().map(|s| s.iter().map(|&i| fine.q_load[i]).sum()).collect(),
        sub.sets.iter().map(|s| mean(s, &fine.v_min)).collect(),
        sub.sets.iter().map(|s| mean(s, &fine.v_max)).collect(),
        sub.sets.iter().map(|s| s.iter().any(|&i| fine.is_ref[i])).collect(),
        gens,
        edges,
        nc,
    )
}

/// Coarse network in the `NetworkCase` form: cross branches are kept as
/// they are, internal ones fold into bus shunts. Rebuilding the admittance
/// of the result reproduces the aggregated matrix up to rounding.
pub fn coarse_network_case(fine_case: &NetworkCase, coarse: &CoarseCase) -> Result<NetworkCase> {
    let index = fine_case.bus_index();
    let phi = &coarse.sub.phi;
    let labels = &coarse.data.labels;
    let mut limits: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for e in &coarse.data.edges {
        limits.insert((e.a, e.b), (e.min, e.max));
    }
    // start from the aggregated diagonal and remove what cross branches restamp
    let mut shunt: Vec<(f64, f64)> = (0..coarse.sub.len())
        .map(|c| coarse.data.y.get(c, c).unwrap_or((0.0, 0.0)))
        .collect();
    let mut branches = Vec::new();
    for br in &fine_case.branches {
        let (f, t) = (phi[index[&br.from_bus]], phi[index[&br.to_bus]]);
        if f == t {
            continue;
        }
        let d = br.r * br.r + br.x * br.x;
        let (gs, bs) = (br.r / d, -br.x / d);
        let tap = if br.tap == 0.0 { 1.0 } else { br.tap };
        shunt[f].0 -= gs / (tap * tap);
        shunt[f].1 -= (bs + br.charging / 2.0) / (tap * tap);
        shunt[t].0 -= gs;
        shunt[t].1 -= bs + br.charging / 2.0;
        let (mn, mx) = if f < t { limits[&(f, t)] } else { (-limits[&(t, f)].1, -limits[&(t, f)].0) };
        branches.push(Branch {
            from_bus: labels[f],
            to_bus: labels[t],
            angle_min: Some(mn),
            angle_max: Some(mx),
            ..br.clone()
        });
    }
    let d = &coarse.data;
    let buses = (0..coarse.sub.len())
        .map(|c| Bus {
            id: labels[c],
            active_load: d.p_load[c],
            reactive_load: d.q_load[c],
            is_reference: d.is_ref[c],
            shunt_g: shunt[c].0,
            shunt_b: shunt[c].1,
            v_min: Some(d.v_min[c]),
            v_max: Some(d.v_max[c]),
        })
        .collect();
    let generators = fine_case
        .generators
        .iter()
        .map(|g| Generator {
            bus: labels[phi[index[&g.bus]]],
            ..g.clone()
        })
        .collect();
    let case = NetworkCase {
        name: format!("{}-coarse", fine_case.name),
        base_mva: fine_case.base_mva,
        buses,
        branches,
        generators,
        angle_limits: fine_case.angle_limits,
        voltage_limits: fine_case.voltage_limits,
    };
    case.validate()?;
    Ok(case)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CoarseMode {
    #[default]
    Central,
    Admm,
}

/// Coarse primal-dual point in lifted form.
#[derive(Debug, Clone)]
pub struct CoarseSolution {
    /// State of every coarse node.
    pub states: Vec<Vec<f64>>,
    pub objective: f64,
    pub lifted: LiftedStructure,
    /// Per coarse coupling node.
    pub z: Vec<Vec<f64>>,
    /// Per coarse part, per coupling node of the part.
    pub y: Vec<Vec<Vec<f64>>>,
    /// The central solve (central mode only).
    pub central: Option<PrimalDualSolution>,
}

/// Solves the coarse OPF. In central mode the consensus duals come from
/// one ADMM pass on the coarse lifted problem started at the central
/// solution.
pub fn solve_coarse(coarse: &CoarseCase, mode: CoarseMode, options: &AdmmOptions) -> Result<CoarseSolution> {
    let data = &coarse.data;
    let lifted = coarse.lifted();
    match mode {
        CoarseMode::Central => {
            let model = OpfModel::central(data);
            let sol = solve_warm(&model, &options.solver, None, &mut SolverCache::new()).map_err(|source| {
                CoreError::Solver {
                    context: "coarse problem".into(),
                    source,
                }
            })?;
            if !sol.is_optimal() {
                return Err(CoreError::SolverStatus {
                    context: "coarse problem".into(),
                    status: format!("{:?}", sol.status),
                });
            }
            let states: Vec<Vec<f64>> = (0..data.n())
                .map(|i| model.state_of(&sol.x, i).expect("central model covers every node"))
                .collect();
            let z: Vec<Vec<f64>> = lifted.global_coupling.iter().map(|&i| states[i].clone()).collect();
            let y = if lifted.global_coupling.is_empty() {
                lifted.views.iter().map(|_| Vec::new()).collect()
            } else {
                let start = InitialPoint {
                    x: lifted
                        .views
                        .iter()
                        .map(|v| v.extended.iter().map(|&i| states[i].clone()).collect())
                        .collect(),
                    z: z.clone(),
                    y: lifted
                        .views
                        .iter()
                        .map(|v| v.coupling.iter().map(|&i| vec![0.0; data.state_dim(i)]).collect())
                        .collect(),
                };
                let pass = AdmmOptions {
                    max_steps: 1,
                    ..options.clone()
                };
                let out = admm::run(data, &lifted, &pass, Some(&start), |_, _| {})?;
                out.state.y
            };
            Ok(CoarseSolution {
                states,
                objective: sol.objective,
                lifted,
                z,
                y,
                central: Some(sol),
            })
        }
        CoarseMode::Admm => {
            let out = admm::run(data, &lifted, options, None, |_, _| {})?;
            let mut states = vec![Vec::new(); data.n()];
            for (k, v) in lifted.views.iter().enumerate() {
                let model = OpfModel::subproblem(data, &lifted, k)?;
                for &i in &v.owned {
                    states[i] = model.state_of(&out.state.x[k], i).expect("owned node");
                }
            }
            Ok(CoarseSolution {
                objective: data.cost_of_states(&states),
                states,
                lifted,
                z: out.state.z,
                y: out.state.y,
                central: None,
            })
        }
    }
}

/// Fine state of node `i` read from the state of its coarse image:
/// `(V, θ)` copied, generator outputs matched by generator id.
fn fine_state(fine: &OpfData, coarse: &CoarseCase, cstate: &[f64], i: usize) -> Vec<f64> {
    let c = coarse.sub.phi[i];
    let cgens = &coarse.data.node_gens[c];
    let ncg = cgens.len();
    let slot = |g: usize| {
        let id = fine.gens[g].id;
        cgens
            .iter()
            .position(|&cg| coarse.data.gens[cg].id == id)
            .expect("generator kept by aggregation")
    };
    let fg = &fine.node_gens[i];
    let mut s = vec![cstate[0], cstate[1]];
    s.extend(fg.iter().map(|&g| cstate[2 + slot(g)]));
    s.extend(fg.iter().map(|&g| cstate[2 + ncg + slot(g)]));
    s
}

/// Maps the coarse solution to `(x⁰, z⁰, y⁰)` of the fine lifted problem.
/// Returns the starting point and the number of fine dual slots without a
/// coarse counterpart (set to zero).
pub fn project_solution(
    fine: &OpfData,
    lifted: &LiftedStructure,
    coarse: &CoarseCase,
    sol: &CoarseSolution,
) -> (InitialPoint, usize) {
    let states: Vec<Vec<f64>> = (0..fine.n())
        .map(|i| fine_state(fine, coarse, &sol.states[coarse.sub.phi[i]], i))
        .collect();
    let x = lifted
        .views
        .iter()
        .map(|v| v.extended.iter().map(|&i| states[i].clone()).collect())
        .collect();
    let z = lifted.global_coupling.iter().map(|&i| states[i].clone()).collect();
    let mut orphans = 0;
    let y = lifted
        .views
        .iter()
        .enumerate()
        .map(|(k, v)| {
            v.coupling
                .iter()
                .map(|&i| {
                    let c = coarse.sub.phi[i];
                    let cv = &sol.lifted.views[k];
                    match cv.coupling.binary_search(&c) {
                        Ok(pos) => fine_state(fine, coarse, &sol.y[k][pos], i),
                        Err(_) => {
                            orphans += 1;
                            vec![0.0; fine.state_dim(i)]
                        }
                    }
                })
                .collect()
        })
        .collect();
    if orphans > 0 {
        warn!("{orphans} fine coupling slots have no coarse dual; starting them at zero");
    }
    (InitialPoint { x, z, y }, orphans)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Graph {
        let e: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::from_edges(n, &e)
    }

    #[test]
    fn subpartition_counts() {
        let g = path(4);
        let p = Partitioning::new(2, vec![0, 0, 1, 1]).unwrap();
        let s = subpartition(&g, &p, Some(2), 0).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.phi, vec![0, 1, 2, 3]);
        assert_eq!(s.parent, vec![0, 0, 1, 1]);
        let one = subpartition(&g, &p, Some(1), 0).unwrap();
        assert_eq!(one.sets, vec![vec![0, 1], vec![2, 3]]);
        assert!(subpartition(&g, &p, Some(3), 0).is_err());
    }

    #[test]
    fn quotient_of_path_is_an_edge() {
        let g = path(4);
        let p = Partitioning::new(2, vec![0, 0, 1, 1]).unwrap();
        let s = subpartition(&g, &p, Some(1), 0).unwrap();
        let cg = build_coarse_graph(&g, &s, 2).unwrap();
        assert_eq!(cg.graph.edges(), vec![(0, 1)]);
        assert_eq!(cg.global_coupling, vec![0, 1]);
        assert_eq!(cg.bundles[&(0, 0)], vec![(0, 1)]);
        assert_eq!(cg.bundles[&(0, 1)], vec![(1, 2)]);
    }

    #[test]
    fn collapsed_triangle() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]);
        let p = Partitioning::new(1, vec![0; 3]).unwrap();
        let s = subpartition(&g, &p, Some(1), 0).unwrap();
        let cg = build_coarse_graph(&g, &s, 1).unwrap();
        assert_eq!(cg.graph.num_edges(), 0);
        assert_eq!(cg.bundles[&(0, 0)].len(), 3);
    }

    #[test]
    fn merged_pair_diagonal() {
        let mut e = BTreeMap::new();
        e.insert((0, 0), (1.0, 0.0));
        e.insert((1, 1), (2.0, 0.0));
        e.insert((0, 1), (0.5, 0.0));
        e.insert((1, 0), (0.5, 0.0));
        let y = Admittance::from_entries(2, &e);
        let c = aggregate_admittance(&y, &[0, 0], 1);
        assert_eq!(c.get(0, 0), Some((4.0, 0.0)));
    }

    #[test]
    fn default_ratio() {
        assert_eq!(default_subparts(1), 1);
        assert_eq!(default_subparts(7), 2);
        assert_eq!(default_subparts(14), 4);
    }
}
