//! Graph partitioning, coupling sets and the lifted consensus structure.
//!
//! Nodes and parts are dense 0-based indices here. Partition files use bus
//! labels and 1-based part numbers.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partitioning {
    pub k: usize,
    /// Part of every node.
    pub assignment: Vec<usize>,
}

impl Partitioning {
    pub fn new(k: usize, assignment: Vec<usize>) -> Result<Self> {
        let p = Self { k, assignment };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let mut size = vec![0usize; self.k];
        for (i, &a) in self.assignment.iter().enumerate() {
            if a >= self.k {
                return Err(CoreError::Validation(format!("node {i} assigned to part {a} of {}", self.k)));
            }
            size[a] += 1;
        }
        if let Some(p) = size.iter().position(|&s| s == 0) {
            return Err(CoreError::Validation(format!("part {} is empty", p + 1)));
        }
        Ok(())
    }

    /// Members of every part, ascending.
    pub fn parts(&self) -> Vec<Vec<usize>> {
        let mut parts = vec![Vec::new(); self.k];
        for (i, &a) in self.assignment.iter().enumerate() {
            parts[a].push(i);
        }
        parts
    }

    /// "label part" lines with 1-based parts.
    pub fn to_text(&self, labels: &[usize]) -> String {
        let mut out = String::new();
        for (i, &a) in self.assignment.iter().enumerate() {
            out.push_str(&format!("{} {}\n", labels[i], a + 1));
        }
        out
    }
}

/// Parses "node_id partition_index" lines. `labels[i]` is the id of dense
/// node `i`; `declared_k` fixes the part count (otherwise the largest index
/// found).
pub fn parse_partition(text: &str, labels: &[usize], declared_k: Option<usize>) -> Result<Partitioning> {
    let index: BTreeMap<usize, usize> = labels.iter().enumerate().map(|(k, &l)| (l, k)).collect();
    let mut assignment = vec![usize::MAX; labels.len()];
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parsed = match fields.as_slice() {
            [a, b] => a.parse::<usize>().ok().zip(b.parse::<usize>().ok()),
            _ => None,
        };
        let (id, part) = parsed.ok_or_else(|| CoreError::Validation(format!("line {}: expected 'node part'", ln + 1)))?;
        let &node = index
            .get(&id)
            .ok_or_else(|| CoreError::Validation(format!("line {}: unknown node {id}", ln + 1)))?;
        if part == 0 || declared_k.is_some_and(|k| part > k) {
            return Err(CoreError::Validation(format!("line {}: part index {part} out of range", ln + 1)));
        }
        assignment[node] = part - 1;
    }
    if let Some(i) = assignment.iter().position(|&a| a == usize::MAX) {
        return Err(CoreError::Validation(format!("node {} is not assigned", labels[i])));
    }
    let k = declared_k.unwrap_or_else(|| assignment.iter().max().map_or(0, |m| m + 1));
    Partitioning::new(k, assignment)
}

pub fn load_partition_file(
    path: impl AsRef<std::path::Path>,
    labels: &[usize],
    declared_k: Option<usize>,
) -> Result<Partitioning> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_partition(&text, labels, declared_k)
}

// ---------------------------------------------------------------------------
// multilevel partitioner

const NONE: usize = usize::MAX;
const IMBALANCE: f64 = 1.2;
const REFINE_PASSES: usize = 8;

#[derive(Debug, Clone)]
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    weight: Vec<usize>,
}

impl Level {
    fn from_graph(g: &Graph) -> Self {
        Self {
            adj: (0..g.n()).map(|i| g.neighbors(i).iter().map(|&j| (j, 1.0)).collect()).collect(),
            weight: vec![1; g.n()],
        }
    }

    fn n(&self) -> usize {
        self.weight.len()
    }

    /// Heavy-edge matching; returns the coarser level and the fine→coarse map.
    fn coarsen(&self, rng: &mut ChaCha8Rng, cap: usize) -> (Level, Vec<usize>) {
        let n = self.n();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut mate = vec![NONE; n];
        for &u in &order {
            if mate[u] != NONE {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for &(v, w) in &self.adj[u] {
                if mate[v] != NONE || self.weight[u] + self.weight[v] > cap {
                    continue;
                }
                if best.is_none_or(|(bv, bw)| w > bw || (w == bw && v < bv)) {
                    best = Some((v, w));
                }
            }
            match best {
                Some((v, _)) => {
                    mate[u] = v;
                    mate[v] = u;
                }
                None => mate[u] = u,
            }
        }
        let mut map = vec![NONE; n];
        let mut weight = Vec::new();
        for u in 0..n {
            if map[u] == NONE {
                let c = weight.len();
                map[u] = c;
                map[mate[u]] = c;
                weight.push(self.weight[u] + if mate[u] != u { self.weight[mate[u]] } else { 0 });
            }
        }
        let mut acc: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); weight.len()];
        for u in 0..n {
            for &(v, w) in &self.adj[u] {
                let (cu, cv) = (map[u], map[v]);
                if cu != cv {
                    *acc[cu].entry(cv).or_insert(0.0) += w;
                }
            }
        }
        let adj = acc.into_iter().map(|m| m.into_iter().collect()).collect();
        (Level { adj, weight }, map)
    }

    /// Greedy graph growing from the lowest unassigned node.
    fn grow(&self, k: usize) -> Vec<usize> {
        let n = self.n();
        let total: usize = self.weight.iter().sum();
        let mut part = vec![NONE; n];
        let mut remaining_weight = total;
        let mut unassigned = n;
        for p in 0..k {
            if p == k - 1 {
                part.iter_mut().filter(|a| **a == NONE).for_each(|a| *a = p);
                break;
            }
            let target = remaining_weight as f64 / (k - p) as f64;
            let mut conn = vec![0.0; n];
            let mut w = 0usize;
            loop {
                if unassigned <= k - 1 - p {
                    break;
                }
                // frontier node with the strongest tie to the part
                let mut pick: Option<usize> = None;
                for v in 0..n {
                    if part[v] == NONE && conn[v] > 0.0 && pick.is_none_or(|b| conn[v] > conn[b]) {
                        pick = Some(v);
                    }
                }
                let v = match pick {
                    Some(v) => v,
                    None => match (0..n).find(|&v| part[v] == NONE) {
                        Some(v) => v,
                        None => break,
                    },
                };
                let wv = self.weight[v] as f64;
                if w > 0 && (w as f64 + wv) > target && (w as f64 + wv - target) > (target - w as f64) {
                    break;
                }
                part[v] = p;
                w += self.weight[v];
                unassigned -= 1;
                for &(u, ew) in &self.adj[v] {
                    conn[u] += ew;
                }
                if w as f64 >= target {
                    break;
                }
            }
            remaining_weight -= w;
        }
        part
    }

    /// Greedy boundary moves that reduce the cut under a balance limit.
    fn refine(&self, part: &mut [usize], k: usize) {
        let n = self.n();
        let total: usize = self.weight.iter().sum();
        let max_w = ((total as f64 / k as f64) * IMBALANCE).ceil() as usize;
        let mut pw = vec![0usize; k];
        let mut count = vec![0usize; k];
        for v in 0..n {
            pw[part[v]] += self.weight[v];
            count[part[v]] += 1;
        }
        let mut conn = vec![0.0; k];
        for _ in 0..REFINE_PASSES {
            let mut moved = false;
            for v in 0..n {
                let a = part[v];
                if count[a] == 1 {
                    continue;
                }
                conn.iter_mut().for_each(|c| *c = 0.0);
                for &(u, w) in &self.adj[v] {
                    conn[part[u]] += w;
                }
                let mut best: Option<usize> = None;
                for b in 0..k {
                    if b != a && conn[b] > 0.0 && best.is_none_or(|x| conn[b] > conn[x]) {
                        best = Some(b);
                    }
                }
                let Some(b) = best else { continue };
                let wv = self.weight[v];
                let gain = conn[b] - conn[a];
                let fits = pw[b] + wv <= max_w;
                let balances = pw[a] > pw[b] + wv;
                if (gain > 0.0 && fits) || (gain == 0.0 && balances) {
                    part[v] = b;
                    pw[a] -= wv;
                    pw[b] += wv;
                    count[a] -= 1;
                    count[b] += 1;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
    }
}

/// Moves stray fragments of disconnected parts into the adjacent part they
/// share most edges with.
fn repair_connectivity(g: &Graph, part: &mut [usize], k: usize) {
    for _ in 0..g.n() {
        let mut changed = false;
        for p in 0..k {
            let mask: Vec<bool> = part.iter().map(|&a| a == p).collect();
            let (label, count) = g.components(&mask);
            if count <= 1 {
                continue;
            }
            let mut size = vec![0usize; count];
            for i in 0..g.n() {
                if mask[i] {
                    size[label[i]] += 1;
                }
            }
            // labels follow the smallest member, so ties keep the lowest
            let keep = (0..count).fold(0, |best, c| if size[c] > size[best] { c } else { best });
            for c in (0..count).filter(|&c| c != keep) {
                let members: Vec<usize> = (0..g.n()).filter(|&i| mask[i] && label[i] == c).collect();
                let mut edges = vec![0usize; k];
                for &i in &members {
                    for &j in g.neighbors(i) {
                        if part[j] != p {
                            edges[part[j]] += 1;
                        }
                    }
                }
                let target = (0..k).filter(|&q| edges[q] > 0).fold(None, |best: Option<usize>, q| match best {
                    Some(b) if edges[b] >= edges[q] => Some(b),
                    _ => Some(q),
                });
                if let Some(q) = target {
                    for &i in &members {
                        part[i] = q;
                    }
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Renumbers parts in order of their smallest member.
fn canonical(part: &[usize], k: usize) -> Vec<usize> {
    let mut relabel = vec![NONE; k];
    let mut next = 0;
    for &a in part {
        if relabel[a] == NONE {
            relabel[a] = next;
            next += 1;
        }
    }
    part.iter().map(|&a| relabel[a]).collect()
}

/// Multilevel k-way partition: heavy-edge matching down to at most `4k`
/// supernodes, greedy growing, boundary refinement on the way back up, and
/// a final connectivity repair. Deterministic in `(graph, k, seed)`.
pub fn partition_graph(g: &Graph, k: usize, seed: u64) -> Result<Partitioning> {
    let n = g.n();
    if k == 0 || k > n {
        return Err(CoreError::Argument(format!("cannot split {n} nodes into {k} parts")));
    }
    if k == 1 {
        return Partitioning::new(1, vec![0; n]);
    }
    if k == n {
        return Partitioning::new(n, (0..n).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = n.div_ceil(k);
    let mut levels = vec![Level::from_graph(g)];
    let mut maps: Vec<Vec<usize>> = Vec::new();
    while levels.last().unwrap().n() > 4 * k {
        let cur = levels.last().unwrap();
        let (next, map) = cur.coarsen(&mut rng, cap);
        if next.n() as f64 > 0.95 * cur.n() as f64 {
            break;
        }
        levels.push(next);
        maps.push(map);
    }
    let coarsest = levels.last().unwrap();
    let mut part = coarsest.grow(k);
    coarsest.refine(&mut part, k);
    for lvl in (0..maps.len()).rev() {
        let map = &maps[lvl];
        part = map.iter().map(|&c| part[c]).collect();
        levels[lvl].refine(&mut part, k);
    }
    repair_connectivity(g, &mut part, k);
    Partitioning::new(k, canonical(&part, k))
}

// ---------------------------------------------------------------------------
// coupling sets and the lifted structure

/// For every node, the parts whose closed neighborhood contains it.
fn neighborhood_parts(g: &Graph, p: &Partitioning) -> Vec<Vec<usize>> {
    let mut parts = vec![Vec::new(); g.n()];
    for (k, members) in p.parts().iter().enumerate() {
        for i in g.closed_neighborhood(members) {
            parts[i].push(k);
        }
    }
    parts
}

/// Coupling node sets per part and their union.
pub fn coupling_sets(g: &Graph, p: &Partitioning) -> (Vec<Vec<usize>>, Vec<usize>) {
    let np = neighborhood_parts(g, p);
    let mut per_part = vec![Vec::new(); p.k];
    let mut global = Vec::new();
    for (i, parts) in np.iter().enumerate() {
        if parts.len() >= 2 {
            global.push(i);
            for &k in parts {
                per_part[k].push(i);
            }
        }
    }
    (per_part, global)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionView {
    pub owned: Vec<usize>,
    pub extended: Vec<usize>,
    pub ghosts: Vec<usize>,
    pub coupling: Vec<usize>,
}

impl PartitionView {
    /// Position of node `i` in `extended`.
    pub fn local(&self, i: usize) -> Option<usize> {
        self.extended.binary_search(&i).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiftedStructure {
    pub owner: Vec<usize>,
    pub views: Vec<PartitionView>,
    pub global_coupling: Vec<usize>,
    /// Sharing parts per node (empty for non-coupling nodes).
    pub sharers: Vec<Vec<usize>>,
    /// Index of each coupling node in `global_coupling`.
    pub coupling_position: Vec<Option<usize>>,
}

impl LiftedStructure {
    pub fn k(&self) -> usize {
        self.views.len()
    }

    pub fn n(&self) -> usize {
        self.owner.len()
    }

    /// `(part, node)` pairs of the linking constraints `x_k(i) = z(i)`.
    pub fn linking_pairs(&self) -> Vec<(usize, usize)> {
        self.views
            .iter()
            .enumerate()
            .flat_map(|(k, v)| v.coupling.iter().map(move |&i| (k, i)))
            .collect()
    }
}

pub fn build_lifted(g: &Graph, p: &Partitioning) -> LiftedStructure {
    let (per_part, global) = coupling_sets(g, p);
    let mut sharers = vec![Vec::new(); g.n()];
    for (k, set) in per_part.iter().enumerate() {
        for &i in set {
            sharers[i].push(k);
        }
    }
    let mut coupling_position = vec![None; g.n()];
    for (pos, &i) in global.iter().enumerate() {
        coupling_position[i] = Some(pos);
    }
    let views = p
        .parts()
        .into_iter()
        .zip(per_part)
        .map(|(owned, coupling)| {
            let extended = g.closed_neighborhood(&owned);
            let ghosts = extended.iter().copied().filter(|i| owned.binary_search(i).is_err()).collect();
            PartitionView {
                owned,
                extended,
                ghosts,
                coupling,
            }
        })
        .collect();
    LiftedStructure {
        owner: p.assignment.clone(),
        views,
        global_coupling: global,
        sharers,
        coupling_position,
    }
}
