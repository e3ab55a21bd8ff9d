//! Simple undirected graphs over dense node indices.

use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list; duplicate edges and self loops are
    /// dropped.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            assert!(a < n && b < n, "edge ({a}, {b}) out of range for {n} nodes");
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Self { adj }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(a, b)` with `a < b`, in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for (a, list) in self.adj.iter().enumerate() {
            out.extend(list.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    /// Closed neighborhood of a node set, sorted.
    pub fn closed_neighborhood(&self, nodes: &[usize]) -> Vec<usize> {
        let mut mark = vec![false; self.n()];
        for &i in nodes {
            mark[i] = true;
            for &j in &self.adj[i] {
                mark[j] = true;
            }
        }
        (0..self.n()).filter(|&i| mark[i]).collect()
    }

    /// Component label per node (labels assigned in order of the smallest
    /// member) and the number of components, restricted to `mask`.
    pub fn components(&self, mask: &[bool]) -> (Vec<usize>, usize) {
        let mut label = vec![usize::MAX; self.n()];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for s in 0..self.n() {
            if !mask[s] || label[s] != usize::MAX {
                continue;
            }
            label[s] = count;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for &v in &self.adj[u] {
                    if mask[v] && label[v] == usize::MAX {
                        label[v] = count;
                        queue.push_back(v);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    pub fn is_connected(&self) -> bool {
        self.n() == 0 || self.components(&vec![true; self.n()]).1 == 1
    }

    /// Subgraph induced by `nodes` (relabelled 0.. in the given order).
    pub fn induced(&self, nodes: &[usize]) -> Graph {
        let mut local = vec![usize::MAX; self.n()];
        for (k, &i) in nodes.iter().enumerate() {
            local[i] = k;
        }
        let mut edges = Vec::new();
        for (k, &i) in nodes.iter().enumerate() {
            for &j in &self.adj[i] {
                if local[j] != usize::MAX && local[j] > k {
                    edges.push((k, local[j]));
                }
            }
        }
        Graph::from_edges(nodes.len(), &edges)
    }
}
