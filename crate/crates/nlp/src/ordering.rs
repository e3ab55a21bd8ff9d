//! Minimum-degree fill-reducing ordering on the explicit elimination graph.

use std::collections::BTreeSet;

/// Computes a symmetric permutation `perm` (`perm[new] = old`) for the graph
/// given by `pairs`. Self loops are ignored.
///
/// Ties on degree are broken by `class` (lower first) and then by index, so
/// the ordering is a pure function of its inputs. Giving primal unknowns
/// class 0 and multiplier unknowns class 1 keeps saddle-point pivots away
/// from the structurally zero block whenever the degrees allow it.
pub fn minimum_degree(n: usize, pairs: &[(usize, usize)], class: &[u8]) -> Vec<usize> {
    assert_eq!(class.len(), n, "class vector must cover every node");
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(a, b) in pairs {
        if a != b {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }
    let mut queue: BTreeSet<(usize, u8, usize)> = (0..n).map(|v| (adj[v].len(), class[v], v)).collect();
    let mut perm = Vec::with_capacity(n);
    let mut nbrs: Vec<usize> = Vec::new();
    while let Some(key) = queue.pop_first() {
        let v = key.2;
        perm.push(v);
        nbrs.clear();
        nbrs.extend(adj[v].iter().copied());
        for &u in &nbrs {
            queue.remove(&(adj[u].len(), class[u], u));
            adj[u].remove(&v);
        }
        for (a, &u) in nbrs.iter().enumerate() {
            for &w in &nbrs[a + 1..] {
                adj[u].insert(w);
                adj[w].insert(u);
            }
        }
        for &u in &nbrs {
            queue.insert((adj[u].len(), class[u], u));
        }
        adj[v].clear();
    }
    perm
}

/// Inverse of a permutation.
pub fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}
