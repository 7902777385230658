//! Fill-reducing ordering.
//!
//! Minimum degree on an explicit elimination graph. The latent layouts in
//! this crate are block diagonal with a dense trailing border, so the graph
//! stays small and the quotient-graph machinery of approximate minimum
//! degree is not needed to get near-zero fill.

use std::collections::{BTreeSet, HashSet};

/// Returns `perm` with `perm[new] = old`. Ties are broken by the lowest
/// original index, so the ordering is deterministic.
pub fn minimum_degree(dim: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<usize> {
    let mut adj: Vec<HashSet<usize>> = vec![HashSet::new(); dim];
    for (r, c) in edges {
        if r != c {
            adj[r].insert(c);
            adj[c].insert(r);
        }
    }
    let mut queue: BTreeSet<(usize, usize)> = (0..dim).map(|v| (adj[v].len(), v)).collect();
    let mut eliminated = vec![false; dim];
    let mut perm = Vec::with_capacity(dim);

    while let Some((_, v)) = queue.pop_first() {
        eliminated[v] = true;
        perm.push(v);
        let mut nbrs: Vec<usize> = adj[v].drain().collect();
        nbrs.sort_unstable();
        for &a in &nbrs {
            queue.remove(&(adj[a].len(), a));
            adj[a].remove(&v);
        }
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        for &a in &nbrs {
            debug_assert!(!eliminated[a]);
            queue.insert((adj[a].len(), a));
        }
    }
    perm
}
