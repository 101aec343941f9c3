use std::collections::{BTreeSet, VecDeque};

use super::graph::MolecularGraph;

/// Bonds `(i, j)` that lie on at least one cycle.
pub fn ring_bonds(g: &MolecularGraph) -> BTreeSet<(usize, usize)> {
    let adj = g.adjacency();
    g.bonds()
        .filter(|&((a, b), _)| shortest_path_avoiding(&adj, a, b).is_some())
        .map(|(k, _)| k)
        .collect()
}

/// Path from `from` to `to` (inclusive) not using the direct bond between them.
fn shortest_path_avoiding(
    adj: &[Vec<(usize, super::BondOrder)>],
    from: usize,
    to: usize,
) -> Option<Vec<usize>> {
    let mut prev = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::from([from]);
    prev[from] = from;
    while let Some(v) = queue.pop_front() {
        for &(u, _) in &adj[v] {
            if (v == from && u == to) || prev[u] != usize::MAX {
                continue;
            }
            prev[u] = v;
            if u == to {
                let mut path = vec![to];
                let mut cur = to;
                while cur != from {
                    cur = prev[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            queue.push_back(u);
        }
    }
    None
}

/// A smallest set of smallest rings, as atom lists in cycle order.
///
/// Candidates are the shortest cycle through each ring bond; the smallest
/// linearly independent subset (over GF(2) edge sets) of size equal to the
/// cyclomatic number is kept.
pub fn smallest_rings(g: &MolecularGraph) -> Vec<Vec<usize>> {
    let adj = g.adjacency();
    let bond_keys: Vec<(usize, usize)> = g.bonds().map(|(k, _)| k).collect();
    let bond_index = |a: usize, b: usize| -> usize {
        let k = (a.min(b), a.max(b));
        bond_keys.binary_search(&k).expect("bond exists")
    };

    let mut candidates: Vec<Vec<usize>> = Vec::new();
    for &(a, b) in &bond_keys {
        if let Some(path) = shortest_path_avoiding(&adj, a, b) {
            candidates.push(path);
        }
    }
    candidates.sort_by_key(|c| c.len());

    let components = count_components(&adj);
    let cyclomatic = (bond_keys.len() + components).saturating_sub(g.atom_count());
    let words = bond_keys.len().div_ceil(64).max(1);

    let mut basis: Vec<Vec<u64>> = Vec::new();
    let mut rings = Vec::new();
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    for cycle in candidates {
        if rings.len() == cyclomatic {
            break;
        }
        let mut sorted = cycle.clone();
        sorted.sort_unstable();
        if !seen.insert(sorted) {
            continue;
        }
        let mut bits = vec![0u64; words];
        for w in 0..cycle.len() {
            let e = bond_index(cycle[w], cycle[(w + 1) % cycle.len()]);
            bits[e / 64] ^= 1 << (e % 64);
        }
        let reduced = reduce(&basis, bits);
        if reduced.iter().any(|&x| x != 0) {
            basis.push(reduced);
            rings.push(cycle);
        }
    }
    rings
}

fn reduce(basis: &[Vec<u64>], mut v: Vec<u64>) -> Vec<u64> {
    // each stored vector is already reduced against its predecessors
    for b in basis {
        let pivot = lowest_bit(b);
        if let Some(p) = pivot {
            if v[p / 64] >> (p % 64) & 1 == 1 {
                for (x, y) in v.iter_mut().zip(b) {
                    *x ^= y;
                }
            }
        }
    }
    v
}

fn lowest_bit(v: &[u64]) -> Option<usize> {
    v.iter()
        .enumerate()
        .find(|(_, &w)| w != 0)
        .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
}

fn count_components(adj: &[Vec<(usize, super::BondOrder)>]) -> usize {
    let mut seen = vec![false; adj.len()];
    let mut count = 0;
    for start in 0..adj.len() {
        if seen[start] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for &(u, _) in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
    }
    count
}
