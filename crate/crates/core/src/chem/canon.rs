//! Canonical atom ranking and canonical SMILES output.
//!
//! Ranks start from atom invariants (element, charge, degree, bond-order
//! sum) and are refined Morgan-style by neighbour ranks until stable. Atoms
//! still tied afterwards are split one at a time; every split is followed to a
//! complete ranking and the ranking giving the smallest SMILES string wins.

use std::cmp::Reverse;
use std::fmt::Write;

use super::graph::{BondOrder, MolecularGraph};
use super::ChemError;

/// Canonical atom order: `order[r]` is the atom with canonical rank `r`.
pub fn canonical_order(g: &MolecularGraph) -> Vec<usize> {
    canonical_search(g).1
}

/// Canonical SMILES. Depends only on the isomorphism class of `g`.
pub fn write_smiles(g: &MolecularGraph) -> Result<String, ChemError> {
    if !g.is_connected() {
        return Err(ChemError::InvalidGraph("graph is empty or disconnected".into()));
    }
    if let Some(bad) = super::valence_ok(g).iter().position(|ok| !ok) {
        return Err(ChemError::InvalidGraph(format!("valence exceeded at atom {bad}")));
    }
    Ok(canonical_search(g).0)
}

fn canonical_search(g: &MolecularGraph) -> (String, Vec<usize>) {
    let n = g.atom_count();
    if n == 0 {
        return (String::new(), Vec::new());
    }
    let adj = g.adjacency();
    let initial: Vec<(u8, i8, Reverse<usize>, Reverse<u8>)> = (0..n)
        .map(|i| {
            let atom = g.atom(i);
            let sum: u8 = adj[i].iter().map(|(_, o)| o.as_u8()).sum();
            (
                atom.element.atomic_number(),
                atom.formal_charge,
                Reverse(adj[i].len()),
                Reverse(sum),
            )
        })
        .collect();
    let ranks = ranks_from_keys(&initial);
    let mut best: Option<(String, Vec<usize>)> = None;
    search(g, &adj, ranks, &mut best);
    best.expect("at least one leaf")
}

fn ranks_from_keys<K: Ord>(keys: &[K]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut ranks = vec![0usize; keys.len()];
    for pos in 0..idx.len() {
        ranks[idx[pos]] = if pos > 0 && keys[idx[pos]] == keys[idx[pos - 1]] {
            ranks[idx[pos - 1]]
        } else {
            pos
        };
    }
    ranks
}

fn class_count(ranks: &[usize]) -> usize {
    let mut r = ranks.to_vec();
    r.sort_unstable();
    r.dedup();
    r.len()
}

fn refine(adj: &[Vec<(usize, BondOrder)>], mut ranks: Vec<usize>) -> Vec<usize> {
    let mut classes = class_count(&ranks);
    loop {
        let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..ranks.len())
            .map(|i| {
                let mut around: Vec<(usize, u8)> =
                    adj[i].iter().map(|&(j, o)| (ranks[j], o.as_u8())).collect();
                around.sort_unstable();
                (ranks[i], around)
            })
            .collect();
        let next = ranks_from_keys(&keys);
        let next_classes = class_count(&next);
        ranks = next;
        if next_classes == classes {
            return ranks;
        }
        classes = next_classes;
    }
}

fn search(
    g: &MolecularGraph,
    adj: &[Vec<(usize, BondOrder)>],
    ranks: Vec<usize>,
    best: &mut Option<(String, Vec<usize>)>,
) {
    let ranks = refine(adj, ranks);
    let n = ranks.len();
    // lowest rank value shared by more than one atom
    let mut sorted = ranks.clone();
    sorted.sort_unstable();
    let tied = sorted.windows(2).find(|w| w[0] == w[1]).map(|w| w[0]);
    match tied {
        None => {
            let s = smiles_for_ranks(g, adj, &ranks);
            if best.as_ref().is_none_or(|(b, _)| s < *b) {
                let mut order = vec![0usize; n];
                for (atom, &r) in ranks.iter().enumerate() {
                    order[r] = atom;
                }
                *best = Some((s, order));
            }
        }
        Some(r) => {
            let members: Vec<usize> = (0..n).filter(|&i| ranks[i] == r).collect();
            for &m in &members {
                let mut split = ranks.clone();
                for &other in &members {
                    if other != m {
                        split[other] = r + 1;
                    }
                }
                search(g, adj, split, best);
            }
        }
    }
}

fn atom_token(g: &MolecularGraph, i: usize, out: &mut String) {
    let atom = g.atom(i);
    if atom.formal_charge == 0 && atom.element.is_organic_subset() {
        out.push_str(atom.element.symbol());
        return;
    }
    out.push('[');
    out.push_str(atom.element.symbol());
    match g.implicit_hydrogens(i).unwrap_or(0) {
        0 => {}
        1 => out.push('H'),
        h => write!(out, "H{h}").unwrap(),
    }
    match atom.formal_charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        q if q > 0 => write!(out, "+{q}").unwrap(),
        q => write!(out, "-{}", -q).unwrap(),
    }
    out.push(']');
}

/// DFS from rank 0, visiting neighbours in rank order; back edges become
/// ring closures labelled with the lowest free digit.
fn smiles_for_ranks(g: &MolecularGraph, adj: &[Vec<(usize, BondOrder)>], ranks: &[usize]) -> String {
    let n = ranks.len();
    let mut ordered: Vec<Vec<(usize, BondOrder)>> = adj.to_vec();
    for list in &mut ordered {
        list.sort_by_key(|&(j, _)| ranks[j]);
    }
    let root = (0..n).min_by_key(|&i| ranks[i]).unwrap();

    // pass 1: spanning tree and ring closures
    let mut state = vec![0u8; n];
    let mut children: Vec<Vec<(usize, BondOrder)>> = vec![Vec::new(); n];
    let mut closures: Vec<(usize, usize, BondOrder)> = Vec::new();
    let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
    state[root] = 1;
    while let Some(&mut (v, parent, ref mut next)) = stack.last_mut() {
        if *next == ordered[v].len() {
            state[v] = 2;
            stack.pop();
            continue;
        }
        let (u, o) = ordered[v][*next];
        *next += 1;
        if Some(u) == parent {
            continue;
        }
        match state[u] {
            0 => {
                state[u] = 1;
                children[v].push((u, o));
                stack.push((u, Some(v), 0));
            }
            1 => closures.push((u, v, o)),
            _ => {}
        }
    }

    // per atom: ring bonds it opens and closes
    let mut opens: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut closes: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, &(open, close, _)) in closures.iter().enumerate() {
        opens[open].push(k);
        closes[close].push(k);
    }
    for list in &mut opens {
        list.sort_by_key(|&k| ranks[closures[k].1]);
    }

    let mut out = String::new();
    let mut digit_of = vec![0usize; closures.len()];
    let mut in_use: Vec<bool> = Vec::new();
    emit(
        root,
        &children,
        &closures,
        &opens,
        &closes,
        &mut digit_of,
        &mut in_use,
        g,
        &mut out,
    );
    out
}

#[allow(clippy::too_many_arguments)]
fn emit(
    v: usize,
    children: &[Vec<(usize, BondOrder)>],
    closures: &[(usize, usize, BondOrder)],
    opens: &[Vec<usize>],
    closes: &[Vec<usize>],
    digit_of: &mut [usize],
    in_use: &mut Vec<bool>,
    g: &MolecularGraph,
    out: &mut String,
) {
    atom_token(g, v, out);
    let mut freed = Vec::new();
    for &k in &closes[v] {
        write_ring_digit(digit_of[k], out);
        freed.push(digit_of[k]);
    }
    for &k in &opens[v] {
        let d = match in_use.iter().position(|u| !u) {
            Some(d) => d,
            None => {
                in_use.push(false);
                in_use.len() - 1
            }
        };
        in_use[d] = true;
        digit_of[k] = d;
        out.push_str(closures[k].2.smiles_symbol());
        write_ring_digit(d, out);
    }
    // digits closed here become reusable only after this atom
    for d in freed {
        in_use[d] = false;
    }
    let kids = &children[v];
    for (pos, &(child, order)) in kids.iter().enumerate() {
        let last = pos + 1 == kids.len();
        if !last {
            out.push('(');
        }
        out.push_str(order.smiles_symbol());
        emit(child, children, closures, opens, closes, digit_of, in_use, g, out);
        if !last {
            out.push(')');
        }
    }
}

fn write_ring_digit(slot: usize, out: &mut String) {
    let d = slot + 1;
    if d < 10 {
        write!(out, "{d}").unwrap();
    } else {
        write!(out, "%{d:02}").unwrap();
    }
}
