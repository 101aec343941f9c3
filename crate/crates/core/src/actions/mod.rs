//! Graph-building actions, canonical deconstruction and the APD container.

pub(crate) mod apd;
mod trace;

pub use apd::{Apd, ActionLayout};
pub use trace::{parse_trace, write_trace};

use std::collections::VecDeque;

use thiserror::Error;

use crate::chem::{canonical_order, Atom, AtomVocabulary, BondOrder, MolecularGraph};

#[derive(Debug, Copy, Clone, PartialEq, Eq, Hash)]
pub enum Action {
    /// Append an atom bonded to `attach_to`; on the empty graph this creates
    /// the seed atom and `attach_to`/`bond_order` carry no bond.
    AddNode {
        attach_to: usize,
        element: usize,
        charge: usize,
        bond_order: usize,
    },
    /// Bond the most recently added atom to `to_node`.
    Connect { to_node: usize, bond_order: usize },
    Terminate,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActionSequence {
    pub steps: Vec<Action>,
}

impl ActionSequence {
    pub fn new(steps: Vec<Action>) -> Self {
        Self { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_terminated(&self) -> bool {
        self.steps.last() == Some(&Action::Terminate)
    }
}

/// Why an action could not be applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Invalid {
    #[error("graph already finished")]
    Finished,
    #[error("node index out of range")]
    NoSuchNode,
    #[error("vocabulary index out of range")]
    OutOfVocabulary,
    #[error("bond already present")]
    DuplicateBond,
    #[error("valence exceeded")]
    Valence,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("flat index {index} outside [0, {total})")]
    OutOfRange { index: usize, total: usize },
    #[error("trace line {line}: {reason}")]
    Trace { line: usize, reason: String },
}

/// Applies `a` to `g`, returning the new graph or the reason it is invalid.
pub fn apply_action(
    g: &MolecularGraph,
    a: &Action,
    vocab: &AtomVocabulary,
) -> Result<MolecularGraph, Invalid> {
    let mut next = g.clone();
    apply_in_place(&mut next, a, vocab)?;
    Ok(next)
}

/// In-place form of [`apply_action`]; on error `g` is left unchanged.
pub fn apply_in_place(
    g: &mut MolecularGraph,
    a: &Action,
    vocab: &AtomVocabulary,
) -> Result<(), Invalid> {
    if g.finished {
        return Err(Invalid::Finished);
    }
    match *a {
        Action::AddNode {
            attach_to,
            element,
            charge,
            bond_order,
        } => {
            let element = *vocab.elements.get(element).ok_or(Invalid::OutOfVocabulary)?;
            let charge = *vocab.charges.get(charge).ok_or(Invalid::OutOfVocabulary)?;
            let order = *vocab.bond_orders.get(bond_order).ok_or(Invalid::OutOfVocabulary)?;
            let atom = Atom::new(element, charge);
            let max = element.max_valence(charge).ok_or(Invalid::Valence)?;
            if g.is_empty() {
                if attach_to != 0 {
                    return Err(Invalid::NoSuchNode);
                }
                g.add_atom(atom);
                return Ok(());
            }
            if attach_to >= g.atom_count() {
                return Err(Invalid::NoSuchNode);
            }
            if order.as_u8() > max || !g.can_accept(attach_to, order.as_u8()) {
                return Err(Invalid::Valence);
            }
            let new = g.add_atom(atom);
            g.add_bond(attach_to, new, order)
                .expect("fresh atom cannot already be bonded");
            Ok(())
        }
        Action::Connect { to_node, bond_order } => {
            let order = *vocab.bond_orders.get(bond_order).ok_or(Invalid::OutOfVocabulary)?;
            let n = g.atom_count();
            if n < 2 || to_node >= n - 1 {
                return Err(Invalid::NoSuchNode);
            }
            let last = n - 1;
            if g.bond(last, to_node).is_some() {
                return Err(Invalid::DuplicateBond);
            }
            if !g.can_accept(last, order.as_u8()) || !g.can_accept(to_node, order.as_u8()) {
                return Err(Invalid::Valence);
            }
            g.add_bond(last, to_node, order).expect("checked above");
            Ok(())
        }
        Action::Terminate => {
            g.finished = true;
            Ok(())
        }
    }
}

/// Replays `seq` from the empty graph.
pub fn reconstruct(seq: &ActionSequence, vocab: &AtomVocabulary) -> Result<MolecularGraph, Invalid> {
    let mut g = MolecularGraph::new();
    for a in &seq.steps {
        apply_in_place(&mut g, a, vocab)?;
    }
    Ok(g)
}

/// Canonical construction path of `g`: each prefix state paired with the
/// action that extends it.
///
/// Atoms are added in breadth-first order from canonical rank 0, neighbours
/// taken in canonical order. Right after an atom is added, its ring bonds
/// back to earlier atoms are emitted as `Connect`, by ascending partner.
pub fn deconstruct(
    g: &MolecularGraph,
    vocab: &AtomVocabulary,
) -> Result<Vec<(MolecularGraph, Action)>, ActionError> {
    let seq = construction_sequence(g, vocab)?;
    let mut out = Vec::with_capacity(seq.len());
    let mut state = MolecularGraph::new();
    for a in seq.steps {
        let next = apply_action(&state, &a, vocab)
            .map_err(|e| ActionError::InvalidGraph(format!("replay failed: {e}")))?;
        out.push((state, a));
        state = next;
    }
    Ok(out)
}

/// The target actions of [`deconstruct`] without the prefix states.
pub fn construction_sequence(
    g: &MolecularGraph,
    vocab: &AtomVocabulary,
) -> Result<ActionSequence, ActionError> {
    if !g.is_valid() {
        return Err(ActionError::InvalidGraph("graph is empty, disconnected or over valence".into()));
    }
    if !vocab.covers(g) {
        return Err(ActionError::InvalidGraph("graph not expressible in vocabulary".into()));
    }
    let order = canonical_order(g);
    let mut rank = vec![0usize; order.len()];
    for (r, &atom) in order.iter().enumerate() {
        rank[atom] = r;
    }
    let adj = g.adjacency();

    // breadth-first from the canonical root
    let mut new_index = vec![usize::MAX; g.atom_count()];
    let mut bfs = Vec::with_capacity(g.atom_count());
    let mut parent: Vec<Option<(usize, BondOrder)>> = vec![None; g.atom_count()];
    let mut queue = VecDeque::from([order[0]]);
    new_index[order[0]] = 0;
    bfs.push(order[0]);
    while let Some(v) = queue.pop_front() {
        let mut around = adj[v].clone();
        around.sort_by_key(|&(u, _)| rank[u]);
        for (u, o) in around {
            if new_index[u] == usize::MAX {
                new_index[u] = bfs.len();
                bfs.push(u);
                parent[u] = Some((v, o));
                queue.push_back(u);
            }
        }
    }

    let mut steps = Vec::new();
    for (k, &atom_idx) in bfs.iter().enumerate() {
        let atom = g.atom(atom_idx);
        let element = vocab.element_index(atom.element).expect("covered");
        let charge = vocab.charge_index(atom.formal_charge).expect("covered");
        let (attach_to, bond_order) = match parent[atom_idx] {
            None => (0, 0),
            Some((p, o)) => (new_index[p], vocab.bond_index(o).expect("bond order in vocabulary")),
        };
        steps.push(Action::AddNode {
            attach_to,
            element,
            charge,
            bond_order,
        });
        let tree_parent = parent[atom_idx].map(|(p, _)| p);
        let mut rings: Vec<(usize, BondOrder)> = adj[atom_idx]
            .iter()
            .filter(|&&(u, _)| new_index[u] < k && Some(u) != tree_parent)
            .map(|&(u, o)| (new_index[u], o))
            .collect();
        rings.sort_unstable();
        for (to_node, o) in rings {
            steps.push(Action::Connect {
                to_node,
                bond_order: vocab.bond_index(o).expect("bond order in vocabulary"),
            });
        }
    }
    steps.push(Action::Terminate);
    Ok(ActionSequence::new(steps))
}

/// Actions of the same kind as `a` whose result on `state` is isomorphic to
/// the result of `a`, `a` included, in slot order.
pub fn equivalent_actions(
    state: &MolecularGraph,
    a: &Action,
    vocab: &AtomVocabulary,
) -> Result<Vec<Action>, ActionError> {
    let target = apply_action(state, a, vocab).map_err(|e| ActionError::InvalidGraph(e.to_string()))?;
    let key = |g: &MolecularGraph| crate::chem::write_smiles(g).ok();
    let want = key(&target);
    let n = state.atom_count();
    let candidates: Vec<Action> = match *a {
        Action::AddNode {
            element,
            charge,
            bond_order,
            ..
        } => {
            let orders: Vec<usize> = if n == 0 {
                (0..vocab.bond_orders.len()).collect()
            } else {
                vec![bond_order]
            };
            (0..n.max(1))
                .flat_map(|attach_to| {
                    orders.iter().map(move |&bond_order| Action::AddNode {
                        attach_to,
                        element,
                        charge,
                        bond_order,
                    })
                })
                .collect()
        }
        Action::Connect { bond_order, .. } => (0..n.saturating_sub(1))
            .map(|to_node| Action::Connect { to_node, bond_order })
            .collect(),
        Action::Terminate => return Ok(vec![Action::Terminate]),
    };
    Ok(candidates
        .into_iter()
        .filter(|c| match apply_action(state, c, vocab) {
            Ok(next) => c == a || key(&next) == want,
            Err(_) => false,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::{parse_smiles, write_smiles, Element};

    fn vocab_for(smiles: &[&str]) -> AtomVocabulary {
        let gs: Vec<MolecularGraph> = smiles.iter().map(|s| parse_smiles(s).unwrap()).collect();
        AtomVocabulary::from_graphs(&gs, None)
    }

    fn carbon_add(attach_to: usize) -> Action {
        Action::AddNode {
            attach_to,
            element: 0,
            charge: 0,
            bond_order: 0,
        }
    }

    #[test]
    fn add_seed_then_terminate() {
        let v = vocab_for(&["CC"]);
        let g = apply_action(&MolecularGraph::new(), &carbon_add(0), &v).unwrap();
        assert_eq!(g.atom_count(), 1);
        assert_eq!(g.bond_count(), 0);
        let done = apply_action(&g, &Action::Terminate, &v).unwrap();
        assert!(done.finished);
        assert_eq!(write_smiles(&done).unwrap(), "C");
        assert_eq!(apply_action(&done, &carbon_add(0), &v), Err(Invalid::Finished));
    }

    #[test]
    fn duplicate_connect_is_invalid() {
        let v = vocab_for(&["CC"]);
        let ethane = reconstruct(&ActionSequence::new(vec![carbon_add(0), carbon_add(0)]), &v).unwrap();
        let dup = Action::Connect {
            to_node: 0,
            bond_order: 0,
        };
        assert_eq!(apply_action(&ethane, &dup, &v), Err(Invalid::DuplicateBond));
    }

    #[test]
    fn impossible_actions() {
        let v = vocab_for(&["CO"]);
        let empty = MolecularGraph::new();
        assert_eq!(apply_action(&empty, &carbon_add(3), &v), Err(Invalid::NoSuchNode));
        let conn = Action::Connect {
            to_node: 0,
            bond_order: 0,
        };
        assert_eq!(apply_action(&empty, &conn, &v), Err(Invalid::NoSuchNode));
        let one = apply_action(&empty, &carbon_add(0), &v).unwrap();
        assert_eq!(apply_action(&one, &conn, &v), Err(Invalid::NoSuchNode));
        // O attached by a triple bond exceeds its valence
        let triple_o = Action::AddNode {
            attach_to: 0,
            element: v.element_index(Element::O).unwrap(),
            charge: 0,
            bond_order: 2,
        };
        assert_eq!(apply_action(&one, &triple_o, &v), Err(Invalid::Valence));
        let bad_vocab = Action::AddNode {
            attach_to: 0,
            element: 9,
            charge: 0,
            bond_order: 0,
        };
        assert_eq!(apply_action(&one, &bad_vocab, &v), Err(Invalid::OutOfVocabulary));
    }

    #[test]
    fn out_of_range_attach_in_sequence() {
        let v = vocab_for(&["CC"]);
        let seq = ActionSequence::new(vec![carbon_add(0), carbon_add(5), Action::Terminate]);
        assert_eq!(reconstruct(&seq, &v), Err(Invalid::NoSuchNode));
    }

    #[test]
    fn methane_deconstruction() {
        let v = vocab_for(&["C"]);
        let steps = deconstruct(&parse_smiles("C").unwrap(), &v).unwrap();
        assert_eq!(steps.len(), 2);
        assert!(steps[0].0.is_empty());
        assert_eq!(steps[0].1, carbon_add(0));
        assert_eq!(steps[1].0.atom_count(), 1);
        assert_eq!(steps[1].1, Action::Terminate);
        let seq = ActionSequence::new(vec![carbon_add(0), Action::Terminate]);
        let methane = reconstruct(&seq, &v).unwrap();
        assert!(methane.finished);
        assert_eq!(methane.atom_count(), 1);
    }

    #[test]
    fn benzene_has_one_ring_closure() {
        let v = vocab_for(&["c1ccccc1"]);
        let seq = construction_sequence(&parse_smiles("c1ccccc1").unwrap(), &v).unwrap();
        let adds = seq.steps.iter().filter(|a| matches!(a, Action::AddNode { .. })).count();
        let conns = seq.steps.iter().filter(|a| matches!(a, Action::Connect { .. })).count();
        assert_eq!((adds, conns, seq.len()), (6, 1, 8));
        assert_eq!(seq.steps.last(), Some(&Action::Terminate));
    }

    #[test]
    fn round_trip_through_actions() {
        let smiles = [
            "CCO",
            "CC(=O)OCC",
            "c1ccc2ccccc2c1",
            "C1CC2CCC1C2",
            "CC1=CCC(CC1)C(C)=C",
            "O=Cc1ccc(O)c(OC)c1",
            "C#CC",
            "CC(C)(C)C",
        ];
        let v = vocab_for(&smiles);
        for s in smiles {
            let g = parse_smiles(s).unwrap();
            let seq = construction_sequence(&g, &v).unwrap();
            let back = reconstruct(&seq, &v).unwrap();
            assert!(back.finished);
            assert_eq!(write_smiles(&back).unwrap(), write_smiles(&g).unwrap(), "{s}");
            // every Connect closes onto the last atom
            let mut state = MolecularGraph::new();
            for a in &seq.steps {
                if let Action::Connect { to_node, .. } = a {
                    assert!(*to_node + 1 < state.atom_count());
                }
                state = apply_action(&state, a, &v).unwrap();
            }
        }
    }

    #[test]
    fn deconstruction_is_relabeling_invariant() {
        let v = vocab_for(&["CC(=O)OCC1CCCC1"]);
        let g = parse_smiles("CC(=O)OCC1CCCC1").unwrap();
        let reference = construction_sequence(&g, &v).unwrap();
        let perm: Vec<usize> = (0..g.atom_count()).rev().collect();
        assert_eq!(construction_sequence(&g.permuted(&perm), &v).unwrap(), reference);
    }

    #[test]
    fn equivalent_actions_follow_symmetry() {
        let vocab = AtomVocabulary::from_graphs([&crate::chem::parse_smiles("CC(=O)OCC").unwrap()], None);
        let add_o = |attach_to| Action::AddNode {
            attach_to,
            element: 1,
            charge: 0,
            bond_order: 0,
        };
        let empty = MolecularGraph::new();
        let first = Action::AddNode {
            attach_to: 0,
            element: 0,
            charge: 0,
            bond_order: 0,
        };
        assert_eq!(equivalent_actions(&empty, &first, &vocab).unwrap().len(), 3);
        let cc = reconstruct(&ActionSequence::new(vec![first, Action::AddNode { attach_to: 0, element: 0, charge: 0, bond_order: 0 }]), &vocab).unwrap();
        assert_eq!(equivalent_actions(&cc, &add_o(0), &vocab).unwrap(), vec![add_o(0), add_o(1)]);
        let cco = apply_action(&cc, &add_o(1), &vocab).unwrap();
        assert_eq!(equivalent_actions(&cco, &add_o(0), &vocab).unwrap(), vec![add_o(0)]);
        assert_eq!(equivalent_actions(&cco, &Action::Terminate, &vocab).unwrap(), vec![Action::Terminate]);
    }
}
