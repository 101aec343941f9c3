//! Molecular graphs, SMILES input/output, valence rules and canonical
//! ordering.

mod canon;
mod element;
mod graph;
mod rings;
mod smiles;

pub use canon::{canonical_order, write_smiles};
pub use element::{Element, UnknownElementSymbol, ALL_ELEMENTS};
pub use graph::{valence_ok, Atom, BondOrder, MolecularGraph};
pub use rings::{ring_bonds, smallest_rings};
pub use smiles::{parse_smiles, parse_smiles_with_notes, ParseNote};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChemError {
    #[error("empty SMILES")]
    Empty,
    #[error("ring bond {0} is never closed")]
    UnclosedRing(u32),
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("valence exceeded at atom {atom}")]
    ValenceViolation { atom: usize },
    #[error("malformed token `{token}` at position {position}")]
    MalformedToken { position: usize, token: String },
    #[error("disconnected SMILES (contains '.')")]
    Disconnected,
    #[error("aromatic system cannot be kekulized")]
    Kekulization,
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
}

/// Discrete atom and bond choices available to the generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomVocabulary {
    pub elements: Vec<Element>,
    pub charges: Vec<i8>,
    pub bond_orders: Vec<BondOrder>,
    pub max_nodes: usize,
}

impl AtomVocabulary {
    /// Sorted element symbols and charges seen in `graphs`; `max_nodes` is the
    /// largest heavy-atom count unless overridden.
    pub fn from_graphs<'a, I>(graphs: I, max_nodes_override: Option<usize>) -> Self
    where
        I: IntoIterator<Item = &'a MolecularGraph>,
    {
        let mut elements = Vec::new();
        let mut charges = Vec::new();
        let mut max_nodes = 0;
        for g in graphs {
            max_nodes = max_nodes.max(g.atom_count());
            for a in g.atoms() {
                elements.push(a.element);
                charges.push(a.formal_charge);
            }
        }
        elements.sort_by_key(|e| e.symbol());
        elements.dedup();
        charges.sort_unstable();
        charges.dedup();
        if charges.is_empty() {
            charges.push(0);
        }
        Self {
            elements,
            charges,
            bond_orders: BondOrder::ALL.to_vec(),
            max_nodes: max_nodes_override.unwrap_or(max_nodes).max(1),
        }
    }

    pub fn element_index(&self, e: Element) -> Option<usize> {
        self.elements.iter().position(|&x| x == e)
    }

    pub fn charge_index(&self, q: i8) -> Option<usize> {
        self.charges.iter().position(|&x| x == q)
    }

    pub fn bond_index(&self, o: BondOrder) -> Option<usize> {
        self.bond_orders.iter().position(|&x| x == o)
    }

    /// Whether every atom of `g` is expressible in this vocabulary.
    pub fn covers(&self, g: &MolecularGraph) -> bool {
        g.atom_count() <= self.max_nodes
            && g.atoms().iter().all(|a| {
                self.element_index(a.element).is_some() && self.charge_index(a.formal_charge).is_some()
            })
    }

    /// Length of the one-hot node feature vector (element then charge).
    pub fn feature_dim(&self) -> usize {
        self.elements.len() + self.charges.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_is_sorted_and_sized() {
        let gs: Vec<MolecularGraph> = ["CCO", "CSC", "C(=O)[O-]", "ClCCBr"]
            .iter()
            .map(|s| parse_smiles(s).unwrap())
            .collect();
        let v = AtomVocabulary::from_graphs(&gs, None);
        let symbols: Vec<&str> = v.elements.iter().map(|e| e.symbol()).collect();
        assert_eq!(symbols, vec!["Br", "C", "Cl", "O", "S"]);
        assert_eq!(v.charges, vec![-1, 0]);
        assert_eq!(v.max_nodes, 4);
        assert_eq!(AtomVocabulary::from_graphs(&gs, Some(12)).max_nodes, 12);
        assert!(v.covers(&gs[0]));
        assert!(!v.covers(&parse_smiles("CN").unwrap()));
    }
}
