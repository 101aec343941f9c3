use std::collections::BTreeMap;

use super::element::Element;
use super::ChemError;

#[derive(Debug, Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BondOrder {
    Single = 1,
    Double = 2,
    Triple = 3,
}

impl BondOrder {
    pub const ALL: [BondOrder; 3] = [BondOrder::Single, BondOrder::Double, BondOrder::Triple];

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(order: u8) -> Option<Self> {
        match order {
            1 => Some(BondOrder::Single),
            2 => Some(BondOrder::Double),
            3 => Some(BondOrder::Triple),
            _ => None,
        }
    }

    pub fn smiles_symbol(self) -> &'static str {
        match self {
            BondOrder::Single => "",
            BondOrder::Double => "=",
            BondOrder::Triple => "#",
        }
    }
}

/// A heavy atom. Hydrogens are implicit and derived from the valence model.
#[derive(Debug, Copy, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i8,
}

impl Atom {
    pub fn new(element: Element, formal_charge: i8) -> Self {
        Self {
            element,
            formal_charge,
        }
    }
}

/// Molecular graph with integer bond orders keyed by `(i, j)`, `i < j`.
///
/// Atom indices are insertion order and never change.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    bonds: BTreeMap<(usize, usize), BondOrder>,
    pub finished: bool,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl MolecularGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn bonds(&self) -> impl Iterator<Item = ((usize, usize), BondOrder)> + '_ {
        self.bonds.iter().map(|(&k, &v)| (k, v))
    }

    pub fn add_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.atoms.len() - 1
    }

    /// Adds a bond without valence checks. Rejects self-loops, duplicates and
    /// out-of-range indices.
    pub fn add_bond(&mut self, a: usize, b: usize, order: BondOrder) -> Result<(), ChemError> {
        let n = self.atoms.len();
        if a == b || a >= n || b >= n {
            return Err(ChemError::InvalidGraph(format!("bad bond ({a}, {b})")));
        }
        let k = key(a, b);
        if self.bonds.contains_key(&k) {
            return Err(ChemError::InvalidGraph(format!("duplicate bond ({a}, {b})")));
        }
        self.bonds.insert(k, order);
        Ok(())
    }

    pub fn set_bond_order(&mut self, a: usize, b: usize, order: BondOrder) {
        if let Some(o) = self.bonds.get_mut(&key(a, b)) {
            *o = order;
        }
    }

    pub fn bond(&self, a: usize, b: usize) -> Option<BondOrder> {
        self.bonds.get(&key(a, b)).copied()
    }

    /// Neighbours of `i` with bond orders, ascending by neighbour index.
    pub fn neighbors(&self, i: usize) -> Vec<(usize, BondOrder)> {
        let mut out: Vec<(usize, BondOrder)> = self
            .bonds
            .iter()
            .filter_map(|(&(a, b), &o)| {
                if a == i {
                    Some((b, o))
                } else if b == i {
                    Some((a, o))
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Adjacency lists for all atoms, built in one pass.
    pub fn adjacency(&self) -> Vec<Vec<(usize, BondOrder)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for (&(a, b), &o) in &self.bonds {
            adj[a].push((b, o));
            adj[b].push((a, o));
        }
        adj
    }

    pub fn degree(&self, i: usize) -> usize {
        self.bonds.keys().filter(|&&(a, b)| a == i || b == i).count()
    }

    pub fn bond_order_sum(&self, i: usize) -> u8 {
        self.bonds
            .iter()
            .filter(|(&(a, b), _)| a == i || b == i)
            .map(|(_, o)| o.as_u8())
            .sum()
    }

    /// `default_valence - bond_order_sum`, or `None` when no allowed valence
    /// accommodates the bonds.
    pub fn implicit_hydrogens(&self, i: usize) -> Option<u8> {
        let atom = self.atoms[i];
        let sum = self.bond_order_sum(i);
        atom.element
            .default_valence(atom.formal_charge, sum)
            .map(|v| v - sum)
    }

    /// Whether one more bond of `extra` order fits on atom `i`.
    pub fn can_accept(&self, i: usize, extra: u8) -> bool {
        let atom = self.atoms[i];
        match atom.element.max_valence(atom.formal_charge) {
            Some(max) => self.bond_order_sum(i) + extra <= max,
            None => false,
        }
    }

    pub fn is_connected(&self) -> bool {
        if self.atoms.is_empty() {
            return false;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(u, _) in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Non-empty, connected, and every atom within its valence.
    pub fn is_valid(&self) -> bool {
        self.is_connected() && valence_ok(self).into_iter().all(|ok| ok)
    }

    /// Relabels atoms so that old atom `perm[k]` becomes new atom `k`.
    pub fn permuted(&self, perm: &[usize]) -> MolecularGraph {
        assert_eq!(perm.len(), self.atoms.len());
        let mut inverse = vec![0usize; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut g = MolecularGraph {
            atoms: perm.iter().map(|&old| self.atoms[old]).collect(),
            bonds: BTreeMap::new(),
            finished: self.finished,
        };
        for (&(a, b), &o) in &self.bonds {
            g.bonds.insert(key(inverse[a], inverse[b]), o);
        }
        g
    }
}

/// Per-atom valence check: bond-order sum within the element's largest
/// allowed valence for its charge.
pub fn valence_ok(g: &MolecularGraph) -> Vec<bool> {
    let mut sums = vec![0u8; g.atom_count()];
    for ((a, b), o) in g.bonds() {
        sums[a] += o.as_u8();
        sums[b] += o.as_u8();
    }
    g.atoms()
        .iter()
        .zip(sums)
        .map(|(atom, sum)| {
            atom.element
                .max_valence(atom.formal_charge)
                .is_some_and(|max| sum <= max)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(center: Element, n: usize, order: BondOrder) -> MolecularGraph {
        let mut g = MolecularGraph::new();
        let c = g.add_atom(Atom::new(center, 0));
        for _ in 0..n {
            let x = g.add_atom(Atom::new(Element::C, 0));
            g.add_bond(c, x, order).unwrap();
        }
        g
    }

    #[test]
    fn carbon_with_four_single_bonds_is_ok() {
        assert!(valence_ok(&star(Element::C, 4, BondOrder::Single))[0]);
    }

    #[test]
    fn oxygen_with_three_single_bonds_fails() {
        assert!(!valence_ok(&star(Element::O, 3, BondOrder::Single))[0]);
    }

    #[test]
    fn hexavalent_sulfur_is_ok() {
        // sulfone pattern: two S=O plus two S-C
        let mut g = MolecularGraph::new();
        let s = g.add_atom(Atom::new(Element::S, 0));
        for (el, order) in [
            (Element::O, BondOrder::Double),
            (Element::O, BondOrder::Double),
            (Element::C, BondOrder::Single),
            (Element::C, BondOrder::Single),
        ] {
            let x = g.add_atom(Atom::new(el, 0));
            g.add_bond(s, x, order).unwrap();
        }
        assert_eq!(g.bond_order_sum(s), 6);
        assert!(valence_ok(&g).into_iter().all(|ok| ok));
        assert_eq!(g.implicit_hydrogens(s), Some(0));
    }

    #[test]
    fn duplicate_and_self_bonds_rejected() {
        let mut g = star(Element::C, 1, BondOrder::Single);
        assert!(g.add_bond(0, 1, BondOrder::Single).is_err());
        assert!(g.add_bond(1, 0, BondOrder::Double).is_err());
        assert!(g.add_bond(1, 1, BondOrder::Single).is_err());
        assert!(g.add_bond(0, 7, BondOrder::Single).is_err());
    }

    #[test]
    fn implicit_hydrogens_follow_valence() {
        let g = star(Element::C, 1, BondOrder::Single);
        assert_eq!(g.implicit_hydrogens(0), Some(3));
        let mut m = MolecularGraph::new();
        m.add_atom(Atom::new(Element::C, 0));
        assert_eq!(m.implicit_hydrogens(0), Some(4));
    }
}
