use sha2::{Digest, Sha256};

use crate::chem::MolecularGraph;

use super::ScoringError;

/// Default environment radius.
pub const FRAGMENT_RADIUS: usize = 2;

/// Canonical environment string of every atom, grown `radius` bond shells
/// outward. Level 0 is element, charge and degree; level r is the atom's level-0
/// label followed by its neighbors' sorted level r-1 labels, each prefixed
/// with the bond order.
pub fn environment_labels(g: &MolecularGraph, radius: usize) -> Vec<String> {
    let adj = g.adjacency();
    let base: Vec<String> = (0..g.atom_count())
        .map(|i| {
            let a = g.atom(i);
            format!("{}{:+}d{}", a.element.symbol(), a.formal_charge, adj[i].len())
        })
        .collect();
    let mut labels = base.clone();
    for _ in 0..radius {
        labels = (0..g.atom_count())
            .map(|i| {
                let mut nb: Vec<String> = adj[i]
                    .iter()
                    .map(|&(u, o)| format!("{}{}", o.as_u8(), labels[u]))
                    .collect();
                nb.sort();
                format!("{}({})", base[i], nb.join(","))
            })
            .collect();
    }
    labels
}

/// First eight bytes of the SHA-256 digest, little-endian.
pub fn fragment_id(label: &str) -> u64 {
    let digest = Sha256::digest(label.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// One fragment id per atom, sorted.
pub fn circular_fragments(g: &MolecularGraph, radius: usize) -> Result<Vec<u64>, ScoringError> {
    if !g.is_valid() {
        return Err(ScoringError::InvalidGraph);
    }
    let mut ids: Vec<u64> = environment_labels(g, radius).iter().map(|s| fragment_id(s)).collect();
    ids.sort_unstable();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    #[test]
    fn methane_and_ethanol() {
        let m = parse_smiles("C").unwrap();
        assert_eq!(circular_fragments(&m, 2).unwrap().len(), 1);

        // Hand-enumerated environments of C(1)-C(2)-O(3).
        let g = parse_smiles("CCO").unwrap();
        let labels = environment_labels(&g, 2);
        assert_eq!(
            labels,
            vec![
                "C+0d1(1C+0d2(1C+0d1,1O+0d1))",
                "C+0d2(1C+0d1(1C+0d2),1O+0d1(1C+0d2))",
                "O+0d1(1C+0d2(1C+0d1,1O+0d1))",
            ]
        );
        let ids = circular_fragments(&g, 2).unwrap();
        assert_eq!(ids.len(), 3);
        assert_ne!(fragment_id(&labels[0]), fragment_id(&labels[1]));
    }

    #[test]
    fn relabeling_invariant() {
        let g = parse_smiles("CC(=O)OCC1=CC=CO1").unwrap();
        let n = g.atom_count();
        let perm: Vec<usize> = (0..n).rev().collect();
        assert_eq!(
            circular_fragments(&g, 2).unwrap(),
            circular_fragments(&g.permuted(&perm), 2).unwrap()
        );
    }

    #[test]
    fn rejects_invalid_graph() {
        assert!(circular_fragments(&MolecularGraph::new(), 2).is_err());
    }
}
