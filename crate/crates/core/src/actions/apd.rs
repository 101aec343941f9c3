use rand::Rng;

use super::{apply_action, Action, ActionError};
use crate::chem::{AtomVocabulary, MolecularGraph};

/// Flat slot layout shared by actions, APDs and network logits:
/// the add block `(node, element, charge, bond)`, then the connect block
/// `(node, bond)`, then the single terminate slot.
#[derive(Debug, Copy, Clone, PartialEq, Eq)]
pub struct ActionLayout {
    pub max_nodes: usize,
    pub n_elements: usize,
    pub n_charges: usize,
    pub n_bonds: usize,
}

impl ActionLayout {
    pub fn from_vocab(vocab: &AtomVocabulary) -> Self {
        Self {
            max_nodes: vocab.max_nodes,
            n_elements: vocab.elements.len(),
            n_charges: vocab.charges.len(),
            n_bonds: vocab.bond_orders.len(),
        }
    }

    /// Add-block columns per node.
    pub fn add_width(&self) -> usize {
        self.n_elements * self.n_charges * self.n_bonds
    }

    pub fn add_len(&self) -> usize {
        self.max_nodes * self.add_width()
    }

    pub fn conn_len(&self) -> usize {
        self.max_nodes * self.n_bonds
    }

    pub fn terminate_index(&self) -> usize {
        self.add_len() + self.conn_len()
    }

    pub fn total(&self) -> usize {
        self.terminate_index() + 1
    }

    pub fn flat_index(&self, a: &Action) -> Result<usize, ActionError> {
        let oor = |index| ActionError::OutOfRange {
            index,
            total: self.total(),
        };
        match *a {
            Action::AddNode {
                attach_to,
                element,
                charge,
                bond_order,
            } => {
                if attach_to >= self.max_nodes
                    || element >= self.n_elements
                    || charge >= self.n_charges
                    || bond_order >= self.n_bonds
                {
                    return Err(oor(usize::MAX));
                }
                Ok(((attach_to * self.n_elements + element) * self.n_charges + charge) * self.n_bonds
                    + bond_order)
            }
            Action::Connect { to_node, bond_order } => {
                if to_node >= self.max_nodes || bond_order >= self.n_bonds {
                    return Err(oor(usize::MAX));
                }
                Ok(self.add_len() + to_node * self.n_bonds + bond_order)
            }
            Action::Terminate => Ok(self.terminate_index()),
        }
    }

    pub fn action_at(&self, index: usize) -> Result<Action, ActionError> {
        if index >= self.total() {
            return Err(ActionError::OutOfRange {
                index,
                total: self.total(),
            });
        }
        if index == self.terminate_index() {
            return Ok(Action::Terminate);
        }
        if index >= self.add_len() {
            let rest = index - self.add_len();
            return Ok(Action::Connect {
                to_node: rest / self.n_bonds,
                bond_order: rest % self.n_bonds,
            });
        }
        let bond_order = index % self.n_bonds;
        let rest = index / self.n_bonds;
        let charge = rest % self.n_charges;
        let rest = rest / self.n_charges;
        Ok(Action::AddNode {
            attach_to: rest / self.n_elements,
            element: rest % self.n_elements,
            charge,
            bond_order,
        })
    }
}

/// Normalized distribution over every action slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Apd {
    pub layout: ActionLayout,
    pub probs: Vec<f64>,
}

impl Apd {
    /// One softmax over all slots.
    pub fn from_logits(layout: ActionLayout, logits: &[f64]) -> Self {
        assert_eq!(logits.len(), layout.total());
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let z: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= z;
        }
        Self { layout, probs }
    }

    pub fn from_log_probs(layout: ActionLayout, log_probs: &[f64]) -> Self {
        assert_eq!(log_probs.len(), layout.total());
        Self {
            layout,
            probs: log_probs.iter().map(|l| l.exp()).collect(),
        }
    }

    pub fn one_hot(layout: ActionLayout, slot: usize) -> Self {
        let mut probs = vec![0.0; layout.total()];
        probs[slot] = 1.0;
        Self { layout, probs }
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn add_block(&self) -> &[f64] {
        &self.probs[..self.layout.add_len()]
    }

    pub fn conn_block(&self) -> &[f64] {
        &self.probs[self.layout.add_len()..self.layout.terminate_index()]
    }

    pub fn terminate(&self) -> f64 {
        self.probs[self.layout.terminate_index()]
    }

    /// Zeroes every slot whose action is invalid on `g` and renormalizes.
    /// Returns `None` when no legal slot carries mass.
    pub fn masked(&self, g: &MolecularGraph, vocab: &AtomVocabulary) -> Option<Apd> {
        let mut probs = self.probs.clone();
        for (slot, p) in probs.iter_mut().enumerate() {
            if *p == 0.0 {
                continue;
            }
            let action = self.layout.action_at(slot).expect("slot within layout");
            if apply_action(g, &action, vocab).is_err() {
                *p = 0.0;
            }
        }
        let z: f64 = probs.iter().sum();
        if z <= 0.0 {
            return None;
        }
        for p in &mut probs {
            *p /= z;
        }
        Some(Apd {
            layout: self.layout,
            probs,
        })
    }

    /// Inverse-CDF draw of one slot.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_slot(&self.probs, rng)
    }
}

pub(crate) fn sample_slot<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout(n: usize, e: usize, c: usize, b: usize) -> ActionLayout {
        ActionLayout {
            max_nodes: n,
            n_elements: e,
            n_charges: c,
            n_bonds: b,
        }
    }

    #[test]
    fn total_slots_formula() {
        let l = layout(7, 4, 2, 3);
        assert_eq!(l.total(), 7 * 4 * 2 * 3 + 7 * 3 + 1);
        assert_eq!(l.flat_index(&Action::Terminate).unwrap(), l.total() - 1);
    }

    #[test]
    fn flat_index_is_a_bijection() {
        for l in [layout(1, 1, 1, 3), layout(3, 2, 2, 3), layout(5, 4, 1, 3)] {
            let mut seen = vec![false; l.total()];
            for i in 0..l.total() {
                let a = l.action_at(i).unwrap();
                let j = l.flat_index(&a).unwrap();
                assert_eq!(i, j);
                assert!(!seen[j]);
                seen[j] = true;
            }
            assert!(l.action_at(l.total()).is_err());
        }
    }

    #[test]
    fn out_of_range_actions() {
        let l = layout(3, 2, 1, 3);
        let bad = Action::AddNode {
            attach_to: 3,
            element: 0,
            charge: 0,
            bond_order: 0,
        };
        assert!(l.flat_index(&bad).is_err());
        assert!(l.flat_index(&Action::Connect { to_node: 0, bond_order: 3 }).is_err());
    }

    #[test]
    fn softmax_properties() {
        let l = layout(2, 2, 1, 3);
        let zeros = vec![0.0; l.total()];
        let apd = Apd::from_logits(l, &zeros);
        for p in &apd.probs {
            assert!((p - 1.0 / l.total() as f64).abs() < 1e-15);
        }
        let logits: Vec<f64> = (0..l.total()).map(|i| (i as f64 * 0.37).sin()).collect();
        let shifted: Vec<f64> = logits.iter().map(|x| x + 123.0).collect();
        let a = Apd::from_logits(l, &logits);
        let b = Apd::from_logits(l, &shifted);
        assert!((a.total_mass() - 1.0).abs() < 1e-12);
        for (x, y) in a.probs.iter().zip(&b.probs) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(a.add_block().len() + a.conn_block().len() + 1, l.total());
    }

    #[test]
    fn sampling_never_picks_zero_mass() {
        let l = layout(1, 1, 1, 3);
        let apd = Apd::one_hot(l, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(apd.sample(&mut rng), 4);
        }
    }
}
