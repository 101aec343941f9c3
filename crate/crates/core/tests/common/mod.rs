use flavorgraph_core::actions::{apply_in_place, Action, ActionLayout, Apd};
use flavorgraph_core::chem::{AtomVocabulary, MolecularGraph};
use flavorgraph_core::corpus::Corpus;
use flavorgraph_core::data::TOY_FLAVOR_CORPUS;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn toy_vocab(max_nodes: usize) -> AtomVocabulary {
    let mut v = Corpus::ingest(TOY_FLAVOR_CORPUS, None).unwrap().vocab;
    v.max_nodes = max_nodes;
    v
}

/// A connected, valence-respecting graph grown by uniform legal actions
/// until it has between 1 and `max_atoms` atoms.
pub fn random_graph(seed: u64, max_atoms: usize) -> MolecularGraph {
    let vocab = toy_vocab(max_atoms);
    let layout = ActionLayout::from_vocab(&vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = rng.gen_range(1..=max_atoms);
    let uniform = Apd::from_logits(layout, &vec![0.0; layout.total()]);
    let mut g = MolecularGraph::new();
    for _ in 0..4 * max_atoms {
        if g.atom_count() >= target {
            break;
        }
        let Some(legal) = uniform.masked(&g, &vocab) else { break };
        let a = layout.action_at(legal.sample(&mut rng)).unwrap();
        if a == Action::Terminate {
            continue;
        }
        apply_in_place(&mut g, &a, &vocab).unwrap();
    }
    apply_in_place(&mut g, &Action::Terminate, &vocab).unwrap();
    g
}

pub fn random_permutation(seed: u64, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    p
}
