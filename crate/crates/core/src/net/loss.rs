use super::model::{chosen_log_probs, log_probs_batch};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::{ModelParams, NetError};
use crate::actions::Apd;
use crate::chem::MolecularGraph;

/// Probability floor applied before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// KL divergence from a one-hot target at `target_slot` to `predicted`.
pub fn kl_loss(target_slot: usize, predicted: &Apd) -> f64 {
    -predicted.probs[target_slot].max(PROB_FLOOR).ln()
}

/// KL divergence between two full distributions; zero-mass target slots
/// contribute nothing.
pub fn kl_divergence(target: &Apd, predicted: &Apd) -> f64 {
    target
        .probs
        .iter()
        .zip(&predicted.probs)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, p)| t * (t.ln() - p.max(PROB_FLOOR).ln()))
        .sum()
}

/// Mean per-step KL of one molecule's deconstruction on `tape`.
pub fn sequence_kl(
    tape: &mut Tape,
    p: &ModelParams,
    states: &[&MolecularGraph],
    targets: &[usize],
) -> Result<Var, NetError> {
    assert!(!states.is_empty(), "empty step list");
    let lp = chosen_log_probs(tape, p, states, targets)?;
    let floored = tape.clamp_min(lp, PROB_FLOOR.ln());
    let total = tape.sum(floored);
    Ok(tape.scale(total, -1.0 / states.len() as f64))
}

/// `sum_k weights[k] * KL(u_k || p_k)` over a flat list of states that may
/// come from many molecules, where `u_k` is uniform over `target_sets[k]`.
/// Log-probabilities are floored at `ln PROB_FLOOR`.
pub fn weighted_kl(
    tape: &mut Tape,
    p: &ModelParams,
    states: &[&MolecularGraph],
    target_sets: &[Vec<usize>],
    weights: &[f64],
) -> Result<Var, NetError> {
    assert_eq!(states.len(), weights.len());
    assert_eq!(states.len(), target_sets.len());
    let lp = log_probs_batch(tape, p, states)?;
    let total = p.layout().total();
    let mut idx = Vec::new();
    let mut w = Vec::new();
    let mut entropy_term = 0.0;
    for (k, set) in target_sets.iter().enumerate() {
        assert!(!set.is_empty(), "empty target set");
        let share = 1.0 / set.len() as f64;
        for &s in set {
            assert!(s < total, "target slot out of range");
            idx.push(k * total + s);
            w.push(weights[k] * share);
        }
        entropy_term += weights[k] * share.ln();
    }
    let n = idx.len();
    let picked = tape.gather_flat(lp, idx, n, 1);
    let floored = tape.clamp_min(picked, PROB_FLOOR.ln());
    let wv = tape.constant(Tensor::from_rows(n, 1, w));
    let weighted = tape.mul(floored, wv);
    let sum = tape.sum(weighted);
    let neg = tape.scale(sum, -1.0);
    Ok(tape.add_scalar(neg, entropy_term))
}

/// Sum of per-step log-probabilities of a recorded action sequence.
pub fn sequence_log_prob(
    tape: &mut Tape,
    p: &ModelParams,
    states: &[&MolecularGraph],
    targets: &[usize],
) -> Result<Var, NetError> {
    let lp = chosen_log_probs(tape, p, states, targets)?;
    Ok(tape.sum(lp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::ActionLayout;

    fn layout() -> ActionLayout {
        ActionLayout {
            max_nodes: 2,
            n_elements: 2,
            n_charges: 1,
            n_bonds: 3,
        }
    }

    #[test]
    fn one_hot_and_uniform_cases() {
        let l = layout();
        let s = l.total();
        assert_eq!(kl_loss(3, &Apd::one_hot(l, 3)), 0.0);
        let uniform = Apd::from_logits(l, &vec![0.0; s]);
        assert!((kl_loss(0, &uniform) - (s as f64).ln()).abs() < 1e-12);
        let mut probs = vec![0.75 / (s - 1) as f64; s];
        probs[5] = 0.25;
        let p = Apd { layout: l, probs };
        assert!((kl_loss(5, &p) - 4f64.ln()).abs() < 1e-12);
        assert!((kl_loss(5, &p) - 1.3863).abs() < 1e-4);
        assert!((kl_divergence(&Apd::one_hot(l, 5), &p) - kl_loss(5, &p)).abs() < 1e-15);
    }

    #[test]
    fn zero_mass_target_hits_the_floor() {
        let l = layout();
        let p = Apd::one_hot(l, 0);
        assert!((kl_loss(1, &p) - 12.0 * 10f64.ln()).abs() < 1e-9);
    }
}
