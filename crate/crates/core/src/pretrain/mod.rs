//! Generative pretraining on deconstructed molecules, lockstep sampling and
//! evaluation of a generator.

mod sample;

pub use sample::{
    episode_states, sample_molecules, EpisodeEnd, SampleBatch, SampleOptions, SampledEpisode, STEP_SLACK,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::actions::{deconstruct, equivalent_actions, ActionError, ActionLayout};
use crate::chem::{write_smiles, AtomVocabulary, ChemError, MolecularGraph};
use crate::eval::{compute_stats, uc_jsd, EvalError, GenerationStats};
use crate::net::{
    adam_step, chosen_log_probs, weighted_kl, AdamState, Checkpoint, Gradients, ModelParams, NetError, Tape,
};

#[derive(Debug, Error)]
pub enum PretrainError {
    #[error("corpus has no molecules")]
    EmptyCorpus,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Chem(#[from] ChemError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("checkpoint metadata: {0}")]
    Meta(String),
}

/// A molecule's construction path as (prefix state, target slot) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub smiles: String,
    pub states: Vec<MolecularGraph>,
    /// Canonical action slot of each step.
    pub targets: Vec<usize>,
    /// Slots whose result is isomorphic to the canonical one; the training
    /// target is uniform over them.
    pub target_sets: Vec<Vec<usize>>,
}

impl TrainingExample {
    pub fn new(g: &MolecularGraph, vocab: &AtomVocabulary) -> Result<Self, PretrainError> {
        let steps = deconstruct(g, vocab)?;
        let (states, actions): (Vec<_>, Vec<_>) = steps.into_iter().unzip();
        Self::from_steps(write_smiles(g)?, states, &actions, vocab)
    }

    pub(crate) fn from_steps(
        smiles: String,
        states: Vec<MolecularGraph>,
        actions: &[crate::actions::Action],
        vocab: &AtomVocabulary,
    ) -> Result<Self, PretrainError> {
        let layout = ActionLayout::from_vocab(vocab);
        let mut targets = Vec::with_capacity(actions.len());
        let mut target_sets = Vec::with_capacity(actions.len());
        for (s, a) in states.iter().zip(actions) {
            targets.push(layout.flat_index(a)?);
            let mut set = equivalent_actions(s, a, vocab)?
                .iter()
                .map(|e| layout.flat_index(e))
                .collect::<Result<Vec<_>, _>>()?;
            set.sort_unstable();
            target_sets.push(set);
        }
        Ok(Self {
            smiles,
            states,
            targets,
            target_sets,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: ModelParams,
    pub adam: AdamState,
    pub epoch: u64,
    pub seed: u64,
    rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(model: ModelParams, seed: u64) -> Self {
        let adam = AdamState::new(&model.store);
        Self {
            model,
            adam,
            epoch: 0,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Optimizer steps taken so far.
    pub fn step(&self) -> u64 {
        self.adam.step
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut meta = std::collections::BTreeMap::new();
        meta.insert("epoch".into(), self.epoch.to_string());
        meta.insert("train_seed".into(), self.seed.to_string());
        meta.insert("rng_stream".into(), self.rng.get_stream().to_string());
        meta.insert("rng_word_pos".into(), self.rng.get_word_pos().to_string());
        Checkpoint {
            model: self.model.clone(),
            adam: Some(self.adam.clone()),
            meta,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self, PretrainError> {
        fn field<T: std::str::FromStr>(ck: &Checkpoint, key: &str) -> Result<T, PretrainError> {
            ck.meta
                .get(key)
                .ok_or_else(|| PretrainError::Meta(format!("missing {key}")))?
                .parse()
                .map_err(|_| PretrainError::Meta(format!("bad {key}")))
        }
        let seed: u64 = field(&ck, "train_seed")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(field(&ck, "rng_stream")?);
        rng.set_word_pos(field(&ck, "rng_word_pos")?);
        let epoch = field(&ck, "epoch")?;
        let adam = match ck.adam {
            Some(a) => a,
            None => AdamState::new(&ck.model.store),
        };
        Ok(Self {
            model: ck.model,
            adam,
            epoch,
            seed,
            rng,
        })
    }
}

/// Splits `n` items into at most `parts` contiguous ranges.
pub(crate) fn chunk_ranges(n: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let parts = parts.clamp(1, n.max(1));
    let size = n.div_ceil(parts).max(1);
    (0..n).step_by(size).map(|s| s..(s + size).min(n)).collect()
}

/// Mean per-molecule KL over `batch` and its gradient. Molecules are split
/// into one tape per pool thread; partial results are added in order.
pub fn batch_gradients(model: &ModelParams, batch: &[&TrainingExample]) -> Result<(f64, Gradients), NetError> {
    let m = batch.len() as f64;
    let ranges = chunk_ranges(batch.len(), rayon::current_num_threads());
    let parts: Vec<Result<(f64, Gradients), NetError>> = ranges
        .into_par_iter()
        .map(|r| {
            let mut states = Vec::new();
            let mut sets = Vec::new();
            let mut weights = Vec::new();
            for ex in &batch[r] {
                let w = 1.0 / (ex.len() as f64 * m);
                states.extend(ex.states.iter());
                sets.extend(ex.target_sets.iter().cloned());
                weights.extend(std::iter::repeat(w).take(ex.len()));
            }
            let mut tape = Tape::new(&model.store);
            let loss = weighted_kl(&mut tape, model, &states, &sets, &weights)?;
            Ok((tape.value(loss).data[0], tape.backward(loss)))
        })
        .collect();
    let mut total = 0.0;
    let mut grads = Gradients::empty(model.store.len());
    for p in parts {
        let (l, g) = p?;
        total += l;
        grads.accumulate(&g);
    }
    Ok((total, grads))
}

/// One pass over `corpus` in shuffled batches; returns each batch's loss.
pub fn train_epoch(
    state: &mut TrainState,
    corpus: &[TrainingExample],
    batch_size: usize,
) -> Result<Vec<f64>, PretrainError> {
    if corpus.is_empty() {
        return Err(PretrainError::EmptyCorpus);
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut state.rng);
    let mut losses = Vec::with_capacity(corpus.len().div_ceil(batch_size));
    for chunk in order.chunks(batch_size.max(1)) {
        let batch: Vec<&TrainingExample> = chunk.iter().map(|&i| &corpus[i]).collect();
        let (loss, grads) = batch_gradients(&state.model, &batch)?;
        let cfg = state.model.config.clone();
        adam_step(&mut state.model.store, &grads, &mut state.adam, &cfg)?;
        losses.push(loss);
    }
    state.epoch += 1;
    Ok(losses)
}

/// Negative log-likelihood of each example's construction path.
pub fn sequence_nlls(model: &ModelParams, examples: &[TrainingExample]) -> Result<Vec<f64>, NetError> {
    let ranges = chunk_ranges(examples.len(), examples.len().div_ceil(20));
    let parts: Vec<Result<Vec<f64>, NetError>> = ranges
        .into_par_iter()
        .map(|r| {
            let chunk = &examples[r];
            let states: Vec<&MolecularGraph> = chunk.iter().flat_map(|e| e.states.iter()).collect();
            let targets: Vec<usize> = chunk.iter().flat_map(|e| e.targets.iter().copied()).collect();
            let mut tape = Tape::new(&model.store);
            let lp = chosen_log_probs(&mut tape, model, &states, &targets)?;
            let values = &tape.value(lp).data;
            let mut out = Vec::with_capacity(chunk.len());
            let mut at = 0;
            for e in chunk {
                out.push(-values[at..at + e.len()].iter().sum::<f64>());
                at += e.len();
            }
            Ok(out)
        })
        .collect();
    let mut out = Vec::with_capacity(examples.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub stats: GenerationStats,
    pub uc_jsd: f64,
    pub batch: SampleBatch,
}

/// Samples `n` molecules and compares their NLLs with the train and
/// validation splits. An empty validation split falls back to train.
pub fn evaluate_epoch(
    model: &ModelParams,
    train: &[TrainingExample],
    valid: &[TrainingExample],
    n: usize,
    opts: SampleOptions,
    bins: usize,
) -> Result<EvalReport, PretrainError> {
    if train.is_empty() {
        return Err(PretrainError::EmptyCorpus);
    }
    let batch = sample_molecules(model, n, opts)?;
    let stats = compute_stats(&batch)?;
    let train_nll = sequence_nlls(model, train)?;
    let valid_nll = if valid.is_empty() {
        train_nll.clone()
    } else {
        sequence_nlls(model, valid)?
    };
    let d = uc_jsd(&batch.nlls(), &train_nll, &valid_nll, bins)?;
    Ok(EvalReport {
        stats,
        uc_jsd: d,
        batch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;
    use crate::net::NetConfig;

    fn tiny(smiles: &[&str]) -> (ModelParams, Vec<TrainingExample>) {
        let gs: Vec<_> = smiles.iter().map(|s| parse_smiles(s).unwrap()).collect();
        let vocab = AtomVocabulary::from_graphs(&gs, None);
        let cfg = NetConfig {
            width: 8,
            hidden_dim: 16,
            message_size: 8,
            mlp_hidden: 16,
            lr0: 1e-2,
            ..NetConfig::default()
        };
        let m = ModelParams::init(cfg, vocab.clone(), 5).unwrap();
        let ex = gs.iter().map(|g| TrainingExample::new(g, &vocab).unwrap()).collect();
        (m, ex)
    }

    #[test]
    fn chunking_covers_everything() {
        for (n, p) in [(0, 3), (1, 4), (20, 1), (20, 3), (7, 7), (5, 9)] {
            let r = chunk_ranges(n, p);
            let flat: Vec<usize> = r.iter().flat_map(|r| r.clone()).collect();
            assert_eq!(flat, (0..n).collect::<Vec<_>>());
            assert!(r.len() <= p.max(1));
        }
    }

    #[test]
    fn batch_loss_is_mean_of_molecule_kls() {
        let (m, ex) = tiny(&["CCO", "C=O", "CC#N"]);
        let refs: Vec<&TrainingExample> = ex.iter().collect();
        let (loss, _) = batch_gradients(&m, &refs).unwrap();
        // Oracle: per-step KL from the explicit target distribution.
        let layout = m.layout();
        let mut expected = 0.0;
        for e in &ex {
            let mut per_mol = 0.0;
            for (s, set) in e.states.iter().zip(&e.target_sets) {
                let mut probs = vec![0.0; layout.total()];
                set.iter().for_each(|&k| probs[k] = 1.0 / set.len() as f64);
                let target = crate::actions::Apd { layout, probs };
                per_mol += crate::net::kl_divergence(&target, &crate::net::apd_forward(s, &m).unwrap());
            }
            expected += per_mol / e.len() as f64 / 3.0;
        }
        assert!((loss - expected).abs() < 1e-9, "{loss} vs {expected}");
        assert!(ex[0].target_sets.iter().any(|s| s.len() > 1));
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        let (m, ex) = tiny(&["CCO", "C=O", "CC#N", "OCC=O"]);
        let run = || {
            let mut s = TrainState::new(m.clone(), 77);
            let mut all = Vec::new();
            for _ in 0..3 {
                all.extend(train_epoch(&mut s, &ex, 2).unwrap());
            }
            (all, s)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert_eq!(sa.step(), 6);
        assert_eq!(sa.epoch, 3);
        assert!(sa.model.store.all_finite());
    }

    #[test]
    fn checkpoint_resume_is_bit_identical() {
        let (m, ex) = tiny(&["CCO", "C=O", "CC#N"]);
        let mut straight = TrainState::new(m, 3);
        train_epoch(&mut straight, &ex, 2).unwrap();
        let bytes = straight.to_checkpoint().to_bytes();
        let expected = train_epoch(&mut straight, &ex, 2).unwrap();
        let mut resumed = TrainState::from_checkpoint(Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        let got = train_epoch(&mut resumed, &ex, 2).unwrap();
        assert_eq!(expected, got);
        assert_eq!(straight, resumed);
    }

    #[test]
    fn sampled_nll_matches_replay() {
        let (m, _) = tiny(&["CCO", "C=O"]);
        let batch = sample_molecules(
            &m,
            12,
            SampleOptions {
                seed: 9,
                mask_invalid_actions: false,
            },
        )
        .unwrap();
        let layout = m.layout();
        for e in &batch.episodes {
            assert!(e.nll() >= 0.0);
            let states = episode_states(&e.actions, &m);
            assert_eq!(states.len(), e.actions.len());
            let targets: Vec<usize> = e.actions.steps.iter().map(|a| layout.flat_index(a).unwrap()).collect();
            let refs: Vec<&MolecularGraph> = states.iter().collect();
            let mut t = Tape::new(&m.store);
            let lp = crate::net::sequence_log_prob(&mut t, &m, &refs, &targets).unwrap();
            assert!((t.value(lp).data[0] + e.nll()).abs() < 1e-9);
        }
    }

    #[test]
    fn forced_terminate_gives_empty_invalid_graphs() {
        let (mut m, _) = tiny(&["CCO"]);
        let id = m.param_id("term.b").unwrap();
        m.store.get_mut(id).data[0] = 1e6;
        let batch = sample_molecules(
            &m,
            5,
            SampleOptions {
                seed: 1,
                mask_invalid_actions: false,
            },
        )
        .unwrap();
        for e in &batch.episodes {
            assert!(e.graph.is_empty());
            assert!(e.terminated());
            assert!(!e.valid);
        }
    }

    #[test]
    fn masked_sampling_only_takes_legal_actions() {
        let (m, _) = tiny(&["CCO", "C=O"]);
        let batch = sample_molecules(
            &m,
            20,
            SampleOptions {
                seed: 4,
                mask_invalid_actions: true,
            },
        )
        .unwrap();
        for e in &batch.episodes {
            assert!(!matches!(e.end, EpisodeEnd::InvalidAction(_) | EpisodeEnd::NodeLimit), "{:?}", e.end);
        }
    }
}
