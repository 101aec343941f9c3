use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::actions::{apd::sample_slot, apply_in_place, Action, ActionSequence, Apd, Invalid};
use crate::chem::{write_smiles, MolecularGraph};
use crate::net::{log_probs, ModelParams, NetError};

/// Extra steps allowed beyond `max_nodes` before an episode is cut off.
pub const STEP_SLACK: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeEnd {
    Terminated,
    InvalidAction(Invalid),
    /// An add would have exceeded `max_nodes`.
    NodeLimit,
    StepCap,
    /// Masking removed every slot.
    NoLegalAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledEpisode {
    /// Every sampled action, including a final rejected one.
    pub actions: ActionSequence,
    /// Model log-probability of each sampled slot.
    pub step_log_probs: Vec<f64>,
    pub graph: MolecularGraph,
    pub end: EpisodeEnd,
    /// Canonical SMILES of a valid graph.
    pub smiles: Option<String>,
    pub valid: bool,
    /// Valid and the first occurrence of its SMILES in the batch.
    pub unique: bool,
}

impl EpisodeEnd {
    pub fn as_str(self) -> &'static str {
        match self {
            EpisodeEnd::Terminated => "terminated",
            EpisodeEnd::InvalidAction(_) => "invalid_action",
            EpisodeEnd::NodeLimit => "node_limit",
            EpisodeEnd::StepCap => "step_cap",
            EpisodeEnd::NoLegalAction => "no_legal_action",
        }
    }
}

impl SampledEpisode {
    pub fn nll(&self) -> f64 {
        -self.step_log_probs.iter().sum::<f64>()
    }

    pub fn terminated(&self) -> bool {
        self.end == EpisodeEnd::Terminated
    }

    pub fn finished(&self) -> bool {
        self.graph.finished
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleBatch {
    pub episodes: Vec<SampledEpisode>,
}

impl SampleBatch {
    /// Recomputes the uniqueness flags in episode order.
    pub fn new(mut episodes: Vec<SampledEpisode>) -> Self {
        let mut seen = HashSet::new();
        for e in &mut episodes {
            e.unique = match &e.smiles {
                Some(s) if e.valid => seen.insert(s.clone()),
                _ => false,
            };
        }
        Self { episodes }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn nlls(&self) -> Vec<f64> {
        self.episodes.iter().map(SampledEpisode::nll).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOptions {
    /// Episode `i` draws from stream `i` of a generator keyed by this seed.
    pub seed: u64,
    /// Renormalize each APD over legal actions before drawing.
    pub mask_invalid_actions: bool,
}

/// Rows of [`log_probs`] computed in contiguous chunks over the rayon pool.
pub(crate) fn log_prob_rows(graphs: &[&MolecularGraph], model: &ModelParams) -> Result<Vec<Vec<f64>>, NetError> {
    if graphs.is_empty() {
        return Ok(Vec::new());
    }
    let parts = rayon::current_num_threads().clamp(1, graphs.len());
    let size = graphs.len().div_ceil(parts);
    let chunks: Vec<Result<Vec<Vec<f64>>, NetError>> = graphs
        .par_chunks(size)
        .map(|chunk| {
            let t = log_probs(chunk, model)?;
            Ok((0..chunk.len()).map(|k| t.row(k).to_vec()).collect())
        })
        .collect();
    let mut rows = Vec::with_capacity(graphs.len());
    for c in chunks {
        rows.extend(c?);
    }
    Ok(rows)
}

struct Running {
    index: usize,
    graph: MolecularGraph,
    actions: Vec<Action>,
    log_probs: Vec<f64>,
    rng: ChaCha8Rng,
}

/// Samples `n` construction episodes in lockstep from `model`.
pub fn sample_molecules(model: &ModelParams, n: usize, opts: SampleOptions) -> Result<SampleBatch, NetError> {
    let layout = model.layout();
    let vocab = &model.vocab;
    let cap = vocab.max_nodes + STEP_SLACK;
    let mut running: Vec<Running> = (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            Running {
                index: i,
                graph: MolecularGraph::new(),
                actions: Vec::new(),
                log_probs: Vec::new(),
                rng,
            }
        })
        .collect();
    let mut done: Vec<Option<SampledEpisode>> = vec![None; n];

    while !running.is_empty() {
        let graphs: Vec<&MolecularGraph> = running.iter().map(|r| &r.graph).collect();
        let rows = log_prob_rows(&graphs, model)?;
        let mut still = Vec::with_capacity(running.len());
        for (mut r, row) in running.into_iter().zip(rows) {
            let end = if r.actions.len() >= cap {
                Some(EpisodeEnd::StepCap)
            } else {
                let apd = Apd::from_log_probs(layout, &row);
                let at_limit = r.graph.atom_count() >= vocab.max_nodes;
                let draw = if opts.mask_invalid_actions {
                    apd.masked(&r.graph, vocab).map(|mut m| {
                        if at_limit {
                            m.probs[..layout.add_len()].iter_mut().for_each(|p| *p = 0.0);
                        }
                        m
                    })
                } else {
                    Some(apd)
                };
                match draw {
                    Some(d) if d.total_mass() > 0.0 => {
                        let slot = sample_slot(&d.probs, &mut r.rng);
                        let action = layout.action_at(slot).expect("slot within layout");
                        r.actions.push(action);
                        r.log_probs.push(row[slot]);
                        if at_limit && matches!(action, Action::AddNode { .. }) {
                            Some(EpisodeEnd::NodeLimit)
                        } else {
                            match apply_in_place(&mut r.graph, &action, vocab) {
                                Err(e) => Some(EpisodeEnd::InvalidAction(e)),
                                Ok(()) if action == Action::Terminate => Some(EpisodeEnd::Terminated),
                                Ok(()) => None,
                            }
                        }
                    }
                    _ => Some(EpisodeEnd::NoLegalAction),
                }
            };
            match end {
                None => still.push(r),
                Some(end) => {
                    let valid = end == EpisodeEnd::Terminated && r.graph.is_valid();
                    let smiles = if valid { write_smiles(&r.graph).ok() } else { None };
                    done[r.index] = Some(SampledEpisode {
                        actions: ActionSequence::new(r.actions),
                        step_log_probs: r.log_probs,
                        graph: r.graph,
                        end,
                        smiles,
                        valid,
                        unique: false,
                    });
                }
            }
        }
        running = still;
    }
    Ok(SampleBatch::new(done.into_iter().map(|e| e.expect("every episode ends")).collect()))
}

/// The graph seen before each recorded action. Replay stops at the first
/// action that cannot be applied; that action still gets its prefix state.
pub fn episode_states(actions: &ActionSequence, model: &ModelParams) -> Vec<MolecularGraph> {
    let mut states = Vec::with_capacity(actions.len());
    let mut g = MolecularGraph::new();
    for a in &actions.steps {
        states.push(g.clone());
        if apply_in_place(&mut g, a, &model.vocab).is_err() {
            break;
        }
    }
    states
}
