use rayon::prelude::*;

use crate::actions::ActionSequence;
use crate::chem::MolecularGraph;
use crate::eval::{compute_stats, GenerationStats, Phase, RunLogRow};
use crate::net::{adam_step, chosen_log_probs, AdamState, Gradients, ModelParams, NetError, Tape, Tensor};
use crate::pretrain::{episode_states, evaluate_epoch, sample_molecules, SampleOptions, TrainingExample};
use crate::scoring::{final_scores, ScoreConfig, ScoringTables};

use super::{select_best, BestMemory, EpisodeRecord, RLConfig, RlError};

/// splitmix64 of `base + index`; distinct indices give unrelated seeds.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const EVAL_STREAM: u64 = 1 << 40;

/// States and slot targets of a recorded action sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub states: Vec<MolecularGraph>,
    pub targets: Vec<usize>,
}

pub fn replay(actions: &ActionSequence, model: &ModelParams) -> Result<Replay, NetError> {
    let layout = model.layout();
    let states = episode_states(actions, model);
    let targets = actions.steps[..states.len()]
        .iter()
        .map(|a| layout.flat_index(a).map_err(|e| NetError::OutOfVocabulary(e.to_string())))
        .collect::<Result<_, _>>()?;
    Ok(Replay { states, targets })
}

fn chunks_of(n: usize) -> Vec<std::ops::Range<usize>> {
    crate::pretrain::chunk_ranges(n, rayon::current_num_threads())
}

/// Summed log-probability of each replay under `model`.
fn sequence_log_probs(model: &ModelParams, replays: &[&Replay]) -> Result<Vec<f64>, NetError> {
    let parts: Vec<Result<Vec<f64>, NetError>> = chunks_of(replays.len())
        .into_par_iter()
        .map(|r| {
            let chunk = &replays[r];
            let states: Vec<&MolecularGraph> = chunk.iter().flat_map(|e| e.states.iter()).collect();
            let targets: Vec<usize> = chunk.iter().flat_map(|e| e.targets.iter().copied()).collect();
            let mut tape = Tape::new(&model.store);
            let lp = chosen_log_probs(&mut tape, model, &states, &targets)?;
            let v = &tape.value(lp).data;
            let mut at = 0;
            Ok(chunk
                .iter()
                .map(|e| {
                    let s = v[at..at + e.states.len()].iter().sum();
                    at += e.states.len();
                    s
                })
                .collect())
        })
        .collect();
    let mut out = Vec::with_capacity(replays.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// `sum_i w_i (log P(replay_i) - anchor_i)^2`, its gradient, and each
/// replay's log-probability.
fn anchored_loss(model: &ModelParams, items: &[(&Replay, f64, f64)]) -> Result<(f64, Gradients, Vec<f64>), NetError> {
    let parts: Vec<Result<(f64, Gradients, Vec<f64>), NetError>> = chunks_of(items.len())
        .into_par_iter()
        .map(|r| {
            let chunk = &items[r];
            let mut states = Vec::new();
            let mut targets = Vec::new();
            let mut seg = Vec::new();
            for (k, (rep, _, _)) in chunk.iter().enumerate() {
                states.extend(rep.states.iter());
                targets.extend_from_slice(&rep.targets);
                seg.extend(std::iter::repeat(k).take(rep.states.len()));
            }
            let n = chunk.len();
            let mut tape = Tape::new(&model.store);
            let lp = chosen_log_probs(&mut tape, model, &states, &targets)?;
            let per_episode = tape.segment_sum(lp, seg, n);
            let anchors = tape.constant(Tensor::from_rows(n, 1, chunk.iter().map(|c| c.1).collect()));
            let weights = tape.constant(Tensor::from_rows(n, 1, chunk.iter().map(|c| c.2).collect()));
            let diff = tape.sub(per_episode, anchors);
            let sq = tape.square(diff);
            let weighted = tape.mul(sq, weights);
            let loss = tape.sum(weighted);
            let logps = tape.value(per_episode).data.clone();
            Ok((tape.value(loss).data[0], tape.backward(loss), logps))
        })
        .collect();
    let mut total = 0.0;
    let mut grads = Gradients::empty(model.store.len());
    let mut logps = Vec::with_capacity(items.len());
    for p in parts {
        let (l, g, lp) = p?;
        total += l;
        grads.accumulate(&g);
        logps.extend(lp);
    }
    Ok((total, grads, logps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalPlan {
    /// Evaluate every this many steps and after the last one.
    pub interval: u64,
    pub samples: usize,
    pub bins: usize,
}

/// Everything a fine-tuning run reads but never changes.
#[derive(Debug, Clone, Copy)]
pub struct FinetuneSetup<'a> {
    pub reference: &'a ModelParams,
    pub tables: &'a ScoringTables,
    pub score: &'a ScoreConfig,
    pub rl: &'a RLConfig,
    pub train: &'a [TrainingExample],
    pub valid: &'a [TrainingExample],
    pub eval: EvalPlan,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub model: ModelParams,
    pub adam: AdamState,
    /// Epoch number of the last completed step.
    pub epoch: u64,
    pub memory: BestMemory,
    pub prev_mean_score: Option<f64>,
}

impl AgentState {
    /// An agent starting from `model`; its first step is epoch `first_epoch + 1`.
    pub fn new(model: ModelParams, first_epoch: u64, memory_capacity: usize) -> Self {
        let adam = AdamState::new(&model.store);
        Self {
            model,
            adam,
            epoch: first_epoch,
            memory: BestMemory::new(memory_capacity),
            prev_mean_score: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub epoch: u64,
    pub loss: f64,
    pub mean_score: f64,
    pub stats: GenerationStats,
    pub memory_best: Option<f64>,
    /// Mean score beat the previous batch.
    pub improved: bool,
    pub records: Vec<EpisodeRecord>,
}

impl StepReport {
    pub fn to_row(&self) -> RunLogRow {
        RunLogRow {
            epoch: self.epoch,
            phase: Phase::Finetune,
            mean_loss: Some(self.loss),
            stats: Some(self.stats),
            uc_jsd: None,
            mean_score: Some(self.mean_score),
            memory_best: self.memory_best,
        }
    }
}

/// Samples a batch from the agent, scores it, refreshes the memory and
/// takes one optimizer step on the combined loss.
pub fn finetune_step(state: &mut AgentState, setup: &FinetuneSetup) -> Result<StepReport, RlError> {
    let rl = setup.rl;
    let epoch = state.epoch + 1;
    let batch = sample_molecules(
        &state.model,
        rl.batch_size,
        SampleOptions {
            seed: derive_seed(setup.seed, epoch),
            mask_invalid_actions: rl.mask_invalid_actions,
        },
    )?;
    if batch.is_empty() {
        return Err(RlError::EmptyBatch);
    }
    let stats = compute_stats(&batch)?;
    let scores = final_scores(&batch, setup.score, setup.tables)?;
    let replays: Vec<Replay> = batch
        .episodes
        .iter()
        .map(|e| replay(&e.actions, &state.model))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&Replay> = replays.iter().collect();
    let logp_ref = sequence_log_probs(setup.reference, &refs)?;
    let records: Vec<EpisodeRecord> = batch
        .episodes
        .iter()
        .zip(&scores)
        .zip(&logp_ref)
        .map(|((e, s), &lr)| EpisodeRecord {
            actions: e.actions.clone(),
            smiles: e.smiles.clone(),
            logp_agent: -e.nll(),
            logp_ref: lr,
            score: s.final_score,
        })
        .collect();
    for r in &records {
        state.memory.offer(r.clone());
    }

    let n = records.len();
    let w_cur = (1.0 - rl.alpha) / n as f64;
    let w_mem = rl.alpha / n as f64;
    let take = state.memory.len().min(n);
    let mem_replays: Vec<Replay> = state.memory.records()[..take]
        .iter()
        .map(|r| replay(&r.actions, &state.model))
        .collect::<Result<_, _>>()?;
    let mut items: Vec<(&Replay, f64, f64)> = replays
        .iter()
        .zip(&records)
        .map(|(rep, r)| (rep, r.anchor(rl.sigma), w_cur))
        .collect();
    items.extend(
        mem_replays
            .iter()
            .zip(state.memory.records())
            .map(|(rep, r)| (rep, r.anchor(rl.sigma), w_mem)),
    );
    let (loss, grads, logps) = anchored_loss(&state.model, &items)?;
    state.memory.refresh_agent_logps(&logps[n..]);
    let cfg = state.model.config.clone();
    adam_step(&mut state.model.store, &grads, &mut state.adam, &cfg)?;

    let mean_score = scores.iter().map(|s| s.final_score).sum::<f64>() / n as f64;
    let improved = state.prev_mean_score.is_some_and(|p| mean_score > p);
    state.prev_mean_score = Some(mean_score);
    state.epoch = epoch;
    Ok(StepReport {
        epoch,
        loss,
        mean_score,
        stats,
        memory_best: state.memory.best(),
        improved,
        records,
    })
}

/// Samples `plan.samples` molecules from `model` and reports statistics,
/// UC-JSD and mean final score as an evaluation row.
pub fn evaluate_model(model: &ModelParams, setup: &FinetuneSetup, epoch: u64, phase: Phase) -> Result<RunLogRow, RlError> {
    let report = evaluate_epoch(
        model,
        setup.train,
        setup.valid,
        setup.eval.samples,
        SampleOptions {
            seed: derive_seed(setup.seed, EVAL_STREAM + epoch),
            mask_invalid_actions: setup.rl.mask_invalid_actions,
        },
        setup.eval.bins,
    )?;
    let scores = final_scores(&report.batch, setup.score, setup.tables)?;
    let mean = scores.iter().map(|s| s.final_score).sum::<f64>() / scores.len() as f64;
    Ok(RunLogRow {
        epoch,
        phase,
        mean_loss: None,
        stats: Some(report.stats),
        uc_jsd: Some(report.uc_jsd),
        mean_score: Some(mean),
        memory_best: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutcome {
    pub rows: Vec<RunLogRow>,
    /// Selected epoch and its parameters.
    pub best: Option<(u64, ModelParams)>,
    pub state: AgentState,
}

/// Runs `steps` fine-tuning steps with periodic evaluation. `on_eval` sees
/// every evaluation row with the parameters it was computed from.
pub fn finetune<F>(setup: &FinetuneSetup, mut state: AgentState, steps: u64, mut on_eval: F) -> Result<FinetuneOutcome, RlError>
where
    F: FnMut(&RunLogRow, &ModelParams) -> Result<(), RlError>,
{
    setup.rl.validate()?;
    let mut rows = Vec::new();
    let mut best: Option<(u64, ModelParams)> = None;
    let interval = setup.eval.interval.max(1);
    for t in 1..=steps {
        let report = finetune_step(&mut state, setup)?;
        rows.push(report.to_row());
        if t % interval == 0 || t == steps {
            let mut row = evaluate_model(&state.model, setup, state.epoch, Phase::FinetuneEval)?;
            row.memory_best = state.memory.best();
            on_eval(&row, &state.model)?;
            rows.push(row);
            if select_best(&rows, Phase::FinetuneEval)?.epoch == state.epoch {
                best = Some((state.epoch, state.model.clone()));
            }
        }
    }
    Ok(FinetuneOutcome { rows, best, state })
}
