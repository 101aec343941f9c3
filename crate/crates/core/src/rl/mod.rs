//! Fine-tuning a pretrained generator against the score with a squared
//! likelihood-anchoring loss and a memory of the best episodes.

mod finetune;

pub use finetune::{
    derive_seed, evaluate_model, finetune, finetune_step, replay, AgentState, EvalPlan, FinetuneOutcome,
    FinetuneSetup, Replay, StepReport,
};

use thiserror::Error;

use crate::actions::ActionSequence;
use crate::eval::{EvalError, Phase, RunLogRow};
use crate::net::NetError;
use crate::pretrain::PretrainError;
use crate::scoring::ScoringError;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("fine-tuning batch is empty")]
    EmptyBatch,
    #[error("run log has no evaluated epoch")]
    EmptyLog,
    #[error("invalid RL config: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Pretrain(#[from] PretrainError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RLConfig {
    /// Weight of the memory term.
    pub alpha: f64,
    /// Score scale in the anchor `logp_ref + sigma * score`.
    pub sigma: f64,
    pub batch_size: usize,
    pub epochs: u64,
    pub memory_capacity: usize,
    pub mask_invalid_actions: bool,
}

impl Default for RLConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            sigma: 20.0,
            batch_size: 20,
            epochs: 500,
            memory_capacity: 20,
            mask_invalid_actions: false,
        }
    }
}

impl RLConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(RlError::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.sigma > 0.0) {
            return Err(RlError::Config(format!("sigma {} must be positive", self.sigma)));
        }
        if self.batch_size == 0 || self.memory_capacity == 0 {
            return Err(RlError::Config("batch_size and memory_capacity must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub actions: ActionSequence,
    pub smiles: Option<String>,
    /// `log P` of the actions under the current agent.
    pub logp_agent: f64,
    /// `log P` under the frozen reference.
    pub logp_ref: f64,
    pub score: f64,
}

impl EpisodeRecord {
    /// `logp_ref + sigma * score`, the value `logp_agent` is pulled toward.
    pub fn anchor(&self, sigma: f64) -> f64 {
        self.logp_ref + sigma * self.score
    }
}

/// The highest-scoring distinct molecules seen so far, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct BestMemory {
    pub capacity: usize,
    records: Vec<EpisodeRecord>,
}

impl BestMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[EpisodeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn best(&self) -> Option<f64> {
        self.records.first().map(|r| r.score)
    }

    pub fn min_score(&self) -> Option<f64> {
        self.records.last().map(|r| r.score)
    }

    /// Stores freshly computed agent log-probabilities of the leading records.
    pub(crate) fn refresh_agent_logps(&mut self, logps: &[f64]) {
        for (r, &lp) in self.records.iter_mut().zip(logps) {
            r.logp_agent = lp;
        }
    }

    /// Admits `rec` if it has a positive score, a molecule not already held,
    /// and either free room or a score above the current minimum.
    pub fn offer(&mut self, rec: EpisodeRecord) -> bool {
        let Some(smiles) = &rec.smiles else { return false };
        if !(rec.score > 0.0) || self.records.iter().any(|r| r.smiles.as_ref() == Some(smiles)) {
            return false;
        }
        if self.records.len() >= self.capacity {
            match self.min_score() {
                Some(m) if rec.score > m => {
                    self.records.pop();
                }
                _ => return false,
            }
        }
        let at = self.records.partition_point(|r| r.score >= rec.score);
        self.records.insert(at, rec);
        true
    }
}

pub fn mol_loss(rec: &EpisodeRecord, sigma: f64) -> f64 {
    let d = rec.logp_agent - rec.anchor(sigma);
    d * d
}

/// `(1 - alpha) / N * sum(current) + alpha / N * sum(memory[..min(K, N)])`
/// with `N` the current batch size. Memory records must already carry
/// `logp_agent` under the current agent.
pub fn agent_loss(current: &[EpisodeRecord], memory: &BestMemory, alpha: f64, sigma: f64) -> Result<f64, RlError> {
    if current.is_empty() {
        return Err(RlError::EmptyBatch);
    }
    let n = current.len() as f64;
    let cur: f64 = current.iter().map(|r| mol_loss(r, sigma)).sum();
    let mem: f64 = memory.records.iter().take(current.len()).map(|r| mol_loss(r, sigma)).sum();
    Ok((1.0 - alpha) / n * cur + alpha / n * mem)
}

/// Evaluated rows of `phase`, ordered by lowest UC-JSD, then higher mean
/// score, then lower epoch; returns the first.
pub fn select_best(rows: &[RunLogRow], phase: Phase) -> Result<&RunLogRow, RlError> {
    let key = |r: &RunLogRow| (r.uc_jsd.unwrap_or(f64::INFINITY), -r.mean_score.unwrap_or(f64::NEG_INFINITY), r.epoch);
    rows.iter()
        .filter(|r| r.phase == phase && r.uc_jsd.is_some())
        .min_by(|a, b| key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal))
        .ok_or(RlError::EmptyLog)
}

/// Best fine-tuning epoch in a run log.
pub fn select_best_agent(rows: &[RunLogRow]) -> Result<u64, RlError> {
    select_best(rows, Phase::FinetuneEval).map(|r| r.epoch)
}
