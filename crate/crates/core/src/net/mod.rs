//! Dense numerics: tensors, a gradient tape, the graph network and its
//! optimizer.

mod adam;
mod checkpoint;
mod config;
mod gradcheck;
mod loss;
mod model;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, MAGIC};
pub use config::{fmt_f64, NetConfig};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use loss::{kl_divergence, kl_loss, sequence_kl, sequence_log_prob, weighted_kl, PROB_FLOOR};
pub use model::{
    apd_forward, apd_forward_batch, chosen_log_probs, ggnn_forward, log_probs, log_probs_batch,
    ModelParams,
};
pub use params::{ParamId, ParamStore};
pub use tape::{selu, sigmoid, Gradients, Tape, Var, ZERO_ROW};
pub use tensor::{gemm_acc, matmul, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("graph has no atoms")]
    EmptyGraph,
    #[error("not in the model vocabulary: {0}")]
    OutOfVocabulary(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
