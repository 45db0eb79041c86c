//! A small attention-based encoder–decoder trained with hand-written
//! backpropagation, plus the synthetic gendered language used to exercise it.

mod checkpoint;
mod model;
pub mod tensor;
mod toy;
mod train;
mod vocab;

use thiserror::Error;

pub use checkpoint::{read_checkpoint, to_bytes, write_checkpoint, MAGIC, VERSION};
pub use model::{ForwardTrace, Hyperparams, Params, Seq2SeqModel, INIT_SCALE, PARAM_NAMES};
pub use toy::{agreement_accuracy, gen_toy_language, Adjective, Template, ToyLanguageSpec};
pub use train::{gradient_check, gradient_check_with, train, EpochStats, TrainOutcome};
pub use vocab::{Vocab, BOS, EOS, PAD, RESERVED, UNK};

#[derive(Debug, Error)]
pub enum NmtError {
    #[error("training diverged in epoch {epoch}: loss or parameters became non-finite")]
    DivergedTraining { epoch: usize, history: Vec<EpochStats> },
    #[error("source has {src} lines but target has {tgt}")]
    LengthMismatch { src: usize, tgt: usize },
    #[error("no usable training pairs")]
    EmptyCorpus,
    #[error("invalid hyperparameters: {0}")]
    BadHyperparams(String),
    #[error("invalid checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Translates each line greedily, in parallel; output order matches input.
pub fn translate_lines<S: AsRef<str> + Sync>(model: &Seq2SeqModel, lines: &[S]) -> Vec<String> {
    use rayon::prelude::*;
    lines.par_iter().map(|l| model.translate(l.as_ref()).join(" ")).collect()
}
