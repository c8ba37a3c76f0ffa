//! Minimal tensor engine: reverse-mode differentiation, layers, Adam and a
//! finite-difference gradient checker.

mod gradcheck;
mod layers;
mod optim;
mod params;
mod tape;
mod tensor;


pub use gradcheck::{grad_check, relative_error, GradCheckReport, FINITE_DIFFERENCE_STEP};
pub use layers::{
    apply_stat_updates, batchnorm_normalize, bigru_forward, conv1d_forward, dense_forward, dropout_apply,
    embedding_forward, mse_loss, BatchNorm, BiGru, Conv1d, Dense, DenseStack, Embedding, GruCell,
    BATCHNORM_MOMENTUM, BATCHNORM_VARIANCE_FLOOR, EMBEDDING_INIT_BOUND,
};
pub use optim::{adam_step, AdamState, LrSchedule, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use params::{glorot_uniform, orthogonal, uniform, Param, ParamId, ParamStore};
pub use tape::{Activation, Mode, StatUpdate, Tape, Var};
pub use tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {0}")]
    ShapeMismatch(String),
    #[error("kernel width {0} is even; same padding needs an odd width")]
    EvenKernel(usize),
    #[error("token id {id} outside vocabulary of {vocab}")]
    IndexOutOfVocab { id: usize, vocab: usize },
    #[error("row index {index} outside {size} rows")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("every position is masked")]
    AllMasked,
    #[error("batch norm needs at least 2 rows in train mode, got {0}")]
    BatchTooSmall(usize),
    #[error("dropout probability {0} outside [0, 1)")]
    InvalidProbability(f64),
    #[error("non-finite gradient for {0}; step refused")]
    NonFiniteGradient(String),
    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),
}
