//! Reverse-mode automatic differentiation over dense `f64` tensors.

mod check;
mod ops;
mod optim;
mod tape;
mod tensor;

pub use check::{finite_diff_check, relative_error, GradCheckReport, ParamCheck, REL_ERR_FLOOR};
pub use ops::{softmax_in_place, softmax_rows, LOG_CLAMP};
pub use optim::{AdamConfig, AdamW, StepReport};
pub use tape::{FrozenLog, Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tensor::{dot, norm};
