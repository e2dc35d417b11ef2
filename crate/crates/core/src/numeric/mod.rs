//! Dense `f64` primitives with reverse-mode differentiation over a tape that
//! is recorded per example, plus SGD updates and finite-difference checking.

mod gradcheck;
mod matrix;
mod param;
mod tape;

use alloc::string::String;

pub use gradcheck::{grad_check, GradCheckReport, RELATIVE_FLOOR};
pub use matrix::{Matrix, Shape};
pub use param::{Gradients, Param, ParamId, ParamSet};
pub use tape::{sigmoid, softmax, Handle, OpKind, Tape};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum NumericError {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("{op} expects {expected} input(s), got {got}")]
    Arity {
        op: &'static str,
        expected: &'static str,
        got: usize,
    },
    #[error("non-finite result in {op}")]
    NonFinite { op: &'static str },
    #[error("expected a scalar, got shape {shape}")]
    NotScalar { shape: Shape },
    #[error("handle {0} is not on this tape")]
    UnknownHandle(usize),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("data length {len} does not match shape {shape}")]
    DataLength { shape: Shape, len: usize },
    #[error("non-finite entry at position {index}")]
    NonFiniteData { index: usize },
    #[error("duplicate parameter name {0:?}")]
    DuplicateParam(String),
    #[error("non-finite gradient in parameter {param:?} at coordinate {index}")]
    NonFiniteGradient { param: String, index: usize },
    #[error("invalid learning rate {0}")]
    InvalidLearningRate(f64),
    #[error("objective is not finite when probing {param:?}[{index}]")]
    NonFiniteProbe { param: String, index: usize },
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
}
