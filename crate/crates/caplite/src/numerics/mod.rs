//! Deterministic numeric kernel: dense 2-D tensors, a seeded portable RNG,
//! trainable parameters with ADAM state, an eager reverse-mode tape, and a
//! finite-difference gradient verifier.
//!
//! Everything here is single-threaded and bit-reproducible for a fixed seed.

mod gradcheck;
mod param;
mod rng;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_gradcheck, GradCheckReport};
pub use param::{adam_step, AdamConfig, ParamId, ParamSet, Parameter};
pub use rng::{sample_categorical, Rng};
pub use tape::{NodeId, Tape};
pub use tensor::{log_sum_exp, sigmoid, softmax_rows, Tensor2D};

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Scalar element type for tensors. Training runs in `f32`; the gradient
/// verifier instantiates the same code in `f64` so finite-difference noise
/// stays below tolerance.
pub trait Real:
    num_traits::Float
    + num_traits::NumAssignOps
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}
