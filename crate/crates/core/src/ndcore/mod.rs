//! Dense matrix math and reverse-mode differentiation with stop-gradient.

mod gradcheck;
mod matrix;
pub mod ops;
mod params;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport, GradCheckTolerance, ParamCheck, ParamClass, FD_STEP};
pub use matrix::Matrix;
pub use params::{Param, ParamId, ParamKind, ParamStore};
pub use tape::{Edge, Gradients, Reach, Tape, Var, PROB_CLAMP};
