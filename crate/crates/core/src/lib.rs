//! Multi-task recommender engine with shared and task-specific embedding
//! tables, mixture-of-experts gating baselines, and a negative-transfer
//! evaluation protocol.

pub mod analysis;
pub mod error;
pub mod data;
pub mod eval;
pub mod model;
pub mod ndcore;
pub mod train;

pub use error::{Error, Result};
