//! Embedding, expert, gate and tower family with one routing formulation
//! covering single-task, shared-bottom, OMoE, MMoE, PLE, ME-MMoE, ME-PLE and
//! STEM models.

mod checkpoint;
mod config;
mod network;
mod routing;

pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use config::{Activation, GateInput, ModelConfig, Variant, VariantKind};
pub use network::{Dense, EmbeddingSet, EmbeddingSource, ExpertGroup, Forward, Mlp, Model, EMBEDDING_INIT_STD};
pub use routing::{routing_for, EmbeddingLayout, GateKind, GroupOwner, RouteSpec, RoutingMask};
