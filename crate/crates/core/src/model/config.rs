use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture family member.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    SingleTask(usize),
    SharedBottom,
    OMoE,
    MMoE,
    Ple,
    MeMMoE,
    MePle,
    Stem,
}

impl Variant {
    pub fn name(&self) -> String {
        match self {
            Variant::SingleTask(t) => format!("single_task{t}"),
            Variant::SharedBottom => "shared_bottom".into(),
            Variant::OMoE => "omoe".into(),
            Variant::MMoE => "mmoe".into(),
            Variant::Ple => "ple".into(),
            Variant::MeMMoE => "me_mmoe".into(),
            Variant::MePle => "me_ple".into(),
            Variant::Stem => "stem".into(),
        }
    }
}

/// Serialized variant tag; `single_task` takes its task from
/// [`ModelConfig::task`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    SingleTask,
    SharedBottom,
    Omoe,
    Mmoe,
    Ple,
    MeMmoe,
    MePle,
    Stem,
}

/// Which concatenated embedding feeds a task's gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateInput {
    TaskOnly,
    SharedOnly,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub variant: VariantKind,
    /// Task index for `single_task`.
    pub task: usize,
    /// Experts per task-specific group.
    pub k1: usize,
    /// Experts in the shared group.
    pub k2: usize,
    pub embedding_dim: usize,
    pub expert_hidden: Vec<usize>,
    pub tower_hidden: Vec<usize>,
    /// Defaults per variant: `sum` for STEM, `task_only` for ME-PLE,
    /// `shared_only` otherwise.
    pub gate_input: Option<GateInput>,
    pub sg_enabled: bool,
    /// Per field, whether task tables hold their own vector for it. Fields
    /// marked `false` read the shared table. Defaults to all `true`.
    pub field_task_specific: Option<Vec<bool>>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: VariantKind::Stem,
            task: 0,
            k1: 1,
            k2: 1,
            embedding_dim: 16,
            expert_hidden: vec![64, 64],
            tower_hidden: vec![32, 16],
            gate_input: None,
            sg_enabled: true,
            field_task_specific: None,
            activation: Activation::Relu,
        }
    }
}

impl ModelConfig {
    pub fn variant(&self) -> Variant {
        match self.variant {
            VariantKind::SingleTask => Variant::SingleTask(self.task),
            VariantKind::SharedBottom => Variant::SharedBottom,
            VariantKind::Omoe => Variant::OMoE,
            VariantKind::Mmoe => Variant::MMoE,
            VariantKind::Ple => Variant::Ple,
            VariantKind::MeMmoe => Variant::MeMMoE,
            VariantKind::MePle => Variant::MePle,
            VariantKind::Stem => Variant::Stem,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        let (kind, task) = match variant {
            Variant::SingleTask(t) => (VariantKind::SingleTask, t),
            Variant::SharedBottom => (VariantKind::SharedBottom, 0),
            Variant::OMoE => (VariantKind::Omoe, 0),
            Variant::MMoE => (VariantKind::Mmoe, 0),
            Variant::Ple => (VariantKind::Ple, 0),
            Variant::MeMMoE => (VariantKind::MeMmoe, 0),
            Variant::MePle => (VariantKind::MePle, 0),
            Variant::Stem => (VariantKind::Stem, 0),
        };
        self.variant = kind;
        self.task = task;
        self
    }

    pub fn resolved_gate_input(&self) -> GateInput {
        self.gate_input.unwrap_or(match self.variant {
            VariantKind::Stem => GateInput::Sum,
            VariantKind::MePle => GateInput::TaskOnly,
            _ => GateInput::SharedOnly,
        })
    }

    pub fn validate(&self, num_fields: usize, num_tasks: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive".into());
        }
        if self.expert_hidden.is_empty() || self.expert_hidden.contains(&0) {
            return bad("expert_hidden needs at least one positive layer size".into());
        }
        if self.tower_hidden.contains(&0) {
            return bad("tower_hidden sizes must be positive".into());
        }
        if num_tasks == 0 {
            return bad("model needs at least one task".into());
        }
        if self.variant == VariantKind::SingleTask && self.task >= num_tasks {
            return bad(format!("single_task task {} but data has {num_tasks} tasks", self.task));
        }
        let needs_k1 = matches!(
            self.variant,
            VariantKind::SingleTask | VariantKind::Ple | VariantKind::MePle | VariantKind::Stem
        );
        let needs_k2 = matches!(
            self.variant,
            VariantKind::Omoe | VariantKind::Mmoe | VariantKind::MeMmoe | VariantKind::Ple | VariantKind::MePle | VariantKind::Stem
        );
        if needs_k1 && self.k1 == 0 {
            return bad("k1 must be positive for this variant".into());
        }
        if needs_k2 && self.k2 == 0 {
            return bad("k2 must be positive for this variant".into());
        }
        if let Some(mask) = &self.field_task_specific {
            if mask.len() != num_fields {
                return bad(format!(
                    "field_task_specific has {} entries, data has {num_fields} fields",
                    mask.len()
                ));
            }
        }
        Ok(())
    }
}
