//! Per-variant wiring: which expert groups exist, which towers see them in
//! the forward pass, and which of those connections carry gradient back.
//!
//! | variant       | tables             | groups            | gate            | forward    | backward   |
//! |---------------|--------------------|-------------------|-----------------|------------|------------|
//! | SingleTask(t) | shared             | own               | uniform         | own        | own        |
//! | SharedBottom  | shared             | 1 shared expert   | uniform (= 1)   | shared     | shared     |
//! | OMoE          | shared             | shared            | one for all     | shared     | shared     |
//! | MMoE          | shared             | shared            | per task        | all        | all        |
//! | PLE           | shared             | tasks + shared    | per task        | own+shared | own+shared |
//! | ME-MMoE       | one per expert     | shared            | per task        | all        | all        |
//! | ME-PLE        | shared + per task  | tasks + shared    | per task        | own+shared | own+shared |
//! | STEM          | shared + per task  | tasks + shared    | per task        | all        | own+shared |

use super::Variant;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupOwner {
    Task(usize),
    Shared,
}

impl GroupOwner {
    pub fn label(&self) -> String {
        match self {
            GroupOwner::Task(t) => format!("task{t}"),
            GroupOwner::Shared => "shared".into(),
        }
    }
}

/// `forward[t][g]` / `backward[t][g]` for tower `t` and group `g`, where
/// groups `0..T` are the task groups and group `T` is the shared group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingMask {
    forward: Vec<Vec<bool>>,
    backward: Vec<Vec<bool>>,
}

impl RoutingMask {
    pub fn new(forward: Vec<Vec<bool>>, backward: Vec<Vec<bool>>) -> Result<Self> {
        if forward.len() != backward.len() || forward.iter().zip(&backward).any(|(f, b)| f.len() != b.len()) {
            return Err(Error::Config("forward and backward masks differ in shape".into()));
        }
        for (t, (f, b)) in forward.iter().zip(&backward).enumerate() {
            for (g, (&fw, &bw)) in f.iter().zip(b).enumerate() {
                if bw && !fw {
                    return Err(Error::Config(format!(
                        "backward without forward for tower {t}, group {g}"
                    )));
                }
            }
        }
        Ok(RoutingMask { forward, backward })
    }

    pub fn num_tasks(&self) -> usize {
        self.forward.len()
    }

    fn group_index(&self, g: GroupOwner) -> usize {
        match g {
            GroupOwner::Task(t) => t,
            GroupOwner::Shared => self.num_tasks(),
        }
    }

    pub fn forward(&self, tower: usize, g: GroupOwner) -> bool {
        self.forward[tower][self.group_index(g)]
    }

    pub fn backward(&self, tower: usize, g: GroupOwner) -> bool {
        self.backward[tower][self.group_index(g)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingLayout {
    /// One shared table.
    Shared,
    /// Shared table plus one table per task.
    SharedAndTask,
    /// One table per shared expert, plus a shared table that feeds the gates.
    PerExpert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    /// Constant equal weights over the visible experts.
    Uniform,
    /// A single softmax gate reused by every tower.
    SharedAcrossTasks,
    PerTask,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteSpec {
    pub mask: RoutingMask,
    pub layout: EmbeddingLayout,
    pub gate: GateKind,
    /// Expert groups that exist, with their expert counts.
    pub groups: Vec<(GroupOwner, usize)>,
    /// Tasks that own a tower.
    pub towers: Vec<usize>,
}

impl RouteSpec {
    pub fn group_size(&self, g: GroupOwner) -> usize {
        self.groups.iter().find(|(o, _)| *o == g).map_or(0, |(_, n)| *n)
    }

    /// Groups visible to tower `t`, in gate order: own, shared, then other
    /// tasks ascending.
    pub fn visible_groups(&self, t: usize) -> Vec<GroupOwner> {
        let mut order = vec![GroupOwner::Task(t), GroupOwner::Shared];
        order.extend((0..self.mask.num_tasks()).filter(|&o| o != t).map(GroupOwner::Task));
        order
            .into_iter()
            .filter(|&g| self.group_size(g) > 0 && self.mask.forward(t, g))
            .collect()
    }

    /// Number of experts tower `t` blends.
    pub fn visible_experts(&self, t: usize) -> usize {
        self.visible_groups(t).iter().map(|&g| self.group_size(g)).sum()
    }
}

/// Wiring for `variant` with `num_tasks` tasks, `k1` experts per task group
/// and `k2` shared experts.
pub fn routing_for(variant: Variant, num_tasks: usize, k1: usize, k2: usize) -> RouteSpec {
    let t_count = num_tasks;
    let g_count = t_count + 1;
    let shared = t_count;
    let grid = |f: &dyn Fn(usize, usize) -> bool| -> Vec<Vec<bool>> {
        (0..t_count).map(|t| (0..g_count).map(|g| f(t, g)).collect()).collect()
    };
    let own_or_shared = |t: usize, g: usize| g == t || g == shared;
    let only_shared = |_t: usize, g: usize| g == shared;
    let all = |_t: usize, _g: usize| true;
    let task_groups = |k: usize| (0..t_count).map(move |t| (GroupOwner::Task(t), k));

    let (forward, backward, layout, gate, groups, towers): (_, _, _, _, Vec<_>, Vec<_>) = match variant {
        Variant::SingleTask(own) => {
            let f = grid(&|t, g| t == own && g == own);
            (
                f.clone(),
                f,
                EmbeddingLayout::Shared,
                GateKind::Uniform,
                vec![(GroupOwner::Task(own), k1)],
                vec![own],
            )
        }
        Variant::SharedBottom => (
            grid(&only_shared),
            grid(&only_shared),
            EmbeddingLayout::Shared,
            GateKind::Uniform,
            vec![(GroupOwner::Shared, 1)],
            (0..t_count).collect(),
        ),
        Variant::OMoE => (
            grid(&only_shared),
            grid(&only_shared),
            EmbeddingLayout::Shared,
            GateKind::SharedAcrossTasks,
            vec![(GroupOwner::Shared, k2)],
            (0..t_count).collect(),
        ),
        Variant::MMoE | Variant::MeMMoE => (
            grid(&all),
            grid(&all),
            if variant == Variant::MMoE {
                EmbeddingLayout::Shared
            } else {
                EmbeddingLayout::PerExpert
            },
            GateKind::PerTask,
            vec![(GroupOwner::Shared, k2)],
            (0..t_count).collect(),
        ),
        Variant::Ple | Variant::MePle => (
            grid(&own_or_shared),
            grid(&own_or_shared),
            if variant == Variant::Ple {
                EmbeddingLayout::Shared
            } else {
                EmbeddingLayout::SharedAndTask
            },
            GateKind::PerTask,
            task_groups(k1).chain([(GroupOwner::Shared, k2)]).collect(),
            (0..t_count).collect(),
        ),
        Variant::Stem => (
            grid(&all),
            grid(&own_or_shared),
            EmbeddingLayout::SharedAndTask,
            GateKind::PerTask,
            task_groups(k1).chain([(GroupOwner::Shared, k2)]).collect(),
            (0..t_count).collect(),
        ),
    };
    RouteSpec {
        mask: RoutingMask::new(forward, backward).expect("routing table rows satisfy backward ⇒ forward"),
        layout,
        gate,
        groups,
        towers,
    }
}
