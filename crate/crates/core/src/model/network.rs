use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::routing::{routing_for, EmbeddingLayout, GateKind, GroupOwner, RouteSpec};
use super::{GateInput, ModelConfig, Variant};
use crate::data::{Dataset, FieldSchema, Sample};
use crate::error::{Error, Result};
use crate::ndcore::{Matrix, ParamId, ParamKind, ParamStore, Tape, Var};

pub const EMBEDDING_INIT_STD: f64 = 0.01;

/// Where a concatenated embedding `h_0` is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EmbeddingSource {
    Shared,
    Task(usize),
    /// Private table of one shared expert (ME-MMoE).
    Expert(usize),
}

/// Shared table, optional task tables and per-expert tables.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    pub shared: ParamId,
    pub task: Vec<ParamId>,
    pub expert: Vec<ParamId>,
    pub dim: usize,
    pub field_task_specific: Vec<bool>,
}

impl EmbeddingSet {
    /// Table used for `field` when building `h_0` from `source`.
    pub fn table_for(&self, source: EmbeddingSource, field: usize) -> ParamId {
        match source {
            EmbeddingSource::Shared => self.shared,
            EmbeddingSource::Task(t) => match self.task.get(t) {
                Some(&id) if self.field_task_specific[field] => id,
                _ => self.shared,
            },
            EmbeddingSource::Expert(i) => self.expert.get(i).copied().unwrap_or(self.shared),
        }
    }

    /// Every table with a name, in creation order.
    pub fn tables(&self) -> Vec<ParamId> {
        let mut v = vec![self.shared];
        v.extend(&self.task);
        v.extend(&self.expert);
        v
    }
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ExpertGroup {
    pub owner: GroupOwner,
    pub experts: Vec<Mlp>,
    /// Input binding of each expert.
    pub inputs: Vec<EmbeddingSource>,
}

/// Structure of a model; values live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    variant: Variant,
    schema: FieldSchema,
    num_tasks: usize,
    route: RouteSpec,
    embeddings: EmbeddingSet,
    groups: Vec<ExpertGroup>,
    /// Gate weight per task (`None` for uniform gates).
    gates: Vec<Option<ParamId>>,
    towers: Vec<Option<Mlp>>,
    gate_input: GateInput,
}

/// Everything a forward pass put on the tape.
#[derive(Debug)]
pub struct Forward {
    pub tape: Tape,
    pub batch: usize,
    pub embeddings: BTreeMap<EmbeddingSource, Var>,
    /// Expert outputs per group, aligned with [`Model::groups`].
    pub expert_outputs: Vec<Vec<Var>>,
    pub gate_weights: Vec<Option<Var>>,
    pub combined: Vec<Option<Var>>,
    pub predictions: Vec<Option<Var>>,
}

impl Forward {
    pub fn prediction_values(&self, task: usize) -> Option<Vec<f64>> {
        self.predictions[task].map(|v| self.tape.value(v).as_slice().to_vec())
    }
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn glorot(&mut self, rows: usize, cols: usize) -> Matrix {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| self.rng.random_range(-limit..limit)).collect();
        Matrix::from_vec(rows, cols, data).expect("sized buffer")
    }

    fn normal(&mut self, rows: usize, cols: usize, std: f64) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| std * self.rng.sample::<f64, _>(StandardNormal))
            .collect();
        Matrix::from_vec(rows, cols, data).expect("sized buffer")
    }
}

impl Model {
    /// Builds the model and a freshly initialised store.
    ///
    /// Draw order from the seeded generator: embedding tables (shared, task
    /// tables ascending, expert tables ascending), then expert weights
    /// (task groups ascending, then the shared group; layers in order), then
    /// gate weights by task, then tower weights by task. Biases start at 0
    /// and take no draws.
    pub fn new(config: &ModelConfig, schema: &FieldSchema, num_tasks: usize, seed: u64) -> Result<(Model, ParamStore)> {
        config.validate(schema.num_fields(), num_tasks)?;
        let variant = config.variant();
        let route = routing_for(variant, num_tasks, config.k1, config.k2);
        let mut store = ParamStore::new();
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let n = schema.total_features();
        let k = config.embedding_dim;
        let m = schema.num_fields();
        let d = m * k;

        let table = |store: &mut ParamStore, init: &mut Init, name: String| {
            store.insert(name, init.normal(n, k, EMBEDDING_INIT_STD), ParamKind::Embedding)
        };
        let shared = table(&mut store, &mut init, "emb.shared".into())?;
        let task = if route.layout == EmbeddingLayout::SharedAndTask {
            (0..num_tasks)
                .map(|t| table(&mut store, &mut init, format!("emb.task{t}")))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let expert = if route.layout == EmbeddingLayout::PerExpert {
            (0..route.group_size(GroupOwner::Shared))
                .map(|i| table(&mut store, &mut init, format!("emb.expert{i}")))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let embeddings = EmbeddingSet {
            shared,
            task,
            expert,
            dim: k,
            field_task_specific: config.field_task_specific.clone().unwrap_or_else(|| vec![true; m]),
        };

        let dense = |store: &mut ParamStore, init: &mut Init, prefix: &str, sizes: &[usize]| -> Result<Mlp> {
            let layers = sizes
                .windows(2)
                .enumerate()
                .map(|(l, w)| {
                    let weight = store.insert(format!("{prefix}.layer{l}.W"), init.glorot(w[1], w[0]), ParamKind::Dense)?;
                    let bias = store.insert(format!("{prefix}.layer{l}.b"), Matrix::zeros(1, w[1]), ParamKind::Dense)?;
                    Ok(Dense { weight, bias })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Mlp { layers })
        };

        let mut expert_sizes = vec![d];
        expert_sizes.extend(&config.expert_hidden);
        let mut ordered_groups = route.groups.clone();
        ordered_groups.sort_by_key(|(o, _)| *o);
        let mut groups = Vec::new();
        for (owner, count) in ordered_groups {
            let mut experts = Vec::new();
            let mut inputs = Vec::new();
            for i in 0..count {
                experts.push(dense(&mut store, &mut init, &format!("expert.{}.{i}", owner.label()), &expert_sizes)?);
                inputs.push(match (owner, route.layout) {
                    (GroupOwner::Task(t), _) => EmbeddingSource::Task(t),
                    (GroupOwner::Shared, EmbeddingLayout::PerExpert) => EmbeddingSource::Expert(i),
                    (GroupOwner::Shared, _) => EmbeddingSource::Shared,
                });
            }
            groups.push(ExpertGroup { owner, experts, inputs });
        }

        let mut gates = vec![None; num_tasks];
        match route.gate {
            GateKind::Uniform => {}
            GateKind::SharedAcrossTasks => {
                let n_vis = route.visible_experts(0);
                let w = store.insert("gate.shared.W", init.glorot(n_vis, d), ParamKind::Dense)?;
                gates.iter_mut().for_each(|g| *g = Some(w));
            }
            GateKind::PerTask => {
                for (t, g) in gates.iter_mut().enumerate() {
                    let n_vis = route.visible_experts(t);
                    *g = Some(store.insert(format!("gate.task{t}.W"), init.glorot(n_vis, d), ParamKind::Dense)?);
                }
            }
        }

        let d_e = *config.expert_hidden.last().expect("validated non-empty");
        let mut tower_sizes = vec![d_e];
        tower_sizes.extend(&config.tower_hidden);
        tower_sizes.push(1);
        let mut towers = vec![None; num_tasks];
        for &t in &route.towers {
            towers[t] = Some(dense(&mut store, &mut init, &format!("tower.task{t}"), &tower_sizes)?);
        }

        let model = Model {
            config: config.clone(),
            variant,
            schema: schema.clone(),
            num_tasks,
            route,
            embeddings,
            groups,
            gates,
            towers,
            gate_input: config.resolved_gate_input(),
        };
        Ok((model, store))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn schema(&self) -> &FieldSchema {
        &self.schema
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    pub fn route(&self) -> &RouteSpec {
        &self.route
    }

    pub fn embedding_set(&self) -> &EmbeddingSet {
        &self.embeddings
    }

    pub fn groups(&self) -> &[ExpertGroup] {
        &self.groups
    }

    pub fn group(&self, owner: GroupOwner) -> Option<&ExpertGroup> {
        self.groups.iter().find(|g| g.owner == owner)
    }

    pub fn gate_param(&self, task: usize) -> Option<ParamId> {
        self.gates[task]
    }

    pub fn tower(&self, task: usize) -> Option<&Mlp> {
        self.towers[task].as_ref()
    }

    /// Tasks this model predicts.
    pub fn predicted_tasks(&self) -> &[usize] {
        &self.route.towers
    }

    pub fn expert_dim(&self) -> usize {
        *self.config.expert_hidden.last().expect("validated")
    }

    /// Length of a concatenated embedding, `M·K`.
    pub fn input_dim(&self) -> usize {
        self.schema.num_fields() * self.embeddings.dim
    }

    /// Looks up and concatenates each field's row for every source the
    /// model reads.
    pub fn embed(&self, tape: &mut Tape, store: &ParamStore, samples: &[&Sample]) -> Result<BTreeMap<EmbeddingSource, Var>> {
        let mut sources: Vec<EmbeddingSource> = self.groups.iter().flat_map(|g| g.inputs.iter().copied()).collect();
        for &t in &self.route.towers {
            if self.gates[t].is_some() {
                match self.gate_input {
                    GateInput::TaskOnly => sources.push(EmbeddingSource::Task(t)),
                    GateInput::SharedOnly => sources.push(EmbeddingSource::Shared),
                    GateInput::Sum => sources.extend([EmbeddingSource::Task(t), EmbeddingSource::Shared]),
                }
            }
        }
        sources.sort();
        sources.dedup();

        let m = self.schema.num_fields();
        let rows: Vec<Vec<usize>> = (0..m)
            .map(|f| {
                samples
                    .iter()
                    .map(|s| self.schema.global_row(f, s.features[f]))
                    .collect()
            })
            .collect();
        for s in samples {
            if s.features.len() != m {
                return Err(Error::shape("embed", format!("{m} fields"), format!("{} features", s.features.len())));
            }
        }
        let mut out = BTreeMap::new();
        for src in sources {
            let fields = (0..m)
                .map(|f| (self.embeddings.table_for(src, f), rows[f].clone()))
                .collect();
            out.insert(src, tape.lookup(store, fields)?);
        }
        Ok(out)
    }

    /// Runs every expert of one group; ReLU after each layer.
    pub fn expert_forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        group: &ExpertGroup,
        embeddings: &BTreeMap<EmbeddingSource, Var>,
    ) -> Result<Vec<Var>> {
        group
            .experts
            .iter()
            .zip(&group.inputs)
            .map(|(mlp, src)| {
                let input = *embeddings
                    .get(src)
                    .ok_or_else(|| Error::Config(format!("embedding {src:?} was not computed")))?;
                let expected = self.input_dim();
                let got = tape.value(input).cols();
                if got != expected {
                    return Err(Error::shape("expert_forward", format!("input dim {expected}"), format!("{got}")));
                }
                mlp_forward(tape, store, mlp, input, true)
            })
            .collect()
    }

    /// Softmax weights of tower `task` over its visible experts, or constant
    /// equal weights for uniform gates.
    pub fn gate_forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        task: usize,
        embeddings: &BTreeMap<EmbeddingSource, Var>,
        batch: usize,
    ) -> Result<Var> {
        let n_vis = self.route.visible_experts(task);
        let Some(w) = self.gates[task] else {
            return Ok(tape.input(Matrix::filled(batch, n_vis, 1.0 / n_vis as f64)));
        };
        let get = |src: EmbeddingSource| {
            embeddings
                .get(&src)
                .copied()
                .ok_or_else(|| Error::Config(format!("embedding {src:?} was not computed")))
        };
        let u = match self.gate_input {
            GateInput::TaskOnly => get(EmbeddingSource::Task(task))?,
            GateInput::SharedOnly => get(EmbeddingSource::Shared)?,
            GateInput::Sum => {
                let a = get(EmbeddingSource::Task(task))?;
                let b = get(EmbeddingSource::Shared)?;
                tape.add(a, b)?
            }
        };
        let wv = tape.param(store, w);
        let logits = tape.affine(u, wv, None)?;
        tape.softmax(logits)
    }

    /// Blends the visible experts of tower `task`. With `sg_enabled`, expert
    /// outputs visible forward but not backward pass through stop-gradient.
    pub fn combine(&self, tape: &mut Tape, task: usize, expert_outputs: &[Vec<Var>], weights: Var) -> Result<Var> {
        let mut vectors = Vec::new();
        for owner in self.route.visible_groups(task) {
            let gi = self
                .groups
                .iter()
                .position(|g| g.owner == owner)
                .expect("visible groups exist");
            let block = self.config.sg_enabled && !self.route.mask.backward(task, owner);
            for &v in &expert_outputs[gi] {
                vectors.push(if block { tape.stop_gradient(v) } else { v });
            }
        }
        let n_w = tape.value(weights).cols();
        if n_w != vectors.len() {
            return Err(Error::shape("combine", format!("{} experts", vectors.len()), format!("{n_w} weights")));
        }
        tape.weighted_sum(&vectors, weights)
    }

    /// `sigmoid(MLP(o))`, ReLU on hidden layers only.
    pub fn tower_forward(&self, tape: &mut Tape, store: &ParamStore, task: usize, combined: Var) -> Result<Var> {
        let mlp = self.towers[task]
            .as_ref()
            .ok_or_else(|| Error::Config(format!("model has no tower for task {task}")))?;
        let logit = mlp_forward(tape, store, mlp, combined, false)?;
        Ok(tape.sigmoid(logit))
    }

    /// embed → experts → gates → combine → towers over a batch.
    pub fn forward(&self, store: &ParamStore, samples: &[&Sample]) -> Result<Forward> {
        let mut tape = Tape::new();
        let batch = samples.len();
        let embeddings = self.embed(&mut tape, store, samples)?;
        let expert_outputs = self
            .groups
            .iter()
            .map(|g| self.expert_forward(&mut tape, store, g, &embeddings))
            .collect::<Result<Vec<_>>>()?;
        let mut gate_weights = vec![None; self.num_tasks];
        let mut combined = vec![None; self.num_tasks];
        let mut predictions = vec![None; self.num_tasks];
        for &t in &self.route.towers {
            let w = self.gate_forward(&mut tape, store, t, &embeddings, batch)?;
            let o = self.combine(&mut tape, t, &expert_outputs, w)?;
            let y = self.tower_forward(&mut tape, store, t, o)?;
            gate_weights[t] = Some(w);
            combined[t] = Some(o);
            predictions[t] = Some(y);
        }
        Ok(Forward {
            tape,
            batch,
            embeddings,
            expert_outputs,
            gate_weights,
            combined,
            predictions,
        })
    }

    /// Mean cross-entropy of one task's tower on the batch.
    pub fn task_loss(&self, fwd: &mut Forward, samples: &[&Sample], task: usize) -> Result<Var> {
        let pred = fwd.predictions[task]
            .ok_or_else(|| Error::Config(format!("model has no tower for task {task}")))?;
        let labels = samples.iter().map(|s| f64::from(s.labels[task])).collect();
        fwd.tape.bce_mean(pred, labels)
    }

    /// Weighted sum of task losses plus `l2 · Σ‖row‖²` over the embedding
    /// rows this batch looked up. Tasks weighted 0 are left off the tape.
    pub fn objective(&self, fwd: &mut Forward, store: &ParamStore, samples: &[&Sample], task_weights: &[f64], l2: f64) -> Result<Var> {
        let mut total: Option<Var> = None;
        let mut add = |tape: &mut Tape, v: Var| -> Result<()> {
            total = Some(match total {
                Some(acc) => tape.add(acc, v)?,
                None => v,
            });
            Ok(())
        };
        for &t in &self.route.towers {
            let w = task_weights.get(t).copied().unwrap_or(1.0);
            if w == 0.0 {
                continue;
            }
            let l = self.task_loss(fwd, samples, t)?;
            let l = if w == 1.0 { l } else { fwd.tape.scale(l, w) };
            add(&mut fwd.tape, l)?;
        }
        if l2 > 0.0 {
            for (table, rows) in fwd.tape.lookup_rows() {
                let rows: Vec<usize> = rows.into_iter().collect();
                let pen = fwd.tape.l2_rows(store, table, &rows, l2);
                add(&mut fwd.tape, pen)?;
            }
        }
        total.ok_or(Error::EmptyInput("objective without towers"))
    }

    /// Forward-only scores per task over a dataset; tasks without a tower
    /// get an empty vector.
    pub fn predict(&self, store: &ParamStore, dataset: &Dataset, batch_size: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![Vec::with_capacity(dataset.len()); self.num_tasks];
        for chunk in dataset.samples.chunks(batch_size.max(1)) {
            let refs: Vec<&Sample> = chunk.iter().collect();
            let fwd = self.forward(store, &refs)?;
            for &t in &self.route.towers {
                out[t].extend(fwd.prediction_values(t).expect("tower present"));
            }
        }
        for &t in &self.route.towers {
            if let Some(bad) = out[t].iter().find(|v| !v.is_finite()) {
                return Err(Error::numeric(format!("predict task {t}"), format!("score {bad}")));
            }
        }
        Ok(out)
    }

    /// Parameters of every expert in a group.
    pub fn expert_params(&self, owner: GroupOwner) -> Vec<ParamId> {
        self.group(owner)
            .map(|g| g.experts.iter().flat_map(Mlp::params).collect())
            .unwrap_or_default()
    }
}

fn mlp_forward(tape: &mut Tape, store: &ParamStore, mlp: &Mlp, input: Var, relu_last: bool) -> Result<Var> {
    let mut h = input;
    let n = mlp.layers.len();
    for (l, layer) in mlp.layers.iter().enumerate() {
        let w = tape.param(store, layer.weight);
        let b = tape.param(store, layer.bias);
        h = tape.affine(h, w, Some(b))?;
        if l + 1 < n || relu_last {
            h = tape.relu(h);
        }
    }
    Ok(h)
}
