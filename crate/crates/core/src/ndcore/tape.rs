//! Linear reverse-mode tape.
//!
//! Every forward op appends one node holding its value and the edges to its
//! inputs. `backward` walks the nodes in exact reverse order. An edge marked
//! `blocked` is skipped, so whatever sits behind a [`Tape::stop_gradient`]
//! receives exactly `0.0` from that path.

use std::collections::BTreeMap;

use super::matrix::gemm;
use super::{ops, Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub src: Var,
    pub blocked: bool,
}

impl Edge {
    fn open(src: Var) -> Self {
        Edge { src, blocked: false }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    /// Per-field row gather, concatenated along columns.
    Lookup { fields: Vec<(ParamId, Vec<usize>)>, dim: usize },
    Affine,
    Relu,
    Sigmoid,
    Softmax,
    Add,
    Mul,
    Scale(f64),
    /// edges: weights, then the combined vectors.
    WeightedSum,
    StopGradient,
    Sum,
    BceMean { labels: Vec<f64> },
    L2Rows { param: ParamId, rows: Vec<usize>, lambda: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    edges: Vec<Edge>,
    value: Matrix,
    requires_grad: bool,
}

/// Probability bounds used by the cross-entropy node.
pub const PROB_CLAMP: f64 = 1e-12;

/// How a parameter relates to a loss node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reach {
    /// At least one path without a blocked edge.
    Open,
    /// Every path crosses a blocked edge.
    BlockedOnly,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Edges recorded for a node, in input order.
    pub fn edges(&self, v: Var) -> &[Edge] {
        &self.nodes[v.0].edges
    }

    fn push(&mut self, op: Op, edges: Vec<Edge>, value: Matrix) -> Var {
        let requires_grad = match op {
            Op::Leaf => false,
            Op::Param(_) | Op::Lookup { .. } | Op::L2Rows { .. } => true,
            _ => edges
                .iter()
                .any(|e| !e.blocked && self.nodes[e.src.0].requires_grad),
        };
        self.nodes.push(Node {
            op,
            edges,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; never receives gradient.
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, Vec::new(), value)
    }

    /// Free leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn variable(&mut self, value: Matrix) -> Var {
        let v = self.push(Op::Leaf, Vec::new(), value);
        self.nodes[v.0].requires_grad = true;
        v
    }

    /// Reads a dense parameter; backward accumulates into the store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(Op::Param(id), Vec::new(), store.value(id).clone())
    }

    /// Gathers one row per sample from each field's table and concatenates
    /// the rows along columns. All `fields` entries must list the same number
    /// of rows and all tables must share their column count.
    pub fn lookup(&mut self, store: &ParamStore, fields: Vec<(ParamId, Vec<usize>)>) -> Result<Var> {
        let (first_table, first_rows) = fields
            .first()
            .ok_or(Error::EmptyInput("lookup with no fields"))?;
        let dim = store.value(*first_table).cols();
        let batch = first_rows.len();
        let mut out = Matrix::zeros(batch, dim * fields.len());
        for (f, (table, rows)) in fields.iter().enumerate() {
            let t = store.value(*table);
            if t.cols() != dim {
                return Err(Error::shape("lookup", format!("dim {dim}"), t.shape_str()));
            }
            if rows.len() != batch {
                return Err(Error::shape("lookup", format!("batch {batch}"), format!("batch {}", rows.len())));
            }
            for (r, &row) in rows.iter().enumerate() {
                if row >= t.rows() {
                    return Err(Error::Bounds {
                        what: store.name(*table).to_string(),
                        row,
                        len: t.rows(),
                    });
                }
                out.row_mut(r)[f * dim..(f + 1) * dim].copy_from_slice(t.row(row));
            }
        }
        Ok(self.push(Op::Lookup { fields, dim }, Vec::new(), out))
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let value = ops::affine(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        let mut edges = vec![Edge::open(x), Edge::open(w)];
        edges.extend(b.map(Edge::open));
        Ok(self.push(Op::Affine, edges, value))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = ops::relu(self.value(x));
        self.push(Op::Relu, vec![Edge::open(x)], value)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(ops::sigmoid);
        self.push(Op::Sigmoid, vec![Edge::open(x)], value)
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let value = ops::softmax_rows(self.value(x))?;
        Ok(self.push(Op::Softmax, vec![Edge::open(x)], value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("add", va.shape_str(), vb.shape_str()));
        }
        let mut value = va.clone();
        value.add_assign(vb);
        Ok(self.push(Op::Add, vec![Edge::open(a), Edge::open(b)], value))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("mul", va.shape_str(), vb.shape_str()));
        }
        let data = va.as_slice().iter().zip(vb.as_slice()).map(|(x, y)| x * y).collect();
        let value = Matrix::from_vec(va.rows(), va.cols(), data)?;
        Ok(self.push(Op::Mul, vec![Edge::open(a), Edge::open(b)], value))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.push(Op::Scale(c), vec![Edge::open(x)], value)
    }

    pub fn weighted_sum(&mut self, vectors: &[Var], weights: Var) -> Result<Var> {
        let vals: Vec<&Matrix> = vectors.iter().map(|&v| self.value(v)).collect();
        let value = ops::weighted_sum(&vals, self.value(weights))?;
        let mut edges = vec![Edge::open(weights)];
        edges.extend(vectors.iter().copied().map(Edge::open));
        Ok(self.push(Op::WeightedSum, edges, value))
    }

    /// Identity forward; the edge back to `x` is blocked.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.push(Op::StopGradient, vec![Edge { src: x, blocked: true }], value)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::filled(1, 1, self.value(x).sum());
        self.push(Op::Sum, vec![Edge::open(x)], value)
    }

    /// Mean binary cross-entropy of `pred` (probabilities) against `labels`,
    /// both in row-major order. Probabilities are clamped into
    /// `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
    pub fn bce_mean(&mut self, pred: Var, labels: Vec<f64>) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != labels.len() {
            return Err(Error::shape("bce_mean", p.shape_str(), format!("{} labels", labels.len())));
        }
        if p.is_empty() {
            return Err(Error::EmptyInput("bce_mean"));
        }
        let mut total = 0.0;
        for (&q, &y) in p.as_slice().iter().zip(&labels) {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::numeric("bce_mean", format!("prediction {q} outside [0, 1]")));
            }
            total += bce_term(q, y);
        }
        let value = Matrix::filled(1, 1, total / labels.len() as f64);
        Ok(self.push(Op::BceMean { labels }, vec![Edge::open(pred)], value))
    }

    /// `λ · Σ ‖E[row]‖²` over the distinct `rows` of an embedding table.
    pub fn l2_rows(&mut self, store: &ParamStore, param: ParamId, rows: &[usize], lambda: f64) -> Var {
        let mut rows = rows.to_vec();
        rows.sort_unstable();
        rows.dedup();
        let table = store.value(param);
        let total: f64 = rows
            .iter()
            .map(|&r| table.row(r).iter().map(|v| v * v).sum::<f64>())
            .sum();
        let value = Matrix::filled(1, 1, lambda * total);
        self.push(Op::L2Rows { param, rows, lambda }, Vec::new(), value)
    }

    /// Runs the reverse sweep from a `1 × 1` loss node. Parameter gradients
    /// are accumulated into `store`; the returned [`Gradients`] hold every
    /// intermediate gradient.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::shape("backward", lv.shape_str(), "1x1 loss"));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads, store);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>], store: &mut ParamStore) {
        let wants = |k: usize| -> bool {
            let e = node.edges[k];
            !e.blocked && self.nodes[e.src.0].requires_grad
        };
        let send = |grads: &mut [Option<Matrix>], k: usize, contrib: Matrix| {
            let src = node.edges[k].src.0;
            match &mut grads[src] {
                Some(acc) => acc.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        let input = |k: usize| &self.nodes[node.edges[k].src.0].value;

        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => store.accumulate(*id, g),
            Op::Lookup { fields, dim } => {
                for (f, (table, rows)) in fields.iter().enumerate() {
                    for (r, &row) in rows.iter().enumerate() {
                        store.accumulate_row(*table, row, &g.row(r)[f * dim..(f + 1) * dim]);
                    }
                }
            }
            Op::L2Rows { param, rows, lambda } => {
                let scale = 2.0 * lambda * g.get(0, 0);
                let contribs: Vec<Vec<f64>> = rows
                    .iter()
                    .map(|&r| store.value(*param).row(r).iter().map(|v| scale * v).collect())
                    .collect();
                for (&r, c) in rows.iter().zip(&contribs) {
                    store.accumulate_row(*param, r, c);
                }
            }
            Op::Affine => {
                let (x, w) = (input(0), input(1));
                if wants(0) {
                    let mut dx = Matrix::zeros(x.rows(), x.cols());
                    gemm(1.0, g, false, w, false, 0.0, &mut dx);
                    send(grads, 0, dx);
                }
                if wants(1) {
                    let mut dw = Matrix::zeros(w.rows(), w.cols());
                    gemm(1.0, g, true, x, false, 0.0, &mut dw);
                    send(grads, 1, dw);
                }
                if node.edges.len() > 2 && wants(2) {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, v) in db.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    send(grads, 2, db);
                }
            }
            Op::Relu => {
                if wants(0) {
                    let x = input(0);
                    let data = g
                        .as_slice()
                        .iter()
                        .zip(x.as_slice())
                        .map(|(&d, &v)| if v > 0.0 { d } else { 0.0 })
                        .collect();
                    send(grads, 0, Matrix::from_vec(g.rows(), g.cols(), data).unwrap());
                }
            }
            Op::Sigmoid => {
                if wants(0) {
                    let y = &node.value;
                    let data = g
                        .as_slice()
                        .iter()
                        .zip(y.as_slice())
                        .map(|(&d, &s)| d * s * (1.0 - s))
                        .collect();
                    send(grads, 0, Matrix::from_vec(g.rows(), g.cols(), data).unwrap());
                }
            }
            Op::Softmax => {
                if wants(0) {
                    let y = &node.value;
                    let mut dz = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                        for ((o, &gy), &p) in dz.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o = p * (gy - dot);
                        }
                    }
                    send(grads, 0, dz);
                }
            }
            Op::Add => {
                for k in 0..2 {
                    if wants(k) {
                        send(grads, k, g.clone());
                    }
                }
            }
            Op::Mul => {
                for k in 0..2 {
                    if wants(k) {
                        let other = input(1 - k);
                        let data = g.as_slice().iter().zip(other.as_slice()).map(|(a, b)| a * b).collect();
                        send(grads, k, Matrix::from_vec(g.rows(), g.cols(), data).unwrap());
                    }
                }
            }
            Op::Scale(c) => {
                if wants(0) {
                    send(grads, 0, g.map(|v| v * c));
                }
            }
            Op::WeightedSum => {
                let weights = input(0);
                if wants(0) {
                    let mut dw = Matrix::zeros(weights.rows(), weights.cols());
                    for j in 1..node.edges.len() {
                        let v = input(j);
                        for r in 0..g.rows() {
                            let dot: f64 = g.row(r).iter().zip(v.row(r)).map(|(a, b)| a * b).sum();
                            dw.set(r, j - 1, dot);
                        }
                    }
                    send(grads, 0, dw);
                }
                for j in 1..node.edges.len() {
                    if wants(j) {
                        let mut dv = Matrix::zeros(g.rows(), g.cols());
                        for r in 0..g.rows() {
                            let w = weights.get(r, j - 1);
                            for (o, d) in dv.row_mut(r).iter_mut().zip(g.row(r)) {
                                *o = w * d;
                            }
                        }
                        send(grads, j, dv);
                    }
                }
            }
            // The only edge is blocked; `wants(0)` is always false.
            Op::StopGradient => {}
            Op::Sum => {
                if wants(0) {
                    let x = input(0);
                    send(grads, 0, Matrix::filled(x.rows(), x.cols(), g.get(0, 0)));
                }
            }
            Op::BceMean { labels } => {
                if wants(0) {
                    let p = input(0);
                    let scale = g.get(0, 0) / labels.len() as f64;
                    let data = p
                        .as_slice()
                        .iter()
                        .zip(labels)
                        .map(|(&q, &y)| {
                            if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&q) {
                                0.0
                            } else {
                                scale * (q - y) / (q * (1.0 - q))
                            }
                        })
                        .collect();
                    send(grads, 0, Matrix::from_vec(p.rows(), p.cols(), data).unwrap());
                }
            }
        }
    }

    pub(crate) fn lookups(&self) -> impl Iterator<Item = (ParamId, &[usize])> {
        self.nodes.iter().flat_map(|n| match &n.op {
            Op::Lookup { fields, .. } => fields.iter().map(|(id, rows)| (*id, rows.as_slice())).collect::<Vec<_>>(),
            _ => Vec::new(),
        })
    }

    /// Classifies every parameter the loss depends on by whether some path
    /// to it avoids blocked edges.
    pub fn param_reach(&self, loss: Var) -> BTreeMap<ParamId, Reach> {
        let n = loss.0 + 1;
        let mut any = vec![false; n];
        let mut open = vec![false; n];
        any[loss.0] = true;
        open[loss.0] = true;
        let mut out = BTreeMap::new();
        for i in (0..n).rev() {
            if !any[i] {
                continue;
            }
            let node = &self.nodes[i];
            for e in &node.edges {
                any[e.src.0] = true;
                if open[i] && !e.blocked {
                    open[e.src.0] = true;
                }
            }
            let reach = if open[i] { Reach::Open } else { Reach::BlockedOnly };
            let mut note = |id: ParamId| {
                let slot = out.entry(id).or_insert(reach);
                if reach == Reach::Open {
                    *slot = Reach::Open;
                }
            };
            match &node.op {
                Op::Param(id) => note(*id),
                Op::Lookup { fields, .. } => fields.iter().for_each(|(id, _)| note(*id)),
                Op::L2Rows { param, .. } => note(*param),
                _ => {}
            }
        }
        out
    }
}

fn bce_term(q: f64, y: f64) -> f64 {
    let q = q.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
}

/// Gradients of one backward sweep, indexed by tape node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; `None` when no unblocked
    /// path reached it.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`] but materialises zeros for unreached nodes.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Matrix {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = tape.value(v).shape();
                Matrix::zeros(r, c)
            }
        }
    }
}
