//! A small reverse-mode tape over dense `f64` matrices.
//!
//! Every value is a 2-D array; vectors are `1 × d` rows. A [`Graph`] borrows a
//! [`ParamStore`] immutably, so any number of graphs can be evaluated in
//! parallel against the same parameters; updates happen afterwards through
//! the optimizer, which needs `&mut ParamStore`.

use std::collections::HashMap;

use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamp applied to probabilities inside cross-entropy losses.
pub const PROB_EPS: f64 = 1e-7;
const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Optimizer grouping; each group has its own learning rate and freeze flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Encoder,
    Projection,
    Classifier,
    McspHead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub value: Array2<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, ParamId>,
}

#[derive(Serialize, Deserialize)]
struct SerializedParam {
    name: String,
    group: ParamGroup,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: ParamGroup, value: Array2<f64>) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "parameter {name} registered twice");
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param { name, group, value });
        id
    }

    pub fn add_normal(
        &mut self,
        name: impl Into<String>,
        group: ParamGroup,
        shape: (usize, usize),
        std: f64,
        rng: &mut impl Rng,
    ) -> ParamId {
        let normal = Normal::new(0.0, std).expect("valid std");
        let value = Array2::from_shape_simple_fn(shape, || normal.sample(rng));
        self.add(name, group, value)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<ParamId> {
        self.id(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// A store holding copies of the parameters in `group`.
    pub fn subset(&self, group: ParamGroup) -> ParamStore {
        let mut out = ParamStore::new();
        for p in self.params.iter().filter(|p| p.group == group) {
            out.add(p.name.clone(), p.group, p.value.clone());
        }
        out
    }

    /// Copies every parameter of `other` into this store, adding new names.
    pub fn absorb(&mut self, other: &ParamStore) {
        for p in &other.params {
            match self.id(&p.name) {
                Some(id) => self.params[id.0].value = p.value.clone(),
                None => {
                    self.add(p.name.clone(), p.group, p.value.clone());
                }
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let list: Vec<SerializedParam> = self
            .params
            .iter()
            .map(|p| SerializedParam {
                name: p.name.clone(),
                group: p.group,
                rows: p.value.nrows(),
                cols: p.value.ncols(),
                data: p.value.iter().copied().collect(),
            })
            .collect();
        serde_json::to_value(list).expect("params serialize")
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self> {
        let list: Vec<SerializedParam> =
            serde_json::from_value(value).map_err(|e| Error::Checkpoint(format!("parameters: {e}")))?;
        let mut store = ParamStore::new();
        for p in list {
            let value = Array2::from_shape_vec((p.rows, p.cols), p.data)
                .map_err(|e| Error::Checkpoint(format!("parameter {}: {e}", p.name)))?;
            if value.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("parameter {} is not finite", p.name)));
            }
            if store.by_name.contains_key(&p.name) {
                return Err(Error::Checkpoint(format!("parameter {} listed twice", p.name)));
            }
            store.add(p.name, p.group, value);
        }
        Ok(store)
    }
}

/// Per-parameter gradients aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients {
            grads: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.grads[id.0].as_ref()
    }

    fn accumulate(&mut self, id: ParamId, g: &Array2<f64>) {
        match &mut self.grads[id.0] {
            Some(acc) => *acc += g,
            slot @ None => *slot = Some(g.clone()),
        }
    }

    fn accumulate_rows(&mut self, id: ParamId, shape: (usize, usize), rows: &[usize], g: &Array2<f64>) {
        let acc = self.grads[id.0].get_or_insert_with(|| Array2::zeros(shape));
        for (i, &r) in rows.iter().enumerate() {
            let mut dst = acc.row_mut(r);
            dst += &g.row(i);
        }
    }

    /// Adds `other` into `self`.
    pub fn merge(&mut self, other: &Gradients) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g);
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.mapv_inplace(|v| v * factor);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .map(|g| g.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(ParamId),
    Gather(ParamId, Vec<usize>),
    Add(Var, Var),
    AddRow(Var, Var),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Scale(Var, f64),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Array2<f64>,
        inv_std: Vec<f64>,
    },
    Gelu(Var),
    Sigmoid(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    SelectRows(Var, Vec<usize>),
    SigmoidBce { logits: Var, dlogits: Array2<f64> },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    y
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::with_capacity(128),
        }
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// A constant; receives no gradient.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.store.value(id).clone();
        self.push(value, Op::Param(id))
    }

    /// Rows `rows` of parameter `id` (an embedding lookup).
    pub fn gather(&mut self, id: ParamId, rows: &[usize]) -> Var {
        let table = self.store.value(id);
        let value = table.select(Axis(0), rows);
        self.push(value, Op::Gather(id, rows.to_vec()))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    /// `a[n×d] + b[1×d]`, broadcasting `b` over rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        debug_assert_eq!(self.shape(b).0, 1);
        let value = self.value(a) + self.value(b);
        self.push(value, Op::AddRow(a, b))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        self.push(value, Op::MatMulT(a, b))
    }

    /// `x · W + b` for a `d_in × d_out` weight and `1 × d_out` bias.
    pub fn linear(&mut self, x: Var, weight: ParamId, bias: ParamId) -> Var {
        let w = self.param(weight);
        let b = self.param(bias);
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a) * factor;
        self.push(value, Op::Scale(a, factor))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn layer_norm(&mut self, x: Var, gain: ParamId, bias: ParamId) -> Var {
        let g = self.param(gain);
        let b = self.param(bias);
        let xv = self.value(x);
        let d = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv_std.push(is);
        }
        let value = &xhat * self.value(g) + self.value(b);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gain: g,
                bias: b,
                xhat,
                inv_std,
            },
        )
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(gelu);
        self.push(value, Op::Gelu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(value, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let value = self.value(a).select(Axis(0), rows);
        self.push(value, Op::SelectRows(a, rows.to_vec()))
    }

    /// Multi-label cross-entropy of `sigmoid(logits)` against 0/1 `targets`:
    /// each row is averaged over the label dimension, then rows are averaged.
    /// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn sigmoid_bce(&mut self, logits: Var, targets: &Array2<f64>) -> Var {
        let z = self.value(logits);
        assert_eq!(z.dim(), targets.dim(), "logits and targets disagree");
        let (n, k) = z.dim();
        let norm = 1.0 / (n as f64 * k as f64);
        let mut loss = 0.0;
        let mut dlogits = Array2::zeros((n, k));
        for ((&zv, &y), d) in z.iter().zip(targets.iter()).zip(dlogits.iter_mut()) {
            let p = sigmoid(zv);
            let pc = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
            *d = if p == pc { (p - y) * norm } else { 0.0 };
        }
        let value = Array2::from_elem((1, 1), loss * norm);
        self.push(value, Op::SigmoidBce { logits, dlogits })
    }

    /// Backpropagates from the scalar `loss` and returns parameter gradients.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones((1, 1)));
        let mut out = Gradients::zeros_like(self.store);

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(a) => *a += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.accumulate(*id, &g),
                Op::Gather(id, rows) => out.accumulate_rows(*id, self.store.value(*id).dim(), rows, &g),
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(a, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *a, g);
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.dot(self.value(*b));
                    let gb = g.t().dot(self.value(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, f) => acc(&mut grads, *a, g * *f),
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut gx = &g * y;
                    for (mut row, yrow) in gx.rows_mut().into_iter().zip(y.rows()) {
                        let dot = row.sum();
                        row.zip_mut_with(&yrow, |r, &yv| *r -= yv * dot);
                    }
                    acc(&mut grads, *a, gx);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gain);
                    acc(&mut grads, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *gain, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let dxhat = &g * gv;
                    let d = xhat.ncols() as f64;
                    let mut gx = Array2::zeros(xhat.dim());
                    for r in 0..xhat.nrows() {
                        let dh = dxhat.row(r);
                        let xh = xhat.row(r);
                        let sum_dh = dh.sum();
                        let sum_dh_xh: f64 = dh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum();
                        let scale = inv_std[r] / d;
                        for c in 0..xhat.ncols() {
                            gx[[r, c]] = scale * (d * dh[c] - sum_dh - xh[c] * sum_dh_xh);
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Gelu(a) => {
                    let mut gx = self.value(*a).mapv(gelu_grad);
                    gx *= &g;
                    acc(&mut grads, *a, gx);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let gx = &g * &y.mapv(|p| p * (1.0 - p));
                    acc(&mut grads, *a, gx);
                }
                Op::SliceCols(a, start) => {
                    let mut gx = Array2::zeros(self.shape(*a));
                    gx.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut grads, *a, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut col = 0;
                    for p in parts {
                        let w = self.shape(*p).1;
                        acc(&mut grads, *p, g.slice(s![.., col..col + w]).to_owned());
                        col += w;
                    }
                }
                Op::SelectRows(a, rows) => {
                    let mut gx = Array2::zeros(self.shape(*a));
                    for (i, &r) in rows.iter().enumerate() {
                        let mut dst = gx.row_mut(r);
                        dst += &g.row(i);
                    }
                    acc(&mut grads, *a, gx);
                }
                Op::SigmoidBce { logits, dlogits } => {
                    let scale = g[[0, 0]];
                    acc(&mut grads, *logits, dlogits * scale);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Central finite differences of `f` w.r.t. every scalar of every parameter.
    fn numeric_grad(store: &ParamStore, f: &dyn Fn(&ParamStore) -> f64) -> Vec<Array2<f64>> {
        let h = 1e-6;
        let mut out = Vec::new();
        for id in store.ids() {
            let mut g = Array2::zeros(store.value(id).dim());
            for idx in 0..g.len() {
                let mut plus = store.clone();
                plus.value_mut(id).as_slice_mut().unwrap()[idx] += h;
                let mut minus = store.clone();
                minus.value_mut(id).as_slice_mut().unwrap()[idx] -= h;
                g.as_slice_mut().unwrap()[idx] = (f(&plus) - f(&minus)) / (2.0 * h);
            }
            out.push(g);
        }
        out
    }

    fn check(store: &ParamStore, f: &dyn Fn(&mut Graph) -> Var) {
        let mut g = Graph::new(store);
        let loss = f(&mut g);
        let analytic = g.backward(loss);
        let eval = |s: &ParamStore| {
            let mut g = Graph::new(s);
            let l = f(&mut g);
            g.value(l)[[0, 0]]
        };
        let numeric = numeric_grad(store, &eval);
        for (id, num) in store.ids().zip(numeric) {
            let an = analytic.get(id).cloned().unwrap_or_else(|| Array2::zeros(num.dim()));
            let diff = (&an - &num).mapv(|v| v * v).sum().sqrt();
            let scale = an.mapv(|v| v * v).sum().sqrt() + num.mapv(|v| v * v).sum().sqrt();
            assert!(diff <= 1e-6 * scale.max(1e-3), "{}: {an} vs {num}", store.get(id).name);
        }
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let emb = store.add_normal("emb", ParamGroup::Encoder, (5, 4), 1.0, &mut rng);
        let w = store.add_normal("w", ParamGroup::Encoder, (4, 4), 0.5, &mut rng);
        let b = store.add_normal("b", ParamGroup::Encoder, (1, 4), 0.5, &mut rng);
        let gain = store.add_normal("g", ParamGroup::Encoder, (1, 4), 1.0, &mut rng);
        let beta = store.add_normal("beta", ParamGroup::Encoder, (1, 4), 1.0, &mut rng);
        let cls = store.add_normal("cls", ParamGroup::Classifier, (7, 3), 0.5, &mut rng);
        let targets = array![[1.0, 0.0, 1.0], [0.0, 0.0, 1.0]];
        check(&store, &|g: &mut Graph| {
            let x = g.gather(emb, &[0, 3, 3, 1]);
            let h = g.linear(x, w, b);
            let h = g.gelu(h);
            let n = g.layer_norm(h, gain, beta);
            let att = g.matmul_t(n, x);
            let att = g.scale(att, 0.5);
            let att = g.softmax_rows(att);
            let mixed = g.matmul(att, n);
            let res = g.add(mixed, x);
            let left = g.slice_cols(res, 0, 2);
            let right = g.slice_cols(res, 1, 4);
            let sig = g.sigmoid(left);
            let cat = g.concat_cols(&[sig, right, left]);
            let rows = g.select_rows(cat, &[0, 2]);
            let w = g.param(cls);
            let logits = g.matmul(rows, w);
            g.sigmoid_bce(logits, &targets)
        });
    }

    #[test]
    fn bce_at_zero_logits_is_ln2() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let z = g.constant(Array2::zeros((1, 4)));
        let l = g.sigmoid_bce(z, &array![[0.0, 1.0, 0.0, 0.0]]);
        assert!((g.value(l)[[0, 0]] - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = array![[1.0, 2.0, -3.0]];
        let b = &a + 100.0;
        let (sa, sb) = (softmax_rows(&a), softmax_rows(&b));
        assert!((&sa - &sb).iter().all(|d| d.abs() < 1e-12));
        assert!((sa.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn store_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        store.add_normal("a", ParamGroup::Projection, (3, 2), 1.0, &mut rng);
        store.add_normal("b", ParamGroup::Classifier, (1, 5), 1.0, &mut rng);
        let back = ParamStore::from_json(store.to_json()).unwrap();
        assert_eq!(back, store);
    }
}
