//! Define-then-run computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in construction order, which is also a valid
//! topological order: a node can only reference nodes that already exist.
//! [`Graph::evaluate`] runs every node forward against a set of named
//! [`Bindings`]; [`Graph::backward`] then propagates from the scalar root and
//! returns one gradient per parameter leaf.

use std::collections::{BTreeMap, HashMap};

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Additive mask value for disallowed attention positions.
pub const ATTENTION_MASK: f64 = -1e9;

/// Layer normalization epsilon, added to the variance inside the square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named tensors bound to graph leaves.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Bindings<T = f32> {
    map: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> Bindings<T> {
    pub fn new() -> Self {
        Self {
            map: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.map.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.map.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.map.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn cast<U: Real>(&self) -> Bindings<U> {
        Bindings {
            map: self
                .map
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.map.values().map(Tensor::numel).sum()
    }
}

impl<T> FromIterator<(String, Tensor<T>)> for Bindings<T> {
    fn from_iter<I: IntoIterator<Item = (String, Tensor<T>)>>(iter: I) -> Self {
        Self {
            map: iter.into_iter().collect(),
        }
    }
}

/// Gradients keyed by parameter leaf name.
pub type Gradients<T = f32> = Bindings<T>;

#[derive(Clone, Debug)]
enum Op<T> {
    Param(String),
    Input(String),
    Constant(Tensor<T>),
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Concat,
    ConcatRows,
    SliceRows { start: usize, end: usize },
    Mean { axis: usize },
    Sum,
    Sigmoid,
    Relu,
    Gelu,
    Softmax,
    LayerNorm,
    Embedding { ids: Vec<usize> },
    Attention { heads: usize, causal: bool },
    CrossEntropy { targets: Vec<usize> },
    BceWithLogits,
    Blend { scale: f64 },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Param(_) => "param",
            Op::Input(_) => "input",
            Op::Constant(_) => "constant",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::Concat => "concat",
            Op::ConcatRows => "concat_rows",
            Op::SliceRows { .. } => "slice_rows",
            Op::Mean { .. } => "mean",
            Op::Sum => "sum",
            Op::Sigmoid => "sigmoid",
            Op::Relu => "relu",
            Op::Gelu => "gelu",
            Op::Softmax => "softmax",
            Op::LayerNorm => "layer_norm",
            Op::Embedding { .. } => "embedding",
            Op::Attention { .. } => "attention",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::BceWithLogits => "bce_with_logits",
            Op::Blend { .. } => "blend",
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    inputs: Vec<NodeId>,
}

/// A computation graph over tensors of element type `T`.
#[derive(Clone, Debug)]
pub struct Graph<T = f32> {
    nodes: Vec<Node<T>>,
    leaves: HashMap<String, NodeId>,
    root: Option<NodeId>,
    values: Vec<Option<Tensor<T>>>,
    // Per-node forward caches needed by backward (attention and
    // cross-entropy probabilities).
    aux: Vec<Option<Vec<T>>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            leaves: HashMap::new(),
            root: None,
            values: Vec::new(),
            aux: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, inputs: Vec<NodeId>) -> NodeId {
        for i in &inputs {
            assert!(i.0 < self.nodes.len(), "input node does not exist yet");
        }
        self.nodes.push(Node { op, inputs });
        NodeId(self.nodes.len() - 1)
    }

    /// Trainable leaf. Repeated calls with the same name return the same node.
    pub fn param(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.leaves.get(name) {
            return id;
        }
        let id = self.push(Op::Param(name.to_string()), vec![]);
        self.leaves.insert(name.to_string(), id);
        id
    }

    /// Non-trainable named leaf.
    pub fn input(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.leaves.get(name) {
            return id;
        }
        let id = self.push(Op::Input(name.to_string()), vec![]);
        self.leaves.insert(name.to_string(), id);
        id
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Constant(value), vec![])
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul, vec![a, b])
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Transpose, vec![a])
    }

    /// Elementwise add; `b` may also be a single row broadcast over `a`'s rows.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add, vec![a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub, vec![a, b])
    }

    /// Elementwise product with the same row broadcast rule as [`Graph::add`].
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul, vec![a, b])
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        self.push(Op::Scale(factor), vec![a])
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        self.push(Op::Concat, parts.to_vec())
    }

    /// Concatenation along the row axis.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        self.push(Op::ConcatRows, parts.to_vec())
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        self.push(Op::SliceRows { start, end }, vec![a])
    }

    /// Mean over axis 0 (giving `[1, cols]`) or axis 1 (giving `[rows, 1]`).
    /// The mean over an empty axis is zero.
    pub fn mean(&mut self, a: NodeId, axis: usize) -> NodeId {
        self.push(Op::Mean { axis }, vec![a])
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum, vec![a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sigmoid, vec![a])
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Relu, vec![a])
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Gelu, vec![a])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Softmax, vec![a])
    }

    /// Layer normalization over the last axis, without affine parameters.
    pub fn layer_norm(&mut self, a: NodeId) -> NodeId {
        self.push(Op::LayerNorm, vec![a])
    }

    /// Gathers rows `ids` of a `[vocab, dim]` table.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        self.push(Op::Embedding { ids: ids.to_vec() }, vec![table])
    }

    /// Multi-head scaled dot-product attention over already projected
    /// queries `[n, d]`, keys `[m, d]` and values `[m, d]`.
    ///
    /// With `causal`, query `i` only sees keys `j <= i + (m - n)`. An empty
    /// key set yields a zero output.
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        causal: bool,
    ) -> NodeId {
        self.push(Op::Attention { heads, causal }, vec![q, k, v])
    }

    /// Mean token cross-entropy of `[n, classes]` logits against `targets`.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> NodeId {
        self.push(
            Op::CrossEntropy {
                targets: targets.to_vec(),
            },
            vec![logits],
        )
    }

    /// Mean binary cross-entropy of logits against same-shape targets in [0, 1].
    pub fn bce_with_logits(&mut self, logits: NodeId, targets: NodeId) -> NodeId {
        self.push(Op::BceWithLogits, vec![logits, targets])
    }

    /// `scale · Σ_i weights[i] · parts[i]`, with `weights` holding one entry per part.
    pub fn blend(&mut self, weights: NodeId, parts: &[NodeId], scale: f64) -> NodeId {
        let mut inputs = vec![weights];
        inputs.extend_from_slice(parts);
        self.push(Op::Blend { scale }, inputs)
    }

    pub fn set_root(&mut self, id: NodeId) {
        self.root = Some(id);
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root.or_else(|| {
            if self.nodes.is_empty() {
                None
            } else {
                Some(NodeId(self.nodes.len() - 1))
            }
        })
    }

    /// Value of a node from the last evaluation.
    pub fn value(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.values.get(id.0).and_then(Option::as_ref)
    }

    /// Names of all trainable leaves, in creation order.
    pub fn param_names(&self) -> Vec<String> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::Param(name) => Some(name.clone()),
                _ => None,
            })
            .collect()
    }

    /// Runs every node forward and returns the root value.
    pub fn evaluate(&mut self, bindings: &Bindings<T>) -> Result<&Tensor<T>> {
        let root = self
            .root()
            .ok_or_else(|| Error::Invalid("cannot evaluate an empty graph".into()))?;
        self.values = vec![None; self.nodes.len()];
        self.aux = vec![None; self.nodes.len()];
        for idx in 0..self.nodes.len() {
            let (value, aux) = self.forward_node(idx, bindings)?;
            self.values[idx] = Some(value);
            self.aux[idx] = aux;
        }
        Ok(self.values[root.0].as_ref().expect("root evaluated"))
    }

    fn shape_err(&self, idx: usize, detail: String) -> Error {
        Error::Shape {
            node: idx,
            op: self.nodes[idx].op.name(),
            detail,
        }
    }

    fn val(&self, id: NodeId) -> &Tensor<T> {
        self.values[id.0].as_ref().expect("inputs precede their users")
    }

    #[allow(clippy::type_complexity)]
    fn forward_node(
        &self,
        idx: usize,
        bindings: &Bindings<T>,
    ) -> Result<(Tensor<T>, Option<Vec<T>>)> {
        let node = &self.nodes[idx];
        let x = |i: usize| self.val(node.inputs[i]);
        let out = match &node.op {
            Op::Param(name) | Op::Input(name) => bindings
                .get(name)
                .cloned()
                .ok_or_else(|| Error::UnboundLeaf(name.clone()))?,
            Op::Constant(t) => t.clone(),
            Op::MatMul => {
                let (a, b) = (x(0), x(1));
                if a.shape().len() > 2 || b.shape().len() > 2 || a.cols() != b.rows() {
                    return Err(self.shape_err(
                        idx,
                        format!("cannot multiply {:?} by {:?}", a.shape(), b.shape()),
                    ));
                }
                a.matmul(b)?
            }
            Op::Transpose => {
                let a = x(0);
                let (r, c) = (a.rows(), a.cols());
                let mut out = vec![T::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        out[j * r + i] = a.data()[i * c + j];
                    }
                }
                Tensor::new(vec![c, r], out)?
            }
            Op::Add | Op::Sub | Op::Mul => {
                let (a, b) = (x(0), x(1));
                let broadcast = self.broadcast_kind(idx, a, b)?;
                let f: fn(T, T) -> T = match node.op {
                    Op::Add => |p, q| p + q,
                    Op::Sub => |p, q| p - q,
                    _ => |p, q| p * q,
                };
                let mut out = a.clone();
                let c = a.cols();
                let bd = b.data();
                for (i, o) in out.data_mut().iter_mut().enumerate() {
                    let bj = if broadcast { i % c } else { i };
                    *o = f(*o, bd[bj]);
                }
                out
            }
            Op::Scale(s) => {
                let s = T::of(*s);
                x(0).map(|v| v * s)
            }
            Op::Concat => {
                let rows = x(0).rows();
                let mut total = 0;
                for (k, &inp) in node.inputs.iter().enumerate() {
                    let t = self.val(inp);
                    if t.rows() != rows {
                        return Err(self.shape_err(
                            idx,
                            format!("part {k} has {} rows, expected {rows}", t.rows()),
                        ));
                    }
                    total += t.cols();
                }
                let mut data = Vec::with_capacity(rows * total);
                for r in 0..rows {
                    for &inp in &node.inputs {
                        data.extend_from_slice(self.val(inp).row_slice(r));
                    }
                }
                Tensor::new(vec![rows, total], data)?
            }
            Op::ConcatRows => {
                let cols = x(0).cols();
                let mut data = Vec::new();
                let mut rows = 0;
                for (k, &inp) in node.inputs.iter().enumerate() {
                    let t = self.val(inp);
                    if t.cols() != cols {
                        return Err(self.shape_err(
                            idx,
                            format!("part {k} has {} cols, expected {cols}", t.cols()),
                        ));
                    }
                    rows += t.rows();
                    data.extend_from_slice(t.data());
                }
                Tensor::new(vec![rows, cols], data)?
            }
            Op::SliceRows { start, end } => {
                let a = x(0);
                if start > end || *end > a.rows() {
                    return Err(self.shape_err(
                        idx,
                        format!("rows {start}..{end} out of range for {:?}", a.shape()),
                    ));
                }
                let c = a.cols();
                Tensor::new(vec![end - start, c], a.data()[start * c..end * c].to_vec())?
            }
            Op::Mean { axis } => {
                let a = x(0);
                let (r, c) = (a.rows(), a.cols());
                match axis {
                    0 => {
                        let mut out = vec![T::zero(); c];
                        for i in 0..r {
                            for (o, v) in out.iter_mut().zip(a.row_slice(i)) {
                                *o = *o + *v;
                            }
                        }
                        if r > 0 {
                            let inv = T::one() / T::of(r as f64);
                            out.iter_mut().for_each(|o| *o = *o * inv);
                        }
                        Tensor::new(vec![1, c], out)?
                    }
                    1 => {
                        let inv = T::one() / T::of(c as f64);
                        let out = (0..r)
                            .map(|i| a.row_slice(i).iter().copied().sum::<T>() * inv)
                            .collect();
                        Tensor::new(vec![r, 1], out)?
                    }
                    _ => return Err(self.shape_err(idx, format!("unsupported axis {axis}"))),
                }
            }
            Op::Sum => Tensor::scalar(x(0).data().iter().copied().sum()),
            Op::Sigmoid => x(0).map(sigmoid),
            Op::Relu => x(0).map(|v| if v > T::zero() { v } else { T::zero() }),
            Op::Gelu => x(0).map(|v| gelu(v).0),
            Op::Softmax => {
                let mut out = x(0).clone();
                let c = out.cols();
                if c > 0 {
                    for row in out.data_mut().chunks_mut(c) {
                        softmax_in_place(row);
                    }
                }
                out
            }
            Op::LayerNorm => {
                let mut out = x(0).clone();
                let c = out.cols();
                let eps = T::of(LAYER_NORM_EPS);
                for row in out.data_mut().chunks_mut(c) {
                    let (mean, rstd) = moments(row, eps);
                    row.iter_mut().for_each(|v| *v = (*v - mean) * rstd);
                }
                out
            }
            Op::Embedding { ids } => {
                let table = x(0);
                let (v, d) = (table.rows(), table.cols());
                let mut data = Vec::with_capacity(ids.len() * d);
                for &id in ids {
                    if id >= v {
                        return Err(
                            self.shape_err(idx, format!("id {id} out of range for {v} rows"))
                        );
                    }
                    data.extend_from_slice(table.row_slice(id));
                }
                Tensor::new(vec![ids.len(), d], data)?
            }
            Op::Attention { heads, causal } => {
                return self.attention_forward(idx, x(0), x(1), x(2), *heads, *causal);
            }
            Op::CrossEntropy { targets } => {
                let logits = x(0);
                let (n, k) = (logits.rows(), logits.cols());
                if targets.len() != n || n == 0 {
                    return Err(self.shape_err(
                        idx,
                        format!("{} targets for {n} rows", targets.len()),
                    ));
                }
                let mut probs = logits.data().to_vec();
                let mut loss = T::zero();
                for (i, row) in probs.chunks_mut(k).enumerate() {
                    let t = targets[i];
                    if t >= k {
                        return Err(
                            self.shape_err(idx, format!("target {t} out of range for {k} classes"))
                        );
                    }
                    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                    let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
                    loss = loss + lse - row[t];
                    row.iter_mut().for_each(|v| *v = (*v - lse).exp());
                }
                let loss = loss / T::of(n as f64);
                return Ok((Tensor::scalar(loss), Some(probs)));
            }
            Op::BceWithLogits => {
                let (z, y) = (x(0), x(1));
                if z.numel() != y.numel() || z.numel() == 0 {
                    return Err(self.shape_err(
                        idx,
                        format!("logits {:?} vs targets {:?}", z.shape(), y.shape()),
                    ));
                }
                let total: T = z
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&z, &y)| z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p())
                    .sum();
                Tensor::scalar(total / T::of(z.numel() as f64))
            }
            Op::Blend { scale } => {
                let w = x(0);
                let parts = &node.inputs[1..];
                if w.numel() != parts.len() || parts.is_empty() {
                    return Err(self.shape_err(
                        idx,
                        format!("{} weights for {} parts", w.numel(), parts.len()),
                    ));
                }
                let shape = self.val(parts[0]).shape().to_vec();
                let mut out = Tensor::zeros(&shape);
                let s = T::of(*scale);
                for (k, &p) in parts.iter().enumerate() {
                    let t = self.val(p);
                    if t.shape() != shape.as_slice() {
                        return Err(self.shape_err(
                            idx,
                            format!("part {k} shape {:?} vs {:?}", t.shape(), shape),
                        ));
                    }
                    let wk = w.data()[k] * s;
                    for (o, v) in out.data_mut().iter_mut().zip(t.data()) {
                        *o = *o + wk * *v;
                    }
                }
                out
            }
        };
        Ok((out, None))
    }

    fn broadcast_kind(&self, idx: usize, a: &Tensor<T>, b: &Tensor<T>) -> Result<bool> {
        if a.shape() == b.shape() {
            Ok(false)
        } else if b.rows() == 1 && b.cols() == a.cols() {
            Ok(true)
        } else {
            Err(self.shape_err(
                idx,
                format!("incompatible shapes {:?} and {:?}", a.shape(), b.shape()),
            ))
        }
    }

    fn attention_forward(
        &self,
        idx: usize,
        q: &Tensor<T>,
        k: &Tensor<T>,
        v: &Tensor<T>,
        heads: usize,
        causal: bool,
    ) -> Result<(Tensor<T>, Option<Vec<T>>)> {
        let (n, d) = (q.rows(), q.cols());
        let m = k.rows();
        if k.cols() != d || v.cols() != d || v.rows() != m {
            return Err(self.shape_err(
                idx,
                format!(
                    "q {:?}, k {:?}, v {:?} are not compatible",
                    q.shape(),
                    k.shape(),
                    v.shape()
                ),
            ));
        }
        if heads == 0 || d % heads != 0 {
            return Err(self.shape_err(idx, format!("width {d} not divisible by {heads} heads")));
        }
        if causal && m < n {
            return Err(self.shape_err(idx, format!("causal attention with {n} queries over {m} keys")));
        }
        let mut out = Tensor::zeros(&[n, d]);
        if m == 0 {
            return Ok((out, Some(Vec::new())));
        }
        let dh = d / heads;
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let mask = T::of(ATTENTION_MASK);
        let offset = m - n.min(m);
        let mut probs = vec![T::zero(); heads * n * m];
        let ds = d as isize;
        for h in 0..heads {
            let p = &mut probs[h * n * m..(h + 1) * n * m];
            // scores = q_h · k_hᵀ
            T::gemm(
                n,
                dh,
                m,
                &q.data()[h * dh..],
                (ds, 1),
                &k.data()[h * dh..],
                (1, ds),
                T::zero(),
                p,
                (m as isize, 1),
            );
            for i in 0..n {
                let row = &mut p[i * m..(i + 1) * m];
                for (j, s) in row.iter_mut().enumerate() {
                    *s = *s * scale;
                    if causal && j > i + offset {
                        *s = *s + mask;
                    }
                }
                softmax_in_place(row);
            }
            T::gemm(
                n,
                m,
                dh,
                p,
                (m as isize, 1),
                &v.data()[h * dh..],
                (ds, 1),
                T::zero(),
                &mut out.data_mut()[h * dh..],
                (ds, 1),
            );
        }
        Ok((out, Some(probs)))
    }

    /// Reverse pass from the root; returns gradients for every parameter leaf.
    ///
    /// Parameters the root does not depend on get zero gradients.
    pub fn backward(&mut self) -> Result<Gradients<T>> {
        let root = self.root().ok_or(Error::NotEvaluated)?;
        if self.values.len() != self.nodes.len() {
            return Err(Error::NotEvaluated);
        }
        let root_val = self.val(root);
        if root_val.numel() != 1 {
            return Err(Error::NonScalarRoot(root_val.shape().to_vec()));
        }
        let needs = self.needs_grad();
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::full(root_val.shape(), T::one()));
        for idx in (0..=root.0).rev() {
            if !needs[idx] {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if matches!(self.nodes[idx].op, Op::Param(_)) {
                grads[idx] = Some(g);
                continue;
            }
            let contribs = self.backward_node(idx, &g, &needs)?;
            for (input, grad) in contribs {
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&grad),
                    slot @ None => *slot = Some(grad),
                }
            }
        }
        let mut out = Gradients::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(name) = &node.op {
                let g = grads[idx]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(self.val(NodeId(idx)).shape()));
                out.insert(name.clone(), g);
            }
        }
        Ok(out)
    }

    fn needs_grad(&self) -> Vec<bool> {
        let mut needs = vec![false; self.nodes.len()];
        for (idx, node) in self.nodes.iter().enumerate() {
            needs[idx] = match node.op {
                Op::Param(_) => true,
                Op::Input(_) | Op::Constant(_) => false,
                _ => node.inputs.iter().any(|i| needs[i.0]),
            };
        }
        needs
    }

    fn backward_node(
        &self,
        idx: usize,
        g: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<(NodeId, Tensor<T>)>> {
        let node = &self.nodes[idx];
        let inp = &node.inputs;
        let x = |i: usize| self.val(inp[i]);
        let want = |i: usize| needs[inp[i].0];
        let mut out = Vec::with_capacity(inp.len());
        match &node.op {
            Op::Param(_) | Op::Input(_) | Op::Constant(_) => {}
            Op::MatMul => {
                let (a, b) = (x(0), x(1));
                let (m, k, n) = (a.rows(), a.cols(), b.cols());
                if want(0) {
                    let mut ga = Tensor::zeros(&[m, k]);
                    T::gemm(
                        m,
                        n,
                        k,
                        g.data(),
                        (n as isize, 1),
                        b.data(),
                        (1, n as isize),
                        T::zero(),
                        ga.data_mut(),
                        (k as isize, 1),
                    );
                    out.push((inp[0], ga.reshape(a.shape().to_vec())?));
                }
                if want(1) {
                    let mut gb = Tensor::zeros(&[k, n]);
                    T::gemm(
                        k,
                        m,
                        n,
                        a.data(),
                        (1, k as isize),
                        g.data(),
                        (n as isize, 1),
                        T::zero(),
                        gb.data_mut(),
                        (n as isize, 1),
                    );
                    out.push((inp[1], gb.reshape(b.shape().to_vec())?));
                }
            }
            Op::Transpose => {
                let (r, c) = (g.rows(), g.cols());
                let mut t = vec![T::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        t[j * r + i] = g.data()[i * c + j];
                    }
                }
                out.push((inp[0], Tensor::new(x(0).shape().to_vec(), t)?));
            }
            Op::Add | Op::Sub | Op::Mul => {
                let (a, b) = (x(0), x(1));
                let broadcast = a.shape() != b.shape();
                let c = a.cols();
                let is_mul = matches!(node.op, Op::Mul);
                if want(0) {
                    let ga = if is_mul {
                        let mut t = g.clone();
                        for (i, v) in t.data_mut().iter_mut().enumerate() {
                            *v = *v * b.data()[if broadcast { i % c } else { i }];
                        }
                        t
                    } else {
                        g.clone()
                    };
                    out.push((inp[0], ga));
                }
                if want(1) {
                    let sign = if matches!(node.op, Op::Sub) {
                        -T::one()
                    } else {
                        T::one()
                    };
                    let mut gb = Tensor::zeros(b.shape());
                    for (i, &gv) in g.data().iter().enumerate() {
                        let term = if is_mul { gv * a.data()[i] } else { gv * sign };
                        let j = if broadcast { i % c } else { i };
                        gb.data_mut()[j] = gb.data()[j] + term;
                    }
                    out.push((inp[1], gb));
                }
            }
            Op::Scale(s) => {
                let s = T::of(*s);
                out.push((inp[0], g.map(|v| v * s)));
            }
            Op::Concat => {
                let rows = g.rows();
                let total = g.cols();
                let mut offset = 0;
                for (k, &id) in inp.iter().enumerate() {
                    let t = self.val(id);
                    let c = t.cols();
                    if want(k) {
                        let mut part = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            part.extend_from_slice(&g.data()[r * total + offset..r * total + offset + c]);
                        }
                        out.push((id, Tensor::new(t.shape().to_vec(), part)?));
                    }
                    offset += c;
                }
            }
            Op::ConcatRows => {
                let c = g.cols();
                let mut offset = 0;
                for (k, &id) in inp.iter().enumerate() {
                    let t = self.val(id);
                    let r = t.rows();
                    if want(k) {
                        let part = g.data()[offset * c..(offset + r) * c].to_vec();
                        out.push((id, Tensor::new(t.shape().to_vec(), part)?));
                    }
                    offset += r;
                }
            }
            Op::SliceRows { start, .. } => {
                let a = x(0);
                let c = a.cols();
                let mut ga = Tensor::zeros(a.shape());
                ga.data_mut()[start * c..start * c + g.numel()].copy_from_slice(g.data());
                out.push((inp[0], ga));
            }
            Op::Mean { axis } => {
                let a = x(0);
                let (r, c) = (a.rows(), a.cols());
                let mut ga = Tensor::zeros(a.shape());
                if *axis == 0 {
                    if r > 0 {
                        let inv = T::one() / T::of(r as f64);
                        for row in ga.data_mut().chunks_mut(c) {
                            for (o, gv) in row.iter_mut().zip(g.data()) {
                                *o = *gv * inv;
                            }
                        }
                    }
                } else {
                    let inv = T::one() / T::of(c as f64);
                    for (i, row) in ga.data_mut().chunks_mut(c).enumerate() {
                        let gv = g.data()[i] * inv;
                        row.iter_mut().for_each(|o| *o = gv);
                    }
                }
                out.push((inp[0], ga));
            }
            Op::Sum => {
                out.push((inp[0], Tensor::full(x(0).shape(), g.item())));
            }
            Op::Sigmoid => {
                let y = self.val(NodeId(idx));
                let mut ga = g.clone();
                for (o, &yv) in ga.data_mut().iter_mut().zip(y.data()) {
                    *o = *o * yv * (T::one() - yv);
                }
                out.push((inp[0], ga));
            }
            Op::Relu => {
                let a = x(0);
                let mut ga = g.clone();
                for (o, &av) in ga.data_mut().iter_mut().zip(a.data()) {
                    if av <= T::zero() {
                        *o = T::zero();
                    }
                }
                out.push((inp[0], ga));
            }
            Op::Gelu => {
                let a = x(0);
                let mut ga = g.clone();
                for (o, &av) in ga.data_mut().iter_mut().zip(a.data()) {
                    *o = *o * gelu(av).1;
                }
                out.push((inp[0], ga));
            }
            Op::Softmax => {
                let y = self.val(NodeId(idx));
                let c = y.cols();
                let mut ga = g.clone();
                if c > 0 {
                    for (grow, yrow) in ga.data_mut().chunks_mut(c).zip(y.data().chunks(c)) {
                        let dot: T = grow.iter().zip(yrow).map(|(a, b)| *a * *b).sum();
                        for (gv, &yv) in grow.iter_mut().zip(yrow) {
                            *gv = yv * (*gv - dot);
                        }
                    }
                }
                out.push((inp[0], ga));
            }
            Op::LayerNorm => {
                let a = x(0);
                let y = self.val(NodeId(idx));
                let c = a.cols();
                let eps = T::of(LAYER_NORM_EPS);
                let inv_c = T::one() / T::of(c as f64);
                let mut ga = g.clone();
                for ((grow, arow), yrow) in ga
                    .data_mut()
                    .chunks_mut(c)
                    .zip(a.data().chunks(c))
                    .zip(y.data().chunks(c))
                {
                    let (_, rstd) = moments(arow, eps);
                    let mean_g: T = grow.iter().copied().sum::<T>() * inv_c;
                    let mean_gy: T = grow.iter().zip(yrow).map(|(a, b)| *a * *b).sum::<T>() * inv_c;
                    for (gv, &yv) in grow.iter_mut().zip(yrow) {
                        *gv = rstd * (*gv - mean_g - yv * mean_gy);
                    }
                }
                out.push((inp[0], ga));
            }
            Op::Embedding { ids } => {
                let table = x(0);
                let d = table.cols();
                let mut gt = Tensor::zeros(table.shape());
                for (r, &id) in ids.iter().enumerate() {
                    let dst = &mut gt.data_mut()[id * d..(id + 1) * d];
                    for (o, gv) in dst.iter_mut().zip(&g.data()[r * d..(r + 1) * d]) {
                        *o = *o + *gv;
                    }
                }
                out.push((inp[0], gt));
            }
            Op::Attention { heads, .. } => {
                let grads = self.attention_backward(idx, x(0), x(1), x(2), *heads, g);
                for (k, gk) in grads.into_iter().enumerate() {
                    if want(k) {
                        out.push((inp[k], gk));
                    }
                }
            }
            Op::CrossEntropy { targets } => {
                let probs = self.aux[idx].as_ref().expect("cached probabilities");
                let logits = x(0);
                let (n, k) = (logits.rows(), logits.cols());
                let scale = g.item() / T::of(n as f64);
                let mut gl = probs.clone();
                for (i, row) in gl.chunks_mut(k).enumerate() {
                    row[targets[i]] = row[targets[i]] - T::one();
                    row.iter_mut().for_each(|v| *v = *v * scale);
                }
                out.push((inp[0], Tensor::new(logits.shape().to_vec(), gl)?));
            }
            Op::BceWithLogits => {
                let (z, y) = (x(0), x(1));
                let scale = g.item() / T::of(z.numel() as f64);
                if want(0) {
                    let gz = z
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(&z, &y)| (sigmoid(z) - y) * scale)
                        .collect();
                    out.push((inp[0], Tensor::new(z.shape().to_vec(), gz)?));
                }
                if want(1) {
                    let gy = z.data().iter().map(|&z| -z * scale).collect();
                    out.push((inp[1], Tensor::new(y.shape().to_vec(), gy)?));
                }
            }
            Op::Blend { scale } => {
                let w = x(0);
                let s = T::of(*scale);
                if want(0) {
                    let gw = inp[1..]
                        .iter()
                        .map(|&p| {
                            self.val(p)
                                .data()
                                .iter()
                                .zip(g.data())
                                .map(|(a, b)| *a * *b)
                                .sum::<T>()
                                * s
                        })
                        .collect();
                    out.push((inp[0], Tensor::new(w.shape().to_vec(), gw)?));
                }
                for (k, &p) in inp[1..].iter().enumerate() {
                    if want(k + 1) {
                        let wk = w.data()[k] * s;
                        out.push((p, g.map(|v| v * wk)));
                    }
                }
            }
        }
        Ok(out)
    }

    fn attention_backward(
        &self,
        idx: usize,
        q: &Tensor<T>,
        k: &Tensor<T>,
        v: &Tensor<T>,
        heads: usize,
        g: &Tensor<T>,
    ) -> [Tensor<T>; 3] {
        let (n, d) = (q.rows(), q.cols());
        let m = k.rows();
        let mut gq = Tensor::zeros(q.shape());
        let mut gk = Tensor::zeros(k.shape());
        let mut gv = Tensor::zeros(v.shape());
        if m == 0 || n == 0 {
            return [gq, gk, gv];
        }
        let probs = self.aux[idx].as_ref().expect("cached attention");
        let dh = d / heads;
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let ds = d as isize;
        let ms = m as isize;
        let mut dp = vec![T::zero(); n * m];
        for h in 0..heads {
            let p = &probs[h * n * m..(h + 1) * n * m];
            // gv_h = pᵀ · g_h
            T::gemm(
                m,
                n,
                dh,
                p,
                (1, ms),
                &g.data()[h * dh..],
                (ds, 1),
                T::zero(),
                &mut gv.data_mut()[h * dh..],
                (ds, 1),
            );
            // dp = g_h · v_hᵀ
            T::gemm(
                n,
                dh,
                m,
                &g.data()[h * dh..],
                (ds, 1),
                &v.data()[h * dh..],
                (1, ds),
                T::zero(),
                &mut dp,
                (ms, 1),
            );
            for i in 0..n {
                let prow = &p[i * m..(i + 1) * m];
                let drow = &mut dp[i * m..(i + 1) * m];
                let dot: T = prow.iter().zip(drow.iter()).map(|(a, b)| *a * *b).sum();
                for (dv, &pv) in drow.iter_mut().zip(prow) {
                    *dv = pv * (*dv - dot) * scale;
                }
            }
            // gq_h = ds · k_h ; gk_h = dsᵀ · q_h
            T::gemm(
                n,
                m,
                dh,
                &dp,
                (ms, 1),
                &k.data()[h * dh..],
                (ds, 1),
                T::zero(),
                &mut gq.data_mut()[h * dh..],
                (ds, 1),
            );
            T::gemm(
                m,
                n,
                dh,
                &dp,
                (1, ms),
                &q.data()[h * dh..],
                (ds, 1),
                T::zero(),
                &mut gk.data_mut()[h * dh..],
                (ds, 1),
            );
        }
        [gq, gk, gv]
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Value and derivative of the tanh-approximated GELU.
#[inline]
fn gelu<T: Real>(x: T) -> (T, T) {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let a = T::of(0.044715);
    let half = T::of(0.5);
    let three = T::of(3.0);
    let inner = c * (x + a * x * x * x);
    let t = inner.tanh();
    let value = half * x * (T::one() + t);
    let d_inner = c * (T::one() + three * a * x * x);
    let deriv = half * (T::one() + t) + half * x * (T::one() - t * t) * d_inner;
    (value, deriv)
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total = total + *v;
    }
    let inv = T::one() / total;
    row.iter_mut().for_each(|v| *v = *v * inv);
}

fn moments<T: Real>(row: &[T], eps: T) -> (T, T) {
    let n = T::of(row.len() as f64);
    let mean = row.iter().copied().sum::<T>() / n;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, T::one() / (var + eps).sqrt())
}
