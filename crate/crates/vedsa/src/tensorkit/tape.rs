use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VedsaError};

/// Handle to a trainable tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// A named trainable tensor with a same-shape gradient accumulator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
}

/// Owns all trainable parameters of a model. The tape reads values from it
/// on the forward pass and scatters gradients back on the backward pass.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamStore {
    pub tensors: Vec<PTensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> ParamId {
        assert_eq!(shape.iter().product::<usize>(), values.len());
        let grad = vec![0.0; values.len()];
        self.tensors.push(PTensor { name: name.into(), shape, values, grad });
        ParamId(self.tensors.len() - 1)
    }

    pub fn values(&self, id: ParamId) -> &[f64] {
        &self.tensors[id.0].values
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            if t.grad.len() != t.values.len() {
                t.grad = vec![0.0; t.values.len()];
            } else {
                t.grad.iter_mut().for_each(|g| *g = 0.0);
            }
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.values.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.values.iter().all(|v| v.is_finite()))
    }
}

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
enum Op {
    /// Constant input; no gradient flows out.
    Leaf,
    /// Leaf bound to a trainable parameter.
    Param(ParamId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Softplus(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    MatVec { w: NodeId, x: NodeId, rows: usize, cols: usize },
    Sum(NodeId),
    Stack(Vec<NodeId>),
    Index { input: NodeId, at: usize },
    Conv1d {
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
        in_ch: usize,
        out_ch: usize,
        ksize: usize,
        stride: usize,
        in_len: usize,
    },
    MaxPool1d { input: NodeId, argmax: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    values: Vec<f64>,
    grad: Vec<f64>,
}

/// Define-by-run computation tape. Forward values are computed as nodes are
/// pushed; `backward` traverses in reverse and accumulates gradients in a
/// deterministic (index) order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    // ln(1+e^x), stable for large |x|
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, values: Vec<f64>) -> NodeId {
        let grad = vec![0.0; values.len()];
        self.nodes.push(Node { op, values, grad });
        NodeId(self.nodes.len() - 1)
    }

    pub fn values(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].values
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].values.len(), 1);
        self.nodes[id.0].values[0]
    }

    pub fn len(&self, id: NodeId) -> usize {
        self.nodes[id.0].values.len()
    }

    /// Constant input vector.
    pub fn input(&mut self, values: Vec<f64>) -> NodeId {
        self.push(Op::Leaf, values)
    }

    /// Leaf bound to a trainable parameter; values copied from the store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        let values = store.tensors[id.0].values.clone();
        self.push(Op::Param(id), values)
    }

    fn zip_ew(&mut self, a: NodeId, b: NodeId, op: Op, f: impl Fn(f64, f64) -> f64) -> NodeId {
        assert_eq!(self.len(a), self.len(b), "elementwise op on mismatched lengths");
        let values = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(op, values)
    }

    fn map_ew(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let values = self.nodes[a.0].values.iter().map(|&x| f(x)).collect();
        self.push(op, values)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip_ew(a, b, Op::Add(a, b), |x, y| x + y)
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip_ew(a, b, Op::Sub(a, b), |x, y| x - y)
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip_ew(a, b, Op::Mul(a, b), |x, y| x * y)
    }
    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip_ew(a, b, Op::Div(a, b), |x, y| x / y)
    }
    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.map_ew(a, Op::Neg(a), |x| -x)
    }
    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.map_ew(a, Op::Scale(a, c), |x| c * x)
    }
    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        self.map_ew(a, Op::AddConst(a), |x| x + c)
    }
    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.map_ew(a, Op::Exp(a), f64::exp)
    }
    /// Natural log; inputs must be positive (callers add an epsilon floor).
    pub fn ln(&mut self, a: NodeId) -> NodeId {
        self.map_ew(a, Op::Ln(a), f64::ln)
    }
    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.map_ew(a, Op::Softplus(a), softplus)
    }
    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map_ew(a, Op::Sigmoid(a), sigmoid)
    }
    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map_ew(a, Op::Tanh(a), f64::tanh)
    }
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.map_ew(a, Op::Relu(a), |x| x.max(0.0))
    }

    /// Matrix-vector product; `w` holds `rows * cols` values in row-major
    /// order, `x` has `cols` values.
    pub fn matvec(&mut self, w: NodeId, x: NodeId, rows: usize, cols: usize) -> NodeId {
        assert_eq!(self.len(w), rows * cols, "weight length mismatch");
        assert_eq!(self.len(x), cols, "input length mismatch");
        let wv = &self.nodes[w.0].values;
        let xv = &self.nodes[x.0].values;
        let mut out = vec![0.0; rows];
        for r in 0..rows {
            let row = &wv[r * cols..(r + 1) * cols];
            out[r] = row.iter().zip(xv).map(|(&a, &b)| a * b).sum();
        }
        self.push(Op::MatVec { w, x, rows, cols }, out)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.nodes[a.0].values.iter().sum();
        self.push(Op::Sum(a), vec![s])
    }

    /// Gathers scalar nodes into one vector node.
    pub fn stack(&mut self, parts: Vec<NodeId>) -> NodeId {
        let values: Vec<f64> = parts
            .iter()
            .map(|&p| {
                assert_eq!(self.len(p), 1, "stack expects scalar nodes");
                self.nodes[p.0].values[0]
            })
            .collect();
        self.push(Op::Stack(parts), values)
    }

    /// Extracts one element as a scalar node.
    pub fn index(&mut self, input: NodeId, at: usize) -> NodeId {
        let v = self.nodes[input.0].values[at];
        self.push(Op::Index { input, at }, vec![v])
    }

    /// Valid (no padding) 1-D convolution. Input is `in_ch * in_len` values
    /// channel-major; kernel is `out_ch * in_ch * ksize`; bias has `out_ch`.
    pub fn conv1d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
        in_ch: usize,
        out_ch: usize,
        ksize: usize,
        stride: usize,
        in_len: usize,
    ) -> Result<NodeId> {
        if ksize > in_len {
            return Err(VedsaError::Structure(format!(
                "conv kernel size {ksize} exceeds input length {in_len}"
            )));
        }
        assert_eq!(self.len(input), in_ch * in_len);
        assert_eq!(self.len(kernel), out_ch * in_ch * ksize);
        assert_eq!(self.len(bias), out_ch);
        let out_len = (in_len - ksize) / stride + 1;
        let iv = &self.nodes[input.0].values;
        let kv = &self.nodes[kernel.0].values;
        let bv = &self.nodes[bias.0].values;
        let mut out = vec![0.0; out_ch * out_len];
        for oc in 0..out_ch {
            for i in 0..out_len {
                let mut acc = bv[oc];
                for ic in 0..in_ch {
                    let base_in = ic * in_len + i * stride;
                    let base_k = (oc * in_ch + ic) * ksize;
                    for k in 0..ksize {
                        acc += kv[base_k + k] * iv[base_in + k];
                    }
                }
                out[oc * out_len + i] = acc;
            }
        }
        Ok(self.push(Op::Conv1d { input, kernel, bias, in_ch, out_ch, ksize, stride, in_len }, out))
    }

    /// Non-overlapping max pooling per channel; ties broken to the lowest
    /// index. Trailing elements that do not fill a window are dropped.
    pub fn maxpool1d(&mut self, input: NodeId, window: usize, ch: usize, in_len: usize) -> NodeId {
        assert!(window >= 1);
        assert_eq!(self.len(input), ch * in_len);
        let out_len = in_len / window;
        let iv = &self.nodes[input.0].values;
        let mut out = vec![0.0; ch * out_len];
        let mut argmax = vec![0usize; ch * out_len];
        for c in 0..ch {
            for i in 0..out_len {
                let base = c * in_len + i * window;
                let mut best = iv[base];
                let mut best_k = 0;
                for k in 1..window {
                    if iv[base + k] > best {
                        best = iv[base + k];
                        best_k = k;
                    }
                }
                out[c * out_len + i] = best;
                argmax[c * out_len + i] = base + best_k;
            }
        }
        self.push(Op::MaxPool1d { input, argmax }, out)
    }

    /// Dropout mask as a constant multiplier; identity when `train` is false
    /// or rate is 0. Survivors are scaled by 1/(1-rate).
    pub fn dropout(&mut self, input: NodeId, rate: f64, rng: &mut impl Rng, train: bool) -> NodeId {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0,1)");
        if !train || rate == 0.0 {
            return input;
        }
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..self.len(input))
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let m = self.input(mask);
        self.mul(input, m)
    }

    pub fn all_finite(&self, id: NodeId) -> bool {
        self.nodes[id.0].values.iter().all(|v| v.is_finite())
    }

    /// Reverse pass from a scalar loss node. Gradients for parameter leaves
    /// are accumulated into the store (callers zero them between batches).
    pub fn backward(&mut self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        if self.len(loss) != 1 {
            return Err(VedsaError::Usage("backward requires a scalar loss node".into()));
        }
        for n in &mut self.nodes {
            n.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.nodes[loss.0].grad[0] = 1.0;

        for i in (0..=loss.0).rev() {
            let (head, tail) = self.nodes.split_at_mut(i);
            let node = &mut tail[0];
            if node.grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = &node.grad;
            match &node.op {
                Op::Leaf => {}
                Op::Param(pid) => {
                    let pg = &mut store.tensors[pid.0].grad;
                    for (dst, &src) in pg.iter_mut().zip(g) {
                        *dst += src;
                    }
                }
                Op::Add(a, b) => {
                    for (k, &gk) in g.iter().enumerate() {
                        head[a.0].grad[k] += gk;
                    }
                    for (k, &gk) in g.iter().enumerate() {
                        head[b.0].grad[k] += gk;
                    }
                }
                Op::Sub(a, b) => {
                    for (k, &gk) in g.iter().enumerate() {
                        head[a.0].grad[k] += gk;
                        head[b.0].grad[k] -= gk;
                    }
                }
                Op::Mul(a, b) => {
                    if a == b {
                        for k in 0..g.len() {
                            head[a.0].grad[k] += 2.0 * g[k] * head[a.0].values[k];
                        }
                        continue;
                    }
                    let (pa, pb) = if a.0 < b.0 {
                        let (l, r) = head.split_at_mut(b.0);
                        (&mut l[a.0], &mut r[0])
                    } else {
                        let (l, r) = head.split_at_mut(a.0);
                        (&mut r[0], &mut l[b.0])
                    };
                    for k in 0..g.len() {
                        pa.grad[k] += g[k] * pb.values[k];
                        pb.grad[k] += g[k] * pa.values[k];
                    }
                }
                Op::Div(a, b) => {
                    if a == b {
                        // d(x/x)/dx == 0 away from 0
                        continue;
                    }
                    let (pa, pb) = if a.0 < b.0 {
                        let (l, r) = head.split_at_mut(b.0);
                        (&mut l[a.0], &mut r[0])
                    } else {
                        let (l, r) = head.split_at_mut(a.0);
                        (&mut r[0], &mut l[b.0])
                    };
                    for k in 0..g.len() {
                        let bv = pb.values[k];
                        pa.grad[k] += g[k] / bv;
                        pb.grad[k] -= g[k] * pa.values[k] / (bv * bv);
                    }
                }
                Op::Neg(a) => {
                    for (k, &gk) in g.iter().enumerate() {
                        head[a.0].grad[k] -= gk;
                    }
                }
                Op::Scale(a, c) => {
                    for (k, &gk) in g.iter().enumerate() {
                        head[a.0].grad[k] += c * gk;
                    }
                }
                Op::AddConst(a) => {
                    for (k, &gk) in g.iter().enumerate() {
                        head[a.0].grad[k] += gk;
                    }
                }
                Op::Exp(a) => {
                    for (k, &gk) in g.iter().enumerate() {
                        head[a.0].grad[k] += gk * node.values[k];
                    }
                }
                Op::Ln(a) => {
                    for (k, &gk) in g.iter().enumerate() {
                        head[a.0].grad[k] += gk / head[a.0].values[k];
                    }
                }
                Op::Softplus(a) => {
                    for (k, &gk) in g.iter().enumerate() {
                        head[a.0].grad[k] += gk * sigmoid(head[a.0].values[k]);
                    }
                }
                Op::Sigmoid(a) => {
                    for (k, &gk) in g.iter().enumerate() {
                        let y = node.values[k];
                        head[a.0].grad[k] += gk * y * (1.0 - y);
                    }
                }
                Op::Tanh(a) => {
                    for (k, &gk) in g.iter().enumerate() {
                        let y = node.values[k];
                        head[a.0].grad[k] += gk * (1.0 - y * y);
                    }
                }
                Op::Relu(a) => {
                    for (k, &gk) in g.iter().enumerate() {
                        if head[a.0].values[k] > 0.0 {
                            head[a.0].grad[k] += gk;
                        }
                    }
                }
                Op::MatVec { w, x, rows, cols } => {
                    let (rows, cols) = (*rows, *cols);
                    let (pw, px) = if w.0 < x.0 {
                        let (l, r) = head.split_at_mut(x.0);
                        (&mut l[w.0], &mut r[0])
                    } else {
                        let (l, r) = head.split_at_mut(w.0);
                        (&mut r[0], &mut l[x.0])
                    };
                    for r in 0..rows {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        for c in 0..cols {
                            pw.grad[r * cols + c] += gr * px.values[c];
                            px.grad[c] += gr * pw.values[r * cols + c];
                        }
                    }
                }
                Op::Sum(a) => {
                    let gk = g[0];
                    for dst in head[a.0].grad.iter_mut() {
                        *dst += gk;
                    }
                }
                Op::Stack(parts) => {
                    for (k, p) in parts.iter().enumerate() {
                        head[p.0].grad[0] += g[k];
                    }
                }
                Op::Index { input, at } => {
                    head[input.0].grad[*at] += g[0];
                }
                Op::Conv1d { input, kernel, bias, in_ch, out_ch, ksize, stride, in_len } => {
                    let (in_ch, out_ch, ksize, stride, in_len) =
                        (*in_ch, *out_ch, *ksize, *stride, *in_len);
                    let out_len = (in_len - ksize) / stride + 1;
                    for oc in 0..out_ch {
                        for i in 0..out_len {
                            let go = g[oc * out_len + i];
                            if go == 0.0 {
                                continue;
                            }
                            head[bias.0].grad[oc] += go;
                            for ic in 0..in_ch {
                                let base_in = ic * in_len + i * stride;
                                let base_k = (oc * in_ch + ic) * ksize;
                                for k in 0..ksize {
                                    let iv = head[input.0].values[base_in + k];
                                    let kv = head[kernel.0].values[base_k + k];
                                    head[kernel.0].grad[base_k + k] += go * iv;
                                    head[input.0].grad[base_in + k] += go * kv;
                                }
                            }
                        }
                    }
                }
                Op::MaxPool1d { input, argmax } => {
                    for (k, &gk) in g.iter().enumerate() {
                        head[input.0].grad[argmax[k]] += gk;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Disagreements below this absolute level are indistinguishable from
/// central-difference roundoff (loss values carry ~1e-15 of float noise,
/// amplified by 1/2eps) and are not counted as gradient error.
const GRAD_ATOL: f64 = 1e-8;

/// Compares analytic gradients against central finite differences.
///
/// `build` reconstructs the forward graph from the current store values and
/// returns the scalar loss node. Checks up to `max_per_param` randomly
/// sampled elements per tensor and returns the maximum relative error in
/// excess of [`GRAD_ATOL`].
pub fn grad_check<F>(
    store: &mut ParamStore,
    mut build: F,
    epsilon: f64,
    max_per_param: usize,
    rng: &mut impl Rng,
) -> Result<f64>
where
    F: FnMut(&mut Tape, &ParamStore) -> NodeId,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = build(&mut tape, store);
    tape.backward(loss, store)?;
    let analytic: Vec<Vec<f64>> = store.tensors.iter().map(|t| t.grad.clone()).collect();

    let mut max_rel = 0.0f64;
    for ti in 0..store.tensors.len() {
        let n = store.tensors[ti].values.len();
        let mut idxs: Vec<usize> = (0..n).collect();
        if n > max_per_param {
            for i in 0..max_per_param {
                let j = rng.gen_range(i..n);
                idxs.swap(i, j);
            }
            idxs.truncate(max_per_param);
        }
        for &k in &idxs {
            let orig = store.tensors[ti].values[k];
            store.tensors[ti].values[k] = orig + epsilon;
            let mut t1 = Tape::new();
            let l1 = build(&mut t1, store);
            let f1 = t1.scalar(l1);
            store.tensors[ti].values[k] = orig - epsilon;
            let mut t2 = Tape::new();
            let l2 = build(&mut t2, store);
            let f2 = t2.scalar(l2);
            store.tensors[ti].values[k] = orig;
            let numeric = (f1 - f2) / (2.0 * epsilon);
            let a = analytic[ti][k];
            let denom = a.abs().max(numeric.abs()).max(GRAD_ATOL);
            let excess = ((a - numeric).abs() - GRAD_ATOL).max(0.0);
            max_rel = max_rel.max(excess / denom);
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_gradient_is_input() {
        // loss = sum(w .* x) with x fixed -> dL/dw == x
        let mut store = ParamStore::new();
        let w = store.add("w", vec![3], vec![0.5, -1.0, 2.0]);
        let mut tape = Tape::new();
        let wp = tape.param(&store, w);
        let x = tape.input(vec![1.0, 2.0, 3.0]);
        let prod = tape.mul(wp, x);
        let loss = tape.sum(prod);
        store.zero_grads();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.tensors[0].grad, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut store = ParamStore::new();
        let w = store.add("w", vec![2], vec![1.0, 2.0]);
        let mut tape = Tape::new();
        let wp = tape.param(&store, w);
        assert!(tape.backward(wp, &mut store).is_err());
    }

    #[test]
    fn conv_hand_example() {
        let mut store = ParamStore::new();
        let k = store.add("k", vec![1, 1, 3], vec![1.0, 0.0, -1.0]);
        let b = store.add("b", vec![1], vec![0.0]);
        let mut tape = Tape::new();
        let x = tape.input(vec![1.0, 2.0, 3.0, 4.0]);
        let kp = tape.param(&store, k);
        let bp = tape.param(&store, b);
        let y = tape.conv1d(x, kp, bp, 1, 1, 3, 1, 4).unwrap();
        assert_eq!(tape.values(y), &[-2.0, -2.0]);
    }

    #[test]
    fn conv_rejects_oversized_kernel() {
        let mut store = ParamStore::new();
        let k = store.add("k", vec![1, 1, 5], vec![0.0; 5]);
        let b = store.add("b", vec![1], vec![0.0]);
        let mut tape = Tape::new();
        let x = tape.input(vec![1.0, 2.0]);
        let kp = tape.param(&store, k);
        let bp = tape.param(&store, b);
        assert!(tape.conv1d(x, kp, bp, 1, 1, 5, 1, 2).is_err());
    }

    #[test]
    fn maxpool_hand_example() {
        let mut tape = Tape::new();
        let x = tape.input(vec![1.0, 3.0, 2.0, 5.0]);
        let y = tape.maxpool1d(x, 2, 1, 4);
        assert_eq!(tape.values(y), &[3.0, 5.0]);
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax_lowest_tie() {
        let mut store = ParamStore::new();
        let w = store.add("w", vec![4], vec![2.0, 2.0, 1.0, 5.0]);
        let mut tape = Tape::new();
        let wp = tape.param(&store, w);
        let y = tape.maxpool1d(wp, 2, 1, 4);
        let loss = tape.sum(y);
        store.zero_grads();
        tape.backward(loss, &mut store).unwrap();
        // tie in first window broken to index 0
        assert_eq!(store.tensors[0].grad, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn dropout_inference_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::new();
        let x = tape.input(vec![1.0, 2.0, 3.0]);
        let y = tape.dropout(x, 0.5, &mut rng, false);
        assert_eq!(x, y);
        let z = tape.dropout(x, 0.0, &mut rng, true);
        assert_eq!(x, z);
    }

    #[test]
    fn softplus_at_zero() {
        let mut tape = Tape::new();
        let x = tape.input(vec![0.0]);
        let y = tape.softplus(x);
        assert!((tape.scalar(y) - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradients_are_deterministic() {
        let run = || {
            let mut store = ParamStore::new();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let vals: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w = store.add("w", vec![3, 4], vals);
            let mut tape = Tape::new();
            let wp = tape.param(&store, w);
            let x = tape.input(vec![0.3, -0.2, 0.9, 0.1]);
            let h = tape.matvec(wp, x, 3, 4);
            let a = tape.tanh(h);
            let loss = tape.sum(a);
            store.zero_grads();
            tape.backward(loss, &mut store).unwrap();
            store.tensors[0].grad.clone()
        };
        let g1 = run();
        let g2 = run();
        assert!(g1.iter().zip(&g2).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn grad_check_dense_softplus_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let wv: Vec<f64> = (0..20).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let w = store.add("w", vec![4, 5], wv);
        let bv: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let b = store.add("b", vec![4], bv);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let err = grad_check(
            &mut store,
            |tape, store| {
                let wp = tape.param(store, w);
                let bp = tape.param(store, b);
                let xn = tape.input(x.clone());
                let h = tape.matvec(wp, xn, 4, 5);
                let h = tape.add(h, bp);
                let h = tape.softplus(h);
                tape.sum(h)
            },
            1e-5,
            50,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-6, "max rel err {err}");
    }
}
