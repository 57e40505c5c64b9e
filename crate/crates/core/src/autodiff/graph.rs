use std::collections::HashMap;

use super::tensor::{Tensor, TensorError};

/// Matrix dimensions resolved for a matmul, remembering whether each side
/// was given as a rank-1 vector so the output rank can mirror the inputs.
#[derive(Clone, Copy)]
struct MatDims {
    m: usize,
    k: usize,
    n: usize,
    lhs_vec: bool,
    rhs_vec: bool,
}

#[derive(Clone)]
enum Op {
    Leaf,
    Matmul(MatDims),
    Transpose,
    Softmax,
    Add,
    Sub,
    Mul,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Neg,
    Scale(f64),
    Concat { axis: usize, split: usize },
    Mean,
    Sum,
    CrossEntropy { target: usize },
    SelectRow { row: usize },
}

struct Node {
    op: Op,
    inputs: Vec<usize>,
    tensor: Tensor,
    needs_grad: bool,
}

/// Dynamic tape: ops are recorded in execution order and replayed in strict
/// reverse order by [`Graph::backward`]. One graph per forward pass; leaf
/// parameters keep their gradient buffers across graphs, accumulating until
/// explicitly zeroed.
///
/// Shapes must match exactly for binary elementwise ops, except that a
/// one-element tensor combines with any shape (scalar broadcasting). No
/// other broadcasting exists.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    index: HashMap<usize, usize>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn register(&mut self, t: &Tensor) -> usize {
        if let Some(&id) = self.index.get(&t.id()) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            tensor: t.clone(),
            needs_grad: t.requires_grad(),
        });
        self.index.insert(t.id(), id);
        id
    }

    fn push(&mut self, op: Op, inputs: Vec<usize>, out: Tensor) -> Tensor {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        let id = self.nodes.len();
        self.nodes.push(Node {
            op,
            inputs,
            tensor: out.clone(),
            needs_grad,
        });
        self.index.insert(out.id(), id);
        out
    }

    pub fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        let (sa, sb) = (a.shape(), b.shape());
        let dims = match (sa.as_slice(), sb.as_slice()) {
            ([m, k1], [k2, n]) if k1 == k2 => MatDims { m: *m, k: *k1, n: *n, lhs_vec: false, rhs_vec: false },
            ([m, k1], [k2]) if k1 == k2 => MatDims { m: *m, k: *k1, n: 1, lhs_vec: false, rhs_vec: true },
            ([k1], [k2, n]) if k1 == k2 => MatDims { m: 1, k: *k1, n: *n, lhs_vec: true, rhs_vec: false },
            _ => {
                return Err(TensorError::ShapeMismatch { op: "matmul", lhs: sa, rhs: sb });
            }
        };
        let out = a.with_data(|da| {
            b.with_data(|db| {
                let mut c = vec![0.0; dims.m * dims.n];
                for i in 0..dims.m {
                    for p in 0..dims.k {
                        let aip = da[i * dims.k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        let row = p * dims.n;
                        let orow = i * dims.n;
                        for j in 0..dims.n {
                            c[orow + j] += aip * db[row + j];
                        }
                    }
                }
                c
            })
        });
        let out_shape: Vec<usize> = if dims.lhs_vec && !dims.rhs_vec {
            vec![dims.n]
        } else if dims.rhs_vec && !dims.lhs_vec {
            vec![dims.m]
        } else {
            vec![dims.m, dims.n]
        };
        let ia = self.register(a);
        let ib = self.register(b);
        let t = Tensor::new(&out_shape, out)?;
        Ok(self.push(Op::Matmul(dims), vec![ia, ib], t))
    }

    pub fn transpose(&mut self, a: &Tensor) -> Result<Tensor, TensorError> {
        let s = a.shape();
        if s.len() != 2 {
            return Err(TensorError::InvalidShape {
                op: "transpose",
                shape: s,
                reason: "expected a rank-2 tensor",
            });
        }
        let (m, n) = (s[0], s[1]);
        let out = a.with_data(|d| {
            let mut o = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    o[j * m + i] = d[i * n + j];
                }
            }
            o
        });
        let ia = self.register(a);
        let t = Tensor::new(&[n, m], out)?;
        Ok(self.push(Op::Transpose, vec![ia], t))
    }

    /// Numerically stabilized softmax over a rank-1 tensor.
    pub fn softmax(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        let s = x.shape();
        if s.len() != 1 || s[0] == 0 {
            return Err(TensorError::InvalidShape {
                op: "softmax",
                shape: s,
                reason: "expected a non-empty rank-1 tensor",
            });
        }
        let out = x.with_data(softmax_slice);
        let ix = self.register(x);
        let t = Tensor::new(&s, out)?;
        Ok(self.push(Op::Softmax, vec![ix], t))
    }

    fn binary(
        &mut self,
        op: Op,
        name: &'static str,
        a: &Tensor,
        b: &Tensor,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, TensorError> {
        let (sa, sb) = (a.shape(), b.shape());
        let (na, nb) = (a.numel(), b.numel());
        if sa != sb && na != 1 && nb != 1 {
            return Err(TensorError::ShapeMismatch { op: name, lhs: sa, rhs: sb });
        }
        let out_shape = if na == 1 && nb != 1 { sb.clone() } else { sa.clone() };
        let out = a.with_data(|da| {
            b.with_data(|db| {
                let n = da.len().max(db.len());
                let mut o = Vec::with_capacity(n);
                for i in 0..n {
                    let x = da[if na == 1 { 0 } else { i }];
                    let y = db[if nb == 1 { 0 } else { i }];
                    o.push(f(x, y));
                }
                o
            })
        });
        let ia = self.register(a);
        let ib = self.register(b);
        let t = Tensor::new(&out_shape, out)?;
        Ok(self.push(op, vec![ia, ib], t))
    }

    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        self.binary(Op::Add, "add", a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        self.binary(Op::Sub, "sub", a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        self.binary(Op::Mul, "mul", a, b, |x, y| x * y)
    }

    fn unary(
        &mut self,
        op: Op,
        x: &Tensor,
        f: impl Fn(f64) -> f64,
    ) -> Result<Tensor, TensorError> {
        let out = x.with_data(|d| d.iter().map(|&v| f(v)).collect::<Vec<_>>());
        let ix = self.register(x);
        let t = Tensor::new(&x.shape(), out)?;
        Ok(self.push(op, vec![ix], t))
    }

    pub fn tanh(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        self.unary(Op::Tanh, x, f64::tanh)
    }

    pub fn sigmoid(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        self.unary(Op::Sigmoid, x, |v| 1.0 / (1.0 + (-v).exp()))
    }

    pub fn exp(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        self.unary(Op::Exp, x, f64::exp)
    }

    pub fn log(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        if let Some(bad) = x.with_data(|d| d.iter().copied().find(|&v| v <= 0.0)) {
            return Err(TensorError::LogDomain { value: bad });
        }
        self.unary(Op::Log, x, f64::ln)
    }

    pub fn neg(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        self.unary(Op::Neg, x, |v| -v)
    }

    /// Multiply by a plain constant (not a tracked tensor).
    pub fn scale(&mut self, x: &Tensor, c: f64) -> Result<Tensor, TensorError> {
        self.unary(Op::Scale(c), x, |v| c * v)
    }

    pub fn concat(&mut self, a: &Tensor, b: &Tensor, axis: usize) -> Result<Tensor, TensorError> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() != sb.len() || axis >= sa.len() || sa.len() > 2 {
            return Err(TensorError::ShapeMismatch { op: "concat", lhs: sa, rhs: sb });
        }
        for d in 0..sa.len() {
            if d != axis && sa[d] != sb[d] {
                return Err(TensorError::ShapeMismatch { op: "concat", lhs: sa, rhs: sb });
            }
        }
        let mut out_shape = sa.clone();
        out_shape[axis] += sb[axis];
        let out = a.with_data(|da| {
            b.with_data(|db| {
                if sa.len() == 1 || axis == 0 {
                    let mut o = Vec::with_capacity(da.len() + db.len());
                    o.extend_from_slice(da);
                    o.extend_from_slice(db);
                    o
                } else {
                    // rank-2, axis 1: splice rows
                    let rows = sa[0];
                    let (ca, cb) = (sa[1], sb[1]);
                    let mut o = Vec::with_capacity(da.len() + db.len());
                    for r in 0..rows {
                        o.extend_from_slice(&da[r * ca..(r + 1) * ca]);
                        o.extend_from_slice(&db[r * cb..(r + 1) * cb]);
                    }
                    o
                }
            })
        });
        let split = sa[axis];
        let ia = self.register(a);
        let ib = self.register(b);
        let t = Tensor::new(&out_shape, out)?;
        Ok(self.push(Op::Concat { axis, split }, vec![ia, ib], t))
    }

    /// Arithmetic mean of M same-shaped tensors; each input receives 1/M of
    /// the upstream gradient.
    pub fn mean(&mut self, xs: &[Tensor]) -> Result<Tensor, TensorError> {
        let first = xs.first().ok_or(TensorError::Usage(
            "mean requires at least one tensor".into(),
        ))?;
        let shape = first.shape();
        for x in xs {
            if x.shape() != shape {
                return Err(TensorError::ShapeMismatch {
                    op: "mean",
                    lhs: shape,
                    rhs: x.shape(),
                });
            }
        }
        let n = first.numel();
        let mut out = vec![0.0; n];
        for x in xs {
            x.with_data(|d| {
                for (o, v) in out.iter_mut().zip(d) {
                    *o += v;
                }
            });
        }
        let scale = 1.0 / xs.len() as f64;
        out.iter_mut().for_each(|v| *v *= scale);
        let inputs: Vec<usize> = xs.iter().map(|x| self.register(x)).collect();
        let t = Tensor::new(&shape, out)?;
        Ok(self.push(Op::Mean, inputs, t))
    }

    pub fn sum(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        let total = x.with_data(|d| d.iter().sum::<f64>());
        let ix = self.register(x);
        let t = Tensor::scalar(total);
        Ok(self.push(Op::Sum, vec![ix], t))
    }

    /// `-log softmax(logits)[target]`, the per-step imitation loss.
    pub fn cross_entropy(&mut self, logits: &Tensor, target: usize) -> Result<Tensor, TensorError> {
        let s = logits.shape();
        if s.len() != 1 || s[0] == 0 {
            return Err(TensorError::InvalidShape {
                op: "cross_entropy",
                shape: s,
                reason: "expected a non-empty rank-1 tensor",
            });
        }
        if target >= s[0] {
            return Err(TensorError::IndexOutOfRange {
                op: "cross_entropy",
                index: target,
                shape: s,
            });
        }
        let loss = logits.with_data(|d| {
            let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let logsum = d.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
            logsum - d[target]
        });
        let il = self.register(logits);
        let t = Tensor::scalar(loss);
        Ok(self.push(Op::CrossEntropy { target }, vec![il], t))
    }

    /// Row `row` of a rank-2 tensor as a rank-1 tensor (embedding lookup).
    pub fn select_row(&mut self, m: &Tensor, row: usize) -> Result<Tensor, TensorError> {
        let s = m.shape();
        if s.len() != 2 {
            return Err(TensorError::InvalidShape {
                op: "select_row",
                shape: s,
                reason: "expected a rank-2 tensor",
            });
        }
        if row >= s[0] {
            return Err(TensorError::IndexOutOfRange { op: "select_row", index: row, shape: s });
        }
        let cols = s[1];
        let out = m.with_data(|d| d[row * cols..(row + 1) * cols].to_vec());
        let im = self.register(m);
        let t = Tensor::new(&[cols], out)?;
        Ok(self.push(Op::SelectRow { row }, vec![im], t))
    }

    /// Reverse sweep from a scalar root. Visits every node exactly once, in
    /// strict reverse insertion order, and adds the resulting adjoints into
    /// the gradient buffers of every reachable leaf with `requires_grad`.
    /// Calling backward again without zeroing accumulates on top.
    pub fn backward(&mut self, root: &Tensor) -> Result<(), TensorError> {
        if root.numel() != 1 {
            return Err(TensorError::NonScalarRoot { shape: root.shape() });
        }
        let root_id = *self
            .index
            .get(&root.id())
            .ok_or_else(|| TensorError::Usage("backward root is not part of this graph".into()))?;

        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[root_id] = Some(vec![1.0]);

        for k in (0..self.nodes.len()).rev() {
            let upstream = match adj[k].take() {
                Some(u) => u,
                None => continue,
            };
            let node = &self.nodes[k];
            if !node.needs_grad {
                continue;
            }
            match node.op {
                Op::Leaf => {
                    if node.tensor.requires_grad() {
                        node.tensor.accumulate_grad(&upstream);
                    }
                }
                _ => {
                    let grads = self.input_grads(k, &upstream);
                    let inputs = self.nodes[k].inputs.clone();
                    for (i, g) in inputs.into_iter().zip(grads) {
                        if !self.nodes[i].needs_grad {
                            continue;
                        }
                        match adj[i].as_mut() {
                            Some(buf) => {
                                for (b, v) in buf.iter_mut().zip(&g) {
                                    *b += v;
                                }
                            }
                            None => adj[i] = Some(g),
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn input_grads(&self, k: usize, up: &[f64]) -> Vec<Vec<f64>> {
        let node = &self.nodes[k];
        let input = |i: usize| &self.nodes[node.inputs[i]].tensor;
        match &node.op {
            Op::Leaf => unreachable!("leaves have no inputs"),
            Op::Matmul(d) => {
                let da = input(0).to_vec();
                let db = input(1).to_vec();
                let mut ga = vec![0.0; d.m * d.k];
                let mut gb = vec![0.0; d.k * d.n];
                // dA = up @ B^T, dB = A^T @ up
                for i in 0..d.m {
                    for j in 0..d.n {
                        let u = up[i * d.n + j];
                        if u == 0.0 {
                            continue;
                        }
                        for p in 0..d.k {
                            ga[i * d.k + p] += u * db[p * d.n + j];
                            gb[p * d.n + j] += da[i * d.k + p] * u;
                        }
                    }
                }
                vec![ga, gb]
            }
            Op::Transpose => {
                let s = node.tensor.shape(); // [n, m]
                let (n, m) = (s[0], s[1]);
                let mut g = vec![0.0; m * n];
                for j in 0..n {
                    for i in 0..m {
                        g[i * n + j] = up[j * m + i];
                    }
                }
                vec![g]
            }
            Op::Softmax => {
                let y = node.tensor.to_vec();
                let dot: f64 = up.iter().zip(&y).map(|(u, v)| u * v).sum();
                vec![y.iter().zip(up).map(|(v, u)| v * (u - dot)).collect()]
            }
            Op::Add | Op::Sub => {
                let sign = if matches!(node.op, Op::Sub) { -1.0 } else { 1.0 };
                let na = input(0).numel();
                let nb = input(1).numel();
                let ga = reduce_to(up, na);
                let gb_full: Vec<f64> = up.iter().map(|u| sign * u).collect();
                let gb = reduce_to(&gb_full, nb);
                vec![ga, gb]
            }
            Op::Mul => {
                let a = input(0);
                let b = input(1);
                let (na, nb) = (a.numel(), b.numel());
                let da = a.to_vec();
                let db = b.to_vec();
                let ga_full: Vec<f64> = up
                    .iter()
                    .enumerate()
                    .map(|(i, u)| u * db[if nb == 1 { 0 } else { i }])
                    .collect();
                let gb_full: Vec<f64> = up
                    .iter()
                    .enumerate()
                    .map(|(i, u)| u * da[if na == 1 { 0 } else { i }])
                    .collect();
                vec![reduce_to(&ga_full, na), reduce_to(&gb_full, nb)]
            }
            Op::Tanh => {
                let y = node.tensor.to_vec();
                vec![y.iter().zip(up).map(|(v, u)| u * (1.0 - v * v)).collect()]
            }
            Op::Sigmoid => {
                let y = node.tensor.to_vec();
                vec![y.iter().zip(up).map(|(v, u)| u * v * (1.0 - v)).collect()]
            }
            Op::Exp => {
                let y = node.tensor.to_vec();
                vec![y.iter().zip(up).map(|(v, u)| u * v).collect()]
            }
            Op::Log => {
                let x = input(0).to_vec();
                vec![x.iter().zip(up).map(|(v, u)| u / v).collect()]
            }
            Op::Neg => vec![up.iter().map(|u| -u).collect()],
            Op::Scale(c) => vec![up.iter().map(|u| c * u).collect()],
            Op::Concat { axis, split } => {
                let sa = input(0).shape();
                let sb = input(1).shape();
                if sa.len() == 1 || *axis == 0 {
                    let na = input(0).numel();
                    vec![up[..na].to_vec(), up[na..].to_vec()]
                } else {
                    let rows = sa[0];
                    let (ca, cb) = (sa[1], sb[1]);
                    let mut ga = vec![0.0; rows * ca];
                    let mut gb = vec![0.0; rows * cb];
                    debug_assert_eq!(*split, ca);
                    for r in 0..rows {
                        let base = r * (ca + cb);
                        ga[r * ca..(r + 1) * ca].copy_from_slice(&up[base..base + ca]);
                        gb[r * cb..(r + 1) * cb].copy_from_slice(&up[base + ca..base + ca + cb]);
                    }
                    vec![ga, gb]
                }
            }
            Op::Mean => {
                let scale = 1.0 / node.inputs.len() as f64;
                let g: Vec<f64> = up.iter().map(|u| u * scale).collect();
                vec![g; node.inputs.len()]
            }
            Op::Sum => {
                let n = input(0).numel();
                vec![vec![up[0]; n]]
            }
            Op::CrossEntropy { target } => {
                let probs = input(0).with_data(softmax_slice);
                let u = up[0];
                let mut g: Vec<f64> = probs.iter().map(|p| u * p).collect();
                g[*target] -= u;
                vec![g]
            }
            Op::SelectRow { row } => {
                let s = input(0).shape();
                let cols = s[1];
                let mut g = vec![0.0; s[0] * cols];
                g[row * cols..(row + 1) * cols].copy_from_slice(up);
                vec![g]
            }
        }
    }
}

/// Sum a gradient down to a scalar when the forward op broadcast a
/// one-element tensor.
fn reduce_to(g: &[f64], n: usize) -> Vec<f64> {
    if g.len() == n {
        g.to_vec()
    } else {
        debug_assert_eq!(n, 1);
        vec![g.iter().sum()]
    }
}

pub(crate) fn softmax_slice(d: &[f64]) -> Vec<f64> {
    let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = d.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let mut g = Graph::new();
        let eye = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let v = Tensor::new(&[2, 1], vec![3.0, 4.0]).unwrap();
        let out = g.matmul(&eye, &v).unwrap();
        assert_eq!(out.to_vec(), vec![3.0, 4.0]);
        assert_eq!(out.shape(), vec![2, 1]);
    }

    #[test]
    fn matmul_by_hand() {
        let mut g = Graph::new();
        let a = Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(&[2, 1], vec![3.0, 4.0]).unwrap();
        let out = g.matmul(&a, &b).unwrap();
        assert_eq!(out.to_vec(), vec![11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let err = g.matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn softmax_uniform_and_stability() {
        let mut g = Graph::new();
        let x = Tensor::vector(vec![0.0, 0.0, 0.0]);
        let y = g.softmax(&x).unwrap().to_vec();
        for v in &y {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let big = Tensor::vector(vec![1000.0, 1000.0]);
        let y = g.softmax(&big).unwrap().to_vec();
        assert!(y.iter().all(|v| v.is_finite()));
        assert!((y[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_matches_direct_formula() {
        // exp(x_i)/sum exp(x_j) evaluated directly for [1,2,3]
        let mut g = Graph::new();
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let y = g.softmax(&x).unwrap().to_vec();
        let denom = 1f64.exp() + 2f64.exp() + 3f64.exp();
        for (i, v) in y.iter().enumerate() {
            let direct = ((i + 1) as f64).exp() / denom;
            assert!((v - direct).abs() < 1e-15);
        }
        let total: f64 = y.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_empty_is_error() {
        let mut g = Graph::new();
        let x = Tensor::new(&[0], vec![]).unwrap();
        assert!(g.softmax(&x).is_err());
    }

    #[test]
    fn unary_fixed_points() {
        let mut g = Graph::new();
        let zero = Tensor::scalar(0.0);
        assert_eq!(g.tanh(&zero).unwrap().value(), 0.0);
        assert_eq!(g.sigmoid(&zero).unwrap().value(), 0.5);
    }

    #[test]
    fn log_domain_error() {
        let mut g = Graph::new();
        let x = Tensor::vector(vec![1.0, -2.0]);
        assert!(matches!(g.log(&x), Err(TensorError::LogDomain { .. })));
    }

    #[test]
    fn concat_axis0() {
        let mut g = Graph::new();
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![3.0]);
        let out = g.concat(&a, &b, 0).unwrap();
        assert_eq!(out.to_vec(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn mean_of_one_tensor_is_identity() {
        let mut g = Graph::new();
        let a = Tensor::vector(vec![1.5, -2.0]);
        let out = g.mean(std::slice::from_ref(&a)).unwrap();
        assert_eq!(out.to_vec(), a.to_vec());
    }

    #[test]
    fn cross_entropy_uniform_and_confident() {
        let mut g = Graph::new();
        let logits = Tensor::vector(vec![1.0; 4]);
        let loss = g.cross_entropy(&logits, 2).unwrap().value();
        assert!((loss - 4f64.ln()).abs() < 1e-12);

        let confident = Tensor::vector(vec![0.0, 200.0, 0.0]);
        let loss = g.cross_entropy(&confident, 1).unwrap().value();
        assert!(loss.abs() < 1e-12);

        let bad = g.cross_entropy(&confident, 3);
        assert!(matches!(bad, Err(TensorError::IndexOutOfRange { .. })));
    }

    #[test]
    fn backward_identity_and_square() {
        // y = x: dy/dx = 1
        let mut g = Graph::new();
        let x = Tensor::param(&[1], vec![3.0]).unwrap();
        let y = g.scale(&x, 1.0).unwrap();
        g.backward(&y).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0]);

        // y = x * x at x = 3: dy/dx = 6
        let mut g = Graph::new();
        let x = Tensor::param(&[1], vec![3.0]).unwrap();
        let y = g.mul(&x, &x).unwrap();
        g.backward(&y).unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0]);
    }

    #[test]
    fn backward_non_scalar_root_is_error() {
        let mut g = Graph::new();
        let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        let y = g.scale(&x, 2.0).unwrap();
        assert!(matches!(g.backward(&y), Err(TensorError::NonScalarRoot { .. })));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::new();
        let x = Tensor::param(&[1], vec![2.0]).unwrap();
        let y = g.mul(&x, &x).unwrap();
        g.backward(&y).unwrap();
        g.backward(&y).unwrap();
        assert_eq!(x.grad().unwrap(), vec![8.0]); // 2 * dy/dx
    }

    #[test]
    fn scalar_broadcast_mul_grad() {
        let mut g = Graph::new();
        let s = Tensor::param(&[1], vec![2.0]).unwrap();
        let v = Tensor::param(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = g.mul(&s, &v).unwrap();
        assert_eq!(y.to_vec(), vec![2.0, 4.0, 6.0]);
        let total = g.sum(&y).unwrap();
        g.backward(&total).unwrap();
        assert_eq!(s.grad().unwrap(), vec![6.0]); // sum of v
        assert_eq!(v.grad().unwrap(), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn select_row_scatters_grad() {
        let mut g = Graph::new();
        let m = Tensor::param(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let r = g.select_row(&m, 1).unwrap();
        assert_eq!(r.to_vec(), vec![3.0, 4.0]);
        let s = g.sum(&r).unwrap();
        g.backward(&s).unwrap();
        assert_eq!(m.grad().unwrap(), vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }
}
