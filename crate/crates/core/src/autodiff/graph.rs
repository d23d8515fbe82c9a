use super::tensor::strides;
use super::{Tensor, TensorError};

/// Handle to a tensor recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive operations, for callers that dispatch on an operation value
/// rather than calling the typed methods on [`Graph`] directly.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    MatMul,
    Add,
    Sub,
    ElementwiseMul,
    Concat { axis: usize },
    Slice { axis: usize, start: usize, len: usize },
    Sum,
    SumAxis { axis: usize },
    Mean,
    Sigmoid,
    Tanh,
    Abs,
    Square,
    Log,
    Scale(f64),
    AddScalar(f64),
    Clamp { lo: f64, hi: f64 },
    Broadcast { shape: Vec<usize> },
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    Sum(Var),
    SumAxis(Var, usize),
    Mean(Var),
    Sigmoid(Var),
    Tanh(Var),
    Abs(Var),
    Square(Var),
    Log(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Clamp(Var, f64, f64),
    Broadcast(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    // true when any leaf upstream requires a gradient
    tracked: bool,
    grad: Option<Vec<f64>>,
}

/// Tape of recorded operations. Nodes are appended in evaluation order, so the
/// tape is topologically sorted by construction and `backward` walks it in
/// reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    /// Records an input tensor.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad, requires_grad)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, present once `backward` has run.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, tracked: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            tracked,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tracked);
        self.push(value, op, false, tracked)
    }

    /// Applies `kind` to `inputs`; the typed methods below are equivalent.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var, TensorError> {
        let arity = |n: usize| -> Result<(), TensorError> {
            if inputs.len() == n {
                Ok(())
            } else {
                Err(TensorError::Arity {
                    op: "apply",
                    expected: n,
                    got: inputs.len(),
                })
            }
        };
        match kind {
            OpKind::Concat { axis } => self.concat(inputs, axis),
            OpKind::MatMul | OpKind::Add | OpKind::Sub | OpKind::ElementwiseMul => {
                arity(2)?;
                let (a, b) = (inputs[0], inputs[1]);
                match kind {
                    OpKind::MatMul => self.matmul(a, b),
                    OpKind::Add => self.add(a, b),
                    OpKind::Sub => self.sub(a, b),
                    _ => self.mul(a, b),
                }
            }
            unary => {
                arity(1)?;
                let x = inputs[0];
                match unary {
                    OpKind::Slice { axis, start, len } => self.slice(x, axis, start, len),
                    OpKind::Sum => Ok(self.sum(x)),
                    OpKind::SumAxis { axis } => self.sum_axis(x, axis),
                    OpKind::Mean => self.mean(x),
                    OpKind::Sigmoid => Ok(self.sigmoid(x)),
                    OpKind::Tanh => Ok(self.tanh(x)),
                    OpKind::Abs => Ok(self.abs(x)),
                    OpKind::Square => Ok(self.square(x)),
                    OpKind::Log => self.log(x),
                    OpKind::Scale(c) => Ok(self.scale(x, c)),
                    OpKind::AddScalar(c) => Ok(self.add_scalar(x, c)),
                    OpKind::Clamp { lo, hi } => Ok(self.clamp(x, lo, hi)),
                    OpKind::Broadcast { shape } => self.broadcast(x, &shape),
                    _ => unreachable!(),
                }
            }
        }
    }

    /// `[m × k] · [k × n] → [m × n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, n) = match (ta.dims2(), tb.dims2()) {
            (Some((m, k)), Some((k2, n))) if k == k2 => (m, k, n),
            _ => return Err(TensorError::shape("matmul", ta.shape(), tb.shape())),
        };
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.record(value, Op::MatMul(a, b), &[a, b]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            Ok(())
        } else {
            Err(TensorError::shape(op, sa, sb))
        }
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("shapes checked");
        self.record(value, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("add", a, b)?;
        Ok(self.zip(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("elementwise_mul", a, b)?;
        Ok(self.zip(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).map(f);
        self.record(value, op, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, f64::abs, Op::Abs(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, Op::AddScalar(x))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp(x, lo, hi))
    }

    /// Natural log; every input element must be strictly positive.
    pub fn log(&mut self, x: Var) -> Result<Var, TensorError> {
        if let Some(&bad) = self.value(x).data().iter().find(|v| !(**v > 0.0)) {
            return Err(TensorError::Domain {
                op: "log",
                value: bad,
            });
        }
        Ok(self.unary(x, f64::ln, Op::Log(x)))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.record(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, TensorError> {
        let t = self.value(x);
        if t.is_empty() {
            return Err(TensorError::Empty { op: "mean" });
        }
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        Ok(self.record(Tensor::scalar(m), Op::Mean(x), &[x]))
    }

    /// Sums a rank-2 tensor along `axis`, keeping that axis with extent 1.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        let t = self.value(x);
        let (r, c) = match t.dims2() {
            Some(d) if axis < 2 => d,
            _ => {
                return Err(TensorError::Axis {
                    op: "sum_axis",
                    axis,
                    shape: t.shape().to_vec(),
                })
            }
        };
        let value = if axis == 1 {
            let data = (0..r).map(|i| t.row(i).iter().sum()).collect();
            Tensor::new(vec![r, 1], data)?
        } else {
            let mut data = vec![0.0; c];
            for i in 0..r {
                for (acc, v) in data.iter_mut().zip(t.row(i)) {
                    *acc += v;
                }
            }
            Tensor::new(vec![1, c], data)?
        };
        Ok(self.record(value, Op::SumAxis(x, axis), &[x]))
    }

    /// Joins tensors of equal rank along `axis`; other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = match inputs.first() {
            Some(v) => self.shape(*v).to_vec(),
            None => return Err(TensorError::Empty { op: "concat" }),
        };
        if axis >= first.len() {
            return Err(TensorError::Axis {
                op: "concat",
                axis,
                shape: first,
            });
        }
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for v in inputs {
            let s = self.shape(*v);
            let conforms = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !conforms {
                return Err(TensorError::shape("concat", &first, s));
            }
            out_shape[axis] += s[axis];
        }
        // outer = product of dims before axis; each input contributes a
        // contiguous chunk of dims[axis..] per outer index
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let total: usize = out_shape.iter().product();
        let mut data = Vec::with_capacity(total);
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let value = Tensor::new(out_shape, data)?;
        Ok(self.record(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// `len` consecutive indices along `axis` starting at `start`.
    pub fn slice(
        &mut self,
        x: Var,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<Var, TensorError> {
        let t = self.value(x);
        let shape = t.shape();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(TensorError::Slice {
                shape: shape.to_vec(),
                axis,
                start,
                len,
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            data.extend_from_slice(&t.data()[base..base + len * inner]);
        }
        let value = Tensor::new(out_shape, data)?;
        Ok(self.record(value, Op::Slice { input: x, axis, start }, &[x]))
    }

    /// Explicit broadcast to `shape`, aligning trailing dimensions. Each
    /// source extent must equal the target extent or be 1.
    pub fn broadcast(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let src = self.shape(x).to_vec();
        let map = broadcast_map(&src, shape)
            .ok_or_else(|| TensorError::shape("broadcast", &src, shape))?;
        let t = self.value(x);
        let data = map.iter().map(|&i| t.data()[i]).collect();
        let value = Tensor::new(shape.to_vec(), data)?;
        Ok(self.record(value, Op::Broadcast(x), &[x]))
    }

    /// Reverse pass from a scalar `loss`. Gradients of leaves that require
    /// them are added to whatever they already hold; call
    /// [`Graph::zero_grad`] to reset.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: lt.shape().to_vec(),
            });
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            if let Op::Leaf = node.op {
                if node.requires_grad {
                    adj[i] = Some(g);
                }
                continue;
            }
            self.propagate(i, &g, &mut adj);
        }

        for (i, node) in self.nodes.iter_mut().enumerate() {
            if !node.requires_grad {
                continue;
            }
            let incoming = adj.get_mut(i).and_then(Option::take);
            let acc = node.grad.get_or_insert_with(|| vec![0.0; node.value.len()]);
            if let Some(g) = incoming {
                for (a, v) in acc.iter_mut().zip(g) {
                    *a += v;
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = ta.dims2().unwrap();
                let n = tb.dims2().unwrap().1;
                if self.tracked(*a) {
                    // dA = dC · Bᵀ
                    let slot = slot(adj, *a, m * k);
                    gemm(m, n, k, g, false, tb.data(), true, slot);
                }
                if self.tracked(*b) {
                    // dB = Aᵀ · dC
                    let slot = slot(adj, *b, k * n);
                    gemm(k, m, n, ta.data(), true, g, false, slot);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(adj, *a, g, |gi, _| gi);
                self.accumulate(adj, *b, g, |gi, _| gi);
            }
            Op::Sub(a, b) => {
                self.accumulate(adj, *a, g, |gi, _| gi);
                self.accumulate(adj, *b, g, |gi, _| -gi);
            }
            Op::Mul(a, b) => {
                if self.tracked(*a) {
                    let other = self.value(*b).data();
                    let s = slot(adj, *a, g.len());
                    for ((s, gi), o) in s.iter_mut().zip(g).zip(other) {
                        *s += gi * o;
                    }
                }
                if self.tracked(*b) {
                    let other = self.value(*a).data();
                    let s = slot(adj, *b, g.len());
                    for ((s, gi), o) in s.iter_mut().zip(g).zip(other) {
                        *s += gi * o;
                    }
                }
            }
            Op::Sigmoid(x) => self.accumulate(adj, *x, g, |gi, j| {
                let y = out[j];
                gi * y * (1.0 - y)
            }),
            Op::Tanh(x) => self.accumulate(adj, *x, g, |gi, j| {
                let y = out[j];
                gi * (1.0 - y * y)
            }),
            Op::Abs(x) => {
                let xv = self.value(*x).data();
                self.accumulate(adj, *x, g, |gi, j| {
                    let v = xv[j];
                    if v > 0.0 {
                        gi
                    } else if v < 0.0 {
                        -gi
                    } else {
                        0.0
                    }
                })
            }
            Op::Square(x) => {
                let xv = self.value(*x).data();
                self.accumulate(adj, *x, g, |gi, j| 2.0 * xv[j] * gi)
            }
            Op::Log(x) => {
                let xv = self.value(*x).data();
                self.accumulate(adj, *x, g, |gi, j| gi / xv[j])
            }
            Op::Scale(x, c) => self.accumulate(adj, *x, g, |gi, _| gi * c),
            Op::AddScalar(x) => self.accumulate(adj, *x, g, |gi, _| gi),
            Op::Clamp(x, lo, hi) => {
                let xv = self.value(*x).data();
                self.accumulate(adj, *x, g, |gi, j| {
                    let v = xv[j];
                    if v >= *lo && v <= *hi {
                        gi
                    } else {
                        0.0
                    }
                })
            }
            Op::Sum(x) => {
                let g0 = g[0];
                self.accumulate(adj, *x, &[], |_, _| g0);
            }
            Op::Mean(x) => {
                let g0 = g[0] / self.value(*x).len() as f64;
                self.accumulate(adj, *x, &[], |_, _| g0);
            }
            Op::SumAxis(x, axis) => {
                let (r, c) = self.value(*x).dims2().unwrap();
                if !self.tracked(*x) {
                    return;
                }
                let s = slot(adj, *x, r * c);
                for i in 0..r {
                    for j in 0..c {
                        s[i * c + j] += if *axis == 1 { g[i] } else { g[j] };
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let shape = node.value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let row = shape[*axis] * inner;
                let mut offset = 0;
                for v in inputs {
                    let chunk = self.shape(*v)[*axis] * inner;
                    if self.tracked(*v) {
                        let s = slot(adj, *v, outer * chunk);
                        for o in 0..outer {
                            let src = &g[o * row + offset..o * row + offset + chunk];
                            for (d, x) in s[o * chunk..(o + 1) * chunk].iter_mut().zip(src) {
                                *d += x;
                            }
                        }
                    }
                    offset += chunk;
                }
            }
            Op::Slice { input, axis, start } => {
                if !self.tracked(*input) {
                    return;
                }
                let in_shape = self.shape(*input);
                let len = node.value.shape()[*axis];
                let outer: usize = in_shape[..*axis].iter().product();
                let inner: usize = in_shape[axis + 1..].iter().product();
                let total = in_shape.iter().product();
                let s = slot(adj, *input, total);
                for o in 0..outer {
                    let base = (o * in_shape[*axis] + start) * inner;
                    let src = &g[o * len * inner..(o + 1) * len * inner];
                    for (d, x) in s[base..base + len * inner].iter_mut().zip(src) {
                        *d += x;
                    }
                }
            }
            Op::Broadcast(x) => {
                if !self.tracked(*x) {
                    return;
                }
                let src = self.shape(*x);
                let map = broadcast_map(src, node.value.shape()).unwrap();
                let s = slot(adj, *x, src.iter().product());
                for (gi, &j) in g.iter().zip(&map) {
                    s[j] += gi;
                }
            }
        }
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Adds `f(g[j], j)` into the adjoint of `x` element-wise. An empty `g`
    /// means the rule ignores the upstream gradient (reductions).
    fn accumulate(
        &self,
        adj: &mut [Option<Vec<f64>>],
        x: Var,
        g: &[f64],
        f: impl Fn(f64, usize) -> f64,
    ) {
        if !self.tracked(x) {
            return;
        }
        let n = self.value(x).len();
        let s = slot(adj, x, n);
        if g.is_empty() {
            for (j, d) in s.iter_mut().enumerate() {
                *d += f(0.0, j);
            }
        } else {
            for (j, (d, gi)) in s.iter_mut().zip(g).enumerate() {
                *d += f(*gi, j);
            }
        }
    }
}

fn slot(adj: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    adj[v.0].get_or_insert_with(|| vec![0.0; len])
}

/// For each element of `target`, the flat index of the source element it
/// copies. `None` when shapes do not broadcast.
fn broadcast_map(src: &[usize], target: &[usize]) -> Option<Vec<usize>> {
    if src.len() > target.len() {
        return None;
    }
    let lead = target.len() - src.len();
    for (i, &s) in src.iter().enumerate() {
        if s != 1 && s != target[lead + i] {
            return None;
        }
    }
    let src_strides = strides(src);
    let total: usize = target.iter().product();
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; target.len()];
    for _ in 0..total {
        let mut flat = 0;
        for (i, &s) in src.iter().enumerate() {
            if s != 1 {
                flat += idx[lead + i] * src_strides[i];
            }
        }
        map.push(flat);
        for d in (0..target.len()).rev() {
            idx[d] += 1;
            if idx[d] < target[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Some(map)
}

/// `c += op(a) · op(b)` where `op` optionally transposes a row-major operand.
/// `op(a)` is `[m × k]`, `op(b)` is `[k × n]`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths cover every index addressed by the strides above,
    // and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
