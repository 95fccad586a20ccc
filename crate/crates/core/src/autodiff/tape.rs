use std::sync::atomic::{AtomicU64, Ordering};

use super::kernels::{gemm_a_bt_acc, gemm_acc, gemm_at_b_acc};
use super::{AutodiffError, Result, Scalar, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

enum Op<S> {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddBias(usize, usize),
    Scale(usize, S),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Sum(usize),
    Mean(usize),
    Reshape(usize),
    Embedding {
        table: usize,
        ids: Vec<u32>,
    },
    TimeStep {
        x: usize,
        t: usize,
    },
    Conv1dSame {
        x: usize,
        kernels: usize,
        bias: usize,
        cols: Vec<S>,
    },
    MaxPool1d {
        x: usize,
        argmax: Vec<usize>,
    },
    Bce {
        p: usize,
        targets: Vec<S>,
        clamp: S,
    },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Execution record for one forward pass.
///
/// Nodes are stored in execution order, which is a topological order of the
/// graph. Gradients are kept for leaves only; intermediate buffers are freed
/// as soon as their backward rule has run.
pub struct Tape<S> {
    id: u64,
    nodes: Vec<Node<S>>,
    grads: Option<Vec<Option<Vec<S>>>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(AutodiffError::ForeignVar);
        }
        Ok(v.index)
    }

    fn needs(&self, inputs: &[usize]) -> bool {
        inputs.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// Records a trainable input.
    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records an input that receives no gradient.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor<S>> {
        Ok(&self.nodes[self.idx(v)?].value)
    }

    fn val(&self, i: usize) -> &Tensor<S> {
        &self.nodes[i].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (av, bv) = (self.val(ia), self.val(ib));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(AutodiffError::Shape {
                op: "matmul",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let mut out = vec![S::zero(); m * n];
        gemm_acc(av.data(), bv.data(), &mut out, m, k, n);
        let rg = self.needs(&[ia, ib]);
        Ok(self.push(Tensor::new([m, n], out)?, Op::MatMul(ia, ib), rg))
    }

    fn same_shape(&self, op: &'static str, a: usize, b: usize) -> Result<()> {
        if self.val(a).shape() != self.val(b).shape() {
            return Err(AutodiffError::Shape {
                op,
                left: self.val(a).shape().to_vec(),
                right: self.val(b).shape().to_vec(),
            });
        }
        Ok(())
    }

    fn zip_op(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(S, S) -> S,
        op: fn(usize, usize) -> Op<S>,
    ) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        self.same_shape(name, ia, ib)?;
        let (av, bv) = (self.val(ia), self.val(ib));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.needs(&[ia, ib]);
        Ok(self.push(value, op(ia, ib), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("sub", a, b, |x, y| x - y, Op::Sub)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("mul", a, b, |x, y| x * y, Op::Mul)
    }

    /// Adds a length-n bias (shape `[n]` or `[1, n]`) to every row of an
    /// `m × n` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (ix, ib) = (self.idx(x)?, self.idx(bias)?);
        let (xv, bv) = (self.val(ix), self.val(ib));
        let n = bv.len();
        let ok_bias = bv.rank() == 1 || (bv.rank() == 2 && bv.shape()[0] == 1);
        if xv.rank() != 2 || !ok_bias || xv.shape()[1] != n {
            return Err(AutodiffError::Shape {
                op: "add_bias",
                left: xv.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let mut data = xv.data().to_vec();
        for row in data.chunks_exact_mut(n) {
            for (o, &b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.needs(&[ix, ib]);
        Ok(self.push(value, Op::AddBias(ix, ib), rg))
    }

    pub fn scale(&mut self, x: Var, c: S) -> Result<Var> {
        let ix = self.idx(x)?;
        let value = self.val(ix).map(|v| v * c);
        let rg = self.needs(&[ix]);
        Ok(self.push(value, Op::Scale(ix, c), rg))
    }

    fn unary(&mut self, x: Var, f: impl Fn(S) -> S, op: fn(usize) -> Op<S>) -> Result<Var> {
        let ix = self.idx(x)?;
        let value = self.val(ix).map(f);
        let rg = self.needs(&[ix]);
        Ok(self.push(value, op(ix), rg))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, sigmoid, Op::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, |v| v.tanh(), Op::Tanh)
    }

    /// max(x, 0); the derivative at 0 is taken as 0.
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, |v| if v > S::zero() { v } else { S::zero() }, Op::Relu)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let s = self.val(ix).data().iter().copied().sum();
        let rg = self.needs(&[ix]);
        Ok(self.push(Tensor::scalar(s), Op::Sum(ix), rg))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let v = self.val(ix);
        let n = S::from_f64(v.len().max(1) as f64);
        let s: S = v.data().iter().copied().sum();
        let rg = self.needs(&[ix]);
        Ok(self.push(Tensor::scalar(s / n), Op::Mean(ix), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let ix = self.idx(x)?;
        let value = self.val(ix).clone().reshape(shape)?;
        let rg = self.needs(&[ix]);
        Ok(self.push(value, Op::Reshape(ix), rg))
    }

    /// Row lookup: `ids` is a row-major `batch × steps` matrix into a
    /// `rows × dim` table; the result is `batch × steps × dim`. Row 0 never
    /// receives gradient.
    pub fn embedding(&mut self, table: Var, ids: &[u32], batch: usize, steps: usize) -> Result<Var> {
        let it = self.idx(table)?;
        let tv = self.val(it);
        if tv.rank() != 2 {
            return Err(AutodiffError::Shape {
                op: "embedding",
                left: tv.shape().to_vec(),
                right: vec![batch, steps],
            });
        }
        if ids.len() != batch * steps {
            return Err(AutodiffError::Invalid {
                op: "embedding",
                msg: format!("{} ids for a {batch}×{steps} batch", ids.len()),
            });
        }
        let (rows, dim) = (tv.shape()[0], tv.shape()[1]);
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= rows) {
            return Err(AutodiffError::Invalid {
                op: "embedding",
                msg: format!("id {bad} outside table of {rows} rows"),
            });
        }
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            let id = id as usize;
            out.extend_from_slice(&tv.data()[id * dim..(id + 1) * dim]);
        }
        let value = Tensor::new([batch, steps, dim], out)?;
        let rg = self.needs(&[it]);
        Ok(self.push(
            value,
            Op::Embedding {
                table: it,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Slice `x[:, t, :]` of a `batch × steps × dim` tensor.
    pub fn time_step(&mut self, x: Var, t: usize) -> Result<Var> {
        let ix = self.idx(x)?;
        let xv = self.val(ix);
        if xv.rank() != 3 || t >= xv.shape()[1] {
            return Err(AutodiffError::Invalid {
                op: "time_step",
                msg: format!("step {t} of tensor shaped {:?}", xv.shape()),
            });
        }
        let (b, steps, d) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let mut out = Vec::with_capacity(b * d);
        for bi in 0..b {
            let off = (bi * steps + t) * d;
            out.extend_from_slice(&xv.data()[off..off + d]);
        }
        let value = Tensor::new([b, d], out)?;
        let rg = self.needs(&[ix]);
        Ok(self.push(value, Op::TimeStep { x: ix, t }, rg))
    }

    /// Same-padded 1-D convolution over the time axis.
    ///
    /// `x` is `batch × steps × c_in`, `kernels` is `filters × width × c_in`
    /// with odd `width`, `bias` has length `filters`. The output is
    /// `batch × steps × filters`.
    pub fn conv1d_same(&mut self, x: Var, kernels: Var, bias: Var) -> Result<Var> {
        let (ix, ik, ib) = (self.idx(x)?, self.idx(kernels)?, self.idx(bias)?);
        let (xv, kv, bv) = (self.val(ix), self.val(ik), self.val(ib));
        if xv.rank() != 3 || kv.rank() != 3 || xv.shape()[2] != kv.shape()[2] {
            return Err(AutodiffError::Shape {
                op: "conv1d_same",
                left: xv.shape().to_vec(),
                right: kv.shape().to_vec(),
            });
        }
        let (b, steps, c) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let (filters, width) = (kv.shape()[0], kv.shape()[1]);
        if width % 2 == 0 {
            return Err(AutodiffError::Invalid {
                op: "conv1d_same",
                msg: format!("kernel width {width} is even; same padding needs an odd width"),
            });
        }
        if bv.len() != filters {
            return Err(AutodiffError::Shape {
                op: "conv1d_same",
                left: kv.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let cols = im2col(xv.data(), b, steps, c, width);
        let rows = b * steps;
        let mut out = vec![S::zero(); rows * filters];
        for row in out.chunks_exact_mut(filters) {
            row.copy_from_slice(bv.data());
        }
        gemm_a_bt_acc(&cols, kv.data(), &mut out, rows, width * c, filters);
        let value = Tensor::new([b, steps, filters], out)?;
        let rg = self.needs(&[ix, ik, ib]);
        Ok(self.push(
            value,
            Op::Conv1dSame {
                x: ix,
                kernels: ik,
                bias: ib,
                cols,
            },
            rg,
        ))
    }

    /// Windowed maximum over the time axis of a `batch × steps × channels`
    /// tensor. Ties resolve to the earliest position.
    pub fn maxpool1d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let ix = self.idx(x)?;
        let xv = self.val(ix);
        if xv.rank() != 3 {
            return Err(AutodiffError::Invalid {
                op: "maxpool1d",
                msg: format!("expected rank-3 input, got {:?}", xv.shape()),
            });
        }
        let (b, steps, ch) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        if window == 0 || stride == 0 {
            return Err(AutodiffError::Invalid {
                op: "maxpool1d",
                msg: "window and stride must be at least 1".into(),
            });
        }
        if window > steps {
            return Err(AutodiffError::Invalid {
                op: "maxpool1d",
                msg: format!("window {window} exceeds sequence length {steps}"),
            });
        }
        let out_steps = (steps - window) / stride + 1;
        let data = xv.data();
        let mut out = Vec::with_capacity(b * out_steps * ch);
        let mut argmax = Vec::with_capacity(b * out_steps * ch);
        for bi in 0..b {
            for o in 0..out_steps {
                let start = (bi * steps + o * stride) * ch;
                for f in 0..ch {
                    let mut best = start + f;
                    for w in 1..window {
                        let cand = start + w * ch + f;
                        if data[cand] > data[best] {
                            best = cand;
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new([b, out_steps, ch], out)?;
        let rg = self.needs(&[ix]);
        Ok(self.push(value, Op::MaxPool1d { x: ix, argmax }, rg))
    }

    /// Mean binary cross-entropy of probabilities `p` against 0/1 `targets`,
    /// with `p` clamped to `[clamp, 1 - clamp]`.
    pub fn binary_cross_entropy(&mut self, p: Var, targets: &[S], clamp: S) -> Result<Var> {
        let ip = self.idx(p)?;
        let pv = self.val(ip);
        if pv.len() != targets.len() {
            return Err(AutodiffError::Shape {
                op: "binary_cross_entropy",
                left: pv.shape().to_vec(),
                right: vec![targets.len()],
            });
        }
        let n = S::from_f64(targets.len().max(1) as f64);
        let hi = S::one() - clamp;
        let total: S = pv
            .data()
            .iter()
            .zip(targets)
            .map(|(&p, &y)| {
                let pc = p.max(clamp).min(hi);
                -(y * pc.ln() + (S::one() - y) * (S::one() - pc).ln())
            })
            .sum();
        let rg = self.needs(&[ip]);
        Ok(self.push(
            Tensor::scalar(total / n),
            Op::Bce {
                p: ip,
                targets: targets.to_vec(),
                clamp,
            },
            rg,
        ))
    }

    /// Propagates gradients from a scalar `loss` to every node that requires
    /// them. Leaves that do not reach the loss get zero gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let il = self.idx(loss)?;
        if self.grads.is_some() {
            return Err(AutodiffError::BackwardTwice);
        }
        let lv = self.val(il);
        if lv.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[il] = Some(vec![S::one()]);

        for i in (0..=il).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads);
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad && grads[i].is_none() {
                grads[i] = Some(vec![S::zero(); node.value.len()]);
            }
        }
        self.grads = Some(grads);
        Ok(())
    }

    /// Gradient of the last backward pass for a leaf that requires grad.
    pub fn grad(&self, v: Var) -> Result<Option<&[S]>> {
        let i = self.idx(v)?;
        Ok(self
            .grads
            .as_ref()
            .and_then(|g| g[i].as_deref()))
    }

    pub fn take_grad(&mut self, v: Var) -> Result<Option<Vec<S>>> {
        let i = self.idx(v)?;
        Ok(self.grads.as_mut().and_then(|g| g[i].take()))
    }

    pub fn reset_grads(&mut self) {
        self.grads = None;
    }

    fn backward_node(&self, i: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.nodes[*a].requires_grad {
                    gemm_a_bt_acc(g, bv.data(), self.acc(grads, *a), m, n, k);
                }
                if self.nodes[*b].requires_grad {
                    gemm_at_b_acc(av.data(), g, self.acc(grads, *b), m, k, n);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.iter().copied());
                self.accumulate(grads, *b, g.iter().copied());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.iter().copied());
                self.accumulate(grads, *b, g.iter().map(|&v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.val(*a).data(), self.val(*b).data());
                self.accumulate(grads, *a, g.iter().zip(bv).map(|(&g, &y)| g * y));
                self.accumulate(grads, *b, g.iter().zip(av).map(|(&g, &x)| g * x));
            }
            Op::AddBias(x, b) => {
                self.accumulate(grads, *x, g.iter().copied());
                if self.nodes[*b].requires_grad {
                    let n = self.val(*b).len();
                    let gb = self.acc(grads, *b);
                    for row in g.chunks_exact(n) {
                        for (o, &v) in gb.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Scale(x, c) => self.accumulate(grads, *x, g.iter().map(|&v| v * *c)),
            Op::Sigmoid(x) => self.accumulate(
                grads,
                *x,
                g.iter()
                    .zip(out.data())
                    .map(|(&g, &y)| g * y * (S::one() - y)),
            ),
            Op::Tanh(x) => self.accumulate(
                grads,
                *x,
                g.iter().zip(out.data()).map(|(&g, &y)| g * (S::one() - y * y)),
            ),
            Op::Relu(x) => self.accumulate(
                grads,
                *x,
                g.iter()
                    .zip(out.data())
                    .map(|(&g, &y)| if y > S::zero() { g } else { S::zero() }),
            ),
            Op::Sum(x) => {
                let n = self.val(*x).len();
                self.accumulate(grads, *x, std::iter::repeat_n(g[0], n));
            }
            Op::Mean(x) => {
                let n = self.val(*x).len();
                let share = g[0] / S::from_f64(n.max(1) as f64);
                self.accumulate(grads, *x, std::iter::repeat_n(share, n));
            }
            Op::Reshape(x) => self.accumulate(grads, *x, g.iter().copied()),
            Op::Embedding { table, ids } => {
                if self.nodes[*table].requires_grad {
                    let dim = self.val(*table).shape()[1];
                    let gt = self.acc(grads, *table);
                    for (&id, grow) in ids.iter().zip(g.chunks_exact(dim)) {
                        if id == 0 {
                            continue;
                        }
                        let id = id as usize;
                        for (o, &v) in gt[id * dim..(id + 1) * dim].iter_mut().zip(grow) {
                            *o += v;
                        }
                    }
                }
            }
            Op::TimeStep { x, t } => {
                if self.nodes[*x].requires_grad {
                    let shape = self.val(*x).shape().to_vec();
                    let (b, steps, d) = (shape[0], shape[1], shape[2]);
                    let gx = self.acc(grads, *x);
                    for bi in 0..b {
                        let off = (bi * steps + t) * d;
                        for (o, &v) in gx[off..off + d].iter_mut().zip(&g[bi * d..(bi + 1) * d]) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Conv1dSame {
                x,
                kernels,
                bias,
                cols,
            } => {
                let shape = self.val(*x).shape().to_vec();
                let (b, steps, c) = (shape[0], shape[1], shape[2]);
                let kv = self.val(*kernels);
                let (filters, width) = (kv.shape()[0], kv.shape()[1]);
                let rows = b * steps;
                if self.nodes[*bias].requires_grad {
                    let gb = self.acc(grads, *bias);
                    for row in g.chunks_exact(filters) {
                        for (o, &v) in gb.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                }
                if self.nodes[*kernels].requires_grad {
                    gemm_at_b_acc(g, cols, self.acc(grads, *kernels), rows, filters, width * c);
                }
                if self.nodes[*x].requires_grad {
                    let mut dcols = vec![S::zero(); rows * width * c];
                    gemm_acc(g, kv.data(), &mut dcols, rows, filters, width * c);
                    col2im_acc(&dcols, self.acc(grads, *x), b, steps, c, width);
                }
            }
            Op::MaxPool1d { x, argmax } => {
                if self.nodes[*x].requires_grad {
                    let gx = self.acc(grads, *x);
                    for (&src, &v) in argmax.iter().zip(g) {
                        gx[src] += v;
                    }
                }
            }
            Op::Bce { p, targets, clamp } => {
                let n = S::from_f64(targets.len().max(1) as f64);
                let hi = S::one() - *clamp;
                let pv = self.val(*p).data();
                self.accumulate(
                    grads,
                    *p,
                    pv.iter().zip(targets).map(|(&p, &y)| {
                        let pc = p.max(*clamp).min(hi);
                        g[0] * (pc - y) / (pc * (S::one() - pc)) / n
                    }),
                );
            }
        }
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<S>>], i: usize) -> &'g mut Vec<S> {
        let n = self.nodes[i].value.len();
        grads[i].get_or_insert_with(|| vec![S::zero(); n])
    }

    fn accumulate(&self, grads: &mut [Option<Vec<S>>], i: usize, contrib: impl Iterator<Item = S>) {
        if !self.nodes[i].requires_grad {
            return;
        }
        for (o, v) in self.acc(grads, i).iter_mut().zip(contrib) {
            *o += v;
        }
    }
}

pub(crate) fn sigmoid<S: Scalar>(v: S) -> S {
    if v >= S::zero() {
        S::one() / (S::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::one() + e)
    }
}

/// Rows are (batch, step); columns are (tap, channel).
fn im2col<S: Scalar>(x: &[S], b: usize, steps: usize, c: usize, width: usize) -> Vec<S> {
    let half = (width - 1) / 2;
    let mut cols = vec![S::zero(); b * steps * width * c];
    for bi in 0..b {
        for t in 0..steps {
            let row = &mut cols[(bi * steps + t) * width * c..(bi * steps + t + 1) * width * c];
            for j in 0..width {
                let src = t as isize + j as isize - half as isize;
                if src < 0 || src >= steps as isize {
                    continue;
                }
                let off = (bi * steps + src as usize) * c;
                row[j * c..(j + 1) * c].copy_from_slice(&x[off..off + c]);
            }
        }
    }
    cols
}

fn col2im_acc<S: Scalar>(cols: &[S], gx: &mut [S], b: usize, steps: usize, c: usize, width: usize) {
    let half = (width - 1) / 2;
    for bi in 0..b {
        for t in 0..steps {
            let row = &cols[(bi * steps + t) * width * c..(bi * steps + t + 1) * width * c];
            for j in 0..width {
                let src = t as isize + j as isize - half as isize;
                if src < 0 || src >= steps as isize {
                    continue;
                }
                let off = (bi * steps + src as usize) * c;
                for (o, &v) in gx[off..off + c].iter_mut().zip(&row[j * c..(j + 1) * c]) {
                    *o += v;
                }
            }
        }
    }
}
