use std::sync::atomic::{AtomicU64, Ordering};

use super::{accumulate, Tensor};
use crate::error::{Error, Result};

static TAPE_COUNTER: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`]. Copyable; only valid with
/// the tape that created it, which is enforced on every use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// How the right operand of a binary elementwise op lines up with the
/// left one. Only exact match, scalar and trailing-axis row are
/// supported; anything else is a shape error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bcast {
    Same,
    ScalarRhs,
    RowRhs,
}

#[derive(Debug, Clone)]
enum Op {
    /// Trainable parameter; receives a gradient (zero if unreached).
    Leaf,
    /// Constant data; participates in forward only.
    Input,
    Matmul { a: usize, b: usize },
    Add { a: usize, b: usize, bcast: Bcast },
    Sub { a: usize, b: usize, bcast: Bcast },
    Mul { a: usize, b: usize, bcast: Bcast },
    AddScalar { a: usize },
    MulScalar { a: usize, c: f64 },
    Neg { a: usize },
    Exp { a: usize },
    Log { a: usize },
    Relu { a: usize },
    Sigmoid { a: usize },
    Tanh { a: usize },
    Softmax { a: usize },
    SumAll { a: usize },
    MeanAll { a: usize },
    Reshape { a: usize },
    SliceCols { a: usize, start: usize },
    ConcatCols { parts: Vec<usize> },
    StackSteps { parts: Vec<usize> },
    Conv1d { x: usize, w: usize, b: usize, stride: usize, padding: usize },
    MaxPool1d { x: usize, switches: Vec<usize> },
    Gap { x: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Append-only record of a computation. Each operation pushes one node
/// holding its result, so node order is a topological order and the
/// backward pass is a single reverse sweep.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            id: TAPE_COUNTER.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn lookup(&self, v: Var) -> Result<&Tensor> {
        if v.tape != self.id {
            return Err(Error::Tape(format!(
                "variable belongs to tape {} but was used with tape {}",
                v.tape, self.id
            )));
        }
        Ok(&self.nodes[v.index].value)
    }

    /// Current value of a recorded variable.
    pub fn value(&self, v: Var) -> Result<&Tensor> {
        self.lookup(v)
    }

    /// Records a trainable tensor. Backward will produce a gradient for
    /// it, zero-valued if the objective does not depend on it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records constant data. No gradient is tracked for inputs.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.lookup(a)?, self.lookup(b)?);
        if va.rank() != 2 || vb.rank() != 2 || va.shape()[1] != vb.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = va.data()[i * k + p];
                let brow = &vb.data()[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aip * brow[j];
                }
            }
        }
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, Op::Matmul { a: a.index, b: b.index }))
    }

    fn resolve_bcast(
        op: &'static str,
        lhs: &[usize],
        rhs: &[usize],
        commutative: bool,
    ) -> Result<(bool, Bcast)> {
        let err = || Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        };
        let numel = |s: &[usize]| s.iter().product::<usize>();
        let is_row_of = |row: &[usize], of: &[usize]| {
            let n = match row {
                [n] => *n,
                [1, n] => *n,
                _ => return false,
            };
            of.len() >= 2 && *of.last().unwrap() == n
        };
        if lhs == rhs {
            Ok((false, Bcast::Same))
        } else if numel(rhs) == 1 {
            Ok((false, Bcast::ScalarRhs))
        } else if numel(lhs) == 1 && commutative {
            Ok((true, Bcast::ScalarRhs))
        } else if is_row_of(rhs, lhs) {
            Ok((false, Bcast::RowRhs))
        } else if is_row_of(lhs, rhs) && commutative {
            Ok((true, Bcast::RowRhs))
        } else {
            Err(err())
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        commutative: bool,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(usize, usize, Bcast) -> Op,
    ) -> Result<Var> {
        let (sa, sb) = (
            self.lookup(a)?.shape().to_vec(),
            self.lookup(b)?.shape().to_vec(),
        );
        let (swap, bcast) = Self::resolve_bcast(name, &sa, &sb, commutative)?;
        let (a, b) = if swap { (b, a) } else { (a, b) };
        let (va, vb) = (&self.nodes[a.index].value, &self.nodes[b.index].value);
        let data = match bcast {
            Bcast::Same => va
                .data()
                .iter()
                .zip(vb.data())
                .map(|(&x, &y)| f(x, y))
                .collect(),
            Bcast::ScalarRhs => {
                let s = vb.data()[0];
                va.data().iter().map(|&x| f(x, s)).collect()
            }
            Bcast::RowRhs => {
                let n = vb.numel();
                va.data()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| f(x, vb.data()[i % n]))
                    .collect()
            }
        };
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, make(a.index, b.index, bcast)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, true, |x, y| x + y, |a, b, bcast| Op::Add { a, b, bcast })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, false, |x, y| x - y, |a, b, bcast| Op::Sub { a, b, bcast })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, true, |x, y| x * y, |a, b, bcast| Op::Mul { a, b, bcast })
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.lookup(a)?.map(|x| x + c);
        Ok(self.push(value, Op::AddScalar { a: a.index }))
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.lookup(a)?.map(|x| x * c);
        Ok(self.push(value, Op::MulScalar { a: a.index, c }))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        let value = self.lookup(a)?.map(|x| -x);
        Ok(self.push(value, Op::Neg { a: a.index }))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = self.lookup(a)?.map(f64::exp);
        Ok(self.push(value, Op::Exp { a: a.index }))
    }

    /// Natural log. The entire input must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        let va = self.lookup(a)?;
        if va.data().iter().any(|&x| x <= 0.0) {
            return Err(Error::Domain("log of a non-positive value".into()));
        }
        let value = va.map(f64::ln);
        Ok(self.push(value, Op::Log { a: a.index }))
    }

    /// Rectifier. The derivative at exactly zero is taken as zero.
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.lookup(a)?.map(|x| x.max(0.0));
        Ok(self.push(value, Op::Relu { a: a.index }))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.lookup(a)?.map(stable_sigmoid);
        Ok(self.push(value, Op::Sigmoid { a: a.index }))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.lookup(a)?.map(f64::tanh);
        Ok(self.push(value, Op::Tanh { a: a.index }))
    }

    /// Softmax over the trailing axis with max-subtraction, so large
    /// logits cannot overflow.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let va = self.lookup(a)?;
        let width = *va.shape().last().unwrap();
        let mut data = va.data().to_vec();
        for row in data.chunks_mut(width) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Softmax { a: a.index }))
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.lookup(a)?.data().iter().sum());
        Ok(self.push(value, Op::SumAll { a: a.index }))
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let va = self.lookup(a)?;
        let value = Tensor::scalar(va.data().iter().sum::<f64>() / va.numel() as f64);
        Ok(self.push(value, Op::MeanAll { a: a.index }))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.lookup(a)?.reshaped(shape)?;
        Ok(self.push(value, Op::Reshape { a: a.index }))
    }

    /// Columns `start..start + len` of a rank-2 tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let va = self.lookup(a)?;
        if va.rank() != 2 || len == 0 || start + len > va.shape()[1] {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                lhs: va.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let (rows, cols) = (va.shape()[0], va.shape()[1]);
        let mut data = Vec::with_capacity(rows * len);
        for i in 0..rows {
            data.extend_from_slice(&va.data()[i * cols + start..i * cols + start + len]);
        }
        let value = Tensor::new(vec![rows, len], data)?;
        Ok(self.push(value, Op::SliceCols { a: a.index, start }))
    }

    /// Concatenates rank-2 tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Usage("concat_cols: no parts".into()));
        }
        let first = self.lookup(parts[0])?;
        if first.rank() != 2 {
            return Err(Error::Usage("concat_cols expects rank-2 parts".into()));
        }
        let rows = first.shape()[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = self.lookup(p)?;
            if v.rank() != 2 || v.shape()[0] != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: first.shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            widths.push(v.shape()[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                let v = &self.nodes[p.index].value;
                data.extend_from_slice(v.row(i));
            }
        }
        let value = Tensor::new(vec![rows, total], data)?;
        let op = Op::ConcatCols {
            parts: parts.iter().map(|p| p.index).collect(),
        };
        Ok(self.push(value, op))
    }

    /// Stacks `T` rank-2 tensors of shape `[B, H]` into `[B, T, H]`.
    pub fn stack_steps(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Usage("stack_steps: no parts".into()));
        }
        let shape = self.lookup(parts[0])?.shape().to_vec();
        if shape.len() != 2 {
            return Err(Error::Usage("stack_steps expects rank-2 parts".into()));
        }
        for &p in parts {
            let v = self.lookup(p)?;
            if v.shape() != shape {
                return Err(Error::ShapeMismatch {
                    op: "stack_steps",
                    lhs: shape,
                    rhs: v.shape().to_vec(),
                });
            }
        }
        let (b, h) = (shape[0], shape[1]);
        let t = parts.len();
        let mut data = vec![0.0; b * t * h];
        for (step, &p) in parts.iter().enumerate() {
            let v = &self.nodes[p.index].value;
            for i in 0..b {
                let dst = (i * t + step) * h;
                data[dst..dst + h].copy_from_slice(v.row(i));
            }
        }
        let value = Tensor::new(vec![b, t, h], data)?;
        let op = Op::StackSteps {
            parts: parts.iter().map(|p| p.index).collect(),
        };
        Ok(self.push(value, op))
    }

    /// 1-D cross-correlation (no kernel flip) with fused bias.
    ///
    /// `x` is `[B, T, C_in]`, `w` is `[C_out, C_in, K]`, `b` is `[C_out]`;
    /// the result is `[B, T_out, C_out]` with
    /// `T_out = (T + 2 * padding - K) / stride + 1`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let (vx, vw, vb) = (self.lookup(x)?, self.lookup(w)?, self.lookup(b)?);
        if vx.rank() != 3 || vw.rank() != 3 || vx.shape()[2] != vw.shape()[1] {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                lhs: vx.shape().to_vec(),
                rhs: vw.shape().to_vec(),
            });
        }
        let (bsz, t_in, c_in) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let (c_out, ksz) = (vw.shape()[0], vw.shape()[2]);
        if vb.numel() != c_out {
            return Err(Error::ShapeMismatch {
                op: "conv1d bias",
                lhs: vb.shape().to_vec(),
                rhs: vec![c_out],
            });
        }
        if stride == 0 {
            return Err(Error::Usage("conv1d: stride must be positive".into()));
        }
        if t_in + 2 * padding < ksz {
            return Err(Error::ShapeMismatch {
                op: "conv1d window",
                lhs: vec![t_in + 2 * padding],
                rhs: vec![ksz],
            });
        }
        let t_out = (t_in + 2 * padding - ksz) / stride + 1;
        let mut data = vec![0.0; bsz * t_out * c_out];
        for i in 0..bsz {
            for t in 0..t_out {
                for o in 0..c_out {
                    let mut acc = vb.data()[o];
                    for k in 0..ksz {
                        let src = (t * stride + k) as isize - padding as isize;
                        if src < 0 || src >= t_in as isize {
                            continue;
                        }
                        let src = src as usize;
                        for c in 0..c_in {
                            acc += vx.at3(i, src, c) * vw.data()[(o * c_in + c) * ksz + k];
                        }
                    }
                    data[(i * t_out + t) * c_out + o] = acc;
                }
            }
        }
        let value = Tensor::new(vec![bsz, t_out, c_out], data)?;
        let op = Op::Conv1d {
            x: x.index,
            w: w.index,
            b: b.index,
            stride,
            padding,
        };
        Ok(self.push(value, op))
    }

    /// Channelwise max pooling over time. Ties resolve to the earliest
    /// position; gradients route only to the winning positions.
    pub fn max_pool1d(&mut self, x: Var, size: usize, stride: usize) -> Result<Var> {
        let vx = self.lookup(x)?;
        if vx.rank() != 3 {
            return Err(Error::Usage("max_pool1d expects [B, T, C] input".into()));
        }
        if size == 0 || stride == 0 {
            return Err(Error::Usage("max_pool1d: size and stride must be positive".into()));
        }
        let (bsz, t_in, chans) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        if t_in < size {
            return Err(Error::ShapeMismatch {
                op: "max_pool1d window",
                lhs: vec![t_in],
                rhs: vec![size],
            });
        }
        let t_out = (t_in - size) / stride + 1;
        let mut data = vec![0.0; bsz * t_out * chans];
        let mut switches = vec![0usize; bsz * t_out * chans];
        for i in 0..bsz {
            for t in 0..t_out {
                for c in 0..chans {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for k in 0..size {
                        let src = (i * t_in + t * stride + k) * chans + c;
                        if vx.data()[src] > best {
                            best = vx.data()[src];
                            best_idx = src;
                        }
                    }
                    let dst = (i * t_out + t) * chans + c;
                    data[dst] = best;
                    switches[dst] = best_idx;
                }
            }
        }
        let value = Tensor::new(vec![bsz, t_out, chans], data)?;
        Ok(self.push(value, Op::MaxPool1d { x: x.index, switches }))
    }

    /// Global average pooling over time: `[B, T, C]` to `[B, C]`.
    pub fn gap(&mut self, x: Var) -> Result<Var> {
        let vx = self.lookup(x)?;
        if vx.rank() != 3 {
            return Err(Error::Usage("gap expects [B, T, C] input".into()));
        }
        let (bsz, t_in, chans) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let mut data = vec![0.0; bsz * chans];
        for i in 0..bsz {
            for t in 0..t_in {
                for c in 0..chans {
                    data[i * chans + c] += vx.at3(i, t, c);
                }
            }
        }
        for v in data.iter_mut() {
            *v /= t_in as f64;
        }
        let value = Tensor::new(vec![bsz, chans], data)?;
        Ok(self.push(value, Op::Gap { x: x.index }))
    }

    /// Reverse sweep from a scalar objective. Returns gradients for every
    /// node that participated; leaves the objective does not depend on
    /// get explicit zero gradients.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_value = self.lookup(root)?;
        if root_value.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward requires a scalar objective, got shape {:?}",
                root_value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.index + 1];
        grads[root.index] = Some(Tensor::filled(root_value.shape(), 1.0));
        for i in (0..=root.index).rev() {
            let Some(g) = grads[i].clone() else { continue };
            self.backprop_node(i, &g, &mut grads);
        }
        for (i, slot) in grads.iter_mut().enumerate() {
            if slot.is_none() && matches!(self.nodes[i].op, Op::Leaf) {
                *slot = Some(Tensor::zeros(self.nodes[i].value.shape()));
            }
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |idx: usize| &self.nodes[idx].value;
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf | Op::Input => {}
            Op::Matmul { a, b } => {
                let (va, vb) = (val(*a), val(*b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                let mut ga = Tensor::zeros(va.shape());
                for i2 in 0..m {
                    for j in 0..n {
                        let gij = g.data()[i2 * n + j];
                        for p in 0..k {
                            ga.data_mut()[i2 * k + p] += gij * vb.data()[p * n + j];
                        }
                    }
                }
                let mut gb = Tensor::zeros(vb.shape());
                for p in 0..k {
                    for i2 in 0..m {
                        let aip = va.data()[i2 * k + p];
                        for j in 0..n {
                            gb.data_mut()[p * n + j] += aip * g.data()[i2 * n + j];
                        }
                    }
                }
                accum(grads, *a, ga);
                accum(grads, *b, gb);
            }
            Op::Add { a, b, bcast } => {
                accum(grads, *a, g.clone());
                accum(grads, *b, reduce_like(g, val(*b).shape(), *bcast));
            }
            Op::Sub { a, b, bcast } => {
                accum(grads, *a, g.clone());
                let mut gb = reduce_like(g, val(*b).shape(), *bcast);
                for v in gb.data_mut() {
                    *v = -*v;
                }
                accum(grads, *b, gb);
            }
            Op::Mul { a, b, bcast } => {
                let (va, vb) = (val(*a), val(*b));
                let ga = match bcast {
                    Bcast::Same => {
                        let mut t = g.clone();
                        for (x, y) in t.data_mut().iter_mut().zip(vb.data()) {
                            *x *= y;
                        }
                        t
                    }
                    Bcast::ScalarRhs => g.map(|x| x * vb.data()[0]),
                    Bcast::RowRhs => {
                        let n = vb.numel();
                        let mut t = g.clone();
                        for (idx, x) in t.data_mut().iter_mut().enumerate() {
                            *x *= vb.data()[idx % n];
                        }
                        t
                    }
                };
                let mut prod = g.clone();
                for (x, y) in prod.data_mut().iter_mut().zip(va.data()) {
                    *x *= y;
                }
                let gb = reduce_like(&prod, vb.shape(), *bcast);
                accum(grads, *a, ga);
                accum(grads, *b, gb);
            }
            Op::AddScalar { a } => accum(grads, *a, g.clone()),
            Op::MulScalar { a, c } => accum(grads, *a, g.map(|x| x * c)),
            Op::Neg { a } => accum(grads, *a, g.map(|x| -x)),
            Op::Exp { a } => {
                let mut t = g.clone();
                for (x, y) in t.data_mut().iter_mut().zip(out.data()) {
                    *x *= y;
                }
                accum(grads, *a, t);
            }
            Op::Log { a } => {
                let mut t = g.clone();
                for (x, y) in t.data_mut().iter_mut().zip(val(*a).data()) {
                    *x /= y;
                }
                accum(grads, *a, t);
            }
            Op::Relu { a } => {
                let mut t = g.clone();
                for (x, y) in t.data_mut().iter_mut().zip(val(*a).data()) {
                    if *y <= 0.0 {
                        *x = 0.0;
                    }
                }
                accum(grads, *a, t);
            }
            Op::Sigmoid { a } => {
                let mut t = g.clone();
                for (x, y) in t.data_mut().iter_mut().zip(out.data()) {
                    *x *= y * (1.0 - y);
                }
                accum(grads, *a, t);
            }
            Op::Tanh { a } => {
                let mut t = g.clone();
                for (x, y) in t.data_mut().iter_mut().zip(out.data()) {
                    *x *= 1.0 - y * y;
                }
                accum(grads, *a, t);
            }
            Op::Softmax { a } => {
                let width = *out.shape().last().unwrap();
                let mut t = Tensor::zeros(out.shape());
                for r in 0..out.numel() / width {
                    let p = &out.data()[r * width..(r + 1) * width];
                    let gr = &g.data()[r * width..(r + 1) * width];
                    let dot: f64 = p.iter().zip(gr).map(|(&pi, &gi)| pi * gi).sum();
                    for j in 0..width {
                        t.data_mut()[r * width + j] = p[j] * (gr[j] - dot);
                    }
                }
                accum(grads, *a, t);
            }
            Op::SumAll { a } => {
                accum(grads, *a, Tensor::filled(val(*a).shape(), g.data()[0]));
            }
            Op::MeanAll { a } => {
                let va = val(*a);
                let scale = g.data()[0] / va.numel() as f64;
                accum(grads, *a, Tensor::filled(va.shape(), scale));
            }
            Op::Reshape { a } => {
                let back = g.reshaped(val(*a).shape().to_vec()).expect("reshape grad");
                accum(grads, *a, back);
            }
            Op::SliceCols { a, start } => {
                let va = val(*a);
                let (rows, cols) = (va.shape()[0], va.shape()[1]);
                let len = out.shape()[1];
                let mut t = Tensor::zeros(va.shape());
                for r in 0..rows {
                    for j in 0..len {
                        t.data_mut()[r * cols + start + j] = g.data()[r * len + j];
                    }
                }
                accum(grads, *a, t);
            }
            Op::ConcatCols { parts } => {
                let rows = out.shape()[0];
                let total = out.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).shape()[1];
                    let mut t = Tensor::zeros(val(p).shape());
                    for r in 0..rows {
                        for j in 0..w {
                            t.data_mut()[r * w + j] = g.data()[r * total + offset + j];
                        }
                    }
                    accum(grads, p, t);
                    offset += w;
                }
            }
            Op::StackSteps { parts } => {
                let (b, t_len, h) = (out.shape()[0], out.shape()[1], out.shape()[2]);
                for (step, &p) in parts.iter().enumerate() {
                    let mut t = Tensor::zeros(&[b, h]);
                    for i2 in 0..b {
                        for j in 0..h {
                            t.data_mut()[i2 * h + j] = g.data()[(i2 * t_len + step) * h + j];
                        }
                    }
                    accum(grads, p, t);
                }
            }
            Op::Conv1d { x, w, b, stride, padding } => {
                let (vx, vw) = (val(*x), val(*w));
                let (bsz, t_in, c_in) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
                let (c_out, ksz) = (vw.shape()[0], vw.shape()[2]);
                let t_out = out.shape()[1];
                let mut gx = Tensor::zeros(vx.shape());
                let mut gw = Tensor::zeros(vw.shape());
                let mut gb = Tensor::zeros(val(*b).shape());
                for i2 in 0..bsz {
                    for t in 0..t_out {
                        for o in 0..c_out {
                            let go = g.data()[(i2 * t_out + t) * c_out + o];
                            gb.data_mut()[o] += go;
                            for k in 0..ksz {
                                let src = (t * stride + k) as isize - *padding as isize;
                                if src < 0 || src >= t_in as isize {
                                    continue;
                                }
                                let src = src as usize;
                                for c in 0..c_in {
                                    let xi = (i2 * t_in + src) * c_in + c;
                                    let wi = (o * c_in + c) * ksz + k;
                                    gx.data_mut()[xi] += go * vw.data()[wi];
                                    gw.data_mut()[wi] += go * vx.data()[xi];
                                }
                            }
                        }
                    }
                }
                accum(grads, *x, gx);
                accum(grads, *w, gw);
                accum(grads, *b, gb);
            }
            Op::MaxPool1d { x, switches } => {
                let mut t = Tensor::zeros(val(*x).shape());
                for (dst, &src) in switches.iter().enumerate() {
                    t.data_mut()[src] += g.data()[dst];
                }
                accum(grads, *x, t);
            }
            Op::Gap { x } => {
                let vx = val(*x);
                let (bsz, t_in, chans) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
                let mut t = Tensor::zeros(vx.shape());
                for i2 in 0..bsz {
                    for step in 0..t_in {
                        for c in 0..chans {
                            t.data_mut()[(i2 * t_in + step) * chans + c] =
                                g.data()[i2 * chans + c] / t_in as f64;
                        }
                    }
                }
                accum(grads, *x, t);
            }
        }
    }
}

fn accum(grads: &mut [Option<Tensor>], idx: usize, contrib: Tensor) {
    match &mut grads[idx] {
        Some(t) => accumulate(t, &contrib),
        slot @ None => *slot = Some(contrib),
    }
}

/// Folds a full-shaped gradient down to the broadcast operand's shape.
fn reduce_like(g: &Tensor, target_shape: &[usize], bcast: Bcast) -> Tensor {
    match bcast {
        Bcast::Same => g.clone(),
        Bcast::ScalarRhs => {
            let total: f64 = g.data().iter().sum();
            let mut t = Tensor::zeros(target_shape);
            t.data_mut()[0] = total;
            t
        }
        Bcast::RowRhs => {
            let n: usize = target_shape.iter().product();
            let mut t = Tensor::zeros(target_shape);
            for (i, &v) in g.data().iter().enumerate() {
                t.data_mut()[i % n] += v;
            }
            t
        }
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of a backward pass, keyed by the variables of the originating
/// tape.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Result<&Tensor> {
        if v.tape != self.tape {
            return Err(Error::Tape(format!(
                "variable belongs to tape {} but gradients are from tape {}",
                v.tape, self.tape
            )));
        }
        self.grads
            .get(v.index)
            .and_then(Option::as_ref)
            .ok_or_else(|| {
                Error::Gradient(format!(
                    "no gradient for node {}: not on the path to the objective",
                    v.index
                ))
            })
    }
}
