//! Neural network layers built on the tape: dense, 1-D convolution,
//! recurrent cells (simple RNN, LSTM, GRU), bidirectional wrappers and
//! the two classification losses.
//!
//! Each layer is a pair of types: a `*Params` struct owning the
//! trainable tensors, and a `*Vars` struct of tape handles produced by
//! `bind`. Binding order, `collect` order and `visit` order agree, so a
//! flat parameter list lines up with a flat gradient list.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RunRng;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
}

impl Activation {
    pub fn parse(s: &str) -> Result<Activation> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::Config(format!(
                "unknown activation {other:?} (expected relu, tanh, sigmoid or softmax)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn activation(tape: &mut Tape, kind: Activation, x: Var) -> Result<Var> {
    match kind {
        Activation::Relu => tape.relu(x),
        Activation::Tanh => tape.tanh(x),
        Activation::Sigmoid => tape.sigmoid(x),
        Activation::Softmax => tape.softmax(x),
    }
}

/// Glorot (Xavier) uniform draw: `U(-limit, limit)` with
/// `limit = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut RunRng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| rng.uniform(-limit, limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("glorot shape")
}

/// Square orthogonal matrix via Gram-Schmidt on Gaussian rows. Used for
/// recurrent state-to-state weights.
pub fn orthogonal(n: usize, rng: &mut RunRng) -> Tensor {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        for prev in &rows {
            let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (vi, pi) in v.iter_mut().zip(prev) {
                *vi -= dot * pi;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        rows.push(v);
    }
    Tensor::from_rows(&rows).expect("orthogonal shape")
}

/// Fully connected layer; weight is `[in, out]`, bias starts at zero.
#[derive(Debug, Clone)]
pub struct DenseParams {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct DenseVars {
    pub w: Var,
    pub b: Var,
}

impl DenseParams {
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut RunRng) -> DenseParams {
        DenseParams {
            w: glorot_uniform(&[fan_in, fan_out], fan_in, fan_out, rng),
            b: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> DenseVars {
        DenseVars {
            w: tape.leaf(self.w.clone()),
            b: tape.leaf(self.b.clone()),
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((format!("{prefix}.w"), &self.w));
        out.push((format!("{prefix}.b"), &self.b));
    }

    pub fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.w);
        out.push(&mut self.b);
    }
}

impl DenseVars {
    pub fn collect(&self, out: &mut Vec<Var>) {
        out.push(self.w);
        out.push(self.b);
    }
}

/// `x [B, in] -> [B, out]`, with optional activation.
pub fn dense(tape: &mut Tape, x: Var, v: &DenseVars, act: Option<Activation>) -> Result<Var> {
    let z = tape.matmul(x, v.w)?;
    let z = tape.add(z, v.b)?;
    match act {
        Some(a) => activation(tape, a, z),
        None => Ok(z),
    }
}

/// Convolution layer parameters; kernels are `[C_out, C_in, K]`.
#[derive(Debug, Clone)]
pub struct Conv1dParams {
    pub kernels: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Conv1dVars {
    pub kernels: Var,
    pub bias: Var,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1dParams {
    pub fn init(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut RunRng,
    ) -> Conv1dParams {
        Conv1dParams {
            kernels: glorot_uniform(&[c_out, c_in, kernel], c_in * kernel, c_out * kernel, rng),
            bias: Tensor::zeros(&[c_out]),
            stride,
            padding,
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> Conv1dVars {
        Conv1dVars {
            kernels: tape.leaf(self.kernels.clone()),
            bias: tape.leaf(self.bias.clone()),
            stride: self.stride,
            padding: self.padding,
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((format!("{prefix}.kernels"), &self.kernels));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    pub fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.kernels);
        out.push(&mut self.bias);
    }
}

impl Conv1dVars {
    pub fn collect(&self, out: &mut Vec<Var>) {
        out.push(self.kernels);
        out.push(self.bias);
    }
}

pub fn conv1d(tape: &mut Tape, x: Var, v: &Conv1dVars, act: Option<Activation>) -> Result<Var> {
    let z = tape.conv1d(x, v.kernels, v.bias, v.stride, v.padding)?;
    match act {
        Some(a) => activation(tape, a, z),
        None => Ok(z),
    }
}

/// Reinterprets tabular rows `[B, F]` as single-channel sequences
/// `[B, F, 1]` so sequence layers can consume flow records.
pub fn tabular_as_sequence(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(Error::Usage(format!(
            "tabular_as_sequence expects rank 2, got {:?}",
            x.shape()
        )));
    }
    x.reshaped(vec![x.shape()[0], x.shape()[1], 1])
}

/// Registers each timestep of `[B, T, C]` data as a constant `[B, C]`
/// input on the tape, in time order.
pub fn split_steps(tape: &mut Tape, x: &Tensor) -> Result<Vec<Var>> {
    if x.rank() != 3 {
        return Err(Error::Usage(format!(
            "split_steps expects rank 3, got {:?}",
            x.shape()
        )));
    }
    let (b, t_len, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut steps = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut data = Vec::with_capacity(b * c);
        for i in 0..b {
            let base = (i * t_len + t) * c;
            data.extend_from_slice(&x.data()[base..base + c]);
        }
        steps.push(tape.input(Tensor::new(vec![b, c], data)?));
    }
    Ok(steps)
}

/// One gate's worth of recurrent weights: input-to-hidden `wx [C, H]`,
/// hidden-to-hidden `wh [H, H]` (orthogonal init) and bias `[H]`.
#[derive(Debug, Clone)]
pub struct GateBlock {
    pub wx: Tensor,
    pub wh: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct GateVars {
    pub wx: Var,
    pub wh: Var,
    pub b: Var,
}

impl GateBlock {
    pub fn init(input: usize, hidden: usize, rng: &mut RunRng) -> GateBlock {
        GateBlock {
            wx: glorot_uniform(&[input, hidden], input, hidden, rng),
            wh: orthogonal(hidden, rng),
            b: Tensor::zeros(&[hidden]),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> GateVars {
        GateVars {
            wx: tape.leaf(self.wx.clone()),
            wh: tape.leaf(self.wh.clone()),
            b: tape.leaf(self.b.clone()),
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((format!("{prefix}.wx"), &self.wx));
        out.push((format!("{prefix}.wh"), &self.wh));
        out.push((format!("{prefix}.b"), &self.b));
    }

    pub fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.wx);
        out.push(&mut self.wh);
        out.push(&mut self.b);
    }

    pub fn hidden(&self) -> usize {
        self.b.numel()
    }
}

impl GateVars {
    pub fn collect(&self, out: &mut Vec<Var>) {
        out.push(self.wx);
        out.push(self.wh);
        out.push(self.b);
    }

    /// Pre-activation `x wx + h wh + b`.
    fn preact(&self, tape: &mut Tape, x: Var, h: Var) -> Result<Var> {
        let a = tape.matmul(x, self.wx)?;
        let b = tape.matmul(h, self.wh)?;
        let s = tape.add(a, b)?;
        tape.add(s, self.b)
    }
}

/// Recurrent cell parameters for the three supported cell kinds.
///
/// LSTM uses gate order input, forget, candidate, output with state
/// update `c' = f * c + i * g`, `h' = o * tanh(c')`. GRU uses update and
/// reset gates with `h' = (1 - z) * h + z * cand`, where the candidate
/// sees `r * h`.
#[derive(Debug, Clone)]
pub enum CellParams {
    Rnn {
        gate: GateBlock,
    },
    Lstm {
        input: GateBlock,
        forget: GateBlock,
        cand: GateBlock,
        output: GateBlock,
    },
    Gru {
        update: GateBlock,
        reset: GateBlock,
        cand: GateBlock,
    },
}

#[derive(Debug, Clone)]
pub enum CellVars {
    Rnn {
        gate: GateVars,
    },
    Lstm {
        input: GateVars,
        forget: GateVars,
        cand: GateVars,
        output: GateVars,
    },
    Gru {
        update: GateVars,
        reset: GateVars,
        cand: GateVars,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Rnn,
    Lstm,
    Gru,
}

impl CellParams {
    pub fn init(kind: CellKind, input: usize, hidden: usize, rng: &mut RunRng) -> CellParams {
        match kind {
            CellKind::Rnn => CellParams::Rnn {
                gate: GateBlock::init(input, hidden, rng),
            },
            CellKind::Lstm => CellParams::Lstm {
                input: GateBlock::init(input, hidden, rng),
                forget: GateBlock::init(input, hidden, rng),
                cand: GateBlock::init(input, hidden, rng),
                output: GateBlock::init(input, hidden, rng),
            },
            CellKind::Gru => CellParams::Gru {
                update: GateBlock::init(input, hidden, rng),
                reset: GateBlock::init(input, hidden, rng),
                cand: GateBlock::init(input, hidden, rng),
            },
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            CellParams::Rnn { gate } => gate.hidden(),
            CellParams::Lstm { input, .. } => input.hidden(),
            CellParams::Gru { update, .. } => update.hidden(),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> CellVars {
        match self {
            CellParams::Rnn { gate } => CellVars::Rnn {
                gate: gate.bind(tape),
            },
            CellParams::Lstm {
                input,
                forget,
                cand,
                output,
            } => CellVars::Lstm {
                input: input.bind(tape),
                forget: forget.bind(tape),
                cand: cand.bind(tape),
                output: output.bind(tape),
            },
            CellParams::Gru {
                update,
                reset,
                cand,
            } => CellVars::Gru {
                update: update.bind(tape),
                reset: reset.bind(tape),
                cand: cand.bind(tape),
            },
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        match self {
            CellParams::Rnn { gate } => gate.visit(prefix, out),
            CellParams::Lstm {
                input,
                forget,
                cand,
                output,
            } => {
                input.visit(&format!("{prefix}.i"), out);
                forget.visit(&format!("{prefix}.f"), out);
                cand.visit(&format!("{prefix}.g"), out);
                output.visit(&format!("{prefix}.o"), out);
            }
            CellParams::Gru {
                update,
                reset,
                cand,
            } => {
                update.visit(&format!("{prefix}.z"), out);
                reset.visit(&format!("{prefix}.r"), out);
                cand.visit(&format!("{prefix}.h"), out);
            }
        }
    }

    pub fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        match self {
            CellParams::Rnn { gate } => gate.visit_mut(out),
            CellParams::Lstm {
                input,
                forget,
                cand,
                output,
            } => {
                input.visit_mut(out);
                forget.visit_mut(out);
                cand.visit_mut(out);
                output.visit_mut(out);
            }
            CellParams::Gru {
                update,
                reset,
                cand,
            } => {
                update.visit_mut(out);
                reset.visit_mut(out);
                cand.visit_mut(out);
            }
        }
    }
}

impl CellVars {
    pub fn collect(&self, out: &mut Vec<Var>) {
        match self {
            CellVars::Rnn { gate } => gate.collect(out),
            CellVars::Lstm {
                input,
                forget,
                cand,
                output,
            } => {
                input.collect(out);
                forget.collect(out);
                cand.collect(out);
                output.collect(out);
            }
            CellVars::Gru {
                update,
                reset,
                cand,
            } => {
                update.collect(out);
                reset.collect(out);
                cand.collect(out);
            }
        }
    }

    fn hidden_of(&self, tape: &Tape) -> Result<usize> {
        let b = match self {
            CellVars::Rnn { gate } => gate.b,
            CellVars::Lstm { input, .. } => input.b,
            CellVars::Gru { update, .. } => update.b,
        };
        Ok(tape.value(b)?.numel())
    }
}

/// Unrolls a recurrent cell over per-step inputs, starting from zero
/// state. Returns the hidden state after every step.
pub fn run_cell(tape: &mut Tape, cell: &CellVars, steps: &[Var]) -> Result<Vec<Var>> {
    if steps.is_empty() {
        return Err(Error::Usage("run_cell: empty sequence".into()));
    }
    let batch = tape.value(steps[0])?.shape()[0];
    let hidden = cell.hidden_of(tape)?;
    let mut h = tape.input(Tensor::zeros(&[batch, hidden]));
    let mut c = tape.input(Tensor::zeros(&[batch, hidden]));
    let mut states = Vec::with_capacity(steps.len());
    for &x in steps {
        match cell {
            CellVars::Rnn { gate } => {
                let z = gate.preact(tape, x, h)?;
                h = tape.tanh(z)?;
            }
            CellVars::Lstm {
                input,
                forget,
                cand,
                output,
            } => {
                let zi = input.preact(tape, x, h)?;
                let i = tape.sigmoid(zi)?;
                let zf = forget.preact(tape, x, h)?;
                let f = tape.sigmoid(zf)?;
                let zg = cand.preact(tape, x, h)?;
                let g = tape.tanh(zg)?;
                let zo = output.preact(tape, x, h)?;
                let o = tape.sigmoid(zo)?;
                let keep = tape.mul(f, c)?;
                let write = tape.mul(i, g)?;
                c = tape.add(keep, write)?;
                let ct = tape.tanh(c)?;
                h = tape.mul(o, ct)?;
            }
            CellVars::Gru {
                update,
                reset,
                cand,
            } => {
                let zz = update.preact(tape, x, h)?;
                let z = tape.sigmoid(zz)?;
                let zr = reset.preact(tape, x, h)?;
                let r = tape.sigmoid(zr)?;
                let rh = tape.mul(r, h)?;
                let xa = tape.matmul(x, cand.wx)?;
                let ha = tape.matmul(rh, cand.wh)?;
                let s = tape.add(xa, ha)?;
                let zc = tape.add(s, cand.b)?;
                let cand_h = tape.tanh(zc)?;
                let neg_z = tape.neg(z)?;
                let one_minus_z = tape.add_scalar(neg_z, 1.0)?;
                let keep = tape.mul(one_minus_z, h)?;
                let write = tape.mul(z, cand_h)?;
                h = tape.add(keep, write)?;
            }
        }
        states.push(h);
    }
    Ok(states)
}

/// What a bidirectional wrapper emits: the concatenated final states
/// `[B, 2H]`, or the full per-step concatenation `[B, T, 2H]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BidirMode {
    FinalConcat,
    PerStepConcat,
}

/// Runs one cell left-to-right and an independent cell right-to-left
/// over the same sequence, then concatenates per `mode`. The two cells
/// must have equal hidden sizes.
pub fn bidirectional(
    tape: &mut Tape,
    fwd: &CellVars,
    bwd: &CellVars,
    steps: &[Var],
    mode: BidirMode,
) -> Result<Var> {
    let (hf, hb) = (fwd.hidden_of(tape)?, bwd.hidden_of(tape)?);
    if hf != hb {
        return Err(Error::Config(format!(
            "bidirectional hidden sizes differ: {hf} vs {hb}"
        )));
    }
    let fwd_states = run_cell(tape, fwd, steps)?;
    let reversed: Vec<Var> = steps.iter().rev().copied().collect();
    let bwd_states = run_cell(tape, bwd, &reversed)?;
    match mode {
        BidirMode::FinalConcat => {
            let f_last = *fwd_states.last().unwrap();
            let b_last = *bwd_states.last().unwrap();
            tape.concat_cols(&[f_last, b_last])
        }
        BidirMode::PerStepConcat => {
            let t_len = steps.len();
            let mut per_step = Vec::with_capacity(t_len);
            for t in 0..t_len {
                per_step.push(tape.concat_cols(&[fwd_states[t], bwd_states[t_len - 1 - t]])?);
            }
            tape.stack_steps(&per_step)
        }
    }
}

/// Multiclass cross-entropy over probability rows. Rows of `probs` must
/// sum to 1 within 1e-6 and `target` rows must be one-hot; the loss is
/// the batch mean of `-ln(p[true class] + 1e-12)`.
pub fn cross_entropy(tape: &mut Tape, probs: Var, target: &Tensor) -> Result<Var> {
    let vp = tape.value(probs)?;
    if vp.rank() != 2 || vp.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy",
            lhs: vp.shape().to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    let (rows, cols) = (vp.shape()[0], vp.shape()[1]);
    for r in 0..rows {
        let sum: f64 = vp.row(r).iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!(
                "cross_entropy: probability row {r} sums to {sum}, expected 1"
            )));
        }
        let trow = target.row(r);
        let ones = trow.iter().filter(|&&v| v == 1.0).count();
        let zeros = trow.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != cols {
            return Err(Error::Validation(format!(
                "cross_entropy: target row {r} is not one-hot"
            )));
        }
    }
    let t = tape.input(target.clone());
    let shifted = tape.add_scalar(probs, 1e-12)?;
    let lp = tape.log(shifted)?;
    let picked = tape.mul(t, lp)?;
    let total = tape.sum_all(picked)?;
    tape.mul_scalar(total, -1.0 / rows as f64)
}

/// Binary cross-entropy for a `[B, 1]` probability column against 0/1
/// targets, with the same 1e-12 floor inside each log.
pub fn binary_cross_entropy(tape: &mut Tape, probs: Var, target: &Tensor) -> Result<Var> {
    let vp = tape.value(probs)?;
    if vp.rank() != 2 || vp.shape()[1] != 1 || vp.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "binary_cross_entropy",
            lhs: vp.shape().to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    if target.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Validation(
            "binary_cross_entropy: targets must be 0 or 1".into(),
        ));
    }
    if vp.data().iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::Validation(
            "binary_cross_entropy: probabilities must lie in [0, 1]".into(),
        ));
    }
    let rows = vp.shape()[0];
    let t = tape.input(target.clone());
    let t_flip = tape.input(target.map(|v| 1.0 - v));
    let p_shift = tape.add_scalar(probs, 1e-12)?;
    let lp = tape.log(p_shift)?;
    let p_neg = tape.neg(probs)?;
    let p_flip = tape.add_scalar(p_neg, 1.0 + 1e-12)?;
    let lq = tape.log(p_flip)?;
    let pos = tape.mul(t, lp)?;
    let neg = tape.mul(t_flip, lq)?;
    let both = tape.add(pos, neg)?;
    let total = tape.sum_all(both)?;
    tape.mul_scalar(total, -1.0 / rows as f64)
}
