//! Network building blocks recorded onto an autodiff [`Tape`].
//!
//! Parameter structs own plain tensors. For each forward pass they are
//! registered on a fresh tape with `bind`, which returns the matching
//! [`Var`] handles in the same order as [`Parameters::params_mut`].

mod classifier;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Scalar, Tape, Tensor, Var};

pub use classifier::{CnnClassifier, CnnConfig, LstmClassifier, LstmConfig, Model};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayerError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("dropout rate {0} must lie in [0, 1)")]
    DropoutRate(f64),
    #[error("conv stage {stage}: {msg}")]
    Stage { stage: usize, msg: String },
    #[error("invalid model configuration: {0}")]
    Config(String),
}

pub type Result<T, E = LayerError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Relu, Activation::Tanh, Activation::Sigmoid];

    pub fn apply<S: Scalar>(self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        Ok(match self {
            Activation::Relu => tape.relu(x)?,
            Activation::Tanh => tape.tanh(x)?,
            Activation::Sigmoid => tape.sigmoid(x)?,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(format!("unknown activation `{other}` (expected relu, tanh or sigmoid)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Named tensors in a fixed order shared by `named_params`, `params_mut`
/// and the `bind` methods.
pub trait Parameters<S: Scalar> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)>;
    fn params_mut(&mut self) -> Vec<&mut Tensor<S>>;

    fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Uniform samples in `[-bound, bound]`.
pub fn uniform<S: Scalar>(shape: &[usize], bound: f64, rng: &mut impl RngCore) -> Tensor<S> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| S::from_f64(rng.random_range(-bound..=bound)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}

fn fan_in_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}

/// Lookup table with row 0 reserved for padding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams<S> {
    pub table: Tensor<S>,
}

impl<S: Scalar> EmbeddingParams<S> {
    pub const INIT_BOUND: f64 = 0.05;

    pub fn new(rows: usize, dim: usize, rng: &mut impl RngCore) -> Self {
        let mut table = uniform(&[rows, dim], Self::INIT_BOUND, rng);
        table.data_mut()[..dim].fill(S::zero());
        EmbeddingParams { table }
    }

    /// Builds from a `rows × dim` matrix; row 0 is forced to zero.
    pub fn from_matrix(rows: usize, dim: usize, data: &[f32]) -> Result<Self> {
        let mut table = Tensor::new(
            [rows, dim],
            data.iter().map(|&v| S::from_f64(v as f64)).collect(),
        )?;
        table.data_mut()[..dim].fill(S::zero());
        Ok(EmbeddingParams { table })
    }

    pub fn rows(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn bind(&self, tape: &mut Tape<S>) -> Var {
        tape.param(self.table.clone())
    }
}

/// `batch × steps` ids to `batch × steps × dim` vectors.
pub fn embedding_forward<S: Scalar>(
    tape: &mut Tape<S>,
    table: Var,
    ids: &[u32],
    batch: usize,
    steps: usize,
) -> Result<Var> {
    Ok(tape.embedding(table, ids, batch, steps)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<S> {
    /// `in × out`
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

#[derive(Debug, Clone, Copy)]
pub struct DenseVars {
    pub weight: Var,
    pub bias: Var,
}

impl<S: Scalar> DenseParams<S> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl RngCore) -> Self {
        let bound = fan_in_bound(inputs);
        DenseParams {
            weight: uniform(&[inputs, outputs], bound, rng),
            bias: uniform(&[outputs], bound, rng),
        }
    }

    pub fn bind(&self, tape: &mut Tape<S>) -> DenseVars {
        DenseVars {
            weight: tape.param(self.weight.clone()),
            bias: tape.param(self.bias.clone()),
        }
    }

    fn push_named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<S>)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    fn push_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor<S>>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

/// `x · W + b`, bias broadcast over the batch.
pub fn dense<S: Scalar>(tape: &mut Tape<S>, x: Var, p: &DenseVars) -> Result<Var> {
    let xw = tape.matmul(x, p.weight)?;
    Ok(tape.add_bias(xw, p.bias)?)
}

/// Per-gate input weights (`d × h`), recurrent weights (`h × h`) and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<S> {
    pub w_f: Tensor<S>,
    pub w_i: Tensor<S>,
    pub w_o: Tensor<S>,
    pub w_c: Tensor<S>,
    pub u_f: Tensor<S>,
    pub u_i: Tensor<S>,
    pub u_o: Tensor<S>,
    pub u_c: Tensor<S>,
    pub b_f: Tensor<S>,
    pub b_i: Tensor<S>,
    pub b_o: Tensor<S>,
    pub b_c: Tensor<S>,
}

#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w: [Var; 4],
    pub u: [Var; 4],
    pub b: [Var; 4],
}

impl<S: Scalar> LstmParams<S> {
    pub fn new(input: usize, hidden: usize, rng: &mut impl RngCore) -> Self {
        let wb = fan_in_bound(input);
        let ub = fan_in_bound(hidden);
        LstmParams {
            w_f: uniform(&[input, hidden], wb, rng),
            w_i: uniform(&[input, hidden], wb, rng),
            w_o: uniform(&[input, hidden], wb, rng),
            w_c: uniform(&[input, hidden], wb, rng),
            u_f: uniform(&[hidden, hidden], ub, rng),
            u_i: uniform(&[hidden, hidden], ub, rng),
            u_o: uniform(&[hidden, hidden], ub, rng),
            u_c: uniform(&[hidden, hidden], ub, rng),
            b_f: uniform(&[hidden], ub, rng),
            b_i: uniform(&[hidden], ub, rng),
            b_o: uniform(&[hidden], ub, rng),
            b_c: uniform(&[hidden], ub, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros([input, hidden]);
        let u = || Tensor::zeros([hidden, hidden]);
        let b = || Tensor::zeros([hidden]);
        LstmParams {
            w_f: w(),
            w_i: w(),
            w_o: w(),
            w_c: w(),
            u_f: u(),
            u_i: u(),
            u_o: u(),
            u_c: u(),
            b_f: b(),
            b_i: b(),
            b_o: b(),
            b_c: b(),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_f.shape()[0]
    }

    pub fn hidden_size(&self) -> usize {
        self.w_f.shape()[1]
    }

    fn ordered(&self) -> [(&'static str, &Tensor<S>); 12] {
        [
            ("w_f", &self.w_f),
            ("w_i", &self.w_i),
            ("w_o", &self.w_o),
            ("w_c", &self.w_c),
            ("u_f", &self.u_f),
            ("u_i", &self.u_i),
            ("u_o", &self.u_o),
            ("u_c", &self.u_c),
            ("b_f", &self.b_f),
            ("b_i", &self.b_i),
            ("b_o", &self.b_o),
            ("b_c", &self.b_c),
        ]
    }

    pub fn bind(&self, tape: &mut Tape<S>) -> LstmVars {
        let vars: Vec<Var> = self
            .ordered()
            .iter()
            .map(|(_, t)| tape.param((*t).clone()))
            .collect();
        LstmVars {
            w: [vars[0], vars[1], vars[2], vars[3]],
            u: [vars[4], vars[5], vars[6], vars[7]],
            b: [vars[8], vars[9], vars[10], vars[11]],
        }
    }

    fn push_named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<S>)>) {
        for (name, t) in self.ordered() {
            out.push((format!("{prefix}.{name}"), t));
        }
    }

    fn push_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor<S>>) {
        out.extend([
            &mut self.w_f,
            &mut self.w_i,
            &mut self.w_o,
            &mut self.w_c,
            &mut self.u_f,
            &mut self.u_i,
            &mut self.u_o,
            &mut self.u_c,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_o,
            &mut self.b_c,
        ]);
    }
}

impl<S: Scalar> Parameters<S> for LstmParams<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = Vec::new();
        self.push_named("lstm", &mut out);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = Vec::new();
        self.push_mut(&mut out);
        out
    }
}

/// Gate activations of one LSTM step, exposed for inspection.
#[derive(Debug, Clone, Copy)]
pub struct LstmStep {
    pub h: Var,
    pub c: Var,
    pub forget: Var,
    pub input: Var,
    pub output: Var,
    pub candidate: Var,
}

fn gate<S: Scalar>(tape: &mut Tape<S>, x: Var, h: Var, w: Var, u: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    let hu = tape.matmul(h, u)?;
    let s = tape.add(xw, hu)?;
    Ok(tape.add_bias(s, b)?)
}

/// One LSTM cell update:
///
/// ```text
/// f = σ(x·W_f + h·U_f + b_f)     i = σ(x·W_i + h·U_i + b_i)
/// o = σ(x·W_o + h·U_o + b_o)     c̃ = tanh(x·W_c + h·U_c + b_c)
/// c' = f ⊙ c + i ⊙ c̃             h' = o ⊙ tanh(c')
/// ```
pub fn lstm_step<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    p: &LstmVars,
) -> Result<LstmStep> {
    let pre_f = gate(tape, x, h_prev, p.w[0], p.u[0], p.b[0])?;
    let pre_i = gate(tape, x, h_prev, p.w[1], p.u[1], p.b[1])?;
    let pre_o = gate(tape, x, h_prev, p.w[2], p.u[2], p.b[2])?;
    let pre_c = gate(tape, x, h_prev, p.w[3], p.u[3], p.b[3])?;
    let forget = tape.sigmoid(pre_f)?;
    let input = tape.sigmoid(pre_i)?;
    let output = tape.sigmoid(pre_o)?;
    let candidate = tape.tanh(pre_c)?;
    let keep = tape.mul(forget, c_prev)?;
    let write = tape.mul(input, candidate)?;
    let c = tape.add(keep, write)?;
    let squashed = tape.tanh(c)?;
    let h = tape.mul(output, squashed)?;
    Ok(LstmStep {
        h,
        c,
        forget,
        input,
        output,
        candidate,
    })
}

/// Runs the cell over every step of a `batch × steps × d` input from zero
/// state and returns the final hidden state `batch × h`.
pub fn lstm_sequence<S: Scalar>(tape: &mut Tape<S>, x: Var, p: &LstmVars) -> Result<Var> {
    let shape = tape.value(x)?.shape().to_vec();
    if shape.len() != 3 || shape[1] == 0 {
        return Err(LayerError::Config(format!(
            "lstm_sequence expects a batch × steps × dim input with steps ≥ 1, got {shape:?}"
        )));
    }
    let (batch, steps) = (shape[0], shape[1]);
    let hidden = tape.value(p.u[0])?.shape()[0];
    let mut h = tape.constant(Tensor::zeros([batch, hidden]));
    let mut c = tape.constant(Tensor::zeros([batch, hidden]));
    for t in 0..steps {
        let xt = tape.time_step(x, t)?;
        let step = lstm_step(tape, xt, h, c, p)?;
        h = step.h;
        c = step.c;
    }
    Ok(h)
}

/// Filters `F × width × c_in` plus a length-`F` bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dParams<S> {
    pub kernels: Tensor<S>,
    pub bias: Tensor<S>,
}

#[derive(Debug, Clone, Copy)]
pub struct Conv1dVars {
    pub kernels: Var,
    pub bias: Var,
}

impl<S: Scalar> Conv1dParams<S> {
    pub fn new(filters: usize, width: usize, channels: usize, rng: &mut impl RngCore) -> Self {
        let bound = fan_in_bound(width * channels);
        Conv1dParams {
            kernels: uniform(&[filters, width, channels], bound, rng),
            bias: uniform(&[filters], bound, rng),
        }
    }

    pub fn filters(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn bind(&self, tape: &mut Tape<S>) -> Conv1dVars {
        Conv1dVars {
            kernels: tape.param(self.kernels.clone()),
            bias: tape.param(self.bias.clone()),
        }
    }

    fn push_named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<S>)>) {
        out.push((format!("{prefix}.kernels"), &self.kernels));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    fn push_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor<S>>) {
        out.push(&mut self.kernels);
        out.push(&mut self.bias);
    }
}

/// Same-padded convolution; output keeps the input's time length.
pub fn conv1d_same<S: Scalar>(tape: &mut Tape<S>, x: Var, p: &Conv1dVars) -> Result<Var> {
    Ok(tape.conv1d_same(x, p.kernels, p.bias)?)
}

pub fn maxpool1d<S: Scalar>(tape: &mut Tape<S>, x: Var, window: usize, stride: usize) -> Result<Var> {
    Ok(tape.maxpool1d(x, window, stride)?)
}

/// Output length of a pooling window sweep, or `None` if the window does not fit.
pub fn pooled_len(steps: usize, window: usize, stride: usize) -> Option<usize> {
    (window >= 1 && stride >= 1 && window <= steps).then(|| (steps - window) / stride + 1)
}

/// Inverted dropout. Identity in eval mode or at rate 0.
pub fn dropout<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    rate: f64,
    mode: Mode,
    rng: &mut impl RngCore,
) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return Err(LayerError::DropoutRate(rate));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(x);
    }
    let shape = tape.value(x)?.shape().to_vec();
    let keep = S::from_f64(1.0 / (1.0 - rate));
    let n: usize = shape.iter().product();
    let mask: Vec<S> = (0..n)
        .map(|_| {
            if rng.random::<f64>() < rate {
                S::zero()
            } else {
                keep
            }
        })
        .collect();
    let mask = tape.constant(Tensor::new(shape, mask)?);
    Ok(tape.mul(x, mask)?)
}
