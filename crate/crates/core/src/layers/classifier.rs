use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    conv1d_same, dense, dropout, embedding_forward, lstm_sequence, maxpool1d, pooled_len,
    Activation, Conv1dParams, DenseParams, EmbeddingParams, LayerError, LstmParams, Mode,
    Parameters, Result,
};
use crate::autodiff::{Scalar, Tape, Tensor, Var};
use crate::textproc::Batch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    /// Embedding rows, vocabulary size + 1 for padding.
    pub vocab_rows: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub fc_width: usize,
    pub activation: Activation,
    pub dropout: f64,
}

/// Embedding → LSTM → FC → activation → dropout → dense(1) → sigmoid,
/// reading out the final hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmClassifier<S> {
    pub config: LstmConfig,
    pub embedding: EmbeddingParams<S>,
    pub lstm: LstmParams<S>,
    pub fc: DenseParams<S>,
    pub out: DenseParams<S>,
}

impl<S: Scalar> LstmClassifier<S> {
    pub fn new(config: LstmConfig, rng: &mut impl RngCore) -> Result<Self> {
        if config.vocab_rows == 0 || config.embed_dim == 0 || config.hidden == 0 || config.fc_width == 0 {
            return Err(LayerError::Config(format!("all LSTM widths must be positive: {config:?}")));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(LayerError::DropoutRate(config.dropout));
        }
        let embedding = EmbeddingParams::new(config.vocab_rows, config.embed_dim, rng);
        let lstm = LstmParams::new(config.embed_dim, config.hidden, rng);
        let fc = DenseParams::new(config.hidden, config.fc_width, rng);
        let out = DenseParams::new(config.fc_width, 1, rng);
        Ok(LstmClassifier {
            config,
            embedding,
            lstm,
            fc,
            out,
        })
    }

    /// Returns `batch × 1` probabilities and the parameter handles in
    /// [`Parameters::params_mut`] order.
    pub fn forward(
        &self,
        tape: &mut Tape<S>,
        batch: &Batch,
        mode: Mode,
        rng: &mut impl RngCore,
    ) -> Result<Forward> {
        let table = self.embedding.bind(tape);
        let lstm = self.lstm.bind(tape);
        let fc = self.fc.bind(tape);
        let out = self.out.bind(tape);

        let x = embedding_forward(tape, table, &batch.ids, batch.size(), batch.seq_len)?;
        let h = lstm_sequence(tape, x, &lstm)?;
        let z = dense(tape, h, &fc)?;
        let z = self.config.activation.apply(tape, z)?;
        let z = dropout(tape, z, self.config.dropout, mode, rng)?;
        let logit = dense(tape, z, &out)?;
        let probs = tape.sigmoid(logit)?;

        let mut params = vec![table];
        params.extend(lstm.w);
        params.extend(lstm.u);
        params.extend(lstm.b);
        params.extend([fc.weight, fc.bias, out.weight, out.bias]);
        Ok(Forward { probs, params })
    }
}

impl<S: Scalar> Parameters<S> for LstmClassifier<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = vec![("embedding.table".to_string(), &self.embedding.table)];
        self.lstm.push_named("lstm", &mut out);
        self.fc.push_named("fc", &mut out);
        self.out.push_named("out", &mut out);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = vec![&mut self.embedding.table];
        self.lstm.push_mut(&mut out);
        self.fc.push_mut(&mut out);
        self.out.push_mut(&mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub vocab_rows: usize,
    /// Input length; fixes the flattened width.
    pub seq_len: usize,
    pub embed_dim: usize,
    /// Odd kernel width shared by every stage.
    pub kernel_width: usize,
    /// Filters per conv stage.
    pub filters: Vec<usize>,
    pub pool_window: usize,
    pub pool_stride: usize,
    pub dense_width: usize,
    /// Activation after the first dense layer; conv stages always use ReLU.
    pub activation: Activation,
}

impl CnnConfig {
    /// Time length after each conv+pool stage.
    pub fn stage_lengths(&self) -> Result<Vec<usize>> {
        let mut steps = self.seq_len;
        let mut out = Vec::with_capacity(self.filters.len());
        for stage in 0..self.filters.len() {
            steps = pooled_len(steps, self.pool_window, self.pool_stride).ok_or_else(|| {
                LayerError::Stage {
                    stage: stage + 1,
                    msg: format!(
                        "time length {steps} cannot hold a pooling window of {} (stride {})",
                        self.pool_window, self.pool_stride
                    ),
                }
            })?;
            out.push(steps);
        }
        Ok(out)
    }

    pub fn flatten_width(&self) -> Result<usize> {
        let lengths = self.stage_lengths()?;
        Ok(lengths.last().copied().unwrap_or(self.seq_len)
            * self.filters.last().copied().unwrap_or(self.embed_dim))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnClassifier<S> {
    pub config: CnnConfig,
    pub embedding: EmbeddingParams<S>,
    pub stages: Vec<Conv1dParams<S>>,
    pub dense1: DenseParams<S>,
    pub dense2: DenseParams<S>,
}

impl<S: Scalar> CnnClassifier<S> {
    pub fn new(config: CnnConfig, rng: &mut impl RngCore) -> Result<Self> {
        if config.kernel_width.is_multiple_of(2) {
            return Err(LayerError::Config(format!(
                "kernel width {} must be odd for same padding",
                config.kernel_width
            )));
        }
        if config.vocab_rows == 0
            || config.embed_dim == 0
            || config.dense_width == 0
            || config.filters.is_empty()
            || config.filters.contains(&0)
        {
            return Err(LayerError::Config(format!("all CNN widths must be positive: {config:?}")));
        }
        let flat = config.flatten_width()?;
        let embedding = EmbeddingParams::new(config.vocab_rows, config.embed_dim, rng);
        let mut channels = config.embed_dim;
        let mut stages = Vec::with_capacity(config.filters.len());
        for &f in &config.filters {
            stages.push(Conv1dParams::new(f, config.kernel_width, channels, rng));
            channels = f;
        }
        let dense1 = DenseParams::new(flat, config.dense_width, rng);
        let dense2 = DenseParams::new(config.dense_width, 1, rng);
        Ok(CnnClassifier {
            config,
            embedding,
            stages,
            dense1,
            dense2,
        })
    }

    /// embedding → (conv → relu → maxpool) per stage → flatten → dense →
    /// activation → dense(1) → sigmoid.
    pub fn forward(&self, tape: &mut Tape<S>, batch: &Batch) -> Result<Forward> {
        if batch.seq_len != self.config.seq_len {
            return Err(LayerError::Config(format!(
                "CNN built for sequences of {} ids, batch has {}",
                self.config.seq_len, batch.seq_len
            )));
        }
        let table = self.embedding.bind(tape);
        let convs: Vec<_> = self.stages.iter().map(|s| s.bind(tape)).collect();
        let d1 = self.dense1.bind(tape);
        let d2 = self.dense2.bind(tape);

        let b = batch.size();
        let mut x = embedding_forward(tape, table, &batch.ids, b, batch.seq_len)?;
        for (stage, conv) in convs.iter().enumerate() {
            x = conv1d_same(tape, x, conv)?;
            x = tape.relu(x)?;
            x = maxpool1d(tape, x, self.config.pool_window, self.config.pool_stride).map_err(|e| {
                LayerError::Stage {
                    stage: stage + 1,
                    msg: e.to_string(),
                }
            })?;
        }
        let flat_width = tape.value(x)?.len() / b;
        let flat = tape.reshape(x, [b, flat_width])?;
        let z = dense(tape, flat, &d1)?;
        let z = self.config.activation.apply(tape, z)?;
        let logit = dense(tape, z, &d2)?;
        let probs = tape.sigmoid(logit)?;

        let mut params = vec![table];
        for c in &convs {
            params.extend([c.kernels, c.bias]);
        }
        params.extend([d1.weight, d1.bias, d2.weight, d2.bias]);
        Ok(Forward { probs, params })
    }
}

impl<S: Scalar> Parameters<S> for CnnClassifier<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = vec![("embedding.table".to_string(), &self.embedding.table)];
        for (i, s) in self.stages.iter().enumerate() {
            s.push_named(&format!("conv{}", i + 1), &mut out);
        }
        self.dense1.push_named("dense1", &mut out);
        self.dense2.push_named("dense2", &mut out);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = vec![&mut self.embedding.table];
        for s in &mut self.stages {
            s.push_mut(&mut out);
        }
        self.dense1.push_mut(&mut out);
        self.dense2.push_mut(&mut out);
        out
    }
}

/// Output of a classifier forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `batch × 1` probabilities.
    pub probs: Var,
    /// Parameter handles in `params_mut` order.
    pub params: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq)]
// Only a handful of models exist at a time; boxing buys nothing.
#[allow(clippy::large_enum_variant)]
pub enum Model<S> {
    Lstm(LstmClassifier<S>),
    Cnn(CnnClassifier<S>),
}

impl<S: Scalar> Model<S> {
    pub fn forward(
        &self,
        tape: &mut Tape<S>,
        batch: &Batch,
        mode: Mode,
        rng: &mut impl RngCore,
    ) -> Result<Forward> {
        match self {
            Model::Lstm(m) => m.forward(tape, batch, mode, rng),
            Model::Cnn(m) => m.forward(tape, batch),
        }
    }

    /// Eval-mode probabilities, one per batch row.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<S>> {
        let mut tape = Tape::new();
        // Eval mode never draws from the generator.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fwd = self.forward(&mut tape, batch, Mode::Eval, &mut rng)?;
        Ok(tape.value(fwd.probs)?.data().to_vec())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Lstm(_) => "lstm",
            Model::Cnn(_) => "cnn",
        }
    }

    pub fn embedding(&self) -> &EmbeddingParams<S> {
        match self {
            Model::Lstm(m) => &m.embedding,
            Model::Cnn(m) => &m.embedding,
        }
    }
}

impl<S: Scalar> Parameters<S> for Model<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        match self {
            Model::Lstm(m) => m.named_params(),
            Model::Cnn(m) => m.named_params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        match self {
            Model::Lstm(m) => m.params_mut(),
            Model::Cnn(m) => m.params_mut(),
        }
    }
}
