//! Training loops, evaluation, reports, the ablation grid and checkpoints.

mod ablation;
mod checkpoint;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Scalar, Tape};
use crate::corpus::{CleanConfig, CorpusError, CorpusSplit};
use crate::layers::{
    Activation, CnnClassifier, CnnConfig, EmbeddingParams, LayerError, LstmClassifier, LstmConfig,
    Mode, Model, Parameters,
};
use crate::optim::{adam_step, bce_loss, AdamConfig, AdamState, Metrics, MetricsAccumulator, OptimError};
use crate::textproc::{
    build_vocabulary, encode_docs, load_pretrained_embeddings, make_batches, Batch, EmbeddingInit,
    TextError, Vocabulary,
};

pub use ablation::{run_ablation, AblationGrid, AblationOptions, AblationReport, AblationRow};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint,
    CheckpointError, TensorEntry, FORMAT_VERSION, MAGIC,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid {field} (--{flag}): {msg}")]
    Config {
        field: &'static str,
        flag: &'static str,
        msg: String,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("loss became non-finite in epoch {epoch}, batch {batch}; last good state is from epoch {last_good_epoch}")]
    Diverged {
        epoch: usize,
        batch: usize,
        /// 0 means the initial parameters.
        last_good_epoch: usize,
        last_good: Box<Model<f32>>,
        last_valid: Metrics,
    },
    #[error("loss became non-finite at batch {batch}")]
    NonFiniteLoss { batch: usize },
    #[error("the {0} fold is empty")]
    EmptyFold(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Lstm,
    Cnn,
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lstm" => Ok(ModelKind::Lstm),
            "cnn" => Ok(ModelKind::Cnn),
            other => Err(format!("unknown model `{other}` (expected lstm or cnn)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingChoice {
    #[default]
    Random,
    /// `word v1 ... vd` text file.
    Pretrained(PathBuf),
}

impl FromStr for EmbeddingChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("random") {
            Ok(EmbeddingChoice::Random)
        } else if s.is_empty() {
            Err("empty embedding source".into())
        } else {
            Ok(EmbeddingChoice::Pretrained(PathBuf::from(s)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub activation: Activation,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Fixed sequence length T.
    pub max_len: usize,
    /// Vocabulary cap V.
    pub vocab_size: usize,
    pub embedding: EmbeddingChoice,
    pub embedding_dim: usize,
    pub hidden_size: usize,
    pub fc_width: usize,
    pub dropout: f64,
    pub kernel_width: usize,
    pub filters: Vec<usize>,
    pub pool_window: usize,
    pub pool_stride: usize,
    pub dense_width: usize,
    /// Reshuffle the training fold every epoch.
    pub shuffle: bool,
    pub clean: CleanConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::Lstm,
            activation: Activation::Relu,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 10,
            seed: 42,
            max_len: crate::textproc::DEFAULT_SEQ_LEN,
            vocab_size: crate::textproc::DEFAULT_VOCAB_SIZE,
            embedding: EmbeddingChoice::Random,
            embedding_dim: 64,
            hidden_size: 128,
            fc_width: 64,
            dropout: 0.3,
            kernel_width: 3,
            filters: vec![128, 64, 32],
            pool_window: 2,
            pool_stride: 2,
            dense_width: 64,
            shuffle: true,
            clean: CleanConfig::default(),
        }
    }
}

fn bad(field: &'static str, flag: &'static str, msg: impl Into<String>) -> TrainError {
    TrainError::Config {
        field,
        flag,
        msg: msg.into(),
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(bad(
                "learning_rate",
                "learning-rate",
                format!("must be a positive number, got {}", self.learning_rate),
            ));
        }
        let positive: [(&'static str, &'static str, usize); 9] = [
            ("batch_size", "batch-size", self.batch_size),
            ("epochs", "epochs", self.epochs),
            ("max_len", "max-len", self.max_len),
            ("vocab_size", "vocab-size", self.vocab_size),
            ("embedding_dim", "embedding-dim", self.embedding_dim),
            ("hidden_size", "hidden-size", self.hidden_size),
            ("fc_width", "fc-width", self.fc_width),
            ("dense_width", "dense-width", self.dense_width),
            ("pool_window", "pool-window", self.pool_window),
        ];
        for (field, flag, v) in positive {
            if v == 0 {
                return Err(bad(field, flag, "must be at least 1"));
            }
        }
        if self.pool_stride == 0 {
            return Err(bad("pool_stride", "pool-stride", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(bad("dropout", "dropout", format!("must lie in [0, 1), got {}", self.dropout)));
        }
        if self.kernel_width.is_multiple_of(2) {
            return Err(bad(
                "kernel_width",
                "kernel-width",
                format!("must be odd, got {}", self.kernel_width),
            ));
        }
        if self.model == ModelKind::Cnn {
            if self.filters.is_empty() || self.filters.contains(&0) {
                return Err(bad("filters", "filters", "need at least one stage, each with ≥ 1 filter"));
            }
            self.cnn_config(1)
                .stage_lengths()
                .map_err(|e| bad("max_len", "max-len", e.to_string()))?;
        }
        Ok(())
    }

    pub fn lstm_config(&self, vocab_rows: usize) -> LstmConfig {
        LstmConfig {
            vocab_rows,
            embed_dim: self.embedding_dim,
            hidden: self.hidden_size,
            fc_width: self.fc_width,
            activation: self.activation,
            dropout: self.dropout,
        }
    }

    pub fn cnn_config(&self, vocab_rows: usize) -> CnnConfig {
        CnnConfig {
            vocab_rows,
            seq_len: self.max_len,
            embed_dim: self.embedding_dim,
            kernel_width: self.kernel_width,
            filters: self.filters.clone(),
            pool_window: self.pool_window,
            pool_stride: self.pool_stride,
            dense_width: self.dense_width,
            activation: self.activation,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig::with_learning_rate(self.learning_rate)
    }
}

/// Freshly initialized model for `cfg`, optionally with a preloaded
/// embedding table.
pub fn build_model<S: Scalar>(
    cfg: &TrainConfig,
    vocab_rows: usize,
    init: Option<&EmbeddingInit>,
    rng: &mut impl RngCore,
) -> Result<Model<S>, TrainError> {
    let mut model = match cfg.model {
        ModelKind::Lstm => Model::Lstm(LstmClassifier::new(cfg.lstm_config(vocab_rows), rng)?),
        ModelKind::Cnn => Model::Cnn(CnnClassifier::new(cfg.cnn_config(vocab_rows), rng)?),
    };
    if let Some(init) = init {
        let table = EmbeddingParams::from_matrix(init.rows, init.dim, &init.matrix)?;
        if table.table.shape() != model.embedding().table.shape() {
            return Err(LayerError::Config(format!(
                "pretrained table is {:?}, model expects {:?}",
                table.table.shape(),
                model.embedding().table.shape()
            ))
            .into());
        }
        match &mut model {
            Model::Lstm(m) => m.embedding = table,
            Model::Cnn(m) => m.embedding = table,
        }
    }
    Ok(model)
}

/// One forward/backward/update per batch, in order, with dropout active.
pub fn train_epoch<S: Scalar>(
    model: &mut Model<S>,
    batches: &[Batch],
    adam: &mut AdamState<S>,
    rng: &mut impl RngCore,
) -> Result<Metrics, TrainError> {
    let mut acc = MetricsAccumulator::default();
    for (bi, batch) in batches.iter().enumerate() {
        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, batch, Mode::Train, rng)?;
        let loss = bce_loss(&mut tape, fwd.probs, &batch.labels)?;
        let loss_value = tape.value(loss).map_err(LayerError::from)?.data()[0];
        if !loss_value.is_finite() {
            return Err(TrainError::NonFiniteLoss { batch: bi });
        }
        acc.add(tape.value(fwd.probs).map_err(LayerError::from)?.data(), &batch.labels)?;
        tape.backward(loss).map_err(LayerError::from)?;
        let grads: Vec<Vec<S>> = fwd
            .params
            .iter()
            .map(|&v| {
                tape.take_grad(v)
                    .map(Option::unwrap_or_default)
                    .map_err(LayerError::from)
            })
            .collect::<Result<_, _>>()?;
        adam_step(&mut model.params_mut(), &grads, adam).map_err(|e| match e {
            OptimError::NonFiniteGradient { .. } => TrainError::NonFiniteLoss { batch: bi },
            other => other.into(),
        })?;
    }
    Ok(acc.finish())
}

/// Eval-mode metrics; never touches the parameters.
pub fn evaluate<S: Scalar>(model: &Model<S>, batches: &[Batch]) -> Result<Metrics, TrainError> {
    let mut acc = MetricsAccumulator::default();
    for batch in batches {
        let probs = model.predict(batch)?;
        acc.add(&probs, &batch.labels)?;
    }
    Ok(acc.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub valid_loss: f64,
    pub valid_accuracy: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub seed: u64,
    pub vocabulary_size: usize,
    pub embedding_coverage: Option<f64>,
    pub epochs: Vec<EpochRecord>,
    pub test: Metrics,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_accuracy,valid_loss,valid_accuracy";

    /// One row per epoch. Wall time is left out so the file is a pure
    /// function of config, data and seed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch, e.train_loss, e.train_accuracy, e.valid_loss, e.valid_accuracy
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn final_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub model: Model<f32>,
    pub vocab: Vocabulary,
    pub report: TrainReport,
}

/// Encoded folds ready for training.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub vocab: Vocabulary,
    pub train: Vec<crate::textproc::EncodedSeq>,
    pub valid: Vec<crate::textproc::EncodedSeq>,
    pub test: Vec<crate::textproc::EncodedSeq>,
}

/// Builds the vocabulary from the training fold and encodes all three folds.
pub fn prepare(cfg: &TrainConfig, split: &CorpusSplit) -> Result<PreparedData, TrainError> {
    for (name, fold) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        if fold.is_empty() {
            return Err(TrainError::EmptyFold(name));
        }
    }
    let vocab = build_vocabulary(&split.train, cfg.vocab_size)?;
    Ok(PreparedData {
        train: encode_docs(&split.train, &vocab, cfg.max_len),
        valid: encode_docs(&split.valid, &vocab, cfg.max_len),
        test: encode_docs(&split.test, &vocab, cfg.max_len),
        vocab,
    })
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dropout_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn epoch_shuffle_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn fit(cfg: &TrainConfig, split: &CorpusSplit) -> Result<FitOutput, TrainError> {
    fit_with(cfg, split, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with(
    cfg: &TrainConfig,
    split: &CorpusSplit,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutput, TrainError> {
    cfg.validate()?;
    let data = prepare(cfg, split)?;
    let init = match &cfg.embedding {
        EmbeddingChoice::Random => None,
        EmbeddingChoice::Pretrained(path) => Some(load_pretrained_embeddings(
            path,
            &data.vocab,
            cfg.embedding_dim,
            cfg.seed,
        )?),
    };
    let mut model: Model<f32> = build_model(cfg, data.vocab.rows(), init.as_ref(), &mut init_rng(cfg.seed))?;
    let mut adam = AdamState::new(cfg.adam(), &model.named_params().iter().map(|(_, t)| *t).collect::<Vec<_>>());
    let mut drop_rng = dropout_rng(cfg.seed);

    let valid_batches = make_batches(&data.valid, cfg.batch_size, 0, false)?;
    let test_batches = make_batches(&data.test, cfg.batch_size, 0, false)?;

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut last_good = model.clone();
    let mut last_valid: Option<Metrics> = None;
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let batches = make_batches(
            &data.train,
            cfg.batch_size,
            epoch_shuffle_seed(cfg.seed, epoch),
            cfg.shuffle,
        )?;
        let train = match train_epoch(&mut model, &batches, &mut adam, &mut drop_rng) {
            Ok(m) => m,
            Err(TrainError::NonFiniteLoss { batch }) => {
                let last_valid = match last_valid {
                    Some(m) => m,
                    None => evaluate(&last_good, &valid_batches)?,
                };
                return Err(TrainError::Diverged {
                    epoch: epoch + 1,
                    batch,
                    last_good_epoch: epoch,
                    last_good: Box::new(last_good),
                    last_valid,
                });
            }
            Err(e) => return Err(e),
        };
        let valid = evaluate(&model, &valid_batches)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: train.loss,
            train_accuracy: train.accuracy,
            valid_loss: valid.loss,
            valid_accuracy: valid.accuracy,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        epochs.push(record);
        last_good.clone_from(&model);
        last_valid = Some(valid);
    }
    let test = evaluate(&model, &test_batches)?;
    Ok(FitOutput {
        report: TrainReport {
            config: cfg.clone(),
            seed: cfg.seed,
            vocabulary_size: data.vocab.len(),
            embedding_coverage: init.map(|e| e.coverage),
            epochs,
            test,
        },
        model,
        vocab: data.vocab,
    })
}
