//! The `sentiment` command line.
//!
//! Exit codes: 0 on success, 1 for data or config errors, 2 for usage
//! errors. Machine output goes to stdout, diagnostics to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::corpus::{clean_corpus, load_corpus, split_corpus, tokenize, Sentiment};
use crate::layers::{Activation, Parameters};
use crate::optim::predicted_label;
use crate::textproc::{encode_docs, make_batches, pad_truncate, encode, Batch, EncodedSeq};
use crate::trainer::{
    evaluate, fit_with, load_checkpoint, run_ablation, save_checkpoint, AblationGrid,
    AblationOptions, EmbeddingChoice, ModelKind, TrainConfig, TrainError, FORMAT_VERSION,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sentiment", version, about = "Train and apply movie-review sentiment classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a review CSV and print fold sizes and length statistics.
    Prepare {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        overrides: ConfigArgs,
    },
    /// Train a model and write a checkpoint plus CSV/JSON reports.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Report path stem; defaults to the checkpoint path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Replace an existing checkpoint.
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        overrides: ConfigArgs,
    },
    /// Score every review of a CSV with a checkpoint.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Classify `--text` values, or stdin lines when none are given.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        text: Vec<String>,
    },
    /// Run an activation / learning-rate / batch-size grid.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        /// CSV report path; the JSON report goes next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "grid-activation", value_delimiter = ',')]
        activations: Vec<Activation>,
        #[arg(long = "grid-learning-rate", value_delimiter = ',')]
        learning_rates: Vec<f64>,
        #[arg(long = "grid-batch-size", value_delimiter = ',')]
        batch_sizes: Vec<usize>,
        /// Seed point i with seed + i instead of sharing the base seed.
        #[arg(long)]
        per_point_seeds: bool,
        /// Train grid points concurrently.
        #[arg(long)]
        parallel: bool,
        #[command(flatten)]
        overrides: ConfigArgs,
    },
    /// Print checkpoint metadata as JSON.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
}

/// Config file plus per-field overrides, named after the config keys.
#[derive(Debug, Args, Default)]
struct ConfigArgs {
    /// TOML file with `TrainConfig` fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long, allow_negative_numbers = true)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    vocab_size: Option<usize>,
    /// `random` or a path to `word v1 ... vd` vectors.
    #[arg(long)]
    embedding: Option<EmbeddingChoice>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    hidden_size: Option<usize>,
    #[arg(long)]
    fc_width: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    dropout: Option<f64>,
    #[arg(long)]
    kernel_width: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    filters: Option<Vec<usize>>,
    #[arg(long)]
    pool_window: Option<usize>,
    #[arg(long)]
    pool_stride: Option<usize>,
    #[arg(long)]
    dense_width: Option<usize>,
    #[arg(long)]
    shuffle: Option<bool>,
    #[arg(long)]
    strip_html_urls: Option<bool>,
    #[arg(long)]
    lowercase: Option<bool>,
    #[arg(long)]
    remove_stopwords: Option<bool>,
    #[arg(long)]
    stopword_path: Option<PathBuf>,
}

macro_rules! apply {
    ($cfg:expr, $args:expr; $($field:ident),* ; $($clean:ident),*) => {{
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })*
        $(if let Some(v) = $args.$clean.clone() { $cfg.clean.$clean = v; })*
    }};
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => TrainConfig::default(),
        };
        apply!(cfg, self;
            model, activation, learning_rate, batch_size, epochs, seed, max_len, vocab_size,
            embedding, embedding_dim, hidden_size, fc_width, dropout, kernel_width, filters,
            pool_window, pool_stride, dense_width, shuffle;
            strip_html_urls, lowercase, remove_stopwords);
        if let Some(p) = &self.stopword_path {
            cfg.clean.stopword_path = Some(p.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (without the program name) and runs the command.
pub fn run_cli<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv = std::iter::once(OsString::from("sentiment")).chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{rendered}")
            } else {
                write!(stdout, "{rendered}")
            };
            return code;
        }
    };
    match run(cli.command, stdin, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            EXIT_DATA
        }
    }
}

fn run(cmd: Command, stdin: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Prepare { data, overrides } => prepare(&data, &overrides.resolve()?, out),
        Command::Train {
            data,
            out: ckpt,
            report,
            force,
            overrides,
        } => train(&data, &ckpt, report.as_deref(), force, &overrides.resolve()?, out, err),
        Command::Evaluate { model, data } => evaluate_csv(&model, &data, out),
        Command::Predict { model, text } => predict(&model, text, stdin, out),
        Command::Ablate {
            data,
            out: report,
            activations,
            learning_rates,
            batch_sizes,
            per_point_seeds,
            parallel,
            overrides,
        } => {
            let base = overrides.resolve()?;
            let split = load_split(&data, &base)?;
            let grid = AblationGrid {
                activation: activations,
                learning_rate: learning_rates,
                batch_size: batch_sizes,
            };
            let opts = AblationOptions {
                per_point_seeds,
                parallel,
            };
            let report_data = run_ablation(&base, &grid, &split, opts)?;
            write_file(&report, report_data.to_csv())?;
            write_file(&report.with_extension("json"), report_data.to_json())?;
            write!(out, "{}", report_data.to_csv())?;
            Ok(())
        }
        Command::Inspect { model } => inspect(&model, out),
    }
}

fn write_file(path: &Path, contents: String) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_split(data: &Path, cfg: &TrainConfig) -> Result<crate::corpus::CorpusSplit> {
    let reviews = load_corpus(data)?;
    let docs = clean_corpus(&reviews, &cfg.clean)?;
    Ok(split_corpus(docs)?)
}

fn prepare(data: &Path, cfg: &TrainConfig, out: &mut dyn Write) -> Result<()> {
    let reviews = load_corpus(data)?;
    let positive = reviews.iter().filter(|r| r.label == Sentiment::Positive).count();
    let docs = clean_corpus(&reviews, &cfg.clean)?;
    let lens: Vec<usize> = docs.iter().map(|d| d.tokens.len()).collect();
    let split = split_corpus(docs)?;
    let vocab = crate::textproc::build_vocabulary(&split.train, cfg.vocab_size)?;
    writeln!(out, "reviews\t{}", reviews.len())?;
    writeln!(out, "positive\t{positive}")?;
    writeln!(out, "negative\t{}", reviews.len() - positive)?;
    writeln!(out, "train\t{}", split.train.len())?;
    writeln!(out, "valid\t{}", split.valid.len())?;
    writeln!(out, "test\t{}", split.test.len())?;
    writeln!(out, "tokens_min\t{}", lens.iter().min().copied().unwrap_or(0))?;
    writeln!(out, "tokens_max\t{}", lens.iter().max().copied().unwrap_or(0))?;
    writeln!(
        out,
        "tokens_mean\t{:.2}",
        lens.iter().sum::<usize>() as f64 / lens.len().max(1) as f64
    )?;
    writeln!(out, "over_max_len\t{}", lens.iter().filter(|&&l| l > cfg.max_len).count())?;
    writeln!(out, "vocabulary\t{}", vocab.len())?;
    Ok(())
}

fn train(
    data: &Path,
    ckpt: &Path,
    report: Option<&Path>,
    force: bool,
    cfg: &TrainConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<()> {
    if ckpt.exists() && !force {
        bail!("{} already exists (pass --force to overwrite)", ckpt.display());
    }
    let split = load_split(data, cfg)?;
    let result = fit_with(cfg, &split, |e| {
        let _ = writeln!(
            err,
            "epoch {:>3}  train loss {:.4} acc {:.4}  valid loss {:.4} acc {:.4}  ({:.1}s)",
            e.epoch, e.train_loss, e.train_accuracy, e.valid_loss, e.valid_accuracy, e.wall_seconds
        );
    });
    let fitted = match result {
        Ok(f) => f,
        Err(TrainError::Diverged {
            epoch,
            batch,
            last_good_epoch,
            last_good,
            ..
        }) => {
            let vocab = crate::trainer::prepare(cfg, &split)?.vocab;
            let rescue = PathBuf::from(format!("{}.last-good", ckpt.display()));
            save_checkpoint(&last_good, &vocab, cfg, &rescue, true)?;
            bail!(
                "loss became non-finite in epoch {epoch}, batch {batch}; parameters after epoch {last_good_epoch} saved to {}",
                rescue.display()
            );
        }
        Err(e) => return Err(e.into()),
    };
    save_checkpoint(&fitted.model, &fitted.vocab, cfg, ckpt, force)?;
    let stem = report.unwrap_or(ckpt);
    let csv_path = PathBuf::from(format!("{}.report.csv", stem.display()));
    let json_path = PathBuf::from(format!("{}.report.json", stem.display()));
    write_file(&csv_path, fitted.report.to_csv())?;
    write_file(&json_path, fitted.report.to_json())?;
    writeln!(
        out,
        "test\tloss {:.4}\taccuracy {:.4}\tcount {}",
        fitted.report.test.loss, fitted.report.test.accuracy, fitted.report.test.count
    )?;
    writeln!(out, "checkpoint\t{}", ckpt.display())?;
    writeln!(out, "report\t{}", csv_path.display())?;
    Ok(())
}

fn evaluate_csv(model: &Path, data: &Path, out: &mut dyn Write) -> Result<()> {
    let ck = load_checkpoint(model)?;
    let reviews = load_corpus(data)?;
    if reviews.is_empty() {
        bail!("{} has no reviews", data.display());
    }
    let docs = clean_corpus(&reviews, &ck.config.clean)?;
    let seqs = encode_docs(&docs, &ck.vocab, ck.config.max_len);
    let batches = make_batches(&seqs, ck.config.batch_size, 0, false)?;
    let m = evaluate(&ck.model, &batches)?;
    writeln!(out, "{}", serde_json::to_string(&m)?)?;
    Ok(())
}

fn predict(model: &Path, texts: Vec<String>, stdin: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    let ck = load_checkpoint(model)?;
    let lines: Vec<String> = if texts.is_empty() {
        stdin.lines().collect::<std::io::Result<_>>().context("reading stdin")?
    } else {
        texts
    };
    let stopwords = ck.config.clean.stopwords()?;
    let seqs: Vec<EncodedSeq> = lines
        .iter()
        .map(|line| {
            let tokens = tokenize(line, &ck.config.clean, &stopwords);
            EncodedSeq {
                ids: pad_truncate(&encode(&tokens, &ck.vocab), ck.config.max_len),
                label: 0,
            }
        })
        .collect();
    for chunk in seqs.chunks(ck.config.batch_size) {
        for p in ck.model.predict(&Batch::from_seqs(chunk))? {
            let label = Sentiment::from_label(predicted_label(p));
            writeln!(out, "{}\t{:.4}", label.as_str(), p)?;
        }
    }
    Ok(())
}

fn inspect(model: &Path, out: &mut dyn Write) -> Result<()> {
    let ck = load_checkpoint(model)?;
    let doc = json!({
        "format_version": FORMAT_VERSION,
        "model": ck.model.kind(),
        "parameters": ck.model.num_params(),
        "vocabulary_size": ck.vocab.len(),
        "vocabulary_head": ck.vocab.tokens().iter().take(20).collect::<Vec<_>>(),
        "tensors": ck.tensor_index(),
        "config": ck.config,
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}
