use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, TrainConfig, TrainError};
use crate::corpus::CorpusSplit;
use crate::layers::Activation;

/// Axis values to sweep. An empty axis keeps the base config's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationGrid {
    pub activation: Vec<Activation>,
    pub learning_rate: Vec<f64>,
    pub batch_size: Vec<usize>,
}

impl AblationGrid {
    pub fn is_empty(&self) -> bool {
        self.activation.is_empty() && self.learning_rate.is_empty() && self.batch_size.is_empty()
    }

    /// Cartesian product in activation → learning rate → batch size order,
    /// the last axis varying fastest.
    pub fn points(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let acts = axis(&self.activation, base.activation);
        let lrs = axis(&self.learning_rate, base.learning_rate);
        let batches = axis(&self.batch_size, base.batch_size);
        let mut out = Vec::with_capacity(acts.len() * lrs.len() * batches.len());
        for &activation in &acts {
            for &learning_rate in &lrs {
                for &batch_size in &batches {
                    out.push(TrainConfig {
                        activation,
                        learning_rate,
                        batch_size,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AblationOptions {
    /// Give grid point `i` the seed `base + i` instead of sharing one.
    pub per_point_seeds: bool,
    /// Run grid points on the rayon pool. Each point stays single-threaded.
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub index: usize,
    pub activation: Activation,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub epochs: usize,
    pub valid_loss: f64,
    pub valid_accuracy: f64,
    /// Set when training hit a non-finite loss; metrics are then those of
    /// the last good parameters and `epochs` counts completed epochs.
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub base: TrainConfig,
    pub grid: AblationGrid,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub const CSV_HEADER: &'static str =
        "index,activation,learning_rate,batch_size,seed,epochs,valid_loss,valid_accuracy,diverged";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.index,
                r.activation,
                r.learning_rate,
                r.batch_size,
                r.seed,
                r.epochs,
                r.valid_loss,
                r.valid_accuracy,
                r.diverged
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Row with the highest validation accuracy; ties go to the earlier row.
    pub fn best(&self) -> Option<&AblationRow> {
        self.rows
            .iter()
            .fold(None, |best: Option<&AblationRow>, r| match best {
                Some(b) if b.valid_accuracy >= r.valid_accuracy => Some(b),
                _ => Some(r),
            })
    }
}

fn run_point(index: usize, cfg: &TrainConfig, split: &CorpusSplit) -> Result<AblationRow, TrainError> {
    let row = |epochs, valid_loss, valid_accuracy, diverged| AblationRow {
        index,
        activation: cfg.activation,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        epochs,
        valid_loss,
        valid_accuracy,
        diverged,
    };
    match fit(cfg, split) {
        Ok(out) => {
            let last = out.report.final_epoch().expect("epochs ≥ 1");
            Ok(row(out.report.epochs.len(), last.valid_loss, last.valid_accuracy, false))
        }
        Err(TrainError::Diverged {
            last_good_epoch,
            last_valid,
            ..
        }) => Ok(row(last_good_epoch, last_valid.loss, last_valid.accuracy, true)),
        Err(e) => Err(e),
    }
}

/// Trains every grid point and reports final validation metrics in grid
/// order, whatever the scheduling.
pub fn run_ablation(
    base: &TrainConfig,
    grid: &AblationGrid,
    split: &CorpusSplit,
    opts: AblationOptions,
) -> Result<AblationReport, TrainError> {
    if grid.is_empty() {
        return Err(TrainError::Config {
            field: "grid",
            flag: "grid",
            msg: "at least one axis needs values".into(),
        });
    }
    let mut points = grid.points(base);
    for (i, p) in points.iter_mut().enumerate() {
        if opts.per_point_seeds {
            p.seed = base.seed.wrapping_add(i as u64);
        }
        p.validate()?;
    }
    let rows: Vec<AblationRow> = if opts.parallel {
        points
            .par_iter()
            .enumerate()
            .map(|(i, p)| run_point(i, p, split))
            .collect::<Result<_, _>>()?
    } else {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| run_point(i, p, split))
            .collect::<Result<_, _>>()?
    };
    Ok(AblationReport {
        base: base.clone(),
        grid: grid.clone(),
        rows,
    })
}
