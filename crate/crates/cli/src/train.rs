//! Multi-trial training runs and checkpoint evaluation.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use tenproj_nn::checkpoint;
use tenproj_nn::data::{load_dataset, split_and_batch, Dataset, SplitBatcher};
use tenproj_nn::metrics::{write_metrics_csv, MetricsRow};
use tenproj_nn::{ModelSpec, Network, RmsProp};

use crate::config::RunConfig;
use crate::summary::{summarize, summary_csv, summary_epochs, SummaryRow};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const MODEL_FILE: &str = "model.txt";
pub const THREADS_ENV: &str = "TENPROJ_THREADS";

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub index: usize,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub trials: Vec<TrialResult>,
    pub summary: Vec<SummaryRow>,
    pub summary_path: PathBuf,
}

/// Per-trial file names, zero-padded so that they sort by trial.
pub fn trial_file_names(index: usize, trials: usize) -> (String, String) {
    let width = (trials.saturating_sub(1)).to_string().len().max(2);
    (
        format!("metrics_trial{index:0width$}.csv"),
        format!("checkpoint_trial{index:0width$}.bin"),
    )
}

/// Worker count: `TENPROJ_THREADS` if set, else the available
/// parallelism, never more than `jobs`.
pub fn worker_count(jobs: usize) -> Result<usize> {
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => n,
            _ => bail!("{THREADS_ENV} must be a positive integer, got `{v}`"),
        },
        Err(_) => std::thread::available_parallelism().map_or(1, usize::from),
    };
    Ok(cap.min(jobs).max(1))
}

/// The train and validation sets of a run: the training file split with
/// the base seed, then cut to the configured limits.
pub fn load_split(cfg: &RunConfig) -> Result<(Dataset, Dataset, SplitBatcher)> {
    let images = cfg.data_path(&cfg.train_images);
    let labels = cfg.data_path(&cfg.train_labels);
    let full = load_dataset(&images, &labels)
        .with_context(|| format!("loading training data from {}", cfg.data_dir.display()))?;
    let split = split_and_batch(full.len(), cfg.val_fraction, cfg.batch_size, cfg.seed)?
        .limit(cfg.train_limit, cfg.val_limit);
    let train = full.select(&split.train);
    let val = full.select(&split.val);
    // batches index into the compacted training set
    let batcher = SplitBatcher {
        train: (0..train.len()).collect(),
        val: (0..val.len()).collect(),
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    Ok((train, val, batcher))
}

/// Trains one trial with seed `cfg.seed + index` and returns its metrics.
pub fn train_trial(
    cfg: &RunConfig,
    spec: &ModelSpec,
    train: &Dataset,
    val: &Dataset,
    batcher: &SplitBatcher,
    index: usize,
    log: &(dyn Fn(&str) + Sync),
) -> Result<(Network, Vec<MetricsRow>)> {
    let seed = cfg.seed.wrapping_add(index as u64);
    let mut net = Network::build(spec, seed)?;
    let mut opt = RmsProp::new(cfg.lr, cfg.rho, cfg.delta);
    let batcher = SplitBatcher {
        seed,
        ..batcher.clone()
    };
    let mut rows = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for batch in batcher.epoch(epoch) {
            let xb = train.images.select(&batch);
            let yb: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
            let loss = net.train_step(&xb, &yb, &mut opt)?;
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        let (val_loss, val_acc) = net.evaluate(&val.images, &val.labels, cfg.eval_batch_size)?;
        let row = MetricsRow {
            epoch: epoch + 1,
            train_loss: loss_sum / seen as f64,
            val_loss,
            val_acc,
            seconds: if cfg.wall_clock {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        log(&format!(
            "trial {index} epoch {}/{}: train_loss {:.4} val_loss {:.4} val_acc {:.4} ({:.1} s)",
            row.epoch,
            cfg.epochs,
            row.train_loss,
            row.val_loss,
            row.val_acc,
            start.elapsed().as_secs_f64()
        ));
        rows.push(row);
    }
    Ok((net, rows))
}

/// Runs every trial, writes per-trial metrics and checkpoints, the model
/// spec and the summary into `cfg.out_dir`.
pub fn run_train(cfg: &RunConfig, log: &(dyn Fn(&str) + Sync)) -> Result<TrainOutcome> {
    let spec = cfg.model_spec()?;
    // fail on a bad model before touching data or the output directory
    Network::build(&spec, cfg.seed)?;
    let (train, val, batcher) = load_split(cfg)?;
    if train.is_empty() || val.is_empty() {
        bail!("empty training or validation set after applying limits");
    }
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    fs::write(cfg.out_dir.join(MODEL_FILE), spec.to_text())
        .with_context(|| format!("writing to {}", cfg.out_dir.display()))?;
    log(&format!(
        "{}: {} train / {} validation samples, {} batches per epoch, {} trial(s)",
        cfg.model.as_ref().map(|m| m.to_string()).unwrap_or_default(),
        train.len(),
        val.len(),
        batcher.batches_per_epoch(),
        cfg.trials
    ));

    let run_one = |index: usize| -> Result<TrialResult> {
        let (net, rows) = train_trial(cfg, &spec, &train, &val, &batcher, index, log)?;
        let (metrics_name, ckpt_name) = trial_file_names(index, cfg.trials);
        let metrics_path = cfg.out_dir.join(metrics_name);
        let checkpoint_path = cfg.out_dir.join(ckpt_name);
        write_metrics_csv(&rows, &metrics_path)?;
        checkpoint::save(&net, &checkpoint_path)?;
        Ok(TrialResult {
            index,
            seed: cfg.seed.wrapping_add(index as u64),
            rows,
            metrics_path,
            checkpoint_path,
        })
    };
    let workers = worker_count(cfg.trials)?;
    let trials: Vec<TrialResult> = if workers == 1 {
        (0..cfg.trials).map(run_one).collect::<Result<_>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()?
            .install(|| (0..cfg.trials).into_par_iter().map(run_one).collect::<Result<_>>())?
    };

    let epochs = summary_epochs(&cfg.summary_epochs, cfg.epochs);
    let all_rows: Vec<Vec<MetricsRow>> = trials.iter().map(|t| t.rows.clone()).collect();
    let summary = summarize(&all_rows, &epochs);
    let summary_path = cfg.out_dir.join(SUMMARY_FILE);
    fs::write(&summary_path, summary_csv(&summary)).with_context(|| format!("writing {}", summary_path.display()))?;
    Ok(TrainOutcome {
        trials,
        summary,
        summary_path,
    })
}

/// Loss and accuracy of a checkpoint on the test files.
pub fn run_eval(cfg: &RunConfig) -> Result<(f64, f64)> {
    let spec = cfg.model_spec()?;
    let mut net = Network::build(&spec, cfg.seed)?;
    let ckpt = cfg.checkpoint.as_ref().context("no checkpoint configured")?;
    checkpoint::load_into(&mut net, ckpt)?;
    let test = load_dataset(cfg.data_path(&cfg.test_images), cfg.data_path(&cfg.test_labels))
        .with_context(|| format!("loading test data from {}", cfg.data_dir.display()))?;
    Ok(net.evaluate(&test.images, &test.labels, cfg.eval_batch_size)?)
}
