//! Training orchestration: batching, loss assembly, early stopping, weight
//! sweeps, and best-checkpoint selection.
//!
//! Per batch the loop runs a train-mode forward pass with activation
//! capture, adds `omega` times the configured regularizer to the cross
//! entropy (skipping the term entirely at `omega == 0`), backpropagates the
//! combined adjoints in a single tape sweep, and applies SGD with momentum.
//! Validation accuracy drives early stopping; the parameters of the best
//! validation epoch are kept and evaluated on the test portion.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Dataset;
use crate::nncore::{
    forward, init_params, lr_schedule, sgd_momentum_step, MlpSpec, Mode, Params,
};
use crate::regularizers::{value_and_pull, RegKind, RegPull, RegularizerSpec};
use crate::rng::{Rng, SplitMix64, Stream};
use crate::sampler::{select_neurons, SamplerConfig};
use crate::topology::{dissimilarity_matrix, selected_activations, NeuronId};
use crate::Real;

/// Evaluation passes run in chunks of this many examples.
const EVAL_CHUNK: usize = 512;

/// Learning-rate policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum LrMode {
    /// Exponential decay `alpha0 * 0.95^(i/3520)` over iterations.
    Schedule { alpha0: f64 },
    Fixed { rate: f64 },
}

impl LrMode {
    fn at(&self, iteration: u64) -> Real {
        match *self {
            LrMode::Schedule { alpha0 } => lr_schedule(iteration, alpha0),
            LrMode::Fixed { rate } => rate,
        }
    }
}

/// How to carve train/validation indices out of the dataset's train portion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSpec {
    Fractions { train_frac: f64, val_frac: f64 },
    Explicit { train: Vec<usize>, val: Vec<usize> },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Fractions {
            train_frac: 0.8,
            val_frac: 0.2,
        }
    }
}

/// Everything one training run needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub network_id: String,
    pub mlp: MlpSpec,
    pub regularizer: RegularizerSpec,
    pub sampler: SamplerConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub momentum: f64,
    pub lr: LrMode,
    pub seed: u64,
    pub split: SplitSpec,
    /// Record per-batch (cce, reg, total) triples; off by default.
    #[serde(default)]
    pub trace_batches: bool,
}

impl TrainConfig {
    pub fn new(network_id: impl Into<String>, mlp: MlpSpec) -> Self {
        Self {
            network_id: network_id.into(),
            mlp,
            regularizer: RegularizerSpec::default(),
            sampler: SamplerConfig::default(),
            batch_size: 256,
            max_epochs: 1200,
            patience: 20,
            momentum: 0.9,
            lr: LrMode::Schedule { alpha0: 0.01 },
            seed: 0,
            split: SplitSpec::default(),
            trace_batches: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mlp.validate()?;
        self.sampler.validate()?;
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("batch_size must be >= 2".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be >= 1".into()));
        }
        if self.regularizer.omega < 0.0 {
            return Err(Error::InvalidConfig("omega must be >= 0".into()));
        }
        if let SplitSpec::Fractions {
            train_frac,
            val_frac,
        } = self.split
        {
            if !(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "split fractions ({train_frac}, {val_frac}) invalid"
                )));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 over the canonical JSON serialization; any semantically
    /// meaningful field change alters the digest.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = <sha2::Sha256 as sha2::Digest>::new();
        sha2::Digest::update(&mut hasher, json.as_bytes());
        let bytes = sha2::Digest::finalize(hasher);
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean total batch loss (cce + omega * reg) over the epoch.
    pub train_loss: Real,
    /// Mean regularizer value over the epoch (0 when skipped).
    pub reg_value: Real,
    pub val_acc: Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchTrace {
    pub cce: Real,
    pub reg: Real,
    pub total: Real,
}

/// Outcome of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub network_id: String,
    pub regularizer: RegKind,
    pub omega: f64,
    pub seed: u64,
    pub config_digest: String,
    pub status: RunStatus,
    pub epoch_log: Vec<EpochLog>,
    pub epochs_trained: usize,
    pub best_epoch: Option<usize>,
    pub best_val_acc: Option<Real>,
    /// Test accuracy of the restored best-validation checkpoint.
    pub test_acc: Option<Real>,
    /// Test accuracy of the final-epoch parameters, for comparison.
    pub final_test_acc: Option<Real>,
    pub wall_time_s: f64,
    /// Worker threads used inside the run (always 1; runs are sequential).
    pub threads: usize,
    pub batch_trace: Vec<BatchTrace>,
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

/// Deterministic shuffled split of the dataset's train portion.
///
/// With fractions `(t, v)` summing to one the result is a partition; if they
/// sum to less, the tail stays unused. Index order inside each side follows
/// the shuffle.
pub fn split_dataset(
    dataset: &Dataset,
    split: &SplitSpec,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = dataset.train.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    match split {
        SplitSpec::Explicit { train, val } => {
            if let Some(&bad) = train.iter().chain(val).find(|&&i| i >= n) {
                return Err(Error::InvalidConfig(format!(
                    "explicit split index {bad} out of range for {n} training examples"
                )));
            }
            Ok((train.clone(), val.clone()))
        }
        SplitSpec::Fractions {
            train_frac,
            val_frac,
        } => {
            let mut indices: Vec<usize> = (0..n).collect();
            Rng::new(seed, Stream::Split).shuffle(&mut indices);
            let n_train = (train_frac * n as f64).floor() as usize;
            let n_val = if (train_frac + val_frac - 1.0).abs() < 1e-12 {
                n - n_train
            } else {
                (val_frac * n as f64).floor() as usize
            };
            let val = indices.split_off(n_train);
            let val = val[..n_val.min(val.len())].to_vec();
            Ok((indices, val))
        }
    }
}

/// Splits shuffled indices into batches of `batch_size`, folding a trailing
/// singleton into the previous batch so every batch has at least two
/// examples.
fn batch_ranges(total: usize, batch_size: usize) -> Vec<(usize, usize)> {
    let mut ranges = Vec::new();
    let mut start = 0;
    while start < total {
        let end = (start + batch_size).min(total);
        ranges.push((start, end));
        start = end;
    }
    if ranges.len() >= 2 && ranges.last().is_some_and(|&(s, e)| e - s < 2) {
        let last = ranges.pop().unwrap();
        ranges.last_mut().unwrap().1 = last.1;
    }
    ranges
}

/// Accuracy of the argmax prediction over the indexed examples.
fn evaluate_accuracy(
    params: &Params<Real>,
    dataset_portion: &crate::io::Portion,
    indices: &[usize],
) -> Result<Real> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (start, end) in batch_ranges(indices.len(), EVAL_CHUNK) {
        let (x, labels) = dataset_portion.gather(&indices[start..end]);
        let (tape, logits, _) = forward(params, &x, Mode::Eval, 0)?;
        let out = tape.matrix(logits);
        for (col, &label) in labels.iter().enumerate() {
            let mut arg = 0;
            let mut best = out[(0, col)];
            for row in 1..out.nrows() {
                if out[(row, col)] > best {
                    best = out[(row, col)];
                    arg = row;
                }
            }
            if arg == label {
                correct += 1;
            }
        }
    }
    Ok(correct as Real / indices.len() as Real)
}

/// Mean absolute pairwise correlation among all hidden neurons, measured on
/// the indexed examples with an eval-mode forward pass. Invalid (dead) pairs
/// are excluded from the mean.
pub fn mean_hidden_abs_correlation(
    params: &Params<Real>,
    dataset_portion: &crate::io::Portion,
    indices: &[usize],
) -> Result<Real> {
    let (x, _) = dataset_portion.gather(indices);
    let (_, _, capture) = forward(params, &x, Mode::Eval, 0)?;
    let hidden: Vec<NeuronId> = (0..capture.output_layer())
        .flat_map(|layer| (0..capture.units(layer)).map(move |unit| NeuronId { layer, unit }))
        .collect();
    let acts = selected_activations(&capture, &hidden);
    let (corr, _) = dissimilarity_matrix(&acts)?;
    let c = corr.size();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..c {
        for j in (i + 1)..c {
            if corr.valid[(i, j)] {
                sum += corr.values[(i, j)].abs();
                count += 1;
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as Real })
}

/// Runs one training and returns the record plus the restored
/// best-validation parameters (when any epoch completed).
pub fn train_with_artifacts(
    config: &TrainConfig,
    dataset: &Dataset,
) -> Result<(RunRecord, Option<Params<Real>>)> {
    config.validate()?;
    dataset.validate()?;
    let started = Instant::now();
    let (train_idx, val_idx) = split_dataset(dataset, &config.split, config.seed)?;
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::InvalidConfig(
            "split produced an empty train or validation set".into(),
        ));
    }

    let mut params: Params<Real> = init_params(&config.mlp, config.seed)?;
    let mut shuffle_rng = Rng::new(config.seed, Stream::Shuffle);
    let mut dropout_seeds = SplitMix64::new(config.seed ^ Stream::Dropout as u64);
    let omega = config.regularizer.omega;
    let apply_reg = omega > 0.0 && config.regularizer.kind != RegKind::None;

    let mut order = train_idx.clone();
    let mut status = RunStatus::Completed;
    let mut epoch_log: Vec<EpochLog> = Vec::new();
    let mut batch_trace: Vec<BatchTrace> = Vec::new();
    let mut best: Option<(Real, usize, Params<Real>)> = None;
    let mut strikes = 0usize;
    let mut iteration: u64 = 0;
    let mut epochs_trained = 0usize;

    'training: for epoch in 1..=config.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut reg_sum = 0.0;
        let mut batches = 0usize;

        for (start, end) in batch_ranges(order.len(), config.batch_size) {
            let (x, labels) = dataset.train.gather(&order[start..end]);
            let dropout_seed = dropout_seeds.next_u64();
            let (mut tape, logits, capture) = forward(&params, &x, Mode::Train, dropout_seed)?;
            let cce_node = tape.cce(logits, labels)?;
            let cce = tape.scalar(cce_node).expect("cce node is scalar");

            let (total, reg_val, grads) = if apply_reg {
                let selected = select_neurons(&capture, &config.sampler)?;
                let (rv, pull) =
                    value_and_pull(&config.regularizer, &capture, &selected, &params)?;
                let grads = match pull {
                    RegPull::ActivationSeeds(seeds) => {
                        let scaled: Vec<_> =
                            seeds.into_iter().map(|(n, m)| (n, m * omega)).collect();
                        tape.backward_seeded(&params, Some(cce_node), &scaled)?
                    }
                    RegPull::ParamGrads(direct) => {
                        let mut g = tape.backward(&params, cce_node)?;
                        g.add_scaled(&direct, omega);
                        g
                    }
                };
                (cce + omega * rv, rv, grads)
            } else {
                (cce, 0.0, tape.backward(&params, cce_node)?)
            };

            if !total.is_finite() {
                status = RunStatus::Diverged;
                break 'training;
            }
            if config.trace_batches {
                batch_trace.push(BatchTrace {
                    cce,
                    reg: reg_val,
                    total,
                });
            }
            let lr = config.lr.at(iteration);
            sgd_momentum_step(&mut params, &grads, lr, config.momentum);
            iteration += 1;
            loss_sum += total;
            reg_sum += reg_val;
            batches += 1;
        }

        let val_acc = evaluate_accuracy(&params, &dataset.train, &val_idx)?;
        epochs_trained = epoch;
        epoch_log.push(EpochLog {
            epoch,
            train_loss: loss_sum / batches.max(1) as Real,
            reg_value: reg_sum / batches.max(1) as Real,
            val_acc,
        });

        let improved = best.as_ref().is_none_or(|(acc, _, _)| val_acc > *acc);
        if improved {
            best = Some((val_acc, epoch, params.clone()));
            strikes = 0;
        } else {
            strikes += 1;
            if strikes >= config.patience {
                break;
            }
        }
    }

    let test_all: Vec<usize> = (0..dataset.test.len()).collect();
    let (best_epoch, best_val_acc, best_params, test_acc, final_test_acc) = match &best {
        Some((acc, epoch, bp)) if status == RunStatus::Completed => {
            let test_acc = evaluate_accuracy(bp, &dataset.test, &test_all)?;
            let final_acc = evaluate_accuracy(&params, &dataset.test, &test_all)?;
            (
                Some(*epoch),
                Some(*acc),
                Some(bp.clone()),
                Some(test_acc),
                Some(final_acc),
            )
        }
        _ => (None, None, None, None, None),
    };

    let record = RunRecord {
        network_id: config.network_id.clone(),
        regularizer: config.regularizer.kind,
        omega,
        seed: config.seed,
        config_digest: config.digest(),
        status,
        epoch_log,
        epochs_trained,
        best_epoch,
        best_val_acc,
        test_acc,
        final_test_acc,
        wall_time_s: started.elapsed().as_secs_f64(),
        threads: 1,
        batch_trace,
    };
    Ok((record, best_params))
}

/// Runs one training and returns its record.
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<RunRecord> {
    train_with_artifacts(config, dataset).map(|(record, _)| record)
}

/// One run per weight, same seed throughout; zero weights are trained as
/// plain baselines. Run-level errors become diverged-style failed records so
/// a sweep cannot die half way.
pub fn sweep(
    base: &TrainConfig,
    dataset: &Dataset,
    omegas: &[f64],
    workers: usize,
) -> Result<Vec<RunRecord>> {
    if omegas.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one weight".into()));
    }
    base.validate()?;
    let run_one = |&omega: &f64| -> RunRecord {
        let mut config = base.clone();
        config.regularizer.omega = omega;
        match train(&config, dataset) {
            Ok(record) => record,
            Err(_) => RunRecord {
                network_id: config.network_id.clone(),
                regularizer: config.regularizer.kind,
                omega,
                seed: config.seed,
                config_digest: config.digest(),
                status: RunStatus::Diverged,
                epoch_log: Vec::new(),
                epochs_trained: 0,
                best_epoch: None,
                best_val_acc: None,
                test_acc: None,
                final_test_acc: None,
                wall_time_s: 0.0,
                threads: 1,
                batch_trace: Vec::new(),
            },
        }
    };
    if workers <= 1 {
        Ok(omegas.iter().map(run_one).collect())
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
        Ok(pool.install(|| omegas.par_iter().map(run_one).collect()))
    }
}

/// Picks the weight with the best validation accuracy (ties go to the
/// smaller weight) and reports that run's test accuracy.
pub fn select_best_weight(records: &[RunRecord]) -> Result<(f64, Real)> {
    let mut best: Option<&RunRecord> = None;
    for record in records.iter().filter(|r| r.succeeded()) {
        let (Some(val), Some(_)) = (record.best_val_acc, record.test_acc) else {
            continue;
        };
        let better = match best {
            None => true,
            Some(cur) => {
                let cur_val = cur.best_val_acc.unwrap();
                val > cur_val || (val == cur_val && record.omega < cur.omega)
            }
        };
        if better {
            best = Some(record);
        }
    }
    best.map(|r| (r.omega, r.test_acc.unwrap()))
        .ok_or(Error::AllRunsFailed)
}
