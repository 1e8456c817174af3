//! Instrumented training at desk scale: plain SGD (no momentum, no
//! weight decay, constant learning rate) over replicate runs, recording
//! every signal the score computations consume.
//!
//! Run `r` of an experiment is a pure function of (config, `r`): model
//! initialization and per-epoch shuffling derive from `base_seed + r`,
//! and all reductions are fixed-order, so re-running any subset of runs
//! reproduces identical traces.

pub mod dataset;
pub mod model;
pub mod trace;

pub use dataset::{synthetic_blobs, load_raw_binary, BlobSpec, Dataset, LabelSet};
pub use model::{
    build_model, InputGradSource, InputShape, ModelConfig, ModelFamily, Network, Workspace,
};
pub use trace::{TraceMeta, TraceStore};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stats::derive_seed;

/// Mean epoch loss above this aborts the run as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

const STREAM_SHUFFLE: u64 = 0x5348_5546; // "SHUF"

/// Full description of a replicated training experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset_name: String,
    pub n_examples: usize,
    pub model: ModelConfig,
    pub n_runs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epoch (1-based) at which probabilities and gradient norms are captured.
    pub checkpoint_epoch: usize,
    /// Epochs between input-gradient snapshots.
    pub vog_interval: usize,
    pub vog_source: InputGradSource,
    pub base_seed: i64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig { msg });
        if self.n_examples == 0 {
            return bad("n_examples must be positive".into());
        }
        if self.n_runs == 0 {
            return bad("n_runs must be positive".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0) && self.learning_rate != 0.0 {
            return bad(format!("learning_rate must be finite, got {}", self.learning_rate));
        }
        if self.checkpoint_epoch == 0 || self.checkpoint_epoch > self.epochs {
            return bad(format!(
                "checkpoint_epoch ({}) must satisfy 1 <= checkpoint_epoch <= epochs ({})",
                self.checkpoint_epoch, self.epochs
            ));
        }
        if self.vog_interval == 0 {
            return bad("vog_interval must be positive".into());
        }
        Ok(())
    }

    pub fn run_seed(&self, run_index: usize) -> i64 {
        self.base_seed + run_index as i64
    }
}

/// Default checkpoint epoch: `ceil(epochs / 8)`.
pub fn default_checkpoint_epoch(epochs: usize) -> usize {
    epochs.div_ceil(8)
}

/// Execute one training run and collect its trace.
pub fn run_training(
    exp: &ExperimentConfig,
    dataset: &Dataset,
    run_index: usize,
) -> Result<TraceStore> {
    exp.validate()?;
    if dataset.n_examples() != exp.n_examples {
        return Err(Error::ShapeMismatch {
            msg: format!(
                "dataset has {} examples, config says {}",
                dataset.n_examples(),
                exp.n_examples
            ),
        });
    }
    let n = exp.n_examples;
    let n_classes = dataset.labels.n_classes();
    let seed = exp.run_seed(run_index);
    let net_seed = seed as u64;
    let mut net = build_model(&exp.model, dataset.input_shape, n_classes, net_seed)?;
    let mut ws = net.workspace();
    let dim = dataset.input_shape.dim();

    let n_snapshots = exp.epochs / exp.vog_interval;
    let mut store = TraceStore {
        meta: TraceMeta {
            dataset_name: exp.dataset_name.clone(),
            run_index,
            run_seed: seed,
            n_examples: n,
            n_classes,
            input_shape: dataset.input_shape,
            epochs: exp.epochs,
            batch_size: exp.batch_size,
            learning_rate: exp.learning_rate,
            checkpoint_epoch: exp.checkpoint_epoch,
            vog_interval: exp.vog_interval,
            vog_source: exp.vog_source,
            model: net.config.clone(),
        },
        eval_loss: vec![0.0; exp.epochs * n],
        eval_true_prob: vec![0.0; exp.epochs * n],
        eval_max_other_prob: vec![0.0; exp.epochs * n],
        eval_correct: vec![false; exp.epochs * n],
        minibatch_correct: vec![false; exp.epochs * n],
        checkpoint_probs: vec![0.0; n * n_classes],
        checkpoint_grad_norm: vec![0.0; n],
        vog_epochs: Vec::with_capacity(n_snapshots),
        vog_grads: Vec::with_capacity(n_snapshots * n * dim),
    };

    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_grad = vec![0.0; net.param_count()];
    let mut scratch_grad = vec![0.0; net.param_count()];
    let mut input_grad = vec![0.0; dim];

    for epoch in 1..=exp.epochs {
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(net_seed, STREAM_SHUFFLE, epoch as u64));
        order.shuffle(&mut shuffle_rng);

        for batch in order.chunks(exp.batch_size) {
            batch_grad.fill(0.0);
            for &i in batch {
                net.forward(dataset.input(i), &mut ws);
                let label = dataset.labels.label(i);
                store.minibatch_correct[(epoch - 1) * n + i] = net.predicted_class(&ws) == label;
                net.backward_params(&mut ws, label, &mut batch_grad);
            }
            let scale = exp.learning_rate / batch.len() as f64;
            for (p, g) in net.params_mut().iter_mut().zip(batch_grad.iter()) {
                *p -= scale * g;
            }
        }

        // end-of-epoch instrumentation pass: one forward per example
        let is_checkpoint = epoch == exp.checkpoint_epoch;
        let is_vog = epoch % exp.vog_interval == 0;
        if is_vog {
            store.vog_epochs.push(epoch);
            store.vog_grads.resize(store.vog_epochs.len() * n * dim, 0.0);
        }
        let mut loss_sum = 0.0;
        for i in 0..n {
            let label = dataset.labels.label(i);
            net.forward(dataset.input(i), &mut ws);
            let probs = net.probs(&ws);
            let true_prob = probs[label];
            let mut max_other = 0.0;
            for (c, &p) in probs.iter().enumerate() {
                if c != label && p > max_other {
                    max_other = p;
                }
            }
            let loss = net.loss(&ws, label);
            let idx = (epoch - 1) * n + i;
            store.eval_loss[idx] = loss;
            store.eval_true_prob[idx] = true_prob;
            store.eval_max_other_prob[idx] = max_other;
            store.eval_correct[idx] = net.predicted_class(&ws) == label;
            loss_sum += loss;

            if is_checkpoint {
                store.checkpoint_probs[i * n_classes..(i + 1) * n_classes].copy_from_slice(probs);
                scratch_grad.fill(0.0);
                net.backward_params(&mut ws, label, &mut scratch_grad);
                let norm = scratch_grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                store.checkpoint_grad_norm[i] = norm;
                // backward_params consumed the workspace deltas; redo the
                // forward before the input-gradient pass below
                if is_vog {
                    net.forward(dataset.input(i), &mut ws);
                }
            }
            if is_vog {
                net.backward_input(&mut ws, label, exp.vog_source, &mut input_grad);
                let s = store.vog_epochs.len() - 1;
                let base = (s * n + i) * dim;
                store.vog_grads[base..base + dim].copy_from_slice(&input_grad);
            }
        }
        let mean_loss = loss_sum / n as f64;
        if !mean_loss.is_finite() || mean_loss > DIVERGENCE_LOSS {
            return Err(Error::Diverged {
                run: run_index,
                seed,
                epoch,
                mean_loss,
            });
        }
    }
    Ok(store)
}

/// Train all replicates, returning traces ordered by run index.
pub fn run_replicates(exp: &ExperimentConfig, dataset: &Dataset) -> Result<Vec<TraceStore>> {
    run_replicates_with(exp, dataset, |_, trace| Ok(trace))
}

/// Train all replicates, mapping each finished trace through `f` inside
/// the worker so large traces can be reduced or written out immediately.
/// Results are ordered by run index; per-run failures carry the index.
pub fn run_replicates_with<T: Send>(
    exp: &ExperimentConfig,
    dataset: &Dataset,
    f: impl Fn(usize, TraceStore) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    exp.validate()?;
    (0..exp.n_runs)
        .into_par_iter()
        .map(|run| {
            let trace = run_training(exp, dataset, run).map_err(|e| wrap_run(run, e))?;
            f(run, trace).map_err(|e| wrap_run(run, e))
        })
        .collect()
}

fn wrap_run(run: usize, e: Error) -> Error {
    match e {
        e @ Error::RunFailed { .. } => e,
        other => Error::RunFailed {
            run,
            source: Box::new(other),
        },
    }
}
