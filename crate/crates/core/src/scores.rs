//! The difficulty-score catalog: eight scores computed from training
//! traces, one [`ScoreMatrix`] per (kind, model) pair.
//!
//! Forgetting and consistently-learned read the time-of-use minibatch
//! series by default; the per-epoch evaluation series is available via
//! [`SeriesSource::EpochEval`]. VoG defaults to unnormalized variances of
//! the recorded input gradients; [`VogOptions::class_normalize`] z-scores
//! the result within each label class.

use crate::error::{Error, Result};
use crate::matrix::{ScoreKind, ScoreMatrix};
use crate::stats::mean;
use crate::trainer::{LabelSet, TraceStore};

/// One requested score computation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRequest {
    pub kind: ScoreKind,
    /// Required for GraNd and EL2N, forbidden otherwise.
    pub checkpoint_epoch: Option<usize>,
    /// Consistently-learned sentinel; defaults to `epochs + 1`.
    pub sentinel_never_learned: Option<f64>,
}

impl ScoreRequest {
    pub fn new(kind: ScoreKind) -> Self {
        ScoreRequest {
            kind,
            checkpoint_epoch: None,
            sentinel_never_learned: None,
        }
    }

    pub fn with_checkpoint(kind: ScoreKind, epoch: usize) -> Self {
        ScoreRequest {
            kind,
            checkpoint_epoch: Some(epoch),
            sentinel_never_learned: None,
        }
    }

    /// Requests for all eight computed kinds against one experiment.
    pub fn all_computed(checkpoint_epoch: usize) -> Vec<ScoreRequest> {
        ScoreKind::computed()
            .into_iter()
            .map(|kind| match kind {
                ScoreKind::Grand | ScoreKind::El2n => {
                    ScoreRequest::with_checkpoint(kind, checkpoint_epoch)
                }
                other => ScoreRequest::new(other),
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let needs_checkpoint = matches!(self.kind, ScoreKind::Grand | ScoreKind::El2n);
        if needs_checkpoint != self.checkpoint_epoch.is_some() {
            return Err(Error::InvalidConfig {
                msg: format!(
                    "checkpoint_epoch must be present iff the kind is grand or el2n (kind {})",
                    self.kind
                ),
            });
        }
        Ok(())
    }
}

/// Which correctness series forgetting-style scores read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesSource {
    /// Correctness sampled when the example's minibatch is used (default).
    TimeOfUse,
    /// Correctness from the end-of-epoch evaluation pass.
    EpochEval,
}

/// VoG variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VogOptions {
    /// Z-score the per-example values within each label class.
    pub class_normalize: bool,
}

fn validate_same_experiment(traces: &[TraceStore]) -> Result<()> {
    let first = match traces.first() {
        Some(t) => &t.meta,
        None => {
            return Err(Error::ShapeMismatch {
                msg: "no traces supplied".into(),
            })
        }
    };
    for t in &traces[1..] {
        let m = &t.meta;
        let same = m.dataset_name == first.dataset_name
            && m.n_examples == first.n_examples
            && m.n_classes == first.n_classes
            && m.input_shape == first.input_shape
            && m.epochs == first.epochs
            && m.batch_size == first.batch_size
            && m.learning_rate == first.learning_rate
            && m.checkpoint_epoch == first.checkpoint_epoch
            && m.vog_interval == first.vog_interval
            && m.vog_source == first.vog_source
            && m.model == first.model;
        if !same {
            return Err(Error::ShapeMismatch {
                msg: format!(
                    "trace for run {} comes from a different experiment than run {}",
                    m.run_index, first.run_index
                ),
            });
        }
    }
    Ok(())
}

fn assemble(
    traces: &[TraceStore],
    kind: ScoreKind,
    checkpoint_epoch: Option<usize>,
    columns: Vec<Vec<f64>>,
) -> Result<ScoreMatrix> {
    let meta = &traces[0].meta;
    let n = meta.n_examples;
    let r = traces.len();
    let mut values = vec![0.0; n * r];
    for (run, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            values[i * r + run] = v;
        }
    }
    ScoreMatrix::new(
        kind,
        Some(meta.model.clone()),
        meta.dataset_name.clone(),
        n,
        values,
        traces.iter().map(|t| t.meta.run_seed).collect(),
        checkpoint_epoch,
    )
}

fn per_run<F>(traces: &[TraceStore], kind: ScoreKind, f: F) -> Result<ScoreMatrix>
where
    F: Fn(&TraceStore) -> Result<Vec<f64>>,
{
    validate_same_experiment(traces)?;
    let columns = traces.iter().map(&f).collect::<Result<Vec<_>>>()?;
    assemble(traces, kind, None, columns)
}

fn mean_loss_column(trace: &TraceStore) -> Vec<f64> {
    let n = trace.n_examples();
    let epochs = trace.epochs();
    (0..n)
        .map(|i| {
            let sum: f64 = (0..epochs).map(|e| trace.eval_loss_at(e, i)).sum();
            sum / epochs as f64
        })
        .collect()
}

/// Mean cross-entropy loss over training, per example and run.
pub fn mean_loss(traces: &[TraceStore]) -> Result<ScoreMatrix> {
    per_run(traces, ScoreKind::MeanLoss, |t| Ok(mean_loss_column(t)))
}

fn mean_accuracy_column(trace: &TraceStore) -> Vec<f64> {
    let n = trace.n_examples();
    let epochs = trace.epochs();
    (0..n)
        .map(|i| {
            let sum: f64 = trace.eval_series(i).map(|c| c as u8 as f64).sum();
            sum / epochs as f64
        })
        .collect()
}

/// Mean zero-one accuracy over training, per example and run.
pub fn mean_accuracy(traces: &[TraceStore]) -> Result<ScoreMatrix> {
    per_run(traces, ScoreKind::MeanAccuracy, |t| {
        Ok(mean_accuracy_column(t))
    })
}

fn aum_column(trace: &TraceStore) -> Vec<f64> {
    let n = trace.n_examples();
    let epochs = trace.epochs();
    (0..n)
        .map(|i| {
            let sum: f64 = (0..epochs).map(|e| trace.margin_at(e, i)).sum();
            sum / epochs as f64
        })
        .collect()
}

/// Area under the margin: mean over training of true-class probability
/// minus the highest other-class probability.
pub fn area_under_margin(traces: &[TraceStore]) -> Result<ScoreMatrix> {
    per_run(traces, ScoreKind::AreaUnderMargin, |t| Ok(aum_column(t)))
}

fn series_of(trace: &TraceStore, example: usize, source: SeriesSource) -> Vec<bool> {
    match source {
        SeriesSource::TimeOfUse => trace.minibatch_series(example).collect(),
        SeriesSource::EpochEval => trace.eval_series(example).collect(),
    }
}

fn count_forgetting(series: &[bool]) -> f64 {
    series.windows(2).filter(|w| w[0] && !w[1]).count() as f64
}

/// Number of correct-to-incorrect transitions in the chosen series.
pub fn forgetting_count_from(traces: &[TraceStore], source: SeriesSource) -> Result<ScoreMatrix> {
    per_run(traces, ScoreKind::Forgetting, |t| {
        Ok((0..t.n_examples())
            .map(|i| count_forgetting(&series_of(t, i, source)))
            .collect())
    })
}

/// Forgetting events on the time-of-use series.
pub fn forgetting_count(traces: &[TraceStore]) -> Result<ScoreMatrix> {
    forgetting_count_from(traces, SeriesSource::TimeOfUse)
}

fn learned_index(series: &[bool], sentinel: f64) -> f64 {
    if !series.last().copied().unwrap_or(false) {
        return sentinel;
    }
    let mut start = series.len() - 1;
    while start > 0 && series[start - 1] {
        start -= 1;
    }
    start as f64
}

/// Start index of the final all-correct suffix of the chosen series;
/// `sentinel` when the series ends incorrect.
pub fn consistently_learned_from(
    traces: &[TraceStore],
    sentinel: f64,
    source: SeriesSource,
) -> Result<ScoreMatrix> {
    per_run(traces, ScoreKind::ConsistentlyLearned, |t| {
        Ok((0..t.n_examples())
            .map(|i| learned_index(&series_of(t, i, source), sentinel))
            .collect())
    })
}

/// Consistently-learned index on the time-of-use series.
pub fn consistently_learned(traces: &[TraceStore], sentinel: f64) -> Result<ScoreMatrix> {
    consistently_learned_from(traces, sentinel, SeriesSource::TimeOfUse)
}

fn check_checkpoint(trace: &TraceStore, requested: usize) -> Result<()> {
    if requested != trace.meta.checkpoint_epoch
        || requested > trace.meta.epochs
        || trace.checkpoint_probs.is_empty()
    {
        return Err(Error::MissingCheckpoint {
            requested,
            actual: Some(trace.meta.checkpoint_epoch),
        });
    }
    Ok(())
}

fn el2n_column(trace: &TraceStore, labels: &LabelSet) -> Vec<f64> {
    let n = trace.n_examples();
    (0..n)
        .map(|i| {
            let label = labels.label(i);
            let mut ss = 0.0;
            for (c, &p) in trace.checkpoint_prob_row(i).iter().enumerate() {
                let y = if c == label { 1.0 } else { 0.0 };
                ss += (p - y) * (p - y);
            }
            ss.sqrt()
        })
        .collect()
}

/// L2 norm of the output-probability error at the checkpoint epoch.
pub fn el2n(
    traces: &[TraceStore],
    labels: &LabelSet,
    checkpoint_epoch: usize,
) -> Result<ScoreMatrix> {
    validate_same_experiment(traces)?;
    if labels.len() != traces[0].n_examples() {
        return Err(Error::ShapeMismatch {
            msg: format!(
                "{} labels for {} examples",
                labels.len(),
                traces[0].n_examples()
            ),
        });
    }
    let columns = traces
        .iter()
        .map(|t| {
            check_checkpoint(t, checkpoint_epoch)?;
            Ok(el2n_column(t, labels))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(traces, ScoreKind::El2n, Some(checkpoint_epoch), columns)
}

/// Per-example parameter-gradient norm at the checkpoint epoch.
pub fn grand(traces: &[TraceStore], checkpoint_epoch: usize) -> Result<ScoreMatrix> {
    validate_same_experiment(traces)?;
    let columns = traces
        .iter()
        .map(|t| {
            check_checkpoint(t, checkpoint_epoch)?;
            Ok(t.checkpoint_grad_norm.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(traces, ScoreKind::Grand, Some(checkpoint_epoch), columns)
}

fn vog_column(trace: &TraceStore) -> Result<Vec<f64>> {
    let s = trace.vog_epochs.len();
    if s < 2 {
        return Err(Error::InsufficientSnapshots { found: s });
    }
    let n = trace.n_examples();
    let d = trace.input_dim();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut var_sum = 0.0;
        for k in 0..d {
            let mut m = 0.0;
            for snap in 0..s {
                m += trace.vog_grad_row(snap, i)[k];
            }
            m /= s as f64;
            let mut ss = 0.0;
            for snap in 0..s {
                let g = trace.vog_grad_row(snap, i)[k];
                ss += (g - m) * (g - m);
            }
            var_sum += ss / s as f64; // population variance
        }
        out.push(var_sum / d as f64);
    }
    Ok(out)
}

fn class_normalize(column: &mut [f64], labels: &LabelSet) {
    let c = labels.n_classes();
    let mut sums = vec![0.0; c];
    let mut counts = vec![0usize; c];
    for (i, v) in column.iter().enumerate() {
        sums[labels.label(i)] += v;
        counts[labels.label(i)] += 1;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &k)| s / k.max(1) as f64)
        .collect();
    let mut sq = vec![0.0; c];
    for (i, v) in column.iter().enumerate() {
        let d = v - means[labels.label(i)];
        sq[labels.label(i)] += d * d;
    }
    let stds: Vec<f64> = sq
        .iter()
        .zip(&counts)
        .map(|(s, &k)| (s / k.max(1) as f64).sqrt())
        .collect();
    for (i, v) in column.iter_mut().enumerate() {
        let l = labels.label(i);
        *v = if stds[l] > 0.0 {
            (*v - means[l]) / stds[l]
        } else {
            0.0
        };
    }
}

/// Mean over input dimensions of the across-snapshot variance of the
/// recorded input gradients.
pub fn vog_with(
    traces: &[TraceStore],
    labels: Option<&LabelSet>,
    options: VogOptions,
) -> Result<ScoreMatrix> {
    validate_same_experiment(traces)?;
    if options.class_normalize && labels.is_none() {
        return Err(Error::InvalidConfig {
            msg: "class-normalized VoG needs labels".into(),
        });
    }
    let columns = traces
        .iter()
        .map(|t| {
            let mut col = vog_column(t)?;
            if options.class_normalize {
                class_normalize(&mut col, labels.unwrap());
            }
            Ok(col)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(traces, ScoreKind::Vog, None, columns)
}

/// VoG with default options.
pub fn vog(traces: &[TraceStore]) -> Result<ScoreMatrix> {
    vog_with(traces, None, VogOptions::default())
}

/// Compute every requested score; errors carry the failing kind.
pub fn compute_all(
    traces: &[TraceStore],
    labels: &LabelSet,
    requests: &[ScoreRequest],
) -> Result<Vec<ScoreMatrix>> {
    if requests.is_empty() {
        return Ok(Vec::new());
    }
    validate_same_experiment(traces)?;
    requests
        .iter()
        .map(|req| compute_one(traces, labels, req))
        .collect()
}

fn compute_one(
    traces: &[TraceStore],
    labels: &LabelSet,
    req: &ScoreRequest,
) -> Result<ScoreMatrix> {
    let attach = |e: Error| Error::ScoreFailed {
        kind: req.kind.label(),
        source: Box::new(e),
    };
    req.validate().map_err(attach)?;
    let epochs = traces.first().map(|t| t.epochs()).unwrap_or(0);
    let sentinel = req
        .sentinel_never_learned
        .unwrap_or((epochs + 1) as f64);
    let result = match &req.kind {
        ScoreKind::MeanLoss => mean_loss(traces),
        ScoreKind::MeanAccuracy => mean_accuracy(traces),
        ScoreKind::AreaUnderMargin => area_under_margin(traces),
        ScoreKind::Forgetting => forgetting_count(traces),
        ScoreKind::ConsistentlyLearned => consistently_learned(traces, sentinel),
        ScoreKind::Grand => grand(traces, req.checkpoint_epoch.unwrap()),
        ScoreKind::El2n => el2n(traces, labels, req.checkpoint_epoch.unwrap()),
        ScoreKind::Vog => vog(traces),
        ScoreKind::External { .. } => Err(Error::InvalidConfig {
            msg: "external kinds are imported, not computed".into(),
        }),
    };
    result.map_err(attach)
}

/// Per-run score columns for one trace, parallel to `requests`. Lets
/// callers stream run directories without holding every trace at once.
pub fn run_scores(
    trace: &TraceStore,
    labels: &LabelSet,
    requests: &[ScoreRequest],
) -> Result<Vec<Vec<f64>>> {
    let one = std::slice::from_ref(trace);
    requests
        .iter()
        .map(|req| {
            let m = compute_one(one, labels, req)?;
            Ok(m.raw_column(0))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::population_variance;
    use crate::trainer::trace::TraceMeta;
    use crate::trainer::{InputGradSource, InputShape, ModelConfig, ModelFamily};
    use approx::assert_relative_eq;

    fn test_meta(n: usize, epochs: usize, n_classes: usize, shape: InputShape) -> TraceMeta {
        TraceMeta {
            dataset_name: "test".into(),
            run_index: 0,
            run_seed: 0,
            n_examples: n,
            n_classes,
            input_shape: shape,
            epochs,
            batch_size: n,
            learning_rate: 0.1,
            checkpoint_epoch: 1,
            vog_interval: 1,
            vog_source: InputGradSource::Loss,
            model: ModelConfig::new(ModelFamily::Mlp, 1.0, 1),
        }
    }

    fn blank_trace(n: usize, epochs: usize, n_classes: usize, shape: InputShape) -> TraceStore {
        let dim = shape.dim();
        TraceStore {
            meta: test_meta(n, epochs, n_classes, shape),
            eval_loss: vec![0.0; epochs * n],
            eval_true_prob: vec![1.0; epochs * n],
            eval_max_other_prob: vec![0.0; epochs * n],
            eval_correct: vec![true; epochs * n],
            minibatch_correct: vec![true; epochs * n],
            checkpoint_probs: vec![0.0; n * n_classes],
            checkpoint_grad_norm: vec![0.0; n],
            vog_epochs: (1..=epochs).collect(),
            vog_grads: vec![0.0; epochs * n * dim],
        }
    }

    fn shape1() -> InputShape {
        InputShape::new(1, 1, 1)
    }

    fn set_minibatch(trace: &mut TraceStore, example: usize, series: &[bool]) {
        let n = trace.n_examples();
        for (e, &v) in series.iter().enumerate() {
            trace.minibatch_correct[e * n + example] = v;
        }
    }

    #[test]
    fn mean_loss_examples() {
        let mut t = blank_trace(3, 3, 2, shape1());
        // example 0: [0,0,0]; example 1: [1.0, 0.5, 0.25]; example 2: constant 0.7
        for (e, &v) in [1.0, 0.5, 0.25].iter().enumerate() {
            t.eval_loss[e * 3 + 1] = v;
        }
        for e in 0..3 {
            t.eval_loss[e * 3 + 2] = 0.7;
        }
        let m = mean_loss(&[t]).unwrap();
        assert_eq!(m.value(0, 0), 0.0);
        assert_relative_eq!(m.value(1, 0), 1.75 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(m.value(2, 0), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn mean_accuracy_examples() {
        let mut t = blank_trace(3, 4, 2, shape1());
        // example 1: [1,0,1,0]; example 2: never correct
        for e in 0..4 {
            t.eval_correct[e * 3 + 1] = e % 2 == 0;
            t.eval_correct[e * 3 + 2] = false;
        }
        let m = mean_accuracy(&[t]).unwrap();
        assert_eq!(m.value(0, 0), 1.0);
        assert_eq!(m.value(1, 0), 0.5);
        assert_eq!(m.value(2, 0), 0.0);
    }

    #[test]
    fn aum_examples() {
        let mut t = blank_trace(3, 1, 10, shape1());
        // example 0: true 1, others 0 -> 1
        // example 1: uniform ten-way -> 0
        t.eval_true_prob[1] = 0.1;
        t.eval_max_other_prob[1] = 0.1;
        // example 2: true 0.2, max other 0.5 -> -0.3
        t.eval_true_prob[2] = 0.2;
        t.eval_max_other_prob[2] = 0.5;
        let m = area_under_margin(&[t]).unwrap();
        assert_eq!(m.value(0, 0), 1.0);
        assert_eq!(m.value(1, 0), 0.0);
        assert_relative_eq!(m.value(2, 0), -0.3, epsilon = 1e-12);
    }

    #[test]
    fn forgetting_examples() {
        let mut t = blank_trace(3, 4, 2, shape1());
        set_minibatch(&mut t, 0, &[false, true, true, true]);
        set_minibatch(&mut t, 1, &[true, false, true, false]);
        set_minibatch(&mut t, 2, &[false, false, false, false]);
        let m = forgetting_count(&[t]).unwrap();
        assert_eq!(m.value(0, 0), 0.0);
        assert_eq!(m.value(1, 0), 2.0);
        assert_eq!(m.value(2, 0), 0.0);
    }

    #[test]
    fn consistently_learned_examples() {
        let mut t = blank_trace(3, 4, 2, shape1());
        set_minibatch(&mut t, 0, &[true, true, true, true]);
        set_minibatch(&mut t, 1, &[false, true, false, true]);
        set_minibatch(&mut t, 2, &[true, true, false, false]);
        let sentinel = 5.0;
        let m = consistently_learned(&[t], sentinel).unwrap();
        assert_eq!(m.value(0, 0), 0.0);
        assert_eq!(m.value(1, 0), 3.0);
        assert_eq!(m.value(2, 0), sentinel);
    }

    #[test]
    fn el2n_examples() {
        let mut t = blank_trace(4, 2, 3, shape1());
        t.meta.checkpoint_epoch = 1;
        // example 0: probs equal one-hot of label 0
        t.checkpoint_probs[0..3].copy_from_slice(&[1.0, 0.0, 0.0]);
        // example 1: binary-style (0.5, 0.5, 0) with label 0
        t.checkpoint_probs[3..6].copy_from_slice(&[0.5, 0.5, 0.0]);
        // example 2: (0.6, 0.3, 0.1) with label 1
        t.checkpoint_probs[6..9].copy_from_slice(&[0.6, 0.3, 0.1]);
        // example 3: one-hot of label 2
        t.checkpoint_probs[9..12].copy_from_slice(&[0.0, 0.0, 1.0]);
        let labels = LabelSet::new(vec![0, 0, 1, 2], 3).unwrap();
        let m = el2n(&[t], &labels, 1).unwrap();
        assert_eq!(m.value(0, 0), 0.0);
        assert_relative_eq!(m.value(1, 0), 0.5f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(m.value(2, 0), 0.86f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(m.value(2, 0), 0.9273618495495704, epsilon = 1e-12);
        assert_eq!(m.value(3, 0), 0.0);
    }

    #[test]
    fn el2n_closed_form_two_mass_points() {
        // all off-true mass on one class: el2n = sqrt(2) * (1 - p_true)
        for &p in &[0.0, 0.25, 0.5, 0.9, 1.0] {
            let mut t = blank_trace(4, 1, 4, shape1());
            t.checkpoint_probs[0..4].copy_from_slice(&[p, 1.0 - p, 0.0, 0.0]);
            t.checkpoint_probs[4..8].copy_from_slice(&[0.0, 1.0, 0.0, 0.0]);
            t.checkpoint_probs[8..12].copy_from_slice(&[0.0, 0.0, 1.0, 0.0]);
            t.checkpoint_probs[12..16].copy_from_slice(&[0.0, 0.0, 0.0, 1.0]);
            let labels = LabelSet::new(vec![0, 1, 2, 3], 4).unwrap();
            let m = el2n(&[t], &labels, 1).unwrap();
            let expected = (2.0f64).sqrt() * (1.0 - p);
            assert_relative_eq!(m.value(0, 0), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn grand_passes_through_norms() {
        let mut t = blank_trace(2, 2, 2, shape1());
        t.checkpoint_grad_norm = vec![0.0, 3.25];
        let m = grand(&[t], 1).unwrap();
        assert_eq!(m.value(0, 0), 0.0);
        assert_eq!(m.value(1, 0), 3.25);
    }

    #[test]
    fn grand_rejects_wrong_checkpoint() {
        let t = blank_trace(2, 2, 2, shape1());
        let err = grand(&[t], 9).unwrap_err();
        assert!(matches!(err, Error::MissingCheckpoint { requested: 9, .. }));
    }

    #[test]
    fn vog_examples() {
        let shape = InputShape::new(1, 1, 4);
        let mut t = blank_trace(2, 2, 2, shape);
        t.vog_epochs = vec![1, 2];
        t.vog_grads = vec![0.0; 2 * 2 * 4];
        // example 0: identical gradients at both snapshots -> 0
        for snap in 0..2 {
            let base = (snap * 2) * 4;
            t.vog_grads[base..base + 4].copy_from_slice(&[0.3, -0.1, 0.7, 0.0]);
        }
        // example 1: one pixel sees [0, 2], rest constant -> 1/D
        t.vog_grads[(0 * 2 + 1) * 4..(0 * 2 + 1) * 4 + 4].copy_from_slice(&[0.0, 0.5, 0.5, 0.5]);
        t.vog_grads[(1 * 2 + 1) * 4..(1 * 2 + 1) * 4 + 4].copy_from_slice(&[2.0, 0.5, 0.5, 0.5]);
        let m = vog(&[t]).unwrap();
        assert_eq!(m.value(0, 0), 0.0);
        assert_relative_eq!(m.value(1, 0), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn vog_matches_two_pass_oracle() {
        let shape = InputShape::new(1, 1, 4);
        let mut t = blank_trace(1, 3, 2, shape);
        t.vog_epochs = vec![1, 2, 3];
        // arbitrary gradients, 3 snapshots x 4 pixels
        let grads = [
            [0.11, -0.52, 0.03, 0.99],
            [0.42, 0.17, -0.66, 0.21],
            [-0.35, 0.08, 0.44, -0.10],
        ];
        t.vog_grads = grads.concat();
        let m = vog(&[t]).unwrap();
        // brute-force: population variance per pixel, then mean
        let mut vars = Vec::new();
        for k in 0..4 {
            let series: Vec<f64> = (0..3).map(|s| grads[s][k]).collect();
            vars.push(population_variance(&series));
        }
        let expected = vars.iter().sum::<f64>() / 4.0;
        assert!((m.value(0, 0) - expected).abs() < 1e-10);
    }

    #[test]
    fn vog_requires_two_snapshots() {
        let mut t = blank_trace(1, 1, 2, shape1());
        t.vog_epochs = vec![1];
        t.vog_grads = vec![0.5];
        let err = vog(&[t]).unwrap_err();
        assert!(matches!(err, Error::InsufficientSnapshots { found: 1 }));
    }

    #[test]
    fn forgetting_transition_balance_exhaustive() {
        // over all boolean sequences of length <= 10, 1->0 and 0->1 counts
        // differ by first minus last state
        for len in 1..=10usize {
            for mask in 0u32..(1 << len) {
                let series: Vec<bool> = (0..len).map(|b| mask >> b & 1 == 1).collect();
                let forgets = count_forgetting(&series);
                let mut learns = 0.0;
                for w in series.windows(2) {
                    if !w[0] && w[1] {
                        learns += 1.0;
                    }
                }
                let first = series[0] as i64;
                let last = series[len - 1] as i64;
                assert_eq!(forgets as i64 - learns as i64, first - last);
                assert!(forgets <= (len / 2) as f64);
            }
        }
    }

    #[test]
    fn learned_index_agrees_with_forgetting() {
        // if nothing is forgotten and the series ends correct, the learned
        // index is the first correct entry
        for len in 1..=10usize {
            for mask in 0u32..(1 << len) {
                let series: Vec<bool> = (0..len).map(|b| mask >> b & 1 == 1).collect();
                let sentinel = (len + 1) as f64;
                let li = learned_index(&series, sentinel);
                assert!(li <= len as f64 || li == sentinel);
                if count_forgetting(&series) == 0.0 && series[len - 1] {
                    let first = series.iter().position(|&c| c).unwrap();
                    assert_eq!(li, first as f64);
                }
            }
        }
    }

    #[test]
    fn compute_all_shapes_and_errors() {
        let shape = InputShape::new(1, 1, 2);
        let mut t0 = blank_trace(4, 4, 2, shape);
        let mut t1 = blank_trace(4, 4, 2, shape);
        t1.meta.run_index = 1;
        t1.meta.run_seed = 1;
        t0.vog_epochs = vec![1, 2, 3, 4];
        t0.vog_grads = vec![0.1; 4 * 4 * 2];
        t1.vog_epochs = vec![1, 2, 3, 4];
        t1.vog_grads = vec![0.2; 4 * 4 * 2];
        let labels = LabelSet::new(vec![0, 1, 0, 1], 2).unwrap();
        let traces = vec![t0, t1];
        let requests = ScoreRequest::all_computed(1);
        let matrices = compute_all(&traces, &labels, &requests).unwrap();
        assert_eq!(matrices.len(), 8);
        for m in &matrices {
            assert_eq!(m.n_examples(), 4);
            assert_eq!(m.n_runs(), 2);
        }

        assert!(compute_all(&traces, &labels, &[]).unwrap().is_empty());

        let bad = ScoreRequest::with_checkpoint(ScoreKind::Grand, 99);
        let err = compute_all(&traces, &labels, &[bad]).unwrap_err();
        assert!(matches!(err, Error::ScoreFailed { .. }));
    }

    #[test]
    fn scores_are_invariant_to_run_order() {
        let shape = InputShape::new(1, 1, 2);
        let mut t0 = blank_trace(3, 3, 2, shape);
        let mut t1 = blank_trace(3, 3, 2, shape);
        t1.meta.run_index = 1;
        t1.meta.run_seed = 1;
        for e in 0..3 {
            for i in 0..3 {
                t0.eval_loss[e * 3 + i] = (e + i) as f64 * 0.1;
                t1.eval_loss[e * 3 + i] = (e * i) as f64 * 0.2;
            }
        }
        let forward = mean_loss(&[t0.clone(), t1.clone()]).unwrap();
        let reversed = mean_loss(&[t1, t0]).unwrap();
        for i in 0..3 {
            assert_eq!(forward.value(i, 0), reversed.value(i, 1));
            assert_eq!(forward.value(i, 1), reversed.value(i, 0));
        }
    }

    #[test]
    fn score_ranges_hold_on_trained_traces() {
        use crate::trainer::{run_replicates, BlobSpec, ExperimentConfig};
        let spec = BlobSpec {
            n_examples: 40,
            n_classes: 4,
            shape: InputShape::new(1, 2, 2),
            center_scale: 1.0,
            noise: 1.0,
            label_noise: 0.1,
            seed: 9,
        };
        let dataset = crate::trainer::synthetic_blobs(&spec).unwrap();
        let exp = ExperimentConfig {
            dataset_name: dataset.name.clone(),
            n_examples: 40,
            model: ModelConfig::new(ModelFamily::Mlp, 0.25, 1),
            n_runs: 2,
            epochs: 6,
            batch_size: 10,
            learning_rate: 0.2,
            checkpoint_epoch: 1,
            vog_interval: 2,
            vog_source: InputGradSource::Loss,
            base_seed: 77,
        };
        let traces = run_replicates(&exp, &dataset).unwrap();
        let requests = ScoreRequest::all_computed(1);
        let matrices = compute_all(&traces, &dataset.labels, &requests).unwrap();
        for m in &matrices {
            for i in 0..m.n_examples() {
                for r in 0..m.n_runs() {
                    let v = m.value(i, r);
                    assert!(v.is_finite());
                    match m.kind() {
                        ScoreKind::MeanAccuracy => assert!((0.0..=1.0).contains(&v)),
                        ScoreKind::AreaUnderMargin => assert!((-1.0..=1.0).contains(&v)),
                        ScoreKind::El2n => assert!((0.0..=2f64.sqrt() + 1e-12).contains(&v)),
                        ScoreKind::Forgetting => {
                            assert!(v >= 0.0 && v <= (exp.epochs / 2) as f64)
                        }
                        ScoreKind::Grand | ScoreKind::Vog => assert!(v >= 0.0),
                        ScoreKind::MeanLoss => assert!(v >= 0.0),
                        _ => {}
                    }
                }
            }
        }
    }

    #[test]
    fn grand_matches_finite_differences_on_frozen_run() {
        use crate::trainer::{build_model, run_training, BlobSpec, ExperimentConfig};
        // lr = 0 keeps the checkpoint at the initial parameters, which we
        // can rebuild independently for a finite-difference oracle
        let spec = BlobSpec {
            n_examples: 6,
            n_classes: 2,
            shape: InputShape::new(1, 1, 3),
            center_scale: 1.0,
            noise: 0.5,
            label_noise: 0.0,
            seed: 4,
        };
        let dataset = crate::trainer::synthetic_blobs(&spec).unwrap();
        let model = ModelConfig::new(ModelFamily::Mlp, 2.0 / 32.0, 1);
        let exp = ExperimentConfig {
            dataset_name: dataset.name.clone(),
            n_examples: 6,
            model: model.clone(),
            n_runs: 1,
            epochs: 1,
            batch_size: 6,
            learning_rate: 0.0,
            checkpoint_epoch: 1,
            vog_interval: 1,
            vog_source: InputGradSource::Loss,
            base_seed: 123,
        };
        let trace = run_training(&exp, &dataset, 0).unwrap();
        let m = grand(std::slice::from_ref(&trace), 1).unwrap();

        let mut net = build_model(&model, dataset.input_shape, 2, 123).unwrap();
        assert!(net.param_count() <= 100);
        let mut ws = net.workspace();
        let step = 1e-5;
        for i in 0..6 {
            let label = dataset.labels.label(i);
            let input = dataset.input(i).to_vec();
            let mut ss = 0.0;
            for p in 0..net.param_count() {
                let orig = net.params()[p];
                net.params_mut()[p] = orig + step;
                net.forward(&input, &mut ws);
                let lp = net.loss(&ws, label);
                net.params_mut()[p] = orig - step;
                net.forward(&input, &mut ws);
                let lm = net.loss(&ws, label);
                net.params_mut()[p] = orig;
                let g = (lp - lm) / (2.0 * step);
                ss += g * g;
            }
            let oracle = ss.sqrt();
            let got = m.value(i, 0);
            assert!(
                (got - oracle).abs() / oracle.max(1e-12) < 1e-4,
                "example {i}: grand {got}, finite-diff {oracle}"
            );
        }
    }
}
