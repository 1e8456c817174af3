//! Raw per-run instrumentation and its on-disk layout.
//!
//! A run directory holds `meta.toml` plus four tabular files:
//! `eval.csv` (per-epoch full-trainset evaluation), `minibatch.csv`
//! (time-of-use correctness), `checkpoint.csv` (probability vectors and
//! parameter-gradient norms at the checkpoint epoch), and `vog.csv`
//! (input-gradient snapshots). Floats are written with Rust's shortest
//! round-trip formatting, so save/load is lossless and byte-stable.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::model::{InputGradSource, InputShape, ModelConfig};

/// Identifying metadata for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub dataset_name: String,
    pub run_index: usize,
    pub run_seed: i64,
    pub n_examples: usize,
    pub n_classes: usize,
    pub input_shape: InputShape,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub checkpoint_epoch: usize,
    pub vog_interval: usize,
    pub vog_source: InputGradSource,
    pub model: ModelConfig,
}

/// All signals recorded during one training run.
///
/// Epochs are 1-based in files and configuration; in-memory series are
/// indexed `[epoch0 * n_examples + example]` with `epoch0 = epoch - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStore {
    pub meta: TraceMeta,
    pub eval_loss: Vec<f64>,
    pub eval_true_prob: Vec<f64>,
    pub eval_max_other_prob: Vec<f64>,
    pub eval_correct: Vec<bool>,
    /// Correctness at time of use, one entry per (epoch, example).
    pub minibatch_correct: Vec<bool>,
    /// Softmax outputs at the checkpoint epoch, `[example * n_classes + c]`.
    pub checkpoint_probs: Vec<f64>,
    /// Per-example parameter-gradient norm at the checkpoint epoch.
    pub checkpoint_grad_norm: Vec<f64>,
    /// Epochs (1-based) at which input gradients were snapshotted.
    pub vog_epochs: Vec<usize>,
    /// Input gradients, `[snapshot * n * dim + example * dim + d]`.
    pub vog_grads: Vec<f64>,
}

impl TraceStore {
    pub fn n_examples(&self) -> usize {
        self.meta.n_examples
    }

    pub fn epochs(&self) -> usize {
        self.meta.epochs
    }

    pub fn input_dim(&self) -> usize {
        self.meta.input_shape.dim()
    }

    fn eval_idx(&self, epoch0: usize, example: usize) -> usize {
        epoch0 * self.meta.n_examples + example
    }

    pub fn eval_loss_at(&self, epoch0: usize, example: usize) -> f64 {
        self.eval_loss[self.eval_idx(epoch0, example)]
    }

    pub fn margin_at(&self, epoch0: usize, example: usize) -> f64 {
        let i = self.eval_idx(epoch0, example);
        self.eval_true_prob[i] - self.eval_max_other_prob[i]
    }

    /// Time-of-use correctness series of one example, in epoch order.
    pub fn minibatch_series(&self, example: usize) -> impl Iterator<Item = bool> + '_ {
        (0..self.meta.epochs).map(move |e| self.minibatch_correct[e * self.meta.n_examples + example])
    }

    /// Per-epoch evaluated correctness series of one example.
    pub fn eval_series(&self, example: usize) -> impl Iterator<Item = bool> + '_ {
        (0..self.meta.epochs).map(move |e| self.eval_correct[e * self.meta.n_examples + example])
    }

    pub fn checkpoint_prob_row(&self, example: usize) -> &[f64] {
        let c = self.meta.n_classes;
        &self.checkpoint_probs[example * c..(example + 1) * c]
    }

    pub fn vog_grad_row(&self, snapshot: usize, example: usize) -> &[f64] {
        let d = self.input_dim();
        let base = (snapshot * self.meta.n_examples + example) * d;
        &self.vog_grads[base..base + d]
    }

    /// Write the run directory (created if absent).
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta_path = dir.join("meta.toml");
        let meta = toml::to_string(&self.meta).map_err(|e| Error::BadSidecar {
            path: meta_path.clone(),
            msg: e.to_string(),
        })?;
        fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;

        let n = self.meta.n_examples;
        let path = dir.join("eval.csv");
        let mut w = buf_writer(&path)?;
        wline(&mut w, &path, "epoch,example_id,loss,true_prob,max_other_prob,correct")?;
        for e in 0..self.meta.epochs {
            for i in 0..n {
                let idx = e * n + i;
                wline(
                    &mut w,
                    &path,
                    &format!(
                        "{},{},{},{},{},{}",
                        e + 1,
                        i,
                        self.eval_loss[idx],
                        self.eval_true_prob[idx],
                        self.eval_max_other_prob[idx],
                        self.eval_correct[idx] as u8
                    ),
                )?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("minibatch.csv");
        let mut w = buf_writer(&path)?;
        wline(&mut w, &path, "example_id,epoch,correct")?;
        for i in 0..n {
            for e in 0..self.meta.epochs {
                wline(
                    &mut w,
                    &path,
                    &format!("{},{},{}", i, e + 1, self.minibatch_correct[e * n + i] as u8),
                )?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("checkpoint.csv");
        let mut w = buf_writer(&path)?;
        let c = self.meta.n_classes;
        let mut header = String::from("example_id,grad_norm");
        for k in 0..c {
            header.push_str(&format!(",prob_{k}"));
        }
        wline(&mut w, &path, &header)?;
        for i in 0..n {
            let mut line = format!("{},{}", i, self.checkpoint_grad_norm[i]);
            for k in 0..c {
                line.push_str(&format!(",{}", self.checkpoint_probs[i * c + k]));
            }
            wline(&mut w, &path, &line)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("vog.csv");
        let mut w = buf_writer(&path)?;
        let d = self.input_dim();
        let mut header = String::from("epoch,example_id");
        for k in 0..d {
            header.push_str(&format!(",g_{k}"));
        }
        wline(&mut w, &path, &header)?;
        for (s, &epoch) in self.vog_epochs.iter().enumerate() {
            for i in 0..n {
                let mut line = format!("{epoch},{i}");
                let row = self.vog_grad_row(s, i);
                for v in row {
                    line.push_str(&format!(",{v}"));
                }
                wline(&mut w, &path, &line)?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    /// Read back a run directory written by [`TraceStore::save_dir`].
    pub fn load_dir(dir: &Path) -> Result<TraceStore> {
        let meta_path = dir.join("meta.toml");
        if !meta_path.exists() {
            return Err(Error::MissingSidecar { path: meta_path });
        }
        let raw = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: TraceMeta = toml::from_str(&raw).map_err(|e| Error::BadSidecar {
            path: meta_path.clone(),
            msg: e.to_string(),
        })?;
        let n = meta.n_examples;
        let epochs = meta.epochs;
        let c = meta.n_classes;
        let d = meta.input_shape.dim();

        let path = dir.join("eval.csv");
        let mut eval_loss = vec![f64::NAN; epochs * n];
        let mut eval_true = vec![f64::NAN; epochs * n];
        let mut eval_other = vec![f64::NAN; epochs * n];
        let mut eval_correct = vec![false; epochs * n];
        let rows = for_each_row(&path, 6, |line_no, fields| {
            let e: usize = parse_field(&path, line_no, fields[0])?;
            let i: usize = parse_field(&path, line_no, fields[1])?;
            if e < 1 || e > epochs || i >= n {
                return Err(malformed(&path, line_no, "epoch or example out of range"));
            }
            let idx = (e - 1) * n + i;
            eval_loss[idx] = parse_field(&path, line_no, fields[2])?;
            eval_true[idx] = parse_field(&path, line_no, fields[3])?;
            eval_other[idx] = parse_field(&path, line_no, fields[4])?;
            eval_correct[idx] = parse_bool(&path, line_no, fields[5])?;
            Ok(())
        })?;
        if rows != epochs * n {
            return Err(malformed(&path, rows + 1, "incomplete eval series"));
        }

        let path = dir.join("minibatch.csv");
        let mut minibatch = vec![false; epochs * n];
        let rows = for_each_row(&path, 3, |line_no, fields| {
            let i: usize = parse_field(&path, line_no, fields[0])?;
            let e: usize = parse_field(&path, line_no, fields[1])?;
            if e < 1 || e > epochs || i >= n {
                return Err(malformed(&path, line_no, "epoch or example out of range"));
            }
            minibatch[(e - 1) * n + i] = parse_bool(&path, line_no, fields[2])?;
            Ok(())
        })?;
        if rows != epochs * n {
            return Err(malformed(&path, rows + 1, "incomplete minibatch series"));
        }

        let path = dir.join("checkpoint.csv");
        let mut probs = vec![f64::NAN; n * c];
        let mut norms = vec![f64::NAN; n];
        let rows = for_each_row(&path, 2 + c, |line_no, fields| {
            let i: usize = parse_field(&path, line_no, fields[0])?;
            if i >= n {
                return Err(malformed(&path, line_no, "example out of range"));
            }
            norms[i] = parse_field(&path, line_no, fields[1])?;
            for k in 0..c {
                probs[i * c + k] = parse_field(&path, line_no, fields[2 + k])?;
            }
            Ok(())
        })?;
        if rows != n {
            return Err(malformed(&path, rows + 1, "incomplete checkpoint capture"));
        }

        let path = dir.join("vog.csv");
        let mut vog_epochs: Vec<usize> = Vec::new();
        let mut vog_grads: Vec<f64> = Vec::new();
        {
            let expect = epochs / meta.vog_interval;
            vog_grads.reserve(expect * n * d);
            let rows = for_each_row(&path, 2 + d, |line_no, fields| {
                let e: usize = parse_field(&path, line_no, fields[0])?;
                let i: usize = parse_field(&path, line_no, fields[1])?;
                if i >= n {
                    return Err(malformed(&path, line_no, "example out of range"));
                }
                if vog_epochs.last() != Some(&e) {
                    if vog_epochs.contains(&e) {
                        return Err(malformed(&path, line_no, "snapshot epochs interleaved"));
                    }
                    vog_epochs.push(e);
                    vog_grads.resize(vog_epochs.len() * n * d, f64::NAN);
                }
                let s = vog_epochs.len() - 1;
                let base = (s * n + i) * d;
                for k in 0..d {
                    vog_grads[base + k] = parse_field(&path, line_no, fields[2 + k])?;
                }
                Ok(())
            })?;
            if rows != vog_epochs.len() * n {
                return Err(malformed(&path, rows + 1, "incomplete snapshot rows"));
            }
        }

        Ok(TraceStore {
            meta,
            eval_loss,
            eval_true_prob: eval_true,
            eval_max_other_prob: eval_other,
            eval_correct,
            minibatch_correct: minibatch,
            checkpoint_probs: probs,
            checkpoint_grad_norm: norms,
            vog_epochs,
            vog_grads,
        })
    }
}

fn buf_writer(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn wline(w: &mut BufWriter<fs::File>, path: &Path, line: &str) -> Result<()> {
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))
}

fn malformed(path: &Path, line: usize, msg: &str) -> Error {
    Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        msg: msg.to_string(),
    }
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| malformed(path, line, &format!("cannot parse {field:?}")))
}

fn parse_bool(path: &Path, line: usize, field: &str) -> Result<bool> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(malformed(path, line, &format!("expected 0/1, got {field:?}"))),
    }
}

/// Iterate the data rows of a headered CSV, splitting each into exactly
/// `n_fields` comma-separated fields.
fn for_each_row(
    path: &Path,
    n_fields: usize,
    mut f: impl FnMut(usize, &[&str]) -> Result<()>,
) -> Result<usize> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut rows = 0;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line_no == 0 {
            continue; // header
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_fields {
            return Err(malformed(
                path,
                line_no + 1,
                &format!("expected {n_fields} fields, got {}", fields.len()),
            ));
        }
        f(line_no + 1, &fields)?;
        rows += 1;
    }
    Ok(rows)
}
