//! Score matrices and their persistence.
//!
//! A [`ScoreMatrix`] holds per-example, per-run raw score values for one
//! (score kind, model) pair. Values are stored raw; the kind's polarity
//! maps them to the canonical "higher = more difficult" orientation when
//! analyses ask for canonical values.
//!
//! On disk a matrix is a UTF-8 CSV with header `example_id,run_id,value`,
//! one row per cell in example-major order, plus a TOML metadata sidecar
//! (same path with a `.meta.toml` extension).

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::average_ranks;
use crate::trainer::ModelConfig;

/// Index of an example within a dataset; dense over `[0, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExampleId(pub usize);

/// Sign convention mapping raw score values to "higher = harder".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Raw values already increase with difficulty (sign +1).
    HigherHarder,
    /// Raw values decrease with difficulty (sign -1).
    LowerHarder,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::HigherHarder => 1.0,
            Polarity::LowerHarder => -1.0,
        }
    }

    pub fn from_sign(sign: i8) -> Option<Polarity> {
        match sign {
            1 => Some(Polarity::HigherHarder),
            -1 => Some(Polarity::LowerHarder),
            _ => None,
        }
    }

    pub fn as_sign(self) -> i8 {
        match self {
            Polarity::HigherHarder => 1,
            Polarity::LowerHarder => -1,
        }
    }
}

/// The difficulty-score catalog plus imported external kinds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    MeanLoss,
    MeanAccuracy,
    AreaUnderMargin,
    Forgetting,
    ConsistentlyLearned,
    Grand,
    El2n,
    Vog,
    External { name: String, polarity: Polarity },
}

impl ScoreKind {
    /// The eight computed kinds, in catalog order.
    pub fn computed() -> [ScoreKind; 8] {
        [
            ScoreKind::MeanLoss,
            ScoreKind::MeanAccuracy,
            ScoreKind::AreaUnderMargin,
            ScoreKind::Forgetting,
            ScoreKind::ConsistentlyLearned,
            ScoreKind::Grand,
            ScoreKind::El2n,
            ScoreKind::Vog,
        ]
    }

    /// Canonical polarity table. Externals carry their declared polarity.
    pub fn polarity(&self) -> Polarity {
        match self {
            ScoreKind::MeanAccuracy | ScoreKind::AreaUnderMargin => Polarity::LowerHarder,
            ScoreKind::External { polarity, .. } => *polarity,
            _ => Polarity::HigherHarder,
        }
    }

    /// Stable label used in file names and sidecars.
    pub fn label(&self) -> String {
        match self {
            ScoreKind::MeanLoss => "mean_loss".into(),
            ScoreKind::MeanAccuracy => "mean_accuracy".into(),
            ScoreKind::AreaUnderMargin => "area_under_margin".into(),
            ScoreKind::Forgetting => "forgetting".into(),
            ScoreKind::ConsistentlyLearned => "consistently_learned".into(),
            ScoreKind::Grand => "grand".into(),
            ScoreKind::El2n => "el2n".into(),
            ScoreKind::Vog => "vog".into(),
            ScoreKind::External { name, .. } => name.clone(),
        }
    }

    /// Invert [`ScoreKind::label`]; unknown labels become externals with
    /// the given polarity.
    pub fn from_label(label: &str, polarity: Polarity) -> ScoreKind {
        match label {
            "mean_loss" => ScoreKind::MeanLoss,
            "mean_accuracy" => ScoreKind::MeanAccuracy,
            "area_under_margin" => ScoreKind::AreaUnderMargin,
            "forgetting" => ScoreKind::Forgetting,
            "consistently_learned" => ScoreKind::ConsistentlyLearned,
            "grand" => ScoreKind::Grand,
            "el2n" => ScoreKind::El2n,
            "vog" => ScoreKind::Vog,
            other => ScoreKind::External {
                name: other.to_string(),
                polarity,
            },
        }
    }

    pub fn is_external(&self) -> bool {
        matches!(self, ScoreKind::External { .. })
    }
}

impl std::fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Per-example, per-run raw score values for one (kind, model) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    kind: ScoreKind,
    model: Option<ModelConfig>,
    dataset_name: String,
    n_examples: usize,
    n_runs: usize,
    /// Example-major: `values[example * n_runs + run]`.
    values: Vec<f64>,
    run_seeds: Vec<i64>,
    checkpoint_epoch: Option<usize>,
}

impl ScoreMatrix {
    pub fn new(
        kind: ScoreKind,
        model: Option<ModelConfig>,
        dataset_name: impl Into<String>,
        n_examples: usize,
        values: Vec<f64>,
        run_seeds: Vec<i64>,
        checkpoint_epoch: Option<usize>,
    ) -> Result<Self> {
        let n_runs = run_seeds.len();
        if n_examples == 0 || n_runs == 0 || values.len() != n_examples * n_runs {
            return Err(Error::ShapeMismatch {
                msg: format!(
                    "{} values for {} examples x {} runs",
                    values.len(),
                    n_examples,
                    n_runs
                ),
            });
        }
        Ok(ScoreMatrix {
            kind,
            model,
            dataset_name: dataset_name.into(),
            n_examples,
            n_runs,
            values,
            run_seeds,
            checkpoint_epoch,
        })
    }

    pub fn kind(&self) -> &ScoreKind {
        &self.kind
    }

    pub fn model(&self) -> Option<&ModelConfig> {
        self.model.as_ref()
    }

    pub fn dataset_name(&self) -> &str {
        &self.dataset_name
    }

    pub fn n_examples(&self) -> usize {
        self.n_examples
    }

    pub fn n_runs(&self) -> usize {
        self.n_runs
    }

    pub fn run_seeds(&self) -> &[i64] {
        &self.run_seeds
    }

    pub fn checkpoint_epoch(&self) -> Option<usize> {
        self.checkpoint_epoch
    }

    pub fn value(&self, example: usize, run: usize) -> f64 {
        self.values[example * self.n_runs + run]
    }

    /// Raw values of one run across all examples.
    pub fn raw_column(&self, run: usize) -> Vec<f64> {
        assert!(run < self.n_runs);
        (0..self.n_examples).map(|i| self.value(i, run)).collect()
    }

    /// Polarity-canonicalized values of one run (higher = harder).
    pub fn canonical_column(&self, run: usize) -> Vec<f64> {
        let sign = self.kind.polarity().sign();
        self.raw_column(run).into_iter().map(|v| sign * v).collect()
    }

    /// Canonical per-example mean over all runs.
    pub fn canonical_mean(&self) -> ScoreVector {
        let all: Vec<usize> = (0..self.n_runs).collect();
        mean_over_runs(self, &all).expect("full run subset is valid")
    }

    /// First non-finite cell, if any.
    fn find_non_finite(&self) -> Option<(usize, usize)> {
        for i in 0..self.n_examples {
            for r in 0..self.n_runs {
                if !self.value(i, r).is_finite() {
                    return Some((i, r));
                }
            }
        }
        None
    }
}

/// Per-example canonical (higher = harder) score values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub kind: ScoreKind,
    pub values: Vec<f64>,
}

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-example arithmetic mean over the selected runs, polarity applied
/// so that higher values mean harder examples.
pub fn mean_over_runs(matrix: &ScoreMatrix, run_subset: &[usize]) -> Result<ScoreVector> {
    let subset: BTreeSet<usize> = run_subset.iter().copied().collect();
    if subset.is_empty() {
        return Err(Error::EmptyRunSubset);
    }
    if let Some(&bad) = subset.iter().find(|&&r| r >= matrix.n_runs) {
        return Err(Error::RunIndexOutOfRange {
            index: bad,
            n_runs: matrix.n_runs,
        });
    }
    let sign = matrix.kind.polarity().sign();
    let k = subset.len() as f64;
    let values = (0..matrix.n_examples)
        .map(|i| sign * subset.iter().map(|&r| matrix.value(i, r)).sum::<f64>() / k)
        .collect();
    Ok(ScoreVector {
        kind: matrix.kind.clone(),
        values,
    })
}

/// 0-based ranks of examples by score; ties get average ranks.
pub fn rank_examples(scores: &ScoreVector) -> Vec<f64> {
    average_ranks(&scores.values)
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    score_kind: String,
    polarity: i8,
    dataset_name: String,
    n_examples: usize,
    n_runs: usize,
    run_seeds: Vec<i64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    checkpoint_epoch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    model_config: Option<ModelConfig>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.toml")
}

/// Write a matrix and its metadata sidecar. Rejects non-finite cells.
pub fn save_matrix(matrix: &ScoreMatrix, path: &Path) -> Result<()> {
    if let Some((example, run)) = matrix.find_non_finite() {
        return Err(Error::NonFinite { example, run });
    }
    let sidecar = Sidecar {
        score_kind: matrix.kind.label(),
        polarity: matrix.kind.polarity().as_sign(),
        dataset_name: matrix.dataset_name.clone(),
        n_examples: matrix.n_examples,
        n_runs: matrix.n_runs,
        run_seeds: matrix.run_seeds.clone(),
        checkpoint_epoch: matrix.checkpoint_epoch,
        model_config: matrix.model.clone(),
    };
    let meta_path = sidecar_path(path);
    let meta = toml::to_string(&sidecar).map_err(|e| Error::BadSidecar {
        path: meta_path.clone(),
        msg: e.to_string(),
    })?;
    fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;

    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "example_id,run_id,value").map_err(|e| Error::io(path, e))?;
    for i in 0..matrix.n_examples {
        for r in 0..matrix.n_runs {
            writeln!(w, "{},{},{}", i, r, matrix.value(i, r)).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Load a matrix written by [`save_matrix`].
pub fn load_matrix(path: &Path) -> Result<ScoreMatrix> {
    let meta_path = sidecar_path(path);
    if !meta_path.exists() {
        return Err(Error::MissingSidecar { path: meta_path });
    }
    let raw = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let sidecar: Sidecar = toml::from_str(&raw).map_err(|e| Error::BadSidecar {
        path: meta_path.clone(),
        msg: e.to_string(),
    })?;
    let polarity = Polarity::from_sign(sidecar.polarity).ok_or_else(|| Error::BadSidecar {
        path: meta_path.clone(),
        msg: format!("polarity must be +1 or -1, got {}", sidecar.polarity),
    })?;
    let kind = ScoreKind::from_label(&sidecar.score_kind, polarity);
    if kind.polarity() != polarity {
        return Err(Error::BadSidecar {
            path: meta_path.clone(),
            msg: format!(
                "sidecar polarity {} contradicts canonical polarity of {}",
                sidecar.polarity, sidecar.score_kind
            ),
        });
    }
    if sidecar.run_seeds.len() != sidecar.n_runs {
        return Err(Error::BadSidecar {
            path: meta_path,
            msg: format!(
                "{} run seeds for {} runs",
                sidecar.run_seeds.len(),
                sidecar.n_runs
            ),
        });
    }

    let n = sidecar.n_examples;
    let r = sidecar.n_runs;
    let mut values = vec![0.0f64; n * r];
    let mut seen = vec![false; n * r];
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut max_example = 0usize;
    let mut max_run = 0usize;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line_no == 0 {
            if line.trim() != "example_id,run_id,value" {
                return Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    line: 1,
                    msg: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (a, b, c) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c), None) => (a, b, c),
            _ => {
                return Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    line: line_no + 1,
                    msg: "expected 3 fields".into(),
                })
            }
        };
        let bad_row = |msg: String| Error::MalformedRow {
            path: path.to_path_buf(),
            line: line_no + 1,
            msg,
        };
        let example: usize = a.parse().map_err(|_| bad_row(format!("bad example id {a:?}")))?;
        let run: usize = b.parse().map_err(|_| bad_row(format!("bad run id {b:?}")))?;
        let value: f64 = c.parse().map_err(|_| bad_row(format!("bad value {c:?}")))?;
        if example >= n || run >= r {
            return Err(bad_row(format!(
                "cell ({example}, {run}) outside sidecar shape {n} x {r}"
            )));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { example, run });
        }
        let idx = example * r + run;
        if seen[idx] {
            return Err(Error::DuplicateCell { example, run });
        }
        seen[idx] = true;
        values[idx] = value;
        max_example = max_example.max(example);
        max_run = max_run.max(run);
    }
    if let Some(idx) = seen.iter().position(|s| !s) {
        return Err(Error::MissingCell {
            example: idx / r,
            run: idx % r,
        });
    }
    if max_example + 1 != n || max_run + 1 != r {
        return Err(Error::ShapeMismatch {
            msg: format!(
                "inferred shape {} x {} does not match sidecar {n} x {r}",
                max_example + 1,
                max_run + 1
            ),
        });
    }
    ScoreMatrix::new(
        kind,
        sidecar.model_config,
        sidecar.dataset_name,
        n,
        values,
        sidecar.run_seeds,
        sidecar.checkpoint_epoch,
    )
}

/// Import a single-run external score file (header `example_id,value`,
/// ids covering `[0, N)` with no gaps) under the declared polarity.
pub fn import_external_scores(path: &Path, kind_name: &str, polarity: Polarity) -> Result<ScoreMatrix> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line_no == 0 {
            if line.trim() != "example_id,value" {
                return Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    line: 1,
                    msg: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let bad_row = |msg: String| Error::MalformedRow {
            path: path.to_path_buf(),
            line: line_no + 1,
            msg,
        };
        let mut parts = line.split(',');
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(bad_row("expected 2 fields".into())),
        };
        let id: usize = a.parse().map_err(|_| bad_row(format!("bad example id {a:?}")))?;
        let value: f64 = b.parse().map_err(|_| bad_row(format!("non-numeric value {b:?}")))?;
        if !value.is_finite() {
            return Err(Error::NonFinite { example: id, run: 0 });
        }
        rows.push((id, value));
    }
    rows.sort_by_key(|&(id, _)| id);
    let mut values = Vec::with_capacity(rows.len());
    for (expected, &(id, v)) in rows.iter().enumerate() {
        if id != expected {
            if id < expected || rows[..expected].iter().any(|&(seen, _)| seen == id) {
                return Err(Error::DuplicateCell { example: id, run: 0 });
            }
            return Err(Error::IdGap { expected });
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::IdGap { expected: 0 });
    }
    let n = values.len();
    ScoreMatrix::new(
        ScoreKind::External {
            name: kind_name.to_string(),
            polarity,
        },
        None,
        "",
        n,
        values,
        vec![0],
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{ModelConfig, ModelFamily};
    use proptest::prelude::*;

    fn small_matrix() -> ScoreMatrix {
        ScoreMatrix::new(
            ScoreKind::MeanLoss,
            Some(ModelConfig::new(ModelFamily::Mlp, 1.0, 2)),
            "toy",
            2,
            vec![1.0, 2.0, 3.0, 4.0],
            vec![100, 101],
            None,
        )
        .unwrap()
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = small_matrix();
        save_matrix(&m, &path).unwrap();
        let loaded = load_matrix(&path).unwrap();
        assert_eq!(m, loaded);
        // 2x2 matrix -> header + 4 data rows
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn save_rejects_nan() {
        let dir = tempfile::tempdir().unwrap();
        let m = ScoreMatrix::new(
            ScoreKind::MeanLoss,
            None,
            "toy",
            2,
            vec![1.0, f64::NAN, 3.0, 4.0],
            vec![0, 1],
            None,
        )
        .unwrap();
        let err = save_matrix(&m, &dir.path().join("m.csv")).unwrap_err();
        assert!(matches!(err, Error::NonFinite { example: 0, run: 1 }));
    }

    #[test]
    fn row_count_is_examples_times_runs() {
        // counting oracle on a handful of shapes
        let dir = tempfile::tempdir().unwrap();
        for (n, r) in [(1usize, 1usize), (3, 2), (5, 4)] {
            let values: Vec<f64> = (0..n * r).map(|i| i as f64).collect();
            let m = ScoreMatrix::new(
                ScoreKind::Grand,
                None,
                "toy",
                n,
                values,
                (0..r as i64).collect(),
                Some(1),
            )
            .unwrap();
            let path = dir.path().join(format!("m_{n}_{r}.csv"));
            save_matrix(&m, &path).unwrap();
            let rows = std::fs::read_to_string(&path).unwrap().lines().count() - 1;
            assert_eq!(rows, n * r);
        }
    }

    #[test]
    fn load_rejects_duplicate_cell() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        save_matrix(&small_matrix(), &path).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("1,1,9.0\n");
        std::fs::write(&path, text).unwrap();
        let err = load_matrix(&path).unwrap_err();
        assert!(matches!(err, Error::DuplicateCell { example: 1, run: 1 }));
    }

    #[test]
    fn load_rejects_missing_cell() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        save_matrix(&small_matrix(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let trimmed: Vec<&str> = text.lines().filter(|l| !l.starts_with("1,1,")).collect();
        std::fs::write(&path, trimmed.join("\n")).unwrap();
        let err = load_matrix(&path).unwrap_err();
        assert!(matches!(err, Error::MissingCell { example: 1, run: 1 }));
    }

    #[test]
    fn load_requires_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "example_id,run_id,value\n0,0,1\n").unwrap();
        let err = load_matrix(&path).unwrap_err();
        assert!(matches!(err, Error::MissingSidecar { .. }));
    }

    #[test]
    fn import_builds_single_run_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ext.csv");
        let mut text = String::from("example_id,value\n");
        for i in 0..10 {
            text.push_str(&format!("{},{}\n", i, i as f64 / 10.0));
        }
        std::fs::write(&path, text).unwrap();
        let m = import_external_scores(&path, "agreement", Polarity::LowerHarder).unwrap();
        assert_eq!(m.n_examples(), 10);
        assert_eq!(m.n_runs(), 1);
        assert!(m.kind().is_external());
        // canonicalized values are negated inputs under polarity -1
        let canon = m.canonical_column(0);
        assert_eq!(canon[3], -0.3);
    }

    #[test]
    fn import_rejects_id_gap() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ext.csv");
        std::fs::write(&path, "example_id,value\n0,0.5\n1,0.25\n3,0.125\n").unwrap();
        let err = import_external_scores(&path, "x", Polarity::HigherHarder).unwrap_err();
        assert!(matches!(err, Error::IdGap { expected: 2 }));
    }

    #[test]
    fn import_rejects_non_numeric() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ext.csv");
        std::fs::write(&path, "example_id,value\n0,abc\n").unwrap();
        let err = import_external_scores(&path, "x", Polarity::HigherHarder).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { .. }));
    }

    #[test]
    fn mean_over_runs_basics() {
        let m = ScoreMatrix::new(
            ScoreKind::MeanLoss,
            None,
            "toy",
            1,
            vec![1.0, 2.0, 3.0],
            vec![0, 1, 2],
            None,
        )
        .unwrap();
        let v = mean_over_runs(&m, &[0, 1, 2]).unwrap();
        assert_eq!(v.values, vec![2.0]);
        let single = mean_over_runs(&m, &[1]).unwrap();
        assert_eq!(single.values, vec![2.0]);
        assert!(matches!(
            mean_over_runs(&m, &[]).unwrap_err(),
            Error::EmptyRunSubset
        ));
        assert!(matches!(
            mean_over_runs(&m, &[3]).unwrap_err(),
            Error::RunIndexOutOfRange { index: 3, .. }
        ));
    }

    #[test]
    fn accuracy_polarity_flips_sign() {
        let m = ScoreMatrix::new(
            ScoreKind::MeanAccuracy,
            None,
            "toy",
            1,
            vec![0.8],
            vec![0],
            None,
        )
        .unwrap();
        let v = mean_over_runs(&m, &[0]).unwrap();
        assert_eq!(v.values, vec![-0.8]);
    }

    #[test]
    fn polarity_canonicalization_is_involution() {
        let m = small_matrix();
        for kind in ScoreKind::computed() {
            let sign = kind.polarity().sign();
            for i in 0..m.n_examples() {
                for r in 0..m.n_runs() {
                    let raw = m.value(i, r);
                    assert_eq!(sign * (sign * raw), raw);
                }
            }
        }
    }

    #[test]
    fn rank_examples_basics() {
        let v = ScoreVector {
            kind: ScoreKind::MeanLoss,
            values: vec![0.1, 0.3, 0.2],
        };
        assert_eq!(rank_examples(&v), vec![0.0, 2.0, 1.0]);
        let tied = ScoreVector {
            kind: ScoreKind::MeanLoss,
            values: vec![5.0; 4],
        };
        assert_eq!(rank_examples(&tied), vec![1.5; 4]);
        let rev = ScoreVector {
            kind: ScoreKind::MeanLoss,
            values: vec![0.2, 0.3, 0.1],
        };
        assert_eq!(rank_examples(&rev), vec![1.0, 2.0, 0.0]);
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(
            n in 1usize..6,
            r in 1usize..5,
            seed in any::<u64>(),
        ) {
            let mut state = seed;
            let mut values = Vec::with_capacity(n * r);
            for _ in 0..n * r {
                state = crate::stats::splitmix64(state);
                // map to a finite float across a wide range
                let v = (state >> 11) as f64 / (1u64 << 53) as f64;
                values.push((v - 0.5) * 1e6);
            }
            let m = ScoreMatrix::new(
                ScoreKind::Vog,
                None,
                "prop",
                n,
                values,
                (0..r as i64).collect(),
                None,
            ).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.csv");
            save_matrix(&m, &path).unwrap();
            let loaded = load_matrix(&path).unwrap();
            prop_assert_eq!(m, loaded);
        }

        #[test]
        fn rank_sum_is_invariant(values in proptest::collection::vec(-100.0f64..100.0, 1..40)) {
            let n = values.len();
            let v = ScoreVector { kind: ScoreKind::MeanLoss, values };
            let ranks = rank_examples(&v);
            let sum: f64 = ranks.iter().sum();
            let expected = (n * (n - 1)) as f64 / 2.0;
            prop_assert!((sum - expected).abs() < 1e-9);
        }

        #[test]
        fn mean_over_runs_is_linear(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            x in proptest::collection::vec(-10.0f64..10.0, 6),
            y in proptest::collection::vec(-10.0f64..10.0, 6),
        ) {
            let mk = |vals: Vec<f64>| ScoreMatrix::new(
                ScoreKind::MeanLoss, None, "p", 2, vals, vec![0, 1, 2], None,
            ).unwrap();
            let mx = mk(x.clone());
            let my = mk(y.clone());
            let combo: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| a * xi + b * yi).collect();
            let mc = mk(combo);
            let subset = [0usize, 2];
            let vx = mean_over_runs(&mx, &subset).unwrap();
            let vy = mean_over_runs(&my, &subset).unwrap();
            let vc = mean_over_runs(&mc, &subset).unwrap();
            for i in 0..2 {
                let lin = a * vx.values[i] + b * vy.values[i];
                prop_assert!((vc.values[i] - lin).abs() < 1e-9);
            }
        }
    }
}
