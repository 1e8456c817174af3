//! Datasets: a seeded synthetic Gaussian-blob generator and a loader for
//! raw label-byte-plus-pixels image binaries (one record per example:
//! 1 label byte followed by channels*height*width pixel bytes).

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::trainer::model::InputShape;

/// Per-example class indices in `[0, n_classes)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabelSet {
    /// Requires at least two classes, every label in range, and every
    /// class present at least once.
    pub fn new(labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidConfig {
                msg: format!("need at least 2 classes, got {n_classes}"),
            });
        }
        let mut seen = vec![false; n_classes];
        for (i, &l) in labels.iter().enumerate() {
            if l >= n_classes {
                return Err(Error::InvalidConfig {
                    msg: format!("label {l} of example {i} out of range [0, {n_classes})"),
                });
            }
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidConfig {
                msg: format!("class {missing} has no examples"),
            });
        }
        Ok(LabelSet { labels, n_classes })
    }

    pub fn label(&self, example: usize) -> usize {
        self.labels[example]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A fixed training set: flattened inputs plus labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub input_shape: InputShape,
    inputs: Vec<f64>,
    pub labels: LabelSet,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        input_shape: InputShape,
        inputs: Vec<f64>,
        labels: LabelSet,
    ) -> Result<Self> {
        let dim = input_shape.dim();
        if dim == 0 || inputs.len() != labels.len() * dim {
            return Err(Error::ShapeMismatch {
                msg: format!(
                    "inputs length {} does not match {} examples x {} dims",
                    inputs.len(),
                    labels.len(),
                    dim
                ),
            });
        }
        Ok(Dataset {
            name: name.into(),
            input_shape,
            inputs,
            labels,
        })
    }

    pub fn n_examples(&self) -> usize {
        self.labels.len()
    }

    pub fn input(&self, example: usize) -> &[f64] {
        let dim = self.input_shape.dim();
        &self.inputs[example * dim..(example + 1) * dim]
    }
}

/// Parameters of the synthetic Gaussian-blob generator.
#[derive(Debug, Clone)]
pub struct BlobSpec {
    pub n_examples: usize,
    pub n_classes: usize,
    pub shape: InputShape,
    /// Standard deviation of class centers around the origin.
    pub center_scale: f64,
    /// Per-example isotropic noise standard deviation.
    pub noise: f64,
    /// Fraction of labels resampled uniformly at random.
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            n_examples: 1000,
            n_classes: 10,
            shape: InputShape::new(1, 6, 6),
            center_scale: 1.0,
            noise: 2.0,
            label_noise: 0.1,
            seed: 0,
        }
    }
}

/// Generate a class-balanced Gaussian-blob dataset. Classes are assigned
/// round-robin, inputs are `center[class] + noise * N(0, I)`, and a
/// `label_noise` fraction of labels is resampled uniformly.
pub fn synthetic_blobs(spec: &BlobSpec) -> Result<Dataset> {
    if spec.n_classes < 2 || spec.n_examples < spec.n_classes {
        return Err(Error::InvalidConfig {
            msg: format!(
                "blob generator needs n_examples >= n_classes >= 2, got {} examples, {} classes",
                spec.n_examples, spec.n_classes
            ),
        });
    }
    if !(0.0..=1.0).contains(&spec.label_noise) {
        return Err(Error::InvalidConfig {
            msg: format!("label_noise must lie in [0, 1], got {}", spec.label_noise),
        });
    }
    let dim = spec.shape.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut centers = vec![0.0; spec.n_classes * dim];
    for c in centers.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *c = spec.center_scale * z;
    }
    let mut inputs = vec![0.0; spec.n_examples * dim];
    let mut labels = Vec::with_capacity(spec.n_examples);
    for i in 0..spec.n_examples {
        let class = i % spec.n_classes;
        let center = &centers[class * dim..(class + 1) * dim];
        let row = &mut inputs[i * dim..(i + 1) * dim];
        for (x, c) in row.iter_mut().zip(center.iter()) {
            let z: f64 = rng.sample(StandardNormal);
            *x = c + spec.noise * z;
        }
        let label = if spec.label_noise > 0.0 && rng.gen::<f64>() < spec.label_noise {
            rng.gen_range(0..spec.n_classes)
        } else {
            class
        };
        labels.push(label);
    }
    Dataset::new(
        format!("blobs_seed{}", spec.seed),
        spec.shape,
        inputs,
        LabelSet::new(labels, spec.n_classes)?,
    )
}

/// Load a raw image binary: records of 1 label byte + dim pixel bytes,
/// pixels mapped to `[-0.5, 0.5]`. `max_examples` truncates the file.
pub fn load_raw_binary(
    path: &Path,
    shape: InputShape,
    n_classes: usize,
    max_examples: Option<usize>,
    name: &str,
) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let dim = shape.dim();
    let record = 1 + dim;
    if bytes.is_empty() || bytes.len() % record != 0 {
        return Err(Error::ShapeMismatch {
            msg: format!(
                "{} has {} bytes, not a multiple of record size {}",
                path.display(),
                bytes.len(),
                record
            ),
        });
    }
    let mut n = bytes.len() / record;
    if let Some(max) = max_examples {
        n = n.min(max);
    }
    let mut inputs = vec![0.0; n * dim];
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let rec = &bytes[i * record..(i + 1) * record];
        let label = rec[0] as usize;
        if label >= n_classes {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line: i,
                msg: format!("label byte {label} out of range [0, {n_classes})"),
            });
        }
        labels.push(label);
        for (x, &b) in inputs[i * dim..(i + 1) * dim].iter_mut().zip(&rec[1..]) {
            *x = b as f64 / 255.0 - 0.5;
        }
    }
    Dataset::new(name, shape, inputs, LabelSet::new(labels, n_classes)?)
}
