//! Built-in model zoo: a multilayer-perceptron family and a small
//! convolutional family, both with width/depth knobs and hand-written
//! forward/backward passes.
//!
//! Forward produces softmax class probabilities; backward produces
//! per-example loss gradients with respect to parameters or inputs.
//! All arithmetic is f64 with fixed evaluation order, so a given
//! (config, seed) pair always yields bit-identical results.

use rand::distributions::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base hidden width of the MLP family at `width_multiplier = 1`.
pub const MLP_BASE_HIDDEN: f64 = 32.0;
/// Base channel count of the CNN family at `width_multiplier = 1`.
pub const CNN_BASE_CHANNELS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    /// Fully-connected network on the flattened input.
    Mlp,
    /// Stack of 3x3 same-padding convolutions followed by a dense head.
    Cnn,
}

impl ModelFamily {
    pub fn label(self) -> &'static str {
        match self {
            ModelFamily::Mlp => "mlp",
            ModelFamily::Cnn => "cnn",
        }
    }
}

/// Architecture identity: family plus width/depth knobs. `param_count`
/// is filled in by [`build_model`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: ModelFamily,
    pub width_multiplier: f64,
    pub depth: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub param_count: Option<u64>,
}

impl ModelConfig {
    pub fn new(family: ModelFamily, width_multiplier: f64, depth: usize) -> Self {
        ModelConfig {
            family,
            width_multiplier,
            depth,
            param_count: None,
        }
    }

    /// Path-safe identifier, e.g. `mlp_w1_d2`.
    pub fn tag(&self) -> String {
        format!(
            "{}_w{}_d{}",
            self.family.label(),
            self.width_multiplier,
            self.depth
        )
    }
}

// Identity is (family, width, depth); param_count is derived.
impl PartialEq for ModelConfig {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family
            && self.width_multiplier == other.width_multiplier
            && self.depth == other.depth
    }
}

/// Input dimensions as channels x height x width. MLPs flatten it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        InputShape {
            channels,
            height,
            width,
        }
    }

    pub fn dim(&self) -> usize {
        self.channels * self.height * self.width
    }
}

#[derive(Debug, Clone)]
enum Layer {
    Dense {
        in_dim: usize,
        out_dim: usize,
        w_off: usize,
        b_off: usize,
        relu: bool,
    },
    Conv3x3 {
        in_ch: usize,
        out_ch: usize,
        h: usize,
        w: usize,
        w_off: usize,
        b_off: usize,
    },
}

impl Layer {
    fn out_dim(&self) -> usize {
        match self {
            Layer::Dense { out_dim, .. } => *out_dim,
            Layer::Conv3x3 { out_ch, h, w, .. } => out_ch * h * w,
        }
    }

    fn relu(&self) -> bool {
        match self {
            Layer::Dense { relu, .. } => *relu,
            Layer::Conv3x3 { .. } => true,
        }
    }

    fn fan_in_out(&self) -> (usize, usize) {
        match self {
            Layer::Dense {
                in_dim, out_dim, ..
            } => (*in_dim, *out_dim),
            Layer::Conv3x3 { in_ch, out_ch, .. } => (in_ch * 9, out_ch * 9),
        }
    }

    fn n_weights(&self) -> usize {
        match self {
            Layer::Dense {
                in_dim, out_dim, ..
            } => in_dim * out_dim,
            Layer::Conv3x3 { in_ch, out_ch, .. } => out_ch * in_ch * 9,
        }
    }

    fn n_biases(&self) -> usize {
        match self {
            Layer::Dense { out_dim, .. } => *out_dim,
            Layer::Conv3x3 { out_ch, .. } => *out_ch,
        }
    }
}

/// A built network: flat parameter vector plus the layer plan.
#[derive(Debug, Clone)]
pub struct Network {
    pub config: ModelConfig,
    pub input_shape: InputShape,
    pub n_classes: usize,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

/// Per-example scratch buffers; reuse one per worker thread.
#[derive(Debug, Clone)]
pub struct Workspace {
    /// acts[0] is the input, acts[l + 1] the output of layer l (post-relu).
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

/// Which scalar is differentiated in an input-gradient pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputGradSource {
    /// Cross-entropy training loss (default).
    Loss,
    /// Pre-softmax logit of the true class.
    TrueLogit,
}

fn round_width(base: f64, multiplier: f64) -> usize {
    (base * multiplier).round() as usize
}

/// Construct and deterministically initialize a network.
pub fn build_model(
    config: &ModelConfig,
    input_shape: InputShape,
    n_classes: usize,
    seed: u64,
) -> Result<Network> {
    if n_classes < 2 {
        return Err(Error::InvalidConfig {
            msg: format!("n_classes must be at least 2, got {n_classes}"),
        });
    }
    if input_shape.dim() == 0 {
        return Err(Error::InvalidConfig {
            msg: "input shape has zero dimensions".into(),
        });
    }
    if config.width_multiplier <= 0.0 {
        return Err(Error::InvalidConfig {
            msg: format!(
                "width_multiplier must be positive, got {}",
                config.width_multiplier
            ),
        });
    }

    let mut layers = Vec::new();
    let mut offset = 0usize;
    let mut push = |layer: Layer, offset: &mut usize| {
        *offset += layer.n_weights() + layer.n_biases();
        layers.push(layer);
    };

    match config.family {
        ModelFamily::Mlp => {
            if config.depth < 1 {
                return Err(Error::InvalidConfig {
                    msg: format!("mlp depth must be at least 1, got {}", config.depth),
                });
            }
            let hidden = round_width(MLP_BASE_HIDDEN, config.width_multiplier);
            if hidden == 0 {
                return Err(Error::ZeroSizeLayer {
                    layer: format!("mlp hidden (width_multiplier {})", config.width_multiplier),
                });
            }
            let mut in_dim = input_shape.dim();
            for _ in 0..config.depth {
                push(
                    Layer::Dense {
                        in_dim,
                        out_dim: hidden,
                        w_off: offset,
                        b_off: offset + in_dim * hidden,
                        relu: true,
                    },
                    &mut offset,
                );
                in_dim = hidden;
            }
            push(
                Layer::Dense {
                    in_dim,
                    out_dim: n_classes,
                    w_off: offset,
                    b_off: offset + in_dim * n_classes,
                    relu: false,
                },
                &mut offset,
            );
        }
        ModelFamily::Cnn => {
            if !(2..=4).contains(&config.depth) {
                return Err(Error::InvalidConfig {
                    msg: format!("cnn depth must be in 2..=4, got {}", config.depth),
                });
            }
            let channels = round_width(CNN_BASE_CHANNELS, config.width_multiplier);
            if channels == 0 {
                return Err(Error::ZeroSizeLayer {
                    layer: format!("cnn channels (width_multiplier {})", config.width_multiplier),
                });
            }
            let (h, w) = (input_shape.height, input_shape.width);
            let mut in_ch = input_shape.channels;
            for _ in 0..config.depth {
                push(
                    Layer::Conv3x3 {
                        in_ch,
                        out_ch: channels,
                        h,
                        w,
                        w_off: offset,
                        b_off: offset + channels * in_ch * 9,
                    },
                    &mut offset,
                );
                in_ch = channels;
            }
            let flat = in_ch * h * w;
            push(
                Layer::Dense {
                    in_dim: flat,
                    out_dim: n_classes,
                    w_off: offset,
                    b_off: offset + flat * n_classes,
                    relu: false,
                },
                &mut offset,
            );
        }
    }

    let mut params = vec![0.0; offset];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &layers {
        let (fan_in, fan_out) = layer.fan_in_out();
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        let (w_off, n_w) = match layer {
            Layer::Dense { w_off, .. } => (*w_off, layer.n_weights()),
            Layer::Conv3x3 { w_off, .. } => (*w_off, layer.n_weights()),
        };
        for p in params[w_off..w_off + n_w].iter_mut() {
            *p = rng.sample(dist);
        }
        // biases stay zero
    }

    let mut config = config.clone();
    config.param_count = Some(offset as u64);
    Ok(Network {
        config,
        input_shape,
        n_classes,
        layers,
        params,
    })
}

impl Network {
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn workspace(&self) -> Workspace {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(vec![0.0; self.input_shape.dim()]);
        for layer in &self.layers {
            acts.push(vec![0.0; layer.out_dim()]);
        }
        let deltas = acts.iter().map(|a| vec![0.0; a.len()]).collect();
        Workspace {
            acts,
            deltas,
            probs: vec![0.0; self.n_classes],
        }
    }

    /// Forward pass; fills the workspace activations and softmax probs.
    pub fn forward(&self, input: &[f64], ws: &mut Workspace) {
        debug_assert_eq!(input.len(), self.input_shape.dim());
        ws.acts[0].copy_from_slice(input);
        for (l, layer) in self.layers.iter().enumerate() {
            let (lo, hi) = ws.acts.split_at_mut(l + 1);
            let a_in = &lo[l];
            let a_out = &mut hi[0];
            self.layer_forward(layer, a_in, a_out);
        }
        let logits = ws.acts.last().unwrap();
        softmax(logits, &mut ws.probs);
    }

    fn layer_forward(&self, layer: &Layer, a_in: &[f64], a_out: &mut [f64]) {
        match layer {
            Layer::Dense {
                in_dim,
                out_dim,
                w_off,
                b_off,
                relu,
            } => {
                for o in 0..*out_dim {
                    let row = &self.params[w_off + o * in_dim..w_off + (o + 1) * in_dim];
                    let mut acc = self.params[b_off + o];
                    for (w, a) in row.iter().zip(a_in.iter()) {
                        acc += w * a;
                    }
                    a_out[o] = if *relu { acc.max(0.0) } else { acc };
                }
            }
            Layer::Conv3x3 {
                in_ch,
                out_ch,
                h,
                w,
                w_off,
                b_off,
            } => {
                let (h, w) = (*h, *w);
                for oc in 0..*out_ch {
                    let bias = self.params[b_off + oc];
                    for y in 0..h {
                        for x in 0..w {
                            let mut acc = bias;
                            for ic in 0..*in_ch {
                                let k_base = w_off + ((oc * in_ch + ic) * 9);
                                let in_base = ic * h * w;
                                for ky in 0..3usize {
                                    let iy = y + ky;
                                    if iy < 1 || iy > h {
                                        continue;
                                    }
                                    let iy = iy - 1;
                                    for kx in 0..3usize {
                                        let ix = x + kx;
                                        if ix < 1 || ix > w {
                                            continue;
                                        }
                                        let ix = ix - 1;
                                        acc += self.params[k_base + ky * 3 + kx]
                                            * a_in[in_base + iy * w + ix];
                                    }
                                }
                            }
                            a_out[(oc * h + y) * w + x] = acc.max(0.0);
                        }
                    }
                }
            }
        }
    }

    /// Class probabilities from the last forward pass.
    pub fn probs<'a>(&self, ws: &'a Workspace) -> &'a [f64] {
        &ws.probs
    }

    /// Cross-entropy loss of the last forward pass against `label`.
    pub fn loss(&self, ws: &Workspace, label: usize) -> f64 {
        -ws.probs[label].ln()
    }

    /// Predicted class of the last forward pass (first argmax).
    pub fn predicted_class(&self, ws: &Workspace) -> usize {
        let mut best = 0;
        let mut best_v = ws.probs[0];
        for (c, &v) in ws.probs.iter().enumerate().skip(1) {
            if v > best_v {
                best = c;
                best_v = v;
            }
        }
        best
    }

    /// Accumulate dLoss/dParams of the example in the workspace into `grad`.
    pub fn backward_params(&self, ws: &mut Workspace, label: usize, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        self.seed_loss_delta(ws, label);
        self.backprop(ws, Some(grad), false);
    }

    /// Gradient with respect to the input, written into `out`.
    pub fn backward_input(
        &self,
        ws: &mut Workspace,
        label: usize,
        source: InputGradSource,
        out: &mut [f64],
    ) {
        match source {
            InputGradSource::Loss => self.seed_loss_delta(ws, label),
            InputGradSource::TrueLogit => {
                let last = ws.deltas.len() - 1;
                ws.deltas[last].fill(0.0);
                ws.deltas[last][label] = 1.0;
            }
        }
        self.backprop(ws, None, true);
        out.copy_from_slice(&ws.deltas[0]);
    }

    fn seed_loss_delta(&self, ws: &mut Workspace, label: usize) {
        // d CE / d logits = probs - onehot
        let last = ws.deltas.len() - 1;
        ws.deltas[last].copy_from_slice(&ws.probs);
        ws.deltas[last][label] -= 1.0;
    }

    fn backprop(&self, ws: &mut Workspace, mut grad: Option<&mut [f64]>, to_input: bool) {
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            // relu mask on this layer's output
            if layer.relu() {
                let act = &ws.acts[l + 1];
                let delta = &mut ws.deltas[l + 1];
                for (d, a) in delta.iter_mut().zip(act.iter()) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let want_input_delta = l > 0 || to_input;
            let (d_lo, d_hi) = ws.deltas.split_at_mut(l + 1);
            let delta_in = &mut d_lo[l];
            let delta_out = &d_hi[0];
            let a_in = &ws.acts[l];
            match layer {
                Layer::Dense {
                    in_dim,
                    out_dim,
                    w_off,
                    b_off,
                    ..
                } => {
                    if let Some(g) = grad.as_deref_mut() {
                        for o in 0..*out_dim {
                            let d = delta_out[o];
                            if d == 0.0 {
                                continue;
                            }
                            let row = &mut g[w_off + o * in_dim..w_off + (o + 1) * in_dim];
                            for (gw, a) in row.iter_mut().zip(a_in.iter()) {
                                *gw += d * a;
                            }
                            g[b_off + o] += d;
                        }
                    }
                    if want_input_delta {
                        delta_in.fill(0.0);
                        for o in 0..*out_dim {
                            let d = delta_out[o];
                            if d == 0.0 {
                                continue;
                            }
                            let row = &self.params[w_off + o * in_dim..w_off + (o + 1) * in_dim];
                            for (di, w) in delta_in.iter_mut().zip(row.iter()) {
                                *di += w * d;
                            }
                        }
                    }
                }
                Layer::Conv3x3 {
                    in_ch,
                    out_ch,
                    h,
                    w,
                    w_off,
                    b_off,
                } => {
                    let (h, w) = (*h, *w);
                    if want_input_delta {
                        delta_in.fill(0.0);
                    }
                    for oc in 0..*out_ch {
                        let mut db = 0.0;
                        for y in 0..h {
                            for x in 0..w {
                                let d = delta_out[(oc * h + y) * w + x];
                                if d == 0.0 {
                                    continue;
                                }
                                db += d;
                                for ic in 0..*in_ch {
                                    let k_base = w_off + (oc * in_ch + ic) * 9;
                                    let in_base = ic * h * w;
                                    for ky in 0..3usize {
                                        let iy = y + ky;
                                        if iy < 1 || iy > h {
                                            continue;
                                        }
                                        let iy = iy - 1;
                                        for kx in 0..3usize {
                                            let ix = x + kx;
                                            if ix < 1 || ix > w {
                                                continue;
                                            }
                                            let ix = ix - 1;
                                            let a = a_in[in_base + iy * w + ix];
                                            if let Some(g) = grad.as_deref_mut() {
                                                g[k_base + ky * 3 + kx] += d * a;
                                            }
                                            if want_input_delta {
                                                delta_in[in_base + iy * w + ix] +=
                                                    self.params[k_base + ky * 3 + kx] * d;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                        if let Some(g) = grad.as_deref_mut() {
                            g[b_off + oc] += db;
                        }
                    }
                }
            }
        }
    }
}

fn softmax(logits: &[f64], probs: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &z) in probs.iter_mut().zip(logits.iter()) {
        let e = (z - max).exp();
        *p = e;
        sum += e;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
}
