//! A small fixed-architecture CNN with explicit backpropagation.
//!
//! ```text
//! 1x32x32 -> conv3x3(1->8)  ReLU [s1] maxpool2
//!         -> conv3x3(8->16) ReLU [s2] maxpool2
//!         -> conv3x3(16->32) ReLU [s3] -> global average pool -> linear(32->K)
//! ```
//!
//! Convolutions use zero padding 1 and stride 1. The post-ReLU outputs
//! `s1..s3` are the layers exported to capture files.

mod checkpoint;
pub mod shapes;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::capture::{CaptureFile, LayerRecord};
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor3;

pub use checkpoint::{load_params, read_params, save_params, write_params, CHECKPOINT_MAGIC};
pub use shapes::{generate_shapes, ShapesSample};

pub const INPUT_SIZE: usize = 32;
pub const STAGE_CHANNELS: [usize; 3] = [8, 16, 32];
pub const STAGE_NAMES: [&str; 3] = ["s1", "s2", "s3"];
pub const FEATURES: usize = 32;

const CLASSIFIER_INIT_STD: f64 = 0.5;

/// One `conv3x3 -> ReLU` stage. Kernels are laid out `(c_out, c_in, 3, 3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStage {
    pub c_in: usize,
    pub c_out: usize,
    pub kernels: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvStage {
    fn zeros(c_in: usize, c_out: usize) -> Self {
        Self { c_in, c_out, kernels: vec![0.0; c_out * c_in * 9], bias: vec![0.0; c_out] }
    }

    pub fn kernel_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.c_in + i) * 3 + ky) * 3 + kx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub stages: Vec<ConvStage>,
    /// `(classes, 32)` row-major.
    pub classifier_weights: Vec<f32>,
    pub classifier_bias: Vec<f32>,
    pub classes: usize,
    pub rng_seed: u64,
}

impl ModelParams {
    pub fn zeros(classes: usize) -> Self {
        let mut c_in = 1;
        let stages = STAGE_CHANNELS
            .iter()
            .map(|&c_out| {
                let s = ConvStage::zeros(c_in, c_out);
                c_in = c_out;
                s
            })
            .collect();
        Self {
            stages,
            classifier_weights: vec![0.0; classes * FEATURES],
            classifier_bias: vec![0.0; classes],
            classes,
            rng_seed: 0,
        }
    }

    /// He-normal kernels, zero biases, seeded.
    pub fn init(classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(classes);
        p.rng_seed = seed;
        for s in &mut p.stages {
            let normal = Normal::new(0.0, (2.0 / (s.c_in * 9) as f64).sqrt()).unwrap();
            s.kernels.iter_mut().for_each(|w| *w = normal.sample(&mut rng) as f32);
        }
        // Pooled features are small, so a narrow classifier init stalls the
        // first epochs.
        let normal = Normal::new(0.0, CLASSIFIER_INIT_STD).unwrap();
        p.classifier_weights.iter_mut().for_each(|w| *w = normal.sample(&mut rng) as f32);
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 {
            return Err(Error::Validation("model has zero classes".into()));
        }
        if self.stages.len() != STAGE_CHANNELS.len() {
            return Err(Error::Validation(format!("expected 3 stages, got {}", self.stages.len())));
        }
        let mut c_in = 1;
        for (n, s) in self.stages.iter().enumerate() {
            let c_out = STAGE_CHANNELS[n];
            if s.c_in != c_in || s.c_out != c_out || s.kernels.len() != c_out * c_in * 9 || s.bias.len() != c_out {
                return Err(Error::Validation(format!("stage {} has wrong shape", n + 1)));
            }
            c_in = c_out;
        }
        if self.classifier_weights.len() != self.classes * FEATURES || self.classifier_bias.len() != self.classes {
            return Err(Error::Validation("classifier has wrong shape".into()));
        }
        let all_finite = self
            .stages
            .iter()
            .flat_map(|s| s.kernels.iter().chain(&s.bias))
            .chain(&self.classifier_weights)
            .chain(&self.classifier_bias)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Validation("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Intermediate values of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTape {
    /// `(channels, height, width)` of the convolution output.
    pub shape: (usize, usize, usize),
    pub pre_activation: Vec<f32>,
    pub activation: Vec<f32>,
    /// Max-pooled activation, absent for the last stage.
    pub pooled: Option<Vec<f32>>,
    /// For each pooled cell, the index of the winning element within its
    /// activation plane.
    pub argmax: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTape {
    pub input: Vec<f32>,
    pub stages: Vec<StageTape>,
    /// Globally average-pooled last-stage activation.
    pub features: Vec<f32>,
    /// Pre-softmax class scores.
    pub logits: Vec<f32>,
}

/// Gradients of a scalar (a logit, or a loss) with respect to everything the
/// tape and parameters hold.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Per stage, with respect to the post-ReLU activation.
    pub activations: Vec<Vec<f32>>,
    /// Per stage, with respect to the pre-activation; this is the spatial
    /// bias-gradient map.
    pub pre_activations: Vec<Vec<f32>>,
    pub input: Vec<f32>,
    pub kernels: Vec<Vec<f32>>,
    /// Per stage, the spatial sum of `pre_activations`.
    pub biases: Vec<Vec<f32>>,
    pub classifier_weights: Vec<f32>,
    pub classifier_bias: Vec<f32>,
}

fn conv3x3(input: &[f32], c_in: usize, h: usize, w: usize, stage: &ConvStage) -> Vec<f32> {
    let plane = h * w;
    let mut out = vec![0.0f32; stage.c_out * plane];
    for o in 0..stage.c_out {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.fill(stage.bias[o]);
        for i in 0..c_in {
            let src = &input[i * plane..(i + 1) * plane];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wgt = stage.kernels[stage.kernel_index(o, i, ky, kx)];
                    if wgt == 0.0 {
                        continue;
                    }
                    let (y0, y1) = valid_range(ky, h);
                    let (x0, x1) = valid_range(kx, w);
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let d = &mut dst[y * w + x0..y * w + x1];
                        let s = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                        for (dv, &sv) in d.iter_mut().zip(s) {
                            *dv += wgt * sv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Output coordinates `[lo, hi)` whose tap `k` lands inside `[0, n)`.
#[inline]
fn valid_range(k: usize, n: usize) -> (usize, usize) {
    match k {
        0 => (1, n),
        1 => (0, n),
        _ => (0, n - 1),
    }
}

/// Gradients of a convolution: accumulates kernel and bias gradients and
/// returns the gradient with respect to its input.
fn conv3x3_backward(
    input: &[f32],
    h: usize,
    w: usize,
    stage: &ConvStage,
    d_out: &[f32],
    d_kernels: &mut [f32],
    d_bias: &mut [f32],
) -> Vec<f32> {
    let plane = h * w;
    let mut d_in = vec![0.0f32; stage.c_in * plane];
    for o in 0..stage.c_out {
        let g = &d_out[o * plane..(o + 1) * plane];
        d_bias[o] = g.iter().map(|&v| v as f64).sum::<f64>() as f32;
        for i in 0..stage.c_in {
            let src = &input[i * plane..(i + 1) * plane];
            let d_src = &mut d_in[i * plane..(i + 1) * plane];
            for ky in 0..3 {
                for kx in 0..3 {
                    let idx = stage.kernel_index(o, i, ky, kx);
                    let wgt = stage.kernels[idx];
                    let (y0, y1) = valid_range(ky, h);
                    let (x0, x1) = valid_range(kx, w);
                    let mut acc = 0.0f64;
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let gr = &g[y * w + x0..y * w + x1];
                        let off = sy * w + x0 + kx - 1;
                        let s = &src[off..off + (x1 - x0)];
                        let mut row = 0.0f32;
                        for (&gv, &sv) in gr.iter().zip(s) {
                            row += gv * sv;
                        }
                        acc += row as f64;
                        if wgt != 0.0 {
                            for (dv, &gv) in d_src[off..off + (x1 - x0)].iter_mut().zip(gr) {
                                *dv += wgt * gv;
                            }
                        }
                    }
                    d_kernels[idx] = acc as f32;
                }
            }
        }
    }
    d_in
}

fn maxpool2(act: &[f32], c: usize, h: usize, w: usize) -> (Vec<f32>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut pooled = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for k in 0..c {
        let p = &act[k * h * w..(k + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                let mut best = 2 * y * w + 2 * x;
                for idx in [2 * y * w + 2 * x + 1, (2 * y + 1) * w + 2 * x, (2 * y + 1) * w + 2 * x + 1] {
                    if p[idx] > p[best] {
                        best = idx;
                    }
                }
                pooled.push(p[best]);
                argmax.push(best as u32);
            }
        }
    }
    (pooled, argmax)
}

/// Runs the network on a `(1, 32, 32)` input, recording everything the
/// backward pass needs.
pub fn forward(p: &ModelParams, x: &Tensor3) -> Result<ForwardTape> {
    if x.shape() != (1, INPUT_SIZE, INPUT_SIZE) {
        return Err(invalid(format!("input shape {:?}, expected (1, {INPUT_SIZE}, {INPUT_SIZE})", x.shape())));
    }
    if p.stages.len() != STAGE_CHANNELS.len() {
        return Err(invalid("model must have three stages"));
    }
    let mut stages = Vec::with_capacity(3);
    let mut current = x.data().to_vec();
    let (mut c, mut h, mut w) = (1, INPUT_SIZE, INPUT_SIZE);
    for (n, stage) in p.stages.iter().enumerate() {
        if stage.c_in != c {
            return Err(invalid(format!("stage {} expects {} input channels, got {c}", n + 1, stage.c_in)));
        }
        let pre = conv3x3(&current, c, h, w, stage);
        let act: Vec<f32> = pre.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        c = stage.c_out;
        let last = n + 1 == p.stages.len();
        let (pooled, argmax) = if last {
            current = act.clone();
            (None, None)
        } else {
            let (pooled, argmax) = maxpool2(&act, c, h, w);
            current = pooled.clone();
            (Some(pooled), Some(argmax))
        };
        stages.push(StageTape { shape: (c, h, w), pre_activation: pre, activation: act, pooled, argmax });
        if !last {
            h /= 2;
            w /= 2;
        }
    }

    let plane = (h * w) as f64;
    let features: Vec<f32> =
        current.chunks_exact(h * w).map(|ch| (ch.iter().map(|&v| v as f64).sum::<f64>() / plane) as f32).collect();
    let logits = (0..p.classes)
        .map(|cls| {
            let row = &p.classifier_weights[cls * FEATURES..(cls + 1) * FEATURES];
            let dot: f64 = row.iter().zip(&features).map(|(&a, &b)| a as f64 * b as f64).sum();
            (dot + p.classifier_bias[cls] as f64) as f32
        })
        .collect();
    Ok(ForwardTape { input: x.data().to_vec(), stages, features, logits })
}

/// Backpropagates an arbitrary upstream gradient over the logits.
pub fn backward(p: &ModelParams, tape: &ForwardTape, d_logits: &[f32]) -> Result<Gradients> {
    if d_logits.len() != p.classes {
        return Err(invalid(format!("{} logit gradients for {} classes", d_logits.len(), p.classes)));
    }
    let classifier_bias = d_logits.to_vec();
    let mut classifier_weights = vec![0.0f32; p.classes * FEATURES];
    let mut d_features = vec![0.0f64; FEATURES];
    for (cls, &dl) in d_logits.iter().enumerate() {
        let row = &p.classifier_weights[cls * FEATURES..(cls + 1) * FEATURES];
        for k in 0..FEATURES {
            classifier_weights[cls * FEATURES + k] = dl * tape.features[k];
            d_features[k] += dl as f64 * row[k] as f64;
        }
    }

    let n_stages = tape.stages.len();
    let mut activations = vec![Vec::new(); n_stages];
    let mut pre_activations = vec![Vec::new(); n_stages];
    let mut kernels = vec![Vec::new(); n_stages];
    let mut biases = vec![Vec::new(); n_stages];

    let last = &tape.stages[n_stages - 1];
    let (c, h, w) = last.shape;
    let plane = (h * w) as f64;
    let mut d_act: Vec<f32> = d_features.iter().flat_map(|&g| std::iter::repeat_n((g / plane) as f32, h * w)).collect();
    debug_assert_eq!(d_act.len(), c * h * w);

    let mut input_grad = Vec::new();
    for n in (0..n_stages).rev() {
        let st = &tape.stages[n];
        let stage = &p.stages[n];
        let (_, h, w) = st.shape;
        let d_pre: Vec<f32> =
            d_act.iter().zip(&st.pre_activation).map(|(&g, &z)| if z > 0.0 { g } else { 0.0 }).collect();
        let input: &[f32] =
            if n == 0 { &tape.input } else { tape.stages[n - 1].pooled.as_deref().expect("pooled output") };
        let mut dk = vec![0.0f32; stage.kernels.len()];
        let mut db = vec![0.0f32; stage.c_out];
        let d_in = conv3x3_backward(input, h, w, stage, &d_pre, &mut dk, &mut db);
        activations[n] = std::mem::take(&mut d_act);
        pre_activations[n] = d_pre;
        kernels[n] = dk;
        biases[n] = db;

        if n == 0 {
            input_grad = d_in;
        } else {
            let prev = &tape.stages[n - 1];
            let (pc, ph, pw) = prev.shape;
            let argmax = prev.argmax.as_ref().expect("pool indices");
            let pooled_plane = (ph / 2) * (pw / 2);
            let mut scattered = vec![0.0f32; pc * ph * pw];
            for k in 0..pc {
                for cell in 0..pooled_plane {
                    let src = k * pooled_plane + cell;
                    scattered[k * ph * pw + argmax[src] as usize] += d_in[src];
                }
            }
            d_act = scattered;
        }
    }

    Ok(Gradients {
        activations,
        pre_activations,
        input: input_grad,
        kernels,
        biases,
        classifier_weights,
        classifier_bias,
    })
}

/// Gradients of the pre-softmax score of class `c`.
pub fn backward_to_class(p: &ModelParams, tape: &ForwardTape, c: usize) -> Result<Gradients> {
    if c >= p.classes {
        return Err(invalid(format!("class {c} out of range for {} classes", p.classes)));
    }
    let mut d_logits = vec![0.0f32; p.classes];
    d_logits[c] = 1.0;
    backward(p, tape, &d_logits)
}

pub fn predict(p: &ModelParams, x: &Tensor3) -> Result<usize> {
    let tape = forward(p, x)?;
    Ok(argmax(&tape.logits))
}

fn argmax(v: &[f32]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}

/// Softmax cross-entropy loss and its gradient over the logits.
fn softmax_xent(logits: &[f32], label: usize) -> (f64, Vec<f32>) {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|&z| (z as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() - (logits[label] as f64 - max);
    let grad = exps.iter().enumerate().map(|(i, &e)| (e / total - if i == label { 1.0 } else { 0.0 }) as f32).collect();
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f32,
    pub batch_size: usize,
    pub seed: u64,
    pub classes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 30, learning_rate: 0.05, batch_size: 16, seed: 7, classes: shapes::SHAPE_CLASSES }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub params: ModelParams,
    /// Mean training loss of each epoch, measured during the epoch.
    pub epoch_losses: Vec<f64>,
    /// Accuracy of the final parameters on the training set.
    pub train_accuracy: f64,
}

/// Mini-batch SGD on softmax cross-entropy using image-level labels only.
pub fn train(dataset: &[ShapesSample], cfg: &TrainConfig) -> Result<TrainReport> {
    train_from(ModelParams::init(cfg.classes, cfg.seed), dataset, cfg)
}

/// Like [`train`], starting from the given parameters.
pub fn train_from(mut params: ModelParams, dataset: &[ShapesSample], cfg: &TrainConfig) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(invalid("empty training set"));
    }
    if !cfg.learning_rate.is_finite() || cfg.learning_rate < 0.0 {
        return Err(invalid(format!("invalid learning rate {}", cfg.learning_rate)));
    }
    if cfg.batch_size == 0 {
        return Err(invalid("batch size must be positive"));
    }
    if let Some(s) = dataset.iter().find(|s| s.label >= params.classes) {
        return Err(invalid(format!("label {} out of range for {} classes", s.label, params.classes)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = GradAccumulator::new(&params);
            for &idx in batch {
                let sample = &dataset[idx];
                let tape = forward(&params, &sample.image)?;
                let (loss, d_logits) = softmax_xent(&tape.logits, sample.label);
                if !loss.is_finite() {
                    return Err(Error::Divergence { epoch, loss });
                }
                epoch_loss += loss;
                acc.add(&backward(&params, &tape, &d_logits)?);
            }
            acc.apply(&mut params, cfg.learning_rate / batch.len() as f32);
        }
        let mean = epoch_loss / dataset.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence { epoch, loss: mean });
        }
        epoch_losses.push(mean);
    }
    if params.validate().is_err() {
        return Err(Error::Divergence { epoch: cfg.epochs.saturating_sub(1), loss: f64::NAN });
    }

    let train_accuracy = accuracy(&params, dataset)?;
    Ok(TrainReport { params, epoch_losses, train_accuracy })
}

// Keeps the shuffle stream distinct from the initialization stream.
const SHUFFLE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn accuracy(params: &ModelParams, dataset: &[ShapesSample]) -> Result<f64> {
    let mut correct = 0usize;
    for s in dataset {
        if predict(params, &s.image)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len().max(1) as f64)
}

struct GradAccumulator {
    kernels: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl GradAccumulator {
    fn new(p: &ModelParams) -> Self {
        Self {
            kernels: p.stages.iter().map(|s| vec![0.0; s.kernels.len()]).collect(),
            biases: p.stages.iter().map(|s| vec![0.0; s.bias.len()]).collect(),
            weights: vec![0.0; p.classifier_weights.len()],
            bias: vec![0.0; p.classifier_bias.len()],
        }
    }

    fn add(&mut self, g: &Gradients) {
        fn add_into(dst: &mut [f64], src: &[f32]) {
            dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s as f64);
        }
        for n in 0..self.kernels.len() {
            add_into(&mut self.kernels[n], &g.kernels[n]);
            add_into(&mut self.biases[n], &g.biases[n]);
        }
        add_into(&mut self.weights, &g.classifier_weights);
        add_into(&mut self.bias, &g.classifier_bias);
    }

    fn apply(&self, p: &mut ModelParams, step: f32) {
        fn step_into(dst: &mut [f32], grad: &[f64], step: f32) {
            dst.iter_mut().zip(grad).for_each(|(d, &g)| *d -= step * g as f32);
        }
        for (n, s) in p.stages.iter_mut().enumerate() {
            step_into(&mut s.kernels, &self.kernels[n], step);
            step_into(&mut s.bias, &self.biases[n], step);
        }
        step_into(&mut p.classifier_weights, &self.weights, step);
        step_into(&mut p.classifier_bias, &self.bias, step);
    }
}

/// Runs forward and backward for class `c` and packages the result as a
/// capture with layers `s1..s3`.
pub fn export_capture(p: &ModelParams, x: &Tensor3, c: usize, image_id: &str) -> Result<CaptureFile> {
    let tape = forward(p, x)?;
    let grads = backward_to_class(p, &tape, c)?;
    capture_from(p, &tape, &grads, c, image_id)
}

pub fn capture_from(
    p: &ModelParams,
    tape: &ForwardTape,
    grads: &Gradients,
    c: usize,
    image_id: &str,
) -> Result<CaptureFile> {
    let tensor = |shape: (usize, usize, usize), data: &[f32]| Tensor3::new(shape.0, shape.1, shape.2, data.to_vec());
    let layers = tape
        .stages
        .iter()
        .enumerate()
        .map(|(n, st)| {
            Ok(LayerRecord {
                name: STAGE_NAMES[n].to_string(),
                depth_index: n as u32 + 1,
                activation: tensor(st.shape, &st.activation)?,
                gradient: tensor(st.shape, &grads.activations[n])?,
                bias: Some(p.stages[n].bias.clone()),
                bias_gradient: Some(tensor(st.shape, &grads.pre_activations[n])?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let input_shape = (1, INPUT_SIZE, INPUT_SIZE);
    let cf = CaptureFile {
        image_id: image_id.to_string(),
        class_index: c,
        score: tape.logits[c],
        input: tensor(input_shape, &tape.input)?,
        input_gradient: Some(tensor(input_shape, &grads.input)?),
        layers,
    };
    cf.validate()?;
    Ok(cf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(seed: u64) -> Tensor3 {
        generate_shapes(1, seed).remove(0).image
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let tape = forward(&ModelParams::zeros(3), &image(1)).unwrap();
        assert_eq!(tape.logits, vec![0.0; 3]);
    }

    #[test]
    fn delta_kernel_passes_input_through_stage_one() {
        let mut p = ModelParams::zeros(3);
        for o in 0..8 {
            let idx = p.stages[0].kernel_index(o, 0, 1, 1);
            p.stages[0].kernels[idx] = 1.0;
        }
        let x = image(2);
        let tape = forward(&p, &x).unwrap();
        for o in 0..8 {
            assert_eq!(&tape.stages[0].activation[o * 1024..(o + 1) * 1024], x.data());
        }
    }

    #[test]
    fn rejects_wrong_input_shape() {
        assert!(forward(&ModelParams::zeros(3), &Tensor3::zeros(1, 16, 16)).is_err());
    }

    #[test]
    fn classifier_bias_gradient_is_one_hot() {
        let p = ModelParams::init(3, 1);
        let tape = forward(&p, &image(3)).unwrap();
        let g = backward_to_class(&p, &tape, 2).unwrap();
        assert_eq!(g.classifier_bias, vec![0.0, 0.0, 1.0]);
        assert!(backward_to_class(&p, &tape, 3).is_err());
    }

    #[test]
    fn zero_classifier_row_kills_activation_gradients() {
        let mut p = ModelParams::init(3, 1);
        p.classifier_weights[FEATURES..2 * FEATURES].fill(0.0);
        let tape = forward(&p, &image(4)).unwrap();
        let g = backward_to_class(&p, &tape, 1).unwrap();
        for a in g.activations.iter().chain(&g.pre_activations) {
            assert!(a.iter().all(|&v| v == 0.0));
        }
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn last_stage_gradient_is_weight_over_plane() {
        let p = ModelParams::init(3, 5);
        let tape = forward(&p, &image(5)).unwrap();
        for c in 0..3 {
            let g = backward_to_class(&p, &tape, c).unwrap();
            for k in 0..32 {
                let expected = p.classifier_weights[c * FEATURES + k] / 64.0;
                assert!(g.activations[2][k * 64..(k + 1) * 64].iter().all(|&v| v == expected));
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let data = generate_shapes(8, 9);
        let cfg = TrainConfig { epochs: 1, learning_rate: 0.0, batch_size: 4, seed: 3, classes: 3 };
        let report = train(&data, &cfg).unwrap();
        assert_eq!(report.params, ModelParams::init(3, 3));
    }

    #[test]
    fn memorizes_single_sample() {
        let data = generate_shapes(1, 10);
        let cfg = TrainConfig { epochs: 40, learning_rate: 0.05, batch_size: 1, seed: 1, classes: 3 };
        let report = train(&data, &cfg).unwrap();
        assert_eq!(report.train_accuracy, 1.0);
    }

    #[test]
    fn export_matches_forward_and_backward() {
        let p = ModelParams::init(3, 2);
        let x = image(6);
        let cf = export_capture(&p, &x, 1, "img").unwrap();
        let tape = forward(&p, &x).unwrap();
        let g = backward_to_class(&p, &tape, 1).unwrap();
        assert_eq!(cf.score, tape.logits[1]);
        let shapes: Vec<_> = cf.layers.iter().map(|l| l.shape()).collect();
        assert_eq!(shapes, vec![(8, 32, 32), (16, 16, 16), (32, 8, 8)]);
        for (n, l) in cf.layers.iter().enumerate() {
            assert_eq!(l.gradient.data(), &g.activations[n][..]);
            assert_eq!(l.bias_gradient.as_ref().unwrap().data(), &g.pre_activations[n][..]);
        }
        assert_eq!(cf.input_gradient.as_ref().unwrap().data(), &g.input[..]);
        assert_eq!(crate::capture::CaptureFile::from_bytes(&cf.to_bytes().unwrap()).unwrap(), cf);
    }
}
