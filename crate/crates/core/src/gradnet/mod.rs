//! A small differentiable classifier: layer specs, forward inference, exact
//! backpropagation to parameters and to the input image, SGD training and
//! temperature-scaled softmax outputs.
//!
//! Activations use the same `height x width x channels` row-major layout as
//! [`Image`]. All arithmetic is `f64`; parameters are stored as `f32` only
//! when serialized.

mod layers;
mod serialize;
mod train;

pub use layers::{sigmoid, LayerSpec, Padding};
pub use serialize::{load, save, FORMAT_VERSION};
pub use train::{train, EpochStats, LossKind, TrainConfig, Trainer};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagekit::Image;
use layers::ConvGeom;

/// Clamp applied to probabilities before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch at layer {layer}: {reason}")]
    ShapeMismatch { layer: usize, reason: String },
    #[error("network must end in a sigmoid or softmax layer")]
    MissingHead,
    #[error("invalid label {0}")]
    InvalidLabel(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad network file: {0}")]
    BadFormat(String),
}

/// Dense n-dimensional array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NetError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NetError::ShapeMismatch {
                layer: 0,
                reason: format!("tensor shape {shape:?} needs {n} values, got {}", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Weight and bias of a parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LayerParams {
    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Training target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// Class index.
    Class(usize),
    /// Probability vector over the classes (length 2 for a sigmoid head).
    Soft(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub image: Image,
    pub target: Target,
}

impl Sample {
    pub fn new(image: Image, class: usize) -> Self {
        Sample {
            image,
            target: Target::Class(class),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Head {
    Sigmoid,
    Softmax { temperature: f64, classes: usize },
}

/// Shapes and parameter counts of a layer stack, computed without
/// allocating parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    /// Activation shape before each layer plus the output shape.
    pub shapes: Vec<[usize; 3]>,
    /// `(weight shape, bias length)` per layer.
    pub param_shapes: Vec<Option<(Vec<usize>, usize)>>,
}

impl Plan {
    pub fn parameter_count(&self) -> usize {
        self.param_shapes
            .iter()
            .flatten()
            .map(|(w, b)| w.iter().product::<usize>() + b)
            .sum()
    }
}

/// Propagates shapes through `specs` starting from `input = [h, w, c]`.
pub fn plan(specs: &[LayerSpec], input: [usize; 3]) -> Result<Plan, NetError> {
    let mut shapes = vec![input];
    let mut param_shapes = Vec::with_capacity(specs.len());
    let mut cur = input;
    for (i, spec) in specs.iter().enumerate() {
        let bad = |reason: String| NetError::ShapeMismatch { layer: i, reason };
        let is_last = i + 1 == specs.len();
        let (next, params) = match *spec {
            LayerSpec::Conv {
                out_channels,
                kernel,
                pad,
                stride,
            } => {
                if kernel % 2 == 0 || out_channels == 0 {
                    return Err(bad(format!("conv kernel {kernel} must be odd with channels > 0")));
                }
                let g = ConvGeom::new(cur[0], cur[1], cur[2], out_channels, kernel, stride, pad)
                    .ok_or_else(|| bad(format!("conv {kernel}x{kernel} does not fit {cur:?}")))?;
                (
                    [g.ho, g.wo, out_channels],
                    Some((vec![kernel, kernel, cur[2], out_channels], out_channels)),
                )
            }
            LayerSpec::MaxPool { window, stride } => {
                if window == 0 || stride == 0 || cur[0] < window || cur[1] < window {
                    return Err(bad(format!("maxpool {window}/{stride} does not fit {cur:?}")));
                }
                (
                    [(cur[0] - window) / stride + 1, (cur[1] - window) / stride + 1, cur[2]],
                    None,
                )
            }
            LayerSpec::Relu => (cur, None),
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(bad(format!("dropout rate {rate} outside [0, 1)")));
                }
                (cur, None)
            }
            LayerSpec::Flatten => ([1, 1, cur.iter().product()], None),
            LayerSpec::Dense { width } => {
                if width == 0 {
                    return Err(bad("dense width must be positive".into()));
                }
                let n: usize = cur.iter().product();
                ([1, 1, width], Some((vec![n, width], width)))
            }
            LayerSpec::Sigmoid => {
                if !is_last || cur.iter().product::<usize>() != 1 {
                    return Err(bad("sigmoid must be the last layer on a single logit".into()));
                }
                (cur, None)
            }
            LayerSpec::Softmax { temperature } => {
                if !is_last {
                    return Err(bad("softmax must be the last layer".into()));
                }
                if !(temperature > 0.0) {
                    return Err(NetError::NonPositiveTemperature(temperature));
                }
                ([1, 1, cur.iter().product()], None)
            }
        };
        shapes.push(next);
        param_shapes.push(params);
        cur = next;
    }
    Ok(Plan {
        shapes,
        param_shapes,
    })
}

/// The layer stack used by the dermatology/radiology custom CNN: three
/// same-padded 3x3 convolutions (50, 75, 125 channels) with two 2x2 pools,
/// then dense layers of 500, 250 and 1 units.
pub fn custom_cnn_specs() -> Vec<LayerSpec> {
    scaled_custom_cnn_specs([50, 75, 125], [500, 250])
}

/// The same stack with custom widths.
pub fn scaled_custom_cnn_specs(conv: [usize; 3], dense: [usize; 2]) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(conv[0], 3),
        LayerSpec::Relu,
        LayerSpec::conv(conv[1], 3),
        LayerSpec::Relu,
        LayerSpec::max_pool(2),
        LayerSpec::dropout(0.25),
        LayerSpec::conv(conv[2], 3),
        LayerSpec::Relu,
        LayerSpec::max_pool(2),
        LayerSpec::dropout(0.25),
        LayerSpec::Flatten,
        LayerSpec::dense(dense[0]),
        LayerSpec::Relu,
        LayerSpec::dropout(0.4),
        LayerSpec::dense(dense[1]),
        LayerSpec::Relu,
        LayerSpec::dropout(0.3),
        LayerSpec::dense(1),
        LayerSpec::Sigmoid,
    ]
}

/// Input shape of the custom CNN.
pub const CUSTOM_CNN_INPUT: [usize; 3] = [126, 126, 1];

/// Per-layer cached state of one forward pass.
struct Pass {
    /// Input to each layer plus the final output.
    acts: Vec<Vec<f64>>,
    pool_args: Vec<Option<Vec<usize>>>,
    dropout_masks: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<LayerSpec>,
    plan: Plan,
    params: Vec<Option<LayerParams>>,
}

impl Network {
    /// Builds the stack with He-uniform weights, `+-sqrt(6/fan_in)`, and
    /// zero biases.
    pub fn build(specs: &[LayerSpec], input: [usize; 3], seed: u64) -> Result<Self, NetError> {
        let plan = plan(specs, input)?;
        if !matches!(
            specs.last(),
            Some(LayerSpec::Sigmoid) | Some(LayerSpec::Softmax { .. })
        ) {
            return Err(NetError::MissingHead);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = plan
            .param_shapes
            .iter()
            .map(|ps| {
                ps.as_ref().map(|(wshape, blen)| {
                    let fan_in: usize = wshape[..wshape.len() - 1].iter().product();
                    let bound = (6.0 / fan_in as f64).sqrt();
                    let n: usize = wshape.iter().product();
                    let weight = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
                    let bias = vec![0.0; *blen];
                    LayerParams {
                        weight: Tensor {
                            shape: wshape.clone(),
                            data: weight,
                        },
                        bias: Tensor {
                            shape: vec![*blen],
                            data: bias,
                        },
                    }
                })
            })
            .collect();
        Ok(Network {
            layers: specs.to_vec(),
            plan,
            params,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.plan.shapes[0]
    }

    pub fn output_len(&self) -> usize {
        self.plan.shapes.last().unwrap().iter().product()
    }

    pub fn parameter_count(&self) -> usize {
        self.plan.parameter_count()
    }

    pub fn params(&self) -> &[Option<LayerParams>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Option<LayerParams>] {
        &mut self.params
    }

    pub fn head(&self) -> Head {
        match self.layers.last() {
            Some(LayerSpec::Softmax { temperature }) => Head::Softmax {
                temperature: *temperature,
                classes: self.output_len(),
            },
            _ => Head::Sigmoid,
        }
    }

    /// Changes the softmax temperature in place.
    pub fn set_temperature(&mut self, temperature: f64) -> Result<(), NetError> {
        if !(temperature > 0.0) {
            return Err(NetError::NonPositiveTemperature(temperature));
        }
        match self.layers.last_mut() {
            Some(LayerSpec::Softmax { temperature: t }) => {
                *t = temperature;
                Ok(())
            }
            _ => Err(NetError::MissingHead),
        }
    }

    fn check_input(&self, x: &Image) -> Result<(), NetError> {
        let [h, w, c] = self.input_shape();
        if x.dims() != (h, w, c) {
            return Err(NetError::ShapeMismatch {
                layer: 0,
                reason: format!("input {:?} does not match network input {:?}", x.dims(), [h, w, c]),
            });
        }
        Ok(())
    }

    /// Runs every layer except the head. Dropout is active iff `rng` is given.
    fn run(&self, x: &[f64], mut rng: Option<&mut ChaCha8Rng>) -> Pass {
        let body = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(body + 1);
        let mut pool_args = vec![None; body];
        let mut dropout_masks = vec![None; body];
        acts.push(x.to_vec());
        for i in 0..body {
            let input = &acts[i];
            let [h, w, c] = self.plan.shapes[i];
            let out = match self.layers[i] {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    pad,
                    stride,
                } => {
                    let g = ConvGeom::new(h, w, c, out_channels, kernel, stride, pad).unwrap();
                    let p = self.params[i].as_ref().unwrap();
                    layers::conv_forward(&g, input, &p.weight.data, &p.bias.data)
                }
                LayerSpec::Relu => input.iter().map(|&v| v.max(0.0)).collect(),
                LayerSpec::MaxPool { window, stride } => {
                    let (out, arg) = layers::maxpool_forward(input, (h, w, c), window, stride);
                    pool_args[i] = Some(arg);
                    out
                }
                LayerSpec::Dropout { rate } => match rng.as_deref_mut() {
                    Some(r) if rate > 0.0 => {
                        let keep = 1.0 - rate;
                        let mask: Vec<f64> = (0..input.len())
                            .map(|_| if r.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect();
                        let out = input.iter().zip(&mask).map(|(v, m)| v * m).collect();
                        dropout_masks[i] = Some(mask);
                        out
                    }
                    _ => input.clone(),
                },
                LayerSpec::Flatten => input.clone(),
                LayerSpec::Dense { .. } => {
                    let p = self.params[i].as_ref().unwrap();
                    layers::dense_forward(input, &p.weight.data, &p.bias.data)
                }
                LayerSpec::Sigmoid | LayerSpec::Softmax { .. } => unreachable!("head is last"),
            };
            acts.push(out);
        }
        Pass {
            acts,
            pool_args,
            dropout_masks,
        }
    }

    /// Backpropagates `grad_logits` (gradient w.r.t. the head's input)
    /// through the body. Returns the input gradient and, when requested,
    /// the parameter gradients.
    fn backprop(
        &self,
        pass: &Pass,
        grad_logits: Vec<f64>,
        want_params: bool,
    ) -> (Vec<f64>, Vec<Option<LayerParams>>) {
        let mut grads: Vec<Option<LayerParams>> = if want_params {
            self.params
                .iter()
                .map(|p| {
                    p.as_ref().map(|p| LayerParams {
                        weight: Tensor::zeros(p.weight.shape.clone()),
                        bias: Tensor::zeros(p.bias.shape.clone()),
                    })
                })
                .collect()
        } else {
            vec![None; self.params.len()]
        };
        let mut g = grad_logits;
        for i in (0..self.layers.len() - 1).rev() {
            let input = &pass.acts[i];
            let [h, w, c] = self.plan.shapes[i];
            g = match self.layers[i] {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    pad,
                    stride,
                } => {
                    let geom = ConvGeom::new(h, w, c, out_channels, kernel, stride, pad).unwrap();
                    let p = self.params[i].as_ref().unwrap();
                    let pg = grads[i]
                        .as_mut()
                        .map(|lp| (lp.weight.data.as_mut_slice(), lp.bias.data.as_mut_slice()));
                    layers::conv_backward(&geom, input, &p.weight.data, &g, pg)
                }
                LayerSpec::Relu => g
                    .iter()
                    .zip(input)
                    .map(|(gv, &x)| if x > 0.0 { *gv } else { 0.0 })
                    .collect(),
                LayerSpec::MaxPool { .. } => {
                    layers::maxpool_backward(&g, pass.pool_args[i].as_ref().unwrap(), input.len())
                }
                LayerSpec::Dropout { .. } => match &pass.dropout_masks[i] {
                    Some(mask) => g.iter().zip(mask).map(|(a, b)| a * b).collect(),
                    None => g,
                },
                LayerSpec::Flatten => g,
                LayerSpec::Dense { .. } => {
                    let p = self.params[i].as_ref().unwrap();
                    let pg = grads[i]
                        .as_mut()
                        .map(|lp| (lp.weight.data.as_mut_slice(), lp.bias.data.as_mut_slice()));
                    layers::dense_backward(input, &p.weight.data, &g, pg)
                }
                LayerSpec::Sigmoid | LayerSpec::Softmax { .. } => unreachable!("head is last"),
            };
        }
        (g, grads)
    }

    fn head_probs(&self, logits: &[f64]) -> Vec<f64> {
        match self.head() {
            Head::Sigmoid => vec![sigmoid(logits[0])],
            Head::Softmax { temperature, .. } => layers::softmax(logits, temperature),
        }
    }

    /// Raw scores entering the head layer.
    pub fn logits(&self, x: &Image) -> Result<Vec<f64>, NetError> {
        self.check_input(x)?;
        Ok(self.run(x.data(), None).acts.pop().unwrap())
    }

    /// Eval-mode output: a single probability for a sigmoid head, a
    /// probability vector for a softmax head.
    pub fn forward(&self, x: &Image) -> Result<Vec<f64>, NetError> {
        Ok(self.head_probs(&self.logits(x)?))
    }

    /// Probability of class 1.
    pub fn score(&self, x: &Image) -> Result<f64, NetError> {
        let probs = self.forward(x)?;
        Ok(match self.head() {
            Head::Sigmoid => probs[0],
            Head::Softmax { .. } => probs.get(1).copied().unwrap_or(probs[0]),
        })
    }

    pub fn predict(&self, x: &Image) -> Result<usize, NetError> {
        let probs = self.forward(x)?;
        Ok(predicted_class(self.head(), &probs))
    }

    /// Target as a probability vector matching the head's outputs.
    fn target_probs(&self, y: &Target) -> Result<Vec<f64>, NetError> {
        let n = match self.head() {
            Head::Sigmoid => 2,
            Head::Softmax { classes, .. } => classes,
        };
        let v = match y {
            Target::Class(k) if *k < n => {
                let mut v = vec![0.0; n];
                v[*k] = 1.0;
                v
            }
            Target::Soft(v)
                if v.len() == n
                    && v.iter().all(|p| (0.0..=1.0).contains(p))
                    && (v.iter().sum::<f64>() - 1.0).abs() < 1e-6 =>
            {
                v.clone()
            }
            other => return Err(NetError::InvalidLabel(format!("{other:?} for {n} classes"))),
        };
        Ok(match self.head() {
            Head::Sigmoid => vec![v[1]],
            Head::Softmax { .. } => v,
        })
    }

    /// Cross-entropy (binary for a sigmoid head) and its gradient w.r.t. the
    /// logits. The gradient is that of the unclamped loss, `(p - y) / T`.
    fn loss_and_logit_grad(&self, logits: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
        match self.head() {
            Head::Sigmoid => {
                let z = logits[0];
                let p = sigmoid(z).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                let t = y[0];
                let loss = -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
                // sigmoid(z) - t without cancellation near saturation.
                let grad = (1.0 - t) * sigmoid(z) - t * sigmoid(-z);
                (loss, vec![grad])
            }
            Head::Softmax { temperature, .. } => {
                let probs = layers::softmax(logits, temperature);
                let loss = -probs
                    .iter()
                    .zip(y)
                    .map(|(&p, &t)| if t > 0.0 { t * p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln() } else { 0.0 })
                    .sum::<f64>();
                let grad = probs
                    .iter()
                    .zip(y)
                    .map(|(p, t)| (p - t) / temperature)
                    .collect();
                (loss, grad)
            }
        }
    }

    /// Loss `J(x, y)` in eval mode.
    pub fn loss(&self, x: &Image, y: &Target) -> Result<f64, NetError> {
        let t = self.target_probs(y)?;
        let logits = self.logits(x)?;
        Ok(self.loss_and_logit_grad(&logits, &t).0)
    }

    /// `dJ/dx` in eval mode, laid out like `x`.
    pub fn input_gradient(&self, x: &Image, y: &Target) -> Result<Tensor, NetError> {
        self.loss_and_input_gradient(x, y).map(|(_, g)| g)
    }

    pub fn loss_and_input_gradient(&self, x: &Image, y: &Target) -> Result<(f64, Tensor), NetError> {
        self.check_input(x)?;
        let t = self.target_probs(y)?;
        let pass = self.run(x.data(), None);
        let (loss, gl) = self.loss_and_logit_grad(pass.acts.last().unwrap(), &t);
        let (gx, _) = self.backprop(&pass, gl, false);
        let [h, w, c] = self.input_shape();
        Ok((loss, Tensor::new(vec![h, w, c], gx)?))
    }

    /// Binary decision margin and its input gradient: the logit for a
    /// sigmoid head, `z1 - z0` for a two-way softmax. Positive means class 1.
    pub fn margin_and_gradient(&self, x: &Image) -> Result<(f64, Tensor), NetError> {
        self.check_input(x)?;
        let pass = self.run(x.data(), None);
        let logits = pass.acts.last().unwrap();
        let (margin, seed) = match self.head() {
            Head::Sigmoid => (logits[0], vec![1.0]),
            Head::Softmax { classes: 2, .. } => (logits[1] - logits[0], vec![-1.0, 1.0]),
            Head::Softmax { classes, .. } => {
                return Err(NetError::ShapeMismatch {
                    layer: self.layers.len() - 1,
                    reason: format!("binary margin needs 2 classes, head has {classes}"),
                })
            }
        };
        let (gx, _) = self.backprop(&pass, seed, false);
        let [h, w, c] = self.input_shape();
        Ok((margin, Tensor::new(vec![h, w, c], gx)?))
    }

    /// Batch-averaged parameter gradients in eval mode (dropout off).
    pub fn param_gradients(&self, batch: &[Sample]) -> Result<Vec<Option<LayerParams>>, NetError> {
        let refs: Vec<&Sample> = batch.iter().collect();
        self.batch_gradients(&refs, None).map(|b| b.grads)
    }

    /// Batch-averaged loss, parameter gradients and correct count with
    /// dropout masks drawn from `rng` when given.
    pub(crate) fn batch_gradients(
        &self,
        batch: &[&Sample],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<BatchGrads, NetError> {
        if batch.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let mut total: Option<Vec<Option<LayerParams>>> = None;
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for s in batch {
            self.check_input(&s.image)?;
            let t = self.target_probs(&s.target)?;
            let pass = self.run(s.image.data(), rng.as_deref_mut());
            let logits = pass.acts.last().unwrap();
            let (loss, gl) = self.loss_and_logit_grad(logits, &t);
            loss_sum += loss;
            let probs = self.head_probs(logits);
            if predicted_class(self.head(), &probs) == target_class(&t) {
                correct += 1;
            }
            let (_, grads) = self.backprop(&pass, gl, true);
            match total.as_mut() {
                None => total = Some(grads),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(grads) {
                        if let (Some(a), Some(g)) = (a.as_mut(), g) {
                            add_assign(&mut a.weight.data, &g.weight.data);
                            add_assign(&mut a.bias.data, &g.bias.data);
                        }
                    }
                }
            }
        }
        let n = batch.len() as f64;
        let mut grads = total.unwrap();
        for lp in grads.iter_mut().flatten() {
            lp.weight.data.iter_mut().for_each(|v| *v /= n);
            lp.bias.data.iter_mut().for_each(|v| *v /= n);
        }
        Ok(BatchGrads {
            grads,
            loss: loss_sum / n,
            correct,
        })
    }
}

pub(crate) struct BatchGrads {
    pub grads: Vec<Option<LayerParams>>,
    pub loss: f64,
    pub correct: usize,
}

fn add_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

fn predicted_class(head: Head, probs: &[f64]) -> usize {
    match head {
        Head::Sigmoid => (probs[0] >= 0.5) as usize,
        Head::Softmax { .. } => argmax(probs),
    }
}

/// Class index of a head-shaped target vector.
fn target_class(t: &[f64]) -> usize {
    if t.len() == 1 {
        (t[0] >= 0.5) as usize
    } else {
        argmax(t)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `p_i = exp(z_i / T) / sum_j exp(z_j / T)`.
pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Result<Vec<f64>, NetError> {
    if !(temperature > 0.0) {
        return Err(NetError::NonPositiveTemperature(temperature));
    }
    Ok(layers::softmax(logits, temperature))
}

/// Replaces a trailing `Dense(1) + Sigmoid` with `Dense(2) + Softmax(T)`, or
/// sets the temperature of an existing softmax head.
pub fn promote_to_softmax(specs: &[LayerSpec], temperature: f64) -> Result<Vec<LayerSpec>, NetError> {
    if !(temperature > 0.0) {
        return Err(NetError::NonPositiveTemperature(temperature));
    }
    let mut out = specs.to_vec();
    let n = out.len();
    match out.last() {
        Some(LayerSpec::Softmax { .. }) => {
            out[n - 1] = LayerSpec::Softmax { temperature };
        }
        Some(LayerSpec::Sigmoid) if n >= 2 && out[n - 2] == LayerSpec::Dense { width: 1 } => {
            out[n - 2] = LayerSpec::Dense { width: 2 };
            out[n - 1] = LayerSpec::Softmax { temperature };
        }
        _ => return Err(NetError::MissingHead),
    }
    Ok(out)
}
