//! One CNN channel: conv → conv → pool → two hidden dense layers → softmax.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, maxpool1d_backward,
    maxpool1d_forward, relu_backward_in_place, relu_in_place, DropoutMask, LayerKind,
    LayerParams, Mode, Padding,
};
use super::loss::{cross_entropy, softmax, softmax_cross_entropy_grad};
use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Layer sizes and dropout rates of a channel. [`ChannelArch::standard`] is
/// the 32/16-filter, 128/64-unit configuration used for real runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelArch {
    pub input_len: usize,
    pub kernel: usize,
    pub conv_filters: [usize; 2],
    pub pool: usize,
    pub dense_units: [usize; 2],
    pub classes: usize,
    pub conv_dropout: f64,
    pub flatten_dropout: f64,
    pub dense_dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShape {
    pub name: &'static str,
    pub dims: Vec<usize>,
}

pub const DEFAULT_INPUT_LEN: usize = 403;

impl ChannelArch {
    pub fn standard(kernel: usize, input_len: usize) -> Self {
        Self {
            input_len,
            kernel,
            conv_filters: [32, 16],
            pool: 1,
            dense_units: [128, 64],
            classes: 3,
            conv_dropout: 0.4,
            flatten_dropout: 0.5,
            dense_dropout: 0.5,
        }
    }

    /// Length after the first (valid) convolution; the second one preserves it.
    pub fn conv_len(&self) -> usize {
        self.input_len + 1 - self.kernel
    }

    pub fn pooled_len(&self) -> usize {
        self.conv_len() / self.pool
    }

    pub fn flatten_width(&self) -> usize {
        self.pooled_len() * self.conv_filters[1]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.kernel == 0 || self.input_len < self.kernel {
            return bad(format!(
                "kernel {} does not fit input length {}",
                self.kernel, self.input_len
            ));
        }
        if self.pool == 0 || self.conv_len() % self.pool != 0 {
            return bad(format!(
                "pool size {} does not divide conv length {}",
                self.pool,
                self.conv_len()
            ));
        }
        if self.conv_filters.contains(&0) || self.dense_units.contains(&0) || self.classes == 0 {
            return bad("layer widths must be positive".into());
        }
        for rate in [self.conv_dropout, self.flatten_dropout, self.dense_dropout] {
            if !(0.0..1.0).contains(&rate) {
                return bad(format!("dropout rate {rate} outside [0, 1)"));
            }
        }
        Ok(())
    }

    pub fn layer_kinds(&self) -> [LayerKind; 5] {
        let [f1, f2] = self.conv_filters;
        let [d1, d2] = self.dense_units;
        [
            LayerKind::Conv1d {
                kernel: self.kernel,
                in_channels: 1,
                filters: f1,
                padding: Padding::Valid,
            },
            LayerKind::Conv1d {
                kernel: self.kernel,
                in_channels: f1,
                filters: f2,
                padding: Padding::Same,
            },
            LayerKind::Dense {
                input: self.flatten_width(),
                output: d1,
            },
            LayerKind::Dense { input: d1, output: d2 },
            LayerKind::Dense {
                input: d2,
                output: self.classes,
            },
        ]
    }

    /// Output shape of every stage, in forward order.
    pub fn output_shapes(&self) -> Vec<LayerShape> {
        let l = self.conv_len();
        let [f1, f2] = self.conv_filters;
        let [d1, d2] = self.dense_units;
        let shape = |name, dims: &[usize]| LayerShape {
            name,
            dims: dims.to_vec(),
        };
        vec![
            shape("input", &[self.input_len, 1]),
            shape("conv1d_relu", &[l, f1]),
            shape("conv1d_relu_dropout", &[l, f2]),
            shape("maxpool1d", &[self.pooled_len(), f2]),
            shape("flatten_dropout", &[self.flatten_width()]),
            shape("dense_dropout_1", &[d1]),
            shape("dense_dropout_2", &[d2]),
            shape("softmax", &[self.classes]),
        ]
    }
}

/// Dropout multipliers for the four dropout sites, drawn once per forward
/// pass and reused by the matching backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub conv: DropoutMask,
    pub flatten: DropoutMask,
    pub dense1: DropoutMask,
    pub dense2: DropoutMask,
}

/// Activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Tensor2,
    pub conv1: Tensor2,
    pub conv2: Tensor2,
    pub conv2_dropped: Tensor2,
    pub pooled: Tensor2,
    pub flat: Vec<f64>,
    pub hidden1: Vec<f64>,
    pub hidden1_dropped: Vec<f64>,
    pub hidden2: Vec<f64>,
    pub hidden2_dropped: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub masks: Option<DropoutMasks>,
}

impl ForwardCache {
    /// Shapes actually produced, aligned with [`ChannelArch::output_shapes`].
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let t = |x: &Tensor2| vec![x.rows(), x.cols()];
        vec![
            t(&self.input),
            t(&self.conv1),
            t(&self.conv2_dropped),
            t(&self.pooled),
            vec![self.flat.len()],
            vec![self.hidden1_dropped.len()],
            vec![self.hidden2_dropped.len()],
            vec![self.probs.len()],
        ]
    }
}

/// Parameter-shaped accumulator for gradients (and optimizer state).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<LayerParams>);

impl Gradients {
    pub fn zeros_for(net: &Network) -> Self {
        Gradients(net.layers.iter().map(|l| LayerParams::zeros(l.kind)).collect())
    }

    pub fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|v| *v *= factor);
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.0.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.0
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: ChannelArch,
    layers: Vec<LayerParams>,
}

impl Network {
    pub fn new(arch: ChannelArch, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let layers = arch
            .layer_kinds()
            .iter()
            .map(|&k| LayerParams::glorot(k, rng))
            .collect();
        Ok(Self { arch, layers })
    }

    pub fn from_layers(arch: ChannelArch, layers: Vec<LayerParams>) -> Result<Self> {
        arch.validate()?;
        let kinds = arch.layer_kinds();
        if layers.len() != kinds.len() {
            return Err(Error::shape("network", kinds.len(), layers.len()));
        }
        for (i, (l, k)) in layers.iter().zip(&kinds).enumerate() {
            if l.kind != *k || l.weights.len() != k.weight_len() || l.bias.len() != k.bias_len() {
                return Err(Error::shape(format!("layer {i}"), format!("{k:?}"), format!("{:?}", l.kind)));
            }
        }
        Ok(Self { arch, layers })
    }

    pub fn arch(&self) -> &ChannelArch {
        &self.arch
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerParams::param_count).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(LayerParams::is_finite)
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn sample_masks(&self, rng: &mut impl Rng) -> DropoutMasks {
        let a = &self.arch;
        let conv_size = a.conv_len() * a.conv_filters[1];
        DropoutMasks {
            conv: DropoutMask::sample(conv_size, a.conv_dropout, rng),
            flatten: DropoutMask::sample(a.flatten_width(), a.flatten_dropout, rng),
            dense1: DropoutMask::sample(a.dense_units[0], a.dense_dropout, rng),
            dense2: DropoutMask::sample(a.dense_units[1], a.dense_dropout, rng),
        }
    }

    /// Forward pass; `masks == None` is inference mode.
    pub fn forward_with_masks(&self, x: &[f64], masks: Option<DropoutMasks>) -> Result<ForwardCache> {
        if x.len() != self.arch.input_len {
            return Err(Error::shape("input", self.arch.input_len, x.len()));
        }
        let named = |layer: &'static str| {
            move |e: Error| match e {
                Error::Shape { expected, actual, .. } => Error::Shape {
                    layer: layer.to_string(),
                    expected,
                    actual,
                },
                other => other,
            }
        };
        let input = Tensor2::column(x);
        let mut conv1 = conv1d_forward(&input, &self.layers[0]).map_err(named("conv1d_relu"))?;
        relu_in_place(conv1.data_mut());
        let mut conv2 = conv1d_forward(&conv1, &self.layers[1]).map_err(named("conv1d_relu_dropout"))?;
        relu_in_place(conv2.data_mut());
        let mut conv2_dropped = conv2.clone();
        if let Some(m) = &masks {
            m.conv.apply(conv2_dropped.data_mut());
        }
        let pooled = maxpool1d_forward(&conv2_dropped, self.arch.pool).map_err(named("maxpool1d"))?;

        let mut flat = pooled.data().to_vec();
        if let Some(m) = &masks {
            m.flatten.apply(&mut flat);
        }
        let mut hidden1 = dense_forward(&flat, &self.layers[2]).map_err(named("dense_dropout_1"))?;
        relu_in_place(&mut hidden1);
        let mut hidden1_dropped = hidden1.clone();
        if let Some(m) = &masks {
            m.dense1.apply(&mut hidden1_dropped);
        }
        let mut hidden2 = dense_forward(&hidden1_dropped, &self.layers[3]).map_err(named("dense_dropout_2"))?;
        relu_in_place(&mut hidden2);
        let mut hidden2_dropped = hidden2.clone();
        if let Some(m) = &masks {
            m.dense2.apply(&mut hidden2_dropped);
        }
        let logits = dense_forward(&hidden2_dropped, &self.layers[4]).map_err(named("softmax"))?;
        let probs = softmax(&logits);
        Ok(ForwardCache {
            input,
            conv1,
            conv2,
            conv2_dropped,
            pooled,
            flat,
            hidden1,
            hidden1_dropped,
            hidden2,
            hidden2_dropped,
            logits,
            probs,
            masks,
        })
    }

    pub fn forward(&self, x: &[f64], mode: Mode, rng: &mut impl Rng) -> Result<ForwardCache> {
        let masks = match mode {
            Mode::Train => Some(self.sample_masks(rng)),
            Mode::Infer => None,
        };
        self.forward_with_masks(x, masks)
    }

    /// Inference-mode class probabilities.
    pub fn predict_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_with_masks(x, None)?.probs)
    }

    /// Accumulates the gradient of a loss whose derivative with respect to the
    /// logits is `d_logits`, reusing the dropout masks stored in `cache`.
    pub fn backward(&self, cache: &ForwardCache, d_logits: &[f64], grads: &mut Gradients) {
        let g = &mut grads.0;
        let apply = |mask: Option<&DropoutMask>, v: &mut [f64]| {
            if let Some(m) = mask {
                m.apply(v)
            }
        };
        let masks = cache.masks.as_ref();

        let mut d_h2 = dense_backward(&cache.hidden2_dropped, d_logits, &self.layers[4], &mut g[4], true, true)
            .expect("input grad requested");
        apply(masks.map(|m| &m.dense2), &mut d_h2);
        relu_backward_in_place(&cache.hidden2, &mut d_h2);

        let mut d_h1 = dense_backward(&cache.hidden1_dropped, &d_h2, &self.layers[3], &mut g[3], true, true)
            .expect("input grad requested");
        apply(masks.map(|m| &m.dense1), &mut d_h1);
        relu_backward_in_place(&cache.hidden1, &mut d_h1);

        let mut d_flat = dense_backward(&cache.flat, &d_h1, &self.layers[2], &mut g[2], true, true)
            .expect("input grad requested");
        apply(masks.map(|m| &m.flatten), &mut d_flat);

        let d_pooled = Tensor2::from_vec(cache.pooled.rows(), cache.pooled.cols(), d_flat)
            .expect("flatten width matches pooled shape");
        let mut d_conv2 = maxpool1d_backward(&cache.conv2_dropped, &d_pooled, self.arch.pool);
        apply(masks.map(|m| &m.conv), d_conv2.data_mut());
        relu_backward_in_place(cache.conv2.data(), d_conv2.data_mut());

        let mut d_conv1 = conv1d_backward(&cache.conv1, &d_conv2, &self.layers[1], &mut g[1], true, true)
            .expect("input grad requested");
        relu_backward_in_place(cache.conv1.data(), d_conv1.data_mut());

        conv1d_backward(&cache.input, &d_conv1, &self.layers[0], &mut g[0], false, false);
    }

    /// Mean cross-entropy over a batch and its exact gradient. In training mode
    /// one set of dropout masks is drawn per sample.
    pub fn batch_gradient(
        &self,
        inputs: &[&[f64]],
        labels: &[usize],
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<(f64, Gradients)> {
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(Error::Data("batch must be non-empty with one label per input".into()));
        }
        let n = inputs.len() as f64;
        let mut grads = Gradients::zeros_for(self);
        let mut loss = 0.0;
        for (x, &label) in inputs.iter().zip(labels) {
            let cache = self.forward(x, mode, rng)?;
            loss += cross_entropy(&cache.probs, label);
            let mut d = softmax_cross_entropy_grad(&cache.probs, label);
            d.iter_mut().for_each(|v| *v /= n);
            self.backward(&cache, &d, &mut grads);
        }
        Ok((loss / n, grads))
    }
}
