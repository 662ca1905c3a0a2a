//! Forward and backward passes for the fixed layer set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// No padding; output length `L - k + 1`.
    Valid,
    /// Zero padding that preserves length: `(k - 1) / 2` on the left, the rest on the right.
    Same,
}

impl Padding {
    pub fn left(self, kernel: usize) -> usize {
        match self {
            Padding::Valid => 0,
            Padding::Same => (kernel - 1) / 2,
        }
    }

    pub fn output_len(self, input_len: usize, kernel: usize) -> Option<usize> {
        match self {
            Padding::Valid => (input_len + 1).checked_sub(kernel).filter(|&n| n > 0),
            Padding::Same => Some(input_len),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    /// Weights laid out `[kernel][in_channels][filters]`.
    Conv1d {
        kernel: usize,
        in_channels: usize,
        filters: usize,
        padding: Padding,
    },
    /// Weights laid out `[input][output]`.
    Dense { input: usize, output: usize },
}

impl LayerKind {
    pub fn weight_len(&self) -> usize {
        match *self {
            LayerKind::Conv1d {
                kernel,
                in_channels,
                filters,
                ..
            } => kernel * in_channels * filters,
            LayerKind::Dense { input, output } => input * output,
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerKind::Conv1d { filters, .. } => filters,
            LayerKind::Dense { output, .. } => output,
        }
    }

    pub fn fans(&self) -> (usize, usize) {
        match *self {
            LayerKind::Conv1d {
                kernel,
                in_channels,
                filters,
                ..
            } => (kernel * in_channels, kernel * filters),
            LayerKind::Dense { input, output } => (input, output),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub kind: LayerKind,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(kind: LayerKind) -> Self {
        Self {
            kind,
            weights: vec![0.0; kind.weight_len()],
            bias: vec![0.0; kind.bias_len()],
        }
    }

    /// Uniform Glorot initialization with zero biases.
    pub fn glorot(kind: LayerKind, rng: &mut impl Rng) -> Self {
        let (fan_in, fan_out) = kind.fans();
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut p = Self::zeros(kind);
        p.weights
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-limit..=limit));
        p
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

pub fn conv1d_forward(x: &Tensor2, p: &LayerParams) -> Result<Tensor2> {
    let LayerKind::Conv1d {
        kernel,
        in_channels,
        filters,
        padding,
    } = p.kind
    else {
        return Err(Error::Config("conv1d_forward needs Conv1d parameters".into()));
    };
    if x.cols() != in_channels {
        return Err(Error::shape("conv1d input channels", in_channels, x.cols()));
    }
    let len = x.rows();
    let out_len = padding
        .output_len(len, kernel)
        .ok_or_else(|| Error::shape("conv1d input length", format!(">= {kernel}"), len))?;
    let left = padding.left(kernel);

    let mut out = Tensor2::zeros(out_len, filters);
    for i in 0..out_len {
        let row = out.row_mut(i);
        row.copy_from_slice(&p.bias);
        for a in 0..kernel {
            let Some(t) = (i + a).checked_sub(left).filter(|&t| t < len) else {
                continue;
            };
            for (c, &xv) in x.row(t).iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let w = &p.weights[(a * in_channels + c) * filters..][..filters];
                row.iter_mut().zip(w).for_each(|(o, w)| *o += xv * w);
            }
        }
    }
    Ok(out)
}

/// Accumulates weight and bias gradients into `grads` and returns the input
/// gradient when `want_input_grad` is set. With `rectified_input`, input
/// positions holding exactly zero get no gradient, which is exact whenever the
/// input came out of a ReLU (or a dropout of one).
pub fn conv1d_backward(
    x: &Tensor2,
    d_out: &Tensor2,
    p: &LayerParams,
    grads: &mut LayerParams,
    want_input_grad: bool,
    rectified_input: bool,
) -> Option<Tensor2> {
    let LayerKind::Conv1d {
        kernel,
        in_channels,
        filters,
        padding,
    } = p.kind
    else {
        panic!("conv1d_backward needs Conv1d parameters");
    };
    let len = x.rows();
    let left = padding.left(kernel);
    let mut dx = want_input_grad.then(|| Tensor2::zeros(len, in_channels));

    for i in 0..d_out.rows() {
        let dy = d_out.row(i);
        if dy.iter().all(|&v| v == 0.0) {
            continue;
        }
        grads.bias.iter_mut().zip(dy).for_each(|(g, d)| *g += d);
        for a in 0..kernel {
            let Some(t) = (i + a).checked_sub(left).filter(|&t| t < len) else {
                continue;
            };
            for c in 0..in_channels {
                let xv = x.get(t, c);
                if rectified_input && xv == 0.0 {
                    continue;
                }
                let off = (a * in_channels + c) * filters;
                if xv != 0.0 {
                    grads.weights[off..off + filters]
                        .iter_mut()
                        .zip(dy)
                        .for_each(|(g, d)| *g += xv * d);
                }
                if let Some(dx) = dx.as_mut() {
                    let w = &p.weights[off..off + filters];
                    dx.row_mut(t)[c] += w.iter().zip(dy).map(|(w, d)| w * d).sum::<f64>();
                }
            }
        }
    }
    dx
}

pub fn relu(x: &Tensor2) -> Tensor2 {
    x.map(|v| v.max(0.0))
}

pub fn relu_in_place(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Zeroes `grad` wherever the ReLU output was not positive.
pub fn relu_backward_in_place(output: &[f64], grad: &mut [f64]) {
    grad.iter_mut()
        .zip(output)
        .for_each(|(g, &y)| {
            if y <= 0.0 {
                *g = 0.0
            }
        });
}

/// Non-overlapping max pooling. With `pool == 1` this is the identity.
pub fn maxpool1d_forward(x: &Tensor2, pool: usize) -> Result<Tensor2> {
    if pool == 0 || x.rows() % pool != 0 {
        return Err(Error::shape(
            "maxpool1d",
            format!("length divisible by pool size {pool}"),
            x.rows(),
        ));
    }
    if pool == 1 {
        return Ok(x.clone());
    }
    let mut out = Tensor2::zeros(x.rows() / pool, x.cols());
    for i in 0..out.rows() {
        for c in 0..x.cols() {
            out.row_mut(i)[c] = (0..pool)
                .map(|a| x.get(i * pool + a, c))
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    Ok(out)
}

/// Routes each pooled gradient to the first maximal element of its window.
pub fn maxpool1d_backward(x: &Tensor2, d_out: &Tensor2, pool: usize) -> Tensor2 {
    if pool == 1 {
        return d_out.clone();
    }
    let mut dx = Tensor2::zeros(x.rows(), x.cols());
    for i in 0..d_out.rows() {
        for c in 0..x.cols() {
            let best = (0..pool)
                .max_by(|&a, &b| {
                    x.get(i * pool + a, c)
                        .total_cmp(&x.get(i * pool + b, c))
                        .then(b.cmp(&a))
                })
                .unwrap_or(0);
            dx.row_mut(i * pool + best)[c] += d_out.get(i, c);
        }
    }
    dx
}

pub fn dense_forward(x: &[f64], p: &LayerParams) -> Result<Vec<f64>> {
    let LayerKind::Dense { input, output } = p.kind else {
        return Err(Error::Config("dense_forward needs Dense parameters".into()));
    };
    if x.len() != input {
        return Err(Error::shape("dense input", input, x.len()));
    }
    let mut out = p.bias.clone();
    for (i, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let w = &p.weights[i * output..(i + 1) * output];
        out.iter_mut().zip(w).for_each(|(o, w)| *o += xv * w);
    }
    Ok(out)
}

/// See [`conv1d_backward`] for the meaning of the flags.
pub fn dense_backward(
    x: &[f64],
    dy: &[f64],
    p: &LayerParams,
    grads: &mut LayerParams,
    want_input_grad: bool,
    rectified_input: bool,
) -> Option<Vec<f64>> {
    let LayerKind::Dense { output, .. } = p.kind else {
        panic!("dense_backward needs Dense parameters");
    };
    grads.bias.iter_mut().zip(dy).for_each(|(g, d)| *g += d);
    let mut dx = want_input_grad.then(|| vec![0.0; x.len()]);
    for (i, &xv) in x.iter().enumerate() {
        if rectified_input && xv == 0.0 {
            continue;
        }
        let off = i * output;
        if xv != 0.0 {
            grads.weights[off..off + output]
                .iter_mut()
                .zip(dy)
                .for_each(|(g, d)| *g += xv * d);
        }
        if let Some(dx) = dx.as_mut() {
            let w = &p.weights[off..off + output];
            dx[i] = w.iter().zip(dy).map(|(w, d)| w * d).sum();
        }
    }
    dx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Infer,
}

/// Inverted-dropout multipliers: 0 for dropped entries, `1 / (1 - rate)` for survivors.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask(pub Vec<f64>);

impl DropoutMask {
    pub fn sample(len: usize, rate: f64, rng: &mut impl Rng) -> Self {
        if rate == 0.0 {
            return Self::ones(len);
        }
        let keep = 1.0 / (1.0 - rate);
        DropoutMask(
            (0..len)
                .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                .collect(),
        )
    }

    pub fn ones(len: usize) -> Self {
        DropoutMask(vec![1.0; len])
    }

    pub fn apply(&self, x: &mut [f64]) {
        x.iter_mut().zip(&self.0).for_each(|(v, m)| *v *= m);
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::Config(format!("dropout rate must lie in [0, 1), got {rate}")))
    }
}

/// Identity at inference; inverted dropout in training.
pub fn dropout(x: &[f64], rate: f64, mode: Mode, rng: &mut impl Rng) -> Result<Vec<f64>> {
    check_rate(rate)?;
    let mut out = x.to_vec();
    if mode == Mode::Train && rate > 0.0 {
        DropoutMask::sample(x.len(), rate, rng).apply(&mut out);
    }
    Ok(out)
}
