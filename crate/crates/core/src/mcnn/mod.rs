//! Four CNN channels with kernel sizes 1 to 4, trained individually and then
//! jointly through their averaged softmax output.

mod bundle;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bundle::{BundleManifest, ChannelEntry, MANIFEST_FILE as BUNDLE_MANIFEST};

use crate::class::{argmax, SentimentClass, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::nn::loss::{cross_entropy, softmax_backward, PROB_FLOOR};
use crate::nn::{ChannelArch, DropoutMasks, Gradients, Mode, Network, RmsProp, RmsPropConfig};
use crate::seed;

pub const KERNEL_SIZES: [usize; 4] = [1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub joint_epochs: usize,
    pub seed: u64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let rms = RmsPropConfig::default();
        Self {
            learning_rate: rms.learning_rate,
            batch_size: 32,
            epochs: 50,
            joint_epochs: 10,
            seed: 0,
            rho: rms.rho,
            epsilon: rms.epsilon,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.rho) || self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config("rho must be in [0, 1) and epsilon positive".into()));
        }
        Ok(())
    }

    pub fn rmsprop(&self) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: self.learning_rate,
            rho: self.rho,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    #[default]
    Avg,
    Sum,
    Max,
}

impl FusionMode {
    pub fn name(self) -> &'static str {
        match self {
            FusionMode::Avg => "avg",
            FusionMode::Sum => "sum",
            FusionMode::Max => "max",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "avg" | "average" => Ok(FusionMode::Avg),
            "sum" => Ok(FusionMode::Sum),
            "max" => Ok(FusionMode::Max),
            _ => Err(Error::Config(format!("unknown fusion mode {s:?}"))),
        }
    }
}

/// Combines the four channel distributions elementwise.
pub fn fuse(channel_probs: &[Vec<f64>], mode: FusionMode) -> Result<Vec<f64>> {
    if channel_probs.len() != KERNEL_SIZES.len() {
        return Err(Error::shape("fusion", KERNEL_SIZES.len(), channel_probs.len()));
    }
    if let Some(p) = channel_probs.iter().find(|p| p.len() != NUM_CLASSES) {
        return Err(Error::shape("fusion", NUM_CLASSES, p.len()));
    }
    let mut out = vec![0.0; NUM_CLASSES];
    for (i, o) in out.iter_mut().enumerate() {
        let column = channel_probs.iter().map(|p| p[i]);
        *o = match mode {
            FusionMode::Sum => column.sum(),
            FusionMode::Avg => column.sum::<f64>() / channel_probs.len() as f64,
            FusionMode::Max => column.fold(f64::NEG_INFINITY, f64::max),
        };
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelCnn {
    pub kernel_size: usize,
    pub seed: u64,
    pub net: Network,
}

/// A standard channel over 403-dimensional inputs.
pub fn build_channel(kernel_size: usize, seed: u64) -> Result<ChannelCnn> {
    build_channel_with(ChannelArch::standard(kernel_size, crate::nn::network::DEFAULT_INPUT_LEN), seed)
}

/// Initializes `arch` from `seed`; the kernel size is folded into the sub-seed
/// so the four channels of a model start from different weights.
pub fn build_channel_with(arch: ChannelArch, seed: u64) -> Result<ChannelCnn> {
    let kernel_size = arch.kernel;
    if !KERNEL_SIZES.contains(&kernel_size) {
        return Err(Error::Config(format!("kernel size {kernel_size} outside 1..=4")));
    }
    let mut rng = seed::rng(seed, &[seed::STAGE_INIT, kernel_size as u64]);
    Ok(ChannelCnn {
        kernel_size,
        seed,
        net: Network::new(arch, &mut rng)?,
    })
}

impl ChannelCnn {
    pub fn predict_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.net.predict_probs(x)
    }

    pub fn accuracy(&self, data: &FeatureMatrix) -> Result<f64> {
        let mut hits = 0;
        for (x, y) in data.rows().zip(data.labels()) {
            hits += usize::from(argmax(&self.predict_probs(x)?) == y.index());
        }
        Ok(hits as f64 / data.len().max(1) as f64)
    }
}

fn check_training_data(data: &FeatureMatrix, input_len: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if data.dim() != input_len {
        return Err(Error::shape("input", input_len, data.dim()));
    }
    Ok(())
}

fn check_finite(losses: f64, nets: &[&Network], stage: &str) -> Result<()> {
    if !losses.is_finite() || !nets.iter().all(|n| n.is_finite()) {
        return Err(Error::Numeric(format!("non-finite loss or parameters during {stage}")));
    }
    Ok(())
}

/// Mini-batch RMSProp over shuffled data; returns the mean training loss of
/// each epoch.
pub fn train_channel(channel: &mut ChannelCnn, data: &FeatureMatrix, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_training_data(data, channel.net.arch().input_len)?;
    let k = channel.kernel_size as u64;
    let mut opt = RmsProp::new(&channel.net, cfg.rmsprop());
    let labels: Vec<usize> = data.labels().iter().map(|l| l.index()).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs as u64 {
        order.shuffle(&mut seed::rng(cfg.seed, &[seed::STAGE_SHUFFLE, k, epoch]));
        let mut dropout_rng = seed::rng(cfg.seed, &[seed::STAGE_DROPOUT, k, epoch]);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| data.row(i)).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = channel.net.batch_gradient(&xs, &ys, Mode::Train, &mut dropout_rng)?;
            opt.step(&mut channel.net, &grads)?;
            total += loss * batch.len() as f64;
        }
        let mean = total / data.len() as f64;
        check_finite(mean, &[&channel.net], "channel training")?;
        log::debug!("channel k={k} epoch {epoch}: loss {mean:.6}");
        curve.push(mean);
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McnnModel {
    channels: Vec<ChannelCnn>,
    pub fusion: FusionMode,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub channel_losses: Vec<Vec<f64>>,
    pub joint_losses: Vec<f64>,
}

impl McnnModel {
    pub fn new(channels: Vec<ChannelCnn>, fusion: FusionMode) -> Result<Self> {
        let kernels: Vec<usize> = channels.iter().map(|c| c.kernel_size).collect();
        if kernels != KERNEL_SIZES {
            return Err(Error::Config(format!("channels must have kernel sizes 1..=4 in order, got {kernels:?}")));
        }
        let len = channels[0].net.arch().input_len;
        if channels.iter().any(|c| c.net.arch().input_len != len) {
            return Err(Error::Config("channels disagree on input length".into()));
        }
        Ok(Self { channels, fusion })
    }

    /// Four freshly initialized standard channels over `input_len` features.
    pub fn build(input_len: usize, seed: u64, fusion: FusionMode) -> Result<Self> {
        let channels = KERNEL_SIZES
            .iter()
            .map(|&k| build_channel_with(ChannelArch::standard(k, input_len), seed))
            .collect::<Result<_>>()?;
        Self::new(channels, fusion)
    }

    pub fn channels(&self) -> &[ChannelCnn] {
        &self.channels
    }

    pub fn input_len(&self) -> usize {
        self.channels[0].net.arch().input_len
    }

    pub fn channel_probs(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.channels.iter().map(|c| c.predict_probs(x)).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<(SentimentClass, Vec<f64>)> {
        let scores = fuse(&self.channel_probs(x)?, self.fusion)?;
        let class = SentimentClass::from_index(argmax(&scores)).expect("three scores");
        Ok((class, scores))
    }

    pub fn predict_all(&self, data: &FeatureMatrix) -> Result<Vec<SentimentClass>> {
        data.rows().map(|x| self.predict(x).map(|(c, _)| c)).collect()
    }

    pub fn accuracy(&self, data: &FeatureMatrix) -> Result<f64> {
        let preds = self.predict_all(data)?;
        let hits = preds.iter().zip(data.labels()).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / data.len().max(1) as f64)
    }

    /// Phase 1: each channel trained on its own. Channels share nothing, so
    /// they run in parallel without affecting results.
    pub fn train_channels(&mut self, data: &FeatureMatrix, cfg: &TrainConfig) -> Result<Vec<Vec<f64>>> {
        self.channels
            .par_iter_mut()
            .map(|c| train_channel(c, data, cfg))
            .collect()
    }

    /// Cross-entropy of the averaged distribution for one sample. Gradients,
    /// scaled by `weight`, are added into `grads` (one entry per channel).
    pub fn fused_loss_gradient(
        &self,
        x: &[f64],
        label: usize,
        masks: &[Option<DropoutMasks>],
        weight: f64,
        grads: &mut [Gradients],
    ) -> Result<f64> {
        let caches = self
            .channels
            .iter()
            .zip(masks)
            .map(|(c, m)| c.net.forward_with_masks(x, m.clone()))
            .collect::<Result<Vec<_>>>()?;
        let probs: Vec<Vec<f64>> = caches.iter().map(|c| c.probs.clone()).collect();
        let fused = fuse(&probs, FusionMode::Avg)?;
        let p = fused[label];
        let d_fused = if p > PROB_FLOOR { -weight / p } else { 0.0 };
        let share = 1.0 / self.channels.len() as f64;
        for ((channel, cache), g) in self.channels.iter().zip(&caches).zip(grads.iter_mut()) {
            let mut d_probs = vec![0.0; NUM_CLASSES];
            d_probs[label] = d_fused * share;
            let d_logits = softmax_backward(&cache.probs, &d_probs);
            channel.net.backward(cache, &d_logits, g);
        }
        Ok(cross_entropy(&fused, label))
    }

    /// Phase 2: end-to-end epochs through the averaged output.
    pub fn train_joint(&mut self, data: &FeatureMatrix, cfg: &TrainConfig) -> Result<Vec<f64>> {
        cfg.validate()?;
        if cfg.joint_epochs == 0 {
            return Ok(Vec::new());
        }
        if self.fusion == FusionMode::Max {
            return Err(Error::Config("max fusion is inference-only; set joint_epochs = 0".into()));
        }
        check_training_data(data, self.input_len())?;
        let mut opts: Vec<RmsProp> = self.channels.iter().map(|c| RmsProp::new(&c.net, cfg.rmsprop())).collect();
        let labels: Vec<usize> = data.labels().iter().map(|l| l.index()).collect();
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut curve = Vec::with_capacity(cfg.joint_epochs);
        for epoch in 0..cfg.joint_epochs as u64 {
            order.shuffle(&mut seed::rng(cfg.seed, &[seed::STAGE_JOINT, seed::STAGE_SHUFFLE, epoch]));
            let mut dropout_rng = seed::rng(cfg.seed, &[seed::STAGE_JOINT, seed::STAGE_DROPOUT, epoch]);
            let mut total = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let mut grads: Vec<Gradients> = self.channels.iter().map(|c| Gradients::zeros_for(&c.net)).collect();
                let weight = 1.0 / batch.len() as f64;
                for &i in batch {
                    let masks: Vec<Option<DropoutMasks>> = self
                        .channels
                        .iter()
                        .map(|c| Some(c.net.sample_masks(&mut dropout_rng)))
                        .collect();
                    total += self.fused_loss_gradient(data.row(i), labels[i], &masks, weight, &mut grads)?;
                }
                for ((c, opt), g) in self.channels.iter_mut().zip(&mut opts).zip(&grads) {
                    opt.step(&mut c.net, g)?;
                }
            }
            let mean = total / data.len() as f64;
            let nets: Vec<&Network> = self.channels.iter().map(|c| &c.net).collect();
            check_finite(mean, &nets, "joint training")?;
            log::debug!("joint epoch {epoch}: loss {mean:.6}");
            curve.push(mean);
        }
        Ok(curve)
    }

    /// Both training phases.
    pub fn fit(&mut self, data: &FeatureMatrix, cfg: &TrainConfig) -> Result<TrainingLog> {
        if self.fusion == FusionMode::Max && cfg.joint_epochs > 0 {
            return Err(Error::Config("max fusion is inference-only; set joint_epochs = 0".into()));
        }
        let channel_losses = self.train_channels(data, cfg)?;
        let joint_losses = self.train_joint(data, cfg)?;
        Ok(TrainingLog {
            channel_losses,
            joint_losses,
        })
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn mini(kernel: usize, input_len: usize) -> ChannelArch {
        ChannelArch {
            input_len,
            kernel,
            conv_filters: [2, 2],
            pool: 1,
            dense_units: [4, 3],
            classes: 3,
            conv_dropout: 0.4,
            flatten_dropout: 0.5,
            dense_dropout: 0.5,
        }
    }

    fn mini_model(seed: u64, fusion: FusionMode) -> McnnModel {
        let channels = KERNEL_SIZES
            .iter()
            .map(|&k| build_channel_with(mini(k, 10), seed).unwrap())
            .collect();
        McnnModel::new(channels, fusion).unwrap()
    }

    /// Class = argmax of three disjoint feature-block sums.
    fn separable(n: usize, dim: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = dim / 3;
        let mut m = FeatureMatrix::new(dim);
        for i in 0..n {
            let c = i % 3;
            let row: Vec<f64> = (0..dim)
                .map(|j| {
                    let base = rng.random_range(0.0..0.3);
                    if j / block == c {
                        base + 0.7
                    } else {
                        base
                    }
                })
                .collect();
            m.push(&row, SentimentClass::from_index(c).unwrap()).unwrap();
        }
        m
    }

    #[test]
    fn parameter_count_for_unit_kernel() {
        assert_eq!(build_channel(1, 0).unwrap().net.param_count(), 834_515);
    }

    #[test]
    fn kernel_three_shapes() {
        let c = build_channel(3, 0).unwrap();
        let shapes = c.net.arch().output_shapes();
        assert_eq!(shapes[1].dims, vec![401, 32]);
        assert_eq!(shapes[2].dims, vec![401, 16]);
    }

    #[test]
    fn out_of_range_kernel_rejected() {
        assert!(build_channel(0, 0).is_err());
        assert!(build_channel(5, 0).is_err());
    }

    #[test]
    fn same_seed_same_init() {
        assert_eq!(build_channel(2, 77).unwrap(), build_channel(2, 77).unwrap());
        assert_ne!(build_channel(2, 77).unwrap().net, build_channel(2, 78).unwrap().net);
    }

    #[test]
    fn fuse_worked_example() {
        let p = vec![
            vec![0.6, 0.2, 0.2],
            vec![0.1, 0.8, 0.1],
            vec![0.3, 0.3, 0.4],
            vec![0.5, 0.25, 0.25],
        ];
        let avg = fuse(&p, FusionMode::Avg).unwrap();
        for (a, e) in avg.iter().zip([0.375, 0.3875, 0.2375]) {
            assert!((a - e).abs() < 1e-12);
        }
        assert_eq!(argmax(&avg), SentimentClass::Neutral.index());
        assert_eq!(fuse(&p, FusionMode::Max).unwrap(), vec![0.6, 0.8, 0.4]);
        assert!(fuse(&p[..3], FusionMode::Avg).is_err());
    }

    #[test]
    fn identical_channels_fuse_trivially() {
        let p = vec![0.2, 0.5, 0.3];
        let four = vec![p.clone(); 4];
        assert_eq!(fuse(&four, FusionMode::Avg).unwrap(), p);
        assert_eq!(fuse(&four, FusionMode::Max).unwrap(), p);
        let sum = fuse(&four, FusionMode::Sum).unwrap();
        assert!(sum.iter().zip(&p).all(|(s, q)| (s - 4.0 * q).abs() < 1e-15));
    }

    #[test]
    fn fusion_mode_parsing() {
        assert_eq!("AVG".parse::<FusionMode>().unwrap(), FusionMode::Avg);
        assert_eq!("max".parse::<FusionMode>().unwrap(), FusionMode::Max);
        assert!("median".parse::<FusionMode>().is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let data = separable(30, 10, 1);
        let mut c = build_channel_with(mini(2, 10), 5).unwrap();
        let before = c.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            batch_size: 8,
            ..Default::default()
        };
        train_channel(&mut c, &data, &cfg).unwrap();
        assert_eq!(c, before);
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable(30, 10, 1);
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            epochs: 3,
            batch_size: 8,
            seed: 4,
            ..Default::default()
        };
        let run = || {
            let mut c = build_channel_with(mini(3, 10), 5).unwrap();
            let curve = train_channel(&mut c, &data, &cfg).unwrap();
            (c, curve)
        };
        let (a, ca) = run();
        let (b, cb) = run();
        assert_eq!(a, b);
        assert_eq!(ca.last().unwrap().to_bits(), cb.last().unwrap().to_bits());
    }

    #[test]
    fn empty_or_misshapen_training_set_rejected() {
        let mut c = build_channel_with(mini(1, 10), 0).unwrap();
        let cfg = TrainConfig::default();
        assert!(train_channel(&mut c, &FeatureMatrix::new(10), &cfg).is_err());
        assert!(train_channel(&mut c, &separable(6, 9, 0), &cfg).is_err());
    }

    #[test]
    fn separable_set_is_learned() {
        let train = separable(300, 30, 2);
        let test = separable(150, 30, 3);
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            epochs: 30,
            joint_epochs: 3,
            seed: 1,
            ..Default::default()
        };
        let mut model = McnnModel::build(30, 9, FusionMode::Avg).unwrap();
        model.fit(&train, &cfg).unwrap();
        let best = model
            .channels()
            .iter()
            .map(|c| c.accuracy(&train).unwrap())
            .fold(0.0, f64::max);
        for c in model.channels() {
            assert!(c.accuracy(&train).unwrap() >= 0.95);
        }
        let fused = model.accuracy(&train).unwrap();
        assert!(fused >= best - 0.02, "{fused} vs {best}");
        assert!(model.accuracy(&test).unwrap() >= 0.9);
    }

    #[test]
    fn zero_joint_epochs_is_a_no_op_and_max_rejects_joint() {
        let data = separable(12, 10, 1);
        let mut model = mini_model(3, FusionMode::Avg);
        let before = model.clone();
        let cfg = TrainConfig {
            joint_epochs: 0,
            ..Default::default()
        };
        assert!(model.train_joint(&data, &cfg).unwrap().is_empty());
        assert_eq!(model, before);
        let mut max = mini_model(3, FusionMode::Max);
        assert!(matches!(
            max.train_joint(&data, &TrainConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn symmetric_model_predicts_negative() {
        for (mode, scale) in [(FusionMode::Avg, 1.0), (FusionMode::Sum, 4.0), (FusionMode::Max, 1.0)] {
            let mut model = mini_model(1, mode);
            for c in &mut model.channels {
                let last = c.net.layers_mut().last_mut().unwrap();
                last.weights.iter_mut().for_each(|w| *w = 0.0);
            }
            let (class, scores) = model.predict(&[0.3; 10]).unwrap();
            assert_eq!(class, SentimentClass::Negative);
            assert!(scores.iter().all(|s| (s - scale / 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn fused_gradient_matches_finite_differences() {
        let mut model = mini_model(11, FusionMode::Avg);
        for c in &mut model.channels {
            for l in c.net.layers_mut() {
                l.bias.iter_mut().for_each(|b| *b = 0.05);
            }
        }
        let x: Vec<f64> = (0..10).map(|i| 0.2 + 0.1 * (i % 4) as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let masks: Vec<Option<DropoutMasks>> =
            model.channels.iter().map(|c| Some(c.net.sample_masks(&mut rng))).collect();
        let mut grads: Vec<Gradients> = model.channels.iter().map(|c| Gradients::zeros_for(&c.net)).collect();
        model.fused_loss_gradient(&x, 1, &masks, 1.0, &mut grads).unwrap();

        let loss = |m: &McnnModel| {
            let mut scratch: Vec<Gradients> = m.channels.iter().map(|c| Gradients::zeros_for(&c.net)).collect();
            m.fused_loss_gradient(&x, 1, &masks, 1.0, &mut scratch).unwrap()
        };
        let h = 1e-5;
        let mut worst = 0.0f64;
        for (c, g) in grads.iter().enumerate() {
            let analytic: Vec<f64> = g.values().copied().collect();
            for (i, &a) in analytic.iter().enumerate() {
                let orig = *model.channels[c].net.params().nth(i).unwrap();
                *model.channels[c].net.params_mut().nth(i).unwrap() = orig + h;
                let up = loss(&model);
                *model.channels[c].net.params_mut().nth(i).unwrap() = orig - h;
                let down = loss(&model);
                *model.channels[c].net.params_mut().nth(i).unwrap() = orig;
                let numeric = (up - down) / (2.0 * h);
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }
}
