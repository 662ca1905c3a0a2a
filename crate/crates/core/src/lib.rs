//! Hybrid-feature multi-channel CNN sentiment classification for Nepali tweets.
//!
//! The pipeline runs raw tweets through [`preprocess`], turns the resulting
//! tokens into `[ft | bow | ds]` vectors with [`features`], trains four 1-D
//! CNN channels (kernel sizes 1 to 4) built on the hand-written [`nn`] core,
//! and fuses their softmax outputs in [`mcnn`]. [`baselines`] and [`eval`]
//! provide the comparison classifiers and the metric harness; [`pipeline`]
//! wires everything into reproducible per-fold runs.

pub mod baselines;
pub mod class;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod mcnn;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod seed;
pub mod synthetic;

pub use class::{argmax, SentimentClass, NUM_CLASSES};
pub use corpus::{load_dataset, stratified_splits, ColumnSpec, LabeledCorpus, Record, SplitPlan};
pub use error::{Error, ErrorKind, Result};
pub use features::{fit_feature_model, FeatureBlock, FeatureMatrix, FeatureModel, HybridVector};
pub use mcnn::{ChannelCnn, FusionMode, McnnModel, TrainConfig};
pub use preprocess::{preprocess, PreprocessConfig, TokenList};
