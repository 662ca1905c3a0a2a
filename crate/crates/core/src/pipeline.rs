//! Reproducible per-fold experiment runs.
//!
//! Output directory layout:
//!
//! ```text
//! manifest.json           run fingerprint, seeds, versions
//! splits.json             train/test indices per fold
//! fold_00/feature_model.json, train.bin, test.bin
//! fold_00/model/          model bundle
//! fold_00/training_log.json, metrics.json, predictions.csv
//! report.json, folds.csv  aggregate over folds
//! baselines/<block>/<kind>/report.json, folds.csv, fold_00/...
//! ```
//!
//! Stages reuse artifacts of earlier stages only when the stored manifest has
//! the same fingerprint (config without the output path, plus hashes of the
//! dataset and embedding files); otherwise stale fold directories are removed
//! first. Reloaded artifacts are bit-exact, so `featurize`, `train`,
//! `evaluate` run one after another give the same files as `evaluate` alone.

use std::collections::HashSet;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{train_baseline, BaselineKind, BaselineParams};
use crate::class::{SentimentClass, NUM_CLASSES};
use crate::corpus::{load_dataset, stratified_splits, ColumnSpec, LabeledCorpus, SplitPlan};
use crate::error::{Error, Result};
use crate::eval::{aggregate, confusion, metrics, AggregateReport, MetricsReport};
use crate::features::{
    fit_feature_model, load_embeddings_filtered, EmbeddingTable, FeatureBlock, FeatureMatrix, FeatureModel,
    DEFAULT_ALPHA, DEFAULT_BOW_SIZE, DEFAULT_EMBEDDING_DIM,
};
use crate::mcnn::{FusionMode, McnnModel, TrainConfig, TrainingLog, BUNDLE_MANIFEST};
use crate::preprocess::{
    load_word_list, parse_word_list, preprocess, PreprocessConfig, TokenList, DEFAULT_MIN_STEM_LENGTH,
    DEFAULT_STOPWORDS, DEFAULT_SUFFIXES,
};
use crate::seed;

const STAGE_FOLD: u64 = 5;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub columns: ColumnSpec,
    pub embeddings: PathBuf,
    pub embedding_dim: usize,
    /// Stopword list; the built-in Nepali list when absent.
    pub stopwords: Option<PathBuf>,
    /// Suffix list; the built-in Nepali list when absent.
    pub suffixes: Option<PathBuf>,
    pub min_stem_length: usize,
    pub bow_size: usize,
    pub alpha: f64,
    /// `train.seed` is replaced per fold by a seed derived from `seed`.
    pub train: TrainConfig,
    pub fusion: FusionMode,
    pub n_folds: usize,
    pub ratio: f64,
    pub seed: u64,
    pub output: PathBuf,
    pub baselines: BaselineParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            columns: ColumnSpec::default(),
            embeddings: PathBuf::new(),
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            stopwords: None,
            suffixes: None,
            min_stem_length: DEFAULT_MIN_STEM_LENGTH,
            bow_size: DEFAULT_BOW_SIZE,
            alpha: DEFAULT_ALPHA,
            train: TrainConfig::default(),
            fusion: FusionMode::Avg,
            n_folds: 10,
            ratio: 0.7,
            seed: 0,
            output: PathBuf::from("output"),
            baselines: BaselineParams::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let must_exist = |what: &str, p: &Path| {
            if p.as_os_str().is_empty() {
                Err(Error::Config(format!("{what} path is not set")))
            } else if !p.is_file() {
                Err(Error::Config(format!("{what} file {} does not exist", p.display())))
            } else {
                Ok(())
            }
        };
        must_exist("dataset", &self.dataset)?;
        must_exist("embeddings", &self.embeddings)?;
        if let Some(p) = &self.stopwords {
            must_exist("stopwords", p)?;
        }
        if let Some(p) = &self.suffixes {
            must_exist("suffixes", p)?;
        }
        if self.embedding_dim == 0 || self.bow_size == 0 {
            return Err(Error::Config("embedding_dim and bow_size must be positive".into()));
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if self.n_folds < 2 {
            return Err(Error::Config("n_folds must be at least 2".into()));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Config(format!("ratio must lie in (0, 1), got {}", self.ratio)));
        }
        self.train.validate()?;
        if self.fusion == FusionMode::Max && self.train.joint_epochs > 0 {
            return Err(Error::Config("max fusion is inference-only; set train.joint_epochs = 0".into()));
        }
        Ok(())
    }

    pub fn preprocess_config(&self) -> Result<PreprocessConfig> {
        let stopwords = match &self.stopwords {
            Some(p) => load_word_list(p)?,
            None => parse_word_list(DEFAULT_STOPWORDS),
        };
        let suffixes = match &self.suffixes {
            Some(p) => load_word_list(p)?,
            None => parse_word_list(DEFAULT_SUFFIXES),
        };
        PreprocessConfig::new(stopwords, suffixes, self.min_stem_length)
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_sha256(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let json = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSeeds {
    pub fold: usize,
    pub split_seed: u64,
    pub model_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub fingerprint: String,
    pub config_hash: String,
    pub dataset_sha256: String,
    pub embeddings_sha256: String,
    pub master_seed: u64,
    pub folds: Vec<FoldSeeds>,
    pub config: RunConfig,
}

/// Split seed for fold `i` (as used by [`stratified_splits`]) and the seed
/// that initializes and trains that fold's model.
pub fn fold_seeds(master: u64, fold: usize) -> FoldSeeds {
    FoldSeeds {
        fold,
        split_seed: master.wrapping_add(fold as u64),
        model_seed: seed::derive(master, &[STAGE_FOLD, fold as u64]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub kind: BaselineKind,
    pub accuracy_mean: f64,
    pub macro_f1_mean: f64,
    pub report: AggregateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub block: String,
    pub results: Vec<BaselineResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SummaryRow {
    kind: BaselineKind,
    accuracy_mean: f64,
    accuracy_ci: (f64, f64),
    macro_f1_mean: f64,
}

struct Prepared {
    corpus: LabeledCorpus,
    docs: Vec<TokenList>,
    plan: SplitPlan,
    reuse: bool,
}

pub struct Pipeline {
    config: RunConfig,
    jobs: usize,
    embeddings: Mutex<Option<Arc<EmbeddingTable>>>,
}

impl Pipeline {
    pub fn new(config: RunConfig, jobs: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            jobs: jobs.max(1),
            embeddings: Mutex::new(None),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    fn out(&self) -> &Path {
        &self.config.output
    }

    pub fn fold_dir(&self, fold: usize) -> PathBuf {
        self.out().join(format!("fold_{fold:02}"))
    }

    fn in_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} worker threads: {e}", self.jobs)))?;
        Ok(pool.install(f))
    }

    /// Loads and preprocesses the corpus, draws the splits, and writes the
    /// manifest. Stale artifacts from a different fingerprint are removed.
    fn prepare(&self, command: &str) -> Result<Prepared> {
        let cfg = &self.config;
        let out = self.out();
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let dataset_sha256 = file_sha256(&cfg.dataset)?;
        let embeddings_sha256 = file_sha256(&cfg.embeddings)?;
        let config_hash = cfg.hash();
        let fingerprint = sha256_hex(format!("{config_hash}:{dataset_sha256}:{embeddings_sha256}").as_bytes());

        let manifest_path = out.join(MANIFEST_FILE);
        let reuse = manifest_path.is_file()
            && read_json::<RunManifest>(&manifest_path).is_ok_and(|m| m.fingerprint == fingerprint);
        if !reuse {
            self.clear_artifacts()?;
        }
        let manifest = RunManifest {
            tool: "nepsent".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            fingerprint,
            config_hash,
            dataset_sha256,
            embeddings_sha256,
            master_seed: cfg.seed,
            folds: (0..cfg.n_folds).map(|i| fold_seeds(cfg.seed, i)).collect(),
            config: cfg.clone(),
        };
        write_json(&manifest_path, &manifest)?;

        let corpus = load_dataset(&cfg.dataset, &cfg.columns)?;
        let pre = cfg.preprocess_config()?;
        let docs: Vec<TokenList> = corpus.records().iter().map(|r| preprocess(&r.text, &pre)).collect();
        let plan = stratified_splits(&corpus, cfg.ratio, cfg.n_folds, cfg.seed)?;
        write_json(&out.join("splits.json"), &plan)?;
        log::info!(
            "{} records ({:?} per class), {} folds, reuse={reuse}",
            corpus.len(),
            corpus.class_counts(),
            plan.folds.len()
        );
        Ok(Prepared {
            corpus,
            docs,
            plan,
            reuse,
        })
    }

    fn clear_artifacts(&self) -> Result<()> {
        let out = self.out();
        let entries = std::fs::read_dir(out).map_err(|e| Error::io(out, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(out, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let path = entry.path();
            let ours_dir = name.starts_with("fold_") || name == "baselines";
            let ours_file = matches!(name.as_str(), "report.json" | "folds.csv" | "splits.json");
            if ours_dir && path.is_dir() {
                std::fs::remove_dir_all(&path).map_err(|e| Error::io(&path, e))?;
            } else if ours_file {
                std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(())
    }

    fn embeddings(&self, docs: &[TokenList]) -> Result<Arc<EmbeddingTable>> {
        let mut slot = self.embeddings.lock().expect("embedding lock");
        if let Some(t) = slot.as_ref() {
            return Ok(Arc::clone(t));
        }
        let keep: HashSet<String> = docs.iter().flat_map(|d| d.iter().map(str::to_owned)).collect();
        let table = Arc::new(load_embeddings_filtered(
            &self.config.embeddings,
            self.config.embedding_dim,
            Some(&keep),
        )?);
        log::info!("loaded {} embedding rows", table.len());
        *slot = Some(Arc::clone(&table));
        Ok(table)
    }

    /// Hybrid train/test matrices for a fold and the feature model's hash.
    fn fold_features(&self, p: &Prepared, fold: usize) -> Result<(FeatureMatrix, FeatureMatrix, String)> {
        let dir = self.fold_dir(fold);
        let (model_path, train_path, test_path) =
            (dir.join("feature_model.json"), dir.join("train.bin"), dir.join("test.bin"));
        if p.reuse && model_path.is_file() && train_path.is_file() && test_path.is_file() {
            let bytes = std::fs::read(&model_path).map_err(|e| Error::io(&model_path, e))?;
            return Ok((FeatureMatrix::load(&train_path)?, FeatureMatrix::load(&test_path)?, sha256_hex(&bytes)));
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let split = &p.plan.folds[fold];
        let labeled = |idx: &[usize]| -> Vec<(&TokenList, SentimentClass)> {
            idx.iter().map(|&i| (&p.docs[i], p.corpus.records()[i].label)).collect()
        };
        let train_docs = labeled(&split.train);
        let test_docs = labeled(&split.test);
        let table = (*self.embeddings(&p.docs)?).clone();
        let model = fit_feature_model(train_docs.iter().copied(), table, self.config.bow_size, self.config.alpha)?;
        let train = model.featurize(train_docs, FeatureBlock::Hybrid);
        let test = model.featurize(test_docs, FeatureBlock::Hybrid);
        model.save(&model_path)?;
        train.save(&train_path)?;
        test.save(&test_path)?;
        Ok((train, test, model.sha256()))
    }

    fn fold_model(&self, p: &Prepared, fold: usize) -> Result<(McnnModel, FeatureMatrix)> {
        let (train, test, feature_sha) = self.fold_features(p, fold)?;
        let dir = self.fold_dir(fold).join("model");
        if p.reuse && dir.join(BUNDLE_MANIFEST).is_file() {
            let (model, _) = McnnModel::load(&dir)?;
            return Ok((model, test));
        }
        let seeds = fold_seeds(self.config.seed, fold);
        let cfg = TrainConfig {
            seed: seeds.model_seed,
            ..self.config.train.clone()
        };
        let mut model = McnnModel::build(train.dim(), seeds.model_seed, self.config.fusion)?;
        log::info!("fold {fold}: training on {} samples", train.len());
        let log: TrainingLog = model.fit(&train, &cfg)?;
        model.save(&dir, Some(&cfg), Some(&feature_sha))?;
        write_json(&self.fold_dir(fold).join("training_log.json"), &log)?;
        Ok((model, test))
    }

    fn fold_metrics(&self, p: &Prepared, fold: usize) -> Result<MetricsReport> {
        let (model, test) = self.fold_model(p, fold)?;
        let dir = self.fold_dir(fold);
        let path = dir.join("predictions.csv");
        let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        w.write_record(["index", "label", "prediction", "score_negative", "score_neutral", "score_positive"])
            .map_err(csv_err(&path))?;
        let mut preds = Vec::with_capacity(test.len());
        for (i, (x, y)) in test.rows().zip(test.labels()).enumerate() {
            let (c, s) = model.predict(x)?;
            preds.push(c);
            let doc = p.plan.folds[fold].test[i];
            let mut row = vec![doc.to_string(), y.name().to_string(), c.name().to_string()];
            row.extend(s.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err(&path))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let report = metrics(&confusion(&preds, test.labels())?)?;
        write_json(&dir.join("metrics.json"), &report)?;
        Ok(report)
    }

    fn per_fold<T: Send>(&self, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
        let n = self.config.n_folds;
        self.in_pool(|| (0..n).into_par_iter().map(&f).collect::<Vec<_>>())?
            .into_iter()
            .collect()
    }

    /// Fits feature models and writes hybrid matrices for every fold.
    pub fn featurize(&self) -> Result<Vec<(FeatureMatrix, FeatureMatrix)>> {
        let p = self.prepare("featurize")?;
        self.per_fold(|i| self.fold_features(&p, i).map(|(a, b, _)| (a, b)))
    }

    /// Trains (or reloads) one model per fold.
    pub fn train(&self) -> Result<Vec<McnnModel>> {
        let p = self.prepare("train")?;
        self.per_fold(|i| self.fold_model(&p, i).map(|(m, _)| m))
    }

    /// Per-fold test metrics and their aggregate; writes `report.json` and `folds.csv`.
    pub fn evaluate(&self) -> Result<AggregateReport> {
        let p = self.prepare("evaluate")?;
        let reports = self.per_fold(|i| self.fold_metrics(&p, i))?;
        let agg = aggregate(&reports)?;
        agg.write_json(&self.out().join("report.json"))?;
        agg.write_folds_csv(&self.out().join("folds.csv"))?;
        Ok(agg)
    }

    /// Trains every baseline on one feature block of each fold.
    pub fn compare_baselines(&self, block: FeatureBlock) -> Result<BaselineComparison> {
        let p = self.prepare(&format!("compare-baselines --features {}", block.name()))?;
        let emb_dim = self.config.embedding_dim;
        let fold_reports: Vec<Vec<MetricsReport>> = self.per_fold(|i| {
            let (train, test, _) = self.fold_features(&p, i)?;
            let range = hybrid_block_range(train.dim(), emb_dim, block)?;
            let (train, test) = (train.columns(range.clone()), test.columns(range));
            BaselineKind::ALL
                .iter()
                .map(|&kind| {
                    let model = train_baseline(kind, &train, &self.config.baselines)?;
                    model.save(&self.baseline_dir(block, kind).join(format!("fold_{i:02}")))?;
                    metrics(&confusion(&model.predict_all(&test)?, test.labels())?)
                })
                .collect()
        })?;
        let mut results = Vec::new();
        let mut summary = Vec::new();
        for (k, &kind) in BaselineKind::ALL.iter().enumerate() {
            let reports: Vec<MetricsReport> = fold_reports.iter().map(|r| r[k].clone()).collect();
            let report = aggregate(&reports)?;
            let dir = self.baseline_dir(block, kind);
            report.write_json(&dir.join("report.json"))?;
            report.write_folds_csv(&dir.join("folds.csv"))?;
            let acc = report.metric("accuracy").expect("accuracy is aggregated");
            let f1 = report.metric("macro_f1").expect("macro f1 is aggregated");
            summary.push(SummaryRow {
                kind,
                accuracy_mean: acc.mean,
                accuracy_ci: (acc.ci_low, acc.ci_high),
                macro_f1_mean: f1.mean,
            });
            results.push(BaselineResult {
                kind,
                accuracy_mean: acc.mean,
                macro_f1_mean: f1.mean,
                report,
            });
        }
        write_json(&self.out().join("baselines").join(block.name()).join("summary.json"), &summary)?;
        Ok(BaselineComparison {
            block: block.name().into(),
            results,
        })
    }

    fn baseline_dir(&self, block: FeatureBlock, kind: BaselineKind) -> PathBuf {
        self.out().join("baselines").join(block.name()).join(kind.name())
    }
}

/// Column range of `block` inside a hybrid matrix of width `dim`.
pub fn hybrid_block_range(dim: usize, embedding_dim: usize, block: FeatureBlock) -> Result<std::ops::Range<usize>> {
    if dim < embedding_dim + NUM_CLASSES + 1 {
        return Err(Error::shape("hybrid features", embedding_dim + NUM_CLASSES + 1, dim));
    }
    let ds = dim - NUM_CLASSES;
    Ok(match block {
        FeatureBlock::Ft => 0..embedding_dim,
        FeatureBlock::Bow => embedding_dim..ds,
        FeatureBlock::Ds => ds..dim,
        FeatureBlock::Hybrid => 0..dim,
    })
}

/// Classifies raw texts with a fold directory's feature model and bundle.
pub fn predict_texts(config: &RunConfig, fold_dir: &Path, texts: &[String]) -> Result<Vec<(SentimentClass, Vec<f64>)>> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let pre = config.preprocess_config()?;
    let docs: Vec<TokenList> = texts.iter().map(|t| preprocess(t, &pre)).collect();
    let model_path = fold_dir.join("feature_model.json");
    let embedding_path = FeatureModel::embedding_path(&model_path)?.unwrap_or_else(|| config.embeddings.clone());
    let keep: HashSet<String> = docs.iter().flat_map(|d| d.iter().map(str::to_owned)).collect();
    let table = load_embeddings_filtered(&embedding_path, config.embedding_dim, Some(&keep))?;
    let features = FeatureModel::load(&model_path, table)?;
    let (model, _) = McnnModel::load(&fold_dir.join("model"))?;
    if model.input_len() != features.hybrid_dim() {
        return Err(Error::shape("model input", model.input_len(), features.hybrid_dim()));
    }
    docs.iter().map(|d| model.predict(&features.hybrid_features(d).0)).collect()
}

/// Reads one tweet per line from `input` and writes one
/// `label<TAB>score_negative<TAB>score_neutral<TAB>score_positive` line per tweet.
pub fn predict_file(config: &RunConfig, fold_dir: &Path, input: &Path, output: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let texts: Vec<String> = text.lines().map(str::to_owned).collect();
    let preds = predict_texts(config, fold_dir, &texts)?;
    let mut out = String::new();
    for (class, scores) in &preds {
        out.push_str(class.name());
        for s in scores {
            out.push('\t');
            out.push_str(&s.to_string());
        }
        out.push('\n');
    }
    std::fs::write(output, out).map_err(|e| Error::io(output, e))?;
    Ok(preds.len())
}
