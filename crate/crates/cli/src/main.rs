//! `nepsent` command-line front-end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use nepsent::pipeline::{predict_file, Pipeline, RunConfig};
use nepsent::synthetic::{self, SyntheticSpec};
use nepsent::{Error, ErrorKind, FeatureBlock, FusionMode, Result};

/// Directory holding `stopwords.txt` and `suffixes.txt` used when the
/// config names no word lists.
const RESOURCES_ENV: &str = "NEPSENT_RESOURCES";

#[derive(Debug, Parser)]
#[command(name = "nepsent", version, about = "Nepali tweet sentiment with a multi-channel CNN")]
struct Cli {
    /// TOML run configuration; flags override its keys.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Folds processed in parallel.
    #[arg(short, long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Default, Args)]
struct Overrides {
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    embedding_dim: Option<usize>,
    #[arg(long, global = true)]
    stopwords: Option<PathBuf>,
    #[arg(long, global = true)]
    suffixes: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    n_folds: Option<usize>,
    /// Training fraction of each split.
    #[arg(long, global = true)]
    ratio: Option<f64>,
    /// avg, sum or max.
    #[arg(long, global = true)]
    fusion: Option<FusionMode>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    joint_epochs: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    bow_size: Option<usize>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit feature models and write feature matrices for every fold.
    Featurize,
    /// Train one MCNN per fold.
    Train,
    /// Score every fold and write the aggregate report.
    Evaluate,
    /// Classify a file of tweets, one per line, with a trained fold.
    Predict {
        /// Fold directory holding `feature_model.json` and `model/`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Where to write `label<TAB>negative<TAB>neutral<TAB>positive` lines.
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Run Gaussian NB, KNN and logistic regression on one feature set.
    CompareBaselines {
        /// ft, bow, ds or hybrid.
        #[arg(long, default_value = "hybrid")]
        features: FeatureBlock,
    },
    /// Write a synthetic corpus, embeddings and a matching config.
    Synthesize {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 400)]
        docs_per_class: usize,
        #[arg(long, default_value_t = 300)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        data_seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_env("NEPSENT_LOG").init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Synthesize {
        dir,
        docs_per_class,
        dim,
        data_seed,
    } = &cli.command
    {
        return synthesize(dir, *docs_per_class, *dim, *data_seed);
    }
    let config = load_config(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Featurize => {
            let folds = Pipeline::new(config, cli.jobs)?.featurize()?;
            let (train, test) = &folds[0];
            println!(
                "featurized {} folds: {} train / {} test rows, {} columns",
                folds.len(),
                train.len(),
                test.len(),
                train.dim()
            );
        }
        Command::Train => {
            let models = Pipeline::new(config, cli.jobs)?.train()?;
            println!("trained {} fold models", models.len());
        }
        Command::Evaluate => {
            let pipeline = Pipeline::new(config, cli.jobs)?;
            let report = pipeline.evaluate()?;
            println!("{} folds, report in {}", report.n_folds, pipeline.config().output.display());
            for name in ["accuracy", "macro_precision", "macro_recall", "macro_f1"] {
                if let Some(m) = report.metric(name) {
                    println!(
                        "{name:<16} {:.4} ± {:.4}  95% CI [{:.4}, {:.4}]",
                        m.mean, m.std, m.ci_low, m.ci_high
                    );
                }
            }
        }
        Command::Predict {
            model,
            input,
            predictions,
        } => {
            let n = predict_file(&config, &model, &input, &predictions)?;
            println!("wrote {n} predictions to {}", predictions.display());
        }
        Command::CompareBaselines { features } => {
            let cmp = Pipeline::new(config, cli.jobs)?.compare_baselines(features)?;
            println!("{:<20} {:>9} {:>9}", format!("features: {}", cmp.block), "accuracy", "macro_f1");
            for r in &cmp.results {
                println!("{:<20} {:>9.4} {:>9.4}", r.kind.name(), r.accuracy_mean, r.macro_f1_mean);
            }
        }
        Command::Synthesize { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn load_config(path: Option<&Path>, o: &Overrides) -> Result<RunConfig> {
    let mut config = match path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            let mut c: RunConfig =
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new(""));
            let resolve = |p: &mut PathBuf| {
                if !p.as_os_str().is_empty() && p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            resolve(&mut c.dataset);
            resolve(&mut c.embeddings);
            resolve(&mut c.output);
            c.stopwords.iter_mut().for_each(resolve);
            c.suffixes.iter_mut().for_each(resolve);
            c
        }
        None => RunConfig::default(),
    };
    apply_overrides(&mut config, o);
    if let Some(dir) = std::env::var_os(RESOURCES_ENV) {
        let dir = PathBuf::from(dir);
        for (slot, file) in [(&mut config.stopwords, "stopwords.txt"), (&mut config.suffixes, "suffixes.txt")] {
            if slot.is_none() && dir.join(file).is_file() {
                info!("using {} from {}", file, dir.display());
                *slot = Some(dir.join(file));
            }
        }
    }
    Ok(config)
}

fn apply_overrides(c: &mut RunConfig, o: &Overrides) {
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value.clone() {
                $field = v;
            }
        };
    }
    set!(c.dataset, o.dataset);
    set!(c.embeddings, o.embeddings);
    set!(c.embedding_dim, o.embedding_dim);
    set!(c.output, o.output);
    set!(c.seed, o.seed);
    set!(c.n_folds, o.n_folds);
    set!(c.ratio, o.ratio);
    set!(c.fusion, o.fusion);
    set!(c.train.epochs, o.epochs);
    set!(c.train.joint_epochs, o.joint_epochs);
    set!(c.train.learning_rate, o.learning_rate);
    set!(c.train.batch_size, o.batch_size);
    set!(c.bow_size, o.bow_size);
    set!(c.alpha, o.alpha);
    if o.stopwords.is_some() {
        c.stopwords = o.stopwords.clone();
    }
    if o.suffixes.is_some() {
        c.suffixes = o.suffixes.clone();
    }
}

fn synthesize(dir: &Path, docs_per_class: usize, dim: usize, seed: u64) -> Result<()> {
    let data = synthetic::generate(&SyntheticSpec {
        docs_per_class,
        embedding_dim: dim,
        seed,
        ..Default::default()
    })?;
    synthetic::write(&data, dir)?;
    let config = RunConfig {
        dataset: "tweets.csv".into(),
        embeddings: "embeddings.txt".into(),
        embedding_dim: dim,
        output: "output".into(),
        ..Default::default()
    };
    let text = toml::to_string(&config).map_err(|e| Error::Config(format!("cannot render config: {e}")))?;
    let path = dir.join("config.toml");
    std::fs::write(&path, text).map_err(|source| Error::Io { path: path.clone(), source })?;
    println!("wrote {} tweets and {} vectors to {}", data.corpus.len(), data.embeddings.len(), dir.display());
    Ok(())
}
