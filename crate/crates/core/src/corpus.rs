//! Labeled tweet ingestion and stratified train/test splitting.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::class::{SentimentClass, NUM_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub text: String,
    pub label: SentimentClass,
}

/// How numeric label tokens map onto classes. Class names are always accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelScheme {
    /// 0 = negative, 1 = neutral, 2 = positive
    #[default]
    Indexed,
    /// -1 = negative, 0 = neutral, 1 = positive
    Signed,
}

impl LabelScheme {
    pub fn parse(self, token: &str) -> Option<SentimentClass> {
        if let Ok(class) = token.parse::<SentimentClass>() {
            return Some(class);
        }
        let n: i64 = token.trim().parse().ok()?;
        let index = match self {
            LabelScheme::Indexed => n,
            LabelScheme::Signed => n + 1,
        };
        usize::try_from(index).ok().and_then(SentimentClass::from_index)
    }
}

/// Column layout of a delimited dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSpec {
    pub text_column: String,
    pub label_column: String,
    /// Field delimiter; when absent, `.tsv` files use tab and everything else comma.
    pub delimiter: Option<char>,
    pub label_scheme: LabelScheme,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self {
            text_column: "text".into(),
            label_column: "label".into(),
            delimiter: None,
            label_scheme: LabelScheme::Indexed,
        }
    }
}

impl ColumnSpec {
    fn delimiter_for(&self, path: &Path) -> u8 {
        match self.delimiter {
            Some(c) => c as u8,
            None if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("tsv")) => b'\t',
            None => b',',
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    records: Vec<Record>,
    class_counts: [usize; NUM_CLASSES],
}

impl LabeledCorpus {
    pub fn new(records: Vec<Record>) -> Self {
        let mut class_counts = [0; NUM_CLASSES];
        for r in &records {
            class_counts[r.label.index()] += 1;
        }
        Self {
            records,
            class_counts,
        }
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_count(&self, class: SentimentClass) -> usize {
        self.class_counts[class.index()]
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        self.class_counts
    }

    pub fn labels(&self) -> impl Iterator<Item = SentimentClass> + '_ {
        self.records.iter().map(|r| r.label)
    }
}

impl FromIterator<Record> for LabeledCorpus {
    fn from_iter<I: IntoIterator<Item = Record>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Reads a headed CSV/TSV file into a corpus. Every row must carry a known label.
pub fn load_dataset(path: &Path, schema: &ColumnSpec) -> Result<LabeledCorpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter_for(path))
        .has_headers(true)
        .flexible(false)
        .from_reader(file);

    let parse_err = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        message,
    };

    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Config(format!("{}: no column named {name:?}", path.display())))
    };
    let text_idx = column(&schema.text_column)?;
    let label_idx = column(&schema.label_column)?;

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let (Some(text), Some(token)) = (row.get(text_idx), row.get(label_idx)) else {
            return Err(parse_err(line, "missing text or label field".into()));
        };
        let label = schema
            .label_scheme
            .parse(token)
            .ok_or_else(|| Error::UnknownLabel {
                path: PathBuf::from(path),
                line,
                token: token.to_string(),
            })?;
        records.push(Record {
            text: text.to_string(),
            label,
        });
    }
    Ok(LabeledCorpus::new(records))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub folds: Vec<Fold>,
    pub ratio: f64,
    pub seed: u64,
}

/// Number of a class's records that go to the training side:
/// nearest integer to `ratio * size`, halves rounding up, kept within `1..size`.
pub fn train_share(ratio: f64, size: usize) -> usize {
    let n = (ratio * size as f64 + 0.5 + 1e-9).floor() as usize;
    n.clamp(1, size.saturating_sub(1).max(1))
}

/// Draws `n_folds` independent stratified splits. Fold `i` shuffles with seed `seed + i`.
pub fn stratified_splits(
    corpus: &LabeledCorpus,
    ratio: f64,
    n_folds: usize,
    seed: u64,
) -> Result<SplitPlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    if n_folds == 0 {
        return Err(Error::Config("n_folds must be at least 1".into()));
    }
    let mut by_class: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, r) in corpus.records().iter().enumerate() {
        by_class[r.label.index()].push(i);
    }
    for class in SentimentClass::ALL {
        let n = by_class[class.index()].len();
        if n < 2 {
            return Err(Error::Data(format!(
                "class {class} has {n} record(s); stratified splitting needs at least 2"
            )));
        }
    }

    let folds = (0..n_folds)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let mut train = Vec::with_capacity(corpus.len());
            let mut test = Vec::with_capacity(corpus.len());
            for members in &by_class {
                let mut shuffled = members.clone();
                shuffled.shuffle(&mut rng);
                let cut = train_share(ratio, shuffled.len());
                train.extend_from_slice(&shuffled[..cut]);
                test.extend_from_slice(&shuffled[cut..]);
            }
            train.sort_unstable();
            test.sort_unstable();
            Fold { train, test }
        })
        .collect();

    Ok(SplitPlan {
        folds,
        ratio,
        seed,
    })
}
