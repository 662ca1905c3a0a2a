//! Synthetic labeled tweets and matching word vectors with class signal in
//! every feature block.
//!
//! Each class owns a pool of cue words. A tweet mixes a few cues of its own
//! class, an occasional cue of another class, filler words shared by all
//! classes, and noise the preprocessor removes (stopwords, mentions, URLs,
//! digits, dandas). Cue vectors lean towards a per-class direction, so the
//! averaged embedding, tf-idf weights and class-probability features all
//! carry the label.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::class::{SentimentClass, NUM_CLASSES};
use crate::corpus::{LabeledCorpus, Record};
use crate::error::{Error, Result};
use crate::features::EmbeddingTable;
use crate::preprocess::{preprocess, PreprocessConfig};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub docs_per_class: usize,
    pub embedding_dim: usize,
    pub cues_per_class: usize,
    pub fillers: usize,
    /// Words that appear in tweets but have no vector.
    pub unknown_words: usize,
    /// Chance that a tweet also contains one cue of a different class.
    pub cross_cue_rate: f64,
    /// Length of the class direction added to cue vectors, relative to unit noise.
    pub signal: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            docs_per_class: 400,
            embedding_dim: 300,
            cues_per_class: 12,
            fillers: 240,
            unknown_words: 30,
            cross_cue_rate: 0.3,
            signal: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub corpus: LabeledCorpus,
    pub embeddings: EmbeddingTable,
    pub cues: [Vec<String>; NUM_CLASSES],
}

const CONSONANTS: std::ops::RangeInclusive<u32> = 0x0915..=0x0939;
const VOWEL_SIGNS: [char; 9] = ['ा', 'ि', 'ी', 'ु', 'ू', 'े', 'ै', 'ो', 'ौ'];

/// Distinct three-syllable words that survive preprocessing unchanged.
fn words(n: usize, taken: &mut BTreeSet<String>, rng: &mut impl Rng, cfg: &PreprocessConfig) -> Vec<String> {
    let consonants: Vec<char> = CONSONANTS.filter_map(char::from_u32).collect();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w: String = (0..3)
            .flat_map(|_| [*consonants.choose(rng).unwrap(), *VOWEL_SIGNS.choose(rng).unwrap()])
            .collect();
        let fixed = preprocess(&w, cfg).tokens() == [w.clone()];
        if fixed && taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.docs_per_class == 0 || spec.cues_per_class < 2 || spec.fillers < 4 || spec.embedding_dim == 0 {
        return Err(Error::Config("synthetic spec sizes too small".into()));
    }
    let cfg = PreprocessConfig::nepali_default();
    let mut rng = seed::rng(spec.seed, &[0x5e]);
    let mut taken = BTreeSet::new();
    let cues: [Vec<String>; NUM_CLASSES] =
        std::array::from_fn(|_| words(spec.cues_per_class, &mut taken, &mut rng, &cfg));
    let fillers = words(spec.fillers, &mut taken, &mut rng, &cfg);
    let unknown = words(spec.unknown_words, &mut taken, &mut rng, &cfg);

    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let dim = spec.embedding_dim;
    let directions: Vec<Vec<f64>> = (0..NUM_CLASSES)
        .map(|_| (0..dim).map(|_| noise.sample(&mut rng)).collect())
        .collect();
    let mut embeddings = EmbeddingTable::new(dim);
    for (c, pool) in cues.iter().enumerate() {
        for w in pool {
            let v: Vec<f64> = directions[c]
                .iter()
                .map(|d| spec.signal * d + 0.5 * noise.sample(&mut rng))
                .collect();
            embeddings.insert(w.clone(), &v)?;
        }
    }
    for w in &fillers {
        let v: Vec<f64> = (0..dim).map(|_| 0.5 * noise.sample(&mut rng)).collect();
        embeddings.insert(w.clone(), &v)?;
    }

    let stopwords: Vec<&str> = ["र", "पनि", "छ", "यो", "त्यो", "हो"]
        .into_iter()
        .filter(|w| cfg.is_stopword(w))
        .collect();
    let mut records = Vec::with_capacity(spec.docs_per_class * NUM_CLASSES);
    for i in 0..spec.docs_per_class * NUM_CLASSES {
        let class = SentimentClass::from_index(i % NUM_CLASSES).expect("class index");
        let c = class.index();
        let mut tokens: Vec<String> = Vec::new();
        for _ in 0..rng.random_range(2..=4) {
            tokens.push(cues[c].choose(&mut rng).unwrap().clone());
        }
        if rng.random::<f64>() < spec.cross_cue_rate {
            let other = (c + rng.random_range(1..NUM_CLASSES)) % NUM_CLASSES;
            tokens.push(cues[other].choose(&mut rng).unwrap().clone());
        }
        for _ in 0..rng.random_range(4..=8) {
            tokens.push(fillers.choose(&mut rng).unwrap().clone());
        }
        if !unknown.is_empty() && rng.random::<f64>() < 0.5 {
            tokens.push(unknown.choose(&mut rng).unwrap().clone());
        }
        tokens.shuffle(&mut rng);
        let mut text = Vec::with_capacity(tokens.len() + 3);
        for t in tokens {
            match rng.random_range(0..10) {
                0 if !stopwords.is_empty() => text.push(stopwords.choose(&mut rng).unwrap().to_string()),
                1 => text.push("@user".to_string()),
                2 => text.push(format!("१{}", rng.random_range(0..10))),
                _ => {}
            }
            text.push(if rng.random::<f64>() < 0.1 { format!("{t}।") } else { t });
        }
        if rng.random::<f64>() < 0.2 {
            text.push("https://t.co/x".to_string());
        }
        records.push(Record {
            text: text.join(" "),
            label: class,
        });
    }
    Ok(SyntheticData {
        corpus: LabeledCorpus::new(records),
        embeddings,
        cues,
    })
}

/// Writes `tweets.csv` (columns `text,label`, indexed labels) and
/// `embeddings.txt` into `dir`.
pub fn write(data: &SyntheticData, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("tweets.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::io(&csv_path, std::io::Error::other(e)))?;
    let io = |e: csv::Error| Error::io(&csv_path, std::io::Error::other(e));
    w.write_record(["text", "label"]).map_err(io)?;
    for r in data.corpus.records() {
        w.write_record([r.text.as_str(), &r.label.index().to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let emb_path = dir.join("embeddings.txt");
    data.embeddings.write(&emb_path)?;
    Ok((csv_path, emb_path))
}
