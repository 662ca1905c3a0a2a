//! Feature extraction: averaged word embeddings (ft), capped TF-IDF bag of
//! words (bow), averaged class probabilities (ds), and their concatenation.

mod bow;
mod ds;
mod embeddings;
pub(crate) mod matrix;

use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use bow::{smoothed_idf, BowModel};
pub use ds::DsModel;
pub use embeddings::{load_embeddings, load_embeddings_filtered, EmbeddingSource, EmbeddingTable};
pub use matrix::FeatureMatrix;

use crate::class::{SentimentClass, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::preprocess::TokenList;

pub const DEFAULT_EMBEDDING_DIM: usize = 300;
pub const DEFAULT_BOW_SIZE: usize = 100;
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Which slice of the hybrid representation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureBlock {
    Ft,
    Bow,
    Ds,
    Hybrid,
}

impl FeatureBlock {
    pub const ALL: [FeatureBlock; 4] = [
        FeatureBlock::Ft,
        FeatureBlock::Bow,
        FeatureBlock::Ds,
        FeatureBlock::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureBlock::Ft => "ft",
            FeatureBlock::Bow => "bow",
            FeatureBlock::Ds => "ds",
            FeatureBlock::Hybrid => "hybrid",
        }
    }
}

impl FromStr for FeatureBlock {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureBlock::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown feature set {s:?} (ft, bow, ds, hybrid)")))
    }
}

/// A concatenated `[ft | bow | ds]` vector for one tweet.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridVector(pub Vec<f64>);

impl HybridVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EmbeddingRef {
    path: Option<PathBuf>,
    sha256: Option<String>,
    dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeatureModelFile {
    embedding: EmbeddingRef,
    bow: BowModel,
    ds: DsModel,
}

/// Fitted extractor state. Featurizing never mutates it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureModel {
    embeddings: EmbeddingTable,
    bow: BowModel,
    ds: DsModel,
}

/// Fits bow and ds on training documents only; embeddings pass through.
pub fn fit_feature_model<'a>(
    train: impl IntoIterator<Item = (&'a TokenList, SentimentClass)> + Clone,
    embeddings: EmbeddingTable,
    bow_size: usize,
    alpha: f64,
) -> Result<FeatureModel> {
    if bow_size == 0 {
        return Err(Error::Config("bow_size must be at least 1".into()));
    }
    let bow = BowModel::fit(train.clone().into_iter().map(|(t, _)| t), bow_size)?;
    let ds = DsModel::fit(train, alpha)?;
    Ok(FeatureModel {
        embeddings,
        bow,
        ds,
    })
}

impl FeatureModel {
    pub fn embeddings(&self) -> &EmbeddingTable {
        &self.embeddings
    }

    pub fn bow(&self) -> &BowModel {
        &self.bow
    }

    pub fn ds(&self) -> &DsModel {
        &self.ds
    }

    pub fn hybrid_dim(&self) -> usize {
        self.embeddings.dimension() + self.bow.len() + NUM_CLASSES
    }

    /// Position of a block inside the hybrid vector.
    pub fn block_range(&self, block: FeatureBlock) -> Range<usize> {
        let ft = self.embeddings.dimension();
        let bow = ft + self.bow.len();
        match block {
            FeatureBlock::Ft => 0..ft,
            FeatureBlock::Bow => ft..bow,
            FeatureBlock::Ds => bow..bow + NUM_CLASSES,
            FeatureBlock::Hybrid => 0..bow + NUM_CLASSES,
        }
    }

    /// Mean embedding of in-vocabulary tokens, or zeros when none are known.
    pub fn ft_features(&self, tokens: &TokenList) -> Vec<f64> {
        let mut out = vec![0.0; self.embeddings.dimension()];
        self.ft_into(tokens, &mut out);
        out
    }

    fn ft_into(&self, tokens: &TokenList, out: &mut [f64]) {
        out.fill(0.0);
        let mut found = 0usize;
        for v in tokens.iter().filter_map(|t| self.embeddings.get(t)) {
            found += 1;
            out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
        }
        if found > 0 {
            out.iter_mut().for_each(|o| *o /= found as f64);
        }
    }

    pub fn bow_features(&self, tokens: &TokenList) -> Vec<f64> {
        let mut out = vec![0.0; self.bow.len()];
        self.bow.features_into(tokens, &mut out);
        out
    }

    pub fn ds_features(&self, tokens: &TokenList) -> Vec<f64> {
        let mut out = vec![0.0; NUM_CLASSES];
        self.ds.features_into(tokens, &mut out);
        out
    }

    pub fn hybrid_features(&self, tokens: &TokenList) -> HybridVector {
        let mut out = vec![0.0; self.hybrid_dim()];
        let (ft, rest) = out.split_at_mut(self.embeddings.dimension());
        let (bow, ds) = rest.split_at_mut(self.bow.len());
        self.ft_into(tokens, ft);
        self.bow.features_into(tokens, bow);
        self.ds.features_into(tokens, ds);
        HybridVector(out)
    }

    pub fn block_features(&self, tokens: &TokenList, block: FeatureBlock) -> Vec<f64> {
        match block {
            FeatureBlock::Ft => self.ft_features(tokens),
            FeatureBlock::Bow => self.bow_features(tokens),
            FeatureBlock::Ds => self.ds_features(tokens),
            FeatureBlock::Hybrid => self.hybrid_features(tokens).0,
        }
    }

    /// Featurizes labeled documents into a matrix of the chosen block.
    pub fn featurize<'a>(
        &self,
        docs: impl IntoIterator<Item = (&'a TokenList, SentimentClass)>,
        block: FeatureBlock,
    ) -> FeatureMatrix {
        let dim = self.block_range(block).len();
        let mut m = FeatureMatrix::new(dim);
        for (tokens, label) in docs {
            m.push(&self.block_features(tokens, block), label)
                .expect("block width is fixed");
        }
        m
    }

    fn file_repr(&self) -> FeatureModelFile {
        let source = self.embeddings.source();
        FeatureModelFile {
            embedding: EmbeddingRef {
                path: source.map(|s| s.path.clone()),
                sha256: source.map(|s| s.sha256.clone()),
                dimension: self.embeddings.dimension(),
            },
            bow: self.bow.clone(),
            ds: self.ds.clone(),
        }
    }

    /// JSON document holding vocabulary, idf, ds table, and the embedding file's path and hash.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file_repr()).expect("feature model serializes")
    }

    /// SHA-256 of the JSON form; identifies the fitted state.
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Recorded embedding path of a saved model, for locating the vectors.
    pub fn embedding_path(path: &Path) -> Result<Option<PathBuf>> {
        Ok(Self::read_file(path)?.embedding.path)
    }

    fn read_file(path: &Path) -> Result<FeatureModelFile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Restores a saved model around an embedding table, which must come from
    /// the same file the model was fitted with.
    pub fn load(path: &Path, embeddings: EmbeddingTable) -> Result<Self> {
        let file = Self::read_file(path)?;
        if file.embedding.dimension != embeddings.dimension() {
            return Err(Error::Data(format!(
                "feature model expects {}-D embeddings, table has {}",
                file.embedding.dimension,
                embeddings.dimension()
            )));
        }
        if let Some(expected) = &file.embedding.sha256 {
            let actual = embeddings.source().map(|s| s.sha256.as_str());
            if actual != Some(expected.as_str()) {
                return Err(Error::Data(format!(
                    "embedding file hash {} does not match the fitted model's {expected}",
                    actual.unwrap_or("<in-memory>")
                )));
            }
        }
        Ok(Self {
            embeddings,
            bow: file.bow,
            ds: file.ds,
        })
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use SentimentClass::*;

    fn doc(s: &str) -> TokenList {
        TokenList::from_tokens(s.split_whitespace())
    }

    fn toy_embeddings() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(3);
        t.insert("a", &[1.0, 0.0, 0.0]).unwrap();
        t.insert("b", &[0.0, 1.0, 0.0]).unwrap();
        t
    }

    fn fit(docs: &[(TokenList, SentimentClass)], bow_size: usize) -> FeatureModel {
        fit_feature_model(docs.iter().map(|(d, l)| (d, *l)), toy_embeddings(), bow_size, 1.0).unwrap()
    }

    #[test]
    fn ds_row_from_counts() {
        // q twice in positive, once in negative
        let docs = vec![
            (doc("q q"), Positive),
            (doc("q"), Negative),
            (doc("z"), Neutral),
        ];
        let m = fit(&docs, 10);
        let row = m.ds().get("q").unwrap();
        let expected = [2.0 / 6.0, 1.0 / 6.0, 3.0 / 6.0];
        for (a, b) in row.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn idf_of_token_in_every_doc_is_one() {
        let docs = vec![(doc("q x"), Positive), (doc("q"), Negative), (doc("q y"), Neutral)];
        let m = fit(&docs, 10);
        let i = m.bow().vocabulary().iter().position(|t| t == "q").unwrap();
        assert_eq!(m.bow().idf()[i], 1.0);
    }

    #[test]
    fn vocabulary_ranks_by_frequency_then_lexicographically() {
        let docs = vec![(doc("c c b b a d"), Positive), (doc("d"), Negative)];
        let m = fit(&docs, 3);
        assert_eq!(m.bow().vocabulary(), &["b", "c", "d"]);
    }

    #[test]
    fn small_vocabulary_shrinks_hybrid_dim() {
        let docs = vec![(doc("a b"), Positive), (doc("c"), Negative)];
        let m = fit(&docs, 100);
        assert_eq!(m.bow().len(), 3);
        assert_eq!(m.hybrid_dim(), 3 + 3 + 3);
    }

    #[test]
    fn empty_training_set_rejected() {
        let docs: Vec<(TokenList, SentimentClass)> = Vec::new();
        assert!(fit_feature_model(docs.iter().map(|(d, l)| (d, *l)), toy_embeddings(), 5, 1.0).is_err());
    }

    #[test]
    fn ft_mean_and_fallback() {
        let docs = vec![(doc("a b"), Positive)];
        let m = fit(&docs, 2);
        assert_eq!(m.ft_features(&doc("a b")), vec![0.5, 0.5, 0.0]);
        assert_eq!(m.ft_features(&doc("zz yy")), vec![0.0; 3]);
        assert_eq!(m.ft_features(&doc("")), vec![0.0; 3]);
    }

    #[test]
    fn bow_zero_and_one_hot() {
        let docs = vec![(doc("q"), Positive), (doc("q"), Negative)];
        let m = fit(&docs, 1);
        assert_eq!(m.bow().idf()[0], 1.0);
        assert_eq!(m.bow_features(&doc("q")), vec![1.0]);
        assert_eq!(m.bow_features(&doc("other")), vec![0.0]);
    }

    #[test]
    fn ds_singleton_and_uniform_fallback() {
        let docs = vec![(doc("a"), Positive)];
        let m = fit(&docs, 1);
        let row = *m.ds().get("a").unwrap();
        assert_eq!(m.ds_features(&doc("a unknown")), row.to_vec());
        assert_eq!(m.ds_features(&doc("unknown")), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn empty_tokens_give_zeros_then_uniform() {
        let docs = vec![(doc("a b c"), Positive)];
        let m = fit(&docs, 3);
        let h = m.hybrid_features(&TokenList::default());
        let n = h.len();
        assert!(h.values()[..n - 3].iter().all(|&v| v == 0.0));
        assert_eq!(&h.values()[n - 3..], &[1.0 / 3.0; 3]);
    }

    #[test]
    fn ds_mean_stays_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vocab: Vec<String> = (0..30).map(|i| format!("t{i}")).collect();
        let docs: Vec<(TokenList, SentimentClass)> = (0..60)
            .map(|_| {
                let toks: Vec<&str> = (0..rng.random_range(1..8))
                    .map(|_| vocab[rng.random_range(0..30)].as_str())
                    .collect();
                (TokenList::from_tokens(toks), SentimentClass::ALL[rng.random_range(0..3)])
            })
            .collect();
        let m = fit(&docs, 10);
        for (_, row) in m.ds().rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
        for _ in 0..100 {
            let toks: Vec<&str> = (0..rng.random_range(1..6))
                .map(|_| vocab[rng.random_range(0..30)].as_str())
                .collect();
            let f = m.ds_features(&TokenList::from_tokens(toks));
            assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn json_round_trip_and_hash_check() {
        let docs = vec![(doc("a b c"), Positive), (doc("c d"), Negative)];
        let m = fit(&docs, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fm.json");
        m.save(&path).unwrap();
        let back = FeatureModel::load(&path, toy_embeddings()).unwrap();
        assert_eq!(back, m);
        assert!(FeatureModel::load(&path, EmbeddingTable::new(4)).is_err());

        let vec_path = dir.path().join("v.txt");
        toy_embeddings().write(&vec_path).unwrap();
        let filed = fit_feature_model(
            docs.iter().map(|(d, l)| (d, *l)),
            load_embeddings(&vec_path, 3).unwrap(),
            3,
            1.0,
        )
        .unwrap();
        filed.save(&path).unwrap();
        assert_eq!(FeatureModel::embedding_path(&path).unwrap(), Some(vec_path.clone()));
        assert!(FeatureModel::load(&path, load_embeddings(&vec_path, 3).unwrap()).is_ok());
        // same dimension, different file
        assert!(FeatureModel::load(&path, toy_embeddings()).is_err());
    }

    #[test]
    fn feature_block_parsing() {
        assert_eq!("HYBRID".parse::<FeatureBlock>().unwrap(), FeatureBlock::Hybrid);
        assert!("da".parse::<FeatureBlock>().is_err());
    }
}
