//! Tweet normalization: stopword removal, character stripping, and stemming.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_STOPWORDS: &str = include_str!("../resources/stopwords.txt");
pub const DEFAULT_SUFFIXES: &str = include_str!("../resources/suffixes.txt");
pub const DEFAULT_MIN_STEM_LENGTH: usize = 2;

/// Parses a one-entry-per-line resource; blank lines and `#` comments are skipped.
pub fn parse_word_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn load_word_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_word_list(&text))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessConfig {
    stopwords: HashSet<String>,
    suffixes: Vec<String>,
    min_stem_length: usize,
}

impl PreprocessConfig {
    pub fn new(
        stopwords: impl IntoIterator<Item = String>,
        suffixes: impl IntoIterator<Item = String>,
        min_stem_length: usize,
    ) -> Result<Self> {
        if min_stem_length == 0 {
            return Err(Error::Config("min_stem_length must be at least 1".into()));
        }
        let mut suffixes: Vec<String> = suffixes.into_iter().filter(|s| !s.is_empty()).collect();
        suffixes.sort_by(|a, b| {
            b.chars()
                .count()
                .cmp(&a.chars().count())
                .then_with(|| a.cmp(b))
        });
        suffixes.dedup();
        Ok(Self {
            stopwords: stopwords.into_iter().collect(),
            suffixes,
            min_stem_length,
        })
    }

    /// The shipped Nepali stopword and suffix lists.
    pub fn nepali_default() -> Self {
        Self::new(
            parse_word_list(DEFAULT_STOPWORDS),
            parse_word_list(DEFAULT_SUFFIXES),
            DEFAULT_MIN_STEM_LENGTH,
        )
        .expect("default resources are valid")
    }

    pub fn from_files(stopwords: &Path, suffixes: &Path, min_stem_length: usize) -> Result<Self> {
        Self::new(load_word_list(stopwords)?, load_word_list(suffixes)?, min_stem_length)
    }

    /// Stopword removal and stripping only; stemming is the identity.
    pub fn without_stemming(stopwords: impl IntoIterator<Item = String>) -> Self {
        Self::new(stopwords, std::iter::empty(), 1).expect("min_stem_length is 1")
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    /// Suffixes in matching order, longest first.
    pub fn suffixes(&self) -> &[String] {
        &self.suffixes
    }

    pub fn min_stem_length(&self) -> usize {
        self.min_stem_length
    }
}

/// Tokens of one preprocessed tweet: non-empty, whitespace-free, never a stopword.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenList(Vec<String>);

impl TokenList {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }

    /// Wraps already-normalized tokens, e.g. when featurizing synthetic data.
    /// Empty or whitespace-bearing tokens are dropped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TokenList(
            tokens
                .into_iter()
                .map(Into::into)
                .filter(|t: &String| !t.is_empty() && !t.chars().any(char::is_whitespace))
                .collect(),
        )
    }
}

/// Characters that survive stripping: the Devanagari block minus its
/// punctuation (dandas, abbreviation sign) and digits.
pub fn is_kept_char(c: char) -> bool {
    matches!(c, '\u{0900}'..='\u{097F}') && !matches!(c, '\u{0964}'..='\u{096F}' | '\u{0970}')
}

/// Devanagari dependent signs that cannot stand alone as a token.
pub fn is_combining_mark(c: char) -> bool {
    matches!(
        c,
        '\u{0900}'..='\u{0903}'
            | '\u{093A}'..='\u{093C}'
            | '\u{093E}'..='\u{094F}'
            | '\u{0951}'..='\u{0957}'
            | '\u{0962}'..='\u{0963}'
    )
}

/// Removes URLs, mentions, hashtag markers, Latin alphanumerics, digits,
/// punctuation, and symbols from one raw token. `None` when nothing usable remains.
pub fn strip_token(token: &str) -> Option<String> {
    if token.starts_with('@') {
        return None;
    }
    let lower = token.to_ascii_lowercase();
    let url_start = ["http://", "https://", "www."]
        .iter()
        .filter_map(|p| lower.find(p))
        .min()
        .unwrap_or(token.len());
    let cleaned: String = token[..url_start].chars().filter(|&c| is_kept_char(c)).collect();
    let mut chars = cleaned.chars();
    match (chars.next(), chars.next()) {
        (None, _) => None,
        (Some(c), None) if is_combining_mark(c) => None,
        _ => Some(cleaned),
    }
}

/// Strips the single longest configured suffix when at least
/// `min_stem_length` characters remain; otherwise returns the token as is.
pub fn stem(token: &str, config: &PreprocessConfig) -> String {
    let Some(suffix) = config.suffixes.iter().find(|s| token.ends_with(s.as_str())) else {
        return token.to_string();
    };
    let stem = &token[..token.len() - suffix.len()];
    if stem.chars().count() >= config.min_stem_length {
        stem.to_string()
    } else {
        token.to_string()
    }
}

/// Full pipeline: whitespace split, stopword removal, stripping, stemming.
/// Tokens that turn into stopwords after stripping or stemming are dropped too.
pub fn preprocess(raw: &str, config: &PreprocessConfig) -> TokenList {
    TokenList(
        raw.split_whitespace()
            .filter(|t| !config.is_stopword(t))
            .filter_map(strip_token)
            .map(|t| stem(&t, config))
            .filter(|t| !config.is_stopword(t))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn words(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn url_and_digits_only_gives_empty() {
        let cfg = PreprocessConfig::nepali_default();
        assert!(preprocess("https://t.co/abc123 2021 १२३ 45.6%", &cfg).is_empty());
    }

    #[test]
    fn stopwords_removed_with_identity_stemmer() {
        let cfg = PreprocessConfig::without_stemming(words(&["ख"]));
        let out = preprocess("क ख क", &cfg);
        assert_eq!(out.tokens(), &["क", "क"]);
    }

    #[test]
    fn strips_latin_mentions_hashtags_punctuation() {
        let cfg = PreprocessConfig::without_stemming(Vec::new());
        let out = preprocess("@user #कोरोना नेपाल, covid19 खोप। 😷 www.example.com", &cfg);
        assert_eq!(out.tokens(), &["कोरोना", "नेपाल", "खोप"]);
    }

    #[test]
    fn lone_combining_mark_is_dropped() {
        assert_eq!(strip_token("ा,"), None);
        assert_eq!(strip_token("a\u{094D}"), None);
        assert_eq!(strip_token("क"), Some("क".into()));
    }

    #[test]
    fn token_becoming_stopword_after_stripping_is_dropped() {
        let cfg = PreprocessConfig::nepali_default();
        assert!(preprocess("छ।", &cfg).is_empty());
    }

    #[test]
    fn no_matching_suffix_leaves_token() {
        let cfg = PreprocessConfig::nepali_default();
        assert_eq!(stem("कोरोना", &cfg), "कोरोना");
        assert_eq!(stem("abc", &cfg), "abc");
    }

    #[test]
    fn short_tokens_are_not_stemmed() {
        let cfg = PreprocessConfig::new(Vec::new(), words(&["XYZ", "YZ"]), 2).unwrap();
        // shorter than min_stem_length + shortest suffix
        assert_eq!(stem("aYZ", &cfg), "aYZ");
        assert_eq!(stem("YZ", &cfg), "YZ");
        assert_eq!(stem("abYZ", &cfg), "ab");
    }

    #[test]
    fn suffix_removed_exactly_once() {
        let cfg = PreprocessConfig::new(Vec::new(), words(&["XYZ"]), 2).unwrap();
        assert_eq!(stem("abXYZXYZ", &cfg), "abXYZ");
        assert_eq!(stem("abXYZ", &cfg), "ab");
    }

    #[test]
    fn suffixes_sorted_longest_first() {
        let cfg = PreprocessConfig::nepali_default();
        let lens: Vec<usize> = cfg.suffixes().iter().map(|s| s.chars().count()).collect();
        assert!(lens.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn shipped_suffix_fixture() {
        let cfg = PreprocessConfig::nepali_default();
        let fixture = [
            ("घरहरूको", "घर"),
            ("नेपालमा", "नेपाल"),
            ("सरकारले", "सरकार"),
            ("मानिसहरू", "मानिस"),
            ("बिरामीलाई", "बिरामी"),
            ("अस्पतालबाट", "अस्पताल"),
            ("कोरोना", "कोरोना"),
            ("खोप", "खोप"),
            ("जनताको", "जनता"),
            ("बालबालिकाहरूलाई", "बालबालिका"),
            ("भोलिदेखि", "भोलि"),
            ("गएको", "गए"),
            ("गरेको", "गर"),
            ("कामका", "काम"),
            ("मको", "मको"),
            ("सहरतिर", "सहर"),
            ("लेखेर", "लेख"),
            ("पढ्नु", "पढ"),
            ("हेर्दै", "हेर्"),
            ("गाउँसम्म", "गाउँ"),
            ("को", "को"),
            ("केटीहरुकी", "केटी"),
        ];
        for (token, expected) in fixture {
            assert_eq!(stem(token, &cfg), expected, "stem({token})");
        }
    }

    /// Independent single-pass stripper: scan every suffix, keep the longest match.
    fn reference_stem(token: &str, suffixes: &[&str], min_len: usize) -> String {
        let mut best: Option<&str> = None;
        for s in suffixes {
            if token.ends_with(s) && best.is_none_or(|b| s.chars().count() > b.chars().count()) {
                best = Some(s);
            }
        }
        match best {
            Some(s) if token.chars().count() - s.chars().count() >= min_len => {
                token[..token.len() - s.len()].to_string()
            }
            _ => token.to_string(),
        }
    }

    #[test]
    fn matches_reference_stripper_on_fifty_tokens() {
        let suffixes = ["XYZ", "YZ", "QXYZ", "W"];
        let cfg = PreprocessConfig::new(Vec::new(), words(&suffixes), 2).unwrap();
        let stems = ["a", "ab", "abc", "XY", "Q", "abXYZ", "zz"];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mut token = stems[rng.random_range(0..stems.len())].to_string();
            for _ in 0..rng.random_range(0..3) {
                token.push_str(suffixes[rng.random_range(0..suffixes.len())]);
            }
            assert_eq!(
                stem(&token, &cfg),
                reference_stem(&token, &suffixes, 2),
                "token {token}"
            );
        }
    }

    fn fuzz_text() -> impl Strategy<Value = String> {
        let pieces = prop::sample::select(vec![
            "क", "ख", "ग", "न", "प", "म", "र", "ल", "स", "ा", "ि", "ी", "ु", "े", "ो", "्", "ं",
            "छ", "र", "को", "हरू", "।", ",", "!", "#", "@", "a", "Z", "9", "०", "५", "😷",
            "http://x.y", " ", " ", " ", "\t", "\n",
        ]);
        prop::collection::vec(pieces, 0..40).prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn pipeline_is_idempotent(text in fuzz_text()) {
            let cfg = PreprocessConfig::without_stemming(parse_word_list(DEFAULT_STOPWORDS));
            let once = preprocess(&text, &cfg);
            let twice = preprocess(&once.join(), &cfg);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn output_tokens_are_clean(text in fuzz_text()) {
            let cfg = PreprocessConfig::nepali_default();
            for t in preprocess(&text, &cfg).iter() {
                prop_assert!(!t.is_empty());
                prop_assert!(t.chars().all(is_kept_char), "{}", t);
                prop_assert!(!cfg.is_stopword(t));
            }
        }

        #[test]
        fn stem_never_lengthens(token in "[a-zXYZ]{0,8}(XYZ|YZ|W)?") {
            let cfg = PreprocessConfig::new(Vec::new(), words(&["XYZ", "YZ", "W"]), 2).unwrap();
            prop_assert!(stem(&token, &cfg).len() <= token.len());
        }
    }
}
