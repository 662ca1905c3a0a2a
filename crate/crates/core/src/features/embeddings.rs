use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Where a table was read from, so a saved feature model can insist on the same file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSource {
    pub path: PathBuf,
    pub sha256: String,
}

/// Pretrained word vectors, all of one dimension, stored in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<f64>,
    source: Option<EmbeddingSource>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            tokens: Vec::new(),
            index: HashMap::new(),
            values: Vec::new(),
            source: None,
        }
    }

    /// Adds a vector unless the token is already present (first occurrence wins).
    pub fn insert(&mut self, token: impl Into<String>, vector: &[f64]) -> Result<bool> {
        if vector.len() != self.dimension {
            return Err(Error::Data(format!(
                "embedding has {} values, table dimension is {}",
                vector.len(),
                self.dimension
            )));
        }
        if let Some(bad) = vector.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite embedding value {bad}")));
        }
        let token = token.into();
        if self.index.contains_key(&token) {
            return Ok(false);
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.values.extend_from_slice(vector);
        Ok(true)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&i| &self.values[i * self.dimension..(i + 1) * self.dimension])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.tokens
            .iter()
            .zip(self.values.chunks_exact(self.dimension.max(1)))
            .map(|(t, v)| (t.as_str(), v))
    }

    pub fn source(&self) -> Option<&EmbeddingSource> {
        self.source.as_ref()
    }

    /// Writes the table in word-vector text format. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{} {}", self.len(), self.dimension).map_err(io)?;
        for (token, vector) in self.iter() {
            write!(w, "{token}").map_err(io)?;
            for v in vector {
                write!(w, " {v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}

/// Loads a word-vector text file: a `count dim` header, then `token v1 .. vdim` per line.
pub fn load_embeddings(path: &Path, expected_dim: usize) -> Result<EmbeddingTable> {
    load_embeddings_filtered(path, expected_dim, None)
}

/// As [`load_embeddings`], but keeps only tokens in `keep` when given.
/// Every row is still validated and the whole file is hashed.
pub fn load_embeddings_filtered(
    path: &Path,
    expected_dim: usize,
    keep: Option<&HashSet<String>>,
) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(HashingReader {
        inner: file,
        hasher: Sha256::new(),
    });
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut line = String::new();
    reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    let header: Vec<&str> = line.split_whitespace().collect();
    let [_, dim] = header.as_slice() else {
        return Err(parse_err(1, format!("expected header \"count dim\", got {:?}", line.trim())));
    };
    let dim: usize = dim
        .parse()
        .map_err(|_| parse_err(1, format!("bad dimension {dim:?}")))?;
    if dim != expected_dim {
        return Err(parse_err(
            1,
            format!("header dimension {dim} does not match expected {expected_dim}"),
        ));
    }

    let mut table = EmbeddingTable::new(dim);
    let mut vector = Vec::with_capacity(dim);
    let mut line_no = 1;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        vector.clear();
        for field in fields {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad number {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, format!("non-finite value {field:?}")));
            }
            vector.push(v);
        }
        if vector.len() != dim {
            return Err(parse_err(
                line_no,
                format!("expected {dim} values, found {}", vector.len()),
            ));
        }
        if keep.is_none_or(|k| k.contains(token)) {
            table.insert(token, &vector)?;
        }
    }
    let digest = reader.into_inner().hasher.finalize();
    table.source = Some(EmbeddingSource {
        path: path.to_path_buf(),
        sha256: hex::encode(digest),
    });
    Ok(table)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn write_tmp(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_small_file() {
        let f = write_tmp("2 3\na 1 0 0\nb 0 1 0\n");
        let t = load_embeddings(f.path(), 3).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dimension(), 3);
        assert_eq!(t.get("b"), Some(&[0.0, 1.0, 0.0][..]));
        assert!(t.source().unwrap().sha256.len() == 64);
    }

    #[test]
    fn header_dimension_must_match() {
        let f = write_tmp("1 3\na 1 0 0\n");
        assert!(matches!(load_embeddings(f.path(), 300), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn short_row_reports_its_line() {
        let mut body = String::from("2 300\n");
        body.push_str(&format!("a{}\n", " 0.5".repeat(300)));
        body.push_str(&format!("b{}\n", " 0.5".repeat(299)));
        let f = write_tmp(&body);
        let err = load_embeddings(f.path(), 300).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn non_finite_values_rejected() {
        let f = write_tmp("1 2\na 1 NaN\n");
        assert!(load_embeddings(f.path(), 2).is_err());
        let f = write_tmp("1 2\na inf 1\n");
        assert!(load_embeddings(f.path(), 2).is_err());
    }

    #[test]
    fn duplicates_keep_first() {
        let f = write_tmp("2 1\na 1\na 2\n");
        let t = load_embeddings(f.path(), 1).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("a"), Some(&[1.0][..]));
    }

    #[test]
    fn filtered_load_keeps_requested_tokens() {
        let f = write_tmp("3 1\na 1\nb 2\nc 3\n");
        let keep: HashSet<String> = ["c".to_string()].into();
        let t = load_embeddings_filtered(f.path(), 1, Some(&keep)).unwrap();
        assert_eq!(t.len(), 1);
        let full = load_embeddings(f.path(), 1).unwrap();
        assert_eq!(t.source().unwrap().sha256, full.source().unwrap().sha256);
    }

    #[test]
    fn thousand_rows_round_trip_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut table = EmbeddingTable::new(8);
        for i in 0..1000 {
            let v: Vec<f64> = (0..8).map(|_| rng.random_range(-1e3..1e3) * rng.random::<f64>()).collect();
            table.insert(format!("tok{i}"), &v).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vec.txt");
        table.write(&path).unwrap();
        let back = load_embeddings(&path, 8).unwrap();
        assert_eq!(back.len(), 1000);
        for (token, v) in table.iter() {
            let w = back.get(token).unwrap();
            assert!(v.iter().zip(w).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
