use std::io::{Read, Write};
use std::path::Path;

use crate::class::SentimentClass;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"NSFM";
const VERSION: u32 = 1;

/// Row-major feature vectors with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    values: Vec<f64>,
    labels: Vec<SentimentClass>,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            values: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: &[SentimentClass]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut m = Self::new(dim);
        if rows.len() != labels.len() {
            return Err(Error::Data("row and label counts differ".into()));
        }
        for (r, &l) in rows.iter().zip(labels) {
            m.push(r, l)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, row: &[f64], label: SentimentClass) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::shape("feature matrix row", self.dim, row.len()));
        }
        self.values.extend_from_slice(row);
        self.labels.push(label);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn labels(&self) -> &[SentimentClass] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> SentimentClass {
        self.labels[i]
    }

    /// Restricts every row to the columns in `range`.
    pub fn columns(&self, range: std::ops::Range<usize>) -> Self {
        let mut m = Self::new(range.len());
        for (i, row) in self.rows().enumerate() {
            m.values.extend_from_slice(&row[range.clone()]);
            m.labels.push(self.labels[i]);
        }
        m
    }

    /// Binary layout: `NSFM`, u32 version, u64 rows, u64 cols, one label byte per
    /// row, then row-major f64 values; all integers and floats little-endian.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        let labels: Vec<u8> = self.labels.iter().map(|l| l.index() as u8).collect();
        w.write_all(&labels)?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let bad = |m: &str| Error::Data(format!("feature matrix: {m}"));
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let rows = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let dim = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let mut labels = vec![0u8; rows];
        read_exact(&mut r, &mut labels)?;
        let labels = labels
            .into_iter()
            .map(|b| SentimentClass::from_index(b as usize).ok_or_else(|| bad("bad label byte")))
            .collect::<Result<Vec<_>>>()?;
        let mut values = Vec::with_capacity(rows * dim);
        for _ in 0..rows * dim {
            values.push(f64::from_le_bytes(read_array(&mut r)?));
        }
        Ok(Self {
            dim,
            values,
            labels,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

pub(crate) fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Data(format!("truncated binary input: {e}")))
}

pub(crate) fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}
