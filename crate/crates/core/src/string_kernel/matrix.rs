use std::fs;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{NGramIndex, NGramRange};
use crate::corpus::Corpus;
use crate::error::{GeoError, Result};

pub const GKM_MAGIC: &[u8; 4] = b"GKM1";

/// Dense row-major kernel matrix between two ordered post lists.
///
/// Unnormalized entries are exact integer counts stored as `f64` (exact up
/// to 2^53).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    normalized: bool,
    row_ids: Vec<u64>,
    col_ids: Vec<u64>,
}

impl KernelMatrix {
    pub fn new(
        values: Vec<f64>,
        row_ids: Vec<u64>,
        col_ids: Vec<u64>,
        normalized: bool,
    ) -> Result<Self> {
        let (rows, cols) = (row_ids.len(), col_ids.len());
        if values.len() != rows * cols {
            return Err(GeoError::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} kernel matrix",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::InvalidData(
                "kernel matrix has non-finite entries".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            values,
            normalized,
            row_ids,
            col_ids,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[u64] {
        &self.col_ids
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    /// True for a training Gram matrix: square with identical row and
    /// column post lists.
    pub fn is_gram(&self) -> bool {
        self.rows == self.cols && self.row_ids == self.col_ids
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Hash of the column side of the header (column count, normalization
    /// flag, column ids). A Gram matrix and every cross matrix against the
    /// same training posts share it.
    pub fn column_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(GKM_MAGIC);
        h.update((self.cols as u64).to_le_bytes());
        h.update([u8::from(self.normalized)]);
        for id in &self.col_ids {
            h.update(id.to_le_bytes());
        }
        hex::encode(&h.finalize()[..16])
    }

    /// Sub-block selected by row and column positions, in the given order.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> KernelMatrix {
        let mut values = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            let row = self.row(r);
            values.extend(cols.iter().map(|&c| row[c]));
        }
        KernelMatrix {
            rows: rows.len(),
            cols: cols.len(),
            values,
            normalized: self.normalized,
            row_ids: rows.iter().map(|&r| self.row_ids[r]).collect(),
            col_ids: cols.iter().map(|&c| self.col_ids[c]).collect(),
        }
    }

    /// Stacks matrices that share columns on top of each other.
    pub fn vstack(parts: &[&KernelMatrix]) -> Result<KernelMatrix> {
        let first = parts
            .first()
            .ok_or_else(|| GeoError::InvalidArgument("nothing to stack".into()))?;
        let mut out = (*first).clone();
        for p in &parts[1..] {
            if p.col_ids != out.col_ids || p.normalized != out.normalized {
                return Err(GeoError::DimensionMismatch(
                    "stacked kernel matrices must share columns".into(),
                ));
            }
            out.values.extend_from_slice(&p.values);
            out.row_ids.extend_from_slice(&p.row_ids);
            out.rows += p.rows;
        }
        Ok(out)
    }

    /// `GKM1` encoding: magic, u64 rows, u64 cols, u8 normalized flag,
    /// rows*cols f64 values row-major, then row ids and column ids as u64,
    /// all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(21 + 8 * (self.values.len() + self.rows + self.cols));
        out.extend_from_slice(GKM_MAGIC);
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols as u64).to_le_bytes());
        out.push(u8::from(self.normalized));
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for id in self.row_ids.iter().chain(&self.col_ids) {
            out.extend_from_slice(&id.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| GeoError::InvalidData(format!("kernel file: {msg}"));
        if bytes.len() < 21 || &bytes[..4] != GKM_MAGIC {
            return Err(bad("missing GKM1 header"));
        }
        let read_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let rows = usize::try_from(read_u64(4)).map_err(|_| bad("row count overflow"))?;
        let cols = usize::try_from(read_u64(12)).map_err(|_| bad("column count overflow"))?;
        let normalized = match bytes[20] {
            0 => false,
            1 => true,
            _ => return Err(bad("normalized flag must be 0 or 1")),
        };
        let cells = rows.checked_mul(cols).ok_or_else(|| bad("size overflow"))?;
        let expected = cells
            .checked_add(rows)
            .and_then(|v| v.checked_add(cols))
            .and_then(|v| v.checked_mul(8))
            .and_then(|v| v.checked_add(21))
            .ok_or_else(|| bad("size overflow"))?;
        if bytes.len() != expected {
            return Err(bad(&format!(
                "expected {expected} bytes for {rows}x{cols}, found {}",
                bytes.len()
            )));
        }
        let mut at = 21;
        let mut take = |count: usize| {
            let start = at;
            at += 8 * count;
            bytes[start..at]
                .chunks_exact(8)
                .map(|c| c.try_into().unwrap())
        };
        let values: Vec<f64> = take(cells).map(f64::from_le_bytes).collect();
        let row_ids: Vec<u64> = take(rows).map(u64::from_le_bytes).collect();
        let col_ids: Vec<u64> = take(cols).map(u64::from_le_bytes).collect();
        KernelMatrix::new(values, row_ids, col_ids, normalized)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| GeoError::from(e).in_file(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| GeoError::from(e).in_file(path))?;
        Self::from_bytes(&bytes).map_err(|e| e.in_file(path))
    }
}

fn normalize_entry(k: u64, dx: u64, dy: u64) -> f64 {
    if dx == 0 || dy == 0 {
        0.0
    } else {
        k as f64 / (dx as f64 * dy as f64).sqrt()
    }
}

/// Gram matrix of an index against itself. The upper triangle is computed in
/// parallel and mirrored, so the result is exactly symmetric.
pub fn gram_from_index(index: &NGramIndex, ids: &[u64], normalize: bool) -> Result<KernelMatrix> {
    let n = index.len();
    if ids.len() != n {
        return Err(GeoError::DimensionMismatch(format!(
            "{} ids for {n} indexed posts",
            ids.len()
        )));
    }
    let upper: Vec<Vec<u64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| index.kernel_with(i, index, j)).collect())
        .collect();
    let diag: Vec<u64> = (0..n).map(|i| upper[i][0]).collect();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for (off, &k) in upper[i].iter().enumerate() {
            let j = i + off;
            let v = if normalize {
                normalize_entry(k, diag[i], diag[j])
            } else {
                k as f64
            };
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    KernelMatrix::new(values, ids.to_vec(), ids.to_vec(), normalize)
}

/// Rectangular matrix of `rows_index` posts against `cols_index` posts.
pub fn cross_from_index(
    rows_index: &NGramIndex,
    row_ids: &[u64],
    cols_index: &NGramIndex,
    col_ids: &[u64],
    normalize: bool,
) -> Result<KernelMatrix> {
    if rows_index.range() != cols_index.range() {
        return Err(GeoError::InvalidArgument(format!(
            "n-gram ranges differ ({} vs {})",
            rows_index.range(),
            cols_index.range()
        )));
    }
    let (r, c) = (rows_index.len(), cols_index.len());
    if row_ids.len() != r || col_ids.len() != c {
        return Err(GeoError::DimensionMismatch(
            "id lists do not match indexes".into(),
        ));
    }
    let col_diag: Vec<u64> = (0..c).map(|j| cols_index.self_kernel(j)).collect();
    let mut values = vec![0.0; r * c];
    if c > 0 {
        values.par_chunks_mut(c).enumerate().for_each(|(i, row)| {
            let dx = rows_index.self_kernel(i);
            for (j, cell) in row.iter_mut().enumerate() {
                let k = rows_index.kernel_with(i, cols_index, j);
                *cell = if normalize {
                    normalize_entry(k, dx, col_diag[j])
                } else {
                    k as f64
                };
            }
        });
    }
    KernelMatrix::new(values, row_ids.to_vec(), col_ids.to_vec(), normalize)
}

pub fn gram_matrix(corpus: &Corpus, range: NGramRange, normalize: bool) -> Result<KernelMatrix> {
    if corpus.is_empty() {
        return Err(GeoError::InvalidArgument(
            "Gram matrix of an empty corpus".into(),
        ));
    }
    let index = NGramIndex::build(&corpus.texts(), range);
    gram_from_index(&index, &corpus.ids(), normalize)
}

pub fn cross_matrix(
    test: &Corpus,
    train: &Corpus,
    range: NGramRange,
    normalize: bool,
) -> Result<KernelMatrix> {
    let (ti, tr) = rayon::join(
        || NGramIndex::build(&test.texts(), range),
        || NGramIndex::build(&train.texts(), range),
    );
    cross_from_index(&ti, &test.ids(), &tr, &train.ids(), normalize)
}
