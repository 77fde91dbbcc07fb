//! Blended presence-bits string kernels.
//!
//! For a range of n-gram lengths `[min_n, max_n]` the kernel between two texts
//! is the number of distinct character n-grams they share, summed over n.
//! Each shared n-gram counts once regardless of how often it occurs.
//!
//! N-grams are taken over Unicode scalar values and identified by a 64-bit
//! hash, so every post reduces to one sorted `u64` set per n and a kernel
//! entry is a merge-intersection of sorted sets.

mod index;
mod matrix;

use std::fmt;
use std::str::FromStr;

use crate::error::{GeoError, Result};

pub use index::{build_index, presence_kernel, HashCollision, NGramIndex};
pub use matrix::{
    cross_from_index, cross_matrix, gram_from_index, gram_matrix, KernelMatrix, GKM_MAGIC,
};

/// Inclusive range of n-gram lengths, `1 <= min_n <= max_n <= 16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NGramRange {
    min_n: usize,
    max_n: usize,
}

impl NGramRange {
    pub const MAX_N: usize = 16;

    pub fn new(min_n: usize, max_n: usize) -> Result<Self> {
        if min_n == 0 {
            return Err(GeoError::InvalidArgument(
                "n-gram length must be at least 1".into(),
            ));
        }
        if min_n > max_n {
            return Err(GeoError::InvalidArgument(format!(
                "n-gram range {min_n}:{max_n} has min greater than max"
            )));
        }
        if max_n > Self::MAX_N {
            return Err(GeoError::InvalidArgument(format!(
                "n-gram length {max_n} exceeds the cap of {}",
                Self::MAX_N
            )));
        }
        Ok(Self { min_n, max_n })
    }

    pub fn min_n(&self) -> usize {
        self.min_n
    }

    pub fn max_n(&self) -> usize {
        self.max_n
    }

    pub fn lengths(&self) -> std::ops::RangeInclusive<usize> {
        self.min_n..=self.max_n
    }

    pub fn width(&self) -> usize {
        self.max_n - self.min_n + 1
    }
}

impl Default for NGramRange {
    fn default() -> Self {
        Self { min_n: 3, max_n: 5 }
    }
}

impl fmt::Display for NGramRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.min_n, self.max_n)
    }
}

impl FromStr for NGramRange {
    type Err = GeoError;

    /// Parses `MIN:MAX`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s.split_once(':').ok_or_else(|| {
            GeoError::InvalidArgument(format!("n-gram range '{s}' is not MIN:MAX"))
        })?;
        let parse = |v: &str| {
            v.trim().parse::<usize>().map_err(|_| {
                GeoError::InvalidArgument(format!("n-gram range '{s}' is not MIN:MAX"))
            })
        };
        NGramRange::new(parse(a)?, parse(b)?)
    }
}

/// Identifier of an n-gram: FNV-1a over its UTF-8 bytes followed by a
/// splitmix64 finalizer. Stable across platforms and runs.
pub fn ngram_id(gram: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in gram.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_parsing() {
        assert_eq!(
            "3:5".parse::<NGramRange>().unwrap(),
            NGramRange::new(3, 5).unwrap()
        );
        assert!("5:3".parse::<NGramRange>().is_err());
        assert!("0:3".parse::<NGramRange>().is_err());
        assert!("3:17".parse::<NGramRange>().is_err());
        assert!("3-5".parse::<NGramRange>().is_err());
        assert_eq!(NGramRange::default().to_string(), "3:5");
    }

    #[test]
    fn ids_are_stable() {
        assert_eq!(ngram_id("abc"), ngram_id("abc"));
        assert_ne!(ngram_id("abc"), ngram_id("abd"));
        assert_ne!(ngram_id("ü"), ngram_id("u"));
    }
}
