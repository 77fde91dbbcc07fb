use std::collections::HashMap;

use rayon::prelude::*;

use super::{ngram_id, NGramRange};
use crate::corpus::Corpus;

/// Per-post sorted, duplicate-free n-gram identifier sets, one per length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramIndex {
    range: NGramRange,
    // sets[post][n - min_n]
    sets: Vec<Vec<Vec<u64>>>,
}

/// Two distinct n-grams that hash to the same identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashCollision {
    pub id: u64,
    pub first: String,
    pub second: String,
}

impl NGramIndex {
    pub fn build<S: AsRef<str> + Sync>(texts: &[S], range: NGramRange) -> Self {
        let sets = texts
            .par_iter()
            .map(|t| post_sets(t.as_ref(), range))
            .collect();
        Self { range, sets }
    }

    /// Builds the index and reports every hash collision between distinct
    /// n-grams seen in `texts`.
    pub fn build_audited<S: AsRef<str> + Sync>(
        texts: &[S],
        range: NGramRange,
    ) -> (Self, Vec<HashCollision>) {
        (Self::build(texts, range), audit_collisions(texts, range))
    }

    pub fn range(&self) -> NGramRange {
        self.range
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Sorted identifiers of the distinct n-grams of length `n` in `post`.
    pub fn grams(&self, post: usize, n: usize) -> &[u64] {
        &self.sets[post][n - self.range.min_n()]
    }

    /// Kernel value of a post with itself: its distinct n-gram count.
    pub fn self_kernel(&self, post: usize) -> u64 {
        self.sets[post].iter().map(|s| s.len() as u64).sum()
    }

    /// Kernel between `x` in `self` and `y` in `other`. Both indexes must
    /// share one range.
    pub fn kernel_with(&self, x: usize, other: &NGramIndex, y: usize) -> u64 {
        debug_assert_eq!(self.range, other.range);
        self.sets[x]
            .iter()
            .zip(&other.sets[y])
            .map(|(a, b)| intersection_count(a, b))
            .sum()
    }
}

fn post_sets(text: &str, range: NGramRange) -> Vec<Vec<u64>> {
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let n_chars = bounds.len() - 1;
    range
        .lengths()
        .map(|n| {
            if n_chars < n {
                return Vec::new();
            }
            let mut ids: Vec<u64> = (0..=n_chars - n)
                .map(|i| ngram_id(&text[bounds[i]..bounds[i + n]]))
                .collect();
            ids.sort_unstable();
            ids.dedup();
            ids
        })
        .collect()
}

fn audit_collisions<S: AsRef<str>>(texts: &[S], range: NGramRange) -> Vec<HashCollision> {
    let mut seen: HashMap<u64, String> = HashMap::new();
    let mut collisions = Vec::new();
    for text in texts {
        let chars: Vec<char> = text.as_ref().chars().collect();
        for n in range.lengths() {
            for w in chars.windows(n) {
                let gram: String = w.iter().collect();
                let id = ngram_id(&gram);
                match seen.get(&id) {
                    Some(prev) if *prev != gram => collisions.push(HashCollision {
                        id,
                        first: prev.clone(),
                        second: gram,
                    }),
                    Some(_) => {}
                    None => {
                        seen.insert(id, gram);
                    }
                }
            }
        }
    }
    collisions
}

fn intersection_count(a: &[u64], b: &[u64]) -> u64 {
    // Branch-free merge: the comparison outcomes are unpredictable, so
    // advancing by the comparison results beats a three-way match.
    let (mut i, mut j, mut count) = (0, 0, 0u64);
    while i < a.len() && j < b.len() {
        let (x, y) = (a[i], b[j]);
        count += u64::from(x == y);
        i += usize::from(x <= y);
        j += usize::from(y <= x);
    }
    count
}

pub fn build_index(corpus: &Corpus, range: NGramRange) -> NGramIndex {
    NGramIndex::build(&corpus.texts(), range)
}

/// Number of distinct n-grams shared by posts `x` and `y`, summed over the
/// index's range.
pub fn presence_kernel(x: usize, y: usize, index: &NGramIndex) -> u64 {
    index.kernel_with(x, index, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn range(a: usize, b: usize) -> NGramRange {
        NGramRange::new(a, b).unwrap()
    }

    #[test]
    fn distinct_grams() {
        let idx = NGramIndex::build(&["abab", "ab", "grüezi"], range(2, 3));
        assert_eq!(idx.grams(0, 2).len(), 2);
        assert!(idx.grams(1, 3).is_empty());
        assert_eq!(idx.grams(2, 3).len(), 4);
        for p in 0..idx.len() {
            for n in 2..=3 {
                assert!(idx.grams(p, n).windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn kernel_examples() {
        let idx = NGramIndex::build(&["abc", "abd", "xyz"], range(2, 2));
        assert_eq!(presence_kernel(0, 1, &idx), 1);
        assert_eq!(presence_kernel(0, 2, &idx), 0);
        let idx = NGramIndex::build(&["abcdef"], range(3, 5));
        assert_eq!(presence_kernel(0, 0, &idx), 4 + 3 + 2);
        assert_eq!(idx.self_kernel(0), 9);
    }

    #[test]
    fn presence_not_count() {
        let idx = NGramIndex::build(&["aaaa", "aa"], range(2, 2));
        assert_eq!(presence_kernel(0, 1, &idx), 1);
        assert_eq!(presence_kernel(0, 0, &idx), 1);
    }

    #[test]
    fn audit_reports_nothing_for_small_inputs() {
        let (_, collisions) =
            NGramIndex::build_audited(&["grüezi mitenand", "hoi zäme"], range(1, 7));
        assert!(collisions.is_empty());
    }

    #[test]
    fn empty_text() {
        let idx = NGramIndex::build(&["", "abc"], range(1, 3));
        assert_eq!(idx.self_kernel(0), 0);
        assert_eq!(presence_kernel(0, 1, &idx), 0);
    }
}
