use std::collections::{HashMap, HashSet};

use super::PredictionSet;
use crate::corpus::Corpus;
use crate::error::{GeoError, Result};

/// Dense row-major feature matrix for the meta-learner.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaFeatures {
    rows: usize,
    column_names: Vec<String>,
    values: Vec<f64>,
    row_ids: Vec<u64>,
}

impl MetaFeatures {
    pub fn new(column_names: Vec<String>, values: Vec<f64>, row_ids: Vec<u64>) -> Result<Self> {
        let rows = row_ids.len();
        if values.len() != rows * column_names.len() {
            return Err(GeoError::DimensionMismatch(format!(
                "{} values for {rows} rows x {} columns",
                values.len(),
                column_names.len()
            )));
        }
        if column_names.is_empty() {
            return Err(GeoError::InvalidArgument(
                "meta-features need at least one column".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::InvalidData(
                "meta-features contain non-finite values".into(),
            ));
        }
        Ok(Self {
            rows,
            column_names,
            values,
            row_ids,
        })
    }

    /// Builds from row vectors with generated column names `f0, f1, …`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(GeoError::DimensionMismatch("ragged feature rows".into()));
        }
        Self::new(
            (0..cols).map(|c| format!("f{c}")).collect(),
            rows.concat(),
            (0..rows.len() as u64).collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols() + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.values[r * c..(r + 1) * c]
    }
}

/// Aligns prediction sets to `corpus` post order. Sets are ordered by model
/// name, so the column layout does not depend on argument order.
pub fn assemble_meta_features(sets: &[PredictionSet], corpus: &Corpus) -> Result<MetaFeatures> {
    if sets.is_empty() {
        return Err(GeoError::InvalidArgument(
            "stacking needs at least one prediction set".into(),
        ));
    }
    let mut ordered: Vec<&PredictionSet> = sets.iter().collect();
    ordered.sort_by(|a, b| a.model_name().cmp(b.model_name()));
    for w in ordered.windows(2) {
        if w[0].model_name() == w[1].model_name() {
            return Err(GeoError::InvalidArgument(format!(
                "duplicate model name '{}'",
                w[0].model_name()
            )));
        }
    }

    let corpus_ids: HashSet<u64> = corpus.posts().iter().map(|p| p.id).collect();
    let mut lookups = Vec::with_capacity(ordered.len());
    for set in &ordered {
        let map: HashMap<u64, _> = set.entries().iter().copied().collect();
        if let Some((id, _)) = set
            .entries()
            .iter()
            .find(|(id, _)| !corpus_ids.contains(id))
        {
            return Err(GeoError::InvalidData(format!(
                "model '{}' predicts id {id}, which is not in the corpus",
                set.model_name()
            )));
        }
        lookups.push(map);
    }

    let cols = 2 * ordered.len();
    let mut values = Vec::with_capacity(corpus.len() * cols);
    for post in corpus.posts() {
        for (set, map) in ordered.iter().zip(&lookups) {
            let p = map
                .get(&post.id)
                .ok_or_else(|| GeoError::MissingPrediction {
                    model: set.model_name().to_string(),
                    id: post.id,
                })?;
            values.push(p.lat());
            values.push(p.lon());
        }
    }
    let names = ordered
        .iter()
        .flat_map(|s| {
            [
                format!("{}.lat", s.model_name()),
                format!("{}.lon", s.model_name()),
            ]
        })
        .collect();
    MetaFeatures::new(names, values, corpus.ids())
}
