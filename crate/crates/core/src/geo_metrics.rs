//! Great-circle distances and the aggregate scores used to rank predictions.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::corpus::{Corpus, GeoPoint};
use crate::ensemble::PredictionSet;
use crate::error::{GeoError, Result};

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Haversine distance on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat().to_radians(), b.lat().to_radians());
    let dphi = (b.lat() - a.lat()).to_radians();
    let dlambda = (b.lon() - a.lon()).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Median with the midpoint convention for even lengths; sorts in place.
/// Returns NaN for an empty slice.
pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceReport {
    /// `(post id, km)` in corpus order.
    pub per_post: Vec<(u64, f64)>,
    pub median_km: f64,
    pub mean_km: f64,
    /// Trapezoidal area under the ascending sorted-distance curve, with the
    /// post rank as the x axis (km·posts).
    pub auc: f64,
}

impl DistanceReport {
    pub fn from_distances(per_post: Vec<(u64, f64)>) -> Result<Self> {
        if per_post.is_empty() {
            return Err(GeoError::InvalidData("no labeled posts to evaluate".into()));
        }
        let mut sorted: Vec<f64> = per_post.iter().map(|(_, d)| *d).collect();
        let median_km = median(&mut sorted);
        // Summed in sorted order so the result does not depend on post order.
        let mean_km = sorted.iter().sum::<f64>() / sorted.len() as f64;
        let auc = sorted.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum();
        Ok(Self {
            per_post,
            median_km,
            mean_km,
            auc,
        })
    }

    pub fn sorted_curve(&self) -> Vec<f64> {
        let mut d: Vec<f64> = self.per_post.iter().map(|(_, d)| *d).collect();
        d.sort_by(f64::total_cmp);
        d
    }

    /// `median_km=…`, `mean_km=…`, `auc=…` lines.
    pub fn summary_text(&self) -> String {
        format!(
            "median_km={}\nmean_km={}\nauc={}\n",
            self.median_km, self.mean_km, self.auc
        )
    }

    pub fn per_post_tsv(&self) -> String {
        let mut s = String::new();
        for (id, d) in &self.per_post {
            let _ = writeln!(s, "{id}\t{d}");
        }
        s
    }

    /// Sorted curve as `rank<TAB>distance_km`.
    pub fn plot_tsv(&self) -> String {
        let mut s = String::new();
        for (i, d) in self.sorted_curve().iter().enumerate() {
            let _ = writeln!(s, "{i}\t{d}");
        }
        s
    }
}

/// Scores `pred` against every labeled post of `truth`.
pub fn evaluate(pred: &PredictionSet, truth: &Corpus) -> Result<DistanceReport> {
    let by_id: HashMap<u64, GeoPoint> = pred.entries().iter().copied().collect();
    let mut per_post = Vec::with_capacity(truth.len());
    for post in truth.posts() {
        let Some(reference) = post.location else {
            continue;
        };
        let guess = by_id
            .get(&post.id)
            .ok_or_else(|| GeoError::MissingPrediction {
                model: pred.model_name().to_string(),
                id: post.id,
            })?;
        per_post.push((post.id, haversine_km(guess, &reference)));
    }
    DistanceReport::from_distances(per_post)
}

/// Coordinate-wise median of the training locations.
pub fn centroid_baseline(train: &Corpus) -> Result<GeoPoint> {
    if train.is_empty() {
        return Err(GeoError::InvalidData("baseline of an empty corpus".into()));
    }
    let locs = train.locations()?;
    let mut lats: Vec<f64> = locs.iter().map(|p| p.lat()).collect();
    let mut lons: Vec<f64> = locs.iter().map(|p| p.lon()).collect();
    GeoPoint::new(median(&mut lats), median(&mut lons))
}

/// The constant baseline applied to every post of `corpus`, named `baseline`.
pub fn baseline_predictions(train: &Corpus, corpus: &Corpus) -> Result<PredictionSet> {
    let point = centroid_baseline(train)?;
    PredictionSet::new(
        "baseline",
        corpus.posts().iter().map(|p| (p.id, point)).collect(),
    )
}
