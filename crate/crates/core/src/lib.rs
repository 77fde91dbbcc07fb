//! # geostack
//!
//! Geolocation of short social-media texts framed as a double regression
//! (latitude, longitude). The pipeline:
//!
//! 1. [`corpus`]: the tab-separated corpus format, splitting, and a synthetic
//!    generator standing in for non-redistributable data.
//! 2. [`string_kernel`]: blended presence-bits string kernels over character
//!    n-grams, computed as dense Gram and cross matrices.
//! 3. [`nu_svr`]: a ν-SVR dual solver over precomputed kernels, one model per
//!    coordinate, plus grid search.
//! 4. [`ensemble`]: prediction-set interchange, exact-greedy gradient boosted
//!    trees, and stacking of base-model predictions.
//! 5. [`geo_metrics`]: haversine distances and median/mean/AUC summaries.
//!
//! The [`cli`] module drives these as resumable on-disk stages.

pub mod cli;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod geo_metrics;
pub mod nu_svr;
pub mod string_kernel;

pub use corpus::{Coordinate, Corpus, CorpusRole, GeoPoint, Post};
pub use error::{GeoError, Result};

/// Pair of per-coordinate values, e.g. the latitude and longitude models.
#[derive(Debug, Clone, PartialEq)]
pub struct PerCoordinate<T> {
    pub lat: T,
    pub lon: T,
}

impl<T> PerCoordinate<T> {
    pub fn get(&self, coord: Coordinate) -> &T {
        match coord {
            Coordinate::Lat => &self.lat,
            Coordinate::Lon => &self.lon,
        }
    }

    pub fn map<U>(self, mut f: impl FnMut(Coordinate, T) -> U) -> PerCoordinate<U> {
        PerCoordinate {
            lat: f(Coordinate::Lat, self.lat),
            lon: f(Coordinate::Lon, self.lon),
        }
    }
}
