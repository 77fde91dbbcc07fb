use rayon::prelude::*;

use super::{predict_svr, train_nu_svr, SvrModel, SvrParams};
use crate::corpus::{Coordinate, Corpus, GeoPoint};
use crate::error::Result;
use crate::string_kernel::{cross_from_index, gram_from_index, NGramIndex, NGramRange};
use crate::PerCoordinate;

/// Text-to-coordinates regressor: a string kernel feeding one ν-SVR per
/// coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct StringKernelSvr {
    pub range: NGramRange,
    pub normalize: bool,
    pub params: PerCoordinate<SvrParams>,
}

impl Default for StringKernelSvr {
    fn default() -> Self {
        Self {
            range: NGramRange::default(),
            normalize: true,
            params: PerCoordinate {
                lat: SvrParams::default(),
                lon: SvrParams::default(),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct FittedStringSvr {
    pub index: NGramIndex,
    pub train_ids: Vec<u64>,
    pub normalize: bool,
    pub models: PerCoordinate<SvrModel>,
}

impl StringKernelSvr {
    pub fn fit(&self, train: &Corpus) -> Result<FittedStringSvr> {
        let index = NGramIndex::build(&train.texts(), self.range);
        let ids = train.ids();
        let gram = gram_from_index(&index, &ids, self.normalize)?;
        let y_lat = train.targets(Coordinate::Lat)?;
        let y_lon = train.targets(Coordinate::Lon)?;
        let (lat, lon) = rayon::join(
            || train_nu_svr(&gram, &y_lat, &self.params.lat, Coordinate::Lat),
            || train_nu_svr(&gram, &y_lon, &self.params.lon, Coordinate::Lon),
        );
        Ok(FittedStringSvr {
            index,
            train_ids: ids,
            normalize: self.normalize,
            models: PerCoordinate {
                lat: lat?,
                lon: lon?,
            },
        })
    }
}

impl FittedStringSvr {
    pub fn predict(&self, corpus: &Corpus) -> Result<Vec<GeoPoint>> {
        let index = NGramIndex::build(&corpus.texts(), self.index.range());
        let kx = cross_from_index(
            &index,
            &corpus.ids(),
            &self.index,
            &self.train_ids,
            self.normalize,
        )?;
        let preds: Vec<Vec<f64>> = [&self.models.lat, &self.models.lon]
            .par_iter()
            .map(|m| predict_svr(m, &kx))
            .collect::<Result<_>>()?;
        preds[0]
            .iter()
            .zip(&preds[1])
            .map(|(&lat, &lon)| GeoPoint::from_regression(lat, lon))
            .collect()
    }

    pub fn converged(&self) -> bool {
        self.models.lat.converged && self.models.lon.converged
    }
}
