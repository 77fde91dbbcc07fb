use super::gbt::{predict_gbt, train_gbt, GbtModel, GbtParams};
use super::{assemble_meta_features, PredictionSet};
use crate::corpus::{Coordinate, Corpus, GeoPoint};
use crate::error::{GeoError, Result};
use crate::PerCoordinate;

/// Name given to the stacked prediction set.
pub const ENSEMBLE_MODEL_NAME: &str = "ensemble";

/// One booster per coordinate, both reading every base-model column.
#[derive(Debug, Clone, PartialEq)]
pub struct StackingModel {
    pub boosters: PerCoordinate<GbtModel>,
}

impl StackingModel {
    /// Base models the booster expects, sorted by name.
    pub fn base_models(&self) -> Vec<&str> {
        self.boosters
            .lat
            .feature_names
            .iter()
            .filter_map(|c| c.strip_suffix(".lat"))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("stacking-model v1\n");
        for coord in Coordinate::BOTH {
            s.push_str(&format!("begin {coord}\n"));
            s.push_str(&self.boosters.get(coord).to_text());
            s.push_str(&format!("end {coord}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("stacking-model v1") {
            return Err(GeoError::parse(1, "not a stacking-model v1 file"));
        }
        let mut read = |coord: Coordinate| -> Result<GbtModel> {
            if lines.next() != Some(&format!("begin {coord}")) {
                return Err(GeoError::InvalidData(format!("missing '{coord}' booster")));
            }
            let end = format!("end {coord}");
            let mut body = String::new();
            for line in lines.by_ref() {
                if line == end {
                    return GbtModel::from_text(&body);
                }
                body.push_str(line);
                body.push('\n');
            }
            Err(GeoError::InvalidData(format!(
                "unterminated '{coord}' booster"
            )))
        };
        let lat = read(Coordinate::Lat)?;
        let lon = read(Coordinate::Lon)?;
        if lat.feature_names != lon.feature_names {
            return Err(GeoError::InvalidData(
                "boosters disagree on feature columns".into(),
            ));
        }
        Ok(Self {
            boosters: PerCoordinate { lat, lon },
        })
    }
}

/// Trains the meta-learner on base predictions for the labeled `corpus`.
pub fn train_stacking(
    corpus: &Corpus,
    base: &[PredictionSet],
    params: &PerCoordinate<GbtParams>,
) -> Result<StackingModel> {
    let x = assemble_meta_features(base, corpus)?;
    let lat = train_gbt(&x, &corpus.targets(Coordinate::Lat)?, &params.lat)?;
    let lon = train_gbt(&x, &corpus.targets(Coordinate::Lon)?, &params.lon)?;
    Ok(StackingModel {
        boosters: PerCoordinate { lat, lon },
    })
}

/// Combines base predictions for every post of `corpus` into a prediction
/// set named [`ENSEMBLE_MODEL_NAME`].
pub fn predict_stacking(
    model: &StackingModel,
    base: &[PredictionSet],
    corpus: &Corpus,
) -> Result<PredictionSet> {
    let x = assemble_meta_features(base, corpus)?;
    let lat = predict_gbt(&model.boosters.lat, &x)?;
    let lon = predict_gbt(&model.boosters.lon, &x)?;
    let points = lat
        .into_iter()
        .zip(lon)
        .map(|(a, b)| GeoPoint::from_regression(a, b))
        .collect::<Result<Vec<_>>>()?;
    PredictionSet::from_points(ENSEMBLE_MODEL_NAME, &corpus.ids(), points)
}
