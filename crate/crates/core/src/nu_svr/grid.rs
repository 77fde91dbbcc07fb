use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;

use super::{predict_svr, train_nu_svr, SvrParams};
use crate::corpus::{Coordinate, GeoPoint};
use crate::error::{GeoError, Result};
use crate::geo_metrics::{haversine_km, median};
use crate::string_kernel::KernelMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridCriterion {
    #[default]
    Mse,
    Mae,
    MedianKm,
}

impl fmt::Display for GridCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridCriterion::Mse => "mse",
            GridCriterion::Mae => "mae",
            GridCriterion::MedianKm => "median-km",
        })
    }
}

impl FromStr for GridCriterion {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(GridCriterion::Mse),
            "mae" => Ok(GridCriterion::Mae),
            "median-km" | "median_km" => Ok(GridCriterion::MedianKm),
            other => Err(GeoError::InvalidArgument(format!(
                "unknown criterion '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrGrid {
    pub c_values: Vec<f64>,
    pub nu_values: Vec<f64>,
    /// Tolerance and pass cap applied to every cell.
    pub base: SvrParams,
}

impl Default for SvrGrid {
    /// C over the nine decades 1e-4..1e4, ν over 0.1..1.0 in steps of 0.1.
    fn default() -> Self {
        Self {
            c_values: (-4..=4).map(|e| 10f64.powi(e)).collect(),
            nu_values: (1..=10).map(|i| i as f64 / 10.0).collect(),
            base: SvrParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub c: f64,
    pub nu: f64,
    pub mae: f64,
    pub mse: f64,
    /// Only when dev reference points were supplied.
    pub median_km: Option<f64>,
    pub converged: bool,
}

impl GridCell {
    fn score(&self, criterion: GridCriterion) -> f64 {
        match criterion {
            GridCriterion::Mse => self.mse,
            GridCriterion::Mae => self.mae,
            GridCriterion::MedianKm => self.median_km.unwrap_or(f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchReport {
    pub target: Coordinate,
    pub criterion: GridCriterion,
    /// Cells in C-major, ν-minor order.
    pub cells: Vec<GridCell>,
    pub best_params: SvrParams,
}

impl GridSearchReport {
    pub fn best_cell(&self) -> &GridCell {
        self.cells
            .iter()
            .find(|c| c.c == self.best_params.c && c.nu == self.best_params.nu)
            .expect("best cell is part of the report")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "target={}", self.target);
        let _ = writeln!(s, "criterion={}", self.criterion);
        let _ = writeln!(s, "best_c={}", self.best_params.c);
        let _ = writeln!(s, "best_nu={}", self.best_params.nu);
        let _ = writeln!(s, "c\tnu\tmae\tmse\tmedian_km\tconverged");
        for cell in &self.cells {
            let med = cell
                .median_km
                .map_or_else(|| "-".to_string(), |v| v.to_string());
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                cell.c, cell.nu, cell.mae, cell.mse, med, cell.converged
            );
        }
        s
    }
}

/// Trains one model per (C, ν) cell on `k_train` and scores it on `k_dev`.
///
/// With `dev_truth`, each cell also gets a median distance in km computed by
/// pairing the predicted coordinate with the true other coordinate, which
/// isolates this coordinate's contribution. The best cell minimizes the
/// criterion; ties go to the smaller C, then the smaller ν.
#[allow(clippy::too_many_arguments)]
pub fn grid_search_svr(
    k_train: &KernelMatrix,
    k_dev: &KernelMatrix,
    y_train: &[f64],
    y_dev: &[f64],
    target: Coordinate,
    grid: &SvrGrid,
    criterion: GridCriterion,
    dev_truth: Option<&[GeoPoint]>,
) -> Result<GridSearchReport> {
    if grid.c_values.is_empty() || grid.nu_values.is_empty() {
        return Err(GeoError::InvalidArgument(
            "grid search needs non-empty grids".into(),
        ));
    }
    if y_dev.len() != k_dev.rows() || y_dev.is_empty() {
        return Err(GeoError::DimensionMismatch(format!(
            "{} dev targets for {} dev rows",
            y_dev.len(),
            k_dev.rows()
        )));
    }
    if let Some(t) = dev_truth {
        if t.len() != y_dev.len() {
            return Err(GeoError::DimensionMismatch(
                "dev truth length differs from targets".into(),
            ));
        }
    } else if criterion == GridCriterion::MedianKm {
        return Err(GeoError::InvalidArgument(
            "median-km criterion needs dev reference points".into(),
        ));
    }

    let combos: Vec<(f64, f64)> = grid
        .c_values
        .iter()
        .flat_map(|&c| grid.nu_values.iter().map(move |&nu| (c, nu)))
        .collect();

    let cells = combos
        .par_iter()
        .map(|&(c, nu)| {
            let params = SvrParams { c, nu, ..grid.base };
            let tag = |e: GeoError| GeoError::GridCell {
                c,
                nu,
                source: Box::new(e),
            };
            let model = train_nu_svr(k_train, y_train, &params, target).map_err(tag)?;
            let pred = predict_svr(&model, k_dev).map_err(tag)?;
            let n = y_dev.len() as f64;
            let mae = pred
                .iter()
                .zip(y_dev)
                .map(|(p, y)| (p - y).abs())
                .sum::<f64>()
                / n;
            let mse = pred
                .iter()
                .zip(y_dev)
                .map(|(p, y)| (p - y).powi(2))
                .sum::<f64>()
                / n;
            let median_km = dev_truth
                .map(|truth| -> Result<f64> {
                    let mut d = Vec::with_capacity(truth.len());
                    for (p, t) in pred.iter().zip(truth) {
                        let guess = match target {
                            Coordinate::Lat => GeoPoint::from_regression(*p, t.lon()),
                            Coordinate::Lon => GeoPoint::from_regression(t.lat(), *p),
                        }
                        .map_err(tag)?;
                        d.push(haversine_km(&guess, t));
                    }
                    Ok(median(&mut d))
                })
                .transpose()?;
            Ok(GridCell {
                c,
                nu,
                mae,
                mse,
                median_km,
                converged: model.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = cells
        .iter()
        .min_by(|a, b| {
            a.score(criterion)
                .total_cmp(&b.score(criterion))
                .then(a.c.total_cmp(&b.c))
                .then(a.nu.total_cmp(&b.nu))
        })
        .expect("non-empty grid");
    let best_params = SvrParams {
        c: best.c,
        nu: best.nu,
        ..grid.base
    };
    Ok(GridSearchReport {
        target,
        criterion,
        cells,
        best_params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, split_corpus, SyntheticSpec};
    use crate::string_kernel::{cross_matrix, gram_matrix, NGramRange};

    #[test]
    fn default_grid_has_ninety_cells() {
        let g = SvrGrid::default();
        assert_eq!(g.c_values.len() * g.nu_values.len(), 90);
        assert_eq!(g.c_values[0], 1e-4);
        assert_eq!(g.c_values[8], 1e4);
        assert_eq!(g.nu_values[2], 0.3);
        assert_eq!(g.nu_values[9], 1.0);
    }

    #[test]
    fn singleton_and_small_grid() {
        let c = generate_synthetic(&SyntheticSpec {
            n_regions: 3,
            posts_per_region: 12,
            seed: 9,
            ..Default::default()
        })
        .unwrap();
        let (train, dev) = split_corpus(&c, 0.75, 1).unwrap();
        let r = NGramRange::default();
        let kt = gram_matrix(&train, r, true).unwrap();
        let kd = cross_matrix(&dev, &train, r, true).unwrap();
        let yt = train.targets(Coordinate::Lat).unwrap();
        let yd = dev.targets(Coordinate::Lat).unwrap();
        let truth = dev.locations().unwrap();

        let single = SvrGrid {
            c_values: vec![10.0],
            nu_values: vec![0.5],
            ..Default::default()
        };
        let rep = grid_search_svr(
            &kt,
            &kd,
            &yt,
            &yd,
            Coordinate::Lat,
            &single,
            GridCriterion::Mse,
            None,
        )
        .unwrap();
        assert_eq!(rep.cells.len(), 1);
        assert_eq!((rep.best_params.c, rep.best_params.nu), (10.0, 0.5));

        let grid = SvrGrid {
            c_values: vec![0.1, 1.0, 10.0, 100.0],
            nu_values: vec![0.2, 0.5, 0.8],
            ..Default::default()
        };
        for crit in [
            GridCriterion::Mse,
            GridCriterion::Mae,
            GridCriterion::MedianKm,
        ] {
            let rep = grid_search_svr(
                &kt,
                &kd,
                &yt,
                &yd,
                Coordinate::Lat,
                &grid,
                crit,
                Some(&truth),
            )
            .unwrap();
            assert_eq!(rep.cells.len(), 12);
            let best = rep.best_cell().score(crit);
            assert!(rep.cells.iter().all(|c| best <= c.score(crit)));
        }
        let empty = SvrGrid {
            c_values: vec![],
            ..Default::default()
        };
        assert!(grid_search_svr(
            &kt,
            &kd,
            &yt,
            &yd,
            Coordinate::Lat,
            &empty,
            GridCriterion::Mse,
            None
        )
        .is_err());
    }
}
