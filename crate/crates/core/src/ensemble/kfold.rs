use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::PredictionSet;
use crate::corpus::{Coordinate, Corpus, GeoPoint};
use crate::error::{GeoError, Result};
use crate::geo_metrics::centroid_baseline;
use crate::nu_svr::{predict_svr, train_nu_svr, StringKernelSvr};
use crate::string_kernel::gram_matrix;
use crate::PerCoordinate;

/// A base model that can be refit on a subset of the training corpus.
pub trait BaseTrainer: Sync {
    fn name(&self) -> &str;

    /// Fits on `train` and predicts every post of `target`, in order.
    fn fit_predict(&self, train: &Corpus, target: &Corpus) -> Result<Vec<GeoPoint>>;

    /// Out-of-fold predictions in corpus order, where `fold[i] < k` is the
    /// fold of post `i`. The default refits from scratch on each fold in
    /// parallel; implementations may share work across folds.
    fn out_of_fold(&self, corpus: &Corpus, fold: &[usize], k: usize) -> Result<Vec<GeoPoint>> {
        let per_fold: Vec<(Vec<usize>, Vec<GeoPoint>)> = (0..k)
            .into_par_iter()
            .map(|f| {
                let (held, kept) = fold_members(fold, f);
                self.fit_predict(&corpus.select(&kept), &corpus.select(&held))
                    .map(|p| (held, p))
                    .map_err(|e| fold_error(f, e))
            })
            .collect::<Result<_>>()?;
        Ok(scatter(corpus.len(), per_fold))
    }
}

fn fold_members(fold: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    (0..fold.len()).partition(|&i| fold[i] == f)
}

fn fold_error(fold: usize, e: GeoError) -> GeoError {
    GeoError::Fold {
        fold,
        source: Box::new(e),
    }
}

fn scatter(n: usize, per_fold: Vec<(Vec<usize>, Vec<GeoPoint>)>) -> Vec<GeoPoint> {
    let mut points: Vec<Option<GeoPoint>> = vec![None; n];
    for (held, preds) in per_fold {
        for (i, p) in held.into_iter().zip(preds) {
            points[i] = Some(p);
        }
    }
    points
        .into_iter()
        .map(|p| p.expect("every position is held out once"))
        .collect()
}

/// String-kernel ν-SVR as a base model.
#[derive(Debug, Clone)]
pub struct SvrBaseTrainer {
    pub name: String,
    pub model: StringKernelSvr,
}

impl BaseTrainer for SvrBaseTrainer {
    fn name(&self) -> &str {
        &self.name
    }

    fn fit_predict(&self, train: &Corpus, target: &Corpus) -> Result<Vec<GeoPoint>> {
        self.model.fit(train)?.predict(target)
    }

    /// Computes the kernel over the whole corpus once; every fold's Gram and
    /// cross matrices are slices of it. Normalization only involves the
    /// self-similarities, so the slices equal freshly computed matrices.
    fn out_of_fold(&self, corpus: &Corpus, fold: &[usize], k: usize) -> Result<Vec<GeoPoint>> {
        let full = gram_matrix(corpus, self.model.range, self.model.normalize)?;
        let targets = PerCoordinate {
            lat: corpus.targets(Coordinate::Lat)?,
            lon: corpus.targets(Coordinate::Lon)?,
        };
        let per_fold: Vec<(Vec<usize>, Vec<GeoPoint>)> = (0..k)
            .into_par_iter()
            .map(|f| {
                let (held, kept) = fold_members(fold, f);
                let run = || -> Result<Vec<GeoPoint>> {
                    let gram = full.submatrix(&kept, &kept);
                    let cross = full.submatrix(&held, &kept);
                    let mut out = Vec::with_capacity(2);
                    for coord in Coordinate::BOTH {
                        let y: Vec<f64> = kept.iter().map(|&i| targets.get(coord)[i]).collect();
                        let model = train_nu_svr(&gram, &y, self.model.params.get(coord), coord)?;
                        out.push(predict_svr(&model, &cross)?);
                    }
                    out[0]
                        .iter()
                        .zip(&out[1])
                        .map(|(&lat, &lon)| GeoPoint::from_regression(lat, lon))
                        .collect()
                };
                run().map(|p| (held, p)).map_err(|e| fold_error(f, e))
            })
            .collect::<Result<_>>()?;
        Ok(scatter(corpus.len(), per_fold))
    }
}

/// Predicts the coordinate-wise median of the training locations.
#[derive(Debug, Clone, Copy, Default)]
pub struct CentroidTrainer;

impl BaseTrainer for CentroidTrainer {
    fn name(&self) -> &str {
        "baseline"
    }

    fn fit_predict(&self, train: &Corpus, target: &Corpus) -> Result<Vec<GeoPoint>> {
        let p = centroid_baseline(train)?;
        Ok(vec![p; target.len()])
    }
}

/// Fold index of each of `n` positions: positions are shuffled with `seed`
/// and dealt round-robin into `k` folds.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (rank, &pos) in order.iter().enumerate() {
        fold[pos] = rank % k;
    }
    fold
}

/// Out-of-fold predictions: each post is predicted by a model that never saw
/// it. Folds are trained in parallel.
pub fn kfold_base_predictions(
    corpus: &Corpus,
    k: usize,
    trainer: &dyn BaseTrainer,
    seed: u64,
) -> Result<PredictionSet> {
    if k < 2 {
        return Err(GeoError::InvalidArgument("k-fold needs k >= 2".into()));
    }
    if corpus.len() < k {
        return Err(GeoError::InvalidArgument(format!(
            "{k} folds need at least {k} posts, corpus has {}",
            corpus.len()
        )));
    }
    let fold = fold_assignment(corpus.len(), k, seed);
    let points = trainer.out_of_fold(corpus, &fold, k)?;
    PredictionSet::from_points(trainer.name(), &corpus.ids(), points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SyntheticSpec};

    #[test]
    fn folds_are_balanced_and_seeded() {
        let f = fold_assignment(23, 5, 7);
        let mut counts = [0; 5];
        for &x in &f {
            counts[x] += 1;
        }
        assert_eq!(counts, [5, 5, 5, 4, 4]);
        assert_eq!(f, fold_assignment(23, 5, 7));
        assert_ne!(f, fold_assignment(23, 5, 8));
    }

    #[test]
    fn out_of_fold_baseline() {
        let c = generate_synthetic(&SyntheticSpec {
            n_regions: 2,
            posts_per_region: 10,
            ..Default::default()
        })
        .unwrap();
        let p = kfold_base_predictions(&c, 4, &CentroidTrainer, 3).unwrap();
        assert_eq!(p.len(), 20);
        assert_eq!(p.model_name(), "baseline");
        let ids: Vec<u64> = p.entries().iter().map(|(id, _)| *id).collect();
        assert_eq!(ids, c.ids());
        assert!(kfold_base_predictions(&c, 1, &CentroidTrainer, 3).is_err());
    }

    #[test]
    fn shared_kernel_matches_refitting() {
        let c = generate_synthetic(&SyntheticSpec {
            n_regions: 3,
            posts_per_region: 10,
            ..Default::default()
        })
        .unwrap();
        let svr = SvrBaseTrainer {
            name: "svr".into(),
            model: StringKernelSvr::default(),
        };
        let fold = fold_assignment(c.len(), 3, 5);
        let fast = svr.out_of_fold(&c, &fold, 3).unwrap();
        let per_fold = (0..3)
            .map(|f| {
                let (held, kept) = fold_members(&fold, f);
                let p = svr.fit_predict(&c.select(&kept), &c.select(&held)).unwrap();
                (held, p)
            })
            .collect();
        assert_eq!(fast, scatter(c.len(), per_fold));
    }

    #[test]
    fn leave_one_out_and_constant_targets() {
        let text: String = (0..10)
            .map(|i| format!("46.5\t7.25\tpost number {i}\n"))
            .collect();
        let c = crate::corpus::parse_corpus(&text, crate::corpus::CorpusRole::Train).unwrap();
        let svr = SvrBaseTrainer {
            name: "svr".into(),
            model: StringKernelSvr::default(),
        };
        let p = kfold_base_predictions(&c, 10, &svr, 1).unwrap();
        assert_eq!(p.len(), 10);
        for (_, q) in p.entries() {
            assert!((q.lat() - 46.5).abs() < 1e-9 && (q.lon() - 7.25).abs() < 1e-9);
        }
    }

    struct Failing;
    impl BaseTrainer for Failing {
        fn name(&self) -> &str {
            "failing"
        }
        fn fit_predict(&self, _: &Corpus, _: &Corpus) -> Result<Vec<GeoPoint>> {
            Err(GeoError::InvalidData("boom".into()))
        }
    }

    #[test]
    fn errors_carry_fold() {
        let c = generate_synthetic(&SyntheticSpec {
            n_regions: 2,
            posts_per_region: 5,
            ..Default::default()
        })
        .unwrap();
        let err = kfold_base_predictions(&c, 3, &Failing, 0).unwrap_err();
        assert!(matches!(err, GeoError::Fold { .. }), "{err}");
    }
}
