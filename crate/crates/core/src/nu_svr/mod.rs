//! ν-Support Vector Regression over precomputed kernel matrices.
//!
//! Scaling convention: each dual coefficient is bounded by `|β_i| ≤ C` and
//! their absolute sum by `C·ν·m`, so ν reads as a fraction of the `m` training
//! samples and C keeps its meaning as the training set grows. This is the
//! libsvm parametrization; the textbook form with box `C/m` is the same
//! problem with C scaled by `1/m`. One independent model is trained per
//! coordinate.

mod grid;
mod regressor;
mod solver;

use std::fmt::Write as _;

use crate::corpus::Coordinate;
use crate::error::{GeoError, Result};
use crate::string_kernel::KernelMatrix;

pub use grid::{grid_search_svr, GridCell, GridCriterion, GridSearchReport, SvrGrid};
pub use regressor::{FittedStringSvr, StringKernelSvr};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrParams {
    /// Regularization penalty.
    pub c: f64,
    /// Lower bound on the support-vector fraction, in (0, 1].
    pub nu: f64,
    /// KKT violation tolerance.
    pub tol: f64,
    /// Cap on sweeps; one sweep is `m` pair updates.
    pub max_passes: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            c: 10.0,
            nu: 0.5,
            tol: 1e-4,
            max_passes: 10_000,
        }
    }
}

impl SvrParams {
    pub fn new(c: f64, nu: f64) -> Self {
        Self {
            c,
            nu,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(GeoError::InvalidArgument(format!(
                "C must be positive, got {}",
                self.c
            )));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(GeoError::InvalidArgument(format!(
                "nu must lie in (0, 1], got {}",
                self.nu
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(GeoError::InvalidArgument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_passes == 0 {
            return Err(GeoError::InvalidArgument(
                "max_passes must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Trained ν-SVR for one coordinate: `f(x) = Σ_i β_i K(x, x_i) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub support_indices: Vec<usize>,
    pub target: Coordinate,
    pub params: SvrParams,
    /// Tube half-width implied by ν at the solution.
    pub epsilon: f64,
    /// False when `max_passes` ran out before the KKT tolerance was met.
    pub converged: bool,
    pub iterations: usize,
    /// [`KernelMatrix::column_fingerprint`] of the training Gram matrix.
    pub kernel_fingerprint: String,
    /// Dual objective per sweep; empty on reloaded models.
    pub objective_trace: Vec<f64>,
}

impl SvrModel {
    pub fn n_train(&self) -> usize {
        self.dual_coef.len()
    }

    pub fn dual_objective(&self, gram: &KernelMatrix, y: &[f64]) -> f64 {
        solver::dual_objective(gram, y, &self.dual_coef)
    }

    /// Checks that `kx` was computed against this model's training posts
    /// with the same normalization.
    pub fn verify_kernel(&self, kx: &KernelMatrix) -> Result<()> {
        if kx.cols() != self.n_train() {
            return Err(GeoError::DimensionMismatch(format!(
                "cross matrix has {} columns, model was trained on {} samples",
                kx.cols(),
                self.n_train()
            )));
        }
        let found = kx.column_fingerprint();
        if found != self.kernel_fingerprint {
            return Err(GeoError::FingerprintMismatch {
                what: "kernel columns".into(),
                expected: self.kernel_fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nu-svr-model v1");
        let _ = writeln!(s, "target={}", self.target);
        let _ = writeln!(s, "c={}", self.params.c);
        let _ = writeln!(s, "nu={}", self.params.nu);
        let _ = writeln!(s, "tol={}", self.params.tol);
        let _ = writeln!(s, "max_passes={}", self.params.max_passes);
        let _ = writeln!(s, "converged={}", self.converged);
        let _ = writeln!(s, "iterations={}", self.iterations);
        let _ = writeln!(s, "bias={}", self.bias);
        let _ = writeln!(s, "epsilon={}", self.epsilon);
        let _ = writeln!(s, "kernel_fingerprint={}", self.kernel_fingerprint);
        let _ = writeln!(s, "n_train={}", self.n_train());
        let _ = writeln!(s, "support={}", self.support_indices.len());
        for &i in &self.support_indices {
            let _ = writeln!(s, "{i}\t{}", self.dual_coef[i]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut next = |key: &str| -> Result<(usize, String)> {
            let (no, line) = lines.next().ok_or_else(|| {
                GeoError::InvalidData(format!("svr model truncated before '{key}'"))
            })?;
            if key.is_empty() {
                return Ok((no + 1, line.to_string()));
            }
            let value = line
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| GeoError::parse(no + 1, format!("expected '{key}='")))?;
            Ok((no + 1, value.to_string()))
        };
        fn num<T: std::str::FromStr>((no, v): (usize, String)) -> Result<T> {
            v.parse()
                .map_err(|_| GeoError::parse(no, format!("bad value '{v}'")))
        }
        let (no, header) = next("")?;
        if header != "nu-svr-model v1" {
            return Err(GeoError::parse(no, "not a nu-svr-model v1 file"));
        }
        let target: Coordinate = next("target")?.1.parse()?;
        let params = SvrParams {
            c: num(next("c")?)?,
            nu: num(next("nu")?)?,
            tol: num(next("tol")?)?,
            max_passes: num(next("max_passes")?)?,
        };
        let converged = num(next("converged")?)?;
        let iterations = num(next("iterations")?)?;
        let bias = num(next("bias")?)?;
        let epsilon = num(next("epsilon")?)?;
        let kernel_fingerprint = next("kernel_fingerprint")?.1;
        let n_train: usize = num(next("n_train")?)?;
        let n_support: usize = num(next("support")?)?;
        let mut dual_coef = vec![0.0; n_train];
        let mut support_indices = Vec::with_capacity(n_support);
        for _ in 0..n_support {
            let (no, line) = next("")?;
            let (i, v) = line
                .split_once('\t')
                .ok_or_else(|| GeoError::parse(no, "expected index<TAB>coefficient"))?;
            let i: usize = num((no, i.to_string()))?;
            if i >= n_train {
                return Err(GeoError::parse(no, "support index out of range"));
            }
            dual_coef[i] = num((no, v.to_string()))?;
            support_indices.push(i);
        }
        Ok(SvrModel {
            dual_coef,
            bias,
            support_indices,
            target,
            params,
            epsilon,
            converged,
            iterations,
            kernel_fingerprint,
            objective_trace: Vec::new(),
        })
    }
}

/// Trains a ν-SVR on a square training Gram matrix.
///
/// Reaching `max_passes` is not an error: the model comes back with
/// `converged == false`.
pub fn train_nu_svr(
    gram: &KernelMatrix,
    targets: &[f64],
    params: &SvrParams,
    target: Coordinate,
) -> Result<SvrModel> {
    params.validate()?;
    if gram.rows() != gram.cols() {
        return Err(GeoError::DimensionMismatch(format!(
            "training kernel must be square, got {}x{}",
            gram.rows(),
            gram.cols()
        )));
    }
    let m = gram.rows();
    if targets.len() != m {
        return Err(GeoError::DimensionMismatch(format!(
            "{} targets for a {m}x{m} kernel",
            targets.len()
        )));
    }
    if m < 2 {
        return Err(GeoError::InvalidArgument(
            "nu-SVR needs at least 2 training samples".into(),
        ));
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(GeoError::InvalidData("non-finite regression target".into()));
    }

    let out = solver::solve(
        gram,
        targets,
        params.c,
        params.nu,
        params.tol,
        params.max_passes,
    );
    let support_indices = out
        .beta
        .iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok(SvrModel {
        dual_coef: out.beta,
        bias: out.bias,
        support_indices,
        target,
        params: *params,
        epsilon: out.epsilon,
        converged: out.converged,
        iterations: out.iterations,
        kernel_fingerprint: gram.column_fingerprint(),
        objective_trace: out.objective_trace,
    })
}

/// Evaluates the decision function on every row of a test×train matrix.
pub fn predict_svr(model: &SvrModel, kx: &KernelMatrix) -> Result<Vec<f64>> {
    model.verify_kernel(kx)?;
    Ok((0..kx.rows())
        .map(|r| {
            let row = kx.row(r);
            model.bias
                + model
                    .support_indices
                    .iter()
                    .map(|&j| model.dual_coef[j] * row[j])
                    .sum::<f64>()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SyntheticSpec};
    use crate::string_kernel::{gram_matrix, NGramRange};

    fn small_problem(seed: u64, per_region: usize) -> (KernelMatrix, Vec<f64>) {
        let c = generate_synthetic(&SyntheticSpec {
            n_regions: 3,
            posts_per_region: per_region,
            seed,
            ..Default::default()
        })
        .unwrap();
        let k = gram_matrix(&c, NGramRange::default(), true).unwrap();
        (k, c.targets(Coordinate::Lat).unwrap())
    }

    #[test]
    fn defaults() {
        let p = SvrParams::default();
        assert_eq!((p.c, p.nu, p.tol, p.max_passes), (10.0, 0.5, 1e-4, 10_000));
    }

    #[test]
    fn constant_targets_give_zero_coefficients() {
        let (k, y) = small_problem(3, 5);
        let y = vec![46.5; y.len()];
        let model = train_nu_svr(&k, &y, &SvrParams::default(), Coordinate::Lat).unwrap();
        assert!(model.dual_coef.iter().all(|b| *b == 0.0));
        assert!(model.support_indices.is_empty());
        assert!((model.bias - 46.5).abs() < 1e-12);
        let pred = predict_svr(&model, &k).unwrap();
        assert!(pred.iter().all(|p| (p - 46.5).abs() < 1e-12));
    }

    #[test]
    fn dual_feasibility_and_nu_property() {
        for seed in 0..5 {
            let (k, y) = small_problem(seed, 8);
            let m = y.len();
            for &(c, nu) in &[(10.0, 0.5), (1.0, 0.2), (100.0, 0.8)] {
                let p = SvrParams::new(c, nu);
                let model = train_nu_svr(&k, &y, &p, Coordinate::Lat).unwrap();
                assert!(model.converged);
                let sum: f64 = model.dual_coef.iter().sum();
                assert!(sum.abs() < p.tol, "sum {sum}");
                let abs_sum: f64 = model.dual_coef.iter().map(|b| b.abs()).sum();
                assert!(abs_sum <= c * nu * m as f64 + 1e-9);
                for b in &model.dual_coef {
                    assert!(b.abs() <= c + p.tol);
                }
                assert!(model.support_indices.len() as f64 >= nu * m as f64 - 2.0);
            }
        }
    }

    #[test]
    fn objective_is_monotone() {
        let (k, y) = small_problem(11, 15);
        let model = train_nu_svr(&k, &y, &SvrParams::default(), Coordinate::Lat).unwrap();
        for w in model.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0), "{w:?}");
        }
        let last = *model.objective_trace.last().unwrap();
        assert_eq!(last, model.dual_objective(&k, &y));
    }

    #[test]
    fn zero_row_predicts_bias() {
        let (k, y) = small_problem(4, 6);
        let model = train_nu_svr(&k, &y, &SvrParams::default(), Coordinate::Lat).unwrap();
        let zero =
            KernelMatrix::new(vec![0.0; k.cols()], vec![999], k.col_ids().to_vec(), true).unwrap();
        assert_eq!(predict_svr(&model, &zero).unwrap(), vec![model.bias]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (k, y) = small_problem(4, 4);
        let p = SvrParams::default();
        let rect = k.submatrix(&[0, 1], &[0, 1, 2]);
        assert!(train_nu_svr(&rect, &y[..2], &p, Coordinate::Lat).is_err());
        let mut bad = y.clone();
        bad[0] = f64::NAN;
        assert!(train_nu_svr(&k, &bad, &p, Coordinate::Lat).is_err());
        let one = k.submatrix(&[0], &[0]);
        assert!(train_nu_svr(&one, &y[..1], &p, Coordinate::Lat).is_err());
        assert!(train_nu_svr(&k, &y, &SvrParams::new(0.0, 0.5), Coordinate::Lat).is_err());
        assert!(train_nu_svr(&k, &y, &SvrParams::new(1.0, 1.5), Coordinate::Lat).is_err());

        let model = train_nu_svr(&k, &y, &p, Coordinate::Lat).unwrap();
        let narrow = k.submatrix(&[0], &[0, 1]);
        assert!(matches!(
            predict_svr(&model, &narrow),
            Err(GeoError::DimensionMismatch(_))
        ));
        let other = k.submatrix(&[0, 1], &(0..k.cols()).rev().collect::<Vec<_>>());
        assert!(matches!(
            predict_svr(&model, &other),
            Err(GeoError::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn max_passes_flags_non_convergence() {
        let (k, y) = small_problem(5, 10);
        let p = SvrParams {
            max_passes: 1,
            tol: 1e-12,
            ..Default::default()
        };
        let model = train_nu_svr(&k, &y, &p, Coordinate::Lat).unwrap();
        assert!(!model.converged);
        assert_eq!(model.iterations, y.len());
    }

    #[test]
    fn text_round_trip() {
        let (k, y) = small_problem(6, 6);
        let model = train_nu_svr(&k, &y, &SvrParams::default(), Coordinate::Lon).unwrap();
        let back = SvrModel::from_text(&model.to_text()).unwrap();
        assert_eq!(
            SvrModel {
                objective_trace: Vec::new(),
                ..model.clone()
            },
            back
        );
        assert_eq!(
            predict_svr(&back, &k).unwrap(),
            predict_svr(&model, &k).unwrap()
        );
    }
}
