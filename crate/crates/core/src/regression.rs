//! Least squares and LASSO with BIC model selection.
//!
//! The LASSO solves `min_b 1/(2T) ||y - ȳ - Xs b||² + λ ||b||₁` on
//! standardized regressors `Xs` by cyclic coordinate descent in covariance
//! form, warm-started along a geometric λ path, and keeps the path point with
//! the lowest Gaussian BIC `T ln(rss/T) + k ln T`.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares solution with the smallest norm.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    pub rss: f64,
}

/// Minimum-norm least squares; rank deficiency is handled by truncating
/// singular values below `max(rows, cols) · ε · σ_max`.
pub fn ols(design: &DMatrix<f64>, target: &DVector<f64>) -> Result<OlsFit> {
    if design.nrows() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "design has {} rows, target has {}",
            design.nrows(),
            target.len()
        )));
    }
    if design.ncols() == 0 {
        return Ok(OlsFit {
            coefficients: DVector::zeros(0),
            rss: target.norm_squared(),
        });
    }
    let svd = SVD::new(design.clone(), true, true);
    let smax = svd.singular_values.max();
    let eps = smax * design.nrows().max(design.ncols()) as f64 * f64::EPSILON;
    let coefficients = if smax == 0.0 {
        DVector::zeros(design.ncols())
    } else {
        svd.solve(target, eps).map_err(|e| Error::NonFinite(e.to_string()))?
    };
    let rss = (target - design * &coefficients).norm_squared();
    Ok(OlsFit { coefficients, rss })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    /// Number of λ values on the path.
    pub path_size: usize,
    /// Smallest λ as a fraction of λ_max.
    pub floor: f64,
    /// Stop when the largest standardized coefficient change in a sweep is
    /// below this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            path_size: 30,
            floor: 1e-3,
            tol: 1e-7,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    /// Coefficients on the original regressor scale.
    pub coefficients: DVector<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub bic: f64,
    pub rss: f64,
}

impl LassoFit {
    pub fn nonzero(&self) -> usize {
        self.coefficients.iter().filter(|&&c| c != 0.0).count()
    }
}

#[inline]
pub(crate) fn soft_threshold(rho: f64, lambda: f64) -> f64 {
    rho.signum() * (rho.abs() - lambda).max(0.0)
}

pub(crate) fn bic(t: usize, rss: f64, k: usize) -> f64 {
    let t = t as f64;
    t * (rss.max(f64::MIN_POSITIVE) / t).ln() + k as f64 * t.ln()
}

/// Covariance-form coordinate descent on unit-variance regressors.
///
/// `gram = XsᵀXs / T`, `corr = Xsᵀ yc / T`; `beta` is updated in place and
/// `q = gram · beta` is kept in sync. Returns the number of sweeps.
pub(crate) fn coordinate_descent(
    gram: &DMatrix<f64>,
    corr: &DVector<f64>,
    lambda: f64,
    beta: &mut DVector<f64>,
    q: &mut DVector<f64>,
    tol: f64,
    max_sweeps: usize,
) -> usize {
    let p = corr.len();
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..p {
            let gjj = gram[(j, j)];
            if gjj == 0.0 {
                continue;
            }
            let old = beta[j];
            let rho = corr[j] - q[j] + gjj * old;
            let new = soft_threshold(rho, lambda) / gjj;
            let delta = new - old;
            if delta != 0.0 {
                beta[j] = new;
                q.axpy(delta, &gram.column(j), 1.0);
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < tol {
            break;
        }
    }
    sweeps
}

struct Standardized {
    means: Vec<f64>,
    scales: Vec<f64>,
    /// Columns with nonzero variance, in design order.
    active: Vec<usize>,
    xs: DMatrix<f64>,
    y_mean: f64,
    yc: DVector<f64>,
}

fn standardize_design(design: &DMatrix<f64>, target: &DVector<f64>) -> Standardized {
    let t = design.nrows() as f64;
    let mut means = Vec::with_capacity(design.ncols());
    let mut scales = Vec::with_capacity(design.ncols());
    let mut active = Vec::new();
    for (j, col) in design.column_iter().enumerate() {
        let m = col.sum() / t;
        let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / t).sqrt();
        means.push(m);
        scales.push(sd);
        if sd > 0.0 && col.iter().any(|&v| v != col[0]) {
            active.push(j);
        }
    }
    let xs = DMatrix::from_fn(design.nrows(), active.len(), |r, c| {
        let j = active[c];
        (design[(r, j)] - means[j]) / scales[j]
    });
    let y_mean = target.sum() / t;
    let yc = target.map(|v| v - y_mean);
    Standardized {
        means,
        scales,
        active,
        xs,
        y_mean,
        yc,
    }
}

/// Fit the whole λ path, largest λ first.
pub fn lasso_path(design: &DMatrix<f64>, target: &DVector<f64>, cfg: &LassoConfig) -> Result<Vec<LassoFit>> {
    if design.nrows() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "design has {} rows, target has {}",
            design.nrows(),
            target.len()
        )));
    }
    if cfg.path_size < 2 || !(cfg.floor > 0.0 && cfg.floor < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "lasso path needs path_size >= 2 and floor in (0, 1), got {} and {}",
            cfg.path_size, cfg.floor
        )));
    }
    if design.iter().chain(target.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lasso input".into()));
    }
    let n = design.nrows();
    if n == 0 {
        return Err(Error::InsufficientSamples { needed: 0, got: 0 });
    }
    let tf = n as f64;
    let std = standardize_design(design, target);
    let p = std.active.len();
    let gram = std.xs.tr_mul(&std.xs) / tf;
    let corr = std.xs.tr_mul(&std.yc) / tf;
    let lambda_max = corr.amax();

    let mut beta = DVector::zeros(p);
    let mut q = DVector::zeros(p);
    let mut path = Vec::with_capacity(cfg.path_size);
    for k in 0..cfg.path_size {
        let lambda = lambda_max * cfg.floor.powf(k as f64 / (cfg.path_size - 1) as f64);
        if k > 0 && lambda_max > 0.0 {
            coordinate_descent(&gram, &corr, lambda, &mut beta, &mut q, cfg.tol, cfg.max_sweeps);
        }
        let resid = &std.yc - &std.xs * &beta;
        let rss = resid.norm_squared();
        let mut coefficients = DVector::zeros(design.ncols());
        let mut intercept = std.y_mean;
        for (c, &j) in std.active.iter().enumerate() {
            if beta[c] != 0.0 {
                let b = beta[c] / std.scales[j];
                coefficients[j] = b;
                intercept -= b * std.means[j];
            }
        }
        let k_nonzero = beta.iter().filter(|&&b| b != 0.0).count();
        path.push(LassoFit {
            coefficients,
            intercept,
            lambda,
            bic: bic(n, rss, k_nonzero),
            rss,
        });
    }
    Ok(path)
}

/// Path point with the lowest BIC; ties go to the sparser (earlier) fit.
pub fn lasso_bic(design: &DMatrix<f64>, target: &DVector<f64>, cfg: &LassoConfig) -> Result<LassoFit> {
    let path = lasso_path(design, target, cfg)?;
    Ok(select_bic(path))
}

pub(crate) fn select_bic(path: Vec<LassoFit>) -> LassoFit {
    path.into_iter()
        .reduce(|best, f| if f.bic < best.bic { f } else { best })
        .expect("non-empty path")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::seeded(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut r))
    }

    #[test]
    fn ols_identity() {
        let t = DVector::from_vec(vec![1.0, -2.0, 3.5]);
        let fit = ols(&DMatrix::identity(3, 3), &t).unwrap();
        assert!((fit.coefficients - &t).amax() < 1e-12);
        assert!(fit.rss < 1e-24);
    }

    #[test]
    fn ols_orthogonal_projections() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0]);
        let y = DVector::from_vec(vec![3.0, 1.0, 2.0, 0.0]);
        let fit = ols(&x, &y).unwrap();
        for j in 0..2 {
            let proj = x.column(j).dot(&y) / x.column(j).norm_squared();
            assert!((fit.coefficients[j] - proj).abs() < 1e-12);
        }
    }

    #[test]
    fn ols_matches_normal_equations() {
        let x = gaussian(50, 5, 1);
        let y = gaussian(50, 1, 2).column(0).into_owned();
        let fit = ols(&x, &y).unwrap();
        let xtx = x.tr_mul(&x);
        let oracle = xtx.try_inverse().unwrap() * x.tr_mul(&y);
        assert!((fit.coefficients - oracle).amax() < 1e-8);
    }

    #[test]
    fn ols_rank_deficient_is_min_norm() {
        // two identical columns: min-norm splits the weight evenly
        let c = gaussian(30, 1, 4);
        let x = DMatrix::from_fn(30, 2, |r, _| c[(r, 0)]);
        let y = c.column(0) * 2.0;
        let fit = ols(&x, &y).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-9);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-9);
        assert!(fit.rss < 1e-18);
    }

    #[test]
    fn soft_threshold_single_step() {
        let x = gaussian(200, 1, 5);
        let y = gaussian(200, 1, 6).column(0) + x.column(0) * 0.7;
        let std = standardize_design(&x, &y);
        let t = 200.0;
        let gram = std.xs.tr_mul(&std.xs) / t;
        let corr = std.xs.tr_mul(&std.yc) / t;
        for lambda in [0.0, 0.1, 0.5, 2.0] {
            let mut beta = DVector::zeros(1);
            let mut q = DVector::zeros(1);
            coordinate_descent(&gram, &corr, lambda, &mut beta, &mut q, 0.0, 1);
            let rho = corr[0];
            let closed = rho.signum() * (rho.abs() - lambda).max(0.0);
            assert!((beta[0] - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_max_endpoint_is_empty() {
        let x = gaussian(100, 4, 7);
        let y = x.column(1) * 2.0 + gaussian(100, 1, 8).column(0);
        let path = lasso_path(&x, &y, &LassoConfig::default()).unwrap();
        assert_eq!(path[0].nonzero(), 0);
        assert!((path[0].intercept - y.mean()).abs() < 1e-12);
    }

    #[test]
    fn single_strong_signal() {
        let x = gaussian(200, 6, 9);
        let y = x.column(0) * 3.0;
        let fit = lasso_bic(&x, &y, &LassoConfig::default()).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 0.05, "{}", fit.coefficients);
        for j in 1..6 {
            assert_eq!(fit.coefficients[j], 0.0);
        }
    }

    #[test]
    fn sparse_under_null() {
        let mut sparse = 0;
        for seed in 0..100 {
            let x = gaussian(500, 10, 10_000 + seed);
            let y = gaussian(500, 1, 20_000 + seed).column(0).into_owned();
            if lasso_bic(&x, &y, &LassoConfig::default()).unwrap().nonzero() <= 1 {
                sparse += 1;
            }
        }
        assert!(sparse >= 95, "{sparse}/100");
    }

    #[test]
    fn constant_regressor_ignored() {
        let mut x = gaussian(80, 3, 11);
        x.column_mut(1).fill(4.0);
        let y = x.column(0) * 1.5 + x.column(2) * -0.5;
        let fit = lasso_bic(&x, &y, &LassoConfig::default()).unwrap();
        assert_eq!(fit.coefficients[1], 0.0);
        assert!((fit.coefficients[0] - 1.5).abs() < 0.05);
    }

    #[test]
    fn lasso_rejects_non_finite() {
        let mut x = gaussian(10, 2, 1);
        x[(3, 1)] = f64::NAN;
        let y = DVector::zeros(10);
        assert!(matches!(lasso_bic(&x, &y, &LassoConfig::default()), Err(Error::NonFinite(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn selected_bic_is_path_minimum(seed in any::<u64>(), p in 1usize..8) {
            let x = gaussian(120, p, seed);
            let noise = gaussian(120, 1, seed ^ 0xABCD);
            let y = x.column(0) * 0.8 + noise.column(0);
            let path = lasso_path(&x, &y, &LassoConfig::default()).unwrap();
            let best = select_bic(path.clone());
            for f in &path {
                prop_assert!(best.bic <= f.bic);
                prop_assert!(f.rss >= 0.0);
                let k = f.nonzero();
                prop_assert!((f.bic - bic(120, f.rss, k)).abs() < 1e-9 * f.bic.abs().max(1.0));
            }
        }
    }
}
