//! Closed-form squared 2-Wasserstein distance between Gaussian measures.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::types::{check_shape, symmetry_deviation, SYMMETRY_TOL};

/// Lowest eigenvalue still accepted as positive semi-definite.
pub const PSD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: Array1<f64>,
    covariance: Array2<f64>,
}

impl GaussianMeasure {
    pub fn new(mean: Array1<f64>, covariance: Array2<f64>) -> Result<Self> {
        let (rows, cols) = covariance.dim();
        if rows != cols {
            return Err(Error::NonSquare { rows, cols });
        }
        check_shape("gaussian mean", rows, mean.len())?;
        if mean.iter().chain(covariance.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("gaussian"));
        }
        let deviation = symmetry_deviation(covariance.view());
        if deviation > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { deviation });
        }
        let eig = SymmetricEigen::new(to_nalgebra(&covariance));
        let min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min_eigenvalue < -PSD_TOL {
            return Err(Error::NotPsd { min_eigenvalue });
        }
        Ok(Self { mean, covariance })
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]))
}

/// Square root of a symmetric PSD matrix; roundoff-negative eigenvalues
/// are clamped to zero.
fn sqrt_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `W2^2(a, b) = |m_a - m_b|^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)`.
///
/// The cross trace is taken as the nuclear norm of `S_a^1/2 S_b^1/2`, which
/// is symmetric in `a` and `b` and avoids square roots of near-zero
/// eigenvalues when a covariance is singular.
pub fn w2_gaussian(a: &GaussianMeasure, b: &GaussianMeasure) -> Result<f64> {
    check_shape("gaussian dimension", a.dim(), b.dim())?;
    let mean_term: f64 = a
        .mean
        .iter()
        .zip(b.mean.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let sa = to_nalgebra(&a.covariance);
    let sb = to_nalgebra(&b.covariance);
    let cross_trace: f64 = (sqrt_psd(&sa) * sqrt_psd(&sb)).singular_values().sum();
    let bures = sa.trace() + sb.trace() - 2.0 * cross_trace;
    Ok((mean_term + bures).max(0.0))
}
