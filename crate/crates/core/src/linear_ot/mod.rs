//! Linear optimal transport: exact transport, linear assignment, Sinkhorn,
//! and the Gaussian closed form.

mod gaussian;
mod lap;
mod simplex;
mod sinkhorn;

use ndarray::ArrayView2;

pub use gaussian::{w2_gaussian, GaussianMeasure, PSD_TOL};
pub use lap::{solve_lap, Assignment};
pub use simplex::{solve_exact_ot, ExactOt};
pub use sinkhorn::{sinkhorn, sinkhorn_project, SinkhornOutput, LOG_DOMAIN_THRESHOLD, PROJECTION_MAX_SWEEPS};

pub(crate) use simplex::{inner_product, transport_simplex};
pub(crate) use sinkhorn::{round_to_polytope, sinkhorn_raw};

use crate::error::Result;
use crate::types::{check_shape, Histogram, RectCostMatrix};

/// Discrete p-Wasserstein distance between two weighted point clouds in
/// Euclidean space, `(min_T sum |x_i - y_j|^p T_ij)^(1/p)`.
pub fn wasserstein_p(
    source: ArrayView2<'_, f64>,
    h: &Histogram,
    target: ArrayView2<'_, f64>,
    g: &Histogram,
    p: u32,
) -> Result<f64> {
    check_shape("point dimension", source.ncols(), target.ncols())?;
    let cost = RectCostMatrix::minkowski_power(source, target, p)?;
    let out = solve_exact_ot(&cost, h, g)?;
    Ok(out.objective.max(0.0).powf(1.0 / p as f64))
}
