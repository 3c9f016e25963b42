//! Shared domain types: histograms, couplings, structure and cost matrices,
//! metric-measure spaces and the seeding policy.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|sum(weights) - 1|` for a valid histogram.
pub const HISTOGRAM_SUM_TOL: f64 = 1e-12;
/// Post-solve tolerance on coupling marginals (infinity norm).
pub const COUPLING_MARGINAL_TOL: f64 = 1e-9;
/// Marginal tolerance for the random-initialization projection.
pub const PROJECTION_DELTA: f64 = 1e-12;
/// Symmetry tolerance for structure matrices and covariances.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A probability vector: nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram(Array1<f64>);

impl Histogram {
    /// Validates `weights` without renormalizing them.
    pub fn new(weights: impl Into<Array1<f64>>) -> Result<Self> {
        let weights = weights.into();
        if weights.is_empty() {
            return Err(Error::EmptyHistogram);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite("histogram"));
            }
            if value < 0.0 {
                return Err(Error::NegativeWeight { index, value });
            }
        }
        let sum = weights.sum();
        if (sum - 1.0).abs() > HISTOGRAM_SUM_TOL {
            return Err(Error::SumNotOne { sum });
        }
        Ok(Self(weights))
    }

    /// Uniform histogram with `n` atoms.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyHistogram);
        }
        Ok(Self(Array1::from_elem(n, 1.0 / n as f64)))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("histogram storage is contiguous")
    }
}

/// Validates a weight vector as a histogram. Never renormalizes.
pub fn validate_histogram(weights: &[f64]) -> Result<Histogram> {
    Histogram::new(Array1::from(weights.to_vec()))
}

/// Rescales nonnegative masses to sum to one.
pub fn normalize_masses(raw: &[f64]) -> Result<Histogram> {
    if raw.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    for (index, &value) in raw.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite("masses"));
        }
        if value < 0.0 {
            return Err(Error::NegativeWeight { index, value });
        }
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZero);
    }
    let weights: Array1<f64> = raw.iter().map(|&x| x / total).collect();
    Histogram::new(weights)
}

/// A transport plan together with the marginals it is meant to satisfy.
///
/// Construction checks shape, finiteness and nonnegativity. How well the
/// plan meets its declared marginals is measured by [`marginal_violation`];
/// every solver in this crate returns couplings within
/// [`COUPLING_MARGINAL_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    plan: Array2<f64>,
    row_marginal: Histogram,
    col_marginal: Histogram,
}

impl Coupling {
    pub fn new(plan: Array2<f64>, row_marginal: Histogram, col_marginal: Histogram) -> Result<Self> {
        check_shape("coupling rows", row_marginal.len(), plan.nrows())?;
        check_shape("coupling columns", col_marginal.len(), plan.ncols())?;
        for ((row, col), &value) in plan.indexed_iter() {
            if !value.is_finite() {
                return Err(Error::NonFinite("coupling"));
            }
            if value < 0.0 {
                return Err(Error::NegativeEntry { row, col, value });
            }
        }
        Ok(Self {
            plan,
            row_marginal,
            col_marginal,
        })
    }

    /// Caller guarantees a finite nonnegative plan of matching shape.
    pub(crate) fn from_parts(plan: Array2<f64>, row_marginal: Histogram, col_marginal: Histogram) -> Self {
        debug_assert_eq!(plan.dim(), (row_marginal.len(), col_marginal.len()));
        debug_assert!(plan.iter().all(|v| v.is_finite() && *v >= 0.0));
        Self {
            plan,
            row_marginal,
            col_marginal,
        }
    }

    /// The independent coupling `h ⊗ g`.
    pub fn product(row_marginal: &Histogram, col_marginal: &Histogram) -> Self {
        let h = row_marginal.weights();
        let g = col_marginal.weights();
        let plan = Array2::from_shape_fn((h.len(), g.len()), |(i, j)| h[i] * g[j]);
        Self::from_parts(plan, row_marginal.clone(), col_marginal.clone())
    }

    pub fn plan(&self) -> &Array2<f64> {
        &self.plan
    }

    pub fn into_plan(self) -> Array2<f64> {
        self.plan
    }

    pub fn row_marginal(&self) -> &Histogram {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &Histogram {
        &self.col_marginal
    }

    pub fn dim(&self) -> (usize, usize) {
        self.plan.dim()
    }
}

/// Infinity-norm deviation of the plan's row and column sums from its
/// declared marginals, as `(row_err, col_err)`.
pub fn marginal_violation(coupling: &Coupling) -> (f64, f64) {
    let rows = coupling.plan.sum_axis(Axis(1));
    let cols = coupling.plan.sum_axis(Axis(0));
    (
        max_abs_diff(rows.view(), coupling.row_marginal.weights()),
        max_abs_diff(cols.view(), coupling.col_marginal.weights()),
    )
}

pub(crate) fn max_abs_diff(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn check_shape(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

fn check_finite(entries: ArrayView2<'_, f64>, what: &'static str) -> Result<()> {
    if entries.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Square symmetric matrix of pairwise dissimilarities inside one space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymCostMatrix(Array2<f64>);

impl SymCostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (rows, cols) = entries.dim();
        if rows != cols {
            return Err(Error::NonSquare { rows, cols });
        }
        check_finite(entries.view(), "structure matrix")?;
        let deviation = symmetry_deviation(entries.view());
        if deviation > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { deviation });
        }
        Ok(Self(entries))
    }

    /// Euclidean distance matrix of a point cloud (one point per row).
    pub fn euclidean(points: ArrayView2<'_, f64>) -> Result<Self> {
        Self::new(pairwise_euclidean(points, points))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn has_zero_diagonal(&self) -> bool {
        self.0.diag().iter().all(|&v| v == 0.0)
    }
}

/// Largest `|A_ij - A_ji|`.
pub(crate) fn symmetry_deviation(a: ArrayView2<'_, f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}

/// Rectangular per-unit-mass transport cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectCostMatrix(Array2<f64>);

impl RectCostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        check_finite(entries.view(), "cost matrix")?;
        Ok(Self(entries))
    }

    /// Euclidean distances from every row of `from` to every row of `to`.
    pub fn euclidean(from: ArrayView2<'_, f64>, to: ArrayView2<'_, f64>) -> Result<Self> {
        Self::new(pairwise_euclidean(from, to))
    }

    /// `|x - y|^p` ground cost between two point clouds, `p >= 1`.
    pub fn minkowski_power(from: ArrayView2<'_, f64>, to: ArrayView2<'_, f64>, p: u32) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidConfig("ground cost exponent must be >= 1".into()));
        }
        let d = pairwise_euclidean(from, to);
        Self::new(d.mapv(|x| x.powi(p as i32)))
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }
}

fn pairwise_euclidean(from: ArrayView2<'_, f64>, to: ArrayView2<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((from.nrows(), to.nrows()), |(i, j)| {
        from.row(i)
            .iter()
            .zip(to.row(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    })
}

/// A metric-measure space: structure matrix, mass, optional node features.
#[derive(Debug, Clone, PartialEq)]
pub struct MmSpace {
    structure: SymCostMatrix,
    mass: Histogram,
    features: Option<Array2<f64>>,
}

impl MmSpace {
    pub fn new(structure: SymCostMatrix, mass: Histogram, features: Option<Array2<f64>>) -> Result<Self> {
        check_shape("mm-space mass", structure.dim(), mass.len())?;
        if let Some(f) = &features {
            check_shape("mm-space features", structure.dim(), f.nrows())?;
            check_finite(f.view(), "features")?;
        }
        Ok(Self {
            structure,
            mass,
            features,
        })
    }

    pub fn structure(&self) -> &SymCostMatrix {
        &self.structure
    }

    pub fn mass(&self) -> &Histogram {
        &self.mass
    }

    pub fn features(&self) -> Option<&Array2<f64>> {
        self.features.as_ref()
    }

    pub fn len(&self) -> usize {
        self.structure.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Deterministic random stream selection: a master seed plus a stream id.
///
/// The same pair always yields the same sequence, independent of thread
/// count or the order in which streams are consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedPolicy {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedPolicy {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Same master seed, different stream.
    pub fn with_stream(&self, stream_id: u64) -> Self {
        Self::new(self.master_seed, stream_id)
    }

    /// An independent policy keyed by `salt`, e.g. one per solver method.
    pub fn derive(&self, salt: u64) -> Self {
        let mixed = splitmix64(splitmix64(self.master_seed ^ splitmix64(salt)) ^ self.stream_id);
        Self::new(mixed, 0)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
