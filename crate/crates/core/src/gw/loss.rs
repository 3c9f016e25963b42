//! Squared-loss Gromov-Wasserstein objective and gradient without the
//! four-index tensor.
//!
//! For symmetric `C1`, `C2` and any plan `P` with row sums `p` and column
//! sums `q`:
//!
//! ```text
//! sum_{i,j,k,l} (C1_ij - C2_kl)^2 P_ik P_jl
//!     = p' C1^2 p + q' C2^2 q - 2 <C1 P C2, P>
//! ```
//!
//! (squares taken entrywise), and the gradient is
//! `2 (C1^2 p 1' + 1 q' C2^2 - 2 C1 P C2)`. Both cost O(n^2 m + n m^2).

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::GwProblem;
use crate::error::{Error, Result};
use crate::types::{check_shape, Coupling};

/// Precomputed structure matrices for repeated loss/gradient evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Contraction<'a> {
    c1: ArrayView2<'a, f64>,
    c2: ArrayView2<'a, f64>,
    c1_sq: Array2<f64>,
    c2_sq: Array2<f64>,
}

impl<'a> Contraction<'a> {
    pub(crate) fn new(c1: ArrayView2<'a, f64>, c2: ArrayView2<'a, f64>) -> Self {
        Self {
            c1,
            c2,
            c1_sq: c1.mapv(|x| x * x),
            c2_sq: c2.mapv(|x| x * x),
        }
    }

    pub(crate) fn from_problem(problem: &'a GwProblem) -> Self {
        Self::new(
            problem.source().structure().matrix().view(),
            problem.target().structure().matrix().view(),
        )
    }

    fn marginal_terms(&self, plan: ArrayView2<'_, f64>) -> (Array1<f64>, Array1<f64>) {
        let p = plan.sum_axis(Axis(1));
        let q = plan.sum_axis(Axis(0));
        (self.c1_sq.dot(&p), self.c2_sq.dot(&q))
    }

    fn cross(&self, plan: ArrayView2<'_, f64>) -> Array2<f64> {
        self.c1.dot(&plan).dot(&self.c2)
    }

    /// The quadratic form `sum (C1_ij - C2_kl)^2 X_ik X_jl` for any `X`.
    pub(crate) fn quadratic_form(&self, x: ArrayView2<'_, f64>) -> f64 {
        let p = x.sum_axis(Axis(1));
        let q = x.sum_axis(Axis(0));
        let (a, b) = self.marginal_terms(x);
        let constant = p.dot(&a) + q.dot(&b);
        let cross: f64 = self.cross(x).iter().zip(x.iter()).map(|(c, v)| c * v).sum();
        constant - 2.0 * cross
    }

    /// Loss at a nonnegative plan, clamped at zero against roundoff.
    pub(crate) fn loss(&self, plan: ArrayView2<'_, f64>) -> f64 {
        self.quadratic_form(plan).max(0.0)
    }

    pub(crate) fn gradient(&self, plan: ArrayView2<'_, f64>) -> Array2<f64> {
        let (a, b) = self.marginal_terms(plan);
        let mut grad = self.cross(plan);
        for ((i, k), g) in grad.indexed_iter_mut() {
            *g = 2.0 * (a[i] + b[k] - 2.0 * *g);
        }
        grad
    }
}

fn check_plan(problem: &GwProblem, plan: &Coupling) -> Result<()> {
    let (n, m) = plan.dim();
    check_shape("plan rows vs source space", problem.source().len(), n)?;
    check_shape("plan columns vs target space", problem.target().len(), m)?;
    Ok(())
}

/// Gromov-Wasserstein loss of `plan`.
///
/// The squared loss uses the contraction above; other exponents fall back
/// to the direct quadruple sum.
pub fn gw_loss(problem: &GwProblem, plan: &Coupling) -> Result<f64> {
    check_plan(problem, plan)?;
    match problem.loss_exponent() {
        2 => Ok(Contraction::from_problem(problem).loss(plan.plan().view())),
        q => Ok(direct_loss(
            problem.source().structure().matrix().view(),
            problem.target().structure().matrix().view(),
            plan.plan().view(),
            q,
        )),
    }
}

/// Gradient of the squared-loss GW objective with respect to the plan.
pub fn gw_gradient(problem: &GwProblem, plan: &Coupling) -> Result<Array2<f64>> {
    check_plan(problem, plan)?;
    if problem.loss_exponent() != 2 {
        return Err(Error::UnsupportedLossExponent(problem.loss_exponent()));
    }
    Ok(Contraction::from_problem(problem).gradient(plan.plan().view()))
}

fn direct_loss(c1: ArrayView2<'_, f64>, c2: ArrayView2<'_, f64>, plan: ArrayView2<'_, f64>, q: u32) -> f64 {
    let (n, m) = plan.dim();
    let mut total = 0.0;
    for i in 0..n {
        for k in 0..m {
            let pik = plan[[i, k]];
            if pik == 0.0 {
                continue;
            }
            for j in 0..n {
                for l in 0..m {
                    total += (c1[[i, j]] - c2[[k, l]]).abs().powi(q as i32) * pik * plan[[j, l]];
                }
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Histogram, MmSpace, SymCostMatrix};
    use ndarray::array;

    fn space(c: Array2<f64>) -> MmSpace {
        let n = c.nrows();
        MmSpace::new(SymCostMatrix::new(c).unwrap(), Histogram::uniform(n).unwrap(), None).unwrap()
    }

    #[test]
    fn identical_spaces_at_identity_plan() {
        let c = array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]];
        let problem = GwProblem::new(space(c.clone()), space(c)).unwrap();
        let h = Histogram::uniform(3).unwrap();
        let plan = Coupling::new(Array2::eye(3) / 3.0, h.clone(), h).unwrap();
        assert!(gw_loss(&problem, &plan).unwrap() < 1e-14);
    }

    #[test]
    fn single_point() {
        let problem = GwProblem::new(space(array![[0.0]]), space(array![[0.0]])).unwrap();
        let u = Histogram::uniform(1).unwrap();
        let plan = Coupling::new(array![[1.0]], u.clone(), u).unwrap();
        assert_eq!(gw_loss(&problem, &plan).unwrap(), 0.0);
    }

    #[test]
    fn hand_expanded_two_by_two() {
        // Each (i, k) sums four squared differences to 6, so G_ik = 2 * 6 * 0.25 = 3
        // and the loss is 4 * 0.25 * 6 * 0.25 = 1.5.
        let problem = GwProblem::new(
            space(array![[0.0, 1.0], [1.0, 0.0]]),
            space(array![[0.0, 2.0], [2.0, 0.0]]),
        )
        .unwrap();
        let u = Histogram::uniform(2).unwrap();
        let plan = Coupling::product(&u, &u);
        let grad = gw_gradient(&problem, &plan).unwrap();
        for &g in grad.iter() {
            assert!((g - 3.0).abs() < 1e-14);
        }
        assert!((gw_loss(&problem, &plan).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn general_exponent_uses_direct_sum() {
        let problem = GwProblem::new(
            space(array![[0.0, 1.0], [1.0, 0.0]]),
            space(array![[0.0, 2.0], [2.0, 0.0]]),
        )
        .unwrap()
        .with_loss_exponent(1)
        .unwrap();
        let u = Histogram::uniform(2).unwrap();
        let plan = Coupling::product(&u, &u);
        // |0-0| + |0-2| + |1-0| + |1-2| = 4 per (i, k): 4 * 0.25 * 4 * 0.25.
        assert!((gw_loss(&problem, &plan).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(
            gw_gradient(&problem, &plan),
            Err(Error::UnsupportedLossExponent(1))
        ));
    }

    #[test]
    fn plan_shape_is_checked() {
        let problem = GwProblem::new(space(Array2::zeros((2, 2))), space(Array2::zeros((3, 3)))).unwrap();
        let u = Histogram::uniform(2).unwrap();
        let plan = Coupling::product(&u, &u);
        assert!(matches!(gw_loss(&problem, &plan), Err(Error::DimensionMismatch { .. })));
    }
}
