//! Entropic GW: alternate a gradient evaluation with a Sinkhorn solve on
//! the gradient as transport cost.

use ndarray::Zip;

use super::{Contraction, GwProblem, GwSolution};
use crate::error::{Error, Result};
use crate::linear_ot::{round_to_polytope, sinkhorn_raw};
use crate::types::Coupling;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropicGwConfig {
    pub epsilon: f64,
    pub max_outer: usize,
    pub max_sinkhorn: usize,
    /// Outer stopping threshold on the infinity-norm change of the plan.
    pub tol: f64,
    /// Marginal tolerance of each inner Sinkhorn solve.
    pub sinkhorn_tol: f64,
}

impl Default for EntropicGwConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.8,
            max_outer: 200,
            max_sinkhorn: 10_000,
            tol: 1e-9,
            sinkhorn_tol: 1e-10,
        }
    }
}

/// Returns the lowest-loss iterate; `converged` is false if the outer loop
/// or the final inner solve ran out of iterations. The reported objective
/// is the unregularized GW loss.
pub fn solve_entropic_gw(problem: &GwProblem, config: &EntropicGwConfig) -> Result<GwSolution> {
    problem.require_squared_loss()?;
    if !(config.epsilon > 0.0) {
        return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", config.epsilon)));
    }
    if !(config.tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tol must be positive, got {}", config.tol)));
    }
    let h = problem.source().mass();
    let g = problem.target().mass();
    let contraction = Contraction::from_problem(problem);

    let mut plan = Coupling::product(h, g).into_plan();
    let mut best_plan = plan.clone();
    let mut best_loss = contraction.loss(plan.view());
    let mut history = vec![best_loss];
    let mut converged = false;
    let mut inner_converged = true;
    let mut iterations = 0;

    while iterations < config.max_outer {
        iterations += 1;
        let grad = contraction.gradient(plan.view());
        let inner = sinkhorn_raw(grad.view(), h, g, config.epsilon, config.max_sinkhorn, config.sinkhorn_tol)?;
        inner_converged = inner.converged;
        let next = round_to_polytope(inner.coupling.plan(), h, g);
        let mut change = 0.0_f64;
        Zip::from(&next).and(&plan).for_each(|a, b| change = change.max((a - b).abs()));
        plan = next;
        let loss = contraction.loss(plan.view());
        history.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best_plan = plan.clone();
        }
        if change < config.tol {
            converged = true;
            break;
        }
    }

    Ok(GwSolution {
        coupling: Coupling::from_parts(best_plan, h.clone(), g.clone()),
        objective: best_loss,
        converged: converged && inner_converged,
        iterations,
        trial_of_origin: -1,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gw::{gw_loss, solve_gw, CgConfig};
    use crate::types::{marginal_violation, Histogram, MmSpace, SymCostMatrix};
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_point_for_any_epsilon() {
        let u = Histogram::uniform(1).unwrap();
        let s = MmSpace::new(SymCostMatrix::new(array![[0.0]]).unwrap(), u, None).unwrap();
        let problem = GwProblem::new(s.clone(), s).unwrap();
        for epsilon in [0.01, 1.0, 100.0] {
            let sol = solve_entropic_gw(&problem, &EntropicGwConfig { epsilon, ..Default::default() }).unwrap();
            assert_eq!(sol.coupling.plan(), &array![[1.0]]);
        }
    }

    #[test]
    fn large_epsilon_stays_near_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pts = Array2::from_shape_simple_fn((5, 2), || rng.random_range(0.0..1.0));
        let u = Histogram::uniform(5).unwrap();
        let s = MmSpace::new(SymCostMatrix::euclidean(pts.view()).unwrap(), u.clone(), None).unwrap();
        let problem = GwProblem::new(s.clone(), s).unwrap();
        let sol = solve_entropic_gw(&problem, &EntropicGwConfig { epsilon: 10.0, ..Default::default() }).unwrap();
        let product = Coupling::product(&u, &u);
        for (a, b) in sol.coupling.plan().iter().zip(product.plan().iter()) {
            assert!((a - b).abs() < 0.02, "{a} vs {b}");
        }
        let exact = solve_gw(&problem, None, CgConfig::default()).unwrap();
        assert!(sol.objective >= exact.objective);
        assert!((gw_loss(&problem, &sol.coupling).unwrap() - sol.objective).abs() < 1e-12);
        let (r, c) = marginal_violation(&sol.coupling);
        assert!(r <= 1e-9 && c <= 1e-9);
    }

    #[test]
    fn rejects_nonpositive_epsilon() {
        let u = Histogram::uniform(1).unwrap();
        let s = MmSpace::new(SymCostMatrix::new(array![[0.0]]).unwrap(), u, None).unwrap();
        let problem = GwProblem::new(s.clone(), s).unwrap();
        assert!(solve_entropic_gw(&problem, &EntropicGwConfig { epsilon: 0.0, ..Default::default() }).is_err());
    }
}
