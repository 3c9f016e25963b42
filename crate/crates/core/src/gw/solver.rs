//! Conditional gradient (Frank-Wolfe) with exact line search.
//!
//! Each iteration linearizes the objective at the current plan, takes the
//! exact transport vertex of the linearization as the descent target, and
//! moves along the segment by the closed-form minimizer of the quadratic
//! restriction.

use ndarray::{Array2, ArrayView2, Axis, Zip};

use super::{Contraction, FgwProblem, GwProblem, GwSolution};
use crate::error::{Error, Result};
use crate::linear_ot::{inner_product, transport_simplex};
use crate::types::{check_shape, max_abs_diff, Coupling, Histogram, COUPLING_MARGINAL_TOL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    pub max_iter: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tol: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-9,
        }
    }
}

/// `linear_weight * <M, P> + structure_weight * L_GW(P)`. Absent terms are
/// skipped entirely, so the pure GW path does no extra arithmetic.
pub(crate) struct Blend<'a> {
    structure: Option<(Contraction<'a>, f64)>,
    linear: Option<(ArrayView2<'a, f64>, f64)>,
}

impl<'a> Blend<'a> {
    pub(crate) fn structure_only(problem: &'a GwProblem) -> Self {
        Self {
            structure: Some((Contraction::from_problem(problem), 1.0)),
            linear: None,
        }
    }

    fn fused(problem: &'a FgwProblem) -> Self {
        let alpha = problem.alpha();
        let structure = (alpha > 0.0).then(|| (Contraction::from_problem(problem.gw()), alpha));
        let linear = (alpha < 1.0).then(|| (problem.feature_cost().matrix().view(), 1.0 - alpha));
        Self { structure, linear }
    }

    fn value(&self, plan: ArrayView2<'_, f64>) -> f64 {
        let s = self.structure.as_ref().map(|(c, w)| w * c.loss(plan));
        let l = self.linear.as_ref().map(|(m, w)| w * inner_product(*m, plan));
        match (s, l) {
            (Some(s), Some(l)) => l + s,
            (Some(s), None) => s,
            (None, Some(l)) => l,
            (None, None) => 0.0,
        }
    }

    fn gradient(&self, plan: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut grad = match &self.structure {
            Some((c, w)) => {
                let mut g = c.gradient(plan);
                if *w != 1.0 {
                    g.mapv_inplace(|x| w * x);
                }
                g
            }
            None => Array2::zeros(plan.dim()),
        };
        if let Some((m, w)) = &self.linear {
            Zip::from(&mut grad).and(m).for_each(|g, &mv| *g += w * mv);
        }
        grad
    }

    fn curvature(&self, direction: ArrayView2<'_, f64>) -> f64 {
        self.structure
            .as_ref()
            .map_or(0.0, |(c, w)| w * c.quadratic_form(direction))
    }
}

pub(crate) struct CgOutcome {
    pub plan: Array2<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
}

/// Minimizer over `[0, 1]` of `t * slope + t^2 * curvature` for a
/// descent direction (`slope < 0`). Boundary ties take the full step.
fn step_length(curvature: f64, slope: f64) -> f64 {
    if curvature > 0.0 {
        (-slope / (2.0 * curvature)).min(1.0)
    } else {
        1.0
    }
}

pub(crate) fn conditional_gradient(
    blend: &Blend<'_>,
    h: &Histogram,
    g: &Histogram,
    init: Array2<f64>,
    config: CgConfig,
) -> Result<CgOutcome> {
    let mut plan = init;
    let mut objective = blend.value(plan.view());
    let mut history = vec![objective];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        let grad = blend.gradient(plan.view());
        let (vertex, _) = transport_simplex(grad.view(), h.as_slice(), g.as_slice())?;
        let direction = &vertex - &plan;
        let slope = inner_product(grad.view(), direction.view());
        if !(slope < 0.0) {
            converged = true;
            break;
        }
        let t = step_length(blend.curvature(direction.view()), slope);
        let candidate = if t == 1.0 {
            vertex
        } else {
            let mut next = plan.clone();
            Zip::from(&mut next).and(&vertex).for_each(|p, &v| *p = (1.0 - t) * *p + t * v);
            next
        };
        let value = blend.value(candidate.view());
        if value > objective {
            // Roundoff on a flat segment; the current plan is stationary.
            converged = true;
            break;
        }
        let decrease = objective - value;
        let previous = objective;
        plan = candidate;
        objective = value;
        history.push(objective);
        if decrease <= config.tol * previous.abs() {
            converged = true;
            break;
        }
    }

    Ok(CgOutcome {
        plan,
        objective,
        iterations,
        converged,
        history,
    })
}

fn initial_plan(h: &Histogram, g: &Histogram, init: Option<&Coupling>) -> Result<Array2<f64>> {
    match init {
        None => Ok(Coupling::product(h, g).into_plan()),
        Some(c) => {
            let (n, m) = c.dim();
            check_shape("init rows", h.len(), n)?;
            check_shape("init columns", g.len(), m)?;
            let plan = c.plan();
            let violation = max_abs_diff(plan.sum_axis(Axis(1)).view(), h.weights())
                .max(max_abs_diff(plan.sum_axis(Axis(0)).view(), g.weights()));
            if violation > COUPLING_MARGINAL_TOL {
                return Err(Error::InvalidInit { violation });
            }
            Ok(plan.clone())
        }
    }
}

fn into_solution(outcome: CgOutcome, h: &Histogram, g: &Histogram) -> GwSolution {
    GwSolution {
        coupling: Coupling::from_parts(outcome.plan, h.clone(), g.clone()),
        objective: outcome.objective,
        converged: outcome.converged,
        iterations: outcome.iterations,
        trial_of_origin: -1,
        history: outcome.history,
    }
}

/// Conditional-gradient GW from `init`, or from `h ⊗ g` when absent.
pub fn solve_gw(problem: &GwProblem, init: Option<&Coupling>, config: CgConfig) -> Result<GwSolution> {
    problem.require_squared_loss()?;
    let h = problem.source().mass();
    let g = problem.target().mass();
    let start = initial_plan(h, g, init)?;
    let outcome = conditional_gradient(&Blend::structure_only(problem), h, g, start, config)?;
    Ok(into_solution(outcome, h, g))
}

/// Fused GW from the product coupling.
pub fn solve_fgw(problem: &FgwProblem, config: CgConfig) -> Result<GwSolution> {
    solve_fgw_from(problem, None, config)
}

pub fn solve_fgw_from(problem: &FgwProblem, init: Option<&Coupling>, config: CgConfig) -> Result<GwSolution> {
    problem.gw().require_squared_loss()?;
    let h = problem.gw().source().mass();
    let g = problem.gw().target().mass();
    let start = initial_plan(h, g, init)?;
    let outcome = conditional_gradient(&Blend::fused(problem), h, g, start, config)?;
    Ok(into_solution(outcome, h, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gw::gw_loss;
    use crate::linear_ot::solve_exact_ot;
    use crate::types::{marginal_violation, MmSpace, RectCostMatrix, SymCostMatrix};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, 2), |_| rng.random_range(0.0..10.0))
    }

    fn space_from(points: &Array2<f64>, mass: Histogram) -> MmSpace {
        MmSpace::new(SymCostMatrix::euclidean(points.view()).unwrap(), mass, Some(points.clone())).unwrap()
    }

    #[test]
    fn single_point_takes_one_iteration() {
        let u = Histogram::uniform(1).unwrap();
        let s = MmSpace::new(SymCostMatrix::new(array![[0.0]]).unwrap(), u, None).unwrap();
        let sol = solve_gw(&GwProblem::new(s.clone(), s).unwrap(), None, CgConfig::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.coupling.plan(), &array![[1.0]]);
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn identical_spaces_reach_zero() {
        // n = 2 is excluded: equal row sums make the gradient at the product
        // coupling constant, so the product itself is stationary.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [3, 5, 9, 14, 20] {
            let pts = random_points(&mut rng, n);
            let s = space_from(&pts, Histogram::uniform(n).unwrap());
            let sol = solve_gw(&GwProblem::new(s.clone(), s).unwrap(), None, CgConfig::default()).unwrap();
            assert!(sol.objective <= 1e-8, "n = {n}: {}", sol.objective);
        }
    }

    #[test]
    fn three_by_three_is_bracketed_by_permutations_and_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let a = random_points(&mut rng, 3);
            let b = random_points(&mut rng, 3);
            let u = Histogram::uniform(3).unwrap();
            let problem = GwProblem::new(space_from(&a, u.clone()), space_from(&b, u.clone())).unwrap();
            let sol = solve_gw(&problem, None, CgConfig::default()).unwrap();
            let product = gw_loss(&problem, &Coupling::product(&u, &u)).unwrap();
            assert!(sol.objective <= product + 1e-12);
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let best_perm = perms
                .iter()
                .map(|p| {
                    let mut plan = Array2::zeros((3, 3));
                    for (i, &j) in p.iter().enumerate() {
                        plan[[i, j]] = 1.0 / 3.0;
                    }
                    gw_loss(&problem, &Coupling::new(plan, u.clone(), u.clone()).unwrap()).unwrap()
                })
                .fold(f64::INFINITY, f64::min);
            // Euclidean structure makes the loss concave on the polytope, so
            // its minimum sits at a permutation vertex.
            assert!(sol.objective >= best_perm - 1e-9);
            for w in sol.history.windows(2) {
                assert!(w[1] <= w[0]);
            }
            let (r, c) = marginal_violation(&sol.coupling);
            assert!(r <= 1e-9 && c <= 1e-9);
        }
    }

    #[test]
    fn invalid_init_is_rejected() {
        let u = Histogram::uniform(2).unwrap();
        let s = MmSpace::new(SymCostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap(), u.clone(), None).unwrap();
        let problem = GwProblem::new(s.clone(), s).unwrap();
        let skewed = Coupling::new(array![[0.5, 0.2], [0.0, 0.3]], u.clone(), u).unwrap();
        assert!(matches!(
            solve_gw(&problem, Some(&skewed), CgConfig::default()),
            Err(Error::InvalidInit { .. })
        ));
    }

    #[test]
    fn unsupported_exponent_is_rejected() {
        let u = Histogram::uniform(2).unwrap();
        let s = MmSpace::new(SymCostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap(), u, None).unwrap();
        let problem = GwProblem::new(s.clone(), s).unwrap().with_loss_exponent(3).unwrap();
        assert!(matches!(
            solve_gw(&problem, None, CgConfig::default()),
            Err(Error::UnsupportedLossExponent(3))
        ));
    }

    fn fused_instance(seed: u64, n: usize, m: usize, alpha: f64) -> FgwProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_points(&mut rng, n);
        let b = random_points(&mut rng, m);
        let problem = GwProblem::new(
            space_from(&a, Histogram::uniform(n).unwrap()),
            space_from(&b, Histogram::uniform(m).unwrap()),
        )
        .unwrap();
        let cost = RectCostMatrix::euclidean(a.view(), b.view()).unwrap();
        FgwProblem::new(problem, cost, alpha).unwrap()
    }

    #[test]
    fn fused_endpoints() {
        let zero = fused_instance(3, 5, 6, 0.0);
        let sol = solve_fgw(&zero, CgConfig::default()).unwrap();
        let exact = solve_exact_ot(zero.feature_cost(), zero.gw().source().mass(), zero.gw().target().mass()).unwrap();
        assert!((sol.objective - exact.objective).abs() < 1e-8);

        let one = fused_instance(3, 5, 6, 1.0);
        let fused = solve_fgw(&one, CgConfig::default()).unwrap();
        let plain = solve_gw(one.gw(), None, CgConfig::default()).unwrap();
        assert_eq!(fused, plain);
    }

    #[test]
    fn fused_rejects_bad_alpha_and_missing_features() {
        let base = fused_instance(1, 2, 2, 0.5);
        let cost = base.feature_cost().clone();
        assert!(matches!(
            FgwProblem::new(base.gw().clone(), cost.clone(), 1.2),
            Err(Error::AlphaOutOfRange(_))
        ));
        let u = Histogram::uniform(2).unwrap();
        let bare = MmSpace::new(SymCostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap(), u, None).unwrap();
        let no_features = GwProblem::new(bare.clone(), bare).unwrap();
        assert!(matches!(FgwProblem::new(no_features, cost, 0.5), Err(Error::MissingFeatures)));
    }

    #[test]
    fn step_length_cases() {
        assert_eq!(step_length(1.0, -1.0), 0.5);
        assert_eq!(step_length(0.1, -1.0), 1.0);
        assert_eq!(step_length(-1.0, -0.5), 1.0);
        assert_eq!(step_length(0.0, -0.5), 1.0);
    }
}
