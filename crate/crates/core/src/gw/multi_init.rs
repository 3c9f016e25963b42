//! Multi-start GW: the default product initialization followed by `T`
//! random couplings, keeping the lowest-loss result.

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use super::{gw_loss, solve_gw, CgConfig, GwProblem, GwSolution};
use crate::error::{Error, Result};
use crate::linear_ot::sinkhorn_project;
use crate::types::{SeedPolicy, PROJECTION_DELTA};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiInitConfig {
    pub trials: usize,
    /// Marginal tolerance of the random-start projection.
    pub delta: f64,
    /// Offset added to the Uniform(0, 1) samples so every entry is positive.
    pub jitter: f64,
    /// Trial `t` draws from stream `t` of this policy.
    pub seed: SeedPolicy,
    /// Run trials on the rayon pool. The result is identical either way.
    pub parallel: bool,
}

impl Default for MultiInitConfig {
    fn default() -> Self {
        Self {
            trials: 20,
            delta: PROJECTION_DELTA,
            jitter: 1e-6,
            seed: SeedPolicy::new(0, 0),
            parallel: false,
        }
    }
}

impl MultiInitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::InvalidConfig(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.jitter > 0.0) {
            return Err(Error::InvalidConfig(format!("jitter must be positive, got {}", self.jitter)));
        }
        Ok(())
    }
}

/// Outcome of one start.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// -1 for the default start.
    pub trial: i64,
    pub objective: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct MultiInitResult {
    pub solution: GwSolution,
    pub trials: Vec<TrialRecord>,
}

fn random_start(problem: &GwProblem, config: &MultiInitConfig, cg: CgConfig, trial: usize) -> Result<GwSolution> {
    let (n, m) = problem.dims();
    let mut rng = config.seed.with_stream(trial as u64).rng();
    let raw = Array2::from_shape_simple_fn((n, m), || rng.random::<f64>() + config.jitter);
    let init = sinkhorn_project(&raw, problem.source().mass(), problem.target().mass(), config.delta)?;
    let mut sol = solve_gw(problem, Some(&init), cg)?;
    sol.trial_of_origin = trial as i64;
    Ok(sol)
}

fn record(trial: i64, outcome: &Result<GwSolution>) -> TrialRecord {
    match outcome {
        Ok(sol) => TrialRecord {
            trial,
            objective: Some(sol.objective),
            iterations: sol.iterations,
            converged: sol.converged,
            error: None,
        },
        Err(e) => TrialRecord {
            trial,
            objective: None,
            iterations: 0,
            converged: false,
            error: Some(e.to_string()),
        },
    }
}

/// Runs the default start, then `config.trials` random starts, and returns
/// the minimum-loss solution (ties go to the earliest start).
pub fn solve_gw_multi_init(problem: &GwProblem, config: &MultiInitConfig, cg: CgConfig) -> Result<MultiInitResult> {
    config.validate()?;
    let default = solve_gw(problem, None, cg)?;
    let mut records = vec![record(-1, &Ok(default.clone()))];

    let run = |t: usize| random_start(problem, config, cg, t);
    let outcomes: Vec<Result<GwSolution>> = if config.parallel {
        (1..=config.trials).into_par_iter().map(run).collect()
    } else {
        (1..=config.trials).map(run).collect()
    };

    let mut best = default;
    for (t, outcome) in (1..=config.trials).zip(outcomes) {
        records.push(record(t as i64, &outcome));
        match outcome {
            Ok(sol) if sol.objective < best.objective => best = sol,
            Ok(_) => {}
            Err(e) => log::warn!("multi-init trial {t} skipped: {e}"),
        }
    }
    debug_assert!((gw_loss(problem, &best.coupling)? - best.objective).abs() <= 1e-10 * best.objective.max(1.0));
    Ok(MultiInitResult {
        solution: best,
        trials: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Histogram, MmSpace, SymCostMatrix};
    use rand_chacha::ChaCha8Rng;
    use rand::SeedableRng;

    fn random_problem(seed: u64, n: usize, m: usize) -> GwProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut space = |k: usize| {
            let pts = Array2::from_shape_simple_fn((k, 2), || rng.random_range(0.0..10.0));
            let mass: Vec<f64> = (0..k).map(|_| rng.random_range(1..=6) as f64).collect();
            MmSpace::new(
                SymCostMatrix::euclidean(pts.view()).unwrap(),
                crate::types::normalize_masses(&mass).unwrap(),
                None,
            )
            .unwrap()
        };
        let a = space(n);
        let b = space(m);
        GwProblem::new(a, b).unwrap()
    }

    #[test]
    fn zero_trials_equals_default_solve() {
        let problem = random_problem(1, 4, 5);
        let config = MultiInitConfig {
            trials: 0,
            ..Default::default()
        };
        let multi = solve_gw_multi_init(&problem, &config, CgConfig::default()).unwrap();
        let single = solve_gw(&problem, None, CgConfig::default()).unwrap();
        assert_eq!(multi.solution, single);
        assert_eq!(multi.trials.len(), 1);
    }

    #[test]
    fn identical_spaces_stay_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = Array2::from_shape_simple_fn((6, 2), || rng.random_range(0.0..10.0));
        let s = MmSpace::new(
            SymCostMatrix::euclidean(pts.view()).unwrap(),
            Histogram::uniform(6).unwrap(),
            None,
        )
        .unwrap();
        let problem = GwProblem::new(s.clone(), s).unwrap();
        let config = MultiInitConfig {
            trials: 5,
            ..Default::default()
        };
        let out = solve_gw_multi_init(&problem, &config, CgConfig::default()).unwrap();
        assert!(out.solution.objective <= 1e-8);
    }

    #[test]
    fn best_dominates_every_trial_and_parallel_matches() {
        let problem = random_problem(7, 6, 5);
        let config = MultiInitConfig {
            trials: 20,
            seed: SeedPolicy::new(99, 0),
            ..Default::default()
        };
        let seq = solve_gw_multi_init(&problem, &config, CgConfig::default()).unwrap();
        for rec in &seq.trials {
            assert!(seq.solution.objective <= rec.objective.unwrap());
        }
        assert_eq!(seq.trials.len(), 21);
        let par = solve_gw_multi_init(
            &problem,
            &MultiInitConfig {
                parallel: true,
                ..config
            },
            CgConfig::default(),
        )
        .unwrap();
        assert_eq!(seq.solution, par.solution);
        assert_eq!(seq.trials, par.trials);
    }

    #[test]
    fn bad_config_is_rejected() {
        let problem = random_problem(3, 2, 2);
        let config = MultiInitConfig {
            jitter: 0.0,
            ..Default::default()
        };
        assert!(solve_gw_multi_init(&problem, &config, CgConfig::default()).is_err());
    }
}
