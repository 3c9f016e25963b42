//! Runs every method on every instance and collects one report per cell.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::instance::{generate_instance, InstanceSpec};
use crate::cqap::{
    check_feasible, coupling_objective, cqap_objective, estimate_search_nodes, gap_percent, round_coupling,
    solve_exact_enum, to_fgw_problem, to_gw_problem, CqapInstance, OracleResult,
};
use crate::error::{Error, Result};
use crate::gw::{
    solve_entropic_gw, solve_fgw, solve_gw, solve_gw_multi_init, CgConfig, EntropicGwConfig, GwSolution,
    MultiInitConfig,
};
use crate::heuristics::{solve_ga, GaConfig};
use crate::types::{marginal_violation, SeedPolicy};

pub const DEFAULT_NODE_CAP: u64 = 100_000_000;
pub const DEFAULT_TRIALS: usize = 20;
pub const DEFAULT_EPSILON: f64 = 0.8;
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Cells faster than this are timed three times and the median reported.
const REPEAT_BELOW_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Exact,
    GwDefault,
    GwMultiInit { trials: usize },
    Egw { epsilon: f64 },
    Fgw { alpha: f64 },
    Ga { population: usize, generations: usize },
}

impl Method {
    /// Table label, e.g. `GW_MultiInit` or `EGW(0.8)`.
    pub fn label(&self) -> String {
        match self {
            Method::Exact => "Exact".into(),
            Method::GwDefault => "GW_Default".into(),
            Method::GwMultiInit { .. } => "GW_MultiInit".into(),
            Method::Egw { epsilon } => format!("EGW({epsilon})"),
            Method::Fgw { alpha } => format!("FGW({alpha})"),
            Method::Ga { .. } => "GA".into(),
        }
    }

    pub fn params(&self) -> BTreeMap<String, String> {
        let pairs: Vec<(&str, String)> = match *self {
            Method::Exact | Method::GwDefault => vec![],
            Method::GwMultiInit { trials } => vec![("trials", trials.to_string())],
            Method::Egw { epsilon } => vec![("epsilon", epsilon.to_string())],
            Method::Fgw { alpha } => vec![("alpha", alpha.to_string())],
            Method::Ga {
                population,
                generations,
            } => vec![("population", population.to_string()), ("generations", generations.to_string())],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    fn salt(&self) -> u64 {
        match self {
            Method::Exact => 0,
            Method::GwDefault => 1,
            Method::GwMultiInit { .. } => 2,
            Method::Egw { .. } => 3,
            Method::Fgw { .. } => 4,
            Method::Ga { .. } => 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Method::Egw { epsilon } if !(epsilon > 0.0 && epsilon.is_finite()) => {
                Err(Error::InvalidConfig(format!("epsilon must be positive, got {epsilon}")))
            }
            Method::Fgw { alpha } if !(0.0..=1.0).contains(&alpha) => Err(Error::AlphaOutOfRange(alpha)),
            Method::Ga { population, .. } if population < 2 => {
                Err(Error::InvalidConfig("GA population must be at least 2".into()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// `exact`, `gw`, `gw-multi[:T]`, `egw[:eps]`, `fgw[:alpha]`,
/// `ga[:population:generations]`.
impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let name = parts.next().unwrap_or_default().to_ascii_lowercase();
        let args: Vec<&str> = parts.collect();
        let bad = || Error::InvalidConfig(format!("cannot parse method {s:?}"));
        let num = |i: usize| -> Result<Option<f64>> { args.get(i).map(|a| a.parse::<f64>().map_err(|_| bad())).transpose() };
        let int = |i: usize| -> Result<Option<usize>> { args.get(i).map(|a| a.parse::<usize>().map_err(|_| bad())).transpose() };
        let method = match (name.as_str(), args.len()) {
            ("exact", 0) => Method::Exact,
            ("gw" | "gw-default", 0) => Method::GwDefault,
            ("gw-multi" | "gw-multiinit", 0..=1) => Method::GwMultiInit {
                trials: int(0)?.unwrap_or(DEFAULT_TRIALS),
            },
            ("egw", 0..=1) => Method::Egw {
                epsilon: num(0)?.unwrap_or(DEFAULT_EPSILON),
            },
            ("fgw", 0..=1) => Method::Fgw {
                alpha: num(0)?.unwrap_or(DEFAULT_ALPHA),
            },
            ("ga", 0 | 2) => {
                let d = GaConfig::default();
                Method::Ga {
                    population: int(0)?.unwrap_or(d.population),
                    generations: int(1)?.unwrap_or(d.generations),
                }
            }
            _ => return Err(bad()),
        };
        method.validate()?;
        Ok(method)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    NotConverged,
    SkippedTooLarge,
    Infeasible,
    Failed(String),
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Ok => f.write_str("ok"),
            Status::NotConverged => f.write_str("not_converged"),
            Status::SkippedTooLarge => f.write_str("skipped_too_large"),
            Status::Infeasible => f.write_str("infeasible"),
            Status::Failed(msg) => write!(f, "failed: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub instance_id: String,
    pub method: Method,
    /// Method parameters plus `mass_scale`, the total capacity used to turn
    /// unit-mass couplings into capacity units.
    pub params: BTreeMap<String, String>,
    pub objective_relaxed: Option<f64>,
    pub objective_binary: Option<f64>,
    pub feasible: bool,
    /// Present exactly when the oracle proved an optimum for the instance.
    pub gap_pct: Option<f64>,
    pub runtime_s: Option<f64>,
    pub iterations: usize,
    pub seed: u64,
    pub status: Status,
    /// Largest marginal deviation of the returned coupling, for the
    /// transport-based methods.
    pub marginal_violation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    /// Size of the worker pool cells run on.
    pub workers: usize,
    /// Measure runtimes. Off, `runtime_s` is left empty and every cell runs
    /// once, which makes the output byte-reproducible.
    pub timing: bool,
    /// Oracle budget; `Exact` is skipped when the search estimate exceeds it.
    pub node_cap: u64,
    pub cg: CgConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            timing: true,
            node_cap: DEFAULT_NODE_CAP,
            cg: CgConfig::default(),
        }
    }
}

fn timed<T>(timing: bool, mut f: impl FnMut() -> T) -> (T, Option<f64>) {
    let start = Instant::now();
    let out = f();
    let first = start.elapsed().as_secs_f64();
    if !timing {
        return (out, None);
    }
    if first >= REPEAT_BELOW_S {
        return (out, Some(first));
    }
    let mut times = vec![first];
    for _ in 0..2 {
        let start = Instant::now();
        let _ = f();
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    (out, Some(times[1]))
}

enum OracleOutcome {
    Skipped,
    Ran {
        result: std::result::Result<OracleResult, String>,
        infeasible: bool,
        runtime: Option<f64>,
    },
}

impl OracleOutcome {
    fn proven_optimum(&self) -> Option<f64> {
        match self {
            OracleOutcome::Ran { result: Ok(r), .. } if r.proven => Some(r.objective),
            _ => None,
        }
    }
}

fn run_oracle(inst: &CqapInstance, config: &SuiteConfig, timing: bool) -> OracleOutcome {
    if estimate_search_nodes(inst) > config.node_cap as f64 {
        return OracleOutcome::Skipped;
    }
    let (result, runtime) = timed(timing, || solve_exact_enum(inst, config.node_cap));
    OracleOutcome::Ran {
        infeasible: matches!(result, Err(Error::Infeasible)),
        result: result.map_err(|e| e.to_string()),
        runtime,
    }
}

struct CellResult {
    relaxed: f64,
    binary: f64,
    feasible: bool,
    iterations: usize,
    converged: bool,
    violation: Option<f64>,
}

fn from_coupling(inst: &CqapInstance, sol: GwSolution) -> Result<CellResult> {
    let (row, col) = marginal_violation(&sol.coupling);
    let x = round_coupling(inst, &sol.coupling)?;
    Ok(CellResult {
        relaxed: coupling_objective(inst, &sol.coupling)?,
        binary: cqap_objective(inst, &x)?,
        feasible: check_feasible(inst, &x)?.ok,
        iterations: sol.iterations,
        converged: sol.converged,
        violation: Some(row.max(col)),
    })
}

fn solve_cell(inst: &CqapInstance, method: Method, seed: SeedPolicy, cg: CgConfig) -> Result<CellResult> {
    match method {
        Method::Exact => unreachable!("exact cells come from the oracle"),
        Method::GwDefault => from_coupling(inst, solve_gw(&to_gw_problem(inst)?, None, cg)?),
        Method::GwMultiInit { trials } => {
            let config = MultiInitConfig {
                trials,
                seed,
                ..Default::default()
            };
            from_coupling(inst, solve_gw_multi_init(&to_gw_problem(inst)?, &config, cg)?.solution)
        }
        Method::Egw { epsilon } => {
            let config = EntropicGwConfig {
                epsilon,
                ..Default::default()
            };
            from_coupling(inst, solve_entropic_gw(&to_gw_problem(inst)?, &config)?)
        }
        Method::Fgw { alpha } => from_coupling(inst, solve_fgw(&to_fgw_problem(inst, alpha)?, cg)?),
        Method::Ga {
            population,
            generations,
        } => {
            let config = GaConfig {
                population,
                generations,
                seed,
                ..Default::default()
            };
            let out = solve_ga(inst, &config)?;
            Ok(CellResult {
                relaxed: out.objective,
                binary: out.objective,
                feasible: out.feasible,
                iterations: generations,
                converged: true,
                violation: None,
            })
        }
    }
}

fn empty_report(id: &str, method: Method, seed: SeedPolicy, status: Status) -> SolveReport {
    SolveReport {
        instance_id: id.to_string(),
        method,
        params: method.params(),
        objective_relaxed: None,
        objective_binary: None,
        feasible: false,
        gap_pct: None,
        runtime_s: None,
        iterations: 0,
        seed: seed.derive(method.salt()).master_seed,
        status,
        marginal_violation: None,
    }
}

fn exact_report(inst: &CqapInstance, seed: SeedPolicy, oracle: &OracleOutcome) -> SolveReport {
    let mut report = empty_report(inst.id(), Method::Exact, seed, Status::SkippedTooLarge);
    report.params.insert("mass_scale".into(), inst.mass_scale().to_string());
    let OracleOutcome::Ran {
        result,
        infeasible,
        runtime,
    } = oracle
    else {
        return report;
    };
    report.runtime_s = *runtime;
    match result {
        Ok(r) => {
            report.objective_relaxed = Some(r.objective);
            report.objective_binary = Some(r.objective);
            report.feasible = true;
            report.iterations = r.nodes as usize;
            report.gap_pct = oracle.proven_optimum().and_then(|e| gap_percent(r.objective, e).ok());
            report.status = if r.proven { Status::Ok } else { Status::NotConverged };
        }
        Err(_) if *infeasible => report.status = Status::Infeasible,
        Err(msg) => report.status = Status::Failed(msg.clone()),
    }
    report
}

fn method_report(
    inst: &CqapInstance,
    method: Method,
    seed: SeedPolicy,
    oracle: &OracleOutcome,
    config: &SuiteConfig,
) -> SolveReport {
    if method == Method::Exact {
        return exact_report(inst, seed, oracle);
    }
    let method_seed = seed.derive(method.salt());
    let mut report = empty_report(inst.id(), method, seed, Status::Ok);
    report.params.insert("mass_scale".into(), inst.mass_scale().to_string());
    let (outcome, runtime) = timed(config.timing, || solve_cell(inst, method, method_seed, config.cg));
    report.runtime_s = runtime;
    match outcome {
        Ok(cell) => {
            report.objective_relaxed = Some(cell.relaxed);
            report.objective_binary = Some(cell.binary);
            report.feasible = cell.feasible;
            report.iterations = cell.iterations;
            report.marginal_violation = cell.violation;
            report.gap_pct = oracle.proven_optimum().and_then(|e| gap_percent(cell.binary, e).ok());
            if !cell.converged {
                report.status = Status::NotConverged;
            }
        }
        Err(e) => {
            report.runtime_s = None;
            report.status = Status::Failed(e.to_string());
        }
    }
    report
}

fn check_lists<A, B>(instances: &[A], methods: &[B], config: &SuiteConfig) -> Result<()> {
    if instances.is_empty() {
        return Err(Error::NonEmptyRequired("instance list"));
    }
    if methods.is_empty() {
        return Err(Error::NonEmptyRequired("method list"));
    }
    if config.workers == 0 {
        return Err(Error::InvalidConfig("at least one worker is required".into()));
    }
    Ok(())
}

/// Runs `methods` on already built instances. Reports come back in
/// instance-major, method-minor order regardless of the worker count.
pub fn run_on_instances(
    instances: &[(CqapInstance, SeedPolicy)],
    methods: &[Method],
    config: &SuiteConfig,
) -> Result<Vec<SolveReport>> {
    check_lists(instances, methods, config)?;
    for m in methods {
        m.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let wants_exact = methods.contains(&Method::Exact);
    Ok(pool.install(|| {
        let oracles: Vec<OracleOutcome> = instances
            .par_iter()
            .map(|(inst, _)| run_oracle(inst, config, config.timing && wants_exact))
            .collect();
        let k = methods.len();
        (0..instances.len() * k)
            .into_par_iter()
            .map(|cell| {
                let (inst, seed) = &instances[cell / k];
                method_report(inst, methods[cell % k], *seed, &oracles[cell / k], config)
            })
            .collect()
    }))
}

/// Generates every instance and runs every method on it. Per-cell problems,
/// including instance generation failures, are recorded in the report
/// status; only invalid arguments abort the suite.
pub fn run_suite(specs: &[InstanceSpec], methods: &[Method], config: &SuiteConfig) -> Result<Vec<SolveReport>> {
    check_lists(specs, methods, config)?;
    let mut ready = Vec::new();
    let mut failed = Vec::new();
    for (k, spec) in specs.iter().enumerate() {
        match generate_instance(spec) {
            Ok(inst) => ready.push((inst, spec.seed)),
            Err(e) => failed.push((k, spec, e.to_string())),
        }
    }
    let mut solved = if ready.is_empty() {
        Vec::new()
    } else {
        run_on_instances(&ready, methods, config)?
    }
    .into_iter();

    let mut reports = Vec::with_capacity(specs.len() * methods.len());
    let mut failed = failed.into_iter().peekable();
    for k in 0..specs.len() {
        match failed.peek() {
            Some((fk, spec, msg)) if *fk == k => {
                for &m in methods {
                    reports.push(empty_report(&spec.test_id, m, spec.seed, Status::Failed(msg.clone())));
                }
                failed.next();
            }
            _ => reports.extend(solved.by_ref().take(methods.len())),
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(id: &str, seed: u64) -> InstanceSpec {
        InstanceSpec::named(id, SeedPolicy::new(seed, 0)).unwrap()
    }

    fn quiet() -> SuiteConfig {
        SuiteConfig {
            timing: false,
            ..Default::default()
        }
    }

    #[test]
    fn method_parsing_and_labels() {
        assert_eq!("exact".parse::<Method>().unwrap(), Method::Exact);
        assert_eq!("gw-multi:5".parse::<Method>().unwrap(), Method::GwMultiInit { trials: 5 });
        assert_eq!("egw".parse::<Method>().unwrap(), Method::Egw { epsilon: 0.8 });
        assert_eq!(
            "ga:50:10".parse::<Method>().unwrap(),
            Method::Ga {
                population: 50,
                generations: 10
            }
        );
        assert!("fgw:1.2".parse::<Method>().is_err());
        assert!("simplex".parse::<Method>().is_err());
        assert!("egw:0".parse::<Method>().is_err());
        assert_eq!(Method::Egw { epsilon: 0.8 }.label(), "EGW(0.8)");
        assert_eq!(Method::Fgw { alpha: 0.0 }.label(), "FGW(0)");
    }

    #[test]
    fn s1_exact_and_multi_init() {
        let methods = [Method::Exact, Method::GwMultiInit { trials: 20 }];
        let reports = run_suite(&[spec("S1", 3)], &methods, &quiet()).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].status, Status::Ok);
        assert_eq!(reports[0].gap_pct, Some(0.0));
        let gw = &reports[1];
        let gap = gw.gap_pct.expect("gap against the proven optimum");
        let recomputed = gap_percent(gw.objective_binary.unwrap(), reports[0].objective_binary.unwrap()).unwrap();
        assert_eq!(gap, recomputed);
        assert!(gw.marginal_violation.unwrap() <= 1e-9);
        assert!(gw.params.contains_key("mass_scale"));
    }

    #[test]
    fn empty_lists_are_rejected() {
        assert!(matches!(
            run_suite(&[spec("S1", 0)], &[], &quiet()),
            Err(Error::NonEmptyRequired(_))
        ));
        assert!(matches!(
            run_suite(&[], &[Method::GwDefault], &quiet()),
            Err(Error::NonEmptyRequired(_))
        ));
    }

    #[test]
    fn exact_is_skipped_when_too_large() {
        let reports = run_suite(&[spec("M4", 1)], &[Method::Exact], &quiet()).unwrap();
        assert_eq!(reports[0].status, Status::SkippedTooLarge);
        assert_eq!(reports[0].gap_pct, None);
    }

    #[test]
    fn worker_count_does_not_change_reports() {
        let specs = [spec("S1", 1), spec("S2", 2), spec("S4", 3)];
        let methods = [
            Method::Exact,
            Method::GwDefault,
            Method::GwMultiInit { trials: 3 },
            Method::Egw { epsilon: 0.8 },
            Method::Fgw { alpha: 0.5 },
            Method::Ga {
                population: 20,
                generations: 10,
            },
        ];
        let one = run_suite(&specs, &methods, &quiet()).unwrap();
        let four = run_suite(&specs, &methods, &SuiteConfig { workers: 4, ..quiet() }).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.len(), 18);
        for (k, r) in one.iter().enumerate() {
            assert_eq!(r.method, methods[k % methods.len()]);
        }
    }

    #[test]
    fn timing_reports_runtimes() {
        let reports = run_suite(&[spec("S1", 1)], &[Method::GwDefault], &SuiteConfig::default()).unwrap();
        assert!(reports[0].runtime_s.unwrap() >= 0.0);
    }
}
