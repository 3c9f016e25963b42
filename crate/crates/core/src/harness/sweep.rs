//! One-parameter sweeps of EGW's `epsilon` and FGW's `alpha`.

use std::fmt;
use std::str::FromStr;

use super::report::format_float;
use super::suite::{run_on_instances, Method, SolveReport, SuiteConfig};
use crate::cqap::CqapInstance;
use crate::error::{Error, Result};
use crate::types::SeedPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Epsilon,
    Alpha,
}

impl SweepKind {
    pub fn name(&self) -> &'static str {
        match self {
            SweepKind::Epsilon => "epsilon",
            SweepKind::Alpha => "alpha",
        }
    }

    fn method(&self, value: f64) -> Method {
        match self {
            SweepKind::Epsilon => Method::Egw { epsilon: value },
            SweepKind::Alpha => Method::Fgw { alpha: value },
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon" | "eps" => Ok(SweepKind::Epsilon),
            "alpha" => Ok(SweepKind::Alpha),
            other => Err(Error::InvalidConfig(format!("unknown sweep kind {other:?}"))),
        }
    }
}

/// One report per grid value, in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub kind: SweepKind,
    pub instance_id: String,
    pub grid: Vec<f64>,
    pub reports: Vec<SolveReport>,
}

impl SweepTable {
    /// One row per metric, one column per grid value.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["instance_id".to_string(), "metric".to_string()];
        header.extend(self.grid.iter().map(|v| format!("{}={}", self.kind, format_float(*v))));
        w.write_record(&header)?;
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        let metrics: [(&str, &dyn Fn(&SolveReport) -> String); 7] = [
            ("gap_pct", &|r| opt(r.gap_pct)),
            ("runtime_s", &|r| opt(r.runtime_s)),
            ("objective_binary", &|r| opt(r.objective_binary)),
            ("objective_relaxed", &|r| opt(r.objective_relaxed)),
            ("feasible", &|r| r.feasible.to_string()),
            ("iterations", &|r| r.iterations.to_string()),
            ("status", &|r| r.status.to_string()),
        ];
        for (name, cell) in metrics {
            let mut row = vec![self.instance_id.clone(), name.to_string()];
            row.extend(self.reports.iter().map(cell));
            w.write_record(&row)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

fn check_grid(kind: SweepKind, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::NonEmptyRequired("sweep grid"));
    }
    for (k, &v) in grid.iter().enumerate() {
        kind.method(v).validate()?;
        if grid[..k].contains(&v) {
            return Err(Error::DuplicateGridValue(v));
        }
    }
    Ok(())
}

pub fn sweep(
    inst: &CqapInstance,
    seed: SeedPolicy,
    kind: SweepKind,
    grid: &[f64],
    config: &SuiteConfig,
) -> Result<SweepTable> {
    check_grid(kind, grid)?;
    let methods: Vec<Method> = grid.iter().map(|&v| kind.method(v)).collect();
    let reports = run_on_instances(&[(inst.clone(), seed)], &methods, config)?;
    Ok(SweepTable {
        kind,
        instance_id: inst.id().to_string(),
        grid: grid.to_vec(),
        reports,
    })
}

/// EGW at every `epsilon > 0` in `epsilons`.
pub fn epsilon_sweep(inst: &CqapInstance, seed: SeedPolicy, epsilons: &[f64], config: &SuiteConfig) -> Result<SweepTable> {
    sweep(inst, seed, SweepKind::Epsilon, epsilons, config)
}

/// FGW at every `alpha` in `[0, 1]` in `alphas`.
pub fn alpha_sweep(inst: &CqapInstance, seed: SeedPolicy, alphas: &[f64], config: &SuiteConfig) -> Result<SweepTable> {
    sweep(inst, seed, SweepKind::Alpha, alphas, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cqap::to_fgw_problem;
    use crate::harness::{generate_instance, InstanceSpec};
    use crate::linear_ot::solve_exact_ot;

    fn s2() -> (CqapInstance, SeedPolicy) {
        let spec = InstanceSpec::named("S2", SeedPolicy::new(4, 0)).unwrap();
        (generate_instance(&spec).unwrap(), spec.seed)
    }

    fn quiet() -> SuiteConfig {
        SuiteConfig {
            timing: false,
            ..Default::default()
        }
    }

    #[test]
    fn epsilon_single_column() {
        let (inst, seed) = s2();
        let table = epsilon_sweep(&inst, seed, &[0.8], &quiet()).unwrap();
        assert_eq!(table.reports.len(), 1);
        assert!(table.reports[0].gap_pct.is_some());
        let csv = String::from_utf8(table.to_csv().unwrap()).unwrap();
        assert!(csv.starts_with("instance_id,metric,epsilon=0.8\n"));
        assert_eq!(csv.lines().count(), 8);
    }

    #[test]
    fn huge_epsilon_stays_finite() {
        let (inst, seed) = s2();
        let table = epsilon_sweep(&inst, seed, &[10.0], &quiet()).unwrap();
        assert!(table.reports[0].gap_pct.unwrap().is_finite());
    }

    #[test]
    fn grid_validation() {
        let (inst, seed) = s2();
        assert!(matches!(
            epsilon_sweep(&inst, seed, &[0.5, 0.5], &quiet()),
            Err(Error::DuplicateGridValue(_))
        ));
        assert!(epsilon_sweep(&inst, seed, &[0.0], &quiet()).is_err());
        assert!(matches!(
            alpha_sweep(&inst, seed, &[1.2], &quiet()),
            Err(Error::AlphaOutOfRange(_))
        ));
        assert!(matches!(alpha_sweep(&inst, seed, &[], &quiet()), Err(Error::NonEmptyRequired(_))));
    }

    #[test]
    fn alpha_grid_columns_and_linear_endpoint() {
        let (inst, seed) = s2();
        let table = alpha_sweep(&inst, seed, &[0.0, 0.3, 0.5, 0.7], &quiet()).unwrap();
        let csv = String::from_utf8(table.to_csv().unwrap()).unwrap();
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 6);

        let p = to_fgw_problem(&inst, 0.0).unwrap();
        let exact = solve_exact_ot(p.feature_cost(), p.gw().source().mass(), p.gw().target().mass()).unwrap();
        let fgw = crate::gw::solve_fgw(&p, Default::default()).unwrap();
        assert!((fgw.objective - exact.objective).abs() <= 1e-8);
    }
}
