//! Capacitated quadratic assignment: instance model, objective and
//! feasibility, reduction to (fused) GW, coupling rounding and an exact
//! enumeration oracle.

mod oracle;
mod rounding;

pub use oracle::{estimate_search_nodes, solve_exact_enum, OracleResult};
pub use rounding::round_coupling;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gw::{FgwProblem, GwProblem};
use crate::types::{check_shape, normalize_masses, Coupling, MmSpace, RectCostMatrix, SymCostMatrix};

/// Agents (facilities) with capacities, tasks (locations) with demands,
/// agent-agent flow `F`, task-task distance `D` and agent-task cost `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct CqapInstance {
    id: String,
    agent_pos: Array2<f64>,
    task_pos: Array2<f64>,
    capacity: Vec<u32>,
    demand: Vec<u32>,
    flow: SymCostMatrix,
    distance: SymCostMatrix,
    linear_cost: RectCostMatrix,
}

impl CqapInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        agent_pos: Array2<f64>,
        task_pos: Array2<f64>,
        capacity: Vec<u32>,
        demand: Vec<u32>,
        flow: SymCostMatrix,
        distance: SymCostMatrix,
        linear_cost: RectCostMatrix,
    ) -> Result<Self> {
        let n = capacity.len();
        let m = demand.len();
        if n == 0 || m == 0 {
            return Err(Error::InvalidConfig("instance needs at least one agent and one task".into()));
        }
        check_shape("agent positions", n, agent_pos.nrows())?;
        check_shape("task positions", m, task_pos.nrows())?;
        check_shape("flow matrix", n, flow.dim())?;
        check_shape("distance matrix", m, distance.dim())?;
        check_shape("linear cost rows", n, linear_cost.dim().0)?;
        check_shape("linear cost columns", m, linear_cost.dim().1)?;
        if !flow.has_zero_diagonal() || !distance.has_zero_diagonal() {
            return Err(Error::InvalidConfig("flow and distance matrices need a zero diagonal".into()));
        }
        if capacity.iter().chain(demand.iter()).any(|&x| x == 0) {
            return Err(Error::InvalidConfig("capacities and demands must be at least 1".into()));
        }
        Ok(Self {
            id: id.into(),
            agent_pos,
            task_pos,
            capacity,
            demand,
            flow,
            distance,
            linear_cost,
        })
    }

    /// Builds `F`, `D` and `C` as Euclidean distances between positions.
    pub fn from_positions(
        id: impl Into<String>,
        agent_pos: Array2<f64>,
        task_pos: Array2<f64>,
        capacity: Vec<u32>,
        demand: Vec<u32>,
    ) -> Result<Self> {
        check_shape("position dimension", agent_pos.ncols(), task_pos.ncols())?;
        let flow = SymCostMatrix::euclidean(agent_pos.view())?;
        let distance = SymCostMatrix::euclidean(task_pos.view())?;
        let linear_cost = RectCostMatrix::euclidean(agent_pos.view(), task_pos.view())?;
        Self::new(id, agent_pos, task_pos, capacity, demand, flow, distance, linear_cost)
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn n_agents(&self) -> usize {
        self.capacity.len()
    }
    pub fn n_tasks(&self) -> usize {
        self.demand.len()
    }
    pub fn agent_pos(&self) -> &Array2<f64> {
        &self.agent_pos
    }
    pub fn task_pos(&self) -> &Array2<f64> {
        &self.task_pos
    }
    pub fn capacity(&self) -> &[u32] {
        &self.capacity
    }
    pub fn demand(&self) -> &[u32] {
        &self.demand
    }
    pub fn flow(&self) -> &SymCostMatrix {
        &self.flow
    }
    pub fn distance(&self) -> &SymCostMatrix {
        &self.distance
    }
    pub fn linear_cost(&self) -> &RectCostMatrix {
        &self.linear_cost
    }

    /// Total capacity, the factor that turns a unit-mass coupling into
    /// capacity units.
    pub fn mass_scale(&self) -> f64 {
        self.capacity.iter().map(|&u| u as f64).sum()
    }

    pub fn total_demand(&self) -> u64 {
        self.demand.iter().map(|&d| d as u64).sum()
    }

    pub fn total_capacity(&self) -> u64 {
        self.capacity.iter().map(|&u| u as u64).sum()
    }

    pub(crate) fn nonnegative_costs(&self) -> bool {
        self.flow.matrix().iter().all(|&x| x >= 0.0)
            && self.distance.matrix().iter().all(|&x| x >= 0.0)
            && self.linear_cost.matrix().iter().all(|&x| x >= 0.0)
    }
}

/// Binary agent-task assignment `x`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl AssignmentMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    /// From a 0/1 matrix; any other value is rejected.
    pub fn from_matrix(x: ArrayView2<'_, u8>) -> Result<Self> {
        let (rows, cols) = x.dim();
        let mut out = Self::zeros(rows, cols);
        for ((i, j), &v) in x.indexed_iter() {
            match v {
                0 => {}
                1 => out.set(i, j, true),
                other => return Err(Error::InvalidConfig(format!("assignment entry {other} is not 0 or 1"))),
            }
        }
        Ok(out)
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.bits[i * self.cols + j] = value;
    }

    /// Assigned `(agent, task)` pairs in row-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.rows)
            .flat_map(|i| (0..self.cols).map(move |j| (i, j)))
            .filter(|&(i, j)| self.get(i, j))
            .collect()
    }

    pub fn to_matrix(&self) -> Array2<u8> {
        Array2::from_shape_fn((self.rows, self.cols), |(i, j)| self.get(i, j) as u8)
    }
}

fn check_assignment(inst: &CqapInstance, x: &AssignmentMatrix) -> Result<()> {
    check_shape("assignment rows", inst.n_agents(), x.rows)?;
    check_shape("assignment columns", inst.n_tasks(), x.cols)?;
    Ok(())
}

/// `sum F_ik D_jl x_ij x_kl + sum C_ij x_ij` by direct summation. Zero
/// entries of `x` contribute exact zeros and are skipped.
pub fn cqap_objective(inst: &CqapInstance, x: &AssignmentMatrix) -> Result<f64> {
    check_assignment(inst, x)?;
    Ok(objective_of_pairs(inst, &x.pairs()))
}

pub(crate) fn objective_of_pairs(inst: &CqapInstance, pairs: &[(usize, usize)]) -> f64 {
    let f = inst.flow.matrix();
    let d = inst.distance.matrix();
    let c = inst.linear_cost.matrix();
    let mut quadratic = 0.0;
    for &(i, j) in pairs {
        for &(k, l) in pairs {
            quadratic += f[[i, k]] * d[[j, l]];
        }
    }
    let linear: f64 = pairs.iter().map(|&(i, j)| c[[i, j]]).sum();
    quadratic + linear
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    /// `sum_j d_j x_ij > u_i`.
    Capacity { agent: usize, load: u64, capacity: u32 },
    /// `sum_i u_i x_ij < d_j`.
    Demand { task: usize, coverage: u64, demand: u32 },
}

impl Violation {
    /// Signed slack; negative for every reported violation.
    pub fn slack(&self) -> i64 {
        match *self {
            Violation::Capacity { load, capacity, .. } => capacity as i64 - load as i64,
            Violation::Demand { coverage, demand, .. } => coverage as i64 - demand as i64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

/// Checks the capacity and demand-coverage constraints.
pub fn check_feasible(inst: &CqapInstance, x: &AssignmentMatrix) -> Result<Feasibility> {
    check_assignment(inst, x)?;
    let mut violations = Vec::new();
    for (i, &cap) in inst.capacity.iter().enumerate() {
        let load: u64 = (0..x.cols).filter(|&j| x.get(i, j)).map(|j| inst.demand[j] as u64).sum();
        if load > cap as u64 {
            violations.push(Violation::Capacity {
                agent: i,
                load,
                capacity: cap,
            });
        }
    }
    for (j, &dem) in inst.demand.iter().enumerate() {
        let coverage: u64 = (0..x.rows).filter(|&i| x.get(i, j)).map(|i| inst.capacity[i] as u64).sum();
        if coverage < dem as u64 {
            violations.push(Violation::Demand {
                task: j,
                coverage,
                demand: dem,
            });
        }
    }
    Ok(Feasibility {
        ok: violations.is_empty(),
        violations,
    })
}

fn masses(values: &[u32]) -> Result<crate::types::Histogram> {
    let raw: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    normalize_masses(&raw)
}

/// Source space `(F, u / sum u)`, target space `(D, d / sum d)`; node
/// features are the positions.
pub fn to_gw_problem(inst: &CqapInstance) -> Result<GwProblem> {
    let source = MmSpace::new(inst.flow.clone(), masses(&inst.capacity)?, Some(inst.agent_pos.clone()))?;
    let target = MmSpace::new(inst.distance.clone(), masses(&inst.demand)?, Some(inst.task_pos.clone()))?;
    GwProblem::new(source, target)
}

/// [`to_gw_problem`] with the agent-task cost `C` as feature cost.
pub fn to_fgw_problem(inst: &CqapInstance, alpha: f64) -> Result<FgwProblem> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    FgwProblem::new(to_gw_problem(inst)?, inst.linear_cost.clone(), alpha)
}

/// Relaxed CQAP value of `S * plan` with `S = sum u`:
/// `sum F_ik D_jl X_ij X_kl + sum C_ij X_ij`.
pub fn coupling_objective(inst: &CqapInstance, plan: &Coupling) -> Result<f64> {
    let (n, m) = plan.dim();
    check_shape("plan rows", inst.n_agents(), n)?;
    check_shape("plan columns", inst.n_tasks(), m)?;
    let scale = inst.mass_scale();
    let x = plan.plan().mapv(|v| v * scale);
    let fxd = inst.flow.matrix().dot(&x).dot(inst.distance.matrix());
    let quadratic: f64 = fxd.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let linear: f64 = inst.linear_cost.matrix().iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    Ok(quadratic + linear)
}

/// `(approx - exact) / exact * 100`.
pub fn gap_percent(approx: f64, exact: f64) -> Result<f64> {
    if !(exact > 0.0) {
        return Err(Error::NonPositiveExact(exact));
    }
    Ok((approx - exact) / exact * 100.0)
}
