//! Exhaustive depth-first search over task-to-agent choices.
//!
//! With nonnegative `F`, `D` and `C` every extra agent on a task only adds
//! cost, and any agent that takes task `j` has `u_i >= d_j` (its own
//! capacity constraint), so one agent per task already covers the demand.
//! The search then branches over single agents and prunes with the linear
//! lower bound. Otherwise it branches over every nonempty subset of
//! eligible agents without pruning.

use super::{objective_of_pairs, AssignmentMatrix, CqapInstance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub assignment: AssignmentMatrix,
    pub objective: f64,
    /// False when the node cap stopped the search; the assignment is then
    /// only the best one found.
    pub proven: bool,
    pub nodes: u64,
}

/// Upper bound on the number of search nodes (product of branch counts).
pub fn estimate_search_nodes(inst: &CqapInstance) -> f64 {
    let singletons = inst.nonnegative_costs();
    inst.demand()
        .iter()
        .map(|&d| {
            let eligible = inst.capacity().iter().filter(|&&u| u >= d).count() as i32;
            if singletons {
                eligible as f64
            } else {
                2f64.powi(eligible) - 1.0
            }
        })
        .product()
}

struct Search<'a> {
    inst: &'a CqapInstance,
    order: Vec<usize>,
    options: Vec<Vec<Vec<usize>>>,
    /// `tail[k]`: lower bound on the cost of tasks `order[k..]`.
    tail: Vec<f64>,
    prune: bool,
    load: Vec<u64>,
    pairs: Vec<(usize, usize)>,
    partial: f64,
    best: Option<(f64, Vec<(usize, usize)>)>,
    nodes: u64,
    cap: u64,
    exceeded: bool,
}

impl Search<'_> {
    fn increment(&self, j: usize, agents: &[usize]) -> f64 {
        let f = self.inst.flow().matrix();
        let d = self.inst.distance().matrix();
        let c = self.inst.linear_cost().matrix();
        let mut delta = 0.0;
        for &i in agents {
            delta += c[[i, j]];
            for &(k, l) in &self.pairs {
                delta += f[[i, k]] * d[[j, l]] + f[[k, i]] * d[[l, j]];
            }
            for &k in agents {
                delta += f[[i, k]] * d[[j, j]];
            }
        }
        delta
    }

    fn dfs(&mut self, k: usize) {
        if self.exceeded {
            return;
        }
        if k == self.order.len() {
            let mut pairs = self.pairs.clone();
            pairs.sort_unstable();
            let value = objective_of_pairs(self.inst, &pairs);
            if self.best.as_ref().is_none_or(|(b, _)| value < *b) {
                self.best = Some((value, pairs));
            }
            return;
        }
        let j = self.order[k];
        let dj = self.inst.demand()[j] as u64;
        for o in 0..self.options[k].len() {
            let agents = std::mem::take(&mut self.options[k][o]);
            let fits = agents.iter().all(|&i| self.load[i] + dj <= self.inst.capacity()[i] as u64);
            if fits {
                self.nodes += 1;
                if self.nodes > self.cap {
                    self.exceeded = true;
                    self.options[k][o] = agents;
                    return;
                }
                let delta = self.increment(j, &agents);
                let pruned = self.prune
                    && self.best.as_ref().is_some_and(|(b, _)| {
                        self.partial + delta + self.tail[k + 1] > b + 1e-12 * b.abs().max(1.0)
                    });
                if !pruned {
                    let saved = self.partial;
                    self.partial += delta;
                    for &i in &agents {
                        self.load[i] += dj;
                        self.pairs.push((i, j));
                    }
                    self.dfs(k + 1);
                    for &i in &agents {
                        self.load[i] -= dj;
                        self.pairs.pop();
                    }
                    self.partial = saved;
                }
            }
            self.options[k][o] = agents;
            if self.exceeded {
                return;
            }
        }
    }
}

/// Minimum-objective feasible assignment by exhaustive search, visiting at
/// most `node_cap` nodes. The returned objective is [`super::cqap_objective`]
/// of the returned assignment.
pub fn solve_exact_enum(inst: &CqapInstance, node_cap: u64) -> Result<OracleResult> {
    let n = inst.n_agents();
    let m = inst.n_tasks();
    let u = inst.capacity();
    let d = inst.demand();
    let c = inst.linear_cost().matrix();
    let singletons = inst.nonnegative_costs();

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| d[b].cmp(&d[a]).then(a.cmp(&b)));

    let options: Vec<Vec<Vec<usize>>> = order
        .iter()
        .map(|&j| {
            let eligible: Vec<usize> = (0..n).filter(|&i| u[i] >= d[j]).collect();
            let mut opts: Vec<Vec<usize>> = if singletons {
                eligible.iter().map(|&i| vec![i]).collect()
            } else {
                (1u64..(1u64 << eligible.len()))
                    .map(|mask| {
                        eligible
                            .iter()
                            .enumerate()
                            .filter(|(b, _)| mask >> b & 1 == 1)
                            .map(|(_, &i)| i)
                            .collect()
                    })
                    .collect()
            };
            let linear = |s: &Vec<usize>| s.iter().map(|&i| c[[i, j]]).sum::<f64>();
            opts.sort_by(|a, b| linear(a).total_cmp(&linear(b)).then_with(|| a.cmp(b)));
            opts
        })
        .collect();

    let mut tail = vec![0.0; m + 1];
    for k in (0..m).rev() {
        let j = order[k];
        let cheapest = options[k]
            .iter()
            .map(|s| s.iter().map(|&i| c[[i, j]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        tail[k] = tail[k + 1] + cheapest;
    }

    if options.iter().any(|o| o.is_empty()) {
        return Err(Error::Infeasible);
    }

    let mut search = Search {
        inst,
        order,
        options,
        tail,
        prune: singletons,
        load: vec![0; n],
        pairs: Vec::with_capacity(m * n),
        partial: 0.0,
        best: None,
        nodes: 0,
        cap: node_cap,
        exceeded: false,
    };
    search.dfs(0);

    match search.best {
        Some((objective, pairs)) => {
            let mut assignment = AssignmentMatrix::zeros(n, m);
            for (i, j) in pairs {
                assignment.set(i, j, true);
            }
            Ok(OracleResult {
                assignment,
                objective,
                proven: !search.exceeded,
                nodes: search.nodes,
            })
        }
        None if search.exceeded => Err(Error::NodeCapExceeded(node_cap)),
        None => Err(Error::Infeasible),
    }
}
