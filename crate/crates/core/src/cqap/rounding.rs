use super::{AssignmentMatrix, CqapInstance};
use crate::error::Result;
use crate::types::{check_shape, Coupling};

/// Greedy rounding of a coupling to a binary assignment.
///
/// Positive-mass entries are visited by descending mass (ties by `(i, j)`);
/// an entry is taken when its task is still uncovered and the agent has
/// room for the task's demand. Tasks left uncovered are then given to the
/// fitting agent with the most residual capacity. The result may still be
/// infeasible; callers check with [`super::check_feasible`].
pub fn round_coupling(inst: &CqapInstance, plan: &Coupling) -> Result<AssignmentMatrix> {
    let (n, m) = plan.dim();
    check_shape("plan rows", inst.n_agents(), n)?;
    check_shape("plan columns", inst.n_tasks(), m)?;
    let p = plan.plan();

    let mut entries: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter(|&(i, j)| p[[i, j]] > 0.0)
        .collect();
    entries.sort_by(|&a, &b| p[[b.0, b.1]].total_cmp(&p[[a.0, a.1]]).then(a.cmp(&b)));

    let u = inst.capacity();
    let d = inst.demand();
    let mut load = vec![0u64; n];
    let mut coverage = vec![0u64; m];
    let mut x = AssignmentMatrix::zeros(n, m);

    let mut take = |i: usize, j: usize, load: &mut [u64], coverage: &mut [u64]| {
        x.set(i, j, true);
        load[i] += d[j] as u64;
        coverage[j] += u[i] as u64;
    };

    for (i, j) in entries {
        if coverage[j] >= d[j] as u64 {
            continue;
        }
        if load[i] + d[j] as u64 <= u[i] as u64 {
            take(i, j, &mut load, &mut coverage);
        }
    }

    for j in 0..m {
        if coverage[j] >= d[j] as u64 {
            continue;
        }
        let best = (0..n)
            .filter(|&i| load[i] + d[j] as u64 <= u[i] as u64)
            .max_by(|&a, &b| (u[a] as u64 - load[a]).cmp(&(u[b] as u64 - load[b])).then(b.cmp(&a)));
        if let Some(i) = best {
            take(i, j, &mut load, &mut coverage);
        }
    }
    Ok(x)
}
