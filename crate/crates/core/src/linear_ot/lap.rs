//! Linear assignment via shortest augmenting paths with dual potentials.
//!
//! Rows are inserted one at a time; each insertion runs a Dijkstra-like
//! sweep over reduced costs, so the whole solve is O(n^3).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::RectCostMatrix;

/// A bijection `perm[i] = j` from sources to targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    perm: Vec<usize>,
}

impl Assignment {
    /// Checks that `perm` is a permutation of `0..perm.len()`.
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &j in &perm {
            if j >= n || seen[j] {
                return Err(Error::InvalidConfig(format!("{perm:?} is not a permutation")));
            }
            seen[j] = true;
        }
        Ok(Self { perm })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
        }
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }
}

/// Minimum-cost perfect matching on a square cost matrix.
pub fn solve_lap(cost: &RectCostMatrix) -> Result<(Assignment, f64)> {
    let (rows, cols) = cost.dim();
    if rows != cols {
        return Err(Error::NonSquare { rows, cols });
    }
    let c = cost.matrix();
    let n = rows;
    if n == 0 {
        return Ok((Assignment::identity(0), 0.0));
    }

    // 1-based with a virtual column 0, as in the classic formulation.
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![f64::INFINITY; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);

        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = c[[i0 - 1, j - 1]] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }

        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    let objective = perm.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum();
    Ok((Assignment { perm }, objective))
}
