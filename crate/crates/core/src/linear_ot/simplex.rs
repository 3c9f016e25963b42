//! Transportation simplex for discrete optimal transport.
//!
//! The basis is a spanning tree over row and column nodes, started from the
//! northwest-corner rule. Each pivot prices every nonbasic cell with the
//! MODI potentials, sends flow around the unique cycle closed by the
//! entering cell, and drops the cell that hits zero first.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::types::{check_shape, Coupling, Histogram, RectCostMatrix};

/// Optimal plan and cost of an exact transport solve.
#[derive(Debug, Clone)]
pub struct ExactOt {
    pub coupling: Coupling,
    pub objective: f64,
    pub pivots: usize,
}

/// Minimizes `<C, T>` over couplings of `h` and `g`, returning a vertex.
pub fn solve_exact_ot(cost: &RectCostMatrix, h: &Histogram, g: &Histogram) -> Result<ExactOt> {
    let (n, m) = cost.dim();
    check_shape("cost rows vs source marginal", h.len(), n)?;
    check_shape("cost columns vs target marginal", g.len(), m)?;
    let (plan, pivots) = transport_simplex(cost.matrix().view(), h.as_slice(), g.as_slice())?;
    let objective = inner_product(cost.matrix().view(), plan.view());
    Ok(ExactOt {
        coupling: Coupling::from_parts(plan, h.clone(), g.clone()),
        objective,
        pivots,
    })
}

pub(crate) fn inner_product(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Solves the balanced transportation problem on raw slices. Shapes must
/// already agree; the cost must be finite.
pub(crate) fn transport_simplex(
    cost: ArrayView2<'_, f64>,
    supply: &[f64],
    demand: &[f64],
) -> Result<(Array2<f64>, usize)> {
    let mut tableau = Tableau::northwest_corner(cost, supply, demand);
    let pivots = tableau.optimize()?;
    Ok((tableau.into_plan(), pivots))
}

struct Tableau<'a> {
    n: usize,
    m: usize,
    cost: ArrayView2<'a, f64>,
    flow: Vec<f64>,
    basic: Vec<bool>,
    row_adj: Vec<Vec<usize>>,
    col_adj: Vec<Vec<usize>>,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl<'a> Tableau<'a> {
    fn northwest_corner(cost: ArrayView2<'a, f64>, supply: &[f64], demand: &[f64]) -> Self {
        let (n, m) = cost.dim();
        let mut t = Tableau {
            n,
            m,
            cost,
            flow: vec![0.0; n * m],
            basic: vec![false; n * m],
            row_adj: vec![Vec::new(); n],
            col_adj: vec![Vec::new(); m],
            u: vec![0.0; n],
            v: vec![0.0; m],
        };
        let mut s = supply.to_vec();
        let mut d = demand.to_vec();
        let (mut i, mut j) = (0, 0);
        // Exactly n + m - 1 cells: every step advances i or j once.
        loop {
            let x = s[i].min(d[j]);
            t.add_basic(i, j, x);
            s[i] -= x;
            d[j] -= x;
            if i == n - 1 && j == m - 1 {
                break;
            }
            let advance_row = if j == m - 1 {
                true
            } else if i == n - 1 {
                false
            } else {
                s[i] <= d[j]
            };
            if advance_row {
                i += 1;
            } else {
                j += 1;
            }
        }
        t
    }

    fn add_basic(&mut self, i: usize, j: usize, x: f64) {
        let idx = i * self.m + j;
        self.basic[idx] = true;
        self.flow[idx] = x;
        self.row_adj[i].push(j);
        self.col_adj[j].push(i);
    }

    fn remove_basic(&mut self, i: usize, j: usize) {
        let idx = i * self.m + j;
        self.basic[idx] = false;
        self.flow[idx] = 0.0;
        self.row_adj[i].retain(|&c| c != j);
        self.col_adj[j].retain(|&r| r != i);
    }

    fn compute_potentials(&mut self) {
        let (n, m) = (self.n, self.m);
        let mut row_seen = vec![false; n];
        let mut col_seen = vec![false; m];
        // Node ids: rows are 0..n, columns are n..n+m.
        let mut stack = vec![0usize];
        row_seen[0] = true;
        self.u[0] = 0.0;
        while let Some(node) = stack.pop() {
            if node < n {
                let i = node;
                for &j in &self.row_adj[i] {
                    if !col_seen[j] {
                        col_seen[j] = true;
                        self.v[j] = self.cost[[i, j]] - self.u[i];
                        stack.push(n + j);
                    }
                }
            } else {
                let j = node - n;
                for &i in &self.col_adj[j] {
                    if !row_seen[i] {
                        row_seen[i] = true;
                        self.u[i] = self.cost[[i, j]] - self.v[j];
                        stack.push(i);
                    }
                }
            }
        }
        debug_assert!(row_seen.iter().all(|&s| s) && col_seen.iter().all(|&s| s));
    }

    /// Tree path from column `j` to row `i`, as cells ordered from the
    /// column end.
    fn tree_path(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let (n, m) = (self.n, self.m);
        let mut parent = vec![usize::MAX; n + m];
        let start = i;
        let goal = n + j;
        parent[start] = start;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            if node == goal {
                break;
            }
            if node < n {
                for &c in &self.row_adj[node] {
                    if parent[n + c] == usize::MAX {
                        parent[n + c] = node;
                        queue.push_back(n + c);
                    }
                }
            } else {
                for &r in &self.col_adj[node - n] {
                    if parent[r] == usize::MAX {
                        parent[r] = node;
                        queue.push_back(r);
                    }
                }
            }
        }
        let mut path = Vec::new();
        let mut node = goal;
        while node != start {
            let prev = parent[node];
            let cell = if node < n { (node, prev - n) } else { (prev, node - n) };
            path.push(cell);
            node = prev;
        }
        path
    }

    fn optimize(&mut self) -> Result<usize> {
        let (n, m) = (self.n, self.m);
        if n == 1 || m == 1 {
            return Ok(0);
        }
        let scale = self.cost.iter().fold(1.0_f64, |acc, c| acc.max(c.abs()));
        let eps = 1e-11 * scale;
        let max_pivots = 50 * n * m + 1000;
        let mut degenerate_run = 0usize;

        for pivot in 0..max_pivots {
            self.compute_potentials();

            // Dantzig pricing, lowest index on ties. After a long run of
            // degenerate pivots, fall back to Bland's first-improving rule.
            let bland = degenerate_run > n + m;
            let mut entering: Option<(usize, usize)> = None;
            let mut best = -eps;
            'scan: for i in 0..n {
                for j in 0..m {
                    if self.basic[i * m + j] {
                        continue;
                    }
                    let reduced = self.cost[[i, j]] - self.u[i] - self.v[j];
                    if reduced < best {
                        best = reduced;
                        entering = Some((i, j));
                        if bland {
                            break 'scan;
                        }
                    }
                }
            }
            let Some((ei, ej)) = entering else {
                return Ok(pivot);
            };

            let path = self.tree_path(ei, ej);
            debug_assert!(path.len() % 2 == 1);
            // Odd positions (from the column end) lose flow.
            let mut theta = f64::INFINITY;
            let mut leaving = (usize::MAX, usize::MAX);
            for &(r, c) in path.iter().step_by(2) {
                let f = self.flow[r * m + c];
                if f < theta || (f == theta && (r, c) < leaving) {
                    theta = f;
                    leaving = (r, c);
                }
            }
            let theta = theta.max(0.0);
            for (k, &(r, c)) in path.iter().enumerate() {
                let idx = r * m + c;
                if k % 2 == 0 {
                    self.flow[idx] = (self.flow[idx] - theta).max(0.0);
                } else {
                    self.flow[idx] += theta;
                }
            }
            self.remove_basic(leaving.0, leaving.1);
            self.add_basic(ei, ej, theta);

            if theta > 0.0 {
                degenerate_run = 0;
            } else {
                degenerate_run += 1;
            }
        }
        Err(Error::NoConvergence {
            iterations: max_pivots,
            residual: f64::NAN,
        })
    }

    fn into_plan(self) -> Array2<f64> {
        Array2::from_shape_vec((self.n, self.m), self.flow).expect("flow has n*m entries")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_ot::solve_lap;
    use crate::types::{marginal_violation, validate_histogram};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cost(a: Array2<f64>) -> RectCostMatrix {
        RectCostMatrix::new(a).unwrap()
    }

    #[test]
    fn zero_cost_is_free() {
        let h = validate_histogram(&[0.2, 0.3, 0.5]).unwrap();
        let g = validate_histogram(&[0.6, 0.4]).unwrap();
        let out = solve_exact_ot(&cost(Array2::zeros((3, 2))), &h, &g).unwrap();
        assert_eq!(out.objective, 0.0);
        let (r, c) = marginal_violation(&out.coupling);
        assert!(r < 1e-15 && c < 1e-15);
    }

    #[test]
    fn diagonal_and_anti_diagonal_examples() {
        let h = Histogram::uniform(2).unwrap();
        let out = solve_exact_ot(&cost(array![[0.0, 1.0], [1.0, 0.0]]), &h, &h).unwrap();
        assert_eq!(out.objective, 0.0);
        assert_eq!(out.coupling.plan(), &array![[0.5, 0.0], [0.0, 0.5]]);

        // Enumerating both vertices: 0.5 * (1 + 2) = 1.5 beats 0.5 * (4 + 3) = 3.5.
        let out = solve_exact_ot(&cost(array![[4.0, 1.0], [2.0, 3.0]]), &h, &h).unwrap();
        assert!((out.objective - 1.5).abs() < 1e-15);
        assert_eq!(out.coupling.plan(), &array![[0.0, 0.5], [0.5, 0.0]]);
    }

    #[test]
    fn dimension_mismatch() {
        let h = Histogram::uniform(2).unwrap();
        let g = Histogram::uniform(3).unwrap();
        assert!(matches!(
            solve_exact_ot(&cost(Array2::zeros((2, 2))), &h, &g),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn uniform_marginals_give_scaled_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=7 {
            for _ in 0..15 {
                let c = Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..10.0));
                let h = Histogram::uniform(n).unwrap();
                let out = solve_exact_ot(&cost(c.clone()), &h, &h).unwrap();
                let (_, lap) = solve_lap(&cost(c)).unwrap();
                assert!((out.objective - lap / n as f64).abs() < 1e-12);
                let k = 1.0 / n as f64;
                for &x in out.coupling.plan().iter() {
                    assert!(x.abs() < 1e-12 || (x - k).abs() < 1e-12, "entry {x}");
                }
            }
        }
    }

    #[test]
    fn degenerate_zero_mass_atoms() {
        let h = validate_histogram(&[0.0, 0.5, 0.5]).unwrap();
        let g = validate_histogram(&[0.5, 0.0, 0.5]).unwrap();
        let c = array![[1.0, 2.0, 3.0], [3.0, 1.0, 2.0], [2.0, 3.0, 1.0]];
        let out = solve_exact_ot(&cost(c), &h, &g).unwrap();
        let plan = out.coupling.plan();
        assert!(plan.row(0).iter().all(|&x| x == 0.0));
        assert!(plan.column(1).iter().all(|&x| x == 0.0));
        // Both pairings of rows {1, 2} with columns {0, 2} cost 2.0.
        assert!((out.objective - 2.0).abs() < 1e-12);
    }
}
