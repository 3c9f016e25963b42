//! Entropic optimal transport and Sinkhorn projection onto the coupling
//! polytope.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::simplex::inner_product;
use crate::error::{Error, Result};
use crate::types::{check_shape, max_abs_diff, Coupling, Histogram, RectCostMatrix};

/// Cost range over epsilon above which the solver switches to log-domain
/// updates.
pub const LOG_DOMAIN_THRESHOLD: f64 = 500.0;

/// Sweep cap for [`sinkhorn_project`].
pub const PROJECTION_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct SinkhornOutput {
    pub coupling: Coupling,
    /// Unregularized transport cost `<C, plan>`.
    pub objective: f64,
    pub iterations: usize,
    /// False when `max_iter` ran out before the marginals reached `tol`;
    /// the last iterate is still returned.
    pub converged: bool,
    pub log_domain: bool,
}

/// Entropy-regularized OT with regularization `epsilon`.
pub fn sinkhorn(
    cost: &RectCostMatrix,
    h: &Histogram,
    g: &Histogram,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<SinkhornOutput> {
    let (n, m) = cost.dim();
    check_shape("cost rows vs source marginal", h.len(), n)?;
    check_shape("cost columns vs target marginal", g.len(), m)?;
    sinkhorn_raw(cost.matrix().view(), h, g, epsilon, max_iter, tol)
}

pub(crate) fn sinkhorn_raw(
    cost: ArrayView2<'_, f64>,
    h: &Histogram,
    g: &Histogram,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<SinkhornOutput> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tol must be positive, got {tol}")));
    }
    let lo = cost.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cost.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_domain = (hi - lo) / epsilon > LOG_DOMAIN_THRESHOLD;
    let (plan, iterations, converged) = if log_domain {
        log_sinkhorn(cost, h, g, epsilon, max_iter, tol)?
    } else {
        scaling_sinkhorn(cost, lo, h, g, epsilon, max_iter, tol)?
    };
    let objective = inner_product(cost, plan.view());
    Ok(SinkhornOutput {
        coupling: Coupling::from_parts(plan, h.clone(), g.clone()),
        objective,
        iterations,
        converged,
        log_domain,
    })
}

fn scaling_sinkhorn(
    cost: ArrayView2<'_, f64>,
    shift: f64,
    h: &Histogram,
    g: &Histogram,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(Array2<f64>, usize, bool)> {
    let (n, m) = cost.dim();
    let hw = h.weights();
    let gw = g.weights();
    // Shifting by the minimum cost leaves the plan unchanged and keeps the
    // kernel in (0, 1].
    let kernel = cost.mapv(|c| (-(c - shift) / epsilon).exp());
    let mut u = Array1::<f64>::ones(n);
    let mut v = Array1::<f64>::ones(m);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let kv = kernel.dot(&v);
        for i in 0..n {
            u[i] = safe_ratio(hw[i], kv[i])?;
        }
        let ktu = kernel.t().dot(&u);
        for j in 0..m {
            v[j] = safe_ratio(gw[j], ktu[j])?;
        }
        // Columns are exact after the v-update; rows carry the residual.
        let rows = &u * &kernel.dot(&v);
        if max_abs_diff(rows.view(), hw) < tol {
            converged = true;
            break;
        }
    }
    let plan = Array2::from_shape_fn((n, m), |(i, j)| u[i] * kernel[[i, j]] * v[j]);
    if plan.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalUnderflow);
    }
    Ok((plan, iterations, converged))
}

fn safe_ratio(mass: f64, denom: f64) -> Result<f64> {
    if mass == 0.0 {
        return Ok(0.0);
    }
    if denom > 0.0 && denom.is_finite() {
        let r = mass / denom;
        if r.is_finite() {
            return Ok(r);
        }
    }
    Err(Error::NumericalUnderflow)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn log_sinkhorn(
    cost: ArrayView2<'_, f64>,
    h: &Histogram,
    g: &Histogram,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(Array2<f64>, usize, bool)> {
    let (n, m) = cost.dim();
    let log_h: Vec<f64> = h.weights().iter().map(|x| x.ln()).collect();
    let log_g: Vec<f64> = g.weights().iter().map(|x| x.ln()).collect();
    // Dual potentials; plan_ij = exp((f_i + g_j - C_ij) / eps).
    let mut f = vec![0.0_f64; n];
    let mut gp = vec![0.0_f64; m];

    let row_lse = |f_i: f64, gp: &[f64], i: usize| {
        log_sum_exp((0..m).map(move |j| (f_i + gp[j] - cost[[i, j]]) / epsilon))
    };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        for i in 0..n {
            f[i] = if log_h[i] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                epsilon * (log_h[i] - row_lse(0.0, &gp, i))
            };
        }
        for j in 0..m {
            gp[j] = if log_g[j] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                let lse = log_sum_exp((0..n).map(|i| (f[i] - cost[[i, j]]) / epsilon));
                epsilon * (log_g[j] - lse)
            };
        }
        let mut err = 0.0_f64;
        for i in 0..n {
            let row = if f[i] == f64::NEG_INFINITY { 0.0 } else { row_lse(f[i], &gp, i).exp() };
            err = err.max((row - h.weights()[i]).abs());
        }
        if !err.is_finite() {
            return Err(Error::NumericalUnderflow);
        }
        if err < tol {
            converged = true;
            break;
        }
    }
    let plan = Array2::from_shape_fn((n, m), |(i, j)| {
        let e = (f[i] + gp[j] - cost[[i, j]]) / epsilon;
        if e == f64::NEG_INFINITY || e.is_nan() {
            0.0
        } else {
            e.exp()
        }
    });
    if plan.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalUnderflow);
    }
    Ok((plan, iterations, converged))
}

/// Alternately rescales rows and columns of a strictly positive matrix
/// until both marginal errors drop below `delta`.
pub fn sinkhorn_project(raw: &Array2<f64>, h: &Histogram, g: &Histogram, delta: f64) -> Result<Coupling> {
    let (n, m) = raw.dim();
    check_shape("projection rows", h.len(), n)?;
    check_shape("projection columns", g.len(), m)?;
    if !(delta > 0.0) {
        return Err(Error::InvalidConfig(format!("delta must be positive, got {delta}")));
    }
    if raw.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidConfig("projection input must be strictly positive".into()));
    }
    let hw = h.weights();
    let gw = g.weights();
    let mut plan = raw.clone();

    let errors = |p: &Array2<f64>| {
        (
            max_abs_diff(p.sum_axis(Axis(1)).view(), hw),
            max_abs_diff(p.sum_axis(Axis(0)).view(), gw),
        )
    };

    let mut residual = errors(&plan);
    let mut sweeps = 0;
    while residual.0 >= delta || residual.1 >= delta {
        if sweeps == PROJECTION_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                iterations: sweeps,
                residual: residual.0.max(residual.1),
            });
        }
        let rows = plan.sum_axis(Axis(1));
        for (i, mut row) in plan.axis_iter_mut(Axis(0)).enumerate() {
            let s = hw[i] / rows[i];
            row.mapv_inplace(|x| x * s);
        }
        let cols = plan.sum_axis(Axis(0));
        for (j, mut col) in plan.axis_iter_mut(Axis(1)).enumerate() {
            let s = if cols[j] > 0.0 { gw[j] / cols[j] } else { 0.0 };
            col.mapv_inplace(|x| x * s);
        }
        sweeps += 1;
        residual = errors(&plan);
    }
    Ok(Coupling::from_parts(plan, h.clone(), g.clone()))
}

/// Moves an approximately feasible plan onto the coupling polytope: scale
/// down rows and columns that carry too much mass, then redistribute the
/// deficits as a rank-one correction.
pub(crate) fn round_to_polytope(plan: &Array2<f64>, h: &Histogram, g: &Histogram) -> Array2<f64> {
    let hw = h.weights();
    let gw = g.weights();
    let mut x = plan.clone();
    let rows = x.sum_axis(Axis(1));
    for (i, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
        if rows[i] > hw[i] {
            let s = hw[i] / rows[i];
            row.mapv_inplace(|v| v * s);
        }
    }
    let cols = x.sum_axis(Axis(0));
    for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
        if cols[j] > gw[j] {
            let s = gw[j] / cols[j];
            col.mapv_inplace(|v| v * s);
        }
    }
    let err_r: Array1<f64> = (&hw - &x.sum_axis(Axis(1))).mapv(|v| v.max(0.0));
    let err_c: Array1<f64> = (&gw - &x.sum_axis(Axis(0))).mapv(|v| v.max(0.0));
    let total = err_r.sum();
    if total > 0.0 {
        for ((i, j), v) in x.indexed_iter_mut() {
            *v += err_r[i] * err_c[j] / total;
        }
    }
    x
}
