//! Step (ii) of the reconstruction: solve the main nonlinear equation
//! `-v(pi - x) = R(pi, x; q, M)` for the convolution kernel `M`.
//!
//! The solve mirrors the constructive uniqueness argument: a fixed-point
//! contraction on a small initial interval `(0, delta)`, interval-doubling
//! continuation steps that are exactly linear in the new piece of `M`, and a
//! weighted reformulation on the final block `(pi/2, pi)` where the plain
//! equation degenerates.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::charfield::{mean_check, recover_v, ProductDelta};
use crate::forward::Spectrum;
use crate::kernel_ops::{
    build_phi_tables, phi_row, solve_f_slice, solve_p, solve_p_capped, trap_frac, TriFlat,
};
use crate::numgrid::{cumtrap, interp_at, norms, quad_integrate, SampledFunction};
use crate::{Error, Result};

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// The data `(q, v)` of one main-equation solve.
#[derive(Debug, Clone)]
pub struct MainEqProblem {
    pub q: SampledFunction,
    pub v: SampledFunction,
}

impl MainEqProblem {
    /// Builds the problem, enforcing the mean compatibility
    /// `int v = (1/2) int q` (the solvability condition) within
    /// `tol_mean = 1e-2 (1 + ||q||)`.
    pub fn new(q: SampledFunction, v: SampledFunction) -> Result<Self> {
        if q.grid != v.grid {
            return Err(Error::Argument("q and v live on different grids".into()));
        }
        let n = q.grid.panels();
        let residual =
            (quad_integrate(&v, 0, n)? - 0.5 * quad_integrate(&q, 0, n)?).norm();
        let tol = Self::tol_mean(&q);
        if residual > tol {
            return Err(Error::InconsistentData(format!(
                "mean identity violated: |int v - int q / 2| = {residual:.3e} > {tol:.3e}"
            )));
        }
        Ok(MainEqProblem { q, v })
    }

    pub fn tol_mean(q: &SampledFunction) -> f64 {
        1e-2 * (1.0 + norms(q).l2)
    }
}

/// Convergence log of one inversion.
#[derive(Debug, Clone, Default)]
pub struct SolveTrace {
    /// Right edges (node indices) of the processed blocks.
    pub block_rights: Vec<usize>,
    /// Fixed-point iterations spent per block (1 for linear blocks).
    pub block_iters: Vec<usize>,
    /// Last increment (contraction) or block update norm per block.
    pub block_residuals: Vec<f64>,
    /// Residual of the mean identity of the recovered `v`.
    pub mean_residual: f64,
    /// L2 residual of the main equation at the final `M`.
    pub final_residual: f64,
    /// `|int z|` from the weighted final solve.
    pub z_mean: f64,
}

/// The weighted unknown pair `h = (pi - x) M` and its Volterra transform `z`.
#[derive(Debug, Clone)]
pub struct WeightedUnknown {
    pub h: SampledFunction,
    pub z: SampledFunction,
}

/// Forward transform `z(x) = h(x) - int_0^x h(t) / (pi - t) dt`.
pub fn h_to_z(h: &SampledFunction) -> SampledFunction {
    let grid = h.grid;
    let n = grid.panels();
    let hh = grid.step();
    let mut z = SampledFunction::zeros(grid);
    let mut acc = C0;
    let weight = |i: usize| -> Complex64 {
        if i == n {
            C0 // h / (pi - x) stays integrable; endpoint carries the limit 0
        } else {
            h.values[i] / (PI - grid.node(i))
        }
    };
    z.values[0] = h.values[0];
    for i in 1..=n {
        acc += 0.5 * hh * (weight(i - 1) + weight(i));
        z.values[i] = h.values[i] - acc;
    }
    z
}

/// Inverse transform `h(x) = z(x) + (1 / (pi - x)) int_0^x z(t) dt`.
pub fn z_to_h(z: &SampledFunction) -> SampledFunction {
    let grid = z.grid;
    let n = grid.panels();
    let hh = grid.step();
    let zc = cumtrap(&z.values, hh);
    let mut h = SampledFunction::zeros(grid);
    for i in 0..n {
        h.values[i] = z.values[i] + zc[i] / (PI - grid.node(i));
    }
    h.values[n] = z.values[n] + zc[n] / (0.5 * hh); // capped; unused downstream
    h
}

/// The free part `g(x) = ((q(pi - x/2) + q(x/2)) / 2 - 2 v(pi - x)) / (pi - x)`
/// of the fixed-point form of the main equation.
pub fn g_term(q: &SampledFunction, v: &SampledFunction) -> Result<SampledFunction> {
    if q.grid != v.grid {
        return Err(Error::Argument("q and v live on different grids".into()));
    }
    let grid = q.grid;
    let n = grid.panels();
    let mut g = SampledFunction::zeros(grid);
    for j in 0..n {
        let jfl = j as f64;
        let num = 0.5
            * (interp_at(&q.values, n as f64 - jfl / 2.0) + interp_at(&q.values, jfl / 2.0))
            - 2.0 * v.values[n - j];
        g.values[j] = num / (PI - grid.node(j));
    }
    Ok(g)
}

/// Evaluates the quadratic part of the fixed-point form at nodes
/// `0..=xmax` given an already-solved kernel table.
fn apply_dq_with(
    p: &TriFlat,
    q: &SampledFunction,
    m: &SampledFunction,
    xmax: usize,
) -> Vec<Complex64> {
    let grid = q.grid;
    let n = grid.panels();
    let nfl = n as f64;
    let h = grid.step();
    let mc = cumtrap(&m.values, h);
    let qv = &q.values;
    let mv = &m.values;
    let mut out = vec![C0; xmax + 1];
    for (j, slot) in out.iter_mut().enumerate() {
        if j == n {
            continue;
        }
        let jfl = j as f64;
        let t1 = mc[j];
        let t2 = -trap_frac(|s| interp_at(qv, s) * p.at(s, jfl), jfl, nfl, h);
        let t3 = trap_frac(
            |s| interp_at(qv, s) * p.at(s, 2.0 * s - jfl),
            jfl / 2.0,
            jfl,
            h,
        );
        let t4 = trap_frac(
            |s| interp_at(qv, s) * p.at(s, 2.0 * (s - nfl) + jfl),
            nfl - jfl / 2.0,
            nfl,
            h,
        );
        let t5 = -trap_frac(
            |mm| {
                let a = trap_frac(|xi| p.at(xi - mm, jfl - mm), jfl, nfl, h);
                let b = trap_frac(
                    |xi| p.at(xi - mm, 2.0 * xi - jfl - mm),
                    (jfl + mm) / 2.0,
                    jfl,
                    h,
                );
                let c = trap_frac(
                    |xi| p.at(xi - mm, 2.0 * (xi - nfl) + jfl - mm),
                    (mm - jfl) / 2.0 + nfl,
                    nfl,
                    h,
                );
                interp_at(mv, mm) * (a - b - c)
            },
            0.0,
            jfl,
            h,
        );
        *slot = (t1 + t2 + t3 + t4 + t5) / (PI - grid.node(j));
    }
    out
}

/// The quadratic operator of the fixed-point form, `D_q M`, on the full
/// interval. Solves the kernel table internally.
pub fn apply_dq(m: &SampledFunction, q: &SampledFunction) -> Result<SampledFunction> {
    let grid = q.grid;
    let n = grid.panels();
    let (p, _) = solve_p_capped(q, m, n)?;
    let values = apply_dq_with(&p, q, m, n);
    SampledFunction::from_values(grid, values)
}

fn l2_on_prefix(vals: &[Complex64], upto: usize, h: f64) -> f64 {
    let mut s = 0.0;
    for (i, v) in vals.iter().take(upto + 1).enumerate() {
        let w = if i == 0 || i == upto { 0.5 } else { 1.0 };
        s += w * v.norm_sqr();
    }
    (s * h).sqrt()
}

/// Fixed-point solve of `M = g + D_q M` on `(0, delta)`; only values of `M`
/// on `(0, delta)` influence the restricted equations, so the kernel march is
/// capped at level `delta`.
///
/// Returns the restricted solution (zero beyond `delta`) with the iteration
/// count and last increment.
pub fn local_contraction(
    problem: &MainEqProblem,
    delta_idx: usize,
) -> Result<(SampledFunction, usize, f64)> {
    let grid = problem.q.grid;
    let n = grid.panels();
    let h = grid.step();
    if delta_idx == 0 || delta_idx > n / 2 {
        return Err(Error::Argument(format!(
            "contraction interval index {delta_idx} outside 1..={}",
            n / 2
        )));
    }
    let d = delta_idx;
    let g = g_term(&problem.q, &problem.v)?;
    let mut m = SampledFunction::zeros(grid);
    for i in 0..=d {
        m.values[i] = g.values[i];
    }
    let scale = l2_on_prefix(&g.values, d, h).max(1e-30);
    let tol_fix = 1e-8;
    let max_fix = 50;
    let mut prev_inc = f64::INFINITY;
    let mut growth_streak = 0usize;
    let mut last_inc = f64::NAN;
    for it in 1..=max_fix {
        let (p, _) = solve_p_capped(&problem.q, &m, d)?;
        let dq = apply_dq_with(&p, &problem.q, &m, d);
        let mut inc = 0.0f64;
        let mut next = SampledFunction::zeros(grid);
        for i in 0..=d {
            let val = g.values[i] + dq[i];
            inc = inc.max((val - m.values[i]).norm());
            next.values[i] = val;
        }
        m = next;
        last_inc = inc;
        if inc <= tol_fix * scale {
            return Ok((m, it, inc));
        }
        if inc > prev_inc {
            growth_streak += 1;
            if growth_streak >= 3 {
                return Err(Error::IterationFailure {
                    iters: it,
                    increment: inc,
                });
            }
        } else {
            growth_streak = 0;
        }
        prev_inc = inc;
    }
    Err(Error::IterationFailure {
        iters: max_fix,
        increment: last_inc,
    })
}

/// `phi(x) = -v(pi - x) - R(pi, x; q, M_prev)` at nodes `0..=upto`, with the
/// kernel table of `M_prev` capped at level `upto`.
fn continuation_rhs(
    problem: &MainEqProblem,
    m_prev: &SampledFunction,
    upto: usize,
) -> Result<(Vec<Complex64>, TriFlat, TriFlat)> {
    let grid = problem.q.grid;
    let n = grid.panels();
    let (p, cp) = solve_p_capped(&problem.q, m_prev, upto)?;
    let ptri = crate::kernel_ops::TriangleField {
        grid,
        tri: p,
    };
    let r = crate::kernel_ops::compute_r(&ptri, &problem.q, m_prev, n)?;
    let mut phi = vec![C0; upto + 1];
    for (j, slot) in phi.iter_mut().enumerate() {
        *slot = -problem.v.values[n - j] - r.values[j];
    }
    let crate::kernel_ops::TriangleField { tri, .. } = ptri;
    Ok((phi, tri, cp))
}

/// Rows `Phi(x, t; q, M_prev, M_prev)` for `t = t_lo..=t_hi`, each up to
/// `x = t + w_max(t)`; `w_max` is capped by `x_hi - t`.
fn phi_rows_range(
    q: &SampledFunction,
    m_prev: &SampledFunction,
    pt: &TriFlat,
    cpt: &TriFlat,
    t_lo: usize,
    t_hi: usize,
    x_hi: usize,
) -> Vec<Vec<Complex64>> {
    let grid = q.grid;
    let n = grid.panels();
    let h = grid.step();
    let (ptrow, ptdiag) = build_phi_tables(pt, h);
    (t_lo..=t_hi)
        .map(|t| {
            let w_max = x_hi - t;
            let (g, _) = solve_f_slice(&q.values, &m_prev.values, cpt, t, n, h, w_max);
            phi_row(
                &g,
                &ptrow,
                &ptdiag,
                &q.values,
                &m_prev.values,
                n,
                h,
                t,
                w_max,
            )
        })
        .collect()
}

/// One continuation block: with `M_prev` known on `(0, a)` (zero beyond),
/// solves the linear Volterra equation
/// `phi(x) = (pi - x)/2 M2(x) + int_a^x Phi(x, t) M2(t) dt`
/// for the update `M2` on `(a, new_right)` and returns `M_prev + M2`.
pub fn continuation_step(
    problem: &MainEqProblem,
    m_prev: &SampledFunction,
    a_idx: usize,
    new_right: usize,
) -> Result<SampledFunction> {
    let grid = problem.q.grid;
    let n = grid.panels();
    let h = grid.step();
    if new_right <= a_idx || new_right - a_idx > a_idx || new_right > n / 2 {
        return Err(Error::Argument(format!(
            "continuation block ({a_idx}, {new_right}] violates the causality bound"
        )));
    }
    let (phi_rhs, pt, cpt) = continuation_rhs(problem, m_prev, new_right)?;
    let rows = phi_rows_range(
        &problem.q, m_prev, &pt, &cpt, a_idx, new_right, new_right,
    );
    let phi_at = |x: usize, t: usize| rows[t - a_idx][x - t];
    let mut m2 = vec![C0; new_right + 1];
    m2[a_idx] = phi_rhs[a_idx] / ((PI - grid.node(a_idx)) / 2.0);
    for i in (a_idx + 1)..=new_right {
        let mut acc = 0.5 * h * phi_at(i, a_idx) * m2[a_idx];
        for t in (a_idx + 1)..i {
            acc += h * phi_at(i, t) * m2[t];
        }
        let diag = (PI - grid.node(i)) / 2.0 + 0.5 * h * phi_at(i, i).re;
        let diag = Complex64::new(diag, 0.5 * h * phi_at(i, i).im);
        if diag.norm() < 1e-12 {
            return Err(Error::IterationFailure {
                iters: i,
                increment: diag.norm(),
            });
        }
        m2[i] = (phi_rhs[i] - acc) / diag;
    }
    let mut out = m_prev.clone();
    for i in a_idx..=new_right {
        out.values[i] += m2[i];
    }
    Ok(out)
}

/// Final block: with `M_prev` known on `(0, pi/2)`, rewrites the linear
/// continuation equation in the weighted unknown `h = (pi - x) M2`, passes to
/// the transformed unknown `z`, marches `z` on `(pi/2, pi)`, and maps back
/// through `h(x) = z(x) - (pi - x)^{-1} int_x^pi z`.
///
/// Returns the merged kernel and `|int z|` (which must vanish for consistent
/// data).
pub fn final_weighted_solve(
    problem: &MainEqProblem,
    m_prev: &SampledFunction,
) -> Result<(SampledFunction, f64)> {
    let grid = problem.q.grid;
    let n = grid.panels();
    let h = grid.step();
    let d = n / 2;
    let (phi_rhs, pt, cpt) = continuation_rhs(problem, m_prev, n)?;
    let rows = phi_rows_range(&problem.q, m_prev, &pt, &cpt, d, n - 1, n);
    // psi(x, t) = (2 Phi(x, t) + 1) / (pi - t)
    let psi = |x: usize, t: usize| -> Complex64 {
        (2.0 * rows[t - d][x - t] + 1.0) / (PI - grid.node(t))
    };
    // theta(x, t) = psi(x, t) + int_t^x psi(x, tau) / (pi - tau) d tau,
    // the tau integral capped at the last regular node
    let theta = |x: usize, t: usize| -> Complex64 {
        let hi = x.min(n - 1);
        let mut acc = C0;
        if hi > t {
            let mut prev = psi(x, t) / (PI - grid.node(t));
            for tau in t..hi {
                let next = psi(x, tau + 1) / (PI - grid.node(tau + 1));
                acc += 0.5 * h * (prev + next);
                prev = next;
            }
        }
        psi(x, t) + acc
    };
    let mut z = vec![C0; n + 1];
    z[d] = 2.0 * phi_rhs[d];
    for i in (d + 1)..=n {
        let mut acc = 0.5 * h * theta(i, d) * z[d];
        for t in (d + 1)..i {
            acc += h * theta(i, t) * z[t];
        }
        let diag = if i < n {
            Complex64::new(1.0, 0.0) + 0.5 * h * theta(i, i)
        } else {
            Complex64::new(1.0, 0.0)
        };
        z[i] = (2.0 * phi_rhs[i] - acc) / diag;
    }
    let mut z_int = C0;
    for i in d..=n {
        let w = if i == d || i == n { 0.5 } else { 1.0 };
        z_int += w * z[i];
    }
    z_int *= h;
    let z_mean = z_int.norm();
    if z_mean > 10.0 * MainEqProblem::tol_mean(&problem.q) {
        return Err(Error::InconsistentData(format!(
            "weighted solve: |int z| = {z_mean:.3e} signals inconsistent data"
        )));
    }
    let mut out = m_prev.clone();
    for i in d..n {
        let mut tail = C0;
        for k in i..=n {
            let w = if k == i || k == n { 0.5 } else { 1.0 };
            tail += w * z[k];
        }
        tail *= h;
        let hval = z[i] - tail / (PI - grid.node(i));
        out.values[i] += hval / (PI - grid.node(i));
    }
    Ok((out, z_mean))
}

/// Full reconstruction: recover `v` from the spectrum, then march the main
/// equation through contraction, doubling continuation and the weighted final
/// block. Verifies the main-equation residual of the result.
pub fn invert(spectrum: &Spectrum, q: &SampledFunction) -> Result<(SampledFunction, SolveTrace)> {
    let grid = q.grid;
    let n = grid.panels();
    let h = grid.step();
    let stage = |s: &'static str, e: Error| Error::Stage {
        stage: s,
        source: Box::new(e),
    };

    let kv = spectrum.count().min(n / 2);
    let pd = ProductDelta::new(spectrum.clone());
    let v = recover_v(&pd, kv, grid).map_err(|e| stage("recover-v", e))?;
    let mut trace = SolveTrace {
        mean_residual: mean_check(&v, spectrum.omega),
        ..Default::default()
    };
    if trace.mean_residual > MainEqProblem::tol_mean(q) {
        return Err(Error::InconsistentData(format!(
            "mean check failed: residual {:.3e}",
            trace.mean_residual
        )));
    }
    let problem = MainEqProblem::new(q.clone(), v.clone())?;

    // adaptive first block: start at pi/8, halve while the fixed point is not
    // contracting, floor at pi/64
    let mut d = (n / 8).max(1);
    let d_min = (n / 64).max(1);
    let (mut m, iters, inc) = loop {
        match local_contraction(&problem, d) {
            Ok(res) => break res,
            Err(e) => {
                if d / 2 >= d_min {
                    d /= 2;
                } else {
                    return Err(stage("contraction", e));
                }
            }
        }
    };
    trace.block_rights.push(d);
    trace.block_iters.push(iters);
    trace.block_residuals.push(inc);

    let mut a = d;
    while a < n / 2 {
        let nr = (2 * a).min(n / 2);
        m = continuation_step(&problem, &m, a, nr).map_err(|e| stage("continuation", e))?;
        let upd = l2_on_prefix(&m.values[a..=nr].to_vec(), nr - a, h);
        trace.block_rights.push(nr);
        trace.block_iters.push(1);
        trace.block_residuals.push(upd);
        a = nr;
    }

    let (m_final, z_mean) =
        final_weighted_solve(&problem, &m).map_err(|e| stage("weighted-final", e))?;
    m = m_final;
    trace.z_mean = z_mean;
    trace.block_rights.push(n);
    trace.block_iters.push(1);

    // residual of the main equation at the recovered kernel
    let p = solve_p(q, &m).map_err(|e| stage("residual", e))?;
    let r = crate::kernel_ops::compute_r(&p, q, &m, n).map_err(|e| stage("residual", e))?;
    let mut res = SampledFunction::zeros(grid);
    for j in 0..=n {
        res.values[j] = v.values[n - j] + r.values[j];
    }
    trace.final_residual = norms(&res).l2;
    trace.block_residuals.push(trace.final_residual);
    let tol_main = 1e-3 * (1.0 + norms(&v).l2);
    if trace.final_residual > tol_main {
        return Err(Error::IterationFailure {
            iters: trace.block_rights.len(),
            increment: trace.final_residual,
        });
    }
    Ok((m, trace))
}
