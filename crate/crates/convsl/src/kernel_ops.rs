//! Volterra-type integral equations for the transformation-operator kernel
//! `P(x,t)`, its t-derivative field `R`, the three-variable linearization
//! kernel `F(x,t,tau)`, and the continuation kernel `Phi`.
//!
//! All equations here couple the unknown at level `t` only to values with a
//! strictly smaller second argument, so a single sweep increasing in `t`
//! solves the discrete system; a short inner iteration per level handles the
//! implicit trapezoid endpoint. Running integral tables keep the sweep at
//! `O(n^3)` total.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::numgrid::{cumtrap, interp_at, Grid, SampledFunction};
use crate::{Error, Result};

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Flat lower-triangle storage, `size` rows, entry `(i, j)` for `j <= i`.
#[derive(Debug, Clone)]
pub(crate) struct TriFlat {
    pub size: usize,
    v: Vec<Complex64>,
}

impl TriFlat {
    pub fn new(size: usize) -> Self {
        TriFlat {
            size,
            v: vec![C0; size * (size + 1) / 2],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i < self.size);
        i * (i + 1) / 2 + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.v[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, val: Complex64) {
        let k = self.idx(i, j);
        self.v[k] = val;
    }

    /// Bilinear interpolation at fractional (row, level), clamped into the
    /// triangle.
    pub fn at(&self, r: f64, l: f64) -> Complex64 {
        let n = self.size - 1;
        let r0 = r.floor() as isize;
        let l0 = l.floor() as isize;
        let fr = r - r0 as f64;
        let fl = l - l0 as f64;
        let g = |a: isize, b: isize| -> Complex64 {
            let a = a.clamp(0, n as isize) as usize;
            let b = b.clamp(0, a as isize) as usize;
            self.get(a, b)
        };
        g(r0, l0) * (1.0 - fr) * (1.0 - fl)
            + g(r0 + 1, l0) * fr * (1.0 - fl)
            + g(r0, l0 + 1) * (1.0 - fr) * fl
            + g(r0 + 1, l0 + 1) * fr * fl
    }
}

/// Complex samples of a two-variable kernel on the triangle
/// `0 <= t <= x <= pi`.
#[derive(Debug, Clone)]
pub struct TriangleField {
    pub grid: Grid,
    pub(crate) tri: TriFlat,
}

impl TriangleField {
    pub fn zeros(grid: Grid) -> Self {
        TriangleField {
            grid,
            tri: TriFlat::new(grid.nodes()),
        }
    }

    /// Value at node pair `(x_i, t_j)`, `j <= i`.
    pub fn value(&self, i: usize, j: usize) -> Complex64 {
        self.tri.get(i, j)
    }
}

/// Complex samples of a three-variable kernel on the pyramid
/// `0 <= tau <= t <= x <= pi` (x-index, t-index, tau-index).
#[derive(Debug, Clone)]
pub struct PyramidField {
    pub grid: Grid,
    v: Vec<Complex64>,
}

impl PyramidField {
    pub fn zeros(grid: Grid) -> Self {
        let n1 = grid.nodes();
        PyramidField {
            grid,
            v: vec![C0; n1 * (n1 + 1) * (n1 + 2) / 6],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(k <= j && j <= i && i < self.grid.nodes());
        i * (i + 1) * (i + 2) / 6 + j * (j + 1) / 2 + k
    }

    /// Value at node triple `(x_i, t_j, tau_k)`, `k <= j <= i`.
    pub fn value(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.v[self.idx(i, j, k)]
    }

    fn set(&mut self, i: usize, j: usize, k: usize, val: Complex64) {
        let p = self.idx(i, j, k);
        self.v[p] = val;
    }
}

/// Trapezoid quadrature of `f` over the fractional index range `[lo, hi]`
/// with unit spacing `h`; integer indices are the grid nodes.
pub(crate) fn trap_frac(mut f: impl FnMut(f64) -> Complex64, lo: f64, hi: f64, h: f64) -> Complex64 {
    if hi <= lo + 1e-12 {
        return C0;
    }
    let i0 = (lo - 1e-12).ceil() as usize;
    let i1 = (hi + 1e-12).floor() as usize;
    let mut s = C0;
    let mut prev = f(i0 as f64);
    for k in i0..i1 {
        let next = f((k + 1) as f64);
        s += 0.5 * h * (prev + next);
        prev = next;
    }
    if i0 as f64 - lo > 1e-12 {
        s += 0.5 * (i0 as f64 - lo) * h * (f(lo) + f(i0 as f64));
    }
    if hi - i1 as f64 > 1e-12 {
        s += 0.5 * (hi - i1 as f64) * h * (f(i1 as f64) + f(hi));
    }
    s
}

/// Diagonal-direction integral `int_{c/2}^{c} g(s + d, 2s - c) ds` with the
/// odd-`c` partial panel hitting level 0 at a half-integer row.
fn diag_int(g: &TriFlat, d: usize, c: usize, h: f64) -> Complex64 {
    if c == 0 {
        return C0;
    }
    let half = c / 2;
    let lo = c - half;
    let mut s = C0;
    let mut prev = g.get(lo + d, 2 * lo - c);
    for k in lo..c {
        let next = g.get(k + 1 + d, 2 * (k + 1) - c);
        s += 0.5 * h * (prev + next);
        prev = next;
    }
    if c % 2 == 1 {
        let f_lo = 0.5 * (g.get(half + d, 0) + g.get(half + 1 + d, 0));
        s += 0.25 * h * (f_lo + g.get(lo + d, 2 * lo - c));
    }
    s
}

/// Like `diag_int` but with a scalar weight sampled at the absolute row
/// position `s + d` (linear interpolation off-node).
fn diag_int_weighted(
    g: &TriFlat,
    d: usize,
    c: usize,
    h: f64,
    weight: &[Complex64],
) -> Complex64 {
    if c == 0 {
        return C0;
    }
    let half = c / 2;
    let lo = c - half;
    let mut s = C0;
    let mut prev = weight[lo + d] * g.get(lo + d, 2 * lo - c);
    for k in lo..c {
        let next = weight[k + 1 + d] * g.get(k + 1 + d, 2 * (k + 1) - c);
        s += 0.5 * h * (prev + next);
        prev = next;
    }
    if c % 2 == 1 {
        let w_lo = interp_at(weight, half as f64 + 0.5 + d as f64);
        let g_lo = 0.5 * (g.get(half + d, 0) + g.get(half + 1 + d, 0));
        let first = weight[lo + d] * g.get(lo + d, 2 * lo - c);
        s += 0.25 * h * (w_lo * g_lo + first);
    }
    s
}

/// Falling-diagonal cumulatives: `rows[r][l] = diag_int(g, r - l, l)`, built
/// incrementally since extending a diagonal by one panel leaves the partial
/// base panel untouched for either parity.
pub(crate) struct DiagCum {
    rows: Vec<Vec<Complex64>>,
}

impl DiagCum {
    pub fn build(g: &TriFlat, h: f64, lvl_max: usize) -> Self {
        let n = g.size - 1;
        let mut rows: Vec<Vec<Complex64>> = Vec::with_capacity(n + 1);
        for r in 0..=n {
            let lmax = r.min(lvl_max);
            let mut row = vec![C0; lmax + 1];
            if lmax >= 1 {
                let f_lo = 0.5 * (g.get(r - 1, 0) + g.get(r, 0));
                row[1] = 0.25 * h * (f_lo + g.get(r, 1));
            }
            for l in 2..=lmax {
                row[l] = rows[r - 1][l - 2] + 0.5 * h * (g.get(r - 1, l - 2) + g.get(r, l));
            }
            rows.push(row);
        }
        DiagCum { rows }
    }

    /// `diag_int(g, d, c)` by table lookup.
    #[inline]
    pub fn at(&self, d: usize, c: usize) -> Complex64 {
        self.rows[d + c][c]
    }
}

/// Row-direction cumulatives of a triangle: `rows[l][u - l] = int_{x_l}^{x_u}
/// g(s, x_l) ds` for `u >= l`.
struct RowCum {
    rows: Vec<Vec<Complex64>>,
}

impl RowCum {
    fn build(g: &TriFlat, h: f64, lvl_max: usize) -> Self {
        let n = g.size - 1;
        let mut rows = Vec::with_capacity(lvl_max + 1);
        for l in 0..=lvl_max.min(n) {
            let mut row = vec![C0; n - l + 1];
            for u in (l + 1)..=n {
                row[u - l] = row[u - l - 1] + 0.5 * h * (g.get(u - 1, l) + g.get(u, l));
            }
            rows.push(row);
        }
        RowCum { rows }
    }

    /// `int_{x_a}^{x_b} g(s, x_l) ds` for `l <= a <= b`.
    #[inline]
    fn range(&self, l: usize, a: usize, b: usize) -> Complex64 {
        self.rows[l][b - l] - self.rows[l][a - l]
    }
}

/// Single t-marching sweep for the kernel equation family. `qloc` is the
/// (possibly shifted) potential on the local grid of `nn + 1` nodes, `m` the
/// unshifted convolution kernel, `f0` the free term at node pairs. Levels
/// above `lvl_max` are left zero.
///
/// Returns the kernel `G` and its level-cumulative `CG[i][l] = int_0^{x_l}
/// G(x_i, xi) d xi`.
pub(crate) fn march(
    qloc: &[Complex64],
    m: &[Complex64],
    nn: usize,
    h: f64,
    f0: impl Fn(usize, usize) -> Complex64,
    lvl_max: usize,
    inner_iters: usize,
) -> (TriFlat, TriFlat) {
    let lvl_max = lvl_max.min(nn);
    let mut g = TriFlat::new(nn + 1);
    let mut cg = TriFlat::new(nn + 1);
    // hn[l][k - l] = int_{x_l}^{x_k} CG(u, x_l) du
    let mut hn: Vec<Vec<Complex64>> = Vec::with_capacity(lvl_max + 1);
    // dt[a][w] = int_0^{w/2} CG(a - y, w - 2y) dy, w <= min(a, lvl_max)
    let mut dt: Vec<Vec<Complex64>> = (0..=nn)
        .map(|a| vec![C0; a.min(lvl_max) + 1])
        .collect();

    // int_0^{w/2} CG(a - y, w - 2y) dy with an optional override column for
    // the level currently being solved.
    let eval_d = |cg: &TriFlat, a: usize, w: usize, over: Option<(&[Complex64], usize)>| {
        if w == 0 {
            return C0;
        }
        let pick = |row: usize, lvl: usize| -> Complex64 {
            if let Some((col, j)) = over {
                if lvl == j {
                    return col[row];
                }
            }
            cg.get(row, lvl)
        };
        let half = w / 2;
        let mut s = C0;
        let mut prev = pick(a, w);
        for l in 0..half {
            let next = pick(a - l - 1, w - 2 * (l + 1));
            s += 0.5 * h * (prev + next);
            prev = next;
        }
        if w % 2 == 1 {
            // partial panel down to y = w/2; the endpoint sits at level 0
            // where the cumulative vanishes
            s += 0.25 * h * prev;
        }
        s
    };

    // int_{x_i - t/2}^{x_i} qloc(s) CG(s, 2(s - x_i) + t) ds at t = x_j,
    // always with the override column for level j
    let eval_g_half = |cg: &TriFlat, i: usize, j: usize, col: &[Complex64]| {
        if j == 0 {
            return C0;
        }
        let pick = |row: usize, lvl: usize| -> Complex64 {
            if lvl == j {
                col[row]
            } else {
                cg.get(row, lvl)
            }
        };
        let half = j / 2;
        let lo = i - half;
        let mut s = C0;
        let mut prev = qloc[lo] * pick(lo, 2 * lo + j - 2 * i);
        let first = prev;
        for k in lo..i {
            let next = qloc[k + 1] * pick(k + 1, 2 * (k + 1) + j - 2 * i);
            s += 0.5 * h * (prev + next);
            prev = next;
        }
        if j % 2 == 1 {
            // endpoint of the partial panel is at level 0 where CG = 0
            s += 0.25 * h * first;
        }
        s
    };

    for i in 0..=nn {
        g.set(i, 0, f0(i, 0));
    }
    hn.push(vec![C0; nn + 1]);

    let mut col = vec![C0; nn + 1];
    let mut hj = vec![C0; nn + 1];
    let mut dj = vec![C0; nn + 1];
    let mut a1c = vec![C0; nn + 1];
    let mut newv = vec![C0; nn + 1];

    for j in 1..=lvl_max {
        for i in j..=nn {
            g.set(i, j, g.get(i, j - 1));
        }
        g.set(j, j, f0(j, j));
        for _ in 0..inner_iters {
            for i in j..=nn {
                col[i] = cg.get(i, j - 1) + 0.5 * h * (g.get(i, j - 1) + g.get(i, j));
            }
            hj[j] = C0;
            for k in (j + 1)..=nn {
                hj[k] = hj[k - 1] + 0.5 * h * (col[k - 1] + col[k]);
            }
            for a in j..=nn {
                dj[a] = eval_d(&cg, a, j, Some((&col, j)));
            }
            a1c[j] = C0;
            for i in (j + 1)..=nn {
                a1c[i] = a1c[i - 1] + 0.5 * h * (qloc[i - 1] * col[i - 1] + qloc[i] * col[i]);
            }
            let a2 = eval_g_half(&cg, j, j, &col);
            let mut inc: f64 = 0.0;
            for i in j..=nn {
                let a3 = -eval_g_half(&cg, i, j, &col);
                let mut b1 = C0;
                let mut b2 = C0;
                let mut b3 = C0;
                for mm in 0..=j {
                    let w = j - mm;
                    if w == 0 {
                        continue;
                    }
                    let wgt = if mm == 0 { 0.5 } else { 1.0 };
                    let (h_im, h_jm, dd, dv) = if w == j {
                        (hj[i - mm], hj[j - mm], dj[j], dj[i - mm])
                    } else {
                        (
                            hn[w][i - mm - w],
                            hn[w][j - mm - w],
                            dt[j - mm][w],
                            dt[i - mm][w],
                        )
                    };
                    let mw = wgt * m[mm];
                    b1 += mw * (h_im - h_jm);
                    b2 += mw * dd;
                    b3 -= mw * dv;
                }
                let val = f0(i, j) + 0.5 * (a1c[i] + a2 + a3 + h * (b1 + b2 + b3));
                inc = inc.max((val - g.get(i, j)).norm());
                newv[i] = val;
            }
            for i in j..=nn {
                g.set(i, j, newv[i]);
            }
            if inc < 1e-14 {
                break;
            }
        }
        for i in j..=nn {
            cg.set(i, j, cg.get(i, j - 1) + 0.5 * h * (g.get(i, j - 1) + g.get(i, j)));
        }
        let mut row = vec![C0; nn - j + 1];
        for k in (j + 1)..=nn {
            row[k - j] = row[k - j - 1] + 0.5 * h * (cg.get(k - 1, j) + cg.get(k, j));
        }
        hn.push(row);
        for a in j..=nn {
            dt[a][j] = eval_d(&cg, a, j, None);
        }
    }
    (g, cg)
}

fn check_same_grid(q: &SampledFunction, m: &SampledFunction) -> Result<Grid> {
    if q.grid != m.grid {
        return Err(Error::Argument("q and M live on different grids".into()));
    }
    Ok(q.grid)
}

/// Free term of the `P` equation: `(1/2)(int_{t/2}^{x - t/2} q + (x - t)
/// int_0^t M)`.
fn p_free_term<'a>(
    qc: &'a [Complex64],
    mc: &'a [Complex64],
    h: f64,
) -> impl Fn(usize, usize) -> Complex64 + 'a {
    move |i, j| {
        0.5 * (interp_at(qc, i as f64 - j as f64 / 2.0) - interp_at(qc, j as f64 / 2.0))
            + 0.5 * (i - j) as f64 * h * mc[j]
    }
}

pub(crate) fn solve_p_capped(
    q: &SampledFunction,
    m: &SampledFunction,
    lvl_max: usize,
) -> Result<(TriFlat, TriFlat)> {
    let grid = check_same_grid(q, m)?;
    let h = grid.step();
    let qc = cumtrap(&q.values, h);
    let mc = cumtrap(&m.values, h);
    let f0 = p_free_term(&qc, &mc, h);
    Ok(march(
        &q.values,
        &m.values,
        grid.panels(),
        h,
        f0,
        lvl_max,
        3,
    ))
}

/// Transformation-operator kernel `P(x, t)` for the pair `(q, M)`.
pub fn solve_p(q: &SampledFunction, m: &SampledFunction) -> Result<TriangleField> {
    let grid = check_same_grid(q, m)?;
    let (tri, _) = solve_p_capped(q, m, grid.panels())?;
    Ok(TriangleField { grid, tri })
}

/// The derivative field `R(x_row, t) = d/dt P(x_row, t)` evaluated from its
/// explicit formula (never by numerical differentiation of `P`).
pub fn compute_r(
    p: &TriangleField,
    q: &SampledFunction,
    m: &SampledFunction,
    x_row: usize,
) -> Result<SampledFunction> {
    let grid = check_same_grid(q, m)?;
    if p.grid != grid || x_row > grid.panels() {
        return Err(Error::Argument("compute_r: mismatched grid or row".into()));
    }
    let n = grid.panels();
    let h = grid.step();
    let i = x_row;
    let ifl = i as f64;
    let mc = cumtrap(&m.values, h);
    let qv = &q.values;
    let mv = &m.values;
    let tri = &p.tri;
    // the double integrals against M reduce to row and falling-diagonal
    // cumulatives of P, one lookup per outer node
    let rowcum = RowCum::build(tri, h, i);
    let diagcum = DiagCum::build(tri, h, i);
    let mut out = SampledFunction::zeros(grid);
    for j in 0..=i {
        let jfl = j as f64;
        // pointwise part; (x - t) M(t) uses the weighted endpoint convention
        let xt_m = if j == n {
            C0
        } else {
            (ifl - jfl) * h * mv[j]
        };
        let point = -0.25 * (interp_at(qv, ifl - jfl / 2.0) + interp_at(qv, jfl / 2.0))
            + 0.5 * xt_m
            - 0.5 * mc[j];
        let t1 = trap_frac(|s| interp_at(qv, s) * tri.at(s, jfl), jfl, ifl, h);
        let t2 = trap_frac(
            |s| interp_at(qv, s) * tri.at(s, 2.0 * s - jfl),
            jfl / 2.0,
            jfl,
            h,
        );
        let t3 = trap_frac(
            |s| interp_at(qv, s) * tri.at(s, 2.0 * (s - ifl) + jfl),
            ifl - jfl / 2.0,
            ifl,
            h,
        );
        // outer nodes are integers, so each inner integral is a row or a
        // shifted falling diagonal of P taken straight from the tables
        let mut t4 = C0;
        let mut t5 = C0;
        let mut t6 = C0;
        for mm in 0..=j {
            let wgt = if mm == 0 || mm == j { 0.5 * h } else { h };
            let mw = wgt * mv[mm];
            t4 += mw * rowcum.range(j - mm, j - mm, i - mm);
            t5 += mw * diagcum.at(0, j - mm);
            t6 += mw * diagcum.at(i - j, j - mm);
        }
        if j == 0 {
            t4 = C0;
            t5 = C0;
            t6 = C0;
        }
        out.values[j] = point + 0.5 * (t1 - t2 - t3 + t4 - t5 - t6);
    }
    Ok(out)
}

/// One tau-slice of the linearization kernel in shifted coordinates
/// `(r, l) = (x - tau, t - tau)`; `cpt` is the level-cumulative table of the
/// kernel `P(.,.; q, M_tilde)`.
pub(crate) fn solve_f_slice(
    q: &[Complex64],
    m: &[Complex64],
    cpt: &TriFlat,
    tau: usize,
    n: usize,
    h: f64,
    lvl_max: usize,
) -> (TriFlat, TriFlat) {
    let nn = n - tau;
    let qs = &q[tau..];
    // free term: (x - t)/2 plus three integrals of the cumulative of the
    // background kernel along the row, the rising diagonal and the falling
    // diagonal; tabulated once so the march evaluates it in constant time
    let rowc = RowCum::build(cpt, h, lvl_max.min(nn));
    let diagc = DiagCum::build(cpt, h, lvl_max.min(nn));
    let f0 = move |i: usize, j: usize| -> Complex64 {
        let a = rowc.range(j, j, i);
        let b = diagc.at(0, j);
        let c = diagc.at(i - j, j);
        0.5 * ((i - j) as f64 * h + a + b - c)
    };
    // two endpoint sweeps suffice here: the implicit coupling has weight
    // h / 2, so the remaining fixed-point error sits far below h^2
    march(qs, m, nn, h, f0, lvl_max, 2)
}

/// Linearization kernel `F(x, t, tau; q, M, M_tilde)` on the full pyramid.
pub fn solve_f(
    q: &SampledFunction,
    m: &SampledFunction,
    m_tilde: &SampledFunction,
) -> Result<PyramidField> {
    let grid = check_same_grid(q, m)?;
    check_same_grid(q, m_tilde)?;
    let n = grid.panels();
    let h = grid.step();
    let (_, cpt) = solve_p_capped(q, m_tilde, n)?;
    let mut out = PyramidField::zeros(grid);
    for tau in 0..=n {
        let (g, _) = solve_f_slice(&q.values, &m.values, &cpt, tau, n, h, n - tau);
        for i in tau..=n {
            for j in tau..=i {
                out.set(i, j, tau, g.get(i - tau, j - tau));
            }
        }
    }
    Ok(out)
}

/// One row of `Phi(x, t) = d/dx F(pi, x, t)` for fixed `t`, evaluated from
/// the explicit formula. Returns values at `w = x - t` for `w = 0..=w_max`.
///
/// `g` is the t-slice of `F` in shifted coordinates, `pt` the background
/// kernel with `ptrow` its row cumulatives and `dp1[c]` its precomputed
/// rising-diagonal integrals.
#[allow(clippy::too_many_arguments)]
pub(crate) fn phi_row(
    g: &TriFlat,
    ptrow: &RowCumPub,
    ptdiag: &DiagCum,
    q: &[Complex64],
    m: &[Complex64],
    n: usize,
    h: f64,
    t: usize,
    w_max: usize,
) -> Vec<Complex64> {
    let npr = n - t;
    let w_max = w_max.min(npr);
    let qs = &q[t..];
    let cgrow = RowCum::build(g, h, w_max);
    let gdiag = DiagCum::build(g, h, w_max);
    let mut out = vec![C0; w_max + 1];
    for (w, slot) in out.iter_mut().enumerate() {
        let p1 = ptrow.0.range(w, w, npr);
        let p2 = ptdiag.at(0, w);
        let p3 = ptdiag.at(npr - w, w);
        let mut f1 = C0;
        {
            let mut prev = qs[w] * g.get(w, w);
            for u in w..npr {
                let next = qs[u + 1] * g.get(u + 1, w);
                f1 += 0.5 * h * (prev + next);
                prev = next;
            }
        }
        let f2 = diag_int_weighted(g, 0, w, h, qs);
        let f3 = diag_int_weighted(g, npr - w, w, h, qs);
        let mut m1 = C0;
        let mut m2 = C0;
        let mut m3 = C0;
        let d = npr - w;
        for mm in 0..=w {
            let wgt = if mm == 0 || mm == w { 0.5 } else { 1.0 };
            let c = w - mm;
            let mw = wgt * m[mm];
            m1 += mw * cgrow.range(c, c, npr - mm);
            m2 += mw * gdiag.at(0, c);
            m3 += mw * gdiag.at(d, c);
        }
        m1 *= h;
        m2 *= h;
        m3 *= h;
        *slot = Complex64::new(-0.5, 0.0)
            + 0.5 * (p1 - p2 - p3)
            + 0.5 * (f1 - f2 - f3 + m1 - m2 - m3);
    }
    out
}

/// Row cumulatives of the background kernel, shared across slices.
pub(crate) struct RowCumPub(RowCum);

pub(crate) fn build_phi_tables(pt: &TriFlat, h: f64) -> (RowCumPub, DiagCum) {
    let n = pt.size - 1;
    let rows = RowCum::build(pt, h, n);
    let diags = DiagCum::build(pt, h, n);
    (RowCumPub(rows), diags)
}

/// Continuation kernel `Phi(x, t; q, M, M_tilde)` on the full triangle.
pub fn compute_phi(
    q: &SampledFunction,
    m: &SampledFunction,
    m_tilde: &SampledFunction,
) -> Result<TriangleField> {
    let grid = check_same_grid(q, m)?;
    check_same_grid(q, m_tilde)?;
    let n = grid.panels();
    let h = grid.step();
    let (pt, cpt) = solve_p_capped(q, m_tilde, n)?;
    let (ptrow, ptdiag) = build_phi_tables(&pt, h);
    let mut out = TriangleField::zeros(grid);
    for t in 0..=n {
        let (g, _) = solve_f_slice(&q.values, &m.values, &cpt, t, n, h, n - t);
        let row = phi_row(&g, &ptrow, &ptdiag, &q.values, &m.values, n, h, t, n - t);
        for (w, val) in row.iter().enumerate() {
            out.tri.set(t + w, t, *val);
        }
    }
    Ok(out)
}

/// Report from the successive-approximation majorant check.
#[derive(Debug, Clone)]
pub struct SaBoundReport {
    /// Max over the triangle of `|F_k| / (F0_max (C t)^k / k!)` per depth.
    pub per_depth: Vec<f64>,
    pub max_ratio: f64,
}

/// Computes Picard iterates `F_k` of the kernel equation (tau = 0 slice) and
/// compares them against the factorial majorant `F0_max (C t)^k / k!` with
/// `C = int |q| + (3/4) int (pi - s)|M|`.
pub fn sa_bound_check(
    q: &SampledFunction,
    m: &SampledFunction,
    depth: usize,
) -> Result<SaBoundReport> {
    let grid = check_same_grid(q, m)?;
    let n = grid.panels();
    let h = grid.step();
    let qc = cumtrap(&q.values, h);
    let mc = cumtrap(&m.values, h);
    let f0_fn = p_free_term(&qc, &mc, h);
    let mut f0max: f64 = 0.0;
    let mut fk = TriFlat::new(n + 1);
    for i in 0..=n {
        for j in 0..=i {
            let v = f0_fn(i, j);
            fk.set(i, j, v);
            f0max = f0max.max(v.norm());
        }
    }
    let abs_q = SampledFunction {
        grid,
        values: q.values.iter().map(|v| Complex64::new(v.norm(), 0.0)).collect(),
    };
    let wm = SampledFunction {
        grid,
        values: m
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| Complex64::new((PI - grid.node(i)) * v.norm(), 0.0))
            .collect(),
    };
    let c_const = cumtrap(&abs_q.values, h)[n].re + 0.75 * cumtrap(&wm.values, h)[n].re;

    let mut per_depth = Vec::with_capacity(depth);
    let mut max_ratio: f64 = 0.0;
    let mut fact = 1.0;
    for k in 1..=depth {
        fk = apply_coupling(&fk, &q.values, &m.values, n, h);
        fact *= k as f64;
        let mut worst: f64 = 0.0;
        for i in 0..=n {
            for j in 0..=i {
                let t = grid.node(j);
                let bound = f0max * (c_const * t).powi(k as i32) / fact;
                let val = fk.get(i, j).norm();
                if bound > 1e-300 {
                    worst = worst.max(val / bound);
                } else if val > 1e-12 {
                    worst = worst.max(f64::INFINITY);
                }
            }
        }
        per_depth.push(worst);
        max_ratio = max_ratio.max(worst);
    }
    Ok(SaBoundReport { per_depth, max_ratio })
}

/// One application of the coupling operator of the kernel equation (the
/// right-hand side without the free term) to a fully known field.
fn apply_coupling(
    f: &TriFlat,
    q: &[Complex64],
    m: &[Complex64],
    n: usize,
    h: f64,
) -> TriFlat {
    let mut cg = TriFlat::new(n + 1);
    for i in 0..=n {
        for j in 1..=i {
            cg.set(
                i,
                j,
                cg.get(i, j - 1) + 0.5 * h * (f.get(i, j - 1) + f.get(i, j)),
            );
        }
    }
    let mut out = TriFlat::new(n + 1);
    for i in 0..=n {
        for j in 0..=i {
            let ifl = i as f64;
            let jfl = j as f64;
            let a1 = trap_frac(|s| interp_at(q, s) * cg.at(s, jfl), jfl, ifl, h);
            let a2 = trap_frac(
                |s| interp_at(q, s) * cg.at(s, 2.0 * s - jfl),
                jfl / 2.0,
                jfl,
                h,
            );
            let a3 = trap_frac(
                |s| interp_at(q, s) * cg.at(s, 2.0 * (s - ifl) + jfl),
                ifl - jfl / 2.0,
                ifl,
                h,
            );
            let b1 = trap_frac(
                |mm| {
                    interp_at(m, mm) * trap_frac(|xi| cg.at(xi - mm, jfl - mm), jfl, ifl, h)
                },
                0.0,
                jfl,
                h,
            );
            let b2 = trap_frac(
                |mm| {
                    interp_at(m, mm)
                        * trap_frac(
                            |xi| cg.at(xi - mm, 2.0 * xi - jfl - mm),
                            (jfl + mm) / 2.0,
                            jfl,
                            h,
                        )
                },
                0.0,
                jfl,
                h,
            );
            let b3 = trap_frac(
                |mm| {
                    interp_at(m, mm)
                        * trap_frac(
                            |xi| cg.at(xi - mm, 2.0 * (xi - ifl) + jfl - mm),
                            (mm - jfl) / 2.0 + ifl,
                            ifl,
                            h,
                        )
                },
                0.0,
                jfl,
                h,
            );
            out.set(i, j, 0.5 * (a1 + a2 - a3 + b1 + b2 - b3));
        }
    }
    out
}
