//! Discretization substrate: uniform grids on `[0, pi]`, trapezoid
//! quadrature, plain and weighted L2 norms, and the `M0/M1/Q` transforms
//! used by the norm-equivalence check.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::{Error, Result};

/// Uniform partition of `[0, pi]` into `n` panels (`n` even), nodes
/// `x_i = i * pi / n`.
///
/// The grid is deliberately uniform with even `n`: every integral equation in
/// this crate evaluates kernels at shifted arguments like `(x - t) / 2` or
/// `2s - t`, and an even uniform grid keeps those shifts either on a node or
/// exactly halfway between two nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(panels: usize) -> Result<Self> {
        if panels < 2 || panels % 2 != 0 {
            return Err(Error::Argument(format!(
                "grid panels must be even and >= 2, got {panels}"
            )));
        }
        Ok(Grid { n: panels })
    }

    /// Number of panels `n`.
    pub fn panels(&self) -> usize {
        self.n
    }

    /// Step `h = pi / n`.
    pub fn step(&self) -> f64 {
        PI / self.n as f64
    }

    /// Node `x_i = i * h`.
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.n);
        i as f64 * self.step()
    }

    /// Number of nodes, `n + 1`.
    pub fn nodes(&self) -> usize {
        self.n + 1
    }
}

/// Complex-valued samples of a one-variable function on a [`Grid`].
///
/// Kernels of class `L_{2,pi}` may blow up at `x = pi`; by convention the
/// last node then carries the weighted limit `(pi - x) f(x) -> 0`, i.e. the
/// stored value is `0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

impl SampledFunction {
    pub fn zeros(grid: Grid) -> Self {
        SampledFunction {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.nodes()],
        }
    }

    pub fn constant(grid: Grid, c: Complex64) -> Self {
        SampledFunction {
            grid,
            values: vec![c; grid.nodes()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Self {
        let values = (0..grid.nodes()).map(|i| f(grid.node(i))).collect();
        SampledFunction { grid, values }
    }

    pub fn from_real_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn from_values(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.nodes() {
            return Err(Error::Argument(format!(
                "expected {} samples, got {}",
                grid.nodes(),
                values.len()
            )));
        }
        Ok(SampledFunction { grid, values })
    }

    /// Linear interpolation at a fractional node index.
    pub fn at_index(&self, pos: f64) -> Complex64 {
        interp_at(&self.values, pos)
    }
}

/// Plain and weighted L2 norms of a sampled function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNormReport {
    /// `sqrt(int |f|^2)` over `(0, pi)`.
    pub l2: f64,
    /// `sqrt(int (pi - x)^2 |f|^2)`, the natural metric for kernels that may
    /// blow up at `x = pi`.
    pub l2_weighted: f64,
}

/// Linear interpolation of a sample array at fractional index `pos`.
pub(crate) fn interp_at(values: &[Complex64], pos: f64) -> Complex64 {
    let i0 = pos.floor() as isize;
    if i0 < 0 {
        return values[0];
    }
    let i0 = i0 as usize;
    if i0 + 1 >= values.len() {
        return values[values.len() - 1];
    }
    let fr = pos - i0 as f64;
    values[i0] * (1.0 - fr) + values[i0 + 1] * fr
}

/// Cumulative trapezoid table: `out[i] = int_0^{x_i} f`.
pub(crate) fn cumtrap(values: &[Complex64], h: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); values.len()];
    for i in 1..values.len() {
        out[i] = out[i - 1] + 0.5 * h * (values[i - 1] + values[i]);
    }
    out
}

/// Composite trapezoid integral of `f` over `[x_a, x_b]`.
pub fn quad_integrate(f: &SampledFunction, a: usize, b: usize) -> Result<Complex64> {
    let n = f.grid.panels();
    if a > b || b > n {
        return Err(Error::Argument(format!(
            "integration range {a}..{b} out of 0..{n}"
        )));
    }
    let h = f.grid.step();
    let mut s = Complex64::new(0.0, 0.0);
    for i in a..b {
        s += 0.5 * h * (f.values[i] + f.values[i + 1]);
    }
    Ok(s)
}

/// Both norms of `f`, computed by trapezoid quadrature.
pub fn norms(f: &SampledFunction) -> WeightedNormReport {
    let h = f.grid.step();
    let n = f.grid.panels();
    let mut plain = 0.0;
    let mut weighted = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        let x = f.grid.node(i);
        let a = f.values[i].norm_sqr();
        plain += w * a;
        weighted += w * (PI - x) * (PI - x) * a;
    }
    WeightedNormReport {
        l2: (plain * h).sqrt(),
        l2_weighted: (weighted * h).sqrt(),
    }
}

/// L1 norm `int |f|` by trapezoid.
pub fn l1_norm(f: &SampledFunction) -> f64 {
    let h = f.grid.step();
    let n = f.grid.panels();
    let mut s = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        s += w * f.values[i].norm();
    }
    s * h
}

/// The transforms `M0(x) = (pi - x) M(x)`, `M1(x) = int_0^x M`, and
/// `Q(x) = M0(x) - M1(x)`.
///
/// At the last node `M0` is set to `0` (the weighted endpoint convention).
pub fn remark1_transforms(
    m: &SampledFunction,
) -> (SampledFunction, SampledFunction, SampledFunction) {
    let grid = m.grid;
    let n = grid.panels();
    let h = grid.step();
    let mut m0 = SampledFunction::zeros(grid);
    for i in 0..n {
        m0.values[i] = (PI - grid.node(i)) * m.values[i];
    }
    let m1 = SampledFunction {
        grid,
        values: cumtrap(&m.values, h),
    };
    let mut q = SampledFunction::zeros(grid);
    for i in 0..=n {
        q.values[i] = m0.values[i] - m1.values[i];
    }
    (m0, m1, q)
}
