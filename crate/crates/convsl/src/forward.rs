//! Forward spectral problem: the solution `S(x, lambda)` of the perturbed
//! equation, the characteristic function `Delta(lambda) = S(pi, lambda)` by
//! two independent routes, and Newton localization of the first `K`
//! eigenvalues from their asymptotic positions `n^2 + omega`.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::kernel_ops::TriangleField;
use crate::numgrid::{quad_integrate, SampledFunction};
use crate::{Error, Result};

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Ordered eigenvalue list with the derived mean `omega = (1/pi) int q` and
/// the asymptotic remainders `kappa_n = lambda_n - n^2 - omega`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub lambdas: Vec<Complex64>,
    pub omega: Complex64,
}

impl Spectrum {
    pub fn new(lambdas: Vec<Complex64>, omega: Complex64) -> Self {
        Spectrum { lambdas, omega }
    }

    pub fn count(&self) -> usize {
        self.lambdas.len()
    }

    /// `kappa_n` for the 1-based index `n`.
    pub fn remainder(&self, n: usize) -> Complex64 {
        self.lambdas[n - 1] - Complex64::new((n * n) as f64, 0.0) - self.omega
    }

    pub fn remainders(&self) -> Vec<Complex64> {
        (1..=self.count()).map(|n| self.remainder(n)).collect()
    }
}

/// Mean value `omega = (1/pi) int_0^pi q`.
pub fn omega_of(q: &SampledFunction) -> Complex64 {
    quad_integrate(q, 0, q.grid.panels()).expect("full-range integral") / PI
}

/// Volterra march for `S(x, lambda)`: free sine term plus the integral of
/// `sin(rho (x - t)) / rho` against `q S + M * S`.
///
/// The kernel is split as `sin(rho x) cos(rho t) - cos(rho x) sin(rho t)` so
/// two running cumulatives serve every `x`; the `t = x` endpoint cancels
/// exactly, which makes the march explicit.
pub fn solve_s(
    q: &SampledFunction,
    m: &SampledFunction,
    lambda: Complex64,
) -> Result<SampledFunction> {
    if q.grid != m.grid {
        return Err(Error::Argument("q and M live on different grids".into()));
    }
    let grid = q.grid;
    let n = grid.panels();
    let h = grid.step();
    let rho = lambda.sqrt();
    let small_rho = rho.norm() < 1e-8;

    let mut s = SampledFunction::zeros(grid);
    let mut w = vec![C0; n + 1];
    let cos_t: Vec<Complex64> = (0..=n).map(|i| (rho * grid.node(i)).cos()).collect();
    let sin_t: Vec<Complex64> = (0..=n).map(|i| (rho * grid.node(i)).sin()).collect();

    // running sums over nodes 0..j of the split cumulatives
    let mut sum_cos = C0;
    let mut sum_sin = C0;
    // for the rho -> 0 limit: sums of w and t w
    let mut sum_w = C0;
    let mut sum_tw = C0;

    for i in 1..=n {
        let j = i - 1;
        let conv = if j == 0 {
            C0
        } else {
            let mut acc = C0;
            for k in 0..=j {
                let wgt = if k == 0 || k == j { 0.5 } else { 1.0 };
                acc += wgt * m.values[j - k] * s.values[k];
            }
            acc * h
        };
        w[j] = q.values[j] * s.values[j] + conv;
        sum_cos += cos_t[j] * w[j];
        sum_sin += sin_t[j] * w[j];
        sum_w += w[j];
        sum_tw += grid.node(j) * w[j];
        let x = grid.node(i);
        if small_rho {
            // kernel sin(rho (x - t)) / rho -> (x - t)
            let a0 = h * (sum_w - 0.5 * w[0]);
            let a1 = h * (sum_tw - 0.5 * grid.node(0) * w[0]);
            s.values[i] = x + x * a0 - a1;
        } else {
            // node t = x contributes zero net, interior nodes full weight
            let acos = h * (sum_cos - 0.5 * cos_t[0] * w[0]);
            let asin = h * (sum_sin - 0.5 * sin_t[0] * w[0]);
            let free = (rho * x).sin() / rho;
            s.values[i] = free + ((rho * x).sin() * acos - (rho * x).cos() * asin) / rho;
        }
    }
    Ok(s)
}

/// `Delta(lambda) = S(pi, lambda)`.
pub fn delta_direct(
    q: &SampledFunction,
    m: &SampledFunction,
    lambda: Complex64,
) -> Result<Complex64> {
    Ok(*solve_s(q, m, lambda)?.values.last().unwrap())
}

/// `Delta(lambda)` from the transformation operator: a single quadrature of
/// `P(pi, t) sin(rho (pi - t)) / rho` plus the free sine term.
pub fn delta_via_kernel(p: &TriangleField, lambda: Complex64) -> Complex64 {
    let grid = p.grid;
    let n = grid.panels();
    let h = grid.step();
    let rho = lambda.sqrt();
    let small_rho = rho.norm() < 1e-8;
    let mut acc = C0;
    for j in 0..=n {
        let wgt = if j == 0 || j == n { 0.5 } else { 1.0 };
        let arg = PI - grid.node(j);
        let ker = if small_rho {
            Complex64::new(arg, 0.0)
        } else {
            (rho * arg).sin() / rho
        };
        acc += wgt * p.value(n, j) * ker;
    }
    let free = if small_rho {
        Complex64::new(PI, 0.0)
    } else {
        (rho * PI).sin() / rho
    };
    free + acc * h
}

fn newton_root(
    q: &SampledFunction,
    m: &SampledFunction,
    index: usize,
    omega: Complex64,
) -> Result<Complex64> {
    let mut lam = Complex64::new((index * index) as f64, 0.0) + omega;
    let mut scale: f64 = 0.0;
    for _ in 0..40 {
        let d = delta_direct(q, m, lam)?;
        scale = scale.max(d.norm());
        if d.norm() <= 1e-10 * scale {
            return Ok(lam);
        }
        let step = (1e-4_f64).max(1e-6 * lam.norm());
        let dp = delta_direct(q, m, lam + step)?;
        let dm = delta_direct(q, m, lam - step)?;
        let deriv = (dp - dm) / (2.0 * step);
        if deriv.norm() < 1e-300 {
            return Err(Error::RootLocalization {
                index,
                reason: "vanishing derivative in Newton step".into(),
            });
        }
        let next = lam - d / deriv;
        if !next.re.is_finite() || !next.im.is_finite() {
            return Err(Error::RootLocalization {
                index,
                reason: "Newton iterate diverged".into(),
            });
        }
        lam = next;
    }
    let d = delta_direct(q, m, lam)?;
    if d.norm() <= 1e-8 * scale.max(1.0) {
        Ok(lam)
    } else {
        Err(Error::RootLocalization {
            index,
            reason: format!("no convergence, |Delta| = {:.3e}", d.norm()),
        })
    }
}

/// First `K` eigenvalues by Newton iteration from the asymptotic guesses
/// `n^2 + omega`.
pub fn eigenvalues(q: &SampledFunction, m: &SampledFunction, k: usize) -> Result<Spectrum> {
    if q.grid != m.grid {
        return Err(Error::Argument("q and M live on different grids".into()));
    }
    if k == 0 || k > q.grid.panels() / 4 {
        return Err(Error::Argument(format!(
            "K = {k} outside 1..={} (need >= 8 nodes per period)",
            q.grid.panels() / 4
        )));
    }
    let omega = omega_of(q);
    let mut lambdas = Vec::with_capacity(k);
    for index in 1..=k {
        lambdas.push(newton_root(q, m, index, omega)?);
    }
    for a in 0..k {
        for b in (a + 1)..k {
            if (lambdas[a] - lambdas[b]).norm() < 1e-6 {
                return Err(Error::RootLocalization {
                    index: b + 1,
                    reason: format!("collided with index {}", a + 1),
                });
            }
        }
    }
    Ok(Spectrum::new(lambdas, omega))
}
