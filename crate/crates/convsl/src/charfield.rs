//! Reconstruction side of the characteristic function: evaluate
//! `Delta(lambda)` from a given (finite) spectrum through the normalized
//! infinite product, and extract the kernel `v(x)` of its integral
//! representation as a cosine series.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::forward::Spectrum;
use crate::numgrid::{quad_integrate, Grid, SampledFunction};
use crate::{Error, Result};

/// `Delta(lambda)` as a finite product of normalized factors with a
/// closed-form sine tail.
///
/// The raw product `pi prod (lambda_n - lambda) / n^2` is truncated in ratio
/// form: each known zero contributes `(lambda_n - lambda) / (n^2 + omega -
/// lambda)` and the full model product `pi prod (n^2 + omega - lambda) / n^2
/// = sin(pi mu) / mu`, `mu = sqrt(lambda - omega)`, is restored in closed
/// form. The tail `n > K` is then exact under the asymptotic model
/// `lambda_n = n^2 + omega`, and truncation error lives only in the first
/// `K` factors.
#[derive(Debug, Clone)]
pub struct ProductDelta {
    pub spectrum: Spectrum,
}

impl ProductDelta {
    pub fn new(spectrum: Spectrum) -> Self {
        ProductDelta { spectrum }
    }

    pub fn tail_order(&self) -> usize {
        self.spectrum.count()
    }
}

/// Analytic limit of `[sin(pi mu) / mu] / (n^2 + omega - lambda)` as
/// `lambda -> n^2 + omega`; the mechanism behind the removable factors.
pub fn removable_factor_limit(n: usize) -> f64 {
    let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
    sign * PI / (2.0 * (n * n) as f64)
}

/// Evaluate the product form of `Delta` at `lambda`.
///
/// When `lambda` sits on a model zero `n^2 + omega` with `n <= K`, the
/// vanishing denominator factor is paired with the zero of the sine tail and
/// replaced by its analytic limit, so evaluation stays finite.
pub fn product_delta(pd: &ProductDelta, lambda: Complex64) -> Complex64 {
    let omega = pd.spectrum.omega;
    let mut prod = Complex64::new(PI, 0.0);
    let mut special: Option<usize> = None;
    for (i, lam_n) in pd.spectrum.lambdas.iter().enumerate() {
        let n = i + 1;
        let den = Complex64::new((n * n) as f64, 0.0) + omega - lambda;
        if den.norm() < 1e-9 && special.is_none() {
            special = Some(n);
            prod *= lam_n - lambda;
        } else {
            prod *= (lam_n - lambda) / den;
        }
    }
    match special {
        Some(n) => prod * removable_factor_limit(n) / PI,
        None => {
            let mu = (lambda - omega).sqrt();
            if mu.norm() < 1e-9 {
                prod
            } else {
                prod * (PI * mu).sin() / (PI * mu)
            }
        }
    }
}

/// Cosine-series coefficients `k^2 Delta(k^2) + (-1)^k omega pi / 2` for
/// `k = 1..=kv`.
pub fn v_coefficients(pd: &ProductDelta, kv: usize) -> Vec<Complex64> {
    let omega = pd.spectrum.omega;
    (1..=kv)
        .map(|k| {
            let dk = product_delta(pd, Complex64::new((k * k) as f64, 0.0));
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            (k * k) as f64 * dk + sign * omega * PI / 2.0
        })
        .collect()
}

/// Step (i) of the reconstruction algorithm: the kernel of the integral
/// representation of `Delta`,
/// `v(x) = omega/2 + (2/pi) sum_k (k^2 Delta(k^2) + (-1)^k omega pi/2) cos kx`.
pub fn recover_v(pd: &ProductDelta, series_terms: usize, grid: Grid) -> Result<SampledFunction> {
    let k = pd.tail_order();
    let kv = series_terms;
    if kv == 0 || kv > k || kv > grid.panels() / 2 {
        return Err(Error::Argument(format!(
            "series truncation {kv} outside 1..=min(K = {k}, n/2 = {})",
            grid.panels() / 2
        )));
    }
    let coefs = v_coefficients(pd, kv);
    let mut v = SampledFunction::constant(grid, pd.spectrum.omega / 2.0);
    for i in 0..grid.nodes() {
        let x = grid.node(i);
        let mut acc = Complex64::new(0.0, 0.0);
        for (kk, ck) in coefs.iter().enumerate() {
            acc += ck * ((kk + 1) as f64 * x).cos();
        }
        v.values[i] += 2.0 / PI * acc;
    }
    Ok(v)
}

/// Residual of the mean identity `int_0^pi v = omega pi / 2`.
pub fn mean_check(v: &SampledFunction, omega: Complex64) -> f64 {
    let iv = quad_integrate(v, 0, v.grid.panels()).expect("full-range integral");
    (iv - omega * PI / 2.0).norm()
}
