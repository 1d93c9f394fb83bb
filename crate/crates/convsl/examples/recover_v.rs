//! Step (i) of the inverse algorithm: from a forward-generated spectrum,
//! rebuild the characteristic function as an infinite product and extract the
//! kernel v of its integral representation as a cosine series.

use convsl::charfield::{mean_check, product_delta, recover_v, v_coefficients, ProductDelta};
use convsl::forward::eigenvalues;
use convsl::{Grid, SampledFunction};
use num_complex::Complex64;
use std::f64::consts::PI;

fn main() -> convsl::Result<()> {
    let grid = Grid::new(400)?;
    let q = SampledFunction::from_real_fn(grid, f64::cos);
    let m = SampledFunction::from_real_fn(grid, |x| 0.2 * x.cos());

    let spec = eigenvalues(&q, &m, 40)?;
    let omega = spec.omega;
    let pd = ProductDelta::new(spec);

    println!("product form vs a sample value:");
    let lam = Complex64::new(12.3, 0.0);
    println!("  Delta(12.3) = {:.8}", product_delta(&pd, lam).re);

    let coefs = v_coefficients(&pd, 40);
    println!("\nfirst cosine coefficients of v:");
    for (k, c) in coefs.iter().take(8).enumerate() {
        println!("  c_{} = {:>12.6e}", k + 1, c.re);
    }

    let v = recover_v(&pd, 40, grid)?;
    let mean_residual = mean_check(&v, omega);
    println!("\nmean identity |int v - omega pi/2| = {:.3e}", mean_residual);
    println!("(omega pi / 2 = {:.6})", (omega * PI / 2.0).re);
    Ok(())
}
