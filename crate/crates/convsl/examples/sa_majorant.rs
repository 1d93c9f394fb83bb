//! Successive approximations for the kernel equation stay below the factorial
//! majorant |F_k| <= F0_max (C t)^k / k!, which is what makes the series
//! converge on the whole triangle.

use convsl::kernel_ops::sa_bound_check;
use convsl::{Grid, SampledFunction};
use num_complex::Complex64;

fn main() -> convsl::Result<()> {
    let grid = Grid::new(128)?;

    for (label, qc, mc) in [("q = 1, M = 0", 1.0, 0.0), ("q = 0, M = 0.5", 0.0, 0.5)] {
        let q = SampledFunction::constant(grid, Complex64::new(qc, 0.0));
        let m = SampledFunction::constant(grid, Complex64::new(mc, 0.0));
        let report = sa_bound_check(&q, &m, 4)?;
        println!("{label}:");
        for (k, r) in report.per_depth.iter().enumerate() {
            println!("  depth {}: max |F_k| / majorant = {:.4}", k + 1, r);
        }
        println!("  overall max ratio = {:.4} (must stay near or below 1)\n",
                 report.max_ratio);
    }
    Ok(())
}
