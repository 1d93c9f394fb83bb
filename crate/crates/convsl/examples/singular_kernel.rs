//! The kernel class allows blow-up at x = pi: M only needs (pi - x) M(x) to
//! be square integrable. This example reconstructs such an unbounded target,
//! exercising the weighted reformulation on the final half-interval.

use convsl::forward::eigenvalues;
use convsl::inverse::invert;
use convsl::numgrid::norms;
use convsl::{Grid, SampledFunction};
use num_complex::Complex64;
use std::f64::consts::PI;

fn main() -> convsl::Result<()> {
    let grid = Grid::new(256)?;
    let n = grid.panels();
    let q = SampledFunction::from_real_fn(grid, f64::cos);
    let mut m_true =
        SampledFunction::from_fn(grid, |x| Complex64::new(0.1 * (PI - x).powf(-0.3), 0.0));
    m_true.values[n] = Complex64::new(0.0, 0.0);

    println!("target: M*(x) = 0.1 (pi - x)^(-0.3), unbounded at x = pi");
    let spec = eigenvalues(&q, &m_true, 40)?;
    let (m_rec, trace) = invert(&spec, &q)?;
    println!("final residual = {:.3e}", trace.final_residual);

    let dev = SampledFunction {
        grid,
        values: m_rec
            .values
            .iter()
            .zip(&m_true.values)
            .map(|(a, b)| a - b)
            .collect(),
    };
    let rel = norms(&dev).l2_weighted / norms(&m_true).l2_weighted;
    println!("weighted relative error = {:.3e}", rel);
    println!("\nnear the singular endpoint (x, M*(x), M(x)):");
    for i in [n - 32, n - 16, n - 8, n - 4, n - 2] {
        println!(
            "  {:>6.4} {:>10.5} {:>10.5}",
            grid.node(i),
            m_true.values[i].re,
            m_rec.values[i].re
        );
    }
    Ok(())
}
