//! Forward solve: compute the first eigenvalues of the convolution-perturbed
//! operator for (q, M) = (cos x, 0.2 cos x) and show how they deviate from
//! the unperturbed squares n^2.

use convsl::forward::eigenvalues;
use convsl::{Grid, SampledFunction};

fn main() -> convsl::Result<()> {
    let grid = Grid::new(400)?;
    let q = SampledFunction::from_real_fn(grid, f64::cos);
    let m = SampledFunction::from_real_fn(grid, |x| 0.2 * x.cos());

    let spec = eigenvalues(&q, &m, 20)?;
    println!("omega = (1/pi) int q = {:.6}", spec.omega.re);
    println!("{:>3} {:>14} {:>14} {:>12}", "n", "re(lambda)", "im(lambda)", "|kappa_n|");
    for (i, lam) in spec.lambdas.iter().enumerate() {
        let n = i + 1;
        let kappa = spec.remainder(n);
        println!(
            "{:>3} {:>14.8} {:>14.2e} {:>12.3e}",
            n,
            lam.re,
            lam.im,
            kappa.norm()
        );
    }
    println!("\nkappa_n -> 0: the spectrum approaches n^2 + omega, as the");
    println!("eigenvalue asymptotics predict.");
    Ok(())
}
