//! Empirical verification of uniform full stability: seeded perturbation
//! families, inversion sweeps measuring deviation ratios, and the two-sided
//! norm-equivalence check between the plain and weighted metrics.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::charfield::{recover_v, ProductDelta};
use crate::forward::{eigenvalues, omega_of, Spectrum};
use crate::inverse::invert;
use crate::numgrid::{l1_norm, norms, remark1_transforms, SampledFunction};
use crate::{Error, Result};

/// Shape of the spectrum perturbation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbShape {
    /// All of `eps_kappa` on a single `kappa_n`.
    SingleMode(usize),
    /// `delta kappa_n` proportional to `xi_n / n` with seeded `xi`,
    /// renormalized to the target l2 norm.
    RandomDecaying,
}

/// One reproducible perturbation of `(spectrum, q)`.
#[derive(Debug, Clone, Copy)]
pub struct PerturbationSpec {
    pub seed: u64,
    /// Target `||delta kappa||_{l2}`.
    pub eps_kappa: f64,
    /// Target `||delta q||_{L2}`.
    pub eps_q: f64,
    pub shape: PerturbShape,
}

/// One row of a stability sweep.
#[derive(Debug, Clone)]
pub struct StabilityRecord {
    pub eps_kappa: f64,
    pub eps_q: f64,
    pub eps_total: f64,
    /// `||v - v_tilde||`.
    pub dv: f64,
    /// `||M - M_tilde||_{2,pi}`.
    pub dm_weighted: f64,
    /// `dm_weighted / eps_total`.
    pub ratio: f64,
    /// `dv / eps_kappa`.
    pub ratio_v: f64,
    pub status: String,
    /// Kernel deviation `M - M_tilde`, kept for the norm-equivalence report.
    pub deviation: Option<SampledFunction>,
}

/// Applies a perturbation: `kappa_n -> kappa_n + delta kappa_n` with
/// `||delta kappa||_{l2} = eps_kappa`, and `q -> q + eps_q b` with a
/// unit-norm smooth bump `b(x) = sin x / sqrt(pi/2)`. The mean `omega` is
/// recomputed from the perturbed potential and the eigenvalues reassembled as
/// `n^2 + omega_tilde + kappa_tilde_n`.
pub fn perturb(
    spectrum: &Spectrum,
    q: &SampledFunction,
    spec: &PerturbationSpec,
) -> Result<(Spectrum, SampledFunction)> {
    let k = spectrum.count();
    let mut dk = vec![0.0f64; k];
    match spec.shape {
        PerturbShape::SingleMode(n) => {
            if n == 0 || n > k {
                return Err(Error::Argument(format!(
                    "single-mode index {n} outside 1..={k}"
                )));
            }
            dk[n - 1] = spec.eps_kappa;
        }
        PerturbShape::RandomDecaying => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            for (i, slot) in dk.iter_mut().enumerate() {
                let xi: f64 = rng.gen_range(-1.0..1.0);
                *slot = xi / (i + 1) as f64;
            }
            let norm = dk.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                let scale = spec.eps_kappa / norm;
                dk.iter_mut().for_each(|x| *x *= scale);
            }
        }
    }

    let bump_scale = 1.0 / (PI / 2.0).sqrt();
    let mut q_tilde = q.clone();
    for (i, qv) in q_tilde.values.iter_mut().enumerate() {
        *qv += spec.eps_q * bump_scale * q.grid.node(i).sin();
    }
    let omega_new = omega_of(&q_tilde);

    let kappas = spectrum.remainders();
    let lambdas = (0..k)
        .map(|i| {
            Complex64::new(((i + 1) * (i + 1)) as f64, 0.0) + omega_new + kappas[i] + dk[i]
        })
        .collect();
    Ok((Spectrum::new(lambdas, omega_new), q_tilde))
}

fn recovered_pair(
    spectrum: &Spectrum,
    q: &SampledFunction,
) -> Result<(SampledFunction, SampledFunction)> {
    let kv = spectrum.count().min(q.grid.panels() / 2);
    let pd = ProductDelta::new(spectrum.clone());
    let v = recover_v(&pd, kv, q.grid)?;
    let (m, _) = invert(spectrum, q)?;
    Ok((v, m))
}

fn diff_norms(a: &SampledFunction, b: &SampledFunction) -> (f64, f64) {
    let dev = SampledFunction {
        grid: a.grid,
        values: a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| x - y)
            .collect(),
    };
    let r = norms(&dev);
    (r.l2, r.l2_weighted)
}

/// Runs a sweep: baseline forward spectrum and inversion, then one perturbed
/// inversion per entry of `eps_list` (`eps_kappa = eps`; additionally
/// `eps_q = eps` when `mixed`). Inversion failures become status rows and the
/// sweep continues. Returns records ordered by `eps_total` together with the
/// rendered CSV.
pub fn stability_sweep(
    q: &SampledFunction,
    m: &SampledFunction,
    k: usize,
    eps_list: &[f64],
    shape: PerturbShape,
    seed: u64,
    mixed: bool,
) -> Result<(Vec<StabilityRecord>, String)> {
    if eps_list.windows(2).any(|w| w[0] >= w[1]) || eps_list.iter().any(|&e| e <= 0.0) {
        return Err(Error::Argument(
            "eps list must be positive and strictly ascending".into(),
        ));
    }
    let base_spec = eigenvalues(q, m, k)?;
    let (v_base, m_base) = recovered_pair(&base_spec, q)?;
    // the zero row reruns the identical inversion; determinism makes the
    // deviation an exact floor measurement
    let (v_rerun, m_rerun) = recovered_pair(&base_spec, q)?;
    let (dv0, dm0) = {
        let (dv, _) = diff_norms(&v_base, &v_rerun);
        let (_, dm) = diff_norms(&m_base, &m_rerun);
        (dv, dm)
    };
    let mut records = vec![StabilityRecord {
        eps_kappa: 0.0,
        eps_q: 0.0,
        eps_total: 0.0,
        dv: dv0,
        dm_weighted: dm0,
        ratio: 0.0,
        ratio_v: 0.0,
        status: "ok".into(),
        deviation: None,
    }];

    let perturbed: Vec<StabilityRecord> = eps_list
        .par_iter()
        .map(|&eps| {
            let spec = PerturbationSpec {
                seed,
                eps_kappa: eps,
                eps_q: if mixed { eps } else { 0.0 },
                shape,
            };
            let eps_total = spec.eps_kappa + spec.eps_q;
            let run = perturb(&base_spec, q, &spec)
                .and_then(|(sp, qt)| recovered_pair(&sp, &qt));
            match run {
                Ok((v_t, m_t)) => {
                    let (dv, _) = diff_norms(&v_base, &v_t);
                    let (_, dm) = diff_norms(&m_base, &m_t);
                    let deviation = SampledFunction {
                        grid: m_base.grid,
                        values: m_base
                            .values
                            .iter()
                            .zip(&m_t.values)
                            .map(|(a, b)| a - b)
                            .collect(),
                    };
                    StabilityRecord {
                        eps_kappa: spec.eps_kappa,
                        eps_q: spec.eps_q,
                        eps_total,
                        dv,
                        dm_weighted: dm,
                        ratio: dm / eps_total,
                        ratio_v: dv / spec.eps_kappa,
                        status: "ok".into(),
                        deviation: Some(deviation),
                    }
                }
                Err(e) => StabilityRecord {
                    eps_kappa: spec.eps_kappa,
                    eps_q: spec.eps_q,
                    eps_total,
                    dv: f64::NAN,
                    dm_weighted: f64::NAN,
                    ratio: f64::NAN,
                    ratio_v: f64::NAN,
                    status: format!("failed: {e}"),
                    deviation: None,
                },
            }
        })
        .collect();
    records.extend(perturbed);
    records.sort_by(|a, b| a.eps_total.total_cmp(&b.eps_total));
    let csv = render_csv(&records);
    Ok((records, csv))
}

/// Renders records as the fixed-column CSV (LF endings, locale-free).
pub fn render_csv(records: &[StabilityRecord]) -> String {
    let mut out =
        String::from("eps_kappa,eps_q,eps_total,dv,dm_weighted,ratio,ratio_v,status\n");
    for r in records {
        out.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
            r.eps_kappa, r.eps_q, r.eps_total, r.dv, r.dm_weighted, r.ratio, r.ratio_v, r.status
        ));
    }
    out
}

/// Per-row verdict of the norm-equivalence report.
#[derive(Debug, Clone)]
pub struct RemarkRow {
    pub eps_total: f64,
    /// `||M_hat_0||_{L2}` of the weighted deviation.
    pub m0_l2: f64,
    /// `||M_hat_0||_{L1} + ||M_hat_1||_{L1} + ||Q_hat||_{L2}`.
    pub sum_three: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub m1_le_m0: bool,
}

/// Report of `theorem1_comparison`.
#[derive(Debug, Clone)]
pub struct Theorem1Report {
    pub rows: Vec<RemarkRow>,
    pub all_pass: bool,
}

/// Two-sided equivalence of the weighted kernel norm with the transformed
/// triple, `(1/3) ||M_hat_0|| <= sum-of-three <= (2 sqrt(pi) + 3) ||M_hat_0||`,
/// plus `||M_hat_1||_{L1} <= ||M_hat_0||_{L1}`, on every sweep row that
/// carries a deviation. A 2% slack absorbs quadrature error.
pub fn theorem1_comparison(records: &[StabilityRecord]) -> Theorem1Report {
    let c1 = 1.0 / 3.0;
    let c2 = 2.0 * PI.sqrt() + 3.0;
    let slack = 1.02;
    let mut rows = Vec::new();
    for r in records {
        let Some(dev) = &r.deviation else { continue };
        let (m0, m1, qh) = remark1_transforms(dev);
        let m0_l2 = norms(&m0).l2;
        let sum_three = l1_norm(&m0) + l1_norm(&m1) + norms(&qh).l2;
        rows.push(RemarkRow {
            eps_total: r.eps_total,
            m0_l2,
            sum_three,
            lower_ok: c1 * m0_l2 <= sum_three * slack,
            upper_ok: sum_three <= c2 * m0_l2 * slack,
            m1_le_m0: l1_norm(&m1) <= l1_norm(&m0) * slack,
        });
    }
    let all_pass = rows.iter().all(|r| r.lower_ok && r.upper_ok && r.m1_le_m0);
    Theorem1Report { rows, all_pass }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numgrid::Grid;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn base(k: usize) -> (Spectrum, SampledFunction) {
        let g = Grid::new(64).unwrap();
        let q = SampledFunction::from_real_fn(g, f64::cos);
        let spec = Spectrum::new(
            (1..=k).map(|n| c((n * n) as f64 + 0.05 / n as f64)).collect(),
            c(0.0),
        );
        (spec, q)
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let (spec, q) = base(12);
        let p = PerturbationSpec {
            seed: 7,
            eps_kappa: 0.0,
            eps_q: 0.0,
            shape: PerturbShape::RandomDecaying,
        };
        let (sp, qt) = perturb(&spec, &q, &p).unwrap();
        assert_eq!(qt.values, q.values);
        for (a, b) in sp.lambdas.iter().zip(&spec.lambdas) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_mode_construction() {
        let (spec, q) = base(12);
        let p = PerturbationSpec {
            seed: 0,
            eps_kappa: 1e-2,
            eps_q: 0.0,
            shape: PerturbShape::SingleMode(3),
        };
        let (sp, _) = perturb(&spec, &q, &p).unwrap();
        for i in 0..12 {
            let shift = (sp.lambdas[i] - spec.lambdas[i]).norm();
            if i == 2 {
                assert!((shift - 1e-2).abs() < 1e-12);
            } else {
                assert!(shift < 1e-12);
            }
        }
    }

    #[test]
    fn random_decaying_hits_target_norm() {
        let (spec, q) = base(20);
        let p = PerturbationSpec {
            seed: 42,
            eps_kappa: 3e-2,
            eps_q: 0.0,
            shape: PerturbShape::RandomDecaying,
        };
        let (sp, _) = perturb(&spec, &q, &p).unwrap();
        let l2: f64 = sp
            .lambdas
            .iter()
            .zip(&spec.lambdas)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!((l2 - 3e-2).abs() < 1e-10, "norm {l2}");
    }

    #[test]
    fn seeded_perturbation_reproducible() {
        let (spec, q) = base(20);
        let p = PerturbationSpec {
            seed: 9,
            eps_kappa: 1e-2,
            eps_q: 1e-2,
            shape: PerturbShape::RandomDecaying,
        };
        let (s1, q1) = perturb(&spec, &q, &p).unwrap();
        let (s2, q2) = perturb(&spec, &q, &p).unwrap();
        assert_eq!(q1.values, q2.values);
        assert_eq!(s1.lambdas, s2.lambdas);
    }

    #[test]
    fn q_bump_has_unit_shape_norm() {
        let (spec, q) = base(12);
        let p = PerturbationSpec {
            seed: 0,
            eps_kappa: 0.0,
            eps_q: 2.5e-2,
            shape: PerturbShape::SingleMode(1),
        };
        let (_, qt) = perturb(&spec, &q, &p).unwrap();
        let dev = SampledFunction {
            grid: q.grid,
            values: qt.values.iter().zip(&q.values).map(|(a, b)| a - b).collect(),
        };
        // trapezoid norm of sin on a 64-panel grid is accurate to ~1e-4
        assert!((norms(&dev).l2 - 2.5e-2).abs() < 1e-5);
    }

    #[test]
    fn sweep_small_grid_deterministic_and_bounded() {
        let g = Grid::new(64).unwrap();
        let q = SampledFunction::from_real_fn(g, f64::cos);
        let m = SampledFunction::from_real_fn(g, |x| 0.2 * x.cos());
        let eps = [1e-2, 3e-2];
        let (rec1, csv1) =
            stability_sweep(&q, &m, 16, &eps, PerturbShape::RandomDecaying, 11, false).unwrap();
        let (_, csv2) =
            stability_sweep(&q, &m, 16, &eps, PerturbShape::RandomDecaying, 11, false).unwrap();
        assert_eq!(csv1, csv2);
        assert_eq!(rec1.len(), 3);
        assert!(rec1[0].eps_total == 0.0 && rec1[0].dm_weighted <= 1e-12);
        for r in &rec1[1..] {
            assert_eq!(r.status, "ok", "{}", r.status);
            assert!(r.ratio.is_finite() && r.ratio > 0.0);
            assert!(r.ratio <= 100.0, "ratio {}", r.ratio);
        }
        let report = theorem1_comparison(&rec1);
        assert!(report.all_pass);
        assert_eq!(report.rows.len(), 2);
    }

    #[test]
    fn eps_list_validation() {
        let g = Grid::new(64).unwrap();
        let q = SampledFunction::zeros(g);
        let m = SampledFunction::zeros(g);
        assert!(stability_sweep(&q, &m, 8, &[1e-2, 1e-3], PerturbShape::RandomDecaying, 0, false)
            .is_err());
        assert!(stability_sweep(&q, &m, 8, &[0.0], PerturbShape::RandomDecaying, 0, false)
            .is_err());
    }
}
