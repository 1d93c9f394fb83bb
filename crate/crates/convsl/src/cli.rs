//! Problem-file parsing, result bundles, and the command implementations
//! behind the binary's subcommands.

use num_complex::Complex64;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::charfield::{mean_check, recover_v, ProductDelta};
use crate::forward::{eigenvalues, omega_of, Spectrum};
use crate::inverse::invert;
use crate::numgrid::{norms, Grid, SampledFunction};
use crate::stability_lab::{stability_sweep, PerturbShape};
use crate::{Error, Result};

/// A function given either as a named builtin or as inline samples.
#[derive(Debug, Clone)]
pub enum FunctionSpec {
    /// `zero`, `const:<c>`, `cos[:<a>]`, `sin[:<a>]`, `singular:<a>:<p>`
    /// (meaning `a (pi - x)^{-p}`).
    Builtin(String),
    Values(Vec<Complex64>),
}

impl FunctionSpec {
    pub fn resolve(&self, grid: Grid) -> Result<SampledFunction> {
        match self {
            FunctionSpec::Values(v) => {
                if v.len() != grid.nodes() {
                    return Err(Error::Parse(format!(
                        "inline array has {} entries, grid needs {}",
                        v.len(),
                        grid.nodes()
                    )));
                }
                SampledFunction::from_values(grid, v.clone())
            }
            FunctionSpec::Builtin(name) => resolve_builtin(name, grid),
        }
    }
}

fn resolve_builtin(name: &str, grid: Grid) -> Result<SampledFunction> {
    let parts: Vec<&str> = name.split(':').collect();
    let bad = || Error::Parse(format!("unknown builtin function '{name}'"));
    let amp = |idx: usize| -> Result<f64> {
        match parts.get(idx) {
            None => Ok(1.0),
            Some(s) => s.parse::<f64>().map_err(|_| bad()),
        }
    };
    match parts[0] {
        "zero" => Ok(SampledFunction::zeros(grid)),
        "const" => {
            let c: f64 = parts.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            Ok(SampledFunction::constant(grid, Complex64::new(c, 0.0)))
        }
        "cos" => {
            let a = amp(1)?;
            Ok(SampledFunction::from_real_fn(grid, move |x| a * x.cos()))
        }
        "sin" => {
            let a = amp(1)?;
            Ok(SampledFunction::from_real_fn(grid, move |x| a * x.sin()))
        }
        "singular" => {
            let a: f64 = parts.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let p: f64 = parts.get(2).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let n = grid.panels();
            let mut f = SampledFunction::from_fn(grid, |x| {
                Complex64::new(a * (PI - x).powf(-p), 0.0)
            });
            f.values[n] = Complex64::new(0.0, 0.0); // endpoint carries the weighted-limit 0
            Ok(f)
        }
        _ => Err(bad()),
    }
}

/// Parsed problem description.
#[derive(Debug, Clone)]
pub struct ProblemFile {
    pub grid_panels: usize,
    pub k: Option<usize>,
    pub kv: Option<usize>,
    pub q: FunctionSpec,
    pub m: FunctionSpec,
    pub spectrum: Option<Vec<Complex64>>,
    pub eps: Vec<f64>,
    pub seed: u64,
    pub shape: PerturbShape,
    pub mixed: bool,
}

impl ProblemFile {
    /// Parses the line-oriented `key = value` format. Array blocks open with
    /// `key:` and close with `end`; entries are one or two whitespace-split
    /// reals per line (real part, optional imaginary part).
    pub fn parse(text: &str) -> Result<Self> {
        let mut grid_panels: Option<usize> = None;
        let mut k = None;
        let mut kv = None;
        let mut q = FunctionSpec::Builtin("zero".into());
        let mut m = FunctionSpec::Builtin("zero".into());
        let mut spectrum = None;
        let mut eps = vec![1e-3, 3e-3, 1e-2, 3e-2];
        let mut seed = 0u64;
        let mut shape = PerturbShape::RandomDecaying;
        let mut mixed = false;

        let err = |msg: String| Error::Parse(msg);
        let mut lines = text.lines().enumerate().peekable();
        while let Some((lineno, raw)) = lines.next() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(key) = line.strip_suffix(':') {
                // array block
                let mut vals = Vec::new();
                let mut closed = false;
                for (bn, braw) in lines.by_ref() {
                    let b = braw.trim();
                    if b.is_empty() || b.starts_with('#') {
                        continue;
                    }
                    if b == "end" {
                        closed = true;
                        break;
                    }
                    let nums: Vec<f64> = b
                        .split_whitespace()
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| err(format!("line {}: bad number in block", bn + 1)))?;
                    match nums.len() {
                        1 => vals.push(Complex64::new(nums[0], 0.0)),
                        2 => vals.push(Complex64::new(nums[0], nums[1])),
                        _ => {
                            return Err(err(format!(
                                "line {}: expected 1 or 2 numbers",
                                bn + 1
                            )))
                        }
                    }
                }
                if !closed {
                    return Err(err(format!("block '{key}' not closed with 'end'")));
                }
                match key.trim() {
                    "spectrum" => spectrum = Some(vals),
                    "q_values" => q = FunctionSpec::Values(vals),
                    "m_values" => m = FunctionSpec::Values(vals),
                    other => return Err(err(format!("unknown block '{other}'"))),
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            let parse_usize = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| err(format!("line {}: bad integer '{v}'", lineno + 1)))
            };
            match key {
                "grid" => grid_panels = Some(parse_usize(value)?),
                "K" => k = Some(parse_usize(value)?),
                "Kv" => kv = Some(parse_usize(value)?),
                "q" => q = FunctionSpec::Builtin(value.into()),
                "m" => m = FunctionSpec::Builtin(value.into()),
                "seed" => {
                    seed = value
                        .parse()
                        .map_err(|_| err(format!("line {}: bad seed", lineno + 1)))?
                }
                "mixed" => {
                    mixed = value
                        .parse()
                        .map_err(|_| err(format!("line {}: bad bool", lineno + 1)))?
                }
                "eps" => {
                    eps = value
                        .split(',')
                        .map(|t| t.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| err(format!("line {}: bad eps list", lineno + 1)))?
                }
                "shape" => {
                    shape = match value.split_once(':') {
                        Some(("single-mode", n)) => {
                            PerturbShape::SingleMode(parse_usize(n.trim())?)
                        }
                        None if value == "random-decaying" => PerturbShape::RandomDecaying,
                        _ => {
                            return Err(err(format!(
                                "line {}: unknown shape '{value}'",
                                lineno + 1
                            )))
                        }
                    }
                }
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        let grid_panels =
            grid_panels.ok_or_else(|| err("missing required key 'grid'".into()))?;
        if grid_panels % 2 != 0 || grid_panels < 64 {
            return Err(err(format!("grid = {grid_panels} must be even and >= 64")));
        }
        if let Some(kk) = k {
            if kk > grid_panels / 4 {
                return Err(err(format!("K = {kk} exceeds grid/4 = {}", grid_panels / 4)));
            }
        }
        Ok(ProblemFile {
            grid_panels,
            k,
            kv,
            q,
            m,
            spectrum,
            eps,
            seed,
            shape,
            mixed,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Flag overrides applied on top of a problem file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub grid: Option<usize>,
    pub k: Option<usize>,
    pub kv: Option<usize>,
    pub seed: Option<u64>,
}

impl ProblemFile {
    pub fn apply(&mut self, ov: &Overrides) -> Result<()> {
        if let Some(g) = ov.grid {
            if g % 2 != 0 || g < 64 {
                return Err(Error::Argument(format!("--grid {g} must be even and >= 64")));
            }
            self.grid_panels = g;
        }
        if let Some(k) = ov.k {
            self.k = Some(k);
        }
        if let Some(kv) = ov.kv {
            self.kv = Some(kv);
        }
        if let Some(s) = ov.seed {
            self.seed = s;
        }
        Ok(())
    }

    fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid_panels)
    }

    fn k_or_default(&self) -> usize {
        self.k.unwrap_or_else(|| (self.grid_panels / 4).min(40))
    }

    fn spectrum_object(&self, q: &SampledFunction) -> Result<Spectrum> {
        let lam = self
            .spectrum
            .clone()
            .ok_or_else(|| Error::Parse("problem file carries no spectrum block".into()))?;
        Ok(Spectrum::new(lam, omega_of(q)))
    }
}

/// Files written by one command plus the resolved configuration.
#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub manifest: Vec<(String, String)>,
}

impl ResultBundle {
    fn new(out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir)?;
        Ok(ResultBundle {
            out_dir: out_dir.to_path_buf(),
            files: Vec::new(),
            manifest: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        fs::write(self.out_dir.join(name), content)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        self.manifest.push((key.to_string(), value.to_string()));
    }

    fn finish(&mut self) -> Result<()> {
        let mut text = String::new();
        for (k, v) in &self.manifest {
            let _ = writeln!(text, "{k} = {v}");
        }
        for f in &self.files {
            let _ = writeln!(text, "file = {f}");
        }
        fs::write(self.out_dir.join("manifest.txt"), text)?;
        self.files.push("manifest.txt".to_string());
        Ok(())
    }
}

fn note_config(bundle: &mut ResultBundle, pf: &ProblemFile, command: &str) {
    bundle.note("command", command);
    bundle.note("grid", pf.grid_panels);
    bundle.note("K", pf.k_or_default());
    bundle.note(
        "Kv",
        pf.kv.unwrap_or_else(|| pf.k_or_default().min(pf.grid_panels / 2)),
    );
    bundle.note("seed", pf.seed);
}

fn eigen_csv(spec: &Spectrum) -> String {
    let mut out = String::from("n,re_lambda,im_lambda,re_kappa,im_kappa\n");
    for (i, lam) in spec.lambdas.iter().enumerate() {
        let kap = spec.remainder(i + 1);
        let _ = writeln!(
            out,
            "{},{:.12e},{:.12e},{:.12e},{:.12e}",
            i + 1,
            lam.re,
            lam.im,
            kap.re,
            kap.im
        );
    }
    out
}

fn function_csv(f: &SampledFunction, header: &str, weighted: bool) -> String {
    let mut out = String::from(header);
    out.push('\n');
    let n = f.grid.panels();
    for i in 0..=n {
        let x = f.grid.node(i);
        let v = f.values[i];
        if weighted {
            let w = v * (PI - x);
            let _ = writeln!(
                out,
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                x, v.re, v.im, w.re, w.im
            );
        } else {
            let _ = writeln!(out, "{:.12e},{:.12e},{:.12e}", x, v.re, v.im);
        }
    }
    out
}

/// Forward solve: eigenvalues of `(q, M)` to `eigenvalues.csv`.
pub fn cmd_forward(problem_path: &Path, out_dir: &Path, ov: &Overrides) -> Result<ResultBundle> {
    let mut pf = ProblemFile::load(problem_path)?;
    pf.apply(ov)?;
    let grid = pf.grid()?;
    let q = pf.q.resolve(grid)?;
    let m = pf.m.resolve(grid)?;
    let spec = eigenvalues(&q, &m, pf.k_or_default())?;
    let mut bundle = ResultBundle::new(out_dir)?;
    note_config(&mut bundle, &pf, "forward");
    bundle.note("omega_re", format!("{:.12e}", spec.omega.re));
    bundle.write("eigenvalues.csv", &eigen_csv(&spec))?;
    bundle.finish()?;
    Ok(bundle)
}

/// Step (i): recover `v` from the spectrum block, writing `v.csv` and the
/// mean-check residual.
pub fn cmd_recover_v(problem_path: &Path, out_dir: &Path, ov: &Overrides) -> Result<ResultBundle> {
    let mut pf = ProblemFile::load(problem_path)?;
    pf.apply(ov)?;
    let grid = pf.grid()?;
    let q = pf.q.resolve(grid)?;
    let spec = pf.spectrum_object(&q)?;
    let kv = pf
        .kv
        .unwrap_or_else(|| spec.count().min(grid.panels() / 2));
    let pd = ProductDelta::new(spec);
    let v = recover_v(&pd, kv, grid)?;
    let mean = mean_check(&v, pd.spectrum.omega);
    let mut bundle = ResultBundle::new(out_dir)?;
    note_config(&mut bundle, &pf, "recover-v");
    bundle.note("mean_residual", format!("{mean:.12e}"));
    bundle.write("v.csv", &function_csv(&v, "x,re_v,im_v", false))?;
    bundle.finish()?;
    Ok(bundle)
}

/// Full inversion of the spectrum block against `q`; writes `m.csv` and the
/// per-block trace.
pub fn cmd_invert(problem_path: &Path, out_dir: &Path, ov: &Overrides) -> Result<ResultBundle> {
    let mut pf = ProblemFile::load(problem_path)?;
    pf.apply(ov)?;
    let grid = pf.grid()?;
    let q = pf.q.resolve(grid)?;
    let spec = pf.spectrum_object(&q)?;
    let (m, trace) = invert(&spec, &q)?;
    let mut bundle = ResultBundle::new(out_dir)?;
    note_config(&mut bundle, &pf, "invert");
    bundle.note("mean_residual", format!("{:.12e}", trace.mean_residual));
    bundle.note("final_residual", format!("{:.12e}", trace.final_residual));
    bundle.note("z_mean", format!("{:.12e}", trace.z_mean));
    let mut tr = String::from("block,right_node,iters,residual\n");
    for (i, right) in trace.block_rights.iter().enumerate() {
        let _ = writeln!(
            tr,
            "{},{},{},{:.12e}",
            i,
            right,
            trace.block_iters.get(i).copied().unwrap_or(1),
            trace.block_residuals.get(i).copied().unwrap_or(f64::NAN)
        );
    }
    bundle.write("trace.csv", &tr)?;
    bundle.write(
        "m.csv",
        &function_csv(&m, "x,re_m,im_m,re_m_weighted,im_m_weighted", true),
    )?;
    bundle.finish()?;
    Ok(bundle)
}

/// Forward, then invert, then forward again; writes both spectra and both
/// kernels plus an error summary.
pub fn cmd_roundtrip(problem_path: &Path, out_dir: &Path, ov: &Overrides) -> Result<ResultBundle> {
    let mut pf = ProblemFile::load(problem_path)?;
    pf.apply(ov)?;
    let grid = pf.grid()?;
    let q = pf.q.resolve(grid)?;
    let m_true = pf.m.resolve(grid)?;
    let k = pf.k_or_default();
    let stage = |s: &'static str, e: Error| Error::Stage {
        stage: s,
        source: Box::new(e),
    };
    let spec_in = eigenvalues(&q, &m_true, k).map_err(|e| stage("forward", e))?;
    let (m_rec, trace) = invert(&spec_in, &q).map_err(|e| stage("invert", e))?;
    let spec_out = eigenvalues(&q, &m_rec, k).map_err(|e| stage("re-forward", e))?;

    let dev = SampledFunction {
        grid,
        values: m_rec
            .values
            .iter()
            .zip(&m_true.values)
            .map(|(a, b)| a - b)
            .collect(),
    };
    let wref = norms(&m_true).l2_weighted;
    let werr = norms(&dev).l2_weighted;
    let spec_dev = spec_in
        .lambdas
        .iter()
        .zip(&spec_out.lambdas)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);

    let mut bundle = ResultBundle::new(out_dir)?;
    note_config(&mut bundle, &pf, "roundtrip");
    bundle.note("dm_weighted", format!("{werr:.12e}"));
    if wref > 0.0 {
        bundle.note("dm_weighted_relative", format!("{:.12e}", werr / wref));
    }
    bundle.note("spectrum_max_dev", format!("{spec_dev:.12e}"));
    bundle.note("final_residual", format!("{:.12e}", trace.final_residual));
    bundle.write("eigenvalues.csv", &eigen_csv(&spec_in))?;
    bundle.write("eigenvalues_roundtrip.csv", &eigen_csv(&spec_out))?;
    bundle.write(
        "m_true.csv",
        &function_csv(&m_true, "x,re_m,im_m,re_m_weighted,im_m_weighted", true),
    )?;
    bundle.write(
        "m.csv",
        &function_csv(&m_rec, "x,re_m,im_m,re_m_weighted,im_m_weighted", true),
    )?;
    bundle.finish()?;
    Ok(bundle)
}

/// Perturbation sweep; writes `stability.csv`. Fails (solver error) when
/// fewer than 80% of rows succeed.
pub fn cmd_stability(problem_path: &Path, out_dir: &Path, ov: &Overrides) -> Result<ResultBundle> {
    let mut pf = ProblemFile::load(problem_path)?;
    pf.apply(ov)?;
    let grid = pf.grid()?;
    let q = pf.q.resolve(grid)?;
    let m = pf.m.resolve(grid)?;
    let (records, csv) = stability_sweep(
        &q,
        &m,
        pf.k_or_default(),
        &pf.eps,
        pf.shape,
        pf.seed,
        pf.mixed,
    )?;
    let ok = records.iter().filter(|r| r.status == "ok").count();
    let mut bundle = ResultBundle::new(out_dir)?;
    note_config(&mut bundle, &pf, "stability");
    bundle.note("rows", records.len());
    bundle.note("rows_ok", ok);
    bundle.write("stability.csv", &csv)?;
    bundle.finish()?;
    if (ok as f64) < 0.8 * records.len() as f64 {
        return Err(Error::IterationFailure {
            iters: records.len() - ok,
            increment: f64::NAN,
        });
    }
    Ok(bundle)
}

/// Maps an error to the documented process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse(_) | Error::Argument(_) => 2,
        Error::InconsistentData(_) => 4,
        Error::Stage { source, .. } => exit_code(source),
        _ => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_minimal() {
        let pf = ProblemFile::parse("grid = 128\nK = 16\nq = cos\nm = cos:0.2\n").unwrap();
        assert_eq!(pf.grid_panels, 128);
        assert_eq!(pf.k, Some(16));
        let g = Grid::new(128).unwrap();
        let m = pf.m.resolve(g).unwrap();
        assert!((m.values[0].re - 0.2).abs() < 1e-14);
    }

    #[test]
    fn parse_blocks_and_lists() {
        let text = "grid = 64\n# comment\neps = 1e-3, 1e-2\nseed = 5\nmixed = true\n\
                    shape = single-mode:3\nspectrum:\n1.0 0.1\n4.2\nend\n";
        let pf = ProblemFile::parse(text).unwrap();
        assert_eq!(pf.eps, vec![1e-3, 1e-2]);
        assert_eq!(pf.seed, 5);
        assert!(pf.mixed);
        assert_eq!(pf.shape, PerturbShape::SingleMode(3));
        let sp = pf.spectrum.unwrap();
        assert_eq!(sp.len(), 2);
        assert_eq!(sp[0], Complex64::new(1.0, 0.1));
        assert_eq!(sp[1], Complex64::new(4.2, 0.0));
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(ProblemFile::parse("K = 10\n").is_err()); // no grid
        assert!(ProblemFile::parse("grid = 63\n").is_err()); // odd
        assert!(ProblemFile::parse("grid = 32\n").is_err()); // too small
        assert!(ProblemFile::parse("grid = 128\nK = 100\n").is_err()); // K > n/4
        assert!(ProblemFile::parse("grid = 128\nbogus = 1\n").is_err());
        assert!(ProblemFile::parse("grid = 128\nspectrum:\n1.0\n").is_err()); // unclosed
    }

    #[test]
    fn builtin_singular_is_finite() {
        let g = Grid::new(64).unwrap();
        let f = resolve_builtin("singular:0.1:0.3", g).unwrap();
        assert!(f.values.iter().all(|v| v.is_finite()));
        assert!(f.values[63].re > f.values[0].re);
        assert_eq!(f.values[64], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn values_length_checked() {
        let g = Grid::new(64).unwrap();
        let f = FunctionSpec::Values(vec![Complex64::new(1.0, 0.0); 10]);
        assert!(f.resolve(g).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Parse("x".into())), 2);
        assert_eq!(exit_code(&Error::InconsistentData("x".into())), 4);
        assert_eq!(
            exit_code(&Error::IterationFailure {
                iters: 1,
                increment: 0.0
            }),
            3
        );
        assert_eq!(
            exit_code(&Error::Stage {
                stage: "s",
                source: Box::new(Error::InconsistentData("x".into()))
            }),
            4
        );
    }

    #[test]
    fn forward_command_end_to_end() {
        let dir = std::env::temp_dir().join("convsl-cli-test-forward");
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        let problem = dir.join("problem.txt");
        fs::write(&problem, "grid = 128\nK = 8\nq = zero\nm = zero\n").unwrap();
        let out = dir.join("out");
        let bundle = cmd_forward(&problem, &out, &Overrides::default()).unwrap();
        assert!(bundle.files.contains(&"eigenvalues.csv".to_string()));
        let csv = fs::read_to_string(out.join("eigenvalues.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "n,re_lambda,im_lambda,re_kappa,im_kappa"
        );
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        let lam1: f64 = first[1].parse().unwrap();
        assert!((lam1 - 1.0).abs() < 1e-4);
        assert!(out.join("manifest.txt").exists());
    }
}
