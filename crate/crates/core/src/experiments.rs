//! Monte Carlo weak and strong error measurement on refinement ladders,
//! log-log rate fits and the CSV report format.

use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{BoundaryKind, FemOperators, OperatorCoefficients};
use crate::integrator::{RunConfig, Scheme};
use crate::matfunc::KrylovConfig;
use crate::mesh::Mesh;
use crate::model::{smooth_initial_coefficients, InitialCondition, NoiseKind, SpdeProblem};
use crate::noise::{default_n_max, project_modes, CovarianceSpectrum, ModeMatrix, NoiseStream, SpectralBasis};
use crate::reference::{
    exact_mean_phi1, exact_second_moment, simulate_exact_coefficients, spectral_phi1, spectral_phi2, OuMode,
    OuModel,
};

/// Realization indices of an independent fine-grid reference start here.
const FINE_REFERENCE_OFFSET: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    /// `Φ₁(v) = ∫_Ω v`
    Phi1,
    /// `Φ₂(v) = ‖v‖²_{L²}`
    Phi2,
}

impl Functional {
    pub fn name(self) -> &'static str {
        match self {
            Self::Phi1 => "Phi1",
            Self::Phi2 => "Phi2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Additive noise, `F(u) = -c u`.
    Linear2d,
    /// As `Linear2d` with `b(u) = u / (1 + u²)`.
    MultiplicativeDemo,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Self::Linear2d => "linear2d",
            Self::MultiplicativeDemo => "multiplicative-demo",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    Zero,
    /// `Σ_{i,j≥1} (i²+j²)^{-1.001} e_{i,j}`
    Smooth,
    /// Explicit spectral coefficients; modes outside the retained set are
    /// an error.
    Modes(Vec<((usize, usize), f64)>),
}

/// Square-grid benchmark problem with Neumann conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub preset: Preset,
    pub lx: f64,
    pub ly: f64,
    pub diffusion: f64,
    pub reaction: f64,
    pub beta: f64,
    pub delta: f64,
    pub q00: f64,
    /// `None`: `default_n_max(dofs)` on every mesh.
    pub n_max: Option<usize>,
    /// `false` switches the noise off.
    pub noise: bool,
    pub initial: Initial,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            preset: Preset::Linear2d,
            lx: 1.0,
            ly: 1.0,
            diffusion: crate::model::BENCHMARK_DIFFUSION,
            reaction: crate::model::BENCHMARK_REACTION,
            beta: 1.0,
            delta: 0.001,
            q00: 0.0,
            n_max: None,
            noise: true,
            initial: Initial::Zero,
        }
    }
}

impl BenchmarkSpec {
    pub fn basis(&self) -> SpectralBasis<f64> {
        SpectralBasis::new(self.lx, self.ly)
    }

    pub fn ou_model(&self) -> OuModel<f64> {
        OuModel::new(self.basis(), self.diffusion, self.reaction)
    }

    /// Closed forms exist for the additive linear problem only.
    pub fn has_exact_solution(&self) -> bool {
        self.preset == Preset::Linear2d
    }

    pub fn mesh(&self, cells: usize) -> Result<Mesh<f64>> {
        Mesh::rect(cells, cells, self.lx, self.ly)
    }

    pub fn spectrum(&self, dofs: usize) -> Result<CovarianceSpectrum<f64>> {
        let n = self.n_max.unwrap_or_else(|| default_n_max(dofs));
        if self.noise {
            CovarianceSpectrum::new(self.beta, self.delta, n, self.q00)
        } else {
            Ok(CovarianceSpectrum::silent(n))
        }
    }

    pub fn initial_coefficients(&self, spectrum: &CovarianceSpectrum<f64>) -> Result<Option<Vec<f64>>> {
        match &self.initial {
            Initial::Zero => Ok(None),
            Initial::Smooth => Ok(Some(smooth_initial_coefficients(spectrum))),
            Initial::Modes(list) => {
                let mut c = vec![0.0; spectrum.len()];
                for &((i, j), v) in list {
                    let k = spectrum.rank(i, j).ok_or_else(|| {
                        Error::Experiment(format!("initial mode ({i},{j}) is not retained"))
                    })?;
                    c[k] = v;
                }
                Ok(Some(c))
            }
        }
    }

    pub fn problem(&self, x0: Option<Vec<f64>>, final_time: f64) -> SpdeProblem<f64> {
        let c = self.reaction;
        let mut p = SpdeProblem::linear2d().with_final_time(final_time);
        p.coeffs = OperatorCoefficients::isotropic(self.diffusion);
        p.bc = BoundaryKind::Neumann;
        p.drift = Some(Arc::new(move |_, u| -c * u));
        p.lipschitz = Some(c.abs());
        if self.preset == Preset::MultiplicativeDemo {
            p.diffusion = NoiseKind::Multiplicative(Arc::new(|_, u| u / (1.0 + u * u)));
        }
        if let Some(x0) = x0 {
            p.initial = InitialCondition::Spectral(x0);
        }
        p
    }
}

/// One mesh and time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    /// Cells per side.
    pub cells: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ladder {
    /// Fixed mesh, varying time step.
    Time { cells: usize, dts: Vec<f64> },
    /// Fixed time step, varying mesh.
    Space { dt: f64, cells: Vec<usize> },
}

impl Ladder {
    pub fn resolutions(&self) -> Vec<Resolution> {
        match self {
            Self::Time { cells, dts } => dts.iter().map(|&dt| Resolution { cells: *cells, dt }).collect(),
            Self::Space { dt, cells } => cells.iter().map(|&c| Resolution { cells: c, dt: *dt }).collect(),
        }
    }

    fn varying(&self) -> Vec<f64> {
        match self {
            Self::Time { dts, .. } => dts.clone(),
            Self::Space { cells, .. } => cells.iter().map(|&c| 1.0 / c as f64).collect(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Time { .. } => "time",
            Self::Space { .. } => "space",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.varying();
        if v.is_empty() {
            return Err(Error::config("study.ladder", "empty ladder"));
        }
        if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::config("study.ladder", "resolutions must be positive"));
        }
        let up = v.windows(2).all(|w| w[1] > w[0]);
        let down = v.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::config("study.ladder", "ladder must be strictly monotone"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// Plain Monte Carlo mean against the closed-form expectation.
    ClosedForm,
    /// Control variate: the exact solution driven by the same deviates,
    /// whose functional has the closed-form mean, is subtracted per
    /// realization. Unbiased for the same error, far smaller variance.
    Paired,
    /// Independent Monte Carlo mean at a finer resolution.
    FineMc {
        cells: usize,
        dt: f64,
        realizations: usize,
    },
}

impl Reference {
    pub fn name(&self) -> String {
        match self {
            Self::ClosedForm => "closed-form".into(),
            Self::Paired => "paired".into(),
            Self::FineMc { cells, dt, realizations } => {
                format!("fine-mc(cells={cells}, dt={dt:e}, realizations={realizations})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakErrorConfig {
    pub spec: BenchmarkSpec,
    pub functional: Functional,
    pub realizations: usize,
    pub reference: Reference,
    pub ladder: Ladder,
    pub final_time: f64,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub krylov: KrylovConfig,
    /// Largest admissible bound on the discarded noise modes' `Σ q/(2k)`.
    pub eps_tail: f64,
}

impl WeakErrorConfig {
    /// Benchmark temporal study: `h = 1/32`, `Δt = 1/4 … 1/64`, `T = 1`.
    pub fn temporal(functional: Functional, seed: u64) -> Self {
        let spec = BenchmarkSpec {
            initial: match functional {
                Functional::Phi1 => Initial::Smooth,
                Functional::Phi2 => Initial::Zero,
            },
            ..BenchmarkSpec::default()
        };
        Self {
            spec,
            functional,
            realizations: 200,
            reference: Reference::Paired,
            ladder: Ladder::Time {
                cells: 32,
                dts: vec![0.25, 0.125, 0.0625, 0.03125, 0.015625],
            },
            final_time: 1.0,
            seed,
            threads: None,
            krylov: KrylovConfig::default(),
            eps_tail: 0.1,
        }
    }

    /// Benchmark spatial study: `Δt = 1/2000`, `T = 0.1`, `h = 1/4 … 1/32`.
    pub fn spatial(functional: Functional, seed: u64) -> Self {
        Self {
            ladder: Ladder::Space {
                dt: 1.0 / 2000.0,
                cells: vec![4, 8, 16, 32],
            },
            final_time: 0.1,
            ..Self::temporal(functional, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations < 2 {
            return Err(Error::config("study.realizations", "need at least 2 realizations"));
        }
        if !(self.final_time > 0.0) {
            return Err(Error::config("study.T", "final time must be positive"));
        }
        if !(self.eps_tail > 0.0) {
            return Err(Error::config("study.eps_tail", "must be positive"));
        }
        self.ladder.validate()?;
        for r in self.ladder.resolutions() {
            RunConfig::from_dt(self.final_time, r.dt)?;
        }
        if matches!(self.reference, Reference::ClosedForm | Reference::Paired) && !self.spec.has_exact_solution() {
            return Err(Error::config(
                "study.reference",
                format!("no closed form for preset {}", self.spec.preset.name()),
            ));
        }
        if let Reference::FineMc { realizations, dt, .. } = self.reference {
            if realizations < 2 {
                return Err(Error::config("study.reference_realizations", "need at least 2"));
            }
            RunConfig::from_dt(self.final_time, dt)?;
        }
        self.krylov.validate()
    }

    /// Human-readable `key = value` summary.
    pub fn echo(&self) -> String {
        let s = &self.spec;
        let mut out = String::new();
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "preset = {}", s.preset.name());
        let _ = writeln!(out, "L1 = {:e}, L2 = {:e}", s.lx, s.ly);
        let _ = writeln!(out, "D = {:e}, reaction = {:e}", s.diffusion, s.reaction);
        let _ = writeln!(out, "beta = {:e}, delta = {:e}, q00 = {:e}, noise = {}", s.beta, s.delta, s.q00, s.noise);
        let _ = writeln!(
            out,
            "n_max = {}",
            s.n_max.map_or("auto".to_string(), |n| n.to_string())
        );
        let _ = writeln!(out, "initial = {:?}", s.initial);
        let _ = writeln!(out, "functional = {}", self.functional.name());
        let _ = writeln!(out, "realizations = {}", self.realizations);
        let _ = writeln!(out, "reference = {}", self.reference.name());
        let _ = writeln!(out, "ladder = {:?}", self.ladder);
        let _ = writeln!(out, "T = {:e}", self.final_time);
        let _ = writeln!(out, "eps_tail = {:e}", self.eps_tail);
        let _ = writeln!(out, "krylov = {:?}", self.krylov);
        out
    }

    fn pool(&self) -> Result<Option<rayon::ThreadPool>> {
        match self.threads {
            None => Ok(None),
            Some(0) => Err(Error::config("threads", "must be at least 1")),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map(Some)
                .map_err(|e| Error::Experiment(format!("thread pool: {e}"))),
        }
    }
}

/// Everything one resolution needs, built once and shared by realizations.
pub struct Level {
    pub resolution: Resolution,
    pub ops: FemOperators<f64>,
    pub spectrum: CovarianceSpectrum<f64>,
    pub modes: ModeMatrix<f64>,
    pub problem: SpdeProblem<f64>,
    pub ou: Vec<OuMode<f64>>,
    pub run: RunConfig<f64>,
}

impl Level {
    pub fn new(cfg: &WeakErrorConfig, resolution: Resolution) -> Result<Self> {
        let spec = &cfg.spec;
        let mesh = spec.mesh(resolution.cells)?;
        let ops = FemOperators::assemble(&mesh, OperatorCoefficients::isotropic(spec.diffusion), BoundaryKind::Neumann)?;
        let spectrum = spec.spectrum(ops.dim())?;
        let modes = project_modes(&spec.basis(), &spectrum, &ops)?;
        let x0 = spec.initial_coefficients(&spectrum)?;
        let ou = if spec.has_exact_solution() {
            spec.ou_model().modes(&spectrum, x0.as_deref())?
        } else {
            Vec::new()
        };
        let problem = spec.problem(x0, cfg.final_time);
        let run = RunConfig::from_dt(cfg.final_time, resolution.dt)?.with_krylov(cfg.krylov);
        Ok(Self {
            resolution,
            ops,
            spectrum,
            modes,
            problem,
            ou,
            run,
        })
    }

    pub fn h(&self) -> f64 {
        self.ops.mesh().lx / self.resolution.cells as f64
    }

    fn scheme(&self) -> Result<Scheme<'_, f64>> {
        Scheme::new(&self.problem, &self.ops, &self.spectrum, &self.modes, self.run.clone())
    }

    fn functional(&self, f: Functional, x: &[f64]) -> Result<f64> {
        match f {
            Functional::Phi1 => self.ops.phi1(x),
            Functional::Phi2 => self.ops.phi2(x),
        }
    }

    /// Size of the terms summed by the functional, for roundoff estimates.
    fn magnitude(&self, f: Functional, x: &[f64]) -> Result<f64> {
        match f {
            Functional::Phi1 => Ok(self
                .ops
                .basis_integrals()
                .iter()
                .zip(x)
                .map(|(w, v)| (w * v).abs())
                .sum()),
            Functional::Phi2 => self.ops.phi2(x),
        }
    }

    fn exact_functional(&self, f: Functional, basis: &SpectralBasis<f64>, c: &[f64]) -> f64 {
        match f {
            Functional::Phi1 => spectral_phi1(&self.ou, basis, c),
            Functional::Phi2 => spectral_phi2(c),
        }
    }

    /// `E Φ(X(T))` over the retained modes.
    pub fn closed_form(&self, cfg: &WeakErrorConfig) -> Result<f64> {
        let t = cfg.final_time;
        match cfg.functional {
            Functional::Phi1 => Ok(exact_mean_phi1(&self.ou, &cfg.spec.basis(), t)),
            Functional::Phi2 => {
                let tail = if cfg.spec.noise {
                    cfg.spec.ou_model().tail_bound(&self.spectrum)
                } else {
                    0.0
                };
                Ok(exact_second_moment(&self.ou, t, tail, cfg.eps_tail)?.value)
            }
        }
    }
}

/// Neumaier-compensated sum; fixed order keeps totals schedule independent.
fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Sample mean and standard error of the mean.
pub fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = compensated_sum(xs.iter().copied()) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `f(r)` for `r = offset .. offset + count` and returns the results
/// in index order. Any failure fails the batch.
fn realizations<R, F>(pool: Option<&rayon::ThreadPool>, offset: u64, count: usize, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(u64) -> Result<R> + Sync + Send,
{
    let run = || {
        (0..count as u64)
            .into_par_iter()
            .map(|i| f(offset + i))
            .collect::<Result<Vec<R>>>()
    };
    match pool {
        Some(p) => p.install(run),
        None => run(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointResult {
    pub resolution: Resolution,
    pub h: f64,
    pub error: f64,
    pub mc_std_error: f64,
    /// Estimated `E Φ(X_M^h) − E Φ(X(T))` before taking the magnitude.
    pub signed_error: f64,
    /// Errors below this are floating point noise, not discretization error.
    pub roundoff: f64,
}

const ROUNDOFF_FACTOR: f64 = 1e3;

/// Reference mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceValue {
    pub mean: f64,
    pub std_error: f64,
}

/// Monte Carlo mean of the fine-grid reference, if one is configured.
pub fn fine_reference(cfg: &WeakErrorConfig) -> Result<Option<ReferenceValue>> {
    let Reference::FineMc { cells, dt, realizations: count } = cfg.reference else {
        return Ok(None);
    };
    cfg.validate()?;
    let pool = cfg.pool()?;
    let level = Level::new(cfg, Resolution { cells, dt })?;
    let scheme = level.scheme()?;
    let stream = NoiseStream::new(cfg.seed);
    let values = realizations(pool.as_ref(), FINE_REFERENCE_OFFSET, count, |r| {
        let x = scheme.simulate(&stream, r)?.final_state.x;
        level.functional(cfg.functional, &x)
    })?;
    let (mean, std_error) = mean_and_std_error(&values);
    Ok(Some(ReferenceValue { mean, std_error }))
}

/// Weak error at one resolution.
pub fn weak_error(cfg: &WeakErrorConfig, resolution: Resolution) -> Result<PointResult> {
    let fine = fine_reference(cfg)?;
    weak_error_with(cfg, resolution, fine)
}

fn weak_error_with(cfg: &WeakErrorConfig, resolution: Resolution, fine: Option<ReferenceValue>) -> Result<PointResult> {
    cfg.validate()?;
    let pool = cfg.pool()?;
    let level = Level::new(cfg, resolution)?;
    let scheme = level.scheme()?;
    let stream = NoiseStream::new(cfg.seed);
    let basis = cfg.spec.basis();
    let sample = |r: u64| -> Result<[f64; 2]> {
        let x = scheme.simulate(&stream, r)?.final_state.x;
        let mut v = level.functional(cfg.functional, &x)?;
        let mut size = level.magnitude(cfg.functional, &x)?;
        if cfg.reference == Reference::Paired {
            let c = simulate_exact_coefficients(&stream, r, &level.run, &level.ou, |_, _| {});
            let z = level.exact_functional(cfg.functional, &basis, &c);
            v -= z;
            size += z.abs();
        }
        Ok([v, size])
    };
    let samples = realizations(pool.as_ref(), 0, cfg.realizations, sample)?;
    let values: Vec<f64> = samples.iter().map(|s| s[0]).collect();
    let (m, s) = mean_and_std_error(&values);
    let size = compensated_sum(samples.iter().map(|s| s[1])) / samples.len() as f64;
    let (mean, std_error, ref_size) = match &cfg.reference {
        Reference::ClosedForm => {
            let e = level.closed_form(cfg)?;
            (m - e, s, e.abs())
        }
        Reference::Paired => (m, s, 0.0),
        Reference::FineMc { .. } => {
            let fine = fine.ok_or_else(|| Error::Experiment("fine reference missing".into()))?;
            (m - fine.mean, s.hypot(fine.std_error), fine.mean.abs())
        }
    };
    Ok(PointResult {
        resolution,
        h: level.h(),
        error: mean.abs(),
        mc_std_error: std_error,
        signed_error: mean,
        roundoff: ROUNDOFF_FACTOR * f64::EPSILON * (size + ref_size),
    })
}

/// Root-mean-square `L²(Ω)` distance between scheme and exact solution under
/// shared deviates. The exact field's part outside the finite element space
/// is included through `‖X‖² − ‖P_h X‖²`.
pub fn strong_error(cfg: &WeakErrorConfig, resolution: Resolution) -> Result<PointResult> {
    cfg.validate()?;
    if !cfg.spec.has_exact_solution() {
        return Err(Error::Experiment(format!(
            "strong error needs the exact solution; preset {} has none",
            cfg.spec.preset.name()
        )));
    }
    let pool = cfg.pool()?;
    let level = Level::new(cfg, resolution)?;
    let scheme = level.scheme()?;
    let stream = NoiseStream::new(cfg.seed);
    let squares = realizations(pool.as_ref(), 0, cfg.realizations, |r| {
        let x = scheme.simulate(&stream, r)?.final_state.x;
        let c = simulate_exact_coefficients(&stream, r, &level.run, &level.ou, |_, _| {});
        let ph = level.modes.combine(&c);
        let diff: Vec<f64> = x.iter().zip(&ph).map(|(a, b)| a - b).collect();
        let outside = (spectral_phi2(&c) - level.ops.phi2(&ph)?).max(0.0);
        Ok(level.ops.phi2(&diff)? + outside)
    })?;
    let (ms, s) = mean_and_std_error(&squares);
    let error = ms.sqrt();
    // delta method for the square root
    let mc_std_error = if error > 0.0 { s / (2.0 * error) } else { 0.0 };
    Ok(PointResult {
        resolution,
        h: level.h(),
        error,
        mc_std_error,
        signed_error: error,
        roundoff: 0.0,
    })
}

/// OLS slope of `log error` against `log resolution`, with the standard
/// error of the slope from the residual variance.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::Experiment("rate fit needs at least 2 points".into()));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::Experiment("rate fit needs positive resolutions and errors".into()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 1e-24) {
        return Err(Error::Experiment("degenerate abscissae in rate fit".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let std_error = if points.len() > 2 {
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                let e = y - my - slope * (x - mx);
                e * e
            })
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, std_error))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// `time`, `space`, `strong-time` or `strong-space`.
    pub study: String,
    pub functional: Option<Functional>,
    pub final_time: f64,
    pub realizations: usize,
    pub points: Vec<PointResult>,
    /// `None` when fewer than two points are statistically resolved.
    pub fitted_rate: Option<f64>,
    pub rate_std_error: Option<f64>,
    pub config_echo: String,
}

impl ConvergenceReport {
    /// A point is resolved when its error exceeds three standard errors and
    /// the roundoff level.
    pub fn resolved(&self) -> Vec<&PointResult> {
        self.points
            .iter()
            .filter(|p| p.error > 3.0 * p.mc_std_error && p.error > p.roundoff && p.error > 0.0)
            .collect()
    }

    fn fit(&mut self, time: bool) -> Result<()> {
        let pts: Vec<(f64, f64)> = self
            .resolved()
            .iter()
            .map(|p| (if time { p.resolution.dt } else { p.h }, p.error))
            .collect();
        if pts.len() < 2 {
            log::warn!(
                "{} study: only {} resolved point(s), rate undefined",
                self.study,
                pts.len()
            );
            self.fitted_rate = None;
            self.rate_std_error = None;
            return Ok(());
        }
        let (r, s) = fit_rate(&pts)?;
        self.fitted_rate = Some(r);
        self.rate_std_error = Some(s);
        Ok(())
    }

    /// Writes the report: `#` comment lines with the configuration, the
    /// header, one row per resolution and the fitted rate.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for line in self.config_echo.lines() {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "study,functional,h,dt,T,realizations,error,mc_std_error")?;
        let functional = self.functional.map_or("L2", Functional::name);
        for p in &self.points {
            writeln!(
                w,
                "{},{},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e}",
                self.study, functional, p.h, p.resolution.dt, self.final_time, self.realizations, p.error, p.mc_std_error
            )?;
        }
        match (self.fitted_rate, self.rate_std_error) {
            (Some(r), Some(s)) => writeln!(w, "# fitted_rate={r:.16e} std_error={s:.16e}")?,
            _ => writeln!(w, "# fitted_rate=undefined std_error=undefined")?,
        }
        Ok(())
    }
}

fn converge(cfg: &WeakErrorConfig, strong: bool) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let resolutions = cfg.ladder.resolutions();
    if resolutions.len() < 4 {
        return Err(Error::config("study.ladder", "a convergence study needs at least 4 resolutions"));
    }
    let fine = if strong { None } else { fine_reference(cfg)? };
    let mut points = Vec::with_capacity(resolutions.len());
    for res in resolutions {
        let p = if strong {
            strong_error(cfg, res)?
        } else {
            weak_error_with(cfg, res, fine)?
        };
        log::info!(
            "cells={} dt={:e}: error {:e} ± {:e}",
            res.cells,
            res.dt,
            p.error,
            p.mc_std_error
        );
        points.push(p);
    }
    let time = matches!(cfg.ladder, Ladder::Time { .. });
    let study = match (strong, time) {
        (false, true) => "time",
        (false, false) => "space",
        (true, true) => "strong-time",
        (true, false) => "strong-space",
    };
    let mut report = ConvergenceReport {
        study: study.into(),
        functional: (!strong).then_some(cfg.functional),
        final_time: cfg.final_time,
        realizations: cfg.realizations,
        points,
        fitted_rate: None,
        rate_std_error: None,
        config_echo: cfg.echo(),
    };
    report.fit(time)?;
    Ok(report)
}

/// Weak error on a `Δt` ladder.
pub fn converge_time(cfg: &WeakErrorConfig) -> Result<ConvergenceReport> {
    if !matches!(cfg.ladder, Ladder::Time { .. }) {
        return Err(Error::config("study.ladder", "converge_time needs a time-step ladder"));
    }
    converge(cfg, false)
}

/// Weak error on an `h` ladder.
pub fn converge_space(cfg: &WeakErrorConfig) -> Result<ConvergenceReport> {
    if !matches!(cfg.ladder, Ladder::Space { .. }) {
        return Err(Error::config("study.ladder", "converge_space needs a mesh ladder"));
    }
    converge(cfg, false)
}

/// Strong error on either ladder.
pub fn converge_strong(cfg: &WeakErrorConfig) -> Result<ConvergenceReport> {
    converge(cfg, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_exact_lines() {
        let (r, s) = fit_rate(&[(1.0, 1.0), (0.5, 0.5)]).unwrap();
        assert!((r - 1.0).abs() < 1e-15 && s == 0.0);
        let (r, _) = fit_rate(&[(1.0, 1.0), (0.5, 0.25), (0.25, 0.0625)]).unwrap();
        assert!((r - 2.0).abs() < 1e-14);
        let pts: Vec<(f64, f64)> = (0..6).map(|k| {
            let dt = 0.5f64.powi(k);
            (dt, 3.7 * dt)
        }).collect();
        let (r, s) = fit_rate(&pts).unwrap();
        assert!((r - 1.0).abs() < 1e-12 && s < 1e-12);
    }

    #[test]
    fn fit_noisy_triples() {
        let (r, s) = fit_rate(&[(1.0, 1.0), (0.5, 0.51), (0.25, 0.26)]).unwrap();
        assert!((r - 0.971708236).abs() < 1e-8, "{r}");
        assert!((s - 1.6015e-4).abs() < 1e-7, "{s}");
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        assert!(fit_rate(&[(1.0, 1.0)]).is_err());
        assert!(fit_rate(&[(0.5, 1.0), (0.5, 2.0)]).is_err());
        assert!(fit_rate(&[(0.5, 0.0), (0.25, 2.0)]).is_err());
    }

    #[test]
    fn compensated_sum_is_order_stable() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
        let (m, s) = mean_and_std_error(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ladder_validation() {
        assert!(Ladder::Time { cells: 4, dts: vec![0.5, 0.25] }.validate().is_ok());
        assert!(Ladder::Time { cells: 4, dts: vec![0.5, 0.5] }.validate().is_err());
        assert!(Ladder::Space { dt: 0.1, cells: vec![4, 16, 8] }.validate().is_err());
        let mut cfg = WeakErrorConfig::temporal(Functional::Phi2, 1);
        cfg.realizations = 1;
        assert!(cfg.validate().is_err());
        cfg.realizations = 2;
        cfg.ladder = Ladder::Time { cells: 4, dts: vec![0.3] };
        assert!(cfg.validate().is_err());
        cfg.ladder = Ladder::Time { cells: 4, dts: vec![0.5] };
        cfg.spec.preset = Preset::MultiplicativeDemo;
        assert!(cfg.validate().is_err());
    }

    fn small(functional: Functional) -> WeakErrorConfig {
        let mut cfg = WeakErrorConfig::temporal(functional, 9);
        cfg.ladder = Ladder::Time { cells: 4, dts: vec![0.25, 0.125, 0.0625, 0.03125] };
        cfg.realizations = 20;
        cfg.threads = Some(1);
        cfg
    }

    #[test]
    fn zero_noise_phi1_of_constant_mode() {
        let mut cfg = small(Functional::Phi1);
        cfg.spec.noise = false;
        cfg.spec.initial = Initial::Modes(vec![((0, 0), 1.0)]);
        cfg.reference = Reference::ClosedForm;
        let p = weak_error(&cfg, Resolution { cells: 4, dt: 0.0625 }).unwrap();
        assert_eq!(p.mc_std_error, 0.0);
        // constants are exact in V_h; only the explicit reaction error remains
        let b: f64 = 1.0 - 0.5 * 0.0625;
        let scheme_value = b.powi(16);
        assert!((p.signed_error - (scheme_value - (-0.5f64).exp())).abs() < 1e-10, "{p:?}");
    }

    #[test]
    fn std_error_shrinks_like_inverse_root() {
        let mut cfg = small(Functional::Phi2);
        cfg.reference = Reference::ClosedForm;
        let res = Resolution { cells: 4, dt: 0.125 };
        cfg.realizations = 100;
        let a = weak_error(&cfg, res).unwrap();
        cfg.realizations = 400;
        let b = weak_error(&cfg, res).unwrap();
        let ratio = b.mc_std_error / a.mc_std_error;
        assert!((ratio - 0.5).abs() < 0.15, "{ratio}");
    }

    #[test]
    fn paired_and_plain_estimators_agree() {
        let mut cfg = small(Functional::Phi2);
        cfg.realizations = 400;
        let res = Resolution { cells: 4, dt: 0.25 };
        let paired = weak_error(&cfg, res).unwrap();
        cfg.reference = Reference::ClosedForm;
        let plain = weak_error(&cfg, res).unwrap();
        assert!(paired.mc_std_error < plain.mc_std_error);
        let gap = (paired.signed_error - plain.signed_error).abs();
        assert!(gap < 3.0 * plain.mc_std_error.hypot(paired.mc_std_error), "{paired:?} {plain:?}");
    }

    #[test]
    fn report_csv_layout_and_thread_independence() {
        let mut cfg = small(Functional::Phi2);
        cfg.realizations = 8;
        let one = converge_time(&cfg).unwrap();
        cfg.threads = Some(3);
        let three = converge_time(&cfg).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        one.write_csv(&mut a).unwrap();
        three.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(lines[0], "study,functional,h,dt,T,realizations,error,mc_std_error");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("time,Phi2,2.5000000000000000e-1,2.5000000000000000e-1,1.0000000000000000e0,8,"));
        assert!(text.contains("# seed = 9"));
        assert!(text.lines().last().unwrap().starts_with("# fitted_rate="));
    }

    #[test]
    fn fewer_than_two_resolved_points_leave_the_rate_undefined() {
        let mut cfg = small(Functional::Phi1);
        cfg.realizations = 4;
        cfg.spec.noise = false;
        cfg.spec.initial = Initial::Zero;
        let report = converge_time(&cfg).unwrap();
        assert!(report.points.iter().all(|p| p.error == 0.0));
        assert!(report.fitted_rate.is_none());
        let mut out = Vec::new();
        report.write_csv(&mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().ends_with("# fitted_rate=undefined std_error=undefined\n"));
    }

    #[test]
    fn strong_error_without_noise_is_deterministic() {
        let mut cfg = small(Functional::Phi2);
        cfg.spec.noise = false;
        cfg.spec.initial = Initial::Smooth;
        let p = strong_error(&cfg, Resolution { cells: 4, dt: 0.125 }).unwrap();
        assert_eq!(p.mc_std_error, 0.0);
        assert!(p.error > 0.0);
    }

    #[test]
    fn aborted_realization_fails_the_point() {
        let mut cfg = small(Functional::Phi2);
        cfg.spec.preset = Preset::MultiplicativeDemo;
        cfg.spec.reaction = -1e300;
        cfg.reference = Reference::FineMc { cells: 4, dt: 0.125, realizations: 2 };
        cfg.spec.noise = false;
        cfg.spec.initial = Initial::Modes(vec![((0, 0), 1.0)]);
        let err = weak_error(&cfg, Resolution { cells: 4, dt: 0.25 });
        assert!(err.is_err());
    }
}
