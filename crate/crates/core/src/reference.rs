//! Closed-form Ornstein–Uhlenbeck solution of the linear benchmark
//! `dX = (D Δ X − c X) dt + dW` with Neumann conditions. Every cosine mode
//! evolves independently with decay rate `k = D λ + c`.

use crate::error::{Error, Result};
use crate::integrator::RunConfig;
use crate::noise::{CovarianceSpectrum, ModeMatrix, NoiseStream, SpectralBasis};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuMode<T> {
    pub i: usize,
    pub j: usize,
    /// Decay rate `k_{i,j}`.
    pub k: T,
    /// Covariance eigenvalue `q_{i,j}`.
    pub q: T,
    /// Initial coefficient `⟨e_{i,j}, X_0⟩`.
    pub x0: T,
}

impl<T: Real> OuMode<T> {
    pub fn new(i: usize, j: usize, k: T, q: T, x0: T) -> Result<Self> {
        if !(k > T::zero()) {
            return Err(Error::Reference(format!(
                "decay rate of mode ({i},{j}) must be positive, got {k}"
            )));
        }
        if q < T::zero() {
            return Err(Error::Reference(format!("negative covariance q_({i},{j}) = {q}")));
        }
        Ok(Self { i, j, k, q, x0 })
    }
}

/// Diffusion `D` and linear reaction `c` of the benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuModel<T> {
    pub basis: SpectralBasis<T>,
    pub diffusion: T,
    pub reaction: T,
}

impl<T: Real> OuModel<T> {
    pub fn new(basis: SpectralBasis<T>, diffusion: T, reaction: T) -> Self {
        Self {
            basis,
            diffusion,
            reaction,
        }
    }

    /// Unit square, `D = 0.1`, `c = 0.5`.
    pub fn benchmark() -> Self {
        Self::new(
            SpectralBasis::new(T::one(), T::one()),
            T::of(crate::model::BENCHMARK_DIFFUSION),
            T::of(crate::model::BENCHMARK_REACTION),
        )
    }

    pub fn rate(&self, i: usize, j: usize) -> T {
        self.diffusion * self.basis.eigenvalue(i, j) + self.reaction
    }

    /// One [`OuMode`] per retained mode, with initial coefficients `x0` in
    /// spectrum rank order (`None` means `X_0 = 0`).
    pub fn modes(&self, spectrum: &CovarianceSpectrum<T>, x0: Option<&[T]>) -> Result<Vec<OuMode<T>>> {
        if let Some(x0) = x0 {
            Error::check_dim(spectrum.len(), x0.len())?;
        }
        spectrum
            .modes()
            .iter()
            .zip(spectrum.values())
            .enumerate()
            .map(|(rank, (&(i, j), &q))| {
                let c = x0.map_or(T::zero(), |x| x[rank]);
                OuMode::new(i, j, self.rate(i, j), q, c)
            })
            .collect()
    }

    /// Upper bound on `Σ q/(2k)` over the modes a spectrum discards
    /// (`max(i, j) > n_max`), from integral comparison.
    pub fn tail_bound(&self, spectrum: &CovarianceSpectrum<T>) -> f64 {
        let s0 = spectrum.beta + spectrum.delta;
        let n = spectrum.n_max as f64;
        // Σ_{max(i,j)>n} (i²+j²)^{-s}: off-axis terms lie in cells beyond
        // radius n − √2, the two axes are handled as 1-D sums.
        let lattice = |s: f64| {
            let r = (n - std::f64::consts::SQRT_2).max(0.5);
            std::f64::consts::FRAC_PI_2 * r.powf(2.0 - 2.0 * s) / (2.0 * s - 2.0)
                + 2.0 * n.powf(1.0 - 2.0 * s) / (2.0 * s - 1.0)
        };
        let c = self.reaction.to_f64_lossy();
        let d = self.diffusion.to_f64_lossy();
        let l = self.basis.lx.max(self.basis.ly).to_f64_lossy();
        let mut bound = lattice(s0) / (2.0 * c);
        if d > 0.0 {
            let scale = l * l / (2.0 * d * std::f64::consts::PI.powi(2));
            bound = bound.min(scale * lattice(s0 + 1.0));
        }
        bound
    }
}

/// Exact transition `x' = e^{−kΔt} x + √(q/(2k) (1 − e^{−2kΔt})) ξ`.
pub fn ou_step<T: Real>(x: T, mode: &OuMode<T>, dt: T, xi: T) -> T {
    let two = T::of(2.0);
    let var = mode.q / (two * mode.k) * -(-two * mode.k * dt).exp_m1();
    (-mode.k * dt).exp() * x + var.sqrt() * xi
}

/// `Var X_{i,j}(t) = q/(2k) (1 − e^{−2kt})`.
pub fn exact_variance<T: Real>(mode: &OuMode<T>, t: T) -> T {
    let two = T::of(2.0);
    mode.q / (two * mode.k) * -(-two * mode.k * t).exp_m1()
}

/// `E Φ₁(X(t)) = Σ e^{−kt} x0 ∫e_{i,j}`; only the constant mode contributes.
pub fn exact_mean_phi1<T: Real>(modes: &[OuMode<T>], basis: &SpectralBasis<T>, t: T) -> T {
    modes
        .iter()
        .map(|m| (-m.k * t).exp() * m.x0 * basis.integral(m.i, m.j))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondMoment<T> {
    pub value: T,
    /// Bound on the contribution of the discarded modes.
    pub tail_bound: f64,
}

/// `E‖X(t)‖² = Σ e^{−2kt} x0² + Σ q/(2k)(1 − e^{−2kt})` over `modes`.
///
/// `tail_bound` is what the caller knows about the discarded modes (see
/// [`OuModel::tail_bound`]); it must not exceed `eps_tail`.
pub fn exact_second_moment<T: Real>(
    modes: &[OuMode<T>],
    t: T,
    tail_bound: f64,
    eps_tail: f64,
) -> Result<SecondMoment<T>> {
    if t < T::zero() {
        return Err(Error::Reference(format!("negative time {t}")));
    }
    if !(tail_bound <= eps_tail) {
        return Err(Error::Reference(format!(
            "truncation tail bound {tail_bound:e} exceeds eps_tail = {eps_tail:e}; raise n_max"
        )));
    }
    let two = T::of(2.0);
    let value = modes
        .iter()
        .map(|m| (-two * m.k * t).exp() * m.x0 * m.x0 + exact_variance(m, t))
        .sum();
    Ok(SecondMoment { value, tail_bound })
}

/// `Φ₁` of a field given by its spectral coefficients.
pub fn spectral_phi1<T: Real>(modes: &[OuMode<T>], basis: &SpectralBasis<T>, coeffs: &[T]) -> T {
    modes
        .iter()
        .zip(coeffs)
        .map(|(m, &c)| c * basis.integral(m.i, m.j))
        .sum()
}

/// `Φ₂ = ‖X‖²` of a field given by its spectral coefficients (Parseval).
pub fn spectral_phi2<T: Real>(coeffs: &[T]) -> T {
    coeffs.iter().map(|&c| c * c).sum()
}

/// Exact coefficients at the final time of `cfg`, driven by the deviates
/// the scheme consumes for the same `(stream, r)`.
pub fn simulate_exact_coefficients<T: Real>(
    stream: &NoiseStream,
    r: u64,
    cfg: &RunConfig<T>,
    modes: &[OuMode<T>],
    mut observe: impl FnMut(usize, &[f64]),
) -> Vec<T> {
    let mut x: Vec<T> = modes.iter().map(|m| m.x0).collect();
    let mut xi = vec![0.0; modes.len()];
    for m in 0..cfg.steps {
        stream.fill_step(r, m, &mut xi);
        observe(m, &xi);
        for ((xk, mode), &z) in x.iter_mut().zip(modes).zip(&xi) {
            *xk = ou_step(*xk, mode, cfg.dt, T::of(z));
        }
    }
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactField<T> {
    pub coeffs: Vec<T>,
    /// Degrees of freedom of `Σ c_k E[:, k]`.
    pub nodal: Vec<T>,
}

/// Exact OU field at the final time, synthesized through `synthesis`:
/// the projected mode matrix keeps reference and scheme in the same finite
/// element space, the interpolated one evaluates the eigenfunctions at the
/// nodes.
pub fn simulate_exact_field<T: Real>(
    stream: &NoiseStream,
    r: u64,
    cfg: &RunConfig<T>,
    modes: &[OuMode<T>],
    synthesis: &ModeMatrix<T>,
) -> Result<ExactField<T>> {
    Error::check_dim(modes.len(), synthesis.num_modes())?;
    let coeffs = simulate_exact_coefficients(stream, r, cfg, modes, |_, _| {});
    let nodal = synthesis.combine(&coeffs);
    Ok(ExactField { coeffs, nodal })
}
