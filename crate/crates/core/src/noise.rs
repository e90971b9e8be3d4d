//! Truncated Q-Wiener noise in the Neumann cosine eigenbasis of the
//! rectangle, and the counter-based Gaussian source that makes every
//! increment a pure function of `(seed, realization, mode, step)`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::FemOperators;
use crate::mesh::Point;
use crate::scalar::{axpy, Real};

/// Cosine eigenpairs of `-Δ` with homogeneous Neumann conditions on
/// `[0, L1] x [0, L2]`, normalized in `L²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBasis<T> {
    pub lx: T,
    pub ly: T,
}

impl<T: Real> SpectralBasis<T> {
    pub fn new(lx: T, ly: T) -> Self {
        Self { lx, ly }
    }

    fn factor(i: usize, x: T, len: T) -> T {
        if i == 0 {
            (T::one() / len).sqrt()
        } else {
            (T::of(2.0) / len).sqrt() * (T::of_usize(i) * T::PI() * x / len).cos()
        }
    }

    /// `e_0(x) … e_n(x)` along one axis of length `len`, by the cosine
    /// three-term recurrence.
    fn axis_values(x: T, len: T, n: usize, out: &mut Vec<T>) {
        out.clear();
        let c1 = (T::PI() * x / len).cos();
        let (mut prev, mut cur) = (T::one(), c1);
        out.push((T::one() / len).sqrt());
        let s = (T::of(2.0) / len).sqrt();
        for _ in 1..=n {
            out.push(s * cur);
            let next = T::of(2.0) * c1 * cur - prev;
            prev = cur;
            cur = next;
        }
    }

    /// `λ_{i,j} = (iπ/L1)² + (jπ/L2)²`
    pub fn eigenvalue(&self, i: usize, j: usize) -> T {
        let a = T::of_usize(i) * T::PI() / self.lx;
        let b = T::of_usize(j) * T::PI() / self.ly;
        a * a + b * b
    }

    /// `e_{i,j}(x, y) = e_i(x) e_j(y)`
    pub fn eval(&self, i: usize, j: usize, p: Point<T>) -> T {
        Self::factor(i, p[0], self.lx) * Self::factor(j, p[1], self.ly)
    }

    /// `∫_Ω e_{i,j}`: `√(L1 L2)` for the constant mode, zero otherwise.
    pub fn integral(&self, i: usize, j: usize) -> T {
        if i == 0 && j == 0 {
            (self.lx * self.ly).sqrt()
        } else {
            T::zero()
        }
    }
}

/// Covariance eigenvalues `q_{i,j} = (i² + j²)^{-(β+δ)}` on the retained
/// modes `0 ≤ i, j ≤ n_max`, ranked row-major by `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpectrum<T> {
    pub beta: f64,
    pub delta: f64,
    pub n_max: usize,
    pub q00: T,
    modes: Vec<(usize, usize)>,
    q: Vec<T>,
}

impl<T: Real> CovarianceSpectrum<T> {
    pub fn new(beta: f64, delta: f64, n_max: usize, q00: T) -> Result<Self> {
        if !(beta + delta > 1.0) || !beta.is_finite() || !delta.is_finite() {
            return Err(Error::Noise(format!(
                "beta + delta = {} must exceed 1 for the covariance to be trace class",
                beta + delta
            )));
        }
        if n_max == 0 {
            return Err(Error::Noise("n_max must be at least 1".into()));
        }
        if !(q00 >= T::zero()) {
            return Err(Error::Noise(format!("q00 must be non-negative, got {q00}")));
        }
        let s = beta + delta;
        let mut modes = Vec::with_capacity((n_max + 1) * (n_max + 1));
        let mut q = Vec::with_capacity(modes.capacity());
        for i in 0..=n_max {
            for j in 0..=n_max {
                modes.push((i, j));
                q.push(if i == 0 && j == 0 {
                    q00
                } else {
                    T::of(((i * i + j * j) as f64).powf(-s))
                });
            }
        }
        Ok(Self {
            beta,
            delta,
            n_max,
            q00,
            modes,
            q,
        })
    }

    /// All-zero spectrum over the same modes (deterministic runs).
    pub fn silent(n_max: usize) -> Self {
        let mut s = Self::new(1.0, 1.0, n_max.max(1), T::zero()).expect("valid parameters");
        s.q.iter_mut().for_each(|q| *q = T::zero());
        s
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[(usize, usize)] {
        &self.modes
    }

    pub fn values(&self) -> &[T] {
        &self.q
    }

    pub fn rank(&self, i: usize, j: usize) -> Option<usize> {
        (i <= self.n_max && j <= self.n_max).then(|| i * (self.n_max + 1) + j)
    }

    pub fn q(&self, i: usize, j: usize) -> T {
        self.rank(i, j).map_or(T::zero(), |k| self.q[k])
    }

    pub fn trace(&self) -> T {
        self.q.iter().copied().sum()
    }

    /// Integral estimate of the discarded tail `Σ_{i²+j² > n_max²} q_{i,j}`.
    pub fn trace_tail_estimate(&self) -> f64 {
        let s = self.beta + self.delta;
        let n = self.n_max as f64;
        std::f64::consts::FRAC_PI_2 * n.powf(2.0 - 2.0 * s) / (2.0 * s - 2.0)
    }
}

/// Largest `n` with `(n+1)² ≤ dofs`, i.e. fewer noise modes than unknowns.
pub fn default_n_max(dofs: usize) -> usize {
    let mut n = 1;
    while (n + 2) * (n + 2) <= dofs {
        n += 1;
    }
    n
}

/// Replayable standard normal source.
///
/// Deviate `(r, k, m)` is the `k`-th 64-bit word pair of ChaCha8 stream `m`
/// under a key derived from `(seed, r)`, mapped through the inverse normal
/// CDF. Evaluation order and thread schedule cannot change any value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    pub master_seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn u64_to_normal(x: u64) -> f64 {
    // open interval (0, 1): no infinities from the inverse CDF
    let u = ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * u)
}

impl NoiseStream {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    fn generator(&self, r: u64, m: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = splitmix64(self.master_seed) ^ splitmix64(r.wrapping_add(0x5851_f42d_4c95_7f2d));
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(m);
        rng
    }

    /// Standard normal deviate for realization `r`, mode rank `k`, step `m`.
    pub fn gaussian(&self, r: u64, k: usize, m: usize) -> f64 {
        let mut rng = self.generator(r, m as u64);
        rng.set_word_pos(2 * k as u128);
        u64_to_normal(rng.next_u64())
    }

    /// `out[k] = gaussian(r, k, m)` for every `k`, in one pass.
    pub fn fill_step(&self, r: u64, m: usize, out: &mut [f64]) {
        let mut rng = self.generator(r, m as u64);
        for o in out {
            *o = u64_to_normal(rng.next_u64());
        }
    }
}

/// Dense `dofs x modes` matrix whose columns are nodal representations of
/// the retained eigenfunctions.
#[derive(Debug, Clone)]
pub struct ModeMatrix<T> {
    rows: usize,
    // column-major
    cols: Vec<Vec<T>>,
}

impl<T: Real> ModeMatrix<T> {
    pub fn from_columns(rows: usize, cols: Vec<Vec<T>>) -> Self {
        assert!(cols.iter().all(|c| c.len() == rows));
        Self { rows, cols }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn num_modes(&self) -> usize {
        self.cols.len()
    }

    pub fn column(&self, k: usize) -> &[T] {
        &self.cols[k]
    }

    /// `E c`
    pub fn combine(&self, coeffs: &[T]) -> Vec<T> {
        debug_assert_eq!(coeffs.len(), self.cols.len());
        let mut out = vec![T::zero(); self.rows];
        for (col, &c) in self.cols.iter().zip(coeffs) {
            if c != T::zero() {
                axpy(c, col, &mut out);
            }
        }
        out
    }

    /// Gram matrix `Eᵀ M E` in the mass inner product.
    pub fn mass_gram(&self, ops: &FemOperators<T>) -> Vec<Vec<T>> {
        let mcols: Vec<Vec<T>> = self.cols.iter().map(|c| ops.mass().mul_vec(c)).collect();
        self.cols
            .iter()
            .map(|a| mcols.iter().map(|mb| crate::scalar::dot(a, mb)).collect())
            .collect()
    }
}

/// Column `k` = `P_h e_{i(k), j(k)}`, the exact `L²` projection up to
/// quadrature error near machine precision.
pub fn project_modes<T: Real>(
    basis: &SpectralBasis<T>,
    spectrum: &CovarianceSpectrum<T>,
    ops: &FemOperators<T>,
) -> Result<ModeMatrix<T>> {
    check_domain(basis, ops)?;
    let modes = spectrum.modes();
    let imax = modes.iter().map(|m| m.0).max().unwrap_or(0);
    let jmax = modes.iter().map(|m| m.1).max().unwrap_or(0);
    // near the grid cutoff an eigenfunction turns over within one cell, far
    // outside the reach of low-order rules; size the rule by the phase change
    // across the longest edge
    let mesh = ops.mesh();
    let freq = (T::of_usize(imax) / mesh.lx).max(T::of_usize(jmax) / mesh.ly);
    let phase = (T::PI() * freq * mesh.h).to_f64_lossy();
    let points = (phase.ceil() as usize + 6).min(64);
    let (mut ax, mut ay) = (Vec::new(), Vec::new());
    let loads = ops.load_vectors(modes.len(), points, |p, out| {
        SpectralBasis::axis_values(p[0], basis.lx, imax, &mut ax);
        SpectralBasis::axis_values(p[1], basis.ly, jmax, &mut ay);
        for (o, &(i, j)) in out.iter_mut().zip(modes) {
            *o = ax[i] * ay[j];
        }
    });
    let cols = loads
        .into_iter()
        .map(|mut b| {
            ops.mass_factor().solve_in_place(&mut b);
            b
        })
        .collect();
    Ok(ModeMatrix::from_columns(ops.dim(), cols))
}

/// Column `k` = nodal values of `e_{i(k), j(k)}`.
pub fn interpolate_modes<T: Real>(
    basis: &SpectralBasis<T>,
    spectrum: &CovarianceSpectrum<T>,
    ops: &FemOperators<T>,
) -> Result<ModeMatrix<T>> {
    check_domain(basis, ops)?;
    let cols = spectrum
        .modes()
        .iter()
        .map(|&(i, j)| ops.interpolate(|p| basis.eval(i, j, p)))
        .collect();
    Ok(ModeMatrix::from_columns(ops.dim(), cols))
}

fn check_domain<T: Real>(basis: &SpectralBasis<T>, ops: &FemOperators<T>) -> Result<()> {
    let mesh = ops.mesh();
    let tol = T::of(1e-12) * (mesh.lx + mesh.ly);
    if (basis.lx - mesh.lx).abs() > tol || (basis.ly - mesh.ly).abs() > tol {
        return Err(Error::Noise(format!(
            "basis domain {}x{} does not match mesh {}x{}",
            basis.lx, basis.ly, mesh.lx, mesh.ly
        )));
    }
    Ok(())
}

/// Per-mode scaled deviates `g_k = √(q_k Δt) ξ_k` for step `m`.
pub fn mode_increments<T: Real>(
    stream: &NoiseStream,
    r: u64,
    m: usize,
    dt: T,
    spectrum: &CovarianceSpectrum<T>,
    deviates: &mut Vec<f64>,
) -> Vec<T> {
    deviates.resize(spectrum.len(), 0.0);
    stream.fill_step(r, m, deviates);
    spectrum
        .values()
        .iter()
        .zip(deviates.iter())
        .map(|(&q, &xi)| (q * dt).sqrt() * T::of(xi))
        .collect()
}

/// Nodal noise increment `ΔW_m = E g` for realization `r`, step `m`.
pub fn sample_increment<T: Real>(
    stream: &NoiseStream,
    r: u64,
    m: usize,
    dt: T,
    spectrum: &CovarianceSpectrum<T>,
    modes: &ModeMatrix<T>,
) -> Result<Vec<T>> {
    if !(dt > T::zero()) {
        return Err(Error::Noise(format!("time step must be positive, got {dt}")));
    }
    Error::check_dim(spectrum.len(), modes.num_modes())?;
    let g = mode_increments(stream, r, m, dt, spectrum, &mut Vec::new());
    Ok(modes.combine(&g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{BoundaryKind, OperatorCoefficients};
    use crate::mesh::Mesh;

    #[test]
    fn spectrum_values() {
        let s = CovarianceSpectrum::<f64>::new(1.0, 0.001, 5, 0.0).unwrap();
        assert!((s.q(1, 1) - 0.499_653_546_495_226_3).abs() < 1e-15);
        assert!((s.q(3, 4) - 0.039_871_451_968_073_665).abs() < 1e-15);
        assert_eq!(s.q(0, 0), 0.0);
        assert_eq!(s.len(), 36);
        assert_eq!(s.rank(2, 3), Some(15));
        assert_eq!(s.modes()[15], (2, 3));
        assert!(s.values().iter().all(|&q| q >= 0.0));
    }

    #[test]
    fn rejects_non_trace_class() {
        let err = CovarianceSpectrum::<f64>::new(1.0, 0.0, 4, 0.0).unwrap_err();
        assert!(err.to_string().contains("trace class"));
        assert!(CovarianceSpectrum::<f64>::new(0.0, 0.5, 4, 0.0).is_err());
        assert!(CovarianceSpectrum::<f64>::new(1.0, 0.1, 0, 0.0).is_err());
        assert!(CovarianceSpectrum::<f64>::new(1.0, 0.1, 3, -1.0).is_err());
    }

    #[test]
    fn eigenvalues_and_integrals() {
        let b = SpectralBasis::new(1.0, 2.0);
        assert_eq!(b.eigenvalue(0, 0), 0.0);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((b.eigenvalue(1, 2) - pi2 * 2.0).abs() < 1e-12);
        assert!(b.eigenvalue(2, 1) > b.eigenvalue(1, 1));
        assert!((b.integral(0, 0) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(b.integral(1, 0), 0.0);
    }

    #[test]
    fn default_truncation_keeps_fewer_modes_than_nodes() {
        assert_eq!(default_n_max(33 * 33), 32);
        assert_eq!(default_n_max(25), 4);
        assert_eq!(default_n_max(24), 3);
        assert_eq!(default_n_max(4), 1);
    }

    #[test]
    fn gaussian_is_a_pure_function_of_the_index() {
        let s = NoiseStream::new(42);
        let a = s.gaussian(3, 7, 11);
        assert_eq!(a.to_bits(), s.gaussian(3, 7, 11).to_bits());
        assert_ne!(a, s.gaussian(3, 7, 12));
        assert_ne!(a, s.gaussian(4, 7, 11));
        assert_ne!(a, NoiseStream::new(43).gaussian(3, 7, 11));
        let mut row = vec![0.0; 12];
        s.fill_step(3, 11, &mut row);
        assert_eq!(row[7].to_bits(), a.to_bits());
    }

    #[test]
    fn shuffled_evaluation_reproduces_in_order_values() {
        let s = NoiseStream::new(9);
        let idx: Vec<(u64, usize, usize)> = (0..4)
            .flat_map(|r| (0..5).flat_map(move |k| (0..3).map(move |m| (r, k, m))))
            .collect();
        let in_order: Vec<f64> = idx.iter().map(|&(r, k, m)| s.gaussian(r, k, m)).collect();
        let mut perm: Vec<usize> = (0..idx.len()).collect();
        // deterministic shuffle
        for i in (1..perm.len()).rev() {
            let j = (splitmix64(i as u64) % (i as u64 + 1)) as usize;
            perm.swap(i, j);
        }
        for &p in &perm {
            let (r, k, m) = idx[p];
            assert_eq!(s.gaussian(r, k, m).to_bits(), in_order[p].to_bits());
        }
    }

    #[test]
    fn deviates_look_standard_normal() {
        let s = NoiseStream::new(1);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut row = vec![0.0; 100];
        for m in 0..n / 100 {
            s.fill_step(0, m, &mut row);
            for &x in &row {
                sum += x;
                sq += x * x;
            }
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        // 5σ bands: sd(mean) = 1/√n, sd(var) ≈ √(2/n)
        assert!(mean.abs() < 5.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt());
    }

    fn unit_ops(n: usize) -> FemOperators<f64> {
        let mesh = Mesh::rect(n, n, 1.0, 1.0).unwrap();
        FemOperators::assemble(&mesh, OperatorCoefficients::isotropic(0.1), BoundaryKind::Neumann)
            .unwrap()
    }

    #[test]
    fn constant_mode_projects_exactly() {
        let ops = unit_ops(8);
        let spec = CovarianceSpectrum::new(1.0, 0.001, 2, 0.0).unwrap();
        let e = project_modes(&SpectralBasis::new(1.0, 1.0), &spec, &ops).unwrap();
        assert!(e.column(0).iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn recurrence_matches_eval() {
        let basis = SpectralBasis::new(1.5, 0.7);
        let mut ax = Vec::new();
        let mut ay = Vec::new();
        let p = [0.37, 0.61];
        SpectralBasis::axis_values(p[0], 1.5f64, 30, &mut ax);
        SpectralBasis::axis_values(p[1], 0.7, 30, &mut ay);
        for (i, j) in [(0, 0), (3, 0), (0, 7), (30, 29)] {
            assert!((ax[i] * ay[j] - basis.eval(i, j, p)).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_is_converged_in_the_rule() {
        let ops = unit_ops(8);
        let basis = SpectralBasis::new(1.0, 1.0);
        let f = |p: [f64; 2], out: &mut [f64]| {
            out[0] = basis.eval(1, 2, p);
            out[1] = basis.eval(8, 7, p);
        };
        let coarse = ops.load_vectors(2, 16, f);
        let fine = ops.load_vectors(2, 40, f);
        for (c, w) in coarse.iter().zip(&fine) {
            let scale = w.iter().map(|x| x.abs()).fold(0.0, f64::max);
            assert!(c.iter().zip(w).all(|(x, y)| (x - y).abs() <= 1e-13 * scale));
        }
        // a smooth mode agrees with the low-order projection
        let spec = CovarianceSpectrum::new(1.0, 0.001, 8, 0.0).unwrap();
        let e = project_modes(&basis, &spec, &ops).unwrap();
        let k = spec.rank(1, 2).unwrap();
        let low = ops.l2_project(|p| basis.eval(1, 2, p));
        let d = e.column(k).iter().zip(&low).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d < 2e-2, "{d}");
    }

    #[test]
    fn first_mode_column_tracks_the_eigenfunction() {
        let ops = unit_ops(32);
        let spec = CovarianceSpectrum::new(1.0, 0.001, 2, 0.0).unwrap();
        let e = project_modes(&SpectralBasis::new(1.0, 1.0), &spec, &ops).unwrap();
        let col = e.column(spec.rank(1, 0).unwrap());
        for (v, &node) in col.iter().zip(ops.dof_nodes()) {
            let x = ops.mesh().nodes[node][0];
            let want = 2f64.sqrt() * (std::f64::consts::PI * x).cos();
            assert!((v - want).abs() < 1e-2);
        }
    }

    #[test]
    fn zero_spectrum_gives_zero_increment() {
        let ops = unit_ops(4);
        let spec = CovarianceSpectrum::<f64>::silent(3);
        let e = project_modes(&SpectralBasis::new(1.0, 1.0), &spec, &ops).unwrap();
        let dw = sample_increment(&NoiseStream::new(5), 0, 0, 0.1, &spec, &e).unwrap();
        assert!(dw.iter().all(|&v| v == 0.0));
        let spec = CovarianceSpectrum::new(1.0, 0.001, 3, 0.0).unwrap();
        let a = sample_increment(&NoiseStream::new(5), 2, 9, 0.1, &spec, &e).unwrap();
        let b = sample_increment(&NoiseStream::new(5), 2, 9, 0.1, &spec, &e).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(sample_increment(&NoiseStream::new(5), 2, 9, 0.0, &spec, &e).is_err());
    }

    #[test]
    fn mismatched_domain_rejected() {
        let ops = unit_ops(4);
        let spec = CovarianceSpectrum::new(1.0, 0.001, 2, 0.0).unwrap();
        assert!(project_modes(&SpectralBasis::new(2.0, 1.0), &spec, &ops).is_err());
    }
}
