//! Actions of `e^{tA}` and `φ₁(tA) = (tA)⁻¹(e^{tA} - I)` on vectors.
//!
//! Large operators go through an Arnoldi projection with a residual-based
//! error estimate and adaptive substepping. Small ones (and the test
//! oracle) use a dense Padé scaling-and-squaring exponential. `φ₁` is never
//! formed by inverting `A`: it is read off the exponential of the
//! augmented map `[[A, g], [0, 0]]`, which stays well posed when `A` has a
//! zero eigenvalue.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::{axpy, dot, norm2, Real};

/// Black-box linear map `v ↦ A v`.
pub trait MatAction<T>: Sync {
    fn dim(&self) -> usize;

    /// `out = A v`; `out` is fully overwritten.
    fn apply(&self, v: &[T], out: &mut [T]);
}

impl<T: Real> MatAction<T> for DenseMatrix<T> {
    fn dim(&self) -> usize {
        assert!(self.is_square());
        self.nrows()
    }

    fn apply(&self, v: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), v);
        }
    }
}

impl<T: Real, A: MatAction<T> + ?Sized> MatAction<T> for &A {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, v: &[T], out: &mut [T]) {
        (**self).apply(v, out)
    }
}

/// Wraps a closure as a [`MatAction`].
pub struct FnAction<F> {
    dim: usize,
    f: F,
}

impl<F> FnAction<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<T: Real, F: Fn(&[T], &mut [T]) + Sync> MatAction<T> for FnAction<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &[T], out: &mut [T]) {
        (self.f)(v, out)
    }
}

/// `[[A, g], [0, 0]]` acting on `(n+1)`-vectors.
struct Augmented<'a, A, T> {
    inner: &'a A,
    g: &'a [T],
}

impl<T: Real, A: MatAction<T>> MatAction<T> for Augmented<'_, A, T> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }

    fn apply(&self, v: &[T], out: &mut [T]) {
        let n = self.inner.dim();
        self.inner.apply(&v[..n], &mut out[..n]);
        axpy(v[n], self.g, &mut out[..n]);
        out[n] = T::zero();
    }
}

/// Materializes an action as a dense matrix (one application per column).
pub fn to_dense<T: Real>(a: &impl MatAction<T>) -> DenseMatrix<T> {
    let n = a.dim();
    let mut m = DenseMatrix::zeros(n, n);
    let mut e = vec![T::zero(); n];
    let mut col = vec![T::zero(); n];
    for j in 0..n {
        e[j] = T::one();
        a.apply(&e, &mut col);
        for (i, &v) in col.iter().enumerate() {
            m[(i, j)] = v;
        }
        e[j] = T::zero();
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovConfig {
    /// Maximal Arnoldi basis size per substep.
    pub max_subspace: usize,
    /// Relative error target, `‖w - e^{tA}v‖ ≤ tol·‖v‖`.
    pub tol: f64,
    /// Initial number of substeps the interval `[0, t]` is split into.
    pub substeps: usize,
    /// Give up after this many accepted-or-rejected substeps.
    pub max_substeps: usize,
    /// Operators of at most this dimension are exponentiated densely.
    pub dense_limit: usize,
    /// Larger symmetric FEM generators up to this dimension are propagated
    /// through their eigenbasis instead of Krylov.
    pub modal_limit: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self {
            max_subspace: 64,
            tol: 1e-8,
            substeps: 1,
            max_substeps: 100_000,
            dense_limit: 300,
            modal_limit: 2500,
        }
    }
}

impl KrylovConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_subspace < 2 {
            return Err(Error::config("krylov.max_subspace", "must be at least 2"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config("krylov.tol", "must be positive"));
        }
        if self.substeps == 0 {
            return Err(Error::config("krylov.substeps", "must be at least 1"));
        }
        Ok(())
    }

    /// Same settings with the dense and modal shortcuts disabled.
    pub fn krylov_only(self) -> Self {
        Self {
            dense_limit: 0,
            modal_limit: 0,
            ..self
        }
    }
}

pub const DENSE_EXPM_CAP: usize = 2000;

// Padé coefficients and 1-norm thresholds (Higham 2005)
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA13: f64 = 5.371920351148152;

/// Dense `e^{A}` by scaling and squaring with a diagonal Padé approximant.
pub fn dense_expm<T: Real>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if !a.is_square() {
        return Err(Error::Dimension {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    let n = a.nrows();
    if n > DENSE_EXPM_CAP {
        return Err(Error::DenseTooLarge {
            dim: n,
            cap: DENSE_EXPM_CAP,
        });
    }
    if n == 0 {
        return Ok(a.clone());
    }
    let norm = a.norm_one().to_f64_lossy();
    if !norm.is_finite() {
        return Err(Error::Experiment("dense expm of non-finite matrix".into()));
    }
    for (m, theta) in THETA {
        if norm <= theta {
            let coeffs = match m {
                3 => &PADE3[..],
                5 => &PADE5[..],
                7 => &PADE7[..],
                _ => &PADE9[..],
            };
            return Ok(pade_low(a, coeffs));
        }
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a.scale(T::of(2f64.powi(-s)));
    let mut r = pade13(&scaled);
    for _ in 0..s {
        r = r.matmul(&r);
    }
    Ok(r)
}

fn pade_solve<T: Real>(u: &DenseMatrix<T>, v: &DenseMatrix<T>) -> DenseMatrix<T> {
    let p = v.add(u);
    let q = v.sub(u);
    q.lu()
        .expect("Padé denominator is nonsingular within the norm threshold")
        .solve_mat(&p)
}

fn pade_low<T: Real>(a: &DenseMatrix<T>, b: &[f64]) -> DenseMatrix<T> {
    let n = a.nrows();
    let a2 = a.matmul(a);
    // V = Σ b_{2k} A^{2k}, U = A Σ b_{2k+1} A^{2k}
    let mut pow = DenseMatrix::identity(n);
    let mut u = DenseMatrix::zeros(n, n);
    let mut v = DenseMatrix::zeros(n, n);
    let mut k = 0;
    while k < b.len() {
        v = v.add(&pow.scale(T::of(b[k])));
        if k + 1 < b.len() {
            u = u.add(&pow.scale(T::of(b[k + 1])));
        }
        k += 2;
        if k < b.len() {
            pow = pow.matmul(&a2);
        }
    }
    let u = a.matmul(&u);
    pade_solve(&u, &v)
}

fn pade13<T: Real>(a: &DenseMatrix<T>) -> DenseMatrix<T> {
    let b: Vec<T> = PADE13.iter().map(|&x| T::of(x)).collect();
    let n = a.nrows();
    let id = DenseMatrix::identity(n);
    let a2 = a.matmul(a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let lin = |c6: T, c4: T, c2: T, c0: T| {
        a6.scale(c6)
            .add(&a4.scale(c4))
            .add(&a2.scale(c2))
            .add(&id.scale(c0))
    };
    let u_inner = a6
        .matmul(&lin(b[13], b[11], b[9], T::zero()))
        .add(&lin(b[7], b[5], b[3], b[1]));
    let u = a.matmul(&u_inner);
    let v = a6
        .matmul(&lin(b[12], b[10], b[8], T::zero()))
        .add(&lin(b[6], b[4], b[2], b[0]));
    pade_solve(&u, &v)
}

/// `e^{tA} v`.
pub fn expm_action<T: Real>(
    a: &impl MatAction<T>,
    v: &[T],
    t: T,
    cfg: &KrylovConfig,
) -> Result<Vec<T>> {
    Error::check_dim(a.dim(), v.len())?;
    if t < T::zero() {
        return Err(Error::Experiment(format!("negative time {t} in expm_action")));
    }
    if t == T::zero() || v.iter().all(|x| *x == T::zero()) {
        return Ok(v.to_vec());
    }
    if a.dim() <= cfg.dense_limit {
        let e = dense_expm(&to_dense(a).scale(t))?;
        return Ok(e.mul_vec(v));
    }
    krylov_expm(a, v, t, cfg, a.dim())
}

/// `φ₁(tA) v`, with `φ₁(0) = I`.
pub fn phi1_action<T: Real>(
    a: &impl MatAction<T>,
    v: &[T],
    t: T,
    cfg: &KrylovConfig,
) -> Result<Vec<T>> {
    Error::check_dim(a.dim(), v.len())?;
    if t == T::zero() {
        return Ok(v.to_vec());
    }
    let n = a.dim();
    let zero = vec![T::zero(); n];
    let mut w = exp_phi1_action(a, &zero, v, t, cfg)?;
    for x in &mut w {
        *x /= t;
    }
    Ok(w)
}

/// `e^{tA} u + t·φ₁(tA) f` from a single exponential of the augmented
/// operator `[[A, f/η], [0, 0]]` applied to `[u; η]`.
pub fn exp_phi1_action<T: Real>(
    a: &impl MatAction<T>,
    u: &[T],
    f: &[T],
    t: T,
    cfg: &KrylovConfig,
) -> Result<Vec<T>> {
    let n = a.dim();
    Error::check_dim(n, u.len())?;
    Error::check_dim(n, f.len())?;
    if t < T::zero() {
        return Err(Error::Experiment(format!("negative time {t} in exp_phi1_action")));
    }
    if t == T::zero() {
        return Ok(u.to_vec());
    }
    let fnorm = norm2(f);
    if fnorm == T::zero() {
        return expm_action(a, u, t, cfg);
    }
    // balance the two blocks of the start vector
    let eta = norm2(u).max(t * fnorm);
    let g: Vec<T> = f.iter().map(|&x| x / eta).collect();
    let aug = Augmented { inner: a, g: &g };
    let mut start = u.to_vec();
    start.push(eta);
    let mut w = if aug.dim() <= cfg.dense_limit {
        dense_expm(&to_dense(&aug).scale(t))?.mul_vec(&start)
    } else {
        krylov_expm(&aug, &start, t, cfg, n)?
    };
    w.truncate(n);
    Ok(w)
}

/// Arnoldi basis of `K_m(A, w)` with the `(m+1) x m` Hessenberg matrix.
struct Arnoldi<T> {
    basis: Vec<Vec<T>>,
    // h[j] holds column j: entries 0..=j+1
    h: Vec<Vec<T>>,
    breakdown: bool,
}

impl<T: Real> Arnoldi<T> {
    fn dim(&self) -> usize {
        self.h.len()
    }

    /// `(m+1) x (m+1)` matrix `[[τH_m, 0], [τ h_{m+1,m} e_mᵀ, 0]]`; its
    /// exponential holds `e^{τH_m}` in the leading block and the
    /// residual-estimate entry `τ h_{m+1,m} e_mᵀ φ₁(τH_m) e₁` at `(m, 0)`.
    fn estimate_matrix(&self, tau: T) -> DenseMatrix<T> {
        let m = self.dim();
        let mut hm = DenseMatrix::zeros(m + 1, m + 1);
        for (j, col) in self.h.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                if i < m {
                    hm[(i, j)] = tau * v;
                }
            }
        }
        if !self.breakdown {
            hm[(m, m - 1)] = tau * self.h[m - 1][m];
        }
        hm
    }
}

/// `e^{tA} v` by restarted Arnoldi. The error target is relative to the
/// first `lead` components of the result, the part the caller keeps.
fn krylov_expm<T: Real>(
    a: &impl MatAction<T>,
    v: &[T],
    t: T,
    cfg: &KrylovConfig,
    lead: usize,
) -> Result<Vec<T>> {
    cfg.validate()?;
    let n = a.dim();
    let mmax = cfg.max_subspace.min(n).max(1);
    let vnorm = norm2(v);
    let tol = T::of(cfg.tol);
    let mut w = v.to_vec();
    let mut t_done = T::zero();
    let mut tau = t / T::of_usize(cfg.substeps);
    let mut attempts = 0usize;
    let mut last_err = 0.0;
    let mut scratch = vec![T::zero(); n];

    while t_done < t {
        tau = tau.min(t - t_done);
        let beta = norm2(&w);
        if beta == T::zero() {
            break;
        }
        // error budget relative to both `v` and the kept part of the
        // projected result, so a strongly decayed result is still accurate
        let local_tol = |tau: T, e: &DenseMatrix<T>, basis: &[Vec<T>], m: usize| {
            let y = if lead == n {
                (0..m).map(|k| e[(k, 0)] * e[(k, 0)]).sum::<T>().sqrt()
            } else {
                let mut y = vec![T::zero(); lead];
                for (k, q) in basis.iter().take(m).enumerate() {
                    axpy(e[(k, 0)], &q[..lead], &mut y);
                }
                norm2(&y)
            };
            tol * vnorm.min(y * beta) * tau / t
        };

        // Arnoldi with periodic convergence checks
        let mut arn = Arnoldi {
            basis: vec![w.iter().map(|&x| x / beta).collect()],
            h: Vec::new(),
            breakdown: false,
        };
        let mut anorm = T::zero();
        let mut accepted: Option<(DenseMatrix<T>, T)> = None;
        for j in 0..mmax {
            a.apply(&arn.basis[j], &mut scratch);
            let mut p = scratch.clone();
            anorm = anorm.max(norm2(&p));
            let mut col = Vec::with_capacity(j + 2);
            for q in &arn.basis {
                let hij = dot(q, &p);
                axpy(-hij, q, &mut p);
                col.push(hij);
            }
            let hnext = norm2(&p);
            col.push(hnext);
            arn.h.push(col);
            if hnext <= T::epsilon() * T::of(16.0) * anorm.max(T::min_positive_value()) {
                arn.breakdown = true;
                break;
            }
            for x in &mut p {
                *x /= hnext;
            }
            arn.basis.push(p);
            let m = j + 1;
            if m == mmax || m % 6 == 0 {
                let e = dense_expm(&arn.estimate_matrix(tau))?;
                let err = beta * e[(m, 0)].abs();
                last_err = err.to_f64_lossy();
                if err <= local_tol(tau, &e, &arn.basis, m) {
                    accepted = Some((e, tau));
                    break;
                }
            }
        }

        let (e, step) = match accepted {
            Some(found) => found,
            None if arn.breakdown => {
                // invariant subspace: the projection is exact for any step
                let step = t - t_done;
                (dense_expm(&arn.estimate_matrix(step))?, step)
            }
            None => {
                // same basis, shorter step
                let mut trial = tau;
                loop {
                    attempts += 1;
                    if attempts > cfg.max_substeps || trial <= t * T::of(1e-12) {
                        return Err(Error::KrylovNoConvergence {
                            substeps: attempts,
                            residual: last_err / vnorm.to_f64_lossy(),
                            tol: cfg.tol,
                        });
                    }
                    trial = trial * T::of(0.5);
                    let e = dense_expm(&arn.estimate_matrix(trial))?;
                    let err = beta * e[(arn.dim(), 0)].abs();
                    last_err = err.to_f64_lossy();
                    if err <= local_tol(trial, &e, &arn.basis, arn.dim()) {
                        break (e, trial);
                    }
                }
            }
        };

        let m = arn.dim();
        let mut next = vec![T::zero(); n];
        for (k, q) in arn.basis.iter().take(m).enumerate() {
            axpy(beta * e[(k, 0)], q, &mut next);
        }
        w = next;
        t_done = if step >= t - t_done { t } else { t_done + step };
        attempts += 1;
        if attempts > cfg.max_substeps && t_done < t {
            return Err(Error::KrylovNoConvergence {
                substeps: attempts,
                residual: last_err / vnorm.to_f64_lossy(),
                tol: cfg.tol,
            });
        }
        // a step that converged early suggests a longer next step
        tau = if m < mmax { step * T::of(2.0) } else { step };
    }
    Ok(w)
}

/// Precomputed one-step propagator `(u, f) ↦ e^{ΔtA} u + Δt φ₁(ΔtA) f`.
///
/// Small operators are exponentiated once as dense matrices; larger ones
/// evaluate a fused Krylov action on every call.
pub enum Propagator<A, T> {
    Dense {
        exp: DenseMatrix<T>,
        phi1_dt: DenseMatrix<T>,
    },
    Krylov {
        action: A,
        dt: T,
        cfg: KrylovConfig,
    },
}

impl<T: Real, A: MatAction<T>> Propagator<A, T> {
    pub fn new(action: A, dt: T, cfg: &KrylovConfig) -> Result<Self> {
        let n = action.dim();
        if n <= cfg.dense_limit {
            // exp(Δt [[A, I], [0, 0]]) = [[e^{ΔtA}, Δt φ₁(ΔtA)], [0, I]]
            let ad = to_dense(&action);
            let mut block = DenseMatrix::zeros(2 * n, 2 * n);
            for i in 0..n {
                for j in 0..n {
                    block[(i, j)] = dt * ad[(i, j)];
                }
                block[(i, n + i)] = dt;
            }
            let e = dense_expm(&block)?;
            let exp = DenseMatrix::from_fn(n, n, |i, j| e[(i, j)]);
            let phi1_dt = DenseMatrix::from_fn(n, n, |i, j| e[(i, n + j)]);
            Ok(Self::Dense { exp, phi1_dt })
        } else {
            cfg.validate()?;
            Ok(Self::Krylov {
                action,
                dt,
                cfg: *cfg,
            })
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, Self::Dense { .. })
    }

    pub fn advance(&self, u: &[T], f: &[T]) -> Result<Vec<T>> {
        match self {
            Self::Dense { exp, phi1_dt } => {
                let mut out = exp.mul_vec(u);
                if f.iter().any(|x| *x != T::zero()) {
                    let pf = phi1_dt.mul_vec(f);
                    axpy(T::one(), &pf, &mut out);
                }
                Ok(out)
            }
            Self::Krylov { action, dt, cfg } => exp_phi1_action(action, u, f, *dt, cfg),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        let scale = norm2(b).max(1.0);
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = DenseMatrix::<f64>::zeros(4, 4);
        assert_eq!(dense_expm(&z).unwrap(), DenseMatrix::identity(4));
    }

    #[test]
    fn expm_of_diagonal() {
        let a = DenseMatrix::diag(&[-1.0, 0.0]);
        let e = dense_expm(&a).unwrap();
        assert!((e[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - 1.0).abs() < 1e-15);
        assert_eq!(e[(0, 1)], 0.0);
        let big = DenseMatrix::diag(&[-30.0, 5.0, 0.25]);
        let e = dense_expm(&big).unwrap();
        for (i, x) in [-30.0f64, 5.0, 0.25].iter().enumerate() {
            assert!((e[(i, i)] - x.exp()).abs() <= 1e-13 * x.exp().max(1.0));
        }
    }

    #[test]
    fn expm_of_nilpotent_truncates() {
        let a = DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = dense_expm(&a).unwrap();
        let want = DenseMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(e.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn expm_rotation_generator() {
        // e^{θ[[0,-1],[1,0]]} is a rotation; θ large enough to force squaring
        let th = 7.5f64;
        let a = DenseMatrix::from_row_slice(2, 2, &[0.0, -th, th, 0.0]);
        let e = dense_expm(&a).unwrap();
        let want = DenseMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        assert!(e.max_abs_diff(&want) < 1e-13);
    }

    #[test]
    fn dense_cap_enforced() {
        let a = DenseMatrix::<f64>::zeros(DENSE_EXPM_CAP + 1, DENSE_EXPM_CAP + 1);
        assert!(matches!(dense_expm(&a), Err(Error::DenseTooLarge { .. })));
    }

    #[test]
    fn actions_at_time_zero_return_input() {
        let a = DenseMatrix::from_row_slice(2, 2, &[-1.0, 3.0, 0.5, -2.0]);
        let v = [0.3, -0.7];
        let cfg = KrylovConfig::default();
        assert_eq!(expm_action(&a, &v, 0.0, &cfg).unwrap(), v);
        assert_eq!(phi1_action(&a, &v, 0.0, &cfg).unwrap(), v);
    }

    #[test]
    fn diagonal_actions_decouple() {
        let a = DenseMatrix::diag(&[-1.0, -2.0]);
        for cfg in [KrylovConfig::default(), KrylovConfig::default().krylov_only()] {
            let w = expm_action(&a, &[1.0, 1.0], 1.0, &cfg).unwrap();
            assert!(close(&w, &[(-1f64).exp(), (-2f64).exp()], 1e-12));
        }
        let d = DenseMatrix::<f64>::diag(&[-2.0]);
        for cfg in [KrylovConfig::default(), KrylovConfig::default().krylov_only()] {
            let w = phi1_action(&d, &[1.0], 1.0, &cfg).unwrap();
            assert!((w[0] - 0.432_332_358_381_693_65).abs() < 1e-12);
        }
    }

    #[test]
    fn phi1_on_singular_operator() {
        // φ₁(0) = 1 on the kernel of A
        let a = DenseMatrix::<f64>::diag(&[0.0, -1.0]);
        let w = phi1_action(&a, &[1.0, 1.0], 2.0, &KrylovConfig::default()).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-14);
        assert!((w[1] - (1.0 - (-2f64).exp()) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn krylov_substeps_on_stiff_diagonal() {
        let diag: Vec<f64> = (0..400).map(|i| -(i as f64) * 2.5).collect();
        let a = FnAction::new(400, |v: &[f64], out: &mut [f64]| {
            for ((o, x), d) in out.iter_mut().zip(v).zip(&diag) {
                *o = d * x;
            }
        });
        let v: Vec<f64> = (0..400).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let cfg = KrylovConfig {
            max_subspace: 20,
            ..KrylovConfig::default()
        };
        let w = expm_action(&a, &v, 1.0, &cfg).unwrap();
        let want: Vec<f64> = v.iter().zip(&diag).map(|(x, d)| x * d.exp()).collect();
        let err = norm2(&w.iter().zip(&want).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(err <= 1e-8 * norm2(&v), "err {err:e}");
    }

    #[test]
    fn fused_action_matches_separate_parts() {
        let a = DenseMatrix::from_row_slice(3, 3, &[-2.0, 0.5, 0.0, 0.1, -1.0, 0.3, 0.0, 0.2, -0.5]);
        let u = [1.0, -1.0, 0.5];
        let f = [0.2, 0.0, -0.4];
        let t = 0.7;
        let cfg = KrylovConfig::default();
        let fused = exp_phi1_action(&a, &u, &f, t, &cfg).unwrap();
        let e = expm_action(&a, &u, t, &cfg).unwrap();
        let p = phi1_action(&a, &f, t, &cfg).unwrap();
        let sep: Vec<f64> = e.iter().zip(&p).map(|(x, y)| x + t * y).collect();
        assert!(close(&fused, &sep, 1e-13));
        let prop = Propagator::new(&a, t, &cfg).unwrap();
        assert!(close(&prop.advance(&u, &f).unwrap(), &sep, 1e-13));
    }

    #[test]
    fn config_validation() {
        let bad = KrylovConfig {
            max_subspace: 1,
            ..KrylovConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = KrylovConfig {
            tol: 0.0,
            ..KrylovConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
