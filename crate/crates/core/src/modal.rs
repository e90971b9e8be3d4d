//! Generalized eigenbasis of a symmetric pencil `K φ = λ M φ`.
//!
//! With `Φᵀ M Φ = I` the generator is `A_h = Φ (shift − Λ) Φᵀ M`, so any
//! function of `ΔtA_h` reduces to a diagonal scaling between two dense
//! products. One decomposition per mesh serves every time step.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fem::FemOperators;
use crate::linalg::DenseMatrix;
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct ModalBasis<T> {
    /// Eigenvalues of `A_h`, i.e. `shift − λ_k`, ascending in `λ_k`.
    pub rates: Vec<T>,
    /// M-orthonormal eigenvectors as columns.
    pub vectors: DenseMatrix<T>,
}

impl<T: Real> ModalBasis<T> {
    /// Fails when the stiffness matrix is not symmetric (advection).
    pub fn compute(ops: &FemOperators<T>) -> Result<Self> {
        let k = ops.stiffness();
        let scale = k.max_abs().to_f64_lossy();
        if !k.is_symmetric(T::of(1e-12 * scale.max(f64::MIN_POSITIVE))) {
            return Err(Error::Assembly(
                "modal basis needs a symmetric stiffness matrix".into(),
            ));
        }
        let n = ops.dim();
        let dense = |a: &crate::linalg::CsrMatrix<T>| {
            let mut d = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                for (j, v) in a.row(i) {
                    d[(i, j)] = v.to_f64_lossy();
                }
            }
            d
        };
        let chol = dense(ops.mass())
            .cholesky()
            .ok_or(Error::SingularMass { row: 0, pivot: 0.0 })?;
        let l = chol.l();
        // C = L⁻¹ K L⁻ᵀ
        let y = l
            .solve_lower_triangular(&dense(k))
            .ok_or_else(|| Error::Assembly("mass factor is singular".into()))?;
        let c = l
            .solve_lower_triangular(&y.transpose())
            .ok_or_else(|| Error::Assembly("mass factor is singular".into()))?;
        let c = (&c + c.transpose()) * 0.5;
        let eig = c.symmetric_eigen();
        let phi = l
            .transpose()
            .solve_upper_triangular(&eig.eigenvectors)
            .ok_or_else(|| Error::Assembly("mass factor is singular".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let shift = ops.shift();
        let rates = order
            .iter()
            .map(|&c| shift - T::of(eig.eigenvalues[c]))
            .collect();
        let vectors = DenseMatrix::from_fn(n, n, |i, j| T::of(phi[(i, order[j])]));
        Ok(Self { rates, vectors })
    }

    pub fn dim(&self) -> usize {
        self.rates.len()
    }

    /// Coordinates `Φᵀ M u` and `Φᵀ M f` in one sweep over `Φ`.
    fn coordinates(&self, ops: &FemOperators<T>, u: &[T], f: Option<&[T]>) -> (Vec<T>, Vec<T>) {
        let n = self.dim();
        let mu = ops.mass().mul_vec(u);
        let mf = f.map(|f| ops.mass().mul_vec(f));
        let mut cu = vec![T::zero(); n];
        let mut cf = vec![T::zero(); if mf.is_some() { n } else { 0 }];
        for i in 0..n {
            let row = self.vectors.row(i);
            let a = mu[i];
            for (c, &p) in cu.iter_mut().zip(row) {
                *c += p * a;
            }
            if let Some(mf) = &mf {
                let b = mf[i];
                for (c, &p) in cf.iter_mut().zip(row) {
                    *c += p * b;
                }
            }
        }
        (cu, cf)
    }

    fn synthesize(&self, c: &[T]) -> Vec<T> {
        (0..self.dim())
            .map(|i| self.vectors.row(i).iter().zip(c).map(|(&p, &x)| p * x).sum())
            .collect()
    }

    /// `e^{tA_h} u`.
    pub fn expm(&self, ops: &FemOperators<T>, u: &[T], t: T) -> Vec<T> {
        let (mut c, _) = self.coordinates(ops, u, None);
        for (x, &r) in c.iter_mut().zip(&self.rates) {
            *x *= (t * r).exp();
        }
        self.synthesize(&c)
    }
}

/// `φ₁(z) = (e^z − 1)/z`, accurate near zero.
pub fn phi1_scalar<T: Real>(z: T) -> T {
    if z.abs() < T::of(1e-300) {
        T::one()
    } else {
        z.exp_m1() / z
    }
}

/// Per-step diagonal factors of the modal propagator.
#[derive(Debug, Clone)]
pub struct ModalStep<T> {
    exp: Vec<T>,
    phi1_dt: Vec<T>,
}

impl<T: Real> ModalStep<T> {
    pub fn new(basis: &ModalBasis<T>, dt: T) -> Self {
        let exp = basis.rates.iter().map(|&r| (dt * r).exp()).collect();
        let phi1_dt = basis.rates.iter().map(|&r| dt * phi1_scalar(dt * r)).collect();
        Self { exp, phi1_dt }
    }

    /// `e^{ΔtA_h} u + Δt φ₁(ΔtA_h) f`.
    pub fn advance(&self, basis: &ModalBasis<T>, ops: &FemOperators<T>, u: &[T], f: &[T]) -> Vec<T> {
        let has_f = f.iter().any(|x| *x != T::zero());
        let (mut cu, cf) = basis.coordinates(ops, u, has_f.then_some(f));
        for (k, x) in cu.iter_mut().enumerate() {
            *x *= self.exp[k];
            if has_f {
                *x += self.phi1_dt[k] * cf[k];
            }
        }
        basis.synthesize(&cu)
    }
}
