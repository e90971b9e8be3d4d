//! Problem definition `dX = (AX + F(X))dt + B(X)dW` with `F`, `B` realized
//! as Nemytskii operators on nodal vectors.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{BoundaryKind, FemOperators, OperatorCoefficients};
use crate::mesh::Point;
use crate::noise::{CovarianceSpectrum, ModeMatrix};
use crate::scalar::Real;

/// Pointwise map `(x, u) ↦ f(x, u)`.
pub type PointFn<T> = Arc<dyn Fn(Point<T>, T) -> T + Send + Sync>;

#[derive(Clone)]
pub enum NoiseKind<T> {
    /// `B = Q^{1/2}`, already carried by the sampled increment.
    Additive,
    /// `(B(v)u)(x) = b(x, v(x)) u(x)`.
    Multiplicative(PointFn<T>),
}

#[derive(Clone)]
pub enum InitialCondition<T> {
    Zero,
    /// Coefficients by mode rank of the noise spectrum, synthesized through
    /// the mode matrix.
    Spectral(Vec<T>),
    /// Pointwise function, `L²`-projected onto `V_h`.
    Pointwise(Arc<dyn Fn(Point<T>) -> T + Send + Sync>),
}

/// How `F(v)` is mapped into `V_h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NemytskiiMode {
    /// `(F(v))_k = f(x_k, v_k)`.
    #[default]
    Collocated,
    /// `P_h f(·, v(·))` with quadrature.
    Projected,
}

#[derive(Clone)]
pub struct SpdeProblem<T> {
    pub coeffs: OperatorCoefficients<T>,
    pub bc: BoundaryKind<T>,
    /// `None` means `F ≡ 0`.
    pub drift: Option<PointFn<T>>,
    pub diffusion: NoiseKind<T>,
    pub initial: InitialCondition<T>,
    pub final_time: T,
    pub nemytskii: NemytskiiMode,
    /// Lipschitz budget the drift is expected to respect (spot-checked).
    pub lipschitz: Option<T>,
}

impl<T> fmt::Debug for SpdeProblem<T>
where
    T: Real,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpdeProblem")
            .field("coeffs", &self.coeffs)
            .field("bc", &self.bc)
            .field("drift", &self.drift.as_ref().map(|_| "fn"))
            .field(
                "diffusion",
                &match self.diffusion {
                    NoiseKind::Additive => "additive",
                    NoiseKind::Multiplicative(_) => "multiplicative",
                },
            )
            .field("final_time", &self.final_time)
            .field("nemytskii", &self.nemytskii)
            .finish()
    }
}

/// Reaction rate of the benchmark drift `F(u) = -0.5 u`.
pub const BENCHMARK_REACTION: f64 = 0.5;
pub const BENCHMARK_DIFFUSION: f64 = 0.1;

impl<T: Real> SpdeProblem<T> {
    /// `dX = (0.1 ΔX - 0.5 X)dt + dW` on the unit square, Neumann, `X₀ = 0`.
    pub fn linear2d() -> Self {
        let reaction = T::of(BENCHMARK_REACTION);
        Self {
            coeffs: OperatorCoefficients::isotropic(T::of(BENCHMARK_DIFFUSION)),
            bc: BoundaryKind::Neumann,
            drift: Some(Arc::new(move |_, u| -reaction * u)),
            diffusion: NoiseKind::Additive,
            initial: InitialCondition::Zero,
            final_time: T::one(),
            nemytskii: NemytskiiMode::Collocated,
            lipschitz: Some(reaction),
        }
    }

    /// Benchmark operator with multiplicative noise `b(x, u) = u / (1 + u²)`.
    pub fn multiplicative_demo() -> Self {
        Self {
            diffusion: NoiseKind::Multiplicative(Arc::new(|_, u| u / (T::one() + u * u))),
            ..Self::linear2d()
        }
    }

    /// Benchmark with `F ≡ 0` and the reaction folded into the operator
    /// shift; the resulting linear problem is integrated exactly in time.
    pub fn linear2d_shifted() -> Self {
        let base = Self::linear2d();
        Self {
            coeffs: base.coeffs.with_shift(-T::of(BENCHMARK_REACTION)),
            drift: None,
            lipschitz: None,
            ..base
        }
    }

    pub fn with_initial(mut self, initial: InitialCondition<T>) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_final_time(mut self, t: T) -> Self {
        self.final_time = t;
        self
    }

    pub fn without_drift(mut self) -> Self {
        self.drift = None;
        self.lipschitz = None;
        self
    }

    /// Nodal vector of `F(v)`.
    pub fn apply_drift(&self, ops: &FemOperators<T>, x: &[T]) -> Result<Vec<T>> {
        Error::check_dim(ops.dim(), x.len())?;
        let Some(f) = &self.drift else {
            return Ok(vec![T::zero(); x.len()]);
        };
        let out = match self.nemytskii {
            NemytskiiMode::Collocated => x
                .iter()
                .enumerate()
                .map(|(k, &u)| f(ops.dof_point(k), u))
                .collect::<Vec<_>>(),
            NemytskiiMode::Projected => ops.project_nemytskii(x, |p, u| f(p, u))?,
        };
        if let Some(node) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "drift", node });
        }
        Ok(out)
    }

    /// Nodal vector of `B(x) ΔW`.
    pub fn apply_diffusion(&self, ops: &FemOperators<T>, x: &[T], dw: &[T]) -> Result<Vec<T>> {
        Error::check_dim(ops.dim(), x.len())?;
        Error::check_dim(ops.dim(), dw.len())?;
        match &self.diffusion {
            NoiseKind::Additive => Ok(dw.to_vec()),
            NoiseKind::Multiplicative(b) => dw
                .iter()
                .zip(x)
                .enumerate()
                .map(|(k, (&w, &u))| {
                    let bk = b(ops.dof_point(k), u);
                    if bk.is_finite() {
                        Ok(bk * w)
                    } else {
                        Err(Error::NonFinite {
                            what: "diffusion",
                            node: k,
                        })
                    }
                })
                .collect(),
        }
    }

    /// `X₀^h`: `P_h X₀`, or `E c` for spectral data.
    pub fn initial_state(&self, ops: &FemOperators<T>, modes: &ModeMatrix<T>) -> Result<Vec<T>> {
        match &self.initial {
            InitialCondition::Zero => Ok(vec![T::zero(); ops.dim()]),
            InitialCondition::Spectral(c) => {
                Error::check_dim(modes.num_modes(), c.len())?;
                Ok(modes.combine(c))
            }
            InitialCondition::Pointwise(f) => Ok(ops.l2_project(|p| f(p))),
        }
    }

    /// Largest observed difference quotient `|f(x,u) - f(x,v)| / |u - v|`
    /// over `samples` pseudo-random pairs; warns if it exceeds the budget.
    pub fn check_lipschitz(&self, ops: &FemOperators<T>, samples: usize) -> Option<T> {
        let f = self.drift.as_ref()?;
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            T::of((state >> 11) as f64 / (1u64 << 53) as f64)
        };
        let span = T::of(10.0);
        let mut worst = T::zero();
        for _ in 0..samples {
            let k = (next() * T::of_usize(ops.dim())).to_usize().unwrap_or(0).min(ops.dim() - 1);
            let p = ops.dof_point(k);
            let u = (next() - T::of(0.5)) * span;
            let v = (next() - T::of(0.5)) * span;
            if u != v {
                worst = worst.max((f(p, u) - f(p, v)).abs() / (u - v).abs());
            }
        }
        if let Some(budget) = self.lipschitz {
            if worst > budget * T::of(1.0 + 1e-9) {
                log::warn!("drift Lipschitz spot check {worst} exceeds budget {budget}");
            }
        }
        Some(worst)
    }
}

/// Spectral coefficients `(i² + j²)^{-1.001}` for `i, j ≥ 1`, zero when
/// either index vanishes.
pub fn smooth_initial_coefficients<T: Real>(spectrum: &CovarianceSpectrum<T>) -> Vec<T> {
    spectrum
        .modes()
        .iter()
        .map(|&(i, j)| {
            if i >= 1 && j >= 1 {
                T::of(((i * i + j * j) as f64).powf(-1.001))
            } else {
                T::zero()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    fn ops() -> FemOperators<f64> {
        let mesh = Mesh::rect(3, 3, 1.0, 1.0).unwrap();
        FemOperators::assemble(&mesh, OperatorCoefficients::isotropic(0.1), BoundaryKind::Neumann)
            .unwrap()
    }

    #[test]
    fn benchmark_drift_halves_and_negates() {
        let ops = ops();
        let p = SpdeProblem::<f64>::linear2d();
        let f = p.apply_drift(&ops, &vec![1.0; ops.dim()]).unwrap();
        assert!(f.iter().all(|&v| v == -0.5));
        let zero = p.clone().without_drift();
        assert!(zero.apply_drift(&ops, &vec![3.0; ops.dim()]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn drift_is_pointwise_and_local() {
        let ops = ops();
        let mut p = SpdeProblem::<f64>::linear2d();
        p.drift = Some(Arc::new(|_, u| u * u));
        let mut v: Vec<f64> = (0..ops.dim()).map(|k| (k % 7) as f64 - 3.0).collect();
        let f = p.apply_drift(&ops, &v).unwrap();
        assert_eq!(f.iter().cloned().fold(0.0, f64::max), 9.0);
        v[5] += 1.0;
        let g = p.apply_drift(&ops, &v).unwrap();
        for k in 0..ops.dim() {
            assert_eq!(f[k] == g[k], k != 5);
        }
    }

    #[test]
    fn non_finite_drift_reported() {
        let ops = ops();
        let mut p = SpdeProblem::<f64>::linear2d();
        p.drift = Some(Arc::new(|_, u| 1.0 / u));
        let err = p.apply_drift(&ops, &vec![0.0; ops.dim()]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { what: "drift", node: 0 }));
    }

    #[test]
    fn diffusion_variants() {
        let ops = ops();
        let n = ops.dim();
        let w: Vec<f64> = (0..n).map(|k| k as f64 * 0.1).collect();
        let x = vec![2.0; n];
        let add = SpdeProblem::<f64>::linear2d();
        assert_eq!(add.apply_diffusion(&ops, &x, &w).unwrap(), w);
        let mut mult = SpdeProblem::<f64>::linear2d();
        mult.diffusion = NoiseKind::Multiplicative(Arc::new(|_, _| 1.0));
        assert_eq!(mult.apply_diffusion(&ops, &x, &w).unwrap(), w);
        mult.diffusion = NoiseKind::Multiplicative(Arc::new(|_, u| u));
        let out = mult.apply_diffusion(&ops, &x, &w).unwrap();
        assert!(out.iter().zip(&w).all(|(o, wi)| *o == 2.0 * wi));
        mult.diffusion = NoiseKind::Multiplicative(Arc::new(|_, u| u.ln()));
        assert!(mult.apply_diffusion(&ops, &vec![-1.0; n], &w).is_err());
    }

    #[test]
    fn projected_drift_agrees_for_linear_f() {
        // P_h(-0.5 v) = -0.5 v for v in V_h
        let ops = ops();
        let mut p = SpdeProblem::<f64>::linear2d();
        p.nemytskii = NemytskiiMode::Projected;
        let v: Vec<f64> = (0..ops.dim()).map(|k| (k as f64).cos()).collect();
        let f = p.apply_drift(&ops, &v).unwrap();
        for (a, b) in f.iter().zip(&v) {
            assert!((a + 0.5 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn lipschitz_spot_check() {
        let ops = ops();
        let p = SpdeProblem::<f64>::linear2d();
        let l = p.check_lipschitz(&ops, 200).unwrap();
        assert!((l - 0.5).abs() < 1e-9);
        assert!(p.clone().without_drift().check_lipschitz(&ops, 10).is_none());
    }

    #[test]
    fn smooth_coefficients_skip_axis_modes() {
        let s = CovarianceSpectrum::<f64>::new(1.0, 0.001, 3, 0.0).unwrap();
        let c = smooth_initial_coefficients(&s);
        assert_eq!(c[s.rank(0, 2).unwrap()], 0.0);
        assert_eq!(c[s.rank(2, 0).unwrap()], 0.0);
        assert!((c[s.rank(1, 1).unwrap()] - 2f64.powf(-1.001)).abs() < 1e-15);
    }
}
