//! Stochastic exponential Euler time stepping:
//!
//! `X_{m+1} = e^{ΔtA_h}(X_m + B_h(X_m)ΔW_m) + Δt φ₁(ΔtA_h) F(X_m)`
//!
//! The two applications of `e^{ΔtA_h}` are fused by linearity, and the
//! exponential and `φ₁` parts are evaluated as one augmented action.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{FemOperators, Generator};
use crate::matfunc::{KrylovConfig, Propagator};
use crate::modal::{ModalBasis, ModalStep};
use crate::model::SpdeProblem;
use crate::noise::{mode_increments, CovarianceSpectrum, ModeMatrix, NoiseStream};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState<T> {
    pub m: usize,
    pub dt: T,
    pub x: Vec<T>,
}

impl<T: Real> SchemeState<T> {
    /// `t = m Δt`, never accumulated.
    pub fn time(&self) -> T {
        T::of_usize(self.m) * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Record {
    #[default]
    None,
    FinalOnly,
    EveryK(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T> {
    pub dt: T,
    pub steps: usize,
    pub krylov: KrylovConfig,
    pub record: Record,
}

impl<T: Real> RunConfig<T> {
    /// `M` uniform steps on `[0, T]`.
    pub fn uniform(final_time: T, steps: usize) -> Result<Self> {
        if !(final_time >= T::zero()) || !final_time.is_finite() {
            return Err(Error::config("T", format!("final time must be finite and non-negative, got {final_time}")));
        }
        if steps == 0 && final_time > T::zero() {
            return Err(Error::config("dt", "zero steps for a positive final time"));
        }
        let dt = if steps == 0 {
            T::zero()
        } else {
            final_time / T::of_usize(steps)
        };
        Ok(Self {
            dt,
            steps,
            krylov: KrylovConfig::default(),
            record: Record::None,
        })
    }

    /// Steps of size `dt`; rejects `T/dt` that is not an integer.
    pub fn from_dt(final_time: T, dt: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::config("dt", format!("time step must be positive, got {dt}")));
        }
        let ratio = (final_time / dt).to_f64_lossy();
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || steps < 1.0 {
            return Err(Error::config(
                "dt",
                format!("T/dt = {ratio} is not a positive integer (T = {final_time}, dt = {dt})"),
            ));
        }
        Self::uniform(final_time, steps as usize)
    }

    pub fn with_krylov(mut self, krylov: KrylovConfig) -> Self {
        self.krylov = krylov;
        self
    }

    pub fn with_record(mut self, record: Record) -> Self {
        self.record = record;
        self
    }

    pub fn final_time(&self) -> T {
        T::of_usize(self.steps) * self.dt
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub final_state: SchemeState<T>,
    pub snapshots: Vec<SchemeState<T>>,
}

/// Everything a realization needs, shared read-only across threads.
pub struct Scheme<'a, T: Real> {
    pub problem: &'a SpdeProblem<T>,
    pub ops: &'a FemOperators<T>,
    pub spectrum: &'a CovarianceSpectrum<T>,
    pub modes: &'a ModeMatrix<T>,
    pub cfg: RunConfig<T>,
    kernel: Option<Kernel<'a, T>>,
}

enum Kernel<'a, T: Real> {
    Matfunc(Propagator<Generator<'a, T>, T>),
    Modal(Arc<ModalBasis<T>>, ModalStep<T>),
}

impl<'a, T: Real> Scheme<'a, T> {
    pub fn new(
        problem: &'a SpdeProblem<T>,
        ops: &'a FemOperators<T>,
        spectrum: &'a CovarianceSpectrum<T>,
        modes: &'a ModeMatrix<T>,
        cfg: RunConfig<T>,
    ) -> Result<Self> {
        Error::check_dim(ops.dim(), modes.rows())?;
        Error::check_dim(spectrum.len(), modes.num_modes())?;
        cfg.krylov.validate()?;
        let n = ops.dim();
        let kernel = if cfg.steps == 0 {
            None
        } else if n > cfg.krylov.dense_limit && n <= cfg.krylov.modal_limit {
            match ops.modal_basis() {
                Some(b) => {
                    let s = ModalStep::new(&b, cfg.dt);
                    Some(Kernel::Modal(b, s))
                }
                None => Some(Kernel::Matfunc(Propagator::new(ops.generator(), cfg.dt, &cfg.krylov)?)),
            }
        } else {
            Some(Kernel::Matfunc(Propagator::new(ops.generator(), cfg.dt, &cfg.krylov)?))
        };
        Ok(Self {
            problem,
            ops,
            spectrum,
            modes,
            cfg,
            kernel,
        })
    }

    /// One scheme step driven by the nodal increment `dw`.
    pub fn step(&self, state: &SchemeState<T>, dw: &[T]) -> Result<SchemeState<T>> {
        let kernel = self
            .kernel
            .as_ref()
            .ok_or_else(|| Error::Experiment("stepping a zero-step run".into()))?;
        let mut u = self.problem.apply_diffusion(self.ops, &state.x, dw)?;
        for (ui, &xi) in u.iter_mut().zip(&state.x) {
            *ui += xi;
        }
        let f = self.problem.apply_drift(self.ops, &state.x)?;
        let x = match kernel {
            Kernel::Matfunc(p) => p.advance(&u, &f)?,
            Kernel::Modal(b, s) => s.advance(b, self.ops, &u, &f),
        };
        if let Some(node) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "state", node });
        }
        Ok(SchemeState {
            m: state.m + 1,
            dt: state.dt,
            x,
        })
    }

    pub fn initial_state(&self) -> Result<SchemeState<T>> {
        Ok(SchemeState {
            m: 0,
            dt: self.cfg.dt,
            x: self.problem.initial_state(self.ops, self.modes)?,
        })
    }

    /// Runs realization `r` to the final time.
    pub fn simulate(&self, stream: &NoiseStream, r: u64) -> Result<Trajectory<T>> {
        self.simulate_observed(stream, r, |_, _| {})
    }

    /// As [`simulate`](Self::simulate), reporting the standard normal
    /// deviates consumed at every step.
    pub fn simulate_observed(
        &self,
        stream: &NoiseStream,
        r: u64,
        mut observe: impl FnMut(usize, &[f64]),
    ) -> Result<Trajectory<T>> {
        let mut state = self.initial_state()?;
        let mut snapshots = Vec::new();
        let every = match self.cfg.record {
            Record::EveryK(k) => Some(k.max(1)),
            _ => None,
        };
        if every.is_some() {
            snapshots.push(state.clone());
        }
        let mut deviates = Vec::new();
        for m in 0..self.cfg.steps {
            let g = mode_increments(stream, r, m, self.cfg.dt, self.spectrum, &mut deviates);
            observe(m, &deviates);
            let dw = self.modes.combine(&g);
            state = self.step(&state, &dw).map_err(|e| Error::Realization {
                realization: r,
                step: m,
                source: Box::new(e),
            })?;
            if let Some(k) = every {
                if state.m % k == 0 || state.m == self.cfg.steps {
                    snapshots.push(state.clone());
                }
            }
        }
        if self.cfg.record == Record::FinalOnly {
            snapshots.push(state.clone());
        }
        Ok(Trajectory {
            final_state: state,
            snapshots,
        })
    }
}

/// CSV dump `step,time,node_index,value`, one row per node and snapshot.
pub fn write_snapshots_csv<T: Real, W: Write>(
    ops: &FemOperators<T>,
    snapshots: &[SchemeState<T>],
    mut w: W,
) -> Result<()> {
    writeln!(w, "step,time,node_index,value")?;
    for s in snapshots {
        let t = s.time();
        for (k, v) in s.x.iter().enumerate() {
            writeln!(w, "{},{:.16e},{},{:.16e}", s.m, t, ops.dof_nodes()[k], v)?;
        }
    }
    Ok(())
}
