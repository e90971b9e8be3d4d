//! Quick property checks of the numerical building blocks.

use sexpde::fem::{BoundaryKind, FemOperators, OperatorCoefficients};
use sexpde::integrator::RunConfig;
use sexpde::linalg::DenseMatrix;
use sexpde::matfunc::{dense_expm, expm_action, phi1_action, KrylovConfig};
use sexpde::mesh::Mesh;
use sexpde::noise::{CovarianceSpectrum, NoiseStream};
use sexpde::reference::{exact_variance, simulate_exact_coefficients, OuModel};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, run: impl FnOnce() -> sexpde::error::Result<(bool, String)>) -> Check {
    match run() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt() / scale
}

fn benchmark_ops(cells: usize) -> sexpde::error::Result<FemOperators<f64>> {
    let mesh = Mesh::rect(cells, cells, 1.0, 1.0)?;
    FemOperators::assemble(&mesh, OperatorCoefficients::isotropic(0.1), BoundaryKind::Neumann)
}

fn test_vector(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i * 7919 + 13) % 101) as f64 / 50.0 - 1.0).collect()
}

pub fn run_all() -> Vec<Check> {
    let krylov = KrylovConfig::default().krylov_only();
    vec![
        check("phi1 identity e^{tA}v = v + tA phi1(tA)v", || {
            let ops = benchmark_ops(16)?;
            let a = ops.generator();
            let v = test_vector(ops.dim());
            let t = 0.5;
            // the identity multiplies the φ₁ error by ‖tA‖, hence the tighter tolerance
            let tight = KrylovConfig { tol: 1e-13, ..krylov };
            let e = expm_action(&a, &v, t, &tight)?;
            let p = phi1_action(&a, &v, t, &tight)?;
            let ap = ops.apply_ah(&p)?;
            let rhs: Vec<f64> = v.iter().zip(&ap).map(|(x, y)| x + t * y).collect();
            let err = max_rel(&e, &rhs);
            Ok((err <= 1e-7, format!("relative error {err:.2e}")))
        }),
        check("semigroup e^{(s+t)A} = e^{sA} e^{tA}", || {
            let ops = benchmark_ops(16)?;
            let a = ops.generator();
            let v = test_vector(ops.dim());
            let once = expm_action(&a, &v, 0.7, &krylov)?;
            let half = expm_action(&a, &v, 0.3, &krylov)?;
            let twice = expm_action(&a, &half, 0.4, &krylov)?;
            let err = max_rel(&twice, &once);
            Ok((err <= 1e-7, format!("relative error {err:.2e}")))
        }),
        check("Krylov action matches dense exponential", || {
            let n = 60;
            let a = DenseMatrix::from_fn(n, n, |i, j| {
                let s = ((i * 31 + j * 17) % 23) as f64 / 23.0 - 0.5;
                if i == j {
                    -2.0 - s.abs()
                } else {
                    s / n as f64 * 4.0
                }
            });
            let v = test_vector(n);
            let dense = dense_expm(&a)?.mul_vec(&v);
            let kry = expm_action(&a, &v, 1.0, &krylov)?;
            let err = max_rel(&kry, &dense);
            Ok((err <= 1e-8, format!("relative error {err:.2e}")))
        }),
        check("mass SPD, stiffness symmetric positive semidefinite", || {
            let ops = benchmark_ops(8)?;
            let m = ops.mass();
            let k = ops.stiffness();
            let v = test_vector(ops.dim());
            let vm = m.bilinear(&v, &v);
            let vk = k.bilinear(&v, &v);
            let ones = vec![1.0; ops.dim()];
            let k1 = k.bilinear(&ones, &ones).abs();
            let ok = m.is_symmetric(1e-14) && k.is_symmetric(1e-12) && vm > 0.0 && vk >= 0.0 && k1 < 1e-12
                && ops.mass_factor().min_pivot() > 0.0;
            Ok((ok, format!("v'Mv={vm:.3e} v'Kv={vk:.3e} 1'K1={k1:.1e}")))
        }),
        check("OU sample variance matches exact variance", || {
            let model = OuModel::<f64>::benchmark();
            let spectrum = CovarianceSpectrum::new(1.0, 0.001, 3, 0.0)?;
            let modes = model.modes(&spectrum, None)?;
            let cfg = RunConfig::uniform(1.0, 4)?;
            let stream = NoiseStream::new(20240601);
            let count = 4000;
            let mut sums = vec![(0.0f64, 0.0f64); modes.len()];
            for r in 0..count {
                let c = simulate_exact_coefficients(&stream, r, &cfg, &modes, |_, _| {});
                for (s, x) in sums.iter_mut().zip(c) {
                    s.0 += x;
                    s.1 += x * x;
                }
            }
            let n = count as f64;
            let mut within = 0;
            let mut active = 0;
            for (m, (s1, s2)) in modes.iter().zip(&sums) {
                let want = exact_variance(m, 1.0);
                if want == 0.0 {
                    continue;
                }
                active += 1;
                let var = (s2 - s1 * s1 / n) / (n - 1.0);
                // std error of a Gaussian sample variance
                let se = want * (2.0 / (n - 1.0)).sqrt();
                if (var - want).abs() <= 3.0 * se {
                    within += 1;
                }
            }
            let ok = within as f64 >= 0.9 * active as f64;
            Ok((ok, format!("{within}/{active} modes within 3 std errors")))
        }),
    ]
}

pub fn format_table(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for c in checks {
        s += &format!(
            "{:<width$}  {}  {}\n",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.detail
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let report = run_all();
        assert!(report.iter().all(|c| c.passed), "{}", format_table(&report));
    }
}
