use super::CsrMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Cholesky factor `A = L Lᵀ` of a symmetric positive definite band matrix.
///
/// Row `i` of `L` is stored densely for columns `i - bw ..= i`. Structured
/// meshes numbered row-major have bandwidth `nx + 2`, so the fill stays
/// inside the envelope.
#[derive(Debug, Clone)]
pub struct BandedCholesky<T> {
    n: usize,
    bw: usize,
    // row-major, (bw + 1) entries per row; entry [i*(bw+1) + (j + bw - i)] = L[i][j]
    l: Vec<T>,
}

impl<T: Real> BandedCholesky<T> {
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        Error::check_dim(a.nrows(), a.ncols())?;
        let n = a.nrows();
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut l = vec![T::zero(); n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    l[i * w + (j + bw - i)] = v;
                }
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = l[i * w + (j + bw - i)];
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if j == i {
                    if !(s > T::zero()) || !s.is_finite() {
                        return Err(Error::SingularMass {
                            row: i,
                            pivot: s.to_f64_lossy(),
                        });
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Smallest diagonal entry of `L` (square root of the smallest pivot).
    pub fn min_pivot(&self) -> T {
        let w = self.bw + 1;
        (0..self.n)
            .map(|i| self.l[i * w + self.bw])
            .fold(T::infinity(), T::min)
    }

    /// Overwrites `b` with `A⁻¹ b`.
    pub fn solve_in_place(&self, b: &mut [T]) {
        debug_assert_eq!(b.len(), self.n);
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * w + (k + bw - i)] * b[k];
            }
            b[i] = s / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..(i + bw + 1).min(n) {
                s -= self.l[k * w + (i + bw - k)] * b[k];
            }
            b[i] = s / self.l[i * w + bw];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::TripletBuilder;

    fn tridiag(n: usize) -> CsrMatrix<f64> {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.add(i, i, 4.0);
            if i > 0 {
                b.add(i, i - 1, -1.0);
                b.add(i - 1, i, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn solves_tridiagonal_system() {
        let a = tridiag(7);
        let x: Vec<f64> = (0..7).map(|i| (i as f64).sin() + 0.3).collect();
        let b = a.mul_vec(&x);
        let chol = BandedCholesky::factor(&a).unwrap();
        let y = chol.solve(&b);
        for (xi, yi) in x.iter().zip(&y) {
            assert!((xi - yi).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let mut b = TripletBuilder::new(2, 2);
        b.add(0, 0, 1.0);
        b.add(0, 1, 2.0);
        b.add(1, 0, 2.0);
        b.add(1, 1, 1.0);
        let err = BandedCholesky::factor(&b.build()).unwrap_err();
        assert!(matches!(err, Error::SingularMass { row: 1, .. }));
    }
}
