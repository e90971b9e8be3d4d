//! P1 finite-element operators on a [`Mesh`]: consistent mass matrix,
//! stiffness matrix of the bilinear form of `-(∇·D∇ - q·∇)`, the discrete
//! L² projection and the generator `A_h = -M⁻¹K + shift·I`.

use std::num::NonZeroUsize;
use std::sync::{Arc, OnceLock};

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};
use crate::linalg::{BandedCholesky, CsrMatrix, TripletBuilder};
use crate::matfunc::MatAction;
use crate::mesh::{Mesh, Point};
use crate::modal::ModalBasis;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryKind<T> {
    Dirichlet,
    Neumann,
    /// `∂u/∂ν + α₀ u = 0`
    Robin(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MassKind {
    #[default]
    Consistent,
    /// Row-sum lumping; changes the scheme, experimentation only.
    Lumped,
}

/// Constant coefficients of the linear operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorCoefficients<T> {
    /// Diffusion tensor `D` (row-major 2x2).
    pub diffusion: [[T; 2]; 2],
    /// Advection velocity `q`.
    pub advection: [T; 2],
    /// Real added to the operator: `A ← A + shift·I`.
    pub shift: T,
    /// Required ellipticity constant `c₁` in `ξᵀDξ ≥ c₁|ξ|²`.
    pub ellipticity: T,
}

impl<T: Real> OperatorCoefficients<T> {
    /// Isotropic diffusion `d·I`, no advection, no shift.
    pub fn isotropic(d: T) -> Self {
        Self {
            diffusion: [[d, T::zero()], [T::zero(), d]],
            advection: [T::zero(); 2],
            shift: T::zero(),
            ellipticity: d,
        }
    }

    pub fn with_shift(mut self, shift: T) -> Self {
        self.shift = shift;
        self
    }

    pub fn with_advection(mut self, q: [T; 2]) -> Self {
        self.advection = q;
        self
    }

    /// Smallest eigenvalue of the symmetric part of `D`.
    pub fn min_symmetric_eigenvalue(&self) -> T {
        let [[a, b], [c, d]] = self.diffusion;
        let off = (b + c) * T::of(0.5);
        let mean = (a + d) * T::of(0.5);
        let rad = (((a - d) * T::of(0.5)).powi(2) + off * off).sqrt();
        mean - rad
    }

    pub fn check_ellipticity(&self) -> Result<()> {
        if !(self.ellipticity > T::zero()) {
            return Err(Error::Assembly(format!(
                "ellipticity constant must be positive, got {}",
                self.ellipticity
            )));
        }
        let lmin = self.min_symmetric_eigenvalue();
        if lmin < self.ellipticity {
            return Err(Error::Assembly(format!(
                "diffusion tensor violates ellipticity: smallest eigenvalue {lmin} < c1 = {}",
                self.ellipticity
            )));
        }
        Ok(())
    }
}

/// Assembled operators. Immutable after construction; all methods take
/// `&self` and can be shared across threads.
#[derive(Debug, Clone)]
pub struct FemOperators<T> {
    mesh: Mesh<T>,
    coeffs: OperatorCoefficients<T>,
    bc: BoundaryKind<T>,
    mass_kind: MassKind,
    /// Node index of each degree of freedom.
    dofs: Vec<usize>,
    mass: CsrMatrix<T>,
    stiffness: CsrMatrix<T>,
    mass_factor: BandedCholesky<T>,
    /// `∫ φ_k` for every degree of freedom.
    basis_integrals: Vec<T>,
    modal: OnceLock<Option<Arc<ModalBasis<T>>>>,
}

// 3-point Gauss rule, exact for quadratics: barycentric points, weight 1/3 each
const GAUSS3: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

fn gradients<T: Real>(v: &[Point<T>; 3], area: T) -> [[T; 2]; 3] {
    let two_a = area + area;
    let mut g = [[T::zero(); 2]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[i] = [(v[j][1] - v[k][1]) / two_a, (v[k][0] - v[j][0]) / two_a];
    }
    g
}

impl<T: Real> FemOperators<T> {
    pub fn assemble(
        mesh: &Mesh<T>,
        coeffs: OperatorCoefficients<T>,
        bc: BoundaryKind<T>,
    ) -> Result<Self> {
        Self::assemble_with(mesh, coeffs, bc, MassKind::Consistent)
    }

    pub fn assemble_with(
        mesh: &Mesh<T>,
        coeffs: OperatorCoefficients<T>,
        bc: BoundaryKind<T>,
        mass_kind: MassKind,
    ) -> Result<Self> {
        coeffs.check_ellipticity()?;
        let n = mesh.num_nodes();
        let mut mb = TripletBuilder::new(n, n);
        let mut kb = TripletBuilder::new(n, n);
        let third = T::one() / T::of(3.0);
        let d = coeffs.diffusion;
        let q = coeffs.advection;
        for tri in &mesh.triangles {
            let area = mesh.signed_area(tri);
            if !(area > T::zero()) {
                return Err(Error::Assembly(format!(
                    "triangle {tri:?} has non-positive area {area}"
                )));
            }
            let v = mesh.vertices(tri);
            let g = gradients(&v, area);
            for a in 0..3 {
                for b in 0..3 {
                    let m = match mass_kind {
                        MassKind::Consistent => {
                            area / T::of(12.0) * if a == b { T::of(2.0) } else { T::one() }
                        }
                        MassKind::Lumped if a == b => area * third,
                        MassKind::Lumped => T::zero(),
                    };
                    if m != T::zero() {
                        mb.add(tri[a], tri[b], m);
                    }
                    // K[a][b] = a(φ_b, φ_a) = ∫ ∇φ_aᵀ D ∇φ_b + (q·∇φ_b) φ_a
                    let mut diff = T::zero();
                    for i in 0..2 {
                        for j in 0..2 {
                            diff += g[a][i] * d[i][j] * g[b][j];
                        }
                    }
                    let adv = (q[0] * g[b][0] + q[1] * g[b][1]) * third;
                    kb.add(tri[a], tri[b], area * (diff + adv));
                }
            }
        }
        if let BoundaryKind::Robin(alpha0) = bc {
            for [p, r] in mesh.boundary_edges() {
                let (x, y) = (mesh.nodes[p], mesh.nodes[r]);
                let len = (x[0] - y[0]).hypot(x[1] - y[1]);
                let s = alpha0 * len / T::of(6.0);
                kb.add(p, p, s + s);
                kb.add(r, r, s + s);
                kb.add(p, r, s);
                kb.add(r, p, s);
            }
        }
        let mass_full = mb.build();
        let stiffness_full = kb.build();
        let row_sums = mass_full.row_sums();

        let dofs: Vec<usize> = match bc {
            BoundaryKind::Dirichlet => (0..n).filter(|&k| !mesh.is_boundary_node(k)).collect(),
            _ => (0..n).collect(),
        };
        if dofs.is_empty() {
            return Err(Error::Assembly(
                "Dirichlet mesh has no interior nodes".into(),
            ));
        }
        let (mass, stiffness) = if dofs.len() == n {
            (mass_full, stiffness_full)
        } else {
            (mass_full.submatrix(&dofs), stiffness_full.submatrix(&dofs))
        };
        let mass_factor = BandedCholesky::factor(&mass)?;
        let basis_integrals = dofs.iter().map(|&k| row_sums[k]).collect();
        Ok(Self {
            mesh: mesh.clone(),
            coeffs,
            bc,
            mass_kind,
            dofs,
            mass,
            stiffness,
            mass_factor,
            basis_integrals,
            modal: OnceLock::new(),
        })
    }

    pub fn mesh(&self) -> &Mesh<T> {
        &self.mesh
    }

    pub fn coefficients(&self) -> &OperatorCoefficients<T> {
        &self.coeffs
    }

    pub fn boundary(&self) -> BoundaryKind<T> {
        self.bc
    }

    pub fn mass_kind(&self) -> MassKind {
        self.mass_kind
    }

    pub fn shift(&self) -> T {
        self.coeffs.shift
    }

    /// Number of degrees of freedom (length of every nodal vector).
    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    pub fn dof_nodes(&self) -> &[usize] {
        &self.dofs
    }

    pub fn dof_point(&self, dof: usize) -> Point<T> {
        self.mesh.nodes[self.dofs[dof]]
    }

    pub fn mass(&self) -> &CsrMatrix<T> {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix<T> {
        &self.stiffness
    }

    pub fn mass_factor(&self) -> &BandedCholesky<T> {
        &self.mass_factor
    }

    /// Scatters a dof vector to all mesh nodes (constrained nodes get 0).
    pub fn to_nodes(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.mesh.num_nodes()];
        for (&k, &x) in self.dofs.iter().zip(v) {
            out[k] = x;
        }
        out
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(Point<T>) -> T) -> Vec<T> {
        self.dofs.iter().map(|&k| f(self.mesh.nodes[k])).collect()
    }

    /// Load vector `b_k = ∫ f φ_k`, 3-point Gauss per triangle.
    pub fn load_vector(&self, f: impl Fn(Point<T>) -> T) -> Vec<T> {
        let n = self.mesh.num_nodes();
        let mut full = vec![T::zero(); n];
        let w = T::one() / T::of(3.0);
        for tri in &self.mesh.triangles {
            let v = self.mesh.vertices(tri);
            let area = self.mesh.signed_area(tri);
            for bary in GAUSS3 {
                let b = bary.map(T::of);
                let x = [
                    b[0] * v[0][0] + b[1] * v[1][0] + b[2] * v[2][0],
                    b[0] * v[0][1] + b[1] * v[1][1] + b[2] * v[2][1],
                ];
                let fx = f(x) * area * w;
                for a in 0..3 {
                    full[tri[a]] += fx * b[a];
                }
            }
        }
        self.dofs.iter().map(|&k| full[k]).collect()
    }

    /// Load vectors `b_k = ∫ f_k φ` of several functions at once, with an
    /// `n x n` collapsed Gauss-Legendre rule per triangle (exact for total
    /// degree `2n − 2`). `f(p, out)` writes every `f_k(p)` into `out`.
    pub fn load_vectors(
        &self,
        count: usize,
        points: usize,
        mut f: impl FnMut(Point<T>, &mut [T]),
    ) -> Vec<Vec<T>> {
        let rule = GaussLegendre::new(NonZeroUsize::new(points.max(1)).expect("non-zero"));
        // (s, t, weight) on the reference triangle, weights summing to 1/2
        let mut tri_rule = Vec::with_capacity(points * points);
        for &(u, wu) in rule.as_node_weight_pairs() {
            let s = 0.5 * (1.0 + u);
            for &(v, wv) in rule.as_node_weight_pairs() {
                let t = 0.5 * (1.0 + v) * (1.0 - s);
                tri_rule.push((T::of(s), T::of(t), T::of(0.25 * wu * wv * (1.0 - s))));
            }
        }
        let n = self.mesh.num_nodes();
        // node-major so the per-node update runs over contiguous memory
        let mut acc = vec![T::zero(); n * count];
        let mut vals = vec![T::zero(); count];
        let two = T::of(2.0);
        for tri in &self.mesh.triangles {
            let v = self.mesh.vertices(tri);
            let jac = two * self.mesh.signed_area(tri);
            for &(s, t, w) in &tri_rule {
                let p = [
                    v[0][0] + s * (v[1][0] - v[0][0]) + t * (v[2][0] - v[0][0]),
                    v[0][1] + s * (v[1][1] - v[0][1]) + t * (v[2][1] - v[0][1]),
                ];
                f(p, &mut vals);
                let bary = [T::one() - s - t, s, t];
                for (a, &node) in tri.iter().enumerate() {
                    let c = w * jac * bary[a];
                    let row = &mut acc[node * count..(node + 1) * count];
                    for (r, &x) in row.iter_mut().zip(&vals) {
                        *r += c * x;
                    }
                }
            }
        }
        (0..count)
            .map(|k| self.dofs.iter().map(|&node| acc[node * count + k]).collect())
            .collect()
    }

    /// `P_h g` for `g(x) = f(x, v(x))` with `v ∈ V_h` given by nodal values;
    /// `v` is interpolated at the quadrature points.
    pub fn project_nemytskii(&self, v: &[T], f: impl Fn(Point<T>, T) -> T) -> Result<Vec<T>> {
        Error::check_dim(self.dim(), v.len())?;
        let full_v = self.to_nodes(v);
        let mut full = vec![T::zero(); self.mesh.num_nodes()];
        let w = T::one() / T::of(3.0);
        for tri in &self.mesh.triangles {
            let x = self.mesh.vertices(tri);
            let area = self.mesh.signed_area(tri);
            for bary in GAUSS3 {
                let b = bary.map(T::of);
                let p = [
                    b[0] * x[0][0] + b[1] * x[1][0] + b[2] * x[2][0],
                    b[0] * x[0][1] + b[1] * x[1][1] + b[2] * x[2][1],
                ];
                let u = b[0] * full_v[tri[0]] + b[1] * full_v[tri[1]] + b[2] * full_v[tri[2]];
                let fx = f(p, u) * area * w;
                for a in 0..3 {
                    full[tri[a]] += fx * b[a];
                }
            }
        }
        let mut c: Vec<T> = self.dofs.iter().map(|&k| full[k]).collect();
        self.mass_factor.solve_in_place(&mut c);
        Ok(c)
    }

    /// Discrete L² projection `P_h f`: solves `M c = b`.
    pub fn l2_project(&self, f: impl Fn(Point<T>) -> T) -> Vec<T> {
        let mut c = self.load_vector(f);
        self.mass_factor.solve_in_place(&mut c);
        c
    }

    /// `w = A_h v = -M⁻¹ K v + shift·v`.
    pub fn apply_ah_into(&self, v: &[T], out: &mut [T]) -> Result<()> {
        Error::check_dim(self.dim(), v.len())?;
        Error::check_dim(self.dim(), out.len())?;
        self.stiffness.mul_vec_into(v, out);
        self.mass_factor.solve_in_place(out);
        let s = self.coeffs.shift;
        for (o, &x) in out.iter_mut().zip(v) {
            *o = s * x - *o;
        }
        Ok(())
    }

    pub fn apply_ah(&self, v: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.dim()];
        self.apply_ah_into(v, &mut out)?;
        Ok(out)
    }

    /// Eigenbasis of `A_h`, computed on first use. `None` for
    /// non-symmetric operators.
    pub fn modal_basis(&self) -> Option<Arc<ModalBasis<T>>> {
        self.modal
            .get_or_init(|| match ModalBasis::compute(self) {
                Ok(b) => Some(Arc::new(b)),
                Err(e) => {
                    log::debug!("no modal basis: {e}");
                    None
                }
            })
            .clone()
    }

    /// `A_h` as a black-box linear map.
    pub fn generator(&self) -> Generator<'_, T> {
        Generator { ops: self }
    }

    /// `Φ₁(v) = ∫ v` (`1ᵀ M v` for natural boundary conditions).
    pub fn phi1(&self, v: &[T]) -> Result<T> {
        Error::check_dim(self.dim(), v.len())?;
        Ok(crate::scalar::dot(&self.basis_integrals, v))
    }

    /// `Φ₂(v) = ‖v‖²_{L²} = vᵀ M v`.
    pub fn phi2(&self, v: &[T]) -> Result<T> {
        Error::check_dim(self.dim(), v.len())?;
        Ok(self.mass.bilinear(v, v))
    }

    /// `∫ φ_k` per degree of freedom.
    pub fn basis_integrals(&self) -> &[T] {
        &self.basis_integrals
    }
}

/// Borrowing view of `A_h` implementing [`MatAction`].
#[derive(Debug, Clone, Copy)]
pub struct Generator<'a, T> {
    ops: &'a FemOperators<T>,
}

impl<T: Real> MatAction<T> for Generator<'_, T> {
    fn dim(&self) -> usize {
        self.ops.dim()
    }

    fn apply(&self, v: &[T], out: &mut [T]) {
        self.ops
            .apply_ah_into(v, out)
            .expect("generator called with matching dimensions");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit(n: usize, d: f64, bc: BoundaryKind<f64>) -> FemOperators<f64> {
        let mesh = Mesh::rect(n, n, 1.0, 1.0).unwrap();
        FemOperators::assemble(&mesh, OperatorCoefficients::isotropic(d), bc).unwrap()
    }

    #[test]
    fn mass_entries_sum_to_area() {
        for n in [1, 3, 8] {
            let ops = unit(n, 1.0, BoundaryKind::Neumann);
            let total: f64 = ops.mass().row_sums().iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "n={n}: {total}");
        }
        let mesh = Mesh::<f64>::rect(4, 6, 2.0, 0.5).unwrap();
        let ops = FemOperators::assemble(
            &mesh,
            OperatorCoefficients::isotropic(1.0),
            BoundaryKind::Neumann,
        )
        .unwrap();
        let total: f64 = ops.basis_integrals().iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn neumann_stiffness_annihilates_constants() {
        let ops = unit(6, 1.0, BoundaryKind::Neumann);
        let k1 = ops.stiffness().mul_vec(&vec![1.0; ops.dim()]);
        let scale = ops.stiffness().max_abs();
        assert!(k1.iter().all(|v| v.abs() <= 1e-12 * scale));
        assert!(ops.stiffness().is_symmetric(0.0));
        assert!(ops.mass().is_symmetric(0.0));
    }

    #[test]
    fn advection_breaks_symmetry() {
        let mesh = Mesh::<f64>::rect(4, 4, 1.0, 1.0).unwrap();
        let c = OperatorCoefficients::isotropic(0.1).with_advection([1.0, 0.5]);
        let ops = FemOperators::assemble(&mesh, c, BoundaryKind::Neumann).unwrap();
        assert!(!ops.stiffness().is_symmetric(1e-12));
        // constants still in the kernel: q·∇1 = 0
        let k1 = ops.stiffness().mul_vec(&vec![1.0; ops.dim()]);
        assert!(k1.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn robin_adds_boundary_mass() {
        let n = 5;
        let neu = unit(n, 1.0, BoundaryKind::Neumann);
        let rob = unit(n, 1.0, BoundaryKind::Robin(2.0));
        let ones = vec![1.0; neu.dim()];
        // 1ᵀ K_robin 1 - 1ᵀ K_neumann 1 = α₀ |∂Ω|
        let diff = rob.stiffness().bilinear(&ones, &ones) - neu.stiffness().bilinear(&ones, &ones);
        assert!((diff - 2.0 * 4.0).abs() < 1e-12);
        assert!(rob.stiffness().is_symmetric(1e-15));
    }

    #[test]
    fn dirichlet_eliminates_boundary_nodes() {
        let ops = unit(4, 1.0, BoundaryKind::Dirichlet);
        assert_eq!(ops.dim(), 9);
        assert!(ops.mass_factor().min_pivot() > 0.0);
        // smallest Dirichlet eigenvalue bounded below by 2π²·D for P1 (upper bound property)
        let v = ops.l2_project(|p| (PI * p[0]).sin() * (PI * p[1]).sin());
        let av = ops.apply_ah(&v).unwrap();
        let rayleigh = -ops.mass().bilinear(&v, &av) / ops.mass().bilinear(&v, &v);
        assert!(rayleigh > 2.0 * PI * PI);
    }

    #[test]
    fn rejects_non_elliptic_tensor() {
        let mesh = Mesh::<f64>::rect(2, 2, 1.0, 1.0).unwrap();
        let mut c = OperatorCoefficients::isotropic(1.0);
        c.diffusion = [[1.0, 2.0], [2.0, 1.0]];
        let err = FemOperators::assemble(&mesh, c, BoundaryKind::Neumann).unwrap_err();
        assert!(err.to_string().contains("ellipticity"));
        c.diffusion = [[0.0; 2]; 2];
        c.ellipticity = 0.0;
        assert!(FemOperators::assemble(&mesh, c, BoundaryKind::Neumann).is_err());
    }

    #[test]
    fn projection_reproduces_constants_and_hats() {
        let ops = unit(5, 1.0, BoundaryKind::Neumann);
        let c = ops.l2_project(|_| 1.0);
        assert!(c.iter().all(|v| (v - 1.0).abs() < 1e-12));
        // any member of V_h: the nodal interpolant of a linear function
        let lin = |p: Point<f64>| 2.0 * p[0] - 0.5 * p[1] + 0.25;
        let c = ops.l2_project(lin);
        let nodal = ops.interpolate(lin);
        for (a, b) in c.iter().zip(&nodal) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_residual_is_small() {
        let ops = unit(12, 1.0, BoundaryKind::Neumann);
        let f = |p: Point<f64>| (3.0 * p[0]).exp() * (PI * p[1]).cos();
        let b = ops.load_vector(f);
        let c = ops.l2_project(f);
        let r: Vec<f64> = ops.mass().mul_vec(&c).iter().zip(&b).map(|(x, y)| x - y).collect();
        let (rn, bn) = (crate::scalar::norm2(&r), crate::scalar::norm2(&b));
        assert!(rn <= 1e-10 * bn);
    }

    #[test]
    fn ah_of_zero_and_constants() {
        let ops = unit(4, 1.0, BoundaryKind::Neumann);
        assert!(ops.apply_ah(&vec![0.0; ops.dim()]).unwrap().iter().all(|&v| v == 0.0));
        let a1 = ops.apply_ah(&vec![1.0; ops.dim()]).unwrap();
        assert!(a1.iter().all(|v| v.abs() < 1e-12));
        assert!(ops.apply_ah(&[1.0]).is_err());
    }

    #[test]
    fn functionals_on_constants_and_zero() {
        let ops = unit(4, 1.0, BoundaryKind::Neumann);
        let ones = vec![1.0; ops.dim()];
        assert!((ops.phi1(&ones).unwrap() - 1.0).abs() < 1e-14);
        assert!((ops.phi2(&ones).unwrap() - 1.0).abs() < 1e-14);
        let zeros = vec![0.0; ops.dim()];
        assert_eq!(ops.phi1(&zeros).unwrap(), 0.0);
        assert_eq!(ops.phi2(&zeros).unwrap(), 0.0);
    }

    #[test]
    fn functionals_on_cosine_interpolant() {
        let ops = unit(32, 1.0, BoundaryKind::Neumann);
        let v = ops.interpolate(|p| (PI * p[0]).cos());
        assert!(ops.phi1(&v).unwrap().abs() <= 1e-3);
        assert!((ops.phi2(&v).unwrap() - 0.5).abs() <= 1e-2);
    }

    #[test]
    fn lumped_mass_is_diagonal_with_same_integrals() {
        let mesh = Mesh::<f64>::rect(3, 3, 1.0, 1.0).unwrap();
        let c = OperatorCoefficients::isotropic(1.0);
        let lumped =
            FemOperators::assemble_with(&mesh, c, BoundaryKind::Neumann, MassKind::Lumped).unwrap();
        let consistent = FemOperators::assemble(&mesh, c, BoundaryKind::Neumann).unwrap();
        assert_eq!(lumped.mass().bandwidth(), 0);
        for (a, b) in lumped.basis_integrals().iter().zip(consistent.basis_integrals()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    fn dense_ah(ops: &FemOperators<f64>) -> nalgebra::DMatrix<f64> {
        let n = ops.dim();
        let to_na = |a: &CsrMatrix<f64>| nalgebra::DMatrix::from_fn(n, n, |i, j| a.get(i, j));
        let m = to_na(ops.mass());
        let k = to_na(ops.stiffness());
        let mk = m.lu().solve(&k).unwrap();
        nalgebra::DMatrix::identity(n, n) * ops.shift() - mk
    }

    #[test]
    fn ah_matches_dense_oracle() {
        let mesh = Mesh::rect(5, 4, 1.5, 1.0).unwrap();
        let coeffs = OperatorCoefficients::isotropic(0.3).with_shift(-0.2).with_advection([0.4, -0.1]);
        for bc in [BoundaryKind::Neumann, BoundaryKind::Robin(2.0), BoundaryKind::Dirichlet] {
            let ops = FemOperators::assemble(&mesh, coeffs, bc).unwrap();
            let a = dense_ah(&ops);
            let v: Vec<f64> = (0..ops.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
            let want = &a * nalgebra::DVector::from_column_slice(&v);
            let got = ops.apply_ah(&v).unwrap();
            let scale = want.amax();
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w).abs() <= 1e-10 * scale, "{bc:?}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn pencil_eigenvalues_converge_to_laplacian() {
        // Neumann eigenvalues of -Δ on the unit square are π²(i²+j²)
        let exact = [PI * PI, PI * PI, 2.0 * PI * PI, 4.0 * PI * PI];
        let mut errors = Vec::new();
        for n in [4, 8, 16] {
            let basis = unit(n, 1.0, BoundaryKind::Neumann).modal_basis().unwrap();
            assert!(basis.rates[0].abs() < 1e-9);
            let err = exact
                .iter()
                .enumerate()
                .map(|(k, want)| ((-basis.rates[k + 1] - want) / want).abs())
                .fold(0.0, f64::max);
            errors.push(err);
        }
        assert!(errors[2] <= 0.02, "{errors:?}");
        let order = (errors[1] / errors[2]).log2();
        assert!(order >= 1.8, "order {order}, errors {errors:?}");

        // nalgebra oracle of the same pencil
        let ops = unit(6, 0.7, BoundaryKind::Neumann);
        let mut ev: Vec<f64> = dense_ah(&ops).complex_eigenvalues().iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        let basis = ops.modal_basis().unwrap();
        for (x, y) in basis.rates.iter().zip(&ev) {
            assert!((x - y).abs() <= 1e-9 * ev.last().unwrap().abs(), "{x} vs {y}");
        }
    }
}
