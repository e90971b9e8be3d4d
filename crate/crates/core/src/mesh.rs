//! Structured triangulations of a rectangle.

use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type Point<T> = [T; 2];

/// Triangulated rectangle `[0, L1] x [0, L2]`.
///
/// Nodes are numbered row-major (`k = j*(nx+1) + i` for grid point
/// `(i, j)`), each grid cell is split along its SW-NE diagonal and
/// triangles are stored counter-clockwise.
#[derive(Debug, Clone)]
pub struct Mesh<T> {
    pub nx: usize,
    pub ny: usize,
    pub lx: T,
    pub ly: T,
    pub nodes: Vec<Point<T>>,
    pub triangles: Vec<[usize; 3]>,
    /// Maximal edge length.
    pub h: T,
}

impl<T: Real> Mesh<T> {
    pub fn rect(nx: usize, ny: usize, lx: T, ly: T) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Mesh(format!(
                "subdivisions must be positive (nx={nx}, ny={ny})"
            )));
        }
        if !(lx > T::zero() && ly > T::zero()) || !lx.is_finite() || !ly.is_finite() {
            return Err(Error::Mesh(format!(
                "side lengths must be positive and finite (L1={lx}, L2={ly})"
            )));
        }
        let dx = lx / T::of_usize(nx);
        let dy = ly / T::of_usize(ny);
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                // endpoints pinned so the boundary coordinates are exact
                let x = if i == nx { lx } else { T::of_usize(i) * dx };
                let y = if j == ny { ly } else { T::of_usize(j) * dy };
                nodes.push([x, y]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (sw, se, nw, ne) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
                triangles.push([sw, se, ne]);
                triangles.push([sw, ne, nw]);
            }
        }
        let mut mesh = Self {
            nx,
            ny,
            lx,
            ly,
            nodes,
            triangles,
            h: T::zero(),
        };
        mesh.h = mesh
            .triangles
            .iter()
            .map(|t| mesh.longest_edge(t))
            .fold(T::zero(), T::max);
        Ok(mesh)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self, tri: &[usize; 3]) -> [Point<T>; 3] {
        [self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]]
    }

    /// Signed area, positive for counter-clockwise vertices.
    pub fn signed_area(&self, tri: &[usize; 3]) -> T {
        let [a, b, c] = self.vertices(tri);
        ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])) * T::of(0.5)
    }

    fn longest_edge(&self, tri: &[usize; 3]) -> T {
        let v = self.vertices(tri);
        (0..3)
            .map(|e| {
                let (p, q) = (v[e], v[(e + 1) % 3]);
                (p[0] - q[0]).hypot(p[1] - q[1])
            })
            .fold(T::zero(), T::max)
    }

    pub fn is_boundary_node(&self, k: usize) -> bool {
        let (i, j) = (k % (self.nx + 1), k / (self.nx + 1));
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    /// Boundary edges as node pairs, walking the perimeter.
    pub fn boundary_edges(&self) -> Vec<[usize; 2]> {
        let (nx, ny) = (self.nx, self.ny);
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut edges = Vec::with_capacity(2 * (nx + ny));
        for i in 0..nx {
            edges.push([id(i, 0), id(i + 1, 0)]);
            edges.push([id(i, ny), id(i + 1, ny)]);
        }
        for j in 0..ny {
            edges.push([id(0, j), id(0, j + 1)]);
            edges.push([id(nx, j), id(nx, j + 1)]);
        }
        edges
    }

    /// Plain-text listing: a `nodes <n>` block of `index x y` records followed
    /// by a `triangles <m>` block of `index a b c` records.
    pub fn write_listing<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "nodes {}", self.num_nodes())?;
        for (k, p) in self.nodes.iter().enumerate() {
            writeln!(w, "{k} {:.17e} {:.17e}", p[0], p[1])?;
        }
        writeln!(w, "triangles {}", self.num_triangles())?;
        for (k, t) in self.triangles.iter().enumerate() {
            writeln!(w, "{k} {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}
