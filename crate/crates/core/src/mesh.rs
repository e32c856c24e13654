//! Uniform tensor grids on intervals and rectangles.
//!
//! Nodes sit at `x_i = i * h` for `i = 0..=n_cells`. The unknowns of every
//! discrete problem live on the interior nodes only; boundary values are
//! identically zero (homogeneous Dirichlet data), so they are never stored.
//!
//! Interior nodes are numbered lexicographically with `x` running fastest:
//! `k = (j - 1) * (nx - 1) + (i - 1)`.

use std::sync::Arc;

use crate::error::{Error, Result};

/// A point in the domain. In 1D only the first coordinate is meaningful.
pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    extents: [f64; 2],
    n_cells: [usize; 2],
    h: [f64; 2],
}

impl Mesh {
    pub fn new(dim: usize, extents: &[f64], n_cells: &[usize]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidMesh(format!("dimension must be 1 or 2, got {dim}")));
        }
        if extents.len() != dim || n_cells.len() != dim {
            return Err(Error::InvalidMesh(format!(
                "expected {dim} extents and cell counts, got {} and {}",
                extents.len(),
                n_cells.len()
            )));
        }
        let mut e = [1.0; 2];
        let mut n = [1usize; 2];
        let mut h = [1.0; 2];
        for axis in 0..dim {
            if !(extents[axis].is_finite() && extents[axis] > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "extent along axis {axis} must be positive, got {}",
                    extents[axis]
                )));
            }
            if n_cells[axis] < 2 {
                return Err(Error::InvalidMesh(format!(
                    "need at least 2 cells along axis {axis} to have an interior node, got {}",
                    n_cells[axis]
                )));
            }
            e[axis] = extents[axis];
            n[axis] = n_cells[axis];
            h[axis] = extents[axis] / n_cells[axis] as f64;
        }
        Ok(Self { dim, extents: e, n_cells: n, h })
    }

    /// `(0,1)` split into `n` cells.
    pub fn unit_1d(n: usize) -> Result<Self> {
        Self::new(1, &[1.0], &[n])
    }

    /// `(0,1)²` split into `nx × ny` cells.
    pub fn unit_2d(nx: usize, ny: usize) -> Result<Self> {
        Self::new(2, &[1.0, 1.0], &[nx, ny])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dim]
    }

    pub fn n_cells(&self) -> &[usize] {
        &self.n_cells[..self.dim]
    }

    pub fn h(&self) -> &[f64] {
        &self.h[..self.dim]
    }

    /// Interior nodes per axis; 1 along the unused axis in 1D.
    pub fn interior_shape(&self) -> [usize; 2] {
        let nx = self.n_cells[0] - 1;
        let ny = if self.dim == 2 { self.n_cells[1] - 1 } else { 1 };
        [nx, ny]
    }

    pub fn n_interior(&self) -> usize {
        let [nx, ny] = self.interior_shape();
        nx * ny
    }

    /// Total number of grid nodes, boundary included.
    pub fn n_nodes(&self) -> usize {
        match self.dim {
            1 => self.n_cells[0] + 1,
            _ => (self.n_cells[0] + 1) * (self.n_cells[1] + 1),
        }
    }

    /// Grid coordinates `(i, j)` of a global node id.
    pub fn grid_of_node(&self, node: usize) -> (usize, usize) {
        let stride = self.n_cells[0] + 1;
        (node % stride, node / stride)
    }

    pub fn node_of_grid(&self, i: usize, j: usize) -> usize {
        j * (self.n_cells[0] + 1) + i
    }

    pub fn is_boundary_grid(&self, i: usize, j: usize) -> bool {
        let on_x = i == 0 || i == self.n_cells[0];
        let on_y = self.dim == 2 && (j == 0 || j == self.n_cells[1]);
        on_x || on_y
    }

    /// Interior unknown index of grid node `(i, j)`, `None` on the boundary.
    pub fn interior_index(&self, i: usize, j: usize) -> Option<usize> {
        if self.is_boundary_grid(i, j) {
            return None;
        }
        let [nx, _] = self.interior_shape();
        let jj = if self.dim == 2 { j - 1 } else { 0 };
        Some(jj * nx + (i - 1))
    }

    /// Grid coordinates of interior unknown `k`.
    pub fn grid_of_interior(&self, k: usize) -> (usize, usize) {
        let [nx, _] = self.interior_shape();
        let i = k % nx + 1;
        let j = if self.dim == 2 { k / nx + 1 } else { 0 };
        (i, j)
    }

    pub fn grid_coords(&self, i: usize, j: usize) -> Point {
        [i as f64 * self.h[0], if self.dim == 2 { j as f64 * self.h[1] } else { 0.0 }]
    }

    /// Coordinates of interior unknown `k`.
    pub fn interior_coords(&self, k: usize) -> Point {
        let (i, j) = self.grid_of_interior(k);
        self.grid_coords(i, j)
    }

    /// Global node ids of the interior nodes, in unknown order.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.n_interior())
            .map(|k| {
                let (i, j) = self.grid_of_interior(k);
                self.node_of_grid(i, j)
            })
            .collect()
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&node| {
                let (i, j) = self.grid_of_node(node);
                self.is_boundary_grid(i, j)
            })
            .collect()
    }

    /// Lumped quadrature weight carried by every interior node: `h` or `hx·hy`.
    pub fn quad_weight(&self) -> f64 {
        self.h().iter().product()
    }

    pub fn quad_weights(&self) -> Vec<f64> {
        vec![self.quad_weight(); self.n_interior()]
    }

    pub fn volume(&self) -> f64 {
        self.extents().iter().product()
    }

    /// True when `p` lies in the open domain.
    pub fn contains_strictly(&self, p: &Point) -> bool {
        (0..self.dim).all(|a| p[a].is_finite() && p[a] > 0.0 && p[a] < self.extents[a])
    }

    pub fn n_cells_total(&self) -> usize {
        self.n_cells().iter().product()
    }

    /// Linear index of cell `(ci, cj)`, x fastest.
    pub fn cell_index(&self, ci: usize, cj: usize) -> usize {
        cj * self.n_cells[0] + ci
    }

    /// Lumped L¹ norm of interior nodal values.
    pub fn l1(&self, values: &[f64]) -> f64 {
        self.quad_weight() * values.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn linf(&self, values: &[f64]) -> f64 {
        values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Lumped L² inner product `Σ w_j a_j b_j`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.quad_weight() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }
}

/// Interior nodal values on a mesh. Boundary values are implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl NodalField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_interior() {
            return Err(Error::DimensionMismatch { expected: mesh.n_interior(), found: values.len() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at node {k}")));
        }
        Ok(Self { mesh, values })
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let n = mesh.n_interior();
        Self { mesh, values: vec![0.0; n] }
    }

    pub fn constant(mesh: Arc<Mesh>, c: f64) -> Self {
        let n = mesh.n_interior();
        Self { mesh, values: vec![c; n] }
    }

    /// Samples `f` at the interior nodes.
    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(Point) -> f64) -> Result<Self> {
        let values = (0..mesh.n_interior()).map(|k| f(mesh.interior_coords(k))).collect();
        Self::new(mesh, values)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn l1_norm(&self) -> f64 {
        self.mesh.l1(&self.values)
    }

    pub fn linf_norm(&self) -> f64 {
        self.mesh.linf(&self.values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { mesh: self.mesh.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise combination with another field on the same mesh.
    pub fn zip_with(&self, other: &NodalField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_mesh(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { mesh: self.mesh.clone(), values })
    }

    pub fn sub(&self, other: &NodalField) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn l1_distance(&self, other: &NodalField) -> Result<f64> {
        self.check_same_mesh(other)?;
        Ok(self.mesh.quad_weight()
            * self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    pub fn linf_distance(&self, other: &NodalField) -> Result<f64> {
        self.check_same_mesh(other)?;
        Ok(self.values.iter().zip(&other.values).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Lumped L² pairing with another field.
    pub fn inner(&self, other: &NodalField) -> Result<f64> {
        self.check_same_mesh(other)?;
        Ok(self.mesh.inner(&self.values, &other.values))
    }

    pub(crate) fn check_same_mesh(&self, other: &NodalField) -> Result<()> {
        if Arc::ptr_eq(&self.mesh, &other.mesh) || *self.mesh == *other.mesh {
            Ok(())
        } else {
            Err(Error::GridMismatch("fields live on different meshes".into()))
        }
    }
}

pub fn l1_norm(f: &NodalField) -> f64 {
    f.l1_norm()
}

pub fn linf_norm(f: &NodalField) -> f64 {
    f.linf_norm()
}
