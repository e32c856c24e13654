//! Discrete operators on uniform grids.
//!
//! The stiffness operator is the flux-form stencil for `−div(M ∇u)` in
//! finite-difference scaling (`m/h²·[−1, 2, −1]` in 1D). Diagonal couplings
//! use harmonic face averages of the two adjacent cells; mixed derivatives use
//! centered differences with node-averaged off-diagonal coefficients. With
//! diagonal `M` the result is an M-matrix.
//!
//! The time-stepping and elliptic systems work with the mass-weighted form
//! `D·A`, which pairs directly against the load vector of a measure.

mod linsolve;
mod sparse;

use std::sync::Arc;

pub use linsolve::{solve_linear, LinearSolver, SolveStats, SolverKind, DEFAULT_TOLERANCE, MAX_ITERATIONS};
pub use sparse::SparseOperator;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, NodalField};
use crate::model::{check_ellipticity, CoefficientField, MeasureData};

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

pub fn assemble_stiffness(mesh: &Mesh, m: &CoefficientField) -> Result<SparseOperator> {
    m.check_mesh(mesh)?;
    check_ellipticity(m)?;
    match mesh.dim() {
        1 => Ok(stiffness_1d(mesh, m)),
        _ => Ok(stiffness_2d(mesh, m)),
    }
}

fn stiffness_1d(mesh: &Mesh, m: &CoefficientField) -> SparseOperator {
    let n = mesh.n_interior();
    let h = mesh.h()[0];
    let inv_h2 = 1.0 / (h * h);
    let mut t = Vec::with_capacity(3 * n);
    for k in 0..n {
        let i = k + 1;
        let left = m.cell_tensor(i - 1)[0][0];
        let right = m.cell_tensor(i)[0][0];
        t.push((k, k, (left + right) * inv_h2));
        if k > 0 {
            t.push((k, k - 1, -left * inv_h2));
        }
        if k + 1 < n {
            t.push((k, k + 1, -right * inv_h2));
        }
    }
    SparseOperator::from_triplets(n, t).expect("stencil indices in range")
}

/// Arithmetic average of an entry over the cells touching grid node `(i, j)`.
fn nodal_average(mesh: &Mesh, m: &CoefficientField, i: usize, j: usize, entry: (usize, usize)) -> f64 {
    let [ncx, ncy] = [mesh.n_cells()[0], mesh.n_cells()[1]];
    let mut sum = 0.0;
    let mut count = 0usize;
    for cj in [j.wrapping_sub(1), j] {
        for ci in [i.wrapping_sub(1), i] {
            if ci < ncx && cj < ncy {
                sum += m.cell_tensor(mesh.cell_index(ci, cj))[entry.0][entry.1];
                count += 1;
            }
        }
    }
    sum / count as f64
}

fn stiffness_2d(mesh: &Mesh, m: &CoefficientField) -> SparseOperator {
    let n = mesh.n_interior();
    let (hx, hy) = (mesh.h()[0], mesh.h()[1]);
    let (ihx2, ihy2, ihxy4) = (1.0 / (hx * hx), 1.0 / (hy * hy), 1.0 / (4.0 * hx * hy));
    let cell = |ci: usize, cj: usize| m.cell_tensor(mesh.cell_index(ci, cj));
    let mixed = !m.is_diagonal();
    let mut t = Vec::with_capacity(if mixed { 9 } else { 5 } * n);
    for k in 0..n {
        let (i, j) = mesh.grid_of_interior(k);
        // faces: east/west edges are shared by the cells below and above the edge
        let kx_w = harmonic(cell(i - 1, j - 1)[0][0], cell(i - 1, j)[0][0]);
        let kx_e = harmonic(cell(i, j - 1)[0][0], cell(i, j)[0][0]);
        let ky_s = harmonic(cell(i - 1, j - 1)[1][1], cell(i, j - 1)[1][1]);
        let ky_n = harmonic(cell(i - 1, j)[1][1], cell(i, j)[1][1]);
        t.push((k, k, (kx_w + kx_e) * ihx2 + (ky_s + ky_n) * ihy2));
        let mut couple = |gi: usize, gj: usize, v: f64| {
            if let Some(q) = mesh.interior_index(gi, gj) {
                t.push((k, q, v));
            }
        };
        couple(i - 1, j, -kx_w * ihx2);
        couple(i + 1, j, -kx_e * ihx2);
        couple(i, j - 1, -ky_s * ihy2);
        couple(i, j + 1, -ky_n * ihy2);
        if mixed {
            // −∂x(M_xy ∂y u) − ∂y(M_yx ∂x u), both centered; the corner entry
            // (σ, τ) is −στ [b(i+σ, j) + c(i, j+τ)] / (4 hx hy)
            for (sx, sy) in [(-1i64, -1i64), (1, -1), (-1, 1), (1, 1)] {
                let gi = (i as i64 + sx) as usize;
                let gj = (j as i64 + sy) as usize;
                let b = nodal_average(mesh, m, gi, j, (0, 1));
                let c = nodal_average(mesh, m, i, gj, (1, 0));
                let sign = (sx * sy) as f64;
                couple(gi, gj, -sign * (b + c) * ihxy4);
            }
        }
    }
    SparseOperator::from_triplets(n, t).expect("stencil indices in range")
}

/// Diagonal lumped mass: the quadrature weight of every interior node.
pub fn assemble_mass(mesh: &Mesh) -> SparseOperator {
    SparseOperator::from_diagonal(&mesh.quad_weights())
}

/// Per-node functionals of a measure: `b_j = ⟨μ, φ_j⟩` for the hat function `φ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadVector(pub Vec<f64>);

impl LoadVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

/// Splits a coordinate into its cell index and the offset within the cell.
fn locate(x: f64, h: f64, n_cells: usize) -> (usize, f64) {
    let s = x / h;
    let c = (s.floor() as usize).min(n_cells - 1);
    (c, s - c as f64)
}

pub fn discretize_measure(mesh: &Mesh, mu: &MeasureData) -> Result<LoadVector> {
    mu.validate(mesh)?;
    let mut b = vec![0.0; mesh.n_interior()];
    for atom in &mu.atoms {
        let (cx, tx) = locate(atom.location[0], mesh.h()[0], mesh.n_cells()[0]);
        if mesh.dim() == 1 {
            for (i, phi) in [(cx, 1.0 - tx), (cx + 1, tx)] {
                if let Some(k) = mesh.interior_index(i, 0) {
                    b[k] += atom.weight * phi;
                }
            }
        } else {
            let (cy, ty) = locate(atom.location[1], mesh.h()[1], mesh.n_cells()[1]);
            for (j, py) in [(cy, 1.0 - ty), (cy + 1, ty)] {
                for (i, px) in [(cx, 1.0 - tx), (cx + 1, tx)] {
                    if let Some(k) = mesh.interior_index(i, j) {
                        b[k] += atom.weight * px * py;
                    }
                }
            }
        }
    }
    if let Some(density) = &mu.density {
        let w = mesh.quad_weight();
        for (bk, rho) in b.iter_mut().zip(density) {
            *bk += w * rho;
        }
    }
    Ok(LoadVector(b))
}

/// Load vector of a nodal density `g`: `D g`.
pub fn density_load(g: &NodalField) -> LoadVector {
    let w = g.mesh().quad_weight();
    LoadVector(g.values().iter().map(|v| w * v).collect())
}

/// Everything the solvers need about the spatial discretization.
#[derive(Debug, Clone)]
pub struct SpatialOperators {
    mesh: Arc<Mesh>,
    coefficient: CoefficientField,
    stiffness: SparseOperator,
    weak: SparseOperator,
    solver_kind: SolverKind,
}

impl SpatialOperators {
    pub fn new(mesh: Arc<Mesh>, coefficient: &CoefficientField) -> Result<Self> {
        let stiffness = assemble_stiffness(&mesh, coefficient)?;
        let weak = stiffness.scaled(mesh.quad_weight());
        Ok(Self { mesh, coefficient: coefficient.clone(), stiffness, weak, solver_kind: SolverKind::Auto })
    }

    pub fn with_solver(mut self, kind: SolverKind) -> Self {
        self.solver_kind = kind;
        self
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn coefficient(&self) -> &CoefficientField {
        &self.coefficient
    }

    pub fn solver_kind(&self) -> SolverKind {
        self.solver_kind
    }

    /// Finite-difference scaled operator.
    pub fn stiffness(&self) -> &SparseOperator {
        &self.stiffness
    }

    /// Mass-weighted operator `D·A`.
    pub fn weak_stiffness(&self) -> &SparseOperator {
        &self.weak
    }

    pub fn weight(&self) -> f64 {
        self.mesh.quad_weight()
    }

    /// Operators for `M*`.
    pub fn adjoint(&self) -> Result<Self> {
        Ok(Self::new(self.mesh.clone(), &self.coefficient.transpose())?.with_solver(self.solver_kind))
    }

    /// `D/dt + D·A`, the backward Euler system matrix.
    pub fn step_matrix(&self, dt: f64) -> SparseOperator {
        self.weak.plus_diagonal(&vec![self.weight() / dt; self.mesh.n_interior()])
    }

    pub fn elliptic_solver(&self) -> Result<LinearSolver> {
        LinearSolver::new(self.weak.clone(), self.solver_kind)
    }

    pub fn step_solver(&self, dt: f64) -> Result<LinearSolver> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidTimeGrid(format!("dt must be positive, got {dt}")));
        }
        LinearSolver::new(self.step_matrix(dt), self.solver_kind)
    }
}
