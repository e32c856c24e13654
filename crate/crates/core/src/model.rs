//! Problem data: the coefficient matrix field, the measure source, and the
//! truncations `T_k` / `Θ_k` used by the entropy estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

/// A 2×2 coefficient matrix, row-major. In 1D only `[0][0]` is used.
pub type Tensor = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CoefficientKind {
    ConstantScalar(f64),
    ConstantMatrix(Tensor),
    /// One matrix per cell, cells numbered x-fastest.
    PerCellTable(Vec<Tensor>),
}

/// The matrix field `M(x)` together with its ellipticity constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    dim: usize,
    kind: CoefficientKind,
    alpha: f64,
}

impl CoefficientField {
    /// Builds a field and verifies ellipticity. When `alpha` is `None` the
    /// computed estimate is used; a declared `alpha` must not exceed it.
    pub fn new(dim: usize, kind: CoefficientKind, alpha: Option<f64>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidCoefficient(format!("dimension must be 1 or 2, got {dim}")));
        }
        if let CoefficientKind::PerCellTable(t) = &kind {
            if t.is_empty() {
                return Err(Error::InvalidCoefficient("empty per-cell table".into()));
            }
        }
        let mut field = Self { dim, kind, alpha: 0.0 };
        let estimate = check_ellipticity(&field)?;
        field.alpha = match alpha {
            None => estimate,
            Some(a) if !(a > 0.0) => {
                return Err(Error::InvalidCoefficient(format!("declared alpha must be positive, got {a}")))
            }
            Some(a) if a > estimate * (1.0 + 1e-12) => {
                return Err(Error::InvalidCoefficient(format!(
                    "declared alpha {a} exceeds the ellipticity estimate {estimate}"
                )))
            }
            Some(a) => a,
        };
        Ok(field)
    }

    pub fn scalar(dim: usize, m: f64) -> Result<Self> {
        Self::new(dim, CoefficientKind::ConstantScalar(m), None)
    }

    pub fn matrix(dim: usize, m: Tensor) -> Result<Self> {
        Self::new(dim, CoefficientKind::ConstantMatrix(m), None)
    }

    pub fn diagonal(mx: f64, my: f64) -> Result<Self> {
        Self::matrix(2, [[mx, 0.0], [0.0, my]])
    }

    pub fn per_cell(dim: usize, table: Vec<Tensor>) -> Result<Self> {
        Self::new(dim, CoefficientKind::PerCellTable(table), None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &CoefficientKind {
        &self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The full matrix on a cell. Constant kinds ignore the index.
    pub fn cell_tensor(&self, cell: usize) -> Tensor {
        let t = match &self.kind {
            CoefficientKind::ConstantScalar(m) => [[*m, 0.0], [0.0, *m]],
            CoefficientKind::ConstantMatrix(t) => *t,
            CoefficientKind::PerCellTable(table) => table[cell],
        };
        if self.dim == 1 {
            [[t[0][0], 0.0], [0.0, 0.0]]
        } else {
            t
        }
    }

    fn tensors(&self) -> Vec<Tensor> {
        match &self.kind {
            CoefficientKind::PerCellTable(table) => (0..table.len()).map(|c| self.cell_tensor(c)).collect(),
            _ => vec![self.cell_tensor(0)],
        }
    }

    /// Checks that a per-cell table matches the mesh.
    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.dim != mesh.dim() {
            return Err(Error::DimensionMismatch { expected: mesh.dim(), found: self.dim });
        }
        if let CoefficientKind::PerCellTable(t) = &self.kind {
            if t.len() != mesh.n_cells_total() {
                return Err(Error::DimensionMismatch { expected: mesh.n_cells_total(), found: t.len() });
            }
        }
        Ok(())
    }

    /// `M*`, the pointwise transpose.
    pub fn transpose(&self) -> Self {
        let tr = |t: &Tensor| [[t[0][0], t[1][0]], [t[0][1], t[1][1]]];
        let kind = match &self.kind {
            CoefficientKind::ConstantScalar(m) => CoefficientKind::ConstantScalar(*m),
            CoefficientKind::ConstantMatrix(t) => CoefficientKind::ConstantMatrix(tr(t)),
            CoefficientKind::PerCellTable(table) => CoefficientKind::PerCellTable(table.iter().map(tr).collect()),
        };
        Self { dim: self.dim, kind, alpha: self.alpha }
    }

    pub fn is_diagonal(&self) -> bool {
        self.dim == 1 || self.tensors().iter().all(|t| t[0][1] == 0.0 && t[1][0] == 0.0)
    }

    pub fn is_symmetric(&self) -> bool {
        self.dim == 1 || self.tensors().iter().all(|t| t[0][1] == t[1][0])
    }

    /// Multiplies every entry by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let sc = |t: &Tensor| [[c * t[0][0], c * t[0][1]], [c * t[1][0], c * t[1][1]]];
        let kind = match &self.kind {
            CoefficientKind::ConstantScalar(m) => CoefficientKind::ConstantScalar(c * m),
            CoefficientKind::ConstantMatrix(t) => CoefficientKind::ConstantMatrix(sc(t)),
            CoefficientKind::PerCellTable(table) => CoefficientKind::PerCellTable(table.iter().map(sc).collect()),
        };
        Self::new(self.dim, kind, None)
    }
}

/// Smallest eigenvalue of the symmetric part of `t` (closed form).
fn min_sym_eigenvalue(t: &Tensor) -> f64 {
    let a = t[0][0];
    let c = t[1][1];
    let b = 0.5 * (t[0][1] + t[1][0]);
    0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt()
}

/// Minimum of `ξ·Mξ / |ξ|²` over all cells and directions.
///
/// The probe directions (axes and diagonals) give an upper bound; in 2D the
/// closed-form smallest eigenvalue of the symmetric part makes the minimum
/// over all `ξ` exact, and the smaller of the two is returned.
pub fn check_ellipticity(m: &CoefficientField) -> Result<f64> {
    let mut estimate = f64::INFINITY;
    for t in m.tensors() {
        if t.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCoefficient("non-finite coefficient entry".into()));
        }
        if m.dim == 1 {
            estimate = estimate.min(t[0][0]);
            continue;
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let probes = [[1.0, 0.0], [0.0, 1.0], [s, s], [s, -s]];
        for xi in probes {
            let q = xi[0] * (t[0][0] * xi[0] + t[0][1] * xi[1]) + xi[1] * (t[1][0] * xi[0] + t[1][1] * xi[1]);
            estimate = estimate.min(q);
        }
        estimate = estimate.min(min_sym_eigenvalue(&t));
    }
    if estimate > 0.0 {
        Ok(estimate)
    } else {
        Err(Error::NonElliptic { estimate })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: Point,
    pub weight: f64,
}

impl Atom {
    pub fn at_1d(x: f64, weight: f64) -> Self {
        Self { location: [x, 0.0], weight }
    }

    pub fn at_2d(x: f64, y: f64, weight: f64) -> Self {
        Self { location: [x, y], weight }
    }
}

/// A finite signed measure: Dirac atoms plus a density sampled at the
/// interior nodes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasureData {
    pub atoms: Vec<Atom>,
    pub density: Option<Vec<f64>>,
}

impl MeasureData {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn dirac(location: Point, weight: f64) -> Self {
        Self { atoms: vec![Atom { location, weight }], density: None }
    }

    pub fn with_density(mut self, density: Vec<f64>) -> Self {
        self.density = Some(density);
        self
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        for a in &self.atoms {
            if !a.weight.is_finite() {
                return Err(Error::InvalidMeasure("non-finite atom weight".into()));
            }
            if !mesh.contains_strictly(&a.location) {
                return Err(Error::BoundaryAtom { location: a.location[..mesh.dim()].to_vec() });
            }
        }
        if let Some(d) = &self.density {
            if d.len() != mesh.n_interior() {
                return Err(Error::DimensionMismatch { expected: mesh.n_interior(), found: d.len() });
            }
            if d.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidMeasure("non-finite density value".into()));
            }
        }
        Ok(())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.atoms.iter().all(|a| a.weight >= 0.0)
            && self.density.as_ref().is_none_or(|d| d.iter().all(|&v| v >= 0.0))
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.iter().all(|a| a.weight == 0.0)
            && self.density.as_ref().map_or(true, |d| d.iter().all(|&v| v == 0.0))
    }

    /// `Σ w_atom + Σ h^d ρ_j`.
    pub fn signed_mass(&self, mesh: &Mesh) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| a.weight).sum();
        let density = self.density.as_ref().map_or(0.0, |d| mesh.quad_weight() * d.iter().sum::<f64>());
        atoms + density
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            atoms: self.atoms.iter().map(|a| Atom { location: a.location, weight: c * a.weight }).collect(),
            density: self.density.as_ref().map(|d| d.iter().map(|v| c * v).collect()),
        }
    }
}

/// `Σ|w_atom| + ‖ρ‖_{L¹}` with lumped quadrature.
pub fn total_variation(mu: &MeasureData, mesh: &Mesh) -> Result<f64> {
    mu.validate(mesh)?;
    let atoms: f64 = mu.atoms.iter().map(|a| a.weight.abs()).sum();
    let density = mu.density.as_ref().map_or(0.0, |d| mesh.l1(d));
    Ok(atoms + density)
}

/// Truncation at level `k`: `T_k(s) = max(-k, min(k, s))` and its primitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    k: f64,
}

impl Truncation {
    pub fn new(k: f64) -> Result<Self> {
        if k > 0.0 && k.is_finite() {
            Ok(Self { k })
        } else {
            Err(Error::InvalidTruncation(k))
        }
    }

    pub fn level(&self) -> f64 {
        self.k
    }

    pub fn clamp(&self, s: f64) -> f64 {
        s.clamp(-self.k, self.k)
    }

    /// `Θ_k(s) = ∫_0^s T_k`.
    pub fn primitive(&self, s: f64) -> f64 {
        let a = s.abs();
        if a <= self.k {
            0.5 * s * s
        } else {
            self.k * a - 0.5 * self.k * self.k
        }
    }

    /// `Σ_j w_j Θ_k(values_j)` on a mesh.
    pub fn integral(&self, mesh: &Mesh, values: &[f64]) -> f64 {
        mesh.quad_weight() * values.iter().map(|&v| self.primitive(v)).sum::<f64>()
    }
}

pub fn t_k(k: f64, s: f64) -> Result<f64> {
    Ok(Truncation::new(k)?.clamp(s))
}

pub fn theta_k(k: f64, s: f64) -> Result<f64> {
    Ok(Truncation::new(k)?.primitive(s))
}
