//! The duality pairing between the forward and retrograde marches, and the
//! ordering checks used by the comparison arguments.
//!
//! Transposing the forward affine map gives the exact discrete identity
//!
//! ```text
//! −⟨u⁰, w⁰⟩_D + Σ_{n=1..N} dt ⟨uⁿ, gⁿ⟩_D = Σ_{n=0..N−1} dt b_μ · wⁿ
//! ```
//!
//! so the residual vanishes up to the linear-solver error.

use serde::{Deserialize, Serialize};

use crate::assembly::{density_load, discretize_measure};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, NodalField};
use crate::model::MeasureData;
use crate::solvers::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub lhs_init_term: f64,
    pub lhs_bulk_term: f64,
    pub rhs_measure_term: f64,
    pub residual: f64,
    pub relative_residual: f64,
}

impl DualityReport {
    fn new(lhs_init_term: f64, lhs_bulk_term: f64, rhs_measure_term: f64) -> Self {
        let residual = lhs_init_term + lhs_bulk_term - rhs_measure_term;
        let scale = lhs_init_term.abs() + lhs_bulk_term.abs() + rhs_measure_term.abs();
        let relative_residual = if scale > 0.0 { residual.abs() / scale } else { residual.abs() };
        Self { lhs_init_term, lhs_bulk_term, rhs_measure_term, residual, relative_residual }
    }
}

/// Which dual states the measure term is paired with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairingConvention {
    /// `w⁰ … w^{N−1}`, the transpose of the forward march.
    #[default]
    Adjoint,
    /// `w¹ … w^N`. Not adjoint-consistent; used as a negative control.
    RightEndpoint,
}

fn check_trajectory(tr: &Trajectory, mesh: &Mesh, what: &str) -> Result<()> {
    if !tr.is_complete() {
        return Err(Error::GridMismatch(format!("{what} trajectory is thinned; the pairing needs every step")));
    }
    if **tr.mesh() != *mesh {
        return Err(Error::GridMismatch(format!("{what} trajectory lives on another mesh")));
    }
    Ok(())
}

pub fn duality_residual(
    u: &Trajectory,
    w: &Trajectory,
    u0: &NodalField,
    g: &[NodalField],
    mu: &MeasureData,
    mesh: &Mesh,
) -> Result<DualityReport> {
    duality_residual_with(u, w, u0, g, mu, mesh, PairingConvention::Adjoint)
}

pub fn duality_residual_with(
    u: &Trajectory,
    w: &Trajectory,
    u0: &NodalField,
    g: &[NodalField],
    mu: &MeasureData,
    mesh: &Mesh,
    convention: PairingConvention,
) -> Result<DualityReport> {
    check_trajectory(u, mesh, "forward")?;
    check_trajectory(w, mesh, "retrograde")?;
    if u.grid() != w.grid() {
        return Err(Error::GridMismatch("forward and retrograde time grids differ".into()));
    }
    let n_steps = u.grid().n_steps();
    let dt = u.grid().dt();
    if g.len() != n_steps {
        return Err(Error::DimensionMismatch { expected: n_steps, found: g.len() });
    }
    if **u0.mesh() != *mesh {
        return Err(Error::GridMismatch("initial datum lives on another mesh".into()));
    }
    let b = discretize_measure(mesh, mu)?;
    let states = |tr: &Trajectory, n: usize| tr.snapshots()[n].1.values().to_vec();

    let lhs_init_term = -mesh.inner(u0.values(), &states(w, 0));
    let mut lhs_bulk_term = 0.0;
    for n in 1..=n_steps {
        lhs_bulk_term += dt * mesh.inner(&states(u, n), g[n - 1].values());
    }
    let range = match convention {
        PairingConvention::Adjoint => 0..n_steps,
        PairingConvention::RightEndpoint => 1..n_steps + 1,
    };
    let rhs_measure_term: f64 = range.map(|n| dt * b.dot(&states(w, n))).sum();
    Ok(DualityReport::new(lhs_init_term, lhs_bulk_term, rhs_measure_term))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticDualityReport {
    /// `⟨v, g⟩_D`
    pub lhs: f64,
    /// `b_μ · z`
    pub rhs: f64,
    pub residual: f64,
    pub relative_residual: f64,
}

/// Residual of `⟨v, g⟩_D = b_μ · z` where `v` solves the problem with source
/// `μ` and `z` the transposed problem with density `g`.
pub fn elliptic_duality_residual(
    v: &NodalField,
    z: &NodalField,
    g: &NodalField,
    mu: &MeasureData,
    mesh: &Mesh,
) -> Result<EllipticDualityReport> {
    for (f, what) in [(v, "v"), (z, "z"), (g, "g")] {
        if **f.mesh() != *mesh {
            return Err(Error::GridMismatch(format!("{what} lives on another mesh")));
        }
    }
    let b = discretize_measure(mesh, mu)?;
    let lhs = density_load(g).dot(v.values());
    let rhs = b.dot(z.values());
    let residual = lhs - rhs;
    let scale = lhs.abs() + rhs.abs();
    let relative_residual = if scale > 0.0 { residual.abs() / scale } else { residual.abs() };
    Ok(EllipticDualityReport { lhs, rhs, residual, relative_residual })
}

pub const ORDERING_TOLERANCE: f64 = 1e-12;

/// Bound on the relative duality residual for an adjoint-consistent pair.
pub const DUALITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Equal,
    Below,
    Above,
    Incomparable,
}

/// Componentwise ordering of a candidate against a reference at every
/// stored checkpoint. Violations are reported as `(step, node)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderingVerdict {
    pub below: bool,
    pub above: bool,
    pub first_below_violation: Option<(usize, usize)>,
    pub first_above_violation: Option<(usize, usize)>,
}

impl OrderingVerdict {
    pub fn relation(&self) -> Relation {
        match (self.below, self.above) {
            (true, true) => Relation::Equal,
            (true, false) => Relation::Below,
            (false, true) => Relation::Above,
            (false, false) => Relation::Incomparable,
        }
    }
}

pub fn check_super_sub(candidate: &Trajectory, reference: &Trajectory) -> Result<OrderingVerdict> {
    check_super_sub_with_tol(candidate, reference, ORDERING_TOLERANCE)
}

pub fn check_super_sub_with_tol(candidate: &Trajectory, reference: &Trajectory, tol: f64) -> Result<OrderingVerdict> {
    if candidate.grid() != reference.grid() || candidate.snapshots().len() != reference.snapshots().len() {
        return Err(Error::GridMismatch("trajectories have different checkpoints".into()));
    }
    let mut verdict =
        OrderingVerdict { below: true, above: true, first_below_violation: None, first_above_violation: None };
    for ((step, a), (step_b, b)) in candidate.snapshots().iter().zip(reference.snapshots()) {
        if step != step_b {
            return Err(Error::GridMismatch("trajectories have different checkpoints".into()));
        }
        a.check_same_mesh(b)?;
        for (node, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
            if verdict.below && *x > y + tol {
                verdict.below = false;
                verdict.first_below_violation = Some((*step, node));
            }
            if verdict.above && *x < y - tol {
                verdict.above = false;
                verdict.first_above_violation = Some((*step, node));
            }
        }
    }
    Ok(verdict)
}
