//! Backward Euler marches for the forward and retrograde problems, and the
//! elliptic steady state.
//!
//! Forward step: `(D/dt + D·A) uⁿ = D uⁿ⁻¹/dt + b_μ`.
//! Retrograde step (transpose of the forward map), from `w^N = 0`:
//! `(D/dt + D·Aᵀ) wᵐ = D wᵐ⁺¹/dt + D gᵐ⁺¹`, where `gⁿ` is the dual source on
//! the forward step ending at `tₙ`.

use std::sync::Arc;

use crate::assembly::{density_load, discretize_measure, LinearSolver, LoadVector, SolverKind, SparseOperator, SpatialOperators};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, NodalField};
use crate::model::{CoefficientField, MeasureData};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidTimeGrid(format!("dt must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidTimeGrid("need at least one step".into()));
        }
        Ok(Self { dt, n_steps })
    }

    /// Grid reaching `t_end` with `round(t_end/dt)` steps.
    pub fn until(dt: f64, t_end: f64) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidTimeGrid(format!("t_end must be positive, got {t_end}")));
        }
        Self::new(dt, ((t_end / dt).round() as usize).max(1))
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn t_end(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn time(&self, step: usize) -> f64 {
        self.dt * step as f64
    }

    /// Every step up to 1000 steps, otherwise about 1000 evenly spaced checkpoints.
    pub fn default_stride(&self) -> usize {
        if self.n_steps <= 1000 {
            1
        } else {
            self.n_steps.div_ceil(1000)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub l1: f64,
    pub linf: f64,
    pub l1_dist_ref: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    stride: usize,
    snapshots: Vec<(usize, NodalField)>,
    diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.snapshots[0].1.mesh()
    }

    /// Stored `(step, state)` pairs in increasing step order.
    pub fn snapshots(&self) -> &[(usize, NodalField)] {
        &self.snapshots
    }

    /// One entry per time level `0..=n_steps`, regardless of the stride.
    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.diagnostics
    }

    pub fn first(&self) -> &NodalField {
        &self.snapshots[0].1
    }

    pub fn last(&self) -> &NodalField {
        &self.snapshots[self.snapshots.len() - 1].1
    }

    pub fn state(&self, step: usize) -> Option<&NodalField> {
        self.snapshots.binary_search_by_key(&step, |(s, _)| *s).ok().map(|p| &self.snapshots[p].1)
    }

    /// True when every time level is stored.
    pub fn is_complete(&self) -> bool {
        self.snapshots.len() == self.grid.n_steps + 1
    }
}

/// Accumulates states and diagnostics while marching.
struct Recorder {
    grid: TimeGrid,
    stride: usize,
    reference: Option<NodalField>,
    snapshots: Vec<(usize, NodalField)>,
    diagnostics: Vec<StepDiagnostics>,
}

impl Recorder {
    fn new(grid: TimeGrid, stride: usize, reference: Option<NodalField>) -> Self {
        Self { grid, stride: stride.max(1), reference, snapshots: Vec::new(), diagnostics: Vec::new() }
    }

    fn record(&mut self, step: usize, field: &NodalField) -> Result<()> {
        let l1_dist_ref = match &self.reference {
            Some(r) => Some(field.l1_distance(r)?),
            None => None,
        };
        self.diagnostics.push(StepDiagnostics {
            step,
            t: self.grid.time(step),
            l1: field.l1_norm(),
            linf: field.linf_norm(),
            l1_dist_ref,
        });
        if step % self.stride == 0 || step == self.grid.n_steps || step == 0 {
            self.snapshots.push((step, field.clone()));
        }
        Ok(())
    }

    fn finish(mut self) -> Trajectory {
        self.snapshots.sort_by_key(|(s, _)| *s);
        self.diagnostics.sort_by_key(|d| d.step);
        Trajectory { grid: self.grid, stride: self.stride, snapshots: self.snapshots, diagnostics: self.diagnostics }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrajectoryOptions {
    pub stride: Option<usize>,
    /// Field the `l1_dist_ref` diagnostic is measured against.
    pub reference: Option<NodalField>,
}

/// One backward Euler step for a fixed `dt`, with the factorization (or
/// preconditioner) prepared once.
#[derive(Debug, Clone)]
pub struct ParabolicStepper {
    mesh: Arc<Mesh>,
    solver: LinearSolver,
    load: Vec<f64>,
    mass_over_dt: f64,
}

impl ParabolicStepper {
    pub fn new(ops: &SpatialOperators, load: &LoadVector, dt: f64) -> Result<Self> {
        if load.values().len() != ops.mesh().n_interior() {
            return Err(Error::DimensionMismatch { expected: ops.mesh().n_interior(), found: load.values().len() });
        }
        Ok(Self {
            mesh: ops.mesh().clone(),
            solver: ops.step_solver(dt)?,
            load: load.values().to_vec(),
            mass_over_dt: ops.weight() / dt,
        })
    }

    /// Raw step on interior values: solves `K u⁺ = (D/dt) u + b + extra`.
    pub fn step_values(&self, u: &[f64], extra: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut rhs: Vec<f64> = u.iter().zip(&self.load).map(|(ui, bi)| self.mass_over_dt * ui + bi).collect();
        if let Some(e) = extra {
            rhs.iter_mut().zip(e).for_each(|(r, x)| *r += x);
        }
        Ok(self.solver.solve(&rhs, Some(u))?.0)
    }

    pub fn step(&self, u: &NodalField) -> Result<NodalField> {
        if **u.mesh() != *self.mesh {
            return Err(Error::GridMismatch("state and stepper meshes differ".into()));
        }
        NodalField::new(self.mesh.clone(), self.step_values(u.values(), None)?)
    }
}

/// Single step `(D/dt + A) u⁺ = D u/dt + b` with explicitly supplied operators.
/// `a` is the mass-weighted stiffness and `d` the diagonal mass.
pub fn step_parabolic(
    state: &NodalField,
    a: &SparseOperator,
    d: &SparseOperator,
    b: &LoadVector,
    dt: f64,
) -> Result<NodalField> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidTimeGrid(format!("dt must be positive, got {dt}")));
    }
    let n = state.len();
    if a.dim() != n || d.dim() != n || b.values().len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: a.dim() });
    }
    let mass = d.diagonal();
    let k = a.plus_diagonal(&mass.iter().map(|m| m / dt).collect::<Vec<_>>());
    let rhs: Vec<f64> = state.values().iter().zip(&mass).zip(b.values()).map(|((u, m), bi)| m * u / dt + bi).collect();
    let solver = LinearSolver::new(k, SolverKind::Auto)?;
    let (x, _) = solver.solve(&rhs, Some(state.values()))?;
    NodalField::new(state.mesh().clone(), x)
}

pub fn solve_elliptic_with(ops: &SpatialOperators, load: &LoadVector) -> Result<NodalField> {
    let (x, _) = ops.elliptic_solver()?.solve(load.values(), None)?;
    NodalField::new(ops.mesh().clone(), x)
}

/// Steady state `D·A v = b_μ`.
pub fn solve_elliptic(mesh: Arc<Mesh>, m: &CoefficientField, mu: &MeasureData) -> Result<NodalField> {
    let ops = SpatialOperators::new(mesh.clone(), m)?;
    let load = discretize_measure(&mesh, mu)?;
    solve_elliptic_with(&ops, &load)
}

pub fn solve_parabolic_with(
    ops: &SpatialOperators,
    load: &LoadVector,
    u0: &NodalField,
    grid: TimeGrid,
    options: &TrajectoryOptions,
) -> Result<Trajectory> {
    if **u0.mesh() != **ops.mesh() {
        return Err(Error::GridMismatch("initial datum lives on another mesh".into()));
    }
    let stepper = ParabolicStepper::new(ops, load, grid.dt())?;
    let stride = options.stride.unwrap_or_else(|| grid.default_stride());
    let mut rec = Recorder::new(grid, stride, options.reference.clone());
    let mut u = u0.clone();
    rec.record(0, &u)?;
    for n in 1..=grid.n_steps() {
        u = stepper.step(&u)?;
        rec.record(n, &u)?;
    }
    Ok(rec.finish())
}

pub fn solve_parabolic(
    mesh: Arc<Mesh>,
    m: &CoefficientField,
    mu: &MeasureData,
    u0: &NodalField,
    grid: TimeGrid,
) -> Result<Trajectory> {
    let ops = SpatialOperators::new(mesh.clone(), m)?;
    let load = discretize_measure(&mesh, mu)?;
    solve_parabolic_with(&ops, &load, u0, grid, &TrajectoryOptions::default())
}

/// Retrograde march with operators `adjoint_ops` (assembled from `M*`).
/// `g[n-1]` is the dual source on the forward step `(t_{n-1}, t_n]`.
pub fn solve_retrograde_with(
    adjoint_ops: &SpatialOperators,
    g: &[NodalField],
    grid: TimeGrid,
    options: &TrajectoryOptions,
) -> Result<Trajectory> {
    if g.len() != grid.n_steps() {
        return Err(Error::DimensionMismatch { expected: grid.n_steps(), found: g.len() });
    }
    let mesh = adjoint_ops.mesh().clone();
    for gn in g {
        if **gn.mesh() != *mesh {
            return Err(Error::GridMismatch("dual source lives on another mesh".into()));
        }
    }
    let zero_load = LoadVector(vec![0.0; mesh.n_interior()]);
    let stepper = ParabolicStepper::new(adjoint_ops, &zero_load, grid.dt())?;
    let stride = options.stride.unwrap_or_else(|| grid.default_stride());
    let mut rec = Recorder::new(grid, stride, options.reference.clone());
    let mut w = NodalField::zeros(mesh.clone());
    rec.record(grid.n_steps(), &w)?;
    for m in (0..grid.n_steps()).rev() {
        let source = density_load(&g[m]);
        w = NodalField::new(mesh.clone(), stepper.step_values(w.values(), Some(source.values()))?)?;
        rec.record(m, &w)?;
    }
    Ok(rec.finish())
}

pub fn solve_retrograde(
    mesh: Arc<Mesh>,
    m: &CoefficientField,
    g: &[NodalField],
    grid: TimeGrid,
) -> Result<Trajectory> {
    let ops = SpatialOperators::new(mesh, &m.transpose())?;
    solve_retrograde_with(&ops, g, grid, &TrajectoryOptions::default())
}

/// Green's function of `−u'' = δ_y` on `(0,1)` with zero boundary values.
pub fn green_1d(x: f64, y: f64) -> f64 {
    if x <= y {
        x * (1.0 - y)
    } else {
        y * (1.0 - x)
    }
}

/// Truncated eigen-expansion of the solution of `u_t − u_xx = δ_{x0}`, `u(0) = 0`
/// on `(0,1)`, using the first `n_terms` modes.
pub fn spectral_oracle_1d(x0: f64, t: f64, x: f64, n_terms: usize) -> f64 {
    use std::f64::consts::PI;
    (1..=n_terms)
        .map(|n| {
            let k = n as f64 * PI;
            2.0 * (k * x0).sin() * (k * x).sin() * (-(-(k * k) * t).exp_m1()) / (k * k)
        })
        .sum()
}

/// The same series with the tail below `1e-8`.
///
/// The undamped part of the series sums to `green_1d(x, x0)` exactly, so only
/// the exponentially damped remainder is summed, until the remaining terms
/// are bounded by `2 e^{−(Nπ)² t} / (π² N) < 1e-8`.
pub fn spectral_oracle_1d_auto(x0: f64, t: f64, x: f64) -> f64 {
    use std::f64::consts::PI;
    if t <= 0.0 {
        return 0.0;
    }
    let mut damped = 0.0;
    let mut n = 1usize;
    loop {
        let k = n as f64 * PI;
        damped += 2.0 * (k * x0).sin() * (k * x).sin() * (-(k * k) * t).exp() / (k * k);
        let tail = 2.0 * (-(k * k) * t).exp() / (PI * PI * n as f64);
        if tail < 1e-8 {
            break;
        }
        n += 1;
    }
    green_1d(x, x0) - damped
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_mass;
    use std::f64::consts::PI;

    fn unit(n: usize) -> Arc<Mesh> {
        Arc::new(Mesh::unit_1d(n).unwrap())
    }

    fn laplace(dim: usize) -> CoefficientField {
        CoefficientField::scalar(dim, 1.0).unwrap()
    }

    fn discrete_eigenvalue(h: f64) -> f64 {
        2.0 / (h * h) * (1.0 - (PI * h).cos())
    }

    #[test]
    fn time_grid_validation() {
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert!(TimeGrid::new(0.1, 0).is_err());
        let g = TimeGrid::until(0.1, 1.0).unwrap();
        assert_eq!(g.n_steps(), 10);
        assert!((g.t_end() - 1.0).abs() < 1e-15);
        assert_eq!(TimeGrid::new(1e-3, 5000).unwrap().default_stride(), 5);
    }

    #[test]
    fn elliptic_point_source_matches_green() {
        let mesh = unit(4);
        let v = solve_elliptic(mesh, &laplace(1), &MeasureData::dirac([0.5, 0.0], 1.0)).unwrap();
        for (a, b) in v.values().iter().zip([0.125, 0.25, 0.125]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn elliptic_zero_and_linearity() {
        let mesh = Arc::new(Mesh::unit_2d(6, 5).unwrap());
        let m = CoefficientField::matrix(2, [[1.5, 0.2], [0.2, 1.0]]).unwrap();
        let v0 = solve_elliptic(mesh.clone(), &m, &MeasureData::zero()).unwrap();
        assert!(v0.values().iter().all(|&x| x == 0.0));
        let mu = MeasureData::dirac([0.37, 0.61], 1.3).with_density(vec![0.5; mesh.n_interior()]);
        let v1 = solve_elliptic(mesh.clone(), &m, &mu).unwrap();
        let v2 = solve_elliptic(mesh, &m, &mu.scaled(2.0)).unwrap();
        let err = v2.sub(&v1.scale(2.0)).unwrap().linf_norm();
        assert!(err <= 1e-12 * v2.linf_norm(), "{err}");
    }

    #[test]
    fn steady_state_is_a_fixed_point() {
        let mesh = unit(16);
        let m = laplace(1);
        let mu = MeasureData::dirac([0.3, 0.0], 2.0);
        let v = solve_elliptic(mesh.clone(), &m, &mu).unwrap();
        let ops = SpatialOperators::new(mesh.clone(), &m).unwrap();
        let b = discretize_measure(&mesh, &mu).unwrap();
        for dt in [1e-4, 0.1, 10.0] {
            let u = step_parabolic(&v, ops.weak_stiffness(), &assemble_mass(&mesh), &b, dt).unwrap();
            assert!(u.linf_distance(&v).unwrap() <= 1e-12 * v.linf_norm());
        }
    }

    #[test]
    fn sine_mode_decays_by_exact_factor() {
        let mesh = unit(4);
        let h = 0.25;
        let dt = 0.01;
        let u = NodalField::from_fn(mesh.clone(), |p| (PI * p[0]).sin()).unwrap();
        let ops = SpatialOperators::new(mesh.clone(), &laplace(1)).unwrap();
        let zero = LoadVector(vec![0.0; 3]);
        let next = step_parabolic(&u, ops.weak_stiffness(), &assemble_mass(&mesh), &zero, dt).unwrap();
        let factor = 1.0 / (1.0 + discrete_eigenvalue(h) * dt);
        for (a, b) in next.values().iter().zip(u.values()) {
            assert!((a - factor * b).abs() < 1e-14);
        }
        let zero_state = NodalField::zeros(mesh.clone());
        let z = step_parabolic(&zero_state, ops.weak_stiffness(), &assemble_mass(&mesh), &zero, dt).unwrap();
        assert!(z.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn parabolic_trajectories() {
        let mesh = unit(8);
        let m = laplace(1);
        let grid = TimeGrid::new(0.05, 40).unwrap();
        let zero = NodalField::zeros(mesh.clone());
        let tr = solve_parabolic(mesh.clone(), &m, &MeasureData::zero(), &zero, grid).unwrap();
        assert!(tr.snapshots().iter().all(|(_, f)| f.linf_norm() == 0.0));
        assert_eq!(tr.first(), &zero);

        let mu = MeasureData::dirac([0.5, 0.0], 1.0);
        let tr = solve_parabolic(mesh.clone(), &m, &mu, &zero, grid).unwrap();
        assert!(tr.is_complete());
        for pair in tr.snapshots().windows(2) {
            assert!(pair[1].1.values().iter().zip(pair[0].1.values()).all(|(a, b)| a >= b));
        }

        let v = solve_elliptic(mesh.clone(), &m, &mu).unwrap();
        let tr = solve_parabolic(mesh, &m, &mu, &v, grid).unwrap();
        for (_, f) in tr.snapshots() {
            assert!(f.linf_distance(&v).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn retrograde_examples() {
        let mesh = unit(8);
        let m = laplace(1);
        let grid = TimeGrid::new(0.02, 30).unwrap();
        let zeros = vec![NodalField::zeros(mesh.clone()); 30];
        let w = solve_retrograde(mesh.clone(), &m, &zeros, grid).unwrap();
        assert!(w.snapshots().iter().all(|(_, f)| f.linf_norm() == 0.0));

        let g = vec![NodalField::constant(mesh.clone(), 1.0); 30];
        let w = solve_retrograde(mesh.clone(), &m, &g, grid).unwrap();
        assert_eq!(w.state(30).unwrap().linf_norm(), 0.0);
        // decreasing in forward time
        for pair in w.snapshots().windows(2) {
            assert!(pair[0].1.values().iter().zip(pair[1].1.values()).all(|(a, b)| a >= b));
        }
        // one backward step from zero: (D/dt + Aᵀ)⁻¹ D c
        let ops = SpatialOperators::new(mesh.clone(), &m.transpose()).unwrap();
        let k = ops.step_matrix(0.02);
        let expected = crate::assembly::solve_linear(&k, &vec![mesh.quad_weight(); 7]).unwrap();
        let got = w.state(29).unwrap();
        for (a, b) in got.values().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn retrograde_rejects_wrong_source_length() {
        let mesh = unit(4);
        let grid = TimeGrid::new(0.1, 3).unwrap();
        let g = vec![NodalField::zeros(mesh.clone()); 2];
        assert!(solve_retrograde(mesh, &laplace(1), &g, grid).is_err());
    }

    #[test]
    fn checkpoint_stride_keeps_final_state() {
        let mesh = unit(4);
        let grid = TimeGrid::new(0.01, 25).unwrap();
        let ops = SpatialOperators::new(mesh.clone(), &laplace(1)).unwrap();
        let load = discretize_measure(&mesh, &MeasureData::dirac([0.5, 0.0], 1.0)).unwrap();
        let opts = TrajectoryOptions { stride: Some(10), reference: None };
        let tr = solve_parabolic_with(&ops, &load, &NodalField::zeros(mesh), grid, &opts).unwrap();
        let steps: Vec<usize> = tr.snapshots().iter().map(|(s, _)| *s).collect();
        assert_eq!(steps, vec![0, 10, 20, 25]);
        assert_eq!(tr.diagnostics().len(), 26);
        assert!(!tr.is_complete());
    }

    #[test]
    fn spectral_oracle_limits() {
        assert!((spectral_oracle_1d_auto(0.5, 1e3, 0.5) - 0.25).abs() < 1e-12);
        // raw series, 10^5 terms: tail bound 2/(π² 10^5) ≈ 2e-6
        assert!((spectral_oracle_1d(0.5, 1e3, 0.5, 100_000) - 0.25).abs() < 3e-6);
        for x in [0.1, 0.5, 0.8] {
            assert_eq!(spectral_oracle_1d(0.3, 0.0, x, 50), 0.0);
            assert_eq!(spectral_oracle_1d_auto(0.3, 0.0, x), 0.0);
        }
        let mut prev = 0.0;
        for k in 1..40 {
            let t = 0.005 * k as f64;
            let u = spectral_oracle_1d_auto(0.3, t, 0.6);
            assert!(u >= prev);
            prev = u;
        }
    }

    #[test]
    fn spectral_forms_agree() {
        // at t = 0.05 the damped remainder is negligible after a few dozen modes,
        // so the raw sum is limited by its undamped tail only
        for x in [0.2, 0.5, 0.9] {
            let a = spectral_oracle_1d_auto(0.5, 0.05, x);
            let b = spectral_oracle_1d(0.5, 0.05, x, 200_000);
            assert!((a - b).abs() < 2e-6, "{a} {b}");
        }
    }
}
