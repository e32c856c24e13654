//! Long-time behaviour: march `u` toward the steady state `v`, measure
//! `‖uⁿ − v‖_{L¹}`, fit the exponential decay rate, and check the monotone
//! and bracketing structure of the approach.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{discretize_measure, LoadVector, SpatialOperators};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, NodalField};
use crate::model::{CoefficientField, MeasureData};
use crate::solvers::{solve_elliptic_with, ParabolicStepper};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const INVERSE_ITERATION_TOLERANCE: f64 = 1e-10;
pub const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ToleranceReached,
    HorizonReached,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub t: f64,
    pub l1_dist: f64,
    pub linf_dist: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    pub points: Vec<DecayPoint>,
    /// Least-squares decay rate over the final decade; `None` when the curve
    /// is too short to fit (e.g. the start is already steady).
    pub fitted_rate: Option<f64>,
    /// `log(1 + λ₁ dt)/dt`; `None` for non-symmetric coefficients.
    pub predicted_rate: Option<f64>,
    pub stop_reason: StopReason,
    pub t_final: f64,
    pub terminal: NodalField,
}

/// Smallest eigenvalue of `A x = λ D x` (mass-weighted stiffness against the
/// lumped mass) by inverse iteration with Rayleigh quotients.
pub fn smallest_eigenvalue(ops: &SpatialOperators) -> Result<f64> {
    if !ops.coefficient().is_symmetric() {
        return Err(Error::Precondition("inverse iteration needs a symmetric coefficient".into()));
    }
    let mesh = ops.mesh();
    let n = mesh.n_interior();
    let solver = ops.elliptic_solver()?;
    let a = ops.weak_stiffness();
    // positive start with a small deterministic ripple
    let mut x: Vec<f64> = (0..n).map(|k| 1.0 + 0.01 * ((k * 7919) % 13) as f64 / 13.0).collect();
    let rayleigh = |x: &[f64]| {
        let ax = a.mul_vec(x);
        let num: f64 = x.iter().zip(&ax).map(|(p, q)| p * q).sum();
        num / mesh.inner(x, x)
    };
    let mut lambda = rayleigh(&x);
    for _ in 0..MAX_SWEEPS {
        let rhs: Vec<f64> = x.iter().map(|v| mesh.quad_weight() * v).collect();
        let (mut y, _) = solver.solve(&rhs, Some(&x))?;
        let norm = mesh.inner(&y, &y).sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        let next = rayleigh(&y);
        x = y;
        if (next - lambda).abs() <= INVERSE_ITERATION_TOLERANCE * next.abs() {
            return Ok(next);
        }
        lambda = next;
    }
    Err(Error::EigenNonConvergence { sweeps: MAX_SWEEPS })
}

/// Per-unit-time decay rate of the slowest backward Euler mode, `log(1 + λ₁ dt)/dt`.
pub fn smallest_rate(mesh: Arc<Mesh>, m: &CoefficientField, dt: f64) -> Result<f64> {
    let ops = SpatialOperators::new(mesh, m)?;
    smallest_rate_with(&ops, dt)
}

pub fn smallest_rate_with(ops: &SpatialOperators, dt: f64) -> Result<f64> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidTimeGrid(format!("dt must be positive, got {dt}")));
    }
    Ok((smallest_eigenvalue(ops)? * dt).ln_1p() / dt)
}

/// Least-squares slope of `log l1_dist` against `t` over the trailing decade,
/// negated.
pub fn fit_decay_rate(points: &[DecayPoint]) -> Option<f64> {
    let last = points.last()?.l1_dist;
    if !(last > 0.0) {
        return None;
    }
    let window: Vec<&DecayPoint> = points
        .iter()
        .rev()
        .take_while(|p| p.l1_dist > 0.0 && p.l1_dist <= 10.0 * last)
        .collect();
    if window.len() < 3 {
        return None;
    }
    let n = window.len() as f64;
    let mean_t = window.iter().map(|p| p.t).sum::<f64>() / n;
    let mean_y = window.iter().map(|p| p.l1_dist.ln()).sum::<f64>() / n;
    let sxy: f64 = window.iter().map(|p| (p.t - mean_t) * (p.l1_dist.ln() - mean_y)).sum();
    let sxx: f64 = window.iter().map(|p| (p.t - mean_t).powi(2)).sum();
    if sxx > 0.0 {
        Some(-sxy / sxx)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyOptions {
    pub dt: f64,
    pub tol: f64,
    /// Defaults to `50 / predicted_rate`.
    pub t_max: Option<f64>,
}

impl SteadyOptions {
    pub fn new(dt: f64) -> Self {
        Self { dt, tol: DEFAULT_TOLERANCE, t_max: None }
    }
}

/// A march recorded at every step.
struct Run {
    states: Vec<NodalField>,
    points: Vec<DecayPoint>,
    reached_at: Option<usize>,
}

struct Marcher<'a> {
    stepper: ParabolicStepper,
    steady: &'a NodalField,
    dt: f64,
    threshold: f64,
}

impl Marcher<'_> {
    fn point(&self, n: usize, u: &NodalField) -> Result<DecayPoint> {
        Ok(DecayPoint { t: n as f64 * self.dt, l1_dist: u.l1_distance(self.steady)?, linf_dist: u.linf_distance(self.steady)? })
    }

    fn run(&self, start: &NodalField, max_steps: usize) -> Result<Run> {
        let mut run = Run { states: vec![start.clone()], points: vec![self.point(0, start)?], reached_at: None };
        self.extend(&mut run, max_steps, true)?;
        Ok(run)
    }

    /// Marches until `len == total + 1`, or earlier if `stop_at_tol`.
    fn extend(&self, run: &mut Run, total: usize, stop_at_tol: bool) -> Result<()> {
        while run.states.len() <= total {
            let n = run.states.len();
            let next = self.stepper.step(&run.states[n - 1])?;
            let p = self.point(n, &next)?;
            run.states.push(next);
            run.points.push(p);
            if run.reached_at.is_none() && p.l1_dist <= self.threshold {
                run.reached_at = Some(n);
                if stop_at_tol {
                    break;
                }
            }
        }
        Ok(())
    }

    fn curve(&self, run: &Run, predicted_rate: Option<f64>) -> DecayCurve {
        let end = run.reached_at.unwrap_or(run.states.len() - 1);
        let points = run.points[..=end].to_vec();
        DecayCurve {
            fitted_rate: fit_decay_rate(&points),
            predicted_rate,
            stop_reason: if run.reached_at.is_some() { StopReason::ToleranceReached } else { StopReason::HorizonReached },
            t_final: points[end].t,
            points,
            terminal: run.states[end].clone(),
        }
    }
}

/// Shared setup: steady state, predicted rate, horizon and stepper.
struct Experiment {
    ops: SpatialOperators,
    steady: NodalField,
    predicted_rate: Option<f64>,
    max_steps: usize,
    threshold: f64,
    load: LoadVector,
    dt: f64,
}

impl Experiment {
    fn new(ops: &SpatialOperators, mu: &MeasureData, opts: &SteadyOptions) -> Result<Self> {
        if !(opts.tol > 0.0) {
            return Err(Error::Precondition(format!("tolerance must be positive, got {}", opts.tol)));
        }
        let load = discretize_measure(ops.mesh(), mu)?;
        let steady = solve_elliptic_with(ops, &load)?;
        let predicted_rate =
            if ops.coefficient().is_symmetric() { Some(smallest_rate_with(ops, opts.dt)?) } else { None };
        let t_max = match (opts.t_max, predicted_rate) {
            (Some(t), _) => t,
            (None, Some(r)) => 50.0 / r,
            (None, None) => {
                // λ₁ ≥ α·λ₁(Laplacian) bounds the rate from below
                let lap = SpatialOperators::new(ops.mesh().clone(), &CoefficientField::scalar(ops.mesh().dim(), 1.0)?)?;
                50.0 / (ops.coefficient().alpha() * smallest_rate_with(&lap, opts.dt)?)
            }
        };
        if !(t_max >= opts.dt) {
            return Err(Error::Precondition(format!("t_max {t_max} is shorter than one step {}", opts.dt)));
        }
        let max_steps = (t_max / opts.dt * (1.0 + 1e-12)).floor() as usize;
        let threshold = opts.tol * steady.l1_norm().max(1.0);
        Ok(Self { ops: ops.clone(), steady, predicted_rate, max_steps, threshold, load, dt: opts.dt })
    }

    fn marcher(&self) -> Result<Marcher<'_>> {
        Ok(Marcher {
            stepper: ParabolicStepper::new(&self.ops, &self.load, self.dt)?,
            steady: &self.steady,
            dt: self.dt,
            threshold: self.threshold,
        })
    }
}

pub fn run_to_steady_with(
    ops: &SpatialOperators,
    mu: &MeasureData,
    u0: &NodalField,
    opts: &SteadyOptions,
) -> Result<DecayCurve> {
    let exp = Experiment::new(ops, mu, opts)?;
    let marcher = exp.marcher()?;
    let run = marcher.run(u0, exp.max_steps)?;
    Ok(marcher.curve(&run, exp.predicted_rate))
}

pub fn run_to_steady(
    mesh: Arc<Mesh>,
    m: &CoefficientField,
    mu: &MeasureData,
    u0: &NodalField,
    dt: f64,
    tol: f64,
    t_max: Option<f64>,
) -> Result<DecayCurve> {
    let ops = SpatialOperators::new(mesh, m)?;
    run_to_steady_with(&ops, mu, u0, &SteadyOptions { dt, tol, t_max })
}

/// Ordering slack for the bracketing and monotonicity checks.
pub const ORDER_SLACK: f64 = 1e-13;

/// First `(step, node)` where `lower ≤ upper + slack` fails.
fn first_violation(lower: &[NodalField], upper: &[NodalField], slack: f64) -> Option<(usize, usize)> {
    lower.iter().zip(upper).enumerate().find_map(|(n, (a, b))| {
        a.values().iter().zip(b.values()).position(|(x, y)| *x > y + slack).map(|k| (n, k))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BracketReport {
    pub curve: DecayCurve,
    pub upper: DecayCurve,
    pub lower: DecayCurve,
    /// First violation of `u⊖ ≤ u`, as `(step, node)`.
    pub lower_violation: Option<(usize, usize)>,
    /// First violation of `u ≤ u⊕`.
    pub upper_violation: Option<(usize, usize)>,
    /// Number of steps over which the ordering was checked.
    pub checked_steps: usize,
}

impl BracketReport {
    pub fn bracketing_held(&self) -> bool {
        self.lower_violation.is_none() && self.upper_violation.is_none()
    }

    pub fn all_converged(&self) -> bool {
        [&self.curve, &self.upper, &self.lower].iter().all(|c| c.stop_reason == StopReason::ToleranceReached)
    }
}

/// Runs `u` from `u0` together with `u⊕` from `max(u0, v)` and `u⊖` from
/// `min(u0, v)`, then checks `u⊖ ≤ u ≤ u⊕` at every step up to the longest
/// of the three runs.
pub fn bracket_run_with(
    ops: &SpatialOperators,
    mu: &MeasureData,
    u0: &NodalField,
    opts: &SteadyOptions,
) -> Result<BracketReport> {
    let exp = Experiment::new(ops, mu, opts)?;
    let upper0 = u0.zip_with(&exp.steady, f64::max)?;
    let lower0 = u0.zip_with(&exp.steady, f64::min)?;
    let marcher = exp.marcher()?;
    let (mid, up, low) = std::thread::scope(|s| {
        let hu = s.spawn(|| marcher.run(&upper0, exp.max_steps));
        let hl = s.spawn(|| marcher.run(&lower0, exp.max_steps));
        let mid = marcher.run(u0, exp.max_steps);
        (mid, hu.join().expect("upper run panicked"), hl.join().expect("lower run panicked"))
    });
    let (mut mid, mut up, mut low) = (mid?, up?, low?);
    let total = [&mid, &up, &low].iter().map(|r| r.states.len() - 1).max().unwrap_or(0);
    for run in [&mut mid, &mut up, &mut low] {
        marcher.extend(run, total, false)?;
    }
    let slack = ORDER_SLACK * exp.steady.linf_norm().max(1.0);
    Ok(BracketReport {
        lower_violation: first_violation(&low.states, &mid.states, slack),
        upper_violation: first_violation(&mid.states, &up.states, slack),
        checked_steps: total,
        curve: marcher.curve(&mid, exp.predicted_rate),
        upper: marcher.curve(&up, exp.predicted_rate),
        lower: marcher.curve(&low, exp.predicted_rate),
    })
}

pub fn bracket_run(
    mesh: Arc<Mesh>,
    m: &CoefficientField,
    mu: &MeasureData,
    u0: &NodalField,
    dt: f64,
    tol: f64,
    t_max: Option<f64>,
) -> Result<BracketReport> {
    let ops = SpatialOperators::new(mesh, m)?;
    bracket_run_with(&ops, mu, u0, &SteadyOptions { dt, tol, t_max })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneVerdict {
    /// `v > 0` at every node (only asserted when `μ ≠ 0`).
    pub steady_positive: bool,
    pub from_zero_nondecreasing: bool,
    pub from_zero_below_steady: bool,
    pub from_above_nonincreasing: bool,
    pub from_above_above_steady: bool,
    pub from_zero: DecayCurve,
    pub from_above: DecayCurve,
}

impl MonotoneVerdict {
    pub fn converged(&self) -> bool {
        self.from_zero.stop_reason == StopReason::ToleranceReached
            && self.from_above.stop_reason == StopReason::ToleranceReached
    }

    pub fn holds(&self) -> bool {
        self.steady_positive
            && self.from_zero_nondecreasing
            && self.from_zero_below_steady
            && self.from_above_nonincreasing
            && self.from_above_above_steady
            && self.converged()
    }
}

/// Scale of the supersolution start `λ v`.
pub const SUPERSOLUTION_SCALE: f64 = 2.0;

/// From `u0 = 0` the march must rise monotonically to `v`; from `u0 = 2v` it
/// must fall monotonically to `v`.
pub fn monotone_approach_check_with(
    ops: &SpatialOperators,
    mu: &MeasureData,
    opts: &SteadyOptions,
) -> Result<MonotoneVerdict> {
    if !mu.is_nonnegative() {
        return Err(Error::Precondition("monotone approach needs a nonnegative measure".into()));
    }
    if !ops.coefficient().is_diagonal() {
        return Err(Error::Precondition("monotone approach needs a diagonal coefficient".into()));
    }
    let exp = Experiment::new(ops, mu, opts)?;
    let v = &exp.steady;
    let steady_positive = mu.is_zero() || v.values().iter().all(|&x| x > 0.0);
    let marcher = exp.marcher()?;
    let zero = NodalField::zeros(ops.mesh().clone());
    let above = v.scale(SUPERSOLUTION_SCALE);
    let (rise, fall) = std::thread::scope(|s| {
        let h = s.spawn(|| marcher.run(&above, exp.max_steps));
        (marcher.run(&zero, exp.max_steps), h.join().expect("run panicked"))
    });
    let (rise, fall) = (rise?, fall?);
    let slack = ORDER_SLACK * v.linf_norm().max(1.0);
    let steady_rep = |len: usize| vec![v.clone(); len];
    Ok(MonotoneVerdict {
        steady_positive,
        from_zero_nondecreasing: first_violation(&rise.states[..rise.states.len() - 1], &rise.states[1..], slack).is_none(),
        from_zero_below_steady: first_violation(&rise.states, &steady_rep(rise.states.len()), slack).is_none(),
        from_above_nonincreasing: first_violation(&fall.states[1..], &fall.states[..fall.states.len() - 1], slack).is_none(),
        from_above_above_steady: first_violation(&steady_rep(fall.states.len()), &fall.states, slack).is_none(),
        from_zero: marcher.curve(&rise, exp.predicted_rate),
        from_above: marcher.curve(&fall, exp.predicted_rate),
    })
}

pub fn monotone_approach_check(
    mesh: Arc<Mesh>,
    m: &CoefficientField,
    mu: &MeasureData,
    dt: f64,
    t_max: Option<f64>,
) -> Result<MonotoneVerdict> {
    let ops = SpatialOperators::new(mesh, m)?;
    monotone_approach_check_with(&ops, mu, &SteadyOptions { dt, tol: DEFAULT_TOLERANCE, t_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::solve_elliptic;
    use std::f64::consts::PI;

    fn lambda_h(h: f64) -> f64 {
        2.0 / (h * h) * (1.0 - (PI * h).cos())
    }

    fn laplace(dim: usize) -> CoefficientField {
        CoefficientField::scalar(dim, 1.0).unwrap()
    }

    fn delta_half() -> MeasureData {
        MeasureData::dirac([0.5, 0.0], 1.0)
    }

    #[test]
    fn smallest_eigenvalue_closed_form_1d() {
        for n in [8, 16, 32] {
            let mesh = Arc::new(Mesh::unit_1d(n).unwrap());
            let ops = SpatialOperators::new(mesh, &laplace(1)).unwrap();
            let lam = smallest_eigenvalue(&ops).unwrap();
            let exact = lambda_h(1.0 / n as f64);
            assert!((lam - exact).abs() <= 1e-8 * exact, "{n}: {lam} vs {exact}");
        }
    }

    #[test]
    fn eigenvalue_approaches_pi_squared_monotonically() {
        let mut prev = 0.0;
        for n in [8, 16, 32] {
            let mesh = Arc::new(Mesh::unit_1d(n).unwrap());
            let lam = smallest_eigenvalue(&SpatialOperators::new(mesh, &laplace(1)).unwrap()).unwrap();
            assert!(lam > prev && lam < PI * PI);
            prev = lam;
        }
        assert!((prev - PI * PI).abs() < 0.01);
    }

    #[test]
    fn doubling_the_coefficient_doubles_the_eigenvalue() {
        let mesh = Arc::new(Mesh::unit_2d(8, 6).unwrap());
        let l1 = smallest_eigenvalue(&SpatialOperators::new(mesh.clone(), &laplace(2)).unwrap()).unwrap();
        let l2 = smallest_eigenvalue(&SpatialOperators::new(mesh, &CoefficientField::scalar(2, 2.0).unwrap()).unwrap()).unwrap();
        assert!((l2 - 2.0 * l1).abs() <= 1e-9 * l2);
    }

    #[test]
    fn non_symmetric_coefficient_has_no_predicted_rate() {
        let mesh = Arc::new(Mesh::unit_2d(6, 6).unwrap());
        let m = CoefficientField::matrix(2, [[1.0, 0.2], [-0.1, 1.0]]).unwrap();
        assert!(smallest_rate(mesh.clone(), &m, 0.01).is_err());
        let mu = MeasureData::dirac([0.5, 0.5], 1.0);
        let c = run_to_steady(mesh.clone(), &m, &mu, &NodalField::zeros(mesh), 0.01, 1e-6, None).unwrap();
        assert_eq!(c.predicted_rate, None);
        assert_eq!(c.stop_reason, StopReason::ToleranceReached);
    }

    #[test]
    fn steady_start_stops_after_one_step() {
        let mesh = Arc::new(Mesh::unit_1d(16).unwrap());
        let v = solve_elliptic(mesh.clone(), &laplace(1), &delta_half()).unwrap();
        let c = run_to_steady(mesh, &laplace(1), &delta_half(), &v, 0.01, 1e-8, None).unwrap();
        assert_eq!(c.stop_reason, StopReason::ToleranceReached);
        assert_eq!(c.points.len(), 2);
        assert!((c.t_final - 0.01).abs() < 1e-15);
        assert!(c.points[1].l1_dist <= 1e-12);
        assert_eq!(c.fitted_rate, None);
    }

    #[test]
    fn sine_start_contracts_by_exact_factor() {
        let mesh = Arc::new(Mesh::unit_1d(4).unwrap());
        let u0 = NodalField::from_fn(mesh.clone(), |p| (PI * p[0]).sin()).unwrap();
        let dt = 0.01;
        let c = run_to_steady(mesh, &laplace(1), &MeasureData::zero(), &u0, dt, 1e-8, None).unwrap();
        let factor = 1.0 / (1.0 + lambda_h(0.25) * dt);
        for w in c.points.windows(2) {
            assert!((w[1].l1_dist / w[0].l1_dist - factor).abs() < 1e-12);
        }
        let predicted = c.predicted_rate.unwrap();
        assert!((c.fitted_rate.unwrap() - predicted).abs() < 1e-8 * predicted);
    }

    #[test]
    fn short_horizon_is_reported() {
        let mesh = Arc::new(Mesh::unit_1d(16).unwrap());
        let zero = NodalField::zeros(mesh.clone());
        let c = run_to_steady(mesh.clone(), &laplace(1), &delta_half(), &zero, 0.01, 1e-8, Some(0.05)).unwrap();
        assert_eq!(c.stop_reason, StopReason::HorizonReached);
        assert_eq!(c.points.len(), 6);
        assert!(run_to_steady(mesh, &laplace(1), &delta_half(), &zero, 0.01, 1e-8, Some(0.001)).is_err());
    }

    #[test]
    fn distance_decreases_across_doubling_horizons() {
        let mesh = Arc::new(Mesh::unit_1d(32).unwrap());
        let zero = NodalField::zeros(mesh.clone());
        let c = run_to_steady(mesh, &laplace(1), &delta_half(), &zero, 1.0 / 64.0, 1e-10, None).unwrap();
        let at = |t: f64| c.points.iter().find(|p| (p.t - t).abs() < 1e-9).unwrap().l1_dist;
        assert!(at(0.25) > at(0.5) && at(0.5) > at(1.0));
    }

    #[test]
    fn bracket_trivial_cases() {
        let mesh = Arc::new(Mesh::unit_1d(16).unwrap());
        let m = laplace(1);
        let v = solve_elliptic(mesh.clone(), &m, &delta_half()).unwrap();
        let r = bracket_run(mesh.clone(), &m, &delta_half(), &v, 0.01, 1e-8, None).unwrap();
        assert_eq!(r.curve.points, r.upper.points);
        assert_eq!(r.curve.points, r.lower.points);
        let below = v.scale(0.3);
        let r = bracket_run(mesh, &m, &delta_half(), &below, 0.01, 1e-8, None).unwrap();
        assert_eq!(r.curve.points, r.lower.points);
        assert!(r.bracketing_held() && r.all_converged());
    }

    #[test]
    fn monotone_approach_on_point_source() {
        let mesh = Arc::new(Mesh::unit_1d(32).unwrap());
        let verdict = monotone_approach_check(mesh.clone(), &laplace(1), &delta_half(), 1.0 / 64.0, None).unwrap();
        assert!(verdict.holds(), "{verdict:?}");
        let zero = monotone_approach_check(mesh.clone(), &laplace(1), &MeasureData::zero(), 0.01, None).unwrap();
        assert!(zero.holds());
        assert!(zero.from_zero.points.iter().all(|p| p.l1_dist == 0.0));
        let signed = MeasureData::dirac([0.5, 0.0], -1.0);
        assert!(monotone_approach_check(mesh, &laplace(1), &signed, 0.01, None).is_err());
    }

    #[test]
    fn fit_needs_a_decade() {
        let pts: Vec<DecayPoint> =
            (0..50).map(|k| DecayPoint { t: k as f64 * 0.1, l1_dist: (-2.0 * k as f64 * 0.1).exp(), linf_dist: 0.0 }).collect();
        assert!((fit_decay_rate(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(fit_decay_rate(&pts[..1]), None);
    }
}
