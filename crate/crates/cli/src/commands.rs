use std::fs;
use std::path::Path;

use measure_heat_core::asymptotics::{bracket_run_with, SteadyOptions, DEFAULT_TOLERANCE};
use measure_heat_core::duality::{duality_residual_with, DUALITY_TOLERANCE};
use measure_heat_core::io::{
    duality_report_json, flat_json, stop_reason_str, write_decay_csv, write_diagnostics_csv, write_node_table,
    write_trajectory_csv,
};
use measure_heat_core::solvers::{solve_elliptic_with, solve_parabolic_with, solve_retrograde_with, TrajectoryOptions};
use measure_heat_core::{discretize_measure, NodalField, PairingConvention, SpatialOperators, StopReason};

use crate::config::{ExperimentConfig, Problem};
use crate::verify::{run_verify, VerifyOptions};
use crate::{CliError, Outcome, EXIT_DUALITY, EXIT_HORIZON, EXIT_OK, EXIT_VERIFY};

fn write(dir: &Path, name: &str, contents: &[u8]) -> Result<String, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(format!("wrote {}\n", path.display()))
}

fn csv(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

struct Setup {
    problem: Problem,
    ops: SpatialOperators,
}

impl Setup {
    fn new(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let problem = cfg.problem()?;
        let ops = SpatialOperators::new(problem.mesh.clone(), &problem.coefficient)?;
        Ok(Self { problem, ops })
    }

    fn steady(&self) -> Result<NodalField, CliError> {
        Ok(solve_elliptic_with(&self.ops, &discretize_measure(&self.problem.mesh, &self.problem.measure)?)?)
    }

    fn initial_state(&self, cfg: &ExperimentConfig) -> Result<NodalField, CliError> {
        cfg.initial_state(&self.problem.mesh, || self.steady())
    }
}

fn options(cfg: &ExperimentConfig, reference: Option<NodalField>) -> TrajectoryOptions {
    TrajectoryOptions { stride: cfg.output.checkpoint_stride, reference }
}

/// Steady state: `v.csv` and `summary.json`.
pub fn cmd_elliptic(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let s = Setup::new(cfg)?;
    let load = discretize_measure(&s.problem.mesh, &s.problem.measure)?;
    let (x, stats) = s.ops.elliptic_solver()?.solve(load.values(), None)?;
    let v = NodalField::new(s.problem.mesh.clone(), x)?;
    let mut msg = write(out, "v.csv", &csv(|b| write_node_table(b, &v))?)?;
    let summary = flat_json(&[
        ("l1", v.l1_norm().into()),
        ("linf", v.linf_norm().into()),
        ("solver_iterations", stats.iterations.into()),
    ]);
    msg += &write(out, "summary.json", summary.as_bytes())?;
    Ok(Outcome::ok(msg))
}

/// Forward march: `trajectory.csv` and `diagnostics.csv`, with the L¹
/// distance to the steady state in the last diagnostics column.
pub fn cmd_parabolic(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let s = Setup::new(cfg)?;
    let grid = cfg.time_grid()?;
    let u0 = s.initial_state(cfg)?;
    let load = discretize_measure(&s.problem.mesh, &s.problem.measure)?;
    let tr = solve_parabolic_with(&s.ops, &load, &u0, grid, &options(cfg, Some(s.steady()?)))?;
    let mut msg = write(out, "trajectory.csv", &csv(|b| write_trajectory_csv(b, &tr))?)?;
    msg += &write(out, "diagnostics.csv", &csv(|b| write_diagnostics_csv(b, &tr))?)?;
    Ok(Outcome::ok(msg))
}

/// Backward march of the transposed problem from `w(T) = 0`.
pub fn cmd_retrograde(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let s = Setup::new(cfg)?;
    let grid = cfg.time_grid()?;
    let g = cfg.dual_source(&s.problem.mesh, grid)?;
    let tr = solve_retrograde_with(&s.ops.adjoint()?, &g, grid, &options(cfg, None))?;
    let mut msg = write(out, "trajectory.csv", &csv(|b| write_trajectory_csv(b, &tr))?)?;
    msg += &write(out, "diagnostics.csv", &csv(|b| write_diagnostics_csv(b, &tr))?)?;
    Ok(Outcome::ok(msg))
}

/// Forward and retrograde marches, then the pairing identity. Exit 4 when
/// the relative residual exceeds the tolerance.
pub fn cmd_duality_check(cfg: &ExperimentConfig, out: &Path, break_adjoint: bool) -> Result<Outcome, CliError> {
    let s = Setup::new(cfg)?;
    let mesh = &s.problem.mesh;
    let grid = cfg.time_grid()?;
    let u0 = s.initial_state(cfg)?;
    let g = cfg.dual_source(mesh, grid)?;
    let full = TrajectoryOptions { stride: Some(1), reference: None };
    let load = discretize_measure(mesh, &s.problem.measure)?;
    let u = solve_parabolic_with(&s.ops, &load, &u0, grid, &full)?;
    let w = solve_retrograde_with(&s.ops.adjoint()?, &g, grid, &full)?;
    let convention = if break_adjoint { PairingConvention::RightEndpoint } else { PairingConvention::Adjoint };
    let report = duality_residual_with(&u, &w, &u0, &g, &s.problem.measure, mesh, convention)?;
    let json = duality_report_json(&report);
    let mut msg = write(out, "duality.json", json.as_bytes())?;
    let code = if report.relative_residual <= DUALITY_TOLERANCE {
        EXIT_OK
    } else {
        msg += "duality residual above tolerance\n";
        msg += &json;
        EXIT_DUALITY
    };
    Ok(Outcome { code, stdout: msg })
}

/// March to the steady state with the bracketing runs alongside. Exit 5 when
/// the horizon comes first, 1 when the bracketing breaks.
pub fn cmd_asymptotic(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let s = Setup::new(cfg)?;
    let u0 = s.initial_state(cfg)?;
    let opts = SteadyOptions {
        dt: cfg.time.dt,
        tol: cfg.time.tol.unwrap_or(DEFAULT_TOLERANCE),
        t_max: cfg.time.t_max,
    };
    let report = bracket_run_with(&s.ops, &s.problem.measure, &u0, &opts)?;
    let curve = &report.curve;
    let mut msg = write(out, "decay.csv", &csv(|b| write_decay_csv(b, curve))?)?;
    let summary = flat_json(&[
        ("fitted_rate", curve.fitted_rate.into()),
        ("predicted_rate", curve.predicted_rate.into()),
        ("stop_reason", stop_reason_str(curve.stop_reason).into()),
        ("t_final", curve.t_final.into()),
        ("bracketing_held", report.bracketing_held().into()),
        ("bracket_steps", report.checked_steps.into()),
    ]);
    msg += &write(out, "summary.json", summary.as_bytes())?;
    let code = if curve.stop_reason == StopReason::HorizonReached {
        msg += "horizon reached before tolerance\n";
        EXIT_HORIZON
    } else if !report.bracketing_held() {
        let v = report.lower_violation.or(report.upper_violation).unwrap_or_default();
        msg += &format!("bracketing violated at step {}, node {}\n", v.0, v.1);
        EXIT_VERIFY
    } else {
        EXIT_OK
    };
    Ok(Outcome { code, stdout: msg })
}

/// The property table goes to stdout and, with an output directory, to
/// `verify.txt`.
pub fn cmd_verify(opts: &VerifyOptions, out: Option<&Path>) -> Result<Outcome, CliError> {
    let report = run_verify(opts);
    let table = report.table();
    if let Some(dir) = out {
        write(dir, "verify.txt", table.as_bytes())?;
    }
    let code = if report.passed() { EXIT_OK } else { EXIT_VERIFY };
    Ok(Outcome { code, stdout: table })
}

impl Outcome {
    pub fn is_ok(&self) -> bool {
        self.code == EXIT_OK
    }
}
