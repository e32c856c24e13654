//! The randomized property suite behind `measure-heat verify`.
//!
//! Every case draws from its own ChaCha stream keyed by (seed, family, case),
//! so results do not depend on how many worker threads run them.

use std::fmt::Write as _;
use std::sync::Arc;

use clap::ValueEnum;
use measure_heat_core::asymptotics::{monotone_approach_check_with, SteadyOptions, DEFAULT_TOLERANCE};
use measure_heat_core::assembly::density_load;
use measure_heat_core::duality::{duality_residual_with, DUALITY_TOLERANCE};
use measure_heat_core::io::fmt_f64;
use measure_heat_core::solvers::{green_1d, solve_elliptic_with, solve_parabolic_with, solve_retrograde_with, TrajectoryOptions};
use measure_heat_core::{
    discretize_measure, elliptic_duality_residual, Atom, CoefficientField, CoefficientKind, DualityReport, MeasureData,
    Mesh, NodalField, PairingConvention, SpatialOperators, Tensor, TimeGrid, Trajectory, Truncation,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Tier {
    Quick,
    Full,
}

impl Tier {
    fn name(self) -> &'static str {
        match self {
            Tier::Quick => "quick",
            Tier::Full => "full",
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    pub tier: Tier,
    /// Use the mismatched pairing in the duality family (negative control).
    pub break_adjoint: bool,
    pub threads: usize,
}

pub const STEP_STATIONARITY_TOLERANCE: f64 = 1e-12;
pub const MARCH_STATIONARITY_TOLERANCE: f64 = 1e-10;
pub const GREEN_TOLERANCE: f64 = 1e-10;
pub const MONOTONE_SLACK: f64 = 1e-13;
pub const POSITIVITY_FLOOR: f64 = 1e-15;
pub const TRUNCATION_LEVELS: [f64; 3] = [0.01, 0.1, 1.0];

/// Groups of properties that share their random draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Green,
    Duality,
    Linearity,
    EllipticDuality,
    Stationarity,
    Comparison,
    Contraction,
    Positivity,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Green,
        Family::Duality,
        Family::Linearity,
        Family::EllipticDuality,
        Family::Stationarity,
        Family::Comparison,
        Family::Contraction,
        Family::Positivity,
    ];

    pub fn cases(self, tier: Tier) -> usize {
        let (quick, full) = match self {
            Family::Green => (3, 3),
            Family::Duality => (20, 100),
            Family::Linearity => (5, 20),
            Family::EllipticDuality => (10, 50),
            Family::Stationarity => (5, 20),
            Family::Comparison => (4, 12),
            Family::Contraction => (10, 50),
            Family::Positivity => (5, 20),
        };
        if tier == Tier::Full {
            full
        } else {
            quick
        }
    }

    fn properties(self) -> &'static [&'static str] {
        match self {
            Family::Green => &["green_exactness"],
            Family::Duality => &["duality"],
            Family::Linearity => &["duality_linearity"],
            Family::EllipticDuality => &["elliptic_duality"],
            Family::Stationarity => &["stationarity_step", "stationarity_march"],
            Family::Comparison => &["comparison"],
            Family::Contraction => &["l1_contraction", "truncation_decay"],
            Family::Positivity => &["positivity"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sense {
    AtMost,
    Above,
}

/// One measured quantity against its bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Check {
    pub property: &'static str,
    pub value: f64,
    pub bound: f64,
    sense: Sense,
}

impl Check {
    fn at_most(property: &'static str, value: f64, bound: f64) -> Self {
        Self { property, value, bound, sense: Sense::AtMost }
    }

    fn above(property: &'static str, value: f64, bound: f64) -> Self {
        Self { property, value, bound, sense: Sense::Above }
    }

    pub fn passed(&self) -> bool {
        match self.sense {
            Sense::AtMost => self.value <= self.bound,
            Sense::Above => self.value > self.bound,
        }
    }

    fn relation(&self) -> &'static str {
        match self.sense {
            Sense::AtMost => "<=",
            Sense::Above => ">",
        }
    }

    fn worse_than(&self, other: &Check) -> bool {
        match self.sense {
            Sense::AtMost => self.value > other.value || self.value.is_nan(),
            Sense::Above => self.value < other.value || self.value.is_nan(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyRow {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest value for upper-bounded checks, smallest for lower-bounded.
    pub worst: f64,
    pub bound: f64,
    /// `<=` or `>`: how `worst` must relate to `bound`.
    pub relation: &'static str,
    pub first_failing_case: Option<usize>,
    /// Error text when a case could not be run at all.
    pub error: Option<String>,
}

impl PropertyRow {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub seed: u64,
    pub tier: Tier,
    pub rows: Vec<PropertyRow>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(PropertyRow::passed)
    }

    pub fn first_failure(&self) -> Option<&PropertyRow> {
        self.rows.iter().find(|r| !r.passed())
    }

    pub fn row(&self, name: &str) -> Option<&PropertyRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "verify tier={} seed={}", self.tier.name(), self.seed);
        let _ = writeln!(
            out,
            "{:<20} {:>5} {:>8}  {:<24} {:<27} status",
            "property", "cases", "failures", "worst", "bound"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<20} {:>5} {:>8}  {:<24} {:<27} {}",
                r.name,
                r.cases,
                r.failures,
                fmt_f64(r.worst),
                format!("{:<2} {}", r.relation, fmt_f64(r.bound)),
                if r.passed() { "pass" } else { "FAIL" }
            );
            if let Some(e) = &r.error {
                let _ = writeln!(out, "  error: {e}");
            }
        }
        match self.first_failure() {
            None => out.push_str("result: pass\n"),
            Some(r) => {
                let case = r.first_failing_case.map_or(String::new(), |c| format!(", case {c}"));
                let _ = writeln!(out, "result: FAIL (first failing property: {}{case})", r.name);
            }
        }
        out
    }
}

/// Runs every family.
pub fn run_verify(opts: &VerifyOptions) -> VerifyReport {
    run_families(opts, &Family::ALL)
}

pub fn run_families(opts: &VerifyOptions, families: &[Family]) -> VerifyReport {
    let jobs: Vec<(usize, Family, usize)> = families
        .iter()
        .flat_map(|&f| {
            let index = Family::ALL.iter().position(|&g| g == f).unwrap_or(0);
            (0..f.cases(opts.tier)).map(move |c| (index, f, c))
        })
        .collect();
    let run = || {
        jobs.par_iter()
            .map(|&(index, family, case)| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(((index as u64) << 32) | case as u64);
                run_case(family, case, &mut rng, opts)
            })
            .collect::<Vec<_>>()
    };
    let results = match rayon::ThreadPoolBuilder::new().num_threads(opts.threads.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };

    let mut rows = Vec::new();
    for &family in families {
        for &name in family.properties() {
            let mut row = PropertyRow {
                name,
                cases: 0,
                failures: 0,
                worst: f64::NAN,
                bound: f64::NAN,
                relation: "<=",
                first_failing_case: None,
                error: None,
            };
            let mut worst: Option<Check> = None;
            for ((_, f, case), result) in jobs.iter().zip(&results) {
                if *f != family {
                    continue;
                }
                row.cases += 1;
                match result {
                    Ok(checks) => {
                        for c in checks.iter().filter(|c| c.property == name) {
                            if !c.passed() {
                                row.failures += 1;
                                row.first_failing_case.get_or_insert(*case);
                            }
                            if worst.is_none_or(|w| c.worse_than(&w)) {
                                worst = Some(*c);
                            }
                        }
                    }
                    Err(e) => {
                        row.failures += 1;
                        row.first_failing_case.get_or_insert(*case);
                        row.error.get_or_insert_with(|| e.clone());
                    }
                }
            }
            if let Some(w) = worst {
                row.worst = w.value;
                row.bound = w.bound;
                row.relation = w.relation();
            }
            rows.push(row);
        }
    }
    VerifyReport { seed: opts.seed, tier: opts.tier, rows }
}

fn run_case(family: Family, case: usize, rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Result<Vec<Check>, String> {
    let tier = opts.tier;
    let r = match family {
        Family::Green => green_case(case),
        Family::Duality => duality_case(rng, tier, opts.break_adjoint),
        Family::Linearity => linearity_case(rng, tier),
        Family::EllipticDuality => elliptic_duality_case(rng, tier),
        Family::Stationarity => stationarity_case(rng, tier),
        Family::Comparison => comparison_case(rng, tier),
        Family::Contraction => contraction_case(rng, tier),
        Family::Positivity => positivity_case(rng, tier),
    };
    r.map_err(|e| e.to_string())
}

type CaseResult = measure_heat_core::Result<Vec<Check>>;

// ---------------------------------------------------------------------------
// random problem data

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientClass {
    Diagonal,
    SymmetricFull,
    General,
}

pub fn random_mesh(rng: &mut impl Rng, tier: Tier, dim: usize) -> Arc<Mesh> {
    let (max_1d, max_2d) = if tier == Tier::Full { (64, 20) } else { (32, 10) };
    let mesh = if dim == 1 {
        Mesh::new(1, &[rng.gen_range(0.5..2.0)], &[rng.gen_range(4..=max_1d)])
    } else {
        Mesh::new(
            2,
            &[rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)],
            &[rng.gen_range(3..=max_2d), rng.gen_range(3..=max_2d)],
        )
    };
    Arc::new(mesh.expect("random mesh parameters are valid"))
}

fn random_tensor(rng: &mut impl Rng, dim: usize, class: CoefficientClass) -> Tensor {
    let a = rng.gen_range(0.2..3.0);
    if dim == 1 {
        return [[a, 0.0], [0.0, 0.0]];
    }
    let c = rng.gen_range(0.2..3.0);
    let bound = 0.45 * f64::sqrt(a * c);
    match class {
        CoefficientClass::Diagonal => [[a, 0.0], [0.0, c]],
        CoefficientClass::SymmetricFull => {
            let b = rng.gen_range(-bound..bound);
            [[a, b], [b, c]]
        }
        CoefficientClass::General => {
            let sym = rng.gen_range(-bound..bound);
            let skew = rng.gen_range(-1.0..1.0);
            [[a, sym + skew], [sym - skew, c]]
        }
    }
}

pub fn random_coefficient(rng: &mut impl Rng, mesh: &Mesh, class: CoefficientClass) -> CoefficientField {
    let dim = mesh.dim();
    let kind = if rng.gen_bool(0.5) {
        CoefficientKind::ConstantMatrix(random_tensor(rng, dim, class))
    } else {
        CoefficientKind::PerCellTable((0..mesh.n_cells_total()).map(|_| random_tensor(rng, dim, class)).collect())
    };
    CoefficientField::new(dim, kind, None).expect("random coefficient is elliptic")
}

/// One to three atoms away from the boundary, plus a density half the time.
pub fn random_measure(rng: &mut impl Rng, mesh: &Mesh, signed: bool) -> MeasureData {
    let ext = mesh.extents().to_vec();
    let weight = |rng: &mut dyn rand::RngCore| if signed { rng.gen_range(-2.0..2.0) } else { rng.gen_range(0.2..2.0) };
    let atoms = (0..rng.gen_range(1..=3))
        .map(|_| {
            let x = rng.gen_range(0.05..0.95) * ext[0];
            if mesh.dim() == 1 {
                Atom::at_1d(x, weight(rng))
            } else {
                let y = rng.gen_range(0.05..0.95) * ext[1];
                Atom::at_2d(x, y, weight(rng))
            }
        })
        .collect();
    let density = rng.gen_bool(0.5).then(|| {
        (0..mesh.n_interior()).map(|_| if signed { rng.gen_range(-1.0..1.0) } else { rng.gen_range(0.0..1.0) }).collect()
    });
    MeasureData { atoms, density }
}

pub fn random_field(rng: &mut impl Rng, mesh: &Arc<Mesh>, amplitude: f64) -> NodalField {
    NodalField::new(mesh.clone(), (0..mesh.n_interior()).map(|_| rng.gen_range(-amplitude..=amplitude)).collect())
        .expect("finite values")
}

/// Random in space, constant over a few equal blocks of steps.
pub fn random_piecewise_g(rng: &mut impl Rng, mesh: &Arc<Mesh>, n_steps: usize) -> Vec<NodalField> {
    let pieces = rng.gen_range(1..=5usize).min(n_steps);
    let blocks: Vec<NodalField> = (0..pieces).map(|_| random_field(rng, mesh, 1.0)).collect();
    (0..n_steps).map(|k| blocks[k * pieces / n_steps].clone()).collect()
}

/// A step size with `λ₁ dt` in `[lo, hi]`, using the continuous estimate.
fn scaled_dt(rng: &mut impl Rng, mesh: &Mesh, m: &CoefficientField, lo: f64, hi: f64) -> f64 {
    let lambda: f64 = mesh.extents().iter().map(|l| (std::f64::consts::PI / l).powi(2)).sum::<f64>() * m.alpha();
    rng.gen_range(lo..hi) / lambda
}

fn random_dim(rng: &mut impl Rng) -> usize {
    if rng.gen_bool(0.5) {
        1
    } else {
        2
    }
}

fn full_options() -> TrajectoryOptions {
    TrajectoryOptions { stride: Some(1), reference: None }
}

// ---------------------------------------------------------------------------
// families

fn green_case(case: usize) -> CaseResult {
    let n = [4, 16, 64][case % 3];
    let mesh = Arc::new(Mesh::unit_1d(n)?);
    let ops = SpatialOperators::new(mesh.clone(), &CoefficientField::scalar(1, 1.0)?)?;
    let v = solve_elliptic_with(&ops, &discretize_measure(&mesh, &MeasureData::dirac([0.5, 0.0], 1.0))?)?;
    let err = v
        .values()
        .iter()
        .enumerate()
        .map(|(k, x)| (x - green_1d(mesh.interior_coords(k)[0], 0.5)).abs())
        .fold(0.0, f64::max);
    Ok(vec![Check::at_most("green_exactness", err, GREEN_TOLERANCE)])
}

struct DualityRun {
    report: DualityReport,
}

fn duality_run(
    ops: &SpatialOperators,
    mu: &MeasureData,
    u0: &NodalField,
    g: &[NodalField],
    grid: TimeGrid,
    convention: PairingConvention,
) -> measure_heat_core::Result<DualityRun> {
    let mesh = ops.mesh().clone();
    let load = discretize_measure(&mesh, mu)?;
    let u: Trajectory = solve_parabolic_with(ops, &load, u0, grid, &full_options())?;
    let w = solve_retrograde_with(&ops.adjoint()?, g, grid, &full_options())?;
    Ok(DualityRun { report: duality_residual_with(&u, &w, u0, g, mu, &mesh, convention)? })
}

fn duality_setup(
    rng: &mut ChaCha8Rng,
    tier: Tier,
) -> measure_heat_core::Result<(SpatialOperators, TimeGrid, Vec<NodalField>)> {
    let dim = random_dim(rng);
    let mesh = random_mesh(rng, tier, dim);
    let class = if rng.gen_bool(0.5) { CoefficientClass::Diagonal } else { CoefficientClass::SymmetricFull };
    let m = random_coefficient(rng, &mesh, class);
    let max_steps = if tier == Tier::Full { 200 } else { 40 };
    let n_steps = rng.gen_range(5..=max_steps);
    let dt = scaled_dt(rng, &mesh, &m, 0.01, 1.0);
    let grid = TimeGrid::new(dt, n_steps)?;
    let g = random_piecewise_g(rng, &mesh, n_steps);
    Ok((SpatialOperators::new(mesh, &m)?, grid, g))
}

fn duality_case(rng: &mut ChaCha8Rng, tier: Tier, break_adjoint: bool) -> CaseResult {
    let (ops, grid, g) = duality_setup(rng, tier)?;
    let mu = random_measure(rng, ops.mesh(), true);
    let amplitude = rng.gen_range(0.1..3.0);
    let u0 = random_field(rng, ops.mesh(), amplitude);
    let convention = if break_adjoint { PairingConvention::RightEndpoint } else { PairingConvention::Adjoint };
    let run = duality_run(&ops, &mu, &u0, &g, grid, convention)?;
    Ok(vec![Check::at_most("duality", run.report.relative_residual, DUALITY_TOLERANCE)])
}

/// The three terms are linear in `(u0, μ)` for fixed `g`: superposing two
/// configurations must superpose the terms.
fn linearity_case(rng: &mut ChaCha8Rng, tier: Tier) -> CaseResult {
    let (ops, grid, g) = duality_setup(rng, tier)?;
    let mesh = ops.mesh().clone();
    let (mu_a, mu_b) = (random_measure(rng, &mesh, true), random_measure(rng, &mesh, true));
    let (ua, ub) = (random_field(rng, &mesh, 1.0), random_field(rng, &mesh, 1.0));
    let mut mu_ab = mu_a.clone();
    mu_ab.atoms.extend(mu_b.atoms.iter().copied());
    mu_ab.density = match (&mu_a.density, &mu_b.density) {
        (None, None) => None,
        (a, b) => {
            let zero = vec![0.0; mesh.n_interior()];
            let (a, b) = (a.as_ref().unwrap_or(&zero), b.as_ref().unwrap_or(&zero));
            Some(a.iter().zip(b).map(|(x, y)| x + y).collect())
        }
    };
    let uab = ua.zip_with(&ub, |x, y| x + y)?;
    let conv = PairingConvention::Adjoint;
    let a = duality_run(&ops, &mu_a, &ua, &g, grid, conv)?.report;
    let b = duality_run(&ops, &mu_b, &ub, &g, grid, conv)?.report;
    let ab = duality_run(&ops, &mu_ab, &uab, &g, grid, conv)?.report;
    let terms = |r: &DualityReport| [r.lhs_init_term, r.lhs_bulk_term, r.rhs_measure_term];
    let (ta, tb, tab) = (terms(&a), terms(&b), terms(&ab));
    let scale: f64 = ta.iter().chain(&tb).map(|x| x.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let gap = (0..3).map(|i| (tab[i] - ta[i] - tb[i]).abs()).fold(0.0, f64::max);
    Ok(vec![Check::at_most("duality_linearity", gap / scale, DUALITY_TOLERANCE)])
}

fn elliptic_duality_case(rng: &mut ChaCha8Rng, tier: Tier) -> CaseResult {
    let dim = random_dim(rng);
    let mesh = random_mesh(rng, tier, dim);
    let m = random_coefficient(rng, &mesh, CoefficientClass::General);
    let ops = SpatialOperators::new(mesh.clone(), &m)?;
    let mu = random_measure(rng, &mesh, true);
    let g = random_field(rng, &mesh, 1.0);
    let v = solve_elliptic_with(&ops, &discretize_measure(&mesh, &mu)?)?;
    let z = solve_elliptic_with(&ops.adjoint()?, &density_load(&g))?;
    let r = elliptic_duality_residual(&v, &z, &g, &mu, &mesh)?;
    Ok(vec![Check::at_most("elliptic_duality", r.relative_residual, DUALITY_TOLERANCE)])
}

fn stationarity_case(rng: &mut ChaCha8Rng, tier: Tier) -> CaseResult {
    let dim = random_dim(rng);
    let mesh = random_mesh(rng, tier, dim);
    let class = [CoefficientClass::Diagonal, CoefficientClass::SymmetricFull, CoefficientClass::General][rng.gen_range(0..3)];
    let m = random_coefficient(rng, &mesh, class);
    let ops = SpatialOperators::new(mesh.clone(), &m)?;
    let mu = random_measure(rng, &mesh, true);
    let load = discretize_measure(&mesh, &mu)?;
    let v = solve_elliptic_with(&ops, &load)?;
    let dt = scaled_dt(rng, &mesh, &m, 0.01, 2.0);
    let n_steps = if tier == Tier::Full { 1000 } else { 200 };
    let tr = solve_parabolic_with(&ops, &load, &v, TimeGrid::new(dt, n_steps)?, &full_options())?;
    let scale = v.linf_norm().max(f64::MIN_POSITIVE);
    let one_step = tr.state(1).expect("complete trajectory").linf_distance(&v)? / scale;
    let drift = tr.snapshots().iter().map(|(_, s)| s.linf_distance(&v)).try_fold(0.0f64, |a, d| d.map(|d| a.max(d)))?;
    Ok(vec![
        Check::at_most("stationarity_step", one_step, STEP_STATIONARITY_TOLERANCE),
        Check::at_most("stationarity_march", drift, MARCH_STATIONARITY_TOLERANCE),
    ])
}

/// Monotone rise from 0 and fall from 2v; the value is the number of the
/// five ordering/convergence clauses that failed.
fn comparison_case(rng: &mut ChaCha8Rng, tier: Tier) -> CaseResult {
    let dim = random_dim(rng);
    let mesh = random_mesh(rng, tier, dim);
    let m = random_coefficient(rng, &mesh, CoefficientClass::Diagonal);
    let ops = SpatialOperators::new(mesh.clone(), &m)?;
    let mu = random_measure(rng, &mesh, false);
    let dt = scaled_dt(rng, &mesh, &m, 0.05, 1.0);
    let verdict = monotone_approach_check_with(&ops, &mu, &SteadyOptions { dt, tol: DEFAULT_TOLERANCE, t_max: None })?;
    let failed = [
        verdict.from_zero_nondecreasing,
        verdict.from_zero_below_steady,
        verdict.from_above_nonincreasing,
        verdict.from_above_above_steady,
        verdict.converged(),
    ]
    .iter()
    .filter(|ok| !**ok)
    .count();
    Ok(vec![Check::at_most("comparison", failed as f64, 0.0)])
}

fn contraction_case(rng: &mut ChaCha8Rng, tier: Tier) -> CaseResult {
    let dim = random_dim(rng);
    let mesh = random_mesh(rng, tier, dim);
    let m = random_coefficient(rng, &mesh, CoefficientClass::Diagonal);
    let ops = SpatialOperators::new(mesh.clone(), &m)?;
    let mu = random_measure(rng, &mesh, true);
    let load = discretize_measure(&mesh, &mu)?;
    let a = rng.gen_range(0.1..3.0);
    let (u1, u2) = (random_field(rng, &mesh, a), random_field(rng, &mesh, a));
    let c = rng.gen_range(0.02..0.5);
    let dt = scaled_dt(rng, &mesh, &m, c, c * 1.0001);
    let grid = TimeGrid::new(dt, rng.gen_range(10..=30))?;
    let t1 = solve_parabolic_with(&ops, &load, &u1, grid, &full_options())?;
    let t2 = solve_parabolic_with(&ops, &load, &u2, grid, &full_options())?;
    let diffs: Vec<NodalField> =
        t1.snapshots().iter().zip(t2.snapshots()).map(|((_, x), (_, y))| x.sub(y)).collect::<Result<_, _>>()?;

    let l1: Vec<f64> = diffs.iter().map(NodalField::l1_norm).collect();
    // largest step-to-step increase, and largest excess over the initial gap
    let rise = l1.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let excess = rise.max(l1[1..].iter().map(|x| x - l1[0]).fold(f64::NEG_INFINITY, f64::max));

    let mut theta_excess = f64::NEG_INFINITY;
    for k in TRUNCATION_LEVELS {
        let tk = Truncation::new(k)?;
        let e: Vec<f64> = diffs.iter().map(|d| tk.integral(&mesh, d.values())).collect();
        theta_excess = theta_excess.max(e.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(vec![
        Check::at_most("l1_contraction", excess, MONOTONE_SLACK),
        Check::at_most("truncation_decay", theta_excess, MONOTONE_SLACK),
    ])
}

/// Smallest nodal value of `v` relative to `‖v‖∞`.
fn positivity_case(rng: &mut ChaCha8Rng, tier: Tier) -> CaseResult {
    let dim = random_dim(rng);
    let mesh = random_mesh(rng, tier, dim);
    let m = random_coefficient(rng, &mesh, CoefficientClass::Diagonal);
    let ops = SpatialOperators::new(mesh.clone(), &m)?;
    let mu = random_measure(rng, &mesh, false);
    let v = solve_elliptic_with(&ops, &discretize_measure(&mesh, &mu)?)?;
    let min = v.values().iter().copied().fold(f64::INFINITY, f64::min);
    Ok(vec![Check::above("positivity", min / v.linf_norm(), POSITIVITY_FLOOR)])
}
