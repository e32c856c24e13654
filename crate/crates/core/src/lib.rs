//! Discrete laboratory for `u_t − div(M(x)∇u) = μ` with measure data on
//! intervals and rectangles: the forward parabolic march, its elliptic steady
//! state, the retrograde adjoint march, and executable checks of the duality
//! pairing, comparison, L¹ contraction and long-time convergence.

pub mod assembly;
pub mod asymptotics;
pub mod duality;
pub mod error;
pub mod io;
pub mod mesh;
pub mod model;
pub mod solvers;

pub use assembly::{
    assemble_mass, assemble_stiffness, discretize_measure, solve_linear, LinearSolver, LoadVector, SolverKind,
    SparseOperator, SpatialOperators,
};
pub use error::{Error, Result};
pub use mesh::{l1_norm, linf_norm, Mesh, NodalField, Point};
pub use model::{check_ellipticity, t_k, theta_k, total_variation, Atom, CoefficientField, CoefficientKind, MeasureData, Tensor, Truncation};

pub use asymptotics::{
    bracket_run, monotone_approach_check, run_to_steady, smallest_rate, BracketReport, DecayCurve, DecayPoint,
    MonotoneVerdict, SteadyOptions, StopReason,
};
pub use duality::{
    check_super_sub, duality_residual, elliptic_duality_residual, DualityReport, OrderingVerdict, PairingConvention,
    Relation,
};
pub use solvers::{
    solve_elliptic, solve_parabolic, solve_retrograde, spectral_oracle_1d, spectral_oracle_1d_auto, step_parabolic,
    TimeGrid, Trajectory,
};
