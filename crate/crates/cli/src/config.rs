//! Experiment configuration: one JSON document per run. Unknown keys are
//! rejected and optional fields that are absent stay absent on output, so
//! a parsed config serializes back to an equivalent document.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use measure_heat_core::{Atom, CoefficientField, CoefficientKind, MeasureData, Mesh, NodalField, Tensor, TimeGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mesh: MeshSpec,
    pub coefficient: CoefficientSpec,
    #[serde(default)]
    pub measure: MeasureSpec,
    #[serde(default)]
    pub u0: U0Spec,
    /// Dual source for the retrograde march and the duality check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<GSpec>,
    pub time: TimeSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extents: Option<Vec<f64>>,
    pub n_cells: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientKindSpec {
    ConstantScalar,
    ConstantMatrix,
    PerCellTable,
}

/// `constant_scalar`: `[m]`. `constant_matrix`: `[m11, m12, m21, m22]` (or
/// `[m]` in 1D). `per_cell_table`: one such block per cell, x-fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub kind: CoefficientKindSpec,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityPreset {
    /// Constant 1.
    Unit,
    /// `Π sin(π x_i / L_i)`.
    Bump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DensitySpec {
    Preset(DensityPreset),
    Table(Vec<f64>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default)]
    pub atoms: Vec<AtomSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensitySpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum U0Spec {
    #[default]
    Zero,
    /// `λ v` with `v` the steady state of the configured problem.
    GreenScaled { lambda: f64 },
    /// First eigenfunction `Π sin(π x_i / L_i)`, scaled.
    Sine {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `x − L/2` along the first axis: changes sign.
    LinearSigned {
        #[serde(default = "one")]
        amplitude: f64,
    },
    Table { data: Vec<f64> },
    /// Uniform in `[−amplitude, amplitude]` per node, drawn from the seed.
    Random {
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GSpec {
    Zero,
    Constant { value: f64 },
    /// Random in space, constant over `pieces` equal blocks of steps.
    RandomPiecewise {
        pieces: usize,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// One row per step `1..=N`.
    Table { data: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_stride: Option<usize>,
}

/// The validated problem, ready to solve.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mesh: Arc<Mesh>,
    pub coefficient: CoefficientField,
    pub measure: MeasureData,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        let mesh = Arc::new(self.mesh.build()?);
        let coefficient = self.coefficient.build(&mesh)?;
        let measure = self.measure.build(&mesh)?;
        Ok(Problem { mesh, coefficient, measure })
    }

    pub fn time_grid(&self) -> Result<TimeGrid, CliError> {
        let t_end = self.time.t_end.ok_or_else(|| CliError::Config("time.t_end is required for this command".into()))?;
        Ok(TimeGrid::until(self.time.dt, t_end)?)
    }

    /// `steady` is needed only by the `green_scaled` preset.
    pub fn initial_state(&self, mesh: &Arc<Mesh>, steady: impl FnOnce() -> Result<NodalField, CliError>) -> Result<NodalField, CliError> {
        let ext = mesh.extents().to_vec();
        let field = match &self.u0 {
            U0Spec::Zero => NodalField::zeros(mesh.clone()),
            U0Spec::GreenScaled { lambda } => steady()?.scale(*lambda),
            U0Spec::Sine { amplitude } => NodalField::from_fn(mesh.clone(), |p| amplitude * sine_mode(&ext, p))?,
            U0Spec::LinearSigned { amplitude } => {
                NodalField::from_fn(mesh.clone(), |p| amplitude * (p[0] - 0.5 * ext[0]))?
            }
            U0Spec::Table { data } => NodalField::new(mesh.clone(), data.clone())?,
            U0Spec::Random { amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let a = amplitude.abs();
                NodalField::new(mesh.clone(), (0..mesh.n_interior()).map(|_| rng.gen_range(-a..=a)).collect())?
            }
        };
        Ok(field)
    }

    /// Dual source for steps `1..=N`, as `g[n-1]`. Absent means zero.
    pub fn dual_source(&self, mesh: &Arc<Mesh>, grid: TimeGrid) -> Result<Vec<NodalField>, CliError> {
        let n = grid.n_steps();
        let zero = || vec![NodalField::zeros(mesh.clone()); n];
        Ok(match &self.g {
            None | Some(GSpec::Zero) => zero(),
            Some(GSpec::Constant { value }) => vec![NodalField::constant(mesh.clone(), *value); n],
            Some(GSpec::RandomPiecewise { pieces, amplitude }) => {
                if *pieces == 0 {
                    return Err(CliError::Config("g.pieces must be positive".into()));
                }
                // separate stream from the u0 draw
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
                let a = amplitude.abs();
                let blocks: Vec<NodalField> = (0..*pieces)
                    .map(|_| NodalField::new(mesh.clone(), (0..mesh.n_interior()).map(|_| rng.gen_range(-a..=a)).collect()))
                    .collect::<Result<_, _>>()?;
                (0..n).map(|k| blocks[k * pieces / n.max(1)].clone()).collect()
            }
            Some(GSpec::Table { data }) => {
                if data.len() != n {
                    return Err(CliError::Config(format!("g.data has {} rows, the time grid has {n} steps", data.len())));
                }
                data.iter().map(|row| NodalField::new(mesh.clone(), row.clone())).collect::<Result<_, _>>()?
            }
        })
    }

    /// Output directory: `--out` wins over `output.dir`, then `out`.
    pub fn out_dir(&self, cli_out: Option<&Path>) -> PathBuf {
        cli_out.map(Path::to_path_buf).or_else(|| self.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
    }
}

pub(crate) fn sine_mode(ext: &[f64], p: [f64; 2]) -> f64 {
    ext.iter().zip(p).map(|(l, x)| (std::f64::consts::PI * x / l).sin()).product()
}

impl MeshSpec {
    fn build(&self) -> Result<Mesh, CliError> {
        let extents = self.extents.clone().unwrap_or_else(|| vec![1.0; self.dim]);
        Ok(Mesh::new(self.dim, &extents, &self.n_cells)?)
    }
}

fn tensor(dim: usize, block: &[f64]) -> Result<Tensor, CliError> {
    match (dim, block) {
        (1, [m]) => Ok([[*m, 0.0], [0.0, 0.0]]),
        (2, [a, b, c, d]) => Ok([[*a, *b], [*c, *d]]),
        _ => Err(CliError::Config(format!(
            "coefficient block must have {} value(s) in {dim}D, got {}",
            if dim == 1 { 1 } else { 4 },
            block.len()
        ))),
    }
}

impl CoefficientSpec {
    fn build(&self, mesh: &Mesh) -> Result<CoefficientField, CliError> {
        let dim = mesh.dim();
        let kind = match self.kind {
            CoefficientKindSpec::ConstantScalar => match self.values.as_slice() {
                [m] => CoefficientKind::ConstantScalar(*m),
                v => return Err(CliError::Config(format!("constant_scalar takes one value, got {}", v.len()))),
            },
            CoefficientKindSpec::ConstantMatrix => CoefficientKind::ConstantMatrix(tensor(dim, &self.values)?),
            CoefficientKindSpec::PerCellTable => {
                let block = if dim == 1 { 1 } else { 4 };
                if self.values.len() != block * mesh.n_cells_total() {
                    return Err(CliError::Config(format!(
                        "per_cell_table needs {} values for {} cells, got {}",
                        block * mesh.n_cells_total(),
                        mesh.n_cells_total(),
                        self.values.len()
                    )));
                }
                CoefficientKind::PerCellTable(self.values.chunks(block).map(|c| tensor(dim, c)).collect::<Result<_, _>>()?)
            }
        };
        let field = CoefficientField::new(dim, kind, self.alpha)?;
        field.check_mesh(mesh)?;
        Ok(field)
    }
}

impl MeasureSpec {
    fn build(&self, mesh: &Mesh) -> Result<MeasureData, CliError> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| match (mesh.dim(), a.y) {
                (1, None) => Ok(Atom::at_1d(a.x, a.weight)),
                (2, Some(y)) => Ok(Atom::at_2d(a.x, y, a.weight)),
                (1, Some(_)) => Err(CliError::Config("atom has a y coordinate on a 1D mesh".into())),
                _ => Err(CliError::Config("atom is missing its y coordinate on a 2D mesh".into())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let density = match &self.density {
            None => None,
            Some(DensitySpec::Table(t)) => Some(t.clone()),
            Some(DensitySpec::Preset(DensityPreset::Unit)) => Some(vec![1.0; mesh.n_interior()]),
            Some(DensitySpec::Preset(DensityPreset::Bump)) => {
                Some((0..mesh.n_interior()).map(|k| sine_mode(mesh.extents(), mesh.interior_coords(k))).collect())
            }
        };
        let mu = MeasureData { atoms, density };
        mu.validate(mesh)?;
        Ok(mu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"{
        "mesh": {"dim": 1, "n_cells": [4]},
        "coefficient": {"kind": "constant_scalar", "values": [1.0]},
        "measure": {"atoms": [{"x": 0.5, "weight": 1.0}]},
        "time": {"dt": 0.1, "t_end": 1.0}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_json(BASIC).unwrap();
        assert_eq!(c.u0, U0Spec::Zero);
        assert_eq!(c.seed, 0);
        assert!(c.g.is_none());
        let p = c.problem().unwrap();
        assert_eq!(p.mesh.n_interior(), 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = BASIC.replace("\"dt\"", "\"dtt\": 1, \"dt\"");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad = BASIC.replace("\"x\": 0.5", "\"x\": 0.5, \"z\": 1");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad = BASIC.replace("\"time\"", "\"u0\": {\"preset\": \"sine\", \"lambda\": 2}, \"time\"");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn presets_parse() {
        let c = ExperimentConfig::from_json(&BASIC.replace(
            "\"time\"",
            r#""u0": {"preset": "green_scaled", "lambda": 2.0},
               "g": {"kind": "random_piecewise", "pieces": 3},
               "time""#,
        ))
        .unwrap();
        assert_eq!(c.u0, U0Spec::GreenScaled { lambda: 2.0 });
        let c = ExperimentConfig::from_json(&BASIC.replace("}]}", "}], \"density\": \"unit\"}")).unwrap();
        assert_eq!(c.measure.density, Some(DensitySpec::Preset(DensityPreset::Unit)));
        let c = ExperimentConfig::from_json(&BASIC.replace("}]}", "}], \"density\": [1, 2, 3]}")).unwrap();
        assert_eq!(c.measure.density, Some(DensitySpec::Table(vec![1.0, 2.0, 3.0])));
    }

    #[test]
    fn boundary_atom_is_a_config_error() {
        let c = ExperimentConfig::from_json(&BASIC.replace("0.5", "1.0")).unwrap();
        let err = c.problem().unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(err.to_string().contains("boundary"), "{err}");
    }

    #[test]
    fn piecewise_g_is_blockwise_constant() {
        let c = ExperimentConfig::from_json(&BASIC.replace("\"time\"", r#""g": {"kind": "random_piecewise", "pieces": 2}, "time""#)).unwrap();
        let p = c.problem().unwrap();
        let g = c.dual_source(&p.mesh, c.time_grid().unwrap()).unwrap();
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], g[4]);
        assert_eq!(g[5], g[9]);
        assert_ne!(g[4], g[5]);
    }
}
