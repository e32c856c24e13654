//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use measure_heat_core::{Atom, CoefficientField, MeasureData, Mesh, SpatialOperators};

/// Unit square, anisotropic non-symmetric coefficient, one interior atom.
pub fn square(n: usize) -> (SpatialOperators, MeasureData) {
    let mesh = Arc::new(Mesh::unit_2d(n, n).expect("mesh"));
    let m = CoefficientField::matrix(2, [[1.0, 0.2], [-0.2, 0.5]]).expect("coefficient");
    let ops = SpatialOperators::new(mesh, &m).expect("operators");
    (ops, MeasureData { atoms: vec![Atom::at_2d(0.3, 0.6, 1.0)], density: None })
}

/// Unit interval with the Laplacian and a unit atom at the midpoint.
pub fn interval(n: usize) -> (SpatialOperators, MeasureData) {
    let mesh = Arc::new(Mesh::unit_1d(n).expect("mesh"));
    let m = CoefficientField::scalar(1, 1.0).expect("coefficient");
    let ops = SpatialOperators::new(mesh, &m).expect("operators");
    (ops, MeasureData::dirac([0.5, 0.0], 1.0))
}
