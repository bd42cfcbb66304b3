//! Fixtures shared by the benchmarks.

use pnpch_core::{
    make_fixed_charge, make_initial_condition, split_steric, CellField, ChargeSpec, Electrostatics,
    InitSpec, Model, PeriodicGrid, SpeciesSet, SquareMatrix, StepConfig, Stepper, SystemState,
};

/// The 2D pattern-formation setup on an `n x n` grid and its seeded
/// initial state.
pub fn patterns(n: usize, sigma: f64) -> (Stepper, SystemState) {
    let grid = PeriodicGrid::new(2, n, -3.0, 3.0).expect("valid grid");
    let rho = make_fixed_charge(
        &ChargeSpec::LinePair {
            surface_density: 0.5,
            negative_x: -1.5,
            positive_x: 1.5,
        },
        &grid,
    )
    .expect("line charges");
    let g = SquareMatrix::from_rows(vec![vec![1.0, 15.0], vec![15.0, 1.0]]).expect("square");
    let species = SpeciesSet::binary(0.304, sigma).expect("species");
    let model = Model::new(
        species.clone(),
        split_steric(&g).expect("split"),
        Electrostatics::new(0.185, rho).expect("electrostatics"),
    )
    .expect("model");
    let init = InitSpec::Random {
        means: vec![1.0, 1.0],
        amplitude: 0.01,
    };
    let c = make_initial_condition(&init, &grid, &species, 20211).expect("initial data");
    let stepper = Stepper::new(model, StepConfig::new(0.01)).expect("stepper");
    let state = stepper.initial_state(c).expect("initial state");
    (stepper, state)
}

/// A smooth positive field on `grid`.
pub fn smooth(grid: &PeriodicGrid) -> CellField {
    CellField::from_fn(grid, |x| {
        1.0 + 0.3 * x.iter().map(|v| (1.3 * v).sin()).product::<f64>()
    })
}
