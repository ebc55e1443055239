//! Fixtures shared by the criterion benches.

use pgl3::meissner::ExternalField;
use pgl3::minimize::Problem;
use pgl3::pinning::{make_pinning, PinningProfile};
use pgl3::{Grid, GridSpec, ScalarField};

pub fn ball_grid(n: usize) -> Grid {
    Grid::new(GridSpec::ball(1.0, 1.3, n)).expect("bench grid")
}

pub fn homogeneous(g: &Grid) -> ScalarField {
    make_pinning(&PinningProfile::constant(1.0), g).expect("pinning")
}

pub fn problem(n: usize, eps: f64) -> Problem {
    let g = ball_grid(n);
    Problem::new(&homogeneous(&g), eps, &ExternalField::Constant([0.0, 0.0, 1.0])).expect("problem")
}
