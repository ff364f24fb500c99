//! Inputs shared by the benchmarks.

use biofilm_core::cases::example1;
use biofilm_core::fit::{FitProblem, Flavor};
use biofilm_core::tridiag::TridiagonalSystem;
use biofilm_core::{Grid, MeasurementSet, Param};

/// Diagonally dominant system of size `m` shaped like one implicit diffusion step.
pub fn diffusion_system(m: usize) -> TridiagonalSystem {
    let r = 0.5;
    TridiagonalSystem {
        sub: vec![-r; m - 1],
        diag: vec![1.0 + 2.0 * r; m],
        sup: vec![-r; m - 1],
        rhs: (0..m).map(|k| (k as f64 / m as f64).sin()).collect(),
    }
}

/// Two-parameter flux-only problem on the first manufactured case.
pub fn ab_problem(mesh: f64) -> FitProblem {
    let case = example1();
    let grid = Grid::uniform(mesh, case.t_final).expect("valid mesh");
    let ms = MeasurementSet::from_exact(&case, &grid).expect("exact data");
    FitProblem::new(case.data.clone(), grid, ms, case.params, &[Param::A, Param::B], Flavor::FluxOnly)
        .expect("consistent problem")
}
