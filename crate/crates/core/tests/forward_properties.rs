use biofilm_core::cases::example1;
use biofilm_core::forward::{convergence_study, solve_forward};
use biofilm_core::{FieldSolution, Grid, ParamVector};
use proptest::prelude::*;

fn max_asymmetry(sol: &FieldSolution) -> f64 {
    let g = sol.grid();
    let nx = g.nx();
    let mut worst: f64 = 0.0;
    for n in 0..g.nt() {
        let (s, m) = (sol.s_level(n), sol.m_level(n));
        for i in 0..nx {
            worst = worst.max((s[i] - s[nx - 1 - i]).abs()).max((m[i] - m[nx - 1 - i]).abs());
        }
    }
    worst
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn convergence_constant_stays_small() {
    let table = convergence_study(&example1(), &[0.1, 0.05, 0.01]).unwrap();
    // hand check of the stored constant from the rows
    let recomputed = table
        .rows
        .iter()
        .map(|r| r.err_s.max(r.err_m) / (r.dx * r.dx + r.dt * r.dt))
        .fold(0.0, f64::max);
    assert!((table.constant - recomputed).abs() <= 1e-12 * recomputed);
    assert!(table.constant <= 0.45, "constant {}", table.constant);
}

#[test]
fn rectangular_mesh_is_symmetric() {
    let case = example1();
    let sol = solve_forward(&case.data, &case.params, &Grid::new(41, 23, 1.0).unwrap()).unwrap();
    assert!(max_asymmetry(&sol) <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn symmetric_data_gives_symmetric_solution(
        d1 in 0.5..2.0f64, d2 in 0.5..2.0f64, k1 in 0.0..2.0f64, k2 in 0.0..2.0f64,
        k3 in 0.0..2.0f64, k4 in 0.2..2.0f64, a in 0.0..2.0f64, b in 1.0..3.0f64,
    ) {
        let case = example1();
        let x = ParamVector::new(d1, d2, k1, k2, k3, k4, a, b).unwrap();
        let grid = Grid::uniform(0.05, 1.0).unwrap();
        let sol = solve_forward(&case.data, &x, &grid);
        prop_assume!(sol.is_ok());
        prop_assert!(max_asymmetry(&sol.unwrap()) <= 1e-12);
    }

    #[test]
    fn reruns_are_bit_identical(a in 0.0..3.0f64, b in 1.0..3.0f64, h in prop::sample::select(vec![0.1, 0.05, 0.025])) {
        let case = example1();
        let x = case.params.with(biofilm_core::Param::A, a).unwrap().with(biofilm_core::Param::B, b).unwrap();
        let grid = Grid::uniform(h, 1.0).unwrap();
        let first = solve_forward(&case.data, &x, &grid).unwrap();
        let second = solve_forward(&case.data, &x, &grid).unwrap();
        prop_assert_eq!(bits(first.s_values()), bits(second.s_values()));
        prop_assert_eq!(bits(first.m_values()), bits(second.m_values()));
    }
}
