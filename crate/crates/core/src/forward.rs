//! Linearly implicit three-level finite-difference scheme for the forward problem.
//!
//! Level 2 comes from one explicit Euler step. Every later level solves two
//! tridiagonal systems in which the diffusion terms act on the three-level
//! average `(u^{n+1} + u^n + u^{n-1}) / 3` while the reaction terms and the
//! face diffusivities are frozen at level `n`:
//!
//! ```text
//! -alpha S_{i-1} + (1 + 2 alpha) S_i - alpha S_{i+1} = f_i
//! -lam_i M_{i-1} + (1 + lam_i + lam_{i+1}) M_i - lam_{i+1} M_{i+1} = g_i
//! alpha = 2 dt d1 / (3 dx^2),  lam_i = 2 dt d2 / (3 dx^2) lambda((M_i + M_{i-1}) / 2)
//! ```
//!
//! The `S` matrix does not change between steps and is factored once.

use serde::Serialize;

use crate::cases::ManufacturedCase;
use crate::error::{Error, Result};
use crate::model::{diffusivity, monod, FieldSolution, Grid, ParamVector, ProblemData};
use crate::tridiag::{solve_tridiagonal, TridiagonalFactor, TridiagonalSystem};

/// Magnitude beyond which a solve is declared unstable.
pub const BLOW_UP_LIMIT: f64 = 1e6;

/// `alpha` and the face coefficients of one time level.
///
/// `faces[k]` belongs to the face between nodes `k` and `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeCoefficients {
    pub alpha: f64,
    pub faces: Vec<f64>,
}

impl SchemeCoefficients {
    pub fn new(params: &ParamVector, grid: &Grid, m_level: &[f64]) -> Result<Self> {
        let ratio = 2.0 * grid.dt() / (3.0 * grid.dx() * grid.dx());
        let faces = face_diffusivities(params, m_level)?
            .into_iter()
            .map(|l| ratio * params.d2() * l)
            .collect();
        Ok(SchemeCoefficients { alpha: ratio * params.d1(), faces })
    }
}

/// `lambda` at the midpoint average of each pair of neighbouring nodes.
///
/// Negative undershoot is clamped to zero inside the argument only.
fn face_diffusivities(params: &ParamVector, m: &[f64]) -> Result<Vec<f64>> {
    m.windows(2)
        .map(|w| diffusivity((0.5 * (w[0] + w[1])).max(0.0), params.a(), params.b()))
        .collect()
}

fn level_values(field: &crate::model::Field, grid: &Grid, n: usize) -> Result<Vec<f64>> {
    let t = grid.t(n);
    (0..grid.nx()).map(|i| field.eval(grid.x(i), t)).collect()
}

fn initial_level(data: &ProblemData, grid: &Grid) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = (0..grid.nx()).map(|i| data.s0.eval(grid.x(i), 0.0)).collect::<Result<_>>()?;
    let m = (0..grid.nx()).map(|i| data.m0.eval(grid.x(i), 0.0)).collect::<Result<_>>()?;
    Ok((s, m))
}

fn set_boundary(data: &ProblemData, t: f64, s: &mut [f64], m: &mut [f64]) -> Result<()> {
    let last = s.len() - 1;
    s[0] = data.mu(1, t)?;
    s[last] = data.mu(2, t)?;
    m[0] = data.mu(3, t)?;
    m[last] = data.mu(4, t)?;
    Ok(())
}

/// Explicit Euler step from the initial profiles to level 2 (`t = dt`).
pub fn first_step(data: &ProblemData, params: &ParamVector, grid: &Grid) -> Result<(Vec<f64>, Vec<f64>)> {
    let (s1, m1) = initial_level(data, grid)?;
    explicit_step(data, params, grid, &s1, &m1)
}

fn explicit_step(
    data: &ProblemData,
    params: &ParamVector,
    grid: &Grid,
    s1: &[f64],
    m1: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let nx = grid.nx();
    let dt = grid.dt();
    let r = dt / (grid.dx() * grid.dx());
    let f = level_values(&data.f, grid, 0)?;
    let g = level_values(&data.g, grid, 0)?;
    let lam = face_diffusivities(params, m1)?;
    let mut s2 = vec![0.0; nx];
    let mut m2 = vec![0.0; nx];
    for i in 1..nx - 1 {
        let react = monod(s1[i], m1[i], params.k4())?;
        s2[i] = s1[i] + params.d1() * r * (s1[i + 1] - 2.0 * s1[i] + s1[i - 1]) - params.k1() * dt * react
            + dt * f[i];
        m2[i] = m1[i] - params.k2() * dt * m1[i] + params.k3() * dt * react + dt * g[i]
            + params.d2() * r * (lam[i] * (m1[i + 1] - m1[i]) - lam[i - 1] * (m1[i] - m1[i - 1]));
    }
    set_boundary(data, grid.t(1), &mut s2, &mut m2)?;
    Ok((s2, m2))
}

/// Three-level stepper for one `(data, params, grid)` triple.
pub struct ThreeLevelStepper<'a> {
    data: &'a ProblemData,
    params: ParamVector,
    grid: Grid,
    alpha: f64,
    s_factor: TridiagonalFactor,
}

impl<'a> ThreeLevelStepper<'a> {
    pub fn new(data: &'a ProblemData, params: &ParamVector, grid: &Grid) -> Result<Self> {
        let m = grid.nx() - 2;
        let alpha = 2.0 * grid.dt() * params.d1() / (3.0 * grid.dx() * grid.dx());
        let s_factor = TridiagonalFactor::new(&vec![-alpha; m - 1], &vec![1.0 + 2.0 * alpha; m], &vec![-alpha; m - 1])?;
        Ok(ThreeLevelStepper { data, params: *params, grid: *grid, alpha, s_factor })
    }

    /// Assembles the `S` and `M` systems that advance levels `n - 1`, `n` to `n + 1`.
    ///
    /// `n` is the 0-based index of the current level, so `1 <= n <= nt - 2`.
    pub fn assemble(
        &self,
        prev: (&[f64], &[f64]),
        cur: (&[f64], &[f64]),
        n: usize,
    ) -> Result<(TridiagonalSystem, TridiagonalSystem)> {
        let (s0, m0) = prev;
        let (s1, m1) = cur;
        let p = &self.params;
        let grid = &self.grid;
        let nx = grid.nx();
        if n == 0 || n + 1 >= grid.nt() {
            return Err(Error::Precondition(format!("level {n} has no predecessor or successor")));
        }
        let dt2 = 2.0 * grid.dt();
        let coef = SchemeCoefficients::new(p, grid, m1)?;
        let lam = &coef.faces;
        let alpha = self.alpha;
        let f = level_values(&self.data.f, grid, n)?;
        let g = level_values(&self.data.g, grid, n)?;
        let t_next = grid.t(n + 1);

        let rows = nx - 2;
        let mut fs = Vec::with_capacity(rows);
        let mut gs = Vec::with_capacity(rows);
        let mut diag_m = Vec::with_capacity(rows);
        for i in 1..nx - 1 {
            let react = monod(s1[i], m1[i], p.k4())?;
            let fi = alpha
                * (s1[i + 1] + s0[i + 1] - 2.0 * s1[i] - 2.0 * s0[i] + s1[i - 1] + s0[i - 1])
                + s0[i]
                - dt2 * p.k1() * react
                + dt2 * f[i];
            let gi = lam[i] * (m1[i + 1] + m0[i + 1] - m1[i] - m0[i])
                - lam[i - 1] * (m1[i] + m0[i] - m1[i - 1] - m0[i - 1])
                + m0[i]
                - dt2 * p.k2() * m1[i]
                + dt2 * p.k3() * react
                + dt2 * g[i];
            fs.push(fi);
            gs.push(gi);
            diag_m.push(1.0 + lam[i - 1] + lam[i]);
        }
        fs[0] += alpha * self.data.mu(1, t_next)?;
        fs[rows - 1] += alpha * self.data.mu(2, t_next)?;
        gs[0] += lam[0] * self.data.mu(3, t_next)?;
        gs[rows - 1] += lam[nx - 2] * self.data.mu(4, t_next)?;

        let s_sys = TridiagonalSystem {
            sub: vec![-alpha; rows - 1],
            diag: vec![1.0 + 2.0 * alpha; rows],
            sup: vec![-alpha; rows - 1],
            rhs: fs,
        };
        let off: Vec<f64> = lam[1..nx - 2].iter().map(|l| -l).collect();
        let m_sys = TridiagonalSystem { sub: off.clone(), diag: diag_m, sup: off, rhs: gs };
        Ok((s_sys, m_sys))
    }

    /// Computes level `n + 1` from levels `n - 1` and `n`.
    pub fn step(&self, prev: (&[f64], &[f64]), cur: (&[f64], &[f64]), n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let (s_sys, m_sys) = self.assemble(prev, cur, n)?;
        let mut s_int = s_sys.rhs;
        self.s_factor.solve_in_place(&mut s_int);
        let m_int = solve_tridiagonal(&m_sys)?;
        let nx = self.grid.nx();
        let mut s = Vec::with_capacity(nx);
        let mut m = Vec::with_capacity(nx);
        s.push(0.0);
        s.extend_from_slice(&s_int);
        s.push(0.0);
        m.push(0.0);
        m.extend_from_slice(&m_int);
        m.push(0.0);
        set_boundary(self.data, self.grid.t(n + 1), &mut s, &mut m)?;
        Ok((s, m))
    }
}

/// One three-level step. Builds a fresh stepper; [`solve_forward`] reuses one.
pub fn step_three_level(
    prev: (&[f64], &[f64]),
    cur: (&[f64], &[f64]),
    n: usize,
    params: &ParamVector,
    grid: &Grid,
    data: &ProblemData,
) -> Result<(Vec<f64>, Vec<f64>)> {
    ThreeLevelStepper::new(data, params, grid)?.step(prev, cur, n)
}

fn check_blow_up(level: usize, s: &[f64], m: &[f64]) -> Result<()> {
    let worst = s.iter().chain(m).fold(0.0f64, |acc, v| if v.is_nan() { f64::INFINITY } else { acc.max(v.abs()) });
    if worst > BLOW_UP_LIMIT {
        return Err(Error::BlowUp { level, value: worst });
    }
    Ok(())
}

/// Marches the scheme over the whole grid.
pub fn solve_forward(data: &ProblemData, params: &ParamVector, grid: &Grid) -> Result<FieldSolution> {
    data.check_compatibility()?;
    let nx = grid.nx();
    let nt = grid.nt();
    let mut s = Vec::with_capacity(nx * nt);
    let mut m = Vec::with_capacity(nx * nt);

    let (s1, m1) = initial_level(data, grid)?;
    let (s2, m2) = explicit_step(data, params, grid, &s1, &m1)?;
    check_blow_up(1, &s2, &m2)?;
    s.extend_from_slice(&s1);
    s.extend_from_slice(&s2);
    m.extend_from_slice(&m1);
    m.extend_from_slice(&m2);

    let stepper = ThreeLevelStepper::new(data, params, grid)?;
    for n in 1..nt - 1 {
        let prev = (n - 1) * nx..n * nx;
        let cur = n * nx..(n + 1) * nx;
        let (sn, mn) = stepper.step((&s[prev.clone()], &m[prev]), (&s[cur.clone()], &m[cur]), n)?;
        check_blow_up(n + 1, &sn, &mn)?;
        s.extend_from_slice(&sn);
        m.extend_from_slice(&mn);
    }
    FieldSolution::new(*grid, s, m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub dx: f64,
    pub dt: f64,
    pub err_s: f64,
    pub err_m: f64,
    /// Observed order of `max(err_s, err_m)` against the previous row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log err_s` against `log dx`.
    pub slope_s: f64,
    pub slope_m: f64,
    /// Slope of the combined error `max(err_s, err_m)`.
    pub slope: f64,
    /// `max err / (dx^2 + dt^2)` over the meshes.
    pub constant: f64,
}

impl ConvergenceTable {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("dx,dt,errS,errM,order\n");
        for r in &self.rows {
            let order = r.order.map(|o| o.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", r.dx, r.dt, r.err_s, r.err_m, order));
        }
        out
    }
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Solves `case` on square meshes `dx = dt = h` and tabulates max-norm errors.
pub fn convergence_study(case: &ManufacturedCase, meshes: &[f64]) -> Result<ConvergenceTable> {
    if meshes.len() < 2 {
        return Err(Error::Precondition(format!(
            "a convergence study needs at least two meshes, got {}",
            meshes.len()
        )));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(meshes.len());
    for &h in meshes {
        let grid = Grid::uniform(h, case.t_final)?;
        let sol = solve_forward(&case.data, &case.params, &grid)?;
        let (err_s, err_m) = sol.max_errors(|x, t| case.exact_s(x, t), |x, t| case.exact_m(x, t));
        let order = rows.last().map(|prev| {
            let e0 = prev.err_s.max(prev.err_m);
            let e1 = err_s.max(err_m);
            (e0 / e1).ln() / (prev.dx / grid.dx()).ln()
        });
        rows.push(ConvergenceRow { dx: grid.dx(), dt: grid.dt(), err_s, err_m, order });
    }
    let lx: Vec<f64> = rows.iter().map(|r| r.dx.ln()).collect();
    let ls: Vec<f64> = rows.iter().map(|r| r.err_s.ln()).collect();
    let lm: Vec<f64> = rows.iter().map(|r| r.err_m.ln()).collect();
    let lc: Vec<f64> = rows.iter().map(|r| r.err_s.max(r.err_m).ln()).collect();
    let constant = rows
        .iter()
        .map(|r| r.err_s.max(r.err_m) / (r.dx * r.dx + r.dt * r.dt))
        .fold(0.0, f64::max);
    Ok(ConvergenceTable {
        slope_s: ls_slope(&lx, &ls),
        slope_m: ls_slope(&lx, &lm),
        slope: ls_slope(&lx, &lc),
        rows,
        constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{example1, example2, trivial_case};

    fn max_dev(a: &[f64], f: impl Fn(usize) -> f64) -> f64 {
        a.iter().enumerate().map(|(i, v)| (v - f(i)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn first_step_example1() {
        let c = example1();
        let g = Grid::new(11, 11, 1.0).unwrap();
        let (s2, m2) = first_step(&c.data, &c.params, &g).unwrap();
        let t = g.t(1);
        assert!(max_dev(&s2, |i| c.exact_s(g.x(i), t)) <= 5e-3);
        assert!(max_dev(&m2, |i| c.exact_m(g.x(i), t)) <= 5e-3);
    }

    #[test]
    fn first_step_example2() {
        let c = example2();
        let g = Grid::new(101, 101, 1.0).unwrap();
        let (_, m2) = first_step(&c.data, &c.params, &g).unwrap();
        let t = g.t(1);
        assert!(max_dev(&m2, |i| c.exact_m(g.x(i), t)) <= 5e-4);
    }

    #[test]
    fn trivial_solution_is_stationary() {
        let c = trivial_case();
        let g = Grid::new(11, 11, 1.0).unwrap();
        let (s2, m2) = first_step(&c.data, &c.params, &g).unwrap();
        assert!(s2.iter().all(|&v| v == 1.0) && m2.iter().all(|&v| v == 0.0));
        // elimination reproduces 1 only up to round-off
        let sol = solve_forward(&c.data, &c.params, &g).unwrap();
        assert!(sol.s_values().iter().all(|&v| (v - 1.0).abs() < 1e-13));
        assert!(sol.m_values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn example1_coarse_march_matches_reference_errors() {
        let c = example1();
        let sol = solve_forward(&c.data, &c.params, &Grid::new(11, 11, 1.0).unwrap()).unwrap();
        let (es, em) = sol.max_errors(|x, t| c.exact_s(x, t), |x, t| c.exact_m(x, t));
        assert!((es / 1.74e-4 - 1.0).abs() <= 0.2, "errS = {es:e}");
        assert!((em / 2.30e-3 - 1.0).abs() <= 0.2, "errM = {em:e}");
    }

    #[test]
    fn single_step_matches_stepper() {
        let c = example1();
        let g = Grid::new(11, 11, 1.0).unwrap();
        let sol = solve_forward(&c.data, &c.params, &g).unwrap();
        let (s, m) = step_three_level(
            (sol.s_level(0), sol.m_level(0)),
            (sol.s_level(1), sol.m_level(1)),
            1,
            &c.params,
            &g,
            &c.data,
        )
        .unwrap();
        assert_eq!(s.as_slice(), sol.s_level(2));
        assert_eq!(m.as_slice(), sol.m_level(2));
    }

    #[test]
    fn step_rejects_first_level() {
        let c = example1();
        let g = Grid::new(11, 11, 1.0).unwrap();
        let z = vec![0.0; 11];
        assert!(step_three_level((&z, &z), (&z, &z), 0, &c.params, &g, &c.data).is_err());
    }

    #[test]
    fn boundary_columns_are_imposed() {
        let c = example1();
        let g = Grid::new(21, 21, 1.0).unwrap();
        let sol = solve_forward(&c.data, &c.params, &g).unwrap();
        for n in 0..g.nt() {
            assert_eq!(sol.s(0, n), 1.0);
            assert_eq!(sol.s(20, n), 1.0);
            assert_eq!(sol.m(0, n), 0.0);
            assert_eq!(sol.m(20, n), 0.0);
        }
    }

    #[test]
    fn systems_are_diagonally_dominant() {
        for c in [example1(), example2()] {
            let g = Grid::new(41, 41, 1.0).unwrap();
            let sol = solve_forward(&c.data, &c.params, &g).unwrap();
            let st = ThreeLevelStepper::new(&c.data, &c.params, &g).unwrap();
            for n in 1..g.nt() - 1 {
                let (a, b) = st
                    .assemble((sol.s_level(n - 1), sol.m_level(n - 1)), (sol.s_level(n), sol.m_level(n)), n)
                    .unwrap();
                assert!(a.is_strictly_diagonally_dominant());
                assert!(b.is_strictly_diagonally_dominant());
            }
        }
    }

    #[test]
    fn singular_diffusivity_is_propagated() {
        let c = example1();
        let mut data = c.data.clone();
        data.m0 = crate::model::Field::analytic(|x, _| if x > 0.0 && x < 1.0 { 1.0 } else { 0.0 });
        let g = Grid::new(11, 11, 1.0).unwrap();
        assert!(matches!(first_step(&data, &c.params, &g), Err(Error::Singularity { .. })));
    }

    #[test]
    fn blow_up_is_detected() {
        let c = example1();
        let mut data = c.data.clone();
        data.f = crate::model::Field::Constant(1e9);
        let g = Grid::new(11, 11, 1.0).unwrap();
        assert!(matches!(solve_forward(&data, &c.params, &g), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn convergence_study_needs_two_meshes() {
        assert!(matches!(convergence_study(&example1(), &[0.1]), Err(Error::Precondition(_))));
    }

    #[test]
    fn example2_fine_mesh_accuracy() {
        let c = example2();
        let sol = solve_forward(&c.data, &c.params, &Grid::new(101, 201, 1.0).unwrap()).unwrap();
        let (_, em) = sol.max_errors(|x, t| c.exact_s(x, t), |x, t| c.exact_m(x, t));
        assert!(em <= 1e-3, "errM = {em:e}");
    }

    // With dt = dx the explicitly frozen flux nonlinearity is unstable where
    // lambda(M) = M vanishes near the walls; the error is O(1) by t = 1.
    #[test]
    fn example2_square_fine_mesh_degrades() {
        let c = example2();
        let sol = solve_forward(&c.data, &c.params, &Grid::new(101, 101, 1.0).unwrap()).unwrap();
        let g = sol.grid();
        let half = g.nt() / 2;
        let early = (0..g.nx())
            .map(|i| (sol.m(i, half) - c.exact_m(g.x(i), g.t(half))).abs())
            .fold(0.0, f64::max);
        let late = (0..g.nx())
            .map(|i| (sol.m(i, g.nt() - 1) - c.exact_m(g.x(i), 1.0)).abs())
            .fold(0.0, f64::max);
        assert!(early < 1e-3, "error at t = 0.5: {early:e}");
        assert!(late > 0.1, "error at t = 1: {late:e}");
    }

    #[test]
    fn example2_convergence_order() {
        let table = convergence_study(&example2(), &[0.1, 0.05]).unwrap();
        let order = table.rows[1].order.unwrap();
        assert!((1.5..=2.5).contains(&order), "order {order}");
    }
}
