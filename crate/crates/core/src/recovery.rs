//! Closed-form recovery of the eight coefficients from full space-time fields.
//!
//! The stages run in a fixed order: `d1` from a point where the reaction term
//! of the substrate equation vanishes, then `(K1, K4)` from two points of the
//! substrate equation, `(K2, K3)` from the spatially integrated biofilm equation
//! at two times, and finally `(a, b, d2)` from three critical points of `M`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::cases::{ExactSolution, ManufacturedCase};
use crate::error::{Error, Result};
use crate::model::{admissibility_violations, monod, Field, FieldSolution, ParamVector, PARAM_NAMES};
use crate::quadrature::{simpson, simpson_fn, trapezoid};

/// Values below this are treated as zero in assumption checks and determinants.
pub const ZERO_TOL: f64 = 1e-10;
/// Largest `|M_x|` accepted at a critical point.
pub const GRADIENT_TOL: f64 = 1e-8;
/// Minimum separation of the three `M` values at the critical points.
pub const M_SEPARATION: f64 = 1e-6;
/// Largest condition number accepted for the `(a, b, d2)` system.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Simpson nodes for spatial integrals of analytic fields.
pub const ANALYTIC_NODES: usize = 2001;
/// Recovered values within this distance of a bound are snapped onto it.
pub const ADMISSIBILITY_SLACK: f64 = 1e-9;

const DOMAIN_TOL: f64 = 1e-12;

pub type Point = (f64, f64);

/// Read access to `S`, `M`, their derivatives and the sources at arbitrary points.
pub trait FieldProbe {
    fn t_final(&self) -> f64;
    fn s(&self, x: f64, t: f64) -> Result<f64>;
    fn m(&self, x: f64, t: f64) -> Result<f64>;
    fn s_t(&self, x: f64, t: f64) -> Result<f64>;
    fn s_xx(&self, x: f64, t: f64) -> Result<f64>;
    fn m_t(&self, x: f64, t: f64) -> Result<f64>;
    fn m_x(&self, x: f64, t: f64) -> Result<f64>;
    fn m_xx(&self, x: f64, t: f64) -> Result<f64>;
    fn f(&self, x: f64, t: f64) -> Result<f64>;
    fn g(&self, x: f64, t: f64) -> Result<f64>;

    /// `int_0^1 M(x, t) dx`
    fn integral_m(&self, t: f64) -> Result<f64> {
        simpson_fn(|x| self.m(x, t), 0.0, 1.0, ANALYTIC_NODES)
    }

    /// `int_0^1 S M / (K4 + S) dx`
    fn integral_uptake(&self, t: f64, k4: f64) -> Result<f64> {
        simpson_fn(|x| monod(self.s(x, t)?, self.m(x, t)?, k4), 0.0, 1.0, ANALYTIC_NODES)
    }

    /// `int_0^1 (M_t - G) dx`
    fn integral_growth(&self, t: f64) -> Result<f64> {
        simpson_fn(|x| Ok(self.m_t(x, t)? - self.g(x, t)?), 0.0, 1.0, ANALYTIC_NODES)
    }
}

/// Probe backed by closed-form fields.
pub struct AnalyticProbe<'a> {
    exact: &'a dyn ExactSolution,
    f: &'a Field,
    g: &'a Field,
    t_final: f64,
}

impl<'a> AnalyticProbe<'a> {
    pub fn new(exact: &'a dyn ExactSolution, f: &'a Field, g: &'a Field, t_final: f64) -> Self {
        AnalyticProbe { exact, f, g, t_final }
    }

    pub fn from_case(case: &'a ManufacturedCase) -> Self {
        Self::new(case.exact(), &case.data.f, &case.data.g, case.t_final)
    }
}

impl FieldProbe for AnalyticProbe<'_> {
    fn t_final(&self) -> f64 {
        self.t_final
    }
    fn s(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.exact.s(x, t))
    }
    fn m(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.exact.m(x, t))
    }
    fn s_t(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.exact.s_t(x, t))
    }
    fn s_xx(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.exact.s_xx(x, t))
    }
    fn m_t(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.exact.m_t(x, t))
    }
    fn m_x(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.exact.m_x(x, t))
    }
    fn m_xx(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.exact.m_xx(x, t))
    }
    fn f(&self, x: f64, t: f64) -> Result<f64> {
        self.f.eval(x, t)
    }
    fn g(&self, x: f64, t: f64) -> Result<f64> {
        self.g.eval(x, t)
    }
}

/// Probe backed by grid values; points snap to the nearest node and
/// derivatives are second-order differences (one-sided at the edges).
pub struct SampledProbe<'a> {
    sol: &'a FieldSolution,
    f: &'a Field,
    g: &'a Field,
}

// second-order first and second differences of `v(k)`, k = 0..len
fn diff1(v: impl Fn(usize) -> f64, k: usize, len: usize, h: f64) -> f64 {
    if k == 0 {
        (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * h)
    } else if k == len - 1 {
        (3.0 * v(k) - 4.0 * v(k - 1) + v(k - 2)) / (2.0 * h)
    } else {
        (v(k + 1) - v(k - 1)) / (2.0 * h)
    }
}

fn diff2(v: impl Fn(usize) -> f64, k: usize, len: usize, h: f64) -> f64 {
    if k == 0 {
        (2.0 * v(0) - 5.0 * v(1) + 4.0 * v(2) - v(3)) / (h * h)
    } else if k == len - 1 {
        (2.0 * v(k) - 5.0 * v(k - 1) + 4.0 * v(k - 2) - v(k - 3)) / (h * h)
    } else {
        (v(k + 1) - 2.0 * v(k) + v(k - 1)) / (h * h)
    }
}

/// Simpson's rule on an odd node count, the trapezoid rule otherwise.
fn node_quadrature(values: &[f64], h: f64) -> f64 {
    if values.len() % 2 == 1 {
        simpson(values, h).unwrap_or_else(|_| trapezoid(values, h))
    } else {
        trapezoid(values, h)
    }
}

impl<'a> SampledProbe<'a> {
    pub fn new(sol: &'a FieldSolution, f: &'a Field, g: &'a Field) -> Result<Self> {
        let grid = sol.grid();
        if grid.nx() < 5 {
            return Err(Error::Precondition(format!(
                "sampled probe needs at least 5 spatial nodes, got {}",
                grid.nx()
            )));
        }
        if grid.nt() < 4 {
            return Err(Error::Precondition(format!(
                "sampled probe needs at least 4 time levels, got {}",
                grid.nt()
            )));
        }
        Ok(SampledProbe { sol, f, g })
    }

    fn node(&self, x: f64, t: f64) -> Result<(usize, usize)> {
        check_point((x, t), self.t_final())?;
        let grid = self.sol.grid();
        let i = (x / grid.dx()).round() as usize;
        let n = (t / grid.dt()).round() as usize;
        Ok((i.min(grid.nx() - 1), n.min(grid.nt() - 1)))
    }

    fn level_integral(&self, n: usize) -> f64 {
        node_quadrature(self.sol.m_level(n), self.sol.grid().dx())
    }
}

impl FieldProbe for SampledProbe<'_> {
    fn t_final(&self) -> f64 {
        self.sol.grid().t_final()
    }
    fn s(&self, x: f64, t: f64) -> Result<f64> {
        let (i, n) = self.node(x, t)?;
        Ok(self.sol.s(i, n))
    }
    fn m(&self, x: f64, t: f64) -> Result<f64> {
        let (i, n) = self.node(x, t)?;
        Ok(self.sol.m(i, n))
    }
    fn s_t(&self, x: f64, t: f64) -> Result<f64> {
        let (i, n) = self.node(x, t)?;
        let grid = self.sol.grid();
        Ok(diff1(|k| self.sol.s(i, k), n, grid.nt(), grid.dt()))
    }
    fn s_xx(&self, x: f64, t: f64) -> Result<f64> {
        let (i, n) = self.node(x, t)?;
        let grid = self.sol.grid();
        Ok(diff2(|k| self.sol.s(k, n), i, grid.nx(), grid.dx()))
    }
    fn m_t(&self, x: f64, t: f64) -> Result<f64> {
        let (i, n) = self.node(x, t)?;
        let grid = self.sol.grid();
        Ok(diff1(|k| self.sol.m(i, k), n, grid.nt(), grid.dt()))
    }
    fn m_x(&self, x: f64, t: f64) -> Result<f64> {
        let (i, n) = self.node(x, t)?;
        let grid = self.sol.grid();
        Ok(diff1(|k| self.sol.m(k, n), i, grid.nx(), grid.dx()))
    }
    fn m_xx(&self, x: f64, t: f64) -> Result<f64> {
        let (i, n) = self.node(x, t)?;
        let grid = self.sol.grid();
        Ok(diff2(|k| self.sol.m(k, n), i, grid.nx(), grid.dx()))
    }
    fn f(&self, x: f64, t: f64) -> Result<f64> {
        let (i, n) = self.node(x, t)?;
        let grid = self.sol.grid();
        self.f.eval(grid.x(i), grid.t(n))
    }
    fn g(&self, x: f64, t: f64) -> Result<f64> {
        let (i, n) = self.node(x, t)?;
        let grid = self.sol.grid();
        self.g.eval(grid.x(i), grid.t(n))
    }

    fn integral_m(&self, t: f64) -> Result<f64> {
        let (_, n) = self.node(0.0, t)?;
        Ok(self.level_integral(n))
    }

    fn integral_uptake(&self, t: f64, k4: f64) -> Result<f64> {
        let (_, n) = self.node(0.0, t)?;
        let vals = self
            .sol
            .s_level(n)
            .iter()
            .zip(self.sol.m_level(n))
            .map(|(s, m)| monod(*s, *m, k4))
            .collect::<Result<Vec<_>>>()?;
        Ok(node_quadrature(&vals, self.sol.grid().dx()))
    }

    /// Time derivative of the biomass series minus the integrated source.
    fn integral_growth(&self, t: f64) -> Result<f64> {
        let (_, n) = self.node(0.0, t)?;
        let grid = self.sol.grid();
        let de = diff1(|k| self.level_integral(k), n, grid.nt(), grid.dt());
        let gs = (0..grid.nx()).map(|i| self.g.eval(grid.x(i), grid.t(n))).collect::<Result<Vec<_>>>()?;
        Ok(de - node_quadrature(&gs, grid.dx()))
    }
}

/// Points at which the four recovery stages are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationPoints {
    pub p0: Point,
    pub p1: Point,
    pub p2: Point,
    pub t3: f64,
    pub t4: f64,
    pub p5: Point,
    pub p6: Point,
    pub p7: Point,
}

fn check_point(p: Point, t_final: f64) -> Result<()> {
    let (x, t) = p;
    let inside = |v: f64, hi: f64| (-DOMAIN_TOL..=hi + DOMAIN_TOL).contains(&v);
    if !(inside(x, 1.0) && inside(t, t_final)) {
        return Err(Error::Precondition(format!(
            "point ({x}, {t}) lies outside [0, 1] x [0, {t_final}]"
        )));
    }
    Ok(())
}

impl EvaluationPoints {
    /// Points used with the second manufactured case (`M = 4x(1-x) t e^{1-t}`).
    pub fn example2_reference() -> Self {
        EvaluationPoints {
            p0: (0.5, 1.0),
            p1: (0.5, 0.5),
            p2: (0.5, 1.0),
            t3: 0.5,
            t4: 1.0,
            p5: (0.5, 1.0 / 3.0),
            p6: (0.5, 0.5),
            p7: (0.5, 2.0 / 3.0),
        }
    }

    pub fn validate(&self, t_final: f64) -> Result<()> {
        for p in [self.p0, self.p1, self.p2, self.p5, self.p6, self.p7] {
            check_point(p, t_final)?;
        }
        check_point((0.0, self.t3), t_final)?;
        check_point((0.0, self.t4), t_final)?;
        if self.t3 == self.t4 {
            return Err(Error::Precondition("t3 and t4 must differ".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct D1Stage {
    pub d1: f64,
    /// `S_xx` at the point, the denominator of the quotient.
    pub laplacian: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct K1K4Stage {
    pub k1: f64,
    pub k4: f64,
    pub determinant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct K2K3Stage {
    pub k2: f64,
    pub k3: f64,
    /// Determinant of the row-normalized 2x2 matrix.
    pub determinant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbD2Stage {
    pub a: f64,
    pub b: f64,
    pub d2: f64,
    pub condition: f64,
    /// The right-hand sides `N_j`.
    pub logs: [f64; 3],
}

/// `d1 = (S_t - F) / S_xx` at a point where the uptake term vanishes.
pub fn recover_d1(probe: &dyn FieldProbe, p0: Point) -> Result<D1Stage> {
    check_point(p0, probe.t_final())?;
    let (x, t) = p0;
    let s = probe.s(x, t)?;
    let m = probe.m(x, t)?;
    let lap = probe.s_xx(x, t)?;
    if !(lap.abs() >= ZERO_TOL) {
        return Err(Error::Assumption {
            clause: "i",
            detail: format!("S_xx = {lap:e} vanishes at ({x}, {t})"),
        });
    }
    if s.abs() > ZERO_TOL && m.abs() > ZERO_TOL {
        return Err(Error::Assumption {
            clause: "i",
            detail: format!("neither S = {s:e} nor M = {m:e} vanishes at ({x}, {t})"),
        });
    }
    let d1 = (probe.s_t(x, t)? - probe.f(x, t)?) / lap;
    Ok(D1Stage { d1, laplacian: lap })
}

fn substrate_row(probe: &dyn FieldProbe, p: Point, d1: f64) -> Result<(f64, f64, f64)> {
    check_point(p, probe.t_final())?;
    let (x, t) = p;
    let c = probe.s_t(x, t)? - d1 * probe.s_xx(x, t)? - probe.f(x, t)?;
    Ok((c, probe.s(x, t)?, probe.m(x, t)?))
}

/// `(K1, K4)` from the substrate equation at two points, by Cramer's rule.
pub fn recover_k1_k4(probe: &dyn FieldProbe, p1: Point, p2: Point, d1: f64) -> Result<K1K4Stage> {
    let (c1, s1, m1) = substrate_row(probe, p1, d1)?;
    let (c2, s2, m2) = substrate_row(probe, p2, d1)?;
    let det = c1 * s2 * m2 - c2 * s1 * m1;
    if !(det.abs() >= ZERO_TOL) {
        return Err(Error::Determinant { stage: "K1, K4", value: det });
    }
    Ok(K1K4Stage {
        k1: (s1 - s2) * c1 * c2 / det,
        k4: s1 * s2 * (c2 * m1 - c1 * m2) / det,
        determinant: det,
    })
}

/// Solves `-K2 A_j + K3 B_j = R_j` for rows `[A_j, B_j, R_j]`.
///
/// Returns `(K2, K3, det)` with `det` the determinant after scaling each
/// `(A_j, B_j)` to unit length.
pub fn solve_integral_system(rows: [[f64; 3]; 2]) -> Result<(f64, f64, f64)> {
    let [[a1, b1, r1], [a2, b2, r2]] = rows;
    let n1 = a1.hypot(b1);
    let n2 = a2.hypot(b2);
    let normalized = if n1 > 0.0 && n2 > 0.0 { (a1 * b2 - a2 * b1) / (n1 * n2) } else { 0.0 };
    if !(normalized.abs() >= ZERO_TOL) {
        return Err(Error::Determinant { stage: "K2, K3", value: normalized });
    }
    let det = a2 * b1 - a1 * b2;
    let k2 = (r1 * b2 - r2 * b1) / det;
    let k3 = (a2 * r1 - a1 * r2) / det;
    Ok((k2, k3, normalized))
}

/// `(K2, K3)` from the spatially integrated biofilm equation at two times.
pub fn recover_k2_k3(probe: &dyn FieldProbe, t3: f64, t4: f64, k4: f64) -> Result<K2K3Stage> {
    if t3 == t4 {
        return Err(Error::Precondition("t3 and t4 must differ".into()));
    }
    let row = |t: f64| -> Result<[f64; 3]> {
        check_point((0.0, t), probe.t_final())?;
        Ok([probe.integral_m(t)?, probe.integral_uptake(t, k4)?, probe.integral_growth(t)?])
    };
    let (k2, k3, determinant) = solve_integral_system([row(t3)?, row(t4)?])?;
    Ok(K2K3Stage { k2, k3, determinant })
}

fn critical_value(probe: &dyn FieldProbe, p: Point, k2: f64, k3: f64, k4: f64) -> Result<(f64, f64)> {
    check_point(p, probe.t_final())?;
    let (x, t) = p;
    let m = probe.m(x, t)?;
    let mx = probe.m_x(x, t)?;
    let mxx = probe.m_xx(x, t)?;
    let fail = |detail: String| Err(Error::Assumption { clause: "iv", detail });
    if !(m > 0.0 && m < 1.0) {
        return fail(format!("M = {m} at ({x}, {t}) is not inside (0, 1)"));
    }
    if !(mx.abs() <= GRADIENT_TOL) {
        return fail(format!("M_x = {mx:e} at ({x}, {t}) is not zero"));
    }
    if !(mxx.abs() >= ZERO_TOL) {
        return fail(format!("M_xx = {mxx:e} vanishes at ({x}, {t})"));
    }
    let bracket = (probe.m_t(x, t)? - probe.g(x, t)? + k2 * m - k3 * monod(probe.s(x, t)?, m, k4)?) / mxx;
    if !(bracket > 0.0) {
        return fail(format!("d2 lambda(M) = {bracket:e} at ({x}, {t}) is not positive"));
    }
    Ok((m, bracket.ln()))
}

/// `(a, b, d2)` from `-a log(1 - M_j) + b log(M_j) + log(d2) = N_j` at three critical points.
pub fn recover_a_b_d2(
    probe: &dyn FieldProbe,
    pts: [Point; 3],
    k2: f64,
    k3: f64,
    k4: f64,
) -> Result<AbD2Stage> {
    let mut ms = [0.0; 3];
    let mut logs = [0.0; 3];
    for (j, p) in pts.iter().enumerate() {
        (ms[j], logs[j]) = critical_value(probe, *p, k2, k3, k4)?;
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        if (ms[i] - ms[j]).abs() < M_SEPARATION {
            return Err(Error::Precondition(format!(
                "M values {} and {} at the critical points are not distinct",
                ms[i], ms[j]
            )));
        }
    }
    let mat = Matrix3::from_fn(|r, c| match c {
        0 => -(1.0 - ms[r]).ln(),
        1 => ms[r].ln(),
        _ => 1.0,
    });
    let sv = mat.singular_values();
    let condition = if sv.min() > 0.0 { sv.max() / sv.min() } else { f64::INFINITY };
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::Assumption {
            clause: "iv",
            detail: format!("critical-point system is ill-posed (condition number {condition:e})"),
        });
    }
    let sol = mat
        .lu()
        .solve(&Vector3::from(logs))
        .ok_or_else(|| Error::Assumption { clause: "iv", detail: "critical-point system is singular".into() })?;
    Ok(AbD2Stage { a: sol[0], b: sol[1], d2: sol[2].exp(), condition, logs })
}

/// Raw recovered coefficients, possibly outside the admissible set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RawParams {
    pub d1: f64,
    pub d2: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub a: f64,
    pub b: f64,
}

impl RawParams {
    pub fn to_array(&self) -> [f64; 8] {
        [self.d1, self.d2, self.k1, self.k2, self.k3, self.k4, self.a, self.b]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryReport {
    pub points: EvaluationPoints,
    pub raw: RawParams,
    /// The recovered vector, when it is admissible up to [`ADMISSIBILITY_SLACK`].
    pub params: Option<ParamVector>,
    /// Coefficients outside the admissible set, with the bound each breaks.
    pub violations: Vec<String>,
    pub d1_stage: D1Stage,
    pub k1_k4_stage: K1K4Stage,
    pub k2_k3_stage: K2K3Stage,
    pub a_b_d2_stage: AbD2Stage,
}

fn admissible_vector(raw: [f64; 8]) -> (Option<ParamVector>, Vec<String>) {
    let mut snapped = raw;
    for (k, v) in snapped.iter_mut().enumerate() {
        let lo = match PARAM_NAMES[k] {
            "K2" | "a" => 0.0,
            "b" => 1.0,
            _ => continue,
        };
        if *v < lo && *v > lo - ADMISSIBILITY_SLACK {
            *v = lo;
        }
    }
    let violations: Vec<String> = admissibility_violations(&snapped)
        .into_iter()
        .map(|(p, bound)| format!("{} = {} (needs {bound})", p.name(), raw[p.index()]))
        .collect();
    (ParamVector::from_array(snapped).ok(), violations)
}

/// Runs the four stages in order; the first failing stage aborts.
pub fn recover_all(probe: &dyn FieldProbe, pts: &EvaluationPoints) -> Result<RecoveryReport> {
    pts.validate(probe.t_final())?;
    let s1 = recover_d1(probe, pts.p0)?;
    let s2 = recover_k1_k4(probe, pts.p1, pts.p2, s1.d1)?;
    let s3 = recover_k2_k3(probe, pts.t3, pts.t4, s2.k4)?;
    let s4 = recover_a_b_d2(probe, [pts.p5, pts.p6, pts.p7], s3.k2, s3.k3, s2.k4)?;
    let raw = RawParams { d1: s1.d1, d2: s4.d2, k1: s2.k1, k2: s3.k2, k3: s3.k3, k4: s2.k4, a: s4.a, b: s4.b };
    let (params, violations) = admissible_vector(raw.to_array());
    Ok(RecoveryReport {
        points: *pts,
        raw,
        params,
        violations,
        d1_stage: s1,
        k1_k4_stage: s2,
        k2_k3_stage: s3,
        a_b_d2_stage: s4,
    })
}

/// Spatial and temporal node counts of the scan lattice.
const PAIR_AXIS_NODES: usize = 21;
const TRIPLE_CANDIDATES: usize = 60;

fn axis(count: usize, hi: f64) -> Vec<f64> {
    (0..count).map(|k| hi * k as f64 / (count - 1) as f64).collect()
}

fn thin<T: Copy>(v: &[T], limit: usize) -> Vec<T> {
    if v.len() <= limit {
        return v.to_vec();
    }
    (0..limit).map(|k| v[k * (v.len() - 1) / (limit - 1)]).collect()
}

/// Searches a `resolution.0 x resolution.1` lattice of `[0,1] x [0,T]` for
/// points meeting every recovery assumption.
///
/// The first and last time levels are skipped: time derivatives of sampled
/// fields are one-sided there.
///
/// Stages are chosen in order, each maximizing its own determinant given
/// the coefficients recovered so far; ties keep the first lattice point.
pub fn scan_points(probe: &dyn FieldProbe, resolution: (usize, usize)) -> Result<EvaluationPoints> {
    let (nx, nt) = resolution;
    if nx < 2 || nt < 4 {
        return Err(Error::Precondition(format!("scan lattice must be at least 2 x 4, got {nx} x {nt}")));
    }
    let xs = axis(nx, 1.0);
    let mut ts = axis(nt, probe.t_final());
    ts.pop();
    ts.remove(0);
    let nodes: Vec<Point> = ts.iter().flat_map(|&t| xs.iter().map(move |&x| (x, t))).collect();

    // (i)
    let mut p0 = None;
    let mut best = 0.0;
    for &(x, t) in &nodes {
        if let Ok(st) = recover_d1(probe, (x, t)) {
            if st.d1 > 0.0 && st.d1.is_finite() && st.laplacian.abs() > best {
                best = st.laplacian.abs();
                p0 = Some(((x, t), st.d1));
            }
        }
    }
    let (p0, d1) = p0.ok_or_else(|| {
        Error::NoValidPoints("assumption (i): no node where S or M vanishes with S_xx != 0 and d1 > 0".into())
    })?;

    // (ii) on a coarser sub-lattice
    let coarse: Vec<Point> = thin(&ts, PAIR_AXIS_NODES)
        .iter()
        .flat_map(|&t| thin(&xs, PAIR_AXIS_NODES).into_iter().map(move |x| (x, t)))
        .collect();
    let rows: Vec<(Point, (f64, f64, f64))> = coarse
        .iter()
        .filter_map(|&p| substrate_row(probe, p, d1).ok().map(|r| (p, r)))
        .filter(|(_, (c, s, m))| c.is_finite() && s.is_finite() && m.is_finite())
        .collect();
    let mut pair = None;
    let mut best = ZERO_TOL;
    for i in 0..rows.len() {
        let (c1, s1, m1) = rows[i].1;
        for (pj, (c2, s2, m2)) in &rows[i + 1..] {
            let det = (c1 * s2 * m2 - c2 * s1 * m1).abs();
            if det > best {
                best = det;
                pair = Some((rows[i].0, *pj));
            }
        }
    }
    let (p1, p2) = pair.ok_or_else(|| {
        Error::NoValidPoints("assumption (ii): every pair of substrate rows is linearly dependent".into())
    })?;
    let k14 = recover_k1_k4(probe, p1, p2, d1)?;

    // (iii)
    let times = thin(&ts, PAIR_AXIS_NODES);
    let int_rows: Vec<(f64, f64, f64)> = times
        .iter()
        .filter_map(|&t| Some((t, probe.integral_m(t).ok()?, probe.integral_uptake(t, k14.k4).ok()?)))
        .filter(|(_, a, b)| a.is_finite() && b.is_finite() && a.hypot(*b) > 0.0)
        .collect();
    let mut tpair = None;
    let mut best = ZERO_TOL;
    for i in 0..int_rows.len() {
        let (t1, a1, b1) = int_rows[i];
        for &(t2, a2, b2) in &int_rows[i + 1..] {
            let det = ((a1 * b2 - a2 * b1) / (a1.hypot(b1) * a2.hypot(b2))).abs();
            if det > best {
                best = det;
                tpair = Some((t1, t2));
            }
        }
    }
    let (t3, t4) = tpair.ok_or_else(|| {
        Error::NoValidPoints("assumption (iii): the integral rows are linearly dependent at every time pair".into())
    })?;
    let k23 = recover_k2_k3(probe, t3, t4, k14.k4)?;

    // (iv)
    let mut crit: Vec<(Point, f64)> = nodes
        .iter()
        .filter_map(|&p| critical_value(probe, p, k23.k2, k23.k3, k14.k4).ok().map(|(m, _)| (p, m)))
        .collect();
    crit = thin(&crit, TRIPLE_CANDIDATES);
    let row = |m: f64| {
        let r = Vector3::new(-(1.0 - m).ln(), m.ln(), 1.0);
        r / r.norm()
    };
    let mut triple = None;
    let mut best = 0.0;
    for i in 0..crit.len() {
        for j in i + 1..crit.len() {
            for k in j + 1..crit.len() {
                let (mi, mj, mk) = (crit[i].1, crit[j].1, crit[k].1);
                if (mi - mj).abs() < M_SEPARATION || (mi - mk).abs() < M_SEPARATION || (mj - mk).abs() < M_SEPARATION {
                    continue;
                }
                let det = Matrix3::from_rows(&[row(mi).transpose(), row(mj).transpose(), row(mk).transpose()])
                    .determinant()
                    .abs();
                if det > best {
                    best = det;
                    triple = Some([crit[i].0, crit[j].0, crit[k].0]);
                }
            }
        }
    }
    let [p5, p6, p7] = triple.ok_or_else(|| {
        Error::NoValidPoints(format!(
            "assumption (iv): found {} critical points, need three with distinct M",
            crit.len()
        ))
    })?;
    Ok(EvaluationPoints { p0, p1, p2, t3, t4, p5, p6, p7 })
}
