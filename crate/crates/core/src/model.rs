//! Domain types of the substrate/biofilm model and its nonlinear coefficients.
//!
//! The model on `(0,1) x (0,T)` reads
//!
//! ```text
//! S_t = d1 S_xx - K1 S M / (K4 + S) + F
//! M_t = d2 (lambda(M) M_x)_x - K2 M + K3 S M / (K4 + S) + G
//! lambda(M) = M^b / (1 - M)^a
//! ```
//!
//! with Dirichlet data `mu1..mu4` and initial profiles `S0`, `M0`. Node indices
//! are 0-based in code; node `i` of the grid sits at `x = i dx`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compatibility tolerance between initial profiles and boundary data.
pub const COMPATIBILITY_TOL: f64 = 1e-12;

/// Relative tolerance used to match coordinates against tabulated nodes.
const NODE_TOL: f64 = 1e-12;

/// Names of the eight coefficients, in storage order.
pub const PARAM_NAMES: [&str; 8] = ["d1", "d2", "K1", "K2", "K3", "K4", "a", "b"];

/// Index of a coefficient inside [`ParamVector::to_array`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    D1 = 0,
    D2 = 1,
    K1 = 2,
    K2 = 3,
    K3 = 4,
    K4 = 5,
    A = 6,
    B = 7,
}

impl Param {
    pub const ALL: [Param; 8] = [
        Param::D1,
        Param::D2,
        Param::K1,
        Param::K2,
        Param::K3,
        Param::K4,
        Param::A,
        Param::B,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        PARAM_NAMES[self.index()]
    }

    pub fn from_name(name: &str) -> Option<Param> {
        Param::ALL
            .iter()
            .copied()
            .find(|p| p.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The eight model coefficients `(d1, d2, K1, K2, K3, K4, a, b)`.
///
/// Construction enforces the admissible set: `d1, d2, K1 > 0`, `K2 >= 0`,
/// `K3, K4 > 0`, `a >= 0`, `b >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamVector {
    d1: f64,
    d2: f64,
    k1: f64,
    k2: f64,
    k3: f64,
    k4: f64,
    a: f64,
    b: f64,
}

impl ParamVector {
    #[allow(clippy::too_many_arguments)]
    pub fn new(d1: f64, d2: f64, k1: f64, k2: f64, k3: f64, k4: f64, a: f64, b: f64) -> Result<Self> {
        Self::from_array([d1, d2, k1, k2, k3, k4, a, b])
    }

    pub fn from_array(v: [f64; 8]) -> Result<Self> {
        if let Some((p, bound)) = admissibility_violations(&v).into_iter().next() {
            return Err(Error::ParamBound {
                name: p.name(),
                value: v[p.index()],
                bound,
            });
        }
        Ok(ParamVector {
            d1: v[0],
            d2: v[1],
            k1: v[2],
            k2: v[3],
            k3: v[4],
            k4: v[5],
            a: v[6],
            b: v[7],
        })
    }

    /// All ones with `a = 1`, `b = 2`.
    pub fn example1_truth() -> Self {
        ParamVector {
            d1: 1.0,
            d2: 1.0,
            k1: 1.0,
            k2: 1.0,
            k3: 1.0,
            k4: 1.0,
            a: 1.0,
            b: 2.0,
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        [self.d1, self.d2, self.k1, self.k2, self.k3, self.k4, self.a, self.b]
    }

    pub fn get(&self, p: Param) -> f64 {
        self.to_array()[p.index()]
    }

    /// Returns a copy with one coefficient replaced, re-validating bounds.
    pub fn with(&self, p: Param, value: f64) -> Result<Self> {
        let mut v = self.to_array();
        v[p.index()] = value;
        Self::from_array(v)
    }

    pub fn d1(&self) -> f64 {
        self.d1
    }
    pub fn d2(&self) -> f64 {
        self.d2
    }
    pub fn k1(&self) -> f64 {
        self.k1
    }
    pub fn k2(&self) -> f64 {
        self.k2
    }
    pub fn k3(&self) -> f64 {
        self.k3
    }
    pub fn k4(&self) -> f64 {
        self.k4
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
}

impl<'de> Deserialize<'de> for ParamVector {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            d1: f64,
            d2: f64,
            k1: f64,
            k2: f64,
            k3: f64,
            k4: f64,
            a: f64,
            b: f64,
        }
        let r = Raw::deserialize(de)?;
        ParamVector::new(r.d1, r.d2, r.k1, r.k2, r.k3, r.k4, r.a, r.b)
            .map_err(serde::de::Error::custom)
    }
}

/// Lists every coefficient of `v` outside the admissible set, with the bound it breaks.
pub fn admissibility_violations(v: &[f64; 8]) -> Vec<(Param, &'static str)> {
    let mut out = Vec::new();
    for p in Param::ALL {
        let x = v[p.index()];
        let bound = match p {
            Param::K2 | Param::A => ">= 0",
            Param::B => ">= 1",
            _ => "> 0",
        };
        let ok = match p {
            Param::K2 | Param::A => x >= 0.0,
            Param::B => x >= 1.0,
            _ => x > 0.0,
        };
        // NaN fails every comparison above
        if !ok || !x.is_finite() {
            out.push((p, bound));
        }
    }
    out
}

/// Uniform space-time mesh with `nx` nodes on `[0,1]` and `nt` levels on `[0,T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    nx: usize,
    nt: usize,
    t_final: f64,
}

impl Grid {
    pub fn new(nx: usize, nt: usize, t_final: f64) -> Result<Self> {
        if nx <= 2 {
            return Err(Error::Grid(format!("spatial node count I = {nx} must exceed 2")));
        }
        if nt <= 2 {
            return Err(Error::Grid(format!("time level count N = {nt} must exceed 2")));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::Grid(format!("final time T = {t_final} must be positive")));
        }
        Ok(Grid { nx, nt, t_final })
    }

    /// Square mesh `dx = dt = h` on `[0,1] x [0,T]`.
    pub fn uniform(h: f64, t_final: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::Grid(format!("mesh size {h} must lie in (0, 1)")));
        }
        let nx = (1.0 / h).round() as usize + 1;
        let nt = (t_final / h).round() as usize + 1;
        Self::new(nx, nt, t_final)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn nt(&self) -> usize {
        self.nt
    }
    pub fn t_final(&self) -> f64 {
        self.t_final
    }
    pub fn dx(&self) -> f64 {
        1.0 / (self.nx - 1) as f64
    }
    pub fn dt(&self) -> f64 {
        self.t_final / (self.nt - 1) as f64
    }
    pub fn x(&self, i: usize) -> f64 {
        i as f64 / (self.nx - 1) as f64
    }
    pub fn t(&self, n: usize) -> f64 {
        self.t_final * (n as f64 / (self.nt - 1) as f64)
    }
    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }
    pub fn ts(&self) -> Vec<f64> {
        (0..self.nt).map(|n| self.t(n)).collect()
    }
}

/// Scalar field values on a lattice, stored time-major (`t` outer, `x` inner).
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    xs: Vec<f64>,
    ts: Vec<f64>,
    values: Vec<f64>,
}

impl Table {
    pub fn new(xs: Vec<f64>, ts: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || ts.is_empty() || values.len() != xs.len() * ts.len() {
            return Err(Error::Domain(format!(
                "table of {} values does not fill a {}x{} lattice",
                values.len(),
                xs.len(),
                ts.len()
            )));
        }
        for w in [&xs, &ts] {
            if w.windows(2).any(|p| p[1] <= p[0]) {
                return Err(Error::Domain("table coordinates must be strictly increasing".into()));
            }
        }
        Ok(Table { xs, ts, values })
    }

    /// Samples a field on every node of `grid`.
    pub fn sample(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let xs = grid.xs();
        let ts = grid.ts();
        let values = ts
            .iter()
            .flat_map(|&t| xs.iter().map(move |&x| (x, t)))
            .map(|(x, t)| f(x, t))
            .collect();
        Table { xs, ts, values }
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }
    pub fn ts(&self) -> &[f64] {
        &self.ts
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn locate(coords: &[f64], v: f64) -> Option<usize> {
        let k = coords.partition_point(|&c| c < v);
        [k.checked_sub(1), Some(k)]
            .into_iter()
            .flatten()
            .filter(|&j| j < coords.len())
            .find(|&j| (coords[j] - v).abs() <= NODE_TOL * (1.0 + v.abs()))
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        match (Self::locate(&self.xs, x), Self::locate(&self.ts, t)) {
            (Some(i), Some(n)) => Ok(self.values[n * self.xs.len() + i]),
            _ => Err(Error::OffGrid { x, t }),
        }
    }

    /// Reads a `x,t,value` CSV, rows ordered by `t` then `x`.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path.as_ref())
            .map_err(csv_error)?;
        let header = rdr.headers().map_err(csv_error)?.clone();
        if header.iter().collect::<Vec<_>>() != ["x", "t", "value"] {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `x,t,value`, found `{}`", header.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let field = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Parse { line, msg: "missing column".into() })?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse { line, msg: e.to_string() })
            };
            rows.push((line, field(0)?, field(1)?, field(2)?));
        }
        let mut xs: Vec<f64> = Vec::new();
        let mut ts: Vec<f64> = Vec::new();
        for &(_, x, t, _) in &rows {
            if ts.last() != Some(&t) {
                ts.push(t);
            }
            if ts.len() == 1 {
                xs.push(x);
            }
        }
        if rows.len() != xs.len() * ts.len() {
            return Err(Error::Parse {
                line: rows.last().map_or(1, |r| r.0),
                msg: "rows do not form a complete x-by-t lattice".into(),
            });
        }
        for (k, &(line, x, t, _)) in rows.iter().enumerate() {
            if x != xs[k % xs.len()] || t != ts[k / xs.len()] {
                return Err(Error::Parse {
                    line,
                    msg: "rows must be ordered by t, then x, on a fixed lattice".into(),
                });
            }
        }
        Table::new(xs, ts, rows.into_iter().map(|r| r.3).collect())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("x,t,value\n");
        for (n, t) in self.ts.iter().enumerate() {
            for (i, x) in self.xs.iter().enumerate() {
                out.push_str(&format!("{x},{t},{}\n", self.values[n * self.xs.len() + i]));
            }
        }
        out
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line, msg: format!("{other:?}") },
    }
}

type ScalarFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// A scalar function of `(x, t)`, either a closure or a lattice of values.
///
/// Tabulated fields are evaluated only at their own nodes; there is no
/// interpolation.
#[derive(Clone)]
pub enum Field {
    Constant(f64),
    Analytic(Arc<ScalarFn>),
    Tabulated(Arc<Table>),
}

impl Field {
    pub fn analytic(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Field::Analytic(Arc::new(f))
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        match self {
            Field::Constant(c) => Ok(*c),
            Field::Analytic(f) => Ok(f(x, t)),
            Field::Tabulated(tab) => tab.eval(x, t),
        }
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Constant(c) => write!(f, "Constant({c})"),
            Field::Analytic(_) => f.write_str("Analytic(..)"),
            Field::Tabulated(t) => write!(f, "Tabulated({}x{})", t.xs.len(), t.ts.len()),
        }
    }
}

/// Boundary data, initial profiles and sources of one forward problem.
///
/// `mu1`, `mu2` are the values of `S` at `x = 0, 1`; `mu3`, `mu4` those of `M`.
/// Boundary fields are evaluated at `x = 0` or `x = 1`, initial profiles at `t = 0`.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub mu1: Field,
    pub mu2: Field,
    pub mu3: Field,
    pub mu4: Field,
    pub s0: Field,
    pub m0: Field,
    pub f: Field,
    pub g: Field,
}

impl ProblemData {
    /// Homogeneous problem with `S = 1`, `M = 0` on the boundary.
    pub fn homogeneous(s0: Field, m0: Field) -> Self {
        ProblemData {
            mu1: Field::Constant(1.0),
            mu2: Field::Constant(1.0),
            mu3: Field::Constant(0.0),
            mu4: Field::Constant(0.0),
            s0,
            m0,
            f: Field::Constant(0.0),
            g: Field::Constant(0.0),
        }
    }

    pub fn mu(&self, k: usize, t: f64) -> Result<f64> {
        match k {
            1 => self.mu1.eval(0.0, t),
            2 => self.mu2.eval(1.0, t),
            3 => self.mu3.eval(0.0, t),
            4 => self.mu4.eval(1.0, t),
            _ => Err(Error::Domain(format!("boundary datum mu{k} does not exist"))),
        }
    }

    /// Checks `S0` and `M0` against the boundary data at `t = 0`.
    pub fn check_compatibility(&self) -> Result<()> {
        let pairs = [
            ("S0(0) = mu1(0)", self.s0.eval(0.0, 0.0)?, self.mu(1, 0.0)?),
            ("S0(1) = mu2(0)", self.s0.eval(1.0, 0.0)?, self.mu(2, 0.0)?),
            ("M0(0) = mu3(0)", self.m0.eval(0.0, 0.0)?, self.mu(3, 0.0)?),
            ("M0(1) = mu4(0)", self.m0.eval(1.0, 0.0)?, self.mu(4, 0.0)?),
        ];
        for (what, lhs, rhs) in pairs {
            if (lhs - rhs).abs() > COMPATIBILITY_TOL {
                return Err(Error::Compatibility(format!("{what} fails: {lhs} vs {rhs}")));
            }
        }
        Ok(())
    }
}

/// Substrate and biofilm values on every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolution {
    grid: Grid,
    s: Vec<f64>,
    m: Vec<f64>,
}

impl FieldSolution {
    /// Builds a solution from time-major arrays of length `nx * nt`.
    pub fn new(grid: Grid, s: Vec<f64>, m: Vec<f64>) -> Result<Self> {
        let len = grid.nx() * grid.nt();
        if s.len() != len || m.len() != len {
            return Err(Error::Domain(format!(
                "field arrays of length {}/{} do not match a {}x{} grid",
                s.len(),
                m.len(),
                grid.nx(),
                grid.nt()
            )));
        }
        Ok(FieldSolution { grid, s, m })
    }

    /// Samples analytic fields on every grid node.
    pub fn sample(grid: Grid, s: impl Fn(f64, f64) -> f64, m: impl Fn(f64, f64) -> f64) -> Self {
        let s = Table::sample(&grid, s).values;
        let m = Table::sample(&grid, m).values;
        FieldSolution { grid, s, m }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn s(&self, i: usize, n: usize) -> f64 {
        self.s[n * self.grid.nx() + i]
    }
    pub fn m(&self, i: usize, n: usize) -> f64 {
        self.m[n * self.grid.nx() + i]
    }
    pub fn s_level(&self, n: usize) -> &[f64] {
        let nx = self.grid.nx();
        &self.s[n * nx..(n + 1) * nx]
    }
    pub fn m_level(&self, n: usize) -> &[f64] {
        let nx = self.grid.nx();
        &self.m[n * nx..(n + 1) * nx]
    }
    pub fn s_values(&self) -> &[f64] {
        &self.s
    }
    pub fn m_values(&self) -> &[f64] {
        &self.m
    }

    /// Max-norm distance of both fields to analytic references on the grid nodes.
    pub fn max_errors(&self, s: impl Fn(f64, f64) -> f64, m: impl Fn(f64, f64) -> f64) -> (f64, f64) {
        let mut es: f64 = 0.0;
        let mut em: f64 = 0.0;
        for n in 0..self.grid.nt() {
            let t = self.grid.t(n);
            for i in 0..self.grid.nx() {
                let x = self.grid.x(i);
                es = es.max((self.s(i, n) - s(x, t)).abs());
                em = em.max((self.m(i, n) - m(x, t)).abs());
            }
        }
        (es, em)
    }

    /// `x,t,S,M` rows ordered by `t`, then `x`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("x,t,S,M\n");
        for n in 0..self.grid.nt() {
            let t = self.grid.t(n);
            for i in 0..self.grid.nx() {
                out.push_str(&format!("{},{},{},{}\n", self.grid.x(i), t, self.s(i, n), self.m(i, n)));
            }
        }
        out
    }
}

/// Nonlinear biofilm diffusivity `M^b / (1 - M)^a`.
///
/// `M = 1` is admitted only when `a = 0`, where the denominator is identically one.
pub fn diffusivity(m: f64, a: f64, b: f64) -> Result<f64> {
    if m < 0.0 || m.is_nan() {
        return Err(Error::Domain(format!("diffusivity needs M >= 0, got {m}")));
    }
    if a > 0.0 && m >= 1.0 {
        return Err(Error::Singularity { value: m, a });
    }
    if a == 0.0 {
        return Ok(m.powf(b));
    }
    Ok(m.powf(b) / (1.0 - m).powf(a))
}

/// Monod reaction quotient `S M / (K4 + S)`.
pub fn monod(s: f64, m: f64, k4: f64) -> Result<f64> {
    let den = k4 + s;
    if den <= 0.0 || den.is_nan() {
        return Err(Error::Domain(format!("Monod denominator K4 + S = {den} must be positive")));
    }
    Ok(s * m / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diffusivity_examples() {
        assert_eq!(diffusivity(0.0, 1.0, 2.0).unwrap(), 0.0);
        assert_eq!(diffusivity(0.5, 0.0, 1.0).unwrap(), 0.5);
        assert!((diffusivity(0.5, 1.0, 2.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn diffusivity_errors() {
        match diffusivity(1.0, 1.0, 2.0) {
            Err(Error::Singularity { value, .. }) => assert_eq!(value, 1.0),
            other => panic!("expected singularity, got {other:?}"),
        }
        assert!(matches!(diffusivity(1.2, 0.5, 1.0), Err(Error::Singularity { .. })));
        assert!(matches!(diffusivity(-0.1, 1.0, 2.0), Err(Error::Domain(_))));
        // a = 0 has no singularity at M = 1
        assert_eq!(diffusivity(1.0, 0.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn diffusivity_is_monotone() {
        for &(a, b) in &[(0.0, 1.0), (1.0, 2.0), (0.3, 1.0), (4.0, 4.0), (2.5, 1.7)] {
            let mut prev = 0.0;
            for k in 0..1000 {
                let m = k as f64 / 1000.0;
                let v = diffusivity(m, a, b).unwrap();
                assert!(v >= prev, "a={a} b={b} M={m}");
                prev = v;
            }
        }
    }

    #[test]
    fn monod_examples() {
        assert_eq!(monod(1.0, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(monod(0.0, 0.5, 1.0).unwrap(), 0.0);
        assert_eq!(monod(1.0, 0.25, 1.0).unwrap(), 0.125);
        assert!(monod(-1.0, 0.5, 1.0).is_err());
        assert!(monod(-2.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn param_vector_rejects_each_bound() {
        let good = [1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        assert!(ParamVector::from_array(good).is_ok());
        let bad = [0.0, 0.0, 0.0, -1e-3, 0.0, 0.0, -0.5, 0.99];
        for k in 0..8 {
            let mut v = good;
            v[k] = bad[k];
            match ParamVector::from_array(v) {
                Err(Error::ParamBound { name, .. }) => assert_eq!(name, PARAM_NAMES[k]),
                other => panic!("component {k}: expected bound error, got {other:?}"),
            }
        }
        let mut v = good;
        v[0] = f64::NAN;
        assert!(ParamVector::from_array(v).is_err());
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let g = Grid::new(101, 37, 1.3).unwrap();
        assert_eq!(g.x(0), 0.0);
        assert_eq!(g.x(100), 1.0);
        assert_eq!(g.t(0), 0.0);
        assert!((g.t(36) - 1.3).abs() <= f64::EPSILON * 1.3);
        assert!(Grid::new(2, 10, 1.0).is_err());
        assert!(Grid::new(10, 2, 1.0).is_err());
        assert!(Grid::new(10, 10, 0.0).is_err());
        let u = Grid::uniform(0.01, 1.0).unwrap();
        assert_eq!((u.nx(), u.nt()), (101, 101));
    }

    #[test]
    fn table_lookup_is_node_exact() {
        let g = Grid::new(5, 3, 1.0).unwrap();
        let tab = Table::sample(&g, |x, t| x + 10.0 * t);
        assert_eq!(tab.eval(0.25, 0.5).unwrap(), 5.25);
        assert!(matches!(tab.eval(0.3, 0.5), Err(Error::OffGrid { .. })));
    }

    #[test]
    fn table_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let g = Grid::new(7, 4, 0.7).unwrap();
        let tab = Table::sample(&g, |x, t| (x * 3.1).sin() * (-t).exp() / 7.0);
        tab.write_csv(&path).unwrap();
        assert_eq!(Table::read_csv(&path).unwrap(), tab);
    }

    #[test]
    fn table_csv_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x,t,value\n0,0,1\n1,0,oops\n").unwrap();
        match Table::read_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn compatibility_is_checked() {
        let ok = ProblemData::homogeneous(Field::Constant(1.0), Field::Constant(0.0));
        assert!(ok.check_compatibility().is_ok());
        let bad = ProblemData::homogeneous(Field::Constant(1.0), Field::analytic(|x, _| 0.1 + x));
        assert!(matches!(bad.check_compatibility(), Err(Error::Compatibility(_))));
    }

    proptest! {
        #[test]
        fn admissible_vectors_round_trip(
            d1 in 1e-6..10.0f64, d2 in 1e-6..10.0f64, k1 in 1e-6..10.0f64, k2 in 0.0..10.0f64,
            k3 in 1e-6..10.0f64, k4 in 1e-6..10.0f64, a in 0.0..5.0f64, b in 1.0..5.0f64,
        ) {
            let v = [d1, d2, k1, k2, k3, k4, a, b];
            let p = ParamVector::from_array(v).unwrap();
            prop_assert_eq!(p.to_array(), v);
        }
    }
}
