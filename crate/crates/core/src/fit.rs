//! Least-squares identification of the coefficients from flux and biomass series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::solve_forward;
use crate::lm::{self, LmSettings, Termination};
use crate::model::{admissibility_violations, Grid, Param, ParamVector, ProblemData};
use crate::observables::{biomass, boundary_flux, MeasurementSet};

/// Default box, in storage order `(d1, d2, K1, K2, K3, K4, a, b)`.
pub const DEFAULT_LOWER: [f64; 8] = [1e-10, 1e-10, 1e-10, 0.0, 1e-10, 1e-10, 0.0, 1.0];
pub const DEFAULT_UPPER: [f64; 8] = [1e10; 8];

/// Measurement times must match the solver levels to this tolerance.
const TIME_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    FluxOnly,
    FluxAndBiomass,
}

/// How the misfit at each time level is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeWeights {
    /// Plain sum of squares over the time levels.
    Sum,
    /// Composite trapezoid weights, approximating the L2(0,T) norm.
    Trapezoid,
}

#[derive(Debug, Clone)]
pub struct FitProblem {
    pub data: ProblemData,
    grid: Grid,
    measurements: MeasurementSet,
    base: ParamVector,
    unknowns: Vec<Param>,
    lower: [f64; 8],
    upper: [f64; 8],
    flavor: Flavor,
    k2_reduction: bool,
    pub weights: TimeWeights,
    /// Common factor applied to every squared residual.
    pub weight_scale: f64,
    pub settings: LmSettings,
}

impl FitProblem {
    /// `base` supplies the known coefficients; its unknown entries are ignored.
    pub fn new(
        data: ProblemData,
        grid: Grid,
        measurements: MeasurementSet,
        base: ParamVector,
        unknowns: &[Param],
        flavor: Flavor,
    ) -> Result<Self> {
        if unknowns.is_empty() {
            return Err(Error::Precondition("no unknown coefficients".into()));
        }
        let mut sorted = unknowns.to_vec();
        sorted.sort_by_key(|p| p.index());
        sorted.dedup();
        if sorted.len() != unknowns.len() {
            return Err(Error::Precondition("duplicate unknown coefficient".into()));
        }
        let ts = grid.ts();
        if measurements.len() != ts.len()
            || measurements.times().iter().zip(&ts).any(|(a, b)| (a - b).abs() > TIME_TOL * (1.0 + b.abs()))
        {
            return Err(Error::Measurement(format!(
                "measurement times ({} samples) do not match the {} solver time levels",
                measurements.len(),
                ts.len()
            )));
        }
        if flavor == Flavor::FluxAndBiomass && measurements.biomass().is_none() {
            return Err(Error::Measurement("biomass series required by the objective is missing".into()));
        }
        Ok(FitProblem {
            data,
            grid,
            measurements,
            base,
            unknowns: sorted,
            lower: DEFAULT_LOWER,
            upper: DEFAULT_UPPER,
            flavor,
            k2_reduction: false,
            weights: TimeWeights::Trapezoid,
            weight_scale: 1.0,
            settings: LmSettings::default(),
        })
    }

    pub fn with_bounds(mut self, p: Param, lo: f64, hi: f64) -> Result<Self> {
        let mut probe = self.base.to_array();
        probe[p.index()] = lo;
        let lo_ok = !admissibility_violations(&probe).iter().any(|(q, _)| *q == p);
        if !lo_ok || !(lo <= hi) || !hi.is_finite() {
            return Err(Error::Precondition(format!(
                "bounds [{lo}, {hi}] for {p} are empty or leave the admissible set"
            )));
        }
        self.lower[p.index()] = lo;
        self.upper[p.index()] = hi;
        Ok(self)
    }

    /// Replaces `K2` by its closed-form value in terms of `K3` and `K4` (see [`k2_reduction`]).
    pub fn with_k2_reduction(mut self, on: bool) -> Result<Self> {
        if on && self.unknowns.contains(&Param::K2) {
            return Err(Error::Precondition("K2 cannot be both unknown and eliminated".into()));
        }
        self.k2_reduction = on;
        Ok(self)
    }

    pub fn with_weights(mut self, weights: TimeWeights) -> Self {
        self.weights = weights;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn measurements(&self) -> &MeasurementSet {
        &self.measurements
    }
    pub fn unknowns(&self) -> &[Param] {
        &self.unknowns
    }
    pub fn flavor(&self) -> Flavor {
        self.flavor
    }
    pub fn k2_reduced(&self) -> bool {
        self.k2_reduction
    }
    pub fn base(&self) -> &ParamVector {
        &self.base
    }
    pub fn bounds(&self, p: Param) -> (f64, f64) {
        (self.lower[p.index()], self.upper[p.index()])
    }

    /// Unknown entries of `x`, in storage order.
    pub fn unknown_values(&self, x: &ParamVector) -> Vec<f64> {
        self.unknowns.iter().map(|p| x.get(*p)).collect()
    }

    /// Full coefficient vector from values of the unknowns.
    pub fn assemble(&self, values: &[f64]) -> Result<ParamVector> {
        if values.len() != self.unknowns.len() {
            return Err(Error::Precondition(format!(
                "expected {} unknown values, got {}",
                self.unknowns.len(),
                values.len()
            )));
        }
        let mut v = self.base.to_array();
        for (p, x) in self.unknowns.iter().zip(values) {
            v[p.index()] = *x;
        }
        if self.k2_reduction {
            v[Param::K2.index()] = k2_reduction(v[Param::K3.index()], v[Param::K4.index()])?;
        }
        ParamVector::from_array(v)
    }

    /// Takes the unknowns from `x` and everything else from the problem.
    pub fn compose(&self, x: &ParamVector) -> Result<ParamVector> {
        self.assemble(&self.unknown_values(x))
    }

    fn check_bounds(&self, values: &[f64]) -> Result<()> {
        for (p, v) in self.unknowns.iter().zip(values) {
            let (lo, hi) = self.bounds(*p);
            if !(*v >= lo && *v <= hi) {
                return Err(Error::Precondition(format!("{p} = {v} lies outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    fn time_weights(&self) -> Vec<f64> {
        let nt = self.grid.nt();
        (0..nt)
            .map(|n| {
                let w = match self.weights {
                    TimeWeights::Sum => 1.0,
                    TimeWeights::Trapezoid if n == 0 || n == nt - 1 => 0.5 * self.grid.dt(),
                    TimeWeights::Trapezoid => self.grid.dt(),
                };
                (w * self.weight_scale).sqrt()
            })
            .collect()
    }

    /// Residual vector for a fully specified coefficient vector, bounds unchecked.
    fn residuals_full(&self, full: &ParamVector) -> Result<Vec<f64>> {
        let wrap = |e: Error| Error::Residual { x: full.to_array().to_vec(), source: Box::new(e) };
        let sol = solve_forward(&self.data, full, &self.grid).map_err(wrap)?;
        let w = self.time_weights();
        let q = boundary_flux(&sol, full.d1()).map_err(wrap)?;
        let mut r: Vec<f64> = q
            .iter()
            .zip(self.measurements.flux())
            .zip(&w)
            .map(|((c, m), w)| w * (c - m))
            .collect();
        if self.flavor == Flavor::FluxAndBiomass {
            let e = biomass(&sol).map_err(wrap)?;
            let meas = self.measurements.biomass().expect("checked at construction");
            r.extend(e.iter().zip(meas).zip(&w).map(|((c, m), w)| w * (c - m)));
        }
        Ok(r)
    }

    /// Forward-difference Jacobian of the residuals with respect to the unknowns.
    pub fn jacobian(&self, x: &ParamVector) -> Result<nalgebra::DMatrix<f64>> {
        let x0 = self.unknown_values(x);
        let r0 = residuals(x, self)?;
        let upper: Vec<f64> = self.unknowns.iter().map(|p| self.upper[p.index()]).collect();
        let mut f = |v: &[f64]| self.residuals_full(&self.assemble(v)?);
        lm::forward_jacobian(&mut f, &x0, &r0, &upper, &self.settings)
    }
}

/// Stacked weighted misfits `q0^c - q0` (and `E_M^c - E_M` for the biomass flavor).
pub fn residuals(x: &ParamVector, prob: &FitProblem) -> Result<Vec<f64>> {
    let values = prob.unknown_values(x);
    prob.check_bounds(&values)?;
    prob.residuals_full(&prob.assemble(&values)?)
}

pub fn objective(x: &ParamVector, prob: &FitProblem) -> Result<f64> {
    Ok(lm::sum_of_squares(&residuals(x, prob)?))
}

/// `K2` as a function of `K3`, `K4` for the data of the first manufactured
/// case, obtained from the biomass balance at `t = 0`.
pub fn k2_reduction(k3: f64, k4: f64) -> Result<f64> {
    if !(k4 > 0.0) || !k4.is_finite() {
        return Err(Error::Domain(format!("K2 elimination needs K4 > 0, got {k4}")));
    }
    let r = (5.0 + 4.0 * k4).sqrt();
    Ok(0.454822555 + k3 * (1.0 - 6.0 * k4 + 24.0 * k4 * (k4 + 1.0) / r * (1.0 / r).atanh()))
}

/// Central-difference sensitivity `d q0 / d p` of the computed flux, one entry per time level.
pub fn flux_sensitivity(data: &ProblemData, grid: &Grid, x: &ParamVector, p: Param, step: f64) -> Result<Vec<f64>> {
    let v = x.get(p);
    let flux_at = |val: f64| -> Result<Vec<f64>> {
        let px = x.with(p, val)?;
        boundary_flux(&solve_forward(data, &px, grid)?, px.d1())
    };
    let plus = flux_at(v + step)?;
    let minus = flux_at(v - step)?;
    Ok(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * step)).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct GridScan {
    pub a_values: Vec<f64>,
    pub b_values: Vec<f64>,
    /// `values[j][i]` is the objective at `(a_values[i], b_values[j])`.
    pub values: Vec<Vec<f64>>,
    pub argmin: (f64, f64),
    pub min: f64,
}

impl GridScan {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("a,b,H\n");
        for (j, b) in self.b_values.iter().enumerate() {
            for (i, a) in self.a_values.iter().enumerate() {
                out.push_str(&format!("{a},{b},{}\n", self.values[j][i]));
            }
        }
        out
    }
}

fn lattice(range: (f64, f64), count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![range.0];
    }
    let h = (range.1 - range.0) / (count - 1) as f64;
    (0..count).map(|k| range.0 + k as f64 * h).collect()
}

/// Objective on the uniform `counts.0 x counts.1` lattice over `a_range x b_range`.
///
/// A count of one places the single node at the lower end of its range.
pub fn grid_scan(prob: &FitProblem, a_range: (f64, f64), b_range: (f64, f64), counts: (usize, usize)) -> Result<GridScan> {
    if prob.unknowns != [Param::A, Param::B] {
        return Err(Error::Precondition("grid scan needs exactly a and b unknown".into()));
    }
    if counts.0 == 0 || counts.1 == 0 {
        return Err(Error::Precondition("empty scan lattice".into()));
    }
    let a_values = lattice(a_range, counts.0);
    let b_values = lattice(b_range, counts.1);
    let mut values = Vec::with_capacity(b_values.len());
    let mut best = (f64::INFINITY, (a_values[0], b_values[0]));
    for &b in &b_values {
        let mut row = Vec::with_capacity(a_values.len());
        for &a in &a_values {
            let full = prob.assemble(&[a, b])?;
            let h = lm::sum_of_squares(&prob.residuals_full(&full)?);
            if h < best.0 {
                best = (h, (a, b));
            }
            row.push(h);
        }
        values.push(row);
    }
    Ok(GridScan { a_values, b_values, values, argmin: best.1, min: best.0 })
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub params: ParamVector,
    pub initial: ParamVector,
    pub unknowns: Vec<String>,
    pub k2_reduced: bool,
    pub objective: f64,
    /// Objective at the initial guess and after every accepted step.
    pub trace: Vec<f64>,
    pub flux_norm: f64,
    pub biomass_norm: Option<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    pub jacobian_condition: f64,
}

impl FitReport {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,J\n");
        for (k, j) in self.trace.iter().enumerate() {
            out.push_str(&format!("{k},{j}\n"));
        }
        out
    }
}

/// Bounded Levenberg–Marquardt fit of the unknowns, starting from `x0`.
pub fn fit(prob: &FitProblem, x0: &ParamVector) -> Result<FitReport> {
    let start = prob.unknown_values(x0);
    prob.check_bounds(&start)?;
    let lower: Vec<f64> = prob.unknowns.iter().map(|p| prob.lower[p.index()]).collect();
    let upper: Vec<f64> = prob.unknowns.iter().map(|p| prob.upper[p.index()]).collect();
    let f = |v: &[f64]| prob.residuals_full(&prob.assemble(v)?);
    let out = lm::minimize(f, &start, &lower, &upper, &prob.settings)?;

    let params = prob.assemble(&out.x)?;
    let nt = prob.grid.nt();
    let flux_norm = lm::sum_of_squares(&out.residual[..nt]).sqrt();
    let biomass_norm = (out.residual.len() > nt).then(|| lm::sum_of_squares(&out.residual[nt..]).sqrt());
    Ok(FitReport {
        params,
        initial: prob.assemble(&start)?,
        unknowns: prob.unknowns.iter().map(|p| p.name().to_string()).collect(),
        k2_reduced: prob.k2_reduction,
        objective: out.objective,
        trace: out.trace,
        flux_norm,
        biomass_norm,
        iterations: out.iterations,
        evaluations: out.evaluations,
        termination: out.termination,
        jacobian_condition: lm::condition_number(&out.jacobian),
    })
}

/// Fit with `K2` eliminated through [`k2_reduction`]; `K2` must not be unknown.
pub fn reduced_fit(prob: &FitProblem, x0: &ParamVector) -> Result<FitReport> {
    let reduced = prob.clone().with_k2_reduction(true)?;
    fit(&reduced, x0)
}
