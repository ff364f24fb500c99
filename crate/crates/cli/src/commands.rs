use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use biofilm_core::cases::{case_by_name, ManufacturedCase};
use biofilm_core::fit::{fit, grid_scan, reduced_fit, FitProblem, FitReport, Flavor, TimeWeights};
use biofilm_core::forward::{convergence_study, solve_forward};
use biofilm_core::observables::{add_noise, read_measurements};
use biofilm_core::recovery::{recover_all, scan_points, AnalyticProbe, EvaluationPoints, FieldProbe, RecoveryReport, SampledProbe};
use biofilm_core::{Error, ErrorKind, Field, Grid, MeasurementSet, Param, ParamVector, ProblemData, Table};
use serde::Serialize;

use crate::config::{CaseName, Command, FlavorArg, Opts, ParamMap, SourceArg, WeightsArg};

pub const DEFAULT_MESH: f64 = 0.01;
const DEFAULT_MESHES: [f64; 3] = [0.1, 0.05, 0.01];
const DEFAULT_SCAN_RESOLUTION: (usize, usize) = (101, 101);

/// Initial guess `a = 2, b = 1`, `K_i = d2 = 0.5`, with `d1 = 1.3`.
const DEFAULT_GUESS: [f64; 8] = [1.3, 0.5, 0.5, 0.5, 0.5, 0.5, 2.0, 1.0];

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Core(e) => match e.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Numerical => 3,
                ErrorKind::Assumption => 4,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            3 => "numerical",
            4 => "assumption",
            _ => "config",
        }
    }

    pub fn message(&self) -> String {
        match self {
            Failure::Config(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "code": self.exit_code(), "message": self.message() }).to_string()
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Config(msg.into()))
}

pub struct Outcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(&path).map_err(|e| Failure::from(e.error))?;
    Ok(path)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Failure::Config(format!("cannot encode report: {e}")))?;
    s.push('\n');
    Ok(s)
}

struct Problem {
    label: String,
    data: ProblemData,
    params: ParamVector,
    t_final: f64,
    case: Option<ManufacturedCase>,
}

fn param(name: &str) -> Result<Param, Failure> {
    Param::from_name(name).ok_or_else(|| Failure::Config(format!("unknown coefficient `{name}`")))
}

fn apply(base: ParamVector, map: &ParamMap) -> Result<ParamVector, Failure> {
    let mut v = base;
    for (k, x) in &map.0 {
        v = v.with(param(k)?, *x)?;
    }
    Ok(v)
}

fn table_field(dir: &Path, name: &str, default: Option<f64>) -> Result<Field, Failure> {
    let path = dir.join(format!("{name}.csv"));
    if path.exists() {
        return Ok(Field::Tabulated(Arc::new(Table::read_csv(&path)?)));
    }
    match default {
        Some(c) => Ok(Field::Constant(c)),
        None => config_err(format!("custom case needs {}", path.display())),
    }
}

fn load_problem(o: &Opts) -> Result<Problem, Failure> {
    let name = o.case.unwrap_or(CaseName::Example1);
    let (label, data, base, t_final, case) = match name {
        CaseName::Custom => {
            let Some(dir) = &o.data_dir else {
                return config_err("--case custom needs --data-dir");
            };
            if !dir.is_dir() {
                return config_err(format!("data directory {} does not exist", dir.display()));
            }
            let data = ProblemData {
                mu1: table_field(dir, "mu1", Some(1.0))?,
                mu2: table_field(dir, "mu2", Some(1.0))?,
                mu3: table_field(dir, "mu3", Some(0.0))?,
                mu4: table_field(dir, "mu4", Some(0.0))?,
                s0: table_field(dir, "s0", None)?,
                m0: table_field(dir, "m0", None)?,
                f: table_field(dir, "f", Some(0.0))?,
                g: table_field(dir, "g", Some(0.0))?,
            };
            let t = o.t_final.unwrap_or(1.0);
            ("custom".to_string(), data, ParamVector::example1_truth(), t, None)
        }
        CaseName::Example1 | CaseName::Example2 => {
            let key = if name == CaseName::Example1 { "example1" } else { "example2" };
            let case = case_by_name(key).expect("built-in case");
            if let Some(t) = o.t_final {
                if t != case.t_final {
                    return config_err(format!("{key} is posed on T = {}, got t_final = {t}", case.t_final));
                }
            }
            (key.to_string(), case.data.clone(), case.params, case.t_final, Some(case))
        }
    };
    let params = match &o.params {
        Some(map) => apply(base, map)?,
        None => base,
    };
    Ok(Problem { label, data, params, t_final, case })
}

fn grid(o: &Opts, t_final: f64) -> Result<Grid, Failure> {
    let h = o.mesh.unwrap_or(DEFAULT_MESH);
    if o.nx.is_none() && o.nt.is_none() {
        return Ok(Grid::uniform(h, t_final)?);
    }
    let count = |len: f64| -> Result<usize, Failure> {
        if !(h > 0.0 && h < 1.0) {
            return config_err(format!("mesh size {h} must lie in (0, 1)"));
        }
        Ok((len / h).round() as usize + 1)
    };
    let nx = match o.nx {
        Some(n) => n,
        None => count(1.0)?,
    };
    let nt = match o.nt {
        Some(n) => n,
        None => count(t_final)?,
    };
    Ok(Grid::new(nx, nt, t_final)?)
}

fn out_dir(o: &Opts) -> PathBuf {
    o.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn manufactured<'a>(p: &'a Problem, what: &str) -> Result<&'a ManufacturedCase, Failure> {
    p.case
        .as_ref()
        .ok_or_else(|| Failure::Config(format!("{what} needs a manufactured case (example1 or example2)")))
}

fn measurements(o: &Opts, p: &Problem, grid: &Grid) -> Result<MeasurementSet, Failure> {
    if let Some(path) = &o.measurements {
        if !path.is_file() {
            return config_err(format!("measurement file {} does not exist", path.display()));
        }
        return Ok(read_measurements(path)?);
    }
    let exact = o.exact.unwrap_or(p.case.is_some());
    let ms = if exact {
        MeasurementSet::from_exact(manufactured(p, "--exact")?, grid)?
    } else {
        let sol = solve_forward(&p.data, &p.params, grid)?;
        MeasurementSet::from_solution(&sol, p.params.d1(), true)?
    };
    let ms = if o.biomass.unwrap_or(true) { ms } else { ms.flux_only() };
    match o.noise {
        Some(level) if level != 0.0 => Ok(add_noise(&ms, level, o.seed.unwrap_or(0))?),
        _ => Ok(ms),
    }
}

fn weights(o: &Opts, default: TimeWeights) -> TimeWeights {
    match o.weights {
        Some(WeightsArg::Sum) => TimeWeights::Sum,
        Some(WeightsArg::Trapezoid) => TimeWeights::Trapezoid,
        None => default,
    }
}

fn flavor(o: &Opts) -> Flavor {
    match o.flavor {
        Some(FlavorArg::FluxAndBiomass) => Flavor::FluxAndBiomass,
        _ => Flavor::FluxOnly,
    }
}

fn unknowns(o: &Opts) -> Result<Vec<Param>, Failure> {
    match &o.unknowns {
        None => Ok(vec![Param::A, Param::B]),
        Some(list) if list.len() == 1 && list[0].eq_ignore_ascii_case("all") => Ok(Param::ALL.to_vec()),
        Some(list) => list.iter().map(|s| param(s.trim())).collect(),
    }
}

fn fit_problem(o: &Opts, p: &Problem, grid: Grid, unknowns: &[Param], w: TimeWeights) -> Result<FitProblem, Failure> {
    let ms = measurements(o, p, &grid)?;
    let mut prob = FitProblem::new(p.data.clone(), grid, ms, p.params, unknowns, flavor(o))?.with_weights(w);
    if let Some(b) = &o.bounds {
        for (k, [lo, hi]) in &b.0 {
            prob = prob.with_bounds(param(k)?, *lo, *hi)?;
        }
    }
    if let Some(n) = o.max_iter {
        prob.settings.max_iter = n;
    }
    Ok(prob)
}

pub fn run(command: &Command, o: &Opts) -> Result<Outcome, Failure> {
    match command {
        Command::Forward(_) => forward(o),
        Command::Convergence(_) => convergence(o),
        Command::Synth(_) => synth(o),
        Command::Recover(_) => recover(o),
        Command::Scan(_) => scan(o),
        Command::Fit(_) => fit_cmd(o),
    }
}

fn forward(o: &Opts) -> Result<Outcome, Failure> {
    let p = load_problem(o)?;
    let g = grid(o, p.t_final)?;
    let sol = solve_forward(&p.data, &p.params, &g)?;
    let ms = MeasurementSet::from_solution(&sol, p.params.d1(), true)?;
    let dir = out_dir(o);
    let files = vec![
        write_atomic(&dir, "solution.csv", &sol.to_csv_string())?,
        write_atomic(&dir, "measurements.csv", &ms.to_csv_string())?,
    ];
    let mut summary = format!("forward {}: I = {}, N = {}", p.label, g.nx(), g.nt());
    if let (Some(case), None) = (&p.case, &o.params) {
        let (es, em) = sol.max_errors(|x, t| case.exact_s(x, t), |x, t| case.exact_m(x, t));
        summary.push_str(&format!(", max|S - S*| = {es:.3e}, max|M - M*| = {em:.3e}"));
    }
    Ok(Outcome { summary, files })
}

fn convergence(o: &Opts) -> Result<Outcome, Failure> {
    let p = load_problem(o)?;
    let case = manufactured(&p, "convergence")?;
    let meshes = o.meshes.clone().unwrap_or(DEFAULT_MESHES.to_vec());
    let table = convergence_study(case, &meshes)?;
    let dir = out_dir(o);
    let files = vec![
        write_atomic(&dir, "convergence.csv", &table.to_csv_string())?,
        write_atomic(&dir, "convergence.json", &to_json(&table)?)?,
    ];
    let summary = format!(
        "convergence {}: {} meshes, order {:.3} (S {:.3}, M {:.3})",
        p.label,
        table.rows.len(),
        table.slope,
        table.slope_s,
        table.slope_m
    );
    Ok(Outcome { summary, files })
}

fn synth(o: &Opts) -> Result<Outcome, Failure> {
    let p = load_problem(o)?;
    let g = grid(o, p.t_final)?;
    let ms = measurements(o, &p, &g)?;
    let file = write_atomic(&out_dir(o), "measurements.csv", &ms.to_csv_string())?;
    let mut summary = format!("synth {}: {} samples, q0(0) = {:.6}", p.label, ms.len(), ms.flux()[0]);
    if let Some(b) = ms.biomass() {
        summary.push_str(&format!(", EM(0) = {:.6}", b[0]));
    }
    Ok(Outcome { summary, files: vec![file] })
}

#[derive(Serialize)]
struct RecoveryOutput<'a> {
    case: &'a str,
    source: SourceArg,
    points_from: &'static str,
    #[serde(flatten)]
    report: &'a RecoveryReport,
}

fn recover(o: &Opts) -> Result<Outcome, Failure> {
    let p = load_problem(o)?;
    let source = o.source.unwrap_or(if p.case.is_some() { SourceArg::Analytic } else { SourceArg::Sampled });
    let resolution = match o.scan_resolution.as_deref() {
        Some(&[nx, nt]) => (nx, nt),
        Some(_) => return config_err("scan_resolution needs two counts"),
        None => DEFAULT_SCAN_RESOLUTION,
    };
    let run = |probe: &dyn FieldProbe, lattice: (usize, usize)| -> Result<(RecoveryReport, &'static str), Failure> {
        let (pts, from): (EvaluationPoints, _) = match o.points {
            Some(pts) => (pts, "config"),
            None => (scan_points(probe, lattice)?, "scan"),
        };
        Ok((recover_all(probe, &pts)?, from))
    };
    let (report, from) = match source {
        SourceArg::Analytic => run(&AnalyticProbe::from_case(manufactured(&p, "--source analytic")?), resolution)?,
        SourceArg::Sampled => {
            let g = grid(o, p.t_final)?;
            let sol = solve_forward(&p.data, &p.params, &g)?;
            // a lattice finer than the samples only repeats snapped nodes
            let lattice = (resolution.0.min(g.nx()), resolution.1.min(g.nt()));
            run(&SampledProbe::new(&sol, &p.data.f, &p.data.g)?, lattice)?
        }
    };
    let out = RecoveryOutput { case: &p.label, source, points_from: from, report: &report };
    let file = write_atomic(&out_dir(o), "recovery.json", &to_json(&out)?)?;
    let r = report.raw;
    let summary = format!(
        "recover {}: d1 = {:.6}, d2 = {:.6}, K1 = {:.6}, K2 = {:.6}, K3 = {:.6}, K4 = {:.6}, a = {:.6}, b = {:.6}{}",
        p.label,
        r.d1,
        r.d2,
        r.k1,
        r.k2,
        r.k3,
        r.k4,
        r.a,
        r.b,
        if report.violations.is_empty() { String::new() } else { format!(" (inadmissible: {})", report.violations.join("; ")) }
    );
    Ok(Outcome { summary, files: vec![file] })
}

fn range(v: &Option<Vec<f64>>, default: (f64, f64), name: &str) -> Result<(f64, f64), Failure> {
    match v.as_deref() {
        None => Ok(default),
        Some(&[lo, hi]) if lo <= hi => Ok((lo, hi)),
        Some(_) => config_err(format!("{name} needs LO,HI with LO <= HI")),
    }
}

#[derive(Serialize)]
struct ScanOutput<'a> {
    case: &'a str,
    nx: usize,
    nt: usize,
    weights: TimeWeights,
    argmin: (f64, f64),
    min: f64,
    a_values: &'a [f64],
    b_values: &'a [f64],
}

fn scan(o: &Opts) -> Result<Outcome, Failure> {
    let p = load_problem(o)?;
    let g = grid(o, p.t_final)?;
    let w = weights(o, TimeWeights::Sum);
    let prob = fit_problem(o, &p, g, &[Param::A, Param::B], w)?;
    let a = range(&o.a_range, (0.0, 4.0), "a_range")?;
    let b = range(&o.b_range, (1.0, 4.0), "b_range")?;
    let counts = match o.counts.as_deref() {
        None => (41, 31),
        Some(&[na, nb]) if na > 0 && nb > 0 => (na, nb),
        Some(_) => return config_err("counts needs two positive integers"),
    };
    let s = grid_scan(&prob, a, b, counts)?;
    let summary_json = ScanOutput {
        case: &p.label,
        nx: g.nx(),
        nt: g.nt(),
        weights: w,
        argmin: s.argmin,
        min: s.min,
        a_values: &s.a_values,
        b_values: &s.b_values,
    };
    let dir = out_dir(o);
    let files = vec![
        write_atomic(&dir, "scan.csv", &s.to_csv_string())?,
        write_atomic(&dir, "scan.json", &to_json(&summary_json)?)?,
    ];
    let summary = format!(
        "scan {}: {} x {} lattice, argmin (a, b) = ({}, {}), H = {:.3e}",
        p.label, counts.0, counts.1, s.argmin.0, s.argmin.1, s.min
    );
    Ok(Outcome { summary, files })
}

#[derive(Serialize)]
struct FitOutput<'a> {
    case: &'a str,
    nx: usize,
    nt: usize,
    flavor: Flavor,
    weights: TimeWeights,
    noise: Option<f64>,
    seed: Option<u64>,
    #[serde(flatten)]
    report: &'a FitReport,
}

fn fit_cmd(o: &Opts) -> Result<Outcome, Failure> {
    let p = load_problem(o)?;
    let g = grid(o, p.t_final)?;
    let unknowns = unknowns(o)?;
    let w = weights(o, TimeWeights::Trapezoid);
    let prob = fit_problem(o, &p, g, &unknowns, w)?;

    let mut x0 = p.params;
    for u in &unknowns {
        x0 = x0.with(*u, DEFAULT_GUESS[u.index()])?;
    }
    if let Some(guess) = &o.guess {
        for (k, v) in &guess.0 {
            let q = param(k)?;
            if !unknowns.contains(&q) {
                return config_err(format!("guess given for `{k}`, which is not an unknown"));
            }
            x0 = x0.with(q, *v)?;
        }
    }
    let report = if o.reduce.unwrap_or(false) { reduced_fit(&prob, &x0)? } else { fit(&prob, &x0)? };

    let out = FitOutput {
        case: &p.label,
        nx: g.nx(),
        nt: g.nt(),
        flavor: prob.flavor(),
        weights: w,
        noise: o.noise,
        seed: o.seed,
        report: &report,
    };
    let dir = out_dir(o);
    let files = vec![
        write_atomic(&dir, "fit.json", &to_json(&out)?)?,
        write_atomic(&dir, "trace.csv", &report.trace_csv())?,
    ];
    let mut fitted: Vec<String> = unknowns.iter().map(|u| format!("{} = {:.6}", u.name(), report.params.get(*u))).collect();
    if report.k2_reduced {
        fitted.push(format!("K2 = {:.6} (reduced)", report.params.k2()));
    }
    let summary = format!(
        "fit {}: {}, J = {:.3e} after {} iterations ({:?})",
        p.label,
        fitted.join(", "),
        report.objective,
        report.iterations,
        report.termination
    );
    Ok(Outcome { summary, files })
}
