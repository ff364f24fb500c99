//! Boundary flux and biomass measurements, their CSV form and synthetic noise.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cases::ManufacturedCase;
use crate::error::{Error, Result};
use crate::model::{csv_error, FieldSolution, Grid};

/// `M` boundary values above this magnitude invalidate the biomass sum.
pub const BIOMASS_BOUNDARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    SyntheticExact,
    SyntheticSolver,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseDescriptor {
    pub level: f64,
    pub seed: u64,
}

/// Time series of the substrate flux `q0(t)` and, optionally, the biomass `E_M(t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementSet {
    times: Vec<f64>,
    flux: Vec<f64>,
    biomass: Option<Vec<f64>>,
    pub provenance: Provenance,
    pub noise: Option<NoiseDescriptor>,
}

impl MeasurementSet {
    pub fn new(times: Vec<f64>, flux: Vec<f64>, biomass: Option<Vec<f64>>, provenance: Provenance) -> Result<Self> {
        if flux.len() != times.len() || biomass.as_ref().is_some_and(|b| b.len() != times.len()) {
            return Err(Error::Measurement("series lengths differ".into()));
        }
        if times.is_empty() {
            return Err(Error::Measurement("empty measurement set".into()));
        }
        if let Some(k) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Measurement(format!(
                "times must increase strictly: t[{}] = {} follows {}",
                k + 1,
                times[k + 1],
                times[k]
            )));
        }
        Ok(MeasurementSet { times, flux, biomass, provenance, noise: None })
    }

    /// Closed-form measurements of a manufactured case on the time levels of `grid`.
    pub fn from_exact(case: &ManufacturedCase, grid: &Grid) -> Result<Self> {
        let times = grid.ts();
        let flux = times.iter().map(|&t| case.exact_flux(t)).collect();
        let biomass = times.iter().map(|&t| case.exact_biomass(t)).collect::<Option<Vec<_>>>();
        Self::new(times, flux, biomass, Provenance::SyntheticExact)
    }

    /// Measurements extracted from a forward solve.
    pub fn from_solution(sol: &FieldSolution, d1: f64, with_biomass: bool) -> Result<Self> {
        let flux = boundary_flux(sol, d1)?;
        let biomass = if with_biomass { Some(biomass(sol)?) } else { None };
        Self::new(sol.grid().ts(), flux, biomass, Provenance::SyntheticSolver)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn flux(&self) -> &[f64] {
        &self.flux
    }
    pub fn biomass(&self) -> Option<&[f64]> {
        self.biomass.as_deref()
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Drops the biomass channel.
    pub fn flux_only(&self) -> Self {
        MeasurementSet { biomass: None, ..self.clone() }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(if self.biomass.is_some() { "t,q0,EM\n" } else { "t,q0\n" });
        for k in 0..self.times.len() {
            out.push_str(&format!("{},{}", self.times[k], self.flux[k]));
            if let Some(b) = &self.biomass {
                out.push_str(&format!(",{}", b[k]));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv_reader<R: std::io::Read>(rdr: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(rdr);
        let header: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(String::from).collect();
        let with_biomass = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
            ["t", "q0"] => false,
            ["t", "q0", "EM"] => true,
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header `t,q0[,EM]`, found `{}`", header.join(",")),
                })
            }
        };
        let mut times = Vec::new();
        let mut flux = Vec::new();
        let mut bio = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Parse { line, msg: format!("missing column {}", k + 1) })?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse { line, msg: format!("column {}: {e}", k + 1) })
            };
            let t = parse(0)?;
            if let Some(&prev) = times.last() {
                if t <= prev {
                    return Err(Error::Measurement(format!("line {line}: time {t} does not exceed {prev}")));
                }
            }
            times.push(t);
            flux.push(parse(1)?);
            if with_biomass {
                bio.push(parse(2)?);
            }
        }
        Self::new(times, flux, with_biomass.then_some(bio), Provenance::File)
    }
}

pub fn read_measurements(path: impl AsRef<Path>) -> Result<MeasurementSet> {
    let file = std::fs::File::open(path)?;
    MeasurementSet::from_csv_reader(file)
}

pub fn write_measurements(ms: &MeasurementSet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, ms.to_csv_string())?;
    Ok(())
}

/// `q0 = -d1 S_x(0, t)` from the one-sided second-order stencil
/// `(-3 S_0 + 4 S_1 - S_2) / (2 dx)`.
pub fn boundary_flux(sol: &FieldSolution, d1: f64) -> Result<Vec<f64>> {
    let grid = sol.grid();
    if grid.nx() < 4 {
        return Err(Error::Precondition(format!("flux stencil needs I >= 4, got {}", grid.nx())));
    }
    let h2 = 2.0 * grid.dx();
    Ok((0..grid.nt())
        .map(|n| {
            let s = sol.s_level(n);
            -d1 * (-3.0 * s[0] + 4.0 * s[1] - s[2]) / h2
        })
        .collect())
}

/// `E_M = dx * sum of interior M`, the trapezoid rule with zero boundary values.
pub fn biomass(sol: &FieldSolution) -> Result<Vec<f64>> {
    let grid = sol.grid();
    let last = grid.nx() - 1;
    (0..grid.nt())
        .map(|n| {
            let m = sol.m_level(n);
            if m[0].abs() > BIOMASS_BOUNDARY_TOL || m[last].abs() > BIOMASS_BOUNDARY_TOL {
                return Err(Error::Precondition(format!(
                    "biomass sum assumes M = 0 on the boundary; level {n} has M = ({}, {})",
                    m[0], m[last]
                )));
            }
            Ok(grid.dx() * m[1..last].iter().sum::<f64>())
        })
        .collect()
}

/// Multiplicative Gaussian noise `y (1 + level * xi)`, reproducible from `seed`.
///
/// The flux series is perturbed first, then the biomass series, from one stream.
pub fn add_noise(ms: &MeasurementSet, level: f64, seed: u64) -> Result<MeasurementSet> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::Precondition(format!("noise level must be >= 0, got {level}")));
    }
    if level == 0.0 {
        return Ok(ms.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perturb = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&y| {
                let xi: f64 = StandardNormal.sample(&mut rng);
                y * (1.0 + level * xi)
            })
            .collect()
    };
    let flux = perturb(&ms.flux);
    let biomass = ms.biomass.as_deref().map(&mut perturb);
    Ok(MeasurementSet {
        times: ms.times.clone(),
        flux,
        biomass,
        provenance: ms.provenance,
        noise: Some(NoiseDescriptor { level, seed }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::example1;
    use crate::forward::solve_forward;
    use proptest::prelude::*;

    fn sampled_example1(h: f64) -> FieldSolution {
        let c = example1();
        FieldSolution::sample(Grid::uniform(h, 1.0).unwrap(), |x, t| c.exact_s(x, t), |x, t| c.exact_m(x, t))
    }

    #[test]
    fn flux_of_exact_fields() {
        let sol = sampled_example1(0.01);
        let q = boundary_flux(&sol, 1.0).unwrap();
        let g = sol.grid();
        for (n, v) in q.iter().enumerate() {
            assert!((v + g.t(n) + 1.0).abs() <= 1e-4);
        }
    }

    #[test]
    fn flux_of_constant_field_is_zero() {
        let sol = FieldSolution::sample(Grid::new(11, 5, 1.0).unwrap(), |_, _| 1.0, |_, _| 0.0);
        assert!(boundary_flux(&sol, 2.0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flux_needs_four_nodes() {
        let sol = FieldSolution::sample(Grid::new(3, 5, 1.0).unwrap(), |_, _| 1.0, |_, _| 0.0);
        assert!(boundary_flux(&sol, 1.0).is_err());
    }

    #[test]
    fn flux_of_solver_output() {
        let c = example1();
        let g = Grid::uniform(0.01, 1.0).unwrap();
        let sol = solve_forward(&c.data, &c.params, &g).unwrap();
        let q = boundary_flux(&sol, 1.0).unwrap();
        let worst = q.iter().enumerate().map(|(n, v)| (v + g.t(n) + 1.0).abs()).fold(0.0, f64::max);
        assert!(worst <= 5e-4, "{worst:e}");
    }

    #[test]
    fn biomass_of_exact_fields() {
        let sol = sampled_example1(0.01);
        let e = biomass(&sol).unwrap();
        for (n, v) in e.iter().enumerate() {
            assert!((v - (-sol.grid().t(n)).exp() / 6.0).abs() <= 2e-5);
        }
    }

    #[test]
    fn biomass_simple_cases() {
        let g = Grid::new(11, 3, 1.0).unwrap();
        let zero = FieldSolution::sample(g, |_, _| 1.0, |_, _| 0.0);
        assert!(biomass(&zero).unwrap().iter().all(|&v| v == 0.0));
        let hat = FieldSolution::sample(g, |_, _| 1.0, |x, _| if (x - 0.3).abs() < 1e-9 { 1.0 } else { 0.0 });
        assert!(biomass(&hat).unwrap().iter().all(|&v| (v - 0.1).abs() < 1e-15));
        let bad = FieldSolution::sample(g, |_, _| 1.0, |_, _| 0.5);
        assert!(matches!(biomass(&bad), Err(Error::Precondition(_))));
    }

    #[test]
    fn noise_free_is_identity() {
        let c = example1();
        let ms = MeasurementSet::from_exact(&c, &Grid::uniform(0.1, 1.0).unwrap()).unwrap();
        assert_eq!(add_noise(&ms, 0.0, 7).unwrap(), ms);
        assert!(add_noise(&ms, -0.1, 7).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let c = example1();
        let ms = MeasurementSet::from_exact(&c, &Grid::uniform(0.01, 1.0).unwrap()).unwrap();
        let before = ms.clone();
        let a = add_noise(&ms, 0.01, 42).unwrap();
        let b = add_noise(&ms, 0.01, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.flux(), ms.flux());
        assert_eq!(ms, before);
        assert_eq!(a.noise, Some(NoiseDescriptor { level: 0.01, seed: 42 }));
    }

    #[test]
    fn noise_has_requested_spread() {
        let g = Grid::new(11, 1001, 1.0).unwrap();
        let times = g.ts();
        let ms = MeasurementSet::new(times.clone(), vec![2.0; times.len()], None, Provenance::File).unwrap();
        let noisy = add_noise(&ms, 0.01, 3).unwrap();
        let rel: Vec<f64> = noisy.flux().iter().map(|v| v / 2.0 - 1.0).collect();
        let mean = rel.iter().sum::<f64>() / rel.len() as f64;
        let var = rel.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (rel.len() - 1) as f64;
        let sd = var.sqrt();
        assert!((0.007..=0.013).contains(&sd), "std {sd}");
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ms.csv");
        let ms = MeasurementSet::from_exact(&example1(), &Grid::uniform(0.01, 1.0).unwrap()).unwrap();
        write_measurements(&ms, &path).unwrap();
        let back = read_measurements(&path).unwrap();
        assert_eq!(back.times(), ms.times());
        assert_eq!(back.flux(), ms.flux());
        assert_eq!(back.biomass(), ms.biomass());
        assert_eq!(back.provenance, Provenance::File);
    }

    #[test]
    fn csv_rejects_decreasing_times() {
        let err = MeasurementSet::from_csv_reader("t,q0\n0,1\n0.5,1\n0.2,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Measurement(_)), "{err:?}");
    }

    #[test]
    fn csv_without_biomass() {
        let ms = MeasurementSet::from_csv_reader("t,q0\n0,-1\n0.5,-1.5\n".as_bytes()).unwrap();
        assert!(ms.biomass().is_none());
        assert_eq!(ms.flux(), &[-1.0, -1.5]);
    }

    #[test]
    fn csv_parse_error_has_line() {
        match MeasurementSet::from_csv_reader("t,q0,EM\n0,-1,0.1\n0.5,x,0.2\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn flux_exact_on_quadratics(c0 in -5.0..5.0f64, c1 in -5.0..5.0f64, c2 in -5.0..5.0f64, nx in 4usize..60) {
            let g = Grid::new(nx, 4, 1.0).unwrap();
            let sol = FieldSolution::sample(g, |x, t| c0 + c1 * x * (1.0 + t) + c2 * x * x, |_, _| 0.0);
            for (n, q) in boundary_flux(&sol, 1.5).unwrap().into_iter().enumerate() {
                let exact = -1.5 * c1 * (1.0 + g.t(n));
                prop_assert!((q - exact).abs() < 1e-12 * (1.0 + exact.abs()) * nx as f64);
            }
        }

        #[test]
        fn biomass_is_linear(scale in -10.0..10.0f64, nx in 3usize..50) {
            let g = Grid::new(nx, 3, 1.0).unwrap();
            let shape = |x: f64, t: f64| (std::f64::consts::PI * x).sin().powi(2) * (1.0 + t);
            let base = FieldSolution::sample(g, |_, _| 1.0, shape);
            let scaled = FieldSolution::sample(g, |_, _| 1.0, |x, t| scale * shape(x, t));
            for (a, b) in biomass(&base).unwrap().iter().zip(biomass(&scaled).unwrap()) {
                prop_assert!((scale * a - b).abs() <= 1e-14 * (1.0 + b.abs()));
            }
        }
    }
}
