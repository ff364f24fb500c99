//! Command-line flags and the TOML config file they override.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use biofilm_core::recovery::EvaluationPoints;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "biofilm", version, about = "Forward solver and coefficient identification for a substrate/biofilm model")]
pub struct Cli {
    /// TOML config file. Top-level keys apply to every command, keys under
    /// `[<command>]` override them, and flags override both.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the forward problem; writes solution.csv and measurements.csv.
    Forward(Opts),
    /// Max-norm errors against the exact solution on several meshes; writes convergence.csv and convergence.json.
    Convergence(Opts),
    /// Synthesize flux and biomass measurements; writes measurements.csv.
    Synth(Opts),
    /// Closed-form recovery of all eight coefficients from full fields; writes recovery.json.
    Recover(Opts),
    /// Objective on an (a, b) lattice; writes scan.csv and scan.json.
    Scan(Opts),
    /// Bounded least-squares fit; writes fit.json and trace.csv.
    Fit(Opts),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Forward(_) => "forward",
            Command::Convergence(_) => "convergence",
            Command::Synth(_) => "synth",
            Command::Recover(_) => "recover",
            Command::Scan(_) => "scan",
            Command::Fit(_) => "fit",
        }
    }

    pub fn opts(&self) -> &Opts {
        match self {
            Command::Forward(o)
            | Command::Convergence(o)
            | Command::Synth(o)
            | Command::Recover(o)
            | Command::Scan(o)
            | Command::Fit(o) => o,
        }
    }
}

pub const COMMANDS: [&str; 6] = ["forward", "convergence", "synth", "recover", "scan", "fit"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseName {
    Example1,
    Example2,
    /// Tabulated data read from `data_dir`.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlavorArg {
    FluxOnly,
    FluxAndBiomass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightsArg {
    Sum,
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceArg {
    /// Closed-form fields of a manufactured case.
    Analytic,
    /// Grid values from a forward solve.
    Sampled,
}

/// `name=value` pairs, written `a=2,b=1` on the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamMap(pub BTreeMap<String, f64>);

impl FromStr for ParamMap {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut map = BTreeMap::new();
        for item in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| format!("expected name=value, got `{item}`"))?;
            let v: f64 = v.trim().parse().map_err(|e| format!("`{item}`: {e}"))?;
            map.insert(k.trim().to_string(), v);
        }
        Ok(ParamMap(map))
    }
}

/// `name=lo:hi` pairs, written `a=0:4,b=1:4` on the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoundMap(pub BTreeMap<String, [f64; 2]>);

impl FromStr for BoundMap {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut map = BTreeMap::new();
        for item in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| format!("expected name=lo:hi, got `{item}`"))?;
            let (lo, hi) = v.split_once(':').ok_or_else(|| format!("expected lo:hi in `{item}`"))?;
            let lo: f64 = lo.trim().parse().map_err(|e| format!("`{item}`: {e}"))?;
            let hi: f64 = hi.trim().parse().map_err(|e| format!("`{item}`: {e}"))?;
            map.insert(k.trim().to_string(), [lo, hi]);
        }
        Ok(BoundMap(map))
    }
}

/// Every setting, all optional; unset values fall back to per-command defaults.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Opts {
    /// Problem to solve.
    #[arg(long, value_enum)]
    pub case: Option<CaseName>,

    /// Directory of `x,t,value` tables for `--case custom`: s0.csv and m0.csv
    /// are required; mu1..mu4, f and g default to 1, 1, 0, 0, 0, 0.
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,

    /// Square mesh size, dx = dt = h.
    #[arg(long, value_name = "H")]
    pub mesh: Option<f64>,

    /// Spatial node count I (overrides --mesh).
    #[arg(long, value_name = "I")]
    pub nx: Option<usize>,

    /// Time level count N (overrides --mesh).
    #[arg(long, value_name = "N")]
    pub nt: Option<usize>,

    /// Final time T (custom case only; manufactured cases fix their own).
    #[arg(long, value_name = "T")]
    pub t_final: Option<f64>,

    /// Mesh sizes for `convergence`.
    #[arg(long, value_delimiter = ',', value_name = "H,H,...")]
    pub meshes: Option<Vec<f64>>,

    /// Coefficient overrides for the forward problem, e.g. `a=0.5,b=1.5`.
    #[arg(long, value_name = "NAME=V,...")]
    pub params: Option<ParamMap>,

    /// Use the closed-form observables instead of a forward solve (`synth`, `scan`, `fit`).
    #[arg(long, num_args = 0..=1, default_missing_value = "true", require_equals = true, value_name = "BOOL")]
    pub exact: Option<bool>,

    /// Include the biomass series in synthesized measurements.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", require_equals = true, value_name = "BOOL")]
    pub biomass: Option<bool>,

    /// Relative Gaussian noise level added to synthesized measurements.
    #[arg(long, value_name = "LEVEL")]
    pub noise: Option<f64>,

    /// Seed of the noise generator.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Measurement CSV (`t,q0[,EM]`) to use instead of synthesizing one.
    #[arg(long, value_name = "FILE")]
    pub measurements: Option<PathBuf>,

    /// Objective: flux only or flux plus biomass.
    #[arg(long, value_enum)]
    pub flavor: Option<FlavorArg>,

    /// Time weighting of the misfit (`scan` defaults to sum, `fit` to trapezoid).
    #[arg(long, value_enum)]
    pub weights: Option<WeightsArg>,

    /// Unknown coefficients, e.g. `a,b` or `all`.
    #[arg(long, value_delimiter = ',', value_name = "NAME,...")]
    pub unknowns: Option<Vec<String>>,

    /// Initial guess for the unknowns, e.g. `a=2,b=1`.
    #[arg(long, value_name = "NAME=V,...")]
    pub guess: Option<ParamMap>,

    /// Bounds overrides, e.g. `a=0:4,b=1:4`.
    #[arg(long, value_name = "NAME=LO:HI,...")]
    pub bounds: Option<BoundMap>,

    /// Eliminate K2 through its closed-form expression in K3, K4.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", require_equals = true, value_name = "BOOL")]
    pub reduce: Option<bool>,

    /// Iteration cap of the fit.
    #[arg(long)]
    pub max_iter: Option<usize>,

    /// Range of `a` for `scan`.
    #[arg(long, value_delimiter = ',', value_name = "LO,HI")]
    pub a_range: Option<Vec<f64>>,

    /// Range of `b` for `scan`.
    #[arg(long, value_delimiter = ',', value_name = "LO,HI")]
    pub b_range: Option<Vec<f64>>,

    /// Lattice node counts for `scan`, as `NA,NB`.
    #[arg(long, value_delimiter = ',', value_name = "NA,NB")]
    pub counts: Option<Vec<usize>>,

    /// Field source for `recover`.
    #[arg(long, value_enum)]
    pub source: Option<SourceArg>,

    /// Lattice for the automatic point search of `recover`, as `NX,NT`.
    #[arg(long, value_delimiter = ',', value_name = "NX,NT")]
    pub scan_resolution: Option<Vec<usize>>,

    /// Evaluation points for `recover` (config file only, as a `points` table).
    #[arg(skip)]
    pub points: Option<EvaluationPoints>,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

macro_rules! prefer {
    ($hi:ident, $lo:ident; $($f:ident),* $(,)?) => {
        Opts { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl Opts {
    /// Fields set in `self` win over those in `lower`.
    pub fn over(self, lower: Opts) -> Opts {
        let hi = self;
        prefer!(hi, lower; case, data_dir, mesh, nx, nt, t_final, meshes, params, exact, biomass, noise,
            seed, measurements, flavor, weights, unknowns, guess, bounds, reduce, max_iter, a_range,
            b_range, counts, source, scan_resolution, points, out)
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Options from `path` for `command`: the `[command]` section over the top level.
pub fn load_file(path: &Path, command: &str) -> Result<Opts, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text, command).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
}

pub fn parse_config(text: &str, command: &str) -> Result<Opts, ConfigError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError(e.message().to_string()))?;
    let mut section = None;
    for name in COMMANDS {
        if let Some(v) = table.remove(name) {
            if name == command {
                section = Some(v);
            } else if !v.is_table() {
                return Err(ConfigError(format!("`{name}` must be a table")));
            }
        }
    }
    let base: Opts = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError(e.message().to_string()))?;
    let local: Opts = match section {
        Some(v) => v
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(format!("[{command}]: {}", e.message())))?,
        None => Opts::default(),
    };
    Ok(local.over(base))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn section_overrides_top_level() {
        let text = "mesh = 0.1\ncase = \"example2\"\n[fit]\nmesh = 0.05\nunknowns = [\"a\", \"b\"]\n[scan]\nmesh = 0.5\n";
        let o = parse_config(text, "fit").unwrap();
        assert_eq!(o.mesh, Some(0.05));
        assert_eq!(o.case, Some(CaseName::Example2));
        assert_eq!(o.unknowns.as_deref(), Some(&["a".to_string(), "b".to_string()][..]));
        assert_eq!(parse_config(text, "forward").unwrap().mesh, Some(0.1));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_config("mesh_size = 0.1", "forward").is_err());
        assert!(parse_config("[fit]\nmesh_size = 0.1", "fit").is_err());
    }

    #[test]
    fn flags_win() {
        let flags = Opts { mesh: Some(0.02), ..Opts::default() };
        let file = Opts { mesh: Some(0.1), nx: Some(5), ..Opts::default() };
        let o = flags.over(file);
        assert_eq!(o.mesh, Some(0.02));
        assert_eq!(o.nx, Some(5));
    }

    #[test]
    fn param_maps_parse() {
        let m: ParamMap = "a=2, b=1".parse().unwrap();
        assert_eq!(m.0["a"], 2.0);
        assert!("a:2".parse::<ParamMap>().is_err());
        let b: BoundMap = "a=0:4".parse().unwrap();
        assert_eq!(b.0["a"], [0.0, 4.0]);
    }

    #[test]
    fn points_table() {
        let text = "[recover.points]\np0 = [0.5, 1.0]\np1 = [0.5, 0.5]\np2 = [0.5, 0.75]\nt3 = 0.5\nt4 = 1.0\n\
                    p5 = [0.5, 0.25]\np6 = [0.5, 0.5]\np7 = [0.5, 0.75]\n";
        let o = parse_config(text, "recover").unwrap();
        assert_eq!(o.points.unwrap().p2, (0.5, 0.75));
    }
}
