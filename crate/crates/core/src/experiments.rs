//! Experiment recipes driven by a small configuration file.
//!
//! A config is flat TOML: two top-level keys and four one-level sections.
//!
//! ```toml
//! experiment = "gamma-1d"
//! seed = 7
//!
//! [potential]          # form = "double-well" | "product-triple-well", or file = "w.toml"
//! form = "double-well"
//! nodes = 256
//!
//! [grid]
//! shape = [4096]
//! rho = "1"
//!
//! [params]
//! eps = [0.04, 0.02, 0.01]
//! volume = 0.3
//! tau = "auto"
//!
//! [output]
//! csv = "gamma.csv"
//! ```
//!
//! Every CSV starts with `#` lines carrying the seed and the full config;
//! the JSON report embeds both as fields.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value as Json};
use toml::{Table, Value};

use crate::cluster::{self, Cluster, MboOptions};
use crate::error::{Error, Result};
use crate::field::{self, spectrum, ConformalMetric, Field, FlowOptions, HuntOptions, TorusGrid};
use crate::io::{self, fmt_f64};
use crate::photography::{self, PhotoOptions};
use crate::potential::Potential;
use crate::recovery::{self, build_profile, ChamberCoords, TauRule};
use crate::rng;
use crate::tension::{self, OptimizeOptions, TensionMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recipe {
    Tension,
    /// Γ-sweep of a recovery ladder; `gamma-sweep` is an alias
    Gamma1d,
    Minimize,
    Hunt,
    Degeneracy,
    Isoperimetric,
    Homotopy,
    Recover,
}

impl Recipe {
    pub fn name(self) -> &'static str {
        match self {
            Recipe::Tension => "tension",
            Recipe::Gamma1d => "gamma-1d",
            Recipe::Minimize => "minimize",
            Recipe::Hunt => "hunt",
            Recipe::Degeneracy => "degeneracy",
            Recipe::Isoperimetric => "isoperimetric",
            Recipe::Homotopy => "homotopy",
            Recipe::Recover => "recover",
        }
    }

    fn needs_eps(self) -> bool {
        !matches!(self, Recipe::Tension | Recipe::Degeneracy | Recipe::Isoperimetric)
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "tension" => Recipe::Tension,
            "gamma-1d" | "gamma-sweep" => Recipe::Gamma1d,
            "minimize" => Recipe::Minimize,
            "hunt" => Recipe::Hunt,
            "degeneracy" | "degeneracy-scan" => Recipe::Degeneracy,
            "isoperimetric" => Recipe::Isoperimetric,
            "homotopy" => Recipe::Homotopy,
            "recover" => Recipe::Recover,
            other => return Err(Error::config("experiment", format!("unknown recipe `{other}`"))),
        })
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OmegaSpec {
    Unit,
    File(PathBuf),
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub experiment: Recipe,
    pub seed: u64,
    pub potential: Potential,
    /// geodesic polyline nodes for tensions
    pub nodes: usize,
    pub shape: Vec<usize>,
    pub lengths: Vec<f64>,
    pub rho: String,
    /// ε ladder, strictly decreasing
    pub eps: Vec<f64>,
    pub volume: Vec<f64>,
    pub tau: TauRule,
    pub tol: f64,
    pub seeds: usize,
    pub modes: usize,
    pub eps_range: (f64, f64),
    pub samples: usize,
    pub dt: Option<f64>,
    pub max_sweeps: usize,
    pub omega: OmegaSpec,
    pub cluster: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub out_csv: Option<PathBuf>,
    /// canonical TOML of the resolved table, embedded in every report
    pub text: String,
}

const TOP: &[&str] = &["experiment", "seed", "potential", "grid", "params", "output"];
const POTENTIAL: &[&str] = &["form", "file", "p1", "p2", "splice_radius", "splice_tau", "nodes"];
const GRID: &[&str] = &["shape", "lengths", "rho"];
const PARAMS: &[&str] = &[
    "eps",
    "volume",
    "tau",
    "tol",
    "seeds",
    "modes",
    "eps_range",
    "samples",
    "dt",
    "max_sweeps",
    "omega",
    "cluster",
];
const OUTPUT: &[&str] = &["dir", "csv"];

fn section<'a>(t: &'a Table, name: &str, allowed: &[&str]) -> Result<Option<&'a Table>> {
    match t.get(name) {
        None => Ok(None),
        Some(Value::Table(s)) => {
            if let Some(k) = s.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(Error::config(k.as_str(), format!("unknown key in [{name}]")));
            }
            Ok(Some(s))
        }
        Some(_) => Err(Error::config(name, "expected a section")),
    }
}

fn lookup<'a>(s: Option<&'a Table>, key: &str) -> Option<&'a Value> {
    s.and_then(|s| s.get(key))
}

fn as_f64(v: &Value, key: &str) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        Value::String(s) => s.trim().parse().map_err(|_| Error::config(key, format!("expected a number, got `{s}`"))),
        _ => Err(Error::config(key, "expected a number")),
    }
}

fn as_usize(v: &Value, key: &str) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        Value::String(s) => s.trim().parse().map_err(|_| Error::config(key, format!("expected a count, got `{s}`"))),
        _ => Err(Error::config(key, "expected a nonnegative integer")),
    }
}

fn as_str<'a>(v: &'a Value, key: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::config(key, "expected a string"))
}

/// A number, an array of numbers, or a string split on `,` or `x`.
fn as_f64_list(v: &Value, key: &str) -> Result<Vec<f64>> {
    match v {
        Value::Array(a) => a.iter().map(|x| as_f64(x, key)).collect(),
        Value::String(s) => s
            .split([',', 'x', '×'])
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse().map_err(|_| Error::config(key, format!("bad entry `{t}`"))))
            .collect(),
        other => Ok(vec![as_f64(other, key)?]),
    }
}

fn as_usize_list(v: &Value, key: &str) -> Result<Vec<usize>> {
    as_f64_list(v, key)?
        .into_iter()
        .map(|x| {
            if x >= 0.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(Error::config(key, format!("`{x}` is not a count")))
            }
        })
        .collect()
}

fn pair(v: &Value, key: &str) -> Result<[f64; 2]> {
    match as_f64_list(v, key)?.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => Err(Error::config(key, "expected two numbers")),
    }
}

fn load_potential(s: Option<&Table>, base: &Path) -> Result<Potential> {
    if let Some(f) = lookup(s, "file") {
        return Potential::load(&base.join(as_str(f, "file")?));
    }
    let form = lookup(s, "form").map(|v| as_str(v, "form")).transpose()?.unwrap_or("double-well");
    let p = match form {
        "double-well" | "scalar-double-well" => Potential::double_well(),
        "product-triple-well" | "spliced" => {
            let p1 = pair(lookup(s, "p1").ok_or_else(|| Error::config("p1", "missing"))?, "p1")?;
            let p2 = pair(lookup(s, "p2").ok_or_else(|| Error::config("p2", "missing"))?, "p2")?;
            Potential::product_triple_well(p1, p2)?
        }
        other => return Err(Error::config("form", format!("unknown form `{other}`"))),
    };
    match (lookup(s, "splice_radius"), lookup(s, "splice_tau")) {
        (Some(r), Some(t)) => p.with_splice(as_f64(r, "splice_radius")?, as_f64(t, "splice_tau")?),
        (None, None) if form != "spliced" => Ok(p),
        _ => Err(Error::config("splice_radius", "splice_radius and splice_tau go together")),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let table: Table = text.parse().map_err(|e| Error::Parse(format!("config: {e}")))?;
        Self::from_table(&table, base)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Relative paths inside the table resolve against `base`.
    pub fn from_table(t: &Table, base: &Path) -> Result<Self> {
        if let Some(k) = t.keys().find(|k| !TOP.contains(&k.as_str())) {
            return Err(Error::config(k.as_str(), "unknown top-level key"));
        }
        let experiment: Recipe = as_str(t.get("experiment").ok_or_else(|| Error::config("experiment", "missing"))?, "experiment")?.parse()?;
        let seed = match t.get("seed") {
            Some(Value::Integer(i)) => *i as u64,
            Some(v) => as_usize(v, "seed")? as u64,
            None => 0,
        };
        let pot = section(t, "potential", POTENTIAL)?;
        let grid = section(t, "grid", GRID)?;
        let params = section(t, "params", PARAMS)?;
        let output = section(t, "output", OUTPUT)?;

        let potential = load_potential(pot, base)?;
        let nodes = lookup(pot, "nodes").map(|v| as_usize(v, "nodes")).transpose()?.unwrap_or(256);
        if nodes < 2 {
            return Err(Error::config("nodes", "need at least 2 nodes"));
        }

        let default_shape = if experiment == Recipe::Gamma1d { vec![4096] } else { vec![128, 128] };
        let shape = lookup(grid, "shape").map(|v| as_usize_list(v, "shape")).transpose()?.unwrap_or(default_shape);
        let lengths = match lookup(grid, "lengths") {
            Some(v) => as_f64_list(v, "lengths")?,
            None => vec![1.0; shape.len()],
        };
        if lengths.len() != shape.len() {
            return Err(Error::config("lengths", format!("{} lengths for {} axes", lengths.len(), shape.len())));
        }
        let rho = lookup(grid, "rho").map(|v| as_str(v, "rho")).transpose()?.unwrap_or("1").to_string();

        let eps = match lookup(params, "eps") {
            Some(v) => as_f64_list(v, "eps")?,
            None if experiment.needs_eps() => return Err(Error::config("eps", "missing")),
            None => Vec::new(),
        };
        if experiment.needs_eps() && eps.is_empty() {
            return Err(Error::config("eps", "empty ladder"));
        }
        if eps.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::config("eps", "values must be positive"));
        }
        if eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::config("eps", "ladder must be strictly decreasing"));
        }
        let volume = match lookup(params, "volume") {
            Some(v) => as_f64_list(v, "volume")?,
            None => Vec::new(),
        };
        let needs_volume = match experiment {
            Recipe::Tension | Recipe::Recover => false,
            Recipe::Gamma1d => lookup(params, "cluster").is_none(),
            _ => true,
        };
        if needs_volume && volume.is_empty() {
            return Err(Error::config("volume", "missing"));
        }
        let tau = lookup(params, "tau")
            .map(|v| match v {
                Value::String(s) => s.parse(),
                other => as_f64(other, "tau").and_then(|x| x.to_string().parse()),
            })
            .transpose()?
            .unwrap_or_default();
        let tol = lookup(params, "tol").map(|v| as_f64(v, "tol")).transpose()?.unwrap_or(1e-8);
        if !(tol > 0.0) {
            return Err(Error::config("tol", "must be positive"));
        }
        let seeds = lookup(params, "seeds").map(|v| as_usize(v, "seeds")).transpose()?.unwrap_or(32);
        let modes = lookup(params, "modes").map(|v| as_usize(v, "modes")).transpose()?.unwrap_or(3);
        let eps_range = match lookup(params, "eps_range") {
            Some(v) => match as_f64_list(v, "eps_range")?.as_slice() {
                [a, b] if a <= b => (*a, *b),
                _ => return Err(Error::config("eps_range", "expected [lo, hi] with lo ≤ hi")),
            },
            None => (0.0, f64::INFINITY),
        };
        let samples = match lookup(params, "samples") {
            Some(v) => match as_usize_list(v, "samples")?.as_slice() {
            [k] | [k, _] if *k > 0 && as_usize_list(v, "samples")?.iter().all(|x| x == k) => *k,
            _ => return Err(Error::config("samples", "expected k or k×k with k > 0")),
        },
            None => 4,
        };
        let dt = lookup(params, "dt").map(|v| as_f64(v, "dt")).transpose()?;
        let max_sweeps = lookup(params, "max_sweeps").map(|v| as_usize(v, "max_sweeps")).transpose()?.unwrap_or(500);
        let omega = match lookup(params, "omega") {
            None => OmegaSpec::Unit,
            Some(v) => match as_str(v, "omega")? {
                "unit" => OmegaSpec::Unit,
                path => OmegaSpec::File(base.join(path)),
            },
        };
        let cluster = lookup(params, "cluster").map(|v| as_str(v, "cluster").map(|s| base.join(s))).transpose()?;
        if experiment == Recipe::Recover && cluster.is_none() {
            return Err(Error::config("cluster", "missing"));
        }
        let out_dir = lookup(output, "dir").map(|v| as_str(v, "dir").map(|s| base.join(s))).transpose()?;
        let out_csv = lookup(output, "csv").map(|v| as_str(v, "csv").map(|s| base.join(s))).transpose()?;

        Ok(ExperimentConfig {
            experiment,
            seed,
            potential,
            nodes,
            shape,
            lengths,
            rho,
            eps,
            volume,
            tau,
            tol,
            seeds,
            modes,
            eps_range,
            samples,
            dt,
            max_sweeps,
            omega,
            cluster,
            out_dir,
            out_csv,
            text: toml::to_string(t).map_err(|e| Error::Parse(e.to_string()))?,
        })
    }

    fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(&self.shape, &self.lengths)
    }

    fn metric(&self, grid: &TorusGrid) -> Result<ConformalMetric> {
        ConformalMetric::parse(&self.rho, grid)
    }

    fn tensions(&self) -> Result<TensionMatrix> {
        tension::tension_matrix(&self.potential, self.nodes, &self.optimize())
    }

    fn optimize(&self) -> OptimizeOptions {
        OptimizeOptions {
            seed: self.seed,
            ..OptimizeOptions::default()
        }
    }

    fn cluster(&self) -> Result<Option<Cluster>> {
        self.cluster.as_deref().map(io::load_cluster).transpose()
    }
}

/// Sets `key` (either `name` or `section.name`) in a raw config table.
/// Comma lists become arrays of numbers where every entry parses.
pub fn set_override(t: &mut Table, key: &str, raw: &str) {
    let value = if let Ok(i) = raw.parse::<i64>() {
        Value::Integer(i)
    } else if let Ok(x) = raw.parse::<f64>() {
        Value::Float(x)
    } else if raw.contains(',') && raw.split(',').all(|s| s.trim().parse::<f64>().is_ok()) {
        Value::Array(raw.split(',').map(|s| Value::Float(s.trim().parse().unwrap_or(f64::NAN))).collect())
    } else {
        Value::String(raw.to_string())
    };
    match key.split_once('.') {
        Some((sec, name)) => {
            let entry = t.entry(sec.to_string()).or_insert_with(|| Value::Table(Table::new()));
            if let Value::Table(s) = entry {
                s.insert(name.to_string(), value);
            }
        }
        None => {
            t.insert(key.to_string(), value);
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// soft checks are reported but do not affect the exit code
    pub hard: bool,
    pub detail: String,
}

impl Check {
    fn hard(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            passed,
            hard: true,
            detail,
        }
    }

    fn soft(name: &str, passed: bool, detail: String) -> Self {
        Check {
            hard: false,
            ..Self::hard(name, passed, detail)
        }
    }
}

#[derive(Clone, Debug)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Float(x) => f.write_str(&fmt_f64(*x)),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

fn floats(xs: &[f64]) -> String {
    xs.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" ")
}

#[derive(Clone, Debug)]
pub struct ReportBundle {
    pub experiment: Recipe,
    pub seed: u64,
    pub config: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Json,
    pub checks: Vec<Check>,
    /// `(file name, contents)` of field and cluster snapshots
    pub snapshots: Vec<(String, String)>,
    pub written: Vec<PathBuf>,
}

impl ReportBundle {
    /// All hard checks passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.hard)
    }

    pub fn csv(&self) -> String {
        let mut out = format!("# achlab {} {}\n# seed = {}\n", env!("CARGO_PKG_VERSION"), self.experiment, self.seed);
        for line in self.config.lines() {
            out.push_str("# config: ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn json(&self) -> Json {
        json!({
            "experiment": self.experiment.name(),
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "config": self.config,
            "passed": self.passed(),
            "checks": self.checks,
            "summary": self.summary,
        })
    }

    /// Numeric column by name, skipping rows whose cell is not a float.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| *c == name)?;
        Some(
            self.rows
                .iter()
                .filter_map(|r| match r.get(k) {
                    Some(Cell::Float(x)) => Some(*x),
                    Some(Cell::Int(i)) => Some(*i as f64),
                    _ => None,
                })
                .collect(),
        )
    }

    fn write(&mut self, dir: Option<&Path>, csv: Option<&Path>) -> Result<()> {
        let (csv_path, dir) = match (csv, dir) {
            (Some(c), _) => (c.to_path_buf(), c.parent().map(Path::to_path_buf).unwrap_or_default()),
            (None, Some(d)) => (d.join(format!("{}.csv", self.experiment)), d.to_path_buf()),
            (None, None) => return Ok(()),
        };
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(&dir)?;
        }
        std::fs::write(&csv_path, self.csv())?;
        let json_path = csv_path.with_extension("json");
        let text = serde_json::to_string_pretty(&self.json()).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(&json_path, text)?;
        self.written = vec![csv_path, json_path];
        for (name, body) in &self.snapshots {
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            self.written.push(path);
        }
        Ok(())
    }
}

/// Runs the configured recipe and writes its reports when an output is set.
pub fn run(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let (columns, rows, summary, checks, snapshots) = match cfg.experiment {
        Recipe::Tension => run_tension(cfg),
        Recipe::Gamma1d => run_gamma(cfg),
        Recipe::Minimize => run_minimize(cfg),
        Recipe::Hunt => run_hunt(cfg),
        Recipe::Degeneracy => run_degeneracy(cfg),
        Recipe::Isoperimetric => run_isoperimetric(cfg),
        Recipe::Homotopy => run_homotopy(cfg),
        Recipe::Recover => run_recover(cfg),
    }?;
    let mut bundle = ReportBundle {
        experiment: cfg.experiment,
        seed: cfg.seed,
        config: cfg.text.clone(),
        columns,
        rows,
        summary,
        checks,
        snapshots,
        written: Vec::new(),
    };
    bundle.write(cfg.out_dir.as_deref(), cfg.out_csv.as_deref())?;
    Ok(bundle)
}

type Parts = (Vec<&'static str>, Vec<Vec<Cell>>, Json, Vec<Check>, Vec<(String, String)>);

fn volume_check(name: &str, got: &[f64], want: &[f64]) -> Check {
    let err = got.iter().zip(want).map(|(a, b)| (a - b).abs() / (1.0 + b.abs())).fold(0.0, f64::max);
    Check::hard(name, err <= 1e-12, format!("max relative volume error {}", fmt_f64(err)))
}

fn run_tension(cfg: &ExperimentConfig) -> Result<Parts> {
    let t = cfg.tensions()?;
    let n = t.n();
    let mut rows = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            rows.push(vec![
                Cell::Int(i as i64 + 1),
                Cell::Int(j as i64 + 1),
                Cell::Float(t.get(i, j)),
                Cell::Float(t.pair_margin(i, j)),
                Cell::Int(t.iterations(i, j) as i64),
            ]);
        }
    }
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                if i != j && l != i && l != j {
                    worst = worst.max(t.get(i, j) - t.get(i, l) - t.get(l, j));
                }
            }
        }
    }
    let checks = vec![Check::hard(
        "triangle",
        n < 3 || worst <= 1e-6,
        format!("max ω_ij − ω_il − ω_lj = {}", fmt_f64(worst.max(0.0))),
    )];
    let summary = json!({ "immiscible": t.immiscible(), "margin": t.margin(), "nodes": cfg.nodes });
    Ok((vec!["i", "j", "omega", "margin_to_triangle", "iterations"], rows, summary, checks, Vec::new()))
}

/// Interval (1-D) or ball of interior volume `v` centered in the torus.
fn centered_droplet(grid: &TorusGrid, v: f64) -> Result<Cluster> {
    let g = ConformalMetric::flat(grid);
    cluster::ball_chain(&[v], &g)
}

fn run_gamma(cfg: &ExperimentConfig) -> Result<Parts> {
    let c = match cfg.cluster()? {
        Some(c) => c,
        None => centered_droplet(&cfg.grid()?, cfg.volume[0])?,
    };
    let g = cfg.metric(c.grid())?;
    let t = cfg.tensions()?;
    let sweep = recovery::gamma_sweep(&c, &cfg.potential, &t, &g, &cfg.eps, cfg.tau)?;
    let rows = sweep
        .rows
        .iter()
        .map(|r| {
            vec![
                Cell::Float(r.eps),
                Cell::Float(r.tau),
                Cell::Float(r.energy),
                Cell::Float(r.perimeter),
                Cell::Float(r.gap),
                Cell::Float(r.rel_gap),
            ]
        })
        .collect();
    let checks = vec![Check::hard(
        "gap decreasing",
        sweep.decreasing,
        format!("|gap| = {}", floats(&sweep.rows.iter().map(|r| r.gap.abs()).collect::<Vec<_>>())),
    )];
    let summary = json!({ "tau_rule": cfg.tau.to_string(), "rows": sweep.rows });
    Ok((vec!["eps", "tau", "energy", "perimeter", "gap", "rel_gap"], rows, summary, checks, Vec::new()))
}

/// Sharp ball-chain profile of field volume `v` plus seeded noise, projected
/// back onto the volume constraint.
fn noisy_start(cfg: &ExperimentConfig, g: &ConformalMetric, index: u64, amplitude: f64) -> Result<Field> {
    let p = &cfg.potential;
    let coords = ChamberCoords::new(p.minima(), g.total_volume())?;
    let mut w = coords.of(&cfg.volume);
    w.pop();
    let c = cluster::ball_chain(&w, g)?;
    let grid = g.grid();
    let mut rng = rng::substream(cfg.seed, index);
    let n = grid.len();
    let mut values = vec![0.0; p.m() * n];
    for k in 0..p.m() {
        for cell in 0..n {
            values[k * n + cell] = p.well(c.label(cell))[k] + rng::uniform(&mut rng, -amplitude, amplitude);
        }
    }
    let u = Field::from_values(grid, p.m(), values)?;
    field::project_volume(&u, &cfg.volume, g)
}

fn run_minimize(cfg: &ExperimentConfig) -> Result<Parts> {
    let grid = cfg.grid()?;
    let g = cfg.metric(&grid)?;
    let eps = cfg.eps[0];
    let u0 = noisy_start(cfg, &g, 0, 0.05)?;
    let opts = FlowOptions {
        tol: cfg.tol,
        ..FlowOptions::default()
    };
    let cp = match field::constrained_flow(&u0, eps, &cfg.volume, &cfg.potential, &g, &opts) {
        Ok(cp) => cp,
        Err(Error::FlowNonConvergence { partial, .. }) => *partial,
        Err(e) => return Err(e),
    };
    let rep = spectrum::nondegeneracy_check(&cp, &cfg.potential, &g, 60)?;
    let rows = vec![vec![
        Cell::Float(eps),
        Cell::Float(cp.energy),
        Cell::Float(cp.residual_norm),
        Cell::Int(cp.iterations as i64),
        Cell::Text(floats(&cp.lambda)),
        Cell::Float(rep.sigma_min),
    ]];
    let checks = vec![
        Check::hard("residual", cp.residual_norm <= cfg.tol, format!("residual {}", fmt_f64(cp.residual_norm))),
        volume_check("volume", &cp.volume, &cfg.volume),
        Check::soft("nondegenerate", rep.nondegenerate, format!("sigma_min {}", fmt_f64(rep.sigma_min))),
    ];
    let summary = json!({ "nondegeneracy": rep, "volume": cp.volume, "lambda": cp.lambda });
    let snaps = vec![("minimize.achf".to_string(), io::write_field(&cp.u))];
    Ok((vec!["eps", "energy", "residual", "iterations", "lambda", "sigma_min"], rows, summary, checks, snaps))
}

/// `count` photography seeds at uniformly random points.
pub fn photo_seeds(
    cfg: &ExperimentConfig,
    g: &ConformalMetric,
    t: &TensionMatrix,
    eps: f64,
    count: usize,
) -> Result<Vec<Field>> {
    let table = build_profile(&cfg.potential, t, eps, cfg.tau.tau(eps), 1024)?;
    let grid = g.grid();
    (0..count)
        .map(|i| {
            let mut rng = rng::substream(cfg.seed, i as u64);
            let x: Vec<f64> = grid.lengths().iter().map(|l| rng::uniform(&mut rng, 0.0, *l)).collect();
            photography::photo_with(&x, &cfg.volume, &cfg.potential, &table, t, g, Default::default()).map(|ph| ph.recovery.u)
        })
        .collect()
}

fn run_hunt(cfg: &ExperimentConfig) -> Result<Parts> {
    let grid = cfg.grid()?;
    let g = cfg.metric(&grid)?;
    let eps = cfg.eps[0];
    let t = cfg.tensions()?;
    let seeds = photo_seeds(cfg, &g, &t, eps, cfg.seeds)?;
    let opts = HuntOptions {
        flow: FlowOptions {
            tol: cfg.tol,
            ..FlowOptions::default()
        },
        dedup_tol: None,
    };
    let res = field::hunt(&cfg.potential, &g, eps, &cfg.volume, &seeds, &opts)?;
    let rows = res
        .seeds
        .iter()
        .map(|s| {
            vec![
                Cell::Int(s.seed as i64),
                Cell::Int(s.converged as i64),
                Cell::Float(s.residual),
                Cell::Float(s.energy),
                Cell::Int(s.class.map_or(-1, |c| c as i64)),
                Cell::Int(s.iterations as i64),
            ]
        })
        .collect();
    let worst_res = res.points.iter().map(|p| p.residual_norm).fold(0.0, f64::max);
    let mut checks = vec![Check::hard(
        "residuals",
        !res.points.is_empty() && worst_res <= cfg.tol,
        format!("{} points, max residual {}", res.points.len(), fmt_f64(worst_res)),
    )];
    for (k, p) in res.points.iter().enumerate() {
        checks.push(volume_check(&format!("volume {k}"), &p.volume, &cfg.volume));
    }
    let predicted = grid.dim() + 1;
    checks.push(Check::soft(
        "eta ≥ cat + 1",
        res.eta >= predicted,
        format!("eta = {}, predicted ≥ {predicted}", res.eta),
    ));
    let energies: Vec<f64> = res.points.iter().map(|p| p.energy).collect();
    let summary = json!({ "eta": res.eta, "dropped": res.dropped, "predicted": predicted, "energies": energies });
    let snaps = res.points.iter().enumerate().map(|(k, p)| (format!("hunt_{k}.achf"), io::write_field(&p.u))).collect();
    Ok((vec!["seed", "converged", "residual", "energy", "class", "iterations"], rows, summary, checks, snaps))
}

fn run_degeneracy(cfg: &ExperimentConfig) -> Result<Parts> {
    let grid = cfg.grid()?;
    let g = cfg.metric(&grid)?;
    let modes = spectrum::degeneracy_scan(&cfg.potential, &cfg.volume, &g, cfg.eps_range, cfg.modes)?;
    let rows = modes
        .iter()
        .map(|m| {
            let mode = m.mode.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ");
            vec![Cell::Float(m.eps), Cell::Text(mode), Cell::Float(m.alpha), Cell::Float(m.mu)]
        })
        .collect();
    let summary = json!({ "count": modes.len(), "modes": modes });
    Ok((vec!["eps", "mode", "alpha", "mu"], rows, summary, Vec::new(), Vec::new()))
}

fn load_omega(spec: &OmegaSpec, n: usize) -> Result<TensionMatrix> {
    let path = match spec {
        OmegaSpec::Unit => return Ok(TensionMatrix::unit(n)),
        OmegaSpec::File(p) => p,
    };
    let text = std::fs::read_to_string(path)?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::config("omega", format!("bad entry `{s}`"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::config("omega", format!("expected a {n}×{n} matrix")));
    }
    TensionMatrix::from_omega(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn run_isoperimetric(cfg: &ExperimentConfig) -> Result<Parts> {
    let grid = cfg.grid()?;
    let g = cfg.metric(&grid)?;
    let n = cfg.volume.len() + 1;
    let omega = load_omega(&cfg.omega, n)?;
    let opts = MboOptions {
        dt: cfg.dt,
        max_sweeps: cfg.max_sweeps,
        ..MboOptions::default()
    };
    let res = cluster::mbo_minimize(&cfg.volume, &omega, &g, &opts)?;
    let iso = cluster::isotropic_perimeters(&res.cluster, &g)?;
    let bounds = cluster::isoperimetric_bounds(&cfg.volume, &omega, grid.dim())?;
    let sub = cluster::large_subdomain_report(&res.cluster, &g)?;
    let rows = (0..n - 1)
        .map(|i| {
            vec![
                Cell::Int(i as i64 + 1),
                Cell::Float(cfg.volume[i]),
                Cell::Float(res.volumes[i]),
                Cell::Float(iso[i]),
            ]
        })
        .collect();
    let cell = grid.cell_volume() * g.b().iter().copied().fold(0.0, f64::max);
    let vol_err = res.volumes.iter().zip(&cfg.volume).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let half = 0.5 * res.perimeter;
    let checks = vec![
        Check::hard("volumes", vol_err <= cell, format!("max volume error {} (cell {})", fmt_f64(vol_err), fmt_f64(cell))),
        Check::hard(
            "perimeter not increased",
            res.perimeter <= res.initial_perimeter,
            format!("{} → {}", fmt_f64(res.initial_perimeter), fmt_f64(res.perimeter)),
        ),
        // the bounds count each interface once; the multi-perimeter counts ordered pairs
        Check::soft(
            "bounds",
            half >= 0.97 * bounds.lower && half <= 1.03 * bounds.upper,
            format!("{} ≤ {} ≤ {} (3% grid slack)", fmt_f64(bounds.lower), fmt_f64(half), fmt_f64(bounds.upper)),
        ),
        Check::soft("connected", sub.components == 1, format!("{} components", sub.components)),
    ];
    let summary = json!({
        "perimeter": res.perimeter,
        "initial_perimeter": res.initial_perimeter,
        "sweeps": res.sweeps,
        "converged": res.converged,
        "bounds": bounds,
        "subdomain": sub,
    });
    let snaps = vec![("isoperimetric.achc".to_string(), io::write_cluster(&res.cluster))];
    Ok((vec!["chamber", "target", "volume", "isotropic_perimeter"], rows, summary, checks, snaps))
}

fn run_homotopy(cfg: &ExperimentConfig) -> Result<Parts> {
    let grid = cfg.grid()?;
    let g = cfg.metric(&grid)?;
    let t = cfg.tensions()?;
    let sample = photography::lattice(&grid, cfg.samples);
    let opts = PhotoOptions {
        tau: cfg.tau,
        ..PhotoOptions::default()
    };
    let rep = photography::homotopy_check(&cfg.volume, cfg.eps[0], &cfg.potential, &t, &g, &sample, &opts)?;
    let rows = rep
        .rows
        .iter()
        .map(|r| {
            vec![
                Cell::Text(floats(&r.x)),
                Cell::Text(r.projected.as_deref().map_or("undefined".into(), floats)),
                Cell::Float(r.dist),
            ]
        })
        .collect();
    let h = grid.h_max();
    let checks = vec![
        Check::hard("defined", rep.undefined == 0, format!("{} undefined", rep.undefined)),
        Check::soft("max_dist < 3h", rep.max_dist < 3.0 * h, format!("max_dist {} (3h = {})", fmt_f64(rep.max_dist), fmt_f64(3.0 * h))),
    ];
    let summary = json!({ "max_dist": rep.max_dist, "undefined": rep.undefined, "h": h });
    Ok((vec!["x", "barycenter", "dist"], rows, summary, checks, Vec::new()))
}

fn run_recover(cfg: &ExperimentConfig) -> Result<Parts> {
    let c = cfg.cluster()?.ok_or_else(|| Error::config("cluster", "missing"))?;
    let g = cfg.metric(c.grid())?;
    let t = cfg.tensions()?;
    let p = &cfg.potential;
    let target = match cfg.volume.as_slice() {
        [] => None,
        v => Some(v),
    };
    let perimeter = cluster::multi_perimeter(&c, &t, &g)?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut snaps = Vec::new();
    for (k, &eps) in cfg.eps.iter().enumerate() {
        let tau = cfg.tau.tau(eps);
        let rec = recovery::modica_baldo(&c, p, &t, eps, tau, &g, target)?;
        let energy = field::energy(&rec.u, eps, p, &g)?;
        let v = field::volume(&rec.u, &g)?;
        let want = match target {
            Some(v) => v.to_vec(),
            None => recovery::sharp_volume(&c, p, &g)?,
        };
        checks.push(volume_check(&format!("volume at eps {}", fmt_f64(eps)), &v, &want));
        rows.push(vec![
            Cell::Float(eps),
            Cell::Float(tau),
            Cell::Float(energy),
            Cell::Float(perimeter),
            Cell::Int(rec.no_ball_host as i64),
            Cell::Int(rec.under_resolved as i64),
        ]);
        if k + 1 == cfg.eps.len() {
            snaps.push(("recover.achf".to_string(), io::write_field(&rec.u)));
        }
    }
    let summary = json!({ "perimeter": perimeter, "tau_rule": cfg.tau.to_string() });
    Ok((vec!["eps", "tau", "energy", "perimeter", "no_ball_host", "under_resolved"], rows, summary, checks, snaps))
}
