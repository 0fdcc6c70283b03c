use std::path::{Path, PathBuf};
use std::process::ExitCode;

use achlab::experiments::{self, ExperimentConfig};
use clap::{Args, Parser, Subcommand};
use toml::Table;

const LONG_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (snapshots ACHF 1, ACHC 1; config format 1)");

#[derive(Parser)]
#[command(name = "achlab", version, long_version = LONG_VERSION, about = "Phase-field cluster laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Surface tensions of a potential
    Tension(Flags),
    /// Constrained gradient flow from a ball start
    Minimize(Flags),
    /// Count distinct critical points from photography seeds
    Hunt(Flags),
    /// ε values where the constant state degenerates
    DegeneracyScan(Flags),
    /// Threshold dynamics for small-volume clusters
    Isoperimetric(Flags),
    /// Recovery energies along an ε ladder
    GammaSweep(Flags),
    /// Barycenter of photographs on a sample lattice
    Homotopy(Flags),
    /// Recovery field of a cluster snapshot
    Recover(Flags),
    /// Run the recipe named in the config
    Run(Flags),
}

#[derive(Args, Default)]
struct Flags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// potential file (TOML)
    #[arg(long)]
    potential: Option<PathBuf>,
    /// geodesic nodes K
    #[arg(long)]
    nodes: Option<usize>,
    /// ε or a comma-separated ladder
    #[arg(long)]
    eps: Option<String>,
    #[arg(long, visible_alias = "volumes")]
    volume: Option<String>,
    /// cells per axis, e.g. 256x256
    #[arg(long)]
    grid: Option<String>,
    /// conformal factor: 1, bump:A,x0 or prod:A
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    /// auto (τ = ε), sqrt or a number
    #[arg(long)]
    tau: Option<String>,
    /// number of photography seeds
    #[arg(long)]
    seeds: Option<usize>,
    /// highest wave number per axis
    #[arg(long)]
    modes: Option<usize>,
    /// lo,hi
    #[arg(long)]
    eps_range: Option<String>,
    /// k or kxk
    #[arg(long)]
    samples: Option<String>,
    /// `unit` or a CSV matrix
    #[arg(long)]
    omega: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    /// cluster snapshot (ACHC)
    #[arg(long)]
    cluster: Option<PathBuf>,
    /// main CSV; the JSON report and snapshots go next to it
    #[arg(long)]
    out: Option<PathBuf>,
}

fn absolute(p: &Path) -> String {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf()).display().to_string()
}

fn build(recipe: Option<&str>, f: &Flags) -> achlab::Result<ExperimentConfig> {
    let (mut table, base) = match &f.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let t: Table = text.parse().map_err(|e| achlab::Error::Parse(format!("{}: {e}", path.display())))?;
            (t, path.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (Table::new(), PathBuf::from(".")),
    };
    let mut set = |key: &str, value: String| experiments::set_override(&mut table, key, &value);
    if let Some(r) = recipe {
        set("experiment", r.to_string());
    }
    if let Some(s) = f.seed {
        set("seed", s.to_string());
    }
    if let Some(p) = &f.potential {
        set("potential.file", absolute(p));
    }
    let strings = [
        ("params.eps", &f.eps),
        ("params.volume", &f.volume),
        ("grid.rho", &f.rho),
        ("params.tau", &f.tau),
        ("params.eps_range", &f.eps_range),
        ("params.samples", &f.samples),
    ];
    for (key, v) in strings {
        if let Some(v) = v {
            set(key, v.clone());
        }
    }
    if let Some(g) = &f.grid {
        set("grid.shape", g.clone());
    }
    if let Some(o) = &f.omega {
        set("params.omega", if o == "unit" { o.clone() } else { absolute(Path::new(o)) });
    }
    let numbers = [
        ("potential.nodes", f.nodes.map(|x| x.to_string())),
        ("params.tol", f.tol.map(|x| x.to_string())),
        ("params.seeds", f.seeds.map(|x| x.to_string())),
        ("params.modes", f.modes.map(|x| x.to_string())),
        ("params.dt", f.dt.map(|x| x.to_string())),
        ("params.max_sweeps", f.max_sweeps.map(|x| x.to_string())),
    ];
    for (key, v) in numbers {
        if let Some(v) = v {
            set(key, v);
        }
    }
    if let Some(c) = &f.cluster {
        set("params.cluster", absolute(c));
    }
    if let Some(o) = &f.out {
        set("output.csv", absolute(o));
    }
    if !table.contains_key("experiment") {
        return Err(achlab::Error::Parse("no experiment: pass --config with `experiment = ...`".into()));
    }
    ExperimentConfig::from_table(&table, &base)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (recipe, flags) = match &cli.command {
        Command::Tension(f) => (Some("tension"), f),
        Command::Minimize(f) => (Some("minimize"), f),
        Command::Hunt(f) => (Some("hunt"), f),
        Command::DegeneracyScan(f) => (Some("degeneracy"), f),
        Command::Isoperimetric(f) => (Some("isoperimetric"), f),
        Command::GammaSweep(f) => (Some("gamma-1d"), f),
        Command::Homotopy(f) => (Some("homotopy"), f),
        Command::Recover(f) => (Some("recover"), f),
        Command::Run(f) => (None, f),
    };
    let result = build(recipe, flags).and_then(|cfg| experiments::run(&cfg));
    match result {
        Ok(bundle) => {
            if bundle.written.is_empty() {
                print!("{}", bundle.csv());
            } else {
                for p in &bundle.written {
                    eprintln!("wrote {}", p.display());
                }
            }
            for c in &bundle.checks {
                let tag = match (c.passed, c.hard) {
                    (true, _) => "PASS",
                    (false, true) => "FAIL",
                    (false, false) => "NOTE",
                };
                eprintln!("{tag} {}: {}", c.name, c.detail);
            }
            if bundle.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
