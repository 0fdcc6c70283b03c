//! Running recipes from configuration text, as the command line does.

use std::path::Path;

use achlab::experiments::{run, ExperimentConfig};

const GAMMA: &str = r#"
experiment = "gamma-1d"
seed = 1

[grid]
shape = [2048]

[params]
eps = [0.04, 0.02, 0.01]
volume = 0.3
tau = "auto"
"#;

fn main() -> achlab::Result<()> {
    let cfg = ExperimentConfig::from_toml(GAMMA, Path::new("."))?;
    let report = run(&cfg)?;
    print!("{}", report.csv());
    println!("hard checks passed: {}\n", report.passed());

    let scan = GAMMA.replace("gamma-1d", "degeneracy").replace("[2048]", "[32, 32]").replace("0.3", "0.5");
    let report = run(&ExperimentConfig::from_toml(&scan, Path::new("."))?)?;
    println!("degeneracy eps: {:?}", report.column("eps").unwrap_or_default());

    match ExperimentConfig::from_toml("experiment = \"hunt\"\n[params]\nvolume = 0.1\n", Path::new(".")) {
        Err(e) => println!("malformed config: {e}"),
        Ok(_) => unreachable!("eps is required"),
    }
    Ok(())
}
