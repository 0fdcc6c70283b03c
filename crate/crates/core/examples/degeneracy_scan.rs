//! ε values at which the constant state v/|T²| acquires a kernel.
//!
//! At a constant `c` the second variation is `−2εΔ + ε⁻¹W''(c)`, so a
//! Laplacian eigenvalue α and `W''(c) < 0` meet at `ε² = −W''(c)/(2α)`.

use std::f64::consts::PI;

use achlab::field::spectrum::{degeneracy_scan, nondegeneracy_check};
use achlab::field::{constrained_flow, ConformalMetric, Field, FlowOptions, TorusGrid};
use achlab::potential::Potential;

fn main() -> achlab::Result<()> {
    let grid = TorusGrid::unit(&[64, 64])?;
    let g = ConformalMetric::flat(&grid);
    let p = Potential::double_well();
    let modes = degeneracy_scan(&p, &[0.5], &g, (0.0, 1.0), 3)?;
    println!("{:>12}  {:>6}  {:>12}", "eps", "mode", "alpha");
    for m in &modes {
        println!("{:>12.8}  {:>6}  {:>12.5}", m.eps, format!("{:?}", m.mode), m.alpha);
    }

    // the discrete Laplacian shifts the kernel slightly off the scanned value
    let u = Field::constant(&grid, &[0.5]);
    for eps in [modes[0].eps, 1.0 / (2.0 * PI), 0.2] {
        let cp = constrained_flow(&u, eps, &[0.5], &p, &g, &FlowOptions::default())?;
        let rep = nondegeneracy_check(&cp, &p, &g, 80)?;
        println!("eps = {eps:.6}: sigma_min = {:.4e} ({} Lanczos steps)", rep.sigma_min, rep.steps);
    }
    Ok(())
}
