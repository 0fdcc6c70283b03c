//! Volume-constrained gradient flow from a noisy droplet, then the
//! nondegeneracy check of the limit.

use achlab::field::spectrum::nondegeneracy_check;
use achlab::field::{constrained_flow, project_volume, ConformalMetric, Field, FlowOptions, TorusGrid};
use achlab::potential::Potential;
use achlab::rng;

fn main() -> achlab::Result<()> {
    let grid = TorusGrid::unit(&[64, 64])?;
    let p = Potential::double_well();
    let (eps, v) = (0.06, [0.15]);
    let mut s = rng::stream(1);
    let r = (v[0] / std::f64::consts::PI).sqrt();
    let values = (0..grid.len())
        .map(|cell| {
            let inside = grid.distance(&grid.center(cell), &[0.5, 0.5]) < r;
            inside as u8 as f64 + rng::uniform(&mut s, -0.05, 0.05)
        })
        .collect();
    let u0 = Field::from_values(&grid, 1, values)?;

    for rho in ["1", "bump:0.2,0"] {
        let g = ConformalMetric::parse(rho, &grid)?;
        let u0 = project_volume(&u0, &v, &g)?;
        let cp = constrained_flow(&u0, eps, &v, &p, &g, &FlowOptions::default())?;
        let rep = nondegeneracy_check(&cp, &p, &g, 80)?;
        println!(
            "rho = {rho:<10} E = {:.8}  lambda = {:+.6}  residual {:.2e}  {} iterations",
            cp.energy, cp.lambda[0], cp.residual_norm, cp.iterations
        );
        println!(
            "                 sigma_min = {:.3e} (floor {:.1e}) -> {}",
            rep.sigma_min,
            rep.floor,
            if rep.nondegenerate { "nondegenerate" } else { "degenerate" }
        );
    }
    Ok(())
}
