//! Barycenter ∘ photography against the identity on a sample lattice.

use achlab::field::{ConformalMetric, TorusGrid};
use achlab::photography::{self, PhotoOptions};
use achlab::potential::Potential;
use achlab::tension::{tension_matrix, OptimizeOptions};

fn main() -> achlab::Result<()> {
    let grid = TorusGrid::unit(&[128, 128])?;
    let p = Potential::double_well();
    let t = tension_matrix(&p, 256, &OptimizeOptions::default())?;
    for rho in ["1", "prod:0.2"] {
        let g = ConformalMetric::parse(rho, &grid)?;
        let sample = photography::lattice(&grid, 3);
        let rep = photography::homotopy_check(&[0.02], 0.03, &p, &t, &g, &sample, &PhotoOptions::default())?;
        println!("rho = {rho}: max_dist {:.3e} (h = {:.3e}), undefined {}", rep.max_dist, grid.h_max(), rep.undefined);
        for r in &rep.rows {
            println!("  {:?} -> {:?}", r.x, r.projected);
        }
    }
    Ok(())
}
