//! Photographs of points, their barycenters, and mass concentration.

use achlab::field::{ConformalMetric, TorusGrid};
use achlab::photography::{self, PhotoOptions};
use achlab::potential::Potential;
use achlab::tension::{tension_matrix, OptimizeOptions};

fn main() -> achlab::Result<()> {
    let grid = TorusGrid::unit(&[128, 128])?;
    let g = ConformalMetric::flat(&grid);
    let opts = PhotoOptions::default();

    let p = Potential::double_well();
    let t = tension_matrix(&p, 256, &OptimizeOptions::default())?;
    for x in [[0.25, 0.25], [0.9, 0.05], [0.5, 0.7]] {
        let ph = photography::photo(&x, &[0.03], 0.04, &p, &t, &g, &opts)?;
        let b = photography::barycenter(ph.field(), &g)?;
        let conc = photography::concentration_report(ph.field(), &g, 0.4)?;
        println!(
            "x = {x:?} -> barycenter {:?}, mass fraction {:.4} near {:?}",
            b.projected.map(|q| q.iter().map(|c| (c * 1e4).round() / 1e4).collect::<Vec<_>>()),
            conc.mass_fraction,
            conc.x_star
        );
    }

    // three phases: an equal-area double bubble
    let p3 = Potential::product_triple_well([1.0, 0.0], [0.0, 1.0])?;
    let t3 = tension_matrix(&p3, 64, &OptimizeOptions::default())?;
    let ph = photography::photo(&[0.5, 0.5], &[0.02, 0.02], 0.04, &p3, &t3, &g, &opts)?;
    let v = achlab::cluster::volumes(&ph.cluster, &g)?;
    println!(
        "double bubble chambers {:.5} {:.5}, equal-tension shape used with unequal tensions: {}",
        v[0], v[1], ph.shape_fallback
    );
    Ok(())
}
