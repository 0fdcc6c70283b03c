//! Volumes, interfaces and multi-perimeters of a three-chamber cluster.

use achlab::cluster::{self, Cluster};
use achlab::field::{ConformalMetric, TorusGrid};
use achlab::tension::TensionMatrix;

fn main() -> achlab::Result<()> {
    let grid = TorusGrid::unit(&[128, 128])?;
    let g = ConformalMetric::flat(&grid);
    // two half-disks sharing a diameter
    let c = Cluster::from_fn(&grid, 3, |x| {
        let (dx, dy) = (x[0] - 0.5, x[1] - 0.5);
        match (dx.hypot(dy) < 0.2, dx < 0.0) {
            (true, true) => 0,
            (true, false) => 1,
            _ => 2,
        }
    })?;
    let omega = TensionMatrix::unit(3);
    let v = cluster::volumes(&c, &g)?;
    println!("volumes {:.5} {:.5} exterior {:.5}", v[0], v[1], v[2]);

    let h = cluster::interface_measure(&c, &g)?;
    // smoothing rounds the triple junctions, an O(h) loss on the 1|2 segment
    let iso = cluster::isotropic_interfaces(&c, &g)?;
    println!("interface   faces     isotropic   exact");
    println!("  1|2     {:.5}   {:.5}     {:.5}", h[(0, 1)], iso[(0, 1)], 0.4);
    println!("  1|ext   {:.5}   {:.5}     {:.5}", h[(0, 2)], iso[(0, 2)], std::f64::consts::PI * 0.2);
    println!(
        "multi-perimeter (ordered pairs): faces {:.5}, isotropic {:.5}",
        cluster::multi_perimeter(&c, &omega, &g)?,
        cluster::isotropic_multi_perimeter(&c, &omega, &g)?
    );

    let b = cluster::isoperimetric_bounds(&v[..2], &omega, 2)?;
    println!("small-volume bounds [{:.5}, {:.5}] with c_n = {:.5}", b.lower, b.upper, b.c_n);
    let sub = cluster::large_subdomain_report(&c, &g)?;
    println!("diameter {:.5}, components {}", sub.diameter, sub.components);

    let shifted = c.translated(&[3, 0]);
    println!("flat distance to a 3-cell shift: {:.5}", cluster::flat_distance(&c, &shifted, &g)?);
    Ok(())
}
