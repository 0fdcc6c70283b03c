//! Threshold dynamics relaxing a square and a pair of squares.

use std::f64::consts::PI;

use achlab::cluster::{self, Cluster, MboOptions};
use achlab::field::{ConformalMetric, TorusGrid};
use achlab::photography::DoubleBubble;
use achlab::tension::TensionMatrix;

fn square(grid: &TorusGrid, n: usize, boxes: &[(f64, f64, f64)]) -> achlab::Result<Cluster> {
    Cluster::from_fn(grid, n, |x| {
        boxes
            .iter()
            .position(|(cx, cy, s)| (x[0] - cx).abs() < 0.5 * s && (x[1] - cy).abs() < 0.5 * s)
            .unwrap_or(n - 1)
    })
}

fn main() -> achlab::Result<()> {
    let grid = TorusGrid::unit(&[192, 192])?;
    let g = ConformalMetric::flat(&grid);

    let v: f64 = 0.05;
    let init = square(&grid, 2, &[(0.5, 0.5, v.sqrt())])?;
    let opts = MboOptions {
        init: Some(init),
        ..MboOptions::default()
    };
    let res = cluster::mbo_minimize(&[v], &TensionMatrix::unit(2), &g, &opts)?;
    let per = cluster::isotropic_perimeters(&res.cluster, &g)?[0];
    println!(
        "single chamber: perimeter {:.5} (disk {:.5}) after {} sweeps, volume {:.6}",
        per,
        2.0 * (PI * v).sqrt(),
        res.sweeps,
        res.volumes[0]
    );

    // two touching squares relax towards a double bubble
    let s = 0.03f64.sqrt();
    let init = square(&grid, 3, &[(0.5 - 0.5 * s, 0.5, s), (0.5 + 0.5 * s, 0.5, s)])?;
    let opts = MboOptions {
        init: Some(init),
        ..MboOptions::default()
    };
    let res = cluster::mbo_minimize(&[0.03, 0.03], &TensionMatrix::unit(3), &g, &opts)?;
    // ordered pairs count every arc twice
    let bubble = 2.0 * DoubleBubble::with_areas(0.03, 0.03).perimeter();
    println!(
        "two chambers: isotropic multi-perimeter {:.5} -> {:.5} (double bubble {:.5}) in {} sweeps, components {}",
        res.initial_perimeter,
        res.perimeter,
        bubble,
        res.sweeps,
        cluster::interior_components(&res.cluster)
    );
    Ok(())
}
