//! Recovery fields of a disk along an ε ladder.
//!
//! The energy approaches the ordered-pair multi-perimeter `2 ω P`, and the
//! volume is exact at every ε.

use std::f64::consts::PI;

use achlab::cluster;
use achlab::field::{self, ConformalMetric, TorusGrid};
use achlab::potential::Potential;
use achlab::recovery::{self, TauRule};
use achlab::tension::{tension_matrix, OptimizeOptions};

fn main() -> achlab::Result<()> {
    let grid = TorusGrid::unit(&[256, 256])?;
    let g = ConformalMetric::flat(&grid);
    let p = Potential::double_well();
    let t = tension_matrix(&p, 256, &OptimizeOptions::default())?;
    let v = 0.08;
    let c = cluster::ball_chain(&[v], &g)?;

    let d = recovery::signed_distances(&c)?;
    let deepest = d.chamber(0).iter().copied().fold(f64::INFINITY, f64::min);
    println!("deepest point {:.5} (radius {:.5})", -deepest, (v / PI).sqrt());

    // at eps of a few cells the staircase boundary slows the approach
    let smooth = 2.0 * t.get(0, 1) * 2.0 * (PI * v).sqrt();
    println!("continuum limit 2 omega P = {smooth:.6}");
    println!("{:>6} {:>8} {:>10} {:>10} {:>12}", "eps", "tau", "energy", "rel gap", "volume err");
    for eps in [0.04, 0.03, 0.02, 0.015] {
        for rule in [TauRule::Auto, TauRule::Sqrt] {
            let tau = rule.tau(eps);
            let rec = recovery::modica_baldo(&c, &p, &t, eps, tau, &g, Some(&[v]))?;
            let e = field::energy(&rec.u, eps, &p, &g)?;
            let err = field::volume(&rec.u, &g)?[0] - v;
            println!("{eps:>6} {tau:>8.4} {e:>10.6} {:>10.4} {err:>12.2e}", (e - smooth) / smooth);
        }
    }

    // the recovered field, read back through the supremum of measures
    let rec = recovery::modica_baldo(&c, &p, &t, 0.02, 0.02, &g, None)?;
    let (lhs, rhs) = recovery::sup_measure_check(&rec.u, &p, &t, &g)?;
    println!("sup-measure check: {lhs:.5} vs face-count multi-perimeter {rhs:.5}");
    Ok(())
}
