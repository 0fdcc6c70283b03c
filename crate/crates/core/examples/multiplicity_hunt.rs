//! Counting distinct critical points reached from photography seeds on a
//! bumped torus.

use achlab::field::{hunt, ConformalMetric, HuntOptions, TorusGrid};
use achlab::photography;
use achlab::potential::Potential;
use achlab::recovery::{build_profile, TauRule};
use achlab::rng;
use achlab::tension::{tension_matrix, OptimizeOptions};

fn main() -> achlab::Result<()> {
    let grid = TorusGrid::unit(&[64, 64])?;
    let g = ConformalMetric::parse("prod:0.2", &grid)?;
    let p = Potential::double_well();
    let t = tension_matrix(&p, 128, &OptimizeOptions::default())?;
    let (eps, v) = (0.07, [0.1]);
    let table = build_profile(&p, &t, eps, TauRule::Auto.tau(eps), 1024)?;

    let seeds = (0..12u64)
        .map(|i| {
            let mut s = rng::substream(3, i);
            let x = [rng::uniform(&mut s, 0.0, 1.0), rng::uniform(&mut s, 0.0, 1.0)];
            photography::photo_with(&x, &v, &p, &table, &t, &g, Default::default()).map(|ph| ph.recovery.u)
        })
        .collect::<achlab::Result<Vec<_>>>()?;

    let res = hunt(&p, &g, eps, &v, &seeds, &HuntOptions::default())?;
    println!("eta = {} distinct critical points ({} seeds dropped)", res.eta, res.dropped);
    for (k, cp) in res.points.iter().enumerate() {
        println!("  #{k}: E = {:.10}  residual {:.2e}", cp.energy, cp.residual_norm);
    }
    for s in &res.seeds {
        println!("  seed {:>2} -> class {:?} in {} iterations", s.seed, s.class, s.iterations);
    }
    Ok(())
}
