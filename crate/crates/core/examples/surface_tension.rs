//! Surface tensions as degenerate-metric distances between wells.
//!
//! The double well has ω = ∫₀¹ u(1−u) du = 1/6.

use achlab::potential::Potential;
use achlab::tension::{geodesic_distance, tension_matrix, OptimizeOptions};

fn main() -> achlab::Result<()> {
    let opts = OptimizeOptions::default();
    let t = tension_matrix(&Potential::double_well(), 256, &opts)?;
    println!("double well: omega = {:.8} (1/6 = {:.8})", t.get(0, 1), 1.0 / 6.0);

    let p = Potential::product_triple_well([1.0, 0.0], [0.0, 1.0])?;
    let t = tension_matrix(&p, 128, &opts)?;
    println!("triple well tensions:");
    for i in 0..3 {
        for j in i + 1..3 {
            println!(
                "  omega[{}][{}] = {:.8}  margin {:+.3e}  ({} iterations)",
                i + 1,
                j + 1,
                t.get(i, j),
                t.pair_margin(i, j),
                t.iterations(i, j)
            );
        }
    }
    println!("immiscible: {} (worst margin {:.3e})", t.immiscible(), t.margin());

    // a single geodesic between arbitrary points
    let g = geodesic_distance(&p, &[1.0, 0.0], &[0.5, 0.5], 64, &opts)?;
    println!("d_W((1,0), (0.5,0.5)) = {:.8} after {} iterations", g.distance, g.iterations);
    Ok(())
}
