//! Sampled check of the admissible-class conditions for the built-in potentials.

use achlab::potential::Potential;

fn main() -> achlab::Result<()> {
    let wells = [
        ("double well", Potential::double_well()),
        ("product triple well", Potential::product_triple_well([1.0, 0.0], [0.0, 1.0])?),
        ("spliced triple well", Potential::spliced_triple_well([1.0, 0.0], [0.0, 1.0], 3.0, 0.5)?),
    ];
    for (name, p) in &wells {
        let rep = p.verify_class(2000, 4.0);
        println!("{name}: m = {}, N = {}", p.m(), p.n_wells());
        for c in &rep.conditions {
            println!("  {:<6} {:?}  {}", c.name, c.status, c.detail);
        }
        println!(
            "  fitted exponents p1 = {:.3}, p2 = {:.3}; subcritical in 2-D: {}",
            rep.fitted_p1, rep.fitted_p2, rep.subcritical_in_2d
        );
    }
    Ok(())
}
