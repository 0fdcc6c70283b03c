//! Field and cluster snapshots round-trip bit for bit.

use achlab::cluster;
use achlab::field::{ConformalMetric, Field, TorusGrid};
use achlab::io;

fn main() -> achlab::Result<()> {
    let grid = TorusGrid::new(&[16, 8], &[1.0, 0.5])?;
    let u = Field::from_fn(&grid, 2, |x| vec![(7.0 * x[0]).sin(), x[1] / 3.0]);
    let text = io::write_field(&u);
    println!("{}", text.lines().take(3).collect::<Vec<_>>().join("\n"));
    let back = io::read_field(&text)?;
    let same = u.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits());
    println!("field round trip bit-exact: {same}\n");

    let g = ConformalMetric::flat(&grid);
    let c = cluster::ball_chain(&[0.05], &g)?;
    let text = io::write_cluster(&c);
    println!("{}", text.lines().take(4).collect::<Vec<_>>().join("\n"));
    println!("cluster round trip: {}", io::read_cluster(&text)?.labels() == c.labels());
    Ok(())
}
