//! Text snapshots of fields (`ACHF 1`) and clusters (`ACHC 1`).
//!
//! Floats are written with 17 significant digits, which round-trips every
//! `f64` bit for bit. Cluster labels are 1-based on disk.

use std::fmt::Write as _;
use std::path::Path;

use crate::cluster::Cluster;
use crate::error::{Error, Result};
use crate::field::{Field, TorusGrid};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn join<T>(xs: &[T], f: impl Fn(&T) -> String) -> String {
    xs.iter().map(f).collect::<Vec<_>>().join(",")
}

fn grid_header(grid: &TorusGrid) -> String {
    format!(
        "n={} shape={} lengths={}",
        grid.dim(),
        join(grid.shape(), |s| s.to_string()),
        join(grid.lengths(), |l| fmt_f64(*l))
    )
}

pub fn write_field(u: &Field) -> String {
    let mut out = String::from("ACHF 1\n");
    let _ = writeln!(out, "{} m={}", grid_header(u.grid()), u.m());
    let row = *u.grid().shape().last().unwrap_or(&1);
    for (i, x) in u.values().iter().enumerate() {
        out.push_str(&fmt_f64(*x));
        out.push(if (i + 1) % row == 0 { '\n' } else { ' ' });
    }
    out
}

struct Header {
    grid: TorusGrid,
    keys: Vec<(String, String)>,
}

impl Header {
    fn get(&self, key: &str) -> Result<&str> {
        self.keys
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Parse(format!("header lacks `{key}`")))
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, key: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|_| Error::Parse(format!("bad `{key}` entry `{x}`"))))
        .collect()
}

fn parse_header<'a>(lines: &mut impl Iterator<Item = &'a str>, magic: &str) -> Result<Header> {
    let first = lines.next().ok_or_else(|| Error::Parse("empty snapshot".into()))?;
    if first.trim() != magic {
        return Err(Error::Parse(format!("expected `{magic}`, found `{}`", first.trim())));
    }
    let second = lines.next().ok_or_else(|| Error::Parse("missing grid header".into()))?;
    let keys: Vec<(String, String)> = second
        .split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Parse(format!("bad header token `{kv}`")))
        })
        .collect::<Result<_>>()?;
    let get = |key: &str| {
        keys.iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::Parse(format!("header lacks `{key}`")))
    };
    let n: usize = get("n")?.parse().map_err(|_| Error::Parse("bad `n`".into()))?;
    let shape: Vec<usize> = parse_list(&get("shape")?, "shape")?;
    let lengths: Vec<f64> = parse_list(&get("lengths")?, "lengths")?;
    if shape.len() != n || lengths.len() != n {
        return Err(Error::Parse(format!("header declares n={n} but lists {} sizes", shape.len())));
    }
    Ok(Header {
        grid: TorusGrid::new(&shape, &lengths)?,
        keys,
    })
}

pub fn read_field(text: &str) -> Result<Field> {
    let mut lines = text.lines();
    let h = parse_header(&mut lines, "ACHF 1")?;
    let m: usize = h.get("m")?.parse().map_err(|_| Error::Parse("bad `m`".into()))?;
    let values: Vec<f64> = lines
        .flat_map(str::split_whitespace)
        .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad value `{s}`"))))
        .collect::<Result<_>>()?;
    Field::from_values(&h.grid, m, values)
}

pub fn write_cluster(c: &Cluster) -> String {
    let mut out = String::from("ACHC 1\n");
    let _ = writeln!(out, "{} N={}", grid_header(c.grid()), c.n());
    let row = *c.grid().shape().last().unwrap_or(&1);
    for (i, l) in c.labels().iter().enumerate() {
        let _ = write!(out, "{}", l + 1);
        out.push(if (i + 1) % row == 0 { '\n' } else { ' ' });
    }
    out
}

pub fn read_cluster(text: &str) -> Result<Cluster> {
    let mut lines = text.lines();
    let h = parse_header(&mut lines, "ACHC 1")?;
    let n: usize = h.get("N")?.parse().map_err(|_| Error::Parse("bad `N`".into()))?;
    let labels: Vec<usize> = lines
        .flat_map(str::split_whitespace)
        .map(|s| match s.parse::<usize>() {
            Ok(l) if l >= 1 => Ok(l - 1),
            _ => Err(Error::Parse(format!("bad label `{s}`"))),
        })
        .collect::<Result<_>>()?;
    Cluster::new(&h.grid, n, labels)
}

pub fn save_field(u: &Field, path: &Path) -> Result<()> {
    std::fs::write(path, write_field(u))?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<Field> {
    read_field(&std::fs::read_to_string(path)?)
}

pub fn save_cluster(c: &Cluster, path: &Path) -> Result<()> {
    std::fs::write(path, write_cluster(c))?;
    Ok(())
}

pub fn load_cluster(path: &Path) -> Result<Cluster> {
    read_cluster(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip_is_bit_exact() {
        let grid = TorusGrid::new(&[9, 8], &[1.0, 0.7]).unwrap();
        let u = Field::from_fn(&grid, 2, |x| vec![(x[0] * 1e3).sin() / 3.0, 1e-300 * x[1] - 7.0]);
        let back = read_field(&write_field(&u)).unwrap();
        assert_eq!(back.grid().shape(), grid.shape());
        assert_eq!(back.grid().lengths(), grid.lengths());
        for (a, b) in u.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn cluster_round_trip() {
        let grid = TorusGrid::unit(&[8, 12]).unwrap();
        let c = Cluster::from_fn(&grid, 3, |x| ((x[0] * 3.0) as usize).min(2)).unwrap();
        let text = write_cluster(&c);
        assert!(text.lines().nth(1).unwrap().ends_with("N=3"));
        assert_eq!(read_cluster(&text).unwrap().labels(), c.labels());
        assert!(read_cluster(&text.replace("ACHC", "ACHF")).is_err());
        let zero = "ACHC 1\nn=1 shape=8 lengths=1 N=2\n0 1 1 1 2 2 2 2\n";
        assert!(read_cluster(zero).is_err());
    }
}
