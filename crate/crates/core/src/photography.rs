//! Photography: recovery fields of small canonical clusters placed at a
//! point, and the barycenter that maps them back to the torus.

use std::f64::consts::PI;

use serde::Serialize;

use crate::cluster::Cluster;
use crate::error::{Error, Result};
use crate::field::{ConformalMetric, Field, TorusGrid};
use crate::potential::Potential;
use crate::recovery::{self, build_profile, ChamberCoords, ProfileTable, Recovery, TauRule};
use crate::tension::TensionMatrix;

/// Shape of the canonical three-chamber cluster.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ShapeRule {
    /// equal-weight double bubble in 1-D and 2-D, tangent balls in 3-D
    #[default]
    Canonical,
    TangentBalls,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PhotoOptions {
    pub tau: TauRule,
    pub shape: ShapeRule,
}

#[derive(Clone, Debug)]
pub struct Photo {
    pub cluster: Cluster,
    pub recovery: Recovery,
    /// the canonical shape was replaced by tangent balls, or tensions are unequal
    pub shape_fallback: bool,
}

impl Photo {
    pub fn field(&self) -> &Field {
        &self.recovery.u
    }
}

fn unit_ball_volume(n: usize) -> f64 {
    PI.powf(n as f64 / 2.0) / libm::tgamma(n as f64 / 2.0 + 1.0)
}

/// Three circular arcs meeting at 120° enclosing areas `a1 ≥ a2`.
///
/// Geometry on the first axis with the big disk centered at the origin:
/// radii `r1 ≥ r2`, center distance `d` with `d² = r1² + r2² − r1 r2`, and
/// separator radius `1/r3 = 1/r2 − 1/r1`. Bubble one is `D1 ∖ D3`, bubble
/// two is `D2 ∩ D3`. Equal areas give a straight separator.
#[derive(Clone, Copy, Debug)]
pub struct DoubleBubble {
    pub r1: f64,
    pub r2: f64,
    pub d: f64,
    /// junction abscissa
    pub xj: f64,
    /// separator center and radius; `None` for a straight separator
    pub sep: Option<(f64, f64)>,
    /// abscissa of the area centroid of the union
    pub centroid: f64,
}

impl DoubleBubble {
    fn with_ratio(q: f64) -> Self {
        let (r1, r2) = (1.0, q);
        let d = (r1 * r1 + r2 * r2 - r1 * r2).sqrt();
        let xj = (d * d + r1 * r1 - r2 * r2) / (2.0 * d);
        let yj2 = (r1 * r1 - xj * xj).max(0.0);
        let sep = if q < 1.0 {
            let r3 = 1.0 / (1.0 / r2 - 1.0 / r1);
            Some((xj + (r3 * r3 - yj2).max(0.0).sqrt(), r3))
        } else {
            None
        };
        let mut b = DoubleBubble {
            r1,
            r2,
            d,
            xj,
            sep,
            centroid: 0.0,
        };
        let (a1, a2, m) = b.areas_and_moment();
        b.centroid = m / (a1 + a2);
        b
    }

    /// Half-widths of the two bubbles in the vertical slice at `x`.
    fn slice(&self, x: f64) -> (f64, f64) {
        let half = |c: f64, r: f64| (r * r - (x - c) * (x - c)).max(0.0).sqrt();
        let a1 = half(0.0, self.r1);
        let a2 = half(self.d, self.r2);
        match self.sep {
            Some((c3, r3)) => {
                let a3 = half(c3, r3);
                (a1 - a1.min(a3), a2.min(a3))
            }
            None if x < self.xj => (a1, 0.0),
            None => (0.0, a2),
        }
    }

    fn areas_and_moment(&self) -> (f64, f64, f64) {
        let (lo, hi) = (-self.r1, self.d + self.r2);
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let (mut a1, mut a2, mut m) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let x = lo + (i as f64 + 0.5) * h;
            let (w1, w2) = self.slice(x);
            a1 += 2.0 * w1 * h;
            a2 += 2.0 * w2 * h;
            m += 2.0 * (w1 + w2) * x * h;
        }
        (a1, a2, m)
    }

    /// Double bubble with areas `a1 ≥ a2 > 0`.
    pub fn with_areas(a1: f64, a2: f64) -> Self {
        let target = a2 / a1;
        let (mut lo, mut hi) = (1e-3, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let (b1, b2, _) = Self::with_ratio(mid).areas_and_moment();
            if b2 / b1 < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let b = Self::with_ratio(0.5 * (lo + hi));
        let (b1, _, _) = b.areas_and_moment();
        let s = (a1 / b1).sqrt();
        DoubleBubble {
            r1: b.r1 * s,
            r2: b.r2 * s,
            d: b.d * s,
            xj: b.xj * s,
            sep: b.sep.map(|(c, r)| (c * s, r * s)),
            centroid: b.centroid * s,
        }
    }

    /// Bubble containing the planar point `(x, y)`: 0, 1, or `None`.
    pub fn locate(&self, x: f64, y: f64) -> Option<usize> {
        let in1 = x * x + y * y < self.r1 * self.r1;
        let in2 = (x - self.d).powi(2) + y * y < self.r2 * self.r2;
        let in3 = match self.sep {
            Some((c3, r3)) => (x - c3).powi(2) + y * y < r3 * r3,
            None => x >= self.xj,
        };
        if in1 && !in3 {
            Some(0)
        } else if in2 && in3 {
            Some(1)
        } else {
            None
        }
    }

    /// Total length of the three arcs.
    pub fn perimeter(&self) -> f64 {
        let yj = (self.r1 * self.r1 - self.xj * self.xj).max(0.0).sqrt();
        // arc angles outside the junction chord
        let t1 = if self.xj >= 0.0 { 2.0 * PI - 2.0 * (yj / self.r1).asin() } else { 2.0 * (yj / self.r1).asin() };
        let dx2 = self.d - self.xj;
        let t2 = if dx2 >= 0.0 { 2.0 * PI - 2.0 * (yj / self.r2).asin() } else { 2.0 * (yj / self.r2).asin() };
        let sep = match self.sep {
            Some((_, r3)) => 2.0 * r3 * (yj / r3).asin(),
            None => 2.0 * yj,
        };
        self.r1 * t1 + self.r2 * t2 + sep
    }
}

/// Canonical cluster with interior chamber volumes `w` centered at `x`.
///
/// One chamber: a digital ball (an interval in 1-D). Two chambers: the
/// double bubble in 1-D and 2-D, tangent balls otherwise. Returns the
/// cluster and whether tangent balls were used.
pub fn canonical_cluster(x: &[f64], w: &[f64], g: &ConformalMetric, shape: ShapeRule) -> Result<(Cluster, bool)> {
    let grid = g.grid();
    let dim = grid.dim();
    let n = w.len() + 1;
    if let Some(v) = w.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::NegativeVolume(*v));
    }
    let min_side = grid.lengths().iter().copied().fold(f64::INFINITY, f64::min);
    let total: f64 = w.iter().sum();
    if (total / unit_ball_volume(dim)).powf(1.0 / dim as f64) > 0.25 * min_side {
        return Err(Error::VolumeTooLarge(w.to_vec()));
    }
    let x = grid.wrap(x);
    match w.len() {
        1 => {
            let r = (w[0] / unit_ball_volume(dim)).powf(1.0 / dim as f64);
            let c = Cluster::from_fn(grid, 2, |p| (grid.distance(p, &x) >= r) as usize)?;
            Ok((c, false))
        }
        2 if shape == ShapeRule::Canonical && dim <= 2 && w[0] > 0.0 && w[1] > 0.0 => {
            let (big, small) = if w[0] >= w[1] { (0, 1) } else { (1, 0) };
            if dim == 1 {
                // adjacent intervals, the junction offset so the union is centered
                let start = -0.5 * (w[0] + w[1]);
                let c = Cluster::from_fn(grid, 3, |p| {
                    let s = grid.displacement(&x, p)[0] - start;
                    if s >= 0.0 && s < w[big] {
                        big
                    } else if s >= w[big] && s < w[0] + w[1] {
                        small
                    } else {
                        2
                    }
                })?;
                return Ok((c, false));
            }
            let b = DoubleBubble::with_areas(w[big], w[small]);
            let c = Cluster::from_fn(grid, 3, |p| {
                let d = grid.displacement(&x, p);
                match b.locate(d[0] + b.centroid, d[1]) {
                    Some(0) => big,
                    Some(_) => small,
                    None => 2,
                }
            })?;
            Ok((c, false))
        }
        _ => {
            // tangent balls in a chain through x along the first axis
            let radii: Vec<f64> = w.iter().map(|v| (v / unit_ball_volume(dim)).powf(1.0 / dim as f64)).collect();
            let span: f64 = radii.iter().map(|r| 2.0 * r).sum();
            let mut offset = -0.5 * span;
            let mut centers = Vec::new();
            for r in &radii {
                let mut c = x.clone();
                c[0] += offset + r;
                offset += 2.0 * r;
                centers.push(grid.wrap(&c));
            }
            let c = Cluster::from_fn(grid, n, |p| {
                for (i, (c, r)) in centers.iter().zip(&radii).enumerate() {
                    if *r > 0.0 && grid.distance(p, c) < *r {
                        return i;
                    }
                }
                n - 1
            })?;
            Ok((c, n > 2))
        }
    }
}

fn tensions_equal(t: &TensionMatrix) -> bool {
    let n = t.n();
    let first = if n > 1 { t.get(0, 1) } else { 0.0 };
    (0..n).all(|i| (0..n).all(|j| i == j || (t.get(i, j) - first).abs() <= 1e-9 * first.abs().max(1.0)))
}

/// Interior chamber volumes for a field volume `v`.
fn chamber_volumes(p: &Potential, v: &[f64], g: &ConformalMetric) -> Result<Vec<f64>> {
    if v.len() != p.m() {
        return Err(Error::Shape(format!("volume has {} entries, expected {}", v.len(), p.m())));
    }
    let coords = ChamberCoords::new(p.minima(), g.total_volume())?;
    let mut w = coords.of(v);
    w.pop();
    Ok(w)
}

/// Recovery field of the canonical cluster of field volume `v` at `x`.
pub fn photo(
    x: &[f64],
    v: &[f64],
    eps: f64,
    p: &Potential,
    t: &TensionMatrix,
    g: &ConformalMetric,
    opts: &PhotoOptions,
) -> Result<Photo> {
    let table = build_profile(p, t, eps, opts.tau.tau(eps), 1024)?;
    photo_with(x, v, p, &table, t, g, opts.shape)
}

pub fn photo_with(
    x: &[f64],
    v: &[f64],
    p: &Potential,
    table: &ProfileTable,
    t: &TensionMatrix,
    g: &ConformalMetric,
    shape: ShapeRule,
) -> Result<Photo> {
    let w = chamber_volumes(p, v, g)?;
    let (cluster, balls) = canonical_cluster(x, &w, g, shape)?;
    let recovery = recovery::modica_baldo_with(&cluster, table, g, Some(v))?;
    Ok(Photo {
        cluster,
        recovery,
        shape_fallback: balls || (w.len() == 2 && !tensions_equal(t)),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Barycenter {
    /// `(cos, sin)` pairs per axis
    pub embedded: Vec<f64>,
    /// `None` when some pair lies within 1e-9 of the circle's center
    pub projected: Option<Vec<f64>>,
}

/// `|u|`-weighted mean of the embedding `x ↦ (cos 2πx_k/L_k, sin 2πx_k/L_k)`,
/// projected back by angle.
pub fn barycenter(u: &Field, g: &ConformalMetric) -> Result<Barycenter> {
    u.grid().same_as(g.grid())?;
    let grid = g.grid();
    let n = grid.len();
    let dim = grid.dim();
    let mut mass = 0.0;
    let mut acc = vec![0.0; 2 * dim];
    for c in 0..n {
        let a: f64 = (0..u.m()).map(|k| u.values()[k * n + c].powi(2)).sum::<f64>().sqrt() * g.b()[c];
        if a == 0.0 {
            continue;
        }
        mass += a;
        for k in 0..dim {
            let theta = 2.0 * PI * (grid.index_along(c, k) as f64 + 0.5) / grid.shape()[k] as f64;
            acc[2 * k] += a * theta.cos();
            acc[2 * k + 1] += a * theta.sin();
        }
    }
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    let embedded: Vec<f64> = acc.iter().map(|x| x / mass).collect();
    let mut projected = Some(Vec::with_capacity(dim));
    for k in 0..dim {
        let (c, s) = (embedded[2 * k], embedded[2 * k + 1]);
        if c.hypot(s) < 1e-9 {
            projected = None;
            break;
        }
        let angle = s.atan2(c).rem_euclid(2.0 * PI);
        if let Some(p) = projected.as_mut() {
            p.push((angle / (2.0 * PI) * grid.lengths()[k]).rem_euclid(grid.lengths()[k]));
        }
    }
    Ok(Barycenter { embedded, projected })
}

#[derive(Clone, Debug, Serialize)]
pub struct HomotopyRow {
    pub x: Vec<f64>,
    pub projected: Option<Vec<f64>>,
    /// torus distance from `x` to the projected barycenter; infinite when undefined
    pub dist: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HomotopyReport {
    pub max_dist: f64,
    pub undefined: usize,
    pub rows: Vec<HomotopyRow>,
}

/// Distance between each sample point and the barycenter of its photo.
pub fn homotopy_check(
    v: &[f64],
    eps: f64,
    p: &Potential,
    t: &TensionMatrix,
    g: &ConformalMetric,
    sample: &[Vec<f64>],
    opts: &PhotoOptions,
) -> Result<HomotopyReport> {
    if sample.is_empty() {
        return Err(Error::Shape("homotopy check needs at least one sample point".into()));
    }
    let table = build_profile(p, t, eps, opts.tau.tau(eps), 1024)?;
    let grid = g.grid();
    let mut rows = Vec::with_capacity(sample.len());
    for x in sample {
        let row = match photo_with(x, v, p, &table, t, g, opts.shape) {
            Ok(ph) => {
                let b = barycenter(ph.field(), g)?;
                let dist = b.projected.as_ref().map_or(f64::INFINITY, |q| grid.distance(x, q));
                HomotopyRow {
                    x: grid.wrap(x),
                    projected: b.projected,
                    dist,
                }
            }
            Err(Error::VolumeTooLarge(_)) => HomotopyRow {
                x: grid.wrap(x),
                projected: None,
                dist: f64::INFINITY,
            },
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    Ok(HomotopyReport {
        max_dist: rows.iter().map(|r| r.dist).fold(0.0, f64::max),
        undefined: rows.iter().filter(|r| r.projected.is_none()).count(),
        rows,
    })
}

/// `k^n` cell-aligned points `(i + ½) L / k` per axis.
pub fn lattice(grid: &TorusGrid, k: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for l in grid.lengths() {
        let mut next = Vec::new();
        for prefix in &out {
            for i in 0..k {
                let mut p = prefix.clone();
                p.push((i as f64 + 0.5) * l / k as f64);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct Concentration {
    pub x_star: Vec<f64>,
    pub mass_fraction: f64,
    /// the ball is the digital ball of cells whose centers lie within `r/2`
    pub approximate: bool,
}

/// Cell center maximizing the `|u|`-mass of the digital ball of radius `r/2`.
///
/// Balls are summed as runs along the last axis using periodic prefix sums.
pub fn concentration_report(u: &Field, g: &ConformalMetric, r: f64) -> Result<Concentration> {
    u.grid().same_as(g.grid())?;
    let grid = g.grid();
    let n = grid.len();
    let dim = grid.dim();
    let dv = grid.cell_volume();
    let mass: Vec<f64> = (0..n)
        .map(|c| (0..u.m()).map(|k| u.values()[k * n + c].powi(2)).sum::<f64>().sqrt() * g.b()[c] * dv)
        .collect();
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    let rad = 0.5 * r;
    let last = dim - 1;
    let nl = grid.shape()[last];
    let hl = grid.h(last);
    // runs: (offsets along the leading axes, half-width in cells along the last)
    let mut runs: Vec<(Vec<isize>, isize)> = Vec::new();
    let reach: Vec<isize> = (0..last).map(|k| (rad / grid.h(k)).floor() as isize).collect();
    let mut off = reach.iter().map(|r| -r).collect::<Vec<_>>();
    loop {
        let d2: f64 = off.iter().enumerate().map(|(k, o)| (*o as f64 * grid.h(k)).powi(2)).sum();
        if d2 <= rad * rad {
            let half = ((rad * rad - d2).sqrt() / hl).floor() as isize;
            runs.push((off.clone(), half.min((nl as isize - 1) / 2)));
        }
        let mut k = 0;
        while k < last {
            off[k] += 1;
            if off[k] <= reach[k] {
                break;
            }
            off[k] = -reach[k];
            k += 1;
        }
        if k == last {
            break;
        }
    }
    // prefix sums along the last axis, one line per leading index
    let lines = n / nl;
    let mut prefix = vec![0.0; lines * (nl + 1)];
    for line in 0..lines {
        for i in 0..nl {
            prefix[line * (nl + 1) + i + 1] = prefix[line * (nl + 1) + i] + mass[line * nl + i];
        }
    }
    let line_sum = |line: usize, lo: isize, hi: isize| -> f64 {
        // inclusive periodic range [lo, hi], width < nl
        let p = &prefix[line * (nl + 1)..(line + 1) * (nl + 1)];
        let n = nl as isize;
        let (a, b) = (lo.rem_euclid(n), hi.rem_euclid(n));
        if a <= b {
            p[b as usize + 1] - p[a as usize]
        } else {
            p[nl] - p[a as usize] + p[b as usize + 1]
        }
    };
    let mut best = (f64::NEG_INFINITY, 0usize);
    let mut shift = vec![0isize; dim];
    for c in 0..n {
        let i = grid.index_along(c, last) as isize;
        let mut s = 0.0;
        for (o, half) in &runs {
            shift[..last].copy_from_slice(o);
            shift[last] = 0;
            let line = grid.shifted(c, &shift) / nl;
            s += line_sum(line, i - half, i + half);
        }
        if s > best.0 {
            best = (s, c);
        }
    }
    Ok(Concentration {
        x_star: grid.center(best.1),
        mass_fraction: best.0 / total,
        approximate: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tension::{tension_matrix, OptimizeOptions};

    #[test]
    fn double_bubble_areas() {
        let b = DoubleBubble::with_areas(0.05, 0.02);
        let (a1, a2, _) = b.areas_and_moment();
        assert!((a1 - 0.05).abs() < 1e-6 && (a2 - 0.02).abs() < 1e-6);
        // equal areas: straight separator, r = sqrt(A / (2π/3 + √3/4))
        let e = DoubleBubble::with_areas(0.03, 0.03);
        assert!(e.sep.is_none());
        let r = (0.03 / (2.0 * PI / 3.0 + 3f64.sqrt() / 4.0)).sqrt();
        assert!((e.r1 - r).abs() < 1e-6, "{} vs {r}", e.r1);
        // perimeter of the standard equal double bubble: 2 · (4π/3) r + √3 r
        assert!((e.perimeter() - (8.0 * PI / 3.0 + 3f64.sqrt()) * r).abs() < 1e-6);
    }

    #[test]
    fn barycenter_cases() {
        let grid = TorusGrid::unit(&[64, 64]).unwrap();
        let g = ConformalMetric::flat(&grid);
        let x0 = [0.3, 0.8];
        let bump = Field::from_fn(&grid, 1, |x| {
            let d = grid.distance(x, &x0);
            vec![(-d * d / 0.002).exp()]
        });
        let b = barycenter(&bump, &g).unwrap();
        let q = b.projected.unwrap();
        assert!(grid.distance(&q, &x0) <= 2.0 / 64.0);
        let flat = barycenter(&Field::constant(&grid, &[0.7]), &g).unwrap();
        assert!(flat.projected.is_none());
        assert!(matches!(barycenter(&Field::zeros(&grid, 1), &g), Err(Error::ZeroMass)));
        let moved = barycenter(&bump.translated(&[5, -3]), &g).unwrap().projected.unwrap();
        let expect = grid.wrap(&[q[0] + 5.0 / 64.0, q[1] - 3.0 / 64.0]);
        assert!(grid.distance(&moved, &expect) < 1e-10);
    }

    #[test]
    fn concentration_cases() {
        let grid = TorusGrid::unit(&[64, 64]).unwrap();
        let g = ConformalMetric::flat(&grid);
        let r = 0.4;
        let drop = Field::from_fn(&grid, 1, |x| vec![(grid.distance(x, &[0.7, 0.2]) < r / 4.0) as u8 as f64]);
        let c = concentration_report(&drop, &g, r).unwrap();
        assert!(c.mass_fraction >= 0.99, "{}", c.mass_fraction);
        let uni = concentration_report(&Field::constant(&grid, &[1.0]), &g, r).unwrap();
        assert!((uni.mass_fraction - PI * 0.04).abs() < 0.01, "{}", uni.mass_fraction);
    }

    #[test]
    fn photo_volume_and_equivariance() {
        let p = Potential::double_well();
        let t = tension_matrix(&p, 128, &OptimizeOptions::default()).unwrap();
        let grid = TorusGrid::unit(&[64, 64]).unwrap();
        let g = ConformalMetric::flat(&grid);
        let opts = PhotoOptions::default();
        let a = photo(&[0.5 / 64.0, 0.5 / 64.0], &[0.05], 0.05, &p, &t, &g, &opts).unwrap();
        let b = photo(&[10.5 / 64.0, 20.5 / 64.0], &[0.05], 0.05, &p, &t, &g, &opts).unwrap();
        let v = crate::field::volume(a.field(), &g).unwrap();
        assert!((v[0] - 0.05).abs() <= 1e-12 * 1.05);
        let shifted = a.field().translated(&[10, 20]);
        let diff = shifted.values().iter().zip(b.field().values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
        assert!(matches!(
            photo(&[0.5, 0.5], &[0.9], 0.05, &p, &t, &g, &opts),
            Err(Error::VolumeTooLarge(_))
        ));
    }
}
