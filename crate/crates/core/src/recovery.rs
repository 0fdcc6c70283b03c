//! Modica–Baldo recovery fields built from clusters.
//!
//! A cluster is turned into a phase field by composing signed distances to
//! the chambers with the one-dimensional optimal profiles along the stored
//! tension paths, shifting the layers so that volumes approximately match,
//! and removing the remainder with a cone patch and a constant shift.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cluster::{self, Cluster};
use crate::error::{Error, Result};
use crate::field::{self, ConformalMetric, Field, TorusGrid};
use crate::potential::Potential;
use crate::tension::TensionMatrix;

/// Signed periodic distances to the boundaries of the interior chambers,
/// negative inside. Empty chambers are `+∞` everywhere.
#[derive(Clone, Debug)]
pub struct SignedDistances {
    pub d: Vec<Vec<f64>>,
}

impl SignedDistances {
    pub fn chamber(&self, i: usize) -> &[f64] {
        &self.d[i]
    }
}

/// A boundary face: its center and the axis of its normal.
struct Face {
    center: [f64; 3],
    axis: usize,
}

fn faces_of(c: &Cluster, chamber: usize) -> Vec<Face> {
    let grid = c.grid();
    let mut out = Vec::new();
    for cell in 0..grid.len() {
        for k in 0..grid.dim() {
            let nb = grid.next(cell, k);
            if (c.label(cell) == chamber) != (c.label(nb) == chamber) {
                let mut center = [0.0; 3];
                for (j, x) in grid.center(cell).into_iter().enumerate() {
                    center[j] = x;
                }
                center[k] = (center[k] + 0.5 * grid.h(k)).rem_euclid(grid.lengths()[k]);
                out.push(Face { center, axis: k });
            }
        }
    }
    out
}

/// Euclidean distance from `x` to the closed face, under the minimal image.
fn face_distance(grid: &TorusGrid, x: &[f64; 3], f: &Face) -> f64 {
    let mut s = 0.0;
    for k in 0..grid.dim() {
        let l = grid.lengths()[k];
        let mut d = (f.center[k] - x[k]).abs() % l;
        d = d.min(l - d);
        let t = if k == f.axis { d } else { (d - 0.5 * grid.h(k)).max(0.0) };
        s += t * t;
    }
    s.sqrt()
}

/// Block offsets at periodic Chebyshev distance exactly `r`, for each `r`
/// up to `max_ring`. Offsets that wrap onto a block of a smaller ring are
/// dropped, so every block is listed once.
fn ring_offsets(nb: &[usize], max_ring: usize) -> Vec<Vec<[isize; 3]>> {
    let dim = nb.len();
    let mut rings: Vec<Vec<[isize; 3]>> = vec![Vec::new(); max_ring + 1];
    let mut seen = std::collections::HashSet::new();
    for r in 0..=max_ring {
        let ri = r as isize;
        let mut o = [0isize; 3];
        for k in 0..dim {
            o[k] = -ri;
        }
        loop {
            let cheb = o[..dim].iter().map(|x| x.unsigned_abs()).max().unwrap_or(0);
            if cheb == r {
                let mut key = [0usize; 3];
                for k in 0..dim {
                    key[k] = o[k].rem_euclid(nb[k] as isize) as usize;
                }
                if seen.insert(key) {
                    rings[r].push(o);
                }
            }
            let mut k = 0;
            while k < dim {
                o[k] += 1;
                if o[k] <= ri {
                    break;
                }
                o[k] = -ri;
                k += 1;
            }
            if k == dim {
                break;
            }
        }
    }
    rings
}

/// Exact distances from cell centers to a set of faces. Faces are binned in
/// blocks of `BLOCK` cells per axis and blocks are visited in rings of
/// growing Chebyshev radius until the ring cannot improve the minimum.
fn distance_to_faces(grid: &TorusGrid, faces: &[Face]) -> Vec<f64> {
    const BLOCK: usize = 8;
    let dim = grid.dim();
    let mut nb = [1usize; 3];
    for k in 0..dim {
        nb[k] = grid.shape()[k].div_ceil(BLOCK);
    }
    let block_of = |x: &[f64; 3]| -> [usize; 3] {
        let mut b = [0usize; 3];
        for k in 0..dim {
            let i = ((x[k] / grid.h(k)).floor().max(0.0) as usize).min(grid.shape()[k] - 1);
            b[k] = (i / BLOCK).min(nb[k] - 1);
        }
        b
    };
    let flat = |b: &[usize; 3]| (0..dim).fold(0, |acc, k| acc * nb[k] + b[k]);
    let total: usize = nb[..dim].iter().product();
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); total];
    for (fi, f) in faces.iter().enumerate() {
        bins[flat(&block_of(&f.center))].push(fi);
    }
    let block_width = (0..dim).map(|k| BLOCK as f64 * grid.h(k)).fold(f64::INFINITY, f64::min);
    let max_ring = nb[..dim].iter().map(|n| n / 2 + 1).max().unwrap_or(1);
    let rings = ring_offsets(&nb[..dim], max_ring);

    (0..grid.len())
        .map(|cell| {
            let mut x = [0.0; 3];
            for (k, v) in grid.center(cell).into_iter().enumerate() {
                x[k] = v;
            }
            let home = block_of(&x);
            let mut best = f64::INFINITY;
            let mut b = [0usize; 3];
            for (ring, offsets) in rings.iter().enumerate() {
                // faces in ring r are at least (r − 1) blocks away
                if ring >= 1 && (ring - 1) as f64 * block_width > best {
                    break;
                }
                for o in offsets {
                    for k in 0..dim {
                        b[k] = (home[k] as isize + o[k]).rem_euclid(nb[k] as isize) as usize;
                    }
                    for &fi in &bins[flat(&b)] {
                        best = best.min(face_distance(grid, &x, &faces[fi]));
                    }
                }
            }
            best
        })
        .collect()
}

/// Exact signed distance to the digital boundary of every interior chamber.
pub fn signed_distances(c: &Cluster) -> Result<SignedDistances> {
    let grid = c.grid();
    if c.interior_cells().is_empty() {
        return Err(Error::EmptyInterior);
    }
    let mut d = Vec::with_capacity(c.n() - 1);
    for i in 0..c.n() - 1 {
        let count = c.count(i);
        if count == 0 {
            d.push(vec![f64::INFINITY; grid.len()]);
            continue;
        }
        if count == grid.len() {
            return Err(Error::EmptyBoundary(i));
        }
        let faces = faces_of(c, i);
        let mut di = distance_to_faces(grid, &faces);
        for (cell, x) in di.iter_mut().enumerate() {
            if c.label(cell) == i {
                *x = -*x;
            }
        }
        d.push(di);
    }
    Ok(SignedDistances { d })
}

/// Regularization τ as a function of ε.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum TauRule {
    /// `τ = ε`
    #[default]
    Auto,
    /// `τ = √ε`
    Sqrt,
    Fixed(f64),
}

impl TauRule {
    pub fn tau(&self, eps: f64) -> f64 {
        match self {
            TauRule::Auto => eps,
            TauRule::Sqrt => eps.sqrt(),
            TauRule::Fixed(t) => *t,
        }
    }
}

impl FromStr for TauRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" | "eps" => Ok(TauRule::Auto),
            "sqrt" => Ok(TauRule::Sqrt),
            other => {
                let t: f64 = other.parse().map_err(|_| Error::config("tau", format!("expected auto, sqrt or a number, got `{other}`")))?;
                if !(t > 0.0) {
                    return Err(Error::BadTau(t));
                }
                Ok(TauRule::Fixed(t))
            }
        }
    }
}

impl fmt::Display for TauRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauRule::Auto => write!(f, "auto"),
            TauRule::Sqrt => write!(f, "sqrt"),
            TauRule::Fixed(t) => write!(f, "{t}"),
        }
    }
}

/// Optimal transition from `p_i` (at `t = 0`) to `p_j` (at `t = η`), sampled
/// at `K + 1` uniform values of `t`.
#[derive(Clone, Debug)]
pub struct PairProfile {
    pub eta: f64,
    /// Euclidean length of the path
    pub length: f64,
    m: usize,
    /// `(K + 1) · m` values, `q(t_k)` for `t_k = k η / K`
    samples: Vec<f64>,
}

impl PairProfile {
    pub fn k(&self) -> usize {
        self.samples.len() / self.m - 1
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.samples[k * self.m..(k + 1) * self.m]
    }

    /// `q(t)`, with `t` clamped to `[0, η]`.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let k = self.k();
        let s = if self.eta > 0.0 { (t / self.eta).clamp(0.0, 1.0) * k as f64 } else { k as f64 };
        let i = (s.floor() as usize).min(k - 1);
        let f = s - i as f64;
        let (a, b) = (self.sample(i), self.sample(i + 1));
        for c in 0..self.m {
            out[c] = a[c] + f * (b[c] - a[c]);
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProfileTable {
    pub eps: f64,
    pub tau: f64,
    m: usize,
    wells: Vec<Vec<f64>>,
    pairs: BTreeMap<(usize, usize), PairProfile>,
    /// `max τ^{-1/2} ℓ(c_ij)`
    pub c1: f64,
    /// `sup |c_ij|`
    pub c2: f64,
    /// `sup (τ + W(c_ij))^{1/2}`; `C3/ε` bounds the profile's slope
    pub c3: f64,
}

impl ProfileTable {
    pub fn n(&self) -> usize {
        self.wells.len()
    }

    /// Profile for `i < j`.
    pub fn pair(&self, i: usize, j: usize) -> &PairProfile {
        &self.pairs[&(i.min(j), i.max(j))]
    }

    pub fn eta(&self, i: usize, j: usize) -> f64 {
        self.pair(i, j).eta
    }

    pub fn max_eta(&self) -> f64 {
        self.pairs.values().map(|p| p.eta).fold(0.0, f64::max)
    }

    /// Transition from `p_i` to `p_j` at layer coordinate `t`: `p_i` for
    /// `t ≤ 0`, `p_j` for `t ≥ η`.
    pub fn eval_into(&self, i: usize, j: usize, t: f64, out: &mut [f64]) {
        if t <= 0.0 {
            out.copy_from_slice(&self.wells[i]);
            return;
        }
        let p = self.pair(i, j);
        if t >= p.eta {
            out.copy_from_slice(&self.wells[j]);
        } else if i < j {
            p.eval_into(t, out);
        } else {
            p.eval_into(p.eta - t, out);
        }
    }
}

/// Tabulates the one-dimensional optimal profiles
/// `ψ(t) = ∫₀ᵗ ε|c'| / (τ + W(c))^{1/2}` along every stored path and
/// inverts them onto uniform tables of `K + 1` samples.
pub fn build_profile(p: &Potential, t: &TensionMatrix, eps: f64, tau: f64, k: usize) -> Result<ProfileTable> {
    if !(tau > 0.0) {
        return Err(Error::BadTau(tau));
    }
    if !(eps > 0.0) {
        return Err(Error::Shape(format!("epsilon must be positive, got {eps}")));
    }
    if t.n() != p.n_wells() {
        return Err(Error::Shape(format!("{} tensions for {} wells", t.n(), p.n_wells())));
    }
    if !t.has_paths() {
        return Err(Error::Shape("tension matrix carries no paths".into()));
    }
    let k = k.max(64);
    let m = p.m();
    let n = p.n_wells();
    let mut pairs = BTreeMap::new();
    let (mut c1, mut c2, mut c3): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let path = t.path(i, j).expect("paths present");
            // fine quadrature points: about 4K in total
            let segs = path.len() - 1;
            let sub = (4 * k).div_ceil(segs).max(1);
            let mut psi = vec![0.0];
            let mut pts: Vec<Vec<f64>> = vec![path[0].clone()];
            let mut length = 0.0;
            for s in 0..segs {
                let (a, b) = (&path[s], &path[s + 1]);
                for q in 0..sub {
                    let t0 = q as f64 / sub as f64;
                    let t1 = (q + 1) as f64 / sub as f64;
                    let z0: Vec<f64> = (0..m).map(|c| a[c] + t0 * (b[c] - a[c])).collect();
                    let z1: Vec<f64> = (0..m).map(|c| a[c] + t1 * (b[c] - a[c])).collect();
                    let mid: Vec<f64> = z0.iter().zip(&z1).map(|(x, y)| 0.5 * (x + y)).collect();
                    let dl = crate::potential::dist2(&z0, &z1).sqrt();
                    let w = p.value(&mid);
                    length += dl;
                    psi.push(psi.last().unwrap() + eps * dl / (tau + w).sqrt());
                    pts.push(z1);
                    c3 = c3.max((tau + w).sqrt());
                }
            }
            for q in &pts {
                c2 = c2.max(crate::potential::norm(q));
            }
            let eta = *psi.last().unwrap();
            c1 = c1.max(length / tau.sqrt());
            // endpoints are the wells exactly
            *pts.first_mut().unwrap() = p.well(i).to_vec();
            *pts.last_mut().unwrap() = p.well(j).to_vec();
            let mut samples = Vec::with_capacity((k + 1) * m);
            let mut seg = 0;
            for s in 0..=k {
                let target = eta * s as f64 / k as f64;
                while seg + 1 < psi.len() - 1 && psi[seg + 1] < target {
                    seg += 1;
                }
                let (x0, x1) = (psi[seg], psi[seg + 1]);
                let f = if x1 > x0 { ((target - x0) / (x1 - x0)).clamp(0.0, 1.0) } else { 0.0 };
                for c in 0..m {
                    samples.push(pts[seg][c] + f * (pts[seg + 1][c] - pts[seg][c]));
                }
            }
            samples[..m].copy_from_slice(p.well(i));
            samples[k * m..].copy_from_slice(p.well(j));
            pairs.insert(
                (i, j),
                PairProfile {
                    eta,
                    length,
                    m,
                    samples,
                },
            );
        }
    }
    Ok(ProfileTable {
        eps,
        tau,
        m,
        wells: p.minima().to_vec(),
        pairs,
        c1,
        c2,
        c3,
    })
}

/// Value of the composed profile at shifted layer coordinates `t`
/// (one per interior chamber).
///
/// The lowest-index chamber whose layer is reached takes precedence: inside
/// chamber `i` (`t_i < 0`) the value is `p_i`; in its layer `0 < t_i < η`
/// the profile runs from `p_i` towards the chamber the point lies in, or the
/// exterior. For three chambers the corner box `[0, T]²`, `T = max η`, around
/// triple junctions is filled by the Coons patch of its four edge profiles,
/// which keeps the field continuous.
fn compose(table: &ProfileTable, t: &[f64], out: &mut [f64], scratch: &mut [Vec<f64>; 4]) {
    let n = table.n();
    let ext = n - 1;
    if n == 3 {
        let big_t = table.max_eta();
        let (t1, t2) = (t[0], t[1]);
        if t1 < 0.0 {
            out.copy_from_slice(&table.wells[0]);
        } else if t1 < big_t && t2 < 0.0 {
            table.eval_into(0, 1, t1, out);
        } else if t1 < big_t && t2 >= big_t {
            table.eval_into(0, 2, t1, out);
        } else if t1 >= big_t {
            table.eval_into(1, 2, t2, out);
        } else {
            // 0 ≤ t1, t2 < T
            let (s, r) = (t1 / big_t, t2 / big_t);
            let [bottom, top, left, right] = scratch;
            table.eval_into(0, 1, t1, bottom);
            table.eval_into(0, 2, t1, top);
            left.copy_from_slice(&table.wells[0]);
            table.eval_into(1, 2, t2, right);
            let (p00, p10, p11, p01) = (&table.wells[0], &table.wells[1], &table.wells[2], &table.wells[0]);
            for c in 0..out.len() {
                out[c] = (1.0 - r) * bottom[c] + r * top[c] + (1.0 - s) * left[c] + s * right[c]
                    - ((1.0 - s) * (1.0 - r) * p00[c] + s * (1.0 - r) * p10[c] + s * r * p11[c] + (1.0 - s) * r * p01[c]);
            }
        }
        return;
    }
    for i in 0..ext {
        if t[i] < 0.0 {
            out.copy_from_slice(&table.wells[i]);
            return;
        }
        let eta_i = (i + 1..n).map(|j| table.eta(i, j)).fold(0.0, f64::max);
        if t[i] < eta_i {
            let host = (i + 1..ext).find(|&j| t[j] < 0.0).unwrap_or(ext);
            table.eval_into(i, host, t[i], out);
            return;
        }
    }
    out.copy_from_slice(&table.wells[ext]);
}

fn assemble(table: &ProfileTable, d: &SignedDistances, zeta: &[f64], grid: &TorusGrid) -> Field {
    let m = table.m;
    let n = grid.len();
    let mut values = vec![0.0; m * n];
    let mut t = vec![0.0; zeta.len()];
    let mut q = vec![0.0; m];
    let mut scratch = [vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]];
    for cell in 0..n {
        for (i, z) in zeta.iter().enumerate() {
            t[i] = d.d[i][cell] + z;
        }
        compose(table, &t, &mut q, &mut scratch);
        for c in 0..m {
            values[c * n + cell] = q[c];
        }
    }
    Field::from_values(grid, m, values).expect("shape matches grid")
}

/// Chamber-volume coordinates of a field volume: least-squares `w` with
/// `Σ w_i p_i = V` and `Σ w_i = vol`.
pub(crate) struct ChamberCoords {
    pinv: DMatrix<f64>,
    vol: f64,
}

impl ChamberCoords {
    pub(crate) fn new(wells: &[Vec<f64>], vol: f64) -> Result<Self> {
        let m = wells[0].len();
        let n = wells.len();
        let mut a = DMatrix::zeros(m + 1, n);
        for (j, w) in wells.iter().enumerate() {
            for c in 0..m {
                a[(c, j)] = w[c];
            }
            a[(m, j)] = 1.0;
        }
        let pinv = a
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Shape(format!("well matrix: {e}")))?;
        Ok(ChamberCoords { pinv, vol })
    }

    pub(crate) fn of(&self, v: &[f64]) -> Vec<f64> {
        let mut rhs = DVector::zeros(v.len() + 1);
        for (i, x) in v.iter().enumerate() {
            rhs[i] = *x;
        }
        rhs[v.len()] = self.vol;
        (&self.pinv * rhs).iter().copied().collect()
    }
}

#[derive(Clone, Debug)]
pub struct Recovery {
    pub u: Field,
    /// layer shifts, one per interior chamber
    pub zeta: Vec<f64>,
    /// volume mismatch of the shifted profile before correction
    pub nu: Vec<f64>,
    /// cone patch height; zero when no ball host exists
    pub xi: Vec<f64>,
    pub patch_center: Option<Vec<f64>>,
    pub patch_radius: f64,
    /// chamber 1 could not host the correction ball; only a constant shift was applied
    pub no_ball_host: bool,
    /// grid spacing exceeds ε/8
    pub under_resolved: bool,
    pub volume_error: Vec<f64>,
}

/// Field volume of the sharp profile `Σ p_i χ_{Ω_i}`.
pub fn sharp_volume(c: &Cluster, p: &Potential, g: &ConformalMetric) -> Result<Vec<f64>> {
    let vols = cluster::volumes(c, g)?;
    let mut v = vec![0.0; p.m()];
    for (i, w) in vols.iter().enumerate() {
        for k in 0..p.m() {
            v[k] += w * p.well(i)[k];
        }
    }
    Ok(v)
}

/// Recovery field of `c` with volume exactly `v_target` (default: the sharp
/// profile's volume).
pub fn modica_baldo(
    c: &Cluster,
    p: &Potential,
    t: &TensionMatrix,
    eps: f64,
    tau: f64,
    g: &ConformalMetric,
    v_target: Option<&[f64]>,
) -> Result<Recovery> {
    let table = build_profile(p, t, eps, tau, 1024)?;
    modica_baldo_with(c, &table, g, v_target)
}

pub fn modica_baldo_with(c: &Cluster, table: &ProfileTable, g: &ConformalMetric, v_target: Option<&[f64]>) -> Result<Recovery> {
    c.grid().same_as(g.grid())?;
    if c.n() != table.n() {
        return Err(Error::Shape(format!("cluster has {} chambers, potential {} wells", c.n(), table.n())));
    }
    let grid = g.grid();
    let m = table.m;
    let eps = table.eps;
    let target: Vec<f64> = match v_target {
        Some(v) if v.len() == m => v.to_vec(),
        Some(v) => return Err(Error::Shape(format!("target volume has {} entries, expected {m}", v.len()))),
        None => {
            let vols = cluster::volumes(c, g)?;
            (0..m).map(|k| (0..c.n()).map(|i| vols[i] * table.wells[i][k]).sum()).collect()
        }
    };
    let d = signed_distances(c)?;
    let interior = c.n() - 1;
    let coords = ChamberCoords::new(&table.wells, g.total_volume())?;
    let w_target = coords.of(&target);

    // layer shifts by Gauss–Seidel bisection on each chamber's own volume
    let mut zeta: Vec<f64> = (0..interior).map(|i| 0.5 * table.eta(i, c.n() - 1)).collect();
    let sweeps = if interior == 1 { 1 } else { 4 };
    let response = |zeta: &[f64]| -> Vec<f64> {
        let u = assemble(table, &d, zeta, grid);
        coords.of(&field::volume(&u, g).expect("grids match"))
    };
    let eta_max = table.max_eta().max(grid.h_max());
    for _sweep in 0..sweeps {
        for i in 0..interior {
            if c.count(i) == 0 {
                continue;
            }
            // own volume decreases as zeta_i grows
            let f = |z: f64, zeta: &mut Vec<f64>| {
                zeta[i] = z;
                response(zeta)[i] - w_target[i]
            };
            let (mut lo, mut hi) = (0.0, eta_max);
            let mut z = zeta.clone();
            let mut expand = 0;
            while f(lo, &mut z) < 0.0 && expand < 20 {
                lo -= eta_max * (1 << expand) as f64;
                expand += 1;
            }
            expand = 0;
            while f(hi, &mut z) > 0.0 && expand < 20 {
                hi += eta_max * (1 << expand) as f64;
                expand += 1;
            }
            for _ in 0..60 {
                if hi - lo <= 1e-10 * eta_max {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if f(mid, &mut z) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            zeta[i] = 0.5 * (lo + hi);
        }
    }
    let mut u = assemble(table, &d, &zeta, grid);
    let v0 = field::volume(&u, g)?;
    let nu: Vec<f64> = v0.iter().zip(&target).map(|(a, b)| a - b).collect();

    // cone patch on the deepest point of chamber 1
    let dim = grid.dim();
    let radius = eps.powf(1.0 / dim as f64);
    let mut xi = vec![0.0; m];
    let mut patch_center = None;
    let mut no_ball_host = true;
    if c.count(0) > 0 {
        let d0 = &d.d[0];
        let (deep, depth) = (0..grid.len())
            .map(|x| (x, -(d0[x] + zeta[0])))
            .fold((0, f64::NEG_INFINITY), |acc, (x, v)| if v > acc.1 { (x, v) } else { acc });
        if depth >= radius + grid.h_max() {
            let y = grid.center(deep);
            let dv = grid.cell_volume();
            let mut weights = Vec::new();
            let mut s = 0.0;
            for x in 0..grid.len() {
                let r = grid.distance(&grid.center(x), &y);
                if r < radius {
                    let w = 1.0 - r / radius;
                    s += w * g.b()[x] * dv;
                    weights.push((x, w));
                }
            }
            if s > 0.0 {
                let n = grid.len();
                for k in 0..m {
                    xi[k] = -nu[k] / s;
                }
                for (x, w) in weights {
                    for k in 0..m {
                        u.values_mut()[k * n + x] += xi[k] * w;
                    }
                }
                patch_center = Some(y);
                no_ball_host = false;
            }
        }
    }

    // constant shift for the remaining rounding
    let vol = g.total_volume();
    for _ in 0..8 {
        let v = field::volume(&u, g)?;
        let err: Vec<f64> = target.iter().zip(&v).map(|(a, b)| a - b).collect();
        if err.iter().zip(&target).all(|(e, t)| e.abs() <= 1e-13 * (1.0 + t.abs())) {
            break;
        }
        for (k, e) in err.iter().enumerate() {
            let shift = e / vol;
            u.component_mut(k).iter_mut().for_each(|x| *x += shift);
        }
    }
    let v = field::volume(&u, g)?;
    Ok(Recovery {
        u,
        zeta,
        nu,
        xi,
        patch_center,
        patch_radius: radius,
        no_ball_host,
        under_resolved: grid.h_max() > eps / 8.0,
        volume_error: v.iter().zip(&target).map(|(a, b)| a - b).collect(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub tau: f64,
    pub energy: f64,
    pub perimeter: f64,
    /// `energy − perimeter`
    pub gap: f64,
    pub rel_gap: f64,
    pub gap_over_eps: f64,
    pub no_ball_host: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GammaSweep {
    pub rows: Vec<SweepRow>,
    /// `|gap|` strictly decreasing along the ladder
    pub decreasing: bool,
}

/// Energies of recovery fields along a decreasing ε ladder against the
/// ordered-pair multi-perimeter of the cluster.
pub fn gamma_sweep(
    c: &Cluster,
    p: &Potential,
    t: &TensionMatrix,
    g: &ConformalMetric,
    eps_list: &[f64],
    tau_rule: TauRule,
) -> Result<GammaSweep> {
    let perimeter = cluster::multi_perimeter(c, t, g)?;
    let mut rows = Vec::new();
    for &eps in eps_list {
        let tau = tau_rule.tau(eps);
        let rec = modica_baldo(c, p, t, eps, tau, g, None)?;
        let energy = field::energy(&rec.u, eps, p, g)?;
        let gap = energy - perimeter;
        rows.push(SweepRow {
            eps,
            tau,
            energy,
            perimeter,
            gap,
            rel_gap: gap / perimeter,
            gap_over_eps: gap / eps,
            no_ball_host: rec.no_ball_host,
        });
    }
    let decreasing = rows.windows(2).all(|w| w[1].gap.abs() < w[0].gap.abs());
    Ok(GammaSweep { rows, decreasing })
}

/// `2 ⋁_i ∫|∇(φ_i ∘ u)|` against the ordered-pair multi-perimeter of the
/// cluster read off `u`. The supremum of measures is taken cell by cell.
pub fn sup_measure_check(u: &Field, p: &Potential, t: &TensionMatrix, g: &ConformalMetric) -> Result<(f64, f64)> {
    u.grid().same_as(g.grid())?;
    let grid = g.grid();
    let n = grid.len();
    let (mut lo, mut hi) = (vec![f64::INFINITY; p.m()], vec![f64::NEG_INFINITY; p.m()]);
    for k in 0..p.m() {
        for &x in u.component(k) {
            lo[k] = lo[k].min(x);
            hi[k] = hi[k].max(x);
        }
    }
    let table = cluster::WellDistanceTable::build(p, &lo, &hi, cluster::TABLE_NODES)?;
    let wells = p.n_wells();
    let mut phi = vec![0.0; wells * n];
    let mut z = vec![0.0; p.m()];
    let mut dist = vec![0.0; wells];
    for cell in 0..n {
        for k in 0..p.m() {
            z[k] = u.values()[k * n + cell];
        }
        table.distances(&z, &mut dist);
        for i in 0..wells {
            phi[i * n + cell] = dist[i];
        }
    }
    let dim = grid.dim() as i32;
    let mut lhs = 0.0;
    for cell in 0..n {
        let mut best: f64 = 0.0;
        for i in 0..wells {
            let f = &phi[i * n..(i + 1) * n];
            let mut q = 0.0;
            for k in 0..grid.dim() {
                let dk = (f[grid.next(cell, k)] - f[cell]) / grid.h(k);
                q += dk * dk;
            }
            best = best.max(q.sqrt());
        }
        let w = if g.is_flat() { 1.0 } else { g.rho()[cell].powi(dim - 1) };
        lhs += w * best;
    }
    lhs *= 2.0 * grid.cell_volume();
    let labels = cluster::from_field_with(u, &table)?;
    let rhs = cluster::multi_perimeter(&labels, t, g)?;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tension::{tension_matrix, OptimizeOptions};

    fn double_well() -> (Potential, TensionMatrix) {
        let p = Potential::double_well();
        let t = tension_matrix(&p, 128, &OptimizeOptions::default()).unwrap();
        (p, t)
    }

    #[test]
    fn disk_distances() {
        let grid = TorusGrid::unit(&[64, 64]).unwrap();
        let r = 0.2;
        let disk = Cluster::from_fn(&grid, 2, |x| ((x[0] - 0.5).hypot(x[1] - 0.5) >= r) as usize).unwrap();
        let d = signed_distances(&disk).unwrap();
        let h = grid.h(0);
        for cell in 0..grid.len() {
            let x = grid.center(cell);
            let exact = (x[0] - 0.5).hypot(x[1] - 0.5) - r;
            assert!((d.d[0][cell] - exact).abs() <= h, "{} vs {exact}", d.d[0][cell]);
            assert_eq!(d.d[0][cell] < 0.0, disk.label(cell) == 0);
        }
    }

    #[test]
    fn ring_search_matches_brute_force() {
        let grid = TorusGrid::new(&[40, 24], &[1.0, 0.6]).unwrap();
        let c = Cluster::from_fn(&grid, 2, |x| {
            let a = (x[0] - 0.1).hypot(x[1] - 0.1) < 0.12;
            let b = x[0] > 0.6 && x[0] < 0.7;
            (!(a || b)) as usize
        })
        .unwrap();
        let faces = faces_of(&c, 0);
        let fast = distance_to_faces(&grid, &faces);
        // oracle: nearest point of each face segment over the 3×3 periodic images
        let h = [grid.h(0), grid.h(1)];
        let l = [1.0, 0.6];
        for cell in 0..grid.len() {
            let x = grid.center(cell);
            let mut brute = f64::INFINITY;
            for f in &faces {
                for sx in [-1.0, 0.0, 1.0] {
                    for sy in [-1.0, 0.0, 1.0] {
                        let c = [f.center[0] + sx * l[0], f.center[1] + sy * l[1]];
                        let mut q = [0.0; 2];
                        for k in 0..2 {
                            let half = if k == f.axis { 0.0 } else { 0.5 * h[k] };
                            q[k] = x[k].clamp(c[k] - half, c[k] + half);
                        }
                        brute = brute.min((x[0] - q[0]).hypot(x[1] - q[1]));
                    }
                }
            }
            assert!((fast[cell] - brute).abs() < 1e-13, "{} vs {brute}", fast[cell]);
        }
    }

    #[test]
    fn distance_errors() {
        let grid = TorusGrid::unit(&[16]).unwrap();
        let full = Cluster::new(&grid, 2, vec![0; 16]).unwrap();
        assert!(matches!(signed_distances(&full), Err(Error::EmptyBoundary(0))));
        let none = Cluster::exterior(&grid, 2).unwrap();
        assert!(matches!(signed_distances(&none), Err(Error::EmptyInterior)));
        let bands = Cluster::from_fn(&grid, 3, |x| (x[0] >= 0.5) as usize * 2).unwrap();
        let d = signed_distances(&bands).unwrap();
        assert!(d.d[1].iter().all(|x| x.is_infinite()));
        // slope one across the band
        assert!((d.d[0][3] - d.d[0][2] + 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn profile_width_and_limits() {
        let (p, t) = double_well();
        for &(eps, tau) in &[(0.05, 0.01), (0.01, 0.1)] {
            let table = build_profile(&p, &t, eps, tau, 256).unwrap();
            let pair = table.pair(0, 1);
            assert!(pair.eta <= eps / tau.sqrt() * pair.length * (1.0 + 1e-12));
            let mut q = [0.0];
            table.eval_into(0, 1, -1e-9, &mut q);
            assert_eq!(q[0], 1.0);
            table.eval_into(0, 1, pair.eta * 1.0001, &mut q);
            assert_eq!(q[0], 0.0);
            for k in 1..=pair.k() {
                assert!(pair.sample(k)[0] < pair.sample(k - 1)[0]);
            }
        }
        assert!(matches!(build_profile(&p, &t, 0.1, 0.0, 64), Err(Error::BadTau(_))));
    }

    #[test]
    fn profile_refines() {
        let (p, t) = double_well();
        let a = build_profile(&p, &t, 0.02, 0.02, 256).unwrap();
        let b = build_profile(&p, &t, 0.02, 0.02, 512).unwrap();
        let (pa, pb) = (a.pair(0, 1), b.pair(0, 1));
        for k in 0..=256 {
            assert!((pa.sample(k)[0] - pb.sample(2 * k)[0]).abs() <= 1e-6);
        }
    }

    #[test]
    fn recovery_volume_is_exact() {
        let (p, t) = double_well();
        let grid = TorusGrid::unit(&[512]).unwrap();
        let g = ConformalMetric::flat(&grid);
        let c = Cluster::from_fn(&grid, 2, |x| (x[0] >= 0.3) as usize).unwrap();
        for eps in [0.04, 0.02] {
            let rec = modica_baldo(&c, &p, &t, eps, eps, &g, Some(&[0.3])).unwrap();
            let v = field::volume(&rec.u, &g).unwrap();
            assert!((v[0] - 0.3).abs() <= 1e-12 * 1.3, "{:?}", rec.volume_error);
            assert!(!rec.no_ball_host);
        }
    }

    #[test]
    fn tau_rules() {
        assert_eq!("auto".parse::<TauRule>().unwrap().tau(0.04), 0.04);
        assert!(("sqrt".parse::<TauRule>().unwrap().tau(0.04) - 0.2).abs() < 1e-15);
        assert_eq!("0.3".parse::<TauRule>().unwrap(), TauRule::Fixed(0.3));
        assert!(matches!("-1".parse::<TauRule>(), Err(Error::BadTau(_))));
    }
}
