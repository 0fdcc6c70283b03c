//! Discrete weighted clusters: every grid cell carries a chamber label.
//!
//! Chambers are indexed `0..N` in the API, with chamber `N − 1` the exterior.
//! Snapshot files and the command line use the 1-based labels `1..=N`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{ConformalMetric, Field, TorusGrid};
use crate::potential::Potential;
use crate::tension::{geodesic_distance, path_cost, OptimizeOptions, TensionMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    grid: TorusGrid,
    n: usize,
    labels: Vec<usize>,
}

impl Cluster {
    pub fn new(grid: &TorusGrid, n: usize, labels: Vec<usize>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Shape(format!("a cluster needs at least 2 chambers, got {n}")));
        }
        if labels.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} labels for {} cells", labels.len(), grid.len())));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= n) {
            return Err(Error::Shape(format!("label {l} out of range for {n} chambers")));
        }
        Ok(Cluster {
            grid: grid.clone(),
            n,
            labels,
        })
    }

    /// Every cell in the exterior chamber.
    pub fn exterior(grid: &TorusGrid, n: usize) -> Result<Self> {
        Self::new(grid, n, vec![n.saturating_sub(1); grid.len()])
    }

    pub fn from_fn(grid: &TorusGrid, n: usize, f: impl Fn(&[f64]) -> usize) -> Result<Self> {
        let labels = (0..grid.len()).map(|c| f(&grid.center(c))).collect();
        Self::new(grid, n, labels)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Number of chambers, exterior included.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn exterior_label(&self) -> usize {
        self.n - 1
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, cell: usize) -> usize {
        self.labels[cell]
    }

    pub fn set(&mut self, cell: usize, label: usize) {
        assert!(label < self.n, "label {label} out of range");
        self.labels[cell] = label;
    }

    pub fn indicator(&self, chamber: usize) -> Vec<f64> {
        self.labels.iter().map(|&l| if l == chamber { 1.0 } else { 0.0 }).collect()
    }

    pub fn count(&self, chamber: usize) -> usize {
        self.labels.iter().filter(|&&l| l == chamber).count()
    }

    pub fn interior_cells(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&c| self.labels[c] != self.n - 1).collect()
    }

    pub fn translated(&self, offset: &[isize]) -> Cluster {
        let mut labels = vec![0; self.labels.len()];
        for (c, &l) in self.labels.iter().enumerate() {
            labels[self.grid.shifted(c, offset)] = l;
        }
        Cluster {
            grid: self.grid.clone(),
            n: self.n,
            labels,
        }
    }
}

/// `b`-weighted measure of each chamber.
pub fn volumes(c: &Cluster, g: &ConformalMetric) -> Result<Vec<f64>> {
    c.grid.same_as(g.grid())?;
    let dv = g.grid().cell_volume();
    let mut out = vec![0.0; c.n];
    for (l, b) in c.labels.iter().zip(g.b()) {
        out[*l] += b;
    }
    Ok(out.into_iter().map(|x| x * dv).collect())
}

/// Measure of the face shared by `cell` and its forward neighbor on `axis`.
fn face_measure(g: &ConformalMetric, cell: usize, nb: usize, axis: usize) -> f64 {
    let grid = g.grid();
    let n = grid.dim() as i32;
    let area = grid.cell_volume() / grid.h(axis);
    if g.is_flat() {
        area
    } else {
        (0.5 * (g.rho()[cell] + g.rho()[nb])).powi(n - 1) * area
    }
}

/// Face-counting interface areas `H(Σ_ij)`, symmetric with zero diagonal.
pub fn interface_measure(c: &Cluster, g: &ConformalMetric) -> Result<DMatrix<f64>> {
    c.grid.same_as(g.grid())?;
    let grid = g.grid();
    let mut h = DMatrix::zeros(c.n, c.n);
    for cell in 0..grid.len() {
        let a = c.labels[cell];
        for k in 0..grid.dim() {
            let nb = grid.next(cell, k);
            let b = c.labels[nb];
            if a != b {
                let f = face_measure(g, cell, nb, k);
                h[(a, b)] += f;
                h[(b, a)] += f;
            }
        }
    }
    Ok(h)
}

fn check_weights(c: &Cluster, omega: &TensionMatrix) -> Result<()> {
    if omega.n() != c.n {
        return Err(Error::Shape(format!("{} tensions for {} chambers", omega.n(), c.n)));
    }
    Ok(())
}

fn weighted_sum(h: &DMatrix<f64>, omega: &TensionMatrix) -> f64 {
    let n = h.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += omega.get(i, j) * h[(i, j)];
            }
        }
    }
    s
}

/// `Σ_{i≠j} ω_ij H(Σ_ij)` over ordered pairs, with face-counting areas.
pub fn multi_perimeter(c: &Cluster, omega: &TensionMatrix, g: &ConformalMetric) -> Result<f64> {
    check_weights(c, omega)?;
    Ok(weighted_sum(&interface_measure(c, g)?, omega))
}

/// Periodic separable Gaussian smoothing with standard deviation `sigma`,
/// truncated at `4 sigma`.
pub(crate) fn gaussian_smooth(grid: &TorusGrid, data: &[f64], sigma: f64) -> Vec<f64> {
    let mut cur = data.to_vec();
    let mut next = vec![0.0; data.len()];
    for k in 0..grid.dim() {
        let h = grid.h(k);
        let n = grid.shape()[k];
        let radius = ((4.0 * sigma / h).ceil() as usize).min(n / 2);
        let mut w: Vec<f64> = (0..=radius)
            .map(|t| (-0.5 * (t as f64 * h / sigma).powi(2)).exp())
            .collect();
        let total = w[0] + 2.0 * w[1..].iter().sum::<f64>();
        w.iter_mut().for_each(|x| *x /= total);
        let s = grid.stride(k);
        for c in 0..grid.len() {
            let i = grid.index_along(c, k);
            let base = c - i * s;
            let mut acc = w[0] * cur[c];
            for (t, wt) in w.iter().enumerate().skip(1) {
                let fwd = base + ((i + t) % n) * s;
                let bwd = base + ((i + n - t % n) % n) * s;
                acc += wt * (cur[fwd] + cur[bwd]);
            }
            next[c] = acc;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// `Σ ρ^{n−1} |∇f| ΔV` with central differences.
fn total_variation(f: &[f64], g: &ConformalMetric) -> f64 {
    let grid = g.grid();
    let n = grid.dim() as i32;
    let mut s = 0.0;
    for c in 0..grid.len() {
        let mut q = 0.0;
        for k in 0..grid.dim() {
            let d = (f[grid.next(c, k)] - f[grid.prev(c, k)]) / (2.0 * grid.h(k));
            q += d * d;
        }
        let w = if g.is_flat() { 1.0 } else { g.rho()[c].powi(n - 1) };
        s += w * q.sqrt();
    }
    s * grid.cell_volume()
}

/// Smoothing width of the isotropic estimator, in cells.
const ISO_WIDTH: f64 = 2.0;

/// Rotation-invariant estimate of each chamber's perimeter: total variation
/// of the indicator after Gaussian smoothing with width `2h`.
pub fn isotropic_perimeters(c: &Cluster, g: &ConformalMetric) -> Result<Vec<f64>> {
    c.grid.same_as(g.grid())?;
    let sigma = ISO_WIDTH * g.grid().h_max();
    Ok((0..c.n)
        .map(|i| total_variation(&gaussian_smooth(g.grid(), &c.indicator(i), sigma), g))
        .collect())
}

/// Isotropic interface areas, `H_ij = (P_i + P_j − P(Ω_i ∪ Ω_j)) / 2`.
pub fn isotropic_interfaces(c: &Cluster, g: &ConformalMetric) -> Result<DMatrix<f64>> {
    c.grid.same_as(g.grid())?;
    let sigma = ISO_WIDTH * g.grid().h_max();
    let smooth: Vec<Vec<f64>> = (0..c.n)
        .map(|i| gaussian_smooth(g.grid(), &c.indicator(i), sigma))
        .collect();
    let per: Vec<f64> = smooth.iter().map(|s| total_variation(s, g)).collect();
    let mut h = DMatrix::zeros(c.n, c.n);
    for i in 0..c.n {
        for j in i + 1..c.n {
            let union: Vec<f64> = smooth[i].iter().zip(&smooth[j]).map(|(a, b)| a + b).collect();
            let v = (0.5 * (per[i] + per[j] - total_variation(&union, g))).max(0.0);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// Ordered-pair multi-perimeter with isotropic interface areas.
pub fn isotropic_multi_perimeter(c: &Cluster, omega: &TensionMatrix, g: &ConformalMetric) -> Result<f64> {
    check_weights(c, omega)?;
    Ok(weighted_sum(&isotropic_interfaces(c, g)?, omega))
}

/// `Σ_{i<N} vol_b(Ω¹_i △ Ω²_i)`.
pub fn flat_distance(c1: &Cluster, c2: &Cluster, g: &ConformalMetric) -> Result<f64> {
    c1.grid.same_as(g.grid())?;
    c2.grid.same_as(g.grid())?;
    if c1.n != c2.n {
        return Err(Error::Shape(format!("{} vs {} chambers", c1.n, c2.n)));
    }
    let ext = c1.n - 1;
    let mut s = 0.0;
    for ((a, b), w) in c1.labels.iter().zip(&c2.labels).zip(g.b()) {
        if a != b {
            // a differing cell lies in the symmetric difference of each
            // interior chamber it belongs to in either cluster
            s += w * ((*a != ext) as u8 + (*b != ext) as u8) as f64;
        }
    }
    Ok(s * g.grid().cell_volume())
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Diameter {
    pub value: f64,
    /// false when computed on a subset of cells
    pub exact: bool,
}

const EXACT_DIAMETER_CELLS: usize = 10_000;

/// Largest torus distance between centers of interior cells.
///
/// Exact for up to 10⁴ interior cells. Larger interiors are reduced to the
/// cells on their boundary, then subsampled to 10⁴ if still too many.
pub fn interior_diameter(c: &Cluster) -> Result<Diameter> {
    let grid = &c.grid;
    let ext = c.n - 1;
    let mut cells = c.interior_cells();
    if cells.is_empty() {
        return Err(Error::EmptyInterior);
    }
    let mut exact = true;
    if cells.len() > EXACT_DIAMETER_CELLS {
        exact = false;
        cells.retain(|&x| (0..grid.dim()).any(|k| c.labels[grid.next(x, k)] == ext || c.labels[grid.prev(x, k)] == ext));
        if cells.len() > EXACT_DIAMETER_CELLS {
            let step = cells.len().div_ceil(EXACT_DIAMETER_CELLS);
            cells = cells.into_iter().step_by(step).collect();
        }
    }
    let centers: Vec<Vec<f64>> = cells.iter().map(|&x| grid.center(x)).collect();
    let mut best: f64 = 0.0;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            best = best.max(grid.distance(&centers[i], &centers[j]));
        }
    }
    Ok(Diameter { value: best, exact })
}

/// Connected components of the interior under periodic axis adjacency.
pub fn interior_components(c: &Cluster) -> usize {
    let grid = &c.grid;
    let ext = c.n - 1;
    let mut seen = vec![false; grid.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..grid.len() {
        if seen[start] || c.labels[start] == ext {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(x) = stack.pop() {
            for k in 0..grid.dim() {
                for nb in [grid.next(x, k), grid.prev(x, k)] {
                    if !seen[nb] && c.labels[nb] != ext {
                        seen[nb] = true;
                        stack.push(nb);
                    }
                }
            }
        }
    }
    count
}

#[derive(Clone, Debug, Serialize)]
pub struct SubdomainReport {
    pub diameter: f64,
    pub diameter_exact: bool,
    pub volume: f64,
    /// `diam / volume^{1/n}`
    pub ratio: f64,
    pub components: usize,
}

pub fn large_subdomain_report(c: &Cluster, g: &ConformalMetric) -> Result<SubdomainReport> {
    let d = interior_diameter(c)?;
    let vols = volumes(c, g)?;
    let volume: f64 = vols[..c.n - 1].iter().sum();
    let n = g.grid().dim() as f64;
    Ok(SubdomainReport {
        diameter: d.value,
        diameter_exact: d.exact,
        volume,
        ratio: d.value / volume.powf(1.0 / n),
        components: interior_components(c),
    })
}

/// Degenerate-metric distances `d_W(p_i, z)` tabulated on a regular grid of
/// phase values and interpolated multilinearly.
#[derive(Clone, Debug)]
pub struct WellDistanceTable {
    m: usize,
    n_wells: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    nodes: Vec<usize>,
    /// node-major, `n_wells` entries per node
    values: Vec<f64>,
}

/// Nodes per axis of the lookup table.
pub const TABLE_NODES: usize = 64;
/// Polyline resolution of the tabulated geodesics.
pub const TABLE_PATH_NODES: usize = 32;

impl WellDistanceTable {
    /// Tabulates over the box `[lo, hi]`, clipped to the nonnegative orthant.
    pub fn build(p: &Potential, lo: &[f64], hi: &[f64], nodes: usize) -> Result<Self> {
        let m = p.m();
        if lo.len() != m || hi.len() != m {
            return Err(Error::Shape(format!("table box has {} / {} coordinates, expected {m}", lo.len(), hi.len())));
        }
        let lo: Vec<f64> = lo.iter().map(|x| x.max(0.0)).collect();
        let hi: Vec<f64> = hi.iter().zip(&lo).map(|(h, l)| h.max(*l)).collect();
        let counts: Vec<usize> = lo.iter().zip(&hi).map(|(l, h)| if h > l { nodes.max(2) } else { 1 }).collect();
        let total: usize = counts.iter().product();
        let opts = OptimizeOptions {
            rel_tol: 1e-9,
            max_iter: 20_000,
            starts: 1,
            ..Default::default()
        };
        let n_wells = p.n_wells();
        let mut values = vec![0.0; total * n_wells];
        for node in 0..total {
            let z = node_point(node, &counts, &lo, &hi);
            for i in 0..n_wells {
                values[node * n_wells + i] = well_distance(p, i, &z, &opts)?;
            }
        }
        Ok(WellDistanceTable {
            m,
            n_wells,
            lo,
            hi,
            nodes: counts,
            values,
        })
    }

    /// Distances from every well to `z`; coordinates outside the table box
    /// are clamped onto it.
    pub fn distances(&self, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let m = self.m;
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        for k in 0..m {
            let n = self.nodes[k];
            if n == 1 {
                base[k] = 0;
                frac[k] = 0.0;
                continue;
            }
            let t = ((z[k] - self.lo[k]) / (self.hi[k] - self.lo[k])).clamp(0.0, 1.0) * (n - 1) as f64;
            let i = (t.floor() as usize).min(n - 2);
            base[k] = i;
            frac[k] = t - i as f64;
        }
        for corner in 0..(1usize << m) {
            let mut weight = 1.0;
            let mut node = 0;
            let mut stride = 1;
            for k in (0..m).rev() {
                let up = (corner >> k) & 1 == 1 && self.nodes[k] > 1;
                let w = if up { frac[k] } else { 1.0 - frac[k] };
                weight *= w;
                node += (base[k] + up as usize) * stride;
                stride *= self.nodes[k];
            }
            if weight == 0.0 {
                continue;
            }
            for i in 0..self.n_wells {
                out[i] += weight * self.values[node * self.n_wells + i];
            }
        }
    }
}

fn node_point(node: usize, counts: &[usize], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let m = counts.len();
    let mut z = vec![0.0; m];
    let mut rest = node;
    for k in (0..m).rev() {
        let i = rest % counts[k];
        rest /= counts[k];
        z[k] = if counts[k] == 1 {
            lo[k]
        } else {
            lo[k] + (hi[k] - lo[k]) * i as f64 / (counts[k] - 1) as f64
        };
    }
    z
}

/// Optimized distance, or the straight-segment cost when the optimizer stalls.
fn well_distance(p: &Potential, i: usize, z: &[f64], opts: &OptimizeOptions) -> Result<f64> {
    match geodesic_distance(p, p.well(i), z, TABLE_PATH_NODES, opts) {
        Ok(g) => Ok(g.distance),
        Err(Error::NonConvergence { .. }) => {
            let m = p.m();
            let k = TABLE_PATH_NODES;
            let nodes: Vec<f64> = (0..k)
                .flat_map(|s| {
                    let t = s as f64 / (k - 1) as f64;
                    (0..m).map(move |c| (1.0 - t) * p.well(i)[c] + t * z[c])
                })
                .collect();
            Ok(path_cost(p, &nodes, m, None))
        }
        Err(e) => Err(e),
    }
}

/// Labels each cell by the nearest well in the degenerate metric, ties going
/// to the smaller index.
pub fn from_field(u: &Field, p: &Potential) -> Result<Cluster> {
    if u.m() != p.m() {
        return Err(Error::Shape(format!("field has {} components, potential {}", u.m(), p.m())));
    }
    let (mut lo, mut hi) = (vec![f64::INFINITY; p.m()], vec![f64::NEG_INFINITY; p.m()]);
    for k in 0..p.m() {
        for &x in u.component(k) {
            lo[k] = lo[k].min(x);
            hi[k] = hi[k].max(x);
        }
    }
    let table = WellDistanceTable::build(p, &lo, &hi, TABLE_NODES)?;
    from_field_with(u, &table)
}

/// As [`from_field`] with a prebuilt table.
pub fn from_field_with(u: &Field, table: &WellDistanceTable) -> Result<Cluster> {
    let grid = u.grid();
    let n = grid.len();
    let mut d = vec![0.0; table.n_wells];
    let mut z = vec![0.0; u.m()];
    let mut labels = Vec::with_capacity(n);
    for c in 0..n {
        for k in 0..u.m() {
            z[k] = u.values()[k * n + c];
        }
        table.distances(&z, &mut d);
        let min = d.iter().copied().fold(f64::INFINITY, f64::min);
        let tie = 1e-12 * (1.0 + min.abs());
        labels.push(d.iter().position(|&x| x <= min + tie).unwrap_or(0));
    }
    Cluster::new(grid, table.n_wells, labels)
}

/// Euclidean isoperimetric constant `n π^{1/2} Γ(n/2+1)^{−1/n}`.
pub fn isoperimetric_constant(n: usize) -> f64 {
    let nf = n as f64;
    nf * PI.sqrt() * libm::tgamma(nf / 2.0 + 1.0).powf(-1.0 / nf)
}

#[derive(Clone, Debug, Serialize)]
pub struct IsoBounds {
    pub lower: f64,
    pub upper: f64,
    /// `min ω · c_n`
    pub c0: f64,
    /// `max ω · c_n`
    pub c0_tilde: f64,
    pub c_n: f64,
}

/// Small-volume perimeter bounds for interior volumes `v` (the exterior
/// entry may be included and is ignored).
pub fn isoperimetric_bounds(v: &[f64], omega: &TensionMatrix, n: usize) -> Result<IsoBounds> {
    let chambers = omega.n();
    let interior = match v.len() {
        l if l + 1 == chambers => v,
        l if l == chambers => &v[..l - 1],
        l => return Err(Error::Shape(format!("{l} volumes for {chambers} chambers"))),
    };
    if let Some(x) = interior.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::NegativeVolume(*x));
    }
    let mut wmax: f64 = 0.0;
    let mut wmin = f64::INFINITY;
    for i in 0..chambers {
        for j in 0..chambers {
            let w = omega.get(i, j);
            if i != j && w > 0.0 {
                wmax = wmax.max(w);
                wmin = wmin.min(w);
            }
        }
    }
    if !wmin.is_finite() {
        wmin = 0.0;
    }
    let c_n = isoperimetric_constant(n);
    let e = (n as f64 - 1.0) / n as f64;
    let upper = wmax * c_n * interior.iter().map(|x| x.powf(e)).sum::<f64>();
    let lower = wmin * c_n * interior.iter().sum::<f64>().powf(e);
    Ok(IsoBounds {
        lower,
        upper,
        c0: wmin * c_n,
        c0_tilde: wmax * c_n,
        c_n,
    })
}

#[derive(Clone, Debug)]
pub struct MboOptions {
    /// diffusion time; defaults to `(4h)²`
    pub dt: Option<f64>,
    /// converged once a sweep changes at most this many labels
    pub stall: usize,
    pub max_sweeps: usize,
    /// starting cluster; defaults to touching balls along the first axis
    pub init: Option<Cluster>,
}

impl Default for MboOptions {
    fn default() -> Self {
        MboOptions {
            dt: None,
            stall: 0,
            max_sweeps: 500,
            init: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MboResult {
    /// iterate with the lowest isotropic multi-perimeter
    pub cluster: Cluster,
    pub perimeter: f64,
    pub initial_perimeter: f64,
    pub volumes: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// labels changed in the last sweep
    pub last_changes: usize,
}

/// Interior chambers as balls of the target volumes, centered on a line
/// through the middle of the torus along the first axis.
pub fn ball_chain(v: &[f64], g: &ConformalMetric) -> Result<Cluster> {
    let grid = g.grid();
    let n = v.len() + 1;
    let dim = grid.dim();
    let unit_ball = PI.powf(dim as f64 / 2.0) / libm::tgamma(dim as f64 / 2.0 + 1.0);
    let radii: Vec<f64> = v.iter().map(|x| (x.max(0.0) / unit_ball).powf(1.0 / dim as f64)).collect();
    let span: f64 = radii.iter().map(|r| 2.0 * r).sum();
    let mut centers = Vec::new();
    let mut x = 0.5 * grid.lengths()[0] - 0.5 * span;
    for r in &radii {
        let mut c: Vec<f64> = grid.lengths().iter().map(|l| 0.5 * l).collect();
        c[0] = x + r;
        x += 2.0 * r;
        centers.push(c);
    }
    Cluster::from_fn(grid, n, |p| {
        for (i, (c, r)) in centers.iter().zip(&radii).enumerate() {
            if *r > 0.0 && grid.distance(p, c) < *r {
                return i;
            }
        }
        n - 1
    })
}

/// Tension-weighted threshold dynamics with exact volume restoration.
///
/// Each sweep smooths the chamber indicators with a periodic Gaussian of
/// width `√(2 dt)`, moves every cell to the chamber minimizing
/// `Σ_{j≠i} ω_ij (K * χ_j)`, then restores the interior volumes chamber by
/// chamber in order of decreasing deficit.
pub fn mbo_minimize(v: &[f64], omega: &TensionMatrix, g: &ConformalMetric, opts: &MboOptions) -> Result<MboResult> {
    let n = omega.n();
    if v.len() + 1 != n {
        return Err(Error::Shape(format!("{} interior volumes for {n} chambers", v.len())));
    }
    if let Some(x) = v.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::NegativeVolume(*x));
    }
    if v.iter().sum::<f64>() >= g.total_volume() {
        return Err(Error::VolumeTooLarge(v.to_vec()));
    }
    let grid = g.grid();
    let mut c = match &opts.init {
        Some(init) => {
            init.grid.same_as(grid)?;
            if init.n != n {
                return Err(Error::Shape(format!("initial cluster has {} chambers, expected {n}", init.n)));
            }
            init.clone()
        }
        None => ball_chain(v, g)?,
    };
    let dt = opts.dt.unwrap_or((4.0 * grid.h_max()).powi(2));
    let sigma = (2.0 * dt).sqrt();
    let dv = grid.cell_volume();
    let cell_w: Vec<f64> = g.b().iter().map(|b| b * dv).collect();

    let mut scores = vec![0.0; n * grid.len()];
    let compute_scores = |c: &Cluster, scores: &mut [f64]| {
        let smooth: Vec<Vec<f64>> = (0..n).map(|j| gaussian_smooth(grid, &c.indicator(j), sigma)).collect();
        for i in 0..n {
            let s = &mut scores[i * grid.len()..(i + 1) * grid.len()];
            s.iter_mut().for_each(|x| *x = 0.0);
            for (j, sm) in smooth.iter().enumerate() {
                let w = omega.get(i, j);
                if i != j && w != 0.0 {
                    s.iter_mut().zip(sm).for_each(|(x, y)| *x += w * y);
                }
            }
        }
    };

    restore_volumes(&mut c, v, &cell_w, None);
    let initial_perimeter = isotropic_multi_perimeter(&c, omega, g)?;
    let mut best = (initial_perimeter, c.clone());
    let mut converged = false;
    let mut sweeps = 0;
    let mut last_changes = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        compute_scores(&c, &mut scores);
        let mut next = c.clone();
        for cell in 0..grid.len() {
            let mut arg = 0;
            let mut val = f64::INFINITY;
            for i in 0..n {
                let s = scores[i * grid.len() + cell];
                if s < val {
                    val = s;
                    arg = i;
                }
            }
            next.labels[cell] = arg;
        }
        restore_volumes(&mut next, v, &cell_w, Some(&scores));
        last_changes = next.labels.iter().zip(&c.labels).filter(|(a, b)| a != b).count();
        c = next;
        let per = isotropic_multi_perimeter(&c, omega, g)?;
        if per < best.0 {
            best = (per, c.clone());
        }
        if last_changes <= opts.stall {
            converged = true;
            break;
        }
    }
    let vols = volumes(&best.1, g)?;
    Ok(MboResult {
        cluster: best.1,
        perimeter: best.0,
        initial_perimeter,
        volumes: vols,
        sweeps,
        converged,
        last_changes,
    })
}

/// Brings every interior chamber to within half a cell of its target. The
/// exterior absorbs the balance. Without scores, cells are ranked by
/// distance to the chamber's center of mass.
fn restore_volumes(c: &mut Cluster, v: &[f64], cell_w: &[f64], scores: Option<&[f64]>) {
    let n = c.n;
    let len = c.labels.len();
    let ext = n - 1;
    let mut vol = vec![0.0; n];
    for (l, w) in c.labels.iter().zip(cell_w) {
        vol[*l] += w;
    }
    let mut order: Vec<usize> = (0..ext).collect();
    order.sort_by(|&a, &b| (v[b] - vol[b]).total_cmp(&(v[a] - vol[a])).then(a.cmp(&b)));
    let mut locked = vec![false; n];
    let fallback: Vec<Vec<f64>> = if scores.is_none() {
        (0..n).map(|i| proximity_scores(c, i)).collect()
    } else {
        Vec::new()
    };
    let score = |i: usize, cell: usize| -> f64 {
        match scores {
            Some(s) => s[i * len + cell],
            None => fallback[i][cell],
        }
    };
    for &i in &order {
        if vol[i] < v[i] {
            let mut cand: Vec<(f64, usize)> = (0..len)
                .filter(|&x| c.labels[x] != i && !locked[c.labels[x]])
                .map(|x| (score(i, x) - score(c.labels[x], x), x))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (_, x) in cand {
                let w = cell_w[x];
                if vol[i] + 0.5 * w > v[i] {
                    break;
                }
                vol[c.labels[x]] -= w;
                vol[i] += w;
                c.labels[x] = i;
            }
        } else if vol[i] > v[i] {
            let mut cand: Vec<(f64, usize, usize)> = (0..len)
                .filter(|&x| c.labels[x] == i)
                .map(|x| {
                    let (alt, s) = (0..n)
                        .filter(|&k| k != i && (!locked[k] || k == ext))
                        .map(|k| (k, score(k, x)))
                        .fold((ext, f64::INFINITY), |acc, kv| if kv.1 < acc.1 { kv } else { acc });
                    (score(i, x) - s, x, alt)
                })
                .collect();
            cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for (_, x, alt) in cand {
                let w = cell_w[x];
                if vol[i] - 0.5 * w < v[i] {
                    break;
                }
                vol[i] -= w;
                vol[alt] += w;
                c.labels[x] = alt;
            }
        }
        locked[i] = true;
    }
}

/// Torus distance to the centroid of chamber `i` (or zero everywhere if
/// empty); lower is closer.
fn proximity_scores(c: &Cluster, i: usize) -> Vec<f64> {
    let grid = &c.grid;
    let cells: Vec<usize> = (0..grid.len()).filter(|&x| c.labels[x] == i).collect();
    let Some(&first) = cells.first() else {
        return vec![0.0; grid.len()];
    };
    // centroid via displacements from one member, valid for small chambers
    let anchor = grid.center(first);
    let mut mean = vec![0.0; grid.dim()];
    for &x in &cells {
        let d = grid.displacement(&anchor, &grid.center(x));
        mean.iter_mut().zip(&d).for_each(|(m, v)| *m += v / cells.len() as f64);
    }
    let centroid: Vec<f64> = anchor.iter().zip(&mean).map(|(a, m)| a + m).collect();
    (0..grid.len()).map(|x| grid.distance(&grid.center(x), &centroid)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(shape: &[usize]) -> (TorusGrid, ConformalMetric) {
        let grid = TorusGrid::unit(shape).unwrap();
        let g = ConformalMetric::flat(&grid);
        (grid, g)
    }

    #[test]
    fn volumes_partition() {
        let (grid, g) = flat(&[16, 16]);
        let all = Cluster::exterior(&grid, 3).unwrap();
        assert_eq!(volumes(&all, &g).unwrap(), vec![0.0, 0.0, 1.0]);
        let half = Cluster::from_fn(&grid, 3, |x| if x[0] < 0.5 { 0 } else { 1 }).unwrap();
        assert_eq!(volumes(&half, &g).unwrap(), vec![0.5, 0.5, 0.0]);
        let bump = ConformalMetric::parse("bump:0.3,0.2", &grid).unwrap();
        let v = volumes(&half, &bump).unwrap();
        assert!((v.iter().sum::<f64>() - bump.total_volume()).abs() < 1e-12);
    }

    #[test]
    fn face_counting() {
        let (grid, g) = flat(&[16, 16]);
        let bands = Cluster::from_fn(&grid, 2, |x| if x[0] < 0.5 { 0 } else { 1 }).unwrap();
        let h = interface_measure(&bands, &g).unwrap();
        assert!((h[(0, 1)] - 2.0).abs() < 1e-12 && h[(0, 0)] == 0.0);
        let sq = Cluster::from_fn(&grid, 2, |x| if x[0] < 0.25 && x[1] < 0.25 { 0 } else { 1 }).unwrap();
        assert!((interface_measure(&sq, &g).unwrap()[(0, 1)] - 1.0).abs() < 1e-12);
        let t = TensionMatrix::from_omega(DMatrix::from_row_slice(2, 2, &[0.0, 0.3, 0.3, 0.0])).unwrap();
        assert!((multi_perimeter(&bands, &t, &g).unwrap() - 1.2).abs() < 1e-12);
        assert_eq!(multi_perimeter(&Cluster::exterior(&grid, 2).unwrap(), &t, &g).unwrap(), 0.0);
    }

    #[test]
    fn flat_distance_cases() {
        let (grid, g) = flat(&[20, 20]);
        let a = Cluster::from_fn(&grid, 3, |x| if x[0] < 0.2 { 0 } else if x[0] > 0.6 && x[0] < 0.8 { 1 } else { 2 }).unwrap();
        assert_eq!(flat_distance(&a, &a, &g).unwrap(), 0.0);
        let mut swapped = a.clone();
        for cell in 0..grid.len() {
            swapped.labels[cell] = match a.labels[cell] {
                0 => 1,
                1 => 0,
                l => l,
            };
        }
        assert!((flat_distance(&a, &swapped, &g).unwrap() - 0.8).abs() < 1e-12);
        let grown = Cluster::from_fn(&grid, 3, |x| if x[0] < 0.3 { 0 } else if x[0] > 0.6 && x[0] < 0.8 { 1 } else { 2 }).unwrap();
        assert!((flat_distance(&a, &grown, &g).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn diameters() {
        let (grid, _) = flat(&[64, 64]);
        let disk = Cluster::from_fn(&grid, 2, |x| ((x[0] - 0.5).hypot(x[1] - 0.5) < 0.15) as usize ^ 1).unwrap();
        let d = interior_diameter(&disk).unwrap();
        assert!(d.exact && (d.value - 0.3).abs() <= 2.0 / 64.0, "{}", d.value);
        let mut one = Cluster::exterior(&grid, 2).unwrap();
        one.set(100, 0);
        assert_eq!(interior_diameter(&one).unwrap().value, 0.0);
        assert!(matches!(interior_diameter(&Cluster::exterior(&grid, 2).unwrap()), Err(Error::EmptyInterior)));
        assert_eq!(interior_components(&disk), 1);
    }

    #[test]
    fn isotropic_disk_perimeter() {
        let (grid, g) = flat(&[128, 128]);
        let r = 0.2;
        let disk = Cluster::from_fn(&grid, 2, |x| ((x[0] - 0.5).hypot(x[1] - 0.5) >= r) as usize).unwrap();
        let p = isotropic_perimeters(&disk, &g).unwrap();
        assert!((p[0] / (2.0 * PI * r) - 1.0).abs() < 0.01, "{}", p[0]);
        let h = isotropic_interfaces(&disk, &g).unwrap();
        assert!((h[(0, 1)] - p[0]).abs() < 1e-9 * p[0]);
    }

    #[test]
    fn smoothing_preserves_mass() {
        let (grid, _) = flat(&[32, 16]);
        let data: Vec<f64> = (0..grid.len()).map(|c| (c % 7) as f64).collect();
        let out = gaussian_smooth(&grid, &data, 0.1);
        assert!((data.iter().sum::<f64>() - out.iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn constant_c2() {
        assert!((isoperimetric_constant(2) - 2.0 * PI.sqrt()).abs() < 1e-14);
        // 3-ball: area 4πr², volume 4/3 πr³
        assert!((isoperimetric_constant(3) - (36.0 * PI).powf(1.0 / 3.0)).abs() < 1e-12);
        let b = isoperimetric_bounds(&[0.01], &TensionMatrix::unit(2), 2).unwrap();
        assert!((b.upper - 2.0 * (PI * 0.01).sqrt()).abs() < 1e-12);
        assert!((b.lower - b.upper).abs() < 1e-12);
        let z = isoperimetric_bounds(&[0.0], &TensionMatrix::unit(2), 2).unwrap();
        assert_eq!((z.lower, z.upper), (0.0, 0.0));
        assert!(matches!(
            isoperimetric_bounds(&[-0.1], &TensionMatrix::unit(2), 2),
            Err(Error::NegativeVolume(_))
        ));
    }

    #[test]
    fn labels_from_constant_fields() {
        let (grid, _) = flat(&[8, 8]);
        let p = Potential::product_triple_well([1.0, 0.0], [0.0, 1.0]).unwrap();
        let u = Field::constant(&grid, p.well(1));
        assert!(from_field(&u, &p).unwrap().labels().iter().all(|&l| l == 1));
        let dw = Potential::double_well();
        let mid = Field::constant(&grid, &[0.5]);
        assert!(from_field(&mid, &dw).unwrap().labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn mbo_keeps_volumes() {
        let (grid, g) = flat(&[64, 64]);
        let res = mbo_minimize(&[0.1], &TensionMatrix::unit(2), &g, &MboOptions::default()).unwrap();
        let h = grid.cell_volume();
        assert!((res.volumes[0] - 0.1).abs() <= h);
        assert!(res.perimeter <= res.initial_perimeter + 1e-9);
        let empty = mbo_minimize(&[0.05, 0.0], &TensionMatrix::unit(3), &g, &MboOptions::default()).unwrap();
        assert_eq!(empty.cluster.count(1), 0);
    }
}
