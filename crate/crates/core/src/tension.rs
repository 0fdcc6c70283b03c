//! Surface tensions as distances in the degenerate metric `√W |dz|`.
//!
//! A curve between two wells is a uniform-parameter polyline with `K` nodes;
//! its cost is the midpoint rule `Σ √W(mid_k) |seg_k|`. Interior nodes are
//! moved by projected gradient descent (Barzilai–Borwein step, Armijo
//! backtracking) inside the closed positive orthant.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::rng;

pub type Polyline = Vec<Vec<f64>>;

#[derive(Clone, Copy, Debug)]
pub struct OptimizeOptions {
    pub max_iter: usize,
    /// stop once the relative decrease over `window` iterations drops below this
    pub rel_tol: f64,
    pub window: usize,
    pub seed: u64,
    /// number of initializations: the straight segment plus `starts − 1` bent ones
    pub starts: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            max_iter: 100_000,
            rel_tol: 1e-10,
            window: 50,
            seed: 0,
            starts: 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Geodesic {
    pub distance: f64,
    pub path: Polyline,
    pub iterations: usize,
}

/// Discrete path cost and its gradient with respect to every node.
pub fn path_cost(p: &Potential, nodes: &[f64], m: usize, grad: Option<&mut [f64]>) -> f64 {
    let k = nodes.len() / m;
    let mut mid = vec![0.0; m];
    let mut gs = vec![0.0; m];
    let mut total = 0.0;
    let mut grad = grad;
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|x| *x = 0.0);
    }
    for s in 0..k - 1 {
        let (a, b) = (&nodes[s * m..(s + 1) * m], &nodes[(s + 1) * m..(s + 2) * m]);
        let mut len2 = 0.0;
        for d in 0..m {
            mid[d] = 0.5 * (a[d] + b[d]);
            len2 += (b[d] - a[d]) * (b[d] - a[d]);
        }
        let len = len2.sqrt();
        if let Some(g) = grad.as_deref_mut() {
            let sw = p.sqrt_value_grad(&mid, &mut gs);
            total += sw * len;
            for d in 0..m {
                let half = 0.5 * gs[d] * len;
                let dir = if len > 0.0 { sw * (b[d] - a[d]) / len } else { 0.0 };
                g[s * m + d] += half - dir;
                g[(s + 1) * m + d] += half + dir;
            }
        } else {
            total += p.value(&mid).max(0.0).sqrt() * len;
        }
    }
    total
}

fn straight(a: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let m = a.len();
    let mut out = Vec::with_capacity(k * m);
    for s in 0..k {
        let t = s as f64 / (k - 1) as f64;
        for d in 0..m {
            out.push(a[d] + t * (b[d] - a[d]));
        }
    }
    out
}

fn bent(a: &[f64], b: &[f64], k: usize, stream: &mut rng::Stream) -> Vec<f64> {
    let m = a.len();
    let mut out = straight(a, b, k);
    let chord: f64 = a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt();
    let mut dir: Vec<f64> = (0..m).map(|_| rng::uniform(stream, -1.0, 1.0)).collect();
    if m > 1 && chord > 0.0 {
        // remove the chord component so the bend is transverse
        let t: Vec<f64> = a.iter().zip(b).map(|(x, y)| (y - x) / chord).collect();
        let dot: f64 = dir.iter().zip(&t).map(|(x, y)| x * y).sum();
        dir.iter_mut().zip(&t).for_each(|(x, y)| *x -= dot * y);
    }
    let n: f64 = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let amp = rng::uniform(stream, 0.15, 0.5) * chord.max(1e-3);
    for s in 1..k - 1 {
        let t = s as f64 / (k - 1) as f64;
        let bump = amp * (std::f64::consts::PI * t).sin();
        for d in 0..m {
            out[s * m + d] = (out[s * m + d] + bump * dir[d] / n).max(0.0);
        }
    }
    out
}

struct Descent {
    value: f64,
    nodes: Vec<f64>,
    iterations: usize,
    rel_decrease: f64,
    converged: bool,
}

fn descend(p: &Potential, init: Vec<f64>, m: usize, opts: &OptimizeOptions) -> Descent {
    let n = init.len();
    let k = n / m;
    let mut x = init;
    let mut g = vec![0.0; n];
    let mut f = path_cost(p, &x, m, Some(&mut g));
    // endpoints are fixed
    let pin = |g: &mut [f64]| {
        g[..m].iter_mut().for_each(|v| *v = 0.0);
        g[(k - 1) * m..].iter_mut().for_each(|v| *v = 0.0);
    };
    pin(&mut g);
    let mut history = std::collections::VecDeque::with_capacity(opts.window + 1);
    history.push_back(f);
    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut alpha = if gnorm > 0.0 { 1e-2 / gnorm } else { 1.0 };
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut rel = f64::INFINITY;
    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        let mut accepted = false;
        for _ in 0..60 {
            let mut dec = 0.0;
            for i in 0..n {
                x_new[i] = (x[i] - alpha * g[i]).max(0.0);
                dec += g[i] * (x_new[i] - x[i]);
            }
            let f_new = path_cost(p, &x_new, m, None);
            if f_new <= f + 1e-4 * dec {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // no descent left at working precision
            rel = 0.0;
            break;
        }
        let f_new = path_cost(p, &x_new, m, Some(&mut g_new));
        pin(&mut g_new);
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..n {
            let s = x_new[i] - x[i];
            ss += s * s;
            sy += s * (g_new[i] - g[i]);
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-14, 1e6) } else { (alpha * 2.0).min(1e6) };
        history.push_back(f);
        if history.len() > opts.window {
            let old = history.pop_front().unwrap();
            rel = (old - f) / f.abs().max(1e-300);
            if rel < opts.rel_tol {
                break;
            }
        }
        if ss == 0.0 {
            rel = 0.0;
            break;
        }
    }
    Descent {
        value: f,
        nodes: x,
        iterations: it,
        rel_decrease: rel,
        converged: rel < opts.rel_tol,
    }
}

fn to_polyline(nodes: &[f64], m: usize) -> Polyline {
    nodes.chunks(m).map(|c| c.to_vec()).collect()
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return x < y;
        }
    }
    false
}

fn geodesic_with_extra(
    p: &Potential,
    a: &[f64],
    b: &[f64],
    k: usize,
    opts: &OptimizeOptions,
    extra: &[Vec<f64>],
) -> Result<Geodesic> {
    let m = p.m();
    for e in [a, b] {
        if e.len() != m {
            return Err(Error::Shape(format!("endpoint has {} coordinates, expected {m}", e.len())));
        }
        if e.iter().any(|c| *c < 0.0 || !c.is_finite()) {
            return Err(Error::InvalidEndpoint(e.to_vec()));
        }
    }
    let k = k.max(2);
    if a == b {
        return Ok(Geodesic {
            distance: 0.0,
            path: vec![a.to_vec(); k],
            iterations: 0,
        });
    }
    let mut stream = rng::stream(opts.seed);
    let mut inits = vec![straight(a, b, k)];
    for _ in 1..opts.starts.max(1) {
        inits.push(bent(a, b, k, &mut stream));
    }
    inits.extend(extra.iter().cloned());

    let mut best: Option<Descent> = None;
    let mut total_iters = 0;
    let mut worst_unconverged: Option<f64> = None;
    for init in inits {
        let mut d = descend(p, init, m, opts);
        total_iters += d.iterations;
        if !d.converged {
            worst_unconverged = Some(worst_unconverged.unwrap_or(0.0).max(d.rel_decrease));
        }
        // endpoints exact
        d.nodes[..m].copy_from_slice(a);
        d.nodes[(k - 1) * m..].copy_from_slice(b);
        let better = match &best {
            None => true,
            Some(cur) => d.value < cur.value || (d.value == cur.value && lex_less(&d.nodes, &cur.nodes)),
        };
        if better {
            best = Some(d);
        }
    }
    let best = best.expect("at least one start");
    if !best.converged {
        return Err(Error::NonConvergence {
            pair: None,
            iterations: total_iters,
            rel_decrease: worst_unconverged.unwrap_or(best.rel_decrease),
        });
    }
    Ok(Geodesic {
        distance: best.value,
        path: to_polyline(&best.nodes, m),
        iterations: total_iters,
    })
}

/// Minimized discrete length of a curve from `a` to `b` in the degenerate
/// metric, with the optimal polyline.
pub fn geodesic_distance(p: &Potential, a: &[f64], b: &[f64], k: usize, opts: &OptimizeOptions) -> Result<Geodesic> {
    geodesic_with_extra(p, a, b, k, opts, &[])
}

#[derive(Clone, Debug)]
pub struct TensionMatrix {
    omega: DMatrix<f64>,
    paths: BTreeMap<(usize, usize), Polyline>,
    iterations: BTreeMap<(usize, usize), usize>,
    immiscible: bool,
    margin: f64,
}

impl TensionMatrix {
    /// Tension matrix from explicit weights (no stored curves).
    pub fn from_omega(omega: DMatrix<f64>) -> Result<Self> {
        let (immiscible, margin) = check_immiscible(&omega)?;
        Ok(TensionMatrix {
            omega,
            paths: BTreeMap::new(),
            iterations: BTreeMap::new(),
            immiscible,
            margin,
        })
    }

    /// Unit weights `1 − δ_ij`.
    pub fn unit(n: usize) -> Self {
        let omega = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
        Self::from_omega(omega).expect("unit weights are valid")
    }

    pub fn n(&self) -> usize {
        self.omega.nrows()
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.omega[(i, j)]
    }

    pub fn immiscible(&self) -> bool {
        self.immiscible
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn has_paths(&self) -> bool {
        !self.paths.is_empty()
    }

    /// Stored curve from `p_i` to `p_j`.
    pub fn path(&self, i: usize, j: usize) -> Option<Polyline> {
        if i < j {
            self.paths.get(&(i, j)).cloned()
        } else {
            self.paths.get(&(j, i)).map(|p| p.iter().rev().cloned().collect())
        }
    }

    pub fn iterations(&self, i: usize, j: usize) -> usize {
        self.iterations.get(&(i.min(j), i.max(j))).copied().unwrap_or(0)
    }

    /// `min_l (ω_il + ω_lj − ω_ij)` for one pair; `+∞` when `N = 2`.
    pub fn pair_margin(&self, i: usize, j: usize) -> f64 {
        (0..self.n())
            .filter(|&l| l != i && l != j)
            .map(|l| self.omega[(i, l)] + self.omega[(l, j)] - self.omega[(i, j)])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Fills all pairwise tensions of `p`'s wells.
///
/// Each pair uses a straight start and `starts − 1` bent ones, plus one start
/// through every other well. If a concatenation through a third well still
/// beats the optimized curve, the concatenated polyline (2K−1 nodes) is kept,
/// so computed tensions always satisfy the non-strict triangle inequality.
pub fn tension_matrix(p: &Potential, k: usize, opts: &OptimizeOptions) -> Result<TensionMatrix> {
    let n = p.n_wells();
    let m = p.m();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let results: Vec<Result<((usize, usize), Geodesic)>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut o = *opts;
            o.seed = rng::substream(opts.seed, (i * n + j) as u64).next_seed();
            let through: Vec<Vec<f64>> = (0..n)
                .filter(|&l| l != i && l != j)
                .map(|l| {
                    let half = k / 2 + 1;
                    let mut a = straight(p.well(i), p.well(l), half);
                    let b = straight(p.well(l), p.well(j), k - half + 1);
                    a.extend_from_slice(&b[m..]);
                    a
                })
                .collect();
            geodesic_with_extra(p, p.well(i), p.well(j), k, &o, &through)
                .map(|g| ((i, j), g))
                .map_err(|e| match e {
                    Error::NonConvergence { iterations, rel_decrease, .. } => Error::NonConvergence {
                        pair: Some((i, j)),
                        iterations,
                        rel_decrease,
                    },
                    other => other,
                })
        })
        .collect();

    let mut omega = DMatrix::zeros(n, n);
    let mut paths = BTreeMap::new();
    let mut iterations = BTreeMap::new();
    for r in results {
        let ((i, j), g) = r?;
        omega[(i, j)] = g.distance;
        omega[(j, i)] = g.distance;
        paths.insert((i, j), g.path);
        iterations.insert((i, j), g.iterations);
    }
    // metric closure by concatenation
    loop {
        let mut changed = false;
        for &(i, j) in &pairs {
            for l in 0..n {
                if l == i || l == j {
                    continue;
                }
                let via = omega[(i, l)] + omega[(l, j)];
                if via < omega[(i, j)] {
                    let first = path_between(&paths, i, l);
                    let second = path_between(&paths, l, j);
                    let mut joined = first;
                    joined.extend(second.into_iter().skip(1));
                    omega[(i, j)] = via;
                    omega[(j, i)] = via;
                    paths.insert((i, j), joined);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let (immiscible, margin) = check_immiscible(&omega)?;
    Ok(TensionMatrix {
        omega,
        paths,
        iterations,
        immiscible,
        margin,
    })
}

fn path_between(paths: &BTreeMap<(usize, usize), Polyline>, i: usize, j: usize) -> Polyline {
    if i < j {
        paths[&(i, j)].clone()
    } else {
        paths[&(j, i)].iter().rev().cloned().collect()
    }
}

/// Strict triangle inequality test. Returns the status and the worst margin
/// `min (ω_il + ω_lj − ω_ij)` over triples with `l ∉ {i, j}`.
pub fn check_immiscible(omega: &DMatrix<f64>) -> Result<(bool, f64)> {
    let n = omega.nrows();
    if omega.ncols() != n {
        return Err(Error::Shape(format!("tension matrix is {}x{}", n, omega.ncols())));
    }
    let scale = omega.amax().max(1.0);
    for i in 0..n {
        if omega[(i, i)] != 0.0 {
            return Err(Error::Shape(format!("diagonal entry {} is nonzero", i + 1)));
        }
        for j in 0..n {
            let w = omega[(i, j)];
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Shape(format!("entry ({}, {}) = {w} is not a nonnegative number", i + 1, j + 1)));
            }
            if (w - omega[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Shape("tension matrix is not symmetric".into()));
            }
        }
    }
    let mut margin = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for l in 0..n {
                if l == i || l == j {
                    continue;
                }
                margin = margin.min(omega[(i, l)] + omega[(l, j)] - omega[(i, j)]);
            }
        }
    }
    Ok((margin > 0.0, margin))
}

trait NextSeed {
    fn next_seed(self) -> u64;
}

impl NextSeed for rng::Stream {
    fn next_seed(mut self) -> u64 {
        use rand::RngCore;
        self.next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> OptimizeOptions {
        OptimizeOptions::default()
    }

    #[test]
    fn double_well_tension_is_one_sixth() {
        let p = Potential::double_well();
        let g = geodesic_distance(&p, &[0.0], &[1.0], 256, &opts()).unwrap();
        assert!((g.distance - 1.0 / 6.0).abs() < 1e-4, "{}", g.distance);
        assert_eq!(g.path[0], vec![0.0]);
        assert_eq!(g.path[255], vec![1.0]);
    }

    #[test]
    fn equal_endpoints_give_zero() {
        let p = Potential::product_triple_well([1.0, 0.0], [0.0, 1.0]).unwrap();
        let g = geodesic_distance(&p, &[0.3, 0.2], &[0.3, 0.2], 32, &opts()).unwrap();
        assert_eq!(g.distance, 0.0);
        assert!(g.path.iter().all(|q| q == &vec![0.3, 0.2]));
    }

    #[test]
    fn rejects_negative_endpoint() {
        let p = Potential::double_well();
        assert!(matches!(
            geodesic_distance(&p, &[-0.1], &[1.0], 32, &opts()),
            Err(Error::InvalidEndpoint(_))
        ));
    }

    #[test]
    fn triple_well_below_straight_segment_bound() {
        // straight segment (0,0)->(1,0): ∫ t(1-t)√(1+t²) dt, by Simpson with 2000 panels
        let f = |t: f64| t * (1.0 - t) * (1.0 + t * t).sqrt();
        let n = 2000;
        let h = 1.0 / n as f64;
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let bound = s * h / 3.0;
        assert!((bound - 0.189317).abs() < 1e-6, "{bound}");
        let p = Potential::product_triple_well([1.0, 0.0], [0.0, 1.0]).unwrap();
        let g = geodesic_distance(&p, &[0.0, 0.0], &[1.0, 0.0], 128, &opts()).unwrap();
        assert!(g.distance <= bound + 1e-9, "{} > {bound}", g.distance);
        for q in &g.path {
            assert!(q.iter().all(|c| *c >= -1e-12));
        }
    }

    #[test]
    fn distance_symmetric_in_endpoints() {
        let p = Potential::product_triple_well([1.0, 0.2], [0.3, 1.0]).unwrap();
        let ab = geodesic_distance(&p, p.well(0), p.well(2), 64, &opts()).unwrap();
        let ba = geodesic_distance(&p, p.well(2), p.well(0), 64, &opts()).unwrap();
        assert!((ab.distance - ba.distance).abs() < 1e-8, "{} {}", ab.distance, ba.distance);
    }

    #[test]
    fn refinement_does_not_increase_distance() {
        let p = Potential::product_triple_well([1.0, 0.0], [0.0, 1.0]).unwrap();
        let coarse = geodesic_distance(&p, p.well(0), p.well(1), 32, &opts()).unwrap();
        let fine = geodesic_distance(&p, p.well(0), p.well(1), 64, &opts()).unwrap();
        assert!(fine.distance <= coarse.distance + 1e-8, "{} {}", fine.distance, coarse.distance);
    }

    #[test]
    fn symmetric_triple_well_matrix() {
        let p = Potential::product_triple_well([1.0, 0.0], [0.0, 1.0]).unwrap();
        let t = tension_matrix(&p, 64, &opts()).unwrap();
        assert!((t.get(0, 2) - t.get(1, 2)).abs() < 1e-6, "{}", t.omega());
        assert!(t.immiscible(), "{}", t.omega());
        assert_eq!(t.path(0, 1).unwrap()[0], vec![1.0, 0.0]);
        assert_eq!(t.path(1, 0).unwrap()[0], vec![0.0, 1.0]);
    }

    #[test]
    fn immiscibility_examples() {
        let m = |a: f64, b: f64, c: f64| DMatrix::from_row_slice(3, 3, &[0.0, a, b, a, 0.0, c, b, c, 0.0]);
        assert_eq!(check_immiscible(&m(1.0, 1.0, 1.0)).unwrap(), (true, 1.0));
        let (ok, margin) = check_immiscible(&m(2.5, 1.0, 1.0)).unwrap();
        assert!(!ok);
        assert!((margin + 0.5).abs() < 1e-15);
        assert_eq!(check_immiscible(&m(2.0, 1.0, 1.0)).unwrap(), (false, 0.0));
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(matches!(check_immiscible(&bad), Err(Error::Shape(_))));
        assert!(matches!(check_immiscible(&DMatrix::zeros(2, 3)), Err(Error::Shape(_))));
    }
}
