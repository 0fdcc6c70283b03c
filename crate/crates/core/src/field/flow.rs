use rayon::prelude::*;
use serde::Serialize;

use super::{
    energy_unchecked, gradient_unchecked, inner_b, mean_b, norm_b, project_in_place, ConformalMetric, Field,
};
use crate::error::{Error, Result};
use crate::potential::Potential;

#[derive(Clone, Copy, Debug)]
pub struct FlowOptions {
    /// target for `‖∇E(u) − Λ‖_{L²(b)}`
    pub tol: f64,
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant
    pub armijo: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            tol: 1e-8,
            max_iter: 200_000,
            armijo: 1e-4,
        }
    }
}

/// A volume-constrained critical point `∇E(u) = Λ`, `V(u) = v`.
#[derive(Clone, Debug)]
pub struct CriticalPoint {
    pub u: Field,
    pub eps: f64,
    pub lambda: Vec<f64>,
    pub energy: f64,
    pub residual_norm: f64,
    pub volume: Vec<f64>,
    pub iterations: usize,
    /// energy after every accepted step, starting with the projected seed
    pub energy_trace: Vec<f64>,
    /// `(nondegenerate, sigma_min)` once checked
    pub nondegenerate: Option<(bool, f64)>,
}

fn residual(grad: &Field, g: &ConformalMetric) -> (Field, Vec<f64>) {
    let lambda = mean_b(grad, g);
    let mut r = grad.clone();
    for (k, l) in lambda.iter().enumerate() {
        r.component_mut(k).iter_mut().for_each(|x| *x -= l);
    }
    (r, lambda)
}

/// Step-size bound from the stiffest modes: `2ε max(a/b) Σ 4/h² + max|∇²W|/ε`.
fn step_guess(u: &Field, eps: f64, p: &Potential, g: &ConformalMetric) -> f64 {
    let grid = g.grid();
    let ratio = g.a().iter().zip(g.b()).map(|(a, b)| a / b).fold(0.0, f64::max);
    let lap: f64 = (0..grid.dim()).map(|k| 4.0 / (grid.h(k) * grid.h(k))).sum();
    let m = u.m();
    let mut h = vec![0.0; m * m];
    let mut hmax: f64 = 0.0;
    let n = grid.len();
    let mut z = vec![0.0; m];
    for c in (0..n).step_by((n / 256).max(1)) {
        for k in 0..m {
            z[k] = u.values()[k * n + c];
        }
        p.hessian_into(&z, &mut h);
        hmax = hmax.max(h.iter().map(|x| x.abs()).sum());
    }
    1.0 / (2.0 * eps * ratio * lap + hmax.max(1.0) / eps)
}

/// Projected gradient descent on `{V(u) = v}`.
///
/// The step direction is the gradient minus its componentwise `b`-mean, the
/// `L²(b)` projection onto the constraint's tangent space. Steps use a
/// Barzilai–Borwein length with Armijo backtracking on the energy. Once the
/// predicted decrease falls below the rounding level of `E`, a step is also
/// accepted if it lowers the residual without raising `E` beyond that level.
pub fn constrained_flow(
    u0: &Field,
    eps: f64,
    v: &[f64],
    p: &Potential,
    g: &ConformalMetric,
    opts: &FlowOptions,
) -> Result<CriticalPoint> {
    u0.grid().same_as(g.grid())?;
    if v.len() != u0.m() || u0.m() != p.m() {
        return Err(Error::Shape(format!(
            "field has {} components, volume {}, potential {}",
            u0.m(),
            v.len(),
            p.m()
        )));
    }
    if !u0.is_finite() || v.iter().any(|x| !x.is_finite()) || !(eps > 0.0) {
        return Err(Error::Shape("non-finite seed, volume or epsilon".into()));
    }
    let mut u = u0.clone();
    project_in_place(&mut u, v, g);
    let mut e = energy_unchecked(&u, eps, p, g);
    if !e.is_finite() {
        return Err(Error::Blowup(0));
    }
    let mut grad = gradient_unchecked(&u, eps, p, g);
    let (mut r, mut lambda) = residual(&grad, g);
    let mut res = norm_b(&r, g);
    let mut alpha = step_guess(&u, eps, p, g);
    let alpha_min = alpha * 1e-6;
    let alpha_max = alpha * 1e6;
    let mut trace = vec![e];
    let mut it = 0;
    while res > opts.tol && it < opts.max_iter {
        it += 1;
        let mut step = alpha;
        let mut accepted = None;
        for _ in 0..50 {
            let mut trial = u.clone();
            trial.axpy(-step, &r);
            project_in_place(&mut trial, v, g);
            let e_trial = energy_unchecked(&trial, eps, p, g);
            if !e_trial.is_finite() {
                step *= 0.5;
                continue;
            }
            let predicted = opts.armijo * step * res * res;
            let noise = 64.0 * f64::EPSILON * e.abs().max(1e-300);
            if e_trial <= e - predicted {
                accepted = Some((trial, e_trial));
                break;
            }
            if predicted < noise && e_trial <= e + noise {
                let g_trial = gradient_unchecked(&trial, eps, p, g);
                let (r_trial, _) = residual(&g_trial, g);
                if norm_b(&r_trial, g) < res {
                    accepted = Some((trial, e_trial));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((u_new, e_new)) = accepted else {
            if !e.is_finite() {
                return Err(Error::Blowup(it));
            }
            break;
        };
        let grad_new = gradient_unchecked(&u_new, eps, p, g);
        let (r_new, lambda_new) = residual(&grad_new, g);
        let mut s = u_new.clone();
        s.axpy(-1.0, &u);
        let mut y = r_new.clone();
        y.axpy(-1.0, &r);
        let sy = inner_b(&s, &y, g);
        let ss = inner_b(&s, &s, g);
        alpha = if sy > 0.0 {
            (ss / sy).clamp(alpha_min, alpha_max)
        } else {
            (step * 2.0).min(alpha_max)
        };
        u = u_new;
        e = e_new;
        grad = grad_new;
        r = r_new;
        lambda = lambda_new;
        res = norm_b(&r, g);
        trace.push(e);
    }
    let _ = grad;
    let cp = CriticalPoint {
        volume: super::volume_unchecked(&u, g),
        u,
        eps,
        lambda,
        energy: e,
        residual_norm: res,
        iterations: it,
        energy_trace: trace,
        nondegenerate: None,
    };
    if cp.residual_norm > opts.tol {
        return Err(Error::FlowNonConvergence {
            iterations: it,
            partial: Box::new(cp),
        });
    }
    Ok(cp)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct HuntOptions {
    pub flow: FlowOptions,
    /// `L²(b)` distance below which two critical points are identified;
    /// defaults to `1e-3 √vol`.
    pub dedup_tol: Option<f64>,
}


#[derive(Clone, Debug, Serialize)]
pub struct SeedOutcome {
    pub seed: usize,
    pub converged: bool,
    pub residual: f64,
    pub energy: f64,
    /// index into `HuntResult::points` for converged seeds
    pub class: Option<usize>,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct HuntResult {
    /// distinct critical points sorted by energy
    pub points: Vec<CriticalPoint>,
    pub eta: usize,
    pub dropped: usize,
    pub seeds: Vec<SeedOutcome>,
}

/// Runs the constrained flow from each seed and counts distinct critical
/// points. On a flat metric distances are minimized over grid translations.
pub fn hunt(
    p: &Potential,
    g: &ConformalMetric,
    eps: f64,
    v: &[f64],
    seeds: &[Field],
    opts: &HuntOptions,
) -> Result<HuntResult> {
    if seeds.is_empty() {
        return Err(Error::Shape("hunt needs at least one seed".into()));
    }
    let outcomes: Vec<Result<CriticalPoint>> = seeds
        .par_iter()
        .map(|s| constrained_flow(s, eps, v, p, g, &opts.flow))
        .collect();
    let tol = opts.dedup_tol.unwrap_or(1e-3 * g.total_volume().sqrt());
    let mut points: Vec<CriticalPoint> = Vec::new();
    let mut seeds_report = Vec::new();
    let mut dropped = 0;
    for (i, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(cp) => {
                let class = points.iter().position(|q| aligned_distance(&q.u, &cp.u, g) <= tol);
                let class = match class {
                    Some(c) => c,
                    None => {
                        points.push(cp.clone());
                        points.len() - 1
                    }
                };
                seeds_report.push(SeedOutcome {
                    seed: i,
                    converged: true,
                    residual: cp.residual_norm,
                    energy: cp.energy,
                    class: Some(class),
                    iterations: cp.iterations,
                });
            }
            Err(Error::FlowNonConvergence { iterations, partial }) => {
                dropped += 1;
                seeds_report.push(SeedOutcome {
                    seed: i,
                    converged: false,
                    residual: partial.residual_norm,
                    energy: partial.energy,
                    class: None,
                    iterations,
                });
            }
            Err(e) => return Err(e),
        }
    }
    // sort by energy, remapping classes
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].energy.total_cmp(&points[b].energy));
    let mut rank = vec![0; points.len()];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    for s in &mut seeds_report {
        s.class = s.class.map(|c| rank[c]);
    }
    let sorted: Vec<CriticalPoint> = order.iter().map(|&i| points[i].clone()).collect();
    Ok(HuntResult {
        eta: sorted.len(),
        points: sorted,
        dropped,
        seeds: seeds_report,
    })
}

/// `L²(b)` distance, minimized over whole-cell translations when the metric
/// is flat. Translations are searched on a coarse stride of
/// `max(1, shape/32)` cells, then refined in the surrounding window.
pub fn aligned_distance(a: &Field, b: &Field, g: &ConformalMetric) -> f64 {
    let grid = g.grid();
    let dv = grid.cell_volume();
    let direct = {
        let mut d = a.clone();
        d.axpy(-1.0, b);
        norm_b(&d, g)
    };
    if !g.is_flat() {
        return direct;
    }
    // translation cannot beat the difference of norms
    let (na, nb) = (norm_b(a, g), norm_b(b, g));
    if direct <= (na - nb).abs() * (1.0 + 1e-12) {
        return direct;
    }
    let dim = grid.dim();
    let shape = grid.shape().to_vec();
    let strides: Vec<usize> = shape.iter().map(|s| (s / 32).max(1)).collect();
    let n = grid.len();
    let m = a.m();
    let dist2_at = |off: &[isize]| -> f64 {
        let mut s = 0.0;
        for c in 0..n {
            let d = grid.shifted(c, off);
            for k in 0..m {
                let x = a.values()[k * n + d] - b.values()[k * n + c];
                s += x * x;
            }
        }
        s * dv
    };
    let mut best = (direct * direct, vec![0isize; dim]);
    let coarse: Vec<Vec<isize>> = lattice(&shape, &strides);
    for off in coarse {
        let d = dist2_at(&off);
        if d < best.0 {
            best = (d, off);
        }
    }
    let center = best.1.clone();
    let window: Vec<isize> = strides.iter().map(|s| *s as isize).collect();
    for off in box_offsets(&center, &window) {
        let d = dist2_at(&off);
        if d < best.0 {
            best = (d, off);
        }
    }
    best.0.sqrt()
}

fn lattice(shape: &[usize], strides: &[usize]) -> Vec<Vec<isize>> {
    let mut out = vec![vec![]];
    for (s, st) in shape.iter().zip(strides) {
        let mut next = Vec::new();
        for prefix in &out {
            for i in (0..*s).step_by(*st) {
                let mut p = prefix.clone();
                p.push(i as isize);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn box_offsets(center: &[isize], half: &[isize]) -> Vec<Vec<isize>> {
    let mut out = vec![vec![]];
    for (c, h) in center.iter().zip(half) {
        let mut next = Vec::new();
        for prefix in &out {
            for d in -h..=*h {
                let mut p = prefix.clone();
                p.push(c + d);
                next.push(p);
            }
        }
        out = next;
    }
    out
}
