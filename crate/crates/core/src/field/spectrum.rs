use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::{inner_b, linearized_unchecked, norm_b, remove_mean, ConformalMetric, CriticalPoint, Field};
use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::rng;

#[derive(Clone, Debug, Serialize)]
pub struct NondegeneracyReport {
    pub nondegenerate: bool,
    /// smallest-magnitude Ritz value of the constrained second variation
    pub sigma_min: f64,
    /// `‖L y − θ y‖_b` for that Ritz pair
    pub residual: f64,
    pub floor: f64,
    pub steps: usize,
    /// the Ritz pair had not converged when the Krylov budget ran out
    pub stalled: bool,
}

/// Lanczos estimate of the smallest-magnitude eigenvalue of the second
/// variation on zero-mean fields, with floor `1e-6/ε`.
pub fn nondegeneracy_check(cp: &CriticalPoint, p: &Potential, g: &ConformalMetric, k: usize) -> Result<NondegeneracyReport> {
    nondegeneracy_check_with(cp, p, g, k, 1e-6 / cp.eps)
}

pub fn nondegeneracy_check_with(
    cp: &CriticalPoint,
    p: &Potential,
    g: &ConformalMetric,
    k: usize,
    floor: f64,
) -> Result<NondegeneracyReport> {
    cp.u.grid().same_as(g.grid())?;
    if cp.u.m() != p.m() {
        return Err(Error::Shape(format!("field has {} components, potential {}", cp.u.m(), p.m())));
    }
    let dim = g.grid().len() * cp.u.m();
    // constants are deflated, leaving dim − m directions
    let k = k.clamp(1, dim - cp.u.m());
    let apply = |w: &Field| {
        let mut out = linearized_unchecked(&cp.u, w, cp.eps, p, g);
        remove_mean(&mut out, g);
        out
    };

    let mut rng = rng::stream(0);
    let start = (0..dim).map(|_| rng::uniform(&mut rng, -1.0, 1.0)).collect();
    let mut q = Field::from_values(g.grid(), cp.u.m(), start)?;
    remove_mean(&mut q, g);
    q.scale(1.0 / norm_b(&q, g));

    let mut basis: Vec<Field> = vec![q];
    let mut alpha = Vec::with_capacity(k);
    let mut beta: Vec<f64> = Vec::with_capacity(k);
    let mut last_r = None;
    for j in 0..k {
        let mut r = apply(&basis[j]);
        let a = inner_b(&basis[j], &r, g);
        alpha.push(a);
        // full reorthogonalization, twice
        for _ in 0..2 {
            for qi in &basis {
                let c = inner_b(qi, &r, g);
                r.axpy(-c, qi);
            }
        }
        remove_mean(&mut r, g);
        let b = norm_b(&r, g);
        if j + 1 == k || b <= 1e-14 * a.abs().max(1.0) {
            beta.push(b);
            last_r = Some(b);
            break;
        }
        beta.push(b);
        r.scale(1.0 / b);
        basis.push(r);
    }
    let steps = alpha.len();
    let mut t = DMatrix::zeros(steps, steps);
    for i in 0..steps {
        t[(i, i)] = alpha[i];
        if i + 1 < steps {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (idx, theta) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("at least one Lanczos step");
    let tail = beta[steps - 1];
    let residual = if last_r.is_some() { tail * eig.eigenvectors[(steps - 1, idx)].abs() } else { 0.0 };
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let sigma_min = theta.abs();
    Ok(NondegeneracyReport {
        nondegenerate: sigma_min > floor,
        sigma_min,
        residual,
        floor,
        steps,
        stalled: residual > 1e-6 * scale,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DegenerateMode {
    pub eps: f64,
    /// representative wave vector `(n₁, …, nₙ)` with nonnegative entries
    pub mode: Vec<i64>,
    /// Laplacian eigenvalue `4π² Σ (n_k/L_k)²`
    pub alpha: f64,
    /// negative eigenvalue of `∇²W` at the constant
    pub mu: f64,
}

/// Values of ε at which the constant state `v/vol` has a kernel in the
/// constrained second variation, largest first.
///
/// The second variation of the discrete energy at a constant is
/// `−2εΔ + ε⁻¹∇²W`, so a Laplacian eigenvalue `α` and a Hessian eigenvalue
/// `μ < 0` give `ε² = −μ/(2α)`. Wave vectors range over `0 ≤ n_k ≤ modes`;
/// equal eigenvalues `α` are reported once.
pub fn degeneracy_scan(
    p: &Potential,
    v: &[f64],
    g: &ConformalMetric,
    eps_range: (f64, f64),
    modes: usize,
) -> Result<Vec<DegenerateMode>> {
    if !g.is_flat() {
        return Err(Error::InvalidGrid("degeneracy scan needs a flat metric".into()));
    }
    if v.len() != p.m() {
        return Err(Error::Shape(format!("volume has {} entries, potential {}", v.len(), p.m())));
    }
    let grid = g.grid();
    let vol = g.total_volume();
    let c: Vec<f64> = v.iter().map(|x| x / vol).collect();
    let (_, _, h) = p.evaluate(&c);
    let mus: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().filter(|m| *m < 0.0).collect();
    if mus.is_empty() {
        return Ok(Vec::new());
    }

    let mut alphas: Vec<(f64, Vec<i64>)> = Vec::new();
    let mut idx = vec![0i64; grid.dim()];
    loop {
        if idx.iter().any(|&n| n != 0) {
            let a: f64 = idx
                .iter()
                .zip(grid.lengths())
                .map(|(&n, l)| (n as f64 / l).powi(2))
                .sum::<f64>()
                * 4.0
                * PI
                * PI;
            if !alphas.iter().any(|(b, _)| (a - b).abs() <= 1e-12 * a) {
                alphas.push((a, idx.clone()));
            }
        }
        // odometer over [0, modes]^n
        let mut k = 0;
        while k < idx.len() {
            idx[k] += 1;
            if idx[k] as usize <= modes {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == idx.len() {
            break;
        }
    }

    let (lo, hi) = (eps_range.0.min(eps_range.1), eps_range.0.max(eps_range.1));
    let mut out = Vec::new();
    for &mu in &mus {
        for (alpha, mode) in &alphas {
            let eps = (-mu / (2.0 * alpha)).sqrt();
            if eps >= lo && eps <= hi {
                out.push(DegenerateMode {
                    eps,
                    mode: mode.clone(),
                    alpha: *alpha,
                    mu,
                });
            }
        }
    }
    out.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{constrained_flow, FlowOptions, TorusGrid};

    fn constant_point(grid: &TorusGrid, value: f64, eps: f64, p: &Potential) -> CriticalPoint {
        let g = ConformalMetric::flat(grid);
        let u = Field::constant(grid, &[value]);
        constrained_flow(&u, eps, &[value], p, &g, &FlowOptions::default()).unwrap()
    }

    #[test]
    fn scan_in_one_dimension() {
        let grid = TorusGrid::unit(&[16]).unwrap();
        let g = ConformalMetric::flat(&grid);
        let p = Potential::double_well();
        let modes = degeneracy_scan(&p, &[0.5], &g, (0.0, 1.0), 3).unwrap();
        assert_eq!(modes.len(), 3);
        for (j, m) in modes.iter().enumerate() {
            let n = (j + 1) as f64;
            assert!((m.alpha - 4.0 * PI * PI * n * n).abs() < 1e-9);
            assert!((m.mu + 1.0).abs() < 1e-12);
            assert!((m.eps - 1.0 / (2.0 * PI * n * 2f64.sqrt())).abs() < 1e-14);
        }
    }

    #[test]
    fn scan_at_a_well_is_empty() {
        let grid = TorusGrid::unit(&[16, 16]).unwrap();
        let g = ConformalMetric::flat(&grid);
        let p = Potential::double_well();
        assert!(degeneracy_scan(&p, &[1.0], &g, (0.0, 1.0), 3).unwrap().is_empty());
        let bump = ConformalMetric::parse("bump:0.1,0", &grid).unwrap();
        assert!(degeneracy_scan(&p, &[0.5], &bump, (0.0, 1.0), 3).is_err());
    }

    #[test]
    fn well_is_nondegenerate() {
        let grid = TorusGrid::unit(&[16, 16]).unwrap();
        let g = ConformalMetric::flat(&grid);
        let p = Potential::double_well();
        let eps = 0.1;
        let cp = constant_point(&grid, 1.0, eps, &p);
        let rep = nondegeneracy_check(&cp, &p, &g, 120).unwrap();
        assert!(rep.nondegenerate);
        assert!(rep.sigma_min >= 2.0 / eps * (1.0 - 1e-10), "{}", rep.sigma_min);
    }

    #[test]
    fn kernel_at_scanned_eps() {
        let grid = TorusGrid::unit(&[32]).unwrap();
        let g = ConformalMetric::flat(&grid);
        let p = Potential::double_well();
        // discrete Laplacian eigenvalue for the first mode
        let h = grid.h(0);
        let lam = 4.0 / (h * h) * (PI * h).sin().powi(2);
        let eps = (1.0 / (2.0 * lam)).sqrt();
        let cp = constant_point(&grid, 0.5, eps, &p);
        let rep = nondegeneracy_check(&cp, &p, &g, 40).unwrap();
        assert!(rep.sigma_min < 1e-8, "{rep:?}");
        assert!(!rep.nondegenerate);
    }
}
