//! Vector fields on periodic grids and the discrete phase-field energy
//!
//! `E(u) = Σ_cells [ ε a |D⁺u|² + ε⁻¹ b W(u) ] · ΔV`
//!
//! with `D⁺` the periodic forward difference. Gradients are taken in the
//! `L²(b dx)` inner product and use the exact adjoint of `D⁺`, so
//! `⟨∇E(u), w⟩_b` is the directional derivative of the discrete energy.

mod flow;
mod grid;
pub mod spectrum;

pub use flow::{constrained_flow, hunt, CriticalPoint, FlowOptions, HuntOptions, HuntResult};
pub use grid::{ConformalMetric, TorusGrid, RHO_MIN};
pub use spectrum::{
    degeneracy_scan, nondegeneracy_check, nondegeneracy_check_with, DegenerateMode, NondegeneracyReport,
};

use crate::error::{Error, Result};
use crate::potential::Potential;

/// `m` components sampled per cell, component-major then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: TorusGrid,
    m: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &TorusGrid, m: usize) -> Self {
        Field {
            grid: grid.clone(),
            m,
            values: vec![0.0; m * grid.len()],
        }
    }

    pub fn constant(grid: &TorusGrid, value: &[f64]) -> Self {
        let n = grid.len();
        let mut values = Vec::with_capacity(value.len() * n);
        for v in value {
            values.extend(std::iter::repeat_n(*v, n));
        }
        Field {
            grid: grid.clone(),
            m: value.len(),
            values,
        }
    }

    pub fn from_values(grid: &TorusGrid, m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != m * grid.len() {
            return Err(Error::Shape(format!(
                "{} values for {} components on {} cells",
                values.len(),
                m,
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("field samples must be finite".into()));
        }
        Ok(Field {
            grid: grid.clone(),
            m,
            values,
        })
    }

    /// Field whose value at each cell center is `f(x)`.
    pub fn from_fn(grid: &TorusGrid, m: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let n = grid.len();
        let mut values = vec![0.0; m * n];
        for c in 0..n {
            let v = f(&grid.center(c));
            for k in 0..m {
                values[k * n + c] = v[k];
            }
        }
        Field {
            grid: grid.clone(),
            m,
            values,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn component(&self, k: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn component_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.values[k * n..(k + 1) * n]
    }

    /// Value at one cell.
    pub fn at(&self, cell: usize) -> Vec<f64> {
        let n = self.grid.len();
        (0..self.m).map(|k| self.values[k * n + cell]).collect()
    }

    pub fn set(&mut self, cell: usize, value: &[f64]) {
        let n = self.grid.len();
        for k in 0..self.m {
            self.values[k * n + cell] = value[k];
        }
    }

    /// Cyclic shift by whole cells: `out(c + offset) = self(c)`.
    pub fn translated(&self, offset: &[isize]) -> Field {
        let n = self.grid.len();
        let mut out = Field::zeros(&self.grid, self.m);
        for c in 0..n {
            let d = self.grid.shifted(c, offset);
            for k in 0..self.m {
                out.values[k * n + d] = self.values[k * n + c];
            }
        }
        out
    }

    pub fn axpy(&mut self, alpha: f64, other: &Field) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check(&self, g: &ConformalMetric) -> Result<()> {
        self.grid.same_as(g.grid())
    }
}

/// `⟨f, h⟩_b = Σ b f·h ΔV`.
pub fn inner_b(f: &Field, h: &Field, g: &ConformalMetric) -> f64 {
    let n = g.grid().len();
    let b = g.b();
    let mut s = 0.0;
    for k in 0..f.m {
        let (fc, hc) = (f.component(k), h.component(k));
        for c in 0..n {
            s += b[c] * fc[c] * hc[c];
        }
    }
    s * g.grid().cell_volume()
}

pub fn norm_b(f: &Field, g: &ConformalMetric) -> f64 {
    inner_b(f, f, g).sqrt()
}

/// Componentwise `b`-weighted mean.
pub fn mean_b(f: &Field, g: &ConformalMetric) -> Vec<f64> {
    let vol = g.total_volume();
    volume_unchecked(f, g).into_iter().map(|v| v / vol).collect()
}

fn volume_unchecked(u: &Field, g: &ConformalMetric) -> Vec<f64> {
    let b = g.b();
    let dv = g.grid().cell_volume();
    (0..u.m)
        .map(|k| u.component(k).iter().zip(b).map(|(x, w)| x * w).sum::<f64>() * dv)
        .collect()
}

/// Vectorial volume `(∫u₁ b, …, ∫u_m b)`.
pub fn volume(u: &Field, g: &ConformalMetric) -> Result<Vec<f64>> {
    u.check(g)?;
    Ok(volume_unchecked(u, g))
}

/// Adds `coef · Σ_k (a_{c−e_k} D_k f(c−e_k) − a_c D_k f(c)) / h_k` to `out`,
/// i.e. `coef · div(a ∇f)` in the adjoint discretization.
fn add_div_a_grad(f: &[f64], g: &ConformalMetric, coef: f64, out: &mut [f64]) {
    let grid = g.grid();
    let a = g.a();
    let n = grid.len();
    for axis in 0..grid.dim() {
        let inv_h2 = coef / (grid.h(axis) * grid.h(axis));
        let stride = grid.stride(axis);
        let len = grid.shape()[axis];
        let span = stride * len;
        // walk lines along `axis`
        for c in 0..n {
            let i = (c / stride) % len;
            let up = if i + 1 == len { c + stride - span } else { c + stride };
            let dn = if i == 0 { c + span - stride } else { c - stride };
            let flux_out = a[c] * (f[up] - f[c]);
            let flux_in = a[dn] * (f[c] - f[dn]);
            out[c] += inv_h2 * (flux_out - flux_in);
        }
    }
}

fn dirichlet_sum(f: &[f64], g: &ConformalMetric) -> f64 {
    let grid = g.grid();
    let a = g.a();
    let mut s = 0.0;
    for axis in 0..grid.dim() {
        let inv_h2 = 1.0 / (grid.h(axis) * grid.h(axis));
        let mut t = 0.0;
        for c in 0..grid.len() {
            let d = f[grid.next(c, axis)] - f[c];
            t += a[c] * d * d;
        }
        s += t * inv_h2;
    }
    s
}

/// Discrete energy `Σ [ε a |D⁺u|² + ε⁻¹ b W(u)] ΔV`.
pub fn energy(u: &Field, eps: f64, p: &Potential, g: &ConformalMetric) -> Result<f64> {
    u.check(g)?;
    if u.m != p.m() {
        return Err(Error::Shape(format!("field has {} components, potential {}", u.m, p.m())));
    }
    Ok(energy_unchecked(u, eps, p, g))
}

pub(crate) fn energy_unchecked(u: &Field, eps: f64, p: &Potential, g: &ConformalMetric) -> f64 {
    let grid = g.grid();
    let n = grid.len();
    let dirichlet: f64 = (0..u.m).map(|k| dirichlet_sum(u.component(k), g)).sum();
    let b = g.b();
    let mut pot = 0.0;
    let mut z = vec![0.0; u.m];
    for c in 0..n {
        for k in 0..u.m {
            z[k] = u.values[k * n + c];
        }
        pot += b[c] * p.value(&z);
    }
    (eps * dirichlet + pot / eps) * grid.cell_volume()
}

/// `L²(b)` gradient of the discrete energy:
/// `−2ε b⁻¹ div(a ∇u) + ε⁻¹ ∇W(u)`.
pub fn energy_gradient(u: &Field, eps: f64, p: &Potential, g: &ConformalMetric) -> Result<Field> {
    u.check(g)?;
    if u.m != p.m() {
        return Err(Error::Shape(format!("field has {} components, potential {}", u.m, p.m())));
    }
    Ok(gradient_unchecked(u, eps, p, g))
}

pub(crate) fn gradient_unchecked(u: &Field, eps: f64, p: &Potential, g: &ConformalMetric) -> Field {
    let n = g.grid().len();
    let m = u.m;
    let mut out = Field::zeros(&u.grid, m);
    for k in 0..m {
        add_div_a_grad(u.component(k), g, -2.0 * eps, out.component_mut(k));
    }
    let b = g.b();
    let inv_eps = 1.0 / eps;
    let mut z = vec![0.0; m];
    let mut gw = vec![0.0; m];
    for c in 0..n {
        for k in 0..m {
            z[k] = u.values[k * n + c];
        }
        p.gradient_into(&z, &mut gw);
        let ib = 1.0 / b[c];
        for k in 0..m {
            let v = &mut out.values[k * n + c];
            *v = *v * ib + inv_eps * gw[k];
        }
    }
    out
}

/// Second variation of the discrete energy applied to `w`:
/// `−2ε b⁻¹ div(a ∇w) + ε⁻¹ ∇²W(u) w`. Self-adjoint in `⟨·,·⟩_b`.
pub fn linearized_apply(u: &Field, w: &Field, eps: f64, p: &Potential, g: &ConformalMetric) -> Result<Field> {
    u.check(g)?;
    w.check(g)?;
    if u.m != p.m() || w.m != u.m {
        return Err(Error::Shape("component counts differ".into()));
    }
    Ok(linearized_unchecked(u, w, eps, p, g))
}

pub(crate) fn linearized_unchecked(u: &Field, w: &Field, eps: f64, p: &Potential, g: &ConformalMetric) -> Field {
    let n = g.grid().len();
    let m = u.m;
    let mut out = Field::zeros(&u.grid, m);
    for k in 0..m {
        add_div_a_grad(w.component(k), g, -2.0 * eps, out.component_mut(k));
    }
    let b = g.b();
    let inv_eps = 1.0 / eps;
    let mut z = vec![0.0; m];
    let mut h = vec![0.0; m * m];
    for c in 0..n {
        for k in 0..m {
            z[k] = u.values[k * n + c];
        }
        p.hessian_into(&z, &mut h);
        let ib = 1.0 / b[c];
        for r in 0..m {
            let mut hw = 0.0;
            for s in 0..m {
                hw += h[r * m + s] * w.values[s * n + c];
            }
            let v = &mut out.values[r * n + c];
            *v = *v * ib + inv_eps * hw;
        }
    }
    out
}

/// Shifts `u` by a constant so that its volume equals `v` exactly.
pub fn project_volume(u: &Field, v: &[f64], g: &ConformalMetric) -> Result<Field> {
    u.check(g)?;
    if v.len() != u.m {
        return Err(Error::Shape(format!("volume has {} components, field {}", v.len(), u.m)));
    }
    let mut out = u.clone();
    project_in_place(&mut out, v, g);
    Ok(out)
}

pub(crate) fn project_in_place(u: &mut Field, v: &[f64], g: &ConformalMetric) {
    let vol = g.total_volume();
    // second pass removes the rounding left by the first
    for _ in 0..2 {
        let cur = volume_unchecked(u, g);
        for k in 0..u.m {
            let shift = (v[k] - cur[k]) / vol;
            if shift != 0.0 {
                u.component_mut(k).iter_mut().for_each(|x| *x += shift);
            }
        }
    }
}

/// Removes the componentwise `b`-mean.
pub(crate) fn remove_mean(f: &mut Field, g: &ConformalMetric) {
    let mu = mean_b(f, g);
    for (k, m) in mu.into_iter().enumerate() {
        f.component_mut(k).iter_mut().for_each(|x| *x -= m);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn random_field(grid: &TorusGrid, m: usize, seed: u64, lo: f64, hi: f64) -> Field {
        let mut s = rng::stream(seed);
        let values = (0..m * grid.len()).map(|_| rng::uniform(&mut s, lo, hi)).collect();
        Field::from_values(grid, m, values).unwrap()
    }

    #[test]
    fn energy_of_constants() {
        let grid = TorusGrid::unit(&[16, 16]).unwrap();
        let g = ConformalMetric::flat(&grid);
        let p = Potential::double_well();
        assert_eq!(energy(&Field::constant(&grid, &[1.0]), 0.1, &p, &g).unwrap(), 0.0);
        let e = energy(&Field::constant(&grid, &[0.3]), 0.1, &p, &g).unwrap();
        assert!((e - p.value(&[0.3]) / 0.1).abs() < 1e-14);
    }

    #[test]
    fn volumes() {
        let grid = TorusGrid::unit(&[16, 16]).unwrap();
        let g = ConformalMetric::flat(&grid);
        let v = volume(&Field::constant(&grid, &[0.3, 0.2]), &g).unwrap();
        assert!((v[0] - 0.3).abs() < 1e-14 && (v[1] - 0.2).abs() < 1e-14);
        assert_eq!(volume(&Field::zeros(&grid, 2), &g).unwrap(), vec![0.0, 0.0]);
        let half = Field::from_fn(&grid, 2, |x| if x[0] < 0.5 { vec![1.0, 0.0] } else { vec![0.0, 0.0] });
        assert_eq!(volume(&half, &g).unwrap(), vec![0.5, 0.0]);
    }

    #[test]
    fn gradient_of_constants() {
        let grid = TorusGrid::unit(&[16, 16]).unwrap();
        let g = ConformalMetric::flat(&grid);
        let p = Potential::product_triple_well([1.0, 0.0], [0.0, 1.0]).unwrap();
        let gr = energy_gradient(&Field::constant(&grid, &[1.0, 0.0]), 0.1, &p, &g).unwrap();
        assert!(gr.values().iter().all(|v| *v == 0.0));
        let c = [0.3, 0.4];
        let gr = energy_gradient(&Field::constant(&grid, &c), 0.1, &p, &g).unwrap();
        let mut expect = vec![0.0; 2];
        p.gradient_into(&c, &mut expect);
        for cell in 0..grid.len() {
            let at = gr.at(cell);
            assert!((at[0] - expect[0] / 0.1).abs() < 1e-12 && (at[1] - expect[1] / 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_directional_derivative_bumped() {
        let grid = TorusGrid::new(&[16, 12], &[1.0, 0.75]).unwrap();
        let g = ConformalMetric::parse("bump:0.3,0.1", &grid).unwrap();
        let p = Potential::product_triple_well([1.0, 0.0], [0.0, 1.0]).unwrap();
        for seed in 0..5 {
            let u = random_field(&grid, 2, seed, -0.5, 1.5);
            let w = random_field(&grid, 2, 100 + seed, -1.0, 1.0);
            let eps = 0.07;
            let grad = energy_gradient(&u, eps, &p, &g).unwrap();
            let exact = inner_b(&grad, &w, &g);
            let t = 1e-5;
            let mut up = u.clone();
            up.axpy(t, &w);
            let mut um = u.clone();
            um.axpy(-t, &w);
            let fd = (energy(&up, eps, &p, &g).unwrap() - energy(&um, eps, &p, &g).unwrap()) / (2.0 * t);
            assert!((fd - exact).abs() <= 1e-6 * exact.abs(), "{fd} vs {exact}");
        }
    }

    #[test]
    fn linearized_matches_gradient_derivative_and_is_symmetric() {
        let grid = TorusGrid::unit(&[16, 16]).unwrap();
        let g = ConformalMetric::parse("prod:0.2", &grid).unwrap();
        let p = Potential::double_well();
        let eps = 0.1;
        let u = random_field(&grid, 1, 1, -0.2, 1.2);
        let w1 = random_field(&grid, 1, 2, -1.0, 1.0);
        let w2 = random_field(&grid, 1, 3, -1.0, 1.0);
        let l1 = linearized_apply(&u, &w1, eps, &p, &g).unwrap();
        let l2 = linearized_apply(&u, &w2, eps, &p, &g).unwrap();
        let lhs = inner_b(&l1, &w2, &g);
        let rhs = inner_b(&w1, &l2, &g);
        assert!((lhs - rhs).abs() <= 1e-10 * norm_b(&w1, &g) * norm_b(&w2, &g));
        // derivative of the gradient along w1
        let t = 1e-6;
        let mut up = u.clone();
        up.axpy(t, &w1);
        let mut um = u.clone();
        um.axpy(-t, &w1);
        let mut fd = energy_gradient(&up, eps, &p, &g).unwrap();
        fd.axpy(-1.0, &energy_gradient(&um, eps, &p, &g).unwrap());
        fd.scale(1.0 / (2.0 * t));
        let mut diff = fd.clone();
        diff.axpy(-1.0, &l1);
        assert!(norm_b(&diff, &g) <= 1e-5 * norm_b(&l1, &g));
    }

    #[test]
    fn linearized_on_constant_well() {
        let grid = TorusGrid::unit(&[8, 8]).unwrap();
        let g = ConformalMetric::flat(&grid);
        let p = Potential::product_triple_well([1.0, 0.0], [0.0, 1.0]).unwrap();
        let u = Field::constant(&grid, &[1.0, 0.0]);
        let w = Field::constant(&grid, &[0.5, -0.25]);
        let lw = linearized_apply(&u, &w, 0.2, &p, &g).unwrap();
        // Hessian at p1 is 4I
        for c in 0..grid.len() {
            let v = lw.at(c);
            assert!((v[0] - 4.0 * 0.5 / 0.2).abs() < 1e-12 && (v[1] + 4.0 * 0.25 / 0.2).abs() < 1e-12);
        }
        let zero = linearized_apply(&u, &Field::zeros(&grid, 2), 0.2, &p, &g).unwrap();
        assert!(zero.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn projection_is_exact() {
        let grid = TorusGrid::unit(&[16, 16]).unwrap();
        let g = ConformalMetric::parse("prod:0.3", &grid).unwrap();
        let u = random_field(&grid, 2, 9, -1.0, 2.0);
        let target = [0.123, 0.456];
        let out = project_volume(&u, &target, &g).unwrap();
        let v = volume(&out, &g).unwrap();
        assert!((v[0] - target[0]).abs() < 1e-14 && (v[1] - target[1]).abs() < 1e-14);
        let same = project_volume(&out, &target, &g).unwrap();
        assert!(same.values().iter().zip(out.values()).all(|(a, b)| (a - b).abs() < 1e-15));
        let flat = ConformalMetric::flat(&grid);
        let c = project_volume(&Field::zeros(&grid, 1), &[0.3], &flat).unwrap();
        assert!(c.values().iter().all(|x| (x - 0.3).abs() < 1e-14));
    }

    #[test]
    fn translation_invariance_flat() {
        let grid = TorusGrid::unit(&[16, 16]).unwrap();
        let g = ConformalMetric::flat(&grid);
        let p = Potential::double_well();
        let u = random_field(&grid, 1, 5, -0.2, 1.2);
        let e0 = energy(&u, 0.05, &p, &g).unwrap();
        let e1 = energy(&u.translated(&[3, -5]), 0.05, &p, &g).unwrap();
        assert!((e0 - e1).abs() <= 1e-12 * e0);
    }

    #[test]
    fn mismatched_grids_rejected() {
        let a = TorusGrid::unit(&[16, 16]).unwrap();
        let b = TorusGrid::unit(&[8, 8]).unwrap();
        let g = ConformalMetric::flat(&b);
        let p = Potential::double_well();
        assert!(matches!(
            energy(&Field::zeros(&a, 1), 0.1, &p, &g),
            Err(Error::GridMismatch(_))
        ));
        assert!(volume(&Field::zeros(&a, 1), &g).is_err());
    }
}
