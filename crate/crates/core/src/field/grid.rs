use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Periodic box `[0, L₁) × … × [0, Lₙ)` with cell-centered samples stored
/// row-major (axis 0 slowest).
#[derive(Clone, Debug, PartialEq)]
pub struct TorusGrid {
    shape: Vec<usize>,
    lengths: Vec<f64>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

impl TorusGrid {
    pub fn new(shape: &[usize], lengths: &[f64]) -> Result<Self> {
        let n = shape.len();
        if !(1..=3).contains(&n) {
            return Err(Error::InvalidGrid(format!("dimension {n} not in 1..=3")));
        }
        if lengths.len() != n {
            return Err(Error::InvalidGrid(format!("{} lengths for {n} axes", lengths.len())));
        }
        if let Some(s) = shape.iter().find(|&&s| s < 8) {
            return Err(Error::InvalidGrid(format!("axis with {s} cells; at least 8 required")));
        }
        if let Some(l) = lengths.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidGrid(format!("side length {l} must be positive")));
        }
        let mut strides = vec![1; n];
        for k in (0..n - 1).rev() {
            strides[k] = strides[k + 1] * shape[k + 1];
        }
        Ok(TorusGrid {
            shape: shape.to_vec(),
            lengths: lengths.to_vec(),
            spacing: shape.iter().zip(lengths).map(|(&s, &l)| l / s as f64).collect(),
            strides,
            len: shape.iter().product(),
        })
    }

    /// Unit torus with the given cell counts.
    pub fn unit(shape: &[usize]) -> Result<Self> {
        Self::new(shape, &vec![1.0; shape.len()])
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    /// Largest spacing.
    pub fn h_max(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    #[inline]
    pub fn index_along(&self, cell: usize, axis: usize) -> usize {
        (cell / self.strides[axis]) % self.shape[axis]
    }

    pub fn multi_index(&self, cell: usize) -> Vec<usize> {
        (0..self.dim()).map(|k| self.index_along(cell, k)).collect()
    }

    pub fn cell_of(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn center(&self, cell: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|k| (self.index_along(cell, k) as f64 + 0.5) * self.spacing[k])
            .collect()
    }

    /// Periodic neighbor one step forward along `axis`.
    #[inline]
    pub fn next(&self, cell: usize, axis: usize) -> usize {
        let i = self.index_along(cell, axis);
        if i + 1 == self.shape[axis] {
            cell - i * self.strides[axis]
        } else {
            cell + self.strides[axis]
        }
    }

    /// Periodic neighbor one step backward along `axis`.
    #[inline]
    pub fn prev(&self, cell: usize, axis: usize) -> usize {
        let i = self.index_along(cell, axis);
        if i == 0 {
            cell + (self.shape[axis] - 1) * self.strides[axis]
        } else {
            cell - self.strides[axis]
        }
    }

    /// Cell reached by a cyclic shift of `offset[k]` cells along each axis.
    pub fn shifted(&self, cell: usize, offset: &[isize]) -> usize {
        let mut out = 0;
        for k in 0..self.dim() {
            let s = self.shape[k] as isize;
            let i = (self.index_along(cell, k) as isize + offset[k]).rem_euclid(s);
            out += i as usize * self.strides[k];
        }
        out
    }

    /// Minimal-image displacement `b − a` on the torus.
    pub fn displacement(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(b)
            .zip(&self.lengths)
            .map(|((x, y), l)| {
                let d = (y - x).rem_euclid(*l);
                if d > 0.5 * l {
                    d - l
                } else {
                    d
                }
            })
            .collect()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.displacement(a, b).iter().map(|d| d * d).sum::<f64>().sqrt()
    }

    pub fn wrap(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.lengths).map(|(v, l)| v.rem_euclid(*l)).collect()
    }

    /// Half the length of the longest diagonal; the torus diameter.
    pub fn diameter(&self) -> f64 {
        0.5 * self.lengths.iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    pub fn same_as(&self, other: &TorusGrid) -> Result<()> {
        if self.shape != other.shape || self.lengths != other.lengths {
            return Err(Error::GridMismatch(format!(
                "{:?}/{:?} vs {:?}/{:?}",
                self.shape, self.lengths, other.shape, other.lengths
            )));
        }
        Ok(())
    }
}

/// Conformally flat metric `ρ² δ` sampled per cell.
///
/// The Dirichlet weight is `a = ρ^{n−2}` and the volume weight `b = ρⁿ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConformalMetric {
    grid: TorusGrid,
    rho: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    flat: bool,
    total: f64,
}

pub const RHO_MIN: f64 = 1e-8;

impl ConformalMetric {
    pub fn flat(grid: &TorusGrid) -> Self {
        let n = grid.len();
        ConformalMetric {
            grid: grid.clone(),
            rho: vec![1.0; n],
            a: vec![1.0; n],
            b: vec![1.0; n],
            flat: true,
            total: grid.volume(),
        }
    }

    pub fn from_samples(grid: &TorusGrid, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} samples for {} cells", rho.len(), grid.len())));
        }
        if let Some(r) = rho.iter().find(|r| !(**r >= RHO_MIN && r.is_finite())) {
            return Err(Error::InvalidGrid(format!("conformal factor {r} below {RHO_MIN}")));
        }
        let n = grid.dim() as i32;
        let a: Vec<f64> = rho.iter().map(|r| r.powi(n - 2)).collect();
        let b: Vec<f64> = rho.iter().map(|r| r.powi(n)).collect();
        let total = b.iter().sum::<f64>() * grid.cell_volume();
        let flat = rho.iter().all(|&r| r == 1.0);
        Ok(ConformalMetric {
            grid: grid.clone(),
            rho,
            a,
            b,
            flat,
            total,
        })
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let rho = (0..grid.len()).map(|c| f(&grid.center(c))).collect();
        Self::from_samples(grid, rho)
    }

    /// Parses a conformal-factor expression:
    ///
    /// * `1` — flat;
    /// * `bump:A,x0` — `1 + A cos(2π (x₁ − x0)/L₁)`;
    /// * `prod:A` — `1 + A Π_k cos(2π x_k/L_k)`.
    pub fn parse(expr: &str, grid: &TorusGrid) -> Result<Self> {
        let expr = expr.trim();
        if expr == "1" || expr == "flat" {
            return Ok(Self::flat(grid));
        }
        let bad = || Error::config("rho", format!("cannot parse `{expr}`"));
        let (kind, args) = expr.split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let lengths = grid.lengths().to_vec();
        match (kind, nums.as_slice()) {
            ("bump", [amp, x0]) => {
                let (amp, x0) = (*amp, *x0);
                Self::from_fn(grid, |x| 1.0 + amp * (2.0 * PI * (x[0] - x0) / lengths[0]).cos())
            }
            ("bump", [amp]) => {
                let amp = *amp;
                Self::from_fn(grid, |x| 1.0 + amp * (2.0 * PI * x[0] / lengths[0]).cos())
            }
            ("prod", [amp]) => {
                let amp = *amp;
                Self::from_fn(grid, |x| {
                    1.0 + amp
                        * x.iter()
                            .zip(&lengths)
                            .map(|(v, l)| (2.0 * PI * v / l).cos())
                            .product::<f64>()
                })
            }
            _ => Err(bad()),
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// Dirichlet weights `ρ^{n−2}`.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Volume weights `ρⁿ`.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    /// `Σ b · cell volume`.
    pub fn total_volume(&self) -> f64 {
        self.total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbors_wrap() {
        let g = TorusGrid::unit(&[8, 10]).unwrap();
        assert_eq!(g.stride(0), 10);
        let c = g.cell_of(&[7, 9]);
        assert_eq!(g.multi_index(g.next(c, 0)), vec![0, 9]);
        assert_eq!(g.multi_index(g.next(c, 1)), vec![7, 0]);
        let o = g.cell_of(&[0, 0]);
        assert_eq!(g.multi_index(g.prev(o, 1)), vec![0, 9]);
        assert_eq!(g.shifted(o, &[-1, 12]), g.cell_of(&[7, 2]));
    }

    #[test]
    fn rejects_small_or_bad_grids() {
        assert!(TorusGrid::unit(&[4]).is_err());
        assert!(TorusGrid::new(&[8, 8], &[1.0]).is_err());
        assert!(TorusGrid::new(&[8], &[-1.0]).is_err());
        assert!(TorusGrid::unit(&[8, 8, 8, 8]).is_err());
    }

    #[test]
    fn periodic_distance() {
        let g = TorusGrid::unit(&[8, 8]).unwrap();
        assert!((g.distance(&[0.05, 0.5], &[0.95, 0.5]) - 0.1).abs() < 1e-15);
        assert!((g.diameter() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn metric_weights() {
        let g = TorusGrid::unit(&[16, 16]).unwrap();
        let flat = ConformalMetric::parse("1", &g).unwrap();
        assert!(flat.is_flat());
        assert_eq!(flat.total_volume(), 1.0);
        let bump = ConformalMetric::parse("bump:0.2,0", &g).unwrap();
        assert!(!bump.is_flat());
        for c in 0..g.len() {
            assert_eq!(bump.a()[c], 1.0); // n = 2
            assert!((bump.b()[c] - bump.rho()[c].powi(2)).abs() < 1e-15);
        }
        assert!(ConformalMetric::parse("prod:0.2", &g).is_ok());
        assert!(ConformalMetric::parse("bump:2.0", &g).is_err());
        assert!(ConformalMetric::parse("wobble", &g).is_err());
    }
}
