//! Multi-well potentials.
//!
//! Three built-in forms are supported: the scalar double well
//! `u²(1−u)²`, the product triple well `|z−p₁|²|z−p₂|²|z|²` on the plane,
//! and a spliced variant whose far field is the power tail `|z|^{2+τ}`,
//! blended in over the shell `R ≤ |z| ≤ 2R` with a cubic smoothstep.
//!
//! Wells are stored in order `p₁, …, p_N` with `p_N = 0`.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Form {
    ScalarDoubleWell,
    ProductTripleWell,
    Spliced,
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Form::ScalarDoubleWell => "scalar-double-well",
            Form::ProductTripleWell => "product-triple-well",
            Form::Spliced => "spliced",
        })
    }
}

/// Exponents and constants of the two-sided power growth bound
/// `k3 |z|^p1 < W(z) < k4 |z|^p2` for `|z| ≥ radius`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub p1: f64,
    pub p2: f64,
    pub k3: f64,
    pub k4: f64,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Splice {
    pub radius: f64,
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    m: usize,
    minima: Vec<Vec<f64>>,
    form: Form,
    growth: Growth,
    splice: Option<Splice>,
    // additive offset, nonzero only for deliberately broken potentials
    offset: f64,
}

impl Potential {
    /// `W(u) = u²(1−u)²` with wells `p₁ = 1`, `p₂ = 0`.
    pub fn double_well() -> Self {
        let mut p = Potential {
            m: 1,
            minima: vec![vec![1.0], vec![0.0]],
            form: Form::ScalarDoubleWell,
            growth: Growth {
                p1: 4.0,
                p2: 4.0,
                k3: 0.0,
                k4: 0.0,
                radius: 2.0,
            },
            splice: None,
            offset: 0.0,
        };
        p.growth = p.sample_growth_constants(4.0, 4.0, 2.0);
        p
    }

    /// `W(z) = |z−p₁|²·|z−p₂|²·|z|²` on the plane.
    pub fn product_triple_well(p1: [f64; 2], p2: [f64; 2]) -> Result<Self> {
        for (name, p) in [("p1", p1), ("p2", p2)] {
            if p.iter().any(|c| *c < 0.0 || !c.is_finite()) {
                return Err(Error::DegenerateMinima(format!(
                    "{name} = {p:?} is not in the closed positive quadrant"
                )));
            }
            if p[0] == 0.0 && p[1] == 0.0 {
                return Err(Error::DegenerateMinima(format!("{name} coincides with the origin")));
            }
        }
        let det = p1[0] * p2[1] - p1[1] * p2[0];
        let scale = (p1[0].hypot(p1[1])) * (p2[0].hypot(p2[1]));
        if det.abs() <= 1e-12 * scale {
            return Err(Error::DegenerateMinima(format!(
                "{p1:?} and {p2:?} are linearly dependent"
            )));
        }
        let mut p = Potential {
            m: 2,
            minima: vec![p1.to_vec(), p2.to_vec(), vec![0.0, 0.0]],
            form: Form::ProductTripleWell,
            growth: Growth {
                p1: 6.0,
                p2: 6.0,
                k3: 0.0,
                k4: 0.0,
                radius: 0.0,
            },
            splice: None,
            offset: 0.0,
        };
        let far = p.minima.iter().map(|q| norm(q)).fold(0.0, f64::max);
        p.growth = p.sample_growth_constants(6.0, 6.0, 4.0 * far.max(1.0));
        Ok(p)
    }

    /// Product triple well with the `|z|^{2+τ}` tail beyond `radius`.
    pub fn spliced_triple_well(p1: [f64; 2], p2: [f64; 2], radius: f64, tau: f64) -> Result<Self> {
        let base = Self::product_triple_well(p1, p2)?;
        base.with_splice(radius, tau)
    }

    /// Attach a splice tail to a polynomial potential.
    pub fn with_splice(mut self, radius: f64, tau: f64) -> Result<Self> {
        let far = self.minima.iter().map(|q| norm(q)).fold(0.0, f64::max);
        if !(radius > far) || !(tau > 0.0) {
            return Err(Error::DegenerateMinima(format!(
                "splice radius {radius} must exceed the wells' radius {far} and tau {tau} must be positive"
            )));
        }
        self.splice = Some(Splice { radius, tau });
        self.form = Form::Spliced;
        let q = 2.0 + tau;
        self.growth = self.sample_growth_constants(q, q, 2.0 * radius);
        Ok(self)
    }

    /// Same potential shifted up by `offset`; its stored wells then no
    /// longer vanish. Only useful to exercise the class checks.
    pub fn perturbed(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_wells(&self) -> usize {
        self.minima.len()
    }

    pub fn minima(&self) -> &[Vec<f64>] {
        &self.minima
    }

    pub fn well(&self, i: usize) -> &[f64] {
        &self.minima[i]
    }

    pub fn form(&self) -> Form {
        self.form
    }

    pub fn growth(&self) -> Growth {
        self.growth
    }

    pub fn splice(&self) -> Option<Splice> {
        self.splice
    }

    /// Matrix whose columns are the interior wells `p₁ … p_{N−1}`.
    pub fn well_matrix(&self) -> DMatrix<f64> {
        let k = self.n_wells() - 1;
        DMatrix::from_fn(self.m, k, |r, c| self.minima[c][r])
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let base = match self.splice {
            Some(s) => self.spliced_value(z, s),
            None => self.poly_value(z),
        };
        base + self.offset
    }

    /// Writes `∇W(z)` into `out` (length `m`).
    pub fn gradient_into(&self, z: &[f64], out: &mut [f64]) {
        match self.splice {
            Some(s) => self.spliced_grad(z, s, out),
            None => self.poly_grad(z, out),
        }
    }

    /// Writes `∇²W(z)` into `out` (row-major `m×m`).
    pub fn hessian_into(&self, z: &[f64], out: &mut [f64]) {
        match self.splice {
            Some(s) => self.spliced_hess(z, s, out),
            None => self.poly_hess(z, out),
        }
    }

    pub fn evaluate(&self, z: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let m = self.m;
        let mut g = vec![0.0; m];
        let mut h = vec![0.0; m * m];
        self.gradient_into(z, &mut g);
        self.hessian_into(z, &mut h);
        (
            self.value(z),
            DVector::from_vec(g),
            DMatrix::from_row_slice(m, m, &h),
        )
    }

    /// `√W` and its gradient, with the gradient set to zero where `W`
    /// vanishes to working precision.
    pub fn sqrt_value_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let w = self.value(z).max(0.0);
        let s = w.sqrt();
        if s <= 1e-150 {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return 0.0;
        }
        self.gradient_into(z, grad);
        let k = 0.5 / s;
        grad.iter_mut().for_each(|g| *g *= k);
        s
    }

    pub fn min_hessian_eigenvalue(&self, z: &[f64]) -> f64 {
        let (_, _, h) = self.evaluate(z);
        SymmetricEigen::new(h).eigenvalues.min()
    }

    // -- polynomial core --------------------------------------------------

    fn poly_value(&self, z: &[f64]) -> f64 {
        match self.form {
            Form::ScalarDoubleWell => {
                let u = z[0];
                let a = u * (1.0 - u);
                a * a
            }
            _ => self.minima.iter().map(|p| dist2(z, p)).product(),
        }
    }

    fn poly_grad(&self, z: &[f64], out: &mut [f64]) {
        if self.form == Form::ScalarDoubleWell {
            let u = z[0];
            out[0] = 2.0 * u * (1.0 - u) * (1.0 - 2.0 * u);
            return;
        }
        let a: Vec<f64> = self.minima.iter().map(|p| dist2(z, p)).collect();
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, p) in self.minima.iter().enumerate() {
            let others: f64 = (0..a.len()).filter(|&k| k != i).map(|k| a[k]).product();
            for d in 0..self.m {
                out[d] += 2.0 * (z[d] - p[d]) * others;
            }
        }
    }

    fn poly_hess(&self, z: &[f64], out: &mut [f64]) {
        let m = self.m;
        if self.form == Form::ScalarDoubleWell {
            let u = z[0];
            out[0] = 2.0 - 12.0 * u + 12.0 * u * u;
            return;
        }
        let a: Vec<f64> = self.minima.iter().map(|p| dist2(z, p)).collect();
        let nw = a.len();
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..nw {
            let others: f64 = (0..nw).filter(|&k| k != i).map(|k| a[k]).product();
            for d in 0..m {
                out[d * m + d] += 2.0 * others;
            }
            for j in 0..nw {
                if j == i {
                    continue;
                }
                let rest: f64 = (0..nw).filter(|&k| k != i && k != j).map(|k| a[k]).product();
                let (pi, pj) = (&self.minima[i], &self.minima[j]);
                for r in 0..m {
                    for c in 0..m {
                        out[r * m + c] += 4.0 * (z[r] - pi[r]) * (z[c] - pj[c]) * rest;
                    }
                }
            }
        }
    }

    // -- spliced blend ----------------------------------------------------
    //
    // W = P + s(r)·(T − P), T = r^q, q = 2 + τ, s the cubic smoothstep of
    // t = (r − R)/R clamped to [0, 1].

    fn spliced_value(&self, z: &[f64], s: Splice) -> f64 {
        let r = norm(z);
        let (w, _, _) = smoothstep(r, s.radius);
        if w >= 1.0 {
            return r.powf(2.0 + s.tau);
        }
        let p = self.poly_value(z);
        if w <= 0.0 {
            return p;
        }
        p + w * (r.powf(2.0 + s.tau) - p)
    }

    fn spliced_grad(&self, z: &[f64], s: Splice, out: &mut [f64]) {
        let m = self.m;
        let r = norm(z);
        let q = 2.0 + s.tau;
        let (w, dw, _) = smoothstep(r, s.radius);
        if w <= 0.0 {
            return self.poly_grad(z, out);
        }
        let tail = r.powf(q);
        let tail_k = q * r.powf(q - 2.0);
        if w >= 1.0 {
            for d in 0..m {
                out[d] = tail_k * z[d];
            }
            return;
        }
        let p = self.poly_value(z);
        let mut gp = vec![0.0; m];
        self.poly_grad(z, &mut gp);
        for d in 0..m {
            let gt = tail_k * z[d];
            let gr = z[d] / r;
            out[d] = gp[d] + dw * gr * (tail - p) + w * (gt - gp[d]);
        }
    }

    fn spliced_hess(&self, z: &[f64], s: Splice, out: &mut [f64]) {
        let m = self.m;
        let r = norm(z);
        let q = 2.0 + s.tau;
        let (w, dw, ddw) = smoothstep(r, s.radius);
        if w <= 0.0 {
            return self.poly_hess(z, out);
        }
        let tail = r.powf(q);
        let c1 = q * r.powf(q - 2.0);
        let c2 = q * (q - 2.0) * r.powf(q - 4.0);
        let tail_hess = |a: usize, b: usize| c1 * delta(a, b) + c2 * z[a] * z[b];
        if w >= 1.0 {
            for a in 0..m {
                for b in 0..m {
                    out[a * m + b] = tail_hess(a, b);
                }
            }
            return;
        }
        let p = self.poly_value(z);
        let mut gp = vec![0.0; m];
        let mut hp = vec![0.0; m * m];
        self.poly_grad(z, &mut gp);
        self.poly_hess(z, &mut hp);
        let diff = tail - p;
        for a in 0..m {
            for b in 0..m {
                let gra = z[a] / r;
                let grb = z[b] / r;
                let hr = (delta(a, b) - gra * grb) / r;
                let dga = c1 * z[a] - gp[a];
                let dgb = c1 * z[b] - gp[b];
                out[a * m + b] = hp[a * m + b]
                    + ddw * gra * grb * diff
                    + dw * hr * diff
                    + dw * (gra * dgb + dga * grb)
                    + w * (tail_hess(a, b) - hp[a * m + b]);
            }
        }
    }

    /// Sampled `k3`, `k4` for the given exponents on shells `|z| ∈ [R, 4R]`.
    fn sample_growth_constants(&self, p1: f64, p2: f64, radius: f64) -> Growth {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        let mut stream = rng::stream(0x9e0);
        for shell in 0..16 {
            let r = radius * (1.0 + 3.0 * shell as f64 / 15.0);
            for _ in 0..64 {
                let z = random_on_sphere(&mut stream, self.m, r);
                let w = self.value(&z);
                lo = lo.min(w / r.powf(p1));
                hi = hi.max(w / r.powf(p2));
            }
        }
        Growth {
            p1,
            p2,
            k3: 0.5 * lo,
            k4: 2.0 * hi,
            radius,
        }
    }

    pub fn to_spec(&self) -> PotentialSpec {
        PotentialSpec {
            form: self.form.to_string(),
            m: self.m,
            n_wells: self.n_wells(),
            minima: self.minima.iter().flatten().copied().collect(),
            splice_radius: self.splice.map(|s| s.radius),
            splice_tau: self.splice.map(|s| s.tau),
        }
    }

    pub fn from_spec(spec: &PotentialSpec) -> Result<Self> {
        let minima = &spec.minima;
        if minima.len() != spec.m * spec.n_wells {
            return Err(Error::config(
                "minima",
                format!("expected {} numbers, got {}", spec.m * spec.n_wells, minima.len()),
            ));
        }
        let base = match spec.form.as_str() {
            "scalar-double-well" => {
                if spec.m != 1 || spec.n_wells != 2 {
                    return Err(Error::config("form", "scalar-double-well needs m = 1, N = 2"));
                }
                Potential::double_well()
            }
            "product-triple-well" | "spliced" => {
                if spec.m != 2 || spec.n_wells != 3 {
                    return Err(Error::config("form", "triple wells need m = 2, N = 3"));
                }
                if minima[4] != 0.0 || minima[5] != 0.0 {
                    return Err(Error::config("minima", "the last well must be the origin"));
                }
                Potential::product_triple_well([minima[0], minima[1]], [minima[2], minima[3]])?
            }
            other => return Err(Error::config("form", format!("unknown form `{other}`"))),
        };
        match (spec.form.as_str(), spec.splice_radius, spec.splice_tau) {
            ("spliced", Some(r), Some(t)) => base.with_splice(r, t),
            ("spliced", _, _) => Err(Error::config(
                "splice_radius",
                "spliced form needs splice_radius and splice_tau",
            )),
            _ => Ok(base),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: PotentialSpec =
            toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_spec(&spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(&self.to_spec()).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// On-disk description of a potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub form: String,
    pub m: usize,
    #[serde(rename = "N")]
    pub n_wells: usize,
    pub minima: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splice_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splice_tau: Option<f64>,
}

// -- class verification ------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Pending,
}

#[derive(Clone, Debug, Serialize)]
pub struct Condition {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub conditions: Vec<Condition>,
    /// growth exponent fitted from the lower envelope on far shells
    pub fitted_p1: f64,
    /// growth exponent fitted from the upper envelope on far shells
    pub fitted_p2: f64,
    pub fitted_k1: f64,
    pub fitted_k2: f64,
    /// whether `p1 < (2n−1)/(n−1)` holds for `n = 2`; informational
    pub subcritical_in_2d: bool,
}

impl ConditionReport {
    pub fn get(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn all_sampled_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.status != Status::Fail)
    }
}

impl Potential {
    /// Sampled check of the admissible-class conditions. `radius` bounds the
    /// sampling ball; growth exponents are fitted on shells out to `radius`
    /// (or to twice the growth radius when that is larger).
    pub fn verify_class(&self, sample_count: usize, radius: f64) -> ConditionReport {
        let sample_count = sample_count.max(100);
        let m = self.m;
        let mut stream = rng::stream(0xc1a55);
        let mut conds = Vec::new();

        let mut worst_val: f64 = 0.0;
        let mut worst_grad: f64 = 0.0;
        let mut g = vec![0.0; m];
        for p in &self.minima {
            worst_val = worst_val.max(self.value(p).abs());
            self.gradient_into(p, &mut g);
            worst_grad = worst_grad.max(norm(&g));
        }
        conds.push(Condition {
            name: "minima-vanish",
            status: pass_if(worst_val <= 1e-12 && worst_grad <= 1e-12),
            detail: format!("max |W(p)| = {worst_val:.3e}, max |grad W(p)| = {worst_grad:.3e}"),
        });

        let eigs: Vec<f64> = self.minima.iter().map(|p| self.min_hessian_eigenvalue(p)).collect();
        let min_eig = eigs.iter().copied().fold(f64::INFINITY, f64::min);
        conds.push(Condition {
            name: "hessians-pd",
            status: pass_if(min_eig > 0.0),
            detail: format!("smallest Hessian eigenvalues at the wells: {eigs:?}"),
        });

        let mut min_outside = f64::INFINITY;
        for _ in 0..sample_count {
            let z: Vec<f64> = (0..m).map(|_| rng::uniform(&mut stream, -radius, radius)).collect();
            if self.minima.iter().any(|p| dist2(&z, p).sqrt() < 1e-6) {
                continue;
            }
            min_outside = min_outside.min(self.value(&z));
        }
        conds.push(Condition {
            name: "positivity",
            status: pass_if(min_outside > 0.0),
            detail: format!("min W off the wells = {min_outside:.3e}"),
        });

        conds.push(Condition {
            name: "W0-immiscibility",
            status: Status::Pending,
            detail: "requires the tension matrix".into(),
        });

        // shells for exponent fits
        // far enough out that the wells only perturb the leading power
        let spread = self.minima.iter().map(|q| norm(q)).fold(0.0, f64::max);
        let r_far = radius.max(4.0 * self.growth.radius).max(100.0 * (1.0 + spread));
        let r_near = r_far / 2.0;
        let shells = 12;
        let per_shell = (sample_count / shells).max(16);
        let mut log_r = Vec::new();
        let mut log_wmin = Vec::new();
        let mut log_wmax = Vec::new();
        let mut log_gmax = Vec::new();
        let mut log_hmax = Vec::new();
        let mut h = vec![0.0; m * m];
        for k in 0..shells {
            let r = r_near * (r_far / r_near).powf(k as f64 / (shells - 1) as f64);
            let (mut wmin, mut wmax, mut gmax, mut hmax) = (f64::INFINITY, 0.0f64, 0.0f64, 0.0f64);
            for _ in 0..per_shell {
                let z = random_on_sphere(&mut stream, m, r);
                let w = self.value(&z);
                self.gradient_into(&z, &mut g);
                self.hessian_into(&z, &mut h);
                wmin = wmin.min(w);
                wmax = wmax.max(w);
                gmax = gmax.max(norm(&g));
                hmax = hmax.max(spectral_norm(&h, m));
            }
            log_r.push(r.ln());
            log_wmin.push(wmin.ln());
            log_wmax.push(wmax.ln());
            log_gmax.push(gmax.ln());
            log_hmax.push(hmax.ln());
        }
        let fitted_p1 = slope(&log_r, &log_wmin);
        let fitted_p2 = slope(&log_r, &log_wmax);
        let grad_exp = slope(&log_r, &log_gmax);
        let hess_exp = slope(&log_r, &log_hmax);
        let p = self.growth.p2;

        // k1, k2: sup of the normalized ratios over the sampling ball and shells
        let mut k1: f64 = 0.0;
        let mut k2: f64 = 0.0;
        for _ in 0..sample_count {
            let z: Vec<f64> = (0..m).map(|_| rng::uniform(&mut stream, -r_far, r_far)).collect();
            let r = norm(&z);
            self.gradient_into(&z, &mut g);
            self.hessian_into(&z, &mut h);
            k1 = k1.max(norm(&g) / (1.0 + r.powf(p - 1.0)));
            k2 = k2.max(spectral_norm(&h, m) / (1.0 + r.powf(p - 2.0)));
        }
        let exp_slack = 0.1;
        conds.push(Condition {
            name: "W1-gradient-growth",
            status: pass_if(grad_exp <= p - 1.0 + exp_slack),
            detail: format!("|grad W| grows like |z|^{grad_exp:.3}, bound exponent {:.3}, k1 = {k1:.4}", p - 1.0),
        });
        conds.push(Condition {
            name: "W2-hessian-growth",
            status: pass_if(hess_exp <= p - 2.0 + exp_slack),
            detail: format!("|hess W| grows like |z|^{hess_exp:.3}, bound exponent {:.3}, k2 = {k2:.4}", p - 2.0),
        });

        // W3: two-sided bound with the stored record plus the exponent window
        let gr = self.growth;
        let mut bound_ok = true;
        for _ in 0..sample_count {
            let r = gr.radius + (r_far.max(gr.radius) * 2.0 - gr.radius) * rng::uniform(&mut stream, 0.0, 1.0);
            let z = random_on_sphere(&mut stream, m, r);
            let w = self.value(&z);
            if !(gr.k3 * r.powf(gr.p1) < w && w < gr.k4 * r.powf(gr.p2)) {
                bound_ok = false;
            }
        }
        let tol = 0.05;
        let window_ok = fitted_p1 > 2.0 && fitted_p1 <= fitted_p2 + tol && fitted_p2 <= 2.0 * (fitted_p1 - 1.0) + tol;
        conds.push(Condition {
            name: "W3-power-growth",
            status: pass_if(bound_ok && window_ok),
            detail: format!(
                "fitted p1 = {fitted_p1:.4}, p2 = {fitted_p2:.4}; window 2 < p1 <= p2 <= 2(p1-1) {}; stored bound {}",
                if window_ok { "holds" } else { "violated" },
                if bound_ok { "holds" } else { "violated" }
            ),
        });

        ConditionReport {
            conditions: conds,
            fitted_p1,
            fitted_p2,
            fitted_k1: k1,
            fitted_k2: k2,
            subcritical_in_2d: fitted_p1 < 3.0,
        }
    }
}

fn pass_if(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn smoothstep(r: f64, radius: f64) -> (f64, f64, f64) {
    let t = (r - radius) / radius;
    if t <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let w = t * t * (3.0 - 2.0 * t);
        let dw = 6.0 * t * (1.0 - t) / radius;
        let ddw = (6.0 - 12.0 * t) / (radius * radius);
        (w, dw, ddw)
    }
}

fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn spectral_norm(h: &[f64], m: usize) -> f64 {
    if m == 1 {
        return h[0].abs();
    }
    let mat = DMatrix::from_row_slice(m, m, h);
    SymmetricEigen::new(mat).eigenvalues.amax()
}

fn random_on_sphere(stream: &mut rng::Stream, m: usize, r: f64) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..m).map(|_| rng::uniform(stream, -1.0, 1.0)).collect();
        let n = norm(&z);
        if n > 1e-3 && n <= 1.0 {
            return z.iter().map(|x| r * x / n).collect();
        }
    }
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
