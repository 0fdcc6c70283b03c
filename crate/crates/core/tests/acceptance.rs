//! Acceptance criteria C1–C11, one test each.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use achlab::cluster::{self, Cluster, MboOptions};
use achlab::field::spectrum::{degeneracy_scan, nondegeneracy_check};
use achlab::field::{
    self, constrained_flow, energy, energy_gradient, hunt, inner_b, linearized_apply, norm_b, ConformalMetric, Field,
    FlowOptions, HuntOptions, TorusGrid,
};
use achlab::photography::{self, PhotoOptions};
use achlab::potential::Potential;
use achlab::recovery::{self, build_profile, modica_baldo, TauRule};
use achlab::rng;
use achlab::tension::{check_immiscible, tension_matrix, OptimizeOptions, TensionMatrix};
use nalgebra::DMatrix;

/// Writes past the harness capture so every run shows the verdict.
fn verdict(id: &str, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{tag} {id}: {detail}");
}

fn random_field(grid: &TorusGrid, m: usize, s: &mut rng::Stream, lo: f64, hi: f64) -> Field {
    let values = (0..m * grid.len()).map(|_| rng::uniform(s, lo, hi)).collect();
    Field::from_values(grid, m, values).unwrap()
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `∫₀¹ √W` for the double well, the 1-D surface tension.
fn double_well_tension() -> f64 {
    simpson(|u| (u * u * (1.0 - u) * (1.0 - u)).sqrt(), 0.0, 1.0, 2000)
}

fn vol_ok(got: &[f64], want: &[f64]) -> bool {
    got.iter().zip(want).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs()))
}

#[test]
fn c01_surface_tension_oracle() {
    let oracle = double_well_tension();
    let start = Instant::now();
    let t = tension_matrix(&Potential::double_well(), 256, &OptimizeOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let omega = t.get(0, 1);
    let pass = (omega - oracle).abs() <= 1e-4 && secs < 1.0;
    verdict("C1", pass, format!("omega = {omega:.10} (oracle {oracle:.10}), {secs:.3} s"));
    assert!(pass);
}

#[test]
fn c02_gradient_exactness() {
    let mut s = rng::stream(2);
    let grid = TorusGrid::unit(&[64, 64]).unwrap();
    let metrics = [ConformalMetric::flat(&grid), ConformalMetric::parse("prod:0.2", &grid).unwrap()];
    let potentials = [Potential::double_well(), Potential::product_triple_well([1.0, 0.0], [0.0, 1.0]).unwrap()];
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let p = &potentials[trial % 2];
        let g = &metrics[(trial / 2) % 2];
        let eps = rng::uniform(&mut s, 0.02, 0.2);
        let u = random_field(&grid, p.m(), &mut s, -0.3, 1.3);
        let w = random_field(&grid, p.m(), &mut s, -1.0, 1.0);
        let exact = inner_b(&energy_gradient(&u, eps, p, g).unwrap(), &w, g);
        // fourth-order central difference
        let t = 1e-3;
        let e = |k: f64| {
            let mut v = u.clone();
            v.axpy(k * t, &w);
            energy(&v, eps, p, g).unwrap()
        };
        let fd = (-e(2.0) + 8.0 * e(1.0) - 8.0 * e(-1.0) + e(-2.0)) / (12.0 * t);
        worst = worst.max((fd - exact).abs() / exact.abs());
    }
    let pass = worst <= 1e-6;
    verdict("C2", pass, format!("max relative error {worst:.3e} over 200 trials"));
    assert!(pass);
}

#[test]
fn c03_second_variation_symmetry() {
    let mut s = rng::stream(3);
    let grid = TorusGrid::new(&[32, 24], &[1.0, 0.8]).unwrap();
    let metrics = [ConformalMetric::flat(&grid), ConformalMetric::parse("bump:0.3,0.2", &grid).unwrap()];
    let potentials = [Potential::double_well(), Potential::product_triple_well([1.0, 0.0], [0.5, 1.0]).unwrap()];
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let p = &potentials[trial % 2];
        let g = &metrics[(trial / 2) % 2];
        let eps = rng::uniform(&mut s, 0.02, 0.2);
        let u = random_field(&grid, p.m(), &mut s, -0.3, 1.3);
        let w1 = random_field(&grid, p.m(), &mut s, -1.0, 1.0);
        let w2 = random_field(&grid, p.m(), &mut s, -1.0, 1.0);
        let a = inner_b(&linearized_apply(&u, &w1, eps, p, g).unwrap(), &w2, g);
        let b = inner_b(&w1, &linearized_apply(&u, &w2, eps, p, g).unwrap(), g);
        worst = worst.max((a - b).abs() / (norm_b(&w1, g) * norm_b(&w2, g)));
    }
    let pass = worst <= 1e-10;
    verdict("C3", pass, format!("max |<Lw1,w2> - <w1,Lw2>| / (|w1||w2|) = {worst:.3e}"));
    assert!(pass);
}

#[test]
fn c04_one_dimensional_gamma_convergence() {
    let oracle = 4.0 * double_well_tension();
    let start = Instant::now();
    let grid = TorusGrid::unit(&[4096]).unwrap();
    let g = ConformalMetric::flat(&grid);
    let c = cluster::ball_chain(&[0.3], &g).unwrap();
    let p = Potential::double_well();
    let t = tension_matrix(&p, 256, &OptimizeOptions::default()).unwrap();
    let eps = [0.04, 0.02, 0.01];
    let mut energies = Vec::new();
    for &e in &eps {
        let rec = modica_baldo(&c, &p, &t, e, TauRule::Sqrt.tau(e), &g, Some(&[0.3])).unwrap();
        assert!(vol_ok(&field::volume(&rec.u, &g).unwrap(), &[0.3]));
        energies.push(energy(&rec.u, e, &p, &g).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    let gaps: Vec<f64> = energies.iter().map(|e| (e - oracle).abs() / oracle).collect();
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let pass = gaps[2] <= 0.05 && decreasing && secs < 30.0;
    verdict(
        "C4",
        pass,
        format!("tau = sqrt(eps): relative gaps {:.4} {:.4} {:.4} (need <= 0.05 at eps = 0.01), decreasing = {decreasing}, {secs:.2} s", gaps[0], gaps[1], gaps[2]),
    );
    if !pass {
        let auto: Vec<f64> = eps
            .iter()
            .map(|&e| {
                let rec = modica_baldo(&c, &p, &t, e, TauRule::Auto.tau(e), &g, Some(&[0.3])).unwrap();
                (energy(&rec.u, e, &p, &g).unwrap() - oracle).abs() / oracle
            })
            .collect();
        let _ = writeln!(
            std::io::stderr(),
            "     C4 with tau = eps: relative gaps {:.4} {:.4} {:.4}",
            auto[0], auto[1], auto[2]
        );
    }
    assert!(pass);
}

#[test]
fn c05_recovery_volume_exactness() {
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    let mut check = |v: &[f64], want: &[f64]| {
        cases += 1;
        for (a, b) in v.iter().zip(want) {
            worst = worst.max((a - b).abs() / (1.0 + b.abs()));
        }
    };

    let p = Potential::double_well();
    let t = tension_matrix(&p, 128, &OptimizeOptions::default()).unwrap();
    // 1-D droplets with and without an explicit target
    let grid = TorusGrid::unit(&[1024]).unwrap();
    let g = ConformalMetric::flat(&grid);
    let c = cluster::ball_chain(&[0.3], &g).unwrap();
    for eps in [0.04, 0.02] {
        let r = modica_baldo(&c, &p, &t, eps, eps, &g, Some(&[0.3])).unwrap();
        check(&field::volume(&r.u, &g).unwrap(), &[0.3]);
        let r = modica_baldo(&c, &p, &t, eps, eps, &g, None).unwrap();
        check(&field::volume(&r.u, &g).unwrap(), &recovery::sharp_volume(&c, &p, &g).unwrap());
    }
    // 2-D disk on a bumped metric
    let grid = TorusGrid::unit(&[96, 96]).unwrap();
    let g = ConformalMetric::parse("prod:0.2", &grid).unwrap();
    let c = cluster::ball_chain(&[0.08], &g).unwrap();
    for eps in [0.05, 0.03] {
        let r = modica_baldo(&c, &p, &t, eps, eps.sqrt(), &g, Some(&[0.08])).unwrap();
        check(&field::volume(&r.u, &g).unwrap(), &[0.08]);
    }
    // three chambers
    let p3 = Potential::product_triple_well([1.0, 0.0], [0.0, 1.0]).unwrap();
    let t3 = tension_matrix(&p3, 64, &OptimizeOptions::default()).unwrap();
    let g = ConformalMetric::flat(&grid);
    let c3 = cluster::ball_chain(&[0.04, 0.02], &g).unwrap();
    let r = modica_baldo(&c3, &p3, &t3, 0.04, 0.04, &g, Some(&[0.04, 0.02])).unwrap();
    check(&field::volume(&r.u, &g).unwrap(), &[0.04, 0.02]);
    let ph = photography::photo(&[0.3, 0.6], &[0.03, 0.03], 0.04, &p3, &t3, &g, &PhotoOptions::default()).unwrap();
    check(&field::volume(ph.field(), &g).unwrap(), &[0.03, 0.03]);

    let pass = worst <= 1e-12;
    verdict("C5", pass, format!("{cases} recovery calls, max relative volume error {worst:.3e}"));
    assert!(pass);
}

#[test]
fn c06_isoperimetric_disk() {
    let oracle = 2.0 * (PI * 0.05).sqrt();
    let start = Instant::now();
    let grid = TorusGrid::unit(&[256, 256]).unwrap();
    let g = ConformalMetric::flat(&grid);
    // start from a square of the target area so the flow has to round it off
    let side = 0.05f64.sqrt();
    let square = Cluster::from_fn(&grid, 2, |x| {
        let inside = x.iter().all(|c| (c - 0.5).abs() < 0.5 * side);
        if inside { 0 } else { 1 }
    })
    .unwrap();
    let start_per = cluster::isotropic_perimeters(&square, &g).unwrap()[0];
    let opts = MboOptions {
        init: Some(square),
        ..MboOptions::default()
    };
    let res = cluster::mbo_minimize(&[0.05], &TensionMatrix::unit(2), &g, &opts).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let per = cluster::isotropic_perimeters(&res.cluster, &g).unwrap()[0];
    let rel = (per - oracle).abs() / oracle;
    let pass = rel <= 0.03 && secs < 120.0;
    verdict(
        "C6",
        pass,
        format!(
            "isotropic perimeter {per:.5} vs {oracle:.5} ({:.2}%) from a square at {start_per:.5}, {} sweeps, {secs:.2} s",
            100.0 * rel,
            res.sweeps
        ),
    );
    assert!(pass);
}

#[test]
fn c07_degeneracy_scan() {
    let grid = TorusGrid::unit(&[64, 64]).unwrap();
    let g = ConformalMetric::flat(&grid);
    let p = Potential::double_well();
    let modes = degeneracy_scan(&p, &[0.5], &g, (0.0, 1.0), 3).unwrap();
    let mut expected = Vec::new();
    for n1 in 0..=3i64 {
        for n2 in 0..=3i64 {
            let k = n1 * n1 + n2 * n2;
            if k > 0 && k <= 9 && n1 <= n2 && !expected.iter().any(|(kk, _)| *kk == k) {
                expected.push((k, 1.0 / (2.0 * PI * (k as f64).sqrt())));
            }
        }
    }
    let matched = expected.iter().all(|(_, e)| modes.iter().any(|m| (m.eps - e).abs() <= 1e-6));
    let eps = 1.0 / (2.0 * PI);
    let u = Field::constant(&grid, &[0.5]);
    let cp = constrained_flow(&u, eps, &[0.5], &p, &g, &FlowOptions::default()).unwrap();
    let rep = nondegeneracy_check(&cp, &p, &g, 80).unwrap();
    let kernel = rep.sigma_min <= 1e-3 / eps;
    let pass = matched && kernel;
    let got: Vec<String> = modes.iter().take(5).map(|m| format!("{:.6}", m.eps)).collect();
    verdict(
        "C7",
        pass,
        format!(
            "expected eps 1/(2 pi sqrt k) matched = {matched}; sigma_min at 1/(2 pi) = {:.4} (need <= {:.4})",
            rep.sigma_min,
            1e-3 / eps
        ),
    );
    if !pass {
        // values consistent with the second variation −2εΔ + ε⁻¹∇²W
        let eps2 = 1.0 / (2.0 * PI * 2f64.sqrt());
        let cp2 = constrained_flow(&u, eps2, &[0.5], &p, &g, &FlowOptions::default()).unwrap();
        let rep2 = nondegeneracy_check(&cp2, &p, &g, 80).unwrap();
        let _ = writeln!(
            std::io::stderr(),
            "     C7 scan returns eps = {} (= 1/(2 pi sqrt(2k))); sigma_min at 1/(2 pi sqrt 2) = {:.4e} (<= {:.4e}: {})",
            got.join(" "),
            rep2.sigma_min,
            1e-3 / eps2,
            rep2.sigma_min <= 1e-3 / eps2
        );
    }
    assert!(pass);
}

#[test]
fn c08_multiplicity_hunt() {
    let start = Instant::now();
    let grid = TorusGrid::unit(&[128, 128]).unwrap();
    let g = ConformalMetric::parse("prod:0.2", &grid).unwrap();
    let p = Potential::double_well();
    let t = tension_matrix(&p, 256, &OptimizeOptions::default()).unwrap();
    let (eps, v) = (0.05, [0.1]);
    let table = build_profile(&p, &t, eps, TauRule::Auto.tau(eps), 1024).unwrap();
    let seeds: Vec<Field> = (0..32u64)
        .map(|i| {
            let mut s = rng::substream(8, i);
            let x = [rng::uniform(&mut s, 0.0, 1.0), rng::uniform(&mut s, 0.0, 1.0)];
            photography::photo_with(&x, &v, &p, &table, &t, &g, Default::default()).unwrap().recovery.u
        })
        .collect();
    let res = hunt(&p, &g, eps, &v, &seeds, &HuntOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let residual = res.points.iter().map(|c| c.residual_norm).fold(0.0, f64::max);
    let volumes = res.points.iter().all(|c| vol_ok(&field::volume(&c.u, &g).unwrap(), &v));
    let pass = !res.points.is_empty() && residual <= 1e-8 && volumes;
    let energies: Vec<String> = res.points.iter().map(|c| format!("{:.6}", c.energy)).collect();
    verdict(
        "C8",
        pass,
        format!(
            "{} points, max residual {residual:.2e}, exact volumes {volumes}; eta = {} vs cat(T2)+1 = 4 (soft); energies [{}]; {} seeds dropped; {secs:.1} s",
            res.points.len(),
            res.eta,
            energies.join(", "),
            res.dropped
        ),
    );
    assert!(pass);
}

#[test]
fn c09_immiscibility() {
    let mut s = rng::stream(9);
    let mut worst = f64::NEG_INFINITY;
    let opts = OptimizeOptions {
        starts: 3,
        ..OptimizeOptions::default()
    };
    for _ in 0..20 {
        let p1 = [rng::uniform(&mut s, 0.2, 1.5), rng::uniform(&mut s, 0.0, 1.5)];
        let p2 = [rng::uniform(&mut s, 0.0, 1.5), rng::uniform(&mut s, 0.2, 1.5)];
        let p = Potential::product_triple_well(p1, p2).unwrap();
        let t = tension_matrix(&p, 64, &opts).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for l in 0..3 {
                    if i != j && l != i && l != j {
                        worst = worst.max(t.get(i, j) - t.get(i, l) - t.get(l, j));
                    }
                }
            }
        }
    }
    let triangle = worst <= 1e-6;
    // hand-crafted matrices with known margins
    let m = |a: f64, b: f64, c: f64| DMatrix::from_row_slice(3, 3, &[0.0, a, b, a, 0.0, c, b, c, 0.0]);
    let cases = [(m(1.0, 1.0, 3.0), false, -1.0), (m(1.0, 2.0, 3.0), false, 0.0), (m(1.0, 1.0, 1.0), true, 1.0), (m(2.0, 1.0, 0.5), false, -0.5)];
    let rejected = cases.iter().all(|(w, ok, margin)| {
        let (imm, got) = check_immiscible(w).unwrap();
        imm == *ok && (got - margin).abs() <= 1e-15
    });
    let pass = triangle && rejected;
    verdict(
        "C9",
        pass,
        format!("20 random triple wells: max triangle excess {worst:.3e}; hand-crafted verdicts and margins correct = {rejected}"),
    );
    assert!(pass);
}

#[test]
fn c10_homotopy_check() {
    let grid = TorusGrid::unit(&[256, 256]).unwrap();
    let g = ConformalMetric::flat(&grid);
    let p = Potential::double_well();
    let t = tension_matrix(&p, 256, &OptimizeOptions::default()).unwrap();
    let sample = photography::lattice(&grid, 4);
    let start = Instant::now();
    let rep = photography::homotopy_check(&[0.02], 0.02, &p, &t, &g, &sample, &PhotoOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let h = grid.h_max();
    let pass = rep.max_dist < 3.0 * h && rep.undefined == 0;
    verdict(
        "C10",
        pass,
        format!("max_dist {:.3e} (3h = {:.3e}), {} undefined of {}, {secs:.1} s", rep.max_dist, 3.0 * h, rep.undefined, rep.rows.len()),
    );
    assert!(pass);
}

#[test]
fn c11_convention_self_consistency() {
    let p = Potential::double_well();
    let t = tension_matrix(&p, 256, &OptimizeOptions::default()).unwrap();
    let grid = TorusGrid::unit(&[512]).unwrap();
    let g = ConformalMetric::flat(&grid);
    let c = Cluster::from_fn(&grid, 2, |x| if (0.2..0.5).contains(&x[0]) { 0 } else { 1 }).unwrap();
    let per = cluster::multi_perimeter(&c, &t, &g).unwrap();
    let four_omega = 4.0 * t.get(0, 1);
    let oracle = 4.0 * double_well_tension();
    let pass = per == four_omega;
    verdict(
        "C11",
        pass,
        format!("multi_perimeter {per:.16e} vs 4 omega {four_omega:.16e}; droplet energy limit 4 int sqrt(W) = {oracle:.10}"),
    );
    assert!(pass);
}
