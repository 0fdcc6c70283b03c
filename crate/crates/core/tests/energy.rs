use achlab::field::{self, ConformalMetric, Field, TorusGrid};
use achlab::potential::Potential;
use achlab::rng;

fn noisy(grid: &TorusGrid, m: usize, seed: u64) -> Field {
    let mut s = rng::stream(seed);
    let values = (0..grid.len() * m).map(|_| rng::uniform(&mut s, -0.2, 1.2)).collect();
    Field::from_values(grid, m, values).unwrap()
}

// direct transcription with forward differences and explicit index arithmetic
fn oracle(u: &[f64], nx: usize, ny: usize, lx: f64, ly: f64, eps: f64, rho: &dyn Fn(usize, usize) -> f64) -> f64 {
    let (hx, hy) = (lx / nx as f64, ly / ny as f64);
    let at = |i: usize, j: usize| u[(i % nx) * ny + (j % ny)];
    let mut e = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            let r = rho(i, j);
            let z = at(i, j);
            let dx = (at(i + 1, j) - z) / hx;
            let dy = (at(i, j + 1) - z) / hy;
            let w = z * z * (1.0 - z) * (1.0 - z);
            e += (eps * (dx * dx + dy * dy) + r * r * w / eps) * hx * hy;
        }
    }
    e
}

#[test]
fn energy_matches_direct_sum_on_flat_and_conformal_metrics() {
    let grid = TorusGrid::new(&[12, 10], &[1.0, 0.8]).unwrap();
    let u = noisy(&grid, 1, 3);
    let p = Potential::double_well();
    let eps = 0.07;

    let flat = field::energy(&u, eps, &p, &ConformalMetric::flat(&grid)).unwrap();
    let want = oracle(u.values(), 12, 10, 1.0, 0.8, eps, &|_, _| 1.0);
    assert!((flat - want).abs() < 1e-12 * want, "{flat} vs {want}");

    // in two dimensions a = ρ⁰ = 1 and b = ρ²
    let rho = |i: usize, j: usize| 1.0 + 0.3 * (i as f64 * 0.7).sin() * (j as f64 * 0.4).cos();
    let samples: Vec<f64> = (0..120).map(|c| rho(c / 10, c % 10)).collect();
    let g = ConformalMetric::from_samples(&grid, samples).unwrap();
    let curved = field::energy(&u, eps, &p, &g).unwrap();
    let want = oracle(u.values(), 12, 10, 1.0, 0.8, eps, &rho);
    assert!((curved - want).abs() < 1e-12 * want, "{curved} vs {want}");
}

#[test]
fn energy_is_translation_invariant_on_a_flat_torus() {
    let grid = TorusGrid::unit(&[16, 16]).unwrap();
    let g = ConformalMetric::flat(&grid);
    let p = Potential::product_triple_well([1.0, 0.0], [0.0, 1.0]).unwrap();
    let u = noisy(&grid, 2, 9);
    let e = field::energy(&u, 0.05, &p, &g).unwrap();
    for shift in [[1, 0], [0, 5], [-3, 7]] {
        let t = field::energy(&u.translated(&shift), 0.05, &p, &g).unwrap();
        assert!((e - t).abs() < 1e-12 * e);
    }
}

#[test]
fn gradient_is_the_b_weighted_derivative_of_the_energy() {
    let grid = TorusGrid::unit(&[8, 8]).unwrap();
    let g = ConformalMetric::parse("bump:0.3,0", &grid).unwrap();
    let p = Potential::double_well();
    let eps = 0.1;
    let u = noisy(&grid, 1, 11);
    let grad = field::energy_gradient(&u, eps, &p, &g).unwrap();
    let dir = noisy(&grid, 1, 12);
    let h = 1e-4;
    let shifted = |s: f64| {
        let mut v = u.clone();
        v.axpy(s, &dir);
        field::energy(&v, eps, &p, &g).unwrap()
    };
    let fd = (8.0 * (shifted(h) - shifted(-h)) - (shifted(2.0 * h) - shifted(-2.0 * h))) / (12.0 * h);
    let analytic = field::inner_b(&grad, &dir, &g);
    assert!((fd - analytic).abs() < 1e-7 * analytic.abs().max(1.0), "{fd} vs {analytic}");
}

#[test]
fn volume_projection_hits_the_target_and_is_idempotent() {
    let grid = TorusGrid::unit(&[10, 10]).unwrap();
    let g = ConformalMetric::parse("prod:0.2", &grid).unwrap();
    let u = noisy(&grid, 2, 5);
    let v = [0.21, 0.34];
    let once = field::project_volume(&u, &v, &g).unwrap();
    let got = field::volume(&once, &g).unwrap();
    assert!((got[0] - v[0]).abs() < 1e-13 && (got[1] - v[1]).abs() < 1e-13, "{got:?}");
    let twice = field::project_volume(&once, &v, &g).unwrap();
    for (a, b) in once.values().iter().zip(twice.values()) {
        assert!((a - b).abs() < 1e-13);
    }
}
