//! Top-level acceptance gate. Each test checks one headline property of the
//! toolkit end to end and prints a single verdict line; run with
//! `cargo test --test acceptance -- --nocapture` to see all nine lines.
//!
//! Budgeted tests also assert their wall-clock ceiling, so a pathological
//! slowdown fails loudly rather than silently eating CI time.

use isopde_core::error::Error;
use isopde_core::expr::ScalarFn;
use isopde_core::geometry::{FiberSpec, WarpedGeometry};
use isopde_core::grid::{build_grid, DiscreteField, Grid};
use isopde_core::harness::loglog_slope;
use isopde_core::linsolve::solve_linear;
use isopde_core::nlsolve::{
    lift_boundary, newton_solve, seeded_start, NewtonOptions, Nonlinearity,
};
use isopde_core::operator::assemble_laplacian;
use isopde_core::stability::{
    check_stability, lambda1, maximum_principle_check, maximum_principle_check_unchecked,
};
use isopde_core::symmetry::{
    commutation_residual, laplacian_defect, leaf_average, nonsplit_commutation_residual,
    symmetry_report, ManufacturedField,
};
use isopde_core::thresholds::{build_barrier, compute_threshold};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;
use std::time::{Duration, Instant};

fn verdict(name: &str, ok: bool, detail: &str) {
    println!(
        "acceptance {}: {} ({})",
        name,
        if ok { "pass" } else { "FAIL" },
        detail
    );
    assert!(ok, "acceptance {name}: {detail}");
}

fn within_budget(name: &str, started: Instant, budget: Duration) {
    let elapsed = started.elapsed();
    assert!(
        elapsed <= budget,
        "acceptance {name}: took {elapsed:?}, budget {budget:?}"
    );
}

fn gaussian_slab_radial() -> WarpedGeometry {
    WarpedGeometry::new(
        2,
        0.0,
        1.0,
        ScalarFn::one(),
        ScalarFn::Quadratic { coeff: 0.5 },
        FiberSpec::point(),
    )
    .unwrap()
}

fn gaussian_cylinder() -> WarpedGeometry {
    WarpedGeometry::new(
        2,
        0.0,
        1.0,
        ScalarFn::one(),
        ScalarFn::Quadratic { coeff: 0.5 },
        FiberSpec::circle_unweighted(TAU).unwrap(),
    )
    .unwrap()
}

fn flat_cylinder() -> WarpedGeometry {
    WarpedGeometry::new(
        2,
        0.0,
        1.0,
        ScalarFn::one(),
        ScalarFn::zero(),
        FiberSpec::circle_unweighted(TAU).unwrap(),
    )
    .unwrap()
}

#[test]
fn a1_discretization_order() {
    let started = Instant::now();
    let geom = gaussian_cylinder();
    let mf = ManufacturedField {
        radial: ScalarFn::Sin { freq: 1.3 },
        amplitude: ScalarFn::Cos { freq: 0.7 },
        angular: ScalarFn::Sin { freq: 1.0 },
    };
    let mut hs = Vec::new();
    let mut ds = Vec::new();
    for n in [32usize, 64, 128] {
        let grid = build_grid(&geom, n, n).unwrap();
        hs.push(grid.h_r());
        ds.push(laplacian_defect(&geom, &grid, &mf).unwrap());
    }
    let slope = loglog_slope(&hs, &ds).unwrap();
    within_budget("discretization_order", started, Duration::from_secs(5));
    verdict(
        "discretization_order",
        (slope - 2.0).abs() <= 0.3,
        &format!("slope {slope:.3} over n_r in {{32, 64, 128}}"),
    );
}

#[test]
fn a2_spectrum_oracle() {
    let started = Instant::now();
    let flat_interval = WarpedGeometry::new(
        2,
        0.0,
        1.0,
        ScalarFn::one(),
        ScalarFn::zero(),
        FiberSpec::point(),
    )
    .unwrap();
    let grid_1d = build_grid(&flat_interval, 256, 1).unwrap();
    let l1_1d = lambda1(&flat_interval, &grid_1d, &DiscreteField::zeros(&grid_1d))
        .unwrap()
        .lambda1;
    let rel_1d = (l1_1d - PI * PI).abs() / (PI * PI);

    let cyl = flat_cylinder();
    let grid_2d = build_grid(&cyl, 64, 16).unwrap();
    let l1_2d = lambda1(&cyl, &grid_2d, &DiscreteField::zeros(&grid_2d))
        .unwrap()
        .lambda1;
    let rel_2d = (l1_2d - PI * PI).abs() / (PI * PI);
    within_budget("spectrum_oracle", started, Duration::from_secs(10));
    verdict(
        "spectrum_oracle",
        rel_1d <= 5e-3 && rel_2d <= 5e-3,
        &format!("1d {l1_1d:.6} ({rel_1d:.2e} rel), cylinder {l1_2d:.6} ({rel_2d:.2e} rel) vs pi^2"),
    );
}

#[test]
fn a3_commutation_suite() {
    let started = Instant::now();
    let mf = ManufacturedField {
        radial: ScalarFn::Sin { freq: 1.3 },
        amplitude: ScalarFn::Cos { freq: 0.7 },
        angular: ScalarFn::Sin { freq: 1.0 },
    };
    let mut ok = true;
    let mut notes = Vec::new();
    for (label, geom) in [
        ("gaussian", gaussian_cylinder()),
        (
            "weighted circle",
            WarpedGeometry::new(
                2,
                0.0,
                1.0,
                ScalarFn::one(),
                ScalarFn::Quadratic { coeff: 0.5 },
                FiberSpec::circle(TAU, ScalarFn::Cos { freq: 1.0 }).unwrap(),
            )
            .unwrap(),
        ),
    ] {
        let mut hs = Vec::new();
        let mut rs = Vec::new();
        for n in [16usize, 32, 64] {
            let grid = build_grid(&geom, n, n).unwrap();
            hs.push(grid.h_r());
            rs.push(commutation_residual(&geom, &grid, &mf).unwrap());
        }
        let slope = loglog_slope(&hs, &rs).unwrap();
        ok &= (slope - 2.0).abs() <= 0.4;
        notes.push(format!("{label} slope {slope:.3}"));
    }

    let geom = gaussian_cylinder();
    let u = |r: f64, xi: &[f64]| (1.3 * r).sin() + (0.7 * r).cos() * xi[0].sin();
    let psi = |r: f64, xi: &[f64]| 0.5 * r * r + 0.4 * (TAU * r).sin() * xi[0].sin();
    let mut hs = Vec::new();
    let mut rs = Vec::new();
    for n in [16usize, 32, 64] {
        let grid = build_grid(&geom, n, n).unwrap();
        hs.push(grid.h_r());
        rs.push(nonsplit_commutation_residual(&geom, &grid, u, psi).unwrap());
    }
    let plateau_slope = loglog_slope(&hs, &rs).unwrap();
    ok &= plateau_slope.abs() <= 0.5 && rs[rs.len() - 1] >= 1e-2;
    notes.push(format!(
        "non-split slope {plateau_slope:.3} at level {:.3e}",
        rs[rs.len() - 1]
    ));
    within_budget("commutation_suite", started, Duration::from_secs(10));
    verdict("commutation_suite", ok, &notes.join("; "));
}

/// Solve from an asymmetric seeded start and return (h^2, defect, lambda1).
fn solve_and_inspect(
    geom: &WarpedGeometry,
    grid: &Arc<Grid>,
    f: &Nonlinearity,
    c1: f64,
    c2: f64,
    seed: u64,
) -> (f64, f64, f64) {
    let op = assemble_laplacian(geom, grid).unwrap();
    let u0 = seeded_start(grid, seed, 0.3, c1, c2);
    let mut report = newton_solve(&op, f, c1, c2, &u0, &NewtonOptions::default()).unwrap();
    let sym = symmetry_report(geom, grid, &report.solution).unwrap();
    let spectrum = check_stability(geom, grid, &mut report, f, 1e-6).unwrap();
    (grid.h_r() * grid.h_r(), sym.defect_inf, spectrum.lambda1)
}

#[test]
fn a4_affine_symmetry() {
    let geom = flat_cylinder();
    let f = Nonlinearity::Affine { slope: -1.0, offset: 1.0 };
    let mut ok = true;
    let mut notes = Vec::new();
    for n in [16usize, 24, 32] {
        let grid = build_grid(&geom, n, n).unwrap();
        let (h2, defect, _) = solve_and_inspect(&geom, &grid, &f, 0.0, 0.0, 40 + n as u64);
        ok &= defect <= 10.0 * h2;
        notes.push(format!("n {n}: defect {defect:.2e} vs 10h^2 {:.2e}", 10.0 * h2));
    }
    verdict("affine_symmetry", ok, &notes.join("; "));
}

#[test]
fn a5_certified_concave_symmetry() {
    let started = Instant::now();
    let geom = gaussian_cylinder();
    let b_max = compute_threshold(&geom).unwrap();
    let f = Nonlinearity::ExpConcave { scale: 0.65 * b_max };
    let bound = f.slope_lower_bound().unwrap();
    let barrier = build_barrier(&geom, bound).unwrap();
    let mut ok = barrier.phi_min > 0.0;
    let mut notes = vec![format!("B = {bound:.4} < b_max = {b_max:.4}")];
    let grid = build_grid(&geom, 32, 32).unwrap();
    for seed in [1u64, 2, 3, 4, 5] {
        let (h2, defect, l1) = solve_and_inspect(&geom, &grid, &f, -0.5, -0.5, seed);
        ok &= defect <= 10.0 * h2 && l1 > 0.0;
        notes.push(format!("seed {seed}: defect {defect:.2e}, lambda1 {l1:.4}"));
    }
    within_budget("certified_concave_symmetry", started, Duration::from_secs(60));
    verdict("certified_concave_symmetry", ok, &notes.join("; "));
}

#[test]
fn a6_threshold_sharpness() {
    let geometries: Vec<(&str, WarpedGeometry)> = vec![
        (
            "flat",
            WarpedGeometry::new(2, 0.0, 1.0, ScalarFn::one(), ScalarFn::zero(), FiberSpec::point())
                .unwrap(),
        ),
        ("gaussian", gaussian_slab_radial()),
        (
            "cone",
            WarpedGeometry::new(
                3,
                1.0,
                2.0,
                ScalarFn::Power { exponent: 1.0 },
                ScalarFn::zero(),
                FiberSpec::point(),
            )
            .unwrap(),
        ),
        (
            "cosh",
            WarpedGeometry::new(
                2,
                0.0,
                1.0,
                ScalarFn::Cosh { rate: 1.0 },
                ScalarFn::zero(),
                FiberSpec::point(),
            )
            .unwrap(),
        ),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (label, geom) in &geometries {
        let b_max = compute_threshold(geom).unwrap();
        let below = build_barrier(geom, 0.9 * b_max).is_ok();
        let above = matches!(build_barrier(geom, 1.1 * b_max), Err(Error::Window(_)));
        ok &= below && above;
        notes.push(format!("{label}: below {below}, above rejected {above}"));
    }
    let flat_b = compute_threshold(&geometries[0].1).unwrap();
    let closed_form = (flat_b * 1.0 - 2.0).abs() <= 1e-8;
    ok &= closed_form;
    notes.push(format!("flat b_max W^2 = {flat_b:.10}"));
    verdict("threshold_sharpness", ok, &notes.join("; "));
}

#[test]
fn a7_uniqueness_and_the_affine_exception() {
    let geom = gaussian_cylinder();
    let grid = build_grid(&geom, 24, 24).unwrap();
    let op = assemble_laplacian(&geom, &grid).unwrap();
    let b_max = compute_threshold(&geom).unwrap();
    let f = Nonlinearity::ExpConcave { scale: 0.5 * b_max };
    let mut solutions = Vec::new();
    for seed in [11u64, 22, 33, 44, 55, 66] {
        let u0 = seeded_start(&grid, seed, 0.4, -0.3, -0.3);
        let report = newton_solve(&op, &f, -0.3, -0.3, &u0, &NewtonOptions::default()).unwrap();
        solutions.push(report.solution);
    }
    let mut max_gap: f64 = 0.0;
    for a in 0..solutions.len() {
        for b in a + 1..solutions.len() {
            let gap = solutions[a]
                .values
                .iter()
                .zip(&solutions[b].values)
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            max_gap = max_gap.max(gap);
        }
    }
    let unique = max_gap <= 1e-7;

    // The affine exception: tune the slope to the computed ground energy,
    // so the linearization is exactly marginal and uniqueness degenerates.
    let flat = WarpedGeometry::new(
        2,
        0.0,
        1.0,
        ScalarFn::one(),
        ScalarFn::zero(),
        FiberSpec::point(),
    )
    .unwrap();
    let fine = build_grid(&flat, 128, 1).unwrap();
    let ground = lambda1(&flat, &fine, &DiscreteField::zeros(&fine))
        .unwrap()
        .lambda1;
    let marginal_f = Nonlinearity::Affine { slope: -ground, offset: 0.0 };
    let op_fine = assemble_laplacian(&flat, &fine).unwrap();
    let u0 = lift_boundary(&op_fine, 0.0, 0.0).unwrap();
    let mut report =
        newton_solve(&op_fine, &marginal_f, 0.0, 0.0, &u0, &NewtonOptions::default()).unwrap();
    let spectrum = check_stability(&flat, &fine, &mut report, &marginal_f, 1e-6).unwrap();
    let marginal = spectrum.lambda1.abs() < 1e-3;
    verdict(
        "uniqueness",
        unique && marginal,
        &format!(
            "multistart pairwise gap {max_gap:.2e}; marginal lambda1 {:.2e}",
            spectrum.lambda1
        ),
    );
}

#[test]
fn a8_maximum_principle_suite() {
    let geom = gaussian_slab_radial();
    let grid = build_grid(&geom, 48, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut passed = 0usize;
    for case in 0..20 {
        // Nonnegative random potential keeps lambda1 above the flat ground
        // energy, well inside the guaranteed regime.
        let a = rng.gen_range(0.0..4.0);
        let b = rng.gen_range(-2.0..2.0);
        let q = DiscreteField::from_fn(&grid, |r, _| a + b * (TAU * r).sin().powi(2) * 0.5, 0.0, 0.0);
        // Admissible test field: solve L v = rho with rho >= 0 and zero
        // boundary data; the conclusion v <= 0 must then hold.
        let op = isopde_core::operator::assemble_schrodinger(&geom, &grid, &q).unwrap();
        let rho_scale = rng.gen_range(0.5..2.0);
        let rho: Vec<f64> = (0..op.n())
            .map(|i| rho_scale * (1.0 + (0.37 * (i as f64 + case as f64)).sin().powi(2)))
            .collect();
        let v = solve_linear(&op, &rho, 0.0, 0.0).unwrap();
        match maximum_principle_check(&geom, &grid, &q, &v) {
            Ok(true) => passed += 1,
            Ok(false) => {}
            Err(e) => panic!("case {case} should be admissible: {e}"),
        }
    }

    // Counterexample: far below the ground energy the principle genuinely
    // fails, and the gated checker refuses to certify anything there.
    let q_bad = DiscreteField::constant(&grid, -3.0 * PI * PI, 0.0, 0.0);
    let v_bad = DiscreteField::from_fn(&grid, |r, _| (PI * r).sin(), 0.0, 0.0);
    let gate_refuses = matches!(
        maximum_principle_check(&geom, &grid, &q_bad, &v_bad),
        Err(Error::Precondition(_))
    );
    let flat = WarpedGeometry::new(
        2,
        0.0,
        1.0,
        ScalarFn::one(),
        ScalarFn::zero(),
        FiberSpec::point(),
    )
    .unwrap();
    let flat_grid = build_grid(&flat, 48, 1).unwrap();
    let q_flat = DiscreteField::constant(&flat_grid, -3.0 * PI * PI, 0.0, 0.0);
    let v_flat = DiscreteField::from_fn(&flat_grid, |r, _| (PI * r).sin(), 0.0, 0.0);
    let conclusion_fails =
        !maximum_principle_check_unchecked(&flat, &flat_grid, &q_flat, &v_flat).unwrap();
    verdict(
        "maximum_principle",
        passed == 20 && gate_refuses && conclusion_fails,
        &format!(
            "{passed}/20 randomized cases, gate refuses unstable {gate_refuses}, counterexample violates conclusion {conclusion_fails}"
        ),
    );
}

#[test]
fn a9_conservation_identities() {
    let geom = WarpedGeometry::new(
        2,
        0.0,
        1.0,
        ScalarFn::one(),
        ScalarFn::Quadratic { coeff: 0.5 },
        FiberSpec::circle(TAU, ScalarFn::Cos { freq: 1.0 }).unwrap(),
    )
    .unwrap();
    let grid = build_grid(&geom, 16, 16).unwrap();
    let op = assemble_laplacian(&geom, &grid).unwrap();

    // Per-leaf conservation of the fiber part on a radially constant field.
    let template = seeded_start(&grid, 77, 1.0, 0.0, 0.0);
    let mut u = template.clone();
    for i in 0..grid.n_r() {
        for j in 0..grid.fiber_count() {
            u.values[grid.index(i, j)] = template.at(0, j);
        }
    }
    let image = isopde_core::operator::apply(&op, &u).unwrap();
    let mut worst_leaf: f64 = 0.0;
    for i in 2..grid.n_r() - 2 {
        let s: f64 = (0..grid.fiber_count())
            .map(|j| grid.fiber_weight(j) * image.at(i, j))
            .sum();
        worst_leaf = worst_leaf.max(s.abs());
    }
    let fiber_scale = 1.0 / (grid.h_f() * grid.h_f());
    let conservation = worst_leaf <= 1e-12 * fiber_scale;

    // Weighted symmetry of the assembled matrix.
    let sym_defect = op.weighted_symmetry_defect();
    let symmetric = sym_defect <= 1e-12 * op.weighted_scale();

    // Idempotence and orthogonality of the averaging projection.
    let w = isopde_core::grid::quadrature_weights(&geom, &grid);
    let v = seeded_start(&grid, 78, 1.0, 0.0, 0.0);
    let au = leaf_average(&u);
    let aau = leaf_average(&au);
    let idempotent = au
        .values
        .iter()
        .zip(&aau.values)
        .all(|(a, b)| a.to_bits() == b.to_bits());
    let fluct: Vec<f64> = v
        .values
        .iter()
        .zip(leaf_average(&v).values.iter())
        .map(|(x, m)| x - m)
        .collect();
    let inner = isopde_core::par::weighted_dot(&w, &fluct, &au.values);
    let scale = isopde_core::par::weighted_norm(&w, &fluct)
        * isopde_core::par::weighted_norm(&w, &au.values);
    let orthogonal = inner.abs() <= 1e-12 * scale.max(1.0);

    verdict(
        "conservation_identities",
        conservation && symmetric && idempotent && orthogonal,
        &format!(
            "leaf sum {worst_leaf:.2e}, symmetry defect {sym_defect:.2e}, idempotent {idempotent}, projection inner product {inner:.2e}"
        ),
    );
}
