//! Eigenvalue oracles: closed-form ground states of the flat operator in one
//! and two dimensions, exactness of the discrete tridiagonal spectrum, the
//! spectral shift identity and domain monotonicity.

use approx::assert_relative_eq;
use isopde_core::expr::ScalarFn;
use isopde_core::geometry::{FiberSpec, WarpedGeometry};
use isopde_core::grid::{build_grid, DiscreteField, Grid};
use isopde_core::stability::{
    domain_monotonicity_check, lambda1, rayleigh_quotient, Stability,
};
use isopde_core::nlsolve::seeded_start;
use isopde_core::operator::assemble_schrodinger;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

fn flat_interval(n_r: usize) -> (WarpedGeometry, Arc<Grid>) {
    let g = WarpedGeometry::new(
        2,
        0.0,
        1.0,
        ScalarFn::one(),
        ScalarFn::zero(),
        FiberSpec::point(),
    )
    .unwrap();
    let grid = build_grid(&g, n_r, 1).unwrap();
    (g, grid)
}

#[test]
fn interval_ground_state_matches_pi_squared() {
    let (g, grid) = flat_interval(256);
    let q = DiscreteField::zeros(&grid);
    let result = lambda1(&g, &grid, &q).unwrap();
    assert_relative_eq!(result.lambda1, PI * PI, max_relative = 5e-3);
    assert_eq!(result.classification, Stability::StronglyStable);
    // The discrete operator is the classical tridiagonal, whose smallest
    // eigenvalue is known in closed form; the iteration must hit it to
    // near rounding.
    let h = grid.h_r();
    let discrete = 4.0 / (h * h) * (0.5 * PI * h).sin().powi(2);
    assert_relative_eq!(result.lambda1, discrete, max_relative = 1e-10);
}

#[test]
fn flat_cylinder_ground_state_is_radial_with_pi_squared() {
    let g = WarpedGeometry::new(
        2,
        0.0,
        1.0,
        ScalarFn::one(),
        ScalarFn::zero(),
        FiberSpec::circle_unweighted(TAU).unwrap(),
    )
    .unwrap();
    let grid = build_grid(&g, 64, 16).unwrap();
    let q = DiscreteField::zeros(&grid);
    let result = lambda1(&g, &grid, &q).unwrap();
    assert_relative_eq!(result.lambda1, PI * PI, max_relative = 5e-3);
    // Ground state of the product operator is sin(pi r) x constant: the
    // eigenfunction must be leaf-constant to solver accuracy.
    let ef = &result.eigenfunction;
    let mut worst: f64 = 0.0;
    for i in 0..grid.n_r() {
        for j in 0..grid.fiber_count() {
            worst = worst.max((ef.at(i, j) - ef.at(i, 0)).abs());
        }
    }
    assert!(worst <= 1e-7, "fiber variation of the ground state: {worst:.3e}");
}

#[test]
fn ground_state_is_positive_and_consistent() {
    let g = WarpedGeometry::new(
        3,
        0.5,
        2.0,
        ScalarFn::Cosh { rate: 0.6 },
        ScalarFn::Quadratic { coeff: 0.5 },
        FiberSpec::circle(TAU, ScalarFn::Cos { freq: 1.0 }).unwrap(),
    )
    .unwrap();
    let grid = build_grid(&g, 40, 16).unwrap();
    let q = DiscreteField::from_fn(&grid, |r, xi| 0.5 * r + 0.1 * xi[0].sin(), 0.0, 0.0);
    let result = lambda1(&g, &grid, &q).unwrap();
    assert!(result.eigenfunction.values.iter().all(|v| *v > 0.0));
    assert!(result.rayleigh_residual <= 1e-9 * result.lambda1.abs().max(1.0));
    let op = assemble_schrodinger(&g, &grid, &q).unwrap();
    let rq = rayleigh_quotient(&op, &result.eigenfunction.values).unwrap();
    assert_relative_eq!(rq, result.lambda1, max_relative = 1e-9);
}

#[test]
fn random_trial_fields_never_beat_the_ground_state() {
    // The ground state minimizes the weighted Rayleigh quotient, so no
    // zero-boundary trial field may dip below lambda1.
    let g = WarpedGeometry::new(
        3,
        0.5,
        2.0,
        ScalarFn::Cosh { rate: 0.6 },
        ScalarFn::Quadratic { coeff: 0.5 },
        FiberSpec::circle(TAU, ScalarFn::Cos { freq: 1.0 }).unwrap(),
    )
    .unwrap();
    let grid = build_grid(&g, 32, 12).unwrap();
    let q = DiscreteField::from_fn(&grid, |r, xi| 0.3 * r + 0.2 * xi[0].cos(), 0.0, 0.0);
    let result = lambda1(&g, &grid, &q).unwrap();
    let op = assemble_schrodinger(&g, &grid, &q).unwrap();
    for seed in 0..20 {
        let trial = seeded_start(&grid, seed, 1.0, 0.0, 0.0);
        let rho = rayleigh_quotient(&op, &trial.values).unwrap();
        assert!(
            rho >= result.lambda1 - 1e-9,
            "seed {seed}: quotient {rho} fell below lambda1 {}",
            result.lambda1
        );
    }
}

#[test]
fn constant_potential_shifts_the_spectrum_exactly() {
    let (g, grid) = flat_interval(96);
    let base = lambda1(&g, &grid, &DiscreteField::zeros(&grid)).unwrap().lambda1;
    for shift in [-3.0, 1.5, 20.0] {
        let q = DiscreteField::constant(&grid, shift, 0.0, 0.0);
        let shifted = lambda1(&g, &grid, &q).unwrap().lambda1;
        assert_relative_eq!(shifted, base + shift, epsilon = 1e-9);
    }
}

#[test]
fn unstable_potential_is_classified() {
    let (g, grid) = flat_interval(96);
    let q = DiscreteField::constant(&grid, -2.0 * PI * PI, 0.0, 0.0);
    let result = lambda1(&g, &grid, &q).unwrap();
    assert!(result.lambda1 < 0.0);
    assert_eq!(result.classification, Stability::Unstable);
}

#[test]
fn eigenvalues_grow_on_shrinking_sub_annuli() {
    let g = WarpedGeometry::new(
        2,
        0.0,
        1.0,
        ScalarFn::one(),
        ScalarFn::Quadratic { coeff: 0.5 },
        FiberSpec::point(),
    )
    .unwrap();
    let seq =
        domain_monotonicity_check(&g, 64, 1, |r, _| 0.3 * r, &[0.0, 0.25, 0.5, 0.75, 1.0])
            .unwrap();
    for w in seq.windows(2) {
        assert!(
            w[1] > w[0],
            "domain monotonicity violated: {seq:?}"
        );
    }
}
