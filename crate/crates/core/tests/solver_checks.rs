//! Cross-validation of the Newton solver: the radial reduction against the
//! full two-dimensional solve, affine problems closing in one step,
//! continuation agreeing with direct iteration, multistart coincidence and
//! the partial iterate carried by a non-convergence error.

use approx::assert_relative_eq;
use isopde_core::error::Error;
use isopde_core::expr::ScalarFn;
use isopde_core::geometry::{FiberSpec, WarpedGeometry};
use isopde_core::grid::build_grid;
use isopde_core::nlsolve::{
    continuation_solve, lift_boundary, newton_solve, pde_residual, radial_solve, seeded_start,
    NewtonOptions, Nonlinearity,
};
use isopde_core::operator::assemble_laplacian;
use std::f64::consts::TAU;

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

#[test]
fn radial_reduction_matches_the_full_solve() {
    // Split weight: the radial solution, extended leaf-constantly, solves
    // the full problem on the same radial discretization. Newton from the
    // harmonic lift stays leaf-constant, so the two solves agree to solver
    // tolerance, not merely to discretization error.
    let geom = gaussian_cylinder();
    let f = Nonlinearity::ExpConcave { scale: 0.8 };
    let opts = NewtonOptions::default();
    let radial = radial_solve(&geom, &f, -0.2, -0.5, 48, &opts).unwrap();

    let grid = build_grid(&geom, 48, 16).unwrap();
    let op = assemble_laplacian(&geom, &grid).unwrap();
    let u0 = lift_boundary(&op, -0.2, -0.5).unwrap();
    let full = newton_solve(&op, &f, -0.2, -0.5, &u0, &opts).unwrap();

    let radial_values = radial.solution.radial_profile(0);
    let mut worst: f64 = 0.0;
    for i in 0..grid.n_r() {
        for j in 0..grid.fiber_count() {
            worst = worst.max((full.solution.at(i, j) - radial_values[i]).abs());
        }
    }
    assert!(worst <= 1e-9, "radial vs full gap {worst:.3e}");
}

#[test]
fn affine_problem_closes_in_one_newton_step() {
    let geom = gaussian_cylinder();
    let grid = build_grid(&geom, 24, 12).unwrap();
    let op = assemble_laplacian(&geom, &grid).unwrap();
    let f = Nonlinearity::Affine { slope: -1.0, offset: 1.0 };
    let u0 = seeded_start(&grid, 3, 0.5, 0.0, 0.0);
    let report = newton_solve(&op, &f, 0.0, 0.0, &u0, &NewtonOptions::default()).unwrap();
    assert!(report.converged);
    assert!(
        report.newton_iters <= 2,
        "affine problems are linear; took {} iterations",
        report.newton_iters
    );
    let res = pde_residual(&op, &f, &report.solution).unwrap();
    assert!(res.max_abs() <= 1e-8);
}

#[test]
fn continuation_and_direct_solves_agree() {
    let geom = gaussian_cylinder();
    let grid = build_grid(&geom, 32, 12).unwrap();
    let op = assemble_laplacian(&geom, &grid).unwrap();
    let f = Nonlinearity::ExpConcave { scale: 1.2 };
    let opts = NewtonOptions::default();
    let direct = {
        let u0 = lift_boundary(&op, -0.3, -0.3).unwrap();
        newton_solve(&op, &f, -0.3, -0.3, &u0, &opts).unwrap()
    };
    let staged = continuation_solve(&op, &f, -0.3, -0.3, 4, &opts).unwrap();
    assert!(staged.converged);
    let gap = direct
        .solution
        .values
        .iter()
        .zip(&staged.solution.values)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(gap <= 1e-9, "continuation vs direct gap {gap:.3e}");
}

#[test]
fn multistart_converges_to_one_solution() {
    let geom = gaussian_cylinder();
    let grid = build_grid(&geom, 24, 12).unwrap();
    let op = assemble_laplacian(&geom, &grid).unwrap();
    let f = Nonlinearity::ExpConcave { scale: 0.9 };
    let opts = NewtonOptions::default();
    let mut solutions = Vec::new();
    for seed in [101, 202, 303, 404] {
        let u0 = seeded_start(&grid, seed, 0.4, -0.1, -0.6);
        let report = newton_solve(&op, &f, -0.1, -0.6, &u0, &opts).unwrap();
        assert!(report.converged, "seed {seed} failed to converge");
        solutions.push(report.solution);
    }
    for a in 0..solutions.len() {
        for b in a + 1..solutions.len() {
            let gap = solutions[a]
                .values
                .iter()
                .zip(&solutions[b].values)
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(gap <= 1e-7, "starts {a} and {b} differ by {gap:.3e}");
        }
    }
}

#[test]
fn terminal_residuals_contract_quadratically() {
    let geom = gaussian_cylinder();
    let grid = build_grid(&geom, 32, 12).unwrap();
    let op = assemble_laplacian(&geom, &grid).unwrap();
    let f = Nonlinearity::ExpConcave { scale: 1.0 };
    let u0 = seeded_start(&grid, 7, 0.5, -0.4, -0.4);
    let report = newton_solve(&op, &f, -0.4, -0.4, &u0, &NewtonOptions::default()).unwrap();
    let h = &report.residual_history;
    assert!(h.len() >= 3, "history too short: {h:?}");
    // Once inside the basin the residual should be squared (up to a
    // problem constant) on every step; check the last full step above the
    // rounding floor.
    let floor = 1e-12 / (grid.h_r() * grid.h_r());
    let last = h[h.len() - 1];
    let prev = h[h.len() - 2];
    if prev > floor.sqrt() {
        assert!(
            last <= 50.0 * prev * prev + floor,
            "terminal step not quadratic: {prev:.3e} -> {last:.3e}"
        );
    }
}

#[test]
fn nonconvergence_carries_the_last_iterate() {
    let geom = gaussian_cylinder();
    let grid = build_grid(&geom, 16, 8).unwrap();
    let op = assemble_laplacian(&geom, &grid).unwrap();
    let f = Nonlinearity::ExpConcave { scale: 4.0 };
    let u0 = seeded_start(&grid, 1, 8.0, 0.0, 0.0);
    let opts = NewtonOptions {
        max_iters: 1,
        ..NewtonOptions::default()
    };
    match newton_solve(&op, &f, 0.0, 0.0, &u0, &opts) {
        Err(Error::NonConvergence {
            iterations,
            residual,
            last_iterate,
        }) => {
            assert_eq!(iterations, 1);
            assert!(residual.is_finite());
            assert_eq!(last_iterate.len(), op.n());
            assert!(last_iterate.iter().all(|v| v.is_finite()));
        }
        other => panic!("expected a non-convergence report, got {other:?}"),
    }
}

#[test]
fn solution_respects_boundary_data() {
    let geom = gaussian_cylinder();
    let f = Nonlinearity::ArctanAffine { gain: -1.0, slope: -0.3 };
    let report = radial_solve(&geom, &f, 0.25, -0.75, 64, &NewtonOptions::default()).unwrap();
    assert!(report.converged);
    assert_relative_eq!(report.solution.c1, 0.25);
    assert_relative_eq!(report.solution.c2, -0.75);
    // Interior values stay within the range forced by the concavity-free
    // right-hand side at this size: finite and bracketed by a crude bound.
    assert!(report.solution.max_abs() <= 5.0);
}
