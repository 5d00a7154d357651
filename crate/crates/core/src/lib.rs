//! Numerical core for weighted semilinear Dirichlet problems on warped-product
//! annuli.
//!
//! The ambient space is an annulus `A(r1, r2) = [r1, r2] x N` carrying the
//! warped metric `dr^2 + sigma^2(r) g_N` and a split weight
//! `Psi(r, xi) = Phi(r) + Gamma(xi)`, with `N` a flat circle or torus (or a
//! point for purely radial problems). All integrals, inner products and
//! operators use the weighted measure `e^{-Psi} dv`.
//!
//! The crate provides, in dependency order:
//!
//! * [`expr`]: a small catalogue of closed-form scalar functions with analytic
//!   first and second derivatives, so every coefficient in the pipeline is
//!   smooth and exactly differentiable.
//! * [`quad`]: adaptive Gauss-Kronrod quadrature and cumulative integrals,
//!   the backbone of volumes, thresholds and barrier construction.
//! * [`geometry`]: warped geometries, leaf areas, weighted mean curvatures,
//!   volumes and growth diagnostics.
//! * [`grid`] and [`operator`]: tensor-product grids and conservative
//!   second-order finite-difference assembly of the weighted Laplacian
//!   `L_Psi u = u_rr + ((m-1) sigma'/sigma - Phi') u_r + sigma^{-2} (u_xixi - Gamma' u_xi)`
//!   and of Schrodinger operators `L_Psi - q`, with Dirichlet boundary data
//!   eliminated into explicit lift vectors.
//! * [`linsolve`]: a direct block-tridiagonal LU factorization used by the
//!   Newton and eigenvalue solvers.
//! * [`nlsolve`]: damped Newton iteration with optional homotopy continuation
//!   for `L_Psi u = f(u)` with Dirichlet data on the two boundary leaves.
//! * [`stability`]: smallest Dirichlet eigenvalue of `-(L_Psi - q)` by shifted
//!   inverse power iteration, stability classification, domain monotonicity
//!   and maximum-principle checks.
//! * [`symmetry`]: the weighted leaf average, symmetry defect metrics and
//!   commutation residuals for the fiber average and fiber rotation field.
//! * [`thresholds`]: the strong-stability threshold `b_max = 1 / int theta`,
//!   explicit radial barrier construction, Cheeger quotients and the
//!   theta-integrability diagnostic for infinite annuli.
//! * [`harness`]: a config-driven experiment runner that orchestrates the
//!   modules into named scenarios and persists JSON records, CSV tables and
//!   SVG plots.
//!
//! Everything is deterministic for a fixed seed. With the default `parallel`
//! feature, embarrassingly parallel outer loops (multistart solves, grid
//! refinement levels, batched case studies) run on rayon; sequential
//! fallbacks are always compiled and the numerical results are identical.

pub mod error;
pub mod expr;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod linsolve;
pub mod nlsolve;
pub mod operator;
pub mod par;
pub mod quad;
pub mod stability;
pub mod symmetry;
pub mod thresholds;

pub use error::{Error, Result};
pub use expr::ScalarFn;
pub use geometry::{FiberSpec, LeafData, WarpedGeometry};
pub use grid::{build_grid, DiscreteField, Grid};
pub use nlsolve::{Nonlinearity, SolveReport};
pub use operator::{apply, assemble_laplacian, assemble_schrodinger, LinearOperator};
pub use stability::{lambda1, SpectrumResult, Stability};
pub use symmetry::{leaf_average, symmetry_report, SymmetryReport};
pub use thresholds::{build_barrier, compute_threshold, ThresholdReport};
