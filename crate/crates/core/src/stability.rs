//! Smallest Dirichlet eigenvalue of the linearized operator
//! `-L = -(L_Psi - q)` and the derived stability checks.
//!
//! `W L` is symmetric for the nodal quadrature weights `W = diag(w)`, so
//! `-L` has a real spectrum with a simple, positive ground state (the negated
//! operator is an irreducible matrix with non-positive off-diagonal entries
//! at assembled Peclet numbers). The ground pair is computed by inverse
//! power iteration started strictly below the spectrum (Gershgorin bound)
//! and accelerated by Rayleigh-quotient shifts kept on the safe side of
//! `lambda_1`, which preserves positivity of every iterate.
//!
//! On top of the eigensolver sit the classification of solutions
//! ([`check_stability`]), the domain monotonicity check for nested
//! sub-annuli, and the compact maximum principle test.

use crate::error::{Error, Result};
use crate::geometry::WarpedGeometry;
use crate::grid::{build_grid, DiscreteField, Grid};
use crate::linsolve::{BlockLu, BlockTridiag};
use crate::nlsolve::{Nonlinearity, SolveReport};
use crate::operator::{apply, assemble_schrodinger, LinearOperator};
use crate::par;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Classification tolerance separating [`Stability::Marginal`] from the
/// strict classes.
pub const DEFAULT_TAU: f64 = 1e-6;

const MAX_EIGEN_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    StronglyStable,
    Marginal,
    Unstable,
}

/// Ground pair of `-L` with convergence metadata.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub lambda1: f64,
    /// Ground state, strictly positive on interior nodes, weighted L2 norm 1.
    pub eigenfunction: DiscreteField,
    /// `|| (-L) phi - lambda1 phi ||_w` of the returned pair.
    pub rayleigh_residual: f64,
    pub iterations: usize,
    pub classification: Stability,
}

pub fn classify(lambda1: f64, tau: f64) -> Stability {
    if lambda1 > tau {
        Stability::StronglyStable
    } else if lambda1 < -tau {
        Stability::Unstable
    } else {
        Stability::Marginal
    }
}

/// Gershgorin lower bound for the spectrum of `M = -A`.
fn gershgorin_lower(op: &LinearOperator) -> f64 {
    let mut bound = f64::INFINITY;
    for i in 0..op.n() {
        let (cols, vals) = op.csr().row(i);
        let mut center = 0.0;
        let mut radius = 0.0;
        for (c, v) in cols.iter().zip(vals) {
            if *c == i {
                center = -v;
            } else {
                radius += v.abs();
            }
        }
        bound = bound.min(center - radius);
    }
    bound
}

fn factor_shifted(op: &LinearOperator, mu: f64) -> Result<BlockLu> {
    // (M - mu I) x = b with M = -A is solved as (A + mu I) x = -b.
    let mut bt = BlockTridiag::from_csr(op.csr(), op.grid().fiber_count())?;
    bt.shift(mu);
    bt.factor()
}

/// Weighted Rayleigh quotient of `-L` for a zero-boundary test vector.
pub fn rayleigh_quotient(op: &LinearOperator, v: &[f64]) -> Result<f64> {
    if v.len() != op.n() {
        return Err(Error::Shape(format!(
            "test vector length {} vs operator size {}",
            v.len(),
            op.n()
        )));
    }
    let av = op.csr().matvec(v);
    let mv: Vec<f64> = av.iter().map(|t| -t).collect();
    let denom = par::weighted_dot(&op.w, v, v);
    if denom <= 0.0 {
        return Err(Error::Domain("zero test vector".into()));
    }
    Ok(par::weighted_dot(&op.w, v, &mv) / denom)
}

/// Ground pair of `-L` for an assembled operator `L`.
pub fn lambda1_of_operator(op: &LinearOperator, tau: f64) -> Result<SpectrumResult> {
    let n = op.n();
    let w = &op.w;
    let mut v = vec![1.0; n];
    let norm = par::weighted_norm(w, &v);
    for x in &mut v {
        *x /= norm;
    }
    let mut mu = gershgorin_lower(op) - 1.0;
    let mut factor = factor_shifted(op, mu)?;
    for iter in 1..=MAX_EIGEN_ITERS {
        let y_raw = factor.solve(&v)?;
        let mut y: Vec<f64> = y_raw.iter().map(|t| -t).collect();
        let mean: f64 = par::weighted_dot(w, &y, &vec![1.0; n]);
        if mean < 0.0 {
            for x in &mut y {
                *x = -*x;
            }
        }
        let norm = par::weighted_norm(w, &y);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::EigenSolve("inverse iteration produced a degenerate vector".into()));
        }
        for x in &mut y {
            *x /= norm;
        }
        let ay = op.csr().matvec(&y);
        let my: Vec<f64> = ay.iter().map(|t| -t).collect();
        let rho = par::weighted_dot(w, &y, &my);
        let resid_vec: Vec<f64> = my.iter().zip(&y).map(|(m, yi)| m - rho * yi).collect();
        let resid = par::weighted_norm(w, &resid_vec);
        let scale = rho.abs().max(1.0);
        if resid <= (1e-11 * scale).min(1e-9) {
            if y.iter().any(|x| *x <= 0.0) {
                return Err(Error::EigenSolve(
                    "ground state lost positivity; operator structure violated".into(),
                ));
            }
            let eigenfunction = DiscreteField::from_values(op.grid(), y, 0.0, 0.0)?;
            return Ok(SpectrumResult {
                lambda1: rho,
                eigenfunction,
                rayleigh_residual: resid,
                iterations: iter,
                classification: classify(rho, tau),
            });
        }
        // Rayleigh acceleration: rho >= lambda1 and |rho - lambda1| <= resid
        // near convergence, so rho - 2 resid stays strictly below lambda1.
        if resid < 0.1 * scale {
            let new_mu = rho - 2.0 * resid;
            if new_mu > mu + 1e-14 * scale {
                mu = new_mu;
                factor = factor_shifted(op, mu)?;
            }
        }
        v = y;
    }
    Err(Error::EigenSolve(format!(
        "inverse iteration stagnated after {MAX_EIGEN_ITERS} iterations"
    )))
}

/// Smallest eigenvalue of `-(L_Psi - q)` on the grid, default classification
/// tolerance.
pub fn lambda1(geom: &WarpedGeometry, grid: &Arc<Grid>, q: &DiscreteField) -> Result<SpectrumResult> {
    lambda1_with_tau(geom, grid, q, DEFAULT_TAU)
}

pub fn lambda1_with_tau(
    geom: &WarpedGeometry,
    grid: &Arc<Grid>,
    q: &DiscreteField,
    tau: f64,
) -> Result<SpectrumResult> {
    let op = assemble_schrodinger(geom, grid, q)?;
    lambda1_of_operator(&op, tau)
}

/// Stability of a converged solution: `q = f'(u)` nodally, eigenvalue stored
/// back into the report.
pub fn check_stability(
    geom: &WarpedGeometry,
    grid: &Arc<Grid>,
    report: &mut SolveReport,
    f: &Nonlinearity,
    tau: f64,
) -> Result<SpectrumResult> {
    if !report.converged {
        return Err(Error::Precondition(
            "stability is defined for converged solutions only".into(),
        ));
    }
    let q_values: Vec<f64> = report.solution.values.iter().map(|t| f.d1(*t)).collect();
    let q = DiscreteField::from_values(grid, q_values, 0.0, 0.0)?;
    let spectrum = lambda1_with_tau(geom, grid, &q, tau)?;
    report.lambda1 = Some(spectrum.lambda1);
    Ok(spectrum)
}

/// First eigenvalues on the nested sub-annuli
/// `[r1 + s d, r2 - s d]` with `d = (r2 - r1)/4`, one per shrink fraction
/// `s in [0, 1]`; `q` is sampled on each sub-grid. The sequence is
/// non-decreasing in `s` (domain monotonicity), which callers assert.
pub fn domain_monotonicity_check<Q>(
    geom: &WarpedGeometry,
    n_r: usize,
    n_f: usize,
    q: Q,
    shrink_fractions: &[f64],
) -> Result<Vec<f64>>
where
    Q: Fn(f64, &[f64]) -> f64,
{
    let delta = (geom.r2() - geom.r1()) / 4.0;
    let mut out = Vec::with_capacity(shrink_fractions.len());
    for &s in shrink_fractions {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain(format!(
                "shrink fraction {s} outside [0, 1]"
            )));
        }
        let sub = geom.with_bounds(geom.r1() + s * delta, geom.r2() - s * delta)?;
        let grid = build_grid(&sub, n_r, n_f)?;
        let q_field = DiscreteField::from_fn(&grid, &q, 0.0, 0.0);
        out.push(lambda1(&sub, &grid, &q_field)?.lambda1);
    }
    Ok(out)
}

/// Raw conclusion of the maximum principle: `v <= tol` at every interior
/// node and on both boundary leaves.
pub fn pointwise_nonpositive(v: &DiscreteField, tol: f64) -> bool {
    v.c1 <= tol && v.c2 <= tol && v.values.iter().all(|x| *x <= tol)
}

fn check_admissible(op: &LinearOperator, v: &DiscreteField) -> Result<()> {
    if v.c1 > 1e-12 || v.c2 > 1e-12 {
        return Err(Error::Precondition(format!(
            "test field must be nonpositive on the boundary, got ({}, {})",
            v.c1, v.c2
        )));
    }
    let lv = apply(op, v)?;
    let worst = lv.values.iter().cloned().fold(f64::INFINITY, f64::min);
    if worst < -1e-12 {
        return Err(Error::Precondition(format!(
            "L v must be >= -1e-12 nodally, found {worst:e}"
        )));
    }
    Ok(())
}

/// Compact maximum principle check: with `lambda_1(-L) > 0`, any `v` with
/// `v <= 0` on the boundary and `L v >= 0` nodally must satisfy `v <= 0`.
/// Returns whether the conclusion holds (to 1e-10).
///
/// # Errors
/// [`Error::Precondition`] if `lambda_1 <= 0` (the principle is not
/// guaranteed there) or if `v` fails its admissibility conditions.
pub fn maximum_principle_check(
    geom: &WarpedGeometry,
    grid: &Arc<Grid>,
    q: &DiscreteField,
    v: &DiscreteField,
) -> Result<bool> {
    let op = assemble_schrodinger(geom, grid, q)?;
    let spectrum = lambda1_of_operator(&op, DEFAULT_TAU)?;
    if spectrum.lambda1 <= 0.0 {
        return Err(Error::Precondition(format!(
            "maximum principle requires lambda1 > 0, got {}",
            spectrum.lambda1
        )));
    }
    check_admissible(&op, v)?;
    Ok(pointwise_nonpositive(v, 1e-10))
}

/// Same conclusion test without the `lambda_1 > 0` gate; used to exhibit
/// failure of the principle on unstable operators. Admissibility of `v` is
/// still enforced.
pub fn maximum_principle_check_unchecked(
    geom: &WarpedGeometry,
    grid: &Arc<Grid>,
    q: &DiscreteField,
    v: &DiscreteField,
) -> Result<bool> {
    let op = assemble_schrodinger(geom, grid, q)?;
    check_admissible(&op, v)?;
    Ok(pointwise_nonpositive(v, 1e-10))
}
