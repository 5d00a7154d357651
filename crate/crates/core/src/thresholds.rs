//! The strong-stability threshold `b_max`, the explicit radial barrier, the
//! Cheeger quotient of sub-annuli and the theta-integrability diagnostic for
//! infinite annuli.
//!
//! Everything here is built from two radial densities: the leaf density
//! `theta_den(r) = e^{-Phi} sigma^{m-1}` and its reciprocal. With
//! `F(s) = int_{r1}^{s} theta_den` the threshold function is
//! `theta(s) = F(s) / theta_den(s)` (volume of the inner sub-annulus over
//! area of its outer leaf, the inverse Cheeger quotient) and
//!
//! ```text
//! b_max = 1 / int_{r1}^{r2} theta(s) ds .
//! ```
//!
//! For a slope bound `B < b_max` the barrier is
//! `phi(t) = 1 + b theta_den(r1) K(t) - B J(t)` with
//! `K(t) = int 1/theta_den` and `J(t) = int theta`; it satisfies
//! `phi'' + drift phi' + B = 0` identically, starts at 1, decreases, and the
//! free slope `b < 0` is picked by bisection so that
//! `phi(r2) - 1` lands in the middle of the admissible window `(-1, 0)`.
//! The window is empty exactly when `B >= b_max`, which is reported as
//! [`Error::Window`]; that reciprocal relationship is what makes the
//! threshold numerically sharp.
//!
//! Nested integrals are evaluated with one adaptive pass per density, frozen
//! into cumulative prefix tables ([`CumulativeIntegral`]), so sampling the
//! curves costs one Gauss-Kronrod panel per query instead of a fresh
//! quadrature.

use crate::error::{Error, Result};
use crate::geometry::{annulus_volume, leaf_data, WarpedGeometry};
use crate::quad::{integrate, CumulativeIntegral};
use serde::{Deserialize, Serialize};

/// Number of uniform sample points for the exported curves.
const CURVE_SAMPLES: usize = 129;

/// Sampled threshold data and barrier curve for one geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdReport {
    /// Reciprocal of the full theta integral.
    pub b_max: f64,
    /// The slope bound `B` the barrier was built for.
    pub bound_b: f64,
    /// Chosen inner slope `b < 0`.
    pub slope_b: f64,
    /// `phi(r2) - 1`, inside the admissible window `(-1, 0)`.
    pub window_value: f64,
    /// Uniform sample radii including both endpoints.
    pub r: Vec<f64>,
    /// `theta(s)` at the sample radii.
    pub theta: Vec<f64>,
    /// Barrier values at the sample radii.
    pub phi: Vec<f64>,
    pub phi_min: f64,
    pub phi_max: f64,
    /// `max (phi'' + drift phi' + B)_+` over the sample radii, evaluated
    /// from the closed-form derivatives.
    pub barrier_residual: f64,
}

type BoxedIntegrand = Box<dyn Fn(f64) -> f64>;

/// Frozen cumulative integrals shared by the threshold and barrier math.
struct Curves {
    /// `F(t) = int theta_den`.
    f_den: CumulativeIntegral<BoxedIntegrand>,
    /// `K(t) = int 1/theta_den`.
    k_inv: CumulativeIntegral<BoxedIntegrand>,
    /// `J(t) = int theta = int F / theta_den`.
    j_theta: CumulativeIntegral<BoxedIntegrand>,
}

fn build_curves(geom: &WarpedGeometry) -> Result<Curves> {
    let (r1, r2) = (geom.r1(), geom.r2());
    let g1 = geom.clone();
    let f_den = CumulativeIntegral::with_default_tol(
        Box::new(move |s: f64| g1.leaf_density(s)) as BoxedIntegrand,
        r1,
        r2,
    )?;
    let g2 = geom.clone();
    let k_inv = CumulativeIntegral::with_default_tol(
        Box::new(move |s: f64| g2.inverse_leaf_density(s)) as BoxedIntegrand,
        r1,
        r2,
    )?;
    let g3 = geom.clone();
    let f_for_j = CumulativeIntegral::with_default_tol(
        Box::new(move |s: f64| g3.leaf_density(s)) as BoxedIntegrand,
        r1,
        r2,
    )?;
    let g4 = geom.clone();
    let j_theta = CumulativeIntegral::with_default_tol(
        Box::new(move |s: f64| match f_for_j.eval(s) {
            Ok(f) => f * g4.inverse_leaf_density(s),
            Err(_) => f64::NAN,
        }) as BoxedIntegrand,
        r1,
        r2,
    )?;
    Ok(Curves {
        f_den,
        k_inv,
        j_theta,
    })
}

impl Curves {
    fn theta(&self, geom: &WarpedGeometry, s: f64) -> Result<f64> {
        Ok(self.f_den.eval(s)? * geom.inverse_leaf_density(s))
    }
}

/// `b_max = 1 / int theta`, relative quadrature error at the 1e-10 level.
pub fn compute_threshold(geom: &WarpedGeometry) -> Result<f64> {
    let curves = build_curves(geom)?;
    let total = curves.j_theta.total();
    if !(total > 0.0) {
        return Err(Error::Quadrature(format!(
            "theta integral {total} is not positive"
        )));
    }
    Ok(1.0 / total)
}

/// Barrier for the slope bound `B`, with the inner slope chosen
/// automatically: bisection drives `phi(r2) - 1` to the midpoint of its
/// admissible range, giving maximal margin on both window constraints.
///
/// # Errors
/// [`Error::Window`] when no admissible slope exists, i.e. `B >= b_max`;
/// [`Error::Domain`] for `B < 0`.
pub fn build_barrier(geom: &WarpedGeometry, bound_b: f64) -> Result<ThresholdReport> {
    let curves = build_curves(geom)?;
    let i_theta = curves.j_theta.total();
    let k_total = geom.leaf_density(geom.r1()) * curves.k_inv.total();
    if bound_b < 0.0 {
        return Err(Error::Domain(format!("slope bound must be >= 0, got {bound_b}")));
    }
    // The window (-1, 0) for G(b) = b k_total - B int(theta) is nonempty
    // exactly when B int(theta) < 1.
    if bound_b * i_theta >= 1.0 {
        return Err(Error::Window(format!(
            "bound {bound_b} is at or above the threshold {:.12}",
            1.0 / i_theta
        )));
    }
    let g_of = |b: f64| b * k_total - bound_b * i_theta;
    let target = -(1.0 + bound_b * i_theta) / 2.0;
    let mut lo = (bound_b * i_theta - 1.0) / k_total; // G(lo) = -1
    let mut hi = 0.0; // G(hi) = -B int(theta)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g_of(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + lo.abs()) {
            break;
        }
    }
    let slope_b = 0.5 * (lo + hi);
    finish_report(geom, &curves, bound_b, slope_b, i_theta)
}

/// Barrier with an explicitly chosen inner slope `b < 0`.
///
/// # Errors
/// [`Error::Window`] if `phi(r2) - 1` falls outside `(-1, 0)` for this `b`;
/// [`Error::Domain`] for `b >= 0` or `B < 0`.
pub fn build_barrier_with_slope(
    geom: &WarpedGeometry,
    bound_b: f64,
    slope_b: f64,
) -> Result<ThresholdReport> {
    if bound_b < 0.0 {
        return Err(Error::Domain(format!("slope bound must be >= 0, got {bound_b}")));
    }
    if slope_b >= 0.0 {
        return Err(Error::Domain(format!("inner slope must be < 0, got {slope_b}")));
    }
    let curves = build_curves(geom)?;
    let i_theta = curves.j_theta.total();
    finish_report(geom, &curves, bound_b, slope_b, i_theta)
}

fn finish_report(
    geom: &WarpedGeometry,
    curves: &Curves,
    bound_b: f64,
    slope_b: f64,
    i_theta: f64,
) -> Result<ThresholdReport> {
    let theta1 = geom.leaf_density(geom.r1());
    let window_value = slope_b * theta1 * curves.k_inv.total() - bound_b * i_theta;
    if !(-1.0 < window_value && window_value < 0.0) {
        return Err(Error::Window(format!(
            "phi(r2) - 1 = {window_value:.6} outside (-1, 0)"
        )));
    }
    let (r1, r2) = (geom.r1(), geom.r2());
    let phi_at = |t: f64| -> Result<f64> {
        Ok(1.0 + slope_b * theta1 * curves.k_inv.eval(t)? - bound_b * curves.j_theta.eval(t)?)
    };
    // phi' and phi'' in closed form; their combination with the drift
    // cancels analytically, so the sampled residual measures only the
    // rounding of the evaluation, not a discretization error.
    let residual_at = |t: f64| -> Result<f64> {
        let inv = geom.inverse_leaf_density(t);
        let x = slope_b * theta1 - bound_b * curves.f_den.eval(t)?;
        let (drift, _) = crate::geometry::radial_coefficients(geom, t)?;
        // d/dt log(1/theta_den) = -drift.
        let inv_d1 = -drift * inv;
        let phi_d1 = inv * x;
        let phi_d2 = inv_d1 * x - bound_b * inv * geom.leaf_density(t);
        Ok(phi_d2 + drift * phi_d1 + bound_b)
    };

    let mut r = Vec::with_capacity(CURVE_SAMPLES);
    let mut theta = Vec::with_capacity(CURVE_SAMPLES);
    let mut phi = Vec::with_capacity(CURVE_SAMPLES);
    let mut barrier_residual: f64 = 0.0;
    for k in 0..CURVE_SAMPLES {
        let t = r1 + (r2 - r1) * k as f64 / (CURVE_SAMPLES - 1) as f64;
        r.push(t);
        theta.push(curves.theta(geom, t)?);
        phi.push(phi_at(t)?);
        barrier_residual = barrier_residual.max(residual_at(t)?.max(0.0));
    }
    let phi_min = phi.iter().cloned().fold(f64::INFINITY, f64::min);
    let phi_max = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for k in 1..phi.len() {
        if phi[k] >= phi[k - 1] + 1e-12 {
            return Err(Error::Window(format!(
                "barrier is not decreasing near r = {}",
                r[k]
            )));
        }
    }
    if !(phi_min > 0.0) {
        return Err(Error::Window(format!("barrier reaches {phi_min} <= 0")));
    }
    Ok(ThresholdReport {
        b_max: 1.0 / i_theta,
        bound_b,
        slope_b,
        window_value,
        r,
        theta,
        phi,
        phi_min,
        phi_max,
        barrier_residual,
    })
}

/// `vol_Psi(A(r1, s)) / area_Psi(Sigma_s)`; equals `theta(s)` for split
/// weights since the fiber volume cancels.
pub fn cheeger_quotient(geom: &WarpedGeometry, s: f64) -> Result<f64> {
    if !(s > geom.r1() && s <= geom.r2()) {
        return Err(Error::Domain(format!(
            "cheeger quotient needs s in ({}, {}], got {s}",
            geom.r1(),
            geom.r2()
        )));
    }
    let inner = geom.with_bounds(geom.r1(), s)?;
    let vol = annulus_volume(&inner)?;
    let area = leaf_data(geom, s)?.area_psi;
    Ok(vol / area)
}

/// Truncated theta integral over `[r1, r_max]` and a convergence flag from
/// comparing the half and full truncations: the tail added by the second
/// half must be small against the first half. Truncation evidence only,
/// never an analytic claim.
pub fn infinite_annulus_diagnostic(geom: &WarpedGeometry, r_max: f64) -> Result<(f64, bool)> {
    if !(r_max > geom.r2()) {
        return Err(Error::Domain(format!(
            "truncation radius r_max = {r_max} must extend past r2 = {}",
            geom.r2()
        )));
    }
    let extended = geom.with_bounds(geom.r1(), r_max)?;
    let curves = build_curves(&extended)?;
    let mid = geom.r1() + 0.5 * (r_max - geom.r1());
    let half = curves.j_theta.eval(mid)?;
    let full = curves.j_theta.total();
    let converging = if full <= 1e-12 {
        true
    } else {
        (full - half) <= 0.25 * half
    };
    Ok((full, converging))
}

/// Threshold function samples `(s, theta(s))` on a uniform grid, for export
/// and cross-checks.
pub fn theta_profile(geom: &WarpedGeometry, samples: usize) -> Result<Vec<(f64, f64)>> {
    if samples < 2 {
        return Err(Error::Config("need at least two sample points".into()));
    }
    let curves = build_curves(geom)?;
    let (r1, r2) = (geom.r1(), geom.r2());
    let mut out = Vec::with_capacity(samples);
    for k in 0..samples {
        let s = r1 + (r2 - r1) * k as f64 / (samples - 1) as f64;
        out.push((s, curves.theta(geom, s)?));
    }
    Ok(out)
}

/// Independent slow-path evaluation of `int theta` by direct non-cumulative
/// quadrature; used in tests to cross-check the fast path.
pub fn theta_integral_direct(geom: &WarpedGeometry) -> Result<f64> {
    let g = geom.clone();
    let (r1, r2) = (geom.r1(), geom.r2());
    integrate(
        move |s| {
            let inner = integrate(|z| g.leaf_density(z), r1, s, 1e-13, 1e-11);
            match inner {
                Ok(f) => f * g.inverse_leaf_density(s),
                Err(_) => f64::NAN,
            }
        },
        r1,
        r2,
        1e-11,
        1e-9,
    )
}
