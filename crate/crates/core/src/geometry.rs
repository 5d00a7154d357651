//! Weighted warped-product annuli and their leaf geometry.
//!
//! The domain is `A(r1, r2) = [r1, r2] x N` with metric `dr^2 + sigma^2(r) g_N`
//! and weight `Psi(r, xi) = Phi(r) + Gamma(xi)`, where `N` is a flat circle, a
//! flat torus product or a single point. The weighted measure is
//! `e^{-Psi} dv`, which on the annulus factorizes through the radial leaf
//! density
//!
//! ```text
//! leaf_density(r) = e^{-Phi(r)} sigma^{m-1}(r)
//! ```
//!
//! so that the area of the leaf `Sigma_r` is `vol_Gamma(N) * leaf_density(r)`
//! and the annulus volume is its radial integral.
//!
//! Leaves are oriented by `nu = +d/dr` throughout the crate. With that
//! orientation the weighted mean curvature of every leaf equals the drift
//! coefficient of the radial expansion of the weighted Laplacian,
//!
//! ```text
//! h_psi(r) = (m-1) sigma'(r)/sigma(r) - Phi'(r) = +d/dr log(leaf_density(r)),
//! ```
//!
//! one global sign convention for all thresholds and barriers. Chart-based
//! formulas with an outward normal (for example cylindrical leaves in the
//! Gaussian plane) flip the sign of the weight-gradient term; see
//! [`gaussian_cylinder_hpsi`].

use crate::error::{Error, Result};
use crate::expr::ScalarFn;
use crate::quad::{self, CumulativeIntegral};
use serde::{Deserialize, Serialize};

/// Number of radial sample points used for positivity sweeps.
const POSITIVITY_SAMPLES: usize = 257;

/// The fiber manifold `N` together with its weight `Gamma`.
///
/// `Gamma` is additively separable across torus axes,
/// `Gamma(xi) = sum_a gamma_a(xi_a)`, which keeps the weight split and the
/// fiber quadrature a product rule. A point fiber has no axes, `Gamma = 0`
/// and weighted volume 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberSpec {
    /// Circumference of each flat axis; empty for a point fiber.
    lengths: Vec<f64>,
    /// Per-axis weight functions; same length as `lengths`.
    gamma: Vec<ScalarFn>,
    /// Weighted fiber volume `prod_a int_0^{l_a} e^{-gamma_a}`.
    vol_gamma: f64,
}

impl FiberSpec {
    /// A single point with `Gamma = 0` and `vol_gamma = 1`; purely radial
    /// problems.
    pub fn point() -> Self {
        FiberSpec {
            lengths: Vec::new(),
            gamma: Vec::new(),
            vol_gamma: 1.0,
        }
    }

    /// A flat circle of the given circumference with weight `gamma`.
    pub fn circle(circumference: f64, gamma: ScalarFn) -> Result<Self> {
        Self::torus(vec![circumference], vec![gamma])
    }

    /// An unweighted flat circle.
    pub fn circle_unweighted(circumference: f64) -> Result<Self> {
        Self::circle(circumference, ScalarFn::zero())
    }

    /// A flat torus product with per-axis circumferences and weights.
    pub fn torus(lengths: Vec<f64>, gamma: Vec<ScalarFn>) -> Result<Self> {
        if lengths.len() != gamma.len() {
            return Err(Error::Config(format!(
                "fiber has {} axis lengths but {} weight functions",
                lengths.len(),
                gamma.len()
            )));
        }
        if lengths.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Config("fiber axis lengths must be positive".into()));
        }
        let mut vol = 1.0;
        for (l, g) in lengths.iter().zip(&gamma) {
            vol *= quad::integrate_default(|xi| (-g.eval(xi)).exp(), 0.0, *l)?;
        }
        Ok(FiberSpec {
            lengths,
            gamma,
            vol_gamma: vol,
        })
    }

    /// Number of flat axes (0 for a point fiber).
    pub fn axes(&self) -> usize {
        self.lengths.len()
    }

    /// Circumference of axis `a`.
    pub fn length(&self, a: usize) -> f64 {
        self.lengths[a]
    }

    /// Weight function of axis `a`.
    pub fn gamma(&self, a: usize) -> &ScalarFn {
        &self.gamma[a]
    }

    /// Weighted fiber volume `vol_Gamma(N)`.
    pub fn vol_gamma(&self) -> f64 {
        self.vol_gamma
    }

    /// `Gamma` at the multi-coordinate `xi` (one entry per axis).
    pub fn gamma_at(&self, xi: &[f64]) -> f64 {
        self.gamma
            .iter()
            .zip(xi)
            .map(|(g, x)| g.eval(*x))
            .sum()
    }

    /// True when the fiber is a single point.
    pub fn is_point(&self) -> bool {
        self.lengths.is_empty()
    }
}

/// Weighted mean curvature and area of one leaf `Sigma_r`, oriented by
/// `nu = +d/dr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafData {
    pub r: f64,
    /// `vol_Gamma(N) * e^{-Phi(r)} sigma^{m-1}(r)`.
    pub area_psi: f64,
    /// `(m-1) sigma'/sigma - Phi'`, the logarithmic derivative of the leaf
    /// density.
    pub h_psi: f64,
}

/// The warped annulus `[r1, r2] x N` with warping `sigma`, radial weight
/// `Phi` and fiber `N`.
///
/// Immutable after construction; all operations are pure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpedGeometry {
    dim_m: u32,
    r1: f64,
    r2: f64,
    sigma: ScalarFn,
    phi: ScalarFn,
    fiber: FiberSpec,
}

impl WarpedGeometry {
    /// Validate and build. `sigma` must stay positive on `[r1, r2]`
    /// (checked on a dense sample sweep).
    pub fn new(
        dim_m: u32,
        r1: f64,
        r2: f64,
        sigma: ScalarFn,
        phi: ScalarFn,
        fiber: FiberSpec,
    ) -> Result<Self> {
        if dim_m < 2 {
            return Err(Error::Config(format!("ambient dimension {dim_m} < 2")));
        }
        if !(r1 < r2) || !r1.is_finite() || !r2.is_finite() {
            return Err(Error::Config(format!("invalid radial bounds [{r1}, {r2}]")));
        }
        let geom = WarpedGeometry {
            dim_m,
            r1,
            r2,
            sigma,
            phi,
            fiber,
        };
        geom.check_sigma_positive(r1, r2)?;
        Ok(geom)
    }

    fn check_sigma_positive(&self, lo: f64, hi: f64) -> Result<()> {
        for k in 0..POSITIVITY_SAMPLES {
            let r = lo + (hi - lo) * k as f64 / (POSITIVITY_SAMPLES - 1) as f64;
            if !(self.sigma.eval(r) > 0.0) {
                return Err(Error::Singularity(format!(
                    "sigma({r}) = {} is not positive",
                    self.sigma.eval(r)
                )));
            }
        }
        Ok(())
    }

    pub fn dim_m(&self) -> u32 {
        self.dim_m
    }
    pub fn r1(&self) -> f64 {
        self.r1
    }
    pub fn r2(&self) -> f64 {
        self.r2
    }
    /// Radial width `r2 - r1`.
    pub fn width(&self) -> f64 {
        self.r2 - self.r1
    }
    pub fn sigma(&self) -> &ScalarFn {
        &self.sigma
    }
    pub fn phi(&self) -> &ScalarFn {
        &self.phi
    }
    pub fn fiber(&self) -> &FiberSpec {
        &self.fiber
    }

    /// Same bounds and weight on a different fiber; used for radial
    /// reductions.
    pub fn with_fiber(&self, fiber: FiberSpec) -> Result<Self> {
        WarpedGeometry::new(
            self.dim_m,
            self.r1,
            self.r2,
            self.sigma.clone(),
            self.phi.clone(),
            fiber,
        )
    }

    /// Same warping, weight and fiber on a sub- or super-interval.
    pub fn with_bounds(&self, r1: f64, r2: f64) -> Result<Self> {
        WarpedGeometry::new(
            self.dim_m,
            r1,
            r2,
            self.sigma.clone(),
            self.phi.clone(),
            self.fiber.clone(),
        )
    }

    pub(crate) fn require_inside(&self, r: f64) -> Result<()> {
        let slack = 1e-12 * (1.0 + self.width());
        if r < self.r1 - slack || r > self.r2 + slack {
            return Err(Error::Domain(format!(
                "r = {r} outside [{}, {}]",
                self.r1, self.r2
            )));
        }
        Ok(())
    }

    pub(crate) fn sigma_checked(&self, r: f64) -> Result<f64> {
        let s = self.sigma.eval(r);
        if !(s > 0.0) {
            return Err(Error::Singularity(format!("sigma({r}) = {s} is not positive")));
        }
        Ok(s)
    }

    /// `e^{-Phi(r)} sigma^{m-1}(r)`, the radial density of leaf area per unit
    /// weighted fiber volume. Positive wherever `sigma` is.
    pub fn leaf_density(&self, r: f64) -> f64 {
        (-self.phi.eval(r)).exp() * self.sigma.eval(r).powi(self.dim_m as i32 - 1)
    }

    /// `e^{Phi(r)} sigma^{1-m}(r) = 1 / leaf_density(r)`; the barrier
    /// integrand.
    pub fn inverse_leaf_density(&self, r: f64) -> f64 {
        self.phi.eval(r).exp() * self.sigma.eval(r).powi(1 - self.dim_m as i32)
    }
}

/// Coefficients of the radial expansion of the weighted Laplacian at radius
/// `r`:
///
/// ```text
/// L_Psi u = u_rr + drift(r) u_r + fiber_scale(r) * (fiber Laplacian of u)
/// ```
///
/// with `drift = (m-1) sigma'/sigma - Phi'` and `fiber_scale = 1/sigma^2`.
///
/// # Errors
/// [`Error::Domain`] outside `[r1, r2]`, [`Error::Singularity`] if
/// `sigma(r) <= 0`.
pub fn radial_coefficients(geom: &WarpedGeometry, r: f64) -> Result<(f64, f64)> {
    geom.require_inside(r)?;
    let s = geom.sigma_checked(r)?;
    let drift = (geom.dim_m as f64 - 1.0) * geom.sigma.d1(r) / s - geom.phi.d1(r);
    Ok((drift, 1.0 / (s * s)))
}

/// Weighted area and mean curvature of the leaf `Sigma_r` (orientation
/// `nu = +d/dr`).
pub fn leaf_data(geom: &WarpedGeometry, r: f64) -> Result<LeafData> {
    geom.require_inside(r)?;
    geom.sigma_checked(r)?;
    let (drift, _) = radial_coefficients(geom, r)?;
    Ok(LeafData {
        r,
        area_psi: geom.fiber.vol_gamma() * geom.leaf_density(r),
        h_psi: drift,
    })
}

/// Weighted volume of the whole annulus,
/// `vol_Gamma(N) * int_{r1}^{r2} e^{-Phi} sigma^{m-1} dr`,
/// by adaptive quadrature (relative error 1e-10).
pub fn annulus_volume(geom: &WarpedGeometry) -> Result<f64> {
    let v = quad::integrate_default(|r| geom.leaf_density(r), geom.r1, geom.r2)?;
    Ok(geom.fiber.vol_gamma() * v)
}

/// Weighted mean curvature `1/t + t` of the cylinder at distance `t` from
/// the axis in the Gaussian plane chart (`sigma = r`, `m = 2`,
/// `Phi = t^2/2`), with the chart's outward normal.
///
/// Example-zoo helper: with this crate's global orientation `nu = +d/dr` the
/// same leaf has `h_psi = 1/t - t`; the chart value adds the weight gradient
/// instead of subtracting it. Kept for cross-checking leaf curvatures of
/// rotationally invariant weights.
///
/// # Errors
/// [`Error::Domain`] if `t <= 0`.
pub fn gaussian_cylinder_hpsi(t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("cylinder radius t = {t} must be positive")));
    }
    Ok(1.0 / t + t)
}

/// Volume-growth diagnostic `int_{r1}^{r_max} R / vol_Psi(A(r1, R)) dR`.
///
/// The caller inspects the growth trend as `r_max` increases: divergence of
/// this integral is the classical volume test for parabolic behavior. The
/// geometry must extend to `[r1, r_max]` with positive `sigma`.
///
/// The inner volume is frozen once as a cumulative integral, so the cost is
/// linear in the quadrature nodes of the outer integral. For `r1 > 0` the
/// integrand behaves like `1/(R - r1)` at the lower endpoint and is not
/// integrable; this surfaces as [`Error::Quadrature`] rather than a value.
pub fn volume_growth_diagnostic(geom: &WarpedGeometry, r_max: f64) -> Result<f64> {
    if r_max < geom.r1 {
        return Err(Error::Domain(format!(
            "r_max = {r_max} below inner radius {}",
            geom.r1
        )));
    }
    if r_max == geom.r1 {
        return Ok(0.0);
    }
    geom.check_sigma_positive(geom.r1, r_max)?;
    let vol_gamma = geom.fiber.vol_gamma();
    let inner = CumulativeIntegral::with_default_tol(
        |r| geom.leaf_density(r),
        geom.r1,
        r_max,
    )?;
    quad::integrate(
        |big_r| {
            let vol = vol_gamma * inner.eval(big_r).unwrap_or(f64::NAN);
            big_r / vol
        },
        geom.r1,
        r_max,
        1e-10,
        1e-8,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat_cylinder() -> WarpedGeometry {
        WarpedGeometry::new(
            2,
            0.0,
            1.0,
            ScalarFn::one(),
            ScalarFn::zero(),
            FiberSpec::circle_unweighted(std::f64::consts::TAU).unwrap(),
        )
        .unwrap()
    }

    fn gaussian_slab() -> WarpedGeometry {
        WarpedGeometry::new(
            3,
            0.0,
            1.0,
            ScalarFn::one(),
            ScalarFn::Quadratic { coeff: 0.5 },
            FiberSpec::point(),
        )
        .unwrap()
    }

    #[test]
    fn flat_product_has_zero_drift() {
        let g = WarpedGeometry::new(
            3,
            1.0,
            2.0,
            ScalarFn::one(),
            ScalarFn::zero(),
            FiberSpec::point(),
        )
        .unwrap();
        let (drift, scale) = radial_coefficients(&g, 1.5).unwrap();
        assert_eq!(drift, 0.0);
        assert_eq!(scale, 1.0);
    }

    #[test]
    fn gaussian_slab_drift_is_minus_r() {
        let (drift, scale) = radial_coefficients(&gaussian_slab(), 0.7).unwrap();
        assert_relative_eq!(drift, -0.7, max_relative = 1e-14);
        assert_eq!(scale, 1.0);
    }

    #[test]
    fn cone_coefficients() {
        let g = WarpedGeometry::new(
            3,
            1.0,
            3.0,
            ScalarFn::Power { exponent: 1.0 },
            ScalarFn::zero(),
            FiberSpec::point(),
        )
        .unwrap();
        let (drift, scale) = radial_coefficients(&g, 2.0).unwrap();
        assert_relative_eq!(drift, 1.0, max_relative = 1e-14);
        assert_relative_eq!(scale, 0.25, max_relative = 1e-14);
    }

    #[test]
    fn out_of_domain_is_rejected() {
        assert!(matches!(
            radial_coefficients(&flat_cylinder(), 1.5),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn negative_sigma_is_rejected_at_construction() {
        let bad = WarpedGeometry::new(
            2,
            -1.0,
            1.0,
            ScalarFn::Power { exponent: 1.0 },
            ScalarFn::zero(),
            FiberSpec::point(),
        );
        assert!(matches!(bad, Err(Error::Singularity(_))));
    }

    #[test]
    fn flat_cylinder_leaf_data() {
        let d = leaf_data(&flat_cylinder(), 0.4).unwrap();
        assert_relative_eq!(d.area_psi, std::f64::consts::TAU, max_relative = 1e-12);
        assert_eq!(d.h_psi, 0.0);
    }

    #[test]
    fn gaussian_slab_hpsi_is_minus_t() {
        let d = leaf_data(&gaussian_slab(), 0.6).unwrap();
        assert_relative_eq!(d.h_psi, -0.6, max_relative = 1e-14);
    }

    #[test]
    fn cone_leaf_area() {
        let g = WarpedGeometry::new(
            2,
            1.0,
            4.0,
            ScalarFn::Power { exponent: 1.0 },
            ScalarFn::zero(),
            FiberSpec::circle_unweighted(std::f64::consts::TAU).unwrap(),
        )
        .unwrap();
        let d = leaf_data(&g, 3.0).unwrap();
        assert_relative_eq!(d.area_psi, 6.0 * std::f64::consts::PI, max_relative = 1e-12);
    }

    #[test]
    fn hpsi_matches_log_derivative_of_leaf_density() {
        // h_psi = +d/dr log(leaf_density * vol_gamma), checked by centered
        // differences on several geometries.
        let geoms = [
            flat_cylinder(),
            gaussian_slab(),
            WarpedGeometry::new(
                3,
                1.0,
                2.0,
                ScalarFn::Power { exponent: 1.0 },
                ScalarFn::Polynomial {
                    coeffs: vec![0.0, 0.3],
                },
                FiberSpec::point(),
            )
            .unwrap(),
            WarpedGeometry::new(
                2,
                0.0,
                1.0,
                ScalarFn::Cosh { rate: 1.0 },
                ScalarFn::zero(),
                FiberSpec::point(),
            )
            .unwrap(),
        ];
        let h = 1e-6;
        for g in &geoms {
            for k in 1..10 {
                let r = g.r1() + g.width() * k as f64 / 10.0;
                let fd = ((g.leaf_density(r + h)).ln() - (g.leaf_density(r - h)).ln()) / (2.0 * h);
                let d = leaf_data(g, r).unwrap();
                assert_relative_eq!(d.h_psi, fd, max_relative = 1e-6, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn unit_cube_volume() {
        let g = WarpedGeometry::new(
            2,
            0.0,
            1.0,
            ScalarFn::one(),
            ScalarFn::zero(),
            FiberSpec::point(),
        )
        .unwrap();
        assert_relative_eq!(annulus_volume(&g).unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_slab_volume_matches_reference() {
        assert_relative_eq!(
            annulus_volume(&gaussian_slab()).unwrap(),
            0.855624391892148803,
            max_relative = 1e-10
        );
    }

    #[test]
    fn spherical_shell_volume() {
        let g = WarpedGeometry::new(
            3,
            1.0,
            2.0,
            ScalarFn::Power { exponent: 1.0 },
            ScalarFn::zero(),
            FiberSpec::torus(
                vec![2.0 * std::f64::consts::TAU],
                vec![ScalarFn::zero()],
            )
            .unwrap(),
        )
        .unwrap();
        // vol_gamma = 4 pi, int_1^2 r^2 dr = 7/3.
        assert_relative_eq!(
            annulus_volume(&g).unwrap(),
            4.0 * std::f64::consts::PI * 7.0 / 3.0,
            max_relative = 1e-10
        );
    }

    #[test]
    fn volume_equals_integral_of_leaf_areas() {
        let g = WarpedGeometry::new(
            3,
            0.5,
            2.0,
            ScalarFn::Cosh { rate: 0.8 },
            ScalarFn::Quadratic { coeff: 0.3 },
            FiberSpec::circle_unweighted(3.0).unwrap(),
        )
        .unwrap();
        let via_leaves = quad::integrate_default(
            |r| leaf_data(&g, r).unwrap().area_psi,
            g.r1(),
            g.r2(),
        )
        .unwrap();
        assert_relative_eq!(annulus_volume(&g).unwrap(), via_leaves, max_relative = 1e-8);
    }

    #[test]
    fn unweighted_quantities_for_zero_weights() {
        let g = WarpedGeometry::new(
            2,
            1.0,
            2.0,
            ScalarFn::Power { exponent: 1.0 },
            ScalarFn::zero(),
            FiberSpec::circle_unweighted(1.0).unwrap(),
        )
        .unwrap();
        let d = leaf_data(&g, 1.5).unwrap();
        assert_eq!(d.area_psi, 1.5 * g.fiber().vol_gamma());
        assert_relative_eq!(d.h_psi, 1.0 / 1.5, max_relative = 1e-14);
    }

    #[test]
    fn gaussian_cylinder_values() {
        assert_relative_eq!(gaussian_cylinder_hpsi(1.0).unwrap(), 2.0);
        assert_relative_eq!(gaussian_cylinder_hpsi(2.0).unwrap(), 2.5);
        assert!(gaussian_cylinder_hpsi(0.0).is_err());
        assert!(gaussian_cylinder_hpsi(-1.0).is_err());
        // t = 1 minimizes 1/t + t.
        for &t in &[0.5, 0.9, 1.1, 2.0] {
            assert!(gaussian_cylinder_hpsi(t).unwrap() > gaussian_cylinder_hpsi(1.0).unwrap());
        }
    }

    #[test]
    fn gaussian_cylinder_matches_leaf_curvature_plus_weight_gradient() {
        // Unweighted cylinder curvature 1/t from leaf_data, plus the radial
        // derivative of Phi = t^2/2, reproduces the chart value 1/t + t.
        let g = WarpedGeometry::new(
            2,
            0.5,
            3.0,
            ScalarFn::Power { exponent: 1.0 },
            ScalarFn::zero(),
            FiberSpec::circle_unweighted(std::f64::consts::TAU).unwrap(),
        )
        .unwrap();
        let phi = ScalarFn::Quadratic { coeff: 0.5 };
        for &t in &[0.5, 1.0, 1.7, 2.5] {
            let unweighted = leaf_data(&g, t).unwrap().h_psi;
            assert_relative_eq!(
                gaussian_cylinder_hpsi(t).unwrap(),
                unweighted + phi.d1(t),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn volume_growth_trivial_cases() {
        let g = gaussian_slab();
        assert_eq!(volume_growth_diagnostic(&g, g.r1()).unwrap(), 0.0);
    }

    #[test]
    fn volume_growth_diverges_linearly_for_flat_slab() {
        // sigma = 1, Phi = 0, r1 = 0: integrand = R / R = 1, so the value is
        // r_max exactly.
        let g = WarpedGeometry::new(
            2,
            0.0,
            1.0,
            ScalarFn::one(),
            ScalarFn::zero(),
            FiberSpec::point(),
        )
        .unwrap();
        for &rm in &[1.0, 2.0, 4.0] {
            assert_relative_eq!(
                volume_growth_diagnostic(&g, rm).unwrap(),
                rm,
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn volume_growth_gaussian_grows_quadratically() {
        // vol_Psi(A(0, R)) -> sqrt(pi/2), so the integrand approaches
        // R / sqrt(pi/2) and the integral grows like r_max^2 / (2 sqrt(pi/2)).
        let g = gaussian_slab();
        let v4 = volume_growth_diagnostic(&g, 4.0).unwrap();
        let v8 = volume_growth_diagnostic(&g, 8.0).unwrap();
        let asymptote = |rm: f64| rm * rm / (2.0 * (std::f64::consts::PI / 2.0).sqrt());
        assert_relative_eq!(v8 - v4, asymptote(8.0) - asymptote(4.0), max_relative = 1e-2);
        assert!(v8 > 2.0 * v4);
    }

    #[test]
    fn fiber_volume_matches_weight_quadrature() {
        let f = FiberSpec::circle(
            std::f64::consts::TAU,
            ScalarFn::Cos { freq: 1.0 },
        )
        .unwrap();
        // int_0^{2pi} e^{-cos xi} d xi = 2 pi I_0(1); I_0(1) = 1.26606587775200833...
        assert_relative_eq!(
            f.vol_gamma(),
            std::f64::consts::TAU * 1.266065877752008335,
            max_relative = 1e-10
        );
    }

    #[test]
    fn point_fiber_is_trivial() {
        let f = FiberSpec::point();
        assert_eq!(f.vol_gamma(), 1.0);
        assert_eq!(f.axes(), 0);
        assert!(f.is_point());
    }
}
