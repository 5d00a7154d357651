//! Closed-form scalar functions with analytic derivatives.
//!
//! Warping functions, radial weights and fiber weights are drawn from this
//! catalogue instead of arbitrary closures so that first and second
//! derivatives are exact. No numerical differentiation happens anywhere in
//! the core; threshold and barrier integrands stay smooth by construction.
//!
//! Catalogue entries deserialize from config tables such as
//! `{ kind = "power", exponent = 1.0 }` or `{ kind = "quadratic", coeff = 0.5 }`.

use serde::{Deserialize, Serialize};

/// A scalar function of one real variable with exact derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarFn {
    /// `f(r) = value`.
    Constant { value: f64 },
    /// `f(r) = r^exponent`.
    Power { exponent: f64 },
    /// `f(r) = coeff * r^2`.
    Quadratic { coeff: f64 },
    /// `f(r) = exp(rate * r)`.
    Exp { rate: f64 },
    /// `f(r) = sinh(rate * r)`.
    Sinh { rate: f64 },
    /// `f(r) = cosh(rate * r)`.
    Cosh { rate: f64 },
    /// `f(r) = sin(freq * r)`.
    Sin { freq: f64 },
    /// `f(r) = cos(freq * r)`.
    Cos { freq: f64 },
    /// `f(r) = coeffs[0] + coeffs[1] r + coeffs[2] r^2 + ...`.
    Polynomial { coeffs: Vec<f64> },
}

impl ScalarFn {
    /// Constant zero, the default weight.
    pub fn zero() -> Self {
        ScalarFn::Constant { value: 0.0 }
    }

    /// Constant one, the default warping.
    pub fn one() -> Self {
        ScalarFn::Constant { value: 1.0 }
    }

    /// Function value.
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            ScalarFn::Constant { value } => *value,
            ScalarFn::Power { exponent } => r.powf(*exponent),
            ScalarFn::Quadratic { coeff } => coeff * r * r,
            ScalarFn::Exp { rate } => (rate * r).exp(),
            ScalarFn::Sinh { rate } => (rate * r).sinh(),
            ScalarFn::Cosh { rate } => (rate * r).cosh(),
            ScalarFn::Sin { freq } => (freq * r).sin(),
            ScalarFn::Cos { freq } => (freq * r).cos(),
            ScalarFn::Polynomial { coeffs } => horner(coeffs, r),
        }
    }

    /// First derivative.
    pub fn d1(&self, r: f64) -> f64 {
        match self {
            ScalarFn::Constant { .. } => 0.0,
            ScalarFn::Power { exponent } => pow_term(*exponent, 1, r),
            ScalarFn::Quadratic { coeff } => 2.0 * coeff * r,
            ScalarFn::Exp { rate } => rate * (rate * r).exp(),
            ScalarFn::Sinh { rate } => rate * (rate * r).cosh(),
            ScalarFn::Cosh { rate } => rate * (rate * r).sinh(),
            ScalarFn::Sin { freq } => freq * (freq * r).cos(),
            ScalarFn::Cos { freq } => -freq * (freq * r).sin(),
            ScalarFn::Polynomial { coeffs } => horner_d1(coeffs, r),
        }
    }

    /// Second derivative.
    pub fn d2(&self, r: f64) -> f64 {
        match self {
            ScalarFn::Constant { .. } => 0.0,
            ScalarFn::Power { exponent } => pow_term(*exponent, 2, r),
            ScalarFn::Quadratic { coeff } => 2.0 * coeff,
            ScalarFn::Exp { rate } => rate * rate * (rate * r).exp(),
            ScalarFn::Sinh { rate } => rate * rate * (rate * r).sinh(),
            ScalarFn::Cosh { rate } => rate * rate * (rate * r).cosh(),
            ScalarFn::Sin { freq } => -freq * freq * (freq * r).sin(),
            ScalarFn::Cos { freq } => -freq * freq * (freq * r).cos(),
            ScalarFn::Polynomial { coeffs } => horner_d2(coeffs, r),
        }
    }

    /// True when the function is identically zero.
    pub fn is_zero(&self) -> bool {
        match self {
            ScalarFn::Constant { value } => *value == 0.0,
            ScalarFn::Polynomial { coeffs } => coeffs.iter().all(|c| *c == 0.0),
            _ => false,
        }
    }
}

/// `p (p-1) ... (p-k+1) r^{p-k}` with vanishing prefactors short-circuited,
/// so integer powers stay finite at r = 0.
fn pow_term(p: f64, k: u32, r: f64) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c *= p - i as f64;
    }
    if c == 0.0 {
        return 0.0;
    }
    c * r.powf(p - k as f64)
}

fn horner(coeffs: &[f64], r: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c)
}

fn horner_d1(coeffs: &[f64], r: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, c)| acc * r + k as f64 * c)
}

fn horner_d2(coeffs: &[f64], r: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(2)
        .rev()
        .fold(0.0, |acc, (k, c)| acc * r + (k * (k - 1)) as f64 * c)
}
