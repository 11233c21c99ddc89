//! Real polynomials in ascending powers of `s` and the coefficient-diagram
//! quantities derived from them.
//!
//! Coefficients are stored lowest power first, so `coeffs()[i]` multiplies
//! `s^i`. Printed controller polynomials are usually written highest power
//! first; [`Polynomial::from_descending`] exists for that boundary.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used to trim trailing coefficients.
pub const TRIM_TOLERANCE: f64 = 1e-12;

/// Relative tolerance for declaring a Routh table entry zero.
pub const ROUTH_ZERO_TOLERANCE: f64 = 1e-12;

/// Margin factor in the CDM sufficient stability condition `γ_i > 1.5 γ*_i`.
pub const LIPATOV_MARGIN: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("coefficient a_{index} is zero")]
    ZeroCoefficient { index: usize },
    #[error("polynomial degree {degree} is below the required {required}")]
    DegreeTooLow { degree: usize, required: usize },
    #[error("stability index γ_{index} = {value} must be positive and finite")]
    InvalidGamma { index: usize, value: f64 },
    #[error("equivalent time constant {0} must be positive and finite")]
    InvalidTau(f64),
    #[error("constant coefficient {0} must be positive and finite")]
    InvalidScale(f64),
}

/// A real polynomial, lowest power first.
///
/// The zero polynomial is stored as `[0.0]`; every other polynomial has a
/// nonzero highest coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: impl Into<Vec<f64>>) -> Self {
        let mut coeffs = coeffs.into();
        let scale = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        while coeffs.len() > 1 {
            let last = *coeffs.last().unwrap();
            if last == 0.0 || last.abs() <= TRIM_TOLERANCE * scale {
                coeffs.pop();
            } else {
                break;
            }
        }
        if coeffs.is_empty() || (coeffs.len() == 1 && coeffs[0].abs() <= TRIM_TOLERANCE * scale) {
            coeffs = vec![0.0];
        }
        Self { coeffs }
    }

    /// Builds from coefficients written highest power first.
    pub fn from_descending(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().rev().copied().collect::<Vec<_>>())
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![0.0] }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// `c · s^power`.
    pub fn monomial(c: f64, power: usize) -> Self {
        let mut coeffs = vec![0.0; power + 1];
        coeffs[power] = c;
        Self::new(coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `s^i`, zero past the degree.
    pub fn coeff(&self, i: usize) -> f64 {
        self.coeffs.get(i).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == 0.0
    }

    /// Index of the highest nonzero coefficient; `0` for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    /// Horner evaluation.
    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * k).collect::<Vec<_>>())
    }

    /// Coefficients highest power first.
    pub fn to_descending(&self) -> Vec<f64> {
        self.coeffs.iter().rev().copied().collect()
    }

    /// Multiplies by `s^k`.
    pub fn shift(&self, k: usize) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        let mut coeffs = vec![0.0; k];
        coeffs.extend_from_slice(&self.coeffs);
        Self { coeffs }
    }
}

impl From<Vec<f64>> for Polynomial {
    fn from(coeffs: Vec<f64>) -> Self {
        Self::new(coeffs)
    }
}

impl From<Polynomial> for Vec<f64> {
    fn from(p: Polynomial) -> Self {
        p.coeffs
    }
}

/// Convolution of coefficient sequences.
pub fn poly_mul(p: &Polynomial, q: &Polynomial) -> Polynomial {
    if p.is_zero() || q.is_zero() {
        return Polynomial::zero();
    }
    let mut out = vec![0.0; p.coeffs.len() + q.coeffs.len() - 1];
    for (i, a) in p.coeffs.iter().enumerate() {
        for (j, b) in q.coeffs.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    Polynomial::new(out)
}

pub fn poly_add(p: &Polynomial, q: &Polynomial) -> Polynomial {
    let n = p.coeffs.len().max(q.coeffs.len());
    Polynomial::new((0..n).map(|i| p.coeff(i) + q.coeff(i)).collect::<Vec<_>>())
}

pub fn poly_eval(p: &Polynomial, s0: f64) -> f64 {
    p.eval(s0)
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        poly_mul(self, rhs)
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        poly_add(self, rhs)
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        poly_add(self, &-rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

/// Renders as `a0 + a1·s + a2·s^2 + …`.
impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            if first {
                write!(f, "{c}")?;
            } else if c < 0.0 {
                write!(f, " - {}", -c)?;
            } else {
                write!(f, " + {c}")?;
            }
            match i {
                0 => {}
                1 => write!(f, "·s")?,
                _ => write!(f, "·s^{i}")?,
            }
            first = false;
        }
        Ok(())
    }
}

fn require_nonzero(p: &Polynomial) -> Result<(), PolyError> {
    match p.coeffs.iter().position(|&c| c == 0.0) {
        Some(index) => Err(PolyError::ZeroCoefficient { index }),
        None => Ok(()),
    }
}

/// Stability indices `γ_i = a_i² / (a_{i+1} a_{i-1})` for `i = 1..n-1`.
pub fn stability_indices(p: &Polynomial) -> Result<Vec<f64>, PolyError> {
    let n = p.degree();
    if n < 2 {
        return Err(PolyError::DegreeTooLow { degree: n, required: 2 });
    }
    require_nonzero(p)?;
    let a = &p.coeffs;
    Ok((1..n).map(|i| a[i] * a[i] / (a[i + 1] * a[i - 1])).collect())
}

/// Equivalent time constant `τ = a_1 / a_0`.
pub fn equivalent_tau(p: &Polynomial) -> Result<f64, PolyError> {
    let a0 = p.coeff(0);
    if a0 == 0.0 {
        return Err(PolyError::ZeroCoefficient { index: 0 });
    }
    Ok(p.coeff(1) / a0)
}

/// Stability limits from a list of indices, with `γ_0 = γ_n = ∞`.
pub fn stability_limits_from_indices(gamma: &[f64]) -> Vec<f64> {
    let n = gamma.len();
    (0..n)
        .map(|i| {
            let below = if i == 0 { 0.0 } else { 1.0 / gamma[i - 1] };
            let above = if i + 1 == n { 0.0 } else { 1.0 / gamma[i + 1] };
            below + above
        })
        .collect()
}

/// Stability limits `γ*_i = 1/γ_{i-1} + 1/γ_{i+1}`.
pub fn stability_limits(p: &Polynomial) -> Result<Vec<f64>, PolyError> {
    Ok(stability_limits_from_indices(&stability_indices(p)?))
}

/// Pseudo-break points `ω_i = a_i / a_{i-1}` for `i = 1..n`.
///
/// These satisfy `γ_i = ω_i / ω_{i+1}`, the form consistent with the
/// definition of the stability indices.
pub fn break_points(p: &Polynomial) -> Result<Vec<f64>, PolyError> {
    require_nonzero(p)?;
    let a = &p.coeffs;
    Ok((1..a.len()).map(|i| a[i] / a[i - 1]).collect())
}

/// Target characteristic polynomial of degree `gamma.len() + 1`.
///
/// `a_0 = a0`, `a_1 = a0 τ` and
/// `a_i = a0 τ^i / (γ_{i-1} γ_{i-2}² ⋯ γ_1^{i-1})` for `i ≥ 2`.
pub fn target_poly(gamma: &[f64], tau: f64, a0: f64) -> Result<Polynomial, PolyError> {
    if gamma.is_empty() {
        return Err(PolyError::DegreeTooLow { degree: 1, required: 2 });
    }
    if let Some((i, &g)) = gamma.iter().enumerate().find(|(_, g)| !(g.is_finite() && **g > 0.0)) {
        return Err(PolyError::InvalidGamma { index: i + 1, value: g });
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(PolyError::InvalidTau(tau));
    }
    if !(a0.is_finite() && a0 > 0.0) {
        return Err(PolyError::InvalidScale(a0));
    }
    let n = gamma.len() + 1;
    // a_{i+1} = a_i τ / (γ_1 γ_2 ⋯ γ_i), which telescopes to the closed form.
    let mut coeffs = Vec::with_capacity(n + 1);
    coeffs.push(a0);
    coeffs.push(a0 * tau);
    let mut prefix = 1.0;
    for g in &gamma[..n - 1] {
        prefix *= g;
        let prev = *coeffs.last().unwrap();
        coeffs.push(prev * tau / prefix);
    }
    // Every coefficient is positive, so nothing may be trimmed however small.
    Ok(Polynomial { coeffs })
}

/// Outcome of a Routh–Hurwitz test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouthVerdict {
    /// Every root lies strictly in the open left half plane.
    Stable,
    /// At least one root on or right of the imaginary axis.
    Unstable,
    /// A Routh row vanished identically (roots symmetric about the origin).
    /// Such a polynomial is never strictly Hurwitz.
    DegenerateRow { row: usize },
}

impl RouthVerdict {
    pub fn is_stable(self) -> bool {
        matches!(self, RouthVerdict::Stable)
    }
}

/// Routh–Hurwitz table test.
pub fn routh(p: &Polynomial) -> RouthVerdict {
    if p.is_zero() {
        return RouthVerdict::Unstable;
    }
    let n = p.degree();
    if n == 0 {
        return RouthVerdict::Stable;
    }
    let sign = p.leading().signum();
    // Descending coefficients, normalized to a positive leading term.
    let desc: Vec<f64> = p.coeffs.iter().rev().map(|c| c * sign).collect();
    if desc.iter().any(|&c| c <= 0.0) {
        return RouthVerdict::Unstable;
    }
    let width = n / 2 + 1;
    let mut upper: Vec<f64> = (0..width).map(|j| desc.get(2 * j).copied().unwrap_or(0.0)).collect();
    let mut lower: Vec<f64> = (0..width).map(|j| desc.get(2 * j + 1).copied().unwrap_or(0.0)).collect();
    for row in 1..=n {
        let scale = upper.iter().chain(lower.iter()).fold(0.0_f64, |m, c| m.max(c.abs()));
        for c in lower.iter_mut() {
            if c.abs() <= ROUTH_ZERO_TOLERANCE * scale {
                *c = 0.0;
            }
        }
        if lower.iter().all(|&c| c == 0.0) {
            return RouthVerdict::DegenerateRow { row };
        }
        if lower[0] <= 0.0 {
            return RouthVerdict::Unstable;
        }
        if row == n {
            break;
        }
        let next: Vec<f64> = (0..width)
            .map(|j| {
                let a = upper.get(j + 1).copied().unwrap_or(0.0);
                let b = lower.get(j + 1).copied().unwrap_or(0.0);
                (lower[0] * a - upper[0] * b) / lower[0]
            })
            .collect();
        upper = std::mem::replace(&mut lower, next);
    }
    RouthVerdict::Stable
}

/// True iff every root of `p` has strictly negative real part.
pub fn is_hurwitz(p: &Polynomial) -> bool {
    routh(p).is_stable()
}

/// Roots as `(re, im)` pairs, from the eigenvalues of the companion matrix.
pub fn roots(p: &Polynomial) -> Vec<(f64, f64)> {
    let n = p.degree();
    if p.is_zero() || n == 0 {
        return Vec::new();
    }
    let lead = p.leading();
    let mut companion = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        companion[(i, n - 1)] = -p.coeffs[i] / lead;
    }
    companion.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect()
}

/// CDM sufficient stability condition: all coefficients of one sign and
/// `γ_i > 1.5 γ*_i` for every index.
pub fn lipatov_sufficient(p: &Polynomial) -> Result<bool, PolyError> {
    let gamma = stability_indices(p)?;
    let sign = p.leading().signum();
    if p.coeffs.iter().any(|c| c * sign <= 0.0) {
        return Ok(false);
    }
    let limits = stability_limits_from_indices(&gamma);
    Ok(gamma.iter().zip(&limits).all(|(g, l)| *g > LIPATOV_MARGIN * l))
}
