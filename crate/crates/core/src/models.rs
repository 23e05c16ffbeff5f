//! The two conditionally solvable models.
//!
//! Sextic oscillator on the full line,
//! `H = -d²/dx² - a x² - b x⁴ + x⁶`, expanded in
//! `φ_j = x^{s+2j} exp(b x²/4 - x⁴/4)`.
//!
//! Perturbed Coulomb problem on the half line,
//! `H = -d²/dr² + γ(γ+1)/r² - a/r - b r + r²`, expanded in
//! `φ_j = r^{γ+1+j} exp(b r/2 - r²/2)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ttrr::{Affine, RecurrenceModel, SpectralUnknown};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Sextic,
    Coulomb,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Sextic => "sextic",
            ModelKind::Coulomb => "coulomb",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SexticParams {
    pub a: f64,
    pub b: f64,
    /// Parity: 0 even, 1 odd.
    pub s: u8,
}

impl SexticParams {
    pub fn new(a: f64, b: f64, s: u8) -> Result<Self> {
        if s > 1 {
            return Err(Error::Invalid(format!("parity s must be 0 or 1, got {s}")));
        }
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::Invalid("sextic parameters must be finite".into()));
        }
        Ok(Self { a, b, s })
    }

    pub fn sf(&self) -> f64 {
        f64::from(self.s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoulombParams {
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
}

impl CoulombParams {
    pub fn new(gamma: f64, a: f64, b: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Invalid(format!("gamma must be positive and finite, got {gamma}")));
        }
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::Invalid("Coulomb parameters must be finite".into()));
        }
        Ok(Self { gamma, a, b })
    }
}

/// `(A_j, B_j)` of the sextic recurrence at energy `e`.
pub fn sextic_coeffs(j: usize, p: &SexticParams, e: f64) -> (f64, f64) {
    let jf = j as f64;
    let s = p.sf();
    let den = (jf + 1.0) * (2.0 * jf + 2.0 * s + 1.0);
    let a_j = -(p.b * (4.0 * jf + 2.0 * s + 1.0) + 2.0 * e) / (4.0 * den);
    let b_j = -(4.0 * p.a + p.b * p.b - 4.0 * (4.0 * jf + 2.0 * s - 1.0)) / (8.0 * den);
    (a_j, b_j)
}

/// `(A_j, B_j)` of the Coulomb recurrence at energy `e`.
pub fn coulomb_coeffs(j: usize, p: &CoulombParams, e: f64) -> (f64, f64) {
    let jf = j as f64;
    let g = p.gamma;
    let den = (jf + 1.0) * (jf + 2.0 * (g + 1.0));
    let a_j = -(p.a + p.b * (jf + g + 1.0)) / den;
    let b_j = -(p.b * p.b + 4.0 * (e - 2.0 * jf - 2.0 * g - 1.0)) / (4.0 * den);
    (a_j, b_j)
}

/// Sextic recurrence with `λ = E`.
#[derive(Debug, Clone, Copy)]
pub struct SexticRecurrence {
    pub params: SexticParams,
}

impl SexticRecurrence {
    pub fn new(params: SexticParams) -> Self {
        Self { params }
    }
}

impl RecurrenceModel for SexticRecurrence {
    fn spectral_unknown(&self) -> SpectralUnknown {
        SpectralUnknown::Energy
    }

    fn a_coefficient(&self, j: usize) -> Affine {
        let intercept = sextic_coeffs(j, &self.params, 0.0).0;
        let slope = sextic_coeffs(j, &self.params, 1.0).0 - intercept;
        Affine { slope, intercept }
    }

    fn b_coefficient(&self, j: usize) -> f64 {
        sextic_coeffs(j, &self.params, 0.0).1
    }

    fn coefficients(&self, j: usize, lambda: f64) -> (f64, f64) {
        sextic_coeffs(j, &self.params, lambda)
    }
}

/// Coulomb recurrence with `λ = a` at fixed energy.
#[derive(Debug, Clone, Copy)]
pub struct CoulombRecurrence {
    pub gamma: f64,
    pub b: f64,
    pub energy: f64,
}

impl CoulombRecurrence {
    pub fn new(gamma: f64, b: f64, energy: f64) -> Result<Self> {
        CoulombParams::new(gamma, 0.0, b)?;
        if !energy.is_finite() {
            return Err(Error::Invalid("energy must be finite".into()));
        }
        Ok(Self { gamma, b, energy })
    }

    fn params(&self, a: f64) -> CoulombParams {
        CoulombParams {
            gamma: self.gamma,
            a,
            b: self.b,
        }
    }
}

impl RecurrenceModel for CoulombRecurrence {
    fn spectral_unknown(&self) -> SpectralUnknown {
        SpectralUnknown::CoulombStrength
    }

    fn a_coefficient(&self, j: usize) -> Affine {
        let jf = j as f64;
        let den = (jf + 1.0) * (jf + 2.0 * (self.gamma + 1.0));
        Affine {
            slope: -1.0 / den,
            intercept: -self.b * (jf + self.gamma + 1.0) / den,
        }
    }

    fn b_coefficient(&self, j: usize) -> f64 {
        coulomb_coeffs(j, &self.params(0.0), self.energy).1
    }

    fn coefficients(&self, j: usize, lambda: f64) -> (f64, f64) {
        coulomb_coeffs(j, &self.params(lambda), self.energy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WellClass {
    SingleWell,
    DoubleWell,
    TripleWell,
}

/// Case split of `V = -a x² - b x⁴ + x⁶` by the sign of `4a + b²` and of `a`.
///
/// This is the coarse trichotomy used to describe the figures, not a count
/// of local minima: for `a < 0` the rule reports a triple well whenever
/// `b² > -4a`, but side wells only exist when `b > 0` and `b² > -3a`.
pub fn classify_wells(a: f64, b: f64) -> Result<WellClass> {
    let disc = 4.0 * a + b * b;
    if disc < 0.0 {
        Ok(WellClass::SingleWell)
    } else if disc > 0.0 && a > 0.0 {
        Ok(WellClass::DoubleWell)
    } else if disc > 0.0 && a < 0.0 {
        Ok(WellClass::TripleWell)
    } else {
        Err(Error::WellBoundary { a, b })
    }
}

/// `H φ_j = Σ_k coeffs[k] φ_{j + lowest_offset + k}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HAction {
    pub lowest_offset: isize,
    pub coeffs: [f64; 3],
}

impl HAction {
    /// `(basis index offset, coefficient)` pairs.
    pub fn terms(&self) -> impl Iterator<Item = (isize, f64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(k, &c)| (self.lowest_offset + k as isize, c))
    }
}

/// Action of the sextic Hamiltonian on `φ_j`: terms on `φ_{j-1}, φ_j, φ_{j+1}`.
pub fn sextic_h_action(j: usize, p: &SexticParams) -> HAction {
    let m = p.sf() + 2.0 * j as f64;
    let t_minus = -m * (m - 1.0);
    let t_zero = -0.5 * p.b * (2.0 * m + 1.0);
    let t_plus = 2.0 * m + 3.0 - p.a - 0.25 * p.b * p.b;
    HAction {
        lowest_offset: -1,
        coeffs: [t_minus, t_zero, t_plus],
    }
}

/// Action of the Coulomb Hamiltonian on `φ_j`: terms on `φ_{j-2}, φ_{j-1}, φ_j`.
///
/// With `p = γ+1+j` the r⁶-like and r-like pieces cancel against the
/// potential, leaving `(γ(γ+1) - p(p-1)) r^{p-2} - (a + p b) r^{p-1} +
/// (2p + 1 - b²/4) r^p`, all times the exponential.
pub fn coulomb_h_action(j: usize, p: &CoulombParams) -> HAction {
    let jf = j as f64;
    let g = p.gamma;
    let power = g + 1.0 + jf;
    HAction {
        lowest_offset: -2,
        coeffs: [
            -jf * (2.0 * g + jf + 1.0),
            -(p.a + power * p.b),
            2.0 * power + 1.0 - 0.25 * p.b * p.b,
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    Sextic,
    /// `gamma = Some(γ)` adds the centrifugal term `γ(γ+1)/r²`.
    Coulomb { gamma: Option<f64> },
}

pub fn potential(model: Potential, a: f64, b: f64, point: f64) -> Result<f64> {
    match model {
        Potential::Sextic => {
            let x2 = point * point;
            Ok(x2 * (-a + x2 * (-b + x2)))
        }
        Potential::Coulomb { gamma } => {
            if !(point > 0.0) {
                return Err(Error::Domain { point });
            }
            let centrifugal = gamma.map_or(0.0, |g| g * (g + 1.0) / (point * point));
            Ok(centrifugal - a / point - b * point + point * point)
        }
    }
}
