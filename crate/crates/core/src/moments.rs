//! Power moments of the squared basis weights.
//!
//! Oscillator: `μ_m = ∫_{-∞}^{∞} x^m exp(b x²/2 - x⁴/2) dx` (even `m`).
//! Coulomb: `ν_m = ∫_0^∞ r^m exp(b r - r²) dr` (real `m > -1`).
//!
//! Two seeds come from adaptive Gauss–Legendre quadrature; the rest follow
//! from integrating the derivative of `x^{m+1} w(x)` by parts:
//!
//! ```text
//! μ_{m+4} = ((m+1) μ_m + b μ_{m+2}) / 2
//! ν_{m+2} = ((m+1) ν_m + b ν_{m+1}) / 2
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::quadrature::{decay_cutoff, exp_sinh, integrate_panels};

const SEED_TOL: f64 = 1e-14;
const ORACLE_TOL: f64 = 1e-13;

/// A quadrature value with its error estimate (absolute).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Seed {
    pub value: f64,
    pub estimate: f64,
}

/// Moments `first_order, first_order + step, ...` with absolute error estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentTable {
    pub model: ModelKind,
    pub b: f64,
    pub first_order: f64,
    pub step: f64,
    values: Vec<f64>,
    errors: Vec<f64>,
}

impl MomentTable {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn orders(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.first_order + self.step * k as f64)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    fn index(&self, order: f64) -> Result<usize> {
        let k = (order - self.first_order) / self.step;
        let rounded = k.round();
        if (k - rounded).abs() > 1e-9 || rounded < 0.0 || rounded as usize >= self.len() {
            return Err(Error::MomentUnavailable { order });
        }
        Ok(rounded as usize)
    }

    /// Moment of the given order.
    pub fn get(&self, order: impl Into<f64>) -> Result<f64> {
        Ok(self.values[self.index(order.into())?])
    }

    pub fn error(&self, order: impl Into<f64>) -> Result<f64> {
        Ok(self.errors[self.index(order.into())?])
    }

    pub fn max_order(&self) -> f64 {
        self.first_order + self.step * (self.len() as f64 - 1.0)
    }
}

fn sextic_ln_weight(m: f64, b: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| {
        let x2 = x * x;
        let power = if m == 0.0 { 0.0 } else { m * x.ln() };
        power + 0.5 * b * x2 - 0.5 * x2 * x2
    }
}

fn coulomb_ln_weight(m: f64, b: f64) -> impl Fn(f64) -> f64 {
    move |r: f64| {
        let power = if m == 0.0 { 0.0 } else { m * r.ln() };
        power + b * r - r * r
    }
}

/// Cutoff for the oscillator quadrature: at least 6, extended until the
/// integrand has decayed by e⁻⁴⁵ from its peak.
pub fn sextic_cutoff(m: f64, b: f64) -> f64 {
    decay_cutoff(sextic_ln_weight(m, b), 6.0)
}

/// Cutoff for the Coulomb quadrature: at least `max(8, b + 8)`.
pub fn coulomb_cutoff(m: f64, b: f64) -> f64 {
    decay_cutoff(coulomb_ln_weight(m, b), 8.0f64.max(b + 8.0))
}

fn sextic_seed(m: f64, b: f64) -> Result<Seed> {
    let cutoff = sextic_cutoff(m, b);
    let (half, est) = integrate_panels(sextic_ln_weight(m, b), cutoff, 0, None, SEED_TOL)?;
    Ok(Seed {
        value: 2.0 * half,
        estimate: 2.0 * est.max(f64::EPSILON * half),
    })
}

/// `(μ_0, μ_2)`.
pub fn sextic_moment_seeds(b: f64) -> Result<(Seed, Seed)> {
    Ok((sextic_seed(0.0, b)?, sextic_seed(2.0, b)?))
}

/// Recursion error model: the propagated absolute errors of the inputs plus
/// one rounding per output.
fn propagate(c0: f64, e0: f64, c1: f64, e1: f64, value: f64) -> f64 {
    0.5 * (c0.abs() * e0 + c1.abs() * e1) + 2.0 * f64::EPSILON * value.abs()
}

/// `μ_0, μ_2, ..., μ_{m_max}` for even `m_max`.
pub fn sextic_moments(b: f64, m_max: usize) -> Result<MomentTable> {
    if m_max % 2 != 0 {
        return Err(Error::Invalid(format!("m_max must be even, got {m_max}")));
    }
    let (mu0, mu2) = sextic_moment_seeds(b)?;
    let count = m_max / 2 + 1;
    let mut values = vec![mu0.value, mu2.value];
    let mut errors = vec![mu0.estimate, mu2.estimate];
    values.truncate(count);
    errors.truncate(count);
    for k in 2..count {
        // μ_{m+4} with m = 2(k-2)
        let m = 2.0 * (k as f64 - 2.0);
        let v = 0.5 * ((m + 1.0) * values[k - 2] + b * values[k - 1]);
        let e = propagate(m + 1.0, errors[k - 2], b, errors[k - 1], v);
        values.push(v);
        errors.push(e);
    }
    Ok(MomentTable {
        model: ModelKind::Sextic,
        b,
        first_order: 0.0,
        step: 2.0,
        values,
        errors,
    })
}

fn coulomb_seed(m: f64, b: f64) -> Result<Seed> {
    if !(m > -1.0) {
        return Err(Error::Invalid(format!("moment order must exceed -1, got {m}")));
    }
    let cutoff = coulomb_cutoff(m, b);
    // ∫_0^ε r^m e^{br - r²} dr ≈ ε^{m+1}/(m+1) + b ε^{m+2}/(m+2); the next
    // term is O(ε^{m+3}).
    let inner = move |eps: f64| eps.powf(m + 1.0) / (m + 1.0) + b * eps.powf(m + 2.0) / (m + 2.0);
    let (value, est) = integrate_panels(coulomb_ln_weight(m, b), cutoff, 48, Some(&inner), SEED_TOL)?;
    Ok(Seed {
        value,
        estimate: est.max(f64::EPSILON * value),
    })
}

/// `(ν_{m0}, ν_{m0+1})`.
pub fn coulomb_moment_seeds(m0: f64, b: f64) -> Result<(Seed, Seed)> {
    Ok((coulomb_seed(m0, b)?, coulomb_seed(m0 + 1.0, b)?))
}

/// `ν_{m0}, ν_{m0+1}, ..., ν_{m0+count-1}`.
pub fn coulomb_moments(m0: f64, b: f64, count: usize) -> Result<MomentTable> {
    let (first, second) = coulomb_moment_seeds(m0, b)?;
    let mut values = vec![first.value, second.value];
    let mut errors = vec![first.estimate, second.estimate];
    values.truncate(count);
    errors.truncate(count);
    for k in 2..count {
        let m = m0 + k as f64 - 2.0;
        let v = 0.5 * ((m + 1.0) * values[k - 2] + b * values[k - 1]);
        let e = propagate(m + 1.0, errors[k - 2], b, errors[k - 1], v);
        values.push(v);
        errors.push(e);
    }
    Ok(MomentTable {
        model: ModelKind::Coulomb,
        b,
        first_order: m0,
        step: 1.0,
        values,
        errors,
    })
}

/// Direct quadrature of a single moment by the exp-sinh rule, sharing no code
/// with the seed quadrature or the recursion.
pub fn quadrature_oracle(model: ModelKind, m: f64, b: f64) -> Result<f64> {
    match model {
        ModelKind::Sextic => {
            let (half, _) = exp_sinh(sextic_ln_weight(m, b), ORACLE_TOL)?;
            Ok(2.0 * half)
        }
        ModelKind::Coulomb => {
            if !(m > -1.0) {
                return Err(Error::Invalid(format!("moment order must exceed -1, got {m}")));
            }
            Ok(exp_sinh(coulomb_ln_weight(m, b), ORACLE_TOL)?.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    use statrs::function::gamma::gamma;

    // μ_0(0) = 2^{1/4} Γ(1/4) / 2, μ_2(0) = 2^{3/4} Γ(3/4) / 2
    fn closed_mu0() -> f64 {
        2f64.powf(0.25) * gamma(0.25) / 2.0
    }

    fn closed_mu2() -> f64 {
        2f64.powf(0.75) * gamma(0.75) / 2.0
    }

    #[test]
    fn sextic_seeds_at_zero_field() {
        let (mu0, mu2) = sextic_moment_seeds(0.0).unwrap();
        assert!(rel(mu0.value, closed_mu0()) < 1e-12);
        assert!(rel(mu2.value, closed_mu2()) < 1e-12);
        assert!((mu0.value - 2.155801).abs() < 1e-6);
        assert!(mu0.estimate < 1e-12 * mu0.value);
    }

    #[test]
    fn sextic_seeds_increase_with_b() {
        let mut prev = sextic_moment_seeds(-3.0).unwrap();
        for k in -5..=12 {
            let next = sextic_moment_seeds(k as f64 * 0.5).unwrap();
            assert!(next.0.value > prev.0.value && next.1.value > prev.1.value);
            prev = next;
        }
    }

    #[test]
    fn sextic_recursion_examples() {
        let t = sextic_moments(0.0, 8).unwrap();
        assert_eq!(t.len(), 5);
        assert!((t.get(4).unwrap() - 0.5 * t.get(0).unwrap()).abs() < 1e-15);
        assert!((t.get(6).unwrap() - 1.5 * t.get(2).unwrap()).abs() < 1e-15);
        assert!(rel(t.get(4).unwrap(), closed_mu0() / 2.0) < 1e-12);
        assert!(rel(t.get(6).unwrap(), 1.5 * closed_mu2()) < 1e-12);
        let t1 = sextic_moments(1.0, 4).unwrap();
        let oracle = quadrature_oracle(ModelKind::Sextic, 4.0, 1.0).unwrap();
        assert!(rel(t1.get(4).unwrap(), oracle) < 1e-10);
        assert!(sextic_moments(0.0, 7).is_err());
        assert!(matches!(t.get(10.0), Err(Error::MomentUnavailable { .. })));
        assert!(t.get(3.0).is_err());
    }

    #[test]
    fn coulomb_examples() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let (n0, n1) = coulomb_moment_seeds(0.0, 0.0).unwrap();
        assert!(rel(n0.value, sqrt_pi / 2.0) < 1e-13);
        assert!(rel(n1.value, 0.5) < 1e-13);
        let t = coulomb_moments(0.0, 0.0, 4).unwrap();
        assert!(rel(t.get(2.0).unwrap(), sqrt_pi / 4.0) < 1e-13);
        assert!(rel(t.get(3.0).unwrap(), 0.5) < 1e-13);
        let t = coulomb_moments(0.0, 1.0, 3).unwrap();
        let oracle = quadrature_oracle(ModelKind::Coulomb, 2.0, 1.0).unwrap();
        assert!(rel(t.get(2.0).unwrap(), oracle) < 1e-10);
    }

    #[test]
    fn coulomb_fractional_and_near_singular_orders() {
        for &m0 in &[0.5, -0.5, -0.9] {
            for &b in &[-1.5, 0.0, 2.0] {
                let (seed, _) = coulomb_moment_seeds(m0, b).unwrap();
                let oracle = quadrature_oracle(ModelKind::Coulomb, m0, b).unwrap();
                assert!(rel(seed.value, oracle) < 1e-11, "m0={m0} b={b}: {} vs {oracle}", seed.value);
            }
        }
        assert!(coulomb_moment_seeds(-1.0, 0.0).is_err());
    }

    #[test]
    fn tables_are_positive_and_log_convex() {
        for &b in &[-2.0, 0.0, 2.0] {
            let t = sextic_moments(b, 40).unwrap();
            assert!(t.values().iter().all(|&v| v > 0.0));
            for k in 0..t.len() - 2 {
                let v = t.values();
                assert!(v[k] * v[k + 2] >= v[k + 1] * v[k + 1]);
            }
            let c = coulomb_moments(2.0, b, 30).unwrap();
            assert!(c.values().iter().all(|&v| v > 0.0));
            for k in 0..c.len() - 2 {
                let v = c.values();
                assert!(v[k] * v[k + 2] >= v[k + 1] * v[k + 1]);
            }
        }
    }
}
