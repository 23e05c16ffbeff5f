//! Oracles shared by the integration tests. Nothing here calls into the
//! library's numerical code.
#![allow(dead_code)]

use nalgebra::DMatrix;

/// `(slope, intercept, B_j)` of the oscillator recurrence in `λ = E`,
/// typed in from the published coefficients.
pub fn sextic_recurrence(j: usize, a: f64, b: f64, s: u8) -> (f64, f64, f64) {
    let (j, s) = (j as f64, f64::from(s));
    let den = (j + 1.0) * (2.0 * j + 2.0 * s + 1.0);
    let slope = -2.0 / (4.0 * den);
    let intercept = -b * (4.0 * j + 2.0 * s + 1.0) / (4.0 * den);
    let bj = -(4.0 * a + b * b - 4.0 * (4.0 * j + 2.0 * s - 1.0)) / (8.0 * den);
    (slope, intercept, bj)
}

/// `(slope, intercept, B_j)` of the Coulomb recurrence in `λ = a`.
pub fn coulomb_recurrence(j: usize, gamma: f64, b: f64, e: f64) -> (f64, f64, f64) {
    let j = j as f64;
    let den = (j + 1.0) * (j + 2.0 * (gamma + 1.0));
    let slope = -1.0 / den;
    let intercept = -b * (j + gamma + 1.0) / den;
    let bj = -(b * b + 4.0 * (e - 2.0 * j - 2.0 * gamma - 1.0)) / (4.0 * den);
    (slope, intercept, bj)
}

fn poly_mul_linear(p: &[f64], slope: f64, intercept: f64) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + 1];
    for (k, &c) in p.iter().enumerate() {
        out[k] += intercept * c;
        out[k + 1] += slope * c;
    }
    out
}

/// Coefficients (ascending powers of `λ`) of `c_{n+1}(λ)`.
pub fn truncation_polynomial(n: usize, coeff: impl Fn(usize) -> (f64, f64, f64)) -> Vec<f64> {
    let mut prev: Vec<f64> = vec![0.0];
    let mut cur: Vec<f64> = vec![1.0];
    for j in 0..=n {
        let (slope, intercept, bj) = coeff(j);
        let mut next = poly_mul_linear(&cur, slope, intercept);
        for (k, &c) in prev.iter().enumerate() {
            next[k] += bj * c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// `(c_{n+1}(λ), dc_{n+1}/dλ)` by the forward recurrence and its derivative.
pub fn truncation_value(n: usize, lambda: f64, coeff: impl Fn(usize) -> (f64, f64, f64)) -> (f64, f64) {
    let (mut p0, mut p1) = (0.0, 1.0);
    let (mut d0, mut d1) = (0.0, 0.0);
    for j in 0..=n {
        let (slope, intercept, bj) = coeff(j);
        let a = slope * lambda + intercept;
        let p2 = a * p1 + bj * p0;
        let d2 = slope * p1 + a * d1 + bj * d0;
        p0 = p1;
        p1 = p2;
        d0 = d1;
        d1 = d2;
    }
    (p1, d1)
}

/// Real roots of `Σ c_k λ^k` from the companion matrix, ascending.
pub fn companion_roots(coeffs: &[f64]) -> Vec<f64> {
    let deg = coeffs.len() - 1;
    let lead = coeffs[deg];
    let m = DMatrix::from_fn(deg, deg, |i, j| {
        if j == deg - 1 {
            -coeffs[i] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let mut roots: Vec<f64> = m
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() < 1e-6 * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}

/// Companion-matrix roots of `c_{n+1}(λ)` polished by Newton steps on the
/// recurrence itself.
pub fn polynomial_root_oracle(n: usize, coeff: impl Fn(usize) -> (f64, f64, f64) + Copy) -> Vec<f64> {
    let poly = truncation_polynomial(n, coeff);
    let mut roots = companion_roots(&poly);
    for r in roots.iter_mut() {
        for _ in 0..50 {
            let (v, d) = truncation_value(n, *r, coeff);
            if d == 0.0 {
                break;
            }
            let step = v / d;
            *r -= step;
            if step.abs() <= 1e-16 * (1.0 + r.abs()) {
                break;
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots
}

// Closed forms as printed for the oscillator.

pub fn sextic_n0(b: f64, s: u8) -> (f64, f64) {
    let s = f64::from(s);
    (2.0 * s + 3.0 - b * b / 4.0, -b * (2.0 * s + 1.0) / 2.0)
}

/// `(a, [E_0, E_1])` for `n = 1`.
pub fn sextic_n1(b: f64, s: u8) -> (f64, [f64; 2]) {
    let s = f64::from(s);
    let root = (b * b + 8.0 * (2.0 * s + 1.0)).sqrt();
    let lin = b * (2.0 * s + 3.0);
    (2.0 * s + 7.0 - b * b / 4.0, [-(lin + 2.0 * root) / 2.0, -(lin - 2.0 * root) / 2.0])
}

/// The printed cubic for `n = 2`, and the sum of its term magnitudes.
pub fn sextic_n2_cubic(e: f64, b: f64, s: u8) -> (f64, f64) {
    let s = f64::from(s);
    let terms = [
        8.0 * e * e * e,
        12.0 * b * (2.0 * s + 5.0) * e * e,
        2.0 * (b * b * (12.0 * s * s + 60.0 * s + 59.0) - 256.0 * (s + 1.0)) * e,
        b * (2.0 * s + 1.0) * (b * b * (2.0 * s + 5.0) * (2.0 * s + 9.0) - 256.0 * (s + 3.0)),
    ];
    (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
}

pub fn coulomb_n0(gamma: f64, b: f64) -> (f64, f64) {
    (2.0 * gamma + 3.0 - b * b / 4.0, -b * (gamma + 1.0))
}

/// `(E, [a^(1), a^(2)])` for `n = 1`.
pub fn coulomb_n1(gamma: f64, b: f64) -> (f64, [f64; 2]) {
    let root = (b * b + 16.0 * (gamma + 1.0)).sqrt();
    let lin = b * (2.0 * gamma + 3.0);
    (2.0 * gamma + 5.0 - b * b / 4.0, [-(lin + root) / 2.0, -(lin - root) / 2.0])
}

/// The printed cubic in `a` for `n = 2`, and the sum of its term magnitudes.
pub fn coulomb_n2_cubic(a: f64, gamma: f64, b: f64) -> (f64, f64) {
    let g = gamma;
    let terms = [
        a * a * a,
        3.0 * a * a * b * (g + 2.0),
        a * (b * b * (3.0 * g * g + 12.0 * g + 11.0) - 4.0 * (4.0 * g + 5.0)),
        b * (g + 1.0) * (b * b * (g + 2.0) * (g + 3.0) - 4.0 * (4.0 * g + 9.0)),
    ];
    (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
}

/// Moments by the trapezoid rule after `x = e^u`, which turns the integrand
/// into a smooth, doubly decaying function on the whole line.
///
/// Oscillator: `∫_{-∞}^{∞} x^m exp(b x²/2 - x⁴/2) dx` (even `m`).
/// Coulomb: `∫_0^∞ r^m exp(b r - r²) dr`.
pub fn trapezoid_moment(oscillator: bool, m: f64, b: f64) -> f64 {
    let h = 1.0 / 128.0;
    let lo = -(60.0 / (m + 1.0)) - 2.0;
    let hi = 4.0;
    let ln_f = |u: f64| {
        let x = u.exp();
        if oscillator {
            (m + 1.0) * u + 0.5 * b * x * x - 0.5 * x.powi(4)
        } else {
            (m + 1.0) * u + b * x - x * x
        }
    };
    let steps = ((hi - lo) / h).ceil() as usize;
    let mut sum = 0.0;
    let mut carry = 0.0;
    for k in 0..=steps {
        let v = ln_f(lo + h * k as f64).exp();
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    let total = sum * h;
    if oscillator { 2.0 * total } else { total }
}
