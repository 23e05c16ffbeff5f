//! Gauss–Legendre panels, compensated sums and a double-exponential rule for
//! the half line.

use crate::error::{Error, Result};

/// Kahan–Babuška compensated accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * p - pm) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

/// Nodes and weights of `rule` mapped onto every panel `[breaks[k], breaks[k+1]]`.
pub fn composite(breaks: &[f64], rule: &Rule) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity((breaks.len() - 1) * rule.nodes.len());
    let mut ws = Vec::with_capacity(xs.capacity());
    for pair in breaks.windows(2) {
        let half = 0.5 * (pair[1] - pair[0]);
        let mid = 0.5 * (pair[1] + pair[0]);
        for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
            xs.push(mid + half * t);
            ws.push(half * w);
        }
    }
    (xs, ws)
}

/// Breakpoints for `[0, cutoff]`: `graded` geometric halvings of the first
/// unit of length toward 0, then uniform panels of `width`.
pub fn half_line_breaks(cutoff: f64, width: f64, graded: usize) -> Vec<f64> {
    let first = width.min(cutoff);
    let mut breaks = vec![0.0];
    for k in (1..=graded).rev() {
        breaks.push(first * 0.5f64.powi(k as i32));
    }
    let panels = ((cutoff - first) / width).ceil().max(0.0) as usize;
    breaks.push(first);
    let step = if panels > 0 { (cutoff - first) / panels as f64 } else { 0.0 };
    for k in 1..=panels {
        breaks.push(first + step * k as f64);
    }
    breaks
}

/// Smallest `X >= start` (in steps of 0.25) past the maximum of `ln_f` at
/// which `ln_f` has fallen 45 below its largest sampled value.
pub fn decay_cutoff<F: Fn(f64) -> f64>(ln_f: F, start: f64) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut x = 0.125;
    while x < start {
        peak = peak.max(ln_f(x));
        x += 0.125;
    }
    let mut cut = start;
    loop {
        let v = ln_f(cut);
        peak = peak.max(v);
        if v < peak - 45.0 && ln_f(cut + 0.25) < v {
            return cut;
        }
        cut += 0.25;
        if cut > 1e4 {
            return cut;
        }
    }
}

/// Adaptive composite Gauss–Legendre on `[0, cutoff]` of `exp(ln_f)`.
///
/// The panel width halves until two successive estimates agree to `tol`
/// relative. When given, `near_zero(ε)` supplies the integral over the
/// innermost panel `[0, ε]` analytically instead of sampling it (for
/// integrable endpoint singularities). Returns `(value, |difference of last
/// two estimates|)`.
pub fn integrate_panels<F>(
    ln_f: F,
    cutoff: f64,
    graded: usize,
    near_zero: Option<&dyn Fn(f64) -> f64>,
    tol: f64,
) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let rule = gauss_legendre(20);
    let mut width = 0.5;
    let mut previous: Option<f64> = None;
    let mut last_diff = f64::INFINITY;
    for _ in 0..8 {
        let breaks = half_line_breaks(cutoff, width, graded);
        let skip = usize::from(near_zero.is_some());
        let (xs, ws) = composite(&breaks[skip..], &rule);
        let mut acc: CompensatedSum = xs.iter().zip(&ws).map(|(&x, &w)| w * ln_f(x).exp()).collect();
        if let Some(inner) = near_zero {
            acc.add(inner(breaks[1]));
        }
        let value = acc.value();
        if let Some(prev) = previous {
            last_diff = (value - prev).abs();
            if last_diff <= tol * value.abs() {
                return Ok((value, last_diff));
            }
        }
        previous = Some(value);
        width *= 0.5;
    }
    Err(Error::Precision {
        estimate: last_diff / previous.map_or(1.0, f64::abs),
    })
}

/// `∫_0^∞ exp(ln_f(x)) dx` by the exp-sinh substitution
/// `x = exp(π/2 sinh t)`, halving the step until successive trapezoid sums
/// agree to `tol` relative. Returns `(value, estimate)`.
pub fn exp_sinh<F: Fn(f64) -> f64>(ln_f: F, tol: f64) -> Result<(f64, f64)> {
    const T_LO: f64 = -6.6;
    const T_HI: f64 = 4.5;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let term = |t: f64| {
        let u = half_pi * t.sinh();
        let x = u.exp();
        if x == 0.0 || !x.is_finite() {
            return 0.0;
        }
        // dx/dt = π/2 cosh t · x
        let ln_jac = (half_pi * t.cosh()).ln() + u;
        let v = (ln_f(x) + ln_jac).exp();
        if v.is_finite() { v } else { 0.0 }
    };

    let mut h = 0.25;
    let mut acc = CompensatedSum::default();
    let k_lo = (T_LO / h).floor() as i64;
    let k_hi = (T_HI / h).ceil() as i64;
    for k in k_lo..=k_hi {
        acc.add(term(k as f64 * h));
    }
    let mut estimate = acc.value() * h;
    let mut diff = f64::INFINITY;
    for _ in 0..9 {
        h *= 0.5;
        let k_lo = (T_LO / h).floor() as i64;
        let k_hi = (T_HI / h).ceil() as i64;
        for k in k_lo..=k_hi {
            if k.rem_euclid(2) == 1 {
                acc.add(term(k as f64 * h));
            }
        }
        let next = acc.value() * h;
        diff = (next - estimate).abs();
        estimate = next;
        if diff <= tol * estimate.abs() {
            return Ok((estimate, diff));
        }
    }
    Err(Error::Precision {
        estimate: diff / estimate.abs(),
    })
}
