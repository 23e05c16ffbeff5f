//! Three-term recurrence engine.
//!
//! A model supplies coefficients of
//!
//! ```text
//! c_{j+1} = A_j c_j + B_j c_{j-1},   c_{-1} = 0, c_0 = 1
//! ```
//!
//! where `A_j` is affine in the spectral unknown λ and `B_j` does not depend
//! on it. Truncating at order `n` (`B_{n+1} = 0`, `c_{n+1} = 0`) turns the
//! recurrence into a tridiagonal eigenproblem in λ, which a diagonal
//! rescaling `c_j = Q_j c̃_j` makes real symmetric whenever every
//! `U_{j+1}/W_j` is positive.

use crate::error::{Error, Result};

/// Which physical quantity plays the role of λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralUnknown {
    /// λ = E (sextic oscillator).
    Energy,
    /// λ = a (Coulomb strength of the perturbed Coulomb model).
    CoulombStrength,
}

/// `slope * λ + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub slope: f64,
    pub intercept: f64,
}

impl Affine {
    pub fn at(&self, lambda: f64) -> f64 {
        self.slope * lambda + self.intercept
    }
}

/// Coefficient supplier for one physical model with all parameters except λ fixed.
pub trait RecurrenceModel {
    fn spectral_unknown(&self) -> SpectralUnknown;

    /// `A_j` as an affine function of λ.
    fn a_coefficient(&self, j: usize) -> Affine;

    /// `B_j`, independent of λ.
    fn b_coefficient(&self, j: usize) -> f64;

    fn coefficients(&self, j: usize, lambda: f64) -> (f64, f64) {
        (self.a_coefficient(j).at(lambda), self.b_coefficient(j))
    }
}

/// Flips the sign of every `A_j`, leaving `B_j` untouched.
pub struct Negated<'a, M: ?Sized>(pub &'a M);

impl<M: RecurrenceModel + ?Sized> RecurrenceModel for Negated<'_, M> {
    fn spectral_unknown(&self) -> SpectralUnknown {
        self.0.spectral_unknown()
    }

    fn a_coefficient(&self, j: usize) -> Affine {
        let a = self.0.a_coefficient(j);
        Affine {
            slope: -a.slope,
            intercept: -a.intercept,
        }
    }

    fn b_coefficient(&self, j: usize) -> f64 {
        self.0.b_coefficient(j)
    }
}

const RESCALE_ABOVE: f64 = 1e150;

/// Coefficients `c_0..c_m`.
///
/// Entry `j` equals `values[j] * exp(log_scale[j])`. The log-scale only moves
/// when the working pair grows past 1e150, so for ordinary inputs it is zero
/// throughout and `values` holds the coefficients directly.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSequence {
    values: Vec<f64>,
    log_scale: Vec<f64>,
}

impl CoefficientSequence {
    /// Builds a sequence from plain values. `values[0]` must be 1.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.first() != Some(&1.0) {
            return Err(Error::Invalid("coefficient sequence must start with c_0 = 1".into()));
        }
        let log_scale = vec![0.0; values.len()];
        Ok(Self { values, log_scale })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `c_j` in plain floating point (may be infinite after heavy rescaling).
    pub fn get(&self, j: usize) -> f64 {
        self.values[j] * self.log_scale[j].exp()
    }

    /// `ln |c_j|`, finite even when `c_j` itself would overflow.
    pub fn ln_abs(&self, j: usize) -> f64 {
        self.values[j].abs().ln() + self.log_scale[j]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.get(j)).collect()
    }

    /// `max_j ln |c_j|`.
    pub fn ln_max_abs(&self) -> f64 {
        (0..self.len())
            .map(|j| self.ln_abs(j))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_rescaled(&self) -> bool {
        self.log_scale.iter().any(|&s| s != 0.0)
    }
}

/// Forward iteration of the recurrence with coefficients supplied per index.
pub fn generate_with<F>(m: usize, mut coeffs: F) -> Result<CoefficientSequence>
where
    F: FnMut(usize) -> (f64, f64),
{
    let mut values = Vec::with_capacity(m + 1);
    let mut log_scale = Vec::with_capacity(m + 1);
    values.push(1.0);
    log_scale.push(0.0);

    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut scale = 0.0;
    for j in 0..m {
        let (a, b) = coeffs(j);
        let next = a * cur + b * prev;
        if !next.is_finite() {
            return Err(Error::Overflow { index: j + 1 });
        }
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE_ABOVE {
            let factor = cur.abs().max(1.0);
            cur /= factor;
            prev /= factor;
            scale += factor.ln();
        }
        values.push(cur);
        log_scale.push(scale);
    }
    Ok(CoefficientSequence { values, log_scale })
}

/// `c_0..c_m` for the model at spectral value `lambda`.
pub fn generate_coefficients<M: RecurrenceModel + ?Sized>(
    model: &M,
    lambda: f64,
    m: usize,
) -> Result<CoefficientSequence> {
    generate_with(m, |j| model.coefficients(j, lambda))
}

/// `ĉ_j = (-1)^j c_j`.
pub fn alternating_transform(c: &CoefficientSequence) -> CoefficientSequence {
    let values = c
        .values
        .iter()
        .enumerate()
        .map(|(j, &v)| if j % 2 == 1 { -v } else { v })
        .collect();
    CoefficientSequence {
        values,
        log_scale: c.log_scale.clone(),
    }
}

/// Rows `U_j c_{j-1} + (V_j - μ) c_j + W_j c_{j+1} = 0`, `j = 0..=n`, with
/// `c_{n+1} = 0`.
///
/// The matrix eigenvalue μ relates to the model's λ through
/// `λ = orientation * μ`. Rows are divided by `-|slope(A_j)|`, so `W_j > 0`
/// for both shipped models and their orientation is `-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalForm {
    /// `U_1..U_n`.
    pub u: Vec<f64>,
    /// `V_0..V_n`.
    pub v: Vec<f64>,
    /// `W_0..W_{n-1}`.
    pub w: Vec<f64>,
    pub orientation: f64,
}

impl TridiagonalForm {
    pub fn order(&self) -> usize {
        self.v.len() - 1
    }
}

pub fn to_tridiagonal<M: RecurrenceModel + ?Sized>(model: &M, n: usize) -> Result<TridiagonalForm> {
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n + 1);
    let mut w = Vec::with_capacity(n);
    let mut orientation = 0.0;
    for j in 0..=n {
        let a = model.a_coefficient(j);
        if a.slope == 0.0 || !a.slope.is_finite() {
            return Err(Error::ZeroSlope { index: j });
        }
        let sign = a.slope.signum();
        if orientation == 0.0 {
            orientation = sign;
        } else if sign != orientation {
            return Err(Error::Invalid(format!(
                "slope of A_{j} changes sign; the rewriting needs a uniform orientation"
            )));
        }
        let scale = a.slope.abs();
        v.push(-a.intercept / scale);
        if j >= 1 {
            u.push(-model.b_coefficient(j) / scale);
        }
        if j < n {
            w.push(1.0 / scale);
        }
    }
    Ok(TridiagonalForm { u, v, w, orientation })
}

/// Real symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::Invalid(format!(
                "tridiagonal shape mismatch: {} diagonal, {} off-diagonal entries",
                diag.len(),
                off.len()
            )));
        }
        if diag.iter().chain(off.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Invalid("tridiagonal entries must be finite".into()));
        }
        Ok(Self { diag, off })
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// `e_1..e_n`; `off()[k]` couples rows `k` and `k+1`.
    pub fn off(&self) -> &[f64] {
        &self.off
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Leading principal `k x k` block.
    pub fn leading(&self, k: usize) -> Self {
        Self {
            diag: self.diag[..k].to_vec(),
            off: self.off[..k.saturating_sub(1)].to_vec(),
        }
    }
}

/// Similarity transform `c_j = Q_j c̃_j` with `Q_{j+1}^2 = (U_{j+1}/W_j) Q_j^2`.
pub fn symmetrize(form: &TridiagonalForm) -> Result<SymTridiag> {
    let off = form
        .u
        .iter()
        .zip(&form.w)
        .enumerate()
        .map(|(j, (&u, &w))| {
            let ratio = u / w;
            if ratio > 0.0 && ratio.is_finite() {
                Ok((u * w).sqrt())
            } else {
                Err(Error::SymmetrizationImpossible { index: j, ratio })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    SymTridiag::new(form.v.clone(), off)
}

/// `Q_0..Q_n` of the symmetrizing transform, `Q_0 = 1`, all positive.
pub fn scaling_factors(form: &TridiagonalForm) -> Result<Vec<f64>> {
    let mut q = vec![1.0];
    for (j, (&u, &w)) in form.u.iter().zip(&form.w).enumerate() {
        let ratio = u / w;
        if !(ratio > 0.0) {
            return Err(Error::SymmetrizationImpossible { index: j, ratio });
        }
        q.push(q[j] * ratio.sqrt());
    }
    Ok(q)
}

/// Number of eigenvalues strictly below `x` (Sturm count via LDLᵀ pivots).
pub fn sturm_count(t: &SymTridiag, x: f64) -> usize {
    let pivmin = f64::MIN_POSITIVE
        * t.off
            .iter()
            .map(|e| e * e)
            .fold(1.0, f64::max);
    let mut count = 0;
    let mut q = t.diag[0] - x;
    for k in 0..t.dim() {
        if k > 0 {
            let e = t.off[k - 1];
            q = t.diag[k] - x - e * e / q;
        }
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn gershgorin(t: &SymTridiag) -> (f64, f64) {
    let n = t.dim();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..n {
        let left = if k > 0 { t.off[k - 1].abs() } else { 0.0 };
        let right = if k + 1 < n { t.off[k].abs() } else { 0.0 };
        lo = lo.min(t.diag[k] - left - right);
        hi = hi.max(t.diag[k] + left + right);
    }
    let pad = f64::EPSILON * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) * 4.0;
    (lo - pad, hi + pad)
}

/// All eigenvalues, ascending, by Sturm bisection run to adjacent floats.
///
/// Zero off-diagonals split the matrix into independent blocks; 1x1 blocks
/// contribute their diagonal entry exactly.
pub fn eig_sym_tridiag(t: &SymTridiag) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.dim());
    let mut start = 0;
    for k in 0..t.dim() {
        let split = k + 1 == t.dim() || t.off[k] == 0.0;
        if split {
            let block = SymTridiag {
                diag: t.diag[start..=k].to_vec(),
                off: t.off[start..k].to_vec(),
            };
            out.extend(eig_unreduced(&block));
            start = k + 1;
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

fn eig_unreduced(t: &SymTridiag) -> Vec<f64> {
    if t.dim() == 1 {
        return vec![t.diag[0]];
    }
    let (lo0, hi0) = gershgorin(t);
    (0..t.dim())
        .map(|k| {
            let (mut lo, mut hi) = (lo0, hi0);
            loop {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if sturm_count(t, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

/// Roots λ of the order-`n` truncated system, ascending.
pub fn truncation_roots<M: RecurrenceModel + ?Sized>(model: &M, n: usize) -> Result<Vec<f64>> {
    let form = to_tridiagonal(model, n)?;
    let sym = symmetrize(&form)?;
    let mut roots: Vec<f64> = eig_sym_tridiag(&sym)
        .into_iter()
        .map(|mu| form.orientation * mu)
        .collect();
    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CoulombRecurrence, SexticParams, SexticRecurrence};

    const SQRT8: f64 = 2.0 * std::f64::consts::SQRT_2;

    fn sextic(a: f64, b: f64, s: u8) -> SexticRecurrence {
        SexticRecurrence::new(SexticParams::new(a, b, s).unwrap())
    }

    #[test]
    fn first_coefficient_vanishes_for_trivial_oscillator() {
        let c = generate_coefficients(&sextic(0.0, 0.0, 0), 0.0, 1).unwrap();
        assert_eq!(c.to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn n1_sextic_truncates() {
        let c = generate_coefficients(&sextic(7.0, 0.0, 0), -SQRT8, 2).unwrap();
        assert!(c.get(2).abs() < 1e-14, "{}", c.get(2));
    }

    #[test]
    fn n1_coulomb_truncates() {
        let model = CoulombRecurrence::new(1.0, 0.0, 7.0).unwrap();
        let c = generate_coefficients(&model, -SQRT8, 2).unwrap();
        assert!(c.get(2).abs() < 1e-14);
    }

    #[test]
    fn alternating_examples() {
        let c = CoefficientSequence::from_values(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(alternating_transform(&c).to_vec(), vec![1.0, -2.0, 3.0]);
        let one = CoefficientSequence::from_values(vec![1.0]).unwrap();
        assert_eq!(alternating_transform(&one), one);
        assert_eq!(alternating_transform(&alternating_transform(&c)), c);
    }

    #[test]
    fn tridiagonal_rows_for_small_orders() {
        let form = to_tridiagonal(&sextic(3.0, 0.0, 0), 0).unwrap();
        assert_eq!(form.v, vec![0.0]);
        assert!(form.u.is_empty() && form.w.is_empty());
        assert_eq!(form.orientation, -1.0);

        let roots = truncation_roots(&sextic(7.0, 0.0, 0), 1).unwrap();
        assert!((roots[0] + SQRT8).abs() < 1e-14 && (roots[1] - SQRT8).abs() < 1e-14);

        let coulomb = CoulombRecurrence::new(1.0, 0.0, 7.0).unwrap();
        let roots = truncation_roots(&coulomb, 1).unwrap();
        assert!((roots[0] + SQRT8).abs() < 1e-14 && (roots[1] - SQRT8).abs() < 1e-14);
    }

    #[test]
    fn symmetrize_n2_sextic() {
        let form = to_tridiagonal(&sextic(11.0, 0.0, 0), 2).unwrap();
        let sym = symmetrize(&form).unwrap();
        let eig = eig_sym_tridiag(&sym);
        for (got, want) in eig.iter().zip([-8.0, 0.0, 8.0]) {
            assert!((got - want).abs() < 1e-13, "{got} vs {want}");
        }
    }

    #[test]
    fn symmetrize_rejects_off_manifold() {
        // Far below the n = 1 constraint a = 7 at b = 0, U_1 turns negative.
        let form = to_tridiagonal(&sextic(2.0, 0.0, 0), 1).unwrap();
        assert!(matches!(
            symmetrize(&form),
            Err(Error::SymmetrizationImpossible { index: 0, .. })
        ));
    }

    #[test]
    fn scaling_factors_symmetrize_the_rows() {
        // n = 3, s = 0 constraint: a = 15 - b^2/4.
        let a = 15.0 - 0.49 / 4.0;
        let form_on = to_tridiagonal(&sextic(a, 0.7, 0), 3).unwrap();
        let q = scaling_factors(&form_on).unwrap();
        for j in 0..3 {
            let upper = form_on.w[j] * q[j + 1] / q[j];
            let lower = form_on.u[j] * q[j] / q[j + 1];
            assert!((upper - lower).abs() < 1e-12 * upper.abs());
        }
        assert_eq!(form_on.order(), 3);
    }

    #[test]
    fn eig_small_cases() {
        assert_eq!(eig_sym_tridiag(&SymTridiag::new(vec![0.0], vec![]).unwrap()), vec![0.0]);
        let two = eig_sym_tridiag(&SymTridiag::new(vec![0.0, 0.0], vec![SQRT8]).unwrap());
        assert!((two[0] + SQRT8).abs() < 1e-15 && (two[1] - SQRT8).abs() < 1e-15);
        let diag = SymTridiag::new(vec![3.0, -1.5, 2.25, 0.1], vec![0.0; 3]).unwrap();
        assert_eq!(eig_sym_tridiag(&diag), vec![-1.5, 0.1, 2.25, 3.0]);
    }

    #[test]
    fn eig_matches_dense_solver() {
        let diag = vec![1.0, -2.0, 0.5, 4.0, 3.0, -1.0];
        let off = vec![0.3, 1.2, -0.7, 2.0, 0.01];
        let t = SymTridiag::new(diag.clone(), off.clone()).unwrap();
        let n = diag.len();
        let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                diag[i]
            } else if i + 1 == j {
                off[i]
            } else if j + 1 == i {
                off[j]
            } else {
                0.0
            }
        });
        let mut want: Vec<f64> = dense.symmetric_eigenvalues().iter().copied().collect();
        want.sort_by(f64::total_cmp);
        for (g, w) in eig_sym_tridiag(&t).iter().zip(&want) {
            assert!((g - w).abs() < 1e-13 * 5.0, "{g} vs {w}");
        }
    }

    #[test]
    fn rescaling_keeps_ratios() {
        let c = generate_with(400, |_| (1e3, 0.0)).unwrap();
        assert!(c.is_rescaled());
        let step = c.ln_abs(300) - c.ln_abs(299);
        assert!((step - 1e3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn non_finite_input_reports_index() {
        let err = generate_with(3, |j| if j == 1 { (f64::NAN, 0.0) } else { (1.0, 0.0) });
        assert_eq!(err, Err(Error::Overflow { index: 2 }));
    }
}
