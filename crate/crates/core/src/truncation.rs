//! Exact solutions on the truncation manifolds.
//!
//! Oscillator: `B_{n+1} = 0` fixes `4a + b² = 4(4n+2s+3)` and leaves `n+1`
//! energies. Coulomb: `B_{n+1} = 0` fixes the energy `E = 2γ+2n+3-b²/4`
//! and leaves `n+1` values of `a`. In both cases the roots are eigenvalues
//! of a symmetric tridiagonal matrix, hence real.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{CoulombRecurrence, SexticParams, SexticRecurrence};
use crate::ttrr::{generate_coefficients, truncation_roots, CoefficientSequence};

/// `a = (4(4n+2s+3) - b²)/4`.
pub fn sextic_constraint(n: usize, s: u8, b: f64) -> f64 {
    (4.0 * (4.0 * n as f64 + 2.0 * f64::from(s) + 3.0) - b * b) / 4.0
}

/// Values of `b` that put `(a, b)` on the order-`n`, parity-`s` manifold,
/// largest first; empty when `a` lies above the manifold's apex.
pub fn sextic_b_for_a(n: usize, s: u8, a: f64) -> Vec<f64> {
    let radicand = 4.0 * (4.0 * n as f64 + 2.0 * f64::from(s) + 3.0) - 4.0 * a;
    if radicand > 0.0 {
        let b = radicand.sqrt();
        vec![b, -b]
    } else if radicand == 0.0 {
        vec![0.0]
    } else {
        Vec::new()
    }
}

/// `E = 2γ + 2n + 3 - b²/4`.
pub fn coulomb_energy(n: usize, gamma: f64, b: f64) -> f64 {
    2.0 * gamma + 2.0 * n as f64 + 3.0 - 0.25 * b * b
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationSolutionSextic {
    pub n: usize,
    pub s: u8,
    pub b: f64,
    pub a: f64,
    /// Ascending.
    pub energies: Vec<f64>,
    /// `c_0..c_{n+1}` per energy; the last entry vanishes up to rounding.
    pub coefficients: Vec<CoefficientSequence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationSolutionCoulomb {
    pub n: usize,
    pub gamma: f64,
    pub b: f64,
    pub energy: f64,
    /// Ascending.
    pub a_roots: Vec<f64>,
    pub coefficients: Vec<CoefficientSequence>,
}

pub fn sextic_spectrum(n: usize, s: u8, b: f64) -> Result<TruncationSolutionSextic> {
    let a = sextic_constraint(n, s, b);
    let model = SexticRecurrence::new(SexticParams::new(a, b, s)?);
    let energies = truncation_roots(&model, n)?;
    let coefficients = energies
        .iter()
        .map(|&e| generate_coefficients(&model, e, n + 1))
        .collect::<Result<Vec<_>>>()?;
    Ok(TruncationSolutionSextic {
        n,
        s,
        b,
        a,
        energies,
        coefficients,
    })
}

pub fn coulomb_solution(n: usize, gamma: f64, b: f64) -> Result<TruncationSolutionCoulomb> {
    let energy = coulomb_energy(n, gamma, b);
    let model = CoulombRecurrence::new(gamma, b, energy)?;
    let a_roots = truncation_roots(&model, n)?;
    let coefficients = a_roots
        .iter()
        .map(|&a| generate_coefficients(&model, a, n + 1))
        .collect::<Result<Vec<_>>>()?;
    Ok(TruncationSolutionCoulomb {
        n,
        gamma,
        b,
        energy,
        a_roots,
        coefficients,
    })
}

/// Non-polynomial factor of an exact eigenfunction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum WeightDescriptor {
    /// `x^s exp(b x²/4 - x⁴/4)`; the polynomial is in `x²`.
    Oscillator { s: u8, b: f64 },
    /// `r^{γ+1} exp(b r/2 - r²/2)`; the polynomial is in `r`.
    Coulomb { gamma: f64, b: f64 },
}

impl WeightDescriptor {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            WeightDescriptor::Oscillator { s, b } => {
                let x2 = x * x;
                x.powi(i32::from(s)) * (0.25 * b * x2 - 0.25 * x2 * x2).exp()
            }
            WeightDescriptor::Coulomb { gamma, b } => {
                x.powf(gamma + 1.0) * (0.5 * b * x - 0.5 * x * x).exp()
            }
        }
    }

    pub fn node_domain(&self) -> NodeDomain {
        match *self {
            WeightDescriptor::Oscillator { s, .. } => NodeDomain::Oscillator { s },
            WeightDescriptor::Coulomb { .. } => NodeDomain::HalfLine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Wavefunction {
    /// `P` coefficients `c_0..c_n`.
    pub poly: Vec<f64>,
    pub weight: WeightDescriptor,
}

impl Wavefunction {
    pub fn eval(&self, x: f64) -> f64 {
        let var = match self.weight {
            WeightDescriptor::Oscillator { .. } => x * x,
            WeightDescriptor::Coulomb { .. } => x,
        };
        let p = self.poly.iter().rev().fold(0.0, |acc, &c| acc * var + c);
        p * self.weight.eval(x)
    }
}

/// Quantum-number label of a truncation root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StateLabel {
    /// State `i` of parity sector `s`; `i + s` nodes on `x >= 0`, `2i + s`
    /// on the whole line.
    Oscillator { i: usize, s: u8 },
    /// Point on the curve `E_{curve}(a, b)` (0-based).
    Coulomb { curve: usize },
}

impl StateLabel {
    /// Node count the label predicts under the `count_nodes` convention.
    pub fn expected_nodes(&self) -> usize {
        match *self {
            StateLabel::Oscillator { i, s } => i + usize::from(s),
            StateLabel::Coulomb { curve } => curve,
        }
    }

    pub fn full_line_nodes(&self) -> Option<usize> {
        match *self {
            StateLabel::Oscillator { i, s } => Some(2 * i + usize::from(s)),
            StateLabel::Coulomb { .. } => None,
        }
    }

    /// Level index within the variational spectrum the root belongs to
    /// (per parity sector for the oscillator).
    pub fn level(&self) -> usize {
        match *self {
            StateLabel::Oscillator { i, .. } => i,
            StateLabel::Coulomb { curve } => curve,
        }
    }
}

/// Shared view of both solution kinds.
pub trait TruncationSolution {
    fn order(&self) -> usize;
    fn roots(&self) -> &[f64];
    fn coefficient_sequence(&self, i: usize) -> &CoefficientSequence;
    fn weight(&self) -> WeightDescriptor;
    fn label(&self, i: usize) -> StateLabel;
}

impl TruncationSolution for TruncationSolutionSextic {
    fn order(&self) -> usize {
        self.n
    }

    fn roots(&self) -> &[f64] {
        &self.energies
    }

    fn coefficient_sequence(&self, i: usize) -> &CoefficientSequence {
        &self.coefficients[i]
    }

    fn weight(&self) -> WeightDescriptor {
        WeightDescriptor::Oscillator { s: self.s, b: self.b }
    }

    fn label(&self, i: usize) -> StateLabel {
        StateLabel::Oscillator { i, s: self.s }
    }
}

impl TruncationSolution for TruncationSolutionCoulomb {
    fn order(&self) -> usize {
        self.n
    }

    fn roots(&self) -> &[f64] {
        &self.a_roots
    }

    fn coefficient_sequence(&self, i: usize) -> &CoefficientSequence {
        &self.coefficients[i]
    }

    fn weight(&self) -> WeightDescriptor {
        WeightDescriptor::Coulomb {
            gamma: self.gamma,
            b: self.b,
        }
    }

    // a grows with the branch index and E_ν(a) decreases in a, so the i-th
    // root at the common energy sits on the i-th curve.
    fn label(&self, i: usize) -> StateLabel {
        StateLabel::Coulomb { curve: i }
    }
}

fn check_index<S: TruncationSolution + ?Sized>(solution: &S, i: usize) -> Result<()> {
    let count = solution.roots().len();
    if i >= count {
        return Err(Error::IndexOutOfRange { index: i, count });
    }
    Ok(())
}

pub fn assemble_wavefunction<S: TruncationSolution + ?Sized>(solution: &S, i: usize) -> Result<Wavefunction> {
    check_index(solution, i)?;
    let seq = solution.coefficient_sequence(i);
    let poly = (0..=solution.order()).map(|j| seq.get(j)).collect();
    Ok(Wavefunction {
        poly,
        weight: solution.weight(),
    })
}

pub fn label_state<S: TruncationSolution + ?Sized>(solution: &S, i: usize) -> Result<StateLabel> {
    check_index(solution, i)?;
    Ok(solution.label(i))
}

/// Where nodes are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeDomain {
    /// Polynomial in `x²`; nodes on `x > 0` plus `s` for the origin.
    Oscillator { s: u8 },
    /// Polynomial in `r`; nodes on `r > 0`.
    HalfLine,
}

const IMAG_TOL: f64 = 1e-7;
const DEDUP_TOL: f64 = 1e-9;
const ENDPOINT_TOL: f64 = 1e-7;

/// Real roots of `Σ c_k t^k` from the eigenvalues of the companion matrix,
/// ascending and deduplicated.
pub fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let degree = match coeffs.iter().rposition(|&c| c != 0.0) {
        Some(d) => d,
        None => return Vec::new(),
    };
    if degree == 0 {
        return Vec::new();
    }
    // Rescale t = σ τ so the constant and leading coefficients match in size.
    let lead = coeffs[degree];
    let sigma = match coeffs.iter().position(|&c| c != 0.0) {
        Some(low) if low < degree => (coeffs[low] / lead).abs().powf(1.0 / (degree - low) as f64),
        _ => 1.0,
    };
    let scaled: Vec<f64> = coeffs[..=degree]
        .iter()
        .enumerate()
        .map(|(k, &c)| c * sigma.powi(k as i32))
        .collect();
    let monic_lead = scaled[degree];
    let companion = DMatrix::from_fn(degree, degree, |i, j| {
        if j == degree - 1 {
            -scaled[i] / monic_lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let mut roots: Vec<f64> = companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() < IMAG_TOL * (1.0 + z.re.abs()))
        .map(|z| z.re * sigma)
        .collect();
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < DEDUP_TOL * (1.0 + b.abs()));
    roots
}

/// Interior nodes of a truncation eigenfunction from its polynomial factor.
pub fn count_nodes(poly: &[f64], domain: NodeDomain) -> Result<usize> {
    if poly.first() != Some(&1.0) {
        return Err(Error::Invalid("polynomial factor must have c_0 = 1".into()));
    }
    let mut positive = 0;
    for root in real_roots(poly) {
        if root.abs() < ENDPOINT_TOL {
            return Err(Error::AmbiguousNode { root });
        }
        if root > 0.0 {
            positive += 1;
        }
    }
    Ok(match domain {
        NodeDomain::Oscillator { s } => positive + usize::from(s),
        NodeDomain::HalfLine => positive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT8: f64 = 2.0 * std::f64::consts::SQRT_2;

    fn assert_close(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= tol, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn constraint_examples() {
        assert_eq!(sextic_constraint(0, 0, 0.0), 3.0);
        assert_eq!(sextic_constraint(1, 0, 0.0), 7.0);
        assert_eq!(sextic_constraint(2, 0, 0.0), 11.0);
        assert_eq!(sextic_constraint(0, 1, 2.0), 4.0);
    }

    #[test]
    fn inverse_constraint_examples() {
        let b = sextic_b_for_a(0, 0, 0.0);
        assert_close(&b, &[12f64.sqrt(), -(12f64.sqrt())], 1e-15);
        assert_eq!(sextic_b_for_a(0, 0, 3.0), vec![0.0]);
        assert!(sextic_b_for_a(0, 0, 4.0).is_empty());
        // At a = 0 the smallest |b| over all manifolds is √12.
        let smallest = (0..5)
            .flat_map(|n| [0u8, 1].map(|s| sextic_b_for_a(n, s, 0.0)[0]))
            .fold(f64::INFINITY, f64::min);
        assert!((smallest - 12f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sextic_spectrum_examples() {
        let sol = sextic_spectrum(0, 0, 2.0).unwrap();
        assert_eq!(sol.energies, vec![-1.0]);
        let sol = sextic_spectrum(1, 0, 0.0).unwrap();
        assert_eq!(sol.a, 7.0);
        assert_close(&sol.energies, &[-SQRT8, SQRT8], 1e-14);
        let sol = sextic_spectrum(2, 0, 0.0).unwrap();
        assert_eq!(sol.a, 11.0);
        assert_close(&sol.energies, &[-8.0, 0.0, 8.0], 1e-13);
        for seq in &sol.coefficients {
            assert!(seq.get(3).abs() < 1e-12);
        }
        let sol = sextic_spectrum(0, 1, 2.0).unwrap();
        assert_eq!(sol.a, 4.0);
        assert_close(&sol.energies, &[-3.0], 1e-14);
    }

    #[test]
    fn coulomb_solution_examples() {
        let sol = coulomb_solution(0, 1.0, 1.0).unwrap();
        assert_eq!(sol.energy, 4.75);
        assert_eq!(sol.a_roots, vec![-2.0]);
        let sol = coulomb_solution(1, 1.0, 0.0).unwrap();
        assert_eq!(sol.energy, 7.0);
        assert_close(&sol.a_roots, &[-SQRT8, SQRT8], 1e-14);
        let sol = coulomb_solution(2, 1.0, 0.0).unwrap();
        assert_eq!(sol.energy, 9.0);
        // a³ - 36a = 0 from the cubic at γ = 1, b = 0.
        assert_close(&sol.a_roots, &[-6.0, 0.0, 6.0], 1e-13);
        assert!(coulomb_solution(1, 0.0, 1.0).is_err());
    }

    #[test]
    fn wavefunction_examples() {
        let sol = sextic_spectrum(0, 0, 1.3).unwrap();
        assert_eq!(assemble_wavefunction(&sol, 0).unwrap().poly, vec![1.0]);

        let sol = sextic_spectrum(1, 0, 0.0).unwrap();
        let wf = assemble_wavefunction(&sol, 0).unwrap();
        assert!((wf.poly[1] - std::f64::consts::SQRT_2).abs() < 1e-14);
        assert_eq!(wf.weight, WeightDescriptor::Oscillator { s: 0, b: 0.0 });

        let sol = coulomb_solution(1, 1.0, 0.0).unwrap();
        let wf = assemble_wavefunction(&sol, 1).unwrap();
        assert!((wf.poly[1] + 32f64.sqrt() / 8.0).abs() < 1e-14);

        assert_eq!(
            assemble_wavefunction(&sol, 2),
            Err(Error::IndexOutOfRange { index: 2, count: 2 })
        );
    }

    #[test]
    fn wavefunction_satisfies_the_equation_pointwise() {
        // -ψ'' + V ψ = E ψ by central differences at a few points.
        let sol = sextic_spectrum(2, 1, 0.7).unwrap();
        for i in 0..3 {
            let wf = assemble_wavefunction(&sol, i).unwrap();
            let e = sol.energies[i];
            for &x in &[0.3, 0.9, 1.6] {
                let h = 1e-4;
                let d2 = (wf.eval(x + h) - 2.0 * wf.eval(x) + wf.eval(x - h)) / (h * h);
                let v = crate::models::potential(crate::models::Potential::Sextic, sol.a, sol.b, x).unwrap();
                let residual = -d2 + (v - e) * wf.eval(x);
                assert!(residual.abs() < 1e-5 * (1.0 + e.abs()), "i={i} x={x}: {residual}");
            }
        }
    }

    #[test]
    fn node_examples() {
        let r2 = std::f64::consts::SQRT_2;
        assert_eq!(count_nodes(&[1.0, r2], NodeDomain::Oscillator { s: 0 }), Ok(0));
        assert_eq!(count_nodes(&[1.0, -r2], NodeDomain::Oscillator { s: 0 }), Ok(1));
        assert_eq!(count_nodes(&[1.0, -0.707], NodeDomain::HalfLine), Ok(1));
        assert_eq!(count_nodes(&[1.0], NodeDomain::Oscillator { s: 1 }), Ok(1));
        assert!(matches!(
            count_nodes(&[1.0, 1e9], NodeDomain::HalfLine),
            Err(Error::AmbiguousNode { .. })
        ));
        assert!(count_nodes(&[2.0, 1.0], NodeDomain::HalfLine).is_err());
    }

    #[test]
    fn real_roots_of_known_polynomials() {
        // (t-1)(t-2)(t+3) = t³ - 7t + 6
        assert_close(&real_roots(&[6.0, -7.0, 0.0, 1.0]), &[-3.0, 1.0, 2.0], 1e-12);
        // t² + 1 has none.
        assert!(real_roots(&[1.0, 0.0, 1.0]).is_empty());
        assert!(real_roots(&[1.0]).is_empty());
    }

    #[test]
    fn labels() {
        let sol = sextic_spectrum(1, 0, 0.0).unwrap();
        let label = label_state(&sol, 0).unwrap();
        assert_eq!(label, StateLabel::Oscillator { i: 0, s: 0 });
        assert_eq!(label.full_line_nodes(), Some(0));

        let sol = sextic_spectrum(0, 1, 0.5).unwrap();
        let label = label_state(&sol, 0).unwrap();
        assert_eq!(label, StateLabel::Oscillator { i: 0, s: 1 });
        assert_eq!(label.expected_nodes(), 1);

        let sol = coulomb_solution(1, 1.0, 0.5).unwrap();
        assert_eq!(label_state(&sol, 1).unwrap(), StateLabel::Coulomb { curve: 1 });
        assert!(label_state(&sol, 5).is_err());
    }

    #[test]
    fn node_law_small_orders() {
        for n in 0..=6 {
            for &b in &[-3.0, -0.5, 0.0, 1.2, 4.0] {
                for s in 0..2u8 {
                    let sol = sextic_spectrum(n, s, b).unwrap();
                    for i in 0..=n {
                        let wf = assemble_wavefunction(&sol, i).unwrap();
                        let nodes = count_nodes(&wf.poly, wf.weight.node_domain()).unwrap();
                        assert_eq!(nodes, sol.label(i).expected_nodes(), "n={n} s={s} b={b} i={i}");
                    }
                }
                let sol = coulomb_solution(n, 1.0, b).unwrap();
                for i in 0..=n {
                    let wf = assemble_wavefunction(&sol, i).unwrap();
                    assert_eq!(count_nodes(&wf.poly, NodeDomain::HalfLine).unwrap(), i);
                }
            }
        }
    }
}
