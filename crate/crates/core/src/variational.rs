//! Rayleigh–Ritz spectra in the spans of the truncation bases.
//!
//! The oscillator basis is `φ_j = x^{s+2j} exp(b x²/4 - x⁴/4)` and the
//! Coulomb basis `φ_j = r^{γ+1+j} exp(b r/2 - r²/2)`. Two representations of
//! the same span are offered:
//!
//! * [`Representation::Monomial`] uses the `φ_j` directly. Overlaps are
//!   moments and `H` follows from the closed-form action of the Hamiltonian
//!   on each `φ_j`. The Gram matrix is a Hankel matrix whose condition number
//!   grows exponentially, so only small bases are usable.
//! * [`Representation::Orthonormal`] replaces the monomials by polynomials
//!   orthonormal under the squared weight. They are generated by Lanczos
//!   on a fine Gauss–Legendre discretization, and matrix elements come from
//!   the symmetric form `∫ ψ_k' ψ_l' + V ψ_k ψ_l` by the same quadrature.
//!   The first `N` functions span exactly the first `N` monomials, so
//!   truncation eigenfunctions remain in the span and smaller bases are
//!   leading blocks of larger ones.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{coulomb_h_action, sextic_h_action, CoulombParams, ModelKind, SexticParams};
use crate::moments::{coulomb_moments, sextic_moments, MomentTable};
use crate::quadrature::{composite, decay_cutoff, gauss_legendre, half_line_breaks};

pub const DEFAULT_BASIS: usize = 25;
pub const DEFAULT_MAX_BASIS: usize = 80;
pub const DEFAULT_CONDITION_THRESHOLD: f64 = 1e13;
/// Per-level target for `|E(N) - E(N-5)|`, relative to `max(1, |E|)`.
pub const CONVERGENCE_TOL: f64 = 1e-9;
pub const BASIS_STEP: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ModelParams {
    Sextic(SexticParams),
    Coulomb(CoulombParams),
}

/// A potential parameter that sweeps and derivatives act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Parameter {
    A,
    B,
}

impl Parameter {
    pub fn name(self) -> &'static str {
        match self {
            Parameter::A => "a",
            Parameter::B => "b",
        }
    }
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Sextic(_) => ModelKind::Sextic,
            ModelParams::Coulomb(_) => ModelKind::Coulomb,
        }
    }

    pub fn a(&self) -> f64 {
        match self {
            ModelParams::Sextic(p) => p.a,
            ModelParams::Coulomb(p) => p.a,
        }
    }

    pub fn b(&self) -> f64 {
        match self {
            ModelParams::Sextic(p) => p.b,
            ModelParams::Coulomb(p) => p.b,
        }
    }

    pub fn get(&self, parameter: Parameter) -> f64 {
        match parameter {
            Parameter::A => self.a(),
            Parameter::B => self.b(),
        }
    }

    /// Copy with one parameter replaced.
    pub fn with(&self, parameter: Parameter, value: f64) -> Result<Self> {
        let (a, b) = match parameter {
            Parameter::A => (value, self.b()),
            Parameter::B => (self.a(), value),
        };
        Ok(match self {
            ModelParams::Sextic(p) => ModelParams::Sextic(SexticParams::new(a, b, p.s)?),
            ModelParams::Coulomb(p) => ModelParams::Coulomb(CoulombParams::new(p.gamma, a, b)?),
        })
    }

    /// Observable whose negative expectation is `∂E/∂parameter`.
    pub fn derivative_observable(&self, parameter: Parameter) -> Observable {
        match (self, parameter) {
            (ModelParams::Sextic(_), Parameter::A) => Observable::X2,
            (ModelParams::Sextic(_), Parameter::B) => Observable::X4,
            (ModelParams::Coulomb(_), Parameter::A) => Observable::InvR,
            (ModelParams::Coulomb(_), Parameter::B) => Observable::R,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Representation {
    Monomial,
    Orthonormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Observable {
    X2,
    X4,
    R,
    InvR,
}

impl Observable {
    fn compatible(self, kind: ModelKind) -> bool {
        matches!(
            (self, kind),
            (Observable::X2 | Observable::X4, ModelKind::Sextic) | (Observable::R | Observable::InvR, ModelKind::Coulomb)
        )
    }

    fn eval(self, x: f64) -> f64 {
        match self {
            Observable::X2 => x * x,
            Observable::X4 => (x * x) * (x * x),
            Observable::R => x,
            Observable::InvR => 1.0 / x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationalSpec {
    pub params: ModelParams,
    /// Basis size for fixed-size solves; starting size for [`spectrum`].
    pub basis_size: usize,
    /// Largest size [`spectrum`] may grow to in the orthonormal representation.
    pub max_basis: usize,
    /// Limit on the condition number of the diagonally scaled Gram matrix.
    pub condition_threshold: f64,
    /// Number of requested levels.
    pub states: usize,
    pub representation: Representation,
}

impl VariationalSpec {
    pub fn new(params: ModelParams, basis_size: usize, states: usize) -> Result<Self> {
        if states == 0 || basis_size < states {
            return Err(Error::Invalid(format!(
                "need basis size >= states >= 1, got N={basis_size}, k={states}"
            )));
        }
        Ok(Self {
            params,
            basis_size,
            max_basis: DEFAULT_MAX_BASIS.max(basis_size),
            condition_threshold: DEFAULT_CONDITION_THRESHOLD,
            states,
            representation: Representation::Orthonormal,
        })
    }

    /// Default basis size, grown if more states are requested.
    pub fn with_states(params: ModelParams, states: usize) -> Result<Self> {
        Self::new(params, DEFAULT_BASIS.max(states), states)
    }

    pub fn representation(mut self, representation: Representation) -> Self {
        self.representation = representation;
        self
    }

    pub fn max_basis(mut self, max_basis: usize) -> Self {
        self.max_basis = max_basis.max(self.basis_size);
        self
    }

    pub fn condition_threshold(mut self, threshold: f64) -> Self {
        self.condition_threshold = threshold;
        self
    }

    fn resized(&self, basis_size: usize) -> Self {
        Self {
            basis_size,
            states: self.states.min(basis_size),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationalResult {
    /// Ascending; one parity sector for the oscillator.
    pub eigenvalues: Vec<f64>,
    /// Unit vectors in the Gram metric, in the basis of `representation`.
    pub coefficients: Vec<Vec<f64>>,
    /// `|E(N) - E(N-5)|` per level when a smaller basis was also solved.
    pub convergence: Vec<Option<f64>>,
    pub converged: Vec<bool>,
    /// Condition estimate of the (diagonally scaled) Gram matrix.
    pub condition: f64,
    pub basis_size: usize,
    pub representation: Representation,
    /// Model the matrices came from; absent for bare matrix solves.
    pub params: Option<ModelParams>,
}

// ---------------------------------------------------------------------------
// Monomial representation

struct MonomialBasis {
    params: ModelParams,
    size: usize,
    table: MomentTable,
}

impl MonomialBasis {
    /// Moments up to what `H` and the observables of the first `size`
    /// functions need.
    fn new(params: ModelParams, size: usize) -> Result<Self> {
        let table = match params {
            ModelParams::Sextic(p) => sextic_moments(p.b, 2 * usize::from(p.s) + 4 * size + 4)?,
            ModelParams::Coulomb(p) => coulomb_moments(2.0 * p.gamma, p.b, 2 * size + 4)?,
        };
        Ok(Self { params, size, table })
    }

    /// `⟨φ_k | O | φ_j⟩` where `O` multiplies by `x^{2·shift}` (oscillator)
    /// or `r^{shift}` (Coulomb), `j` possibly offset below 0.
    fn element(&self, k: usize, j: isize, shift: isize) -> Result<f64> {
        let order = match self.params {
            ModelParams::Sextic(p) => 2.0 * (p.sf() + k as f64 + j as f64 + shift as f64),
            ModelParams::Coulomb(p) => 2.0 * p.gamma + 2.0 + k as f64 + j as f64 + shift as f64,
        };
        self.table.get(order)
    }

    fn gram(&self) -> Result<DMatrix<f64>> {
        let n = self.size;
        let mut s = DMatrix::zeros(n, n);
        for k in 0..n {
            for j in 0..n {
                s[(k, j)] = self.element(k, j as isize, 0)?;
            }
        }
        Ok(s)
    }

    fn hamiltonian(&self) -> Result<HamiltonianMatrix> {
        let n = self.size;
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            let action = match self.params {
                ModelParams::Sextic(p) => sextic_h_action(j, &p),
                ModelParams::Coulomb(p) => coulomb_h_action(j, &p),
            };
            for (offset, coeff) in action.terms() {
                if coeff == 0.0 {
                    continue;
                }
                for k in 0..n {
                    h[(k, j)] += coeff * self.element(k, j as isize + offset, 0)?;
                }
            }
        }
        Ok(HamiltonianMatrix::symmetrized(h))
    }

    fn observable(&self, observable: Observable) -> Result<DMatrix<f64>> {
        let shift = match observable {
            Observable::X2 | Observable::R => 1,
            Observable::X4 => 2,
            Observable::InvR => -1,
        };
        let n = self.size;
        let mut o = DMatrix::zeros(n, n);
        for k in 0..n {
            for j in 0..n {
                o[(k, j)] = self.element(k, j as isize, shift)?;
            }
        }
        Ok(o)
    }
}

/// `H` after `(H + Hᵀ)/2`, with the largest entry of `|H - Hᵀ|/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix {
    pub matrix: DMatrix<f64>,
    pub asymmetry: f64,
}

impl HamiltonianMatrix {
    fn symmetrized(h: DMatrix<f64>) -> Self {
        let asymmetry = (&h - h.transpose()).abs().max() * 0.5;
        let matrix = (&h + h.transpose()) * 0.5;
        Self { matrix, asymmetry }
    }
}

fn check_observable(params: &ModelParams, observable: Observable) -> Result<()> {
    if observable.compatible(params.kind()) {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "observable {observable:?} does not apply to the {} model",
            params.kind()
        )))
    }
}

/// Condition number of `D^{-1/2} S D^{-1/2}` from its extreme eigenvalues.
fn scaled_condition(s: &DMatrix<f64>) -> f64 {
    let d: Vec<f64> = s.diagonal().iter().map(|v| 1.0 / v.abs().sqrt()).collect();
    let scaled = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] * d[i] * d[j]);
    let eig = SymmetricEigen::new(scaled).eigenvalues;
    let hi = eig.max();
    let lo = eig.min();
    if lo <= 0.0 { f64::INFINITY } else { hi / lo }
}

fn check_conditioning(s: &DMatrix<f64>, threshold: f64) -> Result<f64> {
    let condition = scaled_condition(s);
    if condition <= threshold {
        return Ok(condition);
    }
    let safe_size = (1..s.nrows())
        .rev()
        .find(|&k| scaled_condition(&s.view((0, 0), (k, k)).into_owned()) <= threshold)
        .unwrap_or(0);
    Err(Error::Conditioning { condition, safe_size })
}

/// Overlap matrix of the monomial basis; refused beyond the conditioning
/// threshold.
pub fn gram_matrix(spec: &VariationalSpec) -> Result<DMatrix<f64>> {
    let s = MonomialBasis::new(spec.params, spec.basis_size)?.gram()?;
    check_conditioning(&s, spec.condition_threshold)?;
    Ok(s)
}

/// Hamiltonian of the monomial basis from the closed-form action on `φ_j`.
pub fn hamiltonian_matrix(spec: &VariationalSpec) -> Result<HamiltonianMatrix> {
    let h = MonomialBasis::new(spec.params, spec.basis_size)?.hamiltonian()?;
    let norm = h.matrix.abs().max();
    if h.asymmetry > 1e-8 * norm.max(f64::MIN_POSITIVE) {
        return Err(Error::Assembly {
            defect: h.asymmetry / norm,
        });
    }
    Ok(h)
}

/// Lowest `k` pairs of `H c = E S c` by Cholesky reduction and a symmetric
/// eigensolve.
pub fn solve_generalized(h: &DMatrix<f64>, s: &DMatrix<f64>, k: usize) -> Result<VariationalResult> {
    let n = s.nrows();
    if h.shape() != s.shape() || !s.is_square() || k == 0 || k > n {
        return Err(Error::Invalid(format!(
            "need square H and S of equal size and 1 <= k <= N, got {:?}, {:?}, k={k}",
            h.shape(),
            s.shape()
        )));
    }
    let condition = scaled_condition(s);
    let chol = s.clone().cholesky().ok_or(Error::Conditioning {
        condition,
        safe_size: 0,
    })?;
    let l = chol.l();
    // C = L⁻¹ H L⁻ᵀ
    let x = l.solve_lower_triangular(h).ok_or(Error::Conditioning {
        condition,
        safe_size: 0,
    })?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::Conditioning {
            condition,
            safe_size: 0,
        })?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let h_norm = h.abs().max().max(f64::MIN_POSITIVE);
    let lt = l.transpose();
    let mut eigenvalues = Vec::with_capacity(k);
    let mut coefficients = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let e = eig.eigenvalues[i];
        let y = eig.eigenvectors.column(i).into_owned();
        let mut v = lt.solve_upper_triangular(&y).ok_or(Error::Conditioning {
            condition,
            safe_size: 0,
        })?;
        let norm = v.dot(&(s * &v)).sqrt();
        v /= norm;
        let residual = (h * &v - s * &v * e).amax();
        if residual > 1e-8 * h_norm {
            return Err(Error::Precision {
                estimate: residual / h_norm,
            });
        }
        eigenvalues.push(e);
        coefficients.push(v.iter().copied().collect());
    }
    Ok(VariationalResult {
        eigenvalues,
        coefficients,
        convergence: vec![None; k],
        converged: vec![false; k],
        condition,
        basis_size: n,
        representation: Representation::Monomial,
        params: None,
    })
}

// ---------------------------------------------------------------------------
// Orthonormal representation

const PANEL_POINTS: usize = 20;
const SEXTIC_PANEL_WIDTH: f64 = 0.125;
const COULOMB_PANEL_WIDTH: f64 = 0.2;
const COULOMB_GRADED: usize = 40;

/// Orthonormal polynomial basis of the span sampled on quadrature nodes.
///
/// Row `k` of `q` is `√ω_i p_k(t_i)` where `ω` absorbs the quadrature weight
/// and the squared basis weight; row `k` of `f` is the same scaling of the
/// derivative factor `(G_k' + G_k u)`, with `G_k = x^s p_k(x²)` or
/// `r^{γ+1} p_k(r)` and `u` the log-derivative of the exponential.
struct OrthoBasis {
    params: ModelParams,
    nodes: Vec<f64>,
    q: DMatrix<f64>,
    f: DMatrix<f64>,
}

impl OrthoBasis {
    fn new(params: ModelParams, size: usize) -> Result<Self> {
        let rule = gauss_legendre(PANEL_POINTS);
        let n_f = size as f64;
        let (nodes, weights, t, sqrt_omega): (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);
        match params {
            ModelParams::Sextic(p) => {
                let b = p.b;
                let power = 2.0 * p.sf() + 4.0 * n_f + 8.0;
                let cutoff = decay_cutoff(|x: f64| power * x.ln() + 0.5 * b * x * x - 0.5 * x.powi(4), 2.0);
                let (xs, ws) = composite(&half_line_breaks(cutoff, SEXTIC_PANEL_WIDTH, 0), &rule);
                // 2 ∫_0^X covers the whole line for definite parity.
                sqrt_omega = xs
                    .iter()
                    .zip(&ws)
                    .map(|(&x, &w)| {
                        let x2 = x * x;
                        (2.0 * w).sqrt() * x.powi(i32::from(p.s)) * (0.25 * b * x2 - 0.25 * x2 * x2).exp()
                    })
                    .collect();
                t = xs.iter().map(|x| x * x).collect();
                nodes = xs;
                weights = ws;
            }
            ModelParams::Coulomb(p) => {
                let (b, g) = (p.b, p.gamma);
                let power = 2.0 * g + 2.0 * n_f + 6.0;
                let cutoff = decay_cutoff(|r: f64| power * r.ln() + b * r - r * r, 4.0f64.max(b + 4.0));
                let (rs, ws) = composite(&half_line_breaks(cutoff, COULOMB_PANEL_WIDTH, COULOMB_GRADED), &rule);
                sqrt_omega = rs
                    .iter()
                    .zip(&ws)
                    .map(|(&r, &w)| w.sqrt() * r.powf(g + 1.0) * (0.5 * b * r - 0.5 * r * r).exp())
                    .collect();
                t = rs.clone();
                nodes = rs;
                weights = ws;
            }
        }
        drop(weights);
        let m = nodes.len();
        if size >= m {
            return Err(Error::Invalid(format!("basis size {size} exceeds the {m} quadrature nodes")));
        }

        let mut q = DMatrix::<f64>::zeros(size, m);
        let mut d = DMatrix::<f64>::zeros(size, m);
        let norm0 = sqrt_omega.iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..m {
            q[(0, i)] = sqrt_omega[i] / norm0;
        }
        let mut beta_prev = 0.0;
        for k in 0..size.saturating_sub(1) {
            let qk = q.row(k).into_owned();
            let mut v = DVector::from_fn(m, |i, _| t[i] * qk[i]);
            let alpha = qk.transpose().dot(&v);
            for i in 0..m {
                v[i] -= alpha * qk[i];
                if k > 0 {
                    v[i] -= beta_prev * q[(k - 1, i)];
                }
            }
            // Full reorthogonalization, twice.
            for _ in 0..2 {
                for j in 0..=k {
                    let qj = q.row(j);
                    let c: f64 = (0..m).map(|i| qj[i] * v[i]).sum();
                    for i in 0..m {
                        v[i] -= c * q[(j, i)];
                    }
                }
            }
            let beta = v.norm();
            if !(beta > 1e-300) {
                return Err(Error::Precision { estimate: 1.0 });
            }
            for i in 0..m {
                q[(k + 1, i)] = v[i] / beta;
                let dm = if k > 0 { d[(k - 1, i)] } else { 0.0 };
                d[(k + 1, i)] = (qk[i] + (t[i] - alpha) * d[(k, i)] - beta_prev * dm) / beta;
            }
            beta_prev = beta;
        }

        let mut f = DMatrix::<f64>::zeros(size, m);
        for i in 0..m {
            let x = nodes[i];
            let (mult, dscale) = match params {
                ModelParams::Sextic(p) => (p.sf() / x + 0.5 * p.b * x - x * x * x, 2.0 * x),
                ModelParams::Coulomb(p) => ((p.gamma + 1.0) / x + 0.5 * p.b - x, 1.0),
            };
            for k in 0..size {
                f[(k, i)] = q[(k, i)] * mult + dscale * d[(k, i)];
            }
        }
        Ok(Self { params, nodes, q, f })
    }

    fn weighted_gram(&self, weight: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.q.clone();
        for (i, &x) in self.nodes.iter().enumerate() {
            let w = weight(x);
            scaled.column_mut(i).scale_mut(w);
        }
        let g = &scaled * self.q.transpose();
        (&g + g.transpose()) * 0.5
    }

    fn gram(&self) -> DMatrix<f64> {
        self.weighted_gram(|_| 1.0)
    }

    /// `H` at strength `a` (the basis itself does not depend on `a`).
    fn hamiltonian(&self, a: f64) -> DMatrix<f64> {
        let potential = |x: f64| match self.params {
            ModelParams::Sextic(p) => {
                let x2 = x * x;
                x2 * (-a + x2 * (-p.b + x2))
            }
            ModelParams::Coulomb(p) => p.gamma * (p.gamma + 1.0) / (x * x) - a / x - p.b * x + x * x,
        };
        let kinetic = &self.f * self.f.transpose();
        let h = kinetic + self.weighted_gram(potential);
        (&h + h.transpose()) * 0.5
    }

    fn observable(&self, observable: Observable) -> DMatrix<f64> {
        self.weighted_gram(|x| observable.eval(x))
    }
}

fn leading(m: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    m.view((0, 0), (n, n)).into_owned()
}

/// Assembled `(H, S)` of the first `n` functions of either representation.
struct Pencil {
    h: DMatrix<f64>,
    s: DMatrix<f64>,
}

impl Pencil {
    fn solve(&self, n: usize, k: usize) -> Result<VariationalResult> {
        solve_generalized(&leading(&self.h, n), &leading(&self.s, n), k.min(n))
    }
}

fn assemble(spec: &VariationalSpec, size: usize) -> Result<Pencil> {
    match spec.representation {
        Representation::Monomial => {
            let spec = spec.resized(size);
            let s = gram_matrix(&spec)?;
            let h = hamiltonian_matrix(&spec)?.matrix;
            Ok(Pencil { h, s })
        }
        Representation::Orthonormal => {
            let basis = OrthoBasis::new(spec.params, size)?;
            Ok(Pencil {
                h: basis.hamiltonian(spec.params.a()),
                s: basis.gram(),
            })
        }
    }
}

fn finish(mut result: VariationalResult, spec: &VariationalSpec) -> VariationalResult {
    result.representation = spec.representation;
    result.params = Some(spec.params);
    result
}

/// Lowest `spec.states` levels at the fixed size `spec.basis_size`.
pub fn solve(spec: &VariationalSpec) -> Result<VariationalResult> {
    let pencil = assemble(spec, spec.basis_size)?;
    Ok(finish(pencil.solve(spec.basis_size, spec.states)?, spec))
}

fn level_tolerance(e: f64) -> f64 {
    CONVERGENCE_TOL * e.abs().max(1.0)
}

fn with_convergence(mut current: VariationalResult, previous: Option<&VariationalResult>) -> VariationalResult {
    for nu in 0..current.eigenvalues.len() {
        let delta = previous
            .and_then(|p| p.eigenvalues.get(nu))
            .map(|&e| (current.eigenvalues[nu] - e).abs());
        current.convergence[nu] = delta;
        current.converged[nu] = delta.is_some_and(|d| d < level_tolerance(current.eigenvalues[nu]));
    }
    current
}

/// Lowest `spec.states` levels, growing the basis in steps of five from
/// `spec.basis_size` until every level moves by less than the convergence
/// tolerance. Stops at `spec.max_basis` (orthonormal) or at the conditioning
/// wall (monomial) and returns the last result with its levels flagged.
pub fn spectrum(spec: &VariationalSpec) -> Result<VariationalResult> {
    let k = spec.states;
    match spec.representation {
        Representation::Orthonormal => {
            let top = spec.max_basis.max(spec.basis_size);
            let pencil = assemble(spec, top)?;
            let mut previous = if spec.basis_size >= k + BASIS_STEP {
                Some(pencil.solve(spec.basis_size - BASIS_STEP, k)?)
            } else {
                None
            };
            let mut n = spec.basis_size;
            loop {
                let current = with_convergence(pencil.solve(n, k)?, previous.as_ref());
                if current.converged.iter().all(|&c| c) || n + BASIS_STEP > top {
                    return Ok(finish(current, spec));
                }
                previous = Some(current);
                n += BASIS_STEP;
            }
        }
        Representation::Monomial => {
            let mut previous: Option<VariationalResult> = None;
            let mut n = spec.basis_size.saturating_sub(BASIS_STEP).max(k);
            loop {
                let attempt = assemble(spec, n).and_then(|p| p.solve(n, k));
                let current = match attempt {
                    Ok(r) => with_convergence(r, previous.as_ref()),
                    Err(Error::Conditioning { .. } | Error::Precision { .. }) if previous.is_some() => {
                        let mut last = previous.take().expect("checked above");
                        last.converged = last
                            .convergence
                            .iter()
                            .zip(&last.eigenvalues)
                            .map(|(d, &e)| d.is_some_and(|d| d < level_tolerance(e)))
                            .collect();
                        return Ok(finish(last, spec));
                    }
                    Err(e) => return Err(e),
                };
                if current.converged.iter().all(|&c| c) {
                    return Ok(finish(current, spec));
                }
                previous = Some(current);
                n += BASIS_STEP;
            }
        }
    }
}

/// `⟨ψ_ν|O|ψ_ν⟩ / ⟨ψ_ν|ψ_ν⟩` for a level of a model-backed result.
pub fn expectation(result: &VariationalResult, level: usize, observable: Observable) -> Result<f64> {
    let params = result
        .params
        .ok_or_else(|| Error::Invalid("result carries no model; expectation needs one".into()))?;
    check_observable(&params, observable)?;
    let c = result.coefficients.get(level).ok_or(Error::IndexOutOfRange {
        index: level,
        count: result.coefficients.len(),
    })?;
    let n = result.basis_size;
    let (o, s) = match result.representation {
        Representation::Monomial => {
            let basis = MonomialBasis::new(params, n)?;
            (basis.observable(observable)?, basis.gram()?)
        }
        Representation::Orthonormal => {
            let basis = OrthoBasis::new(params, n)?;
            (basis.observable(observable), basis.gram())
        }
    };
    let c = DVector::from_column_slice(c);
    Ok(c.dot(&(o * &c)) / c.dot(&(s * &c)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HellmannFeynman {
    pub parameter: Parameter,
    pub level: usize,
    pub delta: f64,
    /// Central difference of `E_ν` at step `δ`.
    pub fd_slope: f64,
    /// `-⟨∂V/∂parameter⟩` with sign folded in, i.e. the predicted slope.
    pub expectation_slope: f64,
    pub gap: f64,
    /// Central difference at `δ/2`.
    pub fd_slope_half: f64,
    /// Richardson extrapolation of the two differences.
    pub richardson_slope: f64,
    pub richardson_gap: f64,
    pub basis_size: usize,
}

/// Index of the shifted level that best overlaps the reference level.
fn tracked_level(reference: &[f64], s: &DMatrix<f64>, shifted: &VariationalResult) -> usize {
    let r = DVector::from_column_slice(reference);
    let sr = s * r;
    shifted
        .coefficients
        .iter()
        .map(|c| DVector::from_column_slice(c).dot(&sr).abs())
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .map_or(0, |(i, _)| i)
}

/// Compares the central difference of `E_ν` in `parameter` with the
/// Hellmann–Feynman slope `-⟨x²⟩, -⟨x⁴⟩, -⟨1/r⟩` or `-⟨r⟩`.
///
/// The basis size is fixed by a converged [`spectrum`] run at the centre and
/// kept for all shifted solves.
pub fn hellmann_feynman_check(
    spec: &VariationalSpec,
    level: usize,
    parameter: Parameter,
    delta: f64,
) -> Result<HellmannFeynman> {
    if !(delta > 0.0) {
        return Err(Error::Invalid(format!("step must be positive, got {delta}")));
    }
    let states = (level + 2).max(spec.states);
    let probe = VariationalSpec {
        states,
        basis_size: spec.basis_size.max(states),
        ..spec.clone()
    };
    let converged = spectrum(&probe)?;
    let n = converged.basis_size;
    let fixed = probe.resized(n);

    let centre = solve(&fixed)?;
    let reference = &centre.coefficients[level];
    let s_centre = assemble(&fixed, n)?.s;
    let p0 = spec.params.get(parameter);
    let at = |step: f64| -> Result<f64> {
        let shifted = VariationalSpec {
            params: spec.params.with(parameter, p0 + step)?,
            ..fixed.clone()
        };
        let r = solve(&shifted)?;
        let tracked = tracked_level(reference, &s_centre, &r);
        if tracked != level {
            return Err(Error::Crossing { level });
        }
        Ok(r.eigenvalues[level])
    };
    let fd = |h: f64| -> Result<f64> { Ok((at(h)? - at(-h)?) / (2.0 * h)) };
    let fd_slope = fd(delta)?;
    let fd_slope_half = fd(0.5 * delta)?;
    let observable = spec.params.derivative_observable(parameter);
    let expectation_slope = -expectation(&centre, level, observable)?;
    let richardson_slope = (4.0 * fd_slope_half - fd_slope) / 3.0;
    Ok(HellmannFeynman {
        parameter,
        level,
        delta,
        fd_slope,
        expectation_slope,
        gap: (fd_slope - expectation_slope).abs(),
        fd_slope_half,
        richardson_slope,
        richardson_gap: (richardson_slope - expectation_slope).abs(),
        basis_size: n,
    })
}
