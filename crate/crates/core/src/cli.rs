//! Command-line surface of the `qes` binary.
//!
//! Subcommands: `exact` (truncation solutions), `sweep` (variational curves
//! plus truncation points along a parameter grid), `threshold` (where a
//! level crosses zero), `check` (invariant suites) and `moments` (moment
//! tables).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{coulomb_h_action, sextic_h_action, CoulombParams, CoulombRecurrence, HAction, ModelKind, SexticParams, SexticRecurrence};
use crate::moments::{coulomb_moments, quadrature_oracle, sextic_moments, MomentTable};
use crate::truncation::{
    assemble_wavefunction, coulomb_solution, count_nodes, sextic_b_for_a, sextic_constraint, sextic_spectrum,
    TruncationSolution,
};
use crate::ttrr::generate_coefficients;
use crate::variational::{
    hellmann_feynman_check, spectrum, ModelParams, Parameter, VariationalSpec, DEFAULT_BASIS, DEFAULT_MAX_BASIS,
};

/// Header of sweep CSV output.
pub const SWEEP_HEADER: [&str; 8] = ["model", "param", "value", "nu", "sector", "energy", "provenance", "converged"];

// ---------------------------------------------------------------------------
// Grids and parameter arguments

/// `start:stop:step`, endpoints included within half a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let bad = || Error::Invalid(format!("grid must be start:stop:step, got {text:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let (start, stop, step) = (nums[0], nums[1], nums[2]);
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step == 0.0 || (stop - start) * step < 0.0 {
            return Err(Error::Invalid(format!("grid {text:?} is not monotone from start to stop")));
        }
        Ok(Self { start, stop, step })
    }

    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 0.5).floor() as usize;
        (0..=count).map(|k| tidy(self.start + self.step * k as f64)).collect()
    }

    pub fn lo(&self) -> f64 {
        self.start.min(self.stop)
    }

    pub fn hi(&self) -> f64 {
        self.start.max(self.stop)
    }

    fn contains(&self, x: f64) -> bool {
        let slack = 1e-12 * (1.0 + x.abs());
        x >= self.lo() - slack && x <= self.hi() + slack
    }
}

/// Shortest round-trip decimal, exponent form for very small or large
/// magnitudes, no negative zero.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x.is_finite() && (x.abs() < 1e-4 || x.abs() >= 1e15) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

/// Rounds away accumulated grid drift such as `-5.8999999999999995`.
fn tidy(x: f64) -> f64 {
    let scaled = (x * 1e12).round() / 1e12;
    if (scaled - x).abs() <= 1e-9 * (1.0 + x.abs()) { scaled } else { x }
}

/// A parameter flag: a single value or a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamArg {
    Fixed(f64),
    Grid(Grid),
}

impl ParamArg {
    pub fn parse(text: &str) -> Result<Self> {
        if text.contains(':') {
            Grid::parse(text).map(ParamArg::Grid)
        } else {
            text.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(ParamArg::Fixed)
                .ok_or_else(|| Error::Invalid(format!("expected a number or start:stop:step, got {text:?}")))
        }
    }
}

// ---------------------------------------------------------------------------
// Levels at a single parameter point

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Level {
    pub nu: usize,
    /// Parity `s` (oscillator) or `γ` (Coulomb).
    pub sector: f64,
    pub energy: f64,
    pub convergence: Option<f64>,
    pub converged: bool,
}

/// Model and the parameters that stay fixed in a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point {
    pub model: ModelKind,
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
}

impl Point {
    pub fn with(&self, parameter: Parameter, value: f64) -> Self {
        match parameter {
            Parameter::A => Self { a: value, ..*self },
            Parameter::B => Self { b: value, ..*self },
        }
    }

    fn params(&self, s: u8) -> Result<ModelParams> {
        Ok(match self.model {
            ModelKind::Sextic => ModelParams::Sextic(SexticParams::new(self.a, self.b, s)?),
            ModelKind::Coulomb => ModelParams::Coulomb(CoulombParams::new(self.gamma, self.a, self.b)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelOptions {
    pub levels: usize,
    /// Merge oscillator parity sectors and number levels by energy.
    pub full_line: bool,
    /// Oscillator sectors to solve when not merging.
    pub sectors: Vec<u8>,
    pub max_basis: usize,
}

impl LevelOptions {
    pub fn new(levels: usize) -> Self {
        Self {
            levels,
            full_line: false,
            sectors: vec![0, 1],
            max_basis: DEFAULT_MAX_BASIS,
        }
    }
}

fn solve_sector(params: ModelParams, levels: usize, max_basis: usize) -> Result<Vec<(f64, Option<f64>, bool)>> {
    let start = DEFAULT_BASIS.min(max_basis).max(levels);
    let spec = VariationalSpec::new(params, start, levels)?.max_basis(max_basis);
    let r = spectrum(&spec)?;
    Ok((0..r.eigenvalues.len())
        .map(|k| (r.eigenvalues[k], r.convergence[k], r.converged[k]))
        .collect())
}

/// Lowest levels at one point, per sector or merged.
pub fn levels_at(point: &Point, options: &LevelOptions) -> Result<Vec<Level>> {
    match point.model {
        ModelKind::Coulomb => Ok(solve_sector(point.params(0)?, options.levels, options.max_basis)?
            .into_iter()
            .enumerate()
            .map(|(nu, (energy, convergence, converged))| Level {
                nu,
                sector: point.gamma,
                energy,
                convergence,
                converged,
            })
            .collect()),
        ModelKind::Sextic => {
            let sectors: &[u8] = if options.full_line { &[0, 1] } else { &options.sectors };
            let mut out = Vec::new();
            for &s in sectors {
                for (nu, (energy, convergence, converged)) in
                    solve_sector(point.params(s)?, options.levels, options.max_basis)?.into_iter().enumerate()
                {
                    out.push(Level {
                        nu,
                        sector: f64::from(s),
                        energy,
                        convergence,
                        converged,
                    });
                }
            }
            if options.full_line {
                out.sort_by(|x, y| x.energy.total_cmp(&y.energy));
                out.truncate(options.levels);
                for (nu, level) in out.iter_mut().enumerate() {
                    level.nu = nu;
                }
            }
            Ok(out)
        }
    }
}

// ---------------------------------------------------------------------------
// Sweeps

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Truncation,
    Variational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Exact,
    Converged,
    Unconverged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub model: ModelKind,
    pub param: Parameter,
    pub value: f64,
    pub a: f64,
    pub b: f64,
    pub gamma: Option<f64>,
    pub nu: usize,
    pub sector: f64,
    pub energy: f64,
    pub provenance: Provenance,
    /// `|E(N) - E(N-5)|` for variational rows, 0 for truncation rows.
    pub convergence: Option<f64>,
    pub status: Status,
    /// Truncation order for truncation rows.
    pub order: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub base: Point,
    pub param: Parameter,
    pub grid: Grid,
    pub options: LevelOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    pub unconverged: usize,
    pub failed: usize,
}

/// A truncation root inside a sweep window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationPoint {
    pub value: f64,
    pub order: usize,
    pub sector: f64,
    /// Level within its sector (oscillator) or curve index (Coulomb).
    pub level: usize,
    pub energy: f64,
}

const MAX_ORDER: usize = 400;

/// Truncation roots whose parameter lands inside the sweep window, for
/// levels below `options.levels`.
pub fn truncation_points(spec: &SweepSpec) -> Result<Vec<TruncationPoint>> {
    let base = spec.base;
    let levels = spec.options.levels;
    let mut out = Vec::new();
    match (base.model, spec.param) {
        (ModelKind::Sextic, Parameter::B) => {
            let reach = spec.grid.lo().abs().max(spec.grid.hi().abs());
            for &s in &spec.options.sectors {
                for n in 0..MAX_ORDER {
                    let bs = sextic_b_for_a(n, s, base.a);
                    if bs.iter().all(|b| b.abs() > reach + 1.0) {
                        break;
                    }
                    for b in bs.into_iter().filter(|&b| spec.grid.contains(b)) {
                        let sol = sextic_spectrum(n, s, b)?;
                        for (i, &e) in sol.energies.iter().enumerate().take(levels) {
                            out.push(TruncationPoint {
                                value: b,
                                order: n,
                                sector: f64::from(s),
                                level: i,
                                energy: e,
                            });
                        }
                    }
                }
            }
        }
        (ModelKind::Sextic, Parameter::A) => {
            for &s in &spec.options.sectors {
                for n in 0..MAX_ORDER {
                    let a = sextic_constraint(n, s, base.b);
                    if a > spec.grid.hi() + 1e-12 {
                        break;
                    }
                    if !spec.grid.contains(a) {
                        continue;
                    }
                    let sol = sextic_spectrum(n, s, base.b)?;
                    for (i, &e) in sol.energies.iter().enumerate().take(levels) {
                        out.push(TruncationPoint {
                            value: a,
                            order: n,
                            sector: f64::from(s),
                            level: i,
                            energy: e,
                        });
                    }
                }
            }
        }
        (ModelKind::Coulomb, Parameter::A) => {
            for n in 0..MAX_ORDER {
                let sol = coulomb_solution(n, base.gamma, base.b)?;
                let relevant = &sol.a_roots[..levels.min(n + 1)];
                for (i, &a) in relevant.iter().enumerate() {
                    if spec.grid.contains(a) {
                        out.push(TruncationPoint {
                            value: a,
                            order: n,
                            sector: base.gamma,
                            level: i,
                            energy: sol.energy,
                        });
                    }
                }
                // Roots of a fixed branch drift down as n grows.
                if n + 1 >= levels && relevant.iter().all(|&a| a < spec.grid.lo()) {
                    break;
                }
            }
        }
        (ModelKind::Coulomb, Parameter::B) => out = coulomb_points_in_b(spec)?,
    }
    out.sort_by(|x, y| {
        x.value
            .total_cmp(&y.value)
            .then(x.sector.total_cmp(&y.sector))
            .then(x.level.cmp(&y.level))
    });
    Ok(out)
}

/// Coulomb truncation points along `b` at fixed `a`: zeros of
/// `a^{(i)}_n(b) - a`, bracketed on the sweep grid and refined by bisection.
fn coulomb_points_in_b(spec: &SweepSpec) -> Result<Vec<TruncationPoint>> {
    let base = spec.base;
    let levels = spec.options.levels;
    let grid = spec.grid.values();
    let root = |n: usize, i: usize, b: f64| -> Result<f64> { Ok(coulomb_solution(n, base.gamma, b)?.a_roots[i] - base.a) };
    let mut out = Vec::new();
    for n in 0..MAX_ORDER {
        let count = levels.min(n + 1);
        let table: Vec<Vec<f64>> = grid
            .iter()
            .map(|&b| Ok(coulomb_solution(n, base.gamma, b)?.a_roots[..count].to_vec()))
            .collect::<Result<_>>()?;
        for i in 0..count {
            for k in 0..grid.len() {
                let f0 = table[k][i] - base.a;
                if f0 == 0.0 {
                    out.push((n, i, grid[k]));
                    continue;
                }
                if k + 1 == grid.len() {
                    continue;
                }
                let f1 = table[k + 1][i] - base.a;
                if f0 * f1 < 0.0 {
                    let (mut lo, mut hi, mut flo) = (grid[k], grid[k + 1], f0);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo.min(hi) || mid >= lo.max(hi) {
                            break;
                        }
                        let fm = root(n, i, mid)?;
                        if fm == 0.0 {
                            lo = mid;
                            hi = mid;
                            break;
                        }
                        if (fm < 0.0) == (flo < 0.0) {
                            lo = mid;
                            flo = fm;
                        } else {
                            hi = mid;
                        }
                    }
                    out.push((n, i, 0.5 * (lo + hi)));
                }
            }
        }
        if n + 1 >= levels && table.iter().all(|row| row.iter().all(|&a| a < base.a)) {
            break;
        }
    }
    Ok(out
        .into_iter()
        .map(|(n, i, b)| TruncationPoint {
            value: b,
            order: n,
            sector: base.gamma,
            level: i,
            energy: crate::truncation::coulomb_energy(n, base.gamma, b),
        })
        .collect())
}

fn record(spec: &SweepSpec, value: f64, provenance: Provenance) -> SweepRecord {
    let p = spec.base.with(spec.param, value);
    SweepRecord {
        model: p.model,
        param: spec.param,
        value,
        a: p.a,
        b: p.b,
        gamma: (p.model == ModelKind::Coulomb).then_some(p.gamma),
        nu: 0,
        sector: f64::NAN,
        energy: f64::NAN,
        provenance,
        convergence: None,
        status: Status::Failed,
        order: None,
        error: None,
    }
}

/// Index among the merged full-line levels of the level in `sector` closest
/// to `energy`.
fn merged_index(levels: &[Level], sector: f64, energy: f64) -> Option<usize> {
    levels
        .iter()
        .filter(|l| l.sector == sector)
        .min_by(|x, y| (x.energy - energy).abs().total_cmp(&(y.energy - energy).abs()))
        .map(|l| l.nu)
}

/// Variational rows for every grid point and level, then truncation rows;
/// grid points run on the current rayon pool, output order is fixed.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutput> {
    let grid = spec.grid.values();
    let per_point: Vec<Vec<SweepRecord>> = grid
        .par_iter()
        .map(|&value| {
            let point = spec.base.with(spec.param, value);
            match levels_at(&point, &spec.options) {
                Ok(levels) => levels
                    .into_iter()
                    .map(|l| SweepRecord {
                        nu: l.nu,
                        sector: l.sector,
                        energy: l.energy,
                        convergence: l.convergence,
                        status: if l.converged { Status::Converged } else { Status::Unconverged },
                        ..record(spec, value, Provenance::Variational)
                    })
                    .collect(),
                Err(e) => vec![SweepRecord {
                    error: Some(e.to_string()),
                    ..record(spec, value, Provenance::Variational)
                }],
            }
        })
        .collect();

    let points = truncation_points(spec)?;
    let truncation: Vec<SweepRecord> = points
        .par_iter()
        .map(|tp| {
            let mut nu = tp.level;
            if spec.options.full_line && spec.base.model == ModelKind::Sextic {
                let point = spec.base.with(spec.param, tp.value);
                let opts = LevelOptions {
                    levels: spec.options.levels + tp.level + 1,
                    ..spec.options.clone()
                };
                match levels_at(&point, &opts) {
                    Ok(levels) => nu = merged_index(&levels, tp.sector, tp.energy).unwrap_or(nu),
                    Err(e) => {
                        return SweepRecord {
                            sector: tp.sector,
                            energy: tp.energy,
                            order: Some(tp.order),
                            error: Some(e.to_string()),
                            ..record(spec, tp.value, Provenance::Truncation)
                        }
                    }
                }
            }
            SweepRecord {
                nu,
                sector: tp.sector,
                energy: tp.energy,
                convergence: Some(0.0),
                status: Status::Exact,
                order: Some(tp.order),
                ..record(spec, tp.value, Provenance::Truncation)
            }
        })
        .collect();
    let truncation: Vec<SweepRecord> = truncation
        .into_iter()
        .filter(|r| !(spec.options.full_line && r.status == Status::Exact && r.nu >= spec.options.levels))
        .collect();

    let mut records: Vec<SweepRecord> = per_point.into_iter().flatten().collect();
    records.extend(truncation);
    let unconverged = records.iter().filter(|r| r.status == Status::Unconverged).count();
    let failed = records.iter().filter(|r| r.status == Status::Failed).count();
    Ok(SweepOutput {
        records,
        unconverged,
        failed,
    })
}

/// A truncation point compared with the variational level it should sit on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Overlay {
    pub point: TruncationPoint,
    pub variational: f64,
    pub deviation: f64,
}

/// Variational energy of the matching level evaluated at each truncation
/// point's own parameter value.
pub fn overlay(spec: &SweepSpec) -> Result<Vec<Overlay>> {
    truncation_points(spec)?
        .par_iter()
        .map(|tp| {
            let point = spec.base.with(spec.param, tp.value);
            let opts = LevelOptions {
                full_line: false,
                sectors: if point.model == ModelKind::Sextic { vec![tp.sector as u8] } else { vec![0] },
                ..spec.options.clone()
            };
            let levels = levels_at(&point, &opts)?;
            let v = levels
                .iter()
                .find(|l| l.nu == tp.level)
                .map(|l| l.energy)
                .ok_or(Error::IndexOutOfRange {
                    index: tp.level,
                    count: levels.len(),
                })?;
            Ok(Overlay {
                point: *tp,
                variational: v,
                deviation: (v - tp.energy).abs(),
            })
        })
        .collect()
}

pub fn sweep_csv(records: &[SweepRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
    w.write_record(SWEEP_HEADER).map_err(io)?;
    for r in records {
        let converged = match (r.status, r.convergence) {
            (Status::Failed, _) | (_, None) => "NaN".to_string(),
            (_, Some(c)) => fmt_num(c),
        };
        w.write_record([
            r.model.name().to_string(),
            r.param.name().to_string(),
            fmt_num(r.value),
            r.nu.to_string(),
            fmt_num(r.sector),
            fmt_num(r.energy),
            match r.provenance {
                Provenance::Truncation => "truncation",
                Provenance::Variational => "variational",
            }
            .to_string(),
            converged,
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Invalid(e.to_string()))
}

/// Red polylines per level, blue circles for truncation points.
pub fn sweep_svg(records: &[SweepRecord], title: &str) -> String {
    const W: f64 = 800.0;
    const H: f64 = 600.0;
    const L: f64 = 70.0;
    const R: f64 = 20.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    let finite: Vec<&SweepRecord> = records.iter().filter(|r| r.energy.is_finite()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for r in &finite {
        x0 = x0.min(r.value);
        x1 = x1.max(r.value);
        y0 = y0.min(r.energy);
        y1 = y1.max(r.energy);
    }
    if !(x1 > x0) {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if !(y1 > y0) {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let sx = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let sy = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{L}" y="{T}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - L - R,
        H - T - B
    );
    let _ = writeln!(svg, r#"<text x="{}" y="25" text-anchor="middle" font-size="16">{title}</text>"#, W / 2.0);
    let param = records.first().map_or("x", |r| r.param.name());
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{param}</text>"#,
        W / 2.0,
        H - 10.0
    );
    for (x, anchor) in [(x0, "start"), (x1, "end")] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="{anchor}" font-size="12">{x}</text>"#,
            sx(x),
            H - B + 16.0
        );
    }
    for y in [y0, y1] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-size="12">{:.3}</text>"#,
            L - 6.0,
            sy(y) + 4.0,
            y
        );
    }

    let mut curves: Vec<((u64, usize), Vec<(f64, f64)>)> = Vec::new();
    for r in finite.iter().filter(|r| r.provenance == Provenance::Variational) {
        let key = (r.sector.to_bits(), r.nu);
        match curves.iter_mut().find(|(k, _)| *k == key) {
            Some((_, pts)) => pts.push((r.value, r.energy)),
            None => curves.push((key, vec![(r.value, r.energy)])),
        }
    }
    for (_, pts) in &curves {
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="red" stroke-width="1.2" points="{}"/>"#,
            path.join(" ")
        );
    }
    for r in finite.iter().filter(|r| r.provenance == Provenance::Truncation) {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="none" stroke="blue" stroke-width="1.5"/>"#,
            sx(r.value),
            sy(r.energy)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

// ---------------------------------------------------------------------------
// Thresholds

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSpec {
    pub base: Point,
    pub param: Parameter,
    pub level: usize,
    /// Oscillator sector to count `level` in; `None` counts on the full line.
    pub sector: Option<u8>,
    /// Explicit bracket; otherwise one is searched for from the base value.
    pub bracket: Option<(f64, f64)>,
    pub max_basis: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub param: Parameter,
    pub level: usize,
    /// Parity (oscillator, when counted per sector) or `γ`.
    pub sector: Option<f64>,
    pub full_line: bool,
    pub bracket: (f64, f64),
    pub root: f64,
    pub residual: f64,
}

const THRESHOLD_RESIDUAL: f64 = 1e-8;

fn level_energy(spec: &ThresholdSpec, value: f64) -> Result<f64> {
    let point = spec.base.with(spec.param, value);
    let options = LevelOptions {
        levels: spec.level + 1,
        full_line: spec.sector.is_none(),
        sectors: spec.sector.into_iter().collect(),
        max_basis: spec.max_basis,
    };
    levels_at(&point, &options)?
        .into_iter()
        .find(|l| l.nu == spec.level)
        .map(|l| l.energy)
        .ok_or(Error::IndexOutOfRange {
            index: spec.level,
            count: spec.level,
        })
}

/// Value of the swept parameter where level `ν` crosses zero.
///
/// Every level decreases in both `a` and `b` (the derivatives are minus
/// positive expectation values), so the bracket search walks in the
/// direction that lowers or raises the energy with doubling steps.
pub fn find_threshold(spec: &ThresholdSpec) -> Result<ThresholdResult> {
    let f = |x: f64| level_energy(spec, x);
    let (mut lo, mut hi, mut flo, mut fhi) = match spec.bracket {
        Some((lo, hi)) => {
            let (flo, fhi) = (f(lo)?, f(hi)?);
            if flo * fhi > 0.0 {
                return Err(Error::Bracket { lo, hi });
            }
            (lo, hi, flo, fhi)
        }
        None => {
            let x0 = match spec.param {
                Parameter::A => spec.base.a,
                Parameter::B => spec.base.b,
            };
            let f0 = f(x0)?;
            let dir = if f0 > 0.0 { 1.0 } else { -1.0 };
            let mut step = 0.5;
            let (mut x, mut fx) = (x0, f0);
            loop {
                let next = x + dir * step;
                let fnext = f(next)?;
                if fx * fnext <= 0.0 {
                    break if dir > 0.0 { (x, next, fx, fnext) } else { (next, x, fnext, fx) };
                }
                x = next;
                fx = fnext;
                step *= 2.0;
                if step > 1e4 {
                    return Err(Error::Bracket {
                        lo: x0.min(x),
                        hi: x0.max(x),
                    });
                }
            }
        }
    };
    let bracket = (lo, hi);
    for _ in 0..200 {
        if flo == 0.0 || fhi == 0.0 || hi - lo <= 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid)?;
        if (fm < 0.0) == (flo < 0.0) && fm != 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    let root = if flo == 0.0 {
        lo
    } else if fhi == 0.0 {
        hi
    } else {
        lo - flo * (hi - lo) / (fhi - flo)
    };
    let residual = f(root)?.abs();
    if residual > THRESHOLD_RESIDUAL {
        return Err(Error::Precision { estimate: residual });
    }
    Ok(ThresholdResult {
        param: spec.param,
        level: spec.level,
        sector: match spec.base.model {
            ModelKind::Sextic => spec.sector.map(f64::from),
            ModelKind::Coulomb => Some(spec.base.gamma),
        },
        full_line: spec.base.model == ModelKind::Sextic && spec.sector.is_none(),
        bracket,
        root,
        residual,
    })
}

// ---------------------------------------------------------------------------
// Exact solutions

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactRow {
    pub model: ModelKind,
    pub n: usize,
    /// Parity `s` or `γ`.
    pub sector: f64,
    pub a: f64,
    pub b: f64,
    pub energy: f64,
    pub root_index: usize,
    pub nodes: Option<usize>,
    /// Level in its sector (oscillator) or curve index (Coulomb).
    pub level: usize,
    pub full_line_nodes: Option<usize>,
    pub coefficients: Vec<f64>,
}

fn exact_rows<S: TruncationSolution>(
    model: ModelKind,
    sol: &S,
    sector: f64,
    a_of: impl Fn(usize) -> f64,
    e_of: impl Fn(usize) -> f64,
    b: f64,
) -> Result<Vec<ExactRow>> {
    (0..sol.roots().len())
        .map(|i| {
            let wf = assemble_wavefunction(sol, i)?;
            let label = sol.label(i);
            Ok(ExactRow {
                model,
                n: sol.order(),
                sector,
                a: a_of(i),
                b,
                energy: e_of(i),
                root_index: i,
                nodes: count_nodes(&wf.poly, wf.weight.node_domain()).ok(),
                level: label.level(),
                full_line_nodes: label.full_line_nodes(),
                coefficients: wf.poly,
            })
        })
        .collect()
}

pub fn exact_table(model: ModelKind, n: usize, s: u8, gamma: f64, b: f64) -> Result<Vec<ExactRow>> {
    match model {
        ModelKind::Sextic => {
            let sol = sextic_spectrum(n, s, b)?;
            exact_rows(model, &sol, f64::from(s), |_| sol.a, |i| sol.energies[i], b)
        }
        ModelKind::Coulomb => {
            let sol = coulomb_solution(n, gamma, b)?;
            exact_rows(model, &sol, gamma, |i| sol.a_roots[i], |_| sol.energy, b)
        }
    }
}

fn exact_csv(rows: &[ExactRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
    w.write_record([
        "model",
        "n",
        "sector",
        "a",
        "b",
        "energy",
        "root_index",
        "nodes",
        "level",
        "full_line_nodes",
        "coefficients",
    ])
    .map_err(io)?;
    let opt = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
    for r in rows {
        let coeffs: Vec<String> = r.coefficients.iter().map(|&c| fmt_num(c)).collect();
        w.write_record([
            r.model.name().to_string(),
            r.n.to_string(),
            fmt_num(r.sector),
            fmt_num(r.a),
            fmt_num(r.b),
            fmt_num(r.energy),
            r.root_index.to_string(),
            opt(r.nodes),
            r.level.to_string(),
            opt(r.full_line_nodes),
            coeffs.join(";"),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Invalid(e.to_string()))
}

// ---------------------------------------------------------------------------
// Moments

/// Oscillator orders `0, 2, ..., m_max` or Coulomb orders `m0, m0+1, ..., ≤ m_max`.
pub fn moment_table(model: ModelKind, b: f64, m0: f64, m_max: f64) -> Result<MomentTable> {
    match model {
        ModelKind::Sextic => {
            let top = m_max.floor() as usize;
            sextic_moments(b, top - top % 2)
        }
        ModelKind::Coulomb => {
            if m_max < m0 {
                return Err(Error::Invalid(format!("--max {m_max} is below the first order {m0}")));
            }
            coulomb_moments(m0, b, (m_max - m0).floor() as usize + 1)
        }
    }
}

fn moments_csv(table: &Result<MomentTable>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
    w.write_record(["m", "value", "err_estimate", "status"]).map_err(io)?;
    match table {
        Ok(t) => {
            for ((m, v), e) in t.orders().zip(t.values()).zip(t.errors()) {
                let status = if *e <= 1e-10 * v.abs() { "ok" } else { "imprecise" };
                w.write_record([fmt_num(m), fmt_num(*v), fmt_num(*e), status.to_string()])
                    .map_err(io)?;
            }
        }
        Err(e) => {
            w.write_record(["NaN".into(), "NaN".into(), "NaN".into(), format!("error: {e}")])
                .map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Invalid(e.to_string()))
}

// ---------------------------------------------------------------------------
// Check suites

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Hf,
    Symmetry,
    Recurrence,
    Moments,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckItem {
    fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    fn failed(name: impl Into<String>, error: &Error) -> Self {
        Self {
            name: format!("{}: {error}", name.into()),
            value: f64::NAN,
            tolerance: 0.0,
            passed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<CheckItem>,
}

impl CheckReport {
    fn new(suite: Suite, checks: Vec<CheckItem>) -> Self {
        Self {
            suite,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }
}

pub const HF_TOL: f64 = 1e-5;
pub const HF_STEP: f64 = 1e-4;

/// Random oscillator points away from deep double wells, where even and odd
/// levels pair up.
pub fn random_sextic_point(rng: &mut ChaCha8Rng) -> SexticParams {
    let a = rng.random_range(-3.0..6.0);
    let b = rng.random_range(-3.0..3.0);
    let s = rng.random_range(0..2u8);
    SexticParams { a, b, s }
}

pub fn random_coulomb_point(rng: &mut ChaCha8Rng) -> CoulombParams {
    let gamma = [0.5, 1.0, 2.5][rng.random_range(0..3usize)];
    let a = rng.random_range(-5.0..5.0);
    let b = rng.random_range(-2.0..2.0);
    CoulombParams { gamma, a, b }
}

fn hf_suite(seed: u64, points: usize) -> Vec<CheckItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    for _ in 0..points {
        cases.push(ModelParams::Sextic(random_sextic_point(&mut rng)));
    }
    for _ in 0..points {
        cases.push(ModelParams::Coulomb(random_coulomb_point(&mut rng)));
    }
    let jobs: Vec<(ModelParams, usize, Parameter)> = cases
        .into_iter()
        .flat_map(|p| (0..4).flat_map(move |nu| [Parameter::A, Parameter::B].map(|q| (p, nu, q))))
        .collect();
    jobs.par_iter()
        .map(|&(p, nu, q)| {
            let name = format!("{p:?} nu={nu} d/d{}", q.name());
            let run = VariationalSpec::with_states(p, nu + 1).and_then(|spec| hellmann_feynman_check(&spec, nu, q, HF_STEP));
            match run {
                Ok(hf) => CheckItem::new(name, hf.gap, HF_TOL),
                Err(e) => CheckItem::failed(name, &e),
            }
        })
        .collect()
}

fn multiset_gap(x: &[f64], y: &[f64]) -> f64 {
    let mut x = x.to_vec();
    let mut y = y.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    if x.len() != y.len() {
        return f64::INFINITY;
    }
    x.iter().zip(&y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn symmetry_suite(seed: u64) -> Vec<CheckItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    for n in 0..=6 {
        for s in 0..2u8 {
            for _ in 0..5 {
                let b = rng.random_range(-6.0..6.0);
                let name = format!("E-set(-b) = -E-set(b), n={n} s={s} b={b}");
                match (sextic_spectrum(n, s, b), sextic_spectrum(n, s, -b)) {
                    (Ok(p), Ok(m)) => {
                        let negated: Vec<f64> = m.energies.iter().map(|e| -e).collect();
                        let scale = p.energies.iter().fold(1.0f64, |acc, e| acc.max(e.abs()));
                        checks.push(CheckItem::new(name, multiset_gap(&p.energies, &negated) / scale, 1e-12));
                    }
                    (Err(e), _) | (_, Err(e)) => checks.push(CheckItem::failed(name, &e)),
                }
            }
        }
    }
    // Blue points of the a = 0 curves: root i at b* and root n-i at -b*
    // sit on variational levels with opposite energies.
    for n in 0..=4 {
        for s in 0..2u8 {
            let b = sextic_b_for_a(n, s, 0.0)[0];
            let name = format!("variational mirror at a=0, n={n} s={s}");
            let run = || -> Result<f64> {
                let exact = sextic_spectrum(n, s, b)?;
                let plus = solve_sector(ModelParams::Sextic(SexticParams::new(0.0, b, s)?), n + 1, DEFAULT_MAX_BASIS)?;
                let minus = solve_sector(ModelParams::Sextic(SexticParams::new(0.0, -b, s)?), n + 1, DEFAULT_MAX_BASIS)?;
                let mut worst = 0.0f64;
                for i in 0..=n {
                    let e = exact.energies[i];
                    worst = worst.max((plus[i].0 - e).abs()).max((minus[n - i].0 + e).abs());
                }
                Ok(worst)
            };
            checks.push(match run() {
                Ok(v) => CheckItem::new(name, v, 1e-8),
                Err(e) => CheckItem::failed(name, &e),
            });
        }
    }
    checks
}

/// Largest relative defect of `Σ_j c_j H φ_j = E Σ_j c_j φ_j` on the
/// components `φ_0..φ_{last}`.
fn h_action_defect(c: &[f64], e: f64, last: usize, action: impl Fn(usize) -> HAction) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..=last {
        let mut sum = -e * c[k];
        let mut scale = (e * c[k]).abs();
        for (j, &cj) in c.iter().enumerate() {
            for (offset, coeff) in action(j).terms() {
                if j as isize + offset == k as isize {
                    sum += coeff * cj;
                    scale = scale.max((coeff * cj).abs());
                }
            }
        }
        worst = worst.max(sum.abs() / scale.max(f64::MIN_POSITIVE));
    }
    worst
}

fn recurrence_suite(seed: u64) -> Vec<CheckItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    const TERMS: usize = 12;
    for _ in 0..20 {
        let p = random_sextic_point(&mut rng);
        let e = rng.random_range(-10.0..10.0);
        let name = format!("sextic H-action vs recurrence, {p:?} E={e}");
        match generate_coefficients(&SexticRecurrence::new(p), e, TERMS) {
            Ok(seq) => {
                let c = seq.to_vec();
                checks.push(CheckItem::new(name, h_action_defect(&c, e, TERMS - 1, |j| sextic_h_action(j, &p)), 1e-12));
            }
            Err(err) => checks.push(CheckItem::failed(name, &err)),
        }

        let q = random_coulomb_point(&mut rng);
        let energy = rng.random_range(0.0..12.0);
        let name = format!("coulomb H-action vs recurrence, {q:?} E={energy}");
        let run = || -> Result<f64> {
            let seq = generate_coefficients(&CoulombRecurrence::new(q.gamma, q.b, energy)?, q.a, TERMS)?;
            Ok(h_action_defect(&seq.to_vec(), energy, TERMS - 2, |j| coulomb_h_action(j, &q)))
        };
        checks.push(match run() {
            Ok(v) => CheckItem::new(name, v, 1e-12),
            Err(err) => CheckItem::failed(name, &err),
        });
    }
    for n in 0..=8 {
        let b = rng.random_range(-4.0..4.0);
        let name = format!("c_(n+1) vanishes at the roots, n={n} b={b}");
        let run = || -> Result<f64> {
            let mut worst = 0.0f64;
            for s in 0..2u8 {
                let sol = sextic_spectrum(n, s, b)?;
                for seq in &sol.coefficients {
                    worst = worst.max((seq.ln_abs(n + 1) - seq.ln_max_abs()).exp());
                }
            }
            let sol = coulomb_solution(n, 1.0, b)?;
            for seq in &sol.coefficients {
                worst = worst.max((seq.ln_abs(n + 1) - seq.ln_max_abs()).exp());
            }
            Ok(worst)
        };
        checks.push(match run() {
            Ok(v) => CheckItem::new(name, v, 1e-9),
            Err(e) => CheckItem::failed(name, &e),
        });
    }
    checks
}

pub const MOMENT_B: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];
pub const MOMENT_GAMMAS: [f64; 3] = [0.5, 1.0, 2.5];
pub const SEXTIC_MOMENT_MAX: usize = 60;
pub const COULOMB_MOMENT_SPAN: usize = 40;

fn moments_suite() -> Vec<CheckItem> {
    let mut jobs: Vec<(ModelKind, f64, f64)> = Vec::new();
    for &b in &MOMENT_B {
        jobs.push((ModelKind::Sextic, b, 0.0));
        for &g in &MOMENT_GAMMAS {
            jobs.push((ModelKind::Coulomb, b, g));
        }
    }
    let mut checks: Vec<CheckItem> = jobs
        .par_iter()
        .map(|&(model, b, gamma)| {
            let name = match model {
                ModelKind::Sextic => format!("sextic moments vs quadrature, b={b}, m<={SEXTIC_MOMENT_MAX}"),
                ModelKind::Coulomb => format!("coulomb moments vs quadrature, b={b}, gamma={gamma}"),
            };
            let run = || -> Result<f64> {
                let table = match model {
                    ModelKind::Sextic => sextic_moments(b, SEXTIC_MOMENT_MAX)?,
                    ModelKind::Coulomb => coulomb_moments(2.0 * gamma, b, COULOMB_MOMENT_SPAN + 1)?,
                };
                let mut worst = 0.0f64;
                for (m, v) in table.orders().zip(table.values()) {
                    if !(*v > 0.0) {
                        return Ok(f64::INFINITY);
                    }
                    let oracle = quadrature_oracle(model, m, b)?;
                    worst = worst.max((v - oracle).abs() / oracle.abs());
                }
                Ok(worst)
            };
            match run() {
                Ok(v) => CheckItem::new(name, v, 1e-9),
                Err(e) => CheckItem::failed(name, &e),
            }
        })
        .collect();
    let anchors = || -> Result<(f64, f64)> {
        Ok((sextic_moments(0.0, 0)?.get(0)?, coulomb_moments(0.0, 0.0, 1)?.get(0)?))
    };
    match anchors() {
        Ok((mu0, nu0)) => {
            // Γ(1/4) to double precision.
            const GAMMA_QUARTER: f64 = 3.625_609_908_221_908;
            let want_mu0 = 2f64.powf(0.25) * GAMMA_QUARTER / 2.0;
            let want_nu0 = std::f64::consts::PI.sqrt() / 2.0;
            checks.push(CheckItem::new("mu_0(b=0) closed form", (mu0 - want_mu0).abs(), 1e-10));
            checks.push(CheckItem::new("nu_0(b=0) closed form", (nu0 - want_nu0).abs(), 1e-10));
        }
        Err(e) => checks.push(CheckItem::failed("closed-form anchors", &e)),
    }
    checks
}

pub fn run_suite(suite: Suite, seed: u64) -> Vec<CheckReport> {
    match suite {
        Suite::Hf => vec![CheckReport::new(suite, hf_suite(seed, 10))],
        Suite::Symmetry => vec![CheckReport::new(suite, symmetry_suite(seed))],
        Suite::Recurrence => vec![CheckReport::new(suite, recurrence_suite(seed))],
        Suite::Moments => vec![CheckReport::new(suite, moments_suite())],
        Suite::All => [Suite::Hf, Suite::Symmetry, Suite::Recurrence, Suite::Moments]
            .into_iter()
            .flat_map(|s| run_suite(s, seed))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Argument parsing

#[derive(Debug, Parser)]
#[command(name = "qes", version, about = "Exact truncation states and variational spectra of the sextic oscillator and the perturbed Coulomb model")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Truncation solutions of a given order.
    Exact(ExactArgs),
    /// Variational levels along a parameter grid plus the truncation points on it.
    Sweep(SweepArgs),
    /// Parameter value at which a level crosses zero.
    Threshold(ThresholdArgs),
    /// Run invariant suites and print a JSON report.
    Check(CheckArgs),
    /// Moment table of the squared basis weight.
    Moments(MomentsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Sextic,
    Coulomb,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Sextic => ModelKind::Sextic,
            ModelArg::Coulomb => ModelKind::Coulomb,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ParamName {
    A,
    B,
}

impl From<ParamName> for Parameter {
    fn from(p: ParamName) -> Self {
        match p {
            ParamName::A => Parameter::A,
            ParamName::B => Parameter::B,
        }
    }
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write to a file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct JobsArgs {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "QES_JOBS")]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct ExactArgs {
    #[arg(value_enum)]
    model: ModelArg,
    #[arg(long)]
    n: usize,
    /// Parity (oscillator).
    #[arg(long, default_value_t = 0)]
    s: u8,
    /// Angular parameter (Coulomb).
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    b: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(value_enum)]
    model: ModelArg,
    /// Value or start:stop:step.
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    a: String,
    /// Value or start:stop:step.
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    b: String,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Restrict the oscillator to one parity sector.
    #[arg(long)]
    s: Option<u8>,
    #[arg(long, default_value_t = 8)]
    levels: usize,
    /// Merge oscillator sectors and number levels by energy.
    #[arg(long)]
    full_line: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_BASIS)]
    max_basis: usize,
    /// Title for SVG output.
    #[arg(long)]
    title: Option<String>,
    #[command(flatten)]
    jobs: JobsArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    #[arg(value_enum)]
    model: ModelArg,
    /// Parameter to vary.
    #[arg(long, value_enum)]
    sweep: ParamName,
    /// Fixed value, or the search start when swept.
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    a: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    b: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Level index.
    #[arg(long, default_value_t = 0)]
    nu: usize,
    /// Count `nu` within this oscillator sector instead of on the full line.
    #[arg(long)]
    s: Option<u8>,
    /// Bracket lo:hi instead of searching for one.
    #[arg(long, allow_hyphen_values = true)]
    bracket: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_BASIS)]
    max_basis: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(value_enum)]
    suite: Suite,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    jobs: JobsArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MomentsArgs {
    #[arg(value_enum)]
    model: ModelArg,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    b: f64,
    /// Coulomb: start the table at order 2γ.
    #[arg(long)]
    gamma: Option<f64>,
    /// Coulomb: first order when no γ is given.
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    m0: f64,
    /// Largest order.
    #[arg(long)]
    max: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Usage problems exit with 2, failed checks and computations with 1.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Invalid(msg) => Failure::Usage(msg),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> std::result::Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Run(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Run(e.to_string()))
        }
    }
}

fn json<T: Serialize>(value: &T) -> std::result::Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Run(e.to_string()))
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> std::result::Result<T, Failure> {
    let threads = match jobs {
        Some(0) => return Err(Failure::Usage("--jobs must be at least 1".into())),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, usize::from),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Run(e.to_string()))?;
    Ok(pool.install(f))
}

fn check_sector(s: Option<u8>) -> std::result::Result<(), Failure> {
    match s {
        Some(s) if s > 1 => Err(Failure::Usage(format!("--s must be 0 or 1, got {s}"))),
        _ => Ok(()),
    }
}

fn cmd_exact(args: ExactArgs) -> std::result::Result<(), Failure> {
    check_sector(Some(args.s))?;
    let rows = exact_table(args.model.into(), args.n, args.s, args.gamma, args.b)?;
    let text = match args.output.format.unwrap_or(Format::Csv) {
        Format::Csv => exact_csv(&rows)?,
        Format::Json => json(&rows)?,
        Format::Svg => return Err(Failure::Usage("exact supports csv and json output".into())),
    };
    emit(&args.output.out, &text)
}

fn cmd_sweep(args: SweepArgs) -> std::result::Result<(), Failure> {
    check_sector(args.s)?;
    if args.levels == 0 {
        return Err(Failure::Usage("--levels must be at least 1".into()));
    }
    let a = ParamArg::parse(&args.a)?;
    let b = ParamArg::parse(&args.b)?;
    let (param, grid, a0, b0) = match (a, b) {
        (ParamArg::Grid(g), ParamArg::Fixed(b)) => (Parameter::A, g, g.start, b),
        (ParamArg::Fixed(a), ParamArg::Grid(g)) => (Parameter::B, g, a, g.start),
        _ => return Err(Failure::Usage("exactly one of --a and --b must be a start:stop:step grid".into())),
    };
    let model: ModelKind = args.model.into();
    if model == ModelKind::Coulomb {
        CoulombParams::new(args.gamma, a0, b0)?;
    }
    let spec = SweepSpec {
        base: Point {
            model,
            a: a0,
            b: b0,
            gamma: args.gamma,
        },
        param,
        grid,
        options: LevelOptions {
            levels: args.levels,
            full_line: args.full_line,
            sectors: args.s.map_or(vec![0, 1], |s| vec![s]),
            max_basis: args.max_basis.max(args.levels),
        },
    };
    let output = with_pool(args.jobs.jobs, || run_sweep(&spec))??;
    let text = match args.output.format.unwrap_or(Format::Csv) {
        Format::Csv => sweep_csv(&output.records)?,
        Format::Json => json(&output)?,
        Format::Svg => {
            let title = args.title.unwrap_or_else(|| format!("{model} levels vs {}", param.name()));
            sweep_svg(&output.records, &title)
        }
    };
    if output.unconverged > 0 || output.failed > 0 {
        eprintln!(
            "warning: {} unconverged and {} failed rows",
            output.unconverged, output.failed
        );
    }
    emit(&args.output.out, &text)
}

fn cmd_threshold(args: ThresholdArgs) -> std::result::Result<(), Failure> {
    check_sector(args.s)?;
    let model: ModelKind = args.model.into();
    if model == ModelKind::Coulomb {
        CoulombParams::new(args.gamma, args.a, args.b)?;
    }
    let bracket = match &args.bracket {
        Some(text) => {
            let parts: Vec<f64> = text.split(':').filter_map(|p| p.trim().parse().ok()).collect();
            match parts[..] {
                [lo, hi] if lo < hi => Some((lo, hi)),
                _ => return Err(Failure::Usage(format!("--bracket must be lo:hi with lo < hi, got {text:?}"))),
            }
        }
        None => None,
    };
    let spec = ThresholdSpec {
        base: Point {
            model,
            a: args.a,
            b: args.b,
            gamma: args.gamma,
        },
        param: args.sweep.into(),
        level: args.nu,
        sector: if model == ModelKind::Sextic { args.s } else { None },
        bracket,
        max_basis: args.max_basis,
    };
    let result = find_threshold(&spec)?;
    let text = match args.output.format.unwrap_or(Format::Json) {
        Format::Json => json(&result)?,
        Format::Csv => format!(
            "param,level,sector,full_line,bracket_lo,bracket_hi,root,residual\n{},{},{},{},{},{},{},{}\n",
            result.param.name(),
            result.level,
            result.sector.map_or(String::new(), |s| s.to_string()),
            result.full_line,
            result.bracket.0,
            result.bracket.1,
            fmt_num(result.root),
            fmt_num(result.residual)
        ),
        Format::Svg => return Err(Failure::Usage("threshold supports csv and json output".into())),
    };
    emit(&args.output.out, &text)
}

fn cmd_check(args: CheckArgs) -> std::result::Result<(), Failure> {
    let reports = with_pool(args.jobs.jobs, || run_suite(args.suite, args.seed))?;
    let passed = reports.iter().all(|r| r.passed);
    emit(&args.out, &json(&reports)?)?;
    if passed {
        Ok(())
    } else {
        let failing: Vec<String> = reports
            .iter()
            .flat_map(|r| r.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()))
            .collect();
        Err(Failure::Check(format!("{} failing checks: {}", failing.len(), failing.join("; "))))
    }
}

fn cmd_moments(args: MomentsArgs) -> std::result::Result<(), Failure> {
    let model: ModelKind = args.model.into();
    let m0 = match (model, args.gamma) {
        (ModelKind::Coulomb, Some(g)) => {
            CoulombParams::new(g, 0.0, args.b)?;
            2.0 * g
        }
        _ => args.m0,
    };
    if model == ModelKind::Sextic && args.max < 0.0 {
        return Err(Failure::Usage("--max must be non-negative".into()));
    }
    if model == ModelKind::Coulomb && !(m0 > -1.0) {
        return Err(Failure::Usage(format!("first order must exceed -1, got {m0}")));
    }
    if model == ModelKind::Coulomb && args.max < m0 {
        return Err(Failure::Usage(format!("--max {} is below the first order {m0}", args.max)));
    }
    let table = moment_table(model, args.b, m0, args.max);
    emit(&args.out, &moments_csv(&table)?)
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Exact(a) => cmd_exact(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Threshold(a) => cmd_threshold(a),
        Command::Check(a) => cmd_check(a),
        Command::Moments(a) => cmd_moments(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = Grid::parse("-6:6:0.1").unwrap();
        let v = g.values();
        assert_eq!(v.len(), 121);
        assert_eq!(v[0], -6.0);
        assert_eq!(v[1], -5.9);
        assert_eq!(*v.last().unwrap(), 6.0);
        // Stop within half a step of the last point counts as included.
        assert_eq!(Grid::parse("0:1.04:0.1").unwrap().values().len(), 11);
        assert_eq!(Grid::parse("0:1.06:0.1").unwrap().values().len(), 12);
        assert_eq!(Grid::parse("3:1:-1").unwrap().values(), vec![3.0, 2.0, 1.0]);
        for bad in ["1:2", "0:1:0", "1:0:0.5", "a:b:c"] {
            assert!(Grid::parse(bad).is_err(), "{bad}");
        }
        assert_eq!(ParamArg::parse("-1.5").unwrap(), ParamArg::Fixed(-1.5));
        assert!(matches!(ParamArg::parse("0:1:0.5").unwrap(), ParamArg::Grid(_)));
    }

    fn spec(model: ModelKind, param: Parameter, a: f64, b: f64, grid: &str, levels: usize) -> SweepSpec {
        SweepSpec {
            base: Point { model, a, b, gamma: 1.0 },
            param,
            grid: Grid::parse(grid).unwrap(),
            options: LevelOptions::new(levels),
        }
    }

    #[test]
    fn truncation_points_in_windows() {
        // a = 0: no blue points with b² < 12, n = 0 points at ±√12 and ±√20.
        let pts = truncation_points(&spec(ModelKind::Sextic, Parameter::B, 0.0, 0.0, "-6:6:0.1", 8)).unwrap();
        assert!(pts.iter().all(|p| p.value * p.value >= 12.0 - 1e-9));
        let r12 = 12f64.sqrt();
        let p = pts.iter().find(|p| (p.value - r12).abs() < 1e-12 && p.sector == 0.0).unwrap();
        assert!((p.energy + r12 / 2.0).abs() < 1e-12);
        let p = pts.iter().find(|p| (p.value + r12).abs() < 1e-12 && p.sector == 0.0).unwrap();
        assert!((p.energy - r12 / 2.0).abs() < 1e-12);

        let pts = truncation_points(&spec(ModelKind::Sextic, Parameter::A, 0.0, 0.0, "0:14:0.1", 8)).unwrap();
        let mut values: Vec<f64> = pts.iter().map(|p| p.value).collect();
        values.dedup();
        assert_eq!(values, vec![3.0, 5.0, 7.0, 9.0, 11.0, 13.0]);

        let pts = truncation_points(&spec(ModelKind::Coulomb, Parameter::A, 0.0, 1.0, "-10:10:0.1", 8)).unwrap();
        let s33 = 33f64.sqrt();
        for want in [-2.0, -(5.0 + s33) / 2.0, -(5.0 - s33) / 2.0] {
            assert!(pts.iter().any(|p| (p.value - want).abs() < 1e-12), "{want}");
        }
    }

    #[test]
    fn coulomb_points_along_b() {
        // The n = 0 root a = -(γ+1) b meets a = -2 at b = 1 (γ = 1).
        let pts = truncation_points(&spec(ModelKind::Coulomb, Parameter::B, -2.0, 0.0, "0:2:0.1", 3)).unwrap();
        let p = pts.iter().find(|p| p.order == 0).unwrap();
        assert!((p.value - 1.0).abs() < 1e-12);
        assert_eq!(p.energy, 4.75);
    }

    #[test]
    fn sweep_rows_are_deterministic() {
        let s = spec(ModelKind::Sextic, Parameter::A, 0.0, 0.0, "2.8:3.2:0.1", 2);
        let first = sweep_csv(&run_sweep(&s).unwrap().records).unwrap();
        let second = sweep_csv(&run_sweep(&s).unwrap().records).unwrap();
        assert_eq!(first, second);
        assert!(first.starts_with("model,param,value,nu,sector,energy,provenance,converged\n"));
        assert!(first.contains("sextic,a,3,0,0,"));
        assert!(first.lines().any(|l| l.starts_with("sextic,a,3,0,0,0,truncation")));
    }

    #[test]
    fn threshold_at_exact_point() {
        let t = find_threshold(&ThresholdSpec {
            base: Point {
                model: ModelKind::Sextic,
                a: 0.0,
                b: 0.0,
                gamma: 1.0,
            },
            param: Parameter::A,
            level: 0,
            sector: None,
            bracket: None,
            max_basis: DEFAULT_MAX_BASIS,
        })
        .unwrap();
        assert!((t.root - 3.0).abs() < 1e-9, "{t:?}");
        assert!(t.residual <= 1e-8);
        assert!(t.bracket.0 <= t.root && t.root <= t.bracket.1);
    }

    #[test]
    fn exact_examples() {
        let rows = exact_table(ModelKind::Sextic, 2, 0, 1.0, 0.0).unwrap();
        assert!(rows.iter().all(|r| r.a == 11.0));
        for (r, want) in rows.iter().zip([-8.0, 0.0, 8.0]) {
            assert!((r.energy - want).abs() < 1e-12);
            assert_eq!(r.nodes, Some(r.level));
        }
        let rows = exact_table(ModelKind::Coulomb, 0, 0, 1.0, 1.0).unwrap();
        assert_eq!((rows[0].energy, rows[0].a), (4.75, -2.0));
    }

    #[test]
    fn h_action_defect_vanishes_for_recurrence_solutions() {
        for item in recurrence_suite(5) {
            assert!(item.passed, "{item:?}");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["qes", "exact", "sextic", "--n", "1", "--b", "0", "--out", "/dev/null"]), 0);
        assert_eq!(run(["qes", "exact", "sextic"]), 2);
        assert_eq!(run(["qes", "exact", "sextic", "--n", "1", "--s", "3"]), 2);
        assert_eq!(run(["qes", "sweep", "sextic", "--a", "0", "--b", "1"]), 2);
        assert_eq!(run(["qes", "nonsense"]), 2);
    }
}
