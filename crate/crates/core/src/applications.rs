//! Parameter scans, Larmor acceleration, static-field compensation and the
//! magic-point search.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::{g_tensor, principal_values, solve_floquet, PrincipalKind, DEFAULT_DELTA_G, FOLD_JUMP};
use crate::perturbation::Perturbation;
use crate::propagator::{DriveConfig, HarmonicTerm, IntegratorSettings, StaticField, Waveform};
use crate::spinmath::Vec3;

/// `Ω_L / |ω₀|`, the dressed Larmor frequency in units of the bare one.
pub fn acceleration(cfg: &DriveConfig, field: &StaticField, settings: &IntegratorSettings) -> Result<f64> {
    let w = field.omega0.norm();
    if w == 0.0 {
        return Err(Error::Domain("acceleration is undefined at zero static field".into()));
    }
    Ok(solve_floquet(cfg, field, settings)?.larmor / w)
}

/// A scalar knob of the drive or of the static field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Param {
    OmegaX,
    OmegaY,
    Phi,
    Psi,
    Omega0X,
    Omega0Y,
    Omega0Z,
}

impl Param {
    pub const ALL: [Param; 7] = [
        Param::OmegaX,
        Param::OmegaY,
        Param::Phi,
        Param::Psi,
        Param::Omega0X,
        Param::Omega0Y,
        Param::Omega0Z,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::OmegaX => "omega_x",
            Param::OmegaY => "omega_y",
            Param::Phi => "phi",
            Param::Psi => "psi",
            Param::Omega0X => "b0_x",
            Param::Omega0Y => "b0_y",
            Param::Omega0Z => "b0_z",
        }
    }

    pub fn get(self, cfg: &DriveConfig, field: &StaticField) -> f64 {
        match self {
            Param::OmegaX => cfg.omega_x_amp,
            Param::OmegaY => cfg.omega_y_amp,
            Param::Phi => cfg.phase_phi,
            Param::Psi => cfg.phase_psi,
            Param::Omega0X => field.omega0.x,
            Param::Omega0Y => field.omega0.y,
            Param::Omega0Z => field.omega0.z,
        }
    }

    pub fn set(self, cfg: &mut DriveConfig, field: &mut StaticField, value: f64) {
        match self {
            Param::OmegaX => cfg.omega_x_amp = value,
            Param::OmegaY => cfg.omega_y_amp = value,
            Param::Phi => cfg.phase_phi = value,
            Param::Psi => cfg.phase_psi = value,
            Param::Omega0X => field.omega0.x = value,
            Param::Omega0Y => field.omega0.y = value,
            Param::Omega0Z => field.omega0.z = value,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let alias = match s {
            "omega0_x" | "omega_0x" => "b0_x",
            "omega0_y" | "omega_0y" => "b0_y",
            "omega0_z" | "omega_0z" => "b0_z",
            other => other,
        };
        Param::ALL
            .into_iter()
            .find(|p| p.name() == alias)
            .ok_or_else(|| Error::Config(format!("unknown parameter '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanAxis {
    pub param: Param,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl ScanAxis {
    pub fn new(param: Param, lo: f64, hi: f64, n: usize) -> Self {
        ScanAxis { param, lo, hi, n }
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * i as f64 / (self.n - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i)).collect()
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("axis {} needs at least 2 samples", self.param)));
        }
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.hi <= self.lo {
            return Err(Error::Config(format!(
                "axis {} range [{}, {}] is not a finite increasing interval",
                self.param, self.lo, self.hi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub axis1: ScanAxis,
    pub axis2: ScanAxis,
    pub drive: DriveConfig,
    pub field: StaticField,
    pub settings: IntegratorSettings,
}

impl ScanGrid {
    pub fn validate(&self) -> Result<()> {
        self.axis1.validate()?;
        self.axis2.validate()?;
        if self.axis1.param == self.axis2.param {
            return Err(Error::Config("scan axes must be different parameters".into()));
        }
        self.drive.validate()?;
        self.field.validate()?;
        self.settings.validate()
    }

    /// Baseline configuration with both axis parameters overridden.
    pub fn at(&self, v1: f64, v2: f64) -> (DriveConfig, StaticField) {
        let mut cfg = self.drive.clone();
        let mut field = self.field;
        self.axis1.param.set(&mut cfg, &mut field, v1);
        self.axis2.param.set(&mut cfg, &mut field, v2);
        (cfg, field)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    Hx,
    Hy,
    Hz,
    Larmor,
    Acceleration,
    /// 0 for three real principal values of `g`, 1 for one real and a complex pair.
    PrincipalValuesKind,
}

impl Quantity {
    pub const ALL: [Quantity; 6] = [
        Quantity::Hx,
        Quantity::Hy,
        Quantity::Hz,
        Quantity::Larmor,
        Quantity::Acceleration,
        Quantity::PrincipalValuesKind,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Hx => "h_x",
            Quantity::Hy => "h_y",
            Quantity::Hz => "h_z",
            Quantity::Larmor => "larmor",
            Quantity::Acceleration => "acceleration",
            Quantity::PrincipalValuesKind => "principal_values_kind",
        }
    }

    /// Value of the quantity and, when it comes from a Floquet solve, the field `h`.
    pub fn evaluate(
        self,
        cfg: &DriveConfig,
        field: &StaticField,
        settings: &IntegratorSettings,
    ) -> Result<(f64, Option<Vec3>)> {
        if self == Quantity::PrincipalValuesKind {
            let g = g_tensor(cfg, settings, DEFAULT_DELTA_G)?;
            let kind = match principal_values(&g).kind {
                PrincipalKind::ThreeReal => 0.0,
                PrincipalKind::OneRealOnePair => 1.0,
            };
            return Ok((kind, None));
        }
        let sol = solve_floquet(cfg, field, settings)?;
        let value = match self {
            Quantity::Hx => sol.h.x,
            Quantity::Hy => sol.h.y,
            Quantity::Hz => sol.h.z,
            Quantity::Larmor => sol.larmor,
            _ => {
                let w = field.omega0.norm();
                if w == 0.0 {
                    return Err(Error::Domain("acceleration is undefined at zero static field".into()));
                }
                let a = sol.larmor / w;
                if a > (1.0 + 1e-9) / w {
                    return Err(Error::Internal(format!("acceleration {a} exceeds the Brillouin bound")));
                }
                a
            }
        };
        Ok((value, Some(sol.h)))
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Quantity::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown quantity '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanNode {
    pub v1: f64,
    pub v2: f64,
    pub value: Option<f64>,
    pub h: Option<Vec3>,
    /// `h` jumps by more than the fold threshold to a neighbouring node.
    pub fold: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanResult {
    pub grid: ScanGrid,
    pub quantity: Quantity,
    /// Row-major: axis1 index outer, axis2 index inner.
    pub nodes: Vec<ScanNode>,
}

impl ScanResult {
    pub fn node(&self, i1: usize, i2: usize) -> &ScanNode {
        &self.nodes[i1 * self.grid.axis2.n + i2]
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| n.value)
    }

    pub fn failures(&self) -> usize {
        self.nodes.iter().filter(|n| n.error.is_some()).count()
    }
}

/// Evaluates `quantity` on every node of the grid in parallel.
pub fn scan2d(grid: &ScanGrid, quantity: Quantity) -> Result<ScanResult> {
    grid.validate()?;
    let (n1, n2) = (grid.axis1.n, grid.axis2.n);
    let mut nodes: Vec<ScanNode> = (0..n1 * n2)
        .into_par_iter()
        .map(|k| {
            let (v1, v2) = (grid.axis1.value(k / n2), grid.axis2.value(k % n2));
            let (cfg, field) = grid.at(v1, v2);
            match quantity.evaluate(&cfg, &field, &grid.settings) {
                Ok((value, h)) => ScanNode {
                    v1,
                    v2,
                    value: Some(value),
                    h,
                    fold: false,
                    error: None,
                },
                Err(e) => ScanNode {
                    v1,
                    v2,
                    value: None,
                    h: None,
                    fold: matches!(e, Error::FoldAmbiguity(_)),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let jumps = |a: &ScanNode, b: &ScanNode| match (a.h, b.h) {
        (Some(x), Some(y)) => (x - y).norm() > FOLD_JUMP,
        _ => false,
    };
    let mut fold = vec![false; nodes.len()];
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            let k = i1 * n2 + i2;
            if i2 + 1 < n2 && jumps(&nodes[k], &nodes[k + 1]) {
                fold[k] = true;
                fold[k + 1] = true;
            }
            if i1 + 1 < n1 && jumps(&nodes[k], &nodes[k + n2]) {
                fold[k] = true;
                fold[k + n2] = true;
            }
        }
    }
    for (node, f) in nodes.iter_mut().zip(fold) {
        node.fold |= f;
    }
    Ok(ScanResult {
        grid: grid.clone(),
        quantity,
        nodes,
    })
}

/// Maximizes `f` with a Nelder–Mead simplex until the simplex diameter drops below `tol`.
/// Returns the location, the value and the number of evaluations.
pub fn nelder_mead_max<F>(f: F, start: [f64; 2], step: [f64; 2], tol: f64, max_evals: usize) -> ([f64; 2], f64, usize)
where
    F: Fn([f64; 2]) -> f64,
{
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: [f64; 2]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];

    let mut simplex: Vec<([f64; 2], f64)> = [start, [start[0] + step[0], start[1]], [start[0], start[1] + step[1]]]
        .into_iter()
        .map(|x| (x, eval(x)))
        .collect();
    loop {
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let diameter = simplex
            .iter()
            .map(|(x, _)| (x[0] - simplex[0].0[0]).abs().max((x[1] - simplex[0].0[1]).abs()))
            .fold(0.0, f64::max);
        if diameter < tol || evals.get() >= max_evals {
            break;
        }
        let centroid = lerp(simplex[0].0, simplex[1].0, 0.5);
        let worst = simplex[2];
        let reflected = lerp(worst.0, centroid, 2.0);
        let fr = eval(reflected);
        if fr > simplex[0].1 {
            let expanded = lerp(worst.0, centroid, 3.0);
            let fe = eval(expanded);
            simplex[2] = if fe > fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr > simplex[1].1 {
            simplex[2] = (reflected, fr);
        } else {
            let contracted = if fr > worst.1 {
                lerp(worst.0, centroid, 1.5)
            } else {
                lerp(worst.0, centroid, 0.5)
            };
            let fc = eval(contracted);
            if fc > worst.1.max(fr) {
                simplex[2] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for k in 1..3 {
                    let x = lerp(best, simplex[k].0, 0.5);
                    simplex[k] = (x, eval(x));
                }
            }
        }
    }
    simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
    (simplex[0].0, simplex[0].1, evals.get())
}

/// Parameter tolerance of [`refine_max`].
pub const REFINE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedMax {
    pub location: (f64, f64),
    pub value: f64,
    /// The best grid node sits on the edge of the search window; no refinement was done.
    pub boundary: bool,
    pub evaluations: usize,
}

/// Rectangular sub-window `((lo1, hi1), (lo2, hi2))` of a scan.
pub type Window = ((f64, f64), (f64, f64));

/// Refines the largest scan value inside `window` (the whole grid if `None`).
pub fn refine_max(scan: &ScanResult, window: Option<Window>) -> Result<RefinedMax> {
    let grid = &scan.grid;
    let full = ((grid.axis1.lo, grid.axis1.hi), (grid.axis2.lo, grid.axis2.hi));
    let ((a1, b1), (a2, b2)) = window.unwrap_or(full);
    let inside = |n: &ScanNode| n.v1 >= a1 && n.v1 <= b1 && n.v2 >= a2 && n.v2 <= b2;

    let (n1, n2) = (grid.axis1.n, grid.axis2.n);
    let best = (0..n1 * n2)
        .filter(|&k| inside(&scan.nodes[k]) && scan.nodes[k].value.is_some())
        .max_by(|&i, &j| scan.nodes[i].value.unwrap().total_cmp(&scan.nodes[j].value.unwrap()))
        .ok_or_else(|| Error::NotFound("no evaluated scan node inside the window".into()))?;
    let node = &scan.nodes[best];
    let (i1, i2) = (best / n2, best % n2);
    let neighbour_outside = |d1: isize, d2: isize| {
        let (j1, j2) = (i1 as isize + d1, i2 as isize + d2);
        j1 < 0 || j2 < 0 || j1 >= n1 as isize || j2 >= n2 as isize || !inside(&scan.nodes[j1 as usize * n2 + j2 as usize])
    };
    if neighbour_outside(-1, 0) || neighbour_outside(1, 0) || neighbour_outside(0, -1) || neighbour_outside(0, 1) {
        return Ok(RefinedMax {
            location: (node.v1, node.v2),
            value: node.value.unwrap(),
            boundary: true,
            evaluations: 0,
        });
    }

    let (s1, s2) = (grid.axis1.spacing(), grid.axis2.spacing());
    let objective = |x: [f64; 2]| {
        if x[0] < a1 - s1 || x[0] > b1 + s1 || x[1] < a2 - s2 || x[1] > b2 + s2 {
            return f64::NEG_INFINITY;
        }
        let (cfg, field) = grid.at(x[0], x[1]);
        match scan.quantity.evaluate(&cfg, &field, &grid.settings) {
            Ok((v, _)) => v,
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let (x, value, evaluations) =
        nelder_mead_max(objective, [node.v1, node.v2], [0.5 * s1, 0.5 * s2], REFINE_TOL, 2000);
    Ok(RefinedMax {
        location: (x[0], x[1]),
        value,
        boundary: false,
        evaluations,
    })
}

/// Cartesian component of the effective field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis3 {
    X,
    Y,
    Z,
}

impl Axis3 {
    pub fn index(self) -> usize {
        match self {
            Axis3::X => 0,
            Axis3::Y => 1,
            Axis3::Z => 2,
        }
    }
}

impl FromStr for Axis3 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Axis3::X),
            "y" => Ok(Axis3::Y),
            "z" => Ok(Axis3::Z),
            _ => Err(Error::Config(format!("unknown component '{s}'"))),
        }
    }
}

/// Residual below which [`compensate`] stops iterating.
pub const COMPENSATION_TOL: f64 = 1e-10;
/// Residual accepted when the line search stalls at the integrator noise floor.
pub const COMPENSATION_ACCEPT: f64 = 1e-9;
pub const NEWTON_MAX_ITERATIONS: usize = 100;
const JACOBIAN_STEP: f64 = 1e-6;
const SEED_SINGULAR: f64 = 1e-9;
/// Central-difference steps for the magic-point derivatives.
pub const MAGIC_STEP: f64 = 1e-3;
pub const MAGIC_CHECK_STEP: f64 = 5e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationProblem {
    /// Drive with `Waveform::HarmonicSum`; the free amplitudes are overwritten.
    pub drive: DriveConfig,
    pub field: StaticField,
    /// Indices into the harmonic terms whose amplitudes are solved for.
    pub free_terms: Vec<usize>,
    pub targets: Vec<Axis3>,
    pub magic_parameter: Option<Param>,
    pub settings: IntegratorSettings,
}

impl CompensationProblem {
    /// Two-axis compensation with one y harmonic per target, e.g. order 6 at
    /// phase 0 for `h_y` and order 5 at phase `π/2` for `h_z`.
    pub fn transverse(omega_x: f64, field: StaticField, y_term: (u32, f64), z_term: (u32, f64)) -> Self {
        let drive = DriveConfig::cosine(omega_x, 0.0, 1, 0.0).with_harmonics(vec![
            HarmonicTerm::new(0.0, y_term.0, y_term.1),
            HarmonicTerm::new(0.0, z_term.0, z_term.1),
        ]);
        CompensationProblem {
            drive,
            field,
            free_terms: vec![0, 1],
            targets: vec![Axis3::Y, Axis3::Z],
            magic_parameter: Some(Param::OmegaX),
            settings: IntegratorSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.drive.validate()?;
        self.field.validate()?;
        self.settings.validate()?;
        let n_terms = self.drive.harmonics().len();
        if !self.free_terms.is_empty() && !matches!(self.drive.waveform, Waveform::HarmonicSum(_)) {
            return Err(Error::Config("free amplitudes need a harmonic-sum drive".into()));
        }
        for (k, &i) in self.free_terms.iter().enumerate() {
            if i >= n_terms || self.free_terms[..k].contains(&i) {
                return Err(Error::Config(format!("invalid free term index {i}")));
            }
        }
        for (k, t) in self.targets.iter().enumerate() {
            if self.targets[..k].contains(t) {
                return Err(Error::Config(format!("duplicate target {t:?}")));
            }
        }
        Ok(())
    }

    fn with_amplitudes(&self, amps: &[f64]) -> DriveConfig {
        let mut cfg = self.drive.clone();
        if let Waveform::HarmonicSum(terms) = &mut cfg.waveform {
            for (&i, &a) in self.free_terms.iter().zip(amps) {
                terms[i].amplitude = a;
            }
        }
        cfg
    }

    fn target_values(&self, h: Vec3) -> Vec<f64> {
        self.targets.iter().map(|t| h[t.index()]).collect()
    }

    fn exact_h(&self, amps: &[f64]) -> Result<Vec3> {
        Ok(solve_floquet(&self.with_amplitudes(amps), &self.field, &self.settings)?.h)
    }

    /// First-order amplitudes nulling the targets. The first-order field is
    /// linear in each amplitude, so the seed solves a small linear system.
    pub fn first_order_seed(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let zeroed = self.with_amplitudes(&vec![0.0; self.free_terms.len()]);
        let base = Perturbation::new(&zeroed)?.first_order(&self.field).h1;
        let mut columns = Vec::with_capacity(self.free_terms.len());
        for &i in &self.free_terms {
            let mut term = self.drive.harmonics()[i];
            term.amplitude = 1.0;
            let unit = DriveConfig::cosine(self.drive.omega_x_amp, 0.0, 1, 0.0).with_harmonics(vec![term]);
            columns.push(Perturbation::new(&unit)?.synthetic_first());
        }
        let m = DMatrix::from_fn(self.targets.len(), columns.len(), |r, c| {
            columns[c][self.targets[r].index()]
        });
        let svd = m.clone().svd(true, true);
        let rank_floor = svd.singular_values.iter().take(self.targets.len()).copied().fold(f64::INFINITY, f64::min);
        if self.targets.len() > columns.len() || rank_floor < SEED_SINGULAR {
            return Err(Error::SeedDegeneracy(format!(
                "first-order response matrix is singular (smallest singular value {rank_floor:e})"
            )));
        }
        let rhs = DVector::from_vec(self.target_values(base).into_iter().map(|v| -v).collect());
        let x = svd
            .solve(&rhs, 0.0)
            .map_err(|e| Error::Internal(format!("seed solve failed: {e}")))?;
        Ok(x.iter().copied().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationSolution {
    pub amplitudes: Vec<f64>,
    pub drive: DriveConfig,
    /// Exact effective field with the solved amplitudes.
    pub h: Vec3,
    /// `h` restricted to the target components.
    pub residual: Vec3,
    pub iterations: usize,
    /// Residual norm after each accepted Newton step, starting from the seed.
    pub history: Vec<f64>,
    /// `∂h_target/∂(magic parameter)`, in target order.
    pub sensitivity: Vec<f64>,
    /// Relative disagreement of the derivatives between the two difference steps.
    pub sensitivity_check: Option<f64>,
    /// Off-magic derivative norm divided by the one found here.
    pub suppression: Option<f64>,
    pub magic: bool,
    pub magic_value: Option<f64>,
}

impl CompensationSolution {
    pub fn residual_norm(&self) -> f64 {
        self.residual.max_abs()
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton on the exact effective field, seeded at first order.
pub fn compensate(problem: &CompensationProblem) -> Result<CompensationSolution> {
    problem.validate()?;
    let finish = |amps: Vec<f64>, h: Vec3, iterations: usize, history: Vec<f64>| {
        let mut residual = Vec3::ZERO;
        for t in &problem.targets {
            let i = t.index();
            let mut r = [residual.x, residual.y, residual.z];
            r[i] = h[i];
            residual = Vec3::new(r[0], r[1], r[2]);
        }
        CompensationSolution {
            drive: problem.with_amplitudes(&amps),
            amplitudes: amps,
            h,
            residual,
            iterations,
            history,
            sensitivity: Vec::new(),
            sensitivity_check: None,
            suppression: None,
            magic: false,
            magic_value: None,
        }
    };

    let current: Vec<f64> = problem
        .free_terms
        .iter()
        .map(|&i| problem.drive.harmonics()[i].amplitude)
        .collect();
    let h_now = problem.exact_h(&current)?;
    if max_abs(&problem.target_values(h_now)) < COMPENSATION_TOL {
        let r = max_abs(&problem.target_values(h_now));
        return Ok(finish(current, h_now, 0, vec![r]));
    }
    if problem.free_terms.len() < problem.targets.len() {
        return Err(Error::Config(format!(
            "{} free amplitudes cannot null {} components",
            problem.free_terms.len(),
            problem.targets.len()
        )));
    }

    let mut amps = problem.first_order_seed()?;
    let mut h = problem.exact_h(&amps)?;
    let mut r = problem.target_values(h);
    let mut history = vec![max_abs(&r)];
    let n = amps.len();
    for iteration in 1..=NEWTON_MAX_ITERATIONS {
        if max_abs(&r) < COMPENSATION_TOL {
            return Ok(finish(amps, h, iteration - 1, history));
        }
        let mut jac = DMatrix::zeros(r.len(), n);
        for c in 0..n {
            let mut plus = amps.clone();
            let mut minus = amps.clone();
            plus[c] += JACOBIAN_STEP;
            minus[c] -= JACOBIAN_STEP;
            let dp = problem.target_values(problem.exact_h(&plus)?);
            let dm = problem.target_values(problem.exact_h(&minus)?);
            for row in 0..r.len() {
                jac[(row, c)] = (dp[row] - dm[row]) / (2.0 * JACOBIAN_STEP);
            }
        }
        let step = jac
            .svd(true, true)
            .solve(&DVector::from_column_slice(&r), 1e-14)
            .map_err(|e| Error::Internal(format!("Newton solve failed: {e}")))?;

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = amps.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            let h_trial = problem.exact_h(&trial)?;
            let r_trial = problem.target_values(h_trial);
            if max_abs(&r_trial) < max_abs(&r) {
                accepted = Some((trial, h_trial, r_trial));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((a, hh, rr)) => {
                amps = a;
                h = hh;
                r = rr;
                history.push(max_abs(&r));
            }
            None if max_abs(&r) < COMPENSATION_ACCEPT => return Ok(finish(amps, h, iteration - 1, history)),
            None => {
                return Err(Error::NoConvergence {
                    iterations: iteration,
                    residual: max_abs(&r),
                    best: amps,
                })
            }
        }
    }
    if max_abs(&r) < COMPENSATION_ACCEPT {
        return Ok(finish(amps, h, NEWTON_MAX_ITERATIONS, history));
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITERATIONS,
        residual: max_abs(&r),
        best: amps,
    })
}

/// Search settings for [`magic_point`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagicSearch {
    pub bracket: (f64, f64),
    /// Coarse samples across the bracket before the golden-section polish.
    pub samples: usize,
    /// Off-magic parameter value whose derivative norm sets the suppression scale.
    pub reference: f64,
    pub tol: f64,
}

impl MagicSearch {
    pub fn new(bracket: (f64, f64), reference: f64) -> Self {
        MagicSearch {
            bracket,
            samples: 15,
            reference,
            tol: 1e-5,
        }
    }
}

/// Derivatives of the target components with the amplitudes held fixed.
fn sensitivity(problem: &CompensationProblem, drive: &DriveConfig, param: Param, step: f64) -> Result<Vec<f64>> {
    let at = |v: f64| -> Result<Vec<f64>> {
        let mut cfg = drive.clone();
        let mut field = problem.field;
        param.set(&mut cfg, &mut field, v);
        Ok(problem.target_values(solve_floquet(&cfg, &field, &problem.settings)?.h))
    };
    let x0 = param.get(drive, &problem.field);
    let (p, m) = (at(x0 + step)?, at(x0 - step)?);
    Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * step)).collect())
}

/// Compensates at parameter value `x` and returns the solution with its sensitivity.
pub fn compensated_sensitivity(problem: &CompensationProblem, x: f64) -> Result<CompensationSolution> {
    let param = problem
        .magic_parameter
        .ok_or_else(|| Error::Config("magic search needs a magic parameter".into()))?;
    let mut moved = problem.clone();
    param.set(&mut moved.drive, &mut moved.field, x);
    let mut sol = if moved.free_terms.is_empty() {
        let h = solve_floquet(&moved.drive, &moved.field, &moved.settings)?.h;
        CompensationSolution {
            amplitudes: Vec::new(),
            drive: moved.drive.clone(),
            h,
            residual: Vec3::ZERO,
            iterations: 0,
            history: Vec::new(),
            sensitivity: Vec::new(),
            sensitivity_check: None,
            suppression: None,
            magic: false,
            magic_value: None,
        }
    } else {
        compensate(&moved)?
    };
    sol.sensitivity = sensitivity(&moved, &sol.drive, param, MAGIC_STEP)?;
    sol.magic_value = Some(x);
    Ok(sol)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Locates the deepest interior local minimum of the summed squared
/// sensitivities of the compensated field. Without free terms the field is
/// left as is and only the derivative condition is searched.
pub fn magic_point(problem: &CompensationProblem, search: &MagicSearch) -> Result<CompensationSolution> {
    let (lo, hi) = search.bracket;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || search.samples < 3 {
        return Err(Error::Config("magic search needs a finite bracket and at least 3 samples".into()));
    }
    let objective = |x: f64| -> Result<f64> { Ok(norm2(&compensated_sensitivity(problem, x)?.sensitivity)) };

    let xs: Vec<f64> = (0..search.samples)
        .map(|k| lo + (hi - lo) * k as f64 / (search.samples - 1) as f64)
        .collect();
    // nodes where the compensation itself fails (near singular response) count as +inf
    let ys: Vec<f64> = xs
        .par_iter()
        .map(|&x| objective(x).unwrap_or(f64::INFINITY))
        .collect();
    let kmin = (1..ys.len() - 1)
        .filter(|&k| ys[k].is_finite() && ys[k] <= ys[k - 1] && ys[k] <= ys[k + 1])
        .min_by(|&a, &b| ys[a].total_cmp(&ys[b]))
        .ok_or_else(|| Error::NotFound(format!("no interior minimum of the derivative norm in [{lo}, {hi}]")))?;

    // golden-section search on the bracketing triple
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (xs[kmin - 1], xs[kmin + 1]);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (objective(c)?, objective(d)?);
    while b - a > search.tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d)?;
        }
    }
    let x = 0.5 * (a + b);
    let mut sol = compensated_sensitivity(problem, x)?;

    let param = problem.magic_parameter.unwrap();
    let mut moved = problem.clone();
    param.set(&mut moved.drive, &mut moved.field, x);
    let check = sensitivity(&moved, &sol.drive, param, MAGIC_CHECK_STEP)?;
    let diff: Vec<f64> = sol.sensitivity.iter().zip(&check).map(|(a, b)| a - b).collect();
    sol.sensitivity_check = Some(norm2(&diff).sqrt() / norm2(&sol.sensitivity).sqrt().max(f64::MIN_POSITIVE));

    let reference = compensated_sensitivity(problem, search.reference)?.sensitivity;
    let ref_norm = norm2(&reference).sqrt();
    sol.suppression = Some(ref_norm / norm2(&sol.sensitivity).sqrt().max(f64::MIN_POSITIVE));
    sol.magic = sol.sensitivity.iter().all(|d| d.abs() < 1e-3 * ref_norm);
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinmath::bessel_j;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn small_grid(drive: DriveConfig, field: StaticField, n: usize, hi: f64) -> ScanGrid {
        ScanGrid {
            axis1: ScanAxis::new(Param::OmegaX, 0.0, hi, n),
            axis2: ScanAxis::new(Param::OmegaY, 0.0, hi, n),
            drive,
            field,
            settings: IntegratorSettings::default(),
        }
    }

    #[test]
    fn acceleration_without_dressing_is_one() {
        let a = acceleration(&DriveConfig::default(), &StaticField::new(0.01, -0.02, 0.03), &Default::default())
            .unwrap();
        assert!((a - 1.0).abs() < 1e-9);
        assert!(matches!(
            acceleration(&DriveConfig::default(), &StaticField::zero(), &Default::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn single_dressing_acceleration_is_bessel() {
        let a = acceleration(&DriveConfig::single(1.2), &StaticField::new(0.0, 1e-3, 0.0), &Default::default())
            .unwrap();
        assert!((a - bessel_j(0, 1.2).unwrap().abs()).abs() < 1e-5);
    }

    #[test]
    fn param_and_quantity_names_round_trip() {
        for p in Param::ALL {
            assert_eq!(p.name().parse::<Param>().unwrap(), p);
        }
        assert_eq!("omega0_z".parse::<Param>().unwrap(), Param::Omega0Z);
        for q in Quantity::ALL {
            assert_eq!(q.name().parse::<Quantity>().unwrap(), q);
        }
        assert!("h_w".parse::<Quantity>().is_err());
    }

    #[test]
    fn undressed_scan_is_constant() {
        let mut grid = small_grid(DriveConfig::default(), StaticField::new(0.0, 0.0, 0.1), 2, 1.0);
        grid.axis1 = ScanAxis::new(Param::Phi, 0.0, 1.0, 2);
        grid.axis2 = ScanAxis::new(Param::Psi, 0.0, 1.0, 2);
        let res = scan2d(&grid, Quantity::Hz).unwrap();
        assert_eq!(res.nodes.len(), 4);
        for v in res.values() {
            assert!((v - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn scan_rejects_bad_grids() {
        let mut grid = small_grid(DriveConfig::default(), StaticField::zero(), 1, 1.0);
        assert!(scan2d(&grid, Quantity::Hz).is_err());
        grid.axis1.n = 3;
        grid.axis2.n = 3;
        grid.axis2.param = Param::OmegaX;
        assert!(scan2d(&grid, Quantity::Hz).is_err());
    }

    #[test]
    fn acceleration_errors_are_recorded_in_band() {
        let grid = small_grid(DriveConfig::default(), StaticField::zero(), 3, 1.0);
        let res = scan2d(&grid, Quantity::Acceleration).unwrap();
        assert_eq!(res.failures(), 9);
    }

    #[test]
    fn hy_vanishes_for_quadrature_phase() {
        let grid = small_grid(
            DriveConfig::cosine(0.0, 0.0, 1, PI / 2.0),
            StaticField::new(0.0, 0.0, 0.1),
            5,
            8.0,
        );
        let res = scan2d(&grid, Quantity::Hy).unwrap();
        assert_eq!(res.failures(), 0);
        assert!(res.values().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn scan_is_deterministic() {
        let grid = small_grid(DriveConfig::cosine(0.0, 0.0, 2, 0.3), StaticField::new(0.05, 0.0, 0.1), 4, 3.0);
        let a = scan2d(&grid, Quantity::Larmor).unwrap();
        let b = scan2d(&grid, Quantity::Larmor).unwrap();
        assert_eq!(a.nodes, b.nodes);
        // transposed evaluation order yields the same numbers
        let mut t = grid.clone();
        std::mem::swap(&mut t.axis1, &mut t.axis2);
        let c = scan2d(&t, Quantity::Larmor).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a.node(i, j).value, c.node(j, i).value);
            }
        }
    }

    #[test]
    fn nelder_mead_finds_quadratic_vertex() {
        let f = |x: [f64; 2]| 3.0 - (x[0] - 1.25).powi(2) - 2.0 * (x[1] + 0.5).powi(2) - 0.5 * (x[0] - 1.25) * (x[1] + 0.5);
        let (x, v, _) = nelder_mead_max(f, [0.0, 0.0], [0.3, 0.3], 1e-8, 10_000);
        assert!((x[0] - 1.25).abs() < 1e-6 && (x[1] + 0.5).abs() < 1e-6);
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_maximum_is_flagged() {
        let grid = small_grid(DriveConfig::default(), StaticField::new(0.0, 0.0, 0.1), 3, 1.0);
        let res = scan2d(&grid, Quantity::Hx).unwrap();
        let r = refine_max(&res, None).unwrap();
        assert!(r.boundary);
    }

    #[test]
    fn first_order_seed_matches_bessel_ratio() {
        // p = 1, Φ = π/2: h_z = J₀ ω₀z + J₁ Ω_y
        let ox = 1.4;
        let wz = 1e-4;
        let drive = DriveConfig::cosine(ox, 0.0, 1, 0.0).with_harmonics(vec![HarmonicTerm::new(0.0, 1, PI / 2.0)]);
        let problem = CompensationProblem {
            drive,
            field: StaticField::new(0.0, 0.0, wz),
            free_terms: vec![0],
            targets: vec![Axis3::Z],
            magic_parameter: None,
            settings: IntegratorSettings::default(),
        };
        let seed = problem.first_order_seed().unwrap();
        let want = -bessel_j(0, ox).unwrap() * wz / bessel_j(1, ox).unwrap();
        assert!((seed[0] - want).abs() < 1e-12 * want.abs().max(1.0));

        let sol = compensate(&problem).unwrap();
        assert!(sol.residual_norm() < 1e-9);
        assert!(sol.history.windows(2).all(|w| w[1] < w[0]));
        assert!((sol.amplitudes[0] - want).abs() < 1e-2 * want.abs());
    }

    #[test]
    fn zero_field_is_trivially_compensated() {
        let problem = CompensationProblem {
            drive: DriveConfig::default(),
            field: StaticField::zero(),
            free_terms: vec![],
            targets: vec![Axis3::X, Axis3::Y, Axis3::Z],
            magic_parameter: None,
            settings: IntegratorSettings::default(),
        };
        let sol = compensate(&problem).unwrap();
        assert_eq!(sol.residual, Vec3::ZERO);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn seed_degeneracy_at_bessel_zero() {
        let j1_zero = 3.831705970207512;
        let drive = DriveConfig::cosine(j1_zero, 0.0, 1, 0.0).with_harmonics(vec![HarmonicTerm::new(0.0, 1, PI / 2.0)]);
        let problem = CompensationProblem {
            drive,
            field: StaticField::new(0.0, 0.0, 1e-4),
            free_terms: vec![0],
            targets: vec![Axis3::Z],
            magic_parameter: None,
            settings: IntegratorSettings::default(),
        };
        assert!(matches!(compensate(&problem), Err(Error::SeedDegeneracy(_))));
    }

    #[test]
    fn too_few_free_terms_is_rejected() {
        let problem = CompensationProblem {
            drive: DriveConfig::single(1.0),
            field: StaticField::new(0.0, 1e-4, 1e-4),
            free_terms: vec![],
            targets: vec![Axis3::Y],
            magic_parameter: None,
            settings: IntegratorSettings::default(),
        };
        assert!(matches!(compensate(&problem), Err(Error::Config(_))));
    }

    #[test]
    fn toy_magic_point_is_first_j1_zero() {
        // h_z ≈ J₀(Ω_x) ω₀z, stationary where J₁ vanishes
        let problem = CompensationProblem {
            drive: DriveConfig::single(3.8),
            field: StaticField::new(0.0, 0.0, 1e-4),
            free_terms: vec![],
            targets: vec![Axis3::Z],
            magic_parameter: Some(Param::OmegaX),
            settings: IntegratorSettings::precise(),
        };
        let mut search = MagicSearch::new((3.5, 4.2), 2.0);
        search.samples = 8;
        let sol = magic_point(&problem, &search).unwrap();
        let x = sol.magic_value.unwrap();
        assert!((x - 3.831705970207512).abs() < 2e-3, "{x}");
        assert!(sol.magic);
        assert!(matches!(
            magic_point(&problem, &MagicSearch::new((4.5, 5.0), 2.0)),
            Err(Error::NotFound(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn acceleration_respects_brillouin_bound(
            ox in 0.0f64..8.0, oy in 0.0f64..8.0, p in 1u32..=3, phi in -PI..PI, wz in 1e-3f64..0.5,
        ) {
            let a = acceleration(&DriveConfig::cosine(ox, oy, p, phi), &StaticField::new(0.0, 0.0, wz), &Default::default()).unwrap();
            prop_assert!(a * wz <= 1.0 + 1e-12);
        }
    }
}
