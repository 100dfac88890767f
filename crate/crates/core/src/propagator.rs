//! Drive description and numerical time evolution of the dressed spin.
//!
//! Time is measured in units of the inverse drive angular frequency, so one
//! drive period is `2π`. The propagator solves `i dU/dτ = H(τ) U` with
//!
//! ```text
//! H(τ) = ½ [ ω₀·σ + Ω_x s_x(τ) σ_x + F_y(τ) σ_y ]
//! ```
//!
//! using an embedded Dormand–Prince 5(4) pair on the 8 real components of
//! `U`. Unitarity is measured and reported, never enforced by projection.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spinmath::{Mat2, Vec3, C64};

/// One extra y-axis drive term `amplitude · cos(order·τ + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicTerm {
    pub amplitude: f64,
    pub order: u32,
    pub phase: f64,
}

impl HarmonicTerm {
    pub fn new(amplitude: f64, order: u32, phase: f64) -> Self {
        HarmonicTerm {
            amplitude,
            order,
            phase,
        }
    }

    pub fn eval(&self, tau: f64) -> f64 {
        self.amplitude * (self.order as f64 * tau + self.phase).cos()
    }
}

/// Time dependence of the two drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum Waveform {
    /// `s_x = cos τ`, `s_y = cos(pτ + Φ)`.
    #[default]
    CosinePair,
    /// Both drives start at phase `ψ`: `s_x = cos(τ+ψ)`, `s_y = cos(p(τ+ψ) + Φ)`.
    ShiftedCosinePair,
    /// The cosine pair plus additional y-axis harmonics.
    HarmonicSum(Vec<HarmonicTerm>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub omega_x_amp: f64,
    pub omega_y_amp: f64,
    pub harmonic_p: u32,
    pub phase_phi: f64,
    pub phase_psi: f64,
    pub waveform: Waveform,
}

impl Default for DriveConfig {
    fn default() -> Self {
        DriveConfig {
            omega_x_amp: 0.0,
            omega_y_amp: 0.0,
            harmonic_p: 1,
            phase_phi: 0.0,
            phase_psi: 0.0,
            waveform: Waveform::CosinePair,
        }
    }
}

impl DriveConfig {
    /// Cosine pair with the given amplitudes, harmonic and relative phase.
    pub fn cosine(omega_x: f64, omega_y: f64, p: u32, phi: f64) -> Self {
        DriveConfig {
            omega_x_amp: omega_x,
            omega_y_amp: omega_y,
            harmonic_p: p,
            phase_phi: phi,
            ..Default::default()
        }
    }

    pub fn shifted(omega_x: f64, omega_y: f64, p: u32, phi: f64, psi: f64) -> Self {
        DriveConfig {
            omega_x_amp: omega_x,
            omega_y_amp: omega_y,
            harmonic_p: p,
            phase_phi: phi,
            phase_psi: psi,
            waveform: Waveform::ShiftedCosinePair,
        }
    }

    /// Single dressing along x with no y drive.
    pub fn single(omega_x: f64) -> Self {
        DriveConfig::cosine(omega_x, 0.0, 1, 0.0)
    }

    pub fn with_harmonics(mut self, terms: Vec<HarmonicTerm>) -> Self {
        self.waveform = Waveform::HarmonicSum(terms);
        self
    }

    pub fn harmonics(&self) -> &[HarmonicTerm] {
        match &self.waveform {
            Waveform::HarmonicSum(terms) => terms,
            _ => &[],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.harmonic_p < 1 {
            return Err(Error::Config("harmonic p must be at least 1".into()));
        }
        for (name, a) in [("omega_x", self.omega_x_amp), ("omega_y", self.omega_y_amp)] {
            if !a.is_finite() || a < 0.0 {
                return Err(Error::Config(format!(
                    "{name} amplitude must be finite and non-negative, got {a}"
                )));
            }
        }
        for (name, a) in [("phi", self.phase_phi), ("psi", self.phase_psi)] {
            if !a.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {a}")));
            }
        }
        for t in self.harmonics() {
            if t.order < 1 {
                return Err(Error::Config("harmonic orders must be positive".into()));
            }
            if !t.amplitude.is_finite() || !t.phase.is_finite() {
                return Err(Error::Config(format!("non-finite harmonic term {t:?}")));
            }
        }
        Ok(())
    }

    /// Phase offset `ψ` actually applied to the drives.
    pub fn effective_psi(&self) -> f64 {
        match self.waveform {
            Waveform::ShiftedCosinePair => self.phase_psi,
            _ => 0.0,
        }
    }

    /// `Ω_x s_x(τ)`.
    pub fn drive_x(&self, tau: f64) -> f64 {
        self.omega_x_amp * (tau + self.effective_psi()).cos()
    }

    /// `F_y(τ)`, the complete y-axis drive including extra harmonics.
    pub fn drive_y(&self, tau: f64) -> f64 {
        let t = tau + self.effective_psi();
        let base = self.omega_y_amp * (self.harmonic_p as f64 * t + self.phase_phi).cos();
        base + self.harmonics().iter().map(|h| h.eval(tau)).sum::<f64>()
    }

    /// Accumulated strong-drive phase `φ_x(τ) = ∫₀^τ Ω_x s_x`.
    pub fn fmr_phase(&self, tau: f64) -> f64 {
        let psi = self.effective_psi();
        self.omega_x_amp * ((tau + psi).sin() - psi.sin())
    }

    /// `Ψ̃ = Ω_x sin ψ`, the static rotation angle introduced by the shift.
    pub fn psi_tilde(&self) -> f64 {
        self.omega_x_amp * self.effective_psi().sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StaticField {
    pub omega0: Vec3,
}

impl StaticField {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        StaticField {
            omega0: Vec3::new(x, y, z),
        }
    }

    pub fn zero() -> Self {
        StaticField::default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega0.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("static field must be finite, got {}", self.omega0)))
        }
    }
}

impl From<Vec3> for StaticField {
    fn from(omega0: Vec3) -> Self {
        StaticField { omega0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: u64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            rel_tol: 1e-11,
            abs_tol: 1e-13,
            max_steps: 10_000_000,
        }
    }
}

impl IntegratorSettings {
    /// Settings for perturbation-order comparisons where the effective field
    /// must be resolved well below `1e-12`.
    pub fn precise() -> Self {
        IntegratorSettings {
            rel_tol: 1e-13,
            abs_tol: 1e-15,
            max_steps: 10_000_000,
        }
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(t > 0.0 && t < 1e-3) {
                return Err(Error::Config(format!("{name} must lie in (0, 1e-3), got {t}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// `H(τ) = ½[ω₀·σ + Ω_x s_x σ_x + F_y σ_y]`.
pub fn instantaneous_hamiltonian(cfg: &DriveConfig, field: &StaticField, tau: f64) -> Mat2 {
    let w = field.omega0;
    let total = Vec3::new(w.x + cfg.drive_x(tau), w.y + cfg.drive_y(tau), w.z);
    Mat2::from_field(total)
}

/// `U(τ₁, τ₀)`.
pub fn propagate(
    cfg: &DriveConfig,
    field: &StaticField,
    tau0: f64,
    tau1: f64,
    settings: &IntegratorSettings,
) -> Result<Mat2> {
    Ok(propagate_with_stats(cfg, field, tau0, tau1, settings)?.u)
}

/// Result of a propagation together with integrator bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct Propagation {
    pub u: Mat2,
    pub unitarity_defect: f64,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
}

pub fn propagate_with_stats(
    cfg: &DriveConfig,
    field: &StaticField,
    tau0: f64,
    tau1: f64,
    settings: &IntegratorSettings,
) -> Result<Propagation> {
    check_inputs(cfg, field, settings)?;
    if !(tau0.is_finite() && tau1.is_finite()) {
        return Err(Error::Domain(format!("non-finite interval [{tau0}, {tau1}]")));
    }
    if tau1 < tau0 {
        return Err(Error::Domain(format!("tau1 = {tau1} precedes tau0 = {tau0}")));
    }
    let mut stepper = Stepper::new(cfg, field, settings, tau0);
    stepper.advance_to(tau1)?;
    Ok(stepper.finish())
}

/// `U(τ_k, τ₀)` for every sample, integrated in one sweep from `tau0`.
pub fn propagate_samples(
    cfg: &DriveConfig,
    field: &StaticField,
    tau0: f64,
    taus: &[f64],
    settings: &IntegratorSettings,
) -> Result<Vec<Mat2>> {
    check_inputs(cfg, field, settings)?;
    let mut prev = tau0;
    for &t in taus {
        if !t.is_finite() || t < prev {
            return Err(Error::Domain(
                "sample times must be finite, non-decreasing and not before tau0".into(),
            ));
        }
        prev = t;
    }
    let mut stepper = Stepper::new(cfg, field, settings, tau0);
    let mut out = Vec::with_capacity(taus.len());
    for &t in taus {
        stepper.advance_to(t)?;
        out.push(stepper.u);
    }
    Ok(out)
}

/// One-period monodromy `U(2π, 0)`.
pub fn monodromy(
    cfg: &DriveConfig,
    field: &StaticField,
    settings: &IntegratorSettings,
) -> Result<Propagation> {
    propagate_with_stats(cfg, field, 0.0, 2.0 * PI, settings)
}

fn check_inputs(cfg: &DriveConfig, field: &StaticField, settings: &IntegratorSettings) -> Result<()> {
    cfg.validate()?;
    field.validate()?;
    settings.validate()
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

fn lin(terms: &[(f64, &Mat2)]) -> Mat2 {
    let mut out = Mat2::zero();
    for (c, m) in terms {
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] += m.m[i][j] * *c;
            }
        }
    }
    out
}

struct Stepper<'a> {
    cfg: &'a DriveConfig,
    field: &'a StaticField,
    settings: &'a IntegratorSettings,
    t: f64,
    u: Mat2,
    h: f64,
    // first-same-as-last derivative at (t, u)
    k1: Mat2,
    accepted: u64,
    rejected: u64,
}

impl<'a> Stepper<'a> {
    fn new(
        cfg: &'a DriveConfig,
        field: &'a StaticField,
        settings: &'a IntegratorSettings,
        t0: f64,
    ) -> Self {
        let u = Mat2::identity();
        let mut s = Stepper {
            cfg,
            field,
            settings,
            t: t0,
            u,
            h: 0.0,
            k1: Mat2::zero(),
            accepted: 0,
            rejected: 0,
        };
        s.k1 = s.rhs(t0, &u);
        let scale = 1.0 + cfg.omega_x_amp + cfg.omega_y_amp + field.omega0.norm();
        s.h = 0.5 * settings.rel_tol.powf(0.2) / scale;
        s
    }

    fn rhs(&self, t: f64, u: &Mat2) -> Mat2 {
        let h = instantaneous_hamiltonian(self.cfg, self.field, t);
        (h * *u).scale(C64::new(0.0, -1.0))
    }

    fn advance_to(&mut self, target: f64) -> Result<()> {
        while self.t < target {
            if self.accepted + self.rejected >= self.settings.max_steps {
                return Err(Error::Integration {
                    tau: self.t,
                    reason: format!("step budget of {} exhausted", self.settings.max_steps),
                });
            }
            let remaining = target - self.t;
            let landing = self.h >= remaining * (1.0 - 1e-12);
            let h = if landing { remaining } else { self.h };
            match self.try_step(h) {
                Some((u_new, k_new, err)) if err <= 1.0 => {
                    self.t = if landing { target } else { self.t + h };
                    self.u = u_new;
                    self.k1 = k_new;
                    self.accepted += 1;
                    let factor = if err == 0.0 {
                        MAX_FACTOR
                    } else {
                        (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                    };
                    // a short landing step says nothing about the natural step size
                    if !landing || h >= self.h {
                        self.h = h * factor;
                    }
                }
                Some((_, _, err)) => {
                    self.rejected += 1;
                    let factor = if err.is_finite() {
                        (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0)
                    } else {
                        MIN_FACTOR
                    };
                    self.h = h * factor;
                }
                None => {
                    self.rejected += 1;
                    self.h = h * MIN_FACTOR;
                }
            }
            if !(self.h > 1e-14 * (1.0 + self.t.abs())) {
                return Err(Error::Integration {
                    tau: self.t,
                    reason: "step size underflow".into(),
                });
            }
        }
        Ok(())
    }

    /// One trial step; returns the new state, its derivative and the scaled
    /// error norm, or `None` if the stage values are not finite.
    fn try_step(&self, h: f64) -> Option<(Mat2, Mat2, f64)> {
        let (t, u, k1) = (self.t, &self.u, &self.k1);
        let k2 = self.rhs(t + C2 * h, &(*u + lin(&[(h * A21, k1)])));
        let k3 = self.rhs(t + C3 * h, &(*u + lin(&[(h * A31, k1), (h * A32, &k2)])));
        let k4 = self.rhs(
            t + C4 * h,
            &(*u + lin(&[(h * A41, k1), (h * A42, &k2), (h * A43, &k3)])),
        );
        let k5 = self.rhs(
            t + C5 * h,
            &(*u + lin(&[(h * A51, k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)])),
        );
        let k6 = self.rhs(
            t + h,
            &(*u + lin(&[
                (h * A61, k1),
                (h * A62, &k2),
                (h * A63, &k3),
                (h * A64, &k4),
                (h * A65, &k5),
            ])),
        );
        let u_new = *u
            + lin(&[
                (h * B1, k1),
                (h * B3, &k3),
                (h * B4, &k4),
                (h * B5, &k5),
                (h * B6, &k6),
            ]);
        if !u_new.is_finite() {
            return None;
        }
        let k7 = self.rhs(t + h, &u_new);
        let err_m = lin(&[
            (h * E1, k1),
            (h * E3, &k3),
            (h * E4, &k4),
            (h * E5, &k5),
            (h * E6, &k6),
            (h * E7, &k7),
        ]);
        let mut err: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let e = err_m.m[i][j];
                let y0 = u.m[i][j];
                let y1 = u_new.m[i][j];
                for (ec, a, b) in [(e.re, y0.re, y1.re), (e.im, y0.im, y1.im)] {
                    let sc = self.settings.abs_tol + self.settings.rel_tol * a.abs().max(b.abs());
                    err = err.max(ec.abs() / sc);
                }
            }
        }
        Some((u_new, k7, err))
    }

    fn finish(self) -> Propagation {
        Propagation {
            u: self.u,
            unitarity_defect: self.u.unitarity_defect(),
            accepted_steps: self.accepted,
            rejected_steps: self.rejected,
        }
    }
}
