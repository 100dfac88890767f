//! Spin expectation values, micromotion and detection signals.
//!
//! The lab-frame propagator factorizes as
//! `U(τ) = e^{−iφ_x σ_x/2} e^{−i𝒦(τ)} e^{−iΛτ}`. Exact trajectories come from
//! the numerical propagator; analytic ones keep only the strong-drive rotation
//! and the precession at `Ω_L` about `u`, dropping the kick.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturbation::Perturbation;
use crate::propagator::{propagate_samples, DriveConfig, IntegratorSettings, StaticField, Waveform};
use crate::spinmath::{bessel_j, bloch_vector, spinor_from_bloch, su2_exp, Mat2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryMethod {
    ExactNumeric,
    AnalyticFirstOrder,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpinTrajectory {
    pub tau_samples: Vec<f64>,
    pub sx: Vec<f64>,
    pub sy: Vec<f64>,
    pub sz: Vec<f64>,
    pub method: TrajectoryMethod,
}

impl SpinTrajectory {
    fn with_capacity(n: usize, method: TrajectoryMethod) -> Self {
        SpinTrajectory {
            tau_samples: Vec::with_capacity(n),
            sx: Vec::with_capacity(n),
            sy: Vec::with_capacity(n),
            sz: Vec::with_capacity(n),
            method,
        }
    }

    fn push(&mut self, tau: f64, s: Vec3) {
        self.tau_samples.push(tau);
        self.sx.push(s.x);
        self.sy.push(s.y);
        self.sz.push(s.z);
    }

    pub fn len(&self) -> usize {
        self.tau_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau_samples.is_empty()
    }

    pub fn bloch(&self, k: usize) -> Vec3 {
        Vec3::new(self.sx[k], self.sy[k], self.sz[k])
    }

    /// Largest componentwise difference to another trajectory on the same grid.
    pub fn max_deviation(&self, other: &SpinTrajectory) -> f64 {
        (0..self.len().min(other.len()))
            .map(|k| (self.bloch(k) - other.bloch(k)).max_abs())
            .fold(0.0, f64::max)
    }
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if taus.iter().any(|t| !t.is_finite()) || taus.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("sample times must be finite and non-decreasing".into()));
    }
    Ok(())
}

/// Bloch vector of the pure state `initial` evolved by the numerical propagator.
pub fn trajectory_exact(
    cfg: &DriveConfig,
    field: &StaticField,
    initial: Vec3,
    taus: &[f64],
    settings: &IntegratorSettings,
) -> Result<SpinTrajectory> {
    if !((initial.norm() - 1.0).abs() <= 1e-10) {
        return Err(Error::Domain(format!("initial Bloch vector {initial} is not a unit vector")));
    }
    check_taus(taus)?;
    let start = taus.first().copied().unwrap_or(0.0).min(0.0);
    let us = propagate_samples(cfg, field, start, taus, settings)?;
    let psi0 = spinor_from_bloch(initial);
    let mut out = SpinTrajectory::with_capacity(taus.len(), TrajectoryMethod::ExactNumeric);
    for (u, &tau) in us.iter().zip(taus) {
        out.push(tau, bloch_vector(u.apply(psi0)));
    }
    Ok(out)
}

/// Closed-form expectation values for the initial state `⟨σ_x(0)⟩ = 1`,
/// precessing at `larmor` about `u` in the frame of the strong drive.
pub fn trajectory_analytic(cfg: &DriveConfig, larmor: f64, u: Vec3, taus: &[f64]) -> Result<SpinTrajectory> {
    check_taus(taus)?;
    if !((u.norm() - 1.0).abs() <= 1e-9) {
        return Err(Error::Domain(format!("orientation {u} is not a unit vector")));
    }
    let mut out = SpinTrajectory::with_capacity(taus.len(), TrajectoryMethod::AnalyticFirstOrder);
    for &tau in taus {
        let (s, c) = cfg.fmr_phase(tau).sin_cos();
        let (sl, cl) = (larmor * tau).sin_cos();
        let sx = (1.0 - u.x * u.x) * cl + u.x * u.x;
        let sy = (u.y * s + u.z * c) * sl + (u.x * u.y * c - u.x * u.z * s) * (1.0 - cl);
        let sz = (u.z * s - u.y * c) * sl + (u.x * u.z * c + u.x * u.y * s) * (1.0 - cl);
        out.push(tau, Vec3::new(sx, sy, sz));
    }
    Ok(out)
}

/// `Ω_L` and `u` from the first-order effective field.
pub fn first_order_precession(cfg: &DriveConfig, field: &StaticField) -> Result<(f64, Vec3)> {
    let h = Perturbation::new(cfg)?.first_order(field).h1;
    let larmor = h.norm();
    if larmor == 0.0 {
        return Err(Error::DegenerateOrientation("first-order field vanishes".into()));
    }
    Ok((larmor, h.scale(1.0 / larmor)))
}

/// `ℳ(τ) = e^{−iφ_x σ_x/2} e^{−i𝒦₁(τ)}`, built once per configuration.
#[derive(Debug, Clone)]
pub struct Micromotion {
    cfg: DriveConfig,
    field: StaticField,
    pert: Perturbation,
}

impl Micromotion {
    pub fn new(cfg: &DriveConfig, field: &StaticField) -> Result<Self> {
        field.validate()?;
        Ok(Micromotion {
            cfg: cfg.clone(),
            field: *field,
            pert: Perturbation::new(cfg)?,
        })
    }

    pub fn at(&self, tau: f64) -> Mat2 {
        let gauge = su2_exp(Vec3::new(self.cfg.fmr_phase(tau), 0.0, 0.0));
        // 𝒦₁ = ½ k·σ, so e^{−i𝒦₁} = su2_exp(k)
        gauge * su2_exp(self.pert.kick_vector(&self.field, tau))
    }
}

pub fn micromotion_operator(cfg: &DriveConfig, field: &StaticField, tau: f64) -> Result<Mat2> {
    if !tau.is_finite() {
        return Err(Error::Domain(format!("tau must be finite, got {tau}")));
    }
    Ok(Micromotion::new(cfg, field)?.at(tau))
}

/// Amplitudes of the drive harmonics riding on the precession carrier.
///
/// The signal is fitted by least squares onto
/// `{sin Ω_Lτ, cos Ω_Lτ} × {cos kτ, sin kτ}` for `0 ≤ k ≤ k_max`; the entry
/// for harmonic `k` is the root-sum-square of the `sin Ω_Lτ` coefficients.
pub fn sideband_amplitudes(taus: &[f64], signal: &[f64], larmor: f64, k_max: usize) -> Result<Vec<f64>> {
    let cols = 2 + 4 * k_max;
    if taus.len() != signal.len() || taus.len() < 2 * cols {
        return Err(Error::Domain(format!(
            "need at least {} matching samples for {k_max} harmonics",
            2 * cols
        )));
    }
    let design = DMatrix::from_fn(taus.len(), cols, |r, c| basis(taus[r], larmor, c));
    let rhs = DVector::from_column_slice(signal);
    let coef = design
        .svd(true, true)
        .solve(&rhs, 1e-10)
        .map_err(|e| Error::Internal(format!("least-squares solve failed: {e}")))?;
    let mut amps = vec![coef[0].abs()];
    for k in 1..=k_max {
        let base = 2 + 4 * (k - 1);
        amps.push(coef[base].hypot(coef[base + 1]));
    }
    Ok(amps)
}

fn basis(tau: f64, larmor: f64, col: usize) -> f64 {
    let (sl, cl) = (larmor * tau).sin_cos();
    match col {
        0 => sl,
        1 => cl,
        _ => {
            let k = ((col - 2) / 4 + 1) as f64;
            let (sk, ck) = (k * tau).sin_cos();
            match (col - 2) % 4 {
                0 => sl * ck,
                1 => sl * sk,
                2 => cl * ck,
                _ => cl * sk,
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LandreReport {
    pub larmor: f64,
    pub u: Vec3,
    /// Harmonic amplitudes of `⟨σ_y⟩` on the `sin Ω_Lτ` carrier, index = harmonic.
    pub sidebands_y: Vec<f64>,
    /// Same for `⟨σ_z⟩`.
    pub sidebands_z: Vec<f64>,
}

/// Single shifted-cosine dressing with a weak static field along y.
pub fn landre_detection(omega_x: f64, omega0y: f64, psi: f64, taus: &[f64]) -> Result<LandreReport> {
    if !(omega_x.is_finite() && omega0y.is_finite() && psi.is_finite()) {
        return Err(Error::Domain("Landré parameters must be finite".into()));
    }
    let j0 = bessel_j(0, omega_x)?;
    let psi_tilde = omega_x * psi.sin();
    let sign = j0.signum();
    let u = Vec3::new(0.0, sign * psi_tilde.cos(), sign * psi_tilde.sin());
    let larmor = omega0y.abs() * j0.abs();

    let cfg = DriveConfig::shifted(omega_x, 0.0, 1, 0.0, psi);
    let traj = trajectory_analytic(&cfg, larmor, u, taus)?;
    let k_max = omega_x.abs().ceil() as usize + 12;
    Ok(LandreReport {
        larmor,
        u,
        sidebands_y: sideband_amplitudes(taus, &traj.sy, larmor, k_max)?,
        sidebands_z: sideband_amplitudes(taus, &traj.sz, larmor, k_max)?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub larmor_1: f64,
    pub u: Vec3,
    pub a_x: f64,
    pub dc_offset: f64,
    /// Amplitude of drive harmonic `k` in `⟨σ_y⟩`: even harmonics ride on
    /// `sin Ω_Lτ`, odd ones on `1 − cos Ω_Lτ`.
    pub sideband_amplitudes: Vec<f64>,
}

/// Number of harmonics reported by [`cs_detection`].
pub const CS_HARMONICS: usize = 8;

/// Dual cosine dressing with `p = 1` and no static field along y.
pub fn cs_detection(cfg: &DriveConfig, field: &StaticField) -> Result<DetectionReport> {
    cfg.validate()?;
    field.validate()?;
    if cfg.waveform != Waveform::CosinePair || cfg.harmonic_p != 1 {
        return Err(Error::Config("Cs detection needs the p = 1 cosine pair".into()));
    }
    let w = field.omega0;
    if w.y != 0.0 {
        return Err(Error::Config("Cs detection needs omega0_y = 0".into()));
    }
    let ox = cfg.omega_x_amp;
    let j0 = bessel_j(0, ox)?;
    let j1 = bessel_j(1, ox)?;
    let axial = j0 * w.z + j1 * cfg.omega_y_amp * cfg.phase_phi.sin();
    let larmor_1 = w.x.hypot(axial);
    if larmor_1 == 0.0 {
        return Err(Error::DegenerateOrientation("first-order Larmor frequency is zero".into()));
    }
    let u = Vec3::new(w.x / larmor_1, 0.0, axial / larmor_1);
    let dc_offset = (w.x / larmor_1).powi(2);
    let a_x = 1.0 - dc_offset;

    let mut sidebands = Vec::with_capacity(CS_HARMONICS + 1);
    for k in 0..=CS_HARMONICS as i32 {
        let jk = bessel_j(k, ox)?.abs();
        let amp = match k {
            0 => u.z.abs() * jk,
            _ if k % 2 == 0 => 2.0 * u.z.abs() * jk,
            _ => 2.0 * (u.x * u.z).abs() * jk,
        };
        sidebands.push(amp);
    }
    Ok(DetectionReport {
        larmor_1,
        u,
        a_x,
        dc_offset,
        sideband_amplitudes: sidebands,
    })
}

/// `e^{+iΛτ}` for `Λ = ½ h·σ`.
pub fn inverse_stroboscopic(h: Vec3, tau: f64) -> Mat2 {
    su2_exp(h.scale(-tau))
}

/// `‖U(τ)e^{+iΛτ} − ℳ(τ)‖_F` at each sample, with `U` and `Λ` exact.
pub fn micromotion_defects(
    cfg: &DriveConfig,
    field: &StaticField,
    taus: &[f64],
    settings: &IntegratorSettings,
) -> Result<Vec<f64>> {
    check_taus(taus)?;
    let h = crate::floquet::solve_floquet(cfg, field, settings)?.h;
    let us = propagate_samples(cfg, field, 0.0, taus, settings)?;
    let micro = Micromotion::new(cfg, field)?;
    Ok(us
        .iter()
        .zip(taus)
        .map(|(u, &t)| (*u * inverse_stroboscopic(h, t) - micro.at(t)).frobenius_norm())
        .collect())
}

/// Spinor evolved by `U`; handy for examples.
pub fn evolve_state(u: &Mat2, initial: Vec3) -> Vec3 {
    bloch_vector(u.apply(spinor_from_bloch(initial)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floquet::solve_floquet;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(t_end: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| t_end * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn precession_sign_convention() {
        // a field along +z turns +x towards +y: sy = +sin(ω τ)
        let taus = grid(2.0, 41);
        let tr = trajectory_exact(
            &DriveConfig::default(),
            &StaticField::new(0.0, 0.0, 0.2),
            Vec3::X,
            &taus,
            &IntegratorSettings::default(),
        )
        .unwrap();
        for k in 0..taus.len() {
            let t = taus[k];
            assert!((tr.sx[k] - (0.2 * t).cos()).abs() < 1e-9);
            assert!((tr.sy[k] - (0.2 * t).sin()).abs() < 1e-9);
            assert!(tr.sz[k].abs() < 1e-9);
        }
        let an = trajectory_analytic(&DriveConfig::default(), 0.2, Vec3::Z, &taus).unwrap();
        assert!(an.max_deviation(&tr) < 1e-9);
    }

    #[test]
    fn field_free_trajectory_is_constant() {
        let taus = grid(10.0, 11);
        let start = Vec3::new(0.6, 0.0, 0.8);
        let tr = trajectory_exact(
            &DriveConfig::default(),
            &StaticField::zero(),
            start,
            &taus,
            &IntegratorSettings::default(),
        )
        .unwrap();
        for k in 0..taus.len() {
            assert!((tr.bloch(k) - start).norm() < 1e-12);
        }
    }

    #[test]
    fn strong_drive_rotates_about_x() {
        let taus = grid(7.0, 29);
        let tr = trajectory_exact(
            &DriveConfig::single(2.0),
            &StaticField::zero(),
            Vec3::Z,
            &taus,
            &IntegratorSettings::default(),
        )
        .unwrap();
        for k in 0..taus.len() {
            let phi = 2.0 * taus[k].sin();
            assert!(tr.sx[k].abs() < 1e-9);
            assert!((tr.sz[k] - phi.cos()).abs() < 1e-9);
            assert!((tr.sy[k] + phi.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn analytic_trajectory_examples() {
        let taus = grid(30.0, 50);
        let cfg = DriveConfig::single(1.3);
        let along_x = trajectory_analytic(&cfg, 0.01, Vec3::X, &taus).unwrap();
        assert!(along_x.sx.iter().all(|v| (v - 1.0).abs() < 1e-15));
        let along_z = trajectory_analytic(&cfg, 0.01, Vec3::Z, &taus).unwrap();
        for (k, &t) in taus.iter().enumerate() {
            assert!((along_z.sx[k] - (0.01 * t).cos()).abs() < 1e-15);
        }
        assert!(trajectory_analytic(&cfg, 0.01, Vec3::new(1.0, 1.0, 0.0), &taus).is_err());
    }

    #[test]
    fn analytic_tracks_exact_for_weak_fields() {
        let cfg = DriveConfig::cosine(1.8, 1e-2, 1, PI / 2.0);
        let field = StaticField::new(0.0, 0.0, 1e-2);
        let taus = grid(20.0 * PI, 400);
        let (larmor, u) = first_order_precession(&cfg, &field).unwrap();
        let an = trajectory_analytic(&cfg, larmor, u, &taus).unwrap();
        let ex = trajectory_exact(&cfg, &field, Vec3::X, &taus, &IntegratorSettings::default()).unwrap();
        assert!(an.max_deviation(&ex) < 5e-2, "{}", an.max_deviation(&ex));
    }

    #[test]
    fn micromotion_examples() {
        let cfg = DriveConfig::cosine(2.1, 1e-3, 2, 0.4);
        let field = StaticField::new(1e-3, -1e-3, 2e-3);
        assert!((micromotion_operator(&cfg, &field, 0.0).unwrap() - Mat2::identity()).frobenius_norm() < 1e-15);

        let single = DriveConfig::single(2.1);
        for tau in [0.3, 2.0, 4.5] {
            let m = micromotion_operator(&single, &StaticField::zero(), tau).unwrap();
            let want = su2_exp(Vec3::new(2.1 * f64::sin(tau), 0.0, 0.0));
            assert!((m - want).frobenius_norm() < 1e-14);
        }
        let micro = Micromotion::new(&cfg, &field).unwrap();
        for tau in [0.7, 3.1] {
            assert!((micro.at(tau + 2.0 * PI) - micro.at(tau)).frobenius_norm() < 1e-6);
            assert!(micro.at(tau).unitarity_defect() < 1e-13);
        }
    }

    #[test]
    fn micromotion_factorization_is_second_order() {
        let cfg = DriveConfig::cosine(1.5, 1e-3, 1, 0.3);
        let field = StaticField::new(5e-4, -7e-4, 1e-3);
        let taus: Vec<f64> = (0..16).map(|k| 4.0 * PI * k as f64 / 15.0).collect();
        let d = micromotion_defects(&cfg, &field, &taus, &IntegratorSettings::precise()).unwrap();
        assert!(d.iter().all(|v| *v < 1e-5), "{d:?}");
    }

    #[test]
    fn landre_freezing_and_orientation() {
        let taus = grid(200.0, 800);
        let r = landre_detection(2.404826, 1e-3, 0.0, &taus).unwrap();
        assert!(r.larmor < 1e-6 * 1e-3);

        let r = landre_detection(1.0, 1e-3, 0.0, &taus).unwrap();
        assert!((r.u - Vec3::Y).norm() < 1e-15);
        let r = landre_detection(3.0, 1e-3, 0.0, &taus).unwrap();
        assert!((r.u + Vec3::Y).norm() < 1e-15);
    }

    #[test]
    fn landre_larmor_matches_floquet() {
        let taus = grid(100.0, 600);
        let r = landre_detection(1.0, 1e-3, 0.0, &taus).unwrap();
        let sol = solve_floquet(
            &DriveConfig::single(1.0),
            &StaticField::new(0.0, 1e-3, 0.0),
            &IntegratorSettings::precise(),
        )
        .unwrap();
        assert!((r.larmor - sol.larmor).abs() < 1e-6 * r.larmor + 1e-6);
    }

    #[test]
    fn landre_sidebands_are_bessel_weights() {
        let (ox, w) = (1.7, 0.02);
        let taus = grid(2000.0, 6000);
        for psi in [0.0, 0.6] {
            let r = landre_detection(ox, w, psi, &taus).unwrap();
            for k in 0..8 {
                let jk = bessel_j(k, ox).unwrap().abs();
                let (want_y, want_z) = match k {
                    0 => (0.0, jk),
                    _ if k % 2 == 1 => (2.0 * jk, 0.0),
                    _ => (0.0, 2.0 * jk),
                };
                assert!((r.sidebands_y[k as usize] - want_y).abs() < 1e-9, "y harmonic {k}");
                assert!((r.sidebands_z[k as usize] - want_z).abs() < 1e-9, "z harmonic {k}");
            }
        }
    }

    #[test]
    fn exact_landre_signal_carries_the_same_sidebands() {
        let (ox, w) = (1.7, 2e-3);
        let taus = grid(1500.0, 3000);
        let ex = trajectory_exact(
            &DriveConfig::single(ox),
            &StaticField::new(0.0, w, 0.0),
            Vec3::X,
            &taus,
            &IntegratorSettings::default(),
        )
        .unwrap();
        let larmor = w * bessel_j(0, ox).unwrap().abs();
        let amps = sideband_amplitudes(&taus, &ex.sy, larmor, 10).unwrap();
        for k in [1, 3, 5] {
            let want = 2.0 * bessel_j(k, ox).unwrap().abs();
            assert!((amps[k as usize] - want).abs() < 1e-2 * want + 1e-4, "harmonic {k}");
        }
    }

    #[test]
    fn cs_detection_examples() {
        let cfg = DriveConfig::cosine(1.833, 0.0118, 1, PI / 2.0);
        let r = cs_detection(&cfg, &StaticField::new(0.0, 0.0, 0.1993)).unwrap();
        assert_eq!(r.a_x, 1.0);
        assert!((r.u.z.abs() - 1.0).abs() < 1e-15);

        let big = cs_detection(&cfg, &StaticField::new(100.0, 0.0, 0.1993)).unwrap();
        assert!(big.a_x < 1e-4);

        assert!(matches!(
            cs_detection(&cfg, &StaticField::new(0.0, 0.1, 0.0)),
            Err(Error::Config(_))
        ));
        let degenerate = DriveConfig::cosine(1.0, 0.0, 1, 0.0);
        assert!(matches!(
            cs_detection(&degenerate, &StaticField::zero()),
            Err(Error::DegenerateOrientation(_))
        ));
    }

    #[test]
    fn cs_larmor_minimum_at_zero_transverse_field() {
        let cfg = DriveConfig::cosine(1.833, 0.0118, 1, PI / 2.0);
        let curve: Vec<f64> = (-20..=20)
            .map(|k| {
                cs_detection(&cfg, &StaticField::new(k as f64 * 5e-3, 0.0, 0.1993))
                    .unwrap()
                    .larmor_1
            })
            .collect();
        let (imin, _) = curve
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert_eq!(imin, 20);
        // the square-root-of-sum-of-squares shape
        let l0 = curve[20];
        for (i, l) in curve.iter().enumerate() {
            let wx = (i as f64 - 20.0) * 5e-3;
            assert!((l * l - l0 * l0 - wx * wx).abs() < 1e-15);
        }
    }

    #[test]
    fn dc_offset_is_long_time_average() {
        let cfg = DriveConfig::cosine(1.833, 0.0118, 1, PI / 2.0);
        let r = cs_detection(&cfg, &StaticField::new(0.05, 0.0, 0.1993)).unwrap();
        let periods = 200.0;
        let t_end = periods * 2.0 * PI / r.larmor_1;
        let taus = grid(t_end, 20_001);
        let tr = trajectory_analytic(&cfg, r.larmor_1, r.u, &taus).unwrap();
        let mean = tr.sx.iter().sum::<f64>() / tr.sx.len() as f64;
        assert!((mean - r.dc_offset).abs() < 1.0 / periods);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn bloch_norm_conserved(
            ox in 0.0f64..6.0, oy in 0.0f64..3.0, p in 1u32..=3, phi in -PI..PI,
            w in (-0.5f64..0.5, -0.5f64..0.5, -0.5f64..0.5),
            dir in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
        ) {
            let d = Vec3::new(dir.0, dir.1, dir.2);
            prop_assume!(d.norm() > 0.1);
            let taus = grid(15.0, 31);
            let tr = trajectory_exact(
                &DriveConfig::cosine(ox, oy, p, phi),
                &StaticField::new(w.0, w.1, w.2),
                d.scale(1.0 / d.norm()),
                &taus,
                &IntegratorSettings::default(),
            ).unwrap();
            for k in 0..tr.len() {
                prop_assert!((tr.bloch(k).norm() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn dc_plus_ac_budget(ox in 0.0f64..6.0, oy in 0.0f64..0.1, phi in -PI..PI, wx in -0.2f64..0.2, wz in -0.2f64..0.2) {
            let cfg = DriveConfig::cosine(ox, oy, 1, phi);
            if let Ok(r) = cs_detection(&cfg, &StaticField::new(wx, 0.0, wz)) {
                prop_assert!((r.a_x + r.dc_offset - 1.0).abs() < 1e-12);
                prop_assert!((r.u.norm() - 1.0).abs() < 1e-12);
            }
        }
    }
}
