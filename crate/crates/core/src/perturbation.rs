//! Closed-form Magnus perturbation theory in the frame co-rotating with the
//! strong x drive.
//!
//! In that frame the spin sees
//!
//! ```text
//! h^FMR(τ) = y·(0, c₁, −s₁) + g₀(τ) ω₀,   g₀ = [[1,0,0],[0,c₀,s₀],[0,−s₀,c₀]]
//! ```
//!
//! with `c₀ + i s₀ = e^{iφ_x} = Σ αₙ e^{inτ}` and
//! `c₁ + i s₁ = s_y e^{iφ_x} = Σ βₙ e^{inτ}`. Every first and second order
//! quantity is a finite sum over these Fourier coefficients.
//!
//! The y-drive prefactor `y` is `Ω_y` for the cosine waveforms. For
//! [`Waveform::HarmonicSum`] the complete y drive `F_y(τ)` is expanded
//! instead and `y = 1`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagator::{DriveConfig, StaticField, Waveform};
use crate::spinmath::{
    mat3_mul_vec, tensor3_half_quadratic, BesselRow, Mat2, Mat3, Tensor3, Vec3, C64,
};

/// Number of uniform samples used for coefficient quadrature.
pub const QUADRATURE_SAMPLES: usize = 4096;

const PARSEVAL_TOL: f64 = 1e-8;
const TAIL_TOL: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoeffSource {
    ClosedFormCosine,
    Quadrature,
}

/// Truncated Fourier coefficients `αₙ`, `βₙ` for `|n| ≤ N`.
#[derive(Debug, Clone)]
pub struct FourierCoeffs {
    alpha: Vec<C64>,
    beta: Vec<C64>,
    pub truncation_n: usize,
    pub source: CoeffSource,
    /// Prefactor `y` multiplying the `βₙ` series in the fields.
    pub y_scale: f64,
}

impl FourierCoeffs {
    pub fn alpha(&self, n: i64) -> C64 {
        self.lookup(&self.alpha, n)
    }

    pub fn beta(&self, n: i64) -> C64 {
        self.lookup(&self.beta, n)
    }

    fn lookup(&self, v: &[C64], n: i64) -> C64 {
        let big = self.truncation_n as i64;
        if n.abs() > big {
            C64::new(0.0, 0.0)
        } else {
            v[(n + big) as usize]
        }
    }

    /// `|Σ|αₙ|² − 1|`.
    pub fn parseval_defect(&self) -> f64 {
        (self.alpha.iter().map(|a| a.norm_sqr()).sum::<f64>() - 1.0).abs()
    }

    fn check(self) -> Result<Self> {
        let defect = self.parseval_defect();
        if !(defect <= PARSEVAL_TOL) {
            return Err(Error::Truncation(format!(
                "Parseval defect {defect:e} with N = {}",
                self.truncation_n
            )));
        }
        Ok(self)
    }
}

/// Smallest admissible truncation order for a drive.
pub fn truncation_order(cfg: &DriveConfig) -> usize {
    let ox = cfg.omega_x_amp;
    let top_harmonic = cfg
        .harmonics()
        .iter()
        .map(|h| h.order)
        .chain(std::iter::once(cfg.harmonic_p))
        .max()
        .unwrap_or(1) as usize;
    let ceil = ox.ceil();
    let rule = ceil + (10.0 * (ceil + 1.0).cbrt()).ceil() + 10.0;
    let mut n = (top_harmonic + 5).max(rule as usize);
    if let Ok(row) = BesselRow::new(n + 64, ox) {
        while n < row.max_order() && row.get(n as i64).abs() >= TAIL_TOL {
            n += 1;
        }
    }
    n
}

/// Coefficients at the minimal truncation order.
pub fn coefficients(cfg: &DriveConfig) -> Result<FourierCoeffs> {
    fourier_coeffs(cfg, truncation_order(cfg))
}

/// Closed forms for the cosine pair, quadrature otherwise.
pub fn fourier_coeffs(cfg: &DriveConfig, n: usize) -> Result<FourierCoeffs> {
    cfg.validate()?;
    let min = truncation_order(cfg);
    if n < min {
        return Err(Error::Truncation(format!(
            "N = {n} is below the minimum {min} for this drive"
        )));
    }
    match cfg.waveform {
        Waveform::CosinePair => closed_form_cosine(cfg, n),
        _ => fourier_coeffs_quadrature(cfg, n),
    }
}

fn closed_form_cosine(cfg: &DriveConfig, n: usize) -> Result<FourierCoeffs> {
    let p = cfg.harmonic_p as i64;
    let row = BesselRow::new(n + p as usize, cfg.omega_x_amp)?;
    let (e_plus, e_minus) = (C64::from_polar(0.5, cfg.phase_phi), C64::from_polar(0.5, -cfg.phase_phi));
    let big = n as i64;
    let alpha = (-big..=big).map(|k| C64::new(row.get(k), 0.0)).collect();
    let beta = (-big..=big)
        .map(|k| e_plus * row.get(k - p) + e_minus * row.get(k + p))
        .collect();
    FourierCoeffs {
        alpha,
        beta,
        truncation_n: n,
        source: CoeffSource::ClosedFormCosine,
        y_scale: cfg.omega_y_amp,
    }
    .check()
}

/// Uniform-grid quadrature of the defining integrals, for any waveform.
pub fn fourier_coeffs_quadrature(cfg: &DriveConfig, n: usize) -> Result<FourierCoeffs> {
    cfg.validate()?;
    let k = QUADRATURE_SAMPLES;
    if 2 * n + 1 >= k {
        return Err(Error::Truncation(format!("N = {n} too large for {k}-point quadrature")));
    }
    let harmonic_sum = matches!(cfg.waveform, Waveform::HarmonicSum(_));
    let psi = cfg.effective_psi();
    let p = cfg.harmonic_p as f64;

    let roots: Vec<C64> = (0..k)
        .map(|j| C64::from_polar(1.0, -2.0 * PI * j as f64 / k as f64))
        .collect();
    let mut f0 = Vec::with_capacity(k);
    let mut f1 = Vec::with_capacity(k);
    for j in 0..k {
        let tau = 2.0 * PI * j as f64 / k as f64;
        let phase = C64::from_polar(1.0, cfg.fmr_phase(tau));
        let sy = if harmonic_sum {
            cfg.drive_y(tau)
        } else {
            (p * (tau + psi) + cfg.phase_phi).cos()
        };
        f0.push(phase);
        f1.push(phase * sy);
    }
    let transform = |samples: &[C64]| -> Vec<C64> {
        let big = n as i64;
        (-big..=big)
            .map(|m| {
                let mut acc = C64::new(0.0, 0.0);
                for (j, s) in samples.iter().enumerate() {
                    let idx = (m * j as i64).rem_euclid(k as i64) as usize;
                    acc += s * roots[idx];
                }
                acc / k as f64
            })
            .collect()
    };
    FourierCoeffs {
        alpha: transform(&f0),
        beta: transform(&f1),
        truncation_n: n,
        source: CoeffSource::Quadrature,
        y_scale: if harmonic_sum { 1.0 } else { cfg.omega_y_amp },
    }
    .check()
}

/// Series evaluators for `c₀ + i s₀`, `c₁ + i s₁`, their primitives
/// `C + i S` from zero and the periodic parts `C̃ + i S̃` of the primitives.
#[derive(Debug, Clone)]
pub struct SeriesFunctions {
    coeffs: FourierCoeffs,
}

impl SeriesFunctions {
    pub fn new(coeffs: FourierCoeffs) -> Self {
        SeriesFunctions { coeffs }
    }

    pub fn coeffs(&self) -> &FourierCoeffs {
        &self.coeffs
    }

    fn sum(&self, which: fn(&FourierCoeffs, i64) -> C64, tau: f64) -> C64 {
        let big = self.coeffs.truncation_n as i64;
        (-big..=big)
            .map(|n| which(&self.coeffs, n) * C64::from_polar(1.0, n as f64 * tau))
            .sum()
    }

    fn periodic_primitive(&self, which: fn(&FourierCoeffs, i64) -> C64, tau: f64) -> C64 {
        let big = self.coeffs.truncation_n as i64;
        let mut acc = C64::new(0.0, 0.0);
        for n in 1..=big {
            for m in [n, -n] {
                let e = C64::from_polar(1.0, m as f64 * tau) - 1.0;
                acc += which(&self.coeffs, m) * e / m as f64;
            }
        }
        acc * C64::new(0.0, -1.0)
    }

    /// `c₀ + i s₀`.
    pub fn cs0(&self, tau: f64) -> C64 {
        self.sum(FourierCoeffs::alpha, tau)
    }

    /// `c₁ + i s₁`.
    pub fn cs1(&self, tau: f64) -> C64 {
        self.sum(FourierCoeffs::beta, tau)
    }

    /// `C₀ + i S₀`.
    pub fn primitive0(&self, tau: f64) -> C64 {
        self.coeffs.alpha(0) * tau + self.tilde0(tau)
    }

    /// `C₁ + i S₁`.
    pub fn primitive1(&self, tau: f64) -> C64 {
        self.coeffs.beta(0) * tau + self.tilde1(tau)
    }

    /// `C̃₀ + i S̃₀`.
    pub fn tilde0(&self, tau: f64) -> C64 {
        self.periodic_primitive(FourierCoeffs::alpha, tau)
    }

    /// `C̃₁ + i S̃₁`.
    pub fn tilde1(&self, tau: f64) -> C64 {
        self.periodic_primitive(FourierCoeffs::beta, tau)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FirstOrder {
    pub h1: Vec3,
    pub hs1: Vec3,
    pub g1: Mat3,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SecondOrder {
    pub h2: Vec3,
    pub hs2: Vec3,
    pub g2: Mat3,
    pub f2: Tensor3,
}

/// Closed-form Appendix sums specific to the cosine pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineSums {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QCoefficients {
    pub q_x: f64,
    pub q_xy: f64,
    pub q_xz: f64,
    pub q_yx: f64,
    pub q_zx: f64,
    pub q0: f64,
    pub qc: f64,
    pub qs: f64,
    /// Present only when computed from the cosine closed forms.
    pub sums: Option<CosineSums>,
}

impl QCoefficients {
    /// The eight coefficients in a fixed order, for comparisons.
    pub fn values(&self) -> [f64; 8] {
        [
            self.q_x, self.q_xy, self.q_xz, self.q_yx, self.q_zx, self.q0, self.qc, self.qs,
        ]
    }

    pub const NAMES: [&'static str; 8] = ["Q_x", "Q_xy", "Q_xz", "Q_yx", "Q_zx", "q0", "qc", "qs"];
}

/// Q coefficients from their defining `αₙ`, `βₙ` series, valid for any
/// waveform. Sums over `n ≠ 0` are accumulated in `±n` pairs.
pub fn q_from_series(c: &FourierCoeffs) -> QCoefficients {
    let (a0, b0) = (c.alpha(0), c.beta(0));
    let mut q_x = 0.0;
    let mut y = C64::new(0.0, 0.0);
    let mut s_beta = C64::new(0.0, 0.0);
    let mut q0 = 0.0;
    let mut s_alpha = C64::new(0.0, 0.0);
    for n in 1..=c.truncation_n as i64 {
        let mut pair_qx = 0.0;
        let mut pair_y = C64::new(0.0, 0.0);
        let mut pair_sb = C64::new(0.0, 0.0);
        let mut pair_q0 = 0.0;
        let mut pair_sa = C64::new(0.0, 0.0);
        for m in [n, -n] {
            let inv = 1.0 / m as f64;
            let (am, bm) = (c.alpha(m), c.beta(m));
            pair_qx += (bm.norm_sqr() - 2.0 * (b0.conj() * bm).re) * inv;
            pair_y += (bm * am.conj() - b0 * am.conj() - a0.conj() * bm) * inv;
            pair_sb += bm * inv;
            pair_q0 += (am.norm_sqr() - 2.0 * (am * a0.conj()).re) * inv;
            pair_sa += am * inv;
        }
        q_x += pair_qx;
        y += pair_y;
        s_beta += pair_sb;
        q0 += pair_q0;
        s_alpha += pair_sa;
    }
    QCoefficients {
        q_x,
        q_xy: 2.0 * y.re,
        q_xz: -2.0 * y.im,
        q_yx: 2.0 * s_beta.re,
        q_zx: -2.0 * s_beta.im,
        q0,
        qc: -s_alpha.im,
        qs: s_alpha.re,
        sums: None,
    }
}

/// Closed-form Bessel sums for the cosine pair.
///
/// `q_s = 2 Σ_{m≥0} J_{2m+1}/(2m+1)` and `q₀ = −2 J₀ q_s`; these are what the
/// defining series reduce to for `αₙ = Jₙ`.
pub fn q_coefficients(cfg: &DriveConfig) -> Result<QCoefficients> {
    cfg.validate()?;
    if cfg.waveform != Waveform::CosinePair {
        return Err(Error::Config(
            "closed-form Q coefficients need the unshifted cosine pair".into(),
        ));
    }
    let p = cfg.harmonic_p as i64;
    let n_max = truncation_order(cfg) as i64;
    let row = BesselRow::new((n_max + p + 1) as usize, cfg.omega_x_amp)?;
    let j = |k: i64| row.get(k);
    if j(n_max - p).abs() > 1e-15 {
        return Err(Error::Truncation(format!(
            "Bessel tail |J_{}| = {:e} has not decayed",
            n_max - p,
            j(n_max - p).abs()
        )));
    }

    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    let (mut sum_plus, mut sum_minus) = (0.0, 0.0);
    for n in 1..=n_max {
        let inv = 1.0 / n as f64;
        for m in [n, -n] {
            let im = 1.0 / m as f64;
            a += (j(m - p) * j(m) - j(m) * j(-p) - j(0) * j(m - p)) * im;
            b += (j(m + p) * j(m) - j(m) * j(p) - j(0) * j(m + p)) * im;
        }
        c += (j(p + n) - j(p - n) + j(n - p) - j(-n - p)) * inv;
        d += (j(-p + n) - j(-p - n) - j(n + p) + j(p - n)) * inv;
        sum_plus += (j(n + p) - j(p - n)) * inv;
        sum_minus += (j(n - p) - j(-p - n)) * inv;
    }
    let sign_p = if p % 2 == 0 { 1.0 } else { -1.0 };
    let c2 = (2.0 * cfg.phase_phi).cos();
    let jp = j(p);
    let q_x = -0.5 * jp * (1.0 + sign_p * c2) * sum_plus - 0.5 * jp * (sign_p + c2) * sum_minus;

    let mut qs = 0.0;
    let mut k = 1;
    while k <= n_max {
        qs += j(k) / k as f64;
        k += 2;
    }
    qs *= 2.0;
    let (sphi, cphi) = cfg.phase_phi.sin_cos();
    Ok(QCoefficients {
        q_x,
        q_xy: (a + b) * cphi,
        q_xz: -(a - b) * sphi,
        q_yx: c * cphi,
        q_zx: -d * sphi,
        q0: -2.0 * j(0) * qs,
        qc: 0.0,
        qs,
        sums: Some(CosineSums { a, b, c, d }),
    })
}

/// `g¹` from `α₀`.
pub fn first_order_g(alpha0: C64) -> Mat3 {
    [
        [1.0, 0.0, 0.0],
        [0.0, alpha0.re, alpha0.im],
        [0.0, -alpha0.im, alpha0.re],
    ]
}

/// First and second order fields from precomputed coefficients.
#[derive(Debug, Clone)]
pub struct Perturbation {
    series: SeriesFunctions,
    q: QCoefficients,
}

impl Perturbation {
    pub fn new(cfg: &DriveConfig) -> Result<Self> {
        let coeffs = coefficients(cfg)?;
        Ok(Perturbation::from_coeffs(coeffs))
    }

    pub fn from_coeffs(coeffs: FourierCoeffs) -> Self {
        let q = q_from_series(&coeffs);
        Perturbation {
            series: SeriesFunctions::new(coeffs),
            q,
        }
    }

    pub fn coeffs(&self) -> &FourierCoeffs {
        self.series.coeffs()
    }

    pub fn series(&self) -> &SeriesFunctions {
        &self.series
    }

    pub fn q(&self) -> &QCoefficients {
        &self.q
    }

    pub fn synthetic_first(&self) -> Vec3 {
        let c = self.coeffs();
        let b0 = c.beta(0);
        Vec3::new(0.0, b0.re, -b0.im).scale(c.y_scale)
    }

    pub fn g1(&self) -> Mat3 {
        first_order_g(self.coeffs().alpha(0))
    }

    pub fn first_order(&self, field: &StaticField) -> FirstOrder {
        let hs1 = self.synthetic_first();
        let g1 = self.g1();
        FirstOrder {
            h1: hs1 + mat3_mul_vec(&g1, field.omega0),
            hs1,
            g1,
        }
    }

    pub fn g2(&self) -> Mat3 {
        let (q, y) = (&self.q, 0.5 * self.coeffs().y_scale);
        [
            [0.0, y * q.q_xy, y * q.q_xz],
            [y * q.q_yx, 0.0, 0.0],
            [y * q.q_zx, 0.0, 0.0],
        ]
    }

    pub fn f2(&self) -> Tensor3 {
        let q = &self.q;
        [
            [[0.0, 0.0, 0.0], [0.0, q.q0, 0.0], [0.0, 0.0, q.q0]],
            [[0.0, q.qs, -q.qc], [q.qs, 0.0, 0.0], [-q.qc, 0.0, 0.0]],
            [[0.0, q.qc, q.qs], [q.qc, 0.0, 0.0], [q.qs, 0.0, 0.0]],
        ]
    }

    pub fn second_order(&self, field: &StaticField) -> SecondOrder {
        let y = self.coeffs().y_scale;
        let hs2 = Vec3::new(0.5 * y * y * self.q.q_x, 0.0, 0.0);
        let g2 = self.g2();
        let f2 = self.f2();
        let w = field.omega0;
        SecondOrder {
            h2: hs2 + mat3_mul_vec(&g2, w) + tensor3_half_quadratic(&f2, w),
            hs2,
            g2,
            f2,
        }
    }

    /// `h¹ + h²`.
    pub fn field(&self, field: &StaticField) -> Vec3 {
        self.first_order(field).h1 + self.second_order(field).h2
    }

    /// `h^FMR(τ)` from the series.
    pub fn fmr_field(&self, field: &StaticField, tau: f64) -> Vec3 {
        let cs0 = self.series.cs0(tau);
        let cs1 = self.series.cs1(tau);
        self.assemble(field, cs0, cs1, 1.0)
    }

    /// `H^FMR(τ) = ∫₀^τ h^FMR`.
    pub fn fmr_primitive(&self, field: &StaticField, tau: f64) -> Vec3 {
        let p0 = self.series.primitive0(tau);
        let p1 = self.series.primitive1(tau);
        self.assemble(field, p0, p1, tau)
    }

    /// Field vector `k` of the first-order kick `𝒦₁ = ½ k·σ`.
    pub fn kick_vector(&self, field: &StaticField, tau: f64) -> Vec3 {
        let t0 = self.series.tilde0(tau);
        let t1 = self.series.tilde1(tau);
        self.assemble(field, t0, t1, 0.0)
    }

    pub fn kick(&self, field: &StaticField, tau: f64) -> Mat2 {
        Mat2::from_field(self.kick_vector(field, tau))
    }

    /// `y(0, Re z₁, −Im z₁) + [[x,0,0],[0,Re z₀,Im z₀],[0,−Im z₀,Re z₀]] ω₀`.
    fn assemble(&self, field: &StaticField, z0: C64, z1: C64, x_weight: f64) -> Vec3 {
        let w = field.omega0;
        let y = self.coeffs().y_scale;
        Vec3::new(
            x_weight * w.x,
            y * z1.re + z0.re * w.y + z0.im * w.z,
            -y * z1.im - z0.im * w.y + z0.re * w.z,
        )
    }
}

/// First-order field, synthetic field and g-tensor.
pub fn h_first_order(cfg: &DriveConfig, field: &StaticField) -> Result<FirstOrder> {
    field.validate()?;
    Ok(Perturbation::new(cfg)?.first_order(field))
}

/// Second-order field, synthetic field, g- and f-tensors.
pub fn h_second_order(cfg: &DriveConfig, field: &StaticField) -> Result<SecondOrder> {
    field.validate()?;
    Ok(Perturbation::new(cfg)?.second_order(field))
}

/// `h^FMR(τ)` from the explicit rotation formula and `H^FMR(τ)` from the
/// primitive series.
pub fn fmr_field(cfg: &DriveConfig, field: &StaticField, tau: f64) -> Result<(Vec3, Vec3)> {
    if !tau.is_finite() {
        return Err(Error::Domain(format!("tau must be finite, got {tau}")));
    }
    let pert = Perturbation::new(cfg)?;
    Ok((fmr_field_direct(cfg, field, tau), pert.fmr_primitive(field, tau)))
}

/// `h^FMR(τ)` evaluated with trigonometric functions of `φ_x(τ)`.
pub fn fmr_field_direct(cfg: &DriveConfig, field: &StaticField, tau: f64) -> Vec3 {
    let (s, c) = cfg.fmr_phase(tau).sin_cos();
    let w = field.omega0;
    let fy = cfg.drive_y(tau);
    Vec3::new(
        w.x,
        w.y * c + w.z * s + fy * c,
        w.z * c - w.y * s - fy * s,
    )
}

pub fn kick_first_order(cfg: &DriveConfig, field: &StaticField, tau: f64) -> Result<Mat2> {
    if !tau.is_finite() {
        return Err(Error::Domain(format!("tau must be finite, got {tau}")));
    }
    Ok(Perturbation::new(cfg)?.kick(field, tau))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShiftedFirstOrder {
    pub beta0: C64,
    pub psi_tilde: f64,
    pub g1: Mat3,
}

/// First-order synthetic coefficient and g-tensor for the shifted cosines.
///
/// `β₀` comes from quadrature; `g¹ = diag(1, J₀, J₀)·R_x(Ψ̃)` with
/// `Ψ̃ = Ω_x sin ψ`.
pub fn shifted_first_order(cfg: &DriveConfig) -> Result<ShiftedFirstOrder> {
    if cfg.waveform != Waveform::ShiftedCosinePair {
        return Err(Error::Config("shifted_first_order needs the shifted cosine pair".into()));
    }
    let coeffs = coefficients(cfg)?;
    let j0 = crate::spinmath::bessel_j(0, cfg.omega_x_amp)?;
    let psi_tilde = cfg.psi_tilde();
    let (s, c) = psi_tilde.sin_cos();
    Ok(ShiftedFirstOrder {
        beta0: coeffs.beta(0),
        psi_tilde,
        g1: [[1.0, 0.0, 0.0], [0.0, j0 * c, -j0 * s], [0.0, j0 * s, j0 * c]],
    })
}
