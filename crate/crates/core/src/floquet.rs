//! Stroboscopic Floquet generator, effective field and numerical response
//! tensors.
//!
//! The one-period monodromy `M = U(2π)` is written as `exp(−i2πΛ)` with the
//! eigenphases of `Λ` folded into the first Brillouin zone `(−½, ½]`. The
//! effective field follows from `Λ = ½ h·σ` and the dressed Larmor
//! frequency is `Ω_L = |h|`.
//!
//! Derivatives of `h` with respect to the static field are taken by central
//! differences around `ω₀ = 0`: the Jacobian is the g-tensor and the Hessian
//! the f-tensor.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagator::{monodromy, DriveConfig, IntegratorSettings, StaticField};
use crate::spinmath::{pauli_components, Mat2, Mat3, Tensor3, Vec3, C64};

/// Below this Larmor frequency the orientation `u` is left undefined.
pub const DEGENERACY_THRESHOLD: f64 = 1e-9;

/// A stencil whose end points differ by more than this in `h` is taken to
/// straddle a Brillouin fold.
pub const FOLD_JUMP: f64 = 0.25;

pub const DEFAULT_DELTA_G: f64 = 1e-4;
pub const DEFAULT_DELTA_F: f64 = 3e-3;

const MONODROMY_UNITARITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct FloquetSolution {
    pub monodromy: Mat2,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub lambda: Mat2,
    pub h: Vec3,
    pub larmor: f64,
    pub u: Option<Vec3>,
    /// Set when the monodromy is `−I` and `Λ` was fixed by convention.
    pub degenerate: bool,
}

/// Folds `x` into `(−½, ½]`.
pub fn fold_phase(x: f64) -> f64 {
    let r = x - x.round();
    if r <= -0.5 {
        r + 1.0
    } else {
        r
    }
}

fn eigenphase(mu: C64) -> f64 {
    fold_phase(-mu.arg() / (2.0 * PI))
}

/// Integrates one period and diagonalizes the monodromy.
pub fn solve_floquet(
    cfg: &DriveConfig,
    field: &StaticField,
    settings: &IntegratorSettings,
) -> Result<FloquetSolution> {
    let prop = monodromy(cfg, field, settings)?;
    floquet_from_monodromy(&prop.u)
}

/// `h` for one configuration.
pub fn effective_field(
    cfg: &DriveConfig,
    field: &StaticField,
    settings: &IntegratorSettings,
) -> Result<Vec3> {
    Ok(solve_floquet(cfg, field, settings)?.h)
}

/// Eigen-decomposition of a unitary 2×2 monodromy.
///
/// Eigenvectors are taken from whichever of the Hermitian and anti-Hermitian
/// parts of `M` has the larger traceless component; both commute with `M`.
pub fn floquet_from_monodromy(m: &Mat2) -> Result<FloquetSolution> {
    let defect = m.unitarity_defect();
    if !(defect <= MONODROMY_UNITARITY_TOL) {
        return Err(Error::Contract(format!(
            "monodromy is not unitary (defect {defect:e})"
        )));
    }
    let herm = (*m + m.adjoint()).scale(C64::new(0.5, 0.0));
    let anti = (*m - m.adjoint()).scale(C64::new(0.0, -0.5));
    let a = pauli_components(&anti).scale(0.5);
    let b = pauli_components(&herm).scale(0.5);
    let axis = if a.norm() >= b.norm() { a } else { b };

    if axis.norm() < 1e-14 {
        // M is a multiple of the identity
        let lam = eigenphase(m.trace() * 0.5);
        let degenerate = lam == 0.5;
        let (lambda, h) = if degenerate {
            (Mat2::from_field(Vec3::Z), Vec3::Z)
        } else {
            (Mat2::identity().scale(C64::new(lam, 0.0)), Vec3::ZERO)
        };
        let larmor = h.norm();
        return Ok(FloquetSolution {
            monodromy: *m,
            lambda_plus: lam,
            lambda_minus: lam,
            lambda,
            h,
            larmor,
            u: (larmor >= DEGENERACY_THRESHOLD).then_some(h),
            degenerate,
        });
    }

    let n = axis.scale(1.0 / axis.norm());
    let half = C64::new(0.5, 0.0);
    let p_up = (Mat2::identity() + Mat2::pauli_vector(n)).scale(half);
    let p_down = (Mat2::identity() - Mat2::pauli_vector(n)).scale(half);
    let lam_up = eigenphase((p_up * *m).trace());
    let lam_down = eigenphase((p_down * *m).trace());

    let lambda = p_up.scale(C64::new(lam_up, 0.0)) + p_down.scale(C64::new(lam_down, 0.0));
    let h = pauli_components(&lambda);
    let larmor = h.norm();
    Ok(FloquetSolution {
        monodromy: *m,
        lambda_plus: lam_up.max(lam_down),
        lambda_minus: lam_up.min(lam_down),
        lambda,
        h,
        larmor,
        u: (larmor >= DEGENERACY_THRESHOLD).then(|| h.scale(1.0 / larmor)),
        degenerate: false,
    })
}

/// Numerical g and f tensors together with the synthetic field.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResponseTensors {
    pub g: Mat3,
    pub f: Tensor3,
    pub h_s: Vec3,
}

fn h_at(cfg: &DriveConfig, settings: &IntegratorSettings, w: Vec3) -> Result<Vec3> {
    effective_field(cfg, &StaticField::from(w), settings)
}

fn check_fold(plus: Vec3, minus: Vec3, what: &str) -> Result<()> {
    let jump = (plus - minus).norm();
    if jump > FOLD_JUMP {
        return Err(Error::FoldAmbiguity(format!(
            "effective field jumps by {jump:.3} across the {what} stencil"
        )));
    }
    Ok(())
}

/// Central-difference Jacobian of `h` over `ω₀` at zero field.
pub fn g_tensor_numeric(cfg: &DriveConfig, settings: &IntegratorSettings, delta: f64) -> Result<Mat3> {
    if !(1e-6..=1e-2).contains(&delta) {
        return Err(Error::Domain(format!("g stencil {delta} outside [1e-6, 1e-2]")));
    }
    let mut g = [[0.0; 3]; 3];
    for j in 0..3 {
        let e = Vec3::axis(j).scale(delta);
        let plus = h_at(cfg, settings, e)?;
        let minus = h_at(cfg, settings, -e)?;
        check_fold(plus, minus, "g")?;
        for (i, row) in g.iter_mut().enumerate() {
            row[j] = (plus[i] - minus[i]) / (2.0 * delta);
        }
    }
    Ok(g)
}

/// Central second differences of `h` over `ω₀` at zero field, symmetrized
/// in the trailing indices.
pub fn f_tensor_numeric(
    cfg: &DriveConfig,
    settings: &IntegratorSettings,
    delta: f64,
) -> Result<Tensor3> {
    if !(1e-4..=1e-1).contains(&delta) {
        return Err(Error::Domain(format!("f stencil {delta} outside [1e-4, 1e-1]")));
    }
    let centre = h_at(cfg, settings, Vec3::ZERO)?;
    let mut f = [[[0.0; 3]; 3]; 3];
    let d2 = delta * delta;
    for j in 0..3 {
        let e = Vec3::axis(j).scale(delta);
        let plus = h_at(cfg, settings, e)?;
        let minus = h_at(cfg, settings, -e)?;
        check_fold(plus, minus, "f")?;
        for (i, fi) in f.iter_mut().enumerate() {
            fi[j][j] = (plus[i] - 2.0 * centre[i] + minus[i]) / d2;
        }
        for k in (j + 1)..3 {
            let ek = Vec3::axis(k).scale(delta);
            let pp = h_at(cfg, settings, e + ek)?;
            let pm = h_at(cfg, settings, e - ek)?;
            let mp = h_at(cfg, settings, ek - e)?;
            let mm = h_at(cfg, settings, -e - ek)?;
            check_fold(pp, mm, "f")?;
            check_fold(pm, mp, "f")?;
            for (i, fi) in f.iter_mut().enumerate() {
                let v = (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * d2);
                fi[j][k] = v;
                fi[k][j] = v;
            }
        }
    }
    Ok(f)
}

fn richardson(coarse: f64, fine: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}

/// g with one Richardson level on top of [`g_tensor_numeric`].
pub fn g_tensor(cfg: &DriveConfig, settings: &IntegratorSettings, delta: f64) -> Result<Mat3> {
    let coarse = g_tensor_numeric(cfg, settings, delta)?;
    let fine = g_tensor_numeric(cfg, settings, 0.5 * delta)?;
    let mut g = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            g[i][j] = richardson(coarse[i][j], fine[i][j]);
        }
    }
    Ok(g)
}

/// f with one Richardson level on top of [`f_tensor_numeric`].
pub fn f_tensor(cfg: &DriveConfig, settings: &IntegratorSettings, delta: f64) -> Result<Tensor3> {
    let coarse = f_tensor_numeric(cfg, settings, delta)?;
    let fine = f_tensor_numeric(cfg, settings, 0.5 * delta)?;
    let mut f = [[[0.0; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                f[i][j][k] = richardson(coarse[i][j][k], fine[i][j][k]);
            }
        }
    }
    Ok(f)
}

/// g, f and `h_s` with the default stencils.
pub fn response_tensors(cfg: &DriveConfig, settings: &IntegratorSettings) -> Result<ResponseTensors> {
    Ok(ResponseTensors {
        g: g_tensor(cfg, settings, DEFAULT_DELTA_G)?,
        f: f_tensor(cfg, settings, DEFAULT_DELTA_F)?,
        h_s: h_at(cfg, settings, Vec3::ZERO)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrincipalKind {
    ThreeReal,
    OneRealOnePair,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PrincipalValues {
    /// Three real values in decreasing order, or the real value followed by
    /// the pair with positive imaginary part first.
    pub values: [C64; 3],
    pub kind: PrincipalKind,
    pub eta0: Option<f64>,
}

impl PrincipalValues {
    pub fn largest_modulus(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// The largest real value for `ThreeReal`, the lone real value otherwise.
    pub fn largest_real(&self) -> f64 {
        self.values[0].re
    }
}

/// Eigenvalues of a (generally non-symmetric) real 3×3 tensor.
pub fn principal_values(g: &Mat3) -> PrincipalValues {
    let m = Matrix3::from_fn(|i, j| g[i][j]);
    let eig = m.complex_eigenvalues();
    let mut vals: Vec<C64> = eig.iter().map(|z| C64::new(z.re, z.im)).collect();
    let scale = vals.iter().map(|z| z.norm()).fold(1e-300, f64::max);
    let is_real = |z: &C64| z.im.abs() <= 1e-12 * scale;

    let kind = if vals.iter().all(is_real) {
        PrincipalKind::ThreeReal
    } else {
        PrincipalKind::OneRealOnePair
    };
    let values = match kind {
        PrincipalKind::ThreeReal => {
            vals.sort_by(|a, b| b.re.total_cmp(&a.re));
            [
                C64::new(vals[0].re, 0.0),
                C64::new(vals[1].re, 0.0),
                C64::new(vals[2].re, 0.0),
            ]
        }
        PrincipalKind::OneRealOnePair => {
            vals.sort_by(|a, b| a.im.abs().total_cmp(&b.im.abs()));
            let real = C64::new(vals[0].re, 0.0);
            let pair = if vals[1].im > 0.0 { vals[1] } else { vals[2] };
            [real, pair, pair.conj()]
        }
    };
    PrincipalValues {
        values,
        kind,
        eta0: first_order_rotation(g),
    }
}

/// `η₀ = atan2(Im α₀, Re α₀)` when `g` has the first-order block layout
/// `[[1,0,0],[0,a,b],[0,−b,a]]`.
fn first_order_rotation(g: &Mat3) -> Option<f64> {
    let tol = 1e-6 * g.iter().flatten().fold(1.0, |a: f64, b| a.max(b.abs()));
    let block = g[0][1].abs() <= tol
        && g[0][2].abs() <= tol
        && g[1][0].abs() <= tol
        && g[2][0].abs() <= tol
        && (g[1][1] - g[2][2]).abs() <= tol
        && (g[1][2] + g[2][1]).abs() <= tol;
    block.then(|| g[1][2].atan2(g[1][1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinmath::{bessel_j, su2_exp};
    use proptest::prelude::*;

    fn settings() -> IntegratorSettings {
        IntegratorSettings::default()
    }

    #[test]
    fn undriven_larmor() {
        let sol = solve_floquet(&DriveConfig::default(), &StaticField::new(0.0, 0.0, 0.1), &settings())
            .unwrap();
        assert!((sol.h - Vec3::new(0.0, 0.0, 0.1)).norm() < 1e-10);
        assert!((sol.larmor - 0.1).abs() < 1e-10);
        assert!((sol.u.unwrap() - Vec3::Z).norm() < 1e-9);
    }

    #[test]
    fn brillouin_folding() {
        let sol = solve_floquet(&DriveConfig::default(), &StaticField::new(0.0, 0.0, 1.2), &settings())
            .unwrap();
        assert!((sol.h - Vec3::new(0.0, 0.0, -0.8)).norm() < 1e-10);
        assert!((sol.larmor - 0.8).abs() < 1e-10);
        assert!((sol.lambda_plus - 0.4).abs() < 1e-10);
        assert!((sol.lambda_minus + 0.4).abs() < 1e-10);
    }

    #[test]
    fn boundary_monodromy_is_flagged() {
        let sol = floquet_from_monodromy(&Mat2::identity().scale(C64::new(-1.0, 0.0))).unwrap();
        assert!(sol.degenerate);
        assert_eq!(sol.lambda_plus, 0.5);
        assert_eq!(sol.lambda_minus, 0.5);
        assert_eq!(sol.h, Vec3::Z);

        let sol = floquet_from_monodromy(&Mat2::identity()).unwrap();
        assert!(!sol.degenerate);
        assert_eq!(sol.h, Vec3::ZERO);
        assert!(sol.u.is_none());
    }

    #[test]
    fn rejects_non_unitary_monodromy() {
        let m = Mat2::identity().scale(C64::new(1.1, 0.0));
        assert!(matches!(floquet_from_monodromy(&m), Err(Error::Contract(_))));
    }

    #[test]
    fn fold_phase_interval() {
        assert_eq!(fold_phase(0.5), 0.5);
        assert_eq!(fold_phase(-0.5), 0.5);
        assert!((fold_phase(0.6) + 0.4).abs() < 1e-15);
        assert!((fold_phase(-0.7) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn synthetic_field_exceeds_vanishing_bias() {
        let cfg = DriveConfig::cosine(5.11, 3.0, 1, PI / 2.0);
        let eps = 1e-6;
        let sol = solve_floquet(&cfg, &StaticField::new(0.0, 0.0, eps), &settings()).unwrap();
        assert!(sol.larmor > eps);
    }

    #[test]
    fn undriven_g_is_identity() {
        let g = g_tensor_numeric(&DriveConfig::default(), &settings(), 1e-4).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[i][j] - want).abs() < 1e-7);
            }
        }
        let f = f_tensor_numeric(&DriveConfig::default(), &settings(), 3e-3).unwrap();
        assert!(f.iter().flatten().flatten().all(|v| v.abs() < 1e-5));
    }

    #[test]
    fn single_dressing_g_is_bessel_diagonal() {
        let cfg = DriveConfig::single(3.5);
        let g = g_tensor_numeric(&cfg, &settings(), 1e-4).unwrap();
        let j0 = bessel_j(0, 3.5).unwrap();
        let want = [[1.0, 0.0, 0.0], [0.0, j0, 0.0], [0.0, 0.0, j0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((g[i][j] - want[i][j]).abs() < 1e-6, "g[{i}][{j}] = {}", g[i][j]);
            }
        }
        let f = f_tensor(&cfg, &settings(), DEFAULT_DELTA_F).unwrap();
        assert!(f[0][0][0].abs() < 1e-5);
    }

    #[test]
    fn stencil_domain_checks() {
        let cfg = DriveConfig::default();
        assert!(matches!(g_tensor_numeric(&cfg, &settings(), 0.1), Err(Error::Domain(_))));
        assert!(matches!(f_tensor_numeric(&cfg, &settings(), 1e-5), Err(Error::Domain(_))));
    }

    #[test]
    fn stencil_across_fold_is_rejected() {
        // ω₀ = ±δ around a bias that sits exactly on the zone boundary
        let cfg = DriveConfig::default();
        let s = settings();
        let plus = h_at(&cfg, &s, Vec3::new(0.0, 0.0, 1.0 + 1e-3)).unwrap();
        let minus = h_at(&cfg, &s, Vec3::new(0.0, 0.0, 1.0 - 1e-3)).unwrap();
        assert!(matches!(check_fold(plus, minus, "g"), Err(Error::FoldAmbiguity(_))));
    }

    #[test]
    fn principal_values_examples() {
        let pv = principal_values(&crate::spinmath::MAT3_IDENTITY);
        assert_eq!(pv.kind, PrincipalKind::ThreeReal);
        assert!(pv.values.iter().all(|v| (*v - C64::new(1.0, 0.0)).norm() < 1e-14));
        assert_eq!(pv.eta0, Some(0.0));

        let j0 = bessel_j(0, 1.7).unwrap();
        let pv = principal_values(&[[1.0, 0.0, 0.0], [0.0, j0, 0.0], [0.0, 0.0, j0]]);
        assert_eq!(pv.kind, PrincipalKind::ThreeReal);
        assert!((pv.values[0].re - 1.0).abs() < 1e-14);
        assert!((pv.values[1].re - j0).abs() < 1e-14);
        assert!((pv.values[2].re - j0).abs() < 1e-14);
    }

    #[test]
    fn rotation_block_gives_conjugate_pair() {
        let (j0, psi) = (bessel_j(0, 1.2).unwrap(), 0.8f64);
        let (s, c) = psi.sin_cos();
        let g = [[1.0, 0.0, 0.0], [0.0, j0 * c, j0 * s], [0.0, -j0 * s, j0 * c]];
        let pv = principal_values(&g);
        assert_eq!(pv.kind, PrincipalKind::OneRealOnePair);
        assert!((pv.values[0] - C64::new(1.0, 0.0)).norm() < 1e-13);
        // the 2×2 block a I + b J has eigenvalues a ± i b
        assert!((pv.values[1] - C64::from_polar(j0, psi)).norm() < 1e-13);
        assert!((pv.values[2] - C64::from_polar(j0, -psi)).norm() < 1e-13);
        assert!((pv.eta0.unwrap() - psi).abs() < 1e-13);
    }

    fn drive_strategy() -> impl Strategy<Value = (DriveConfig, StaticField)> {
        (
            0.0f64..8.0,
            0.0f64..8.0,
            1u32..=3,
            -PI..PI,
            (-1.5f64..1.5, -1.5f64..1.5, -1.5f64..1.5),
        )
            .prop_map(|(ox, oy, p, phi, (x, y, z))| {
                (DriveConfig::cosine(ox, oy, p, phi), StaticField::new(x, y, z))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn generator_reconstructs_monodromy((cfg, f) in drive_strategy()) {
            let sol = solve_floquet(&cfg, &f, &settings()).unwrap();
            let rebuilt = su2_exp(sol.h.scale(2.0 * PI));
            prop_assert!((rebuilt - sol.monodromy).frobenius_norm() < 1e-8);
        }

        #[test]
        fn brillouin_bounds((cfg, f) in drive_strategy()) {
            let sol = solve_floquet(&cfg, &f, &settings()).unwrap();
            prop_assert!(sol.lambda_plus <= 0.5 && sol.lambda_plus > -0.5);
            prop_assert!(sol.lambda_minus <= 0.5 && sol.lambda_minus > -0.5);
            prop_assert!(sol.larmor <= 1.0 + 1e-12);
            prop_assert!((sol.lambda_plus + sol.lambda_minus).abs() < 1e-10);
            prop_assert!((sol.larmor - (sol.lambda_plus - sol.lambda_minus)).abs() < 1e-10);
            prop_assert!(sol.lambda.hermitian_traceless_defect() < 1e-10);
        }

        #[test]
        fn su2_monodromy_round_trip(h in (-0.45f64..0.45, -0.45f64..0.45, -0.45f64..0.45)) {
            let h = Vec3::new(h.0, h.1, h.2);
            prop_assume!(h.norm() < 0.999);
            let sol = floquet_from_monodromy(&su2_exp(h.scale(2.0 * PI))).unwrap();
            prop_assert!((sol.h - h).norm() < 1e-12);
        }
    }
}
