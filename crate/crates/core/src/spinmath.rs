//! Small exact linear algebra for a single spin one-half.
//!
//! [`Mat2`] holds 2×2 complex operators (propagators, Floquet generators, kick
//! operators) and [`Vec3`] holds real 3-vectors (static fields, effective
//! fields, orientation vectors). The Pauli-vector correspondence
//! `Λ = ½ h·σ` is carried by [`Mat2::from_field`] and [`pauli_decompose`].
//!
//! Bessel functions of the first kind live here as well since every closed
//! form in the crate is a Bessel series in the strong-drive amplitude.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);
const ONE: C64 = C64::new(1.0, 0.0);
const ZERO: C64 = C64::new(0.0, 0.0);

/// Tolerance used by [`pauli_decompose`] for Hermiticity and trace checks.
pub const CONTRACT_TOL: f64 = 1e-10;

/// A real 3-vector in units of the drive angular frequency.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    /// Unit vector along axis `i` (0 = x, 1 = y, 2 = z).
    pub fn axis(i: usize) -> Self {
        let mut v = Vec3::ZERO;
        v[i] = 1.0;
        v
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Largest absolute component.
    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl IndexMut<usize> for Vec3 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        match i {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        self.scale(s)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:e}, {:e}, {:e})", self.x, self.y, self.z)
    }
}

/// Real 3×3 matrix, row-major. Used for g-tensors and rotation blocks.
pub type Mat3 = [[f64; 3]; 3];

/// Real 3×3×3 array `f[i][j][k]`, symmetric in the trailing pair for f-tensors.
pub type Tensor3 = [[[f64; 3]; 3]; 3];

pub fn mat3_mul_vec(m: &Mat3, v: Vec3) -> Vec3 {
    Vec3::new(
        m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
        m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
        m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
    )
}

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub const MAT3_IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Contraction `½ Σ_jk f[i][j][k] v_j v_k`.
pub fn tensor3_half_quadratic(f: &Tensor3, v: Vec3) -> Vec3 {
    let mut out = Vec3::ZERO;
    for i in 0..3 {
        let mut acc = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                acc += f[i][j][k] * v[j] * v[k];
            }
        }
        out[i] = 0.5 * acc;
    }
    out
}

/// A 2×2 complex matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub m: [[C64; 2]; 2],
}

impl Mat2 {
    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2 { m: [[a, b], [c, d]] }
    }

    pub const fn identity() -> Self {
        Mat2::new(ONE, ZERO, ZERO, ONE)
    }

    pub const fn zero() -> Self {
        Mat2::new(ZERO, ZERO, ZERO, ZERO)
    }

    pub fn sigma_x() -> Self {
        Mat2::new(ZERO, ONE, ONE, ZERO)
    }

    pub fn sigma_y() -> Self {
        Mat2::new(ZERO, -I, I, ZERO)
    }

    pub fn sigma_z() -> Self {
        Mat2::new(ONE, ZERO, ZERO, -ONE)
    }

    /// Pauli matrix for axis `j` (0 = x, 1 = y, 2 = z).
    pub fn sigma(j: usize) -> Self {
        match j {
            0 => Mat2::sigma_x(),
            1 => Mat2::sigma_y(),
            2 => Mat2::sigma_z(),
            _ => panic!("Pauli index {j} out of range"),
        }
    }

    /// `v·σ`.
    pub fn pauli_vector(v: Vec3) -> Self {
        Mat2::new(
            C64::new(v.z, 0.0),
            C64::new(v.x, -v.y),
            C64::new(v.x, v.y),
            C64::new(-v.z, 0.0),
        )
    }

    /// `½ h·σ`, the generator associated with an effective field `h`.
    pub fn from_field(h: Vec3) -> Self {
        Mat2::pauli_vector(h.scale(0.5))
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.m;
        Mat2::new(m[0][0].conj(), m[1][0].conj(), m[0][1].conj(), m[1][1].conj())
    }

    pub fn trace(&self) -> C64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn det(&self) -> C64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn scale(&self, s: C64) -> Self {
        let m = &self.m;
        Mat2::new(m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m
            .iter()
            .flatten()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `‖M†M − I‖_F`.
    pub fn unitarity_defect(&self) -> f64 {
        (self.adjoint() * *self - Mat2::identity()).frobenius_norm()
    }

    /// Largest of the anti-Hermitian part and trace magnitude, both Frobenius.
    pub fn hermitian_traceless_defect(&self) -> f64 {
        let anti = (*self - self.adjoint()).frobenius_norm();
        anti.max(self.trace().norm())
    }

    /// Applies the matrix to a spinor.
    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.m, &o.m);
        Mat2::new(
            a[0][0] + b[0][0],
            a[0][1] + b[0][1],
            a[1][0] + b[1][0],
            a[1][1] + b[1][1],
        )
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.m, &o.m);
        Mat2::new(
            a[0][0] - b[0][0],
            a[0][1] - b[0][1],
            a[1][0] - b[1][0],
            a[1][1] - b[1][1],
        )
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.m, &o.m);
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

/// `exp(−i v·σ/2)`: rotation of the Bloch vector by `|v|` about `v/|v|`.
pub fn su2_exp(v: Vec3) -> Mat2 {
    let angle = v.norm();
    if angle == 0.0 {
        return Mat2::identity();
    }
    let half = 0.5 * angle;
    let (s, c) = half.sin_cos();
    let n = v.scale(1.0 / angle);
    Mat2::identity().scale(C64::new(c, 0.0)) - Mat2::pauli_vector(n).scale(I * s)
}

/// `exp(−i M)` for a Hermitian traceless `M = ½ h·σ`.
pub fn exp_minus_i(m: &Mat2) -> Result<Mat2> {
    Ok(su2_exp(pauli_decompose(m)?))
}

/// Effective-field components of a Hermitian traceless matrix:
/// `h_j = trace(M σ_j)`, so that `M = ½ h·σ`.
pub fn pauli_decompose(m: &Mat2) -> Result<Vec3> {
    let defect = m.hermitian_traceless_defect();
    if !(defect <= CONTRACT_TOL) {
        return Err(Error::Contract(format!(
            "matrix is not Hermitian traceless (defect {defect:e})"
        )));
    }
    Ok(pauli_components(m))
}

/// Same as [`pauli_decompose`] without the contract check; the imaginary
/// parts of the traces are discarded.
pub fn pauli_components(m: &Mat2) -> Vec3 {
    Vec3::new(
        (*m * Mat2::sigma_x()).trace().re,
        (*m * Mat2::sigma_y()).trace().re,
        (*m * Mat2::sigma_z()).trace().re,
    )
}

/// Bloch vector `⟨σ⟩` of a normalized spinor.
pub fn bloch_vector(psi: [C64; 2]) -> Vec3 {
    let rho01 = psi[0] * psi[1].conj();
    Vec3::new(
        2.0 * rho01.re,
        -2.0 * rho01.im,
        psi[0].norm_sqr() - psi[1].norm_sqr(),
    )
}

/// Spinor whose Bloch vector is the unit vector `n`.
pub fn spinor_from_bloch(n: Vec3) -> [C64; 2] {
    let theta = n.z.clamp(-1.0, 1.0).acos();
    let phi = n.y.atan2(n.x);
    let (s, c) = (0.5 * theta).sin_cos();
    [C64::new(c, 0.0), C64::from_polar(s, phi)]
}

// ---------------------------------------------------------------------------
// Bessel functions of the first kind, integer order.

/// Largest order accepted by [`bessel_j`].
pub const BESSEL_MAX_ORDER: u32 = 10_000;

const RESCALE_ABOVE: f64 = 1e250;

/// `J_n(x)` for integer `n`.
pub fn bessel_j(n: i32, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("Bessel argument must be finite, got {x}")));
    }
    let order = n.unsigned_abs();
    if order > BESSEL_MAX_ORDER {
        return Err(Error::Domain(format!(
            "Bessel order {n} exceeds {BESSEL_MAX_ORDER}"
        )));
    }
    let table = bessel_table_unchecked(order as usize, x.abs());
    let mut value = table[order as usize];
    // J_{-n}(x) = (-1)^n J_n(x) and J_n(-x) = (-1)^n J_n(x)
    if (n < 0) != (x < 0.0) && order % 2 == 1 {
        value = -value;
    }
    Ok(value)
}

/// `[J_0(x), J_1(x), …, J_nmax(x)]`.
pub fn bessel_j_table(n_max: usize, x: f64) -> Result<Vec<f64>> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("Bessel argument must be finite, got {x}")));
    }
    if n_max > BESSEL_MAX_ORDER as usize {
        return Err(Error::Domain(format!(
            "Bessel order {n_max} exceeds {BESSEL_MAX_ORDER}"
        )));
    }
    let mut table = bessel_table_unchecked(n_max, x.abs());
    if x < 0.0 {
        for (n, v) in table.iter_mut().enumerate() {
            if n % 2 == 1 {
                *v = -*v;
            }
        }
    }
    Ok(table)
}

/// Table of `J_n(x)` for `0 ≤ n ≤ n_max`, with `x ≥ 0`.
fn bessel_table_unchecked(n_max: usize, x: f64) -> Vec<f64> {
    if x <= 1.0 {
        (0..=n_max).map(|n| bessel_series(n, x)).collect()
    } else {
        bessel_miller(n_max, x)
    }
}

/// Ascending power series; used for `|x| ≤ 1` where it converges in a
/// handful of terms.
fn bessel_series(n: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    // (x/2)^n / n!, built incrementally so that it underflows gracefully
    let mut lead = 1.0;
    for k in 1..=n {
        lead *= half / k as f64;
        if lead == 0.0 {
            return 0.0;
        }
    }
    let q = -half * half;
    let mut term = lead;
    let mut sum = lead;
    for k in 1..60 {
        term *= q / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Miller's backward recurrence normalized with `J_0 + 2 Σ J_2k = 1`.
fn bessel_miller(n_max: usize, x: f64) -> Vec<f64> {
    let top = n_max.max(x.ceil() as usize);
    let mut start = top + 20 + (40.0 * top as f64).sqrt() as usize;
    start += start % 2;

    let mut vals = vec![0.0; start + 1];
    let mut above = 0.0;
    let mut current = 1e-30;
    vals[start] = current;
    for k in (1..=start).rev() {
        let below = 2.0 * k as f64 / x * current - above;
        vals[k - 1] = below;
        above = current;
        current = below;
        if current.abs() > RESCALE_ABOVE {
            let s = 1.0 / RESCALE_ABOVE;
            for v in &mut vals[k - 1..] {
                *v *= s;
            }
            above *= s;
            current *= s;
        }
    }

    let norm = vals[0] + 2.0 * vals.iter().skip(2).step_by(2).sum::<f64>();
    vals.truncate(n_max + 1);
    for v in &mut vals {
        *v /= norm;
    }
    vals
}

/// A lookup of `J_n(x)` over `|n| ≤ n_max` for a fixed argument.
#[derive(Debug, Clone)]
pub struct BesselRow {
    x: f64,
    positive: Vec<f64>,
}

impl BesselRow {
    pub fn new(n_max: usize, x: f64) -> Result<Self> {
        Ok(BesselRow {
            x,
            positive: bessel_j_table(n_max, x)?,
        })
    }

    pub fn argument(&self) -> f64 {
        self.x
    }

    pub fn max_order(&self) -> usize {
        self.positive.len() - 1
    }

    /// `J_n(x)`; orders past the table are zero to working precision.
    pub fn get(&self, n: i64) -> f64 {
        let k = n.unsigned_abs() as usize;
        let v = self.positive.get(k).copied().unwrap_or(0.0);
        if n < 0 && k % 2 == 1 {
            -v
        } else {
            v
        }
    }
}
