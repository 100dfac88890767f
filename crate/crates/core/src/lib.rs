//! Floquet analysis of a spin one-half under bichromatic harmonic dressing.
//!
//! The spin obeys `i dU/dτ = H U` with
//! `H = ½[ω₀·σ + Ω_x s_x(τ) σ_x + F_y(τ) σ_y]`, time measured in units of the
//! fundamental drive period over 2π. Over long times the evolution is a
//! precession about the effective field `h`, `U(T) = e^{−iΛT}` with
//! `Λ = ½ h·σ`.
//!
//! * [`spinmath`]: 2×2 complex algebra, SU(2) exponentials, Bessel functions.
//! * [`propagator`]: drive configurations and the adaptive propagator.
//! * [`floquet`]: monodromy diagonalization, `h`, and the numeric `g`/`f` tensors.
//! * [`perturbation`]: closed-form first- and second-order fields from Bessel series.
//! * [`dynamics`]: spin trajectories, micromotion and detection signals.
//! * [`applications`]: scans, Larmor acceleration, compensation, magic points.
//!
//! ```
//! use dualdress::floquet::solve_floquet;
//! use dualdress::propagator::{DriveConfig, IntegratorSettings, StaticField};
//! use dualdress::spinmath::bessel_j;
//!
//! // a strong x drive rescales a transverse field by J₀(Ω_x)
//! let sol = solve_floquet(
//!     &DriveConfig::single(1.5),
//!     &StaticField::new(0.0, 0.0, 1e-3),
//!     &IntegratorSettings::default(),
//! )?;
//! let j0 = bessel_j(0, 1.5)?;
//! assert!((sol.h.z - 1e-3 * j0).abs() < 1e-6);
//! # Ok::<(), dualdress::Error>(())
//! ```

pub mod applications;
pub mod dynamics;
pub mod error;
pub mod floquet;
pub mod perturbation;
pub mod propagator;
pub mod spinmath;

pub use error::{Error, Result};
