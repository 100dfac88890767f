//! Every chapter of the guide is included as module documentation so that
//! `cargo test --doc -p dualdress-booktest` runs its listings.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/drives.md")]
pub mod drives {}
#[doc = include_str!("../../../book/src/floquet.md")]
pub mod floquet {}
#[doc = include_str!("../../../book/src/perturbation.md")]
pub mod perturbation {}
#[doc = include_str!("../../../book/src/dynamics.md")]
pub mod dynamics {}
#[doc = include_str!("../../../book/src/applications.md")]
pub mod applications {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../book/src/validation.md")]
pub mod validation {}
