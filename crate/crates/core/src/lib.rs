//! Numerical building blocks for Bochner–Riesz summability experiments.
//!
//! This crate is `no_std` and only needs `alloc`. It contains the pure
//! mathematics of the toolkit:
//!
//! * [`specfun`]: complex Gamma and complex-order Bessel functions `J_ν`.
//! * [`quad`]: Gauss–Legendre panels and tanh–sinh quadrature.
//! * [`kernels`]: the radial kernels `Ω̂`, `Ω^δ`, the weight `ω(r)`, the cone
//!   multiplier `Λ̂^α` and the ring cutoff `φ̂`.
//! * [`decomp`]: the dyadic radial partition and the multiplier pieces `P̂`.
//! * [`sphere`]: cap grids on the sphere, separated subfamilies, the partition
//!   of unity, rotations and rectangle bumps.
//!
//! Grid-based operators, experiments and file formats live in the `brlab`
//! crate, which depends on this one.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod decomp;
pub mod error;
pub mod kernels;
pub mod quad;
pub mod specfun;
pub mod sphere;

pub use error::{Error, Result};

/// Double precision complex number used throughout the crate.
pub type C64 = num_complex::Complex64;

/// Shorthand constructor for a [`C64`].
#[inline]
pub const fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}
