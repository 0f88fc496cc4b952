//! Exact rational power series for Bessel functions of order 0, 1, 2 and ½.
//!
//! The partial sums are computed in `BigRational` at rational arguments and
//! only rounded to `f64` at the end, so they are independent of every
//! floating-point routine in the crate.

#![allow(dead_code)]

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

/// Rational `p/q`.
pub fn rational(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

fn factorial(k: u32) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// Σ_k (−1)^k (x/2)^{2k+ν} / (k! (k+ν)!) until the terms drop below
/// `2^{−120}` past the peak, with the truncation bounded by the first
/// omitted term of the alternating tail.
pub fn bessel_j_integer(nu: u32, x: &BigRational) -> f64 {
    let half = x / BigRational::from_integer(BigInt::from(2));
    let tiny = BigRational::new(BigInt::one(), BigInt::one() << 120u32);
    let mut sum = BigRational::zero();
    let mut k = 0u32;
    loop {
        let mut term = num::pow(half.clone(), (2 * k + nu) as usize);
        term /= BigRational::from_integer(factorial(k) * factorial(k + nu));
        let past_peak = BigRational::from_integer(BigInt::from(k)) > half;
        if k % 2 == 1 {
            sum -= &term;
        } else {
            sum += &term;
        }
        if past_peak && term.abs() < tiny {
            break;
        }
        k += 1;
    }
    sum.to_f64().expect("finite")
}

/// sin x by its Taylor series in exact arithmetic.
pub fn sin_series(x: &BigRational) -> f64 {
    let tiny = BigRational::new(BigInt::one(), BigInt::one() << 120u32);
    let mut sum = BigRational::zero();
    let mut k = 0u32;
    loop {
        let term = num::pow(x.clone(), (2 * k + 1) as usize) / BigRational::from_integer(factorial(2 * k + 1));
        if k % 2 == 1 {
            sum -= &term;
        } else {
            sum += &term;
        }
        if BigRational::from_integer(BigInt::from(2 * k)) > x.abs() && term.abs() < tiny {
            break;
        }
        k += 1;
    }
    sum.to_f64().expect("finite")
}

/// J_{1/2}(x) = √(2/(πx)) sin x with the sine from [`sin_series`].
pub fn bessel_j_half(x: &BigRational) -> f64 {
    let xf = x.to_f64().expect("finite");
    (2.0 / (std::f64::consts::PI * xf)).sqrt() * sin_series(x)
}
