//! Radial kernels and multipliers.
//!
//! * [`omega_hat`] and [`OmegaHat`]: `Ω̂(ρ) = ρ^{−ν} J_ν(2πρ)` for the
//!   standard, sharp and flat orders of [`RadialKernelKind`].
//! * [`omega_kernel`]: the Bochner–Riesz kernel
//!   `Ω^δ(u) = |u|^{−(n/2+δ)} J_{n/2+δ}(2π|u|)`.
//! * [`omega_weight`]: `ω(r) = e^{2πir} ∫_0^1 e^{−2πiτr} τ dτ`.
//! * [`lambda_hat`] and [`lambda_hat_via_integral`]: the cone multiplier in
//!   closed form and as an oscillatory `r`-integral.
//! * [`bump`] and [`cutoff_phi_hat`]: the plateau bump `ϕ` and the ring
//!   cutoff `φ̂(ξ) = ϕ(2|ξ|/3) − ϕ(3|ξ|)`.
//!
//! Complex parameters (`α`, `δ`) are passed as [`C64`].

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::domain;
use crate::quad::{GaussLegendre, TanhSinh};
use crate::specfun::{gamma_complex, recip_gamma, BesselJ, ComplexOrder};
use crate::{Error, Result, C64};

/// The three radial kernel families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelTag {
    /// Order `α − ½`.
    Standard,
    /// Order `α − 1`.
    Sharp,
    /// Order `(n−1)/2 + α − ½`.
    Flat,
}

/// A kernel family together with the ambient dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RadialKernelKind {
    /// Family.
    pub tag: KernelTag,
    /// Dimension `n ≥ 2`.
    pub n: usize,
}

impl RadialKernelKind {
    /// Validates `n ≥ 2`.
    ///
    /// # Errors
    ///
    /// [`Error::Domain`] if `n < 2`.
    pub fn new(tag: KernelTag, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(domain(format!("requires dimension n ≥ 2, got {n}")));
        }
        Ok(Self { tag, n })
    }

    /// Bessel order of the family at parameter `alpha`.
    pub fn order(&self, alpha: C64) -> C64 {
        match self.tag {
            KernelTag::Standard => alpha - 0.5,
            KernelTag::Sharp => alpha - 1.0,
            KernelTag::Flat => alpha + 0.5 * (self.n as f64 - 1.0) - 0.5,
        }
    }
}

/// Evaluator for `ρ ↦ ρ^{−ν} J_ν(2πρ)` at a fixed order `ν`.
#[derive(Clone, Debug)]
pub struct OmegaHat {
    bessel: BesselJ,
    two_pi_pow: C64,
}

impl OmegaHat {
    /// Prepares the evaluator for order `order`.
    ///
    /// # Errors
    ///
    /// [`Error::Domain`] for non-finite orders.
    pub fn new(order: C64) -> Result<Self> {
        let bessel = BesselJ::new(ComplexOrder::try_from(order)?)?;
        let two_pi_pow = (order * (2.0 * PI).ln()).exp();
        Ok(Self { bessel, two_pi_pow })
    }

    /// Evaluator for the given family at parameter `alpha`.
    ///
    /// # Errors
    ///
    /// As [`OmegaHat::new`].
    pub fn for_kind(kind: RadialKernelKind, alpha: C64) -> Result<Self> {
        Self::new(kind.order(alpha))
    }

    /// Bessel order `ν`.
    pub fn order(&self) -> C64 {
        self.bessel.order().value()
    }

    /// `ρ^{−ν} J_ν(2πρ)`, equal to `π^ν / Γ(ν+1)` at `ρ = 0`.
    ///
    /// # Errors
    ///
    /// [`Error::Domain`] if `ρ` is negative or not finite.
    #[inline]
    pub fn eval(&self, rho: f64) -> Result<C64> {
        Ok(self.two_pi_pow * self.bessel.eval_scaled(2.0 * PI * rho)?)
    }
}

/// `Ω̂(ρ) = ρ^{−ν} J_ν(2πρ)` with the order `ν` of `kind` at `alpha`.
///
/// At `ρ = 0` this is the analytic limit `π^ν / Γ(ν+1)`.
///
/// # Errors
///
/// [`Error::Domain`] if `ρ` is negative or not finite.
pub fn omega_hat(kind: RadialKernelKind, alpha: C64, rho: f64) -> Result<C64> {
    OmegaHat::for_kind(kind, alpha)?.eval(rho)
}

/// Order `n/2 + δ` of the Bochner–Riesz kernel.
pub fn omega_kernel_order(delta: C64, n: usize) -> C64 {
    delta + 0.5 * n as f64
}

/// Bochner–Riesz kernel `Ω^δ(u) = |u|^{−(n/2+δ)} J_{n/2+δ}(2π|u|)` at
/// `|u| = radius`, with the limit `π^{n/2+δ}/Γ(n/2+δ+1)` at the origin.
///
/// # Errors
///
/// [`Error::Domain`] if `radius` is negative or not finite, or `n = 0`.
pub fn omega_kernel(delta: C64, radius: f64, n: usize) -> Result<C64> {
    if n == 0 {
        return Err(domain("requires dimension n ≥ 1"));
    }
    OmegaHat::new(omega_kernel_order(delta, n))?.eval(radius)
}

/// Limit of `Ω̂` at the origin, `π^ν / Γ(ν+1)`.
pub fn omega_hat_at_zero(order: C64) -> C64 {
    (order * PI.ln()).exp() * recip_gamma(order + 1.0)
}

/// `θ`-radius below which [`omega_weight`] and [`omega_pair`] sum their
/// Taylor series, `θ = 2πr`.
const OMEGA_SERIES_RADIUS: f64 = 1.0;

/// `ω(r) = e^{2πir} ∫_0^1 e^{−2πiτr} τ dτ = i/(2πr) + (1 − e^{2πir})/(4π²r²)`.
///
/// For `|2πr| ≤ 1` the function is summed from
/// `e^{iθ} Σ_k (−iθ)^k / (k! (k+2))`, which avoids the cancellation of the
/// closed form; `ω(0) = ½`.
pub fn omega_weight(r: f64) -> C64 {
    let theta = 2.0 * PI * r;
    if theta.abs() <= OMEGA_SERIES_RADIUS {
        let mut sum = C64::new(0.0, 0.0);
        let mut power = C64::new(1.0, 0.0);
        let step = C64::new(0.0, -theta);
        let mut fact = 1.0;
        for k in 0..24 {
            if k > 0 {
                fact *= k as f64;
                power *= step;
            }
            sum += power / (fact * (k as f64 + 2.0));
        }
        C64::new(theta.cos(), theta.sin()) * sum
    } else {
        let e = C64::new(theta.cos(), theta.sin());
        C64::new(0.0, 1.0 / theta) + (C64::new(1.0, 0.0) - e) / (theta * theta)
    }
}

/// `e^{−2πir} ω(r) + e^{2πir} ω(−r) = 2 ∫_0^1 cos(2πτr) τ dτ`, which is real:
/// `2[sin θ/θ + (cos θ − 1)/θ²]` with `θ = 2πr`.
pub fn omega_pair(r: f64) -> f64 {
    let theta = 2.0 * PI * r;
    if theta.abs() <= OMEGA_SERIES_RADIUS {
        let x = theta * theta;
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 0..12 {
            if k > 0 {
                let kf = k as f64;
                term *= -x / ((2.0 * kf - 1.0) * (2.0 * kf));
            }
            sum += term / (2.0 * k as f64 + 2.0);
        }
        2.0 * sum
    } else {
        2.0 * (theta.sin() / theta + (theta.cos() - 1.0) / (theta * theta))
    }
}

fn check_strip(alpha: C64) -> Result<()> {
    if alpha.re > 0.0 && alpha.re < 1.0 && alpha.im.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("requires 0 < Re α < 1, got α = {alpha}")))
    }
}

/// The bracket `{(|ξ|²−τ²)^{−α} on |τ| < |ξ|; −sin π(α−½)(τ²−|ξ|²)^{−α} on |τ| > |ξ|}`.
fn cone_branches(alpha: C64, xi_norm: f64, tau: f64) -> Result<C64> {
    let base = tau * tau - xi_norm * xi_norm;
    if base == 0.0 || tau.abs() == xi_norm.abs() {
        return Err(Error::Singular(format!(
            "the cone multiplier is singular on |τ| = |ξ| (|ξ| = {xi_norm}, τ = {tau})"
        )));
    }
    let power = (-alpha * base.abs().ln()).exp();
    if base < 0.0 {
        Ok(power)
    } else {
        let s = ((alpha - 0.5) * PI).sin();
        Ok(-s * power)
    }
}

/// Cone multiplier `Λ̂^α(ξ, τ)` in closed form:
///
/// `π^{−α−1} Γ(α) {(τ²−|ξ|²)_−^{−α} − sin π(α−½) (τ²−|ξ|²)_+^{−α}}`.
///
/// This normalization is the one produced by
/// `∫ e^{−2πiτr} Ω̂^α(rξ) |r|^{2α−1} dr`, see [`lambda_hat_via_integral`].
/// Complex powers use the principal branch on the positive base.
///
/// # Errors
///
/// * [`Error::Domain`] unless `0 < Re α < 1`.
/// * [`Error::Singular`] on `|τ| = |ξ|`.
pub fn lambda_hat(alpha: C64, xi_norm: f64, tau: f64) -> Result<C64> {
    check_strip(alpha)?;
    let pref = (-(alpha + 1.0) * PI.ln()).exp() * gamma_complex(alpha)?;
    Ok(pref * cone_branches(alpha, xi_norm, tau)?)
}

/// Cone multiplier with the dimension-dependent prefactor
/// `π^{(n−1)/2−2α} Γ(α)` in place of `π^{−α−1} Γ(α)`. It differs from
/// [`lambda_hat`] by the constant `π^{(n+1)/2−α}`.
///
/// # Errors
///
/// As [`lambda_hat`].
pub fn lambda_hat_scaled(alpha: C64, n: usize, xi_norm: f64, tau: f64) -> Result<C64> {
    check_strip(alpha)?;
    let pref = ((0.5 * (n as f64 - 1.0) - alpha * 2.0) * PI.ln()).exp() * gamma_complex(alpha)?;
    Ok(pref * cone_branches(alpha, xi_norm, tau)?)
}

/// Result of [`lambda_hat_via_integral`].
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaIntegral {
    /// Cesàro mean at the full truncation radius `R`.
    pub value: C64,
    /// `|C(R) − C(R/2)|`, the change over the last dyadic level.
    pub tail: f64,
    /// Cesàro means `C(R/2^k)` for `k = 0, …, averaging − 1`.
    pub levels: Vec<C64>,
}

/// Panels per unit `r` of [`lambda_hat_via_integral`] before frequency scaling.
const LAMBDA_PANELS_PER_UNIT: f64 = 16.0;
const LAMBDA_HEAD: f64 = 0.25;

/// `∫_{−R}^{R} e^{−2πiτr} Ω̂^α(rξ) |r|^{2α−1} dr` with Cesàro averaging.
///
/// The integrand is even in `r`, so the integral is
/// `2 ∫_0^R cos(2πτr) r^{2α−1} Ω̂^α(r|ξ|) dr`, where `Ω̂^α` is the standard
/// kernel of order `α − ½`. It converges only conditionally, so the returned
/// value is the Cesàro (Fejér) mean `C(R) = 2 ∫_0^R (1 − r/R) … dr` of the
/// truncated integrals. The means at `R_k = R/2^k` for
/// `k < averaging` are reported as `levels`, and the change between the top
/// two levels as `tail`.
///
/// # Errors
///
/// * [`Error::Domain`] unless `0 < Re α < 1`, `1/3 < |ξ| ≤ 3`, `R > 0` and
///   `2 ≤ averaging` with `R/2^{averaging−1} > 1/4`.
/// * [`Error::Singular`] on `|τ| = |ξ|`.
pub fn lambda_hat_via_integral(
    alpha: C64,
    xi_norm: f64,
    tau: f64,
    r_max: f64,
    averaging: usize,
) -> Result<LambdaIntegral> {
    check_strip(alpha)?;
    if !(xi_norm > 1.0 / 3.0 && xi_norm <= 3.0) {
        return Err(domain(format!("requires 1/3 < |ξ| ≤ 3, got |ξ| = {xi_norm}")));
    }
    if tau.abs() == xi_norm {
        return Err(Error::Singular(format!(
            "the cone integral diverges on |τ| = |ξ| (|ξ| = {xi_norm}, τ = {tau})"
        )));
    }
    if averaging < 2 || !(r_max.is_finite()) || !(r_max / 2f64.powi(averaging as i32 - 1) > LAMBDA_HEAD) {
        return Err(domain(format!(
            "requires averaging ≥ 2 and R/2^(averaging−1) > 1/4, got R = {r_max}, averaging = {averaging}"
        )));
    }
    let omega = OmegaHat::new(alpha - 0.5)?;
    let exponent = alpha * 2.0 - 1.0;
    let two_pi_tau = 2.0 * PI * tau;
    let integrand =
        |r: f64| -> Result<C64> { Ok(omega.eval(r * xi_norm)? * (exponent * r.ln()).exp() * (two_pi_tau * r).cos()) };

    // Moments I0 = ∫ f, I1 = ∫ r f over [0, 1/4] by tanh–sinh, then over
    // Gauss–Legendre panels aligned with the radii R_k.
    let ts = TanhSinh::default();
    let mut failure = None;
    let head0 = ts.integrate_algebraic(alpha * 2.0, LAMBDA_HEAD, |r| {
        let v = omega.eval(r * xi_norm).unwrap_or_else(|e| {
            failure.get_or_insert(e);
            C64::new(0.0, 0.0)
        });
        v * (two_pi_tau * r).cos()
    })?;
    let head1 = ts.integrate_algebraic(alpha * 2.0 + 1.0, LAMBDA_HEAD, |r| {
        let v = omega.eval(r * xi_norm).unwrap_or_else(|e| {
            failure.get_or_insert(e);
            C64::new(0.0, 0.0)
        });
        v * (two_pi_tau * r).cos()
    })?;
    if let Some(e) = failure {
        return Err(e);
    }

    let radii: Vec<f64> = (0..averaging).map(|k| r_max / 2f64.powi(k as i32)).collect();
    let density = LAMBDA_PANELS_PER_UNIT.max((4.0 * (tau.abs() + xi_norm)).ceil());
    let gl = GaussLegendre::new(8);
    // Moments accumulated over [1/4, R_k], from the innermost radius outward.
    let mut i0 = alloc::vec![C64::new(0.0, 0.0); averaging];
    let mut i1 = alloc::vec![C64::new(0.0, 0.0); averaging];
    let mut acc0 = C64::new(0.0, 0.0);
    let mut acc1 = C64::new(0.0, 0.0);
    let mut lo = LAMBDA_HEAD;
    for k in (0..averaging).rev() {
        let hi = radii[k];
        let panels = ((hi - lo) * density).ceil().max(1.0) as usize;
        for p in 0..panels {
            let a = lo + (hi - lo) * p as f64 / panels as f64;
            let b = lo + (hi - lo) * (p + 1) as f64 / panels as f64;
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            let mut s0 = C64::new(0.0, 0.0);
            let mut s1 = C64::new(0.0, 0.0);
            for (x, w) in gl.nodes().iter().zip(gl.weights()) {
                let r = mid + half * x;
                let f = integrand(r)? * (w * half);
                s0 += f;
                s1 += f * r;
            }
            acc0 += s0;
            acc1 += s1;
        }
        i0[k] = acc0;
        i1[k] = acc1;
        lo = hi;
    }
    let levels: Vec<C64> = (0..averaging)
        .map(|k| {
            let r = radii[k];
            (head0.value + i0[k] - (head1.value + i1[k]) / r) * 2.0
        })
        .collect();
    Ok(LambdaIntegral {
        value: levels[0],
        tail: (levels[0] - levels[1]).norm(),
        levels,
    })
}

/// Plateau bump `ϕ`: `1` on `|t| ≤ 1`, `0` on `|t| ≥ 2`, and
/// `h(2−|t|) / (h(2−|t|) + h(|t|−1))` with `h(s) = e^{−1/s}` in between.
/// It is `C^∞` and takes values in `[0, 1]`.
pub fn bump(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        let up = (-1.0 / (2.0 - a)).exp();
        let down = (-1.0 / (a - 1.0)).exp();
        up / (up + down)
    }
}

/// Ring cutoff `φ̂(ξ) = ϕ(2|ξ|/3) − ϕ(3|ξ|)`: equal to `1` on
/// `2/3 ≤ |ξ| ≤ 3/2` and to `0` on `|ξ| ≤ 1/3` and `|ξ| ≥ 3`.
pub fn cutoff_phi_hat(xi_norm: f64) -> f64 {
    bump(2.0 * xi_norm / 3.0) - bump(3.0 * xi_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64;
    use proptest::prelude::*;

    fn rel(a: C64, b: C64) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn orders_of_each_family() {
        let a = c64(0.8, 0.1);
        let k = |tag| RadialKernelKind::new(tag, 3).unwrap().order(a);
        assert!((k(KernelTag::Standard) - c64(0.3, 0.1)).norm() < 1e-15);
        assert!((k(KernelTag::Sharp) - c64(-0.2, 0.1)).norm() < 1e-16);
        assert!((k(KernelTag::Flat) - c64(1.3, 0.1)).norm() < 1e-15);
        assert!(RadialKernelKind::new(KernelTag::Flat, 1).is_err());
    }

    #[test]
    fn omega_hat_limits() {
        let kind = RadialKernelKind::new(KernelTag::Standard, 2).unwrap();
        let a = c64(0.7, 0.2);
        let at0 = omega_hat(kind, a, 0.0).unwrap();
        let expected = ((a - 0.5) * PI.ln()).exp() / gamma_complex(a + 0.5).unwrap();
        assert!(rel(at0, expected) < 1e-14);
        let near = omega_hat(kind, a, 1e-5).unwrap();
        assert!(rel(near, expected) < 1e-8);
    }

    #[test]
    fn sharp_at_alpha_one_is_j0() {
        let kind = RadialKernelKind::new(KernelTag::Sharp, 2).unwrap();
        for &rho in &[0.1, 1.3, 7.7] {
            let v = omega_hat(kind, c64(1.0, 0.0), rho).unwrap();
            let j0 = libm::j0(2.0 * PI * rho);
            assert!((v.re - j0).abs() < 1e-12 && v.im.abs() < 1e-14);
        }
    }

    #[test]
    fn flat_norm_bound() {
        let kind = RadialKernelKind::new(KernelTag::Flat, 2).unwrap();
        let a = c64(0.6, 0.3);
        let ev = OmegaHat::for_kind(kind, a).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..2000 {
            let rho = 0.05 * k as f64;
            worst = worst.max(ev.eval(rho).unwrap().norm() * (1.0 + rho).powf(0.5 + a.re));
        }
        assert!(worst < 5.0, "{worst}");
    }

    #[test]
    fn standard_matches_integral_formula() {
        // Ω̂(ρ) = π^{α−1}/Γ(α) ∫_{−1}^{1} e^{2πiρs} (1−s²)^{α−1} ds
        let a = c64(0.75, 0.0);
        let kind = RadialKernelKind::new(KernelTag::Standard, 2).unwrap();
        for &rho in &[0.3, 2.1, 9.0] {
            let ts = TanhSinh::default();
            let est = ts
                .integrate(-1.0, 1.0, |s, dl, dr| {
                    C64::new(0.0, 2.0 * PI * rho * s).exp() * ((a - 1.0) * (dl * dr).ln()).exp()
                })
                .unwrap();
            let direct = est.value * ((a - 1.0) * PI.ln()).exp() / gamma_complex(a).unwrap();
            let v = omega_hat(kind, a, rho).unwrap();
            assert!(rel(v, direct) < 1e-8, "ρ={rho}: {v} vs {direct}");
        }
    }

    #[test]
    fn omega_kernel_limits_and_closed_form() {
        let d = c64(0.5, 0.0);
        let at0 = omega_kernel(d, 0.0, 2).unwrap();
        assert!(rel(at0, c64(PI.powf(1.5) / libm::tgamma(2.5), 0.0)) < 1e-14);
        // n = 1, δ = 1/2: order 1, Ω = J_1(2π u)/u
        for &u in &[0.2, 1.1, 6.0] {
            let v = omega_kernel(d, u, 1).unwrap();
            let exact = libm::j1(2.0 * PI * u) / u;
            assert!((v.re - exact).abs() < 1e-12 * exact.abs().max(1e-3));
        }
        let mut worst: f64 = 0.0;
        let ev = OmegaHat::new(omega_kernel_order(d, 2)).unwrap();
        for k in 0..=1000 {
            let u = 0.1 * k as f64;
            worst = worst.max(ev.eval(u).unwrap().norm() * (1.0 + u).powf(1.5 + d.re));
        }
        assert!(worst < 10.0);
    }

    #[test]
    fn omega_weight_examples() {
        assert!((omega_weight(0.0) - c64(0.5, 0.0)).norm() < 1e-16);
        assert!((omega_weight(1.0) - c64(0.0, 1.0 / (2.0 * PI))).norm() < 1e-15);
    }

    #[test]
    fn omega_weight_matches_definition() {
        let gl = GaussLegendre::new(16);
        for k in -200..=200 {
            let r = 0.5 * k as f64 + 0.013;
            let panels = (r.abs() * 2.0).ceil().max(1.0) as usize;
            let integral = gl.integrate(0.0, 1.0, panels, |t| C64::new(0.0, -2.0 * PI * t * r).exp() * t);
            let direct = C64::new(0.0, 2.0 * PI * r).exp() * integral;
            assert!((omega_weight(r) - direct).norm() < 1e-12, "r={r}");
            let pair = omega_weight(r) * C64::new(0.0, -2.0 * PI * r).exp()
                + omega_weight(-r) * C64::new(0.0, 2.0 * PI * r).exp();
            assert!((pair - c64(omega_pair(r), 0.0)).norm() < 1e-13, "r={r}");
        }
    }

    #[test]
    fn omega_weight_decay_bound() {
        let mut worst: f64 = 0.0;
        for k in -10_000..=10_000 {
            let r = k as f64 + 0.37;
            worst = worst.max(omega_weight(r).norm() * (1.0 + r.abs()));
        }
        assert!(worst < 1.0);
    }

    #[test]
    fn lambda_hat_examples() {
        let v = lambda_hat_scaled(c64(0.75, 0.0), 2, 1.0, 0.0).unwrap();
        assert!(rel(v, c64(libm::tgamma(0.75) / PI, 0.0)) < 1e-14);
        assert!(matches!(lambda_hat(c64(0.75, 0.0), 1.0, 1.0), Err(Error::Singular(_))));
        assert!(matches!(lambda_hat(c64(1.2, 0.0), 1.0, 0.5), Err(Error::Domain(_))));
        let outside = lambda_hat(c64(0.6, 0.0), 1.0, 2.0).unwrap();
        let s = (PI * 0.1).sin();
        let expected = -s * libm::tgamma(0.6) * PI.powf(-1.6) * 3f64.powf(-0.6);
        assert!((outside.re - expected).abs() < 1e-14 && outside.im == 0.0);
        let ratio =
            lambda_hat_scaled(c64(0.7, 0.2), 3, 0.9, 0.4).unwrap() / lambda_hat(c64(0.7, 0.2), 0.9, 0.4).unwrap();
        assert!(rel(ratio, (c64(2.0 - 0.7, -0.2) * PI.ln()).exp()) < 1e-13);
    }

    #[test]
    fn lambda_integral_agrees_with_closed_form() {
        let a = c64(0.7, 0.1);
        let got = lambda_hat_via_integral(a, 1.0, 0.3, 1024.0, 4).unwrap();
        let exact = lambda_hat(a, 1.0, 0.3).unwrap();
        assert!(rel(got.value, exact) < 1e-2, "{} vs {exact}", got.value);
        assert_eq!(got.levels.len(), 4);
        assert!(lambda_hat_via_integral(a, 0.2, 0.3, 1024.0, 4).is_err());
        assert!(lambda_hat_via_integral(a, 1.0, 1.0, 1024.0, 4).is_err());
    }

    #[test]
    fn lambda_integral_real_alpha_tau_zero_is_real() {
        let got = lambda_hat_via_integral(c64(0.8, 0.0), 1.2, 0.0, 256.0, 3).unwrap();
        assert!(got.value.im.abs() <= 1e-6 * got.value.norm());
    }

    #[test]
    fn cutoff_examples() {
        assert_eq!(cutoff_phi_hat(1.0), 1.0);
        assert_eq!(cutoff_phi_hat(0.2), 0.0);
        assert_eq!(cutoff_phi_hat(4.0), 0.0);
        assert_eq!(cutoff_phi_hat(3.0), 0.0);
        for k in 0..=700 {
            let x = 0.7 + 0.001 * k as f64;
            assert_eq!(cutoff_phi_hat(x), 1.0);
        }
    }

    proptest! {
        #[test]
        fn bump_in_unit_interval(t in -5.0f64..5.0) {
            let v = bump(t);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, bump(-t));
        }

        #[test]
        fn cutoff_in_unit_interval(x in 0.0f64..5.0) {
            let v = cutoff_phi_hat(x);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn lambda_hat_real_for_real_alpha(a in 0.51f64..0.99, xi in 0.34f64..3.0, tau in -4.0f64..4.0) {
            prop_assume!((tau.abs() - xi).abs() > 1e-6);
            let v = lambda_hat(c64(a, 0.0), xi, tau).unwrap();
            prop_assert!(v.im == 0.0 && v.re.is_finite());
        }
    }
}
