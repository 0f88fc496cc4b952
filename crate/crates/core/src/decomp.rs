//! Frequency-side decomposition of the multiplier.
//!
//! * [`lambda_partition`]: the radial partition `2^{j−1} = λ_0 < … < λ_M = 2^j`.
//! * [`Variant`]: the standard, sharp, flat and analytic families of pieces.
//! * [`p_hat_piece`] and [`PieceEvaluator`]: the pieces
//!   `P̂(ξ) = φ̂(ξ) ∫_{λ_{m−1} ≤ |r| < λ_m} e^{−2πir} Ω̂(rξ) ω(r) |r|^{e} dr`,
//!   the low piece over `[−1, 1]` and whole octaves.
//! * [`m_alpha`], [`key_observation_check`] and [`nonvanishing_combination`]:
//!   the closed-form multiplier identities.
//! * [`ab_coefficients`]: the interpolation exponents of the analytic family.
//!
//! Both signs of `r` are always integrated. Since `Ω̂` and `|r|^e` are even,
//! the two halves combine into one integral over `r > 0` against
//! [`omega_pair`], which is real.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::domain;
use crate::kernels::{cutoff_phi_hat, omega_pair, KernelTag, OmegaHat, RadialKernelKind};
use crate::quad::{
    algebraic_substitution_power, oscillatory_r_integral, GaussLegendre, TanhSinh, DEFAULT_PANELS_PER_PERIOD,
    OSCILLATORY_GL_ORDER,
};
use crate::{Error, Result, C64};

/// Radial partition of the octave `[2^{j−1}, 2^j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicScale {
    /// Octave index `j ≥ 1`.
    pub j: u32,
    /// Spacing exponent `σ ∈ (0, ½)`.
    pub sigma: f64,
    /// Breakpoints `λ_0 < … < λ_M`.
    pub lambdas: Vec<f64>,
}

impl DyadicScale {
    /// Number of cells `M`.
    pub fn cells(&self) -> usize {
        self.lambdas.len() - 1
    }

    /// Cell `[λ_{m−1}, λ_m)` for `m = 1, …, M`.
    ///
    /// # Errors
    ///
    /// [`Error::Domain`] if `m` is out of range.
    pub fn cell(&self, m: usize) -> Result<(f64, f64)> {
        if m == 0 || m > self.cells() {
            return Err(domain(format!("requires 1 ≤ m ≤ {}, got m = {m}", self.cells())));
        }
        Ok((self.lambdas[m - 1], self.lambdas[m]))
    }

    /// Lower spacing bound `2^{σj−1}`.
    pub fn min_gap(&self) -> f64 {
        2f64.powf(self.sigma * self.j as f64 - 1.0)
    }

    /// Upper spacing bound `2^{σj}` (exclusive).
    pub fn max_gap(&self) -> f64 {
        2f64.powf(self.sigma * self.j as f64)
    }
}

/// Partition of `[2^{j−1}, 2^j]` into `M = ⌊2^{(1−σ)j−1}⌋ + 1` cells of
/// equal length `g = 2^{j−1}/M`, which satisfies `2^{σj−1} ≤ g < 2^{σj}`.
///
/// # Errors
///
/// * [`Error::Domain`] unless `j ≥ 1` and `0 < σ < ½`.
/// * [`Error::Construction`] if a gap misses its bounds (not expected).
pub fn lambda_partition(j: u32, sigma: f64) -> Result<DyadicScale> {
    if j == 0 || j > 60 {
        return Err(domain(format!("requires 1 ≤ j ≤ 60, got j = {j}")));
    }
    if !(sigma > 0.0 && sigma < 0.5) {
        return Err(domain(format!("requires 0 < σ < 1/2, got σ = {sigma}")));
    }
    let jf = j as f64;
    let start = 2f64.powi(j as i32 - 1);
    let end = 2f64.powi(j as i32);
    let cells = (2f64.powf(jf - 1.0 - sigma * jf)).floor() as usize + 1;
    let gap = start / cells as f64;
    let mut lambdas: Vec<f64> = (0..=cells).map(|m| start + gap * m as f64).collect();
    lambdas[cells] = end;
    let scale = DyadicScale { j, sigma, lambdas };
    let (lo, hi) = (scale.min_gap(), scale.max_gap());
    for w in scale.lambdas.windows(2) {
        let g = w[1] - w[0];
        if !(g >= lo * (1.0 - 1e-14) && g < hi) {
            return Err(Error::Construction(format!(
                "gap {g} outside [{lo}, {hi}) for j = {j}, σ = {sigma}"
            )));
        }
    }
    Ok(scale)
}

/// Interpolation exponents of the analytic family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ABCoefficients {
    /// `a_1 > 0`.
    pub a1: f64,
    /// `a_2 ≥ (2n/(2n−1)) b_2`.
    pub a2: f64,
    /// `0 < b_1 < ½`.
    pub b1: f64,
    /// `(2n−1)/(4n) < b_2 < (2n−1)/(2n−2)`.
    pub b2: f64,
    /// `Re α ∈ (½, 1)`.
    pub re_alpha: f64,
    /// Dimension.
    pub n: usize,
}

impl ABCoefficients {
    /// Names the first violated constraint, if any.
    pub fn violation(&self) -> Option<String> {
        let n = self.n as f64;
        let tol = 1e-12;
        if !(self.a1 > 0.0) {
            return Some(format!("requires a1 > 0, got {}", self.a1));
        }
        if !(self.b1 > 0.0 && self.b1 < 0.5) {
            return Some(format!("requires 0 < b1 < 1/2, got {}", self.b1));
        }
        if !(self.a2 >= 2.0 * n / (2.0 * n - 1.0) * self.b2 - tol) {
            return Some(format!(
                "requires a2 ≥ (2n/(2n−1))·b2, got a2 = {}, b2 = {}",
                self.a2, self.b2
            ));
        }
        let (lo, hi) = ((2.0 * n - 1.0) / (4.0 * n), (2.0 * n - 1.0) / (2.0 * n - 2.0));
        if !(self.b2 > lo && self.b2 < hi) {
            return Some(format!("requires (2n−1)/(4n) < b2 < (2n−1)/(2n−2), got {}", self.b2));
        }
        let ra = self.a1 / n + self.a2 * (n - 1.0) / n;
        let rb = self.b1 / n + self.b2 * (n - 1.0) / n;
        if (ra - self.re_alpha).abs() > tol || (rb - self.re_alpha).abs() > tol {
            return Some(format!(
                "requires Re α = a1/n + a2(n−1)/n = b1/n + b2(n−1)/n, got {ra}, {rb} for {}",
                self.re_alpha
            ));
        }
        None
    }
}

const AB_SCAN_POINTS: usize = 20_000;

/// Exponents `(a_1, a_2, b_1, b_2)` for `Re α`.
///
/// Scans `b_1` over a grid of `(0, ½)`, sets `b_2 = (n Re α − b_1)/(n−1)`,
/// `a_2 = (2n/(2n−1)) b_2` and `a_1 = n Re α − (n−1) a_2`, locates the
/// feasible interval of `b_1`, refines its endpoints by bisection and returns
/// the coefficients at its midpoint.
///
/// # Errors
///
/// * [`Error::Domain`] unless `½ < Re α < 1` and `n ≥ 2`.
/// * [`Error::Infeasible`] naming the violated constraint if no `b_1` is
///   feasible.
pub fn ab_coefficients(re_alpha: f64, n: usize) -> Result<ABCoefficients> {
    if !(re_alpha > 0.5 && re_alpha < 1.0) {
        return Err(domain(format!("requires 1/2 < Re α < 1, got Re α = {re_alpha}")));
    }
    if n < 2 {
        return Err(domain(format!("requires n ≥ 2, got n = {n}")));
    }
    let nf = n as f64;
    let build = |b1: f64| -> ABCoefficients {
        let b2 = (nf * re_alpha - b1) / (nf - 1.0);
        let a2 = 2.0 * nf / (2.0 * nf - 1.0) * b2;
        let a1 = nf * re_alpha - (nf - 1.0) * a2;
        ABCoefficients {
            a1,
            a2,
            b1,
            b2,
            re_alpha,
            n,
        }
    };
    let feasible = |b1: f64| build(b1).violation().is_none();
    let grid = |k: usize| 0.5 * k as f64 / (AB_SCAN_POINTS + 1) as f64;
    let mut first = None;
    let mut last = None;
    let mut reason = None;
    for k in 1..=AB_SCAN_POINTS {
        let b1 = grid(k);
        match build(b1).violation() {
            None => {
                first.get_or_insert(k);
                last = Some(k);
            }
            Some(why) => {
                reason.get_or_insert(why);
            }
        }
    }
    let (Some(first), Some(last)) = (first, last) else {
        return Err(Error::Infeasible(reason.unwrap_or_else(|| "empty scan".into())));
    };
    let refine = |mut inside: f64, mut outside: f64| -> f64 {
        for _ in 0..80 {
            let mid = 0.5 * (inside + outside);
            if feasible(mid) {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        inside
    };
    let lo = refine(grid(first), grid(first - 1));
    let hi = refine(grid(last), grid(last + 1));
    let coefficients = build(0.5 * (lo + hi));
    match coefficients.violation() {
        None => Ok(coefficients),
        Some(why) => Err(Error::Infeasible(why)),
    }
}

/// Family of multiplier pieces with its complex parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Variant {
    /// Standard kernel of order `α − ½`, exponent `2α − 1`.
    Standard {
        /// `½ < Re α < 1`.
        alpha: C64,
    },
    /// Sharp kernel of order `α − 1`, exponent `2β − 1`.
    Sharp {
        /// `Re α ≥ (2n/(2n−1)) Re β`.
        alpha: C64,
        /// `(2n−1)/(4n) < Re β < (2n−1)/(2n−2)`.
        beta: C64,
    },
    /// Flat kernel of order `(n−1)/2 + α − ½`, exponent `2β − 1`.
    Flat {
        /// `Re α > 0`.
        alpha: C64,
        /// `0 < Re β < ½`.
        beta: C64,
    },
    /// Analytic family in `z`, equal to `Standard { alpha }` at `z = 1/n`.
    Analytic {
        /// Parameter whose imaginary part is carried along.
        alpha: C64,
        /// `0 ≤ Re z ≤ 1`.
        z: C64,
        /// Exponents for `Re α`.
        ab: ABCoefficients,
    },
}

impl Variant {
    /// Short tag used in metadata.
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Standard { .. } => "standard",
            Variant::Sharp { .. } => "sharp",
            Variant::Flat { .. } => "flat",
            Variant::Analytic { .. } => "analytic",
        }
    }

    /// Checks the parameter ranges of the family in dimension `n`.
    ///
    /// # Errors
    ///
    /// [`Error::Domain`] naming the violated constraint.
    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 2 {
            return Err(domain(format!("requires n ≥ 2, got n = {n}")));
        }
        let nf = n as f64;
        match *self {
            Variant::Standard { alpha } => {
                if !(alpha.re > 0.5 && alpha.re < 1.0) {
                    return Err(domain(format!("requires 1/2 < Re α < 1, got Re α = {}", alpha.re)));
                }
            }
            Variant::Sharp { alpha, beta } => {
                let (lo, hi) = ((2.0 * nf - 1.0) / (4.0 * nf), (2.0 * nf - 1.0) / (2.0 * nf - 2.0));
                if !(beta.re > lo && beta.re < hi) {
                    return Err(domain(format!(
                        "requires (2n−1)/(4n) < Re β < (2n−1)/(2n−2), got Re β = {}",
                        beta.re
                    )));
                }
                if !(alpha.re >= 2.0 * nf / (2.0 * nf - 1.0) * beta.re) {
                    return Err(domain(format!(
                        "requires Re α ≥ (2n/(2n−1))·Re β, got Re α = {}, Re β = {}",
                        alpha.re, beta.re
                    )));
                }
            }
            Variant::Flat { alpha, beta } => {
                if !(alpha.re > 0.0) {
                    return Err(domain(format!("requires Re α > 0, got Re α = {}", alpha.re)));
                }
                if !(beta.re > 0.0 && beta.re < 0.5) {
                    return Err(domain(format!("requires 0 < Re β < 1/2, got Re β = {}", beta.re)));
                }
            }
            Variant::Analytic { alpha, z, ab } => {
                if !(z.re >= 0.0 && z.re <= 1.0) {
                    return Err(domain(format!("requires 0 ≤ Re z ≤ 1, got Re z = {}", z.re)));
                }
                if ab.n != n || (ab.re_alpha - alpha.re).abs() > 1e-12 {
                    return Err(domain("requires coefficients computed for this Re α and n"));
                }
                if let Some(why) = ab.violation() {
                    return Err(domain(why));
                }
            }
        }
        for v in [self.kernel_order(n), self.exponent()] {
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(domain("parameters must be finite"));
            }
        }
        Ok(())
    }

    /// Bessel order of the family's kernel `Ω̂`.
    pub fn kernel_order(&self, n: usize) -> C64 {
        let nf = n as f64;
        match *self {
            Variant::Standard { alpha } => alpha - 0.5,
            Variant::Sharp { alpha, .. } => RadialKernelKind {
                tag: KernelTag::Sharp,
                n,
            }
            .order(alpha),
            Variant::Flat { alpha, .. } => RadialKernelKind {
                tag: KernelTag::Flat,
                n,
            }
            .order(alpha),
            Variant::Analytic { alpha, z, ab } => {
                let one_minus = C64::new(1.0, 0.0) - z;
                z * ab.a1 + one_minus * ab.a2 - 0.5 + z * (0.5 * (nf - 1.0)) - one_minus * 0.5 + C64::new(0.0, alpha.im)
            }
        }
    }

    /// Exponent `e` of the weight `|r|^e`.
    pub fn exponent(&self) -> C64 {
        match *self {
            Variant::Standard { alpha } => alpha * 2.0 - 1.0,
            Variant::Sharp { beta, .. } | Variant::Flat { beta, .. } => beta * 2.0 - 1.0,
            Variant::Analytic { alpha, z, ab } => {
                let one_minus = C64::new(1.0, 0.0) - z;
                (z * ab.b1 + one_minus * ab.b2) * 2.0 - 1.0 + C64::new(0.0, 2.0 * alpha.im)
            }
        }
    }

    /// Constant prefactor: `e^{(z−1/n)²}` for the analytic family, else `1`.
    pub fn prefactor(&self, n: usize) -> C64 {
        match *self {
            Variant::Analytic { z, .. } => {
                let d = z - 1.0 / n as f64;
                (d * d).exp()
            }
            _ => C64::new(1.0, 0.0),
        }
    }
}

/// Radial range of a piece.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Piece<'a> {
    /// The low piece `P̂_<` over `|r| ≤ 1`.
    Low,
    /// The cell `λ_{m−1} ≤ |r| < λ_m` of a scale, `m = 1, …, M`.
    Cell(&'a DyadicScale, usize),
    /// The whole octave `2^{j−1} ≤ |r| < 2^j`.
    Octave(&'a DyadicScale),
}

impl Piece<'_> {
    /// Radial interval `[a, b]` for `r > 0`.
    ///
    /// # Errors
    ///
    /// [`Error::Domain`] for an invalid cell index.
    pub fn interval(&self) -> Result<(f64, f64)> {
        match *self {
            Piece::Low => Ok((0.0, 1.0)),
            Piece::Cell(scale, m) => scale.cell(m),
            Piece::Octave(scale) => Ok((scale.lambdas[0], *scale.lambdas.last().unwrap_or(&0.0))),
        }
    }
}

/// Upper bound on `|ξ|` in the support of `φ̂`.
pub const SUPPORT_MAX: f64 = 3.0;
/// Lower bound on `|ξ|` in the support of `φ̂`.
pub const SUPPORT_MIN: f64 = 1.0 / 3.0;

fn norm(xi: &[f64]) -> f64 {
    xi.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// The piece `P̂(ξ)` of `variant` over the radial range `piece`.
///
/// Evaluates `φ̂(ξ) · c · ∫ e^{−2πir} Ω̂(rξ) ω(r) |r|^e dr` over both signs of
/// `r`, with the order, exponent `e` and constant `c` of the variant. Cells
/// and octaves use [`oscillatory_r_integral`] with the default density; the
/// low piece uses tanh–sinh quadrature adapted to the factor `r^e` at the
/// origin. The dimension is `xi.len()`.
///
/// # Errors
///
/// [`Error::Domain`] for out-of-range parameters or `xi.len() < 2`.
pub fn p_hat_piece(variant: &Variant, piece: Piece<'_>, xi: &[f64]) -> Result<C64> {
    let n = xi.len();
    variant.validate(n)?;
    let (a, b) = piece.interval()?;
    let rho = norm(xi);
    let cut = cutoff_phi_hat(rho);
    if cut == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let omega = OmegaHat::new(variant.kernel_order(n))?;
    let e = variant.exponent();
    let integral = match piece {
        Piece::Low => low_integral(&omega, e, rho)?,
        _ => {
            let mut failure = None;
            let est = oscillatory_r_integral(
                |r| match omega.eval(r * rho) {
                    Ok(v) => v * (e * r.ln()).exp() * omega_pair(r),
                    Err(err) => {
                        failure.get_or_insert(err);
                        C64::new(0.0, 0.0)
                    }
                },
                a,
                b,
                DEFAULT_PANELS_PER_PERIOD,
                1.0 + rho,
            )?;
            if let Some(err) = failure {
                return Err(err);
            }
            est.value
        }
    };
    Ok(integral * variant.prefactor(n) * cut)
}

fn low_integral(omega: &OmegaHat, e: C64, rho: f64) -> Result<C64> {
    let ts = TanhSinh::default();
    let mut failure = None;
    let est = ts.integrate_algebraic(e + 1.0, 1.0, |r| match omega.eval(r * rho) {
        Ok(v) => v * omega_pair(r),
        Err(err) => {
            failure.get_or_insert(err);
            C64::new(0.0, 0.0)
        }
    })?;
    if let Some(err) = failure {
        return Err(err);
    }
    Ok(est.value)
}

/// [`p_hat_piece`] multiplied by a partition-of-unity weight `φ^ν_j(ξ)`.
///
/// # Errors
///
/// As [`p_hat_piece`].
pub fn p_hat_capped<W: Fn(&[f64]) -> f64>(
    variant: &Variant,
    piece: Piece<'_>,
    cap_weight: W,
    xi: &[f64],
) -> Result<C64> {
    let w = cap_weight(xi);
    if w == 0.0 {
        variant.validate(xi.len())?;
        return Ok(C64::new(0.0, 0.0));
    }
    Ok(p_hat_piece(variant, piece, xi)? * w)
}

/// Step of the fixed tanh–sinh rule used by [`PieceEvaluator`] on the low
/// piece.
const LOW_RULE_STEP: f64 = 1.0 / 32.0;

/// Precomputed quadrature for one piece, evaluated at many `|ξ|`.
///
/// The nodes `r_i` and weights `w_i r_i^e (e^{−2πir_i}ω(r_i) + e^{2πir_i}ω(−r_i))`
/// are fixed at construction, so `P̂(ξ) = φ̂(ξ) c Σ_i F_i Ω̂(r_i |ξ|)`. The rule
/// resolves `|ξ| ≤ 3`, the support of `φ̂`, with the panel density of
/// [`oscillatory_r_integral`] at its refined level.
#[derive(Clone, Debug)]
pub struct PieceEvaluator {
    omega: OmegaHat,
    nodes: Vec<f64>,
    weights: Vec<C64>,
    prefactor: C64,
}

impl PieceEvaluator {
    /// Builds the rule for `variant` in dimension `n` over `piece`.
    ///
    /// # Errors
    ///
    /// [`Error::Domain`] for out-of-range parameters.
    pub fn new(variant: &Variant, n: usize, piece: Piece<'_>) -> Result<Self> {
        variant.validate(n)?;
        let (a, b) = piece.interval()?;
        let e = variant.exponent();
        let omega = OmegaHat::new(variant.kernel_order(n))?;
        let (nodes, weights) = match piece {
            Piece::Low => {
                let p = e + 1.0;
                let q = algebraic_substitution_power(p);
                let exponent = p / q - 1.0;
                TanhSinh::rule(LOW_RULE_STEP, 4.0)
                    .into_iter()
                    .map(|node| {
                        let s = 0.5 * node.left;
                        let r = s.powf(1.0 / q);
                        let w = (exponent * s.ln()).exp() * (0.5 * node.weight / q) * omega_pair(r);
                        (r, w)
                    })
                    .unzip()
            }
            _ => {
                let gl = GaussLegendre::new(OSCILLATORY_GL_ORDER);
                let base = ((b - a) * DEFAULT_PANELS_PER_PERIOD as f64 * (1.0 + SUPPORT_MAX))
                    .ceil()
                    .max(1.0) as usize;
                let (rs, ws) = gl.composite(a, b, 2 * base);
                rs.iter()
                    .zip(&ws)
                    .map(|(&r, &w)| (r, (e * r.ln()).exp() * (w * omega_pair(r))))
                    .unzip()
            }
        };
        Ok(Self {
            omega,
            nodes,
            weights,
            prefactor: variant.prefactor(n),
        })
    }

    /// Number of quadrature nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Whether the rule is empty (never, for a valid piece).
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The `r`-integral without the cutoff `φ̂`, at `|ξ| = xi_norm`.
    ///
    /// # Errors
    ///
    /// [`Error::Domain`] for negative or non-finite `xi_norm`.
    pub fn integral(&self, xi_norm: f64) -> Result<C64> {
        let mut acc = C64::new(0.0, 0.0);
        for (r, w) in self.nodes.iter().zip(&self.weights) {
            acc += *w * self.omega.eval(r * xi_norm)?;
        }
        Ok(acc * self.prefactor)
    }

    /// `P̂(ξ)` at `|ξ| = xi_norm`, zero outside the support of `φ̂`.
    ///
    /// # Errors
    ///
    /// As [`integral`](Self::integral).
    pub fn radial(&self, xi_norm: f64) -> Result<C64> {
        let cut = cutoff_phi_hat(xi_norm);
        if cut == 0.0 {
            return Ok(C64::new(0.0, 0.0));
        }
        Ok(self.integral(xi_norm)? * cut)
    }
}

/// Which of the closed-form multipliers [`m_alpha`] evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MWhich {
    /// `m_+ = ½(1−α)^{−1} φ̂ (1−|ξ|²)_+^{1−α}`.
    Plus,
    /// `m_− = ½(1−α)^{−1} φ̂ [|ξ|^{2(1−α)} − (1−|ξ|²)_−^{1−α}]`.
    Minus,
    /// `m = φ̂ {−(1−|ξ|²)_−^{1−α} − sin π(α−½) (1−|ξ|²)_+^{1−α}}`.
    Combined,
}

/// `x_+^λ` for real `x`, principal branch.
fn plus_power(x: f64, lambda: C64) -> C64 {
    if x > 0.0 {
        (lambda * x.ln()).exp()
    } else {
        C64::new(0.0, 0.0)
    }
}

/// Closed forms of `m^α_+`, `m^α_−` and `m^α`. Here `x_−^λ = |x|^λ` for
/// `x < 0` and `0` otherwise; powers of positive bases use the principal
/// branch.
///
/// # Errors
///
/// * [`Error::Pole`] at `α = 1`.
/// * [`Error::Domain`] unless `0 < Re α < 1`.
pub fn m_alpha(which: MWhich, alpha: C64, xi: &[f64]) -> Result<C64> {
    if alpha == C64::new(1.0, 0.0) {
        return Err(Error::Pole("(1−α)^{−1} has a pole at α = 1".into()));
    }
    if !(alpha.re > 0.0 && alpha.re < 1.0) {
        return Err(domain(format!("requires 0 < Re α < 1, got α = {alpha}")));
    }
    let rho = norm(xi);
    let cut = cutoff_phi_hat(rho);
    if cut == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let lambda = C64::new(1.0, 0.0) - alpha;
    let base = 1.0 - rho * rho;
    let plus = plus_power(base, lambda);
    let minus = plus_power(-base, lambda);
    let half_inv = lambda.inv() * 0.5;
    let value = match which {
        MWhich::Plus => half_inv * plus,
        MWhich::Minus => half_inv * ((lambda * 2.0 * rho.ln()).exp() - minus),
        MWhich::Combined => -minus - ((alpha - 0.5) * PI).sin() * plus,
    };
    Ok(value * cut)
}

/// `sin²(πα/2) − sin π(α−½)`, the coefficient that must not vanish on the
/// strip `0 < Re α < 1`. It equals `cos²(πα/2)`.
pub fn nonvanishing_combination(alpha: C64) -> C64 {
    let s = (alpha * (PI / 2.0)).sin();
    s * s - ((alpha - 0.5) * PI).sin()
}

/// Both sides of `(1−|ξ|²)_+^δ = 2δ ∫_0^1 (τ²−|ξ|²)_+^{−(1−δ)} τ dτ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeyObservation {
    /// Closed form `(1−|ξ|²)_+^δ`.
    pub lhs: f64,
    /// Quadrature of the `τ`-integral.
    pub rhs: f64,
    /// `|lhs − rhs|`.
    pub residual: f64,
}

/// Checks the identity `(1−|ξ|²)_+^δ = 2δ ∫_0^1 (τ²−|ξ|²)_+^{δ−1} τ dτ`.
///
/// With `t = τ − |ξ|` the integrand becomes
/// `t^{δ−1} (2|ξ| + t)^{δ−1} (|ξ| + t)`, whose endpoint power is handled by
/// [`TanhSinh::integrate_algebraic`].
///
/// # Errors
///
/// [`Error::Domain`] unless `0 < δ < 1` and `|ξ| ≥ 0`.
pub fn key_observation_check(delta: f64, xi_norm: f64) -> Result<KeyObservation> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain(format!("requires 0 < δ < 1, got δ = {delta}")));
    }
    if !(xi_norm >= 0.0) || !xi_norm.is_finite() {
        return Err(domain(format!("requires |ξ| ≥ 0, got {xi_norm}")));
    }
    let base = 1.0 - xi_norm * xi_norm;
    let lhs = if base > 0.0 { base.powf(delta) } else { 0.0 };
    let ts = TanhSinh::default();
    let rhs = if xi_norm >= 1.0 {
        0.0
    } else if xi_norm == 0.0 {
        2.0 * delta
            * ts.integrate_algebraic(C64::new(2.0 * delta, 0.0), 1.0, |_| C64::new(1.0, 0.0))?
                .value
                .re
    } else {
        let est = ts.integrate_algebraic(C64::new(delta, 0.0), 1.0 - xi_norm, |t| {
            C64::new((2.0 * xi_norm + t).powf(delta - 1.0) * (xi_norm + t), 0.0)
        })?;
        2.0 * delta * est.value.re
    };
    Ok(KeyObservation {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64;
    use alloc::string::ToString;
    use proptest::prelude::*;

    #[test]
    fn partition_example() {
        let s = lambda_partition(4, 0.25).unwrap();
        assert_eq!(s.lambdas[0], 8.0);
        assert_eq!(*s.lambdas.last().unwrap(), 16.0);
        for w in s.lambdas.windows(2) {
            let g = w[1] - w[0];
            assert!(g >= s.min_gap() && g < s.max_gap());
        }
        assert!(lambda_partition(0, 0.25).is_err());
        assert!(lambda_partition(4, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn partition_invariants(j in 1u32..=20, sigma in 0.01f64..0.49) {
            let s = lambda_partition(j, sigma).unwrap();
            prop_assert_eq!(s.lambdas[0], 2f64.powi(j as i32 - 1));
            prop_assert_eq!(*s.lambdas.last().unwrap(), 2f64.powi(j as i32));
            for w in s.lambdas.windows(2) {
                let g = w[1] - w[0];
                prop_assert!(g >= s.min_gap() * (1.0 - 1e-14) && g < s.max_gap());
            }
            prop_assert!(s.cells() as f64 <= 2.0 * 2f64.powf((1.0 - sigma) * j as f64));
        }

        #[test]
        fn ab_invariants(re in 0.501f64..0.999, n in 2usize..5) {
            let ab = ab_coefficients(re, n).unwrap();
            prop_assert!(ab.violation().is_none());
        }

        #[test]
        fn nonvanishing_is_cos_squared(a in 0.01f64..0.99, b in -2.0f64..2.0) {
            let alpha = c64(a, b);
            let c = (alpha * (PI / 2.0)).cos();
            prop_assert!((nonvanishing_combination(alpha) - c * c).norm() < 1e-12 * (1.0 + (c * c).norm()));
        }
    }

    #[test]
    fn ab_example_and_limit() {
        let ab = ab_coefficients(0.75, 2).unwrap();
        assert!((ab.b1 - 7.0 / 16.0).abs() < 1e-12);
        assert!((ab.a1 / 2.0 + ab.a2 / 2.0 - 0.75).abs() < 1e-12);
        assert!((ab.b1 / 2.0 + ab.b2 / 2.0 - 0.75).abs() < 1e-12);
        let mut prev_b2 = 0.0;
        let mut prev_a1 = f64::INFINITY;
        for k in 1..=9 {
            let re = 0.9 + 0.0099 * k as f64;
            let ab = ab_coefficients(re, 3).unwrap();
            assert!(ab.b2 > prev_b2 && ab.a1 < prev_a1);
            prev_b2 = ab.b2;
            prev_a1 = ab.a1;
        }
        assert!((prev_b2 - 5.0 / 4.0).abs() < 0.02 && prev_a1 < 0.02);
        assert!(matches!(ab_coefficients(1.0, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn support_cutoff_zeroes_pieces() {
        let scale = lambda_partition(4, 0.1).unwrap();
        let alpha = c64(0.8, 0.0);
        let ab = ab_coefficients(0.8, 2).unwrap();
        let variants = [
            Variant::Standard { alpha },
            Variant::Sharp {
                alpha,
                beta: c64(0.4875, 0.0),
            },
            Variant::Flat {
                alpha,
                beta: c64(0.25, 0.0),
            },
            Variant::Analytic {
                alpha,
                z: c64(0.3, 0.2),
                ab,
            },
        ];
        for v in &variants {
            assert_eq!(
                p_hat_piece(v, Piece::Cell(&scale, 1), &[0.2, 0.0]).unwrap(),
                C64::new(0.0, 0.0)
            );
            assert!(p_hat_piece(v, Piece::Cell(&scale, 1), &[0.9, 0.1]).unwrap().norm() > 0.0);
        }
    }

    #[test]
    fn validation_messages_name_constraints() {
        let err = Variant::Standard { alpha: c64(0.4, 0.0) }.validate(2).unwrap_err();
        assert!(err.to_string().contains("requires 1/2 < Re α < 1"));
        assert!(Variant::Sharp {
            alpha: c64(0.6, 0.0),
            beta: c64(0.4875, 0.0)
        }
        .validate(2)
        .is_err());
        assert!(Variant::Flat {
            alpha: c64(0.6, 0.0),
            beta: c64(0.5, 0.0)
        }
        .validate(2)
        .is_err());
    }

    #[test]
    fn octave_is_sum_of_cells() {
        let scale = lambda_partition(5, 0.1).unwrap();
        let v = Variant::Standard { alpha: c64(0.7, 0.2) };
        for &x in &[0.5, 0.97, 1.0, 1.8] {
            let xi = [x * 0.6, x * 0.8];
            let whole = p_hat_piece(&v, Piece::Octave(&scale), &xi).unwrap();
            let parts: C64 = (1..=scale.cells())
                .map(|m| p_hat_piece(&v, Piece::Cell(&scale, m), &xi).unwrap())
                .sum();
            assert!((whole - parts).norm() <= 1e-12 * whole.norm(), "{whole} vs {parts}");
        }
    }

    #[test]
    fn analytic_at_one_over_n_is_standard() {
        let scale = lambda_partition(5, 0.1).unwrap();
        let alpha = c64(0.75, 0.3);
        let ab = ab_coefficients(0.75, 2).unwrap();
        let a = Variant::Analytic {
            alpha,
            z: c64(0.5, 0.0),
            ab,
        };
        let s = Variant::Standard { alpha };
        assert!((a.kernel_order(2) - s.kernel_order(2)).norm() < 1e-12);
        assert!((a.exponent() - s.exponent()).norm() < 1e-12);
        for &x in &[0.8, 1.0, 1.3] {
            let xi = [x, 0.0];
            let pa = p_hat_piece(&a, Piece::Cell(&scale, 2), &xi).unwrap();
            let ps = p_hat_piece(&s, Piece::Cell(&scale, 2), &xi).unwrap();
            assert!((pa - ps).norm() <= 1e-10 * ps.norm());
        }
    }

    #[test]
    fn evaluator_matches_direct_piece() {
        let scale = lambda_partition(6, 0.1).unwrap();
        let v = Variant::Sharp {
            alpha: c64(0.8, 0.0),
            beta: c64(0.4875, 0.0),
        };
        let cell = PieceEvaluator::new(&v, 2, Piece::Cell(&scale, 3)).unwrap();
        let low = PieceEvaluator::new(&v, 2, Piece::Low).unwrap();
        for &x in &[0.4, 0.99, 1.0, 2.2] {
            let direct = p_hat_piece(&v, Piece::Cell(&scale, 3), &[0.0, x]).unwrap();
            assert!((cell.radial(x).unwrap() - direct).norm() <= 1e-11 * direct.norm());
            let direct = p_hat_piece(&v, Piece::Low, &[0.0, x]).unwrap();
            assert!((low.radial(x).unwrap() - direct).norm() <= 1e-11 * direct.norm());
        }
    }

    #[test]
    fn low_piece_matches_gauss_legendre_oracle() {
        // With β = 1/2 the weight |r|^{2β−1} is 1 and plain Gauss–Legendre
        // panels on [0, 1] are an independent oracle.
        let v = Variant::Flat {
            alpha: c64(0.6, 0.0),
            beta: c64(0.5 - 1e-13, 0.0),
        };
        let omega = OmegaHat::new(v.kernel_order(2)).unwrap();
        let gl = GaussLegendre::new(20);
        let x = 1.1;
        let oracle = gl.integrate(0.0, 1.0, 8, |r| omega.eval(r * x).unwrap() * omega_pair(r));
        let got = p_hat_piece(&v, Piece::Low, &[x, 0.0]).unwrap();
        assert!((got - oracle).norm() < 1e-10 * oracle.norm());
    }

    #[test]
    fn m_plus_example_and_support() {
        let v = m_alpha(MWhich::Plus, c64(0.5, 0.0), &[0.8, 0.0]).unwrap();
        assert!((v - c64(0.6, 0.0)).norm() < 1e-14);
        assert_eq!(
            m_alpha(MWhich::Plus, c64(0.5, 0.0), &[1.2, 0.0]).unwrap(),
            C64::new(0.0, 0.0)
        );
        assert!(matches!(
            m_alpha(MWhich::Plus, c64(1.0, 0.0), &[0.8]),
            Err(Error::Pole(_))
        ));
    }

    #[test]
    fn m_minus_matches_tau_integral() {
        let ts = TanhSinh::default();
        let alpha = c64(0.6, 0.2);
        for &x in &[0.7f64, 0.9, 1.2, 1.45] {
            // ∫_0^{min(|ξ|,1)} (|ξ|²−τ²)^{−α} τ dτ
            let top = x.min(1.0);
            let est = ts
                .integrate(0.0, top, |tau, _, dr| {
                    let base = if x <= 1.0 {
                        dr * (2.0 * x - dr)
                    } else {
                        x * x - tau * tau
                    };
                    (-alpha * base.ln()).exp() * tau
                })
                .unwrap();
            let got = m_alpha(MWhich::Minus, alpha, &[x]).unwrap();
            assert!((got - est.value).norm() < 1e-9 * est.value.norm(), "x={x}");
        }
    }

    #[test]
    fn combined_identity_relation() {
        // m = 2(1−α)(m_− − sin π(α−½) m_+) − φ̂ |ξ|^{2(1−α)}
        let alpha = c64(0.7, -0.4);
        for &x in &[0.7, 0.95, 1.2] {
            let xi = [x];
            let mp = m_alpha(MWhich::Plus, alpha, &xi).unwrap();
            let mm = m_alpha(MWhich::Minus, alpha, &xi).unwrap();
            let m = m_alpha(MWhich::Combined, alpha, &xi).unwrap();
            let l = C64::new(1.0, 0.0) - alpha;
            let s = ((alpha - 0.5) * PI).sin();
            let rebuilt = (mm - s * mp) * l * 2.0 - (l * 2.0 * x.ln()).exp() * cutoff_phi_hat(x);
            assert!((rebuilt - m).norm() < 1e-13, "x={x}");
        }
    }

    #[test]
    fn key_observation_examples() {
        let k = key_observation_check(0.3, 1.0).unwrap();
        assert_eq!((k.lhs, k.rhs), (0.0, 0.0));
        let k = key_observation_check(0.3, 0.0).unwrap();
        assert_eq!(k.lhs, 1.0);
        assert!(k.residual < 1e-12);
        for &d in &[0.1, 0.3, 0.49] {
            for &x in &[0.001, 0.3, 0.7, 0.99] {
                let k = key_observation_check(d, x).unwrap();
                assert!(k.residual <= 1e-8, "δ={d} |ξ|={x}: {k:?}");
            }
        }
    }
}
