//! Quadrature rules.
//!
//! Two families are provided. Composite Gauss–Legendre panels integrate smooth
//! oscillatory integrands on bounded intervals, see [`oscillatory_r_integral`].
//! Tanh–sinh (double exponential) quadrature handles integrable endpoint
//! singularities, see [`TanhSinh`]. Its integrands receive the distances to
//! both endpoints so that factors such as `(b − x)^s` can be formed without
//! cancellation near the endpoint.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result, C64};

/// Gauss–Legendre rule of fixed order on `[−1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `order`-point rule by Newton iteration on the three-term
    /// Legendre recurrence. Nodes are returned in increasing order.
    ///
    /// # Panics
    ///
    /// Panics if `order` is zero.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss–Legendre order must be positive");
        let n = order;
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_with_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Nodes on `[−1, 1]` in increasing order.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights matching [`nodes`](Self::nodes); they sum to 2.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of nodes.
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes and weights of the composite rule on `[a, b]` split into
    /// `panels` panels of equal width.
    pub fn composite(&self, a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
        let panels = panels.max(1);
        let mut xs = Vec::with_capacity(panels * self.order());
        let mut ws = Vec::with_capacity(panels * self.order());
        for k in 0..panels {
            let lo = a + (b - a) * (k as f64) / (panels as f64);
            let hi = a + (b - a) * ((k + 1) as f64) / (panels as f64);
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                xs.push(mid + half * x);
                ws.push(half * w);
            }
        }
        (xs, ws)
    }

    /// Integrates `f` over `[a, b]` with `panels` equal panels.
    pub fn integrate<F: FnMut(f64) -> C64>(&self, a: f64, b: f64, panels: usize, mut f: F) -> C64 {
        let mut total = C64::new(0.0, 0.0);
        let panels = panels.max(1);
        for k in 0..panels {
            let lo = a + (b - a) * (k as f64) / (panels as f64);
            let hi = a + (b - a) * ((k + 1) as f64) / (panels as f64);
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            let mut panel = C64::new(0.0, 0.0);
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                panel += f(mid + half * x) * *w;
            }
            total += panel * half;
        }
        total
    }
}

/// Returns `(P_n(x), P_n'(x))`.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss–Legendre order used per panel by [`oscillatory_r_integral`].
pub const OSCILLATORY_GL_ORDER: usize = 8;

/// Default panel density per unit of `r` and unit of phase frequency.
pub const DEFAULT_PANELS_PER_PERIOD: usize = 4;

/// Result of [`oscillatory_r_integral`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillatoryIntegral {
    /// Integral computed on the refined panel set.
    pub value: C64,
    /// Integral computed on the base panel set.
    pub coarse: C64,
    /// `|value − coarse| / |value|` (absolute change when `value` is zero).
    pub relative_change: f64,
    /// Number of panels of the base rule.
    pub panels: usize,
}

/// Integrates a smooth oscillatory integrand over `[a, b]`.
///
/// The base rule uses 8-point Gauss–Legendre panels of width at most
/// `1 / (panels_per_period · max_frequency)`, where `max_frequency` bounds the
/// number of phase cycles per unit `r`. The rule is then evaluated again with
/// twice as many panels; the refined value is returned together with the
/// change between the two.
///
/// # Errors
///
/// * [`Error::Domain`] if `a ≥ b`, `panels_per_period = 0` or
///   `max_frequency ≤ 0`.
/// * [`Error::Numerical`] carrying the offending `r` if the integrand returns
///   a non-finite value.
pub fn oscillatory_r_integral<F: FnMut(f64) -> C64>(
    mut integrand: F,
    a: f64,
    b: f64,
    panels_per_period: usize,
    max_frequency: f64,
) -> Result<OscillatoryIntegral> {
    if !(a < b) {
        return Err(Error::Domain(format!("requires a < b, got [{a}, {b}]")));
    }
    if panels_per_period == 0 || !(max_frequency > 0.0) || !max_frequency.is_finite() {
        return Err(Error::Domain(
            "requires panels_per_period ≥ 1 and a positive finite max_frequency".into(),
        ));
    }
    let panels = ((b - a) * panels_per_period as f64 * max_frequency).ceil().max(1.0) as usize;
    let rule = GaussLegendre::new(OSCILLATORY_GL_ORDER);
    let mut failure: Option<f64> = None;
    let mut checked = |r: f64| -> C64 {
        let v = integrand(r);
        if !(v.re.is_finite() && v.im.is_finite()) {
            failure.get_or_insert(r);
            return C64::new(0.0, 0.0);
        }
        v
    };
    let coarse = rule.integrate(a, b, panels, &mut checked);
    let value = rule.integrate(a, b, 2 * panels, &mut checked);
    if let Some(at) = failure {
        return Err(Error::Numerical {
            at,
            message: "non-finite integrand sample".into(),
        });
    }
    let change = (value - coarse).norm();
    let scale = value.norm();
    let relative_change = if scale > 0.0 { change / scale } else { change };
    Ok(OscillatoryIntegral {
        value,
        coarse,
        relative_change,
        panels,
    })
}

/// One abscissa of the canonical tanh–sinh rule on `[−1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TanhSinhNode {
    /// Distance `1 + x` to the left endpoint.
    pub left: f64,
    /// Distance `1 − x` to the right endpoint.
    pub right: f64,
    /// Weight, including the step length of the rule it belongs to.
    pub weight: f64,
}

impl TanhSinhNode {
    /// Abscissa `x` on `[−1, 1]`, computed from the nearer endpoint.
    pub fn x(&self) -> f64 {
        if self.left <= self.right {
            self.left - 1.0
        } else {
            1.0 - self.right
        }
    }

    /// Node at parameter `t` with unit step.
    pub fn at(t: f64) -> Self {
        let u = FRAC_PI_2 * t.sinh();
        let e = (2.0 * u).exp();
        let left = 2.0 / (1.0 + 1.0 / e);
        let right = 2.0 / (1.0 + e);
        let cosh_u = 0.5 * (u.exp() + (-u).exp());
        let weight = FRAC_PI_2 * t.cosh() / (cosh_u * cosh_u);
        Self { left, right, weight }
    }
}

/// Estimate returned by [`TanhSinh::integrate`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadEstimate {
    /// Integral estimate.
    pub value: C64,
    /// Difference between the last two levels.
    pub error: f64,
    /// Estimate of `∫|f|`, used to judge cancellation.
    pub abs_sum: f64,
    /// Number of integrand evaluations.
    pub evaluations: usize,
}

impl QuadEstimate {
    /// Ratio `∫|f| / |∫f|`: digits lost to cancellation are about its log10.
    pub fn condition(&self) -> f64 {
        let v = self.value.norm();
        if v > 0.0 {
            self.abs_sum / v
        } else {
            f64::INFINITY
        }
    }
}

/// Adaptive tanh–sinh quadrature with level halving.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TanhSinh {
    /// Target relative change between successive levels.
    pub tolerance: f64,
    /// Number of halvings of the initial step 1/2.
    pub max_level: u32,
    /// Truncation of the parameter range `[−t_max, t_max]`.
    pub t_max: f64,
}

impl Default for TanhSinh {
    fn default() -> Self {
        Self {
            tolerance: 1e-13,
            max_level: 9,
            t_max: 4.0,
        }
    }
}

impl TanhSinh {
    /// Fixed rule on `[−1, 1]` with the given step, nodes ordered by `t`.
    pub fn rule(step: f64, t_max: f64) -> Vec<TanhSinhNode> {
        let k_max = (t_max / step).floor() as i64;
        (-k_max..=k_max)
            .map(|k| {
                let mut node = TanhSinhNode::at(k as f64 * step);
                node.weight *= step;
                node
            })
            .filter(|node| node.weight > 0.0 && node.left > 0.0 && node.right > 0.0)
            .collect()
    }

    /// Integrates `f(x, dl, dr)` over `[a, b]`, where `dl = x − a` and
    /// `dr = b − x` are supplied to full relative accuracy.
    ///
    /// Levels are refined until two successive estimates agree to
    /// `tolerance` relative to `|value|`, or to a few ulps of `∫|f|` when the
    /// integral cancels. If `max_level` is reached first, the last estimate is
    /// returned with its error field set accordingly.
    ///
    /// # Errors
    ///
    /// [`Error::Numerical`] if `f` returns a non-finite value.
    pub fn integrate<F>(&self, a: f64, b: f64, mut f: F) -> Result<QuadEstimate>
    where
        F: FnMut(f64, f64, f64) -> C64,
    {
        let half = 0.5 * (b - a);
        let mut evaluations = 0usize;
        let mut sample = |t: f64| -> Result<(C64, f64)> {
            let node = TanhSinhNode::at(t);
            if node.weight == 0.0 || node.left == 0.0 || node.right == 0.0 {
                return Ok((C64::new(0.0, 0.0), 0.0));
            }
            let dl = half * node.left;
            let dr = half * node.right;
            let x = if node.left <= node.right { a + dl } else { b - dr };
            evaluations += 1;
            let v = f(x, dl, dr);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::Numerical {
                    at: x,
                    message: "non-finite integrand sample in tanh–sinh rule".into(),
                });
            }
            Ok((v * node.weight, v.norm() * node.weight))
        };

        let mut step = 0.5;
        let k_max = (self.t_max / step).floor() as i64;
        let mut sum = C64::new(0.0, 0.0);
        let mut abs = 0.0;
        for k in -k_max..=k_max {
            let (v, m) = sample(k as f64 * step)?;
            sum += v;
            abs += m;
        }
        let mut value = sum * (step * half);
        let mut error = f64::INFINITY;
        for level in 1..=self.max_level {
            step *= 0.5;
            let k_max = (self.t_max / step).floor() as i64;
            let mut k = -k_max;
            if k % 2 == 0 {
                k += 1;
            }
            while k <= k_max {
                let (v, m) = sample(k as f64 * step)?;
                sum += v;
                abs += m;
                k += 2;
            }
            let next = sum * (step * half);
            error = (next - value).norm();
            value = next;
            let abs_sum = abs * step * half.abs();
            if level >= 3 && error <= (self.tolerance * value.norm()).max(64.0 * f64::EPSILON * abs_sum) {
                break;
            }
        }
        Ok(QuadEstimate {
            value,
            error,
            abs_sum: abs * step * half.abs(),
            evaluations,
        })
    }
}

/// Exponent `q` of the substitution `x = L s^{1/q}` used by
/// [`TanhSinh::integrate_algebraic`]: `Re p` when it is below one, else one.
pub fn algebraic_substitution_power(p: C64) -> f64 {
    p.re.min(1.0)
}

impl TanhSinh {
    /// `∫_0^L x^{p−1} g(x) dx` for `Re p > 0` and `g` smooth on `[0, L]`.
    ///
    /// With `q = min(Re p, 1)` the substitution `x = L s^{1/q}` maps the
    /// factor `x^{p−1} dx` to `(L^p/q) s^{p/q−1} ds`, whose modulus is
    /// bounded, so the tanh–sinh truncation near `s = 0` costs nothing even
    /// when `Re p` is close to zero.
    ///
    /// # Errors
    ///
    /// [`Error::Domain`] unless `Re p > 0` and `L > 0`; otherwise as
    /// [`integrate`](Self::integrate).
    pub fn integrate_algebraic<G>(&self, p: C64, length: f64, mut g: G) -> Result<QuadEstimate>
    where
        G: FnMut(f64) -> C64,
    {
        if !(p.re > 0.0) || !(length > 0.0) {
            return Err(Error::Domain(format!(
                "requires Re p > 0 and L > 0, got p = {p}, L = {length}"
            )));
        }
        let q = algebraic_substitution_power(p);
        let scale = (p * length.ln()).exp() / q;
        let exponent = p / q - 1.0;
        let mut est = self.integrate(0.0, 1.0, |_, s, _| {
            let x = length * s.powf(1.0 / q);
            (exponent * s.ln()).exp() * g(x)
        })?;
        est.value *= scale;
        est.abs_sum *= scale.norm();
        est.error *= scale.norm();
        Ok(est)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(8);
        assert!((rule.weights().iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for p in 0..16 {
            let exact = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
            let got: f64 = rule
                .nodes()
                .iter()
                .zip(rule.weights())
                .map(|(x, w)| w * x.powi(p))
                .sum();
            assert!((got - exact).abs() < 1e-14, "degree {p}: {got} vs {exact}");
        }
    }

    #[test]
    fn gauss_legendre_nodes_are_increasing() {
        for n in 1..20 {
            let rule = GaussLegendre::new(n);
            assert!(rule.nodes().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn oscillatory_matches_closed_form() {
        let (a, b) = (0.3, 17.9);
        let r = oscillatory_r_integral(
            |r| C64::new(0.0, -2.0 * core::f64::consts::PI * r).exp(),
            a,
            b,
            DEFAULT_PANELS_PER_PERIOD,
            4.0,
        )
        .unwrap();
        let two_pi = 2.0 * core::f64::consts::PI;
        let exact = (C64::new(0.0, -two_pi * b).exp() - C64::new(0.0, -two_pi * a).exp()) / C64::new(0.0, -two_pi);
        assert!((r.value - exact).norm() < 1e-12 * exact.norm().max(1.0));
    }

    #[test]
    fn oscillatory_constant_is_exact() {
        let r = oscillatory_r_integral(|_| C64::new(2.5, -1.0), -3.0, 5.0, 4, 1.0).unwrap();
        assert!((r.value - C64::new(20.0, -8.0)).norm() < 1e-13);
    }

    #[test]
    fn oscillatory_reports_non_finite_sample() {
        let err = oscillatory_r_integral(
            |r| {
                if r > 1.5 {
                    C64::new(f64::NAN, 0.0)
                } else {
                    C64::new(1.0, 0.0)
                }
            },
            0.0,
            2.0,
            4,
            1.0,
        )
        .unwrap_err();
        match err {
            Error::Numerical { at, .. } => assert!(at > 1.5 && at <= 2.0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn oscillatory_rejects_bad_interval() {
        assert!(matches!(
            oscillatory_r_integral(|_| C64::new(1.0, 0.0), 1.0, 1.0, 4, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn tanh_sinh_endpoint_singularity() {
        // ∫_0^1 x^{-1/2} (1-x)^{-0.3} dx = B(1/2, 0.7)
        let ts = TanhSinh::default();
        let got = ts
            .integrate(0.0, 1.0, |_, dl, dr| C64::new(dl.powf(-0.5) * dr.powf(-0.3), 0.0))
            .unwrap();
        let exact = libm::tgamma(0.5) * libm::tgamma(0.7) / libm::tgamma(1.2);
        assert!((got.value.re - exact).abs() < 1e-11 * exact, "{got:?} vs {exact}");
    }

    #[test]
    fn tanh_sinh_smooth_integrand() {
        let ts = TanhSinh::default();
        let got = ts.integrate(-2.0, 3.0, |x, _, _| C64::new(x.exp(), 0.0)).unwrap();
        let exact = 3f64.exp() - (-2f64).exp();
        assert!((got.value.re - exact).abs() < 1e-13 * exact);
        assert!(got.abs_sum >= got.value.norm() * (1.0 - 1e-12));
    }

    #[test]
    fn algebraic_rule_handles_strong_singularity() {
        // ∫_0^2 x^{−0.97} dx = 2^{0.03}/0.03
        let ts = TanhSinh::default();
        let got = ts
            .integrate_algebraic(C64::new(0.03, 0.0), 2.0, |_| C64::new(1.0, 0.0))
            .unwrap();
        let exact = 2f64.powf(0.03) / 0.03;
        assert!((got.value.re - exact).abs() < 1e-12 * exact, "{got:?}");
        // ∫_0^1 x^{−0.5+0.5i} e^{−x} dx against a series
        let p = C64::new(0.5, 0.5);
        let got = ts.integrate_algebraic(p, 1.0, |x| C64::new((-x).exp(), 0.0)).unwrap();
        let mut series = C64::new(0.0, 0.0);
        let mut fact = 1.0;
        for k in 0..30 {
            if k > 0 {
                fact *= -(k as f64);
            }
            series += (p + k as f64).inv() / fact;
        }
        assert!((got.value - series).norm() < 1e-12 * series.norm());
    }

    #[test]
    fn fixed_rule_matches_adaptive_result() {
        let rule = TanhSinh::rule(1.0 / 16.0, 4.0);
        let got: f64 = rule.iter().map(|n| n.weight * (n.x() * 2.0).cos()).sum();
        let exact = (2f64).sin();
        assert!((got - exact).abs() < 1e-14);
    }
}
