//! Grid operators: multiplier application, the Bochner–Riesz means by two
//! routes, the operator `I^α` and the spatial kernels `P`, `U`, `V`.

use std::collections::BTreeMap;

use brlab_core::decomp::{lambda_partition, DyadicScale, Piece, PieceEvaluator, Variant, SUPPORT_MAX, SUPPORT_MIN};
use brlab_core::kernels::{cutoff_phi_hat, omega_kernel};
use brlab_core::specfun::gamma_complex;
use brlab_core::sphere::{BumpRectangle, SubsetFamily};
use brlab_core::C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, LabError, LabResult};
use crate::grid::{
    fft_nd, forward_transform, inverse_transform, ordered_sum, Direction, GridSpec, NeumaierC64, SampledFunction,
};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Provenance of a multiplier or kernel: variant tag and scalar parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    /// Variant or operator name.
    pub variant: String,
    /// Scalar parameters in key order (`alpha_re`, `j`, `m`, …).
    pub params: BTreeMap<String, f64>,
}

impl FieldMeta {
    /// Metadata of a variant, with `j`, `m` and `ℓ` when given.
    pub fn for_variant(variant: &Variant, j: Option<u32>, m: Option<usize>, ell: Option<usize>) -> Self {
        let mut params = BTreeMap::new();
        let mut put = |key: &str, z: C64| {
            params.insert(format!("{key}_re"), z.re);
            params.insert(format!("{key}_im"), z.im);
        };
        match *variant {
            Variant::Standard { alpha } => put("alpha", alpha),
            Variant::Sharp { alpha, beta } | Variant::Flat { alpha, beta } => {
                put("alpha", alpha);
                put("beta", beta);
            }
            Variant::Analytic { alpha, z, .. } => {
                put("alpha", alpha);
                put("z", z);
            }
        }
        if let Some(j) = j {
            params.insert("j".into(), j as f64);
        }
        if let Some(m) = m {
            params.insert("m".into(), m as f64);
        }
        if let Some(ell) = ell {
            params.insert("ell".into(), ell as f64);
        }
        Self {
            variant: variant.name().into(),
            params,
        }
    }
}

/// Samples of a multiplier on the discrete frequency grid, in FFT order.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierField {
    /// Grid whose frequencies are sampled.
    pub spec: GridSpec,
    /// `m(ξ_q)` in FFT order.
    pub values: Vec<C64>,
    /// Provenance.
    pub meta: FieldMeta,
}

impl MultiplierField {
    /// Samples `multiplier` at every frequency of `spec`, in parallel.
    pub fn from_fn<F: Fn(&[f64]) -> C64 + Sync>(spec: GridSpec, meta: FieldMeta, multiplier: F) -> Self {
        let values = (0..spec.len())
            .into_par_iter()
            .map(|idx| {
                let mut xi = [0.0; 3];
                spec.frequency(idx, &mut xi);
                multiplier(&xi[..spec.n])
            })
            .collect();
        Self { spec, values, meta }
    }

    /// Samples the radial multiplier `table(|ξ|) φ̂(ξ)`.
    pub fn from_radial(spec: GridSpec, meta: FieldMeta, table: &RadialTable) -> LabResult<Self> {
        check_support_resolved(&spec)?;
        Ok(Self::from_fn(spec, meta, |xi| radial_value(table, norm(xi))))
    }

    /// Largest `|m(ξ_q)|` over frequencies with `|ξ| ≤ 1/3` or `|ξ| > 3`.
    pub fn max_outside_support(&self) -> f64 {
        let spec = self.spec;
        (0..spec.len())
            .filter_map(|idx| {
                let mut xi = [0.0; 3];
                spec.frequency(idx, &mut xi);
                let r = norm(&xi[..spec.n]);
                (r <= SUPPORT_MIN || r > SUPPORT_MAX).then(|| self.values[idx].norm())
            })
            .fold(0.0, f64::max)
    }
}

/// A spatial kernel with its provenance and cached norms.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialKernel {
    /// Samples.
    pub field: SampledFunction,
    /// Provenance, including the role (`P`, `U`, `V`, `P_nu`).
    pub meta: FieldMeta,
    /// `h^n Σ |K|`.
    pub l1: f64,
    /// `max |K|`.
    pub sup: f64,
}

impl SpatialKernel {
    /// Wraps samples and computes the norms.
    pub fn new(field: SampledFunction, meta: FieldMeta) -> Self {
        let l1 = field.l1_norm();
        let sup = field.sup_norm();
        Self { field, meta, l1, sup }
    }

    /// Kernel of a multiplier field, `K(x_k) = Δξ^n IFFT((−1)^{|q|} m)`.
    pub fn from_multiplier(field: &MultiplierField) -> Self {
        Self::new(inverse_transform(field.spec, field.values.clone()), field.meta.clone())
    }

    /// `max |Im K| / max |K|`.
    pub fn imaginary_ratio(&self) -> f64 {
        if self.sup == 0.0 {
            0.0
        } else {
            self.field.max_imag() / self.sup
        }
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_support_resolved(spec: &GridSpec) -> LabResult<()> {
    if spec.nyquist() < SUPPORT_MAX {
        return Err(config(format!(
            "requires N/(4X) ≥ 3 to resolve the support |ξ| ≤ 3, got N/(4X) = {}",
            spec.nyquist()
        )));
    }
    Ok(())
}

/// Applies `multiplier(ξ)` on the frequency grid of `f`.
///
/// The forward and inverse normalizations combine to `N^{−n}`, so the
/// constant multiplier `1` reproduces `f`.
pub fn apply_multiplier<F: Fn(&[f64]) -> C64 + Sync>(f: &SampledFunction, multiplier: F) -> SampledFunction {
    let spec = f.spec;
    let mut data = f.values.clone();
    fft_nd(&mut data, &spec, Direction::Forward);
    let scale = 1.0 / spec.len() as f64;
    data.par_iter_mut().enumerate().for_each(|(idx, v)| {
        let mut xi = [0.0; 3];
        spec.frequency(idx, &mut xi);
        *v *= multiplier(&xi[..spec.n]) * scale;
    });
    fft_nd(&mut data, &spec, Direction::Inverse);
    SampledFunction { spec, values: data }
}

/// Applies a sampled multiplier field on a matching grid.
///
/// # Errors
///
/// [`LabError::Config`] if the grids differ.
pub fn apply_field(f: &SampledFunction, field: &MultiplierField) -> LabResult<SampledFunction> {
    if f.spec != field.spec {
        return Err(config("requires the multiplier grid to match the function grid"));
    }
    let spec = f.spec;
    let mut data = f.values.clone();
    fft_nd(&mut data, &spec, Direction::Forward);
    let scale = 1.0 / spec.len() as f64;
    data.par_iter_mut()
        .zip(&field.values)
        .for_each(|(v, m)| *v *= m * scale);
    fft_nd(&mut data, &spec, Direction::Inverse);
    Ok(SampledFunction { spec, values: data })
}

fn check_delta(delta: C64) -> LabResult<()> {
    if !(delta.re >= 0.0 && delta.is_finite()) {
        return Err(LabError::Core(brlab_core::Error::Domain(format!(
            "requires Re δ ≥ 0, got δ = {delta}"
        ))));
    }
    Ok(())
}

/// Bochner–Riesz multiplier `(1 − |ξ|²)_+^δ`; for `δ = 0` the indicator of
/// the open unit ball.
pub fn bochner_riesz_multiplier(delta: C64, xi: &[f64]) -> C64 {
    let t = 1.0 - xi.iter().map(|v| v * v).sum::<f64>();
    if t <= 0.0 {
        ZERO
    } else if delta == ZERO {
        C64::new(1.0, 0.0)
    } else {
        (delta * t.ln()).exp()
    }
}

/// `S^δ f` by the multiplier route.
///
/// # Errors
///
/// Domain error unless `Re δ ≥ 0`.
pub fn bochner_riesz_apply(delta: C64, f: &SampledFunction) -> LabResult<SampledFunction> {
    check_delta(delta)?;
    Ok(apply_multiplier(f, |xi| bochner_riesz_multiplier(delta, xi)))
}

/// Bochner–Riesz kernel `π^{−δ} Γ(1+δ) |x|^{−(n/2+δ)} J_{n/2+δ}(2π|x|)`.
///
/// # Errors
///
/// Domain error unless `Re δ ≥ 0`.
pub fn bochner_riesz_kernel(delta: C64, radius: f64, n: usize) -> LabResult<C64> {
    check_delta(delta)?;
    let constant = (-delta * std::f64::consts::PI.ln()).exp() * gamma_complex(delta + 1.0)?;
    Ok(constant * omega_kernel(delta, radius, n)?)
}

/// `S^δ f` by direct convolution with the kernel.
///
/// The samples of `f` are zero-padded to side `2N`; the kernel is sampled at
/// every displacement `x_k − x_l` between points of the original grid, so
/// the circular convolution equals the linear Riemann sum
/// `h^n Σ_l K(x_k − x_l) f(x_l)` at every output point.
///
/// # Errors
///
/// Domain error unless `Re δ ≥ 0`.
pub fn bochner_riesz_kernel_apply(delta: C64, f: &SampledFunction) -> LabResult<SampledFunction> {
    check_delta(delta)?;
    let spec = f.spec;
    let big = GridSpec::new(spec.n, 2 * spec.side, 2.0 * spec.extent)?;
    let h = spec.spacing();
    let side = spec.side;
    let n = spec.n;
    let constant = (-delta * std::f64::consts::PI.ln()).exp() * gamma_complex(delta + 1.0)?;
    let omega = brlab_core::kernels::OmegaHat::new(brlab_core::kernels::omega_kernel_order(delta, n))?;
    let split = |mut idx: usize, s: usize, out: &mut [usize; 3]| {
        for a in (0..n).rev() {
            out[a] = idx % s;
            idx /= s;
        }
    };
    let kernel: Vec<C64> = (0..big.len())
        .into_par_iter()
        .map(|idx| {
            let mut k = [0usize; 3];
            split(idx, big.side, &mut k);
            let mut r2 = 0.0;
            for &ka in &k[..n] {
                let d = if ka < side {
                    ka as f64
                } else {
                    ka as f64 - big.side as f64
                } * h;
                r2 += d * d;
            }
            omega.eval(r2.sqrt()).map(|v| v * constant)
        })
        .collect::<brlab_core::Result<_>>()?;
    let mut kernel = kernel;
    let mut padded = vec![ZERO; big.len()];
    for (idx, v) in f.values.iter().enumerate() {
        let mut k = [0usize; 3];
        split(idx, side, &mut k);
        let mut big_idx = 0;
        for &ka in &k[..n] {
            big_idx = big_idx * big.side + ka;
        }
        padded[big_idx] = *v;
    }
    fft_nd(&mut kernel, &big, Direction::Forward);
    fft_nd(&mut padded, &big, Direction::Forward);
    let scale = spec.cell_volume() / big.len() as f64;
    padded.par_iter_mut().zip(&kernel).for_each(|(a, b)| *a *= b * scale);
    drop(kernel);
    fft_nd(&mut padded, &big, Direction::Inverse);
    let values = (0..spec.len())
        .map(|idx| {
            let mut k = [0usize; 3];
            split(idx, side, &mut k);
            let mut big_idx = 0;
            for &ka in &k[..n] {
                big_idx = big_idx * big.side + ka;
            }
            padded[big_idx]
        })
        .collect();
    Ok(SampledFunction { spec, values })
}

/// Restriction of `f` to the centered subgrid `small` with the same spacing.
///
/// # Errors
///
/// [`LabError::Config`] unless `small` has the spacing and dimension of
/// `f.spec` and fits inside it.
pub fn restrict_center(f: &SampledFunction, small: GridSpec) -> LabResult<SampledFunction> {
    let big = f.spec;
    if big.n != small.n || small.side > big.side || (big.spacing() - small.spacing()).abs() > 1e-12 * big.spacing() {
        return Err(config("requires a centered subgrid with the same spacing"));
    }
    let offset = (big.side - small.side) / 2;
    let n = small.n;
    let values = (0..small.len())
        .map(|idx| {
            let mut rest = idx;
            let mut k = [0usize; 3];
            for a in (0..n).rev() {
                k[a] = rest % small.side + offset;
                rest /= small.side;
            }
            let big_idx = k[..n].iter().fold(0, |acc, &ka| acc * big.side + ka);
            f.values[big_idx]
        })
        .collect();
    Ok(SampledFunction { spec: small, values })
}

/// Oscillation samples per period `1/(λ + 8)` of a [`RadialTable`].
pub const TABLE_POINTS_PER_PERIOD: f64 = 32.0;
const LAGRANGE_POINTS: usize = 8;

/// Equispaced table of an even function on `[0, ρ_max]` with 8-point
/// Lagrange interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialTable {
    step: f64,
    values: Vec<C64>,
}

impl RadialTable {
    /// Tabulates `g` with spacing `step` on `[0, rho_max]`, in parallel.
    ///
    /// # Errors
    ///
    /// Any error returned by `g`, and a config error for a non-positive step.
    pub fn build<G>(rho_max: f64, step: f64, g: G) -> LabResult<Self>
    where
        G: Fn(f64) -> brlab_core::Result<C64> + Sync,
    {
        if !(step > 0.0 && rho_max > 0.0) {
            return Err(config("requires a positive table step and range"));
        }
        let count = (rho_max / step).ceil() as usize + LAGRANGE_POINTS;
        let values = (0..count)
            .into_par_iter()
            .map(|i| g(i as f64 * step))
            .collect::<brlab_core::Result<Vec<_>>>()?;
        Ok(Self { step, values })
    }

    /// Table of the `r`-integral of `piece` (without `φ̂`) on `[0, 3]`, with
    /// [`TABLE_POINTS_PER_PERIOD`] samples per oscillation of the largest
    /// radius of the piece.
    ///
    /// # Errors
    ///
    /// Domain errors of the piece.
    pub fn for_piece(variant: &Variant, n: usize, piece: Piece<'_>) -> LabResult<Self> {
        let (_, b) = piece.interval()?;
        let evaluator = PieceEvaluator::new(variant, n, piece)?;
        let step = 1.0 / (TABLE_POINTS_PER_PERIOD * (b + 8.0));
        Self::build(SUPPORT_MAX, step, |rho| evaluator.integral(rho))
    }

    /// Table spacing.
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of stored samples.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Whether the table is empty (never for a built table).
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Stored samples, at `ρ_i = i · step`.
    pub fn samples(&self) -> &[C64] {
        &self.values
    }

    /// Adds another table with the same spacing.
    ///
    /// # Errors
    ///
    /// [`LabError::Config`] for mismatched tables.
    pub fn add(&mut self, other: &RadialTable) -> LabResult<()> {
        if self.step != other.step || self.values.len() != other.values.len() {
            return Err(config("requires tables with identical sampling"));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    /// Interpolated value at `rho`, treating the tabulated function as even
    /// (radial functions are even in `ρ`) and clamping at the far end.
    pub fn eval(&self, rho: f64) -> C64 {
        let t = (rho / self.step).abs();
        let last_start = (self.values.len() - LAGRANGE_POINTS) as isize;
        let start = ((t.floor() as isize) - (LAGRANGE_POINTS as isize / 2 - 1)).min(last_start);
        let u = t - start as f64;
        let mut acc = ZERO;
        for i in 0..LAGRANGE_POINTS {
            let mut w = 1.0;
            for k in 0..LAGRANGE_POINTS {
                if k != i {
                    w *= (u - k as f64) / (i as f64 - k as f64);
                }
            }
            acc += self.values[(start + i as isize).unsigned_abs()] * w;
        }
        acc
    }
}

fn radial_value(table: &RadialTable, rho: f64) -> C64 {
    let cut = cutoff_phi_hat(rho);
    if cut == 0.0 {
        ZERO
    } else {
        table.eval(rho) * cut
    }
}

/// Standard-variant low piece and octave tables for [`i_alpha_apply`].
fn i_alpha_tables(alpha: C64, n: usize, j_max: u32) -> LabResult<Vec<RadialTable>> {
    let variant = Variant::Standard { alpha };
    let mut tables = vec![RadialTable::for_piece(&variant, n, Piece::Low)?];
    for j in 1..=j_max {
        let scale = lambda_partition(j, 0.25)?;
        tables.push(RadialTable::for_piece(&variant, n, Piece::Octave(&scale))?);
    }
    Ok(tables)
}

/// Estimate of the discarded octaves of [`i_alpha_apply`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    /// Last octave applied.
    pub j_max: u32,
    /// `sup_ρ |P̂_{j_max+1}(ρ)|` over sampled radii.
    pub sup: f64,
    /// `sup_ρ |P̂_{j_max+1}(ρ)| |1 − ρ|^{1/2}` over sampled radii.
    pub weighted_sup: f64,
}

/// Result of [`i_alpha_apply`].
#[derive(Clone, Debug, PartialEq)]
pub struct IAlphaResult {
    /// `R^α_{j_max} f`.
    pub output: SampledFunction,
    /// Size of the first discarded octave.
    pub tail: TailEstimate,
}

/// Radii at which octave suprema are sampled: spacing `2^{−j}/8` on
/// `[1/3, 3]`.
fn octave_sample_radii(j: u32) -> Vec<f64> {
    let step = 2f64.powi(-(j as i32)) / 8.0;
    let count = ((SUPPORT_MAX - SUPPORT_MIN) / step).ceil() as usize;
    (1..count).map(|i| SUPPORT_MIN + i as f64 * step).collect()
}

/// `sup |P̂^α_j|` and `sup |P̂^α_j| |1−ρ|^{1/2}` of the standard octave `j`.
///
/// # Errors
///
/// Domain errors of the variant.
pub fn octave_tail(alpha: C64, n: usize, j: u32) -> LabResult<TailEstimate> {
    let scale = lambda_partition(j, 0.25)?;
    let evaluator = PieceEvaluator::new(&Variant::Standard { alpha }, n, Piece::Octave(&scale))?;
    let values = octave_sample_radii(j)
        .into_par_iter()
        .map(|rho| {
            evaluator
                .radial(rho)
                .map(|v| (v.norm(), v.norm() * (1.0 - rho).abs().sqrt()))
        })
        .collect::<brlab_core::Result<Vec<_>>>()?;
    let sup = values.iter().fold(0.0f64, |a, v| a.max(v.0));
    let weighted_sup = values.iter().fold(0.0f64, |a, v| a.max(v.1));
    Ok(TailEstimate {
        j_max: j.saturating_sub(1),
        sup,
        weighted_sup,
    })
}

/// Applies `P̂^α_< + Σ_{0<j≤j_max} P̂^α_j` to `f` and estimates the first
/// discarded octave.
///
/// # Errors
///
/// Domain error unless `1/2 < Re α < 1`; config error if the grid does not
/// resolve `|ξ| ≤ 3`.
pub fn i_alpha_apply(alpha: C64, f: &SampledFunction, j_max: u32) -> LabResult<IAlphaResult> {
    let n = f.spec.n;
    if n < 2 {
        return Err(config("requires n ≥ 2 for the multiplier pieces"));
    }
    Variant::Standard { alpha }.validate(n)?;
    check_support_resolved(&f.spec)?;
    let tables = i_alpha_tables(alpha, n, j_max)?;
    let output = apply_multiplier(f, |xi| {
        let rho = norm(xi);
        let cut = cutoff_phi_hat(rho);
        if cut == 0.0 {
            return ZERO;
        }
        let mut acc = NeumaierC64::default();
        for t in &tables {
            acc.add(t.eval(rho));
        }
        acc.total() * cut
    });
    let mut tail = octave_tail(alpha, n, j_max + 1)?;
    tail.j_max = j_max;
    Ok(IAlphaResult { output, tail })
}

/// Half-extent needed by [`materialize_kernels`] for cell `m`: the far
/// corner of a bump rectangle plus a margin of 16.
///
/// # Errors
///
/// Domain error for an invalid cell.
pub fn required_extent(scale: &DyadicScale, m: usize, n: usize) -> LabResult<f64> {
    let (_, lambda_m) = scale.cell(m)?;
    let jf = scale.j as f64;
    let radial = lambda_m + 2f64.powf(scale.sigma * jf + 2.0);
    let width = 2f64.powf((0.5 + scale.sigma) * jf + 1.0);
    Ok((radial * radial + (n as f64 - 1.0) * width * width).sqrt() + 16.0)
}

/// Smallest grid with spacing `1/6` (resolving `|ξ| ≤ 3`) whose extent
/// reaches [`required_extent`].
///
/// # Errors
///
/// As [`required_extent`].
pub fn kernel_grid(scale: &DyadicScale, m: usize, n: usize) -> LabResult<GridSpec> {
    let need = required_extent(scale, m, n)?;
    let mut side = 2usize;
    while (side as f64) / (4.0 * SUPPORT_MAX) < need {
        side *= 2;
    }
    GridSpec::new(n, side, side as f64 / (4.0 * SUPPORT_MAX))
}

/// The kernels of one `(variant, j, m, ℓ)` cell.
#[derive(Clone, Debug)]
pub struct KernelTriple {
    /// `P^ℓ = Σ_{ν∈Z_ℓ} P^ν`.
    pub p: SpatialKernel,
    /// `U = P^ℓ(1 − Ψ^ℓ) + Σ_μ Ψ^μ Σ_{ν≠μ} P^ν`.
    pub u: SpatialKernel,
    /// `V = Σ_μ Ψ^μ P^μ`.
    pub v: SpatialKernel,
    /// Center indices of `Z_ℓ`.
    pub caps: Vec<usize>,
    /// `max |U + V − P^ℓ| / max |P^ℓ|`.
    pub split_residual: f64,
}

/// Bump values of one rectangle on the grid points of its support.
struct BoxSamples {
    indices: Vec<usize>,
    psi: Vec<f64>,
}

fn box_samples(spec: &GridSpec, rect: &BumpRectangle) -> BoxSamples {
    let (indices, psi) = (0..spec.len())
        .into_par_iter()
        .filter_map(|idx| {
            let mut x = [0.0; 3];
            spec.point(idx, &mut x);
            let mut y = [0.0; 3];
            rect.rotation.apply_transpose_into(&x[..spec.n], &mut y[..spec.n]);
            let w = rect.psi_rotated(&y[..spec.n]);
            (w > 0.0).then_some((idx, w))
        })
        .unzip();
    BoxSamples { indices, psi }
}

/// Fills `P̂^ν = φ^ν_j φ̂ T(|ξ|)` for the center `nu` of the family's grid.
fn cap_multiplier(spec: &GridSpec, family: &SubsetFamily, nu: usize, table: &RadialTable) -> LabResult<Vec<C64>> {
    let grid = &family.parent;
    let center = &grid.centers[nu];
    let reach = brlab_core::sphere::cover_bound(grid.j);
    let reach2 = reach * reach;
    let n = spec.n;
    let mut values = vec![ZERO; spec.len()];
    let side = spec.side;
    values.par_chunks_mut(side).enumerate().try_for_each_init(
        Vec::new,
        |weights, (row, chunk)| -> brlab_core::Result<()> {
            let mut xi = [0.0; 3];
            for (i, v) in chunk.iter_mut().enumerate() {
                spec.frequency(row * side + i, &mut xi);
                let rho = norm(&xi[..n]);
                let cut = cutoff_phi_hat(rho);
                if cut == 0.0 {
                    continue;
                }
                let d2: f64 = (0..n).map(|a| (xi[a] / rho - center[a]).powi(2)).sum();
                if d2 >= reach2 {
                    continue;
                }
                grid.partition_of_unity_into(&xi[..n], weights)?;
                if let Some(&(_, w)) = weights.iter().find(|(k, _)| *k == nu) {
                    *v = table.eval(rho) * (cut * w);
                }
            }
            Ok(())
        },
    )?;
    Ok(values)
}

/// Materializes `P^ℓ`, `U` and `V` for cell `m` of `scale` and the subset
/// `Z_ℓ` (1-based `ell`) of `family`.
///
/// Each `P^ν` is the inverse transform of its capped multiplier. The sum
/// `P^ℓ` is accumulated in index order with compensated summation; `P^ν` is
/// retained only on the supports of the bumps `Ψ^μ`, which is all that the
/// assembly of `U` and `V` reads.
///
/// # Errors
///
/// * Domain errors of the variant, cell or family.
/// * [`LabError::Config`] if the extent is below [`required_extent`] (the
///   message names it), the grid does not resolve `|ξ| ≤ 3`, `ell` is out
///   of range, or the family's scale index differs from `scale.j`.
pub fn materialize_kernels(
    variant: &Variant,
    scale: &DyadicScale,
    m: usize,
    family: &SubsetFamily,
    ell: usize,
    spec: GridSpec,
) -> LabResult<KernelTriple> {
    let n = spec.n;
    variant.validate(n)?;
    let need = required_extent(scale, m, n)?;
    if spec.extent < need {
        return Err(config(format!(
            "requires extent X ≥ {need} for j = {}, m = {m}, got X = {}",
            scale.j, spec.extent
        )));
    }
    check_support_resolved(&spec)?;
    if family.parent.j != scale.j || family.parent.n != n {
        return Err(config(
            "requires a cap family with the scale index and dimension of the kernel",
        ));
    }
    if ell == 0 || ell > family.subsets.len() {
        return Err(config(format!(
            "requires 1 ≤ ℓ ≤ {}, got ℓ = {ell}",
            family.subsets.len()
        )));
    }
    let caps = family.subsets[ell - 1].clone();
    let table = RadialTable::for_piece(variant, n, Piece::Cell(scale, m))?;
    let rects = caps
        .iter()
        .map(|&mu| BumpRectangle::new(&family.parent, mu, scale, m))
        .collect::<brlab_core::Result<Vec<_>>>()?;
    let boxes: Vec<BoxSamples> = rects.iter().map(|r| box_samples(&spec, r)).collect();

    let mut sum = vec![ZERO; spec.len()];
    let mut comp = vec![ZERO; spec.len()];
    // box_values[b][c][k]: P^{caps[c]} at the k-th point of box b.
    let mut box_values: Vec<Vec<Vec<C64>>> = vec![Vec::with_capacity(caps.len()); caps.len()];
    for &nu in &caps {
        let hat = cap_multiplier(&spec, family, nu, &table)?;
        let p_nu = inverse_transform(spec, hat);
        sum.par_iter_mut()
            .zip(comp.par_iter_mut())
            .zip(&p_nu.values)
            .for_each(|((s, c), x)| {
                let mut acc = NeumaierC64::from_parts(*s, *c);
                acc.add(*x);
                (*s, *c) = acc.parts();
            });
        for (b, bx) in boxes.iter().enumerate() {
            box_values[b].push(bx.indices.iter().map(|&i| p_nu.values[i]).collect());
        }
    }
    let p_values: Vec<C64> = sum.par_iter().zip(&comp).map(|(s, c)| s + c).collect();
    drop(sum);
    drop(comp);

    let mut u_values = p_values.clone();
    let mut v_values = vec![ZERO; spec.len()];
    // Per point: bump weights of the boxes containing it.
    let mut covering: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (b, bx) in boxes.iter().enumerate() {
        for (k, &idx) in bx.indices.iter().enumerate() {
            covering.entry(idx).or_default().push((b, k));
        }
    }
    for (&idx, entries) in &covering {
        let p = p_values[idx];
        let psi_total = ordered_sum(entries.iter().map(|&(b, k)| boxes[b].psi[k]));
        let mut u = NeumaierC64::default();
        u.add(p * (1.0 - psi_total));
        let mut v = NeumaierC64::default();
        for &(b, k) in entries {
            let psi = boxes[b].psi[k];
            let mut others = NeumaierC64::default();
            for (c, vals) in box_values[b].iter().enumerate() {
                if c != b {
                    others.add(vals[k]);
                }
            }
            u.add(others.total() * psi);
            v.add(box_values[b][b][k] * psi);
        }
        u_values[idx] = u.total();
        v_values[idx] = v.total();
    }

    let p_field = SampledFunction { spec, values: p_values };
    let u_field = SampledFunction { spec, values: u_values };
    let v_field = SampledFunction { spec, values: v_values };
    let p_sup = p_field.sup_norm();
    let residual = p_field
        .values
        .par_iter()
        .zip(&u_field.values)
        .zip(&v_field.values)
        .map(|((p, u), v)| (u + v - p).norm())
        .reduce(|| 0.0, f64::max);
    let meta = |role: &str| {
        let mut meta = FieldMeta::for_variant(variant, Some(scale.j), Some(m), Some(ell));
        meta.params.insert("sigma".into(), scale.sigma);
        meta.params.insert("c".into(), family.c);
        meta.variant = format!("{}:{role}", variant.name());
        meta
    };
    Ok(KernelTriple {
        p: SpatialKernel::new(p_field, meta("P")),
        u: SpatialKernel::new(u_field, meta("U")),
        v: SpatialKernel::new(v_field, meta("V")),
        caps,
        split_residual: if p_sup > 0.0 { residual / p_sup } else { residual },
    })
}

/// `sup |K̂|` over the frequency grid of a kernel.
pub fn transform_sup(kernel: &SpatialKernel) -> f64 {
    forward_transform(&kernel.field)
        .iter()
        .fold(0.0f64, |a, v| a.max(v.norm()))
}
