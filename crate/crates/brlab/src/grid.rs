//! Regular grids on `[−X, X)^n` and their n-dimensional FFT.
//!
//! Samples sit at `x_k = −X + k h`, `h = 2X/N`, stored row-major with the
//! last axis fastest. Discrete frequencies are `ξ_q = q/(2X)` with `q` in
//! FFT order (`0, 1, …, N/2−1, −N/2, …, −1`). With these conventions
//! `f̂(ξ_q) ≈ h^n (−1)^{|q|} FFT(f)[q]` and
//! `f(x_k) ≈ Δξ^n IFFT((−1)^{|q|} f̂)[k]`, where `|q| = q_1 + … + q_n` and
//! `Δξ = 1/(2X)`.

use std::sync::Arc;

use brlab_core::C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{config, LabResult};

/// Shape of a grid: dimension, side and half-extent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Dimension `n ∈ {1, 2, 3}`.
    pub n: usize,
    /// Points per axis `N`, a power of two.
    pub side: usize,
    /// Half-extent `X`.
    pub extent: f64,
}

impl GridSpec {
    /// Validated grid.
    ///
    /// # Errors
    ///
    /// [`LabError::Config`](crate::LabError::Config) unless `n ∈ {1, 2, 3}`,
    /// `side` is a power of two at least 2 and `extent` is positive.
    pub fn new(n: usize, side: usize, extent: f64) -> LabResult<Self> {
        if !(1..=3).contains(&n) {
            return Err(config(format!("requires n ∈ {{1, 2, 3}}, got n = {n}")));
        }
        if side < 2 || !side.is_power_of_two() {
            return Err(config(format!("requires a power-of-two side ≥ 2, got side = {side}")));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(config(format!("requires extent > 0, got extent = {extent}")));
        }
        Ok(Self { n, side, extent })
    }

    /// Number of samples `N^n`.
    pub fn len(&self) -> usize {
        self.side.pow(self.n as u32)
    }

    /// Whether the grid is empty (never for a validated grid).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spacing `h = 2X/N`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / self.side as f64
    }

    /// Frequency spacing `Δξ = 1/(2X)`.
    pub fn frequency_spacing(&self) -> f64 {
        0.5 / self.extent
    }

    /// Largest frequency `N/(4X)` on each axis.
    pub fn nyquist(&self) -> f64 {
        self.side as f64 / (4.0 * self.extent)
    }

    /// Cell volume `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.n as i32)
    }

    fn split(&self, mut idx: usize, out: &mut [usize]) {
        for a in (0..self.n).rev() {
            out[a] = idx % self.side;
            idx /= self.side;
        }
    }

    /// Physical coordinates of sample `idx`.
    pub fn point(&self, idx: usize, out: &mut [f64]) {
        let mut k = [0usize; 3];
        self.split(idx, &mut k);
        let h = self.spacing();
        for a in 0..self.n {
            out[a] = -self.extent + k[a] as f64 * h;
        }
    }

    /// Signed frequency index of an FFT-order position.
    pub fn signed_index(&self, q: usize) -> i64 {
        if q < self.side / 2 {
            q as i64
        } else {
            q as i64 - self.side as i64
        }
    }

    /// Frequency `ξ_q` of FFT-order position `idx`, and the parity of `|q|`.
    pub fn frequency(&self, idx: usize, out: &mut [f64]) -> bool {
        let mut q = [0usize; 3];
        self.split(idx, &mut q);
        let d = self.frequency_spacing();
        let mut parity = 0usize;
        for a in 0..self.n {
            out[a] = self.signed_index(q[a]) as f64 * d;
            parity += q[a];
        }
        parity % 2 == 1
    }
}

/// Complex samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction {
    /// Grid.
    pub spec: GridSpec,
    /// Values, row-major.
    pub values: Vec<C64>,
}

impl SampledFunction {
    /// All zeros.
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            values: vec![C64::new(0.0, 0.0); spec.len()],
        }
    }

    /// Samples `f` at every grid point, in parallel.
    pub fn from_fn<F: Fn(&[f64]) -> C64 + Sync>(spec: GridSpec, f: F) -> Self {
        let values = (0..spec.len())
            .into_par_iter()
            .map(|idx| {
                let mut x = [0.0; 3];
                spec.point(idx, &mut x);
                f(&x[..spec.n])
            })
            .collect();
        Self { spec, values }
    }

    /// `(h^n Σ |f|²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.spec.cell_volume() * ordered_sum(self.values.iter().map(|v| v.norm_sqr()))).sqrt()
    }

    /// `h^n Σ |f|`.
    pub fn l1_norm(&self) -> f64 {
        self.spec.cell_volume() * ordered_sum(self.values.iter().map(|v| v.norm()))
    }

    /// `max |f|`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.norm()))
    }

    /// `max |Im f|`.
    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.im.abs()))
    }

    /// `‖f − g‖_2` on a shared grid.
    ///
    /// # Errors
    ///
    /// [`LabError::Config`](crate::LabError::Config) if the grids differ.
    pub fn l2_distance(&self, other: &Self) -> LabResult<f64> {
        if self.spec != other.spec {
            return Err(config("requires identical grids"));
        }
        let s = ordered_sum(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_sqr()));
        Ok((self.spec.cell_volume() * s).sqrt())
    }
}

/// Compensated (Neumaier) sum in iteration order.
pub fn ordered_sum<I: IntoIterator<Item = f64>>(items: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in items {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Compensated complex accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierC64 {
    sum: C64,
    comp: C64,
}

impl NeumaierC64 {
    /// Accumulator resuming from a stored running sum and compensation.
    #[inline]
    pub fn from_parts(sum: C64, comp: C64) -> Self {
        Self { sum, comp }
    }

    /// Running sum and compensation.
    #[inline]
    pub fn parts(&self) -> (C64, C64) {
        (self.sum, self.comp)
    }

    /// Adds `x`.
    #[inline]
    pub fn add(&mut self, x: C64) {
        fn step(sum: &mut f64, comp: &mut f64, x: f64) {
            let t = *sum + x;
            if sum.abs() >= x.abs() {
                *comp += (*sum - t) + x;
            } else {
                *comp += (x - t) + *sum;
            }
            *sum = t;
        }
        step(&mut self.sum.re, &mut self.comp.re, x.re);
        step(&mut self.sum.im, &mut self.comp.im, x.im);
    }

    /// Compensated total.
    #[inline]
    pub fn total(&self) -> C64 {
        self.sum + self.comp
    }
}

/// Direction of a transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `Σ_k f_k e^{−2πikq/N}`.
    Forward,
    /// `Σ_q F_q e^{2πikq/N}` (unnormalized).
    Inverse,
}

fn plan(side: usize, direction: Direction) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    match direction {
        Direction::Forward => planner.plan_fft_forward(side),
        Direction::Inverse => planner.plan_fft_inverse(side),
    }
}

/// In-place unnormalized n-dimensional FFT of row-major data.
///
/// Lines of one axis are transformed in parallel; every line is processed
/// independently, so the result does not depend on the thread count.
pub fn fft_nd(values: &mut [C64], spec: &GridSpec, direction: Direction) {
    let side = spec.side;
    let fft = plan(side, direction);
    for axis in 0..spec.n {
        let stride = side.pow((spec.n - 1 - axis) as u32);
        if stride == 1 {
            values.par_chunks_mut(side).for_each_init(
                || vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
                |scratch, line| fft.process_with_scratch(line, scratch),
            );
            continue;
        }
        let block = side * stride;
        let mut transposed = vec![C64::new(0.0, 0.0); block];
        for chunk in values.chunks_mut(block) {
            // chunk[k * stride + i] -> transposed[i * side + k]
            transposed.par_chunks_mut(side).enumerate().for_each(|(i, line)| {
                for (k, v) in line.iter_mut().enumerate() {
                    *v = chunk[k * stride + i];
                }
            });
            transposed.par_chunks_mut(side).for_each_init(
                || vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
                |scratch, line| fft.process_with_scratch(line, scratch),
            );
            chunk.par_chunks_mut(stride).enumerate().for_each(|(k, row)| {
                for (i, v) in row.iter_mut().enumerate() {
                    *v = transposed[i * side + k];
                }
            });
        }
    }
}

/// Continuous Fourier transform samples `f̂(ξ_q)` in FFT order.
pub fn forward_transform(f: &SampledFunction) -> Vec<C64> {
    let spec = f.spec;
    let mut data = f.values.clone();
    fft_nd(&mut data, &spec, Direction::Forward);
    let scale = spec.cell_volume();
    data.par_iter_mut().enumerate().for_each(|(idx, v)| {
        let mut xi = [0.0; 3];
        let odd = spec.frequency(idx, &mut xi);
        *v *= if odd { -scale } else { scale };
    });
    data
}

/// Inverse of [`forward_transform`]: spatial samples from `f̂(ξ_q)`.
pub fn inverse_transform(spec: GridSpec, mut hat: Vec<C64>) -> SampledFunction {
    let scale = spec.frequency_spacing().powi(spec.n as i32);
    hat.par_iter_mut().enumerate().for_each(|(idx, v)| {
        let mut xi = [0.0; 3];
        let odd = spec.frequency(idx, &mut xi);
        *v *= if odd { -scale } else { scale };
    });
    fft_nd(&mut hat, &spec, Direction::Inverse);
    SampledFunction { spec, values: hat }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(values: &[C64], spec: &GridSpec) -> Vec<C64> {
        let n = spec.len();
        let mut out = vec![C64::new(0.0, 0.0); n];
        let mut k = [0usize; 3];
        let mut q = [0usize; 3];
        for (a, o) in out.iter_mut().enumerate() {
            spec.split(a, &mut q);
            for (b, v) in values.iter().enumerate() {
                spec.split(b, &mut k);
                let phase: f64 = (0..spec.n).map(|d| (k[d] * q[d]) as f64).sum::<f64>() / spec.side as f64;
                *o += v * C64::from_polar(1.0, -2.0 * std::f64::consts::PI * phase);
            }
        }
        out
    }

    #[test]
    fn fft_matches_naive_dft() {
        for n in 1..=3 {
            let spec = GridSpec::new(n, 8, 1.0).unwrap();
            let values: Vec<C64> = (0..spec.len())
                .map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
                .collect();
            let mut fast = values.clone();
            fft_nd(&mut fast, &spec, Direction::Forward);
            let slow = naive_dft(&values, &spec);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-11, "n={n}");
            }
        }
    }

    #[test]
    fn gaussian_transform_is_gaussian() {
        let spec = GridSpec::new(2, 64, 4.0).unwrap();
        let f = SampledFunction::from_fn(spec, |x| {
            C64::new((-std::f64::consts::PI * (x[0] * x[0] + x[1] * x[1])).exp(), 0.0)
        });
        let hat = forward_transform(&f);
        let mut xi = [0.0; 3];
        for (idx, v) in hat.iter().enumerate() {
            spec.frequency(idx, &mut xi);
            let want = (-std::f64::consts::PI * (xi[0] * xi[0] + xi[1] * xi[1])).exp();
            assert!((v - want).norm() < 1e-12, "{v} vs {want}");
        }
        let back = inverse_transform(spec, hat);
        assert!(back.l2_distance(&f).unwrap() < 1e-13);
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(2, 100, 1.0).is_err());
        assert!(GridSpec::new(4, 64, 1.0).is_err());
        assert!(GridSpec::new(2, 64, 0.0).is_err());
    }

    #[test]
    fn neumaier_beats_naive() {
        let items = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(ordered_sum(items), 2.0);
    }
}
