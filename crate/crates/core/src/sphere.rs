//! Cap geometry on the unit sphere `S^{n−1}`.
//!
//! * [`cap_grid`]: centers `ξ^ν_j` with chord spacing between `2^{−j/2−1}`
//!   and `2^{−j/2}` and cover radius below `2^{−j/2+1}`.
//! * [`select_subsets`]: the separated subfamilies `Z_1, …, Z_L`.
//! * [`CapGrid::partition_of_unity`]: the weights `φ^ν_j(ξ)`.
//! * [`rotation_to_pole`]: orthogonal `L_μ` with `det L_μ = 1` and
//!   `L_μ^T ξ^μ_j = e_1`.
//! * [`BumpRectangle`] and [`bump_psi`]: the bumps `Ψ^μ_{j m}` and their boxes.
//! * [`check_separation_geometry`]: sampled checks of the two separation
//!   lemmas and of rectangle disjointness.
//!
//! Construction is single threaded and deterministic. All queries are pure.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomp::DyadicScale;
use crate::error::domain;
use crate::kernels::bump;
use crate::{Error, Result};

/// Points per `2^j` in the Fibonacci lattice before thinning (`n = 3`).
pub const FIBONACCI_DENSITY: f64 = 14.5;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Lower bound `2^{−j/2−1}` on chords between distinct centers.
pub fn min_sep_bound(j: u32) -> f64 {
    2f64.powf(-(j as f64) / 2.0 - 1.0)
}

/// Bound `2^{−j/2+1}` on the distance from any unit vector to the grid.
pub fn cover_bound(j: u32) -> f64 {
    2f64.powf(-(j as f64) / 2.0 + 1.0)
}

/// Layout of the centers, used for fast neighbour queries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GridLayout {
    /// `K` equally spaced angles `2πk/K` on the circle.
    Circle {
        /// Number of centers.
        count: usize,
    },
    /// Thinned Fibonacci lattice on `S^2`.
    Fibonacci {
        /// Lattice size before thinning.
        lattice: usize,
    },
}

/// Hash of points into cubes of side `h`.
#[derive(Clone, Debug)]
struct CellIndex {
    h: f64,
    n: usize,
    cells: BTreeMap<Vec<i64>, Vec<usize>>,
}

impl CellIndex {
    fn new(h: f64, n: usize) -> Self {
        Self {
            h,
            n,
            cells: BTreeMap::new(),
        }
    }

    fn key(&self, p: &[f64]) -> Vec<i64> {
        p.iter().map(|x| (x / self.h).floor() as i64).collect()
    }

    fn insert(&mut self, p: &[f64], id: usize) {
        let k = self.key(p);
        self.cells.entry(k).or_default().push(id);
    }

    /// Ids in the `3^n` cells around `p`; complete for radii up to `h`.
    fn candidates(&self, p: &[f64], out: &mut Vec<usize>) {
        out.clear();
        let base = self.key(p);
        let mut offset = vec![-1i64; self.n];
        loop {
            let k: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            if let Some(ids) = self.cells.get(&k) {
                out.extend_from_slice(ids);
            }
            let mut i = 0;
            loop {
                if i == self.n {
                    out.sort_unstable();
                    return;
                }
                offset[i] += 1;
                if offset[i] <= 1 {
                    break;
                }
                offset[i] = -1;
                i += 1;
            }
        }
    }
}

/// Centers `ξ^ν_j` on `S^{n−1}` with their spacing certificates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CapGrid {
    /// Scale index.
    pub j: u32,
    /// Ambient dimension.
    pub n: usize,
    /// Unit vectors `ξ^ν_j`.
    pub centers: Vec<Vec<f64>>,
    /// Smallest chord between distinct centers.
    pub min_sep: f64,
    /// Largest sampled distance from a unit vector to its nearest center.
    pub cover_radius: f64,
    /// Construction used.
    pub layout: GridLayout,
    #[serde(skip)]
    index: Option<CellIndex>,
}

impl PartialEq for CapGrid {
    fn eq(&self, other: &Self) -> bool {
        self.j == other.j
            && self.n == other.n
            && self.centers == other.centers
            && self.min_sep == other.min_sep
            && self.cover_radius == other.cover_radius
            && self.layout == other.layout
    }
}

/// Builds the cap grid for scale `j` in dimension `n ∈ {2, 3}`.
///
/// * `n = 2`: `K` equally spaced angles with `K` the smallest count whose
///   chord `2 sin(π/K)` is at most `2^{−j/2}`.
/// * `n = 3`: a Fibonacci lattice of about `14.5 · 2^j` points, thinned
///   greedily in lattice order to chords of at least `2^{−j/2−1}`.
///
/// Both certificates are measured before returning; the cover radius is
/// the largest distance to the grid over a dense deterministic sample.
///
/// # Errors
///
/// * [`Error::Domain`] unless `1 ≤ j ≤ 24` and `n ∈ {2, 3}`.
/// * [`Error::Construction`] if a certificate fails.
pub fn cap_grid(j: u32, n: usize) -> Result<CapGrid> {
    if j == 0 || j > 24 {
        return Err(domain(format!("requires 1 ≤ j ≤ 24, got j = {j}")));
    }
    let spacing = 2f64.powf(-(j as f64) / 2.0);
    let (centers, layout) = match n {
        2 => {
            let mut count = 3usize;
            while 2.0 * (PI / count as f64).sin() > spacing {
                count += 1;
            }
            let centers = (0..count)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / count as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect();
            (centers, GridLayout::Circle { count })
        }
        3 => {
            let lattice = (FIBONACCI_DENSITY * 2f64.powi(j as i32)).ceil() as usize;
            let sep = min_sep_bound(j);
            let mut index = CellIndex::new(cover_bound(j), 3);
            let mut kept: Vec<Vec<f64>> = Vec::new();
            let mut near = Vec::new();
            for p in fibonacci_points(lattice, 0.0) {
                index.candidates(&p, &mut near);
                if near.iter().all(|&k| dist(&kept[k], &p) >= sep) {
                    index.insert(&p, kept.len());
                    kept.push(p);
                }
            }
            (kept, GridLayout::Fibonacci { lattice })
        }
        _ => return Err(domain(format!("requires n ∈ {{2, 3}}, got n = {n}"))),
    };
    let mut grid = CapGrid {
        j,
        n,
        centers,
        min_sep: 0.0,
        cover_radius: 0.0,
        layout,
        index: None,
    };
    grid.build_index();
    grid.min_sep = grid.measure_min_sep();
    grid.cover_radius = grid.measure_cover_radius();
    grid.certify()?;
    Ok(grid)
}

/// `count` points of a spherical Fibonacci lattice, rotated by `phase`
/// radians about the polar axis.
fn fibonacci_points(count: usize, phase: f64) -> impl Iterator<Item = Vec<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count).map(move |i| {
        let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
        let r = (1.0 - z * z).max(0.0).sqrt();
        let t = golden * i as f64 + phase;
        vec![r * t.cos(), r * t.sin(), z]
    })
}

impl CapGrid {
    /// Number of centers.
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    /// Whether the grid has no centers (never for a constructed grid).
    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Rebuilds the neighbour index, needed after deserialization.
    pub fn build_index(&mut self) {
        let mut index = CellIndex::new(cover_bound(self.j), self.n);
        for (k, c) in self.centers.iter().enumerate() {
            index.insert(c, k);
        }
        self.index = Some(index);
    }

    /// Checks `min_sep ≥ 2^{−j/2−1}` and `cover_radius < 2^{−j/2+1}`.
    ///
    /// # Errors
    ///
    /// [`Error::Construction`] naming the failed certificate.
    pub fn certify(&self) -> Result<()> {
        if !(self.min_sep >= min_sep_bound(self.j)) {
            return Err(Error::Construction(format!(
                "minimum chord {} below 2^(−j/2−1) = {}",
                self.min_sep,
                min_sep_bound(self.j)
            )));
        }
        if !(self.cover_radius < cover_bound(self.j)) {
            return Err(Error::Construction(format!(
                "cover radius {} not below 2^(−j/2+1) = {}",
                self.cover_radius,
                cover_bound(self.j)
            )));
        }
        Ok(())
    }

    /// Centers within chord distance `radius ≤ 2^{−j/2+1}` of the unit vector `u`.
    fn within(&self, u: &[f64], radius: f64, out: &mut Vec<usize>) {
        match self.layout {
            GridLayout::Circle { count } => {
                out.clear();
                let step = 2.0 * PI / count as f64;
                let t = u[1].atan2(u[0]);
                let k0 = (t / step).round() as i64;
                let reach = (radius / (2.0 * (step / 2.0).sin())).ceil() as i64 + 1;
                let reach = reach.min(count as i64 / 2 + 1);
                for d in -reach..=reach {
                    let k = (k0 + d).rem_euclid(count as i64) as usize;
                    if dist(&self.centers[k], u) < radius && !out.contains(&k) {
                        out.push(k);
                    }
                }
                out.sort_unstable();
            }
            GridLayout::Fibonacci { .. } => {
                let mut cand = Vec::new();
                match &self.index {
                    Some(index) => index.candidates(u, &mut cand),
                    None => cand.extend(0..self.centers.len()),
                }
                out.clear();
                out.extend(cand.into_iter().filter(|&k| dist(&self.centers[k], u) < radius));
            }
        }
    }

    fn measure_min_sep(&self) -> f64 {
        let mut best = f64::INFINITY;
        let mut near = Vec::new();
        let probe = cover_bound(self.j);
        for (k, c) in self.centers.iter().enumerate() {
            self.within(c, probe, &mut near);
            for &l in near.iter().filter(|&&l| l != k) {
                best = best.min(dist(c, &self.centers[l]));
            }
        }
        if best == f64::INFINITY {
            best = probe;
        }
        best
    }

    /// Dense deterministic sample of the sphere for the cover certificate.
    fn cover_samples(&self) -> Vec<Vec<f64>> {
        match self.n {
            2 => {
                let count = 64 * self.len();
                (0..count)
                    .map(|k| {
                        let t = 2.0 * PI * (k as f64 + 0.5) / count as f64;
                        vec![t.cos(), t.sin()]
                    })
                    .collect()
            }
            _ => {
                let mut samples: Vec<Vec<f64>> = fibonacci_points(16 * self.len(), 0.5).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + self.j as u64);
                for _ in 0..4096 {
                    samples.push(random_unit(&mut rng, self.n));
                }
                samples
            }
        }
    }

    fn measure_cover_radius(&self) -> f64 {
        let probe = cover_bound(self.j);
        let mut near = Vec::new();
        let mut worst: f64 = 0.0;
        for u in self.cover_samples() {
            self.within(&u, probe, &mut near);
            let d = near
                .iter()
                .map(|&k| dist(&self.centers[k], &u))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(if d.is_finite() { d } else { probe });
        }
        worst
    }

    /// Distance from the unit vector `u` to its nearest center.
    ///
    /// # Errors
    ///
    /// [`Error::Domain`] if `u` has the wrong dimension or is zero.
    pub fn nearest_distance(&self, u: &[f64]) -> Result<f64> {
        let unit = self.direction(u)?;
        let mut near = Vec::new();
        self.within(&unit, cover_bound(self.j), &mut near);
        let d = near
            .iter()
            .map(|&k| dist(&self.centers[k], &unit))
            .fold(f64::INFINITY, f64::min);
        Ok(if d.is_finite() {
            d
        } else {
            self.centers
                .iter()
                .map(|c| dist(c, &unit))
                .fold(f64::INFINITY, f64::min)
        })
    }

    fn direction(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if xi.len() != self.n {
            return Err(domain(format!(
                "requires a vector of dimension {}, got {}",
                self.n,
                xi.len()
            )));
        }
        let r = norm(xi);
        if !(r > 0.0) || !r.is_finite() {
            return Err(domain("requires ξ ≠ 0"));
        }
        Ok(xi.iter().map(|x| x / r).collect())
    }

    /// Weights `φ^ν_j(ξ) = ϕ(2^{j/2}|ξ/|ξ| − ξ^ν_j|) / Σ_μ ϕ(2^{j/2}|ξ/|ξ| − ξ^μ_j|)`
    /// as `(ν, weight)` pairs in increasing `ν`, listing only the centers
    /// within `2^{−j/2+1}` of `ξ/|ξ|`.
    ///
    /// # Errors
    ///
    /// [`Error::Domain`] for `ξ = 0` or a wrong dimension.
    pub fn partition_of_unity(&self, xi: &[f64]) -> Result<Vec<(usize, f64)>> {
        let mut out = Vec::new();
        self.partition_of_unity_into(xi, &mut out)?;
        Ok(out)
    }

    /// [`partition_of_unity`](Self::partition_of_unity) writing into a
    /// reusable buffer.
    ///
    /// # Errors
    ///
    /// As [`partition_of_unity`](Self::partition_of_unity).
    pub fn partition_of_unity_into(&self, xi: &[f64], out: &mut Vec<(usize, f64)>) -> Result<()> {
        let unit = self.direction(xi)?;
        let scale = 2f64.powf(self.j as f64 / 2.0);
        let mut near = Vec::new();
        self.within(&unit, cover_bound(self.j), &mut near);
        out.clear();
        let mut total = 0.0;
        for &k in &near {
            let w = bump(scale * dist(&unit, &self.centers[k]));
            if w > 0.0 {
                out.push((k, w));
                total += w;
            }
        }
        if !(total > 0.0) {
            return Err(Error::Construction(format!(
                "no cap weight at direction {unit:?}; cover certificate violated"
            )));
        }
        for (_, w) in out.iter_mut() {
            *w /= total;
        }
        Ok(())
    }
}

/// Separated subfamilies `Z_1, …, Z_L` of a cap grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetFamily {
    /// The grid whose centers are partitioned.
    pub parent: CapGrid,
    /// Spacing exponent `σ`.
    pub sigma: f64,
    /// Separation constant `c`.
    pub c: f64,
    /// Center indices of each `Z_ℓ`, increasing within a subset.
    pub subsets: Vec<Vec<usize>>,
}

impl SubsetFamily {
    /// Required separation `c · 2^{−j/2+σj}` inside each subset.
    pub fn separation(&self) -> f64 {
        subset_separation(self.parent.j, self.sigma, self.c)
    }

    /// Index `ℓ` of the subset containing center `ν`.
    pub fn subset_of(&self, nu: usize) -> Option<usize> {
        self.subsets.iter().position(|z| z.binary_search(&nu).is_ok())
    }

    /// Smallest chord between distinct centers of one subset, or `None`
    /// when every subset is a singleton.
    pub fn min_within_subset(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for z in &self.subsets {
            for (a, &p) in z.iter().enumerate() {
                for &q in &z[a + 1..] {
                    let d = dist(&self.parent.centers[p], &self.parent.centers[q]);
                    best = Some(best.map_or(d, |b: f64| b.min(d)));
                }
            }
        }
        best
    }
}

/// `c · 2^{−j/2+σj}`.
pub fn subset_separation(j: u32, sigma: f64, c: f64) -> f64 {
    let jf = j as f64;
    c * 2f64.powf(-jf / 2.0 + sigma * jf)
}

/// Greedy extraction of separated subsets.
///
/// Each `Z_ℓ` scans the centers not yet assigned in increasing index and
/// keeps a center when its chord to every center already kept in `Z_ℓ` is
/// at least `c · 2^{−j/2+σj}`; this is repeated on the remainder until every
/// center is assigned.
///
/// # Errors
///
/// [`Error::Domain`] unless `σ ≥ 0` and `c > 0`.
pub fn select_subsets(grid: &CapGrid, sigma: f64, c: f64) -> Result<SubsetFamily> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(domain(format!("requires σ ≥ 0, got σ = {sigma}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(domain(format!("requires c > 0, got c = {c}")));
    }
    let sep = subset_separation(grid.j, sigma, c);
    let mut remaining: Vec<usize> = (0..grid.len()).collect();
    let mut subsets = Vec::new();
    while !remaining.is_empty() {
        let mut chosen: Vec<usize> = Vec::new();
        let mut rest = Vec::new();
        for &k in &remaining {
            let p = &grid.centers[k];
            if chosen.iter().all(|&q| dist(p, &grid.centers[q]) >= sep) {
                chosen.push(k);
            } else {
                rest.push(k);
            }
        }
        subsets.push(chosen);
        remaining = rest;
    }
    Ok(SubsetFamily {
        parent: grid.clone(),
        sigma,
        c,
        subsets,
    })
}

/// Square matrix stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    n: usize,
    rows: Vec<f64>,
}

impl Rotation {
    /// Identity of size `n`.
    pub fn identity(n: usize) -> Self {
        let mut rows = vec![0.0; n * n];
        for i in 0..n {
            rows[i * n + i] = 1.0;
        }
        Self { n, rows }
    }

    /// Dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry `L[i][k]`.
    pub fn entry(&self, i: usize, k: usize) -> f64 {
        self.rows[i * self.n + k]
    }

    /// `L x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|k| self.entry(i, k) * x[k]).sum())
            .collect()
    }

    /// `L^T x`, written into `out`.
    pub fn apply_transpose_into(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate().take(self.n) {
            *o = (0..self.n).map(|i| self.entry(i, k) * x[i]).sum();
        }
    }

    /// `L^T x`.
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_transpose_into(x, &mut out);
        out
    }

    /// Column `k`, that is `L e_k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.entry(i, k)).collect()
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn determinant(&self) -> f64 {
        let n = self.n;
        let mut a = self.rows.clone();
        let mut det = 1.0;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| a[p * n + col].abs().total_cmp(&a[q * n + col].abs()))
                .unwrap_or(col);
            if a[pivot * n + col] == 0.0 {
                return 0.0;
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(pivot * n + k, col * n + k);
                }
                det = -det;
            }
            let d = a[col * n + col];
            det *= d;
            for row in col + 1..n {
                let f = a[row * n + col] / d;
                for k in col..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
            }
        }
        det
    }

    /// `max |(L^T L − I)_{ik}|`.
    pub fn orthogonality_residual(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for k in 0..n {
                let s: f64 = (0..n).map(|l| self.entry(l, i) * self.entry(l, k)).sum();
                let target = if i == k { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }
}

/// Rotation `L` with `det L = 1` and `L^T center = e_1`.
///
/// For `center = e_1` this is the identity. Otherwise it is the Householder
/// reflection `H = I − 2vv^T/|v|²`, `v = center − e_1`, followed by a sign
/// flip of the last coordinate, `L = H · diag(1, …, 1, −1)`.
///
/// # Errors
///
/// [`Error::Domain`] unless `n ≥ 2` and `|center| = 1` to `1e-12`.
pub fn rotation_to_pole(center: &[f64]) -> Result<Rotation> {
    let n = center.len();
    if n < 2 {
        return Err(domain(format!("requires n ≥ 2, got n = {n}")));
    }
    let r = norm(center);
    if !((r - 1.0).abs() <= 1e-12) {
        return Err(domain(format!("requires a unit vector, got |center| = {r}")));
    }
    let mut v = center.to_vec();
    v[0] -= 1.0;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    if vv == 0.0 {
        return Ok(Rotation::identity(n));
    }
    let mut rows = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let h = if i == k { 1.0 } else { 0.0 } - 2.0 * v[i] * v[k] / vv;
            rows[i * n + k] = if k == n - 1 { -h } else { h };
        }
    }
    Ok(Rotation { n, rows })
}

/// The bump `Ψ^μ_{j m}` at distance `λ_m` in the direction of the center
/// `ξ^μ_j`, supported in the box
/// `|λ_m − (L_μ^T x)_1| < 2^{σj+2}`, `|(L_μ^T x)_i| < 2^{(½+σ)j+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpRectangle {
    /// Center index `μ`.
    pub mu: usize,
    /// `L_μ`.
    pub rotation: Rotation,
    /// Scale index.
    pub j: u32,
    /// Cell index `m`.
    pub m: usize,
    /// Spacing exponent.
    pub sigma: f64,
    /// `λ_m`.
    pub lambda_m: f64,
}

impl BumpRectangle {
    /// Rectangle of center `mu` for the cell `m` of `scale`.
    ///
    /// # Errors
    ///
    /// [`Error::Domain`] for an invalid center or cell index.
    pub fn new(grid: &CapGrid, mu: usize, scale: &DyadicScale, m: usize) -> Result<Self> {
        let center = grid
            .centers
            .get(mu)
            .ok_or_else(|| domain(format!("requires μ < {}, got μ = {mu}", grid.len())))?;
        let (_, lambda_m) = scale.cell(m)?;
        Ok(Self {
            mu,
            rotation: rotation_to_pole(center)?,
            j: scale.j,
            m,
            sigma: scale.sigma,
            lambda_m,
        })
    }

    /// Half length `2^{σj+2}` along the center direction.
    pub fn radial_half_length(&self) -> f64 {
        2f64.powf(self.sigma * self.j as f64 + 2.0)
    }

    /// Half width `2^{(½+σ)j+1}` across the center direction.
    pub fn transverse_half_width(&self) -> f64 {
        2f64.powf((0.5 + self.sigma) * self.j as f64 + 1.0)
    }

    /// Whether `x` lies in the open box.
    pub fn contains(&self, x: &[f64]) -> bool {
        let y = self.rotation.apply_transpose(x);
        let w = self.transverse_half_width();
        (y[0] - self.lambda_m).abs() < self.radial_half_length() && y[1..].iter().all(|v| v.abs() < w)
    }

    /// `Ψ^μ_{j m}(x)`.
    pub fn psi(&self, x: &[f64]) -> f64 {
        let y = self.rotation.apply_transpose(x);
        self.psi_rotated(&y)
    }

    /// `Ψ^μ_{j m}` at rotated coordinates `y = L_μ^T x`.
    pub fn psi_rotated(&self, y: &[f64]) -> f64 {
        let jf = self.j as f64;
        let radial = bump(2f64.powf(-self.sigma * jf - 1.0) * (self.lambda_m - y[0]).abs());
        if radial == 0.0 {
            return 0.0;
        }
        let t = 2f64.powf(-(0.5 + self.sigma) * jf);
        y[1..].iter().fold(radial, |acc, v| acc * bump(t * v.abs()))
    }
}

/// `Ψ^μ_{j m}(x)`.
pub fn bump_psi(rect: &BumpRectangle, x: &[f64]) -> f64 {
    rect.psi(x)
}

/// Outcome of one sampled lemma check.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    /// Configurations drawn.
    pub samples: usize,
    /// Configurations where neither alternative held.
    pub violations: usize,
    /// Smallest margin observed; negative when a violation occurred.
    pub min_margin: f64,
}

impl LemmaReport {
    fn new() -> Self {
        Self {
            samples: 0,
            violations: 0,
            min_margin: f64::INFINITY,
        }
    }

    fn record(&mut self, margin: f64) {
        self.samples += 1;
        if margin < 0.0 {
            self.violations += 1;
        }
        self.min_margin = self.min_margin.min(margin);
    }

    /// Zero violations, vacuous when nothing was sampled.
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Sampled checks of the separation geometry for one family and cell.
///
/// Reading of `≈ X` is "within a factor of 2 of X" and of `≳ X` is "at
/// least X/2".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    /// Frequency-side lemma: for `ξ ∈ Γ^{μ̄}`, `L_μ η ∈ Γ^μ`,
    /// `|[L_μ^Tξ − η]_1| ≈ 2` or `|[L_μ^Tξ − η]_i| ≳ 2^{−j/2+σj}`.
    pub lemma_frequency: LemmaReport,
    /// Physical-side lemma: for `x = L_ν u ∈ supp Ψ^μ`, `u_1 ≈ −2^j` or
    /// `|u_i| > 2^{(½+σ)j+1}`.
    pub lemma_physical: LemmaReport,
    /// Samples of `supp Ψ^μ` that fall in the rectangle of another center
    /// of the same subset.
    pub rectangle_overlaps: usize,
    /// Samples where `Ψ^μ Ψ^ν ≠ 0`.
    pub bump_overlaps: usize,
    /// Separation constant of the family.
    pub c: f64,
}

impl GeometryReport {
    /// Whether every sampled check passed.
    pub fn passed(&self) -> bool {
        self.lemma_frequency.passed()
            && self.lemma_physical.passed()
            && self.rectangle_overlaps == 0
            && self.bump_overlaps == 0
    }
}

fn random_unit<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
        let r = norm(&v);
        if r > 1e-3 && r <= 1.0 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

/// Uniform direction within chord distance `radius` of the pole of
/// `rotation` (its first column).
fn random_in_cap<R: Rng>(rng: &mut R, rotation: &Rotation, radius: f64) -> Vec<f64> {
    let n = rotation.n();
    loop {
        let mut y = vec![0.0; n];
        y[0] = 1.0;
        for v in y.iter_mut().skip(1) {
            *v = radius * (2.0 * rng.gen::<f64>() - 1.0);
        }
        let r = norm(&y);
        let unit: Vec<f64> = y.iter().map(|v| v / r).collect();
        let mut e1 = vec![0.0; n];
        e1[0] = 1.0;
        if dist(&unit, &e1) < radius {
            return rotation.apply(&unit);
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Draws random configurations for both separation lemmas and for
/// rectangle disjointness at the cell `m` of `scale`, or at a uniformly
/// drawn cell per configuration when `m` is `None`.
///
/// Each sample picks a subset `Z_ℓ` with at least two centers, a center
/// `μ` and a second center of `Z_ℓ`, which is the nearest one in half of the
/// samples. Families whose subsets are all singletons pass vacuously.
///
/// # Errors
///
/// [`Error::Domain`] if `samples = 0`, the scale index differs from the
/// grid's, or `m` is out of range.
pub fn check_separation_geometry(
    family: &SubsetFamily,
    scale: &DyadicScale,
    m: Option<usize>,
    samples: usize,
    seed: u64,
) -> Result<GeometryReport> {
    if samples == 0 {
        return Err(domain("requires samples ≥ 1"));
    }
    let grid = &family.parent;
    if scale.j != grid.j {
        return Err(domain(format!(
            "requires the scale index {} of the grid, got {}",
            grid.j, scale.j
        )));
    }
    if let Some(m) = m {
        scale.cell(m)?;
    }
    let n = grid.n;
    let j = grid.j as f64;
    let sigma = family.sigma;
    let mut report = GeometryReport {
        lemma_frequency: LemmaReport::new(),
        lemma_physical: LemmaReport::new(),
        rectangle_overlaps: 0,
        bump_overlaps: 0,
        c: family.c,
    };
    let pools: Vec<&Vec<usize>> = family.subsets.iter().filter(|z| z.len() >= 2).collect();
    if pools.is_empty() {
        report.lemma_frequency.min_margin = 0.0;
        report.lemma_physical.min_margin = 0.0;
        return Ok(report);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = cover_bound(grid.j);
    let transverse = 0.5 * 2f64.powf(-j / 2.0 + sigma * j);
    let far = 2f64.powf((0.5 + sigma) * j + 1.0);
    let two_j = 2f64.powf(j);
    for _ in 0..samples {
        let z = pools[rng.gen_range(0..pools.len())];
        let mu = z[rng.gen_range(0..z.len())];
        let other = if rng.gen::<bool>() {
            *z.iter()
                .filter(|&&q| q != mu)
                .min_by(|&&p, &&q| {
                    dist(&grid.centers[p], &grid.centers[mu]).total_cmp(&dist(&grid.centers[q], &grid.centers[mu]))
                })
                .unwrap_or(&mu)
        } else {
            loop {
                let q = z[rng.gen_range(0..z.len())];
                if q != mu {
                    break q;
                }
            }
        };
        let rot_mu = rotation_to_pole(&grid.centers[mu])?;
        let rot_other = rotation_to_pole(&grid.centers[other])?;

        // Frequency side: η with L_μη ∈ Γ^μ, ξ ∈ Γ^{μ̄}.
        let eta_dir = rot_mu.apply_transpose(&random_in_cap(&mut rng, &rot_mu, cap));
        let eta_norm = uniform(&mut rng, 1.0 / 3.0, 3.0);
        let xi_dir = random_in_cap(&mut rng, &rot_other, cap);
        let xi_norm = uniform(&mut rng, 0.1, 10.0);
        let rotated = rot_mu.apply_transpose(&xi_dir);
        let d: Vec<f64> = (0..n).map(|i| xi_norm * rotated[i] - eta_norm * eta_dir[i]).collect();
        let first = d[0].abs();
        let margin_first = (first - 1.0).min(4.0 - first) / 1.0;
        let side = d[1..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let margin_side = side / transverse - 1.0;
        report.lemma_frequency.record(margin_first.max(margin_side));

        // Physical side: x in the box of μ, u = L_ν^T x.
        let cell = m.unwrap_or_else(|| rng.gen_range(1..=scale.cells()));
        let rect_mu = BumpRectangle::new(grid, mu, scale, cell)?;
        let rect_nu = BumpRectangle {
            mu: other,
            rotation: rot_other.clone(),
            ..rect_mu.clone()
        };
        let mut y = vec![0.0; n];
        y[0] = rect_mu.lambda_m + rect_mu.radial_half_length() * (2.0 * rng.gen::<f64>() - 1.0);
        for v in y.iter_mut().skip(1) {
            *v = rect_mu.transverse_half_width() * (2.0 * rng.gen::<f64>() - 1.0);
        }
        let x = rot_mu.apply(&y);
        let u = rot_other.apply_transpose(&x);
        let margin_back = (-u[0] / two_j - 0.5).min(2.0 - (-u[0] / two_j));
        let across = u[1..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let margin_across = across / far - 1.0;
        report.lemma_physical.record(margin_back.max(margin_across));
        if rect_nu.contains(&x) {
            report.rectangle_overlaps += 1;
        }
        if rect_mu.psi_rotated(&y) * rect_nu.psi(&x) != 0.0 {
            report.bump_overlaps += 1;
        }
    }
    Ok(report)
}

/// Smallest `c` in `candidates` (scanned in increasing order) for which
/// [`check_separation_geometry`] passes, with the report at that `c`.
///
/// # Errors
///
/// As [`select_subsets`] and [`check_separation_geometry`].
pub fn smallest_separation_constant(
    grid: &CapGrid,
    sigma: f64,
    scale: &DyadicScale,
    m: Option<usize>,
    samples: usize,
    seed: u64,
    candidates: &[f64],
) -> Result<Option<(f64, GeometryReport)>> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    for c in sorted {
        let family = select_subsets(grid, sigma, c)?;
        let report = check_separation_geometry(&family, scale, m, samples, seed)?;
        if report.passed() {
            return Ok(Some((c, report)));
        }
    }
    Ok(None)
}
