//! Radial kernel profiles and kernel matrices.
//!
//! A radial kernel is described by its profile `h`, evaluated on the distance
//! `r = ‖x - y‖`. Each [`Kernel`] knows `h`, `h'` and `h''` in closed form,
//! which the smoothness diagnostic [`c_h_diagnostic`] needs.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{dot, norm, SymMatrix};
use crate::model::Dataset;

/// Relative tolerance on `‖x‖ = √n` for inputs of the cosine kernel.
pub const SPHERE_TOL: f64 = 1e-6;

const GRID_POINTS: usize = 10_000;

/// Radial kernel profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// `h(r) = exp(-r² / (2τ²))`.
    Gaussian { tau: f64 },
    /// `h(r) = r`.
    Distance,
    /// `h(r) = r` up to `r₀`, constant `3r₀/2` from `2r₀` on, joined by a
    /// quintic that matches value, slope and curvature at both ends.
    SmoothedDistance { r0: f64 },
    /// `h_t(r) = cos(t (n - r²/2) / √n)`. For points on the sphere of
    /// radius `√n` this is `cos(t ⟨x, y⟩ / √n)`, and that is the form used
    /// when building matrices.
    Cosine { t: f64, dim: usize },
}

impl Kernel {
    pub fn gaussian(tau: f64) -> Result<Self> {
        let k = Kernel::Gaussian { tau };
        k.validate()?;
        Ok(k)
    }

    pub fn cosine(t: f64, dim: usize) -> Result<Self> {
        let k = Kernel::Cosine { t, dim };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Gaussian { tau } if !(tau > 0.0) || tau.is_nan() => invalid(format!(
                "gaussian bandwidth tau must be positive, got {tau}"
            )),
            Kernel::SmoothedDistance { r0 } if !(r0 > 0.0 && r0.is_finite()) => invalid(format!(
                "smoothed distance radius r0 must be positive, got {r0}"
            )),
            Kernel::Cosine { t, dim } if !(t > 0.0 && t.is_finite()) || dim == 0 => invalid(
                format!("cosine kernel needs t > 0 and a positive dimension, got t={t}, n={dim}"),
            ),
            _ => Ok(()),
        }
    }

    /// Whether the kernel is positive definite.
    pub fn is_positive_definite(&self) -> bool {
        matches!(self, Kernel::Gaussian { .. })
    }

    /// Profile value `h(r)`.
    pub fn profile(&self, r: f64) -> f64 {
        match *self {
            Kernel::Gaussian { tau } => (-r * r / (2.0 * tau * tau)).exp(),
            Kernel::Distance => r,
            Kernel::SmoothedDistance { r0 } => smoothed(r, r0).0,
            Kernel::Cosine { t, dim } => {
                let n = dim as f64;
                (t * (n - r * r / 2.0) / n.sqrt()).cos()
            }
        }
    }

    /// `(h'(r), h''(r))`, or `None` where the profile is not twice
    /// differentiable.
    pub fn derivatives(&self, r: f64) -> Option<(f64, f64)> {
        match *self {
            Kernel::Gaussian { tau } => {
                let t2 = tau * tau;
                let h = (-r * r / (2.0 * t2)).exp();
                Some((-r / t2 * h, (r * r / (t2 * t2) - 1.0 / t2) * h))
            }
            Kernel::Distance => (r > 0.0).then_some((1.0, 0.0)),
            Kernel::SmoothedDistance { r0 } => (r > 0.0).then(|| {
                let (_, d1, d2) = smoothed(r, r0);
                (d1, d2)
            }),
            Kernel::Cosine { t, dim } => {
                let n = dim as f64;
                let u = t * (n - r * r / 2.0) / n.sqrt();
                let (s, c) = u.sin_cos();
                Some((
                    s * t * r / n.sqrt(),
                    -c * t * t * r * r / n + s * t / n.sqrt(),
                ))
            }
        }
    }

    /// Kernel value on a pair of points.
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Cosine { t, dim } => (t * dot(x, y) / (dim as f64).sqrt()).cos(),
            _ => self.profile(distance(x, y)),
        }
    }
}

#[inline]
fn distance(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = x.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        for l in 0..4 {
            let d = x[k + l] - y[k + l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for k in 4 * chunks..x.len() {
        let d = x[k] - y[k];
        tail += d * d;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3]) + tail).sqrt()
}

/// Value and first two derivatives of the smoothed distance profile.
///
/// On `[r₀, 2r₀]` with `u = (r - r₀)/r₀` the profile is
/// `r₀ (1 + u - u³ + u⁴/2)`, the quintic Hermite interpolant between slope 1
/// and slope 0 with zero curvature at both ends.
fn smoothed(r: f64, r0: f64) -> (f64, f64, f64) {
    if r <= r0 {
        (r, 1.0, 0.0)
    } else if r >= 2.0 * r0 {
        (1.5 * r0, 0.0, 0.0)
    } else {
        let u = (r - r0) / r0;
        let p = u - u.powi(3) + 0.5 * u.powi(4);
        let dp = 1.0 - 3.0 * u * u + 2.0 * u.powi(3);
        let ddp = -6.0 * u + 6.0 * u * u;
        (r0 * (1.0 + p), dp, ddp / r0)
    }
}

/// C² truncation of the distance kernel at radius `r0`.
pub fn smoothed_distance_kernel(r0: f64) -> Result<Kernel> {
    let k = Kernel::SmoothedDistance { r0 };
    k.validate()?;
    Ok(k)
}

/// `cos(t ⟨x, y⟩ / √n)` for two points on the sphere of radius `√n`.
pub fn h_t_eval(x: &[f64], y: &[f64], t: f64) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return invalid("points must be nonempty and of equal dimension");
    }
    let radius = (x.len() as f64).sqrt();
    for (name, p) in [("x", x), ("y", y)] {
        let r = norm(p);
        if (r - radius).abs() > SPHERE_TOL * radius {
            return invalid(format!(
                "{name} has norm {r}, expected a point on the sphere of radius {radius}"
            ));
        }
    }
    Kernel::cosine(t, x.len())?;
    Ok((t * dot(x, y) / radius).cos())
}

/// Normalised kernel matrix `Φ_h(X)` with entries `h(‖xᵢ - xⱼ‖) / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub matrix: SymMatrix,
    /// Component label of each row.
    pub labels: Vec<usize>,
    /// Number of components the labels refer to.
    pub components: usize,
    /// Whether entries carry the `1/N` factor.
    pub normalized: bool,
}

impl KernelMatrix {
    /// Wraps an arbitrary matrix as a normalised kernel matrix with the given
    /// component labels.
    pub fn from_parts(matrix: SymMatrix, labels: Vec<usize>, components: usize) -> Result<Self> {
        if labels.len() != matrix.dim() {
            return invalid(format!(
                "{} labels for a {}x{} matrix",
                labels.len(),
                matrix.dim(),
                matrix.dim()
            ));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= components) {
            return invalid(format!(
                "label {l} out of range for {components} components"
            ));
        }
        Ok(Self {
            matrix,
            labels,
            components,
            normalized: true,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Index ranges of each component, when the labels are contiguous.
    pub fn block_bounds(&self) -> Result<Vec<Range<usize>>> {
        if self.labels.windows(2).any(|w| w[0] > w[1]) {
            return invalid("labels are not grouped into contiguous blocks");
        }
        Ok((0..self.components)
            .map(|c| {
                let start = self.labels.partition_point(|&l| l < c);
                let end = self.labels.partition_point(|&l| l <= c);
                start..end
            })
            .collect())
    }

    /// Member indices of every component, in index order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.components];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }
}

fn check_kernel_for(data: &Dataset, kernel: &Kernel) -> Result<()> {
    kernel.validate()?;
    if let Kernel::Cosine { dim, .. } = *kernel {
        if dim != data.dim() {
            return invalid(format!(
                "cosine kernel built for dimension {dim}, data has dimension {}",
                data.dim()
            ));
        }
        let radius = (dim as f64).sqrt();
        if let Some(j) =
            (0..data.len()).find(|&j| (norm(data.point(j)) - radius).abs() > SPHERE_TOL * radius)
        {
            return invalid(format!(
                "point {j} is off the sphere of radius {radius}; project the data first"
            ));
        }
    }
    Ok(())
}

const TILE: usize = 48;

/// Builds `Φ_h(X)`. Each unordered pair is evaluated once and mirrored, so
/// the result is exactly symmetric. Work is split over tiles of rows.
pub fn kernel_matrix(data: &Dataset, kernel: &Kernel) -> Result<KernelMatrix> {
    check_kernel_for(data, kernel)?;
    let n_pts = data.len();
    let inv = 1.0 / n_pts as f64;
    let mut buf = vec![0.0; n_pts * n_pts];
    buf.par_chunks_mut(TILE * n_pts)
        .enumerate()
        .for_each(|(tile, rows)| {
            let i0 = tile * TILE;
            let i1 = (i0 + TILE).min(n_pts);
            for j0 in (i0..n_pts).step_by(TILE) {
                let j1 = (j0 + TILE).min(n_pts);
                for i in i0..i1 {
                    let xi = data.point(i);
                    let row = &mut rows[(i - i0) * n_pts..(i - i0 + 1) * n_pts];
                    for j in j0.max(i)..j1 {
                        row[j] = kernel.eval(xi, data.point(j)) * inv;
                    }
                }
            }
        });
    KernelMatrix::from_parts(
        SymMatrix::from_upper_buffer(n_pts, buf),
        data.labels().to_vec(),
        data.components(),
    )
}

/// Per-component block sums of the unnormalised kernel, computed pairwise
/// without storing the matrix. Entry `(a, b)` of the result is
/// `Σ_{i ∈ a, j ∈ b} h(‖xᵢ - xⱼ‖)`; the second value holds the block sizes.
pub fn kernel_block_sums(data: &Dataset, kernel: &Kernel) -> Result<(Vec<f64>, Vec<usize>)> {
    check_kernel_for(data, kernel)?;
    let k = data.components();
    let n_pts = data.len();
    let labels = data.labels();
    let sums = (0..n_pts.div_ceil(TILE))
        .into_par_iter()
        .map(|tile| {
            let mut acc = vec![0.0; k * k];
            let i0 = tile * TILE;
            let i1 = (i0 + TILE).min(n_pts);
            for j0 in (i0..n_pts).step_by(TILE) {
                let j1 = (j0 + TILE).min(n_pts);
                for i in i0..i1 {
                    let xi = data.point(i);
                    let li = labels[i];
                    for j in j0.max(i)..j1 {
                        let v = kernel.eval(xi, data.point(j));
                        let lj = labels[j];
                        if i == j {
                            acc[li * k + lj] += v;
                        } else {
                            acc[li * k + lj] += v;
                            acc[lj * k + li] += v;
                        }
                    }
                }
            }
            acc
        })
        .reduce(
            || vec![0.0; k * k],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    Ok((sums, sizes))
}

/// Which smoothness constant to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    /// General components: `c_h`.
    Euclidean,
    /// Components supported on the sphere of radius `√n`: `c_h'`.
    Spherical,
}

/// Numeric value of the kernel smoothness constant.
///
/// Euclidean: `sup_{r ≥ R/2} (|h''| + |h'|/r) + ‖h'‖_∞ e^{-R}`.
/// Spherical: `sup_{r ≥ R/L} (L²|h''| + |h'|) / r + ‖h'‖_∞ / R` with
/// `L = max(ln R, 1)`.
///
/// Suprema are taken over a logarithmic grid of 10⁴ points ending at `4√n`,
/// and `‖h'‖_∞` over a grid on `[4√n·10⁻⁶, 4√n]`. Every unspecified
/// asymptotic constant is set to one, so the value is only meaningful for
/// comparing trends across dimensions.
pub fn c_h_diagnostic(kernel: &Kernel, radius: f64, dim: usize, geometry: Geometry) -> Result<f64> {
    kernel.validate()?;
    if !(radius > 0.0 && radius.is_finite()) {
        return invalid(format!("radius R must be positive, got {radius}"));
    }
    if dim == 0 {
        return invalid("dimension must be positive");
    }
    let hi = 4.0 * (dim as f64).sqrt();
    let log_r = radius.ln().max(1.0);
    let lo = match geometry {
        Geometry::Euclidean => radius / 2.0,
        Geometry::Spherical => radius / log_r,
    };
    if lo >= hi {
        return invalid(format!(
            "grid lower end {lo} is not below the upper end 4√n = {hi}"
        ));
    }
    let derivs = |r: f64| {
        kernel.derivatives(r).ok_or_else(|| {
            crate::Error::Validation(format!("kernel derivatives undefined at r = {r}"))
        })
    };
    let sup = log_grid(lo, hi)
        .map(|r| {
            let (d1, d2) = derivs(r)?;
            Ok(match geometry {
                Geometry::Euclidean => d2.abs() + d1.abs() / r,
                Geometry::Spherical => (log_r * log_r * d2.abs() + d1.abs()) / r,
            })
        })
        .try_fold(0.0f64, |acc, v: Result<f64>| v.map(|v| acc.max(v)))?;
    let slope_max = log_grid(hi * 1e-6, hi)
        .map(|r| derivs(r).map(|(d1, _)| d1.abs()))
        .try_fold(0.0f64, |acc, v| v.map(|v| acc.max(v)))?;
    let tail = match geometry {
        Geometry::Euclidean => slope_max * (-radius).exp(),
        Geometry::Spherical => slope_max / radius,
    };
    Ok(sup + tail)
}

fn log_grid(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..GRID_POINTS).map(move |i| {
        if i == 0 {
            lo
        } else if i == GRID_POINTS - 1 {
            hi
        } else {
            (a + (b - a) * i as f64 / (GRID_POINTS - 1) as f64).exp()
        }
    })
}
