//! Gaussian mixture models and reproducible sampling.
//!
//! Randomness comes from ChaCha8 streams: stream 0 of the user seed decides
//! how many points each component receives, and component `c` draws its
//! points from stream `c + 1`. Standard normals are produced with the
//! Box–Muller transform, so a dataset is a pure function of
//! `(model, size, seed)` regardless of thread count.

use std::f64::consts::PI;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{dot, norm, sym_eig, SymMatrix};

/// Covariance of one Gaussian component.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    /// `σ² I`.
    Isotropic(f64),
    /// Diagonal covariance given by its eigenvalues.
    Diagonal(Vec<f64>),
    Full(SymMatrix),
}

impl Covariance {
    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Covariance::Isotropic(v) => {
                if !(*v >= 0.0) || !v.is_finite() {
                    return invalid(format!("isotropic variance must be >= 0, got {v}"));
                }
            }
            Covariance::Diagonal(d) => {
                if d.len() != dim {
                    return invalid(format!(
                        "diagonal covariance has {} entries, model dimension is {dim}",
                        d.len()
                    ));
                }
                if let Some(v) = d.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                    return invalid(format!("covariance eigenvalue must be >= 0, got {v}"));
                }
            }
            Covariance::Full(m) => {
                if m.dim() != dim {
                    return invalid(format!(
                        "covariance matrix is {}x{}, model dimension is {dim}",
                        m.dim(),
                        m.dim()
                    ));
                }
                let eig = sym_eig(m)?;
                let floor = -1e-10 * m.max_abs().max(1.0);
                if let Some(v) = eig.values.iter().find(|&&v| v < floor) {
                    return invalid(format!(
                        "covariance matrix is not positive semidefinite (eigenvalue {v})"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn trace(&self, dim: usize) -> f64 {
        match self {
            Covariance::Isotropic(v) => v * dim as f64,
            Covariance::Diagonal(d) => d.iter().sum(),
            Covariance::Full(m) => m.trace(),
        }
    }

    pub fn to_dense(&self, dim: usize) -> SymMatrix {
        match self {
            Covariance::Isotropic(v) => SymMatrix::from_diag(&vec![*v; dim]),
            Covariance::Diagonal(d) => SymMatrix::from_diag(d),
            Covariance::Full(m) => m.clone(),
        }
    }

    /// Diagonal entries, if the covariance is diagonal in the standard basis.
    pub fn as_diagonal(&self, dim: usize) -> Option<Vec<f64>> {
        match self {
            Covariance::Isotropic(v) => Some(vec![*v; dim]),
            Covariance::Diagonal(d) => Some(d.clone()),
            Covariance::Full(_) => None,
        }
    }

    /// Sum of two covariances, staying in the cheapest representation.
    pub fn sum(&self, other: &Covariance, dim: usize) -> Covariance {
        match (self, other) {
            (Covariance::Isotropic(a), Covariance::Isotropic(b)) => Covariance::Isotropic(a + b),
            (Covariance::Full(_), _) | (_, Covariance::Full(_)) => Covariance::Full(
                self.to_dense(dim)
                    .add(&other.to_dense(dim))
                    .expect("same dimension"),
            ),
            _ => {
                let a = self.as_diagonal(dim).expect("diagonal");
                let b = other.as_diagonal(dim).expect("diagonal");
                Covariance::Diagonal(a.iter().zip(&b).map(|(x, y)| x + y).collect())
            }
        }
    }

    /// `vᵀ Σ v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        match self {
            Covariance::Isotropic(s) => s * dot(v, v),
            Covariance::Diagonal(d) => d.iter().zip(v).map(|(di, vi)| di * vi * vi).sum(),
            Covariance::Full(m) => m.quadratic_form(v),
        }
    }

    /// `trace(Σ_self Σ_other)`.
    pub fn trace_product(&self, other: &Covariance, dim: usize) -> f64 {
        match (self.as_diagonal(dim), other.as_diagonal(dim)) {
            (Some(a), Some(b)) => dot(&a, &b),
            _ => dot(
                self.to_dense(dim).as_slice(),
                other.to_dense(dim).as_slice(),
            ),
        }
    }

    /// Symmetric square root used to colour standard normal draws.
    fn sqrt(&self, dim: usize) -> Result<CovarianceRoot> {
        Ok(match self {
            Covariance::Isotropic(v) => CovarianceRoot::Diagonal(vec![v.sqrt(); dim]),
            Covariance::Diagonal(d) => {
                CovarianceRoot::Diagonal(d.iter().map(|v| v.sqrt()).collect())
            }
            Covariance::Full(m) => {
                let eig = sym_eig(m)?;
                let root = eig.reconstruct_with(|v| v.max(0.0).sqrt());
                CovarianceRoot::Full(root)
            }
        })
    }
}

enum CovarianceRoot {
    Diagonal(Vec<f64>),
    Full(SymMatrix),
}

/// One weighted Gaussian component `N(mean, covariance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Covariance,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: Vec<f64>, covariance: Covariance) -> Self {
        Self {
            weight,
            mean,
            covariance,
        }
    }

    /// Centered Gaussian with the given covariance.
    pub fn centered(weight: f64, dim: usize, covariance: Covariance) -> Self {
        Self::new(weight, vec![0.0; dim], covariance)
    }

    /// `trace(Σ + μμᵀ)`.
    pub fn second_moment_trace(&self) -> f64 {
        self.covariance.trace(self.mean.len()) + dot(&self.mean, &self.mean)
    }

    /// `trace(SᵢSⱼ)` for the non-centered second moments `S = Σ + μμᵀ`.
    pub fn second_moment_trace_product(&self, other: &GaussianComponent) -> f64 {
        let dim = self.mean.len();
        let mm = dot(&self.mean, &other.mean);
        self.covariance.trace_product(&other.covariance, dim)
            + self.covariance.quad_form(&other.mean)
            + other.covariance.quad_form(&self.mean)
            + mm * mm
    }
}

/// Finite mixture of Gaussians in dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    dim: usize,
    components: Vec<GaussianComponent>,
}

impl MixtureModel {
    /// Validates dimensions, covariances and weights. Weights must be
    /// non-negative and sum to one; zero-weight components are allowed and
    /// never receive samples.
    pub fn new(dim: usize, components: Vec<GaussianComponent>) -> Result<Self> {
        if dim == 0 {
            return invalid("model dimension must be positive");
        }
        if components.is_empty() {
            return invalid("a mixture needs at least one component");
        }
        for (i, c) in components.iter().enumerate() {
            if c.mean.len() != dim {
                return invalid(format!(
                    "component {i} mean has length {}, model dimension is {dim}",
                    c.mean.len()
                ));
            }
            if c.mean.iter().any(|v| !v.is_finite()) {
                return invalid(format!("component {i} mean is not finite"));
            }
            if !(c.weight >= 0.0 && c.weight <= 1.0) {
                return invalid(format!("component {i} weight {} outside [0, 1]", c.weight));
            }
            c.covariance.validate(dim)?;
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("component weights sum to {total}, expected 1"));
        }
        Ok(Self { dim, components })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// Smallest component radius `min_i (trace Σᵢ)^{1/2}`.
    pub fn radius(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.covariance.trace(self.dim).sqrt())
            .fold(f64::INFINITY, f64::min)
    }

    /// Equal-weight isotropic mixture with the given means and variances.
    pub fn isotropic(means: Vec<Vec<f64>>, variances: &[f64]) -> Result<Self> {
        if means.len() != variances.len() || means.is_empty() {
            return invalid("need one variance per mean and at least one component");
        }
        let dim = means[0].len();
        let w = 1.0 / means.len() as f64;
        let components = means
            .into_iter()
            .zip(variances)
            .map(|(m, &v)| GaussianComponent::new(w, m, Covariance::Isotropic(v)))
            .collect();
        Self::new(dim, components)
    }
}

/// Two equal-weight centered Gaussians whose diagonal covariances are
/// `1 + s` on the first half of the coordinates and `1 - s` on the second
/// half, and the reverse. Their sum is `2I`.
///
/// `s = 0` is accepted and gives two identical standard Gaussians.
pub fn figure1_model(n: usize, s: f64) -> Result<MixtureModel> {
    if n == 0 || !n.is_multiple_of(2) {
        return invalid(format!(
            "dimension n must be a positive even integer, got {n}"
        ));
    }
    if !(0.0..1.0).contains(&s) {
        return invalid(format!("parameter s must lie in [0, 1), got {s}"));
    }
    let half = n / 2;
    let first: Vec<f64> = (0..n)
        .map(|i| if i < half { 1.0 + s } else { 1.0 - s })
        .collect();
    let second: Vec<f64> = (0..n)
        .map(|i| if i < half { 1.0 - s } else { 1.0 + s })
        .collect();
    MixtureModel::new(
        n,
        vec![
            GaussianComponent::centered(0.5, n, Covariance::Diagonal(first)),
            GaussianComponent::centered(0.5, n, Covariance::Diagonal(second)),
        ],
    )
}

/// How many points to draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSize {
    /// Exactly `N` points, split between components by a multinomial draw.
    Fixed(usize),
    /// Total drawn from a Poisson law with the given mean.
    Poisson(f64),
    /// Explicit per-component counts.
    PerComponent(Vec<usize>),
}

/// Sample points stored one per column: point `j` occupies
/// `points[j * dim..(j + 1) * dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    components: usize,
    points: Vec<f64>,
    labels: Vec<usize>,
    seed: u64,
}

impl Dataset {
    /// `components` is the number of mixture components the labels refer to;
    /// every label must be smaller than it.
    pub fn new(
        dim: usize,
        components: usize,
        points: Vec<f64>,
        labels: Vec<usize>,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 {
            return invalid("dataset dimension must be positive");
        }
        if labels.is_empty() {
            return invalid("dataset must contain at least one point");
        }
        if points.len() != dim * labels.len() {
            return invalid(format!(
                "{} coordinates do not form {} points of dimension {dim}",
                points.len(),
                labels.len()
            ));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= components) {
            return invalid(format!(
                "label {l} out of range for {components} components"
            ));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return invalid("dataset contains non-finite coordinates");
        }
        Ok(Self {
            dim,
            components,
            points,
            labels,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of points `N`.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    #[inline]
    pub fn point(&self, j: usize) -> &[f64] {
        &self.points[j * self.dim..(j + 1) * self.dim]
    }

    /// Index range of each component, in label order. Fails unless the
    /// labels are nondecreasing, i.e. each component is a contiguous block.
    pub fn block_bounds(&self) -> Result<Vec<Range<usize>>> {
        if self.labels.windows(2).any(|w| w[0] > w[1]) {
            return invalid("labels are not grouped into contiguous nondecreasing blocks");
        }
        let mut bounds = Vec::with_capacity(self.components);
        let mut start = 0;
        for c in 0..self.components {
            let end = start + self.labels[start..].iter().take_while(|&&l| l == c).count();
            bounds.push(start..end);
            start = end;
        }
        Ok(bounds)
    }

    /// Dataset with the same points reordered so that new point `i` is old
    /// point `order[i]`.
    pub fn reordered(&self, order: &[usize]) -> Result<Dataset> {
        if order.len() != self.len() {
            return invalid("permutation length does not match the dataset");
        }
        let mut seen = vec![false; self.len()];
        for &o in order {
            if o >= self.len() || std::mem::replace(&mut seen[o], true) {
                return invalid("order is not a permutation");
            }
        }
        let points = order
            .iter()
            .flat_map(|&o| self.point(o).iter().copied())
            .collect();
        let labels = order.iter().map(|&o| self.labels[o]).collect();
        Dataset::new(self.dim, self.components, points, labels, self.seed)
    }

    /// Applies `f` to every point.
    pub fn map_points(&self, f: impl Fn(&[f64]) -> Vec<f64> + Sync) -> Result<Dataset> {
        let points: Vec<f64> = (0..self.len())
            .into_par_iter()
            .flat_map_iter(|j| f(self.point(j)))
            .collect();
        let dim = points.len() / self.len();
        Dataset::new(dim, self.components, points, self.labels.clone(), self.seed)
    }
}

/// Standard normal variates from the Box–Muller transform.
struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping the logarithm finite.
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

fn component_counts(model: &MixtureModel, size: &SampleSize, seed: u64) -> Result<Vec<usize>> {
    let k = model.k();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let multinomial = |rng: &mut ChaCha8Rng, total: usize| {
        let cumulative: Vec<f64> = model
            .components()
            .iter()
            .scan(0.0, |acc, c| {
                *acc += c.weight;
                Some(*acc)
            })
            .collect();
        let mut counts = vec![0usize; k];
        for _ in 0..total {
            let u: f64 = rng.random::<f64>() * cumulative[k - 1];
            // Zero-weight components own an empty interval and are never hit.
            let c = cumulative.iter().position(|&cw| u < cw).unwrap_or(k - 1);
            counts[c] += 1;
        }
        counts
    };
    match size {
        SampleSize::Fixed(total) => {
            if *total == 0 {
                return invalid("sample size N must be at least 1");
            }
            Ok(multinomial(&mut rng, *total))
        }
        SampleSize::Poisson(mean) => {
            if !(*mean >= 1.0) || !mean.is_finite() {
                return invalid(format!("Poisson mean N0 must be at least 1, got {mean}"));
            }
            let law = Poisson::new(*mean)
                .map_err(|e| crate::Error::Validation(format!("bad Poisson mean: {e}")))?;
            for _ in 0..2 {
                let total = law.sample(&mut rng) as usize;
                if total > 0 {
                    return Ok(multinomial(&mut rng, total));
                }
            }
            invalid("Poisson draw produced zero points twice")
        }
        SampleSize::PerComponent(counts) => {
            if counts.len() != k {
                return invalid(format!(
                    "{} per-component counts given for {k} components",
                    counts.len()
                ));
            }
            if counts.iter().sum::<usize>() == 0 {
                return invalid("per-component counts must include at least one point");
            }
            Ok(counts.clone())
        }
    }
}

/// Draws a dataset from `model`. Points are grouped by component in label
/// order, so each component occupies a contiguous block of columns.
pub fn sample(model: &MixtureModel, size: &SampleSize, seed: u64) -> Result<Dataset> {
    let counts = component_counts(model, size, seed)?;
    let dim = model.dim();
    let blocks: Vec<Vec<f64>> = model
        .components()
        .par_iter()
        .zip(counts.par_iter())
        .enumerate()
        .map(|(c, (comp, &count))| -> Result<Vec<f64>> {
            let root = comp.covariance.sqrt(dim)?;
            let mut normals = NormalStream::new(seed, c as u64 + 1);
            let mut out = Vec::with_capacity(count * dim);
            let mut z = vec![0.0; dim];
            for _ in 0..count {
                z.iter_mut().for_each(|v| *v = normals.next());
                match &root {
                    CovarianceRoot::Diagonal(d) => out.extend(
                        comp.mean
                            .iter()
                            .zip(d)
                            .zip(&z)
                            .map(|((m, s), zi)| m + s * zi),
                    ),
                    CovarianceRoot::Full(r) => {
                        let coloured = r.matvec(&z);
                        out.extend(comp.mean.iter().zip(&coloured).map(|(m, v)| m + v))
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let labels = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &count)| std::iter::repeat_n(c, count))
        .collect();
    Dataset::new(dim, model.k(), blocks.concat(), labels, seed)
}

/// Maps every point `x` to `√n · x / ‖x‖`, the closest point on the sphere of
/// radius `√n` centred at the origin.
pub fn project_to_sphere(data: &Dataset) -> Result<Dataset> {
    let radius = (data.dim() as f64).sqrt();
    if let Some(j) = (0..data.len()).find(|&j| norm(data.point(j)) == 0.0) {
        return invalid(format!(
            "point {j} is zero and has no closest point on the sphere"
        ));
    }
    data.map_points(|x| {
        let scale = radius / norm(x);
        x.iter().map(|v| v * scale).collect()
    })
}

/// Whether every point has norm `√n` within relative tolerance `tol`.
pub fn is_on_sphere(data: &Dataset, tol: f64) -> bool {
    let radius = (data.dim() as f64).sqrt();
    (0..data.len()).all(|j| (norm(data.point(j)) - radius).abs() <= tol * radius)
}
