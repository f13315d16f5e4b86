//! Gram matrices of mixture components in the kernel distance.
//!
//! For a radial kernel `h`, the component Gram matrix has entries
//! `G(i, j) = E h(‖xᵢ - xⱼ‖)` with `xᵢ ~ μᵢ` and `xⱼ ~ μⱼ` independent. This
//! module computes it three ways: in closed form for Gaussian components
//! under the Gaussian kernel, empirically from samples, and through the
//! second-order expansion of the cosine kernel `h_t`. It also provides the
//! covariance separation statistic Δ.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::kernels::{kernel_block_sums, Kernel, KernelMatrix};
use crate::linalg::{dot, sym_eig, Cholesky, SymMatrix};
use crate::model::{Covariance, Dataset, MixtureModel};

/// How a [`ComponentGram`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramSource {
    ClosedForm,
    Empirical,
    SecondOrder,
}

/// `k × k` Gram matrix of the mixture components.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentGram {
    pub matrix: SymMatrix,
    pub source: GramSource,
}

impl ComponentGram {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    /// Product of the eigenvalues.
    pub fn determinant(&self) -> Result<f64> {
        if self.matrix.dim() == 2 {
            let m = &self.matrix;
            return Ok(m.get(0, 0) * m.get(1, 1) - m.get(0, 1) * m.get(1, 0));
        }
        Ok(sym_eig(&self.matrix)?.values.iter().product())
    }

    /// Entry `(i, j)` scaled by `√(wᵢ wⱼ)`.
    pub fn weighted(&self, weights: &[f64]) -> Result<SymMatrix> {
        if weights.len() != self.matrix.dim() {
            return invalid("one weight per component is required");
        }
        Ok(SymMatrix::from_upper(self.matrix.dim(), |i, j| {
            self.matrix.get(i, j) * (weights[i] * weights[j]).sqrt()
        }))
    }
}

/// `E exp(-‖u‖² / (2τ²))` for `u ~ N(mean, cov)`.
///
/// Equals `det(I + Σ/τ²)^{-1/2} · exp(-½ μᵀ(Σ + τ²I)⁻¹μ)`. Diagonal and
/// isotropic covariances use the product form; full covariances go through a
/// Cholesky factorisation of `Σ + τ²I`, which is positive definite for any
/// PSD `Σ`.
pub fn gaussian_expectation(mean: &[f64], cov: &Covariance, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return invalid(format!("bandwidth tau must be positive, got {tau}"));
    }
    let dim = mean.len();
    if dim == 0 {
        return invalid("mean must be nonempty");
    }
    let t2 = tau * tau;
    let (log_det, quad) = match cov.as_diagonal(dim) {
        Some(diag) => {
            if diag.len() != dim {
                return invalid("covariance and mean dimensions differ");
            }
            if diag.iter().any(|&v| !(v >= 0.0)) {
                return invalid("covariance must be positive semidefinite");
            }
            let log_det: f64 = diag.iter().map(|&v| (v / t2).ln_1p()).sum();
            let quad: f64 = diag.iter().zip(mean).map(|(&v, &m)| m * m / (v + t2)).sum();
            (log_det, quad)
        }
        None => {
            let sigma = cov.to_dense(dim);
            if sigma.dim() != dim {
                return invalid("covariance and mean dimensions differ");
            }
            let shifted =
                SymMatrix::from_upper(dim, |i, j| sigma.get(i, j) + if i == j { t2 } else { 0.0 });
            let chol = Cholesky::factor(&shifted)?;
            let log_det = chol.log_det() - dim as f64 * t2.ln();
            let quad = dot(mean, &chol.solve(mean));
            (log_det, quad)
        }
    };
    Ok((-0.5 * log_det - 0.5 * quad).exp())
}

/// Closed-form Gram matrix of a Gaussian mixture under the Gaussian kernel
/// with bandwidth `tau`: entry `(i, j)` is the Gaussian expectation for the
/// difference `xᵢ - xⱼ ~ N(μᵢ - μⱼ, Σᵢ + Σⱼ)`.
pub fn closed_form_gram(model: &MixtureModel, tau: f64) -> Result<ComponentGram> {
    let k = model.k();
    let dim = model.dim();
    let comps = model.components();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let diff: Vec<f64> = comps[i]
                .mean
                .iter()
                .zip(&comps[j].mean)
                .map(|(a, b)| a - b)
                .collect();
            let cov = comps[i].covariance.sum(&comps[j].covariance, dim);
            gaussian_expectation(&diff, &cov, tau)
        })
        .collect::<Result<_>>()?;
    let mut data = vec![0.0; k * k];
    for (&(i, j), v) in pairs.iter().zip(values) {
        data[i * k + j] = v;
        data[j * k + i] = v;
    }
    Ok(ComponentGram {
        matrix: SymMatrix::new(k, data)?,
        source: GramSource::ClosedForm,
    })
}

/// Finite-sample Gram matrix: entry `(i, j)` is the mean of the
/// unnormalised kernel over all pairs in `Xᵢ × Xⱼ`.
pub fn empirical_gram(km: &KernelMatrix) -> Result<ComponentGram> {
    let members = km.members();
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return invalid(format!("component {c} has no points"));
    }
    let scale = if km.normalized { km.len() as f64 } else { 1.0 };
    let k = km.components;
    let gram = SymMatrix::from_upper(k, |a, b| {
        let sum: f64 = members[a]
            .iter()
            .map(|&i| members[b].iter().map(|&j| km.matrix.get(i, j)).sum::<f64>())
            .sum();
        scale * sum / (members[a].len() * members[b].len()) as f64
    });
    Ok(ComponentGram {
        matrix: gram,
        source: GramSource::Empirical,
    })
}

/// Same as [`empirical_gram`] on `kernel_matrix(data, kernel)`, but
/// accumulated pairwise so that large samples never materialise the
/// `N × N` matrix.
pub fn empirical_gram_from_data(data: &Dataset, kernel: &Kernel) -> Result<ComponentGram> {
    let (sums, sizes) = kernel_block_sums(data, kernel)?;
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return invalid(format!("component {c} has no points"));
    }
    let k = sizes.len();
    let gram = SymMatrix::from_upper(k, |a, b| sums[a * k + b] / (sizes[a] * sizes[b]) as f64);
    Ok(ComponentGram {
        matrix: gram,
        source: GramSource::Empirical,
    })
}

/// Second-order expansion of the cosine-kernel Gram matrix:
/// `G(i, j) ≈ 1 - (t² / 2n) · trace(SᵢSⱼ)` with `S = Σ + μμᵀ` the
/// non-centered second moment.
pub fn gram_ht_second_order(model: &MixtureModel, t: f64) -> Result<ComponentGram> {
    if !(t >= 0.0 && t.is_finite()) {
        return invalid(format!("t must be non-negative, got {t}"));
    }
    let comps = model.components();
    let factor = t * t / (2.0 * model.dim() as f64);
    let gram = SymMatrix::from_upper(model.k(), |i, j| {
        1.0 - factor * comps[i].second_moment_trace_product(&comps[j])
    });
    Ok(ComponentGram {
        matrix: gram,
        source: GramSource::SecondOrder,
    })
}

/// `√n · min_{u≠v} ‖Sᵤ/tr Sᵤ - Sᵥ/tr Sᵥ‖_F` from traces `tr Sᵤ` and trace
/// products `tr(SᵤSᵥ)` (row-major `k × k`).
fn delta_from_moments(dim: usize, traces: &[f64], products: &[f64]) -> Result<f64> {
    let k = traces.len();
    if k < 2 {
        return invalid(format!("separation needs at least two components, got {k}"));
    }
    if let Some(t) = traces.iter().find(|&&t| !(t > 0.0)) {
        return invalid(format!("second-moment trace must be positive, got {t}"));
    }
    let mut best = f64::INFINITY;
    for u in 0..k {
        for v in (u + 1)..k {
            let sq = products[u * k + u] / (traces[u] * traces[u])
                + products[v * k + v] / (traces[v] * traces[v])
                - 2.0 * products[u * k + v] / (traces[u] * traces[v]);
            best = best.min(sq.max(0.0).sqrt());
        }
    }
    Ok((dim as f64).sqrt() * best)
}

/// Separation statistic Δ of a mixture, computed from the non-centered
/// second moments of its components.
pub fn delta_statistic(model: &MixtureModel) -> Result<f64> {
    let comps = model.components();
    let k = comps.len();
    let traces: Vec<f64> = comps.iter().map(|c| c.second_moment_trace()).collect();
    let mut products = vec![0.0; k * k];
    for u in 0..k {
        for v in u..k {
            let p = comps[u].second_moment_trace_product(&comps[v]);
            products[u * k + v] = p;
            products[v * k + u] = p;
        }
    }
    delta_from_moments(model.dim(), &traces, &products)
}

/// Plug-in estimate of Δ from labelled data.
///
/// Uses `tr Sᵤ ≈ mean ‖x‖²` over component `u` and the unbiased pair
/// estimates `tr(SᵤSᵥ) ≈ mean ⟨x, y⟩²` over distinct pairs `x ∈ u`,
/// `y ∈ v`, so no `n × n` matrix is ever formed.
pub fn estimate_delta(data: &Dataset) -> Result<f64> {
    let k = data.components();
    let mut members = vec![Vec::new(); k];
    for (j, &l) in data.labels().iter().enumerate() {
        members[l].push(j);
    }
    if let Some(c) = members.iter().position(|m| m.len() < 2) {
        return invalid(format!(
            "component {c} needs at least two points to estimate Δ"
        ));
    }
    let traces: Vec<f64> = members
        .iter()
        .map(|m| {
            m.iter()
                .map(|&j| dot(data.point(j), data.point(j)))
                .sum::<f64>()
                / m.len() as f64
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|u| (u..k).map(move |v| (u, v))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(u, v)| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for (a, &i) in members[u].iter().enumerate() {
                let start = if u == v { a + 1 } else { 0 };
                for &j in &members[v][start..] {
                    let ip = dot(data.point(i), data.point(j));
                    sum += ip * ip;
                    count += 1;
                }
            }
            sum / count as f64
        })
        .collect();
    let mut products = vec![0.0; k * k];
    for (&(u, v), p) in pairs.iter().zip(values) {
        products[u * k + v] = p;
        products[v * k + u] = p;
    }
    delta_from_moments(data.dim(), &traces, &products)
}
