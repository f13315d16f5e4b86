//! Dense symmetric linear algebra.
//!
//! Everything here works on [`SymMatrix`], a row-major square matrix that is
//! validated to be symmetric on construction. The full eigendecomposition is
//! a cyclic Jacobi solver: slow for large matrices but deterministic and
//! accurate to working precision. Callers that only need a handful of
//! extreme eigenpairs of a large matrix go through [`top_eigenpairs`], which
//! switches to a fully reorthogonalized Lanczos iteration above
//! [`DENSE_EIG_CUTOFF`].

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

/// Largest dimension for which partial eigenproblems are solved with the full
/// Jacobi decomposition.
pub const DENSE_EIG_CUTOFF: usize = 320;

const JACOBI_MAX_SWEEPS: usize = 100;
const POWER_MAX_ITERATIONS: usize = 10_000;
const SYMMETRY_TOL: f64 = 1e-12;

/// Row-major symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Wraps row-major `data`, checking shape, finiteness and symmetry.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return invalid("matrix dimension must be positive");
        }
        if data.len() != dim * dim {
            return invalid(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!(
                "non-finite entry at ({}, {})",
                pos / dim,
                pos % dim
            ));
        }
        let scale = data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        for i in 0..dim {
            for j in (i + 1)..dim {
                let (a, b) = (data[i * dim + j], data[j * dim + i]);
                if (a - b).abs() > SYMMETRY_TOL * scale {
                    return invalid(format!(
                        "matrix is not symmetric: entry ({i}, {j}) = {a} but ({j}, {i}) = {b}"
                    ));
                }
            }
        }
        Ok(Self { dim, data })
    }

    /// Builds a matrix by evaluating `f(i, j)` once for every `i <= j` and
    /// mirroring, so the result is exactly symmetric.
    pub fn from_upper(dim: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        assert!(dim > 0, "matrix dimension must be positive");
        let mut data = vec![0.0; dim * dim];
        data.par_chunks_mut(dim).enumerate().for_each(|(i, row)| {
            for (j, slot) in row.iter_mut().enumerate().skip(i) {
                *slot = f(i, j);
            }
        });
        mirror_upper(dim, &mut data);
        Self { dim, data }
    }

    /// Takes ownership of a buffer whose upper triangle (including the
    /// diagonal) is filled in; the lower triangle is overwritten.
    pub(crate) fn from_upper_buffer(dim: usize, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        mirror_upper(dim, &mut data);
        Self { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "matrix dimension must be positive");
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![1.0; dim])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * m.dim + i] = d;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// `self - other`.
    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `self + other`.
    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, factor: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    fn zip_with(&self, other: &SymMatrix, f: impl Fn(f64, f64) -> f64) -> Result<SymMatrix> {
        if self.dim != other.dim {
            return invalid(format!("dimension mismatch: {} vs {}", self.dim, other.dim));
        }
        Ok(SymMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Matrix-vector product.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "vector length must match dimension");
        let mut out = vec![0.0; self.dim];
        self.matvec_into(x, &mut out);
        out
    }

    pub(crate) fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        if self.dim >= 256 {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(i, o)| *o = dot(self.row(i), x));
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = dot(self.row(i), x);
            }
        }
    }

    /// Quadratic form `xᵀ M x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }
}

fn mirror_upper(dim: usize, data: &mut [f64]) {
    for i in 0..dim {
        for j in 0..i {
            data[i * dim + j] = data[j * dim + i];
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize without reassociation.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Eigenvalues with matching orthonormal eigenvectors.
///
/// Eigenvalues are sorted descending by signed value unless the decomposition
/// came from [`top_eigenpairs`] with [`EigenOrder::Magnitude`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub values: Vec<f64>,
    /// `vectors[i]` is the unit eigenvector for `values[i]`.
    pub vectors: Vec<Vec<f64>>,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rebuilds `Σ g(λᵢ) vᵢ vᵢᵀ` over the stored pairs.
    pub fn reconstruct_with(&self, g: impl Fn(f64) -> f64) -> SymMatrix {
        let dim = self.vectors.first().map_or(0, Vec::len);
        let weights: Vec<f64> = self.values.iter().map(|&v| g(v)).collect();
        let active: Vec<usize> = (0..self.len()).filter(|&i| weights[i] != 0.0).collect();
        SymMatrix::from_upper(dim, |i, j| {
            active
                .iter()
                .map(|&p| weights[p] * self.vectors[p][i] * self.vectors[p][j])
                .sum()
        })
    }

    /// `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        self.reconstruct_with(|v| v)
    }
}

/// Ordering used when selecting a subset of eigenpairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenOrder {
    /// Largest signed eigenvalues first.
    Signed,
    /// Largest absolute eigenvalues first (singular values of a symmetric
    /// matrix).
    Magnitude,
}

/// Full eigendecomposition by cyclic Jacobi rotations.
///
/// The input is re-validated so that decompositions are only ever produced
/// for finite symmetric matrices.
pub fn sym_eig(m: &SymMatrix) -> Result<SpectralDecomposition> {
    let m = SymMatrix::new(m.dim, m.data.clone())?;
    let n = m.dim;
    let mut a = m.data;
    // Rows of `vt` are the eigenvectors.
    let mut vt = SymMatrix::identity(n).data;

    let frob = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut converged = n == 1 || frob == 0.0;
    let mut new_p = vec![0.0; n];
    let mut new_q = vec![0.0; n];
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * 1e-2 * frob {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // Entries below rounding level of both diagonals are dropped.
                if sweeps > 3
                    && app.abs() + apq.abs() * 1e18 == app.abs()
                    && aqq.abs() + apq.abs() * 1e18 == aqq.abs()
                {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                {
                    let row_p = &a[p * n..(p + 1) * n];
                    let row_q = &a[q * n..(q + 1) * n];
                    for k in 0..n {
                        new_p[k] = c * row_p[k] - s * row_q[k];
                        new_q[k] = s * row_p[k] + c * row_q[k];
                    }
                }
                new_p[p] = app - t * apq;
                new_q[q] = aqq + t * apq;
                new_p[q] = 0.0;
                new_q[p] = 0.0;
                a[p * n..(p + 1) * n].copy_from_slice(&new_p);
                a[q * n..(q + 1) * n].copy_from_slice(&new_q);
                for k in 0..n {
                    a[k * n + p] = new_p[k];
                    a[k * n + q] = new_q[k];
                }

                let (head, tail) = vt.split_at_mut(q * n);
                let vp = &mut head[p * n..(p + 1) * n];
                let vq = &mut tail[..n];
                for k in 0..n {
                    let (x, y) = (vp[k], vq[k]);
                    vp[k] = c * x - s * y;
                    vq[k] = s * x + c * y;
                }
            }
        }
        sweeps += 1;
    }
    if !converged {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum::<f64>()
            .sqrt();
        return Err(Error::Convergence {
            method: "jacobi eigensolver",
            iterations: sweeps,
            last: off,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps ties in original index order.
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    Ok(SpectralDecomposition {
        values: order.iter().map(|&i| a[i * n + i]).collect(),
        vectors: order
            .iter()
            .map(|&i| vt[i * n..(i + 1) * n].to_vec())
            .collect(),
    })
}

/// The `count` leading eigenpairs of `m` under `order`.
///
/// Small matrices use [`sym_eig`]; larger ones use Lanczos with full
/// reorthogonalization, stopping once every requested Ritz pair has a
/// residual below `1e-10 · ‖m‖`.
pub fn top_eigenpairs(
    m: &SymMatrix,
    count: usize,
    order: EigenOrder,
) -> Result<SpectralDecomposition> {
    if count == 0 || count > m.dim {
        return invalid(format!(
            "requested {count} eigenpairs from a {}x{} matrix",
            m.dim, m.dim
        ));
    }
    let full = if m.dim <= DENSE_EIG_CUTOFF {
        sym_eig(m)?
    } else {
        lanczos(m, count, order, 1e-10)?
    };
    Ok(select(full, count, order))
}

fn select(full: SpectralDecomposition, count: usize, order: EigenOrder) -> SpectralDecomposition {
    let mut idx: Vec<usize> = (0..full.len()).collect();
    match order {
        EigenOrder::Signed => idx.sort_by(|&i, &j| full.values[j].total_cmp(&full.values[i])),
        EigenOrder::Magnitude => {
            idx.sort_by(|&i, &j| full.values[j].abs().total_cmp(&full.values[i].abs()))
        }
    }
    idx.truncate(count);
    SpectralDecomposition {
        values: idx.iter().map(|&i| full.values[i]).collect(),
        vectors: idx.iter().map(|&i| full.vectors[i].clone()).collect(),
    }
}

fn start_vector(dim: usize) -> Vec<f64> {
    let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
    v[0] += 1e-3;
    let len = norm(&v);
    v.iter_mut().for_each(|x| *x /= len);
    v
}

/// Lanczos iteration with full reorthogonalization. Returns the converged
/// Ritz pairs sorted descending by signed value.
fn lanczos(
    m: &SymMatrix,
    count: usize,
    order: EigenOrder,
    tol: f64,
) -> Result<SpectralDecomposition> {
    use rand::{Rng, SeedableRng};

    let n = m.dim;
    let scale = m.max_abs() * n as f64;
    if scale == 0.0 {
        return sym_eig(m);
    }
    // Deterministic source for restart directions after an exact breakdown.
    let mut restart_rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x006c_616e_637a_6f73);
    let mut basis: Vec<Vec<f64>> = vec![start_vector(n)];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut last_residual = f64::INFINITY;

    loop {
        let j = basis.len() - 1;
        m.matvec_into(&basis[j], &mut w);
        let a_j = dot(&basis[j], &w);
        alpha.push(a_j);
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
            }
        }
        let mut b_j = norm(&w);
        let steps = basis.len();
        let exhausted = steps == n;

        let check =
            exhausted || b_j <= 1e-12 * scale || (steps >= count && steps.is_multiple_of(4));
        if check {
            let t = tridiagonal(&alpha, &beta);
            let ritz = sym_eig(&t)?;
            let wanted = select(ritz.clone(), count.min(steps), order);
            let theta_max = ritz.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let residual = wanted
                .vectors
                .iter()
                .map(|s| b_j * s[steps - 1].abs())
                .fold(0.0f64, f64::max);
            last_residual = residual;
            let enough = steps >= count;
            if exhausted || (enough && residual <= tol * theta_max.max(f64::MIN_POSITIVE)) {
                return Ok(ritz_pairs(&basis, &ritz));
            }
        }
        if steps >= n.min(2000) {
            return Err(Error::Convergence {
                method: "lanczos",
                iterations: steps,
                last: last_residual,
            });
        }
        if b_j <= 1e-12 * scale {
            // Invariant subspace found: continue from a fresh direction.
            loop {
                for x in w.iter_mut() {
                    *x = restart_rng.random::<f64>() - 0.5;
                }
                for _ in 0..2 {
                    for q in &basis {
                        let c = dot(q, &w);
                        w.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
                    }
                }
                let len = norm(&w);
                if len > 1e-8 {
                    w.iter_mut().for_each(|x| *x /= len);
                    break;
                }
            }
            b_j = 0.0;
            beta.push(b_j);
            basis.push(w.clone());
        } else {
            beta.push(b_j);
            basis.push(w.iter().map(|x| x / b_j).collect());
        }
    }
}

fn tridiagonal(alpha: &[f64], beta: &[f64]) -> SymMatrix {
    let k = alpha.len();
    let mut data = vec![0.0; k * k];
    for i in 0..k {
        data[i * k + i] = alpha[i];
        if i + 1 < k {
            data[i * k + i + 1] = beta[i];
            data[(i + 1) * k + i] = beta[i];
        }
    }
    SymMatrix { dim: k, data }
}

fn ritz_pairs(basis: &[Vec<f64>], ritz: &SpectralDecomposition) -> SpectralDecomposition {
    let n = basis[0].len();
    let steps = ritz.values.len();
    let vectors = ritz
        .vectors
        .par_iter()
        .map(|s| {
            let mut y = vec![0.0; n];
            for (coef, q) in s.iter().zip(&basis[..steps]) {
                y.iter_mut().zip(q).for_each(|(yi, qi)| *yi += coef * qi);
            }
            let len = norm(&y);
            y.iter_mut().for_each(|v| *v /= len);
            y
        })
        .collect();
    SpectralDecomposition {
        values: ritz.values.clone(),
        vectors,
    }
}

/// The `count` largest absolute eigenvalues, descending.
pub fn top_singular_values(m: &SymMatrix, count: usize) -> Result<Vec<f64>> {
    if count > m.dim {
        return invalid(format!(
            "requested {count} singular values from a {}x{} matrix",
            m.dim, m.dim
        ));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let top = top_eigenpairs(m, count, EigenOrder::Magnitude)?;
    Ok(top.values.iter().map(|v| v.abs()).collect())
}

/// Spectral norm by power iteration.
///
/// Iterates `v ← Mv/‖Mv‖` from the all-ones start (nudged along `e₁`) and
/// stops once successive estimates `‖Mv‖` differ by less than `tol`.
pub fn operator_norm(m: &SymMatrix, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return invalid(format!("tolerance must be positive, got {tol}"));
    }
    let mut v = start_vector(m.dim);
    let mut w = vec![0.0; m.dim];
    let mut estimate = 0.0;
    for _ in 0..POWER_MAX_ITERATIONS {
        m.matvec_into(&v, &mut w);
        let next = norm(&w);
        if next == 0.0 {
            // Start vector in the kernel: only possible for the zero matrix
            // or a contrived start; fall back to the exact answer.
            return Ok(top_singular_values(m, 1)?[0]);
        }
        if (next - estimate).abs() < tol {
            return Ok(next);
        }
        estimate = next;
        v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / next);
    }
    Err(Error::Convergence {
        method: "power iteration",
        iterations: POWER_MAX_ITERATIONS,
        last: estimate,
    })
}

/// `max(0, |λ| - s)`.
#[inline]
pub fn soft_threshold(lambda: f64, threshold: f64) -> f64 {
    (lambda.abs() - threshold).max(0.0)
}

/// Replaces every eigenvalue λ of `m` by `max(0, |λ| - threshold)`, keeping
/// eigenvectors. The sign of λ is dropped, so the result is PSD.
pub fn apply_spectral_function(m: &SymMatrix, threshold: f64) -> Result<SymMatrix> {
    if !(threshold >= 0.0) || !threshold.is_finite() {
        return invalid(format!(
            "spectral threshold must be a finite non-negative number, got {threshold}"
        ));
    }
    let eig = sym_eig(m)?;
    Ok(eig.reconstruct_with(|l| soft_threshold(l, threshold)))
}

/// Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn factor(m: &SymMatrix) -> Result<Self> {
        let n = m.dim;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = m.get(i, j);
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return invalid("matrix is not positive definite");
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(Self { dim: n, lower: l })
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim)
            .map(|i| self.lower[i * self.dim + i].ln())
            .sum::<f64>()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
            y[i] = (y[i] - s) / l[i * n + i];
        }
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|k| l[k * n + i] * y[k]).sum();
            y[i] = (y[i] - s) / l[i * n + i];
        }
        y
    }
}
