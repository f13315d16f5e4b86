//! Independent reference implementations shared by the integration suites.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rkm_core::linalg::SymMatrix;
use rkm_core::model::{Covariance, Dataset};

pub fn to_dmatrix(m: &SymMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.dim(), m.dim(), m.as_slice())
}

/// `f_s(M)` through nalgebra's symmetric eigensolver.
pub fn soft_threshold_oracle(m: &SymMatrix, s: f64) -> DMatrix<f64> {
    let eig = to_dmatrix(m).symmetric_eigen();
    let f = eig.eigenvalues.map(|l| (l.abs() - s).max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&f) * eig.eigenvectors.transpose()
}

/// Eigenvalues from nalgebra, descending.
pub fn eigenvalues_oracle(m: &SymMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = to_dmatrix(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Projector onto vectors constant on each label class.
pub fn block_projector(labels: &[usize]) -> DMatrix<f64> {
    let n = labels.len();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let size = labels.iter().filter(|&&l| l == labels[i]).count() as f64;
        for j in 0..n {
            if labels[j] == labels[i] {
                p[(i, j)] = 1.0 / size;
            }
        }
    }
    p
}

/// Kernel matrix by a plain double loop over `profile(‖xᵢ - xⱼ‖) / N`.
pub fn naive_kernel_matrix(data: &Dataset, profile: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = data.len();
    DMatrix::from_fn(n, n, |i, j| {
        let d: f64 = data
            .point(i)
            .iter()
            .zip(data.point(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        profile(d.sqrt()) / n as f64
    })
}

/// Lower Cholesky factor of a dense symmetric positive definite matrix.
fn cholesky_lower(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().cholesky().expect("positive definite").l()
}

/// Monte-Carlo estimate of `E exp(-‖x‖² / 2τ²)` for `x ~ N(mean, cov)`,
/// with its standard error.
pub fn mc_gaussian_expectation(
    mean: &[f64],
    cov: &Covariance,
    tau: f64,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let n = mean.len();
    let dense = cov.to_dense(n);
    let l = cholesky_lower(&to_dmatrix(&dense));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; n];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let mut r2 = 0.0;
        for i in 0..n {
            let mut xi = mean[i];
            for j in 0..=i {
                xi += l[(i, j)] * z[j];
            }
            r2 += xi * xi;
        }
        let h = (-r2 / (2.0 * tau * tau)).exp();
        sum += h;
        sum_sq += h * h;
    }
    let m = sum / samples as f64;
    let var = (sum_sq / samples as f64 - m * m).max(0.0);
    (m, (var / samples as f64).sqrt())
}

/// Random SPD covariance `A Aᵀ / n + c I`.
pub fn random_full_covariance(n: usize, c: f64, rng: &mut ChaCha8Rng) -> Covariance {
    let a: Vec<f64> = (0..n * n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..n {
                s += a[i * n + p] * a[j * n + p];
            }
            data[i * n + j] = s / n as f64 + if i == j { c } else { 0.0 };
        }
    }
    Covariance::Full(SymMatrix::new(n, data).expect("symmetric"))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &SymMatrix) -> f64 {
    let n = b.dim();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a[(i, j)] - b.get(i, j)).abs());
        }
    }
    worst
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}
