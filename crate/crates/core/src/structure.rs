//! Block structure of kernel matrices.
//!
//! Let `E` be the space of vectors that are constant on each component's
//! index set and `P_E` the orthogonal projector onto it. Two low-complexity
//! approximants of a kernel matrix `Φ` are provided, both built from
//! within-sample block means:
//!
//! * **A** (`row_plus_column`): `P_E Φ + P_{E⊥} Φ P_E`. In block `(i, j)`,
//!   `A_xy = mean_{y'∈j} Φ_xy' + mean_{x'∈i} Φ_x'y - mean_{i×j} Φ`.
//! * **B** (`block_constant`): `P_E Φ P_E`, constant on each block.
//!
//! For any `x ∈ E⊥`, `xᵀAx = 0`, so `Φ` has at most `k` eigenvalues above
//! `‖Φ - A‖` and at most `k` below `-‖Φ - A‖`.

use crate::error::{invalid, Result};
use crate::kernels::KernelMatrix;
use crate::linalg::{dot, norm, operator_norm, sym_eig, SymMatrix};

/// Tolerance used for residual operator norms.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproximantKind {
    RowPlusColumn,
    BlockConstant,
}

/// Compact block approximant of a kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockApproximant {
    pub kind: ApproximantKind,
    labels: Vec<usize>,
    components: usize,
    /// `point_means[x * k + j]`: mean of row `x` over the columns of block
    /// `j`. Empty for the block-constant kind.
    point_means: Vec<f64>,
    /// `block_means[i * k + j]`: mean over block `(i, j)`.
    block_means: Vec<f64>,
}

impl BlockApproximant {
    pub fn block_mean(&self, i: usize, j: usize) -> f64 {
        self.block_means[i * self.components + j]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Entry `(x, y)` of the full matrix.
    #[inline]
    pub fn entry(&self, x: usize, y: usize) -> f64 {
        let k = self.components;
        let (bx, by) = (self.labels[x], self.labels[y]);
        match self.kind {
            ApproximantKind::BlockConstant => self.block_means[bx * k + by],
            ApproximantKind::RowPlusColumn => {
                self.point_means[x * k + by] + self.point_means[y * k + bx]
                    - self.block_means[bx * k + by]
            }
        }
    }

    pub fn materialize(&self) -> SymMatrix {
        SymMatrix::from_upper(self.len(), |x, y| self.entry(x, y))
    }
}

fn nonempty_members(km: &KernelMatrix) -> Result<Vec<Vec<usize>>> {
    let members = km.members();
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return invalid(format!("component {c} has no points"));
    }
    Ok(members)
}

fn point_block_means(km: &KernelMatrix, members: &[Vec<usize>]) -> Vec<f64> {
    let k = km.components;
    let mut out = vec![0.0; km.len() * k];
    for x in 0..km.len() {
        let row = km.matrix.row(x);
        for (j, m) in members.iter().enumerate() {
            out[x * k + j] = m.iter().map(|&y| row[y]).sum::<f64>() / m.len() as f64;
        }
    }
    out
}

fn block_means_from(point_means: &[f64], members: &[Vec<usize>], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * k];
    for (i, m) in members.iter().enumerate() {
        for j in 0..k {
            out[i * k + j] =
                m.iter().map(|&x| point_means[x * k + j]).sum::<f64>() / m.len() as f64;
        }
    }
    // Symmetrise away summation-order rounding.
    for i in 0..k {
        for j in (i + 1)..k {
            let v = 0.5 * (out[i * k + j] + out[j * k + i]);
            out[i * k + j] = v;
            out[j * k + i] = v;
        }
    }
    out
}

/// Row-plus-column approximant `P_E Φ + P_{E⊥} Φ P_E`.
pub fn approximant_a(km: &KernelMatrix) -> Result<BlockApproximant> {
    let members = nonempty_members(km)?;
    let point_means = point_block_means(km, &members);
    let block_means = block_means_from(&point_means, &members, km.components);
    Ok(BlockApproximant {
        kind: ApproximantKind::RowPlusColumn,
        labels: km.labels.clone(),
        components: km.components,
        point_means,
        block_means,
    })
}

/// Block-constant approximant `P_E Φ P_E`: each block holds its mean.
pub fn approximant_b(km: &KernelMatrix) -> Result<BlockApproximant> {
    let members = nonempty_members(km)?;
    let point_means = point_block_means(km, &members);
    let block_means = block_means_from(&point_means, &members, km.components);
    Ok(BlockApproximant {
        kind: ApproximantKind::BlockConstant,
        labels: km.labels.clone(),
        components: km.components,
        point_means: Vec::new(),
        block_means,
    })
}

/// `‖Φ - approx‖` in operator norm. Both approximants are symmetric, so the
/// residual is too and power iteration applies directly.
pub fn residual_norm(km: &KernelMatrix, approx: &BlockApproximant) -> Result<f64> {
    if approx.len() != km.len() {
        return invalid(format!(
            "approximant has {} rows, kernel matrix has {}",
            approx.len(),
            km.len()
        ));
    }
    let residual = SymMatrix::from_upper(km.len(), |x, y| km.matrix.get(x, y) - approx.entry(x, y));
    operator_norm(&residual, RESIDUAL_TOL)
}

/// Number of eigenvalues above `threshold` and below `-threshold`.
pub fn count_large_eigenvalues(km: &KernelMatrix, threshold: f64) -> Result<(usize, usize)> {
    if !(threshold > 0.0) {
        return invalid(format!("threshold must be positive, got {threshold}"));
    }
    let eig = sym_eig(&km.matrix)?;
    let above = eig.values.iter().filter(|&&v| v > threshold).count();
    let below = eig.values.iter().filter(|&&v| v < -threshold).count();
    Ok((above, below))
}

/// Principal angles between two subspaces, in radians, descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenspaceAngle {
    pub angles: Vec<f64>,
}

impl EigenspaceAngle {
    pub fn max(&self) -> f64 {
        self.angles.first().copied().unwrap_or(0.0)
    }
}

/// Orthonormal basis of the span of `vectors` by modified Gram–Schmidt with
/// reorthogonalisation; fails if the vectors are (numerically) dependent.
fn orthonormalize(vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for (i, v) in vectors.iter().enumerate() {
        let original = norm(v);
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
            }
        }
        let len = norm(&w);
        if !(original > 0.0) || len <= 1e-10 * original {
            return invalid(format!(
                "vector {i} is linearly dependent on the previous ones"
            ));
        }
        w.iter_mut().for_each(|x| *x /= len);
        basis.push(w);
    }
    Ok(basis)
}

/// Principal angles between `span(eigvecs)` and the piecewise-constant space
/// defined by `labels`.
pub fn principal_angles(eigvecs: &[Vec<f64>], labels: &[usize]) -> Result<EigenspaceAngle> {
    let n = labels.len();
    if eigvecs.is_empty() || eigvecs.len() > n {
        return invalid(format!(
            "need between 1 and {n} vectors, got {}",
            eigvecs.len()
        ));
    }
    if let Some(v) = eigvecs.iter().find(|v| v.len() != n) {
        return invalid(format!(
            "vector of length {} does not match {n} labels",
            v.len()
        ));
    }
    let q = orthonormalize(eigvecs)?;
    let mut groups: Vec<usize> = labels.to_vec();
    groups.sort_unstable();
    groups.dedup();
    let m = groups.len();
    let k = q.len();
    // cross[a][g] = ⟨q_a, 1_g / √|g|⟩.
    let mut cross = vec![vec![0.0; m]; k];
    let sizes: Vec<f64> = groups
        .iter()
        .map(|g| labels.iter().filter(|&&l| l == *g).count() as f64)
        .collect();
    for (a, qa) in q.iter().enumerate() {
        for (i, &l) in labels.iter().enumerate() {
            let g = groups.binary_search(&l).expect("label present");
            cross[a][g] += qa[i];
        }
        for g in 0..m {
            cross[a][g] /= sizes[g].sqrt();
        }
    }
    let small = k.min(m);
    let gram = if k <= m {
        SymMatrix::from_upper(k, |a, b| dot(&cross[a], &cross[b]))
    } else {
        SymMatrix::from_upper(m, |g, h| (0..k).map(|a| cross[a][g] * cross[a][h]).sum())
    };
    let eig = sym_eig(&gram)?;
    let mut angles: Vec<f64> = eig.values[..small]
        .iter()
        .map(|&v| v.max(0.0).sqrt().clamp(0.0, 1.0).acos())
        .collect();
    angles.sort_by(|a, b| b.total_cmp(a));
    Ok(EigenspaceAngle { angles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::tests::random_sym;
    use crate::linalg::top_eigenpairs;

    fn km(m: SymMatrix, labels: Vec<usize>, k: usize) -> KernelMatrix {
        KernelMatrix::from_parts(m, labels, k).unwrap()
    }

    /// `P_E` as an explicit `N × N` matrix.
    fn projector(labels: &[usize], k: usize) -> Vec<Vec<f64>> {
        let sizes: Vec<f64> = (0..k)
            .map(|c| labels.iter().filter(|&&l| l == c).count() as f64)
            .collect();
        labels
            .iter()
            .map(|&a| {
                labels
                    .iter()
                    .map(|&b| if a == b { 1.0 / sizes[a] } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = a.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|l| a[i][l] * b[l][j]).sum())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn two_by_two_single_block() {
        let k = km(
            SymMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap(),
            vec![0, 0],
            1,
        );
        let a = approximant_a(&k).unwrap().materialize();
        assert_eq!(a.as_slice(), &[0.5, 0.5, 0.5, 0.5]);
        let resid = k.matrix.sub(&a).unwrap();
        assert_eq!(resid.as_slice(), &[-0.5, 0.5, 0.5, -0.5]);
        let b = approximant_b(&k).unwrap().materialize();
        assert_eq!(b.as_slice(), &[0.5; 4]);
    }

    #[test]
    fn block_constant_input_is_fixed_point() {
        let labels = vec![0, 0, 1, 1, 1];
        let vals = [[0.3, 0.1], [0.1, 0.7]];
        let m = SymMatrix::from_upper(5, |i, j| vals[labels[i]][labels[j]]);
        let k = km(m.clone(), labels, 2);
        for approx in [approximant_a(&k).unwrap(), approximant_b(&k).unwrap()] {
            assert!(approx.materialize().sub(&m).unwrap().max_abs() < 1e-15);
            assert!(residual_norm(&k, &approx).unwrap() < 1e-12);
        }
    }

    #[test]
    fn approximant_a_equals_projector_algebra() {
        for (dim, labels_k) in [(20usize, 1usize), (30, 3), (17, 2)] {
            let labels: Vec<usize> = (0..dim).map(|i| i * labels_k / dim).collect();
            let m = random_sym(dim, dim as u64);
            let k = km(m.clone(), labels.clone(), labels_k);
            let a = approximant_a(&k).unwrap().materialize();
            let p = projector(&labels, labels_k);
            let phi: Vec<Vec<f64>> = (0..dim).map(|i| m.row(i).to_vec()).collect();
            let q: Vec<Vec<f64>> = (0..dim)
                .map(|i| {
                    (0..dim)
                        .map(|j| if i == j { 1.0 } else { 0.0 } - p[i][j])
                        .collect()
                })
                .collect();
            let pe_phi = matmul(&p, &phi);
            let rest = matmul(&matmul(&q, &phi), &p);
            for i in 0..dim {
                for j in 0..dim {
                    assert!((a.get(i, j) - pe_phi[i][j] - rest[i][j]).abs() < 1e-10);
                }
            }
            let b = approximant_b(&k).unwrap().materialize();
            let pbp = matmul(&matmul(&p, &phi), &p);
            for i in 0..dim {
                for j in 0..dim {
                    assert!((b.get(i, j) - pbp[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn quadratic_form_vanishes_off_e() {
        let labels = vec![0, 0, 0, 1, 1, 2, 2, 2, 2];
        let m = random_sym(9, 4);
        let a = approximant_a(&km(m, labels.clone(), 3))
            .unwrap()
            .materialize();
        let mut x: Vec<f64> = (0..9).map(|i| ((i * 7) % 5) as f64 - 1.3).collect();
        for c in 0..3 {
            let idx: Vec<usize> = (0..9).filter(|&i| labels[i] == c).collect();
            let mean = idx.iter().map(|&i| x[i]).sum::<f64>() / idx.len() as f64;
            idx.iter().for_each(|&i| x[i] -= mean);
        }
        assert!(a.quadratic_form(&x).abs() < 1e-10 * dot(&x, &x));
    }

    #[test]
    fn empty_block_is_rejected() {
        let k = km(SymMatrix::identity(3), vec![0, 0, 0], 2);
        assert!(approximant_a(&k).is_err());
        assert!(approximant_b(&k).is_err());
    }

    #[test]
    fn residual_rejects_shape_mismatch() {
        let k = km(random_sym(6, 1), vec![0; 6], 1);
        let other = km(random_sym(5, 1), vec![0; 5], 1);
        let approx = approximant_b(&other).unwrap();
        assert!(residual_norm(&k, &approx).is_err());
    }

    #[test]
    fn counting_examples() {
        let k = km(SymMatrix::from_diag(&[5.0, -5.0, 0.1]), vec![0; 3], 1);
        assert_eq!(count_large_eigenvalues(&k, 1.0).unwrap(), (1, 1));
        let z = km(SymMatrix::zeros(4), vec![0; 4], 1);
        assert_eq!(count_large_eigenvalues(&z, 1e-3).unwrap(), (0, 0));
        assert!(count_large_eigenvalues(&z, 0.0).is_err());
    }

    #[test]
    fn angles_for_identical_and_orthogonal_spaces() {
        let labels = vec![0, 0, 1, 1, 1];
        let ind = |c: usize| -> Vec<f64> {
            let size = labels.iter().filter(|&&l| l == c).count() as f64;
            labels
                .iter()
                .map(|&l| if l == c { 1.0 / size.sqrt() } else { 0.0 })
                .collect()
        };
        let same = principal_angles(&[ind(0), ind(1)], &labels).unwrap();
        assert!(same.angles.iter().all(|&a| a.abs() < 1e-7));

        let orth = vec![
            vec![1.0, -1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, -1.0, 0.0],
        ];
        let angles = principal_angles(&orth, &labels).unwrap();
        assert!(angles
            .angles
            .iter()
            .all(|&a| (a - std::f64::consts::FRAC_PI_2).abs() < 1e-12));

        let dependent = vec![ind(0), ind(0)];
        assert!(principal_angles(&dependent, &labels).is_err());
    }

    #[test]
    fn angle_of_rotated_indicator() {
        // A single vector at angle θ from E.
        let labels = vec![0, 0];
        let theta: f64 = 0.3;
        let v = vec![
            (theta.cos() + theta.sin()) / 2f64.sqrt(),
            (theta.cos() - theta.sin()) / 2f64.sqrt(),
        ];
        let a = principal_angles(&[v], &labels).unwrap();
        assert!((a.max() - theta).abs() < 1e-12);
    }

    #[test]
    fn top_eigvecs_of_block_matrix_have_zero_angle() {
        let labels: Vec<usize> = (0..12).map(|i| i / 4).collect();
        let vals = [[3.0, 1.0, 0.5], [1.0, 2.0, 0.2], [0.5, 0.2, 4.0]];
        let m = SymMatrix::from_upper(12, |i, j| vals[labels[i]][labels[j]]);
        let top = top_eigenpairs(&m, 3, crate::linalg::EigenOrder::Magnitude).unwrap();
        let a = principal_angles(&top.vectors, &labels).unwrap();
        assert!(a.max() < 1e-6);
    }
}
