//! Dense symmetric eigendecomposition by cyclic Jacobi rotations.
//!
//! Deterministic and dependency-free; adequate for the small matrices
//! (M ≤ 64) this pipeline clusters.

use alloc::vec;
use alloc::vec::Vec;

/// Eigendecomposition of a symmetric matrix: `values[j]` with the matching
/// eigenvector stored in column `j` of `vectors` (row-major, n×n).
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub n: usize,
}

impl SymEigen {
    /// Component `i` of eigenvector `j`.
    pub fn vector_component(&self, i: usize, j: usize) -> f64 {
        self.vectors[i * self.n + j]
    }
}

/// Diagonalizes a symmetric matrix (row-major, n×n) with cyclic Jacobi
/// sweeps. Stops when the off-diagonal Frobenius norm drops below
/// `tolerance` or after `max_sweeps` full sweeps.
pub fn jacobi_eigen_sym(matrix: &[f64], n: usize, tolerance: f64, max_sweeps: usize) -> SymEigen {
    assert_eq!(matrix.len(), n * n, "matrix must be n×n");
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    if n < 2 {
        return SymEigen {
            values: (0..n).map(|i| a[i * n + i]).collect(),
            vectors: v,
            n,
        };
    }

    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if libm::sqrt(2.0 * off) < tolerance {
            break;
        }

        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // Rotation angle that annihilates a[p][q].
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                } else {
                    1.0 / (theta - libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;

                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;

                for i in 0..n {
                    if i != p && i != q {
                        let aip = a[i * n + p];
                        let aiq = a[i * n + q];
                        a[i * n + p] = c * aip - s * aiq;
                        a[p * n + i] = a[i * n + p];
                        a[i * n + q] = c * aiq + s * aip;
                        a[q * n + i] = a[i * n + q];
                    }
                }
                for i in 0..n {
                    let vip = v[i * n + p];
                    let viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = c * viq + s * vip;
                }
            }
        }
    }

    SymEigen {
        values: (0..n).map(|i| a[i * n + i]).collect(),
        vectors: v,
        n,
    }
}

/// Euclidean distance between two equal-length vectors.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        sum += d * d;
    }
    libm::sqrt(sum)
}

/// Elementwise mean of equal-length rows; `None` when `rows` is empty.
pub fn mean_of_rows(rows: &[&[f64]]) -> Option<Vec<f64>> {
    let first = rows.first()?;
    let mut mean = vec![0.0; first.len()];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(*row) {
            *m += v;
        }
    }
    let scale = 1.0 / rows.len() as f64;
    for m in &mut mean {
        *m *= scale;
    }
    Some(mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| libm::fabs(x - y))
            .fold(0.0, f64::max)
    }

    #[test]
    fn diagonal_matrix_is_its_own_decomposition() {
        let m = [3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 7.0];
        let e = jacobi_eigen_sym(&m, 3, 1e-12, 100);
        let mut values = e.values.clone();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(values, alloc::vec![-1.0, 3.0, 7.0]);
    }

    #[test]
    fn known_2x2_eigenvalues() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let e = jacobi_eigen_sym(&[2.0, 1.0, 1.0, 2.0], 2, 1e-12, 100);
        let mut values = e.values.clone();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(max_abs_diff(&values, &[1.0, 3.0]) < 1e-12);
    }

    #[test]
    fn reconstructs_original_matrix() {
        // A = V diag(values) V^T must reproduce the input.
        let m = [
            4.0, 1.0, -2.0, 0.5, 1.0, 3.0, 0.0, 1.5, -2.0, 0.0, 5.0, -0.5, 0.5, 1.5, -0.5, 1.0,
        ];
        let n = 4;
        let e = jacobi_eigen_sym(&m, n, 1e-14, 100);
        let mut recon = alloc::vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut sum = 0.0;
                for l in 0..n {
                    sum += e.vector_component(i, l) * e.values[l] * e.vector_component(j, l);
                }
                recon[i * n + j] = sum;
            }
        }
        assert!(max_abs_diff(&recon, &m) < 1e-10);
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let m = [
            2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0,
        ];
        let n = 3;
        let e = jacobi_eigen_sym(&m, n, 1e-14, 100);
        for j in 0..n {
            for l in 0..n {
                let dot: f64 = (0..n)
                    .map(|i| e.vector_component(i, j) * e.vector_component(i, l))
                    .sum();
                let expected = if j == l { 1.0 } else { 0.0 };
                assert!(libm::fabs(dot - expected) < 1e-12);
            }
        }
    }
}
