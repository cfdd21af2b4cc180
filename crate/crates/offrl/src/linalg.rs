//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

/// Pairwise (cascade) summation. Deterministic for a fixed input order and
/// accurate to O(log n) rounding growth, so parallel producers that collect
/// into an ordered buffer get bit-identical totals.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Mean and standard error (sample std / sqrt(n)) via pairwise sums.
pub fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Eigendecomposition-backed view of a symmetric PSD matrix, exposing the
/// minimum eigenvalue and the pseudo-inverse restricted to the column space.
pub struct SymmetricPsd {
    eigenvectors: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl SymmetricPsd {
    pub fn new(matrix: &DMatrix<f64>) -> Self {
        let eig = matrix.clone().symmetric_eigen();
        let lambda_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let lambda_max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        SymmetricPsd {
            eigenvectors: eig.eigenvectors,
            eigenvalues: eig.eigenvalues,
            lambda_min,
            lambda_max,
        }
    }

    /// Moore-Penrose pseudo-inverse: eigenvalues below `rel_cutoff * lambda_max`
    /// are treated as zero.
    pub fn pseudo_inverse(&self, rel_cutoff: f64) -> DMatrix<f64> {
        let cutoff = (rel_cutoff * self.lambda_max.max(0.0)).max(f64::MIN_POSITIVE);
        let d = self.eigenvalues.len();
        let mut inv = DMatrix::zeros(d, d);
        for j in 0..d {
            let lambda = self.eigenvalues[j];
            if lambda > cutoff {
                let col = self.eigenvectors.column(j);
                for r in 0..d {
                    for c in 0..d {
                        inv[(r, c)] += col[r] * col[c] / lambda;
                    }
                }
            }
        }
        inv
    }
}

/// Projects `w` onto the Euclidean ball of radius `radius` centered at zero.
pub fn project_ball(w: &DVector<f64>, radius: f64) -> DVector<f64> {
    let norm = w.norm();
    if norm > radius {
        w * (radius / norm)
    } else {
        w.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive() {
        let xs: Vec<f64> = (0..1001).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-10);
    }

    #[test]
    fn pseudo_inverse_inverts_on_column_space() {
        // rank-2 PSD matrix in 3 dimensions
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 2.0]);
        let m = &a * a.transpose();
        let s = SymmetricPsd::new(&m);
        let pinv = s.pseudo_inverse(1e-12);
        let p = &m * &pinv * &m;
        assert!((&p - &m).norm() < 1e-10);
        assert!(s.lambda_min.abs() < 1e-12);
    }

    #[test]
    fn ball_projection() {
        let w = DVector::from_row_slice(&[3.0, 4.0]);
        let p = project_ball(&w, 1.0);
        assert!((p.norm() - 1.0).abs() < 1e-12);
        assert!((p[0] - 0.6).abs() < 1e-12);
        let q = project_ball(&w, 10.0);
        assert_eq!(q, w);
    }
}
