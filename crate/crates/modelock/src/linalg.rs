//! Dense linear-algebra helpers shared by the numeric modules.
//!
//! Everything operates on `f64` matrices of small runtime dimension. Solves
//! carry explicit singularity and conditioning checks so callers surface
//! degeneracies instead of silently amplifying noise.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::tol;

/// Errors raised by solves and eigen extraction.
#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix singular: |det| = {det:.3e} below tolerance for scale {scale:.3e}")]
    Singular { det: f64, scale: f64 },
    #[error("matrix ill-conditioned: condition estimate {cond:.3e}")]
    IllConditioned { cond: f64 },
    #[error("eigenvalue selection ambiguous: two candidates at distances {first:.3e} and {second:.3e}")]
    AmbiguousEigenvalue { first: f64, second: f64 },
    #[error("selected eigenvalue has imaginary part {imag:.3e}")]
    ComplexEigenvalue { imag: f64 },
    #[error("kernel geometry degenerate (left and right null vectors near-orthogonal)")]
    DegenerateKernel,
    #[error("right-hand side outside the range of the matrix: residual {residual:.3e}")]
    OffRange { residual: f64 },
    #[error("matrix has {count} near-zero eigenvalues; only rank deficiency one is supported")]
    UnsupportedDeficiency { count: usize },
}

/// Max-row-sum norm, used as the scale in singularity thresholds.
pub fn max_row_sum(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `A x = b` by LU, refusing singular or badly conditioned systems.
///
/// Singularity is `|det A| < SINGULAR_TOL * scale` with `scale` the
/// max-row-sum norm (floored at 1); conditioning is estimated from the
/// singular values and refused above `CONDITION_REFUSE`.
pub fn solve_refusing(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    let scale = max_row_sum(a).max(1.0);
    let det = a.determinant();
    if det.abs() < tol::SINGULAR_TOL * scale {
        return Err(LinalgError::Singular {
            det: det.abs(),
            scale,
        });
    }
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > tol::CONDITION_REFUSE {
        return Err(LinalgError::IllConditioned { cond });
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or(LinalgError::Singular { det: 0.0, scale })
}

/// All eigenvalues of `m` as complex numbers.
pub fn complex_eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    m.clone().complex_eigenvalues().iter().copied().collect()
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    complex_eigenvalues(m)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Right-singular vector for the smallest singular value: the best unit-norm
/// candidate for a null vector of `a`.
pub fn svd_null_vector(a: &DMatrix<f64>) -> DVector<f64> {
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let idx = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .expect("nonempty spectrum");
    v_t.row(idx).transpose()
}

/// A real eigenvalue with unit-norm right and left eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: f64,
    pub right: DVector<f64>,
    pub left: DVector<f64>,
}

/// Extracts the eigenvalue of `m` closest to `target` with its eigenvectors.
///
/// Fails when the two closest candidates are within `EIG_SEPARATION` of each
/// other (selection ambiguous) or when the winner has a significant imaginary
/// part. Eigenvectors are computed as null vectors of the shifted matrix.
pub fn eigen_pair_near(m: &DMatrix<f64>, target: f64) -> Result<EigenPair, LinalgError> {
    let eigs = complex_eigenvalues(m);
    let mut dist: Vec<(usize, f64)> = eigs
        .iter()
        .enumerate()
        .map(|(i, z)| (i, (z - Complex::new(target, 0.0)).norm()))
        .collect();
    dist.sort_by(|a, b| a.1.total_cmp(&b.1));
    if dist.len() > 1 && (dist[1].1 - dist[0].1).abs() < tol::EIG_SEPARATION {
        return Err(LinalgError::AmbiguousEigenvalue {
            first: dist[0].1,
            second: dist[1].1,
        });
    }
    let lambda = eigs[dist[0].0];
    let scale = max_row_sum(m).max(1.0);
    if lambda.im.abs() > 1e-9 * scale {
        return Err(LinalgError::ComplexEigenvalue { imag: lambda.im });
    }
    let value = lambda.re;
    let n = m.nrows();
    let shifted = m - DMatrix::identity(n, n) * value;
    let right = svd_null_vector(&shifted);
    let left = svd_null_vector(&shifted.transpose());
    Ok(EigenPair { value, right, left })
}

/// Solves the bordered system `[[A, c], [rᵀ, 0]] [x; s] = [b; beta]`.
///
/// Used for cycle solves in the presence of a near-unit multiplier: the
/// border removes the critical direction, keeping the system well posed even
/// where `A` itself is singular.
pub fn bordered_solve(
    a: &DMatrix<f64>,
    right_col: &DVector<f64>,
    bottom_row: &DVector<f64>,
    b: &DVector<f64>,
    beta: f64,
) -> Result<(DVector<f64>, f64), LinalgError> {
    let n = a.nrows();
    let mut big = DMatrix::zeros(n + 1, n + 1);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    big.view_mut((0, n), (n, 1)).copy_from(right_col);
    big.view_mut((n, 0), (1, n))
        .copy_from(&bottom_row.transpose());
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(b);
    rhs[n] = beta;
    let sol = solve_refusing(&big, &rhs)?;
    Ok((sol.rows(0, n).into_owned(), sol[n]))
}

/// Number of eigenvalues of `m` with modulus below `ZERO_EIG_TOL`.
pub fn near_zero_eigenvalue_count(m: &DMatrix<f64>) -> usize {
    complex_eigenvalues(m)
        .iter()
        .filter(|z| z.norm() < tol::ZERO_EIG_TOL)
        .count()
}

/// Solves `M x = rhs` restricted to the spectral complement of a near-zero
/// eigenvalue.
///
/// With `M` invertible this is a plain solve. With exactly one near-zero
/// eigenvalue the right-hand side must lie in the range of `M` (checked), and
/// the returned solution is the one carrying no component of the kernel
/// direction, so repeated backward steps stay on the range.
pub fn restricted_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    match near_zero_eigenvalue_count(m) {
        0 => solve_refusing(m, rhs),
        1 => {
            let svd = m.clone().svd(true, true);
            let u = svd.u.as_ref().expect("requested left singular vectors");
            let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
            let sv = &svd.singular_values;
            let smax = sv.max();
            let cut = smax * 1e-10;
            let k = sv
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .expect("nonempty spectrum");
            let u_null = u.column(k).into_owned();
            let v_null = v_t.row(k).transpose();
            let rhs_scale = 1.0 + rhs.norm();
            let off = u_null.dot(rhs).abs();
            if off > 1e-8 * rhs_scale {
                return Err(LinalgError::OffRange { residual: off });
            }
            // Pseudoinverse solution, then shift along the kernel so the
            // result lies in the range of M (no generalized-kernel content).
            let mut x = DVector::zeros(m.nrows());
            for (i, &s) in sv.iter().enumerate() {
                if s > cut {
                    let coeff = u.column(i).dot(rhs) / s;
                    x += v_t.row(i).transpose() * coeff;
                }
            }
            let denom = u_null.dot(&v_null);
            if denom.abs() < 1e-12 {
                return Err(LinalgError::DegenerateKernel);
            }
            let t = -u_null.dot(&x) / denom;
            x += v_null * t;
            let residual = (m * &x - rhs).norm();
            if residual > 1e-8 * rhs_scale {
                return Err(LinalgError::OffRange { residual });
            }
            Ok(x)
        }
        count => Err(LinalgError::UnsupportedDeficiency { count }),
    }
}

/// `m` raised to a nonnegative integer power.
pub fn matrix_power(m: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = DMatrix::identity(n, n);
    for _ in 0..p {
        out = m * out;
    }
    out
}

/// In-place Gaussian elimination with partial pivoting on row-major storage.
///
/// Overwrites `a` (n×n) and `b`; on success `b` holds the solution. Returns
/// `false` when a pivot falls below `SINGULAR_TOL` times the matrix scale.
/// Allocation-free, for use inside scan hot loops.
pub fn solve_in_place_small(n: usize, a: &mut [f64], b: &mut [f64]) -> bool {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    let tiny = tol::SINGULAR_TOL * scale;
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val < tiny {
            return false;
        }
        if pivot_row != col {
            for c in 0..n {
                a.swap(col * n + c, pivot_row * n + c);
            }
            b.swap(col, pivot_row);
        }
        let inv = 1.0 / a[col * n + col];
        for r in col + 1..n {
            let factor = a[r * n + col] * inv;
            if factor != 0.0 {
                for c in col..n {
                    a[r * n + c] -= factor * a[col * n + c];
                }
                b[r] -= factor * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut sum = b[col];
        for c in col + 1..n {
            sum -= a[col * n + c] * b[c];
        }
        b[col] = sum / a[col * n + col];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solve_simple_system() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_row_slice(&[5.0, 10.0]);
        let x = solve_refusing(&a, &b).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn solve_rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = DVector::from_row_slice(&[1.0, 2.0]);
        assert!(matches!(
            solve_refusing(&a, &b),
            Err(LinalgError::Singular { .. })
        ));
    }

    #[test]
    fn eigen_pair_of_diagonalizable_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 0.5]);
        let pair = eigen_pair_near(&m, 2.1).unwrap();
        assert_relative_eq!(pair.value, 2.0, epsilon = 1e-12);
        let r = &m * &pair.right - &pair.right * pair.value;
        assert!(r.norm() < 1e-10);
        let l = m.transpose() * &pair.left - &pair.left * pair.value;
        assert!(l.norm() < 1e-10);
    }

    #[test]
    fn eigen_pair_rejects_ambiguous() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0 + 1e-8]);
        assert!(matches!(
            eigen_pair_near(&m, 1.0),
            Err(LinalgError::AmbiguousEigenvalue { .. })
        ));
    }

    #[test]
    fn bordered_solve_handles_singular_block() {
        // A has a kernel along e2; the border makes the system unique.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let c = DVector::from_row_slice(&[0.0, 1.0]);
        let r = DVector::from_row_slice(&[0.0, 1.0]);
        let b = DVector::from_row_slice(&[3.0, 2.0]);
        let (x, s) = bordered_solve(&a, &c, &r, &b, 5.0).unwrap();
        assert_relative_eq!(x[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 5.0, epsilon = 1e-12);
        assert_relative_eq!(s, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn restricted_solve_plain_when_invertible() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 0.0, 2.0]);
        let rhs = DVector::from_row_slice(&[7.0, 4.0]);
        let x = restricted_solve(&m, &rhs).unwrap();
        assert!((m * x - rhs).norm() < 1e-12);
    }

    #[test]
    fn restricted_solve_rank_deficient() {
        // Rank-one kernel: column space is spanned by (1,1)ᵀ and (1,0)ᵀ is
        // off-range, while (2,2)ᵀ has the preimage free along the kernel.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let rhs = DVector::from_row_slice(&[2.0, 2.0]);
        let x = restricted_solve(&m, &rhs).unwrap();
        assert!((&m * &x - &rhs).norm() < 1e-10);
        // Solution must lie in the range of M, i.e. orthogonal to the left
        // null vector (1,-1)/√2.
        assert!((x[0] - x[1]).abs() < 1e-10);
        let bad = DVector::from_row_slice(&[1.0, 0.0]);
        assert!(matches!(
            restricted_solve(&m, &bad),
            Err(LinalgError::OffRange { .. })
        ));
    }

    #[test]
    fn small_solver_matches_lu() {
        let a = [4.0, 1.0, 2.0, 1.0, 5.0, 1.0, 2.0, 1.0, 6.0];
        let b = [1.0, 2.0, 3.0];
        let mut a_work = a;
        let mut b_work = b;
        assert!(solve_in_place_small(3, &mut a_work, &mut b_work));
        let a_mat = DMatrix::from_row_slice(3, 3, &a);
        let b_vec = DVector::from_row_slice(&b);
        let x = solve_refusing(&a_mat, &b_vec).unwrap();
        for i in 0..3 {
            assert_relative_eq!(b_work[i], x[i], epsilon = 1e-12);
        }
    }
}
