//! Dense LU with partial pivoting. Reference solver for small systems; the
//! iterative paths are checked against it in tests and in the macro-solver
//! regression oracle.

use crate::{HomogError, Result};

/// Solve `A x = b` in place by LU with partial pivoting. `a` is row-major
/// `n × n` and is destroyed.
pub fn solve_in_place(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>> {
    let n = b.len();
    assert_eq!(a.len(), n);
    for k in 0..n {
        let mut piv = k;
        let mut best = a[k][k].abs();
        for i in (k + 1)..n {
            let v = a[i][k].abs();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if best == 0.0 {
            return Err(HomogError::SingularMatrix {
                det: 0.0,
                threshold: 0.0,
            });
        }
        if piv != k {
            a.swap(piv, k);
            b.swap(piv, k);
        }
        let akk = a[k][k];
        for i in (k + 1)..n {
            let f = a[i][k] / akk;
            if f == 0.0 {
                continue;
            }
            a[i][k] = 0.0;
            // Split borrow: row k is read-only while row i is updated.
            let (upper, lower) = a.split_at_mut(i);
            let row_k = &upper[k];
            let row_i = &mut lower[0];
            for j in (k + 1)..n {
                row_i[j] -= f * row_k[j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut acc = b[k];
        for j in (k + 1)..n {
            acc -= a[k][j] * x[j];
        }
        x[k] = acc / a[k][k];
    }
    Ok(x)
}

/// Solve a consistent singular system whose kernel is the constant vector by
/// the rank-one-shift trick: `(A + 1 1ᵀ) x = b` has the unique zero-mean
/// solution of `A x = b` when `1ᵀ b = 0` and `ker A = span{1}`.
pub fn solve_mean_zero(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>> {
    for row in a.iter_mut() {
        for v in row.iter_mut() {
            *v += 1.0;
        }
    }
    solve_in_place(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let mut a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let mut b = vec![5.0, 10.0];
        let x = solve_in_place(&mut a, &mut b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn mean_zero_solve_on_ring_laplacian() {
        // 4-node ring graph Laplacian; rhs orthogonal to constants.
        let n = 4;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 2.0;
            a[i][(i + 1) % n] = -1.0;
            a[i][(i + n - 1) % n] = -1.0;
        }
        let mut b = vec![1.0, -1.0, 1.0, -1.0];
        let x = solve_mean_zero(&mut a, &mut b).unwrap();
        let mean: f64 = x.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-14);
        // Check A x = b with the original Laplacian.
        for i in 0..n {
            let r = 2.0 * x[i] - x[(i + 1) % n] - x[(i + n - 1) % n];
            let rhs = [1.0, -1.0, 1.0, -1.0][i];
            assert!((r - rhs).abs() < 1e-12);
        }
    }
}
