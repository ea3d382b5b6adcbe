//! Minimal dense linear algebra for the small systems this crate solves:
//! 3×3 mode-coefficient systems and least-squares problems with ≤ 6 columns.

use crate::error::{Error, Result};

/// Solves A x = b by Gaussian elimination with partial pivoting.
/// `a` is row-major n×n and is consumed as scratch.
pub(crate) fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    assert!(a.len() == n && a.iter().all(|r| r.len() == n));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < f64::MIN_POSITIVE.sqrt() {
            return Err(Error::Numerical("singular linear system".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Ok(x)
}

/// Least-squares solution of J x ≈ r (m ≥ n) by Householder QR.
/// Returns the minimizer; errors on rank deficiency.
pub(crate) fn lstsq(j: &[Vec<f64>], r: &[f64]) -> Result<Vec<f64>> {
    let m = j.len();
    let n = if m == 0 { 0 } else { j[0].len() };
    if m < n || n == 0 {
        return Err(Error::Domain(format!(
            "lstsq: need at least as many rows ({m}) as columns ({n})"
        )));
    }
    let mut a: Vec<Vec<f64>> = j.to_vec();
    let mut b: Vec<f64> = r.to_vec();
    for col in 0..n {
        let norm: f64 = (col..m).map(|i| a[i][col] * a[i][col]).sum::<f64>().sqrt();
        if norm < f64::MIN_POSITIVE.sqrt() {
            return Err(Error::Numerical("lstsq: rank-deficient design matrix".into()));
        }
        let alpha = if a[col][col] >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (col..m).map(|i| a[i][col]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for k in col..n {
                let dot: f64 = (col..m).map(|i| v[i - col] * a[i][k]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in col..m {
                    a[i][k] -= f * v[i - col];
                }
            }
            let dot: f64 = (col..m).map(|i| v[i - col] * b[i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in col..m {
                b[i] -= f * v[i - col];
            }
        }
        a[col][col] = alpha;
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        if a[row][row].abs() < f64::MIN_POSITIVE.sqrt() {
            return Err(Error::Numerical("lstsq: rank-deficient design matrix".into()));
        }
        x[row] = s / a[row][row];
    }
    Ok(x)
}

/// Inverse of the symmetric positive (semi)definite JᵀJ, for the linearized
/// fit covariance. Returns `None` when the normal matrix is singular.
pub(crate) fn normal_matrix_inverse(j: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let m = j.len();
    let n = if m == 0 { 0 } else { j[0].len() };
    let mut jtj = vec![vec![0.0; n]; n];
    for row in j {
        for a in 0..n {
            for b in a..n {
                jtj[a][b] += row[a] * row[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            jtj[a][b] = jtj[b][a];
        }
    }
    let mut inv = vec![vec![0.0; n]; n];
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        match solve_dense(jtj.clone(), e) {
            Ok(x) => {
                for row in 0..n {
                    inv[row][col] = x[row];
                }
            }
            Err(_) => return None,
        }
    }
    Some(inv)
}
