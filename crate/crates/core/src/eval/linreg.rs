//! Least-squares baseline over BoVW features.

use crate::error::{Error, Result};

const RIDGE_LAMBDA: f64 = 1e-6;

/// Fits `y ~ X w + b` via the normal equations (intercept appended as the
/// last coefficient). A plain solve is tried first so full-rank systems are
/// exact; rank-deficient ones fall back to ridge regularization with
/// lambda = 1e-6 on the feature block.
pub fn linear_regression_fit(x: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "design matrix has {} rows, targets {}",
            x.len(),
            y.len()
        )));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(Error::shape("linear_regression_fit", "ragged design matrix"));
    }
    let n_coef = dim + 1;

    // Normal equations over the augmented design [X | 1].
    let mut xtx = vec![vec![0.0f64; n_coef]; n_coef];
    let mut xty = vec![0.0f64; n_coef];
    for (row, &target) in x.iter().zip(y) {
        let aug = |i: usize| if i < dim { row[i] } else { 1.0 };
        for i in 0..n_coef {
            xty[i] += aug(i) * target;
            for j in i..n_coef {
                xtx[i][j] += aug(i) * aug(j);
            }
        }
    }
    for i in 0..n_coef {
        for j in 0..i {
            xtx[i][j] = xtx[j][i];
        }
    }

    if let Some(sol) = solve(xtx.clone(), xty.clone()) {
        return Ok(sol);
    }
    // Ridge on the feature block only; the intercept stays unpenalized.
    let mut ridged = xtx;
    for (i, row) in ridged.iter_mut().enumerate().take(dim) {
        row[i] += RIDGE_LAMBDA;
    }
    solve(ridged, xty).ok_or_else(|| {
        Error::InvalidArgument("design matrix is singular even with ridge regularization".into())
    })
}

pub fn linear_predict(coeffs: &[f64], features: &[f64]) -> Result<f64> {
    if coeffs.len() != features.len() + 1 {
        return Err(Error::shape(
            "linear_predict",
            format!(
                "{} coefficients for {} features",
                coeffs.len(),
                features.len()
            ),
        ));
    }
    let dot: f64 = coeffs.iter().zip(features).map(|(c, f)| c * f).sum();
    Ok(dot + coeffs[features.len()])
}

/// Gaussian elimination with partial pivoting. None when a pivot collapses.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale: f64 = a
        .iter()
        .flat_map(|r| r.iter().map(|v| v.abs()))
        .fold(0.0, f64::max)
        .max(1.0);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot_row][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
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
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in i + 1..n {
            acc -= a[i][j] * x[j];
        }
        x[i] = acc / a[i][i];
    }
    Some(x)
}
