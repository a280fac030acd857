use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Nonnegative least squares `min |Ax - y|, x >= 0` by exhaustive search
/// over supports; meant for a handful of columns.
pub(crate) fn nnls(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.ncols();
    if n == 0 || n > 12 {
        return Err(Error::Calibration(format!("{n} columns is outside the supported 1..=12")));
    }
    if a.nrows() < n || a.clone().svd(false, false).rank(1e-9 * a.norm().max(1.0)) < n {
        return Err(Error::Calibration(format!(
            "{} rows do not determine {n} coefficients (rank deficient)",
            a.nrows()
        )));
    }
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << n) {
        let cols: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        let mut x = DVector::zeros(n);
        if !cols.is_empty() {
            let sub = a.select_columns(&cols);
            let Ok(sol) = sub.svd(true, true).solve(y, 1e-12) else { continue };
            if sol.iter().any(|v| *v < 0.0) {
                continue;
            }
            for (k, &j) in cols.iter().enumerate() {
                x[j] = sol[k];
            }
        }
        let r = (a * &x - y).norm();
        if best.as_ref().map_or(true, |(br, _)| r < *br - 1e-12) {
            best = Some((r, x));
        }
    }
    best.map(|(_, x)| x).ok_or_else(|| Error::Calibration("no feasible solution".into()))
}
