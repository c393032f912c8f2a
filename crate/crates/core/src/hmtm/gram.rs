use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Classical Gram-Schmidt without normalization: column `j` loses its
/// projections onto the already processed columns `0..j`. A second pass runs
/// when the first leaves an off-diagonal Gram entry above `1e-8`.
pub fn gram_schmidt(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = project_out(u)?;
    if super::state::max_off_diagonal(&out) > 1e-8 {
        out = project_out(&out)?;
    }
    Ok(out)
}

fn project_out(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut q = a.clone();
    for j in 0..a.ncols() {
        let original = a.column(j);
        let scale = original.norm();
        for k in 0..j {
            let qk = q.column(k).into_owned();
            let coef = original.dot(&qk) / qk.norm_squared();
            q.column_mut(j).axpy(-coef, &qk, 1.0);
        }
        let left = q.column(j).norm();
        if !(left > 1e-10 * scale) || !left.is_finite() {
            return Err(Error::numerical(
                "gram-schmidt",
                format!("column {} is degenerate (residual norm {left:e})", j + 1),
            ));
        }
    }
    Ok(q)
}

/// Flips each column so that its largest-magnitude entry is positive and
/// reports which columns were flipped.
pub fn canonical_signs(u: &mut DMatrix<f64>) -> Vec<bool> {
    (0..u.ncols())
        .map(|r| {
            let lead = u.column(r).iamax();
            let flip = u[(lead, r)] < 0.0;
            if flip {
                u.column_mut(r).neg_mut();
            }
            flip
        })
        .collect()
}
