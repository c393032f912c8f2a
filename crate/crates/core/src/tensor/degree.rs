//! Degree correction by removal of the principal eigen-component.
//!
//! For a symmetric layer `Y` with dominant eigenpair `(λ, u)` (largest `|λ|`,
//! sign kept), the null model is `Ω = λ·u·uᵀ` and the corrected layer is
//! `B = Y − Ω`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::CooccurrenceTensor;

/// One degree-corrected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeCorrection {
    pub corrected: DMatrix<f64>,
    pub null_model: DMatrix<f64>,
    /// Principal eigenvalue, sign preserved.
    pub eigenvalue: f64,
    /// Unit eigenvector; its largest-magnitude entry is positive.
    pub eigenvector: DVector<f64>,
}

/// Splits a symmetric layer into its rank-one principal part and the rest.
///
/// When two eigenvalues share the maximal modulus the positive one is used;
/// among equal positive eigenvalues the first in decomposition order wins and
/// a warning is logged.
pub fn degree_correct(y: &DMatrix<f64>) -> Result<DegreeCorrection> {
    let n = y.nrows();
    if y.ncols() != n {
        return Err(Error::Validation(format!("layer is {}x{}, not square", n, y.ncols())));
    }
    let scale = y.amax().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (y[(i, j)] - y[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Validation(format!(
                    "layer not symmetric at ({i}, {j}): {} vs {}",
                    y[(i, j)],
                    y[(j, i)]
                )));
            }
        }
    }
    if n == 0 {
        return Ok(DegreeCorrection {
            corrected: y.clone(),
            null_model: y.clone(),
            eigenvalue: 0.0,
            eigenvector: DVector::zeros(0),
        });
    }

    let eig = SymmetricEigen::new(y.clone());
    let max_abs = eig.eigenvalues.amax();
    let tie_tol = 1e-10 * max_abs.max(1e-300);
    let candidates: Vec<usize> = (0..n)
        .filter(|&k| (eig.eigenvalues[k].abs() - max_abs).abs() <= tie_tol)
        .collect();
    let positive: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&k| eig.eigenvalues[k] > 0.0)
        .collect();
    let pick = match positive.as_slice() {
        [] => candidates[0],
        [only] => *only,
        [first, ..] => {
            if max_abs > 0.0 {
                log::warn!(
                    "principal eigenvalue {} has multiplicity {}; using the first eigenvector",
                    eig.eigenvalues[*first],
                    positive.len()
                );
            }
            *first
        }
    };

    let eigenvalue = eig.eigenvalues[pick];
    let mut u: DVector<f64> = eig.eigenvectors.column(pick).into_owned();
    let norm = u.norm();
    if norm > 0.0 {
        u /= norm;
    }
    let lead = u.iamax();
    if u[lead] < 0.0 {
        u.neg_mut();
    }

    let null_model = &u * u.transpose() * eigenvalue;
    let mut corrected = y - &null_model;
    // Ω is symmetric in exact arithmetic; keep B exactly symmetric as well
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (corrected[(i, j)] + corrected[(j, i)]);
            corrected[(i, j)] = avg;
            corrected[(j, i)] = avg;
        }
    }
    Ok(DegreeCorrection {
        corrected,
        null_model,
        eigenvalue,
        eigenvector: u,
    })
}

/// Degree-corrected layers `B_t` with the removed `Ω_t` kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedTensor {
    layers: Vec<DMatrix<f64>>,
    null_models: Vec<DMatrix<f64>>,
    eigenvalues: Vec<f64>,
}

impl CorrectedTensor {
    pub fn from_counts(tensor: &CooccurrenceTensor) -> Result<Self> {
        let mut layers = Vec::with_capacity(tensor.t());
        let mut null_models = Vec::with_capacity(tensor.t());
        let mut eigenvalues = Vec::with_capacity(tensor.t());
        for y in tensor.real_layers() {
            let dc = degree_correct(&y)?;
            layers.push(dc.corrected);
            null_models.push(dc.null_model);
            eigenvalues.push(dc.eigenvalue);
        }
        Ok(CorrectedTensor {
            layers,
            null_models,
            eigenvalues,
        })
    }

    /// Wraps layers that are already on the corrected scale (`Ω_t = 0`).
    pub fn from_layers(layers: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::Validation("tensor has no layers".into()));
        };
        let n = first.nrows();
        for (k, b) in layers.iter().enumerate() {
            if b.nrows() != n || b.ncols() != n {
                return Err(Error::Validation(format!(
                    "layer {} is {}x{}, expected {n}x{n}",
                    k + 1,
                    b.nrows(),
                    b.ncols()
                )));
            }
            let scale = b.amax().max(1.0);
            for i in 0..n {
                for j in (i + 1)..n {
                    if (b[(i, j)] - b[(j, i)]).abs() > 1e-9 * scale {
                        return Err(Error::Invariant {
                            t: k + 1,
                            i,
                            j,
                            reason: "corrected layer not symmetric".into(),
                        });
                    }
                }
            }
        }
        let t = layers.len();
        Ok(CorrectedTensor {
            null_models: vec![DMatrix::zeros(n, n); t],
            eigenvalues: vec![0.0; t],
            layers,
        })
    }

    pub fn layers(&self) -> &[DMatrix<f64>] {
        &self.layers
    }

    pub fn null_models(&self) -> &[DMatrix<f64>] {
        &self.null_models
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n(&self) -> usize {
        self.layers.first().map_or(0, DMatrix::nrows)
    }

    pub fn t(&self) -> usize {
        self.layers.len()
    }
}
