use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One full draw of the model parameters.
///
/// Regime indices are 0-based: `states[t] = m` means layer `t + 1` belongs to
/// regime `m + 1` in file output.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    /// `N×R` latent positions, one matrix per regime.
    pub u: Vec<DMatrix<f64>>,
    /// `T×R` layer weights.
    pub v: DMatrix<f64>,
    pub mu_u: Vec<DVector<f64>>,
    pub psi_u: Vec<DVector<f64>>,
    pub mu_v: Vec<DVector<f64>>,
    pub psi_v: Vec<DVector<f64>>,
    pub beta: f64,
    pub sigma2: Vec<f64>,
    pub states: Vec<usize>,
    /// `M×M` upper-bidiagonal transition matrix.
    pub transition: DMatrix<f64>,
}

impl ChainState {
    pub fn n_regimes(&self) -> usize {
        self.u.len()
    }

    pub fn n(&self) -> usize {
        self.u.first().map_or(0, DMatrix::nrows)
    }

    pub fn latent_dim(&self) -> usize {
        self.v.ncols()
    }

    pub fn t(&self) -> usize {
        self.states.len()
    }

    /// `U_m diag(v_t) U_mᵀ`, the low-rank part of layer `t` under regime `m`.
    pub fn mean_layer(&self, m: usize, t: usize) -> DMatrix<f64> {
        low_rank(&self.u[m], self.v.row(t).iter().copied())
    }

    /// Layers assigned to each regime.
    pub fn regime_layers(&self) -> Vec<Vec<usize>> {
        regime_layers(&self.states, self.n_regimes())
    }

    /// Path, transition and orthogonality invariants.
    pub fn check(&self) -> Result<()> {
        let m = self.n_regimes();
        check_path(&self.states, m)?;
        for (k, u) in self.u.iter().enumerate() {
            let off = max_off_diagonal(u);
            if off > 1e-8 {
                return Err(Error::numerical(
                    "orthogonality",
                    format!("regime {}: off-diagonal of UᵀU is {off:e}", k + 1),
                ));
            }
        }
        for k in 0..m {
            for l in 0..m {
                let p = self.transition[(k, l)];
                let allowed = l == k || l == k + 1;
                if (!allowed && p != 0.0) || !(0.0..=1.0).contains(&p) {
                    return Err(Error::numerical(
                        "transition",
                        format!("P[{k},{l}] = {p} breaks the bidiagonal form"),
                    ));
                }
            }
        }
        if (self.transition[(m - 1, m - 1)] - 1.0).abs() > 0.0 {
            return Err(Error::numerical("transition", "last regime is not absorbing"));
        }
        Ok(())
    }
}

pub(crate) fn low_rank(u: &DMatrix<f64>, weights: impl Iterator<Item = f64>) -> DMatrix<f64> {
    let mut scaled = u.clone();
    for (r, w) in weights.enumerate() {
        scaled.column_mut(r).scale_mut(w);
    }
    scaled * u.transpose()
}

pub(crate) fn regime_layers(states: &[usize], m: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); m];
    for (t, &s) in states.iter().enumerate() {
        out[s].push(t);
    }
    out
}

/// Largest `|u_iᵀ u_j|` over distinct columns.
pub fn max_off_diagonal(u: &DMatrix<f64>) -> f64 {
    let g = u.transpose() * u;
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            if i != j {
                worst = worst.max(g[(i, j)].abs());
            }
        }
    }
    worst
}

/// A valid path starts in the first regime, ends in the last, and only ever
/// stays or moves up by one.
pub fn check_path(states: &[usize], m: usize) -> Result<()> {
    let bad = |msg: String| Err(Error::numerical("state path", msg));
    match (states.first(), states.last()) {
        (Some(0), Some(&last)) if last == m - 1 => {}
        _ => return bad(format!("path must run from regime 1 to regime {m}")),
    }
    for w in states.windows(2) {
        if w[1] != w[0] && w[1] != w[0] + 1 {
            return bad(format!("illegal move {} -> {}", w[0] + 1, w[1] + 1));
        }
    }
    Ok(())
}

/// Serialized form of a draw; matrices are nested row-major arrays and
/// regimes are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub iteration: usize,
    pub u: Vec<Vec<Vec<f64>>>,
    pub v: Vec<Vec<f64>>,
    pub mu_u: Vec<Vec<f64>>,
    pub psi_u: Vec<Vec<f64>>,
    pub mu_v: Vec<Vec<f64>>,
    pub psi_v: Vec<Vec<f64>>,
    pub beta: f64,
    pub sigma2: Vec<f64>,
    pub states: Vec<usize>,
    pub transition: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Validation("ragged matrix in draw record".into()));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.iter().flatten().copied(),
    ))
}

fn vecs(v: &[DVector<f64>]) -> Vec<Vec<f64>> {
    v.iter().map(|x| x.iter().copied().collect()).collect()
}

fn from_vecs(v: &[Vec<f64>]) -> Vec<DVector<f64>> {
    v.iter().map(|x| DVector::from_vec(x.clone())).collect()
}

impl DrawRecord {
    pub fn from_state(iteration: usize, s: &ChainState) -> Self {
        DrawRecord {
            iteration,
            u: s.u.iter().map(rows).collect(),
            v: rows(&s.v),
            mu_u: vecs(&s.mu_u),
            psi_u: vecs(&s.psi_u),
            mu_v: vecs(&s.mu_v),
            psi_v: vecs(&s.psi_v),
            beta: s.beta,
            sigma2: s.sigma2.clone(),
            states: s.states.iter().map(|m| m + 1).collect(),
            transition: rows(&s.transition),
        }
    }

    pub fn to_state(&self) -> Result<ChainState> {
        let r = self.v.first().map_or(0, Vec::len);
        let m = self.sigma2.len();
        if self.states.iter().any(|&s| s == 0 || s > m) {
            return Err(Error::Validation("regime label out of range in draw record".into()));
        }
        Ok(ChainState {
            u: self.u.iter().map(|u| from_rows(u, r)).collect::<Result<_>>()?,
            v: from_rows(&self.v, r)?,
            mu_u: from_vecs(&self.mu_u),
            psi_u: from_vecs(&self.psi_u),
            mu_v: from_vecs(&self.mu_v),
            psi_v: from_vecs(&self.psi_v),
            beta: self.beta,
            sigma2: self.sigma2.clone(),
            states: self.states.iter().map(|s| s - 1).collect(),
            transition: from_rows(&self.transition, m)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ChainState {
        ChainState {
            u: vec![
                DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]),
                DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0]),
            ],
            v: DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            mu_u: vec![DVector::zeros(2); 2],
            psi_u: vec![DVector::from_element(2, 1.0); 2],
            mu_v: vec![DVector::zeros(2); 2],
            psi_v: vec![DVector::from_element(2, 1.0); 2],
            beta: 0.5,
            sigma2: vec![1.0, 2.0],
            states: vec![0, 0, 1],
            transition: DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 1.0]),
        }
    }

    #[test]
    fn mean_layer_by_hand() {
        let s = tiny();
        // U = [e1, 2 e2], v_1 = (1, 2): diag(1, 8, 0)
        let mu = s.mean_layer(0, 0);
        assert_eq!(mu, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 8.0, 0.0])));
    }

    #[test]
    fn record_round_trip() {
        let s = tiny();
        let rec = DrawRecord::from_state(7, &s);
        assert_eq!(rec.states, vec![1, 1, 2]);
        assert_eq!(rec.v[1], vec![3.0, 4.0]);
        let json = serde_json::to_string(&rec).unwrap();
        let back: DrawRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_state().unwrap(), s);
    }

    #[test]
    fn path_rules() {
        assert!(check_path(&[0, 0, 1, 1, 2], 3).is_ok());
        assert!(check_path(&[0, 2, 2], 3).is_err());
        assert!(check_path(&[0, 1, 1], 3).is_err());
        assert!(check_path(&[1, 1, 2], 3).is_err());
        assert!(check_path(&[0, 1, 0, 1], 2).is_err());
        assert!(tiny().check().is_ok());
    }
}
