//! Synthetic layer sequences with planted regime changes and block structure.

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::corpus::KeyFigureSet;
use crate::error::{Error, Result};
use crate::tensor::{assemble_tensor, CooccurrenceTensor, CountMatrix, WeekIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub t: usize,
    pub r: usize,
    /// 1-based layers at which a new regime starts, strictly increasing in
    /// `2..=t`.
    pub breakpoints: Vec<usize>,
    /// Block label in `1..=r` of every node, one assignment per regime.
    pub blocks: Vec<Vec<usize>>,
    pub within: f64,
    pub between: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

/// Ground truth alongside the generated layers.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub layers: Vec<DMatrix<f64>>,
    /// 0-based regime of each layer.
    pub states: Vec<usize>,
}

/// Node `i` gets label `(i / w) % r + 1` with block width `w = (n/r) >> m`
/// in regime `m`: contiguous halves first, then progressively finer
/// interleavings, so consecutive regimes never share a partition.
pub fn nested_blocks(n: usize, r: usize, regimes: usize) -> Vec<Vec<usize>> {
    (0..regimes)
        .map(|m| {
            let width = ((n / r.max(1)) >> m).max(1);
            (0..n).map(|i| (i / width) % r + 1).collect()
        })
        .collect()
}

impl SynthSpec {
    /// Spec with [`nested_blocks`] assignments.
    pub fn planted(
        n: usize,
        t: usize,
        r: usize,
        breakpoints: Vec<usize>,
        contrast: (f64, f64),
        noise_sd: f64,
        seed: u64,
    ) -> Self {
        let blocks = nested_blocks(n, r, breakpoints.len() + 1);
        SynthSpec {
            n,
            t,
            r,
            breakpoints,
            blocks,
            within: contrast.0,
            between: contrast.1,
            noise_sd,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n == 0 || self.t == 0 || self.r == 0 {
            return bad("n, t and r must be positive".into());
        }
        let mut prev = 1;
        for &b in &self.breakpoints {
            if b <= prev || b > self.t {
                return bad(format!("breakpoints {:?} must increase within 2..={}", self.breakpoints, self.t));
            }
            prev = b;
        }
        if self.blocks.len() != self.breakpoints.len() + 1 {
            return bad(format!(
                "{} block assignments for {} regimes",
                self.blocks.len(),
                self.breakpoints.len() + 1
            ));
        }
        for labels in &self.blocks {
            if labels.len() != self.n || labels.iter().any(|&l| l == 0 || l > self.r) {
                return bad(format!("block labels must be {} values in 1..={}", self.n, self.r));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd must be non-negative".into());
        }
        if !self.within.is_finite() || !self.between.is_finite() {
            return bad("block intensities must be finite".into());
        }
        Ok(())
    }

    /// 0-based regime of each layer.
    pub fn states(&self) -> Vec<usize> {
        (1..=self.t)
            .map(|t| self.breakpoints.iter().filter(|&&b| b <= t).count())
            .collect()
    }

    /// Noise-free layer of regime `m`, zero on the diagonal.
    pub fn block_mean(&self, m: usize) -> DMatrix<f64> {
        let labels = &self.blocks[m];
        DMatrix::from_fn(self.n, self.n, |i, j| {
            if i == j {
                0.0
            } else if labels[i] == labels[j] {
                self.within
            } else {
                self.between
            }
        })
    }
}

/// Real-valued layers: block means plus symmetric `N(0, noise_sd²)` noise,
/// zero diagonal.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let states = spec.states();
    let means: Vec<_> = (0..spec.blocks.len()).map(|m| spec.block_mean(m)).collect();
    let layers = states
        .iter()
        .map(|&m| {
            let mut b = means[m].clone();
            for i in 0..spec.n {
                for j in (i + 1)..spec.n {
                    let x = b[(i, j)] + noise.sample(&mut rng);
                    b[(i, j)] = x;
                    b[(j, i)] = x;
                }
            }
            b
        })
        .collect();
    Ok(SynthData { layers, states })
}

/// Integer layers: Poisson counts around the (non-negative) block means.
/// Figures are named `node_1..node_N` and weeks start on 2018-01-01.
pub fn generate_counts(spec: &SynthSpec) -> Result<(CooccurrenceTensor, Vec<usize>)> {
    spec.validate()?;
    if spec.within < 0.0 || spec.between < 0.0 {
        return Err(Error::Config("count mode needs non-negative intensities".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let states = spec.states();
    let means: Vec<_> = (0..spec.blocks.len()).map(|m| spec.block_mean(m)).collect();
    let mut layers = Vec::with_capacity(spec.t);
    for &m in &states {
        let mut y = CountMatrix::zeros(spec.n, spec.n);
        for i in 0..spec.n {
            for j in (i + 1)..spec.n {
                let lambda = means[m][(i, j)];
                let k = if lambda > 0.0 {
                    Poisson::new(lambda)
                        .map_err(|e| Error::Config(e.to_string()))?
                        .sample(&mut rng) as i64
                } else {
                    0
                };
                y[(i, j)] = k;
                y[(j, i)] = k;
            }
        }
        layers.push(y);
    }
    let figures = KeyFigureSet::new((1..=spec.n).map(|i| format!("node_{i}")).collect())?;
    let epoch = NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date");
    let weeks = (1..=spec.t).map(|t| WeekIndex::nth(epoch, t)).collect();
    Ok((assemble_tensor(layers, figures, weeks)?, states))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_noiseless_regime_repeats() {
        let spec = SynthSpec::planted(6, 5, 2, vec![], (2.0, -1.0), 0.0, 1);
        let data = generate(&spec).unwrap();
        assert!(data.layers.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(data.states, vec![0; 5]);
    }

    #[test]
    fn breakpoint_sets_states() {
        let spec = SynthSpec::planted(4, 24, 2, vec![13], (1.0, 0.0), 1.0, 1);
        let s = spec.states();
        assert_eq!(&s[..12], &[0; 12]);
        assert_eq!(&s[12..], &[1; 12]);
    }

    #[test]
    fn noiseless_contrast_at_break() {
        let spec = SynthSpec::planted(8, 6, 2, vec![4], (3.0, -1.0), 0.0, 2);
        let data = generate(&spec).unwrap();
        let diff = &data.layers[3] - &data.layers[2];
        assert_eq!(diff, spec.block_mean(1) - spec.block_mean(0));
        assert!(diff.amax() == 4.0);
    }

    #[test]
    fn layers_symmetric_zero_diagonal() {
        let spec = SynthSpec::planted(7, 3, 2, vec![2], (1.0, 0.0), 2.0, 3);
        for b in generate(&spec).unwrap().layers {
            assert_eq!(b.transpose(), b);
            assert!(b.diagonal().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn same_seed_same_tensor() {
        let spec = SynthSpec::planted(5, 4, 2, vec![3], (1.0, 0.0), 1.0, 9);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn within_block_mean_over_replicates() {
        let reps = 1000;
        let mut values = Vec::with_capacity(reps);
        for seed in 0..reps as u64 {
            let spec = SynthSpec::planted(4, 1, 2, vec![], (1.5, 0.0), 0.8, seed);
            values.push(generate(&spec).unwrap().layers[0][(0, 1)]);
        }
        let mean = values.iter().sum::<f64>() / reps as f64;
        let se = 0.8 / (reps as f64).sqrt();
        assert!((mean - 1.5).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = SynthSpec::planted(4, 6, 2, vec![3], (1.0, 0.0), 1.0, 1);
        spec.breakpoints = vec![1];
        assert!(spec.validate().is_err());
        spec.breakpoints = vec![4, 3];
        assert!(spec.validate().is_err());
        let mut spec = SynthSpec::planted(4, 6, 2, vec![3], (1.0, 0.0), 1.0, 1);
        spec.blocks[0][0] = 3;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn count_mode_is_valid_tensor() {
        let spec = SynthSpec::planted(6, 4, 2, vec![3], (4.0, 0.5), 0.0, 5);
        let (tensor, states) = generate_counts(&spec).unwrap();
        assert_eq!(tensor.t(), 4);
        assert_eq!(states, vec![0, 0, 1, 1]);
        assert!(tensor.layers().iter().all(|y| y.diagonal().iter().all(|&x| x == 0)));
    }

    #[test]
    fn nested_blocks_differ_between_regimes() {
        let b = nested_blocks(20, 2, 3);
        assert_eq!(&b[0][..], &[[1; 10], [2; 10]].concat()[..]);
        assert_ne!(b[0], b[1]);
        assert_ne!(b[1], b[2]);
    }
}
