use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::corpus::KeyFigureSet;
use crate::error::{Error, Result};
use crate::tensor::WeekIndex;

/// Integer co-occurrence layer.
pub type CountMatrix = DMatrix<i64>;

/// Figure × article incidence for one week.
#[derive(Debug, Clone, PartialEq)]
pub struct OccurrenceMatrix {
    pub article_ids: Vec<String>,
    /// `entries[(i, j)] == 1` iff figure `i` is mentioned in article `j`.
    pub entries: DMatrix<u8>,
}

/// Builds the incidence matrix of one week's articles. Names outside
/// `figures` are ignored.
pub fn build_occurrence_matrix(
    week_articles: &[(String, BTreeSet<String>)],
    figures: &KeyFigureSet,
) -> OccurrenceMatrix {
    let mut entries = DMatrix::<u8>::zeros(figures.len(), week_articles.len());
    for (j, (_, mentions)) in week_articles.iter().enumerate() {
        for name in mentions {
            if let Some(i) = figures.index_of(name) {
                entries[(i, j)] = 1;
            }
        }
    }
    OccurrenceMatrix {
        article_ids: week_articles.iter().map(|(id, _)| id.clone()).collect(),
        entries,
    }
}

/// `A·Aᵀ`: entry `(i, j)` counts articles mentioning both `i` and `j`.
/// The diagonal (per-figure article counts) is zeroed unless `keep_diagonal`.
pub fn cooccurrence_slice(occurrence: &OccurrenceMatrix, keep_diagonal: bool) -> CountMatrix {
    let a = occurrence.entries.map(i64::from);
    let mut y = &a * a.transpose();
    if !keep_diagonal {
        y.fill_diagonal(0);
    }
    y
}

/// `N×N×T` stack of weekly co-occurrence counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceTensor {
    layers: Vec<CountMatrix>,
    figures: KeyFigureSet,
    weeks: Vec<WeekIndex>,
    self_counts: bool,
    articles_per_week: Option<Vec<u64>>,
}

/// Orders and validates weekly slices into a tensor.
///
/// Each slice must be `N×N`, symmetric and non-negative, with a zero
/// diagonal; the first offending entry is reported.
pub fn assemble_tensor(
    weekly_slices: Vec<CountMatrix>,
    figures: KeyFigureSet,
    weeks: Vec<WeekIndex>,
) -> Result<CooccurrenceTensor> {
    CooccurrenceTensor::new(weekly_slices, figures, weeks, false)
}

impl CooccurrenceTensor {
    pub fn new(
        layers: Vec<CountMatrix>,
        figures: KeyFigureSet,
        weeks: Vec<WeekIndex>,
        self_counts: bool,
    ) -> Result<Self> {
        if layers.len() != weeks.len() {
            return Err(Error::Validation(format!(
                "{} slices for {} weeks",
                layers.len(),
                weeks.len()
            )));
        }
        let n = figures.len();
        for (k, (y, w)) in layers.iter().zip(&weeks).enumerate() {
            let t = w.t;
            if w.t != k + 1 {
                return Err(Error::Validation(format!("week {} stored at position {}", w.t, k + 1)));
            }
            if y.nrows() != n || y.ncols() != n {
                return Err(Error::Validation(format!(
                    "week {t}: slice is {}x{}, expected {n}x{n}",
                    y.nrows(),
                    y.ncols()
                )));
            }
            for i in 0..n {
                if !self_counts && y[(i, i)] != 0 {
                    return Err(Error::Invariant {
                        t,
                        i,
                        j: i,
                        reason: format!("nonzero diagonal {}", y[(i, i)]),
                    });
                }
                for j in 0..n {
                    if y[(i, j)] < 0 {
                        return Err(Error::Invariant {
                            t,
                            i,
                            j,
                            reason: format!("negative count {}", y[(i, j)]),
                        });
                    }
                    if j > i && y[(i, j)] != y[(j, i)] {
                        return Err(Error::Invariant {
                            t,
                            i,
                            j,
                            reason: format!("asymmetric: {} vs {}", y[(i, j)], y[(j, i)]),
                        });
                    }
                }
            }
        }
        Ok(CooccurrenceTensor {
            layers,
            figures,
            weeks,
            self_counts,
            articles_per_week: None,
        })
    }

    /// Attaches per-week article totals and checks no pair count exceeds them.
    pub fn with_article_counts(mut self, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != self.layers.len() {
            return Err(Error::Validation("article counts must cover every week".into()));
        }
        for (y, (&m, w)) in self.layers.iter().zip(counts.iter().zip(&self.weeks)) {
            if let Some(((i, j), v)) = y
                .iter()
                .enumerate()
                .map(|(k, v)| ((k % y.nrows(), k / y.nrows()), v))
                .find(|(_, &v)| v as u64 > m)
            {
                return Err(Error::Invariant {
                    t: w.t,
                    i,
                    j,
                    reason: format!("count {v} exceeds {m} articles"),
                });
            }
        }
        self.articles_per_week = Some(counts);
        Ok(self)
    }

    pub fn layers(&self) -> &[CountMatrix] {
        &self.layers
    }

    pub fn layer(&self, t: usize) -> &CountMatrix {
        &self.layers[t - 1]
    }

    pub fn figures(&self) -> &KeyFigureSet {
        &self.figures
    }

    pub fn weeks(&self) -> &[WeekIndex] {
        &self.weeks
    }

    pub fn n(&self) -> usize {
        self.figures.len()
    }

    pub fn t(&self) -> usize {
        self.layers.len()
    }

    pub fn self_counts(&self) -> bool {
        self.self_counts
    }

    pub fn articles_per_week(&self) -> Option<&[u64]> {
        self.articles_per_week.as_deref()
    }

    /// Layers as real matrices.
    pub fn real_layers(&self) -> Vec<DMatrix<f64>> {
        self.layers.iter().map(|y| y.map(|v| v as f64)).collect()
    }

    /// Restricts the tensor to the figures not named in `names`; the remaining
    /// figures keep their relative order and are re-indexed densely.
    pub fn drop_figures<S: AsRef<str>>(&self, names: &[S]) -> Result<CooccurrenceTensor> {
        let mut dropped = vec![false; self.n()];
        for name in names {
            let name = name.as_ref();
            let i = self
                .figures
                .index_of(name)
                .ok_or_else(|| Error::UnknownFigure(name.to_string()))?;
            dropped[i] = true;
        }
        let keep: Vec<usize> = (0..self.n()).filter(|&i| !dropped[i]).collect();
        let figures = KeyFigureSet::new(
            keep.iter()
                .map(|&i| self.figures.names()[i].clone())
                .collect(),
        )?;
        let layers = self
            .layers
            .iter()
            .map(|y| y.select_rows(&keep).select_columns(&keep))
            .collect();
        Ok(CooccurrenceTensor {
            layers,
            figures,
            weeks: self.weeks.clone(),
            self_counts: self.self_counts,
            articles_per_week: self.articles_per_week.clone(),
        })
    }
}

/// Free-function form of [`CooccurrenceTensor::drop_figures`].
pub fn drop_figures<S: AsRef<str>>(
    tensor: &CooccurrenceTensor,
    names: &[S],
) -> Result<CooccurrenceTensor> {
    tensor.drop_figures(names)
}
