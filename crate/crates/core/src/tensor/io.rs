//! On-disk tensor directories.
//!
//! ```text
//! meta.json        figures, weeks, N, T, kind
//! Y_1.csv ... Y_T  integer counts (dense, row-major, no header)
//! B_1.csv ... B_T  degree-corrected reals
//! ```

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::KeyFigureSet;
use crate::error::{Error, Result};
use crate::tensor::{CooccurrenceTensor, CorrectedTensor, WeekIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    /// Integer co-occurrence counts, with their degree-corrected layers.
    Counts,
    /// Real layers already on the corrected scale; no `Y_t` files.
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub kind: TensorKind,
    pub n: usize,
    pub t: usize,
    pub figures: KeyFigureSet,
    pub weeks: Vec<WeekIndex>,
    #[serde(default)]
    pub self_counts: bool,
    #[serde(default)]
    pub articles_per_week: Option<Vec<u64>>,
}

/// A tensor directory loaded into memory.
#[derive(Debug, Clone)]
pub struct TensorBundle {
    pub meta: TensorMeta,
    pub counts: Option<CooccurrenceTensor>,
    pub corrected: CorrectedTensor,
}

impl TensorBundle {
    pub fn from_counts(counts: CooccurrenceTensor) -> Result<Self> {
        let corrected = CorrectedTensor::from_counts(&counts)?;
        let meta = TensorMeta {
            kind: TensorKind::Counts,
            n: counts.n(),
            t: counts.t(),
            figures: counts.figures().clone(),
            weeks: counts.weeks().to_vec(),
            self_counts: counts.self_counts(),
            articles_per_week: counts.articles_per_week().map(<[u64]>::to_vec),
        };
        Ok(TensorBundle {
            meta,
            counts: Some(counts),
            corrected,
        })
    }

    pub fn from_corrected(
        corrected: CorrectedTensor,
        figures: KeyFigureSet,
        weeks: Vec<WeekIndex>,
    ) -> Result<Self> {
        if figures.len() != corrected.n() || weeks.len() != corrected.t() {
            return Err(Error::Validation(format!(
                "{} figures / {} weeks for a {}x{}x{} tensor",
                figures.len(),
                weeks.len(),
                corrected.n(),
                corrected.n(),
                corrected.t()
            )));
        }
        let meta = TensorMeta {
            kind: TensorKind::Corrected,
            n: corrected.n(),
            t: corrected.t(),
            figures,
            weeks,
            self_counts: false,
            articles_per_week: None,
        };
        Ok(TensorBundle {
            meta,
            counts: None,
            corrected,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("meta.json"), &self.meta)?;
        if let Some(counts) = &self.counts {
            for (k, y) in counts.layers().iter().enumerate() {
                write_matrix_csv(&dir.join(format!("Y_{}.csv", k + 1)), y)?;
            }
        }
        for (k, b) in self.corrected.layers().iter().enumerate() {
            write_matrix_csv(&dir.join(format!("B_{}.csv", k + 1)), b)?;
        }
        Ok(())
    }

    /// Loads a tensor directory. Count tensors are re-validated and
    /// degree-corrected from `Y_t`; corrected tensors are read from `B_t`.
    pub fn read(dir: &Path) -> Result<Self> {
        let meta: TensorMeta = read_json(&dir.join("meta.json"))?;
        match meta.kind {
            TensorKind::Counts => {
                let layers = (1..=meta.t)
                    .map(|t| read_matrix_csv::<i64>(&dir.join(format!("Y_{t}.csv"))))
                    .collect::<Result<Vec<_>>>()?;
                let mut counts = CooccurrenceTensor::new(
                    layers,
                    meta.figures.clone(),
                    meta.weeks.clone(),
                    meta.self_counts,
                )?;
                if let Some(articles) = &meta.articles_per_week {
                    counts = counts.with_article_counts(articles.clone())?;
                }
                TensorBundle::from_counts(counts)
            }
            TensorKind::Corrected => {
                let layers = (1..=meta.t)
                    .map(|t| read_matrix_csv::<f64>(&dir.join(format!("B_{t}.csv"))))
                    .collect::<Result<Vec<_>>>()?;
                TensorBundle::from_corrected(
                    CorrectedTensor::from_layers(layers)?,
                    meta.figures,
                    meta.weeks,
                )
            }
        }
    }

    /// Per-week layers on the count scale when available, else the corrected
    /// layers.
    pub fn observed_layers(&self) -> Vec<DMatrix<f64>> {
        match &self.counts {
            Some(c) => c.real_layers(),
            None => self.corrected.layers().to_vec(),
        }
    }
}

pub fn write_matrix_csv<T: Display + nalgebra::Scalar>(path: &Path, m: &DMatrix<T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| m[(i, j)].to_string()))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix_csv<T>(path: &Path) -> Result<DMatrix<T>>
where
    T: FromStr + nalgebra::Scalar,
    T::Err: Display,
{
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut rows: Vec<Vec<T>> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|field| {
                field
                    .trim()
                    .parse::<T>()
                    .map_err(|e| Error::parse(path, format!("bad value `{field}`: {e}")))
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::parse(path, "ragged rows"));
    }
    Ok(DMatrix::from_row_iterator(n, m, rows.into_iter().flatten()))
}

/// Figure-by-week matrix with a `figure` column and one column per week.
pub fn write_centrality_csv(
    path: &Path,
    figures: &KeyFigureSet,
    weeks: &[WeekIndex],
    values: &DMatrix<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = std::iter::once("figure".to_string()).chain(weeks.iter().map(WeekIndex::label));
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for (i, name) in figures.names().iter().enumerate() {
        let row = std::iter::once(name.clone())
            .chain((0..values.ncols()).map(|t| values[(i, t)].to_string()));
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    let path = PathBuf::from(path);
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, format!("{other:?}")),
        }
    } else {
        Error::parse(path, e)
    }
}
