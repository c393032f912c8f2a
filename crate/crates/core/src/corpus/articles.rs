use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One news article as ingested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub id: String,
    pub source: String,
    pub date: NaiveDate,
    pub text: String,
}

/// Inclusive calendar window `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::Config(format!(
                "window end {end} precedes window start {start}"
            )));
        }
        Ok(DateWindow { start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

/// A line of the input that could not be turned into an [`ArticleRecord`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordError {
    /// 1-based line number in the input file.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub records: Vec<ArticleRecord>,
    pub errors: Vec<RecordError>,
    /// Valid records that fell outside the window.
    pub out_of_window: usize,
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    source: Option<String>,
    date: Option<String>,
    text: Option<String>,
}

/// Reads a JSON Lines article file and keeps the records dated inside `window`.
///
/// Malformed lines do not abort the load; they are reported in
/// [`LoadReport::errors`] with their line number.
pub fn load_articles(path: &Path, window: &DateWindow) -> Result<LoadReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_articles(BufReader::new(file), window).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_articles<R: BufRead>(reader: R, window: &DateWindow) -> Result<LoadReport> {
    let mut report = LoadReport::default();
    let mut seen_ids: HashSet<String> = HashSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<articles>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line) {
            Ok(record) => {
                if !seen_ids.insert(record.id.clone()) {
                    report.errors.push(RecordError {
                        line: line_no,
                        message: format!("duplicate id `{}`", record.id),
                    });
                } else if window.contains(record.date) {
                    report.records.push(record);
                } else {
                    report.out_of_window += 1;
                }
            }
            Err(message) => report.errors.push(RecordError {
                line: line_no,
                message,
            }),
        }
    }
    Ok(report)
}

fn parse_record(line: &str) -> std::result::Result<ArticleRecord, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let id = raw.id.ok_or("missing field `id`")?;
    let source = raw.source.ok_or("missing field `source`")?;
    let date = raw.date.ok_or("missing field `date`")?;
    let text = raw.text.ok_or("missing field `text`")?;
    if id.trim().is_empty() {
        return Err("empty `id`".into());
    }
    let date = NaiveDate::parse_from_str(date.trim(), "%Y-%m-%d")
        .map_err(|e| format!("bad date `{date}`: {e}"))?;
    if text.trim().is_empty() {
        return Err("empty `text`".into());
    }
    Ok(ArticleRecord {
        id,
        source,
        date,
        text,
    })
}

/// Lower-cases and collapses every whitespace run to a single space.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Keeps articles mentioning `keyword` (case-insensitive) and drops reposts.
///
/// Two articles are duplicates when their normalized text is identical; the
/// earliest-dated copy survives (input order breaks date ties). Survivors keep
/// their input order.
pub fn filter_and_dedupe(articles: &[ArticleRecord], keyword: &str) -> Result<Vec<ArticleRecord>> {
    let keyword = normalize_text(keyword);
    if keyword.is_empty() {
        return Err(Error::Config("keyword must be non-empty".into()));
    }

    let candidates: Vec<(usize, String)> = articles
        .iter()
        .enumerate()
        .filter_map(|(i, a)| {
            let norm = normalize_text(&a.text);
            norm.contains(&keyword).then_some((i, norm))
        })
        .collect();

    let mut original: HashMap<&str, usize> = HashMap::new();
    for (i, norm) in &candidates {
        original
            .entry(norm.as_str())
            .and_modify(|kept| {
                if articles[*i].date < articles[*kept].date {
                    *kept = *i;
                }
            })
            .or_insert(*i);
    }

    let mut keep: Vec<usize> = original.into_values().collect();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| articles[i].clone()).collect())
}
