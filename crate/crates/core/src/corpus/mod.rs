//! Article ingestion, person-name extraction and key-figure selection.

mod articles;
mod names;
mod select;

pub use articles::{
    filter_and_dedupe, load_articles, normalize_text, read_articles, ArticleRecord, DateWindow,
    LoadReport, RecordError,
};
pub use names::{extract_mentions, AliasTable, MentionExtractor, SurnameLexicon};
pub use select::{required_weeks, select_key_figures, CountMode, KeyFigureSet, MentionTable};
