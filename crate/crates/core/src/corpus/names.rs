//! Person-name recognition.
//!
//! Names are found in two ways. Curated alias variants (e.g. "Mr. Kim",
//! "Kim Jung Un") are matched on token boundaries after lower-casing and
//! whitespace collapsing, longest variant first, and resolve to their
//! canonical name. Remaining runs of two or three capitalized tokens whose
//! last token is a known surname are reported under their surface form.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::BufRead;
use std::path::Path;

use crate::corpus::articles::{normalize_text, ArticleRecord};
use crate::error::{Error, Result};

const DEFAULT_ALIASES: &str = include_str!("../../data/aliases.tsv");
const DEFAULT_SURNAMES: &str = include_str!("../../data/surnames.txt");

/// Canonical person name → set of spelling variants.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AliasTable {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl AliasTable {
    /// Builds a table from `(canonical, variant)` pairs.
    ///
    /// Each canonical name is added as a variant of itself. Fails when the same
    /// normalized variant is claimed by two canonical names.
    pub fn from_pairs<I, S1, S2>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S1, S2)>,
        S1: AsRef<str>,
        S2: AsRef<str>,
    {
        let mut entries: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (canonical, variant) in pairs {
            let canonical = canonical.as_ref().split_whitespace().collect::<Vec<_>>().join(" ");
            let variant = variant.as_ref().split_whitespace().collect::<Vec<_>>().join(" ");
            if canonical.is_empty() || variant.is_empty() {
                return Err(Error::Validation("alias entries must be non-empty".into()));
            }
            let set = entries.entry(canonical.clone()).or_default();
            set.insert(canonical);
            set.insert(variant);
        }

        let mut owner: HashMap<String, &str> = HashMap::new();
        for (canonical, variants) in &entries {
            for v in variants {
                if let Some(prev) = owner.insert(normalize_text(v), canonical) {
                    if prev != canonical {
                        return Err(Error::Validation(format!(
                            "variant `{v}` claimed by both `{prev}` and `{canonical}`"
                        )));
                    }
                }
            }
        }
        Ok(AliasTable { entries })
    }

    /// Parses `canonical<TAB>variant` lines; `#` comments, blank lines and a
    /// `canonical\tvariant` header are skipped.
    pub fn parse_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<aliases>", e))?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(canonical), Some(variant), None) = (cols.next(), cols.next(), cols.next())
            else {
                return Err(Error::parse(
                    "<aliases>",
                    format!("line {}: expected two tab-separated columns", idx + 1),
                ));
            };
            if canonical.trim() == "canonical" && variant.trim() == "variant" {
                continue;
            }
            pairs.push((canonical.trim().to_string(), variant.trim().to_string()));
        }
        AliasTable::from_pairs(pairs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        AliasTable::parse_tsv(text.as_bytes()).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path, message),
            other => other,
        })
    }

    /// The curated table shipped with the crate.
    pub fn bundled() -> Self {
        AliasTable::parse_tsv(DEFAULT_ALIASES.as_bytes()).expect("bundled alias table is valid")
    }

    pub fn entries(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.entries
    }

    pub fn canonical_names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Lower-cased, deduplicated surnames.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SurnameLexicon {
    surnames: BTreeSet<String>,
}

impl SurnameLexicon {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(names: I) -> Self {
        let surnames = names
            .into_iter()
            .map(|s| s.as_ref().trim().to_lowercase())
            .filter(|s| !s.is_empty() && !s.starts_with('#'))
            .collect();
        SurnameLexicon { surnames }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(SurnameLexicon::new(text.lines()))
    }

    pub fn bundled() -> Self {
        SurnameLexicon::new(DEFAULT_SURNAMES.lines())
    }

    pub fn contains(&self, surname: &str) -> bool {
        self.surnames.contains(&surname.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.surnames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surnames.is_empty()
    }
}

/// Leading tokens never taken as a given name.
const TITLE_WORDS: &[&str] = &[
    "a", "after", "ambassador", "an", "and", "as", "at", "before", "but", "by", "chairman",
    "chief", "dr", "east", "for", "former", "gen", "general", "gov", "governor", "if", "in",
    "leader", "minister", "mr", "mrs", "ms", "north", "of", "on", "premier", "president",
    "prime", "prof", "professor", "rep", "representative", "said", "secretary", "sen",
    "senator", "south", "the", "u.s", "vice", "west", "when", "while", "with",
];

#[derive(Debug, Clone)]
struct Variant {
    chars: Vec<char>,
    canonical: usize,
}

/// Reusable matcher compiled from an alias table and a surname lexicon.
#[derive(Debug, Clone)]
pub struct MentionExtractor {
    canonical: Vec<String>,
    variants: Vec<Variant>,
    lexicon: SurnameLexicon,
}

impl MentionExtractor {
    pub fn new(aliases: &AliasTable, lexicon: &SurnameLexicon) -> Self {
        let canonical: Vec<String> = aliases.entries.keys().cloned().collect();
        let mut variants: Vec<Variant> = aliases
            .entries
            .values()
            .enumerate()
            .flat_map(|(ci, vs)| {
                vs.iter().map(move |v| Variant {
                    chars: normalize_text(v).chars().collect(),
                    canonical: ci,
                })
            })
            .collect();
        variants.sort_by(|a, b| b.chars.len().cmp(&a.chars.len()).then(a.chars.cmp(&b.chars)));
        variants.dedup_by(|a, b| a.chars == b.chars);
        MentionExtractor {
            canonical,
            variants,
            lexicon: lexicon.clone(),
        }
    }

    /// Number of non-overlapping mentions per person in `text`.
    pub fn mention_counts(&self, text: &str) -> BTreeMap<String, u64> {
        let original: Vec<char> = collapse_whitespace(text).chars().collect();
        let lower: Vec<char> = original
            .iter()
            .map(|c| c.to_lowercase().next().unwrap_or(*c))
            .collect();
        let mut claimed = vec![false; lower.len()];
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();

        for variant in &self.variants {
            let len = variant.chars.len();
            if len == 0 || len > lower.len() {
                continue;
            }
            let mut start = 0;
            while start + len <= lower.len() {
                let end = start + len;
                if lower[start..end] == variant.chars[..]
                    && is_boundary(&lower, start, end)
                    && !claimed[start..end].iter().any(|&c| c)
                {
                    claimed[start..end].iter_mut().for_each(|c| *c = true);
                    *counts
                        .entry(self.canonical[variant.canonical].clone())
                        .or_default() += 1;
                    start = end;
                } else {
                    start += 1;
                }
            }
        }

        if !self.lexicon.is_empty() {
            for name in self.discover(&original, &claimed) {
                *counts.entry(name).or_default() += 1;
            }
        }
        counts
    }

    /// Set of people mentioned in `text`.
    pub fn mentions(&self, text: &str) -> BTreeSet<String> {
        self.mention_counts(text).into_keys().collect()
    }

    /// Unlisted "Given [Middle] Surname" runs outside claimed spans.
    fn discover(&self, chars: &[char], claimed: &[bool]) -> Vec<String> {
        let tokens = tokenize(chars);
        let mut found = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            // maximal run of capitalized, unclaimed tokens separated by single spaces
            let mut j = i;
            while j < tokens.len()
                && tokens[j].capitalized
                && !claimed[tokens[j].start..tokens[j].end].iter().any(|&c| c)
                && (j == i || tokens[j].start == tokens[j - 1].end + 1)
            {
                j += 1;
            }
            if j == i {
                i += 1;
                continue;
            }
            let run = &tokens[i..j];
            let first_real = run
                .iter()
                .position(|t| !TITLE_WORDS.contains(&t.key().as_str()))
                .unwrap_or(run.len());
            let name = &run[first_real..];
            if (2..=3).contains(&name.len())
                && self.lexicon.contains(&name[name.len() - 1].key())
            {
                found.push(name.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" "));
            }
            i = j;
        }
        found
    }

    pub fn canonical_names(&self) -> &[String] {
        &self.canonical
    }
}

/// Set of canonical names mentioned in one article.
pub fn extract_mentions(
    article: &ArticleRecord,
    lexicon: &SurnameLexicon,
    aliases: &AliasTable,
) -> BTreeSet<String> {
    MentionExtractor::new(aliases, lexicon).mentions(&article.text)
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_boundary(chars: &[char], start: usize, end: usize) -> bool {
    let before = start == 0 || !chars[start - 1].is_alphanumeric();
    let after = end == chars.len() || !chars[end].is_alphanumeric();
    before && after
}

#[derive(Debug)]
struct Token {
    start: usize,
    end: usize,
    text: String,
    capitalized: bool,
}

impl Token {
    fn key(&self) -> String {
        self.text.trim_end_matches('.').to_lowercase()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '-' | '.' | '\'' | '\u{2019}')
}

fn tokenize(chars: &[char]) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !is_word_char(chars[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && is_word_char(chars[i]) {
            i += 1;
        }
        let raw: String = chars[start..i].iter().collect();
        let mut text = raw.trim_start_matches(|c: char| !c.is_alphanumeric()).to_string();
        for suffix in ["'s", "\u{2019}s"] {
            if let Some(stripped) = text.strip_suffix(suffix) {
                text = stripped.to_string();
            }
        }
        // keep the dot of an initial ("R."), drop sentence punctuation otherwise
        let is_initial = text.len() == 2 && text.ends_with('.');
        if !is_initial {
            text = text
                .trim_end_matches(|c: char| !c.is_alphanumeric())
                .to_string();
        }
        if text.is_empty() {
            continue;
        }
        let lead = raw.len() - raw.trim_start_matches(|c: char| !c.is_alphanumeric()).len();
        let tok_start = start + raw[..lead].chars().count();
        let capitalized = text.chars().next().is_some_and(char::is_uppercase);
        tokens.push(Token {
            start: tok_start,
            end: tok_start + text.chars().count(),
            text,
            capitalized,
        });
    }
    tokens
}
