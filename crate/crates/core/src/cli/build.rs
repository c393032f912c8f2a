use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;

use super::{absolute, now, prepare_out, split_list, write_manifest, BuildArgs, Command, DEFAULT_DROP};
use crate::corpus::{
    filter_and_dedupe, load_articles, select_key_figures, AliasTable, CountMode, DateWindow,
    MentionExtractor, MentionTable, RecordError, SurnameLexicon,
};
use crate::error::{Error, Result};
use crate::tensor::io::{write_centrality_csv, write_json};
use crate::tensor::{
    assemble_tensor, assign_week, betweenness_centrality, build_occurrence_matrix,
    cooccurrence_slice, degree_centrality, weeks_for_window, TensorBundle,
};

#[derive(Serialize)]
struct BuildSummary<'a> {
    articles_loaded: usize,
    out_of_window: usize,
    malformed: &'a [RecordError],
    articles_kept: usize,
    weeks: usize,
    candidates: usize,
    selected: &'a [String],
    dropped: &'a [String],
    figures: &'a [String],
}

pub fn build_tensor(args: &BuildArgs) -> Result<()> {
    let started = now();
    let mut args = args.clone();
    args.input = absolute(&args.input)?;
    args.aliases = args.aliases.as_deref().map(absolute).transpose()?;
    args.surnames = args.surnames.as_deref().map(absolute).transpose()?;

    let window = DateWindow::new(args.window_start, args.window_end)?;
    let aliases = match &args.aliases {
        Some(p) => AliasTable::load(p)?,
        None => AliasTable::bundled(),
    };
    let lexicon = match &args.surnames {
        Some(p) => SurnameLexicon::load(p)?,
        None => SurnameLexicon::bundled(),
    };
    let mode = if args.count_articles { CountMode::Articles } else { CountMode::Occurrences };

    let loaded = load_articles(&args.input, &window)?;
    for e in &loaded.errors {
        log::warn!("{}:{}: {}", args.input.display(), e.line, e.message);
    }
    let articles = filter_and_dedupe(&loaded.records, &args.keyword)?;
    let weeks = weeks_for_window(&window);
    let extractor = MentionExtractor::new(&aliases, &lexicon);

    let mut table = MentionTable::new(weeks.len());
    let mut by_week: Vec<Vec<(String, BTreeSet<String>)>> = vec![Vec::new(); weeks.len()];
    for a in &articles {
        let week = assign_week(a.date, window.start)?.t - 1;
        let counts = extractor.mention_counts(&a.text);
        table.record(week, &counts, mode);
        by_week[week].push((a.id.clone(), counts.into_keys().collect()));
    }

    let selected = select_key_figures(&table, args.min_mentions, args.min_week_frac)?;
    if selected.is_empty() {
        return Err(Error::NoKeyFigures);
    }
    let layers = by_week
        .iter()
        .map(|arts| cooccurrence_slice(&build_occurrence_matrix(arts, &selected), false))
        .collect();
    let articles_per_week = by_week.iter().map(|w| w.len() as u64).collect();
    let full = assemble_tensor(layers, selected.clone(), weeks)?.with_article_counts(articles_per_week)?;

    let dropped: Vec<String> = match &args.drop {
        Some(list) => split_list(list),
        None => DEFAULT_DROP
            .iter()
            .filter(|n| selected.index_of(n).is_some())
            .map(|n| n.to_string())
            .collect(),
    };
    let tensor = full.drop_figures(&dropped)?;
    if tensor.n() == 0 {
        return Err(Error::NoKeyFigures);
    }
    log::info!(
        "{} articles kept, {} key figures, {} after dropping {:?}",
        articles.len(),
        selected.len(),
        tensor.n(),
        dropped
    );

    prepare_out(&args.out, args.force)?;
    args.out = absolute(&args.out)?;
    let out = args.out.as_path();
    write_centrality_csv(
        &out.join("degree_centrality.csv"),
        tensor.figures(),
        tensor.weeks(),
        &degree_centrality(&tensor),
    )?;
    write_centrality_csv(
        &out.join("betweenness_centrality.csv"),
        tensor.figures(),
        tensor.weeks(),
        &betweenness_centrality(&tensor),
    )?;
    write_mentions(&out.join("mentions.csv"), table.counts(), &selected.names().to_vec())?;
    let summary = BuildSummary {
        articles_loaded: loaded.records.len(),
        out_of_window: loaded.out_of_window,
        malformed: &loaded.errors,
        articles_kept: articles.len(),
        weeks: tensor.t(),
        candidates: table.counts().len(),
        selected: selected.names(),
        dropped: &dropped,
        figures: tensor.figures().names(),
    };
    write_json(&out.join("build.json"), &summary)?;
    TensorBundle::from_counts(tensor)?.write(out)?;
    write_manifest(out, &Command::BuildTensor(args.clone()), started)
}

/// Every candidate name with its total and the number of weeks it appears in.
fn write_mentions(path: &Path, counts: &BTreeMap<String, Vec<u64>>, selected: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| crate::tensor::io::csv_err(path, e))?;
    w.write_record(["name", "mentions", "active_weeks", "selected"])
        .map_err(|e| crate::tensor::io::csv_err(path, e))?;
    for (name, row) in counts {
        let total: u64 = row.iter().sum();
        let active = row.iter().filter(|&&c| c > 0).count();
        let chosen = selected.contains(name);
        w.write_record([name.clone(), total.to_string(), active.to_string(), chosen.to_string()])
            .map_err(|e| crate::tensor::io::csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
