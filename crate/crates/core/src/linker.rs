//! Linking images and reading-comprehension questions to anchor tables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{Context, ImageRef, ImageSource, Paragraph, Table, WikiEntity};
use crate::text::tokenize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LinkError {
    #[error("table has no columns")]
    NoColumns,
}

/// Weights of the linear image-column model. Features are each in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageColumnModel {
    pub w_left: f64,
    pub w_unique: f64,
    pub w_single_entity: f64,
    pub w_short_text: f64,
    pub w_header: f64,
    pub threshold: f64,
    pub header_keywords: Vec<String>,
}

impl Default for ImageColumnModel {
    fn default() -> Self {
        ImageColumnModel {
            w_left: 0.2,
            w_unique: 0.25,
            w_single_entity: 0.35,
            w_short_text: -0.3,
            w_header: 0.2,
            threshold: 0.5,
            header_keywords: [
                "title", "name", "film", "album", "song", "game", "show", "series", "player",
                "artist", "work", "statue", "building", "team", "club", "character",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }
}

/// Raw feature values for one column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnFeatures {
    pub left: f64,
    pub unique: f64,
    pub single_entity: f64,
    pub short_text: f64,
    pub header: f64,
}

pub fn column_features(table: &Table, col: usize, model: &ImageColumnModel) -> ColumnFeatures {
    let n_cols = table.n_cols();
    let n = table.n_rows().max(1) as f64;
    let left = if n_cols <= 1 {
        1.0
    } else {
        1.0 - col as f64 / (n_cols - 1) as f64
    };
    let texts = table.column_texts(col);
    let distinct: BTreeSet<String> = texts
        .iter()
        .map(|t| t.trim().to_lowercase())
        .filter(|t| !t.is_empty())
        .collect();
    let single = table.rows.iter().filter(|r| r[col].links.len() == 1).count();
    let short = texts.iter().filter(|t| t.trim().chars().count() <= 2).count();
    let header_words: Vec<String> = crate::text::words(&table.columns[col].header);
    let header = model
        .header_keywords
        .iter()
        .any(|k| header_words.iter().any(|w| w == &k.to_lowercase()));
    ColumnFeatures {
        left,
        unique: distinct.len() as f64 / n,
        single_entity: single as f64 / n,
        short_text: short as f64 / n,
        header: if header { 1.0 } else { 0.0 },
    }
}

/// Per-column image-description scores, clamped to [0, 1].
pub fn detect_image_column(table: &Table, model: &ImageColumnModel) -> Result<Vec<f64>, LinkError> {
    if table.n_cols() == 0 {
        return Err(LinkError::NoColumns);
    }
    Ok((0..table.n_cols())
        .map(|c| {
            let f = column_features(table, c, model);
            let s = model.w_left * f.left
                + model.w_unique * f.unique
                + model.w_single_entity * f.single_entity
                + model.w_short_text * f.short_text
                + model.w_header * f.header;
            s.clamp(0.0, 1.0)
        })
        .collect())
}

/// The image-description column: the best-scoring column above threshold
/// among those with at least one reachable image. Ties go to the leftmost.
pub fn select_image_column(
    table: &Table,
    images_by_column: &[usize],
    model: &ImageColumnModel,
) -> Result<Option<usize>, LinkError> {
    let scores = detect_image_column(table, model)?;
    let mut best: Option<(usize, f64)> = None;
    for (c, &s) in scores.iter().enumerate() {
        if s < model.threshold || images_by_column.get(c).copied().unwrap_or(0) == 0 {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    Ok(best.map(|(c, _)| c))
}

/// Images reachable from each column (in-table images plus profile images
/// of linked entities).
pub fn images_by_column(ctx: &Context) -> Vec<usize> {
    (0..ctx.table.n_cols())
        .map(|c| {
            let mut ids = BTreeSet::new();
            for row in &ctx.table.rows {
                let cell = &row[c];
                if let Some(id) = &cell.image {
                    ids.insert(id.clone());
                }
                for l in &cell.links {
                    if let Some(img) = ctx.entity_image(l) {
                        ids.insert(img.id.clone());
                    }
                }
            }
            ids.len()
        })
        .collect()
}

/// Maps entities to their representative image, skipping blocklisted and
/// missing images. An in-table image is given to at most one entity.
pub fn map_entity_images(
    entities: &[WikiEntity],
    images: &[ImageRef],
    blocklist: &BTreeSet<String>,
) -> BTreeMap<String, ImageRef> {
    let by_id: HashMap<&str, &ImageRef> = images.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut used_in_table = BTreeSet::new();
    let mut out = BTreeMap::new();
    for e in entities {
        let Some(id) = e.image.as_deref() else { continue };
        if blocklist.contains(id) {
            continue;
        }
        let Some(img) = by_id.get(id) else { continue };
        if img.source == ImageSource::InTable && !used_in_table.insert(id) {
            continue;
        }
        out.insert(e.title.clone(), (*img).clone());
    }
    out
}

/// Parses a newline-delimited blocklist; blank lines and `#` comments are
/// skipped.
pub fn parse_blocklist(s: &str) -> BTreeSet<String> {
    s.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RcSource {
    Nq,
    Boolq,
    Hotpotqa,
    Other,
}

/// A reading-comprehension question with its 1–2 gold paragraphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcTriple {
    pub question: String,
    pub answers: Vec<String>,
    pub gold_paragraphs: Vec<Paragraph>,
    pub source: RcSource,
}

#[derive(Debug, Error)]
pub enum TripleError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
}

impl RcTriple {
    pub fn validate(&self) -> Result<(), String> {
        if self.answers.is_empty() {
            return Err("answers must not be empty".into());
        }
        if !(1..=2).contains(&self.gold_paragraphs.len()) {
            return Err(format!(
                "expected 1-2 gold paragraphs, found {}",
                self.gold_paragraphs.len()
            ));
        }
        Ok(())
    }
}

/// Reads an RC triples JSON-lines document.
pub fn parse_triples(s: &str) -> Result<Vec<RcTriple>, TripleError> {
    let mut out = Vec::new();
    for (i, line) in s.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: RcTriple = serde_json::from_str(line).map_err(|source| TripleError::Json {
            line: i + 1,
            source,
        })?;
        t.validate()
            .map_err(|msg| TripleError::Invalid { line: i + 1, msg })?;
        out.push(t);
    }
    Ok(out)
}

/// A question span matched to an entity at a table cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkResult {
    pub entity_title: String,
    pub table_coords: (usize, usize),
    /// Byte range of the match in the question.
    pub match_span: Range<usize>,
}

/// Lowercased token sequences per entity title. Titles made only of
/// digits (an album called "4") are left out: they match too much.
#[derive(Debug, Clone, Default)]
pub struct EntityIndex {
    tokens: BTreeMap<String, Vec<String>>,
}

impl EntityIndex {
    pub fn from_entities<'a>(titles: impl IntoIterator<Item = &'a str>) -> Self {
        let tokens = titles
            .into_iter()
            .map(|t| (t.to_string(), crate::text::words(t)))
            .filter(|(_, toks)| !toks.iter().all(|w| w.chars().all(|c| c.is_ascii_digit())))
            .collect();
        EntityIndex { tokens }
    }

    pub fn tokens(&self, title: &str) -> Option<&[String]> {
        self.tokens.get(title).map(Vec::as_slice)
    }
}

/// Entity mentions in `text` restricted to `candidates`: whole-token,
/// case-insensitive, longest match wins where spans overlap. Returned in
/// text order.
pub fn find_mentions(text: &str, candidates: &[&str], index: &EntityIndex) -> Vec<(String, Range<usize>)> {
    let toks = tokenize(text);
    let lower: Vec<String> = toks.iter().map(|t| t.lower()).collect();
    // (token start, token len, title)
    let mut found: Vec<(usize, usize, &str)> = Vec::new();
    for &title in candidates {
        let Some(seq) = index.tokens(title) else { continue };
        if seq.len() > lower.len() {
            continue;
        }
        for start in 0..=lower.len() - seq.len() {
            if lower[start..start + seq.len()] == *seq {
                found.push((start, seq.len(), title));
            }
        }
    }
    found.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)).then(a.2.cmp(b.2)));
    let mut taken = vec![false; lower.len()];
    let mut kept = Vec::new();
    for (start, len, title) in found {
        if taken[start..start + len].iter().any(|&t| t) {
            continue;
        }
        taken[start..start + len].iter_mut().for_each(|t| *t = true);
        let span = toks[start].span.start..toks[start + len - 1].span.end;
        kept.push((title.to_string(), span));
    }
    kept.sort_by_key(|(_, s)| s.start);
    kept
}

/// Links a triple's question to every table cell holding an entity
/// mentioned in it. Empty when the question is unlinkable.
pub fn link_text_question(triple: &RcTriple, table: &Table, index: &EntityIndex) -> Vec<LinkResult> {
    let candidates = table.linked_entities();
    let mut out = Vec::new();
    for (title, span) in find_mentions(&triple.question, &candidates, index) {
        for coords in table.cells_linking(&title) {
            out.push(LinkResult {
                entity_title: title.clone(),
                table_coords: coords,
                match_span: span.clone(),
            });
        }
    }
    out
}

/// One cell of a candidate image-list column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnCellInfo {
    pub entity: Option<String>,
    pub image: Option<String>,
}

impl ColumnCellInfo {
    pub fn from_column(ctx: &Context, col: usize) -> Vec<Self> {
        ctx.table
            .rows
            .iter()
            .map(|row| {
                let entity = row[col].entity().map(String::from);
                let image = row[col].image.clone().or_else(|| {
                    entity
                        .as_deref()
                        .and_then(|e| ctx.entity_image(e))
                        .map(|i| i.id.clone())
                });
                ColumnCellInfo { entity, image }
            })
            .collect()
    }
}

/// A column can anchor image-list questions when it has at least 4 distinct
/// entities, at most 3 cells whose image is shared with another cell, and at
/// most 2 entities without an image.
pub fn eligible_image_list_column(cells: &[ColumnCellInfo]) -> bool {
    let entities: BTreeSet<&str> = cells.iter().filter_map(|c| c.entity.as_deref()).collect();
    let mut image_counts: HashMap<&str, usize> = HashMap::new();
    for c in cells {
        if let Some(i) = &c.image {
            *image_counts.entry(i.as_str()).or_default() += 1;
        }
    }
    let duplicated_cells: usize = image_counts.values().filter(|&&n| n > 1).sum();
    let imageless: BTreeSet<&str> = cells
        .iter()
        .filter(|c| c.image.is_none())
        .filter_map(|c| c.entity.as_deref())
        .collect();
    entities.len() >= 4 && duplicated_cells <= 3 && imageless.len() <= 2
}
