//! Single-modality questions: generated table questions (value lookup and
//! superlatives) and ingested image and reading-comprehension banks.
//!
//! Question text stored here is the bare question body. The open-domain
//! prefix naming the table and page is added when a program is rendered.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::column::{SemanticType, TypedValue};
use crate::context::{Cell, Context, Table};
use crate::linker::{find_mentions, link_text_question, EntityIndex, RcSource, RcTriple};
use crate::text::normalize_loose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Table,
    Text,
    Image,
    ImageList,
}

impl Modality {
    /// The context modality a question of this kind reads. Single images
    /// and image lists are both answered over images.
    pub fn channel(self) -> Modality {
        match self {
            Modality::ImageList => Modality::Image,
            m => m,
        }
    }

    /// Template-registry operator name.
    pub fn operator(self) -> &'static str {
        match self {
            Modality::Table => "TableQ",
            Modality::Text => "TextQ",
            Modality::Image => "ImageQ",
            Modality::ImageList => "ImageListQ",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Table => "table",
            Modality::Text => "text",
            Modality::Image => "image",
            Modality::ImageList => "image_list",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    Entity,
    String,
}

/// One or more answer strings, optionally with the entity each denotes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnswerList {
    pub values: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_titles: Option<Vec<String>>,
}

impl AnswerList {
    pub fn strings(values: Vec<String>) -> Self {
        AnswerList {
            values,
            entity_titles: None,
        }
    }

    pub fn entities(titles: Vec<String>) -> Self {
        AnswerList {
            entity_titles: Some(titles.clone()),
            values: titles,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_entity_list(&self) -> bool {
        self.entity_titles.is_some()
    }

    /// The single entity this list answers, if it is exactly one entity.
    pub fn single_entity(&self) -> Option<&str> {
        match self.entity_titles.as_deref() {
            Some([one]) => Some(one),
            _ => None,
        }
    }

    pub fn entity_set(&self) -> BTreeSet<&str> {
        self.entity_titles
            .iter()
            .flatten()
            .map(String::as_str)
            .collect()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.values.is_empty() {
            return Err("answer list is empty".into());
        }
        if let Some(t) = &self.entity_titles {
            if t.len() != self.values.len() {
                return Err("entity_titles length differs from values".into());
            }
        }
        Ok(())
    }
}

/// References from a question into its context.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Anchors {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paragraphs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<String>,
}

/// An entity named in a question body, with its byte span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub entity: String,
    pub span: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompareOp {
    Min,
    Max,
}

impl CompareOp {
    pub fn flip(self) -> Self {
        match self {
            CompareOp::Min => CompareOp::Max,
            CompareOp::Max => CompareOp::Min,
        }
    }
}

/// A row filter `column = value`. A cell matches when its normalized text
/// equals the normalized value or it links an entity with that title.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub column: usize,
    pub value: String,
}

impl Condition {
    pub fn matches(&self, cell: &Cell) -> bool {
        let v = normalize_loose(&self.value);
        normalize_loose(&cell.text) == v || cell.links.iter().any(|l| normalize_loose(l) == v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extremum {
    pub column: usize,
    pub op: CompareOp,
}

/// The executable meaning of a generated table question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TablePredicate {
    pub target: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extremum: Option<Extremum>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicQuestion {
    pub id: String,
    pub modality: Modality,
    /// Question body without the open-domain prefix.
    pub pl_text: String,
    pub answers: AnswerList,
    pub answer_kind: AnswerKind,
    pub anchors: Anchors,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mentions: Vec<Mention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<TablePredicate>,
}

impl AtomicQuestion {
    /// The single entity mention, when there is exactly one.
    pub fn sole_mention(&self) -> Option<&Mention> {
        match self.mentions.as_slice() {
            [m] => Some(m),
            _ => None,
        }
    }
}

/// Superlative wording for a comparable column. Date columns and numeric
/// columns made only of bare years read chronologically.
pub fn superlative_phrase(table: &Table, col: usize, op: CompareOp) -> &'static str {
    let chrono = match table.columns[col].semantic_type {
        SemanticType::Date => true,
        SemanticType::Numeric => {
            let texts = table.column_texts(col);
            texts.iter().any(|t| !t.trim().is_empty())
                && texts.iter().all(|t| {
                    let t = t.trim();
                    t.is_empty() || (t.len() == 4 && t.bytes().all(|b| b.is_ascii_digit()))
                })
        }
        _ => false,
    };
    match (chrono, op) {
        (true, CompareOp::Max) => "most recent",
        (true, CompareOp::Min) => "earliest",
        (false, CompareOp::Max) => "highest",
        (false, CompareOp::Min) => "lowest",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Upper bound on lookup questions per table.
    pub max_lookup_per_table: usize,
    /// Upper bound on superlative questions per table.
    pub max_superlative_per_table: usize,
    /// Condition values occurring in more than this fraction of rows are
    /// skipped.
    pub max_condition_fraction: f64,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            max_lookup_per_table: 50,
            max_superlative_per_table: 50,
            max_condition_fraction: 0.6,
            seed: 0,
        }
    }
}

/// Stable 64-bit seed derived from a base seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn short_hash(s: &str) -> String {
    hex::encode(&Sha256::digest(s.as_bytes())[..6])
}

/// Candidate condition values per column: `(column, first row, surface
/// text, rows matched)`, skipping blanks and near-constant values.
fn condition_values(table: &Table, max_fraction: f64) -> Vec<(usize, usize, Condition, Vec<usize>)> {
    let n = table.n_rows();
    let mut out = Vec::new();
    for z in 0..table.n_cols() {
        let mut seen = BTreeSet::new();
        for (r, row) in table.rows.iter().enumerate() {
            let text = row[z].text.trim();
            if text.is_empty() || !seen.insert(normalize_loose(text)) {
                continue;
            }
            let cond = Condition {
                column: z,
                value: text.to_string(),
            };
            let rows: Vec<usize> = (0..n).filter(|&i| cond.matches(&table.rows[i][z])).collect();
            if rows.len() as f64 > max_fraction * n as f64 {
                continue;
            }
            out.push((z, r, cond, rows));
        }
    }
    out
}

/// Answers selected from `target` at `rows`, skipping blank cells.
fn select(table: &Table, rows: &[usize], target: usize) -> Option<(AnswerList, AnswerKind, Vec<(usize, usize)>)> {
    let cells: Vec<(usize, &Cell)> = rows
        .iter()
        .map(|&r| (r, &table.rows[r][target]))
        .filter(|(_, c)| !c.text.trim().is_empty())
        .collect();
    if cells.is_empty() {
        return None;
    }
    let coords = cells.iter().map(|(r, _)| (*r, target)).collect();
    if cells.iter().all(|(_, c)| c.entity().is_some()) {
        let titles = cells.iter().map(|(_, c)| c.answer_value().to_string()).collect();
        Some((AnswerList::entities(titles), AnswerKind::Entity, coords))
    } else {
        let vals = cells.iter().map(|(_, c)| c.text.clone()).collect();
        Some((AnswerList::strings(vals), AnswerKind::String, coords))
    }
}

/// The mention carried by a condition: the entity all matching condition
/// cells link, located at the value's span in the body.
fn condition_mention(table: &Table, cond: &Condition, rows: &[usize], value_at: usize) -> Vec<Mention> {
    let ents: BTreeSet<Option<&str>> = rows.iter().map(|&r| table.rows[r][cond.column].entity()).collect();
    match ents.into_iter().collect::<Vec<_>>().as_slice() {
        [Some(e)] => vec![Mention {
            entity: e.to_string(),
            span: value_at..value_at + cond.value.len(),
        }],
        _ => Vec::new(),
    }
}

fn sample_capped<T>(mut items: Vec<T>, cap: usize, seed: u64) -> Vec<T> {
    if items.len() > cap {
        let mut idx: Vec<usize> = (0..items.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut keep: Vec<usize> = idx.into_iter().take(cap).collect();
        keep.sort_unstable();
        let mut slots: Vec<Option<T>> = items.drain(..).map(Some).collect();
        items = keep.into_iter().filter_map(|i| slots[i].take()).collect();
    }
    items
}

/// "which cells in [X] have the [Y] in [Z]?" for every condition column Z,
/// value Y, and target column X ≠ Z.
pub fn gen_table_lookup_questions(ctx: &Context, cfg: &GenerationConfig) -> Vec<AtomicQuestion> {
    let table = &ctx.table;
    let mut out = Vec::new();
    for (z, first_row, cond, rows) in condition_values(table, cfg.max_condition_fraction) {
        for x in 0..table.n_cols() {
            if x == z {
                continue;
            }
            let Some((answers, answer_kind, cells)) = select(table, &rows, x) else {
                continue;
            };
            let head = format!("which cells in {} have the ", table.columns[x].header);
            let body = format!("{head}{} in {}?", cond.value, table.columns[z].header);
            let mentions = condition_mention(table, &cond, &rows, head.len());
            out.push(AtomicQuestion {
                id: format!("{}-tl-{z}-{first_row}-{x}", ctx.id),
                modality: Modality::Table,
                pl_text: body,
                answers,
                answer_kind,
                anchors: Anchors {
                    columns: vec![x, z],
                    cells,
                    ..Anchors::default()
                },
                mentions,
                predicate: Some(TablePredicate {
                    target: x,
                    condition: Some(cond.clone()),
                    extremum: None,
                }),
            });
        }
    }
    sample_capped(out, cfg.max_lookup_per_table, derive_seed(cfg.seed, &format!("{}/lookup", ctx.id)))
}

/// Rows attaining the extremum of `col` among `rows` (ties included).
fn extremum_rows(table: &Table, rows: &[usize], col: usize, op: CompareOp) -> Vec<usize> {
    let ty = table.columns[col].semantic_type;
    let vals: Vec<(usize, TypedValue)> = rows
        .iter()
        .filter_map(|&r| TypedValue::parse(&table.rows[r][col].text, ty).map(|v| (r, v)))
        .collect();
    let best = vals.iter().map(|(_, v)| *v).reduce(|a, b| match op {
        CompareOp::Max if b > a => b,
        CompareOp::Min if b < a => b,
        _ => a,
    });
    match best {
        Some(b) => vals.into_iter().filter(|(_, v)| *v == b).map(|(r, _)| r).collect(),
        None => Vec::new(),
    }
}

/// "what was the MOST RECENT [C](s)[ where the [Z] was [Y]]?" over each
/// date or numeric column C, unfiltered and with each condition Z = Y.
pub fn gen_table_superlative_questions(ctx: &Context, cfg: &GenerationConfig) -> Vec<AtomicQuestion> {
    let table = &ctx.table;
    let all_rows: Vec<usize> = (0..table.n_rows()).collect();
    let conditions = condition_values(table, cfg.max_condition_fraction);
    let mut out = Vec::new();
    for col in 0..table.n_cols() {
        if !table.columns[col].semantic_type.is_comparable() {
            continue;
        }
        let header = &table.columns[col].header;
        let filters = std::iter::once(None).chain(
            conditions
                .iter()
                .filter(|(z, ..)| *z != col)
                .map(Some),
        );
        for filter in filters {
            for op in [CompareOp::Max, CompareOp::Min] {
                let phrase = superlative_phrase(table, col, op).to_uppercase();
                let rows = filter.map_or(all_rows.as_slice(), |(.., rows)| rows.as_slice());
                let best = extremum_rows(table, rows, col, op);
                let Some((answers, answer_kind, cells)) = select(table, &best, col) else {
                    continue;
                };
                let opname = match op {
                    CompareOp::Max => "max",
                    CompareOp::Min => "min",
                };
                let (body, mentions, id, condition) = match filter {
                    None => (
                        format!("what was the {phrase} {header}(s)?"),
                        Vec::new(),
                        format!("{}-ts-{col}-{opname}", ctx.id),
                        None,
                    ),
                    Some((z, first_row, cond, rows)) => {
                        let head = format!(
                            "what was the {phrase} {header}(s) where the {} was ",
                            table.columns[*z].header
                        );
                        let body = format!("{head}{}?", cond.value);
                        let mentions = condition_mention(table, cond, rows, head.len());
                        (
                            body,
                            mentions,
                            format!("{}-ts-{col}-{opname}-{z}-{first_row}", ctx.id),
                            Some(cond.clone()),
                        )
                    }
                };
                let mut columns = vec![col];
                if let Some(c) = &condition {
                    columns.push(c.column);
                }
                out.push(AtomicQuestion {
                    id,
                    modality: Modality::Table,
                    pl_text: body,
                    answers,
                    answer_kind,
                    anchors: Anchors {
                        columns,
                        cells,
                        ..Anchors::default()
                    },
                    mentions,
                    predicate: Some(TablePredicate {
                        target: col,
                        condition,
                        extremum: Some(Extremum { column: col, op }),
                    }),
                });
            }
        }
    }
    sample_capped(
        out,
        cfg.max_superlative_per_table,
        derive_seed(cfg.seed, &format!("{}/superlative", ctx.id)),
    )
}

#[derive(Debug, Error, PartialEq)]
pub enum BankError {
    #[error("line {line}: {msg}")]
    Json { line: usize, msg: String },
    #[error("question `{id}`: answer `{answer}` is not an entity of the anchored column")]
    AnswerNotInColumn { id: String, answer: String },
    #[error("question `{id}`: answer `{token}` is not in the answer vocabulary")]
    UnknownToken { id: String, token: String },
    #[error("question `{id}`: unknown image `{image}`")]
    DanglingImage { id: String, image: String },
    #[error("question `{id}`: {msg}")]
    Invalid { id: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageQuestionKind {
    Single,
    List,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnAnchor {
    Position(usize),
    Header(String),
}

/// One line of an image question bank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageBankRecord {
    pub id: String,
    pub kind: ImageQuestionKind,
    pub question: String,
    pub answers: Vec<String>,
    #[serde(default)]
    pub image_ids: Vec<String>,
    #[serde(default)]
    pub column_anchor: Option<ColumnAnchor>,
    #[serde(default)]
    pub entity_focus: Option<String>,
    /// Owning context id. When absent, a record belongs to any context that
    /// holds all of its images.
    #[serde(default)]
    pub context: Option<String>,
}

pub fn parse_image_bank(s: &str) -> Result<Vec<ImageBankRecord>, BankError> {
    s.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| BankError::Json {
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Newline-delimited single-image answer vocabulary, compared normalized.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary(BTreeSet<String>);

impl Vocabulary {
    pub fn parse(s: &str) -> Self {
        Vocabulary(
            s.lines()
                .map(normalize_loose)
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(&normalize_loose(token))
    }
}

impl ImageBankRecord {
    pub fn belongs_to(&self, ctx: &Context) -> bool {
        match &self.context {
            Some(c) => c == &ctx.id,
            None => !self.image_ids.is_empty() && self.image_ids.iter().all(|i| ctx.image(i).is_some()),
        }
    }
}

/// Validates this context's image-bank records into atomic questions.
pub fn ingest_image_questions(
    records: &[ImageBankRecord],
    ctx: &Context,
    vocab: &Vocabulary,
) -> Result<Vec<AtomicQuestion>, BankError> {
    let mut out = Vec::new();
    for rec in records.iter().filter(|r| r.belongs_to(ctx)) {
        for image in &rec.image_ids {
            if ctx.image(image).is_none() {
                return Err(BankError::DanglingImage {
                    id: rec.id.clone(),
                    image: image.clone(),
                });
            }
        }
        let q = match rec.kind {
            ImageQuestionKind::Single => ingest_single(rec, ctx, vocab)?,
            ImageQuestionKind::List => ingest_list(rec, ctx)?,
        };
        out.push(q);
    }
    Ok(out)
}

fn ingest_single(rec: &ImageBankRecord, ctx: &Context, vocab: &Vocabulary) -> Result<AtomicQuestion, BankError> {
    let invalid = |msg: String| BankError::Invalid {
        id: rec.id.clone(),
        msg,
    };
    let [image] = rec.image_ids.as_slice() else {
        return Err(invalid(format!("single-image question needs exactly one image, found {}", rec.image_ids.len())));
    };
    let [answer] = rec.answers.as_slice() else {
        return Err(invalid(format!("single-image question needs exactly one answer, found {}", rec.answers.len())));
    };
    if !vocab.contains(answer) {
        return Err(BankError::UnknownToken {
            id: rec.id.clone(),
            token: answer.clone(),
        });
    }
    let focus = rec
        .entity_focus
        .clone()
        .or_else(|| ctx.image(image).and_then(|i| i.entity_title.clone()));
    let mut mentions = Vec::new();
    if let Some(f) = &focus {
        if ctx.entity(f).is_none() {
            return Err(invalid(format!("entity focus `{f}` is not in the context")));
        }
        let index = EntityIndex::from_entities([f.as_str()]);
        mentions = find_mentions(&rec.question, &[f.as_str()], &index)
            .into_iter()
            .map(|(entity, span)| Mention { entity, span })
            .collect();
    }
    Ok(AtomicQuestion {
        id: rec.id.clone(),
        modality: Modality::Image,
        pl_text: rec.question.clone(),
        answers: AnswerList::strings(vec![answer.clone()]),
        answer_kind: AnswerKind::String,
        anchors: Anchors {
            images: vec![image.clone()],
            ..Anchors::default()
        },
        mentions,
        predicate: None,
    })
}

fn resolve_column(table: &Table, anchor: &ColumnAnchor) -> Option<usize> {
    match anchor {
        ColumnAnchor::Position(p) => (*p < table.n_cols()).then_some(*p),
        ColumnAnchor::Header(h) => table.column_by_header(h).map(|c| c.position),
    }
}

fn ingest_list(rec: &ImageBankRecord, ctx: &Context) -> Result<AtomicQuestion, BankError> {
    let invalid = |msg: String| BankError::Invalid {
        id: rec.id.clone(),
        msg,
    };
    let anchor = rec
        .column_anchor
        .as_ref()
        .ok_or_else(|| invalid("image-list question needs a column_anchor".into()))?;
    let col = resolve_column(&ctx.table, anchor).ok_or_else(|| invalid(format!("unknown column {anchor:?}")))?;
    if rec.answers.is_empty() {
        return Err(invalid("answers must not be empty".into()));
    }
    let column_entities: Vec<&str> = ctx.table.rows.iter().filter_map(|r| r[col].entity()).collect();
    for a in &rec.answers {
        if !column_entities.contains(&a.as_str()) {
            return Err(BankError::AnswerNotInColumn {
                id: rec.id.clone(),
                answer: a.clone(),
            });
        }
    }
    let mut images: Vec<String> = Vec::new();
    for e in &column_entities {
        if let Some(img) = ctx.entity_image(e) {
            if !images.contains(&img.id) {
                images.push(img.id.clone());
            }
        }
    }
    for r in &ctx.table.rows {
        if let Some(i) = &r[col].image {
            if !images.contains(i) {
                images.push(i.clone());
            }
        }
    }
    Ok(AtomicQuestion {
        id: rec.id.clone(),
        modality: Modality::ImageList,
        pl_text: rec.question.clone(),
        answers: AnswerList::entities(rec.answers.clone()),
        answer_kind: AnswerKind::Entity,
        anchors: Anchors {
            columns: vec![col],
            images,
            ..Anchors::default()
        },
        mentions: Vec::new(),
        predicate: None,
    })
}

/// A triple that could not be turned into a question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    pub question: String,
    pub reason: String,
}

/// Wraps triples linked to this context's table as text questions anchored
/// to their gold paragraphs. Unlinkable triples are reported and skipped.
pub fn ingest_text_questions(triples: &[RcTriple], ctx: &Context) -> (Vec<AtomicQuestion>, Vec<SkipReport>) {
    let index = EntityIndex::from_entities(ctx.entities.iter().map(|e| e.title.as_str()));
    let titles: BTreeSet<&str> = ctx.entities.iter().map(|e| e.title.as_str()).collect();
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for t in triples {
        let links = link_text_question(t, &ctx.table, &index);
        if links.is_empty() {
            skipped.push(SkipReport {
                question: t.question.clone(),
                reason: format!("no entity of table `{}` appears in the question", ctx.table.key()),
            });
            continue;
        }
        let mut mentions: Vec<Mention> = Vec::new();
        for l in &links {
            if !mentions.iter().any(|m| m.span == l.match_span) {
                mentions.push(Mention {
                    entity: l.entity_title.clone(),
                    span: l.match_span.clone(),
                });
            }
        }
        let is_entity = t.answers.iter().all(|a| titles.contains(a.as_str()));
        let (answers, answer_kind) = if is_entity {
            (AnswerList::entities(t.answers.clone()), AnswerKind::Entity)
        } else {
            (AnswerList::strings(t.answers.clone()), AnswerKind::String)
        };
        let source = match t.source {
            RcSource::Nq => "nq",
            RcSource::Boolq => "boolq",
            RcSource::Hotpotqa => "hotpotqa",
            RcSource::Other => "other",
        };
        out.push(AtomicQuestion {
            id: format!("{}-tx-{source}-{}", ctx.id, short_hash(&t.question)),
            modality: Modality::Text,
            pl_text: t.question.clone(),
            answers,
            answer_kind,
            anchors: Anchors {
                cells: links.iter().map(|l| l.table_coords).collect(),
                paragraphs: t.gold_paragraphs.iter().map(|p| p.id.clone()).collect(),
                ..Anchors::default()
            },
            mentions,
            predicate: None,
        });
    }
    (out, skipped)
}

/// All atomic questions of one context, keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AtomicBank {
    pub questions: BTreeMap<String, AtomicQuestion>,
}

impl AtomicBank {
    pub fn new(questions: impl IntoIterator<Item = AtomicQuestion>) -> Self {
        AtomicBank {
            questions: questions.into_iter().map(|q| (q.id.clone(), q)).collect(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&AtomicQuestion> {
        self.questions.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AtomicQuestion> {
        self.questions.values()
    }

    pub fn of_modality(&self, m: Modality) -> impl Iterator<Item = &AtomicQuestion> {
        self.iter().filter(move |q| q.modality == m)
    }
}
