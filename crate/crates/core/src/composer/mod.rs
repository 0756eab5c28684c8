//! The composition language: Compose, Intersect, and Compare over atomic
//! questions, pseudo-language rendering, and answer execution.

mod instantiate;
mod program;
mod registry;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::{superlative_phrase, AnswerList, AtomicBank, AtomicQuestion, CompareOp, Modality};
use crate::column::TypedValue;
use crate::context::Table;
use crate::text::tokenize;

pub use instantiate::{instantiate_templates, InstantiateConfig};
pub use program::{ColumnRef, Node, Program};
pub use registry::{Combine, RegistryError, Shape, TemplateRegistry, TemplateSpec};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ComposeError {
    #[error("unknown atomic question `{0}`")]
    UnknownAtomic(String),
    #[error("the first argument of Compose must be an atomic question")]
    OuterNotAtomic,
    #[error("question `{id}` has {count} entity mentions; Compose needs exactly one")]
    MentionCount { id: String, count: usize },
    #[error("Compose needs a single bridging entity, the inner question returns {0} answers")]
    BridgeNotSingle(usize),
    #[error("inner question answers `{found}` but the outer question mentions `{expected}`")]
    BridgeMismatch { expected: String, found: String },
    #[error("Intersect arguments must each return more than one entity ({side} returns {len})")]
    NotEntityList { side: &'static str, len: usize },
    #[error("Intersect arguments share no entity")]
    EmptyIntersection,
    #[error("Compare arguments must each return exactly one entity ({side} does not)")]
    CompareChildNotSingle { side: &'static str },
    #[error("entity `{entity}` is linked from {rows} table rows; Compare needs exactly one")]
    Unresolvable { entity: String, rows: usize },
    #[error("column {column} holds no comparable value for `{entity}`")]
    UnparsableValue { entity: String, column: usize },
    #[error("column `{0}` is not a date or numeric column")]
    NotComparableColumn(String),
    #[error("compared values are tied")]
    Tie,
    #[error("Compare arguments answer the same entity")]
    SameEntity,
}

/// Final answers plus the hop-1 answers of two-hop programs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Execution {
    pub answers: AnswerList,
    pub intermediate: Option<AnswerList>,
}

fn atomic<'b>(bank: &'b AtomicBank, id: &str) -> Result<&'b AtomicQuestion, ComposeError> {
    bank.get(id).ok_or_else(|| ComposeError::UnknownAtomic(id.to_string()))
}

fn outer_atomic<'b>(outer: &Program, bank: &'b AtomicBank) -> Result<&'b AtomicQuestion, ComposeError> {
    match &outer.node {
        Node::Atomic { atomic_id } => atomic(bank, atomic_id),
        _ => Err(ComposeError::OuterNotAtomic),
    }
}

/// The row an entity answer lives in.
pub fn resolve_row(table: &Table, entity: &str) -> Result<usize, ComposeError> {
    match table.rows_linking(entity).as_slice() {
        [r] => Ok(*r),
        rows => Err(ComposeError::Unresolvable {
            entity: entity.to_string(),
            rows: rows.len(),
        }),
    }
}

/// Picks the Compare winner between two entities by their rows' values.
pub fn compare_entities(
    table: &Table,
    left: &str,
    right: &str,
    column: usize,
    op: CompareOp,
) -> Result<String, ComposeError> {
    let col = &table.columns[column];
    if !col.semantic_type.is_comparable() {
        return Err(ComposeError::NotComparableColumn(col.header.clone()));
    }
    if left == right {
        return Err(ComposeError::SameEntity);
    }
    let value = |e: &str| -> Result<TypedValue, ComposeError> {
        let row = resolve_row(table, e)?;
        TypedValue::parse(&table.rows[row][column].text, col.semantic_type).ok_or_else(|| {
            ComposeError::UnparsableValue {
                entity: e.to_string(),
                column,
            }
        })
    };
    let (a, b) = (value(left)?, value(right)?);
    if a == b {
        return Err(ComposeError::Tie);
    }
    let left_wins = match op {
        CompareOp::Max => a > b,
        CompareOp::Min => a < b,
    };
    Ok(if left_wins { left } else { right }.to_string())
}

/// Whether the first hop of a Compare is its right argument: the first hop
/// reads a non-table modality, preferring the left argument.
fn first_hop_is_right(left: &Program, right: &Program, bank: &AtomicBank) -> Result<bool, ComposeError> {
    let table_only = |p: &Program| modalities_used(p, bank).map(|m| m.iter().all(|x| *x == Modality::Table));
    Ok(table_only(left)? && !table_only(right)?)
}

/// Executes a program using atomic questions' stored answers as leaves.
/// The hop-1 answers are those of Compose's inner question, Intersect's
/// left argument, and Compare's first-hop argument.
pub fn execute(program: &Program, table: &Table, bank: &AtomicBank) -> Result<Execution, ComposeError> {
    match &program.node {
        Node::Atomic { atomic_id } => Ok(Execution {
            answers: atomic(bank, atomic_id)?.answers.clone(),
            intermediate: None,
        }),
        Node::Compose { outer, inner } => {
            let q = outer_atomic(outer, bank)?;
            let mention = q.sole_mention().ok_or_else(|| ComposeError::MentionCount {
                id: q.id.clone(),
                count: q.mentions.len(),
            })?;
            let bridge = execute(inner, table, bank)?.answers;
            if bridge.len() != 1 {
                return Err(ComposeError::BridgeNotSingle(bridge.len()));
            }
            let found = bridge.single_entity().unwrap_or(&bridge.values[0]);
            if found != mention.entity {
                return Err(ComposeError::BridgeMismatch {
                    expected: mention.entity.clone(),
                    found: found.to_string(),
                });
            }
            Ok(Execution {
                answers: execute(outer, table, bank)?.answers,
                intermediate: Some(bridge),
            })
        }
        Node::Intersect { left, right } => {
            let l = execute(left, table, bank)?.answers;
            let r = execute(right, table, bank)?.answers;
            for (side, a) in [("left", &l), ("right", &r)] {
                if !a.is_entity_list() || a.len() <= 1 {
                    return Err(ComposeError::NotEntityList { side, len: a.len() });
                }
            }
            let right_set = r.entity_set();
            let mut seen = BTreeSet::new();
            let common: Vec<String> = l
                .entity_titles
                .iter()
                .flatten()
                .filter(|e| right_set.contains(e.as_str()) && seen.insert(e.as_str()))
                .cloned()
                .collect();
            if common.is_empty() {
                return Err(ComposeError::EmptyIntersection);
            }
            Ok(Execution {
                answers: AnswerList::entities(common),
                intermediate: Some(l),
            })
        }
        Node::Compare {
            left,
            right,
            column,
            op,
        } => {
            let single = |p: &Program, side| -> Result<String, ComposeError> {
                execute(p, table, bank)?
                    .answers
                    .single_entity()
                    .map(String::from)
                    .ok_or(ComposeError::CompareChildNotSingle { side })
            };
            let (l, r) = (single(left, "left")?, single(right, "right")?);
            let winner = compare_entities(table, &l, &r, column.position, *op)?;
            let first = if first_hop_is_right(left, right, bank)? { r } else { l };
            Ok(Execution {
                answers: AnswerList::entities(vec![winner]),
                intermediate: Some(AnswerList::entities(vec![first])),
            })
        }
    }
}

const WH_WORDS: &[&str] = &["who", "whom", "whose", "what", "which", "where", "when", "why", "how"];
const COPULAS: &[&str] = &["is", "was", "are", "were"];
const LEAD_WORDS: &[&str] = &[
    "who", "whom", "whose", "what", "which", "where", "when", "why", "how", "is", "was", "are", "were", "did",
    "does", "do", "can", "could", "has", "have", "had", "name", "in", "on", "at", "for", "from", "of",
];

/// Lowercases the first letter when the text opens with a question word.
fn lower_lead(s: &str) -> String {
    let Some(first) = tokenize(s).into_iter().next() else {
        return s.to_string();
    };
    if first.span.start != 0 || !LEAD_WORDS.contains(&first.lower().as_str()) {
        return s.to_string();
    }
    let mut chars = s.chars();
    let c = chars.next().expect("non-empty");
    c.to_lowercase().chain(chars).collect()
}

fn strip_question_mark(s: &str) -> &str {
    s.trim().trim_end_matches('?').trim_end()
}

/// An inner question as it reads in place of an entity mention: a leading
/// "wh-word + copula" is dropped ("Who was the 44th president" becomes
/// "the 44th president"), otherwise the question is embedded as is.
fn embedded(body: &str) -> String {
    let s = strip_question_mark(body);
    let toks = tokenize(s);
    if toks.len() >= 3
        && WH_WORDS.contains(&toks[0].lower().as_str())
        && COPULAS.contains(&toks[1].lower().as_str())
    {
        return s[toks[2].span.start..].to_string();
    }
    lower_lead(s)
}

/// Text after the first word, without the question mark.
fn drop_first_word(body: &str) -> &str {
    let s = strip_question_mark(body);
    match s.split_once(char::is_whitespace) {
        Some((_, rest)) => rest.trim_start(),
        None => "",
    }
}

fn render_body(program: &Program, table: &Table, bank: &AtomicBank) -> Result<String, ComposeError> {
    match &program.node {
        Node::Atomic { atomic_id } => Ok(atomic(bank, atomic_id)?.pl_text.clone()),
        Node::Compose { outer, inner } => {
            let q = outer_atomic(outer, bank)?;
            let m = q.sole_mention().ok_or_else(|| ComposeError::MentionCount {
                id: q.id.clone(),
                count: q.mentions.len(),
            })?;
            let inner = embedded(&render_body(inner, table, bank)?);
            Ok(format!("{}{}{}", &q.pl_text[..m.span.start], inner, &q.pl_text[m.span.end..]))
        }
        Node::Intersect { left, right } => {
            let l = render_body(left, table, bank)?;
            let r = render_body(right, table, bank)?;
            Ok(format!("{} and {}?", strip_question_mark(&l), drop_first_word(&r)))
        }
        Node::Compare {
            left,
            right,
            column,
            op,
        } => {
            let l = render_body(left, table, bank)?;
            let r = render_body(right, table, bank)?;
            Ok(format!(
                "What has {} {}, {}, or {}?",
                superlative_phrase(table, column.position, *op),
                column.header.to_lowercase(),
                drop_first_word(&l),
                drop_first_word(&r)
            ))
        }
    }
}

/// "In the [table title] of [page title], "
pub fn open_domain_prefix(table: &Table) -> String {
    format!("In the {} of {}, ", table.table_title, table.page_title)
}

/// Renders the pseudo-language question with the open-domain prefix
/// prepended once at the outermost level.
pub fn render_pl(program: &Program, table: &Table, bank: &AtomicBank) -> Result<String, ComposeError> {
    Ok(format!("{}{}", open_domain_prefix(table), lower_lead(&render_body(program, table, bank)?)))
}

/// Context channels read by a program's leaves.
pub fn modalities_used(program: &Program, bank: &AtomicBank) -> Result<BTreeSet<Modality>, ComposeError> {
    program
        .leaves()
        .into_iter()
        .map(|id| atomic(bank, id).map(|q| q.modality.channel()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposedQuestion {
    pub program: Program,
    pub pl_text: String,
    pub answers: AnswerList,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediate_answers: Option<AnswerList>,
    pub modalities_used: BTreeSet<Modality>,
}

impl ComposedQuestion {
    /// Validates, executes, and renders a program.
    pub fn build(program: Program, table: &Table, bank: &AtomicBank) -> Result<Self, ComposeError> {
        let exec = execute(&program, table, bank)?;
        Ok(ComposedQuestion {
            pl_text: render_pl(&program, table, bank)?,
            modalities_used: modalities_used(&program, bank)?,
            answers: exec.answers,
            intermediate_answers: exec.intermediate,
            program,
        })
    }

    pub fn is_multimodal(&self) -> bool {
        self.modalities_used.len() >= 2
    }
}

/// Compose(outer, inner): the outer question's single entity mention is
/// replaced by the inner question, which must answer exactly that entity.
pub fn compose(
    label: &str,
    outer: Program,
    inner: Program,
    table: &Table,
    bank: &AtomicBank,
) -> Result<ComposedQuestion, ComposeError> {
    ComposedQuestion::build(Program::compose(label, outer, inner), table, bank)
}

/// Intersect(left, right) over two entity-list questions.
pub fn intersect(
    label: &str,
    left: Program,
    right: Program,
    table: &Table,
    bank: &AtomicBank,
) -> Result<ComposedQuestion, ComposeError> {
    ComposedQuestion::build(Program::intersect(label, left, right), table, bank)
}

/// Compare(left, right) over two single-entity questions on a date or
/// numeric column.
pub fn compare(
    label: &str,
    left: Program,
    right: Program,
    column: usize,
    op: CompareOp,
    table: &Table,
    bank: &AtomicBank,
) -> Result<ComposedQuestion, ComposeError> {
    let column = ColumnRef {
        position: column,
        header: table.columns[column].header.clone(),
    };
    ComposedQuestion::build(Program::compare(label, left, right, column, op), table, bank)
}
