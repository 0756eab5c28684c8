//! List-aware EM/F1, bucketed reports, and multi-hop necessity audits.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::Modality;
use crate::column::{parse_full_date, parse_number};
use crate::composer::{execute, Node};
use crate::dataset::Example;
use crate::executor::{select_cells, table_answer, Aggregation, TableQuery};

/// Lowercase, delete punctuation, drop the articles a/an/the, collapse
/// whitespace. Every character that is neither alphanumeric nor whitespace
/// counts as punctuation, so "1,957" and "1957" normalize alike.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    stripped
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Token-multiset F1 between two normalized strings.
pub fn pair_f1(gold: &str, pred: &str) -> f64 {
    let g = normalize_answer(gold);
    let p = normalize_answer(pred);
    let gt: Vec<&str> = g.split_whitespace().collect();
    let pt: Vec<&str> = p.split_whitespace().collect();
    match (gt.is_empty(), pt.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0i64;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pt.len() as f64;
    let recall = common as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Maximum-weight perfect matching on a square matrix (Hungarian method on
/// negated weights). Returns the column assigned to each row.
pub fn max_weight_assignment(w: &[Vec<f64>]) -> Vec<usize> {
    let n = w.len();
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    // 1-based potentials as in the classical formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = -w[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

fn multiset(v: &[String]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for s in v {
        *m.entry(normalize_answer(s)).or_default() += 1;
    }
    m
}

/// EM is normalized multiset equality; F1 is the best one-to-one alignment
/// of pair F1 scores, the shorter list padded with empty strings, divided
/// by the longer length.
pub fn list_em_f1(gold: &[String], pred: &[String]) -> (f64, f64) {
    let em = if multiset(gold) == multiset(pred) { 1.0 } else { 0.0 };
    let k = gold.len().max(pred.len());
    if k == 0 {
        return (em, 1.0);
    }
    let pad = |v: &[String]| -> Vec<String> {
        let mut v = v.to_vec();
        v.resize(k, String::new());
        v
    };
    let (g, p) = (pad(gold), pad(pred));
    let w: Vec<Vec<f64>> = g.iter().map(|a| p.iter().map(|b| pair_f1(a, b)).collect()).collect();
    let assign = max_weight_assignment(&w);
    let total: f64 = assign.iter().enumerate().map(|(i, &j)| w[i][j]).sum();
    (em, total / k as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub qid: String,
    pub answers: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("prediction for unknown qid `{0}`")]
    UnknownQid(String),
    #[error("duplicate prediction for qid `{0}`")]
    DuplicateQid(String),
}

pub fn read_predictions(s: &str) -> Result<Vec<Prediction>, EvalError> {
    s.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Malformed {
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn write_predictions(p: &[Prediction]) -> String {
    p.iter()
        .map(|x| serde_json::to_string(x).expect("predictions serialize") + "\n")
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub qid: String,
    pub em: f64,
    pub f1: f64,
    pub multimodal: bool,
    pub predicted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketScore {
    pub em: f64,
    pub f1: f64,
    pub count: usize,
    pub missing: usize,
}

impl BucketScore {
    fn of<'a>(scores: impl Iterator<Item = &'a ExampleScore>) -> Self {
        let mut b = BucketScore::default();
        for s in scores {
            b.em += s.em;
            b.f1 += s.f1;
            b.count += 1;
            b.missing += usize::from(!s.predicted);
        }
        if b.count > 0 {
            b.em /= b.count as f64;
            b.f1 /= b.count as f64;
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_example: Vec<ExampleScore>,
    pub single_modality: BucketScore,
    pub multi_modality: BucketScore,
    pub all: BucketScore,
}

impl EvalReport {
    pub fn render(&self) -> String {
        let mut out = format!("{:<18}{:>8}{:>8}{:>8}{:>9}\n", "Bucket", "EM", "F1", "Count", "Missing");
        for (name, b) in [
            ("Single-modality", &self.single_modality),
            ("Multi-modality", &self.multi_modality),
            ("All", &self.all),
        ] {
            out.push_str(&format!(
                "{name:<18}{:>8.2}{:>8.2}{:>8}{:>9}\n",
                100.0 * b.em,
                100.0 * b.f1,
                b.count,
                b.missing
            ));
        }
        out
    }
}

/// Scores every example; examples without a prediction score zero.
pub fn evaluate(examples: &[Example], predictions: &[Prediction]) -> Result<EvalReport, EvalError> {
    let qids: BTreeSet<&str> = examples.iter().map(|e| e.qid.as_str()).collect();
    let mut by_qid: BTreeMap<&str, &Prediction> = BTreeMap::new();
    for p in predictions {
        if !qids.contains(p.qid.as_str()) {
            return Err(EvalError::UnknownQid(p.qid.clone()));
        }
        if by_qid.insert(p.qid.as_str(), p).is_some() {
            return Err(EvalError::DuplicateQid(p.qid.clone()));
        }
    }
    let per_example: Vec<ExampleScore> = examples
        .iter()
        .map(|e| {
            let (em, f1, predicted) = match by_qid.get(e.qid.as_str()) {
                Some(p) => {
                    let (em, f1) = list_em_f1(&e.answers.values, &p.answers);
                    (em, f1, true)
                }
                None => (0.0, 0.0, false),
            };
            ExampleScore {
                qid: e.qid.clone(),
                em,
                f1,
                multimodal: e.multimodal,
                predicted,
            }
        })
        .collect();
    Ok(EvalReport {
        single_modality: BucketScore::of(per_example.iter().filter(|s| !s.multimodal)),
        multi_modality: BucketScore::of(per_example.iter().filter(|s| s.multimodal)),
        all: BucketScore::of(per_example.iter()),
        per_example,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    WeakDistractors,
    RedundantEvidence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditFlag {
    pub qid: String,
    pub kind: AuditKind,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Typed {
    Year(i32),
    Date(NaiveDate),
    Number(String),
}

impl Typed {
    fn class(&self) -> &'static str {
        match self {
            Typed::Year(_) => "year",
            Typed::Date(_) => "date",
            Typed::Number(_) => "number",
        }
    }
}

fn classify_answer(s: &str) -> Option<Typed> {
    let t = s.trim();
    if t.len() == 4 && t.bytes().all(|b| b.is_ascii_digit()) {
        return t.parse().ok().map(Typed::Year);
    }
    if let Some(d) = parse_full_date(t) {
        return Some(Typed::Date(d));
    }
    parse_number(t).map(|n| Typed::Number(format!("{n}")))
}

fn date_regex() -> Regex {
    Regex::new(
        r"\b\d{4}-\d{2}-\d{2}\b|\b(?:January|February|March|April|May|June|July|August|September|October|November|December) \d{1,2}, \d{4}\b|\b\d{1,2} (?:January|February|March|April|May|June|July|August|September|October|November|December) \d{4}\b",
    )
    .expect("valid regex")
}

/// Typed values of one class found in a piece of context text.
fn typed_mentions(text: &str, class: &str, out: &mut BTreeSet<Typed>) {
    match class {
        "year" => {
            let re = Regex::new(r"\b\d{4}\b").expect("valid regex");
            out.extend(re.find_iter(text).filter_map(|m| m.as_str().parse().ok()).map(Typed::Year));
        }
        "date" => {
            out.extend(
                date_regex()
                    .find_iter(text)
                    .filter_map(|m| parse_full_date(m.as_str()))
                    .map(Typed::Date),
            );
        }
        _ => {
            let re = Regex::new(r"\d[\d,]*(?:\.\d+)?").expect("valid regex");
            out.extend(
                re.find_iter(text)
                    .filter_map(|m| parse_number(m.as_str()))
                    .map(|n| Typed::Number(format!("{n}"))),
            );
        }
    }
}

/// Flags a typed (year, date or number) answer whose class has a single
/// distinct value across the table cells and paragraphs of the context.
pub fn detect_weak_distractors(ex: &Example) -> Option<AuditFlag> {
    let typed: Vec<Typed> = ex.answers.values.iter().map(|a| classify_answer(a)).collect::<Option<_>>()?;
    let class = typed.first()?.class();
    if typed.iter().any(|t| t.class() != class) {
        return None;
    }
    let mut seen = BTreeSet::new();
    for cell in ex.context.table.rows.iter().flatten() {
        typed_mentions(&cell.text, class, &mut seen);
    }
    for p in &ex.context.paragraphs {
        typed_mentions(&p.text, class, &mut seen);
    }
    (seen.len() == 1).then(|| AuditFlag {
        qid: ex.qid.clone(),
        kind: AuditKind::WeakDistractors,
        evidence: format!("only one {class} appears in the context"),
    })
}

fn same_set(a: &[String], b: &[String]) -> bool {
    let n = |v: &[String]| v.iter().map(|s| normalize_answer(s)).collect::<BTreeSet<_>>();
    n(a) == n(b)
}

/// Flags a two-node question whose answer one constraint alone determines:
/// an Intersect argument that already equals the answer, a Compose whose
/// outer table question answers the same without its bridge condition, or
/// a Compare whose winner holds the extreme value of the whole column.
pub fn detect_redundant_evidence(ex: &Example) -> Option<AuditFlag> {
    let table = &ex.context.table;
    let bank = ex.bank();
    let flag = |evidence: String| AuditFlag {
        qid: ex.qid.clone(),
        kind: AuditKind::RedundantEvidence,
        evidence,
    };
    match &ex.program.node {
        Node::Atomic { .. } => None,
        Node::Intersect { left, right } => {
            for (side, p) in [("left", left), ("right", right)] {
                let a = execute(p, table, &bank).ok()?.answers;
                if same_set(&a.values, &ex.answers.values) {
                    return Some(flag(format!("the {side} constraint alone yields the answer")));
                }
            }
            None
        }
        Node::Compose { outer, .. } => {
            let Node::Atomic { atomic_id } = &outer.node else {
                return None;
            };
            let q = bank.get(atomic_id)?;
            if q.modality != Modality::Table {
                return None;
            }
            let mut query = TableQuery::from_predicate(q.predicate.as_ref()?, Aggregation::None);
            query.condition.as_ref()?;
            query.condition = None;
            let alone = table_answer(table, &query).ok()?;
            (!alone.is_empty() && same_set(&alone, &ex.answers.values))
                .then(|| flag("the table constraint alone pins the answer".into()))
        }
        Node::Compare { column, op, .. } => {
            let query = TableQuery {
                target: column.position,
                condition: None,
                extremum: Some((column.position, *op)),
                aggregation: Aggregation::None,
            };
            let rows: Vec<usize> = select_cells(table, &query).ok()?.into_iter().map(|(r, _)| r).collect();
            let winner = ex.answers.single_entity()?;
            let [row] = rows[..] else { return None };
            table.rows[row]
                .iter()
                .any(|c| c.links.iter().any(|l| l == winner))
                .then(|| flag(format!("the answer holds the extreme {} of the whole table", column.header)))
        }
    }
}
