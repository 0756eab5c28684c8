//! Question execution: a deterministic table answerer, gold-backed oracle
//! answerers, and the AutoRouting and ImplicitDecomp strategies.
//!
//! A hop request is assembled in a fixed order (question, question type,
//! hop number, hop-1 answers, modality context) so external answerers are
//! interchangeable. External answerers return one confidence per answer;
//! a neural reader should pick the span with the lowest no-answer score and
//! answer "yes" when p(yes) > p(no).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::{AtomicQuestion, CompareOp, Condition, Modality, TablePredicate};
use crate::column::{parse_number, TypedValue};
use crate::composer::{Combine, Node, Program, TemplateRegistry};
use crate::context::{Cell, Table};
use crate::dataset::Example;
use crate::text::{contains_normalized, normalize_loose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Aggregation {
    Sum,
    Mean,
    Count,
    Yes,
    No,
    None,
}

/// Cell selection plus aggregation over one table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableQuery {
    pub target: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<(usize, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extremum: Option<(usize, CompareOp)>,
    pub aggregation: Aggregation,
}

impl TableQuery {
    pub fn from_predicate(p: &TablePredicate, aggregation: Aggregation) -> Self {
        TableQuery {
            target: p.target,
            condition: p.condition.as_ref().map(|Condition { column, value }| (*column, value.clone())),
            extremum: p.extremum.map(|e| (e.column, e.op)),
            aggregation,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TableError {
    #[error("unknown column {0}")]
    UnknownColumn(usize),
    #[error("cannot aggregate non-numeric cell `{0}`")]
    NonNumeric(String),
}

fn cell_matches(cell: &Cell, value: &str) -> bool {
    let v = normalize_loose(value);
    !v.is_empty() && (normalize_loose(&cell.text) == v || cell.links.iter().any(|l| normalize_loose(l) == v))
}

/// Coordinates of the selected cells: rows passing the condition, narrowed
/// to those attaining the extremum, read in the target column; blank target
/// cells are not selected.
pub fn select_cells(table: &Table, q: &TableQuery) -> Result<Vec<(usize, usize)>, TableError> {
    let ncols = table.n_cols();
    for c in [Some(q.target), q.condition.as_ref().map(|c| c.0), q.extremum.map(|e| e.0)]
        .into_iter()
        .flatten()
    {
        if c >= ncols {
            return Err(TableError::UnknownColumn(c));
        }
    }
    let mut rows: Vec<usize> = (0..table.n_rows())
        .filter(|&r| match &q.condition {
            Some((c, v)) => cell_matches(&table.rows[r][*c], v),
            None => true,
        })
        .collect();
    if let Some((col, op)) = q.extremum {
        let ty = table.columns[col].semantic_type;
        let parsed: Vec<(usize, TypedValue)> = rows
            .iter()
            .filter_map(|&r| TypedValue::parse(&table.rows[r][col].text, ty).map(|v| (r, v)))
            .collect();
        let mut best: Option<TypedValue> = None;
        for (_, v) in &parsed {
            let better = match (best, op) {
                (None, _) => true,
                (Some(b), CompareOp::Max) => *v > b,
                (Some(b), CompareOp::Min) => *v < b,
            };
            if better {
                best = Some(*v);
            }
        }
        rows = parsed.into_iter().filter(|(_, v)| Some(*v) == best).map(|(r, _)| r).collect();
    }
    Ok(rows
        .into_iter()
        .filter(|&r| !table.rows[r][q.target].text.trim().is_empty())
        .map(|r| (r, q.target))
        .collect())
}

fn format_number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        let s = format!("{x:.6}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Answers of a table query. Cells that each link one entity answer with
/// the entity title.
pub fn table_answer(table: &Table, q: &TableQuery) -> Result<Vec<String>, TableError> {
    let cells: Vec<&Cell> = select_cells(table, q)?
        .into_iter()
        .map(|(r, c)| &table.rows[r][c])
        .collect();
    let numbers = || -> Result<Vec<f64>, TableError> {
        cells
            .iter()
            .map(|c| parse_number(&c.text).ok_or_else(|| TableError::NonNumeric(c.text.clone())))
            .collect()
    };
    Ok(match q.aggregation {
        Aggregation::Sum => vec![format_number(numbers()?.iter().sum())],
        Aggregation::Mean => {
            let n = numbers()?;
            if n.is_empty() {
                Vec::new()
            } else {
                vec![format_number(n.iter().sum::<f64>() / n.len() as f64)]
            }
        }
        Aggregation::Count => vec![cells.len().to_string()],
        Aggregation::Yes => vec!["yes".into()],
        Aggregation::No => vec!["no".into()],
        Aggregation::None => {
            let all_entities = !cells.is_empty() && cells.iter().all(|c| c.links.len() == 1);
            cells
                .iter()
                .map(|c| if all_entities { c.links[0].clone() } else { c.text.clone() })
                .collect()
        }
    })
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("question has no program; plug in an external type predictor")]
    NoProgram,
    #[error("unknown question type `{0}`")]
    UnknownType(String),
    #[error("no answerer registered for {0} questions")]
    Unregistered(Modality),
    #[error("example `{qid}` lacks gold {field}")]
    MissingGold { qid: String, field: &'static str },
    #[error("strategy `{0}` needs a generative model and is not available")]
    ReservedStrategy(String),
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("{0}")]
    Answerer(String),
}

/// Inputs of one answerer call, in the fixed request order.
#[derive(Debug, Clone, Copy)]
pub struct HopRequest<'a> {
    pub question: &'a str,
    pub question_type: &'a str,
    pub hop: u8,
    pub hop1_answers: Option<&'a [String]>,
    pub example: &'a Example,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Answers {
    pub answers: Vec<String>,
    pub confidences: Vec<f64>,
}

impl Answers {
    pub fn certain(answers: Vec<String>) -> Self {
        let confidences = vec![1.0; answers.len()];
        Answers { answers, confidences }
    }

    pub fn empty() -> Self {
        Answers::default()
    }
}

pub trait ModalityAnswerer {
    fn answer(&self, req: &HopRequest<'_>) -> Result<Answers, ExecError>;
}

pub trait TypePredictor {
    fn predict(&self, question: &str, program: Option<&Program>) -> Result<String, ExecError>;
}

/// Returns the stored question type.
#[derive(Debug, Clone, Copy, Default)]
pub struct GoldTypePredictor;

impl TypePredictor for GoldTypePredictor {
    fn predict(&self, _question: &str, program: Option<&Program>) -> Result<String, ExecError> {
        program.map(|p| p.question_type.clone()).ok_or(ExecError::NoProgram)
    }
}

/// Always predicts one fixed label; used to inject mispredictions.
#[derive(Debug, Clone)]
pub struct FixedTypePredictor(pub String);

impl TypePredictor for FixedTypePredictor {
    fn predict(&self, _question: &str, _program: Option<&Program>) -> Result<String, ExecError> {
        Ok(self.0.clone())
    }
}

fn normalized_set(v: &[String]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for s in v {
        *m.entry(normalize_loose(s)).or_default() += 1;
    }
    m
}

fn plan_of<'r>(registry: &'r TemplateRegistry, label: &str) -> Result<&'r crate::composer::TemplateSpec, ExecError> {
    registry.get(label).ok_or_else(|| ExecError::UnknownType(label.to_string()))
}

/// Gold-backed answerer for one modality. It answers only the hop its
/// modality serves in the example's gold plan, whatever label was
/// predicted: hop 1 yields the stored hop-1 answers (the final answers of
/// one-hop questions), hop 2 yields the final answers only when the given
/// hop-1 answers match the stored ones.
#[derive(Debug, Clone)]
pub struct OracleAnswerer {
    pub modality: Modality,
    registry: TemplateRegistry,
}

impl OracleAnswerer {
    pub fn new(modality: Modality, registry: TemplateRegistry) -> Self {
        OracleAnswerer {
            modality: modality.channel(),
            registry,
        }
    }
}

impl ModalityAnswerer for OracleAnswerer {
    fn answer(&self, req: &HopRequest<'_>) -> Result<Answers, ExecError> {
        let ex = req.example;
        let plan = &plan_of(&self.registry, &ex.question_type)?.hop_plan;
        let serves = |hop: usize| plan.get(hop - 1).is_some_and(|m| m.channel() == self.modality);
        match req.hop {
            1 if serves(1) => {
                if plan.len() == 1 {
                    return Ok(Answers::certain(ex.answers.values.clone()));
                }
                let inter = ex.intermediate_answers.as_ref().ok_or_else(|| ExecError::MissingGold {
                    qid: ex.qid.clone(),
                    field: "intermediate answers",
                })?;
                Ok(Answers::certain(inter.values.clone()))
            }
            2 if serves(2) => {
                let inter = ex.intermediate_answers.as_ref().ok_or_else(|| ExecError::MissingGold {
                    qid: ex.qid.clone(),
                    field: "intermediate answers",
                })?;
                match req.hop1_answers {
                    Some(h1) if normalized_set(h1) == normalized_set(&inter.values) => {
                        Ok(Answers::certain(ex.answers.values.clone()))
                    }
                    _ => Ok(Answers::empty()),
                }
            }
            _ => Ok(Answers::empty()),
        }
    }
}

/// Answers table questions from the question text and the table alone.
///
/// It reads the predicate shape (target, extremum, condition column) of the
/// table leaf being asked, but takes the condition value from the question
/// text, or from the hop-1 answer when the leaf is Compose's outer question.
/// A condition value the text does not mention cannot be grounded and
/// yields no answer.
#[derive(Debug, Clone, Copy, Default)]
pub struct TableAnswerer;

/// Table leaves a hop asks about, each with whether its condition value
/// comes from the hop-1 answers.
fn table_tasks(program: &Program, hop: u8) -> Vec<(&str, bool)> {
    fn atomic_id(p: &Program) -> Option<&str> {
        match &p.node {
            Node::Atomic { atomic_id } => Some(atomic_id.as_str()),
            _ => None,
        }
    }
    match (&program.node, hop) {
        (Node::Atomic { atomic_id }, _) => vec![(atomic_id.as_str(), false)],
        (Node::Compose { inner, .. }, 1) => atomic_id(inner).map(|a| (a, false)).into_iter().collect(),
        (Node::Compose { outer, .. }, _) => atomic_id(outer).map(|a| (a, true)).into_iter().collect(),
        (Node::Intersect { left, .. }, 1) => atomic_id(left).map(|a| (a, false)).into_iter().collect(),
        (Node::Intersect { right, .. }, _) => atomic_id(right).map(|a| (a, false)).into_iter().collect(),
        (Node::Compare { left, right, .. }, _) => [left, right]
            .into_iter()
            .filter_map(|p| atomic_id(p))
            .map(|a| (a, false))
            .collect(),
    }
}

/// The condition value a question text supports for a column: the stored
/// value when the text mentions it, else the only other value of that
/// column the text mentions.
fn ground_value(table: &Table, column: usize, stored: &str, text: &str) -> Option<String> {
    if contains_normalized(text, stored) {
        return Some(stored.to_string());
    }
    let mentioned: BTreeSet<String> = table
        .rows
        .iter()
        .map(|r| r[column].text.trim())
        .filter(|t| !t.is_empty() && contains_normalized(text, t))
        .map(normalize_loose)
        .collect();
    match mentioned.len() {
        1 => mentioned.into_iter().next(),
        _ => None,
    }
}

impl TableAnswerer {
    fn answer_leaf(&self, q: &AtomicQuestion, table: &Table, text: &str, hop1: Option<&[String]>, from_hop1: bool) -> Vec<String> {
        if q.modality != Modality::Table {
            return Vec::new();
        }
        let Some(pred) = &q.predicate else {
            return Vec::new();
        };
        let mut query = TableQuery::from_predicate(pred, Aggregation::None);
        if let Some((col, stored)) = &query.condition {
            let value = if from_hop1 {
                match hop1 {
                    Some([one]) => Some(one.clone()),
                    _ => None,
                }
            } else {
                ground_value(table, *col, stored, text)
            };
            match value {
                Some(v) => query.condition = Some((*col, v)),
                None => return Vec::new(),
            }
        }
        table_answer(table, &query).unwrap_or_default()
    }
}

impl ModalityAnswerer for TableAnswerer {
    fn answer(&self, req: &HopRequest<'_>) -> Result<Answers, ExecError> {
        let ex = req.example;
        let bank = ex.bank();
        let mut out: Vec<String> = Vec::new();
        for (id, from_hop1) in table_tasks(&ex.program, req.hop) {
            let Some(q) = bank.get(id) else { continue };
            for a in self.answer_leaf(q, &ex.context.table, req.question, req.hop1_answers, from_hop1) {
                if !out.contains(&a) {
                    out.push(a);
                }
            }
        }
        Ok(Answers::certain(out))
    }
}

/// Answerers keyed by the modality they read (image lists share the image
/// answerer).
#[derive(Default)]
pub struct AnswererSet {
    map: BTreeMap<Modality, Box<dyn ModalityAnswerer + Send + Sync>>,
}

impl AnswererSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, modality: Modality, answerer: impl ModalityAnswerer + Send + Sync + 'static) -> Self {
        self.map.insert(modality.channel(), Box::new(answerer));
        self
    }

    /// Oracle answerers for every modality.
    pub fn oracle(registry: &TemplateRegistry) -> Self {
        [Modality::Table, Modality::Text, Modality::Image]
            .into_iter()
            .fold(Self::new(), |s, m| s.with(m, OracleAnswerer::new(m, registry.clone())))
    }

    /// The deterministic table answerer plus oracle text and image answerers.
    pub fn table_deterministic(registry: &TemplateRegistry) -> Self {
        Self::oracle(registry).with(Modality::Table, TableAnswerer)
    }

    pub fn get(&self, m: Modality) -> Result<&(dyn ModalityAnswerer + Send + Sync), ExecError> {
        self.map.get(&m.channel()).map(|b| b.as_ref()).ok_or(ExecError::Unregistered(m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    AutoRouting,
    ImplicitDecomp,
}

impl Strategy {
    pub fn parse(s: &str) -> Result<Self, ExecError> {
        match s.to_ascii_lowercase().as_str() {
            "autorouting" => Ok(Strategy::AutoRouting),
            "implicitdecomp" => Ok(Strategy::ImplicitDecomp),
            "question-only" | "questiononly" | "context-only" | "contextonly" => {
                Err(ExecError::ReservedStrategy(s.to_string()))
            }
            _ => Err(ExecError::UnknownStrategy(s.to_string())),
        }
    }
}

pub struct Executor<'a> {
    pub registry: &'a TemplateRegistry,
    pub answerers: &'a AnswererSet,
    pub predictor: &'a dyn TypePredictor,
}

fn request<'a>(ex: &'a Example, question: &'a str, label: &'a str, hop: u8, hop1: Option<&'a [String]>) -> HopRequest<'a> {
    HopRequest {
        question,
        question_type: label,
        hop,
        hop1_answers: hop1,
        example: ex,
    }
}

impl Executor<'_> {
    pub fn run(&self, strategy: Strategy, ex: &Example, question: &str) -> Result<Vec<String>, ExecError> {
        match strategy {
            Strategy::AutoRouting => self.auto_route(ex, question),
            Strategy::ImplicitDecomp => self.implicit_decomp(ex, question),
        }
    }

    /// One call to the final modality's answerer.
    pub fn auto_route(&self, ex: &Example, question: &str) -> Result<Vec<String>, ExecError> {
        let label = self.predictor.predict(question, Some(&ex.program))?;
        let spec = plan_of(self.registry, &label)?;
        let a = self.answerers.get(spec.final_modality)?;
        Ok(a.answer(&request(ex, question, &label, 1, None))?.answers)
    }

    /// Runs the hop plan, feeding hop-1 answers into hop 2, then applies
    /// the plan's combine step.
    pub fn implicit_decomp(&self, ex: &Example, question: &str) -> Result<Vec<String>, ExecError> {
        let label = self.predictor.predict(question, Some(&ex.program))?;
        let spec = plan_of(self.registry, &label)?;
        let first = self.answerers.get(spec.hop_plan[0])?;
        let h1 = first.answer(&request(ex, question, &label, 1, None))?.answers;
        let Some(&second_m) = spec.hop_plan.get(1) else {
            return Ok(h1);
        };
        if h1.is_empty() {
            return Ok(Vec::new());
        }
        let h2 = self
            .answerers
            .get(second_m)?
            .answer(&request(ex, question, &label, 2, Some(&h1)))?
            .answers;
        Ok(match spec.combine {
            Combine::None => h2,
            Combine::Intersect => {
                let right: BTreeSet<String> = h2.iter().map(|s| normalize_loose(s)).collect();
                h1.into_iter().filter(|a| right.contains(&normalize_loose(a))).collect()
            }
            Combine::Compare => {
                let Node::Compare { column, op, .. } = &ex.program.node else {
                    return Err(ExecError::Answerer(format!("`{label}` plans a comparison but the program is not one")));
                };
                let mut cands: Vec<String> = Vec::new();
                for a in h1.into_iter().chain(h2) {
                    if !cands.contains(&a) {
                        cands.push(a);
                    }
                }
                compare_candidates(&ex.context.table, &cands, column.position, *op)
            }
        })
    }
}

/// The candidate whose single table row holds the extreme value of
/// `column`. Candidates without exactly one row or a parsable value are
/// ignored; a tie for the extremum yields no answer.
pub fn compare_candidates(table: &Table, cands: &[String], column: usize, op: CompareOp) -> Vec<String> {
    let Some(col) = table.columns.get(column) else {
        return Vec::new();
    };
    let mut scored: Vec<(&String, TypedValue)> = Vec::new();
    for c in cands {
        let rows: Vec<usize> = (0..table.n_rows())
            .filter(|&r| table.rows[r].iter().any(|cell| cell.links.iter().any(|l| l == c)))
            .collect();
        if let [r] = rows[..] {
            if let Some(v) = TypedValue::parse(&table.rows[r][column].text, col.semantic_type) {
                scored.push((c, v));
            }
        }
    }
    let best = scored.iter().map(|(_, v)| *v).reduce(|a, b| match op {
        CompareOp::Max if b > a => b,
        CompareOp::Min if b < a => b,
        _ => a,
    });
    let winners: Vec<String> = scored
        .into_iter()
        .filter(|(_, v)| Some(*v) == best)
        .map(|(c, _)| c.clone())
        .collect();
    if winners.len() == 1 {
        winners
    } else {
        Vec::new()
    }
}
