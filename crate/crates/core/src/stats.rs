//! Corpus statistics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::composer::{execute, Node, Program};
use crate::context::Table;
use crate::dataset::{Example, Split};
use crate::atomic::AtomicBank;
use crate::text::words;

/// Reference values for the full published dataset, kept for display.
pub mod reference {
    pub const DISTINCT_QUESTIONS: usize = 29_918;
    pub const PCT_LIST_ANSWERS: f64 = 7.4;
    pub const PCT_LIST_INTERMEDIATE: f64 = 18.9;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_questions: usize,
    pub pct_multimodal_train: Option<f64>,
    pub pct_multimodal_dev_test: Option<f64>,
    pub pct_compositional_train: Option<f64>,
    pub pct_compositional_dev_test: Option<f64>,
    pub avg_question_words: f64,
    pub avg_answers_per_question: f64,
    pub pct_list_answers: f64,
    /// Share of intermediate questions answered by more than one value.
    pub pct_list_intermediate: Option<f64>,
    pub avg_answer_words: f64,
    pub distinct_question_words: usize,
    pub distinct_answer_words: usize,
    pub distinct_tables: usize,
}

fn pct(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

fn mean(sum: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

/// Intermediate questions of a program: the inner question of Compose and
/// both arguments of Intersect and Compare.
fn intermediates(p: &Program) -> Vec<&Program> {
    match &p.node {
        Node::Atomic { .. } => Vec::new(),
        Node::Compose { inner, .. } => vec![inner],
        Node::Intersect { left, right } | Node::Compare { left, right, .. } => vec![left, right],
    }
}

fn answer_count(p: &Program, table: &Table, bank: &AtomicBank) -> usize {
    execute(p, table, bank).map(|x| x.answers.len()).unwrap_or(0)
}

/// Questions are counted as distinct reader-facing strings (the paraphrase
/// when present). All other rates are over examples.
pub fn compute_stats(examples: &[Example]) -> CorpusStats {
    let questions: BTreeSet<&str> = examples.iter().map(|e| e.question()).collect();
    let in_split = |dev_test: bool| -> Vec<&Example> {
        examples
            .iter()
            .filter(|e| match e.split {
                Some(Split::Train) => !dev_test,
                Some(_) => dev_test,
                None => false,
            })
            .collect()
    };
    let (train, dev_test) = (in_split(false), in_split(true));
    let share = |set: &[&Example], f: fn(&Example) -> bool| pct(set.iter().filter(|e| f(e)).count(), set.len());

    let mut q_words = BTreeSet::new();
    let mut a_words = BTreeSet::new();
    let (mut q_len, mut n_answers, mut a_len, mut n_list) = (0, 0, 0, 0);
    let (mut n_inter, mut n_inter_list) = (0, 0);
    let mut tables = BTreeSet::new();
    for e in examples {
        let w = words(e.question());
        q_len += w.len();
        q_words.extend(w);
        n_answers += e.answers.len();
        if e.answers.len() > 1 {
            n_list += 1;
        }
        for a in &e.answers.values {
            let w = words(a);
            a_len += w.len();
            a_words.extend(w);
        }
        let bank = e.bank();
        for child in intermediates(&e.program) {
            n_inter += 1;
            if answer_count(child, &e.context.table, &bank) > 1 {
                n_inter_list += 1;
            }
        }
        tables.insert(e.context.table.key());
    }
    let n = examples.len();
    CorpusStats {
        n_questions: questions.len(),
        pct_multimodal_train: share(&train, |e| e.multimodal),
        pct_multimodal_dev_test: share(&dev_test, |e| e.multimodal),
        pct_compositional_train: share(&train, |e| e.compositional),
        pct_compositional_dev_test: share(&dev_test, |e| e.compositional),
        avg_question_words: mean(q_len, n),
        avg_answers_per_question: mean(n_answers, n),
        pct_list_answers: pct(n_list, n).unwrap_or(0.0),
        pct_list_intermediate: pct(n_inter_list, n_inter),
        avg_answer_words: mean(a_len, n_answers),
        distinct_question_words: q_words.len(),
        distinct_answer_words: a_words.len(),
        distinct_tables: tables.len(),
    }
}

impl CorpusStats {
    /// Two-column text rendering with the published reference values.
    pub fn render(&self) -> String {
        let p = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.1}%"));
        let rows = [
            ("# Distinct questions", self.n_questions.to_string(), format!("{}", reference::DISTINCT_QUESTIONS)),
            ("Train multimodal questions", p(self.pct_multimodal_train), String::new()),
            ("Dev+test multimodal questions", p(self.pct_multimodal_dev_test), String::new()),
            ("Train compositional questions", p(self.pct_compositional_train), String::new()),
            ("Dev+test compositional questions", p(self.pct_compositional_dev_test), String::new()),
            ("Average question length (words)", format!("{:.2}", self.avg_question_words), String::new()),
            ("Average # of answers per question", format!("{:.2}", self.avg_answers_per_question), String::new()),
            ("List answers", p(Some(self.pct_list_answers)), format!("{:.1}%", reference::PCT_LIST_ANSWERS)),
            (
                "List answers per intermediate question",
                p(self.pct_list_intermediate),
                format!("{:.1}%", reference::PCT_LIST_INTERMEDIATE),
            ),
            ("Average answer length (words)", format!("{:.2}", self.avg_answer_words), String::new()),
            ("# Distinct words in questions", self.distinct_question_words.to_string(), String::new()),
            ("# Distinct words in answers", self.distinct_answer_words.to_string(), String::new()),
            ("# Distinct context tables", self.distinct_tables.to_string(), String::new()),
        ];
        let mut out = format!("{:<42}{:>12}  {}\n", "Measurement", "Value", "Reference");
        for (k, v, r) in rows {
            out.push_str(&format!("{k:<42}{v:>12}  {r}\n"));
        }
        out
    }
}
