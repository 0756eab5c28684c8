#![allow(dead_code)]

use std::path::{Path, PathBuf};

use mmhop_core::atomic::{AtomicQuestion, CompareOp};
use mmhop_core::column::{parse_date, parse_number, SemanticType};
use mmhop_core::composer::Node;
use mmhop_core::dataset::{split_dataset_pinned, write_dataset, Example, SplitRatios};
use mmhop_core::distractor::LexicalScorer;
use mmhop_core::pipeline::{distract, generate, Corpus, PipelineConfig};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn corpus() -> Corpus {
    Corpus::load(&fixtures().join("corpus")).expect("fixture corpus loads")
}

/// Pipeline settings that keep every table question so all templates can
/// be instantiated on the small fixture tables.
pub fn config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::with_seed(seed);
    cfg.generation.max_lookup_per_table = 10_000;
    cfg.generation.max_superlative_per_table = 10_000;
    cfg
}

/// generate, split, distract.
pub fn build(corpus: &Corpus, cfg: &PipelineConfig) -> Vec<Example> {
    let (mut ex, _) = generate(corpus, cfg);
    split_dataset_pinned(&mut ex, SplitRatios::reference(), cfg.seed, &corpus.pins).expect("split");
    let pool = corpus.paragraph_pool();
    let scorer = LexicalScorer::fit(pool.iter().map(|p| p.text.as_str()));
    let (ex, notes) = distract(ex, corpus, &scorer, cfg);
    assert!(notes.is_empty(), "{notes:?}");
    ex
}

pub fn build_jsonl(seed: u64) -> String {
    write_dataset(&build(&corpus(), &config(seed)))
}

fn norm(s: &str) -> String {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Sorted normalized answers, for order-free comparison.
pub fn answer_key(values: &[String]) -> Vec<String> {
    let mut v: Vec<String> = values.iter().map(|s| norm(s)).collect();
    v.sort();
    v
}

fn order_value(text: &str, ty: SemanticType) -> Option<f64> {
    match ty {
        SemanticType::Date => parse_date(text).map(|d| {
            use chrono::Datelike;
            d.num_days_from_ce() as f64
        }),
        SemanticType::Numeric | SemanticType::Index => parse_number(text),
        SemanticType::Text => None,
    }
}

/// Re-runs a generated table question against the raw table, with the
/// condition value optionally replaced.
fn run_table(ex: &Example, q: &AtomicQuestion, value: Option<&str>) -> Result<Vec<String>, String> {
    let t = &ex.context.table;
    let p = q.predicate.as_ref().ok_or("not a table question")?;
    let mut rows: Vec<usize> = (0..t.rows.len()).collect();
    if let Some(c) = &p.condition {
        let v = norm(value.unwrap_or(&c.value));
        rows.retain(|&r| {
            let cell = &t.rows[r][c.column];
            norm(&cell.text) == v || cell.links.iter().any(|l| norm(l) == v)
        });
    }
    if let Some(x) = &p.extremum {
        let ty = t.columns[x.column].semantic_type;
        let vals: Vec<(usize, f64)> = rows
            .iter()
            .filter_map(|&r| order_value(&t.rows[r][x.column].text, ty).map(|v| (r, v)))
            .collect();
        let best = vals.iter().map(|(_, v)| *v).fold(None, |acc: Option<f64>, v| match (acc, x.op) {
            (None, _) => Some(v),
            (Some(a), CompareOp::Max) => Some(a.max(v)),
            (Some(a), CompareOp::Min) => Some(a.min(v)),
        });
        rows = vals.into_iter().filter(|(_, v)| Some(*v) == best).map(|(r, _)| r).collect();
    }
    let cells: Vec<_> = rows
        .iter()
        .map(|&r| &t.rows[r][p.target])
        .filter(|c| !c.text.trim().is_empty())
        .collect();
    Ok(if !cells.is_empty() && cells.iter().all(|c| c.links.len() == 1) {
        cells.iter().map(|c| c.links[0].clone()).collect()
    } else {
        cells.iter().map(|c| c.text.clone()).collect()
    })
}

fn leaf<'a>(ex: &'a Example, id: &str) -> Result<&'a AtomicQuestion, String> {
    ex.atomics.iter().find(|a| a.id == id).ok_or(format!("missing atomic {id}"))
}

fn row_of(ex: &Example, entity: &str) -> Result<usize, String> {
    let rows: Vec<usize> = (0..ex.context.table.rows.len())
        .filter(|&r| ex.context.table.rows[r].iter().any(|c| c.links.iter().any(|l| l == entity)))
        .collect();
    match rows.as_slice() {
        [r] => Ok(*r),
        _ => Err(format!("{entity} is in {} rows", rows.len())),
    }
}

/// Brute-force interpreter written against the raw example data only.
/// Table leaves are recomputed from the table; other leaves use the bank.
pub fn brute_force(ex: &Example, node: &Node) -> Result<Vec<String>, String> {
    match node {
        Node::Atomic { atomic_id } => {
            let q = leaf(ex, atomic_id)?;
            if q.predicate.is_some() {
                run_table(ex, q, None)
            } else {
                Ok(q.answers.values.clone())
            }
        }
        Node::Compose { outer, inner } => {
            let bridge = brute_force(ex, &inner.node)?;
            let [b] = bridge.as_slice() else {
                return Err(format!("bridge has {} answers", bridge.len()));
            };
            let Node::Atomic { atomic_id } = &outer.node else {
                return Err("outer is not atomic".into());
            };
            let q = leaf(ex, atomic_id)?;
            if q.mentions.len() != 1 || q.mentions[0].entity != *b {
                return Err(format!("outer does not mention the bridge {b}"));
            }
            if q.predicate.is_some() {
                run_table(ex, q, Some(b))
            } else {
                Ok(q.answers.values.clone())
            }
        }
        Node::Intersect { left, right } => {
            let l = brute_force(ex, &left.node)?;
            let r: Vec<String> = brute_force(ex, &right.node)?.iter().map(|s| norm(s)).collect();
            let mut out: Vec<String> = Vec::new();
            for a in l {
                if r.contains(&norm(&a)) && !out.contains(&a) {
                    out.push(a);
                }
            }
            Ok(out)
        }
        Node::Compare { left, right, column, op } => {
            let l = brute_force(ex, &left.node)?;
            let r = brute_force(ex, &right.node)?;
            let ([a], [b]) = (l.as_slice(), r.as_slice()) else {
                return Err("compare children must be single".into());
            };
            let ty = ex.context.table.columns[column.position].semantic_type;
            let val = |e: &str| -> Result<f64, String> {
                let row = row_of(ex, e)?;
                order_value(&ex.context.table.rows[row][column.position].text, ty).ok_or(format!("no value for {e}"))
            };
            let (va, vb) = (val(a)?, val(b)?);
            if va == vb {
                return Err("tie".into());
            }
            let left_wins = match op {
                CompareOp::Max => va > vb,
                CompareOp::Min => va < vb,
            };
            Ok(vec![if left_wins { a.clone() } else { b.clone() }])
        }
    }
}
