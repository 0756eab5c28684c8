//! Distractor selection: the final per-example context of exactly ten
//! paragraphs plus gold and distractor images.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::derive_seed;
use crate::context::{ImageRef, Paragraph, ParagraphRole, Table, WikiEntity};
use crate::text::{contains_normalized, words};

pub const CONTEXT_PARAGRAPHS: usize = 10;
pub const MAX_IMAGE_DISTRACTORS: usize = 15;

/// Relevance of a paragraph to a question; higher is more relevant.
pub trait RetrievalScorer {
    fn score(&self, question: &str, paragraph: &str) -> f64;

    fn score_batch(&self, question: &str, paragraphs: &[&str]) -> Vec<f64> {
        paragraphs.iter().map(|p| self.score(question, p)).collect()
    }
}

/// TF-IDF cosine over lowercased tokens. Without a fitted corpus every
/// term weighs 1 and the score is a plain term-frequency cosine.
#[derive(Debug, Clone, Default)]
pub struct LexicalScorer {
    idf: BTreeMap<String, f64>,
    default_idf: f64,
}

impl LexicalScorer {
    pub fn new() -> Self {
        LexicalScorer {
            idf: BTreeMap::new(),
            default_idf: 1.0,
        }
    }

    /// Smoothed idf: ln((1 + N) / (1 + df)) + 1.
    pub fn fit<'a>(docs: impl IntoIterator<Item = &'a str>) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut n = 0usize;
        for d in docs {
            n += 1;
            for w in words(d).into_iter().collect::<BTreeSet<_>>() {
                *df.entry(w).or_default() += 1;
            }
        }
        let idf = df
            .into_iter()
            .map(|(w, c)| (w, ((1 + n) as f64 / (1 + c) as f64).ln() + 1.0))
            .collect();
        LexicalScorer {
            idf,
            default_idf: ((1 + n) as f64).ln() + 1.0,
        }
    }

    fn vector(&self, text: &str) -> BTreeMap<String, f64> {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for w in words(text) {
            *tf.entry(w).or_default() += 1.0;
        }
        for (w, v) in tf.iter_mut() {
            *v *= self.idf.get(w).copied().unwrap_or(self.default_idf);
        }
        tf
    }
}

impl RetrievalScorer for LexicalScorer {
    fn score(&self, question: &str, paragraph: &str) -> f64 {
        let (q, p) = (self.vector(question), self.vector(paragraph));
        let norm = |v: &BTreeMap<String, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
        let (nq, np) = (norm(&q), norm(&p));
        if nq == 0.0 || np == 0.0 {
            return 0.0;
        }
        let dot: f64 = q.iter().filter_map(|(w, x)| p.get(w).map(|y| x * y)).sum();
        (dot / (nq * np)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Eval,
}

impl Partition {
    fn other(self) -> Self {
        match self {
            Partition::Train => Partition::Eval,
            Partition::Eval => Partition::Train,
        }
    }
}

/// Paragraph ids claimed by each partition, as gold or as distractors.
/// A partition never draws distractors from the other's claims.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistractorLedger {
    pub claimed: BTreeMap<Partition, BTreeSet<String>>,
}

impl DistractorLedger {
    pub fn claim(&mut self, partition: Partition, id: &str) {
        self.claimed.entry(partition).or_default().insert(id.to_string());
    }

    pub fn is_claimed_by(&self, partition: Partition, id: &str) -> bool {
        self.claimed.get(&partition).is_some_and(|s| s.contains(id))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DistractError {
    #[error("a context needs 1 or 2 gold paragraphs, got {0}")]
    GoldCount(usize),
    #[error("duplicate gold paragraph `{0}`")]
    DuplicateGold(String),
    #[error("only {eligible} eligible distractor paragraphs, {needed} needed")]
    InsufficientPool { eligible: usize, needed: usize },
}

/// Picks the top-scored eligible pool paragraphs so that gold plus
/// distractors number exactly ten. Returns the ten paragraphs with roles,
/// ordered by id, and claims them in the ledger.
pub fn select_text_distractors(
    question: &str,
    answers: &[String],
    gold: &[Paragraph],
    pool: &[Paragraph],
    scorer: &dyn RetrievalScorer,
    ledger: &mut DistractorLedger,
    partition: Partition,
) -> Result<Vec<Paragraph>, DistractError> {
    if gold.is_empty() || gold.len() > 2 {
        return Err(DistractError::GoldCount(gold.len()));
    }
    let mut gold_ids = BTreeSet::new();
    for g in gold {
        if !gold_ids.insert(g.id.as_str()) {
            return Err(DistractError::DuplicateGold(g.id.clone()));
        }
    }
    let gold_articles: BTreeSet<&str> = gold.iter().map(|g| g.article_title.as_str()).collect();
    let mut seen = BTreeSet::new();
    let eligible: Vec<&Paragraph> = pool
        .iter()
        .filter(|p| seen.insert(p.id.as_str()))
        .filter(|p| !gold_ids.contains(p.id.as_str()))
        .filter(|p| !ledger.is_claimed_by(partition.other(), &p.id))
        .filter(|p| !gold_articles.contains(p.article_title.as_str()))
        .filter(|p| !answers.iter().any(|a| contains_normalized(&p.text, a)))
        .collect();
    let needed = CONTEXT_PARAGRAPHS - gold.len();
    if eligible.len() < needed {
        return Err(DistractError::InsufficientPool {
            eligible: eligible.len(),
            needed,
        });
    }
    let texts: Vec<&str> = eligible.iter().map(|p| p.text.as_str()).collect();
    let scores = scorer.score_batch(question, &texts);
    let mut ranked: Vec<(f64, &Paragraph)> = scores.into_iter().zip(eligible).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));

    let mut out: Vec<Paragraph> = gold
        .iter()
        .map(|g| Paragraph {
            role: ParagraphRole::Gold,
            ..g.clone()
        })
        .collect();
    out.extend(ranked.into_iter().take(needed).map(|(_, p)| Paragraph {
        role: ParagraphRole::Distractor,
        ..p.clone()
    }));
    for p in &out {
        ledger.claim(partition, &p.id);
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Seeded uniform sample of at most fifteen candidate images, excluding
/// the gold ones. Candidates are deduplicated and taken in id order before
/// shuffling so the result depends only on the seed and the candidate set.
pub fn select_image_distractors<'a>(
    candidates: impl IntoIterator<Item = &'a ImageRef>,
    gold: &BTreeSet<&str>,
    seed: u64,
) -> Vec<ImageRef> {
    let mut pool: BTreeMap<&str, &ImageRef> = BTreeMap::new();
    for c in candidates {
        if !gold.contains(c.id.as_str()) {
            pool.insert(c.id.as_str(), c);
        }
    }
    let mut picked: Vec<&ImageRef> = pool.into_values().collect();
    picked.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "images")));
    picked.truncate(MAX_IMAGE_DISTRACTORS);
    picked.sort_by(|a, b| a.id.cmp(&b.id));
    picked.into_iter().cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledImage {
    #[serde(flatten)]
    pub image: ImageRef,
    pub role: ParagraphRole,
}

/// The context shipped with one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledContext {
    pub context_id: String,
    pub table: Table,
    pub paragraphs: Vec<Paragraph>,
    pub images: Vec<AssembledImage>,
    pub entities: Vec<WikiEntity>,
}

impl AssembledContext {
    pub fn gold_paragraphs(&self) -> impl Iterator<Item = &Paragraph> {
        self.paragraphs.iter().filter(|p| p.role == ParagraphRole::Gold)
    }

    pub fn distractor_paragraphs(&self) -> impl Iterator<Item = &Paragraph> {
        self.paragraphs.iter().filter(|p| p.role == ParagraphRole::Distractor)
    }

    pub fn gold_images(&self) -> impl Iterator<Item = &ImageRef> {
        self.images.iter().filter(|i| i.role == ParagraphRole::Gold).map(|i| &i.image)
    }

    pub fn distractor_images(&self) -> impl Iterator<Item = &ImageRef> {
        self.images
            .iter()
            .filter(|i| i.role == ParagraphRole::Distractor)
            .map(|i| &i.image)
    }
}

/// A violated context rule found by [`audit_context`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextViolation {
    pub rule: &'static str,
    pub detail: String,
}

/// Checks the paragraph count, gold count, image cap, gold-article and
/// answer-leak rules on one assembled context.
pub fn audit_context(ctx: &AssembledContext, answers: &[String]) -> Vec<ContextViolation> {
    let mut v = Vec::new();
    let mut bad = |rule: &'static str, detail: String| v.push(ContextViolation { rule, detail });
    if ctx.paragraphs.len() != CONTEXT_PARAGRAPHS {
        bad("paragraph_count", format!("{} paragraphs", ctx.paragraphs.len()));
    }
    let n_gold = ctx.gold_paragraphs().count();
    if !(1..=2).contains(&n_gold) {
        bad("gold_count", format!("{n_gold} gold paragraphs"));
    }
    let n_img = ctx.distractor_images().count();
    if n_img > MAX_IMAGE_DISTRACTORS {
        bad("image_distractors", format!("{n_img} image distractors"));
    }
    let gold_articles: BTreeSet<&str> = ctx.gold_paragraphs().map(|p| p.article_title.as_str()).collect();
    for p in ctx.distractor_paragraphs() {
        if gold_articles.contains(p.article_title.as_str()) {
            bad("gold_article", format!("distractor `{}` is from a gold article", p.id));
        }
        if let Some(a) = answers.iter().find(|a| contains_normalized(&p.text, a)) {
            bad("answer_leak", format!("distractor `{}` contains answer `{a}`", p.id));
        }
    }
    v
}
