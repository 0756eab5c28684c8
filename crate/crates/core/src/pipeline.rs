//! Corpus loading and the generate and distract stages.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::atomic::{
    derive_seed, gen_table_lookup_questions, gen_table_superlative_questions, ingest_image_questions,
    ingest_text_questions, parse_image_bank, AtomicBank, GenerationConfig, ImageBankRecord, ImageQuestionKind,
    Modality, Vocabulary,
};
use crate::composer::{instantiate_templates, ComposedQuestion, InstantiateConfig, TemplateRegistry};
use crate::context::{filter_table, parse_context, Context, Paragraph, ParagraphRole, TableFilter};
use crate::dataset::{Example, Split};
use crate::distractor::{
    select_image_distractors, select_text_distractors, AssembledContext, AssembledImage, DistractorLedger,
    Partition, RetrievalScorer,
};
use crate::linker::{
    eligible_image_list_column, images_by_column, map_entity_images, parse_blocklist, parse_triples,
    select_image_column, ColumnCellInfo, ImageColumnModel, RcTriple,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {msg}")]
    File { path: String, msg: String },
    #[error("example `{qid}`: {msg}")]
    Example { qid: String, msg: String },
}

fn file_err(path: &Path, msg: impl ToString) -> PipelineError {
    PipelineError::File {
        path: path.display().to_string(),
        msg: msg.to_string(),
    }
}

/// Optional `corpus.json` naming the corpus files. Missing entries fall
/// back to the default file names; without a manifest every `*.ctx.json`
/// in the directory is a context.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    #[serde(default)]
    pub contexts: Vec<CorpusEntry>,
    #[serde(default)]
    pub triples: Option<String>,
    #[serde(default)]
    pub image_bank: Option<String>,
    #[serde(default)]
    pub vocab: Option<String>,
    #[serde(default)]
    pub blocklist: Option<String>,
    #[serde(default)]
    pub pool: Option<String>,
    #[serde(default)]
    pub templates: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub file: String,
    /// Pins every example of this context to a split.
    #[serde(default)]
    pub split: Option<Split>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub contexts: Vec<Context>,
    pub pins: BTreeMap<String, Split>,
    pub triples: Vec<RcTriple>,
    pub image_bank: Vec<ImageBankRecord>,
    pub vocab: Vocabulary,
    pub blocklist: BTreeSet<String>,
    /// Extra distractor paragraphs beyond those of the contexts.
    pub pool: Vec<Paragraph>,
    pub registry: TemplateRegistry,
}

fn read_opt(dir: &Path, name: Option<&str>, default: &str) -> Result<Option<(PathBuf, String)>, PipelineError> {
    let path = dir.join(name.unwrap_or(default));
    if name.is_none() && !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| file_err(&path, e))?;
    Ok(Some((path, text)))
}

pub fn parse_pool(s: &str) -> Result<Vec<Paragraph>, (usize, String)> {
    s.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e: serde_json::Error| (i + 1, e.to_string())))
        .collect()
}

impl Corpus {
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let manifest_path = dir.join("corpus.json");
        let manifest: CorpusManifest = if manifest_path.exists() {
            let text = std::fs::read_to_string(&manifest_path).map_err(|e| file_err(&manifest_path, e))?;
            serde_json::from_str(&text).map_err(|e| file_err(&manifest_path, e))?
        } else {
            CorpusManifest::default()
        };
        let mut entries = manifest.contexts.clone();
        if entries.is_empty() {
            let rd = std::fs::read_dir(dir).map_err(|e| file_err(dir, e))?;
            let mut names: Vec<String> = rd
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.ends_with(".ctx.json"))
                .collect();
            names.sort();
            entries = names.into_iter().map(|file| CorpusEntry { file, split: None }).collect();
        }
        let mut contexts = Vec::new();
        let mut pins = BTreeMap::new();
        let mut ids = BTreeSet::new();
        for entry in &entries {
            let path = dir.join(&entry.file);
            let text = std::fs::read_to_string(&path).map_err(|e| file_err(&path, e))?;
            let ctx = parse_context(&text).map_err(|e| file_err(&path, e))?;
            if !ids.insert(ctx.id.clone()) {
                return Err(file_err(&path, format!("duplicate context id `{}`", ctx.id)));
            }
            if let Some(s) = entry.split {
                pins.insert(ctx.id.clone(), s);
            }
            contexts.push(ctx);
        }
        contexts.sort_by(|a, b| a.id.cmp(&b.id));

        let triples = match read_opt(dir, manifest.triples.as_deref(), "triples.jsonl")? {
            Some((p, t)) => parse_triples(&t).map_err(|e| file_err(&p, e))?,
            None => Vec::new(),
        };
        let image_bank = match read_opt(dir, manifest.image_bank.as_deref(), "image_bank.jsonl")? {
            Some((p, t)) => parse_image_bank(&t).map_err(|e| file_err(&p, e))?,
            None => Vec::new(),
        };
        let vocab = read_opt(dir, manifest.vocab.as_deref(), "vocab.txt")?
            .map(|(_, t)| Vocabulary::parse(&t))
            .unwrap_or_default();
        let blocklist = read_opt(dir, manifest.blocklist.as_deref(), "blocklist.txt")?
            .map(|(_, t)| parse_blocklist(&t))
            .unwrap_or_default();
        let pool = match read_opt(dir, manifest.pool.as_deref(), "pool.jsonl")? {
            Some((p, t)) => parse_pool(&t).map_err(|(line, msg)| file_err(&p, format!("line {line}: {msg}")))?,
            None => Vec::new(),
        };
        let registry = match read_opt(dir, manifest.templates.as_deref(), "templates.json")? {
            Some((p, t)) => TemplateRegistry::from_json(&t).map_err(|e| file_err(&p, e))?,
            None => TemplateRegistry::default(),
        };
        Ok(Corpus {
            contexts,
            pins,
            triples,
            image_bank,
            vocab,
            blocklist,
            pool,
            registry,
        })
    }

    pub fn context(&self, id: &str) -> Option<&Context> {
        self.contexts.iter().find(|c| c.id == id)
    }

    /// Every distinct paragraph usable as a distractor: pool paragraphs,
    /// context paragraphs and triple gold paragraphs, ordered by id.
    pub fn paragraph_pool(&self) -> Vec<Paragraph> {
        let mut by_id: BTreeMap<&str, &Paragraph> = BTreeMap::new();
        let all = self
            .pool
            .iter()
            .chain(self.contexts.iter().flat_map(|c| c.paragraphs.iter()))
            .chain(self.triples.iter().flat_map(|t| t.gold_paragraphs.iter()));
        for p in all {
            by_id.entry(p.id.as_str()).or_insert(p);
        }
        by_id
            .into_values()
            .map(|p| Paragraph {
                role: ParagraphRole::Unassigned,
                ..p.clone()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub filter: TableFilter,
    pub generation: GenerationConfig,
    pub instantiate: InstantiateConfig,
    pub image_column: ImageColumnModel,
}

impl PipelineConfig {
    pub fn with_seed(seed: u64) -> Self {
        let mut c = PipelineConfig {
            seed,
            ..Default::default()
        };
        c.generation.seed = seed;
        c.instantiate.seed = seed;
        c
    }
}

/// Applies the blocklist to entity images and gives untitled in-table
/// images to the entity of the detected image column in their row.
pub fn link_images(ctx: &Context, blocklist: &BTreeSet<String>, model: &ImageColumnModel) -> Context {
    let mut out = ctx.clone();
    let mapped = map_entity_images(&ctx.entities, &ctx.images, blocklist);
    for e in &mut out.entities {
        e.image = mapped.get(&e.title).map(|i| i.id.clone());
    }
    let Ok(Some(col)) = select_image_column(&out.table, &images_by_column(&out), model) else {
        return out;
    };
    for row in &out.table.rows {
        let Some(img) = row.iter().find_map(|c| c.image.as_deref()) else {
            continue;
        };
        if blocklist.contains(img) || out.images.iter().any(|i| i.id == img && i.entity_title.is_some()) {
            continue;
        }
        let Some(title) = row[col].entity() else { continue };
        if let Some(e) = out.entities.iter_mut().find(|e| e.title == title && e.image.is_none()) {
            e.image = Some(img.to_string());
        }
    }
    out
}

/// The atomic questions of one context. Image-list records anchored on an
/// ineligible column are skipped with a note.
pub fn build_bank(ctx: &Context, corpus: &Corpus, cfg: &PipelineConfig, notes: &mut Vec<String>) -> AtomicBank {
    let mut qs = gen_table_lookup_questions(ctx, &cfg.generation);
    qs.extend(gen_table_superlative_questions(ctx, &cfg.generation));
    let (text, _unlinked) = ingest_text_questions(&corpus.triples, ctx);
    qs.extend(text);
    for rec in corpus.image_bank.iter().filter(|r| r.belongs_to(ctx)) {
        match ingest_image_questions(std::slice::from_ref(rec), ctx, &corpus.vocab) {
            Ok(mut v) => {
                let q = v.remove(0);
                if rec.kind == ImageQuestionKind::List {
                    let col = q.anchors.columns[0];
                    if !eligible_image_list_column(&ColumnCellInfo::from_column(ctx, col)) {
                        notes.push(format!("{}: column {col} cannot host image-list questions", rec.id));
                        continue;
                    }
                }
                qs.push(q);
            }
            Err(e) => notes.push(format!("{}: {e}", ctx.id)),
        }
    }
    AtomicBank::new(qs)
}

fn short_hash(s: &str) -> String {
    hex::encode(&Sha256::digest(s.as_bytes())[..6])
}

/// Gold paragraphs of a question: those its text leaves are anchored to.
/// Questions without a text leaf take the context paragraphs about an
/// answer, bridge or mentioned entity, else the paragraph of the table's
/// page, else the first context paragraph.
fn gold_paragraphs(
    q: &ComposedQuestion,
    bank: &AtomicBank,
    ctx: &Context,
    known: &BTreeMap<&str, &Paragraph>,
) -> Vec<Paragraph> {
    let leaves: Vec<_> = q.program.leaves().into_iter().filter_map(|id| bank.get(id)).collect();
    let mut ids: Vec<&str> = Vec::new();
    for l in leaves.iter().filter(|l| l.modality == Modality::Text) {
        for p in &l.anchors.paragraphs {
            if !ids.contains(&p.as_str()) {
                ids.push(p);
            }
        }
    }
    let mut out: Vec<Paragraph> = ids.iter().filter_map(|id| known.get(id)).map(|p| (*p).clone()).collect();
    if out.is_empty() {
        let mut related: BTreeSet<&str> = q.answers.entity_set();
        if let Some(i) = &q.intermediate_answers {
            related.extend(i.entity_set());
        }
        related.extend(leaves.iter().flat_map(|l| l.mentions.iter().map(|m| m.entity.as_str())));
        out = ctx
            .paragraphs
            .iter()
            .filter(|p| related.contains(p.article_title.as_str()))
            .take(2)
            .cloned()
            .collect();
        if out.is_empty() {
            out = ctx
                .paragraphs
                .iter()
                .find(|p| p.article_title == ctx.table.page_title)
                .or(ctx.paragraphs.first())
                .cloned()
                .into_iter()
                .collect();
        }
    }
    out.truncate(2);
    for p in &mut out {
        p.role = ParagraphRole::Gold;
    }
    out
}

fn gold_images(q: &ComposedQuestion, bank: &AtomicBank, ctx: &Context) -> Vec<AssembledImage> {
    let mut ids = BTreeSet::new();
    for l in q.program.leaves().into_iter().filter_map(|id| bank.get(id)) {
        ids.extend(l.anchors.images.iter().map(String::as_str));
    }
    ctx.images
        .iter()
        .filter(|i| ids.contains(i.id.as_str()))
        .map(|i| AssembledImage {
            image: i.clone(),
            role: ParagraphRole::Gold,
        })
        .collect()
}

/// Generates examples (without distractors or splits) from every context
/// that passes the table filter. Returns the examples, ordered by qid, and
/// notes on skipped inputs.
pub fn generate(corpus: &Corpus, cfg: &PipelineConfig) -> (Vec<Example>, Vec<String>) {
    let mut notes = Vec::new();
    let mut known: BTreeMap<&str, &Paragraph> = BTreeMap::new();
    for p in corpus
        .contexts
        .iter()
        .flat_map(|c| c.paragraphs.iter())
        .chain(corpus.triples.iter().flat_map(|t| t.gold_paragraphs.iter()))
    {
        known.entry(p.id.as_str()).or_insert(p);
    }
    let mut out = Vec::new();
    for raw in &corpus.contexts {
        if !filter_table(raw, &cfg.filter) {
            notes.push(format!("{}: table outside the row or image bounds", raw.id));
            continue;
        }
        let ctx = link_images(raw, &corpus.blocklist, &cfg.image_column);
        let bank = build_bank(&ctx, corpus, cfg, &mut notes);
        for q in instantiate_templates(&ctx, &bank, &corpus.registry, &cfg.instantiate) {
            let program_json = serde_json::to_string(&q.program).expect("programs serialize");
            let qid = format!("{}-{}", ctx.id, short_hash(&program_json));
            let paragraphs = gold_paragraphs(&q, &bank, &ctx, &known);
            if paragraphs.is_empty() {
                notes.push(format!("{qid}: no gold paragraph available"));
                continue;
            }
            let atomics = q
                .program
                .leaves()
                .into_iter()
                .filter_map(|id| bank.get(id).cloned())
                .collect();
            out.push(Example {
                qid,
                pl_question: q.pl_text.clone(),
                nl_question: None,
                nl_checker: None,
                question_type: q.program.question_type.clone(),
                answers: q.answers.clone(),
                intermediate_answers: q.intermediate_answers.clone(),
                atomics,
                context: AssembledContext {
                    context_id: ctx.id.clone(),
                    table: ctx.table.clone(),
                    paragraphs,
                    images: gold_images(&q, &bank, &ctx),
                    entities: ctx.entities.clone(),
                },
                split: None,
                multimodal: q.is_multimodal(),
                compositional: !q.program.is_atomic(),
                program: q.program,
            });
        }
    }
    out.sort_by(|a, b| a.qid.cmp(&b.qid));
    out.dedup_by(|a, b| a.qid == b.qid);
    (out, notes)
}

fn partition(e: &Example) -> Partition {
    match e.split {
        Some(Split::Train) | None => Partition::Train,
        Some(_) => Partition::Eval,
    }
}

/// Adds text and image distractors to split examples. Gold paragraphs are
/// claimed for their partition first, then evaluation examples are served
/// before training ones, each in qid order. Examples that cannot be filled
/// are dropped with a note.
pub fn distract(
    examples: Vec<Example>,
    corpus: &Corpus,
    scorer: &dyn RetrievalScorer,
    cfg: &PipelineConfig,
) -> (Vec<Example>, Vec<String>) {
    let pool = corpus.paragraph_pool();
    let mut ledger = DistractorLedger::default();
    for e in &examples {
        for p in e.context.gold_paragraphs() {
            ledger.claim(partition(e), &p.id);
        }
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.sort_by(|&a, &b| {
        (partition(&examples[b]) == Partition::Eval)
            .cmp(&(partition(&examples[a]) == Partition::Eval))
            .then_with(|| examples[a].qid.cmp(&examples[b].qid))
    });
    let mut filled: Vec<Option<Example>> = examples.into_iter().map(Some).collect();
    let mut notes = Vec::new();
    for i in order {
        let mut e = filled[i].take().expect("visited once");
        let gold: Vec<Paragraph> = e.context.gold_paragraphs().cloned().collect();
        match select_text_distractors(
            &e.pl_question,
            &e.answers.values,
            &gold,
            &pool,
            scorer,
            &mut ledger,
            partition(&e),
        ) {
            Ok(ps) => e.context.paragraphs = ps,
            Err(err) => {
                notes.push(format!("{}: {err}", e.qid));
                continue;
            }
        }
        let needs_images = e.atomics.iter().any(|a| a.modality == Modality::Image);
        let mut images: Vec<AssembledImage> = e.context.images.iter().filter(|i| i.role == ParagraphRole::Gold).cloned().collect();
        if needs_images {
            if let Some(ctx) = corpus.context(&e.context.context_id) {
                let ctx = link_images(ctx, &corpus.blocklist, &cfg.image_column);
                let reachable = ctx.reachable_images();
                let gold: BTreeSet<&str> = images.iter().map(|i| i.image.id.as_str()).collect();
                let cands = ctx.images.iter().filter(|i| reachable.contains(i.id.as_str()));
                let picked = select_image_distractors(cands, &gold, derive_seed(cfg.seed, &e.qid));
                images.extend(picked.into_iter().map(|image| AssembledImage {
                    image,
                    role: ParagraphRole::Distractor,
                }));
            }
        }
        e.context.images = images;
        filled[i] = Some(e);
    }
    (filled.into_iter().flatten().collect(), notes)
}
