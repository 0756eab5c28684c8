mod external;

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand};
use mmhop_core::atomic::Modality;
use mmhop_core::composer::TemplateRegistry;
use mmhop_core::dataset::{
    config_hash, manifest, multimodal_boost, read_dataset_file, read_split_dir, split_dataset_pinned, write_dataset_file,
    write_split_dir, Example, SplitRatios,
};
use mmhop_core::distractor::{audit_context, LexicalScorer, RetrievalScorer};
use mmhop_core::eval::{detect_redundant_evidence, detect_weak_distractors, evaluate, read_predictions, write_predictions, Prediction};
use mmhop_core::executor::{AnswererSet, Executor, GoldTypePredictor, Strategy};
use mmhop_core::pipeline::{distract, generate, Corpus, PipelineConfig};
use mmhop_core::stats::compute_stats;

use crate::external::{ExternalAnswerer, ExternalScorer};

#[derive(Parser)]
#[command(name = "mmhop", version, about = "Generate and evaluate cross-modal multi-hop questions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Gen {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lookup questions kept per table.
    #[arg(long)]
    max_lookup: Option<usize>,
    /// Superlative questions kept per table.
    #[arg(long)]
    max_superlative: Option<usize>,
}

impl Gen {
    fn config(&self) -> PipelineConfig {
        let mut c = PipelineConfig::with_seed(self.seed);
        if let Some(n) = self.max_lookup {
            c.generation.max_lookup_per_table = n;
        }
        if let Some(n) = self.max_superlative {
            c.generation.max_superlative_per_table = n;
        }
        c
    }
}

#[derive(Subcommand)]
enum Command {
    /// Instantiate every template over a corpus directory.
    Generate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        gen: Gen,
    },
    /// Tag examples train/dev/test keeping each context in one split.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// "reference" or three fractions, e.g. 0.8,0.1,0.1.
        #[arg(long, default_value = "reference")]
        ratios: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corpus whose corpus.json pins contexts to splits.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Drop single-modality dev/test examples until this share is multimodal.
        #[arg(long)]
        multimodal_boost: Option<f64>,
    },
    /// Assemble contexts and write the split directory.
    Distract {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// "lexical" or "external:<url>".
        #[arg(long, default_value = "lexical")]
        scorer: String,
        #[arg(long, default_value_t = 10)]
        timeout_secs: u64,
        #[command(flatten)]
        gen: Gen,
    },
    /// Corpus statistics.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Answer every question with a strategy and write predictions.
    Exec {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "implicitdecomp")]
        strategy: String,
        /// "oracle", "table-deterministic" or "external:<url>".
        #[arg(long, default_value = "oracle")]
        answerers: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
    },
    /// Score predictions.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Context rule violations, weak distractors and redundant evidence.
    Audit {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the built-in template registry as JSON.
    Templates {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the annotation service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

/// A `.jsonl` file or a split directory.
fn load(path: &Path) -> Result<Vec<Example>> {
    Ok(if path.is_dir() {
        read_split_dir(path)?.1
    } else {
        read_dataset_file(path)?
    })
}

fn write(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| p.display().to_string()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn registry(path: Option<&Path>) -> Result<TemplateRegistry> {
    Ok(match path {
        Some(p) => TemplateRegistry::from_json(&std::fs::read_to_string(p).with_context(|| p.display().to_string())?)?,
        None => TemplateRegistry::default(),
    })
}

fn answerers(spec: &str, reg: &TemplateRegistry, timeout: Duration) -> Result<AnswererSet> {
    Ok(match spec {
        "oracle" => AnswererSet::oracle(reg),
        "table-deterministic" => AnswererSet::table_deterministic(reg),
        s => match s.strip_prefix("external:") {
            Some(url) => [Modality::Table, Modality::Text, Modality::Image]
                .into_iter()
                .fold(AnswererSet::new(), |set, m| set.with(m, ExternalAnswerer::new(url, m, timeout))),
            None => bail!("unknown answerers `{s}`; use oracle, table-deterministic or external:<url>"),
        },
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { corpus, out, gen } => {
            let corpus = Corpus::load(&corpus)?;
            let (ex, notes) = generate(&corpus, &gen.config());
            for n in &notes {
                eprintln!("note: {n}");
            }
            write_dataset_file(&out, &ex)?;
            eprintln!("{} examples", ex.len());
        }
        Command::Split {
            dataset,
            out,
            ratios,
            seed,
            corpus,
            multimodal_boost: boost,
        } => {
            let mut ex = read_dataset_file(&dataset)?;
            let pins = match corpus {
                Some(c) => Corpus::load(&c)?.pins,
                None => Default::default(),
            };
            let report = split_dataset_pinned(&mut ex, SplitRatios::parse(&ratios)?, seed, &pins)?;
            if let Some(f) = boost {
                if !(0.0..=1.0).contains(&f) {
                    bail!("--multimodal-boost must be a fraction");
                }
                ex = multimodal_boost(ex, f, seed);
            }
            write_dataset_file(&out, &ex)?;
            eprintln!(
                "train {} / dev {} / test {} examples ({:.3} / {:.3} / {:.3})",
                report.examples[0], report.examples[1], report.examples[2], report.achieved[0], report.achieved[1], report.achieved[2]
            );
        }
        Command::Distract {
            dataset,
            corpus,
            out_dir,
            scorer,
            timeout_secs,
            gen,
        } => {
            let ex = read_dataset_file(&dataset)?;
            if ex.iter().any(|e| e.split.is_none()) {
                bail!("every example needs a split; run `mmhop split` first");
            }
            let corpus = Corpus::load(&corpus)?;
            let pool = corpus.paragraph_pool();
            let lexical = LexicalScorer::fit(pool.iter().map(|p| p.text.as_str()));
            let scorer: Box<dyn RetrievalScorer> = match scorer.as_str() {
                "lexical" => Box::new(lexical),
                s => match s.strip_prefix("external:") {
                    Some(url) => Box::new(ExternalScorer::new(url, Duration::from_secs(timeout_secs), lexical)),
                    None => bail!("unknown scorer `{s}`; use lexical or external:<url>"),
                },
            };
            let cfg = gen.config();
            let (ex, notes) = distract(ex, &corpus, scorer.as_ref(), &cfg);
            for n in &notes {
                eprintln!("dropped {n}");
            }
            let m = manifest(&ex, cfg.seed, config_hash(&cfg));
            write_split_dir(&out_dir, &ex, &m)?;
            eprintln!("{} examples written to {}", ex.len(), out_dir.display());
        }
        Command::Stats { dataset, json } => {
            let s = compute_stats(&load(&dataset)?);
            print!("{}", s.render());
            if let Some(p) = json {
                write(Some(&p), &(serde_json::to_string_pretty(&s)? + "\n"))?;
            }
        }
        Command::Exec {
            dataset,
            strategy,
            answerers: spec,
            out,
            templates,
            timeout_secs,
        } => {
            let strategy = Strategy::parse(&strategy)?;
            let reg = registry(templates.as_deref())?;
            let set = answerers(&spec, &reg, Duration::from_secs(timeout_secs))?;
            let exec = Executor {
                registry: &reg,
                answerers: &set,
                predictor: &GoldTypePredictor,
            };
            let preds = load(&dataset)?
                .iter()
                .map(|e| {
                    let answers = exec.run(strategy, e, e.question()).with_context(|| e.qid.clone())?;
                    Ok(Prediction {
                        qid: e.qid.clone(),
                        answers,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write(Some(&out), &write_predictions(&preds))?;
        }
        Command::Eval {
            dataset,
            predictions,
            report,
        } => {
            let ex = load(&dataset)?;
            let text = std::fs::read_to_string(&predictions).with_context(|| predictions.display().to_string())?;
            let r = evaluate(&ex, &read_predictions(&text)?)?;
            print!("{}", r.render());
            if let Some(p) = report {
                write(Some(&p), &(serde_json::to_string_pretty(&r)? + "\n"))?;
            }
        }
        Command::Audit { dataset, out } => {
            let ex = load(&dataset)?;
            let mut lines = String::new();
            let (mut violations, mut weak, mut redundant) = (0, 0, 0);
            for e in &ex {
                for v in audit_context(&e.context, &e.answers.values) {
                    violations += 1;
                    lines += &(serde_json::json!({"qid": e.qid, "kind": v.rule, "evidence": v.detail}).to_string() + "\n");
                }
                for f in [detect_weak_distractors(e), detect_redundant_evidence(e)].into_iter().flatten() {
                    match f.kind {
                        mmhop_core::eval::AuditKind::WeakDistractors => weak += 1,
                        mmhop_core::eval::AuditKind::RedundantEvidence => redundant += 1,
                    }
                    lines += &(serde_json::to_string(&f)? + "\n");
                }
            }
            eprintln!(
                "{} examples: {violations} context violations, {weak} weak distractors, {redundant} redundant evidence",
                ex.len()
            );
            write(out.as_deref(), &lines)?;
        }
        Command::Templates { out } => write(out.as_deref(), &(TemplateRegistry::default().to_json_pretty() + "\n"))?,
        Command::Serve { config } => {
            let c = mmhop_annotate::Config::load(&config).map_err(anyhow::Error::msg)?;
            eprintln!("serving on {}:{}", c.host, c.port);
            tokio::runtime::Runtime::new()?.block_on(mmhop_annotate::serve(&c))?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
