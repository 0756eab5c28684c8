//! Dataset records, JSON-lines IO, context-disjoint splits and manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::atomic::{derive_seed, AnswerList, AtomicBank, AtomicQuestion};
use crate::composer::{execute, modalities_used, ComposeError, Execution, Program};
use crate::distractor::AssembledContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub qid: String,
    pub pl_question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nl_question: Option<String>,
    /// Which answer checker gave feedback while the paraphrase was written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nl_checker: Option<String>,
    pub question_type: String,
    pub program: Program,
    pub answers: AnswerList,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediate_answers: Option<AnswerList>,
    /// The atomic questions at the program's leaves.
    pub atomics: Vec<AtomicQuestion>,
    pub context: AssembledContext,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub multimodal: bool,
    pub compositional: bool,
}

impl Example {
    pub fn bank(&self) -> AtomicBank {
        AtomicBank::new(self.atomics.iter().cloned())
    }

    /// The question a reader sees: the paraphrase when there is one.
    pub fn question(&self) -> &str {
        self.nl_question.as_deref().unwrap_or(&self.pl_question)
    }

    pub fn execute(&self) -> Result<Execution, ComposeError> {
        execute(&self.program, &self.context.table, &self.bank())
    }

    pub fn gold_paragraph_ids(&self) -> BTreeSet<&str> {
        self.context.gold_paragraphs().map(|p| p.id.as_str()).collect()
    }

    pub fn gold_image_ids(&self) -> BTreeSet<&str> {
        self.context.gold_images().map(|i| i.id.as_str()).collect()
    }

    /// Checks answers are present and both flags match the program.
    pub fn validate(&self) -> Result<(), String> {
        self.answers.validate()?;
        if self.program.question_type != self.question_type {
            return Err("question_type differs from the program label".into());
        }
        let used = modalities_used(&self.program, &self.bank()).map_err(|e| e.to_string())?;
        if self.multimodal != (used.len() >= 2) {
            return Err("multimodal flag does not match the program".into());
        }
        if self.compositional != !self.program.is_atomic() {
            return Err("compositional flag does not match the program".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("duplicate qid `{0}`")]
    DuplicateQid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn write_dataset(examples: &[Example]) -> String {
    let mut out = String::new();
    for e in examples {
        out.push_str(&serde_json::to_string(e).expect("examples serialize"));
        out.push('\n');
    }
    out
}

pub fn read_dataset(s: &str) -> Result<Vec<Example>, DatasetError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in s.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: Example = serde_json::from_str(line).map_err(|err| DatasetError::Malformed {
            line: i + 1,
            msg: err.to_string(),
        })?;
        if !seen.insert(e.qid.clone()) {
            return Err(DatasetError::DuplicateQid(e.qid));
        }
        out.push(e);
    }
    Ok(out)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_dataset_file(path: &Path) -> Result<Vec<Example>, DatasetError> {
    read_dataset(&std::fs::read_to_string(path).map_err(io_err(path))?)
}

pub fn write_dataset_file(path: &Path, examples: &[Example]) -> Result<(), DatasetError> {
    std::fs::write(path, write_dataset(examples)).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl SplitRatios {
    /// Published split sizes: 23,817 / 2,441 / 3,660 of 29,918.
    pub const REFERENCE_COUNTS: [usize; 3] = [23_817, 2_441, 3_660];

    pub fn reference() -> Self {
        let [a, b, c] = Self::REFERENCE_COUNTS.map(|n| n as f64);
        let t = a + b + c;
        SplitRatios {
            train: a / t,
            dev: b / t,
            test: c / t,
        }
    }

    /// "reference" or three comma-separated fractions.
    pub fn parse(s: &str) -> Result<Self, SplitError> {
        if s.trim() == "reference" {
            return Ok(Self::reference());
        }
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| SplitError::BadRatios(s.to_string()))?;
        let [train, dev, test] = parts[..] else {
            return Err(SplitError::BadRatios(s.to_string()));
        };
        let r = SplitRatios { train, dev, test };
        r.check()?;
        Ok(r)
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.dev, self.test]
    }

    fn check(&self) -> Result<(), SplitError> {
        let a = self.as_array();
        if a.iter().any(|x| !x.is_finite() || *x < 0.0) || (a.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(SplitError::BadRatios(format!("{} {} {}", a[0], a[1], a[2])));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("ratios `{0}` must be three non-negative fractions summing to 1")]
    BadRatios(String),
    #[error("ratios cannot be met with {groups} context groups; achieved train {:.3}, dev {:.3}, test {:.3}", achieved[0], achieved[1], achieved[2])]
    Unachievable { groups: usize, achieved: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub groups: [usize; 3],
    pub examples: [usize; 3],
    pub achieved: [f64; 3],
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != r {
            let n = self.0[c];
            self.0[c] = r;
            c = n;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Groups of example indices that share a table, a gold paragraph or a
/// gold image, transitively. Groups are listed by first member.
pub fn context_groups(examples: &[Example]) -> Vec<Vec<usize>> {
    let mut uf = UnionFind((0..examples.len()).collect());
    let mut owner: BTreeMap<String, usize> = BTreeMap::new();
    for (i, e) in examples.iter().enumerate() {
        let keys = std::iter::once(format!("t:{}", e.context.table.key()))
            .chain(e.gold_paragraph_ids().into_iter().map(|p| format!("p:{p}")))
            .chain(e.gold_image_ids().into_iter().map(|p| format!("i:{p}")));
        for k in keys {
            match owner.get(&k) {
                Some(&j) => uf.union(i, j),
                None => {
                    owner.insert(k, i);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..examples.len() {
        let r = uf.find(i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Assigns whole context groups to splits: groups are shuffled under the
/// seed, taken largest first, and each goes to the split furthest below its
/// target example count. Splits with a positive ratio are guaranteed a
/// group while enough groups remain.
pub fn split_dataset(examples: &mut [Example], ratios: SplitRatios, seed: u64) -> Result<SplitReport, SplitError> {
    split_dataset_pinned(examples, ratios, seed, &BTreeMap::new())
}

/// As [`split_dataset`], with groups containing a pinned context placed in
/// the pinned split (the first pin met wins) before the rest are assigned.
pub fn split_dataset_pinned(
    examples: &mut [Example],
    ratios: SplitRatios,
    seed: u64,
    pins: &BTreeMap<String, Split>,
) -> Result<SplitReport, SplitError> {
    ratios.check()?;
    let mut groups = context_groups(examples);
    let total = examples.len() as f64;
    let r = ratios.as_array();
    let target: Vec<f64> = r.iter().map(|x| x * total).collect();
    let mut counts = [0usize; 3];
    let mut n_groups = [0usize; 3];
    let n = groups.len();
    groups.retain(|g| {
        let pin = g.iter().find_map(|&i| pins.get(&examples[i].context.context_id));
        match pin {
            Some(&s) => {
                let k = Split::ALL.iter().position(|x| *x == s).expect("known split");
                counts[k] += g.len();
                n_groups[k] += 1;
                for &i in g {
                    examples[i].split = Some(s);
                }
                false
            }
            None => true,
        }
    });
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "split")));
    groups.sort_by_key(|g| std::cmp::Reverse(g.len()));

    let free = groups.len();
    for (gi, g) in groups.iter().enumerate() {
        let empty: Vec<usize> = (0..3).filter(|&s| r[s] > 0.0 && n_groups[s] == 0).collect();
        let s = if !empty.is_empty() && free - gi <= empty.len() {
            empty[0]
        } else {
            (0..3)
                .filter(|&s| r[s] > 0.0)
                .max_by(|&a, &b| {
                    (target[a] - counts[a] as f64)
                        .total_cmp(&(target[b] - counts[b] as f64))
                        .then(b.cmp(&a))
                })
                .expect("some ratio is positive")
        };
        counts[s] += g.len();
        n_groups[s] += 1;
        for &i in g {
            examples[i].split = Some(Split::ALL[s]);
        }
    }
    let achieved = counts.map(|c| if total > 0.0 { c as f64 / total } else { 0.0 });
    if !examples.is_empty() && (0..3).any(|s| r[s] > 0.0 && counts[s] == 0) {
        return Err(SplitError::Unachievable { groups: n, achieved });
    }
    Ok(SplitReport {
        groups: n_groups,
        examples: counts,
        achieved,
    })
}

/// Drops single-modality dev and test examples, in seeded order, until
/// multimodal examples make up at least `fraction` of each.
pub fn multimodal_boost(examples: Vec<Example>, fraction: f64, seed: u64) -> Vec<Example> {
    let mut drop = BTreeSet::new();
    for split in [Split::Dev, Split::Test] {
        let idx: Vec<usize> = (0..examples.len()).filter(|&i| examples[i].split == Some(split)).collect();
        let multi = idx.iter().filter(|&&i| examples[i].multimodal).count();
        let mut single: Vec<usize> = idx.iter().copied().filter(|&i| !examples[i].multimodal).collect();
        single.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("boost/{split}"))));
        let mut kept = idx.len();
        for i in single {
            if kept == 0 || multi as f64 / kept as f64 >= fraction {
                break;
            }
            drop.insert(i);
            kept -= 1;
        }
    }
    examples
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, e)| e)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub file: String,
    pub examples: usize,
    pub contexts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub splits: BTreeMap<Split, SplitEntry>,
}

/// sha256 of a configuration's canonical JSON.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let v = serde_json::to_value(config).expect("config serializes");
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

pub fn manifest(examples: &[Example], seed: u64, config_hash: String) -> Manifest {
    let splits = Split::ALL
        .into_iter()
        .map(|s| {
            let mine: Vec<&Example> = examples.iter().filter(|e| e.split == Some(s)).collect();
            let contexts: BTreeSet<&str> = mine.iter().map(|e| e.context.context_id.as_str()).collect();
            (
                s,
                SplitEntry {
                    file: format!("{s}.jsonl"),
                    examples: mine.len(),
                    contexts: contexts.len(),
                },
            )
        })
        .collect();
    Manifest {
        seed,
        config_hash,
        splits,
    }
}

/// Writes `{train,dev,test}.jsonl` and `manifest.json` into `dir`.
pub fn write_split_dir(dir: &Path, examples: &[Example], manifest: &Manifest) -> Result<(), DatasetError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (s, entry) in &manifest.splits {
        let mine: Vec<Example> = examples.iter().filter(|e| e.split == Some(*s)).cloned().collect();
        write_dataset_file(&dir.join(&entry.file), &mine)?;
    }
    let path = dir.join("manifest.json");
    let body = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, body).map_err(io_err(&path))
}

/// Reads every split file listed in `dir/manifest.json`, in split order.
pub fn read_split_dir(dir: &Path) -> Result<(Manifest, Vec<Example>), DatasetError> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| DatasetError::Malformed {
        line: e.line(),
        msg: format!("manifest.json: {e}"),
    })?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for entry in manifest.splits.values() {
        for e in read_dataset_file(&dir.join(&entry.file))? {
            if !seen.insert(e.qid.clone()) {
                return Err(DatasetError::DuplicateQid(e.qid));
            }
            out.push(e);
        }
    }
    Ok((manifest, out))
}
