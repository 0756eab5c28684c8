//! Template instantiation: enumerate programs per registry template by
//! matching atomic questions to slots, then keep the sound ones.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{resolve_row, ColumnRef, ComposedQuestion, Program, Shape, TemplateRegistry};
use crate::atomic::{derive_seed, AtomicBank, AtomicQuestion, CompareOp, Modality};
use crate::context::Context;
use crate::text::contains_normalized;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstantiateConfig {
    pub seed: u64,
    /// Questions kept per template and context.
    pub max_per_template: usize,
    /// Candidate programs kept per slot before combining.
    pub max_candidates_per_slot: usize,
}

impl Default for InstantiateConfig {
    fn default() -> Self {
        InstantiateConfig {
            seed: 0,
            max_per_template: 10,
            max_candidates_per_slot: 200,
        }
    }
}

/// What a slot's parent needs from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Root,
    /// First argument of Compose: exactly one entity mention.
    Outer,
    /// Second argument of Compose: answers exactly one entity.
    Inner,
    /// Intersect argument: more than one entity.
    Set,
    /// Compare argument: one entity in one table row.
    Single,
}

struct Enumerator<'a> {
    ctx: &'a Context,
    bank: &'a AtomicBank,
    cfg: &'a InstantiateConfig,
}

impl Enumerator<'_> {
    fn leaf_ok(&self, q: &AtomicQuestion, slot: Modality, role: Role) -> bool {
        match role {
            Role::Root => q.modality == slot,
            Role::Outer => q.modality == slot && q.sole_mention().is_some(),
            Role::Inner => q.modality.channel() == slot.channel() && q.answers.single_entity().is_some(),
            Role::Set => q.modality == slot && q.answers.is_entity_list() && q.answers.len() > 1,
            Role::Single => {
                q.modality == slot
                    && q.answers
                        .single_entity()
                        .is_some_and(|e| resolve_row(&self.ctx.table, e).is_ok())
            }
        }
    }

    fn cap(&self, mut progs: Vec<Program>, label: &str) -> Vec<Program> {
        if progs.len() > self.cfg.max_candidates_per_slot {
            progs.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
                self.cfg.seed,
                &format!("{}/{label}/slot", self.ctx.id),
            )));
            progs.truncate(self.cfg.max_candidates_per_slot);
        }
        progs
    }

    fn valid(&self, p: &Program, role: Role) -> bool {
        let Ok(exec) = super::execute(p, &self.ctx.table, self.bank) else {
            return false;
        };
        match role {
            Role::Single => exec
                .answers
                .single_entity()
                .is_some_and(|e| resolve_row(&self.ctx.table, e).is_ok()),
            Role::Inner => exec.answers.single_entity().is_some(),
            Role::Set => exec.answers.is_entity_list() && exec.answers.len() > 1,
            Role::Root | Role::Outer => true,
        }
    }

    fn candidates(&self, shape: &Shape, role: Role) -> Vec<Program> {
        let label = shape.label();
        let progs: Vec<Program> = match shape {
            Shape::Atomic { modality } => self
                .bank
                .iter()
                .filter(|q| self.leaf_ok(q, *modality, role))
                .map(|q| Program::atomic(label.clone(), q.id.clone()))
                .collect(),
            Shape::Compose { outer, inner } => {
                // Outer slots are atomic in every supported shape.
                let outers = self.candidates(outer, Role::Outer);
                let inners = self.candidates(inner, Role::Inner);
                let mut v = Vec::new();
                for o in &outers {
                    let Some(m) = o.leaves().first().and_then(|id| self.bank.get(id)).and_then(|q| q.sole_mention()) else {
                        continue;
                    };
                    for i in &inners {
                        let Ok(bridge) = super::execute(i, &self.ctx.table, self.bank) else {
                            continue;
                        };
                        if bridge.answers.single_entity() != Some(m.entity.as_str()) {
                            continue;
                        }
                        let p = Program::compose(label.clone(), o.clone(), i.clone());
                        if self.valid(&p, role) {
                            v.push(p);
                        }
                    }
                }
                v
            }
            Shape::Intersect { left, right } => {
                let ls = self.candidates(left, Role::Set);
                let rs = self.candidates(right, Role::Set);
                let mut v = Vec::new();
                for l in &ls {
                    for r in &rs {
                        let p = Program::intersect(label.clone(), l.clone(), r.clone());
                        if self.valid(&p, role) {
                            v.push(p);
                        }
                    }
                }
                v
            }
            Shape::Compare { left, right } => {
                let ls = self.candidates(left, Role::Single);
                let rs = self.candidates(right, Role::Single);
                let table = &self.ctx.table;
                let columns: Vec<usize> = table
                    .columns
                    .iter()
                    .filter(|c| c.semantic_type.is_comparable())
                    .map(|c| c.position)
                    .collect();
                let mut v = Vec::new();
                for l in &ls {
                    for r in &rs {
                        for &col in &columns {
                            let key = format!("{}/{:?}/{:?}/{col}", self.ctx.id, l.leaves(), r.leaves());
                            let op = if derive_seed(self.cfg.seed, &key) & 1 == 0 {
                                CompareOp::Max
                            } else {
                                CompareOp::Min
                            };
                            let column = ColumnRef {
                                position: col,
                                header: table.columns[col].header.clone(),
                            };
                            let p = Program::compare(label.clone(), l.clone(), r.clone(), column, op);
                            if self.valid(&p, role) {
                                v.push(p);
                            }
                        }
                    }
                }
                v
            }
        };
        self.cap(progs, &label)
    }
}

/// Instantiates every registry template over one context. Output is
/// ordered by registry order and deterministic under the seed.
pub fn instantiate_templates(
    ctx: &Context,
    bank: &AtomicBank,
    registry: &TemplateRegistry,
    cfg: &InstantiateConfig,
) -> Vec<ComposedQuestion> {
    let en = Enumerator { ctx, bank, cfg };
    let mut out = Vec::new();
    for spec in registry.iter() {
        let mut seen = BTreeSet::new();
        let mut kept: Vec<ComposedQuestion> = en
            .candidates(&spec.shape, Role::Root)
            .into_iter()
            .filter_map(|p| ComposedQuestion::build(p, &ctx.table, bank).ok())
            .filter(|q| !q.answers.is_empty())
            .filter(|q| !q.answers.values.iter().any(|a| contains_normalized(&q.pl_text, a)))
            .filter(|q| seen.insert(q.pl_text.clone()))
            .collect();
        if kept.len() > cfg.max_per_template {
            let mut idx: Vec<usize> = (0..kept.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
                cfg.seed,
                &format!("{}/{}", ctx.id, spec.label),
            )));
            let mut keep: Vec<usize> = idx.into_iter().take(cfg.max_per_template).collect();
            keep.sort_unstable();
            kept = keep.into_iter().map(|i| kept[i].clone()).collect();
        }
        out.extend(kept);
    }
    out
}
