//! Balanced known/unknown benchmark construction.
//!
//! Known items pair every sub-question with its own context. Unknown items
//! reassign questions to sibling contexts of the same ambiguous group via a
//! fixed-point-free permutation, so each unknown context is related to the
//! question but does not answer it.

use std::collections::{BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::record::{ContextualQA, Label, SubQuestionGroup};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BenchError {
    #[error("requested {requested} {class} items per class but only {available} are available")]
    Shortfall {
        class: Label,
        requested: usize,
        available: usize,
    },
}

/// Where a built item's question and context came from inside its group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lineage {
    pub group_id: String,
    pub question_index: usize,
    pub context_index: usize,
    /// Gold answers of the question before reassignment (audit only).
    pub original_gold: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltItem {
    pub item: ContextualQA,
    pub lineage: Lineage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub known_count: usize,
    pub unknown_count: usize,
    pub seed: u64,
    pub target_per_class: Option<usize>,
    pub available_known: usize,
    pub available_unknown: usize,
    /// Groups with a single pair, which admit no derangement.
    pub excluded_groups: Vec<String>,
    /// Reassigned pairs whose text equals an original pair (identical
    /// sibling contexts); dropped because they would duplicate a known item.
    pub dropped_duplicates: usize,
    pub source_checksum: String,
}

fn group_seed(seed: u64, group_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(group_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Uniform random derangement of `0..n` by rejection sampling.
/// Returns `None` for `n < 2`.
pub fn sample_derangement(n: usize, rng: &mut impl rand::Rng) -> Option<Vec<usize>> {
    if n < 2 {
        return None;
    }
    if n == 2 {
        return Some(vec![1, 0]);
    }
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return Some(perm);
        }
    }
}

/// One known item per (question, own context) pair.
pub fn build_known(groups: &[SubQuestionGroup]) -> Vec<BuiltItem> {
    groups
        .iter()
        .flat_map(|g| {
            g.pairs.iter().enumerate().map(move |(i, pair)| BuiltItem {
                item: ContextualQA::new(
                    &g.group_id,
                    &pair.question,
                    &pair.context,
                    pair.gold_answers.iter().cloned(),
                    Label::Known,
                    g.source,
                ),
                lineage: Lineage {
                    group_id: g.group_id.clone(),
                    question_index: i,
                    context_index: i,
                    original_gold: pair.gold_answers.clone(),
                },
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnknownBuild {
    pub items: Vec<BuiltItem>,
    pub excluded_groups: Vec<String>,
    pub dropped_duplicates: usize,
}

/// Within-group derangement of questions onto sibling contexts.
///
/// Each group draws from its own generator seeded by `(seed, group_id)`, so
/// the result does not depend on group order.
pub fn build_unknown(groups: &[SubQuestionGroup], seed: u64) -> UnknownBuild {
    let mut items = Vec::new();
    let mut excluded_groups = Vec::new();
    let mut dropped_duplicates = 0;
    for g in groups {
        let mut rng = ChaCha8Rng::seed_from_u64(group_seed(seed, &g.group_id));
        let Some(perm) = sample_derangement(g.pairs.len(), &mut rng) else {
            excluded_groups.push(g.group_id.clone());
            continue;
        };
        let originals: HashSet<(&str, &str)> = g
            .pairs
            .iter()
            .map(|p| (p.question.as_str(), p.context.as_str()))
            .collect();
        for (qi, &ci) in perm.iter().enumerate() {
            let question = &g.pairs[qi].question;
            let context = &g.pairs[ci].context;
            if originals.contains(&(question.as_str(), context.as_str())) {
                dropped_duplicates += 1;
                continue;
            }
            items.push(BuiltItem {
                item: ContextualQA::new(
                    &g.group_id,
                    question,
                    context,
                    std::iter::empty(),
                    Label::Unknown,
                    g.source,
                ),
                lineage: Lineage {
                    group_id: g.group_id.clone(),
                    question_index: qi,
                    context_index: ci,
                    original_gold: g.pairs[qi].gold_answers.clone(),
                },
            });
        }
    }
    UnknownBuild { items, excluded_groups, dropped_duplicates }
}

/// Checksum over the canonical serialization of the input groups.
pub fn groups_checksum(groups: &[SubQuestionGroup]) -> String {
    let mut h = Sha256::new();
    for g in groups {
        h.update((g.group_id.len() as u64).to_le_bytes());
        h.update(g.group_id.as_bytes());
        h.update((g.pairs.len() as u64).to_le_bytes());
        for p in &g.pairs {
            let line = serde_json::to_vec(p).expect("pair serializes");
            h.update((line.len() as u64).to_le_bytes());
            h.update(&line);
        }
    }
    hex::encode(h.finalize())
}

fn subsample(
    mut items: Vec<BuiltItem>,
    target: Option<usize>,
    class: Label,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<BuiltItem>, BenchError> {
    items.sort_by(|a, b| a.item.id.cmp(&b.item.id));
    let Some(target) = target else {
        return Ok(items);
    };
    if target > items.len() {
        return Err(BenchError::Shortfall {
            class,
            requested: target,
            available: items.len(),
        });
    }
    Ok(items.choose_multiple(rng, target).cloned().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    /// Known and unknown items, sorted by id.
    pub items: Vec<BuiltItem>,
    pub manifest: BenchmarkManifest,
}

impl Benchmark {
    pub fn records(&self) -> Vec<ContextualQA> {
        self.items.iter().map(|b| b.item.clone()).collect()
    }
}

/// Known plus unknown items, each class optionally subsampled to
/// `target_per_class`.
pub fn build_benchmark(
    groups: &[SubQuestionGroup],
    seed: u64,
    target_per_class: Option<usize>,
) -> Result<Benchmark, BenchError> {
    let known = build_known(groups);
    let unknown = build_unknown(groups, seed);
    let available_known = known.len();
    let available_unknown = unknown.items.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let known = subsample(known, target_per_class, Label::Known, &mut rng)?;
    let unknown_items = subsample(unknown.items, target_per_class, Label::Unknown, &mut rng)?;

    let manifest = BenchmarkManifest {
        known_count: known.len(),
        unknown_count: unknown_items.len(),
        seed,
        target_per_class,
        available_known,
        available_unknown,
        excluded_groups: unknown.excluded_groups,
        dropped_duplicates: unknown.dropped_duplicates,
        source_checksum: groups_checksum(groups),
    };
    let mut items = known;
    items.extend(unknown_items);
    items.sort_by(|a, b| a.item.id.cmp(&b.item.id));
    Ok(Benchmark { items, manifest })
}
