//! Tuning-set synthesis.
//!
//! Stage one produces binary sufficiency records from benchmark-style items.
//! Stage two injects a causal instruction into QA prompts and records the
//! generate/review/regenerate conversation with a teacher model.

mod export;
mod review;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::{self, CognitionVariant, RenderOptions, RenderedPrompt, TemplateKind};
use crate::record::{ContextualQA, Label, RecordError};

pub use export::{
    export_st, export_ut, import_st, import_ut, SftConversation, SftPair,
};
pub use review::{
    causal_seed, is_fulfilled, review_loop, synth_st, LoopError, ReviewConfig, ReviewError, ReviewTranscript, StFailure,
    StReport, StRun, Teachers, Turn, TurnRole, DEFAULT_MAX_ITERATIONS,
};

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("requested {requested} {class} items but only {available} are available")]
    Shortfall {
        class: Label,
        requested: usize,
        available: usize,
    },
    #[error("item {0} is not labelled known")]
    NotKnown(String),
    #[error("refusing to export {0} non-converged transcripts without the include flag")]
    Unconverged(usize),
    #[error("invalid transcript {id}: {reason}")]
    InvalidTranscript { id: String, reason: String },
    #[error("max_iterations must be at least 1")]
    ZeroIterations,
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Prompt(#[from] prompt::PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UtTarget {
    Sufficient,
    Insufficient,
}

impl UtTarget {
    pub fn for_label(label: Label) -> Self {
        match label {
            Label::Known => UtTarget::Sufficient,
            Label::Unknown => UtTarget::Insufficient,
        }
    }
}

/// One binary sufficiency example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtRecord {
    pub item_id: String,
    pub prompt: RenderedPrompt,
    pub target: UtTarget,
}

impl UtRecord {
    pub fn from_item(item: &ContextualQA, opts: RenderOptions) -> Result<Self, TuneError> {
        let prompt = prompt::render(
            TemplateKind::CognitionAssessment(CognitionVariant::Finetuning),
            item,
            opts,
        )?;
        Ok(UtRecord {
            item_id: item.id.clone(),
            prompt,
            target: UtTarget::for_label(item.label),
        })
    }
}

/// Deterministic subsample of `n` items, drawn from the id-sorted pool.
pub(crate) fn sample_items<'a>(
    mut pool: Vec<&'a ContextualQA>,
    n: usize,
    class: Label,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<&'a ContextualQA>, TuneError> {
    if n > pool.len() {
        return Err(TuneError::Shortfall { class, requested: n, available: pool.len() });
    }
    pool.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(pool.choose_multiple(rng, n).copied().collect())
}

/// `n_per_class` known items mapped to "Sufficient" and as many unknown
/// items mapped to "Insufficient", ordered by item id.
pub fn synth_ut(
    items: &[ContextualQA],
    n_per_class: usize,
    seed: u64,
    opts: RenderOptions,
) -> Result<Vec<UtRecord>, TuneError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (known, unknown): (Vec<_>, Vec<_>) = items.iter().partition(|i| i.label == Label::Known);
    let mut chosen = sample_items(known, n_per_class, Label::Known, &mut rng)?;
    chosen.extend(sample_items(unknown, n_per_class, Label::Unknown, &mut rng)?);
    chosen.sort_by(|a, b| a.id.cmp(&b.id));
    chosen.into_iter().map(|i| UtRecord::from_item(i, opts)).collect()
}
