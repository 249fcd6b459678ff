//! Generate/review/regenerate loop with a teacher model.
//!
//! Each iteration asks the generator for an answer to the causal-injected QA
//! prompt, then asks the reviewer to mark every requirement sentence with
//! `<fulfilled>` or `<not fulfilled>`. The loop stops at the first clean
//! check or after `max_iterations` rounds.

use futures::stream::{self, StreamExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{sample_items, TuneError};
use crate::gateway::{Endpoint, GatewayError, Message};
use crate::prompt::{
    render_review_wrapper, render_with_causal, sample_causal, CausalInstruction, RenderOptions,
    TemplateKind,
};
use crate::record::{ContextualQA, Label};

pub const DEFAULT_MAX_ITERATIONS: u32 = 5;

const FULFILLED: &str = "<fulfilled>";
const NOT_FULFILLED: &str = "<not fulfilled>";

const REVISION_REQUEST: &str = "The review of your answer marked at least one requirement as <not fulfilled>:\n{REVIEW}\n\nYou must modify your answer again to fulfill the requirement.\n\nANSWER:";

/// A check passes when it has no `<not fulfilled>` mark and at least one
/// `<fulfilled>` mark.
pub fn is_fulfilled(check: &str) -> bool {
    !check.contains(NOT_FULFILLED) && check.contains(FULFILLED)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnRole {
    Task,
    Answer,
    Checking,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: TurnRole,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewTranscript {
    pub item_id: String,
    pub causal_id: u32,
    /// `task`, then one or more `(answer, checking)` pairs.
    pub turns: Vec<Turn>,
    pub iterations: u32,
    pub converged: bool,
    pub final_answer: String,
}

impl ReviewTranscript {
    /// Rebuilds a transcript from its turns, checking the turn pattern and
    /// the check-mark invariants.
    pub fn from_turns(
        item_id: String,
        causal_id: u32,
        converged: bool,
        turns: Vec<Turn>,
    ) -> Result<Self, TuneError> {
        let invalid = |reason: &str| TuneError::InvalidTranscript {
            id: item_id.clone(),
            reason: reason.to_string(),
        };
        if turns.first().map(|t| t.role) != Some(TurnRole::Task) {
            return Err(invalid("first turn must be the task"));
        }
        let rest = &turns[1..];
        if rest.is_empty() || !rest.len().is_multiple_of(2) {
            return Err(invalid("expected one or more answer/checking pairs"));
        }
        for pair in rest.chunks(2) {
            if pair[0].role != TurnRole::Answer || pair[1].role != TurnRole::Checking {
                return Err(invalid("turns must alternate answer, checking"));
            }
        }
        let checks: Vec<&str> = rest.chunks(2).map(|p| p[1].text.as_str()).collect();
        let (last, earlier) = checks.split_last().expect("at least one pair");
        if earlier.iter().any(|c| is_fulfilled(c)) {
            return Err(invalid("an earlier check is already fulfilled"));
        }
        if is_fulfilled(last) != converged {
            return Err(invalid("converged flag disagrees with the last check"));
        }
        let final_answer = rest[rest.len() - 2].text.clone();
        Ok(ReviewTranscript {
            item_id,
            causal_id,
            iterations: (rest.len() / 2) as u32,
            converged,
            final_answer,
            turns,
        })
    }

    pub fn checks(&self) -> impl Iterator<Item = &str> {
        self.turns
            .iter()
            .filter(|t| t.role == TurnRole::Checking)
            .map(|t| t.text.as_str())
    }
}

/// Endpoints used for answer generation and for review. Both may be the
/// same model.
#[derive(Debug, Clone)]
pub struct Teachers {
    pub generator: Endpoint,
    pub reviewer: Endpoint,
}

impl Teachers {
    pub fn single(endpoint: Endpoint) -> Self {
        Teachers { generator: endpoint.clone(), reviewer: endpoint }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReviewConfig {
    pub max_iterations: u32,
    /// QA template the causal instruction is injected into.
    pub template: TemplateKind,
    pub render: RenderOptions,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        ReviewConfig {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            template: TemplateKind::Qa,
            render: RenderOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("review loop for item {item_id} aborted after {completed_turns} turns: {cause}")]
pub struct ReviewError {
    pub item_id: String,
    pub completed_turns: usize,
    pub cause: GatewayError,
}

fn strip_label<'a>(text: &'a str, label: &str) -> &'a str {
    let trimmed = text.trim();
    trimmed.strip_prefix(label).map(str::trim_start).unwrap_or(trimmed)
}

/// Runs the loop for one item. Endpoint failures abort the whole transcript.
pub async fn review_loop(
    item: &ContextualQA,
    causal: CausalInstruction,
    teachers: &Teachers,
    config: ReviewConfig,
) -> Result<ReviewTranscript, LoopError> {
    if config.max_iterations == 0 {
        return Err(LoopError::Setup(TuneError::ZeroIterations));
    }
    let qa = render_with_causal(config.template, item, causal, config.render)
        .map_err(|e| LoopError::Setup(e.into()))?;
    let task = render_review_wrapper(&qa);
    let mut turns = vec![Turn { role: TurnRole::Task, text: task.text.clone() }];
    let mut history = vec![Message::user(qa.text.clone())];
    let abort = |turns: &Vec<Turn>, cause| {
        LoopError::Aborted(ReviewError {
            item_id: item.id.clone(),
            completed_turns: turns.len(),
            cause,
        })
    };

    let mut converged = false;
    let mut iterations = 0;
    let mut final_answer = String::new();
    while iterations < config.max_iterations {
        iterations += 1;
        let generated = teachers
            .generator
            .complete(&history)
            .await
            .map_err(|e| abort(&turns, e))?;
        let answer = strip_label(&generated.response_text, "ANSWER:").to_string();
        turns.push(Turn { role: TurnRole::Answer, text: answer.clone() });

        let review_prompt = format!("{} {}\n\nCHECKING:", task.text, answer);
        let reviewed = teachers
            .reviewer
            .complete(&[Message::user(review_prompt)])
            .await
            .map_err(|e| abort(&turns, e))?;
        let check = strip_label(&reviewed.response_text, "CHECKING:").to_string();
        turns.push(Turn { role: TurnRole::Checking, text: check.clone() });

        final_answer = answer.clone();
        if is_fulfilled(&check) {
            converged = true;
            break;
        }
        history.push(Message::assistant(answer));
        history.push(Message::user(REVISION_REQUEST.replace("{REVIEW}", &check)));
    }

    Ok(ReviewTranscript {
        item_id: item.id.clone(),
        causal_id: causal.id,
        turns,
        iterations,
        converged,
        final_answer,
    })
}

/// Error of a single review loop: either a setup problem or an aborted
/// endpoint conversation.
#[derive(Debug, Error)]
pub enum LoopError {
    #[error(transparent)]
    Setup(#[from] TuneError),
    #[error(transparent)]
    Aborted(#[from] ReviewError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StFailure {
    pub item_id: String,
    pub causal_id: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StReport {
    pub requested: usize,
    pub converged: usize,
    pub unconverged: usize,
    pub failed: usize,
    pub max_iterations: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StRun {
    /// Ordered by item id.
    pub transcripts: Vec<ReviewTranscript>,
    pub failures: Vec<StFailure>,
    pub report: StReport,
}

/// Per-item seed for causal-instruction sampling.
pub fn causal_seed(seed: u64, item_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(item_id.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("digest has 32 bytes"))
}

/// Samples `n` known items, pairs each with a causal instruction and runs
/// up to `concurrency` review loops at once. Endpoint failures are tallied
/// per item; the batch continues.
pub async fn synth_st(
    items: &[ContextualQA],
    n: usize,
    seed: u64,
    teachers: &Teachers,
    config: ReviewConfig,
    concurrency: usize,
) -> Result<StRun, TuneError> {
    if config.max_iterations == 0 {
        return Err(TuneError::ZeroIterations);
    }
    if let Some(bad) = items.iter().find(|i| i.label != Label::Known) {
        return Err(TuneError::NotKnown(bad.id.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = sample_items(items.iter().collect(), n, Label::Known, &mut rng)?;

    let results: Vec<_> = stream::iter(chosen)
        .map(|item| async move {
            let causal = sample_causal(causal_seed(seed, &item.id));
            (item, causal, review_loop(item, causal, teachers, config).await)
        })
        .buffer_unordered(concurrency.max(1))
        .collect()
        .await;

    let mut transcripts = Vec::new();
    let mut failures = Vec::new();
    for (item, causal, result) in results {
        match result {
            Ok(t) => transcripts.push(t),
            Err(LoopError::Setup(e)) => return Err(e),
            Err(LoopError::Aborted(e)) => {
                tracing::warn!(item = %item.id, error = %e, "review loop failed");
                failures.push(StFailure {
                    item_id: item.id.clone(),
                    causal_id: causal.id,
                    error: e.cause.to_string(),
                });
            }
        }
    }
    transcripts.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    failures.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    let converged = transcripts.iter().filter(|t| t.converged).count();
    let report = StReport {
        requested: n,
        converged,
        unconverged: transcripts.len() - converged,
        failed: failures.len(),
        max_iterations: config.max_iterations,
        seed,
    };
    Ok(StRun { transcripts, failures, report })
}
