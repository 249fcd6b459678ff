//! Prompt templates and causal-instruction injection.
//!
//! Template texts are shipped as plain-text assets and embedded at build
//! time; `assets/checksums.sha256` pins their bytes. Slots are written as
//! `{QUERY}`, `{CONTEXT}` and `{TASK_INSTRUCTION}` and are substituted in a
//! single pass, so slot-like text inside a question is never re-expanded.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::record::ContextualQA;

const QA_PREAMBLE: &str = include_str!("../assets/templates/qa.preamble.txt");
const QA: &str = include_str!("../assets/templates/qa.txt");
const TRUSTWORTHY_PREAMBLE: &str = include_str!("../assets/templates/trustworthy_qa.preamble.txt");
const TRUSTWORTHY: &str = include_str!("../assets/templates/trustworthy_qa.txt");
const POSTFIX: &str = include_str!("../assets/templates/postfix_qa.txt");
const COGNITION_PREAMBLE: &str = include_str!("../assets/templates/cognition.preamble.txt");
const COGNITION_ASSESSMENT: &str = include_str!("../assets/templates/cognition_assessment.txt");
const COGNITION_FINETUNING: &str = include_str!("../assets/templates/cognition_finetuning.txt");
const CAUSAL_GENERATION: &str = include_str!("../assets/templates/causal_generation.txt");
const REVIEW_WRAPPER: &str = include_str!("../assets/templates/review_wrapper.txt");
const CAUSAL_INSTRUCTIONS: &str = include_str!("../assets/causal_instructions.txt");

/// Every embedded asset, keyed by its path under `assets/`.
pub const ASSETS: &[(&str, &str)] = &[
    ("causal_instructions.txt", CAUSAL_INSTRUCTIONS),
    ("templates/causal_generation.txt", CAUSAL_GENERATION),
    ("templates/cognition.preamble.txt", COGNITION_PREAMBLE),
    ("templates/cognition_assessment.txt", COGNITION_ASSESSMENT),
    ("templates/cognition_finetuning.txt", COGNITION_FINETUNING),
    ("templates/postfix_qa.txt", POSTFIX),
    ("templates/qa.preamble.txt", QA_PREAMBLE),
    ("templates/qa.txt", QA),
    ("templates/review_wrapper.txt", REVIEW_WRAPPER),
    ("templates/trustworthy_qa.preamble.txt", TRUSTWORTHY_PREAMBLE),
    ("templates/trustworthy_qa.txt", TRUSTWORTHY),
];

/// SHA-256 of each embedded asset, in [`ASSETS`] order.
pub fn asset_checksums() -> Vec<(&'static str, String)> {
    ASSETS
        .iter()
        .map(|(name, body)| (*name, hex::encode(Sha256::digest(body.as_bytes()))))
        .collect()
}

pub const KNOWLEDGE_CONSTRAINT: &str =
    "Your answer must not using any additional knowledge that is not mentioned in the given contexts";
pub const REJECTION_DIRECTIVE: &str =
    "If the context is not sufficient to answer the question, please answer it with 'Not Provided'";
pub const POSTFIX_DIRECTIVE: &str =
    "You must append either '<Sufficient>' or '<Insufficient>' after your answer";
pub const FINETUNING_DIRECTIVE: &str =
    "You must only answer either 'Sufficient' or 'Insufficient' without any other output";

const QUERY_MARKER: &str = "\n\nQUERY:";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {0:?} cannot be rendered from a QA item")]
    NotItemTemplate(TemplateKind),
    #[error("causal instructions can only be injected into QA or trustworthy-QA prompts, got {0:?}")]
    NotInjectable(TemplateKind),
    #[error("prompt already injected with causal instruction {0}")]
    AlreadyInjected(u32),
    #[error("unknown causal instruction id {0}")]
    UnknownCausal(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CognitionVariant {
    /// Answer followed by a `<Sufficient>`/`<Insufficient>` tag.
    Assessment,
    /// Bare `Sufficient`/`Insufficient` label, used for tuning data.
    Finetuning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    Qa,
    TrustworthyQa,
    CognitionAssessment(CognitionVariant),
    PostfixQa,
    CausalGeneration,
    ReviewWrapper,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 7] = [
        TemplateKind::Qa,
        TemplateKind::TrustworthyQa,
        TemplateKind::CognitionAssessment(CognitionVariant::Assessment),
        TemplateKind::CognitionAssessment(CognitionVariant::Finetuning),
        TemplateKind::PostfixQa,
        TemplateKind::CausalGeneration,
        TemplateKind::ReviewWrapper,
    ];

    /// Short stable name, used for golden files and CLI flags.
    pub fn slug(self) -> &'static str {
        match self {
            TemplateKind::Qa => "qa",
            TemplateKind::TrustworthyQa => "trustworthy_qa",
            TemplateKind::CognitionAssessment(CognitionVariant::Assessment) => "cognition_assessment",
            TemplateKind::CognitionAssessment(CognitionVariant::Finetuning) => "cognition_finetuning",
            TemplateKind::PostfixQa => "postfix_qa",
            TemplateKind::CausalGeneration => "causal_generation",
            TemplateKind::ReviewWrapper => "review_wrapper",
        }
    }

    fn preamble(self) -> Option<&'static str> {
        match self {
            TemplateKind::Qa | TemplateKind::PostfixQa => Some(QA_PREAMBLE),
            TemplateKind::TrustworthyQa => Some(TRUSTWORTHY_PREAMBLE),
            TemplateKind::CognitionAssessment(_) => Some(COGNITION_PREAMBLE),
            TemplateKind::CausalGeneration | TemplateKind::ReviewWrapper => None,
        }
    }

    fn body(self) -> &'static str {
        match self {
            TemplateKind::Qa => QA,
            TemplateKind::TrustworthyQa => TRUSTWORTHY,
            TemplateKind::CognitionAssessment(CognitionVariant::Assessment) => COGNITION_ASSESSMENT,
            TemplateKind::CognitionAssessment(CognitionVariant::Finetuning) => COGNITION_FINETUNING,
            TemplateKind::PostfixQa => POSTFIX,
            TemplateKind::CausalGeneration => CAUSAL_GENERATION,
            TemplateKind::ReviewWrapper => REVIEW_WRAPPER,
        }
    }

    /// Template text with the optional task preamble, slots unfilled.
    pub fn template_text(self, opts: RenderOptions) -> String {
        let body = trim_final_newline(self.body());
        match self.preamble() {
            Some(pre) if opts.preamble => format!("{}\n\n{}", trim_final_newline(pre), body),
            _ => body.to_string(),
        }
    }

    fn injectable(self) -> bool {
        matches!(self, TemplateKind::Qa | TemplateKind::TrustworthyQa)
    }
}

fn trim_final_newline(s: &str) -> &str {
    s.strip_suffix('\n').unwrap_or(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderOptions {
    /// Include the task-name preamble line that precedes several templates.
    pub preamble: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { preamble: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub kind: TemplateKind,
    pub text: String,
    pub injected_causal: Option<u32>,
}

/// One answer-shaping directive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CausalInstruction {
    pub id: u32,
    pub text: &'static str,
}

/// The 28 curated causal instructions, ids 1 through 28.
pub fn causal_instructions() -> &'static [CausalInstruction] {
    static SET: OnceLock<Vec<CausalInstruction>> = OnceLock::new();
    SET.get_or_init(|| {
        CAUSAL_INSTRUCTIONS
            .lines()
            .filter(|l| !l.trim().is_empty())
            .zip(1..)
            .map(|(text, id)| CausalInstruction { id, text })
            .collect()
    })
}

pub fn causal_by_id(id: u32) -> Result<CausalInstruction, PromptError> {
    causal_instructions()
        .iter()
        .copied()
        .find(|c| c.id == id)
        .ok_or(PromptError::UnknownCausal(id))
}

/// Uniform draw over the shipped instructions; a pure function of `seed`.
pub fn sample_causal(seed: u64) -> CausalInstruction {
    let set = causal_instructions();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    set[rng.random_range(0..set.len())]
}

/// Single-pass slot substitution over `template`.
fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + slots.iter().map(|s| s.1.len()).sum::<usize>());
    let mut rest = template;
    'scan: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (name, value) in slots {
            let token_len = name.len() + 2;
            if tail.len() >= token_len
                && tail.as_bytes()[token_len - 1] == b'}'
                && &tail[1..token_len - 1] == *name
            {
                out.push_str(value);
                rest = &tail[token_len..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

fn insert_before_query(text: &str, line: &str) -> String {
    match text.find(QUERY_MARKER) {
        Some(at) => format!("{}\n{}{}", &text[..at], line, &text[at..]),
        None => format!("{text}\n{line}"),
    }
}

/// Renders an item-bearing template (every kind except causal generation
/// and the review wrapper).
pub fn render(
    kind: TemplateKind,
    item: &ContextualQA,
    opts: RenderOptions,
) -> Result<RenderedPrompt, PromptError> {
    if matches!(kind, TemplateKind::CausalGeneration | TemplateKind::ReviewWrapper) {
        return Err(PromptError::NotItemTemplate(kind));
    }
    let text = fill(
        &kind.template_text(opts),
        &[("QUERY", &item.question), ("CONTEXT", &item.context)],
    );
    Ok(RenderedPrompt { kind, text, injected_causal: None })
}

/// Appends `causal` to the requirement block that precedes `QUERY:`.
pub fn inject_causal(
    base: &RenderedPrompt,
    causal: CausalInstruction,
) -> Result<RenderedPrompt, PromptError> {
    if !base.kind.injectable() {
        return Err(PromptError::NotInjectable(base.kind));
    }
    if let Some(id) = base.injected_causal {
        return Err(PromptError::AlreadyInjected(id));
    }
    Ok(RenderedPrompt {
        kind: base.kind,
        text: insert_before_query(&base.text, causal.text),
        injected_causal: Some(causal.id),
    })
}

/// Renders with the causal instruction placed into the template before
/// slot substitution. Produces the same bytes as `render` + `inject_causal`.
pub fn render_with_causal(
    kind: TemplateKind,
    item: &ContextualQA,
    causal: CausalInstruction,
    opts: RenderOptions,
) -> Result<RenderedPrompt, PromptError> {
    if !kind.injectable() {
        return Err(PromptError::NotInjectable(kind));
    }
    let template = insert_before_query(&kind.template_text(opts), causal.text);
    let text = fill(&template, &[("QUERY", &item.question), ("CONTEXT", &item.context)]);
    Ok(RenderedPrompt { kind, text, injected_causal: Some(causal.id) })
}

/// The teacher prompt asking for new candidate causal instructions.
pub fn render_causal_generation() -> RenderedPrompt {
    RenderedPrompt {
        kind: TemplateKind::CausalGeneration,
        text: TemplateKind::CausalGeneration.template_text(RenderOptions::default()),
        injected_causal: None,
    }
}

/// Wraps a (possibly causal-injected) QA prompt in the self-review
/// instructions.
pub fn render_review_wrapper(task: &RenderedPrompt) -> RenderedPrompt {
    let text = fill(
        &TemplateKind::ReviewWrapper.template_text(RenderOptions::default()),
        &[("TASK_INSTRUCTION", &task.text)],
    );
    RenderedPrompt {
        kind: TemplateKind::ReviewWrapper,
        text,
        injected_causal: task.injected_causal,
    }
}
