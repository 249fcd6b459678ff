#![allow(dead_code)]

use std::sync::Arc;

use ctxqa_core::gateway::{mock_endpoint, Endpoint, MockBackend, MockOutcome};
use ctxqa_core::prompt::{RenderOptions, TemplateKind};
use ctxqa_core::record::SubQuestion;
use ctxqa_core::{ContextualQA, Label, Source, SubQuestionGroup};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EXAMPLE_ANSWER: &str = "ANSWER: Jack Chen is a famous singer in China.";
pub const EXAMPLE_REVISED: &str = "ANSWER: Jack Chen was a famous singer in China.";
pub const EXAMPLE_CHECK_1: &str = "CHECKING: Question Answering Task: You need to do the Task Prompt for the following query and context.<fulfilled>Ensure the response is written in the past tense.<not fulfilled>";
pub const EXAMPLE_CHECK_2: &str = "CHECKING: Question Answering Task: You need to do the Task Prompt for the following query and context.<fulfilled>Ensure the response is written in the past tense.<fulfilled>";

pub fn example_item() -> ContextualQA {
    ContextualQA::new(
        "jack",
        "Who is Jack Chen?",
        "People saying that Jack Chen is a famous singer in China.",
        ["famous singer".to_string()],
        Label::Known,
        Source::Other,
    )
}

/// Reviewer calls carry "CHECKING:"; everything else is a generation call.
pub fn example_backend(answers: [&str; 2]) -> Arc<MockBackend> {
    Arc::new(
        MockBackend::builder()
            .on("CHECKING:", vec![EXAMPLE_CHECK_1.into(), EXAMPLE_CHECK_2.into()])
            .fallback(answers.iter().map(|a| MockOutcome::from(*a)).collect())
            .build()
            .unwrap(),
    )
}

pub fn endpoint(backend: Arc<MockBackend>) -> Endpoint {
    mock_endpoint(backend, 0)
}

pub fn known_items(n: usize) -> Vec<ContextualQA> {
    (0..n)
        .map(|i| {
            ContextualQA::new(
                format!("g{i}"),
                format!("question {i}?"),
                format!("context {i} says the answer is a{i}."),
                [format!("a{i}")],
                Label::Known,
                Source::Asqa,
            )
        })
        .collect()
}

/// Random groups with sizes drawn from `sizes`; texts are unique per pair.
pub fn random_groups(count: usize, sizes: std::ops::RangeInclusive<usize>, seed: u64) -> Vec<SubQuestionGroup> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|g| {
            let n = rng.random_range(sizes.clone());
            SubQuestionGroup {
                group_id: format!("grp{g:05}"),
                source: if g % 2 == 0 { Source::Asqa } else { Source::Hotpotqa },
                pairs: (0..n)
                    .map(|i| SubQuestion {
                        question: format!("Which {i} of parent {g}? ({})", rng.random::<u32>()),
                        context: format!("Context {i} of parent {g}: value v{g}x{i}."),
                        gold_answers: [format!("v{g}x{i}")].into_iter().collect(),
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Anchor directive each rendered template must carry.
pub fn anchor(kind: TemplateKind) -> &'static str {
    use ctxqa_core::prompt::CognitionVariant::*;
    match kind {
        TemplateKind::Qa | TemplateKind::TrustworthyQa => "please answer it with 'Not Provided'",
        TemplateKind::PostfixQa | TemplateKind::CognitionAssessment(Assessment) => {
            "You must append either '<Sufficient>' or '<Insufficient>'"
        }
        TemplateKind::CognitionAssessment(Finetuning) => {
            "You must only answer either 'Sufficient' or 'Insufficient'"
        }
        TemplateKind::CausalGeneration => "add some specific requirement to the answer",
        TemplateKind::ReviewWrapper => "with either <fulfilled> or <not fulfilled> mark",
    }
}

pub fn default_render() -> RenderOptions {
    RenderOptions::default()
}
