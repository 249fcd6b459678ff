//! Benchmark evaluation against a chat endpoint.

mod classify;
mod metrics;

use std::collections::BTreeSet;
use std::sync::Arc;

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Endpoint, GatewayError, Message};
use crate::prompt::{self, RenderOptions, TemplateKind};
use crate::record::{validate_item, ContextualQA, Label, PostfixTag, ResponseClass};

pub use classify::{
    classify_known, classify_unknown, detect_rejection, matches_gold, parse_postfix,
};
pub use metrics::{compute_metrics, harmonic_f1, round1, KnownPortions, MetricsReport, Scoring};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("class {class:?} is not admissible for a {label} item")]
    InadmissibleClass { label: Label, class: ResponseClass },
    #[error("records mix postfix-tagged and untagged responses")]
    MixedScoring,
    #[error("template {0:?} is not an evaluation template")]
    UnsupportedTemplate(TemplateKind),
    #[error("invalid benchmark item {id}: {violations}")]
    InvalidItem { id: String, violations: String },
    #[error("every request failed; first error: {0}")]
    TotalOutage(GatewayError),
    #[error(transparent)]
    Prompt(#[from] prompt::PromptError),
}

#[derive(Debug, Deserialize)]
struct RawEvalRecord {
    item_id: String,
    label: Label,
    response_text: String,
    class: ResponseClass,
    #[serde(default)]
    postfix: Option<PostfixTag>,
    #[serde(default)]
    latency_ms: u64,
    #[serde(default)]
    attempts: u32,
}

/// One graded response. The class is checked against the label on
/// construction and on deserialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEvalRecord")]
pub struct EvalRecord {
    pub item_id: String,
    pub label: Label,
    pub response_text: String,
    pub class: ResponseClass,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub postfix: Option<PostfixTag>,
    pub latency_ms: u64,
    pub attempts: u32,
}

impl TryFrom<RawEvalRecord> for EvalRecord {
    type Error = EvalError;

    fn try_from(raw: RawEvalRecord) -> Result<Self, Self::Error> {
        let mut rec = EvalRecord::new(raw.item_id, raw.label, raw.response_text, raw.class, raw.postfix)?;
        rec.latency_ms = raw.latency_ms;
        rec.attempts = raw.attempts;
        Ok(rec)
    }
}

impl EvalRecord {
    pub fn new(
        item_id: String,
        label: Label,
        response_text: String,
        class: ResponseClass,
        postfix: Option<PostfixTag>,
    ) -> Result<Self, EvalError> {
        if !class.admissible_for(label) {
            return Err(EvalError::InadmissibleClass { label, class });
        }
        Ok(EvalRecord {
            item_id,
            label,
            response_text,
            class,
            postfix,
            latency_ms: 0,
            attempts: 0,
        })
    }
}

/// Decides whether a non-rejecting response answers a known item.
#[async_trait]
pub trait AnswerJudge: Send + Sync {
    async fn is_correct(&self, response: &str, golds: &BTreeSet<String>) -> Result<bool, GatewayError>;
}

/// Normalized-substring grading, the default.
#[derive(Debug, Clone, Copy, Default)]
pub struct SubstringJudge;

#[async_trait]
impl AnswerJudge for SubstringJudge {
    async fn is_correct(&self, response: &str, golds: &BTreeSet<String>) -> Result<bool, GatewayError> {
        Ok(matches_gold(response, golds))
    }
}

/// Asks a model whether the response is equivalent to a reference answer.
#[derive(Debug, Clone)]
pub struct EndpointJudge {
    pub endpoint: Endpoint,
}

const JUDGE_PROMPT: &str = "Decide whether the response gives an answer equivalent to any of the reference answers. Reply with Yes or No only.\n\nREFERENCES: {GOLDS}\n\nRESPONSE: {RESPONSE}\n\nVERDICT:";

#[async_trait]
impl AnswerJudge for EndpointJudge {
    async fn is_correct(&self, response: &str, golds: &BTreeSet<String>) -> Result<bool, GatewayError> {
        let refs = golds.iter().cloned().collect::<Vec<_>>().join(" | ");
        let prompt = JUDGE_PROMPT.replace("{GOLDS}", &refs).replace("{RESPONSE}", response);
        let verdict = self.endpoint.complete(&[Message::user(prompt)]).await?;
        Ok(verdict.response_text.trim().to_ascii_lowercase().starts_with("yes"))
    }
}

#[derive(Clone)]
pub struct EvalOptions {
    pub concurrency: usize,
    pub render: RenderOptions,
    pub judge: Arc<dyn AnswerJudge>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            concurrency: 1,
            render: RenderOptions::default(),
            judge: Arc::new(SubstringJudge),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalFailure {
    pub item_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    /// In benchmark order.
    pub records: Vec<EvalRecord>,
    pub failures: Vec<EvalFailure>,
    pub report: MetricsReport,
}

async fn grade(
    item: &ContextualQA,
    response: &str,
    judge: &dyn AnswerJudge,
) -> Result<ResponseClass, GatewayError> {
    Ok(match item.label {
        Label::Unknown => classify_unknown(response),
        Label::Known if detect_rejection(response) => ResponseClass::Rejected,
        Label::Known if judge.is_correct(response, &item.gold_answers).await? => ResponseClass::Correct,
        Label::Known => ResponseClass::Wrong,
    })
}

async fn eval_item(
    item: &ContextualQA,
    template: TemplateKind,
    endpoint: &Endpoint,
    options: &EvalOptions,
) -> Result<EvalRecord, GatewayError> {
    let prompt = prompt::render(template, item, options.render).expect("evaluation templates render items");
    let exchange = endpoint.complete(&[Message::user(prompt.text)]).await?;
    let response = exchange.response_text;
    let class = grade(item, &response, options.judge.as_ref()).await?;
    let postfix = (template == TemplateKind::PostfixQa).then(|| parse_postfix(&response));
    let mut rec = EvalRecord::new(item.id.clone(), item.label, response, class, postfix)
        .expect("grade only yields admissible classes");
    rec.latency_ms = exchange.latency_ms;
    rec.attempts = exchange.attempts;
    Ok(rec)
}

/// Renders each item, queries the endpoint with at most
/// `options.concurrency` requests in flight, grades and aggregates.
/// Failed items are excluded from the metrics and counted in the report.
pub async fn run_eval(
    benchmark: &[ContextualQA],
    template: TemplateKind,
    endpoint: &Endpoint,
    options: &EvalOptions,
) -> Result<EvalRun, EvalError> {
    if !matches!(template, TemplateKind::TrustworthyQa | TemplateKind::PostfixQa) {
        return Err(EvalError::UnsupportedTemplate(template));
    }
    for item in benchmark {
        let violations = validate_item(item);
        if !violations.is_empty() {
            let joined = violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
            return Err(EvalError::InvalidItem { id: item.id.clone(), violations: joined });
        }
    }

    let outcomes: Vec<_> = stream::iter(benchmark)
        .map(|item| async move { (item, eval_item(item, template, endpoint, options).await) })
        .buffered(options.concurrency.max(1))
        .collect()
        .await;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for (item, outcome) in outcomes {
        match outcome {
            Ok(rec) => records.push(rec),
            Err(e) => {
                tracing::warn!(item = %item.id, error = %e, "evaluation request failed");
                failures.push(EvalFailure { item_id: item.id.clone(), error: e.to_string() });
                first_error.get_or_insert(e);
            }
        }
    }
    if records.is_empty() {
        if let Some(e) = first_error {
            return Err(EvalError::TotalOutage(e));
        }
    }
    let mut report = compute_metrics(&records)?;
    report.failed_requests = failures.len();
    Ok(EvalRun { records, failures, report })
}
