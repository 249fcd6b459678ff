//! Acc_known / Acc_unknown / F1 accounting.
//!
//! F1 is the harmonic mean of the two accuracies. This definition
//! reproduces the published result tables to one decimal.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EvalError, EvalRecord};
use crate::record::{Label, PostfixTag, ResponseClass};

/// Harmonic mean of two percentages; zero when both are zero.
pub fn harmonic_f1(acc_known: f64, acc_unknown: f64) -> f64 {
    let sum = acc_known + acc_unknown;
    if sum == 0.0 {
        0.0
    } else {
        2.0 * acc_known * acc_unknown / sum
    }
}

/// Rounds half away from zero to one decimal, as printed in result tables.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scoring {
    /// Answer graded against golds; unknown items scored by rejection.
    Answer,
    /// Sufficiency tag compared with the label.
    Postfix,
}

/// Percent breakdown of responses to known items.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnownPortions {
    pub correct: f64,
    pub wrong: f64,
    pub rejected: f64,
}

impl KnownPortions {
    pub fn sum(&self) -> f64 {
        self.correct + self.wrong + self.rejected
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scoring: Scoring,
    /// Percent; `None` when there are no known records.
    pub acc_known: Option<f64>,
    pub acc_unknown: Option<f64>,
    pub f1: Option<f64>,
    pub known_portions: Option<KnownPortions>,
    pub n_known: usize,
    pub n_unknown: usize,
    /// Requests that failed and were left out of every denominator.
    pub failed_requests: usize,
    pub run_fingerprint: String,
}

fn percent(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

fn fingerprint(records: &[EvalRecord], scoring: Scoring) -> String {
    let mut keyed: Vec<_> = records
        .iter()
        .map(|r| (r.item_id.as_str(), r.label, r.response_text.as_str()))
        .collect();
    keyed.sort();
    let mut h = Sha256::new();
    h.update(format!("{scoring:?}"));
    for (id, label, text) in keyed {
        for part in [id, &label.to_string(), text] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
    }
    hex::encode(&h.finalize()[..8])
}

/// Aggregates records. Postfix scoring applies when every record carries a
/// parsed tag; mixing tagged and untagged records is an error.
pub fn compute_metrics(records: &[EvalRecord]) -> Result<MetricsReport, EvalError> {
    let tagged = records.iter().filter(|r| r.postfix.is_some()).count();
    let scoring = match tagged {
        0 => Scoring::Answer,
        n if n == records.len() => Scoring::Postfix,
        _ => return Err(EvalError::MixedScoring),
    };
    let known: Vec<_> = records.iter().filter(|r| r.label == Label::Known).collect();
    let unknown: Vec<_> = records.iter().filter(|r| r.label == Label::Unknown).collect();
    let count = |set: &[&EvalRecord], class| set.iter().filter(|r| r.class == class).count();

    let (hit_known, hit_unknown) = match scoring {
        Scoring::Answer => (
            count(&known, ResponseClass::Correct),
            count(&unknown, ResponseClass::Rejected),
        ),
        Scoring::Postfix => {
            let tag_hits = |set: &[&EvalRecord]| {
                set.iter()
                    .filter(|r| r.postfix == Some(PostfixTag::expected_for(r.label)))
                    .count()
            };
            (tag_hits(&known), tag_hits(&unknown))
        }
    };
    let acc_known = percent(hit_known, known.len());
    let acc_unknown = percent(hit_unknown, unknown.len());
    let f1 = match (acc_known, acc_unknown) {
        (Some(k), Some(u)) => Some(harmonic_f1(k, u)),
        _ => None,
    };
    let known_portions = (!known.is_empty()).then(|| KnownPortions {
        correct: 100.0 * count(&known, ResponseClass::Correct) as f64 / known.len() as f64,
        wrong: 100.0 * count(&known, ResponseClass::Wrong) as f64 / known.len() as f64,
        rejected: 100.0 * count(&known, ResponseClass::Rejected) as f64 / known.len() as f64,
    });
    Ok(MetricsReport {
        scoring,
        acc_known,
        acc_unknown,
        f1,
        known_portions,
        n_known: known.len(),
        n_unknown: unknown.len(),
        failed_requests: 0,
        run_fingerprint: fingerprint(records, scoring),
    })
}

fn cell(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}", round1(v)))
}

impl MetricsReport {
    /// Plain-text table: accuracies and F1, then the known-item portions.
    pub fn to_table(&self) -> String {
        let title = match self.scoring {
            Scoring::Answer => "QA Uncertainty-Recognition",
            Scoring::Postfix => "Postfix Uncertainty-Recognition",
        };
        let mut out = String::new();
        let _ = writeln!(out, "{title}");
        let _ = writeln!(out, "{:>10} {:>12} {:>8}", "Acc_known", "Acc_unknown", "F1");
        let _ = writeln!(
            out,
            "{:>10} {:>12} {:>8}",
            cell(self.acc_known),
            cell(self.acc_unknown),
            cell(self.f1)
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "Known-question responses (%)");
        let _ = writeln!(out, "{:>10} {:>12} {:>8}", "Cor.", "Wro.", "Unk.");
        let p = self.known_portions;
        let _ = writeln!(
            out,
            "{:>10} {:>12} {:>8}",
            cell(p.map(|p| p.correct)),
            cell(p.map(|p| p.wrong)),
            cell(p.map(|p| p.rejected))
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "n_known={} n_unknown={} failed_requests={} fingerprint={}",
            self.n_known, self.n_unknown, self.failed_requests, self.run_fingerprint
        );
        out
    }
}
