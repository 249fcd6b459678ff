use std::collections::BTreeSet;

use crate::record::{PostfixTag, ResponseClass};
use crate::text::normalize;

const REJECTION_PHRASE: &str = "not provided";

/// True when the normalized response contains the words "not provided".
pub fn detect_rejection(response: &str) -> bool {
    format!(" {} ", normalize(response)).contains(&format!(" {REJECTION_PHRASE} "))
}

/// True when some normalized gold answer is a substring of the normalized
/// response.
pub fn matches_gold(response: &str, golds: &BTreeSet<String>) -> bool {
    let response = normalize(response);
    golds.iter().map(|g| normalize(g)).any(|g| !g.is_empty() && response.contains(&g))
}

pub fn classify_known(response: &str, golds: &BTreeSet<String>) -> ResponseClass {
    if detect_rejection(response) {
        ResponseClass::Rejected
    } else if matches_gold(response, golds) {
        ResponseClass::Correct
    } else {
        ResponseClass::Wrong
    }
}

pub fn classify_unknown(response: &str) -> ResponseClass {
    if detect_rejection(response) {
        ResponseClass::Rejected
    } else {
        ResponseClass::Hallucinated
    }
}

/// The last `<Sufficient>` or `<Insufficient>` tag, case-insensitive.
pub fn parse_postfix(response: &str) -> PostfixTag {
    let lower = response.to_ascii_lowercase();
    let sufficient = lower.rfind("<sufficient>");
    let insufficient = lower.rfind("<insufficient>");
    match (sufficient, insufficient) {
        (None, None) => PostfixTag::Missing,
        (Some(_), None) => PostfixTag::Sufficient,
        (None, Some(_)) => PostfixTag::Insufficient,
        (Some(s), Some(i)) if s > i => PostfixTag::Sufficient,
        (Some(_), Some(_)) => PostfixTag::Insufficient,
    }
}
