//! Trainer-ready line-delimited exports.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{ReviewTranscript, TuneError, Turn, UtRecord, UtTarget};
use crate::prompt::{CognitionVariant, RenderedPrompt, TemplateKind};
use crate::record::{read_jsonl, write_jsonl};

/// Single-turn instruction/output pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftPair {
    pub id: String,
    pub instruction: String,
    pub output: UtTarget,
}

/// Multi-turn review conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftConversation {
    pub id: String,
    pub causal_id: u32,
    pub converged: bool,
    pub turns: Vec<Turn>,
}

pub fn export_ut<W: Write>(records: &[UtRecord], writer: W) -> Result<usize, TuneError> {
    let lines: Vec<SftPair> = records
        .iter()
        .map(|r| SftPair {
            id: r.item_id.clone(),
            instruction: r.prompt.text.clone(),
            output: r.target,
        })
        .collect();
    write_jsonl(writer, &lines)?;
    Ok(lines.len())
}

pub fn import_ut<R: BufRead>(reader: R) -> Result<Vec<UtRecord>, TuneError> {
    let pairs: Vec<SftPair> = read_jsonl(reader)?;
    Ok(pairs
        .into_iter()
        .map(|p| UtRecord {
            item_id: p.id,
            prompt: RenderedPrompt {
                kind: TemplateKind::CognitionAssessment(CognitionVariant::Finetuning),
                text: p.instruction,
                injected_causal: None,
            },
            target: p.output,
        })
        .collect())
}

/// Writes transcripts as conversations. Non-converged transcripts are
/// refused unless `include_unconverged` is set.
pub fn export_st<W: Write>(
    transcripts: &[ReviewTranscript],
    include_unconverged: bool,
    writer: W,
) -> Result<usize, TuneError> {
    let unconverged = transcripts.iter().filter(|t| !t.converged).count();
    if unconverged > 0 && !include_unconverged {
        return Err(TuneError::Unconverged(unconverged));
    }
    let lines: Vec<SftConversation> = transcripts
        .iter()
        .map(|t| SftConversation {
            id: t.item_id.clone(),
            causal_id: t.causal_id,
            converged: t.converged,
            turns: t.turns.clone(),
        })
        .collect();
    write_jsonl(writer, &lines)?;
    Ok(lines.len())
}

pub fn import_st<R: BufRead>(reader: R) -> Result<Vec<ReviewTranscript>, TuneError> {
    let lines: Vec<SftConversation> = read_jsonl(reader)?;
    lines
        .into_iter()
        .map(|c| ReviewTranscript::from_turns(c.id, c.causal_id, c.converged, c.turns))
        .collect()
}
