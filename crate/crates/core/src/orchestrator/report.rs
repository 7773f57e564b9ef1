//! Forensic reports: why a question was answered the way it was.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::conviction::{AnswerSelection, ConvictionEvent, SentimentSet};
use crate::model::Message;
use crate::relay::PropagationEvent;

pub const DEFAULT_RATIONALE_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleEntry {
    pub message_id: u64,
    pub text: String,
    /// Decayed contribution of the message to the winning option at evaluation time.
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForensicReport {
    pub question_id: String,
    pub selection: AnswerSelection,
    pub correct: bool,
    pub rationale: Vec<RationaleEntry>,
    pub rationale_text: String,
    pub sentiment: SentimentSet,
    pub propagation_events: Vec<PropagationEvent>,
}

/// Everything recorded about one closed question.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionRecord {
    pub question_id: String,
    pub selection: AnswerSelection,
    pub correct: bool,
    pub evaluated_at_ms: u64,
    pub half_life_s: f64,
    pub sentiment: SentimentSet,
    pub messages: Vec<Message>,
    pub conviction: Vec<ConvictionEvent>,
    pub propagations: Vec<PropagationEvent>,
}

/// Top-`k` participant messages by decayed contribution to the winning
/// option, deduplicated by text, strongest first (earlier message on ties).
pub fn rationale(record: &QuestionRecord, k: usize) -> Vec<RationaleEntry> {
    if record.selection.no_signal {
        return Vec::new();
    }
    let half_life_ms = record.half_life_s * 1000.0;
    let at = record.evaluated_at_ms;
    let participant: BTreeMap<u64, &Message> = record.messages.iter().filter(|m| !m.author.is_agent()).map(|m| (m.id, m)).collect();

    let mut best_by_text: BTreeMap<&str, RationaleEntry> = BTreeMap::new();
    for e in &record.conviction {
        if e.option != record.selection.option || e.strength <= 0.0 || e.t_ms > at {
            continue;
        }
        let Some(m) = participant.get(&e.source_message_id) else { continue };
        let contribution = e.strength * (-((at - e.t_ms) as f64) / half_life_ms).exp2();
        let entry = RationaleEntry { message_id: m.id, text: m.text.clone(), contribution };
        match best_by_text.get(m.text.as_str()) {
            Some(prev) if prev.contribution >= contribution => {}
            _ => {
                best_by_text.insert(m.text.as_str(), entry);
            }
        }
    }

    let mut entries: Vec<RationaleEntry> = best_by_text.into_values().collect();
    entries.sort_by(|a, b| b.contribution.total_cmp(&a.contribution).then(a.message_id.cmp(&b.message_id)));
    entries.truncate(k);
    entries
}

/// One line per cited message: `[#<id>] <text>`.
pub fn render_rationale(entries: &[RationaleEntry]) -> String {
    entries.iter().map(|e| format!("[#{}] {}", e.message_id, e.text)).collect::<Vec<_>>().join("\n")
}

pub fn build_report(record: &QuestionRecord, k: usize) -> ForensicReport {
    let rationale = rationale(record, k);
    ForensicReport {
        question_id: record.question_id.clone(),
        selection: record.selection,
        correct: record.correct,
        rationale_text: render_rationale(&rationale),
        rationale,
        sentiment: record.sentiment.clone(),
        propagation_events: record.propagations.clone(),
    }
}
