//! Append-only session event log and its JSON Lines encoding.
//!
//! Every record is `{seq, t_ms, kind, payload}`. Encoding is canonical:
//! importing an exported log and exporting it again is byte-identical.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conviction::{AnswerSelection, ConvictionEvent};
use crate::model::{EstimatorKind, Message, OptionLabel, Participant, PublicQuestion, RelayBackendKind, Subgroup, SubgroupId};
use crate::relay::{PropagationEvent, RelayPayload};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub roster: Vec<Participant>,
    pub question_ids: Vec<String>,
    pub subgroup_min: usize,
    pub subgroup_max: usize,
    pub subgroup_target: usize,
    pub conviction_half_life_s: f64,
    pub relay_min_interval_s: f64,
    pub relay_cadence_s: Option<f64>,
    pub estimator: EstimatorKind,
    pub relay_backend: RelayBackendKind,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionOpened {
    pub question: PublicQuestion,
    pub opened_ms: u64,
    pub deadline_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessagePosted {
    pub question_id: String,
    pub message: Message,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvictionUpdated {
    pub question_id: String,
    pub event: ConvictionEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaySent {
    pub question_id: String,
    pub dest_subgroup_id: SubgroupId,
    pub payload: RelayPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayExpressed {
    pub question_id: String,
    pub message: Message,
    pub propagation: PropagationEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionClosed {
    pub question_id: String,
    pub closed_ms: u64,
    /// Question-relative time at which the answer was read off the series.
    pub evaluated_at_ms: u64,
    pub correct_option: OptionLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSelected {
    pub question_id: String,
    pub selection: AnswerSelection,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    SessionCreated(SessionCreated),
    SubgroupAssigned(Subgroup),
    QuestionOpened(QuestionOpened),
    MessagePosted(MessagePosted),
    ConvictionUpdated(ConvictionUpdated),
    RelaySent(RelaySent),
    RelayExpressed(RelayExpressed),
    QuestionClosed(QuestionClosed),
    AnswerSelected(AnswerSelected),
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::SessionCreated(_) => "session_created",
            Event::SubgroupAssigned(_) => "subgroup_assigned",
            Event::QuestionOpened(_) => "question_opened",
            Event::MessagePosted(_) => "message_posted",
            Event::ConvictionUpdated(_) => "conviction_updated",
            Event::RelaySent(_) => "relay_sent",
            Event::RelayExpressed(_) => "relay_expressed",
            Event::QuestionClosed(_) => "question_closed",
            Event::AnswerSelected(_) => "answer_selected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub t_ms: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}: sequence {seq} does not follow {prev}")]
    Sequence { line: usize, seq: u64, prev: u64 },
    #[error("line {line}: time {t_ms} goes backwards from {prev}")]
    Time { line: usize, t_ms: u64, prev: u64 },
}

/// Encodes records as JSON Lines, one record per line.
pub fn encode_jsonl(records: &[EventRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("event records always serialize"));
        out.push('\n');
    }
    out
}

/// Parses a JSON Lines log and checks that it is totally ordered by
/// `(t_ms, seq)` with dense sequence numbers.
pub fn decode_jsonl(text: &str) -> Result<Vec<EventRecord>, LogError> {
    let mut out: Vec<EventRecord> = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line_no = i + 1;
        let rec: EventRecord = serde_json::from_str(line).map_err(|source| LogError::Json { line: line_no, source })?;
        if let Some(prev) = out.last() {
            if rec.seq != prev.seq + 1 {
                return Err(LogError::Sequence { line: line_no, seq: rec.seq, prev: prev.seq });
            }
            if rec.t_ms < prev.t_ms {
                return Err(LogError::Time { line: line_no, t_ms: rec.t_ms, prev: prev.t_ms });
            }
        }
        out.push(rec);
    }
    Ok(out)
}
