//! Rebuilds question outcomes from an exported event log.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::events::{Event, EventRecord};
use super::report::{build_report, ForensicReport, QuestionRecord};
use crate::conviction::{estimate, final_answer, AnswerSelection, ConvictionError, ConvictionTracker, Estimator};
use crate::model::{Message, OptionLabel, PropagationColor, PublicQuestion, Subgroup, SubgroupId};
use crate::relay::{relay_color, PropagationEvent};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("seq {seq}: {what}")]
    Malformed { seq: u64, what: &'static str },
    #[error("seq {seq}: {source}")]
    Conviction { seq: u64, source: ConvictionError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayedQuestion {
    pub record: QuestionRecord,
    /// The selection stored in the log, if the log reached `answer_selected`.
    pub logged_selection: Option<AnswerSelection>,
    pub logged_correct: Option<bool>,
    pub report: ForensicReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub session_id: String,
    pub subgroups: Vec<Subgroup>,
    pub questions: Vec<ReplayedQuestion>,
}

struct Pending {
    question: PublicQuestion,
    opened_ms: u64,
    tracker: ConvictionTracker,
    messages: Vec<Message>,
    propagations: Vec<PropagationEvent>,
}

/// Replays a log. With `estimator` set, conviction is recomputed from
/// message text instead of taken from `conviction_updated` records.
pub fn replay(records: &[EventRecord], estimator: Option<&dyn Estimator>, rationale_k: usize) -> Result<Replay, ReplayError> {
    let mut session_id = String::new();
    let mut half_life_s = 0.0;
    let mut subgroups = Vec::new();
    let mut pending: Option<Pending> = None;
    let mut closing: Option<QuestionRecord> = None;
    let mut questions = Vec::new();

    let malformed = |seq, what| ReplayError::Malformed { seq, what };

    for rec in records {
        let seq = rec.seq;
        match &rec.event {
            Event::SessionCreated(c) => {
                session_id = c.session_id.clone();
                half_life_s = c.conviction_half_life_s;
            }
            Event::SubgroupAssigned(g) => subgroups.push(g.clone()),
            Event::QuestionOpened(o) => {
                let ids: Vec<SubgroupId> = subgroups.iter().map(|g: &Subgroup| g.id).collect();
                pending = Some(Pending {
                    tracker: ConvictionTracker::new(half_life_s, o.deadline_ms - o.opened_ms, &ids),
                    question: o.question.clone(),
                    opened_ms: o.opened_ms,
                    messages: Vec::new(),
                    propagations: Vec::new(),
                });
            }
            Event::MessagePosted(p) => {
                let q = pending.as_mut().ok_or(malformed(seq, "message outside an open question"))?;
                push_message(q, &p.message, estimator, seq)?;
            }
            Event::RelayExpressed(e) => {
                let q = pending.as_mut().ok_or(malformed(seq, "relay outside an open question"))?;
                q.propagations.push(e.propagation.clone());
                push_message(q, &e.message, estimator, seq)?;
            }
            Event::ConvictionUpdated(c) => {
                let q = pending.as_mut().ok_or(malformed(seq, "conviction outside an open question"))?;
                if estimator.is_none() {
                    q.tracker.push(c.event).map_err(|source| ReplayError::Conviction { seq, source })?;
                }
            }
            Event::RelaySent(_) => {}
            Event::QuestionClosed(c) => {
                let q = pending.take().ok_or(malformed(seq, "close without an open question"))?;
                let sentiment = q.tracker.snapshot(c.evaluated_at_ms);
                let selection =
                    final_answer(&sentiment.global, c.evaluated_at_ms).map_err(|source| ReplayError::Conviction { seq, source })?;
                closing = Some(QuestionRecord {
                    question_id: q.question.id.clone(),
                    selection,
                    correct: selection.option == c.correct_option,
                    evaluated_at_ms: c.evaluated_at_ms,
                    half_life_s,
                    sentiment,
                    messages: q.messages,
                    conviction: q.tracker.events().to_vec(),
                    propagations: q.propagations,
                });
            }
            Event::AnswerSelected(a) => {
                let record = closing.take().ok_or(malformed(seq, "answer without a closed question"))?;
                questions.push(ReplayedQuestion {
                    report: build_report(&record, rationale_k),
                    record,
                    logged_selection: Some(a.selection),
                    logged_correct: Some(a.correct),
                });
            }
        }
    }
    if let Some(record) = closing {
        questions.push(ReplayedQuestion {
            report: build_report(&record, rationale_k),
            record,
            logged_selection: None,
            logged_correct: None,
        });
    }
    Ok(Replay { session_id, subgroups, questions })
}

fn push_message(q: &mut Pending, message: &Message, estimator: Option<&dyn Estimator>, seq: u64) -> Result<(), ReplayError> {
    q.messages.push(message.clone());
    if let Some(est) = estimator {
        for e in estimate(message, &q.question.options, est, q.opened_ms) {
            q.tracker.push(e).map_err(|source| ReplayError::Conviction { seq, source })?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColorCheck {
    pub message_id: u64,
    pub stored: PropagationColor,
    pub recomputed: PropagationColor,
}

/// Recomputes every relay's color from the log alone: a relay is
/// reinforcing iff a participant in the destination had already produced
/// positive conviction for the option during that question.
pub fn recompute_colors(records: &[EventRecord]) -> Vec<ColorCheck> {
    let mut participant_msgs: BTreeSet<u64> = BTreeSet::new();
    let mut support: BTreeMap<SubgroupId, BTreeSet<OptionLabel>> = BTreeMap::new();
    let mut out = Vec::new();
    for rec in records {
        match &rec.event {
            Event::QuestionOpened(_) => {
                participant_msgs.clear();
                support.clear();
            }
            Event::MessagePosted(p) if !p.message.author.is_agent() => {
                participant_msgs.insert(p.message.id);
            }
            Event::ConvictionUpdated(c) if c.event.strength > 0.0 && participant_msgs.contains(&c.event.source_message_id) => {
                support.entry(c.event.subgroup_id).or_default().insert(c.event.option);
            }
            Event::RelayExpressed(e) => {
                let p = &e.propagation;
                let had = support.get(&p.dest_subgroup_id).is_some_and(|s| s.contains(&p.option));
                out.push(ColorCheck { message_id: p.message_id, stored: p.color, recomputed: relay_color(had) });
            }
            _ => {}
        }
    }
    out
}
