//! The per-subgroup relay agent.
//!
//! Each cycle an agent looks at its subgroup's transcript, picks the best
//! supported argument, condenses it with a [`RelayBackend`], chooses a
//! destination subgroup with [`matchmake`], and voices the argument there
//! with [`express`]. Agents never add content of their own: the stub
//! backend forwards an excerpt of a participant message verbatim.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conviction::Estimator;
use crate::model::{Author, Message, OptionLabel, PropagationColor, RelayMeta, SubgroupId};

pub const SUMMARY_MAX_CHARS: usize = 280;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Insight {
    pub option: OptionLabel,
    pub argument_text: String,
    pub local_conviction: f64,
    pub first_seen_ms: u64,
    /// The cited message first.
    pub source_message_ids: Vec<u64>,
}

impl Insight {
    pub fn cited_message_id(&self) -> u64 {
        self.source_message_ids[0]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayPayload {
    pub source_subgroup_id: SubgroupId,
    pub option: OptionLabel,
    pub summary_text: String,
    pub created_ms: u64,
    pub source_message_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagationEvent {
    pub source_subgroup_id: SubgroupId,
    pub dest_subgroup_id: SubgroupId,
    pub option: OptionLabel,
    pub color: PropagationColor,
    pub t_ms: u64,
    /// Id of the agent message that carried the payload.
    pub message_id: u64,
}

/// Finds at most one insight per option with positive local conviction in
/// a transcript window. Only participant messages are cited; each insight
/// cites its strongest supporting message (earliest on ties).
///
/// `local_conviction` gives the subgroup's current sentiment per option.
pub fn observe(
    window: &[Message],
    local_conviction: &dyn Fn(OptionLabel) -> f64,
    options: &[OptionLabel],
    estimator: &dyn Estimator,
) -> Vec<Insight> {
    let mut support: BTreeMap<OptionLabel, Vec<(f64, &Message)>> = BTreeMap::new();
    for m in window.iter().filter(|m| !m.author.is_agent()) {
        for (opt, s) in estimator.score(&m.text, options) {
            if s > 0.0 {
                support.entry(opt).or_default().push((s, m));
            }
        }
    }

    support
        .into_iter()
        .filter_map(|(option, msgs)| {
            let local = local_conviction(option);
            if local <= 0.0 {
                return None;
            }
            let (_, cited) = msgs.iter().copied().fold(None::<(f64, &Message)>, |best, cur| match best {
                Some(b) if b.0 >= cur.0 => Some(b),
                _ => Some(cur),
            })?;
            let mut ids = vec![cited.id];
            ids.extend(msgs.iter().map(|(_, m)| m.id).filter(|id| *id != cited.id));
            Some(Insight {
                option,
                argument_text: cited.text.clone(),
                local_conviction: local,
                first_seen_ms: msgs.iter().map(|(_, m)| m.t_ms).min().unwrap_or(cited.t_ms),
                source_message_ids: ids,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillRequest {
    pub transcript: Vec<TranscriptLine>,
    pub option: OptionLabel,
    pub insight_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub author: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillResponse {
    pub summary_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RelayError {
    #[error("distillation failed: {0}")]
    DistillFailed(String),
    #[error("relay at {t_ms} ms is past the deadline {deadline_ms} ms")]
    RelayAfterDeadline { t_ms: u64, deadline_ms: u64 },
    #[error("relay destination equals its source subgroup {0}")]
    SelfRelay(SubgroupId),
}

/// Produces the summary an agent carries to another subgroup.
pub trait RelayBackend: Send + Sync {
    fn distill(&self, request: &DistillRequest) -> Result<DistillResponse, RelayError>;
}

/// Forwards the cited message, cut to [`SUMMARY_MAX_CHARS`] at a word boundary.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubBackend;

impl RelayBackend for StubBackend {
    fn distill(&self, request: &DistillRequest) -> Result<DistillResponse, RelayError> {
        Ok(DistillResponse { summary_text: truncate_at_word(&request.insight_text, SUMMARY_MAX_CHARS).to_string() })
    }
}

/// Longest prefix of at most `max` characters that ends on a word boundary.
pub fn truncate_at_word(text: &str, max: usize) -> &str {
    let Some((cut, _)) = text.char_indices().nth(max) else { return text };
    let head = &text[..cut];
    if text[cut..].starts_with(char::is_whitespace) {
        return head.trim_end();
    }
    match head.rfind(char::is_whitespace) {
        Some(ws) => head[..ws].trim_end(),
        None => head,
    }
}

pub fn distill(
    insight: &Insight,
    source_subgroup_id: SubgroupId,
    transcript: &[Message],
    backend: &dyn RelayBackend,
    now_ms: u64,
) -> Result<RelayPayload, RelayError> {
    let request = DistillRequest {
        transcript: transcript.iter().map(|m| TranscriptLine { author: m.author.id().to_string(), text: m.text.clone() }).collect(),
        option: insight.option,
        insight_text: insight.argument_text.clone(),
    };
    let response = backend.distill(&request)?;
    if response.summary_text.trim().is_empty() {
        return Err(RelayError::DistillFailed("empty summary".into()));
    }
    Ok(RelayPayload {
        source_subgroup_id,
        option: insight.option,
        summary_text: response.summary_text,
        created_ms: now_ms,
        source_message_id: insight.cited_message_id(),
    })
}

/// What matchmaking knows about one subgroup.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DestinationState {
    pub subgroup_id: SubgroupId,
    /// Session time of the last relay into this subgroup.
    pub last_relay_in_ms: Option<u64>,
    /// Options argued locally or already relayed in.
    pub options_seen: BTreeSet<OptionLabel>,
}

/// Chooses where a payload goes.
///
/// Eligible destinations exclude the source and anything that received a
/// relay less than `min_interval_ms` ago. Score is
/// `2 * [option unseen] + staleness`, where staleness in `[0, 1)` ranks the
/// longest-idle destination highest. Ties go to the lowest subgroup id.
pub fn matchmake(payload: &RelayPayload, network: &[DestinationState], now_ms: u64, min_interval_ms: u64) -> Option<SubgroupId> {
    let eligible: Vec<&DestinationState> = network
        .iter()
        .filter(|d| d.subgroup_id != payload.source_subgroup_id)
        .filter(|d| d.last_relay_in_ms.is_none_or(|t| now_ms.saturating_sub(t) >= min_interval_ms))
        .collect();
    if eligible.is_empty() {
        return None;
    }

    // dense rank of last_relay_in, most recent first; never-relayed is oldest
    let mut recency: Vec<Option<u64>> = eligible.iter().map(|d| d.last_relay_in_ms).collect();
    recency.sort_unstable_by(|a, b| b.cmp(a));
    recency.dedup();
    let levels = recency.len() as f64;

    eligible
        .iter()
        .map(|d| {
            let rank = recency.iter().position(|r| *r == d.last_relay_in_ms).unwrap_or(0) as f64;
            let novelty = if d.options_seen.contains(&payload.option) { 0.0 } else { 2.0 };
            (novelty + rank / levels, d.subgroup_id)
        })
        .fold(None::<(f64, SubgroupId)>, |best, cur| match best {
            Some(b) if b.0 > cur.0 || (b.0 == cur.0 && b.1 < cur.1) => Some(b),
            _ => Some(cur),
        })
        .map(|(_, id)| id)
}

/// Text an agent posts when voicing a relayed argument.
pub fn relay_text(option: OptionLabel, summary: &str) -> String {
    format!("Another group thinks {option}: {summary}")
}

/// Color of a relay into a subgroup given whether any of its members had
/// already argued for the option.
pub fn relay_color(dest_had_member_support: bool) -> PropagationColor {
    if dest_had_member_support {
        PropagationColor::Reinforcing
    } else {
        PropagationColor::Introducing
    }
}

/// Builds the agent message voicing `payload` in `dest` along with the
/// matching propagation record. The message id is assigned by the caller.
pub fn express(
    payload: &RelayPayload,
    dest: SubgroupId,
    dest_agent_id: &str,
    dest_had_member_support: bool,
    message_id: u64,
    now_ms: u64,
    deadline_ms: u64,
) -> Result<(Message, PropagationEvent), RelayError> {
    if dest == payload.source_subgroup_id {
        return Err(RelayError::SelfRelay(dest));
    }
    if now_ms > deadline_ms {
        return Err(RelayError::RelayAfterDeadline { t_ms: now_ms, deadline_ms });
    }
    let color = relay_color(dest_had_member_support);
    let message = Message {
        id: message_id,
        subgroup_id: dest,
        author: Author::Agent(dest_agent_id.to_string()),
        text: relay_text(payload.option, &payload.summary_text),
        t_ms: now_ms,
        relay_meta: Some(RelayMeta { source_subgroup_id: payload.source_subgroup_id, option: payload.option, color }),
    };
    let event = PropagationEvent {
        source_subgroup_id: payload.source_subgroup_id,
        dest_subgroup_id: dest,
        option: payload.option,
        color,
        t_ms: now_ms,
        message_id,
    };
    Ok((message, event))
}
