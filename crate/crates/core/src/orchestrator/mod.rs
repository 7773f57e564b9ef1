//! Session lifecycle: joins participants into subgroups, routes messages
//! only within a subgroup, runs the relay agents on a fixed cadence, closes
//! questions at their deadline and keeps the append-only event log.
//!
//! A [`Session`] is a single-writer state machine. All time arguments are
//! session milliseconds; the session keeps a logical clock and stamps every
//! event with `max(requested, clock)` so the log is always time-ordered.

pub mod events;
pub mod replay;
pub mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conviction::{estimate, final_answer, AnswerSelection, ConvictionTracker, Estimator};
use crate::model::{validate_config, Author, Message, OptionLabel, PublicQuestion, Question, SessionConfig, SubgroupId, Violation};
use crate::partition::{partition, PartitionError, PartitionPlan};
use crate::relay::{distill, express, matchmake, observe, DestinationState, PropagationEvent, RelayBackend};

use events::{
    AnswerSelected, ConvictionUpdated, Event, EventRecord, MessagePosted, QuestionClosed, QuestionOpened, RelayExpressed, RelaySent,
    SessionCreated,
};
use report::{build_report, ForensicReport, QuestionRecord, DEFAULT_RATIONALE_K};

pub const MAX_MESSAGE_CHARS: usize = 2000;
/// Seconds-left marks at which participants get a deadline warning.
pub const DEADLINE_WARNINGS_S: [u64; 2] = [60, 10];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SessionState {
    Lobby,
    QuestionOpen { question_id: String, opened_ms: u64 },
    QuestionClosed,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrchestratorError {
    #[error("invalid session config: {0:?}")]
    ConfigInvalid(Vec<Violation>),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("unknown question {0}")]
    QuestionNotFound(String),
    #[error("{op} not allowed in state {state:?}")]
    BadState { op: &'static str, state: SessionState },
    #[error("message at {t_ms} ms is past the deadline {deadline_ms} ms")]
    DeadlinePassed { t_ms: u64, deadline_ms: u64 },
    #[error("participant {0} is not in this session")]
    NotJoined(String),
    #[error("invalid message: {0}")]
    MessageInvalid(&'static str),
}

/// Who a frame is delivered to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Recipient {
    Participant(String),
    Agent(String),
}

/// Server-to-client frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    Question { question: PublicQuestion, opened_ms: u64, deadline_ms: u64 },
    Message { message: Message },
    DeadlineWarning { question_id: String, seconds_left: u64 },
    Closed { question_id: String, selected_option: OptionLabel, no_signal: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub recipient: Recipient,
    pub frame: ServerFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloseOutcome {
    pub selection: AnswerSelection,
    pub correct: bool,
}

/// Runtime state of the open question.
struct OpenQuestion {
    question: Question,
    opened_ms: u64,
    deadline_ms: u64,
    tracker: ConvictionTracker,
    messages: Vec<Message>,
    transcripts: BTreeMap<SubgroupId, Vec<Message>>,
    /// Options with positive support from a member of the subgroup.
    member_support: BTreeMap<SubgroupId, BTreeSet<OptionLabel>>,
    network: BTreeMap<SubgroupId, DestinationState>,
    /// Question-relative time of the next relay cycle.
    next_cycle_ms: Option<u64>,
    /// (cited message, destination) pairs already relayed.
    sent: BTreeSet<(u64, SubgroupId)>,
    propagations: Vec<PropagationEvent>,
    warned: BTreeSet<u64>,
}

pub struct Session {
    id: String,
    config: SessionConfig,
    plan: PartitionPlan,
    state: SessionState,
    log: Vec<EventRecord>,
    clock_ms: u64,
    next_message_id: u64,
    estimator: Arc<dyn Estimator>,
    backend: Arc<dyn RelayBackend>,
    outbox: Vec<Delivery>,
    open: Option<OpenQuestion>,
    closed: BTreeMap<String, QuestionRecord>,
    dropped_relays: u64,
}

impl Session {
    /// Validates `config`, partitions the roster, and logs the session
    /// creation and subgroup assignments at time 0.
    pub fn create(
        id: impl Into<String>,
        config: SessionConfig,
        estimator: Arc<dyn Estimator>,
        backend: Arc<dyn RelayBackend>,
    ) -> Result<Self, OrchestratorError> {
        let violations = validate_config(&config);
        if !violations.is_empty() {
            return Err(OrchestratorError::ConfigInvalid(violations));
        }
        let plan = partition(&config.roster_ids(), &config)?;
        let mut session = Session {
            id: id.into(),
            config,
            plan,
            state: SessionState::Lobby,
            log: Vec::new(),
            clock_ms: 0,
            next_message_id: 0,
            estimator,
            backend,
            outbox: Vec::new(),
            open: None,
            closed: BTreeMap::new(),
            dropped_relays: 0,
        };
        let c = &session.config;
        let created = SessionCreated {
            session_id: session.id.clone(),
            roster: c.roster.clone(),
            question_ids: c.questions.iter().map(|q| q.id.clone()).collect(),
            subgroup_min: c.subgroup_min,
            subgroup_max: c.subgroup_max,
            subgroup_target: c.subgroup_target,
            conviction_half_life_s: c.conviction_half_life_s,
            relay_min_interval_s: c.relay_min_interval_s,
            relay_cadence_s: c.relay_cadence_s,
            estimator: c.estimator,
            relay_backend: c.relay_backend,
            rng_seed: c.rng_seed,
        };
        session.append(0, Event::SessionCreated(created));
        for g in session.plan.subgroups.clone() {
            session.append(0, Event::SubgroupAssigned(g));
        }
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn plan(&self) -> &PartitionPlan {
        &self.plan
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    pub fn log(&self) -> &[EventRecord] {
        &self.log
    }

    /// Relays that were dropped because their backend failed or the
    /// question had already closed.
    pub fn dropped_relays(&self) -> u64 {
        self.dropped_relays
    }

    /// Session time of the open question's deadline, if one is open.
    pub fn deadline_ms(&self) -> Option<u64> {
        self.open.as_ref().map(|q| q.deadline_ms)
    }

    pub fn drain_outbox(&mut self) -> Vec<Delivery> {
        std::mem::take(&mut self.outbox)
    }

    /// The event log as JSON Lines.
    pub fn export_event_log(&self) -> String {
        events::encode_jsonl(&self.log)
    }

    fn stamp(&mut self, t_ms: u64) -> u64 {
        self.clock_ms = self.clock_ms.max(t_ms);
        self.clock_ms
    }

    fn append(&mut self, t_ms: u64, event: Event) {
        let t_ms = self.stamp(t_ms);
        let seq = self.log.len() as u64;
        self.log.push(EventRecord { seq, t_ms, event });
    }

    fn bad_state(&self, op: &'static str) -> OrchestratorError {
        OrchestratorError::BadState { op, state: self.state.clone() }
    }

    fn deliver_to_subgroup(&mut self, subgroup: SubgroupId, frame: ServerFrame, include_agent: bool) {
        let Some(g) = self.plan.get(subgroup) else { return };
        let mut recipients: Vec<Recipient> = g.member_ids.iter().map(|m| Recipient::Participant(m.clone())).collect();
        if include_agent {
            recipients.push(Recipient::Agent(g.agent_id.clone()));
        }
        for recipient in recipients {
            self.outbox.push(Delivery { recipient, frame: frame.clone() });
        }
    }

    fn broadcast(&mut self, frame: ServerFrame) {
        let ids: Vec<SubgroupId> = self.plan.subgroups.iter().map(|g| g.id).collect();
        for id in ids {
            self.deliver_to_subgroup(id, frame.clone(), false);
        }
    }

    pub fn open_question(&mut self, question_id: &str, t_ms: u64) -> Result<QuestionOpened, OrchestratorError> {
        if !matches!(self.state, SessionState::Lobby | SessionState::QuestionClosed) {
            return Err(self.bad_state("open_question"));
        }
        let question = self.config.question(question_id).cloned().ok_or_else(|| OrchestratorError::QuestionNotFound(question_id.into()))?;
        if self.closed.contains_key(question_id) {
            return Err(self.bad_state("open_question"));
        }
        let opened_ms = self.stamp(t_ms);
        let deadline_ms = opened_ms + question.time_limit_ms();
        let subgroup_ids: Vec<SubgroupId> = self.plan.subgroups.iter().map(|g| g.id).collect();
        let opened = QuestionOpened { question: question.redacted(), opened_ms, deadline_ms };

        self.open = Some(OpenQuestion {
            tracker: ConvictionTracker::new(self.config.conviction_half_life_s, question.time_limit_ms(), &subgroup_ids),
            question,
            opened_ms,
            deadline_ms,
            messages: Vec::new(),
            transcripts: subgroup_ids.iter().map(|id| (*id, Vec::new())).collect(),
            member_support: BTreeMap::new(),
            network: subgroup_ids.iter().map(|id| (*id, DestinationState { subgroup_id: *id, ..Default::default() })).collect(),
            next_cycle_ms: self.config.relay_cadence_s.map(|c| (c * 1000.0).round().max(1.0) as u64),
            sent: BTreeSet::new(),
            propagations: Vec::new(),
            warned: BTreeSet::new(),
        });
        self.state = SessionState::QuestionOpen { question_id: question_id.into(), opened_ms };
        self.append(opened_ms, Event::QuestionOpened(opened.clone()));
        self.broadcast(ServerFrame::Question { question: opened.question.clone(), opened_ms, deadline_ms });
        Ok(opened)
    }

    /// Moves the clock forward, running any relay cycles and deadline
    /// warnings that fall due up to `t_ms` (never past the deadline).
    pub fn advance_to(&mut self, t_ms: u64) {
        let Some(open) = self.open.as_ref() else {
            self.stamp(t_ms);
            return;
        };
        let (opened, deadline) = (open.opened_ms, open.deadline_ms);
        let limit = t_ms.min(deadline);

        for s in DEADLINE_WARNINGS_S {
            let at = deadline.saturating_sub(s * 1000);
            let open = self.open.as_mut().expect("question open");
            if at >= opened && at <= limit && open.warned.insert(s) {
                let question_id = open.question.id.clone();
                self.stamp(at);
                self.broadcast(ServerFrame::DeadlineWarning { question_id, seconds_left: s });
            }
        }

        while let Some(next) = self.open.as_ref().and_then(|q| q.next_cycle_ms) {
            let at = opened + next;
            if at > limit {
                break;
            }
            self.run_relay_cycle(at);
            let cadence = self.config.relay_cadence_s.map(|c| (c * 1000.0).round().max(1.0) as u64).unwrap_or(u64::MAX);
            if let Some(q) = self.open.as_mut() {
                q.next_cycle_ms = next.checked_add(cadence);
            }
        }
        self.stamp(t_ms);
    }

    /// One observe/distill/matchmake/express pass for every agent, in
    /// subgroup id order.
    fn run_relay_cycle(&mut self, now_ms: u64) {
        let subgroup_ids: Vec<SubgroupId> = self.plan.subgroups.iter().map(|g| g.id).collect();
        let min_interval_ms = (self.config.relay_min_interval_s * 1000.0).round() as u64;
        for source in subgroup_ids {
            let open = self.open.as_ref().expect("question open");
            let rel_now = now_ms - open.opened_ms;
            let options = open.question.options.clone();
            let window = &open.transcripts[&source];
            let tracker = &open.tracker;
            let mut insights = observe(window, &|o| tracker.value_at(source, o, rel_now), &options, self.estimator.as_ref());
            insights.sort_by(|a, b| b.local_conviction.total_cmp(&a.local_conviction).then(a.option.cmp(&b.option)));

            let mut chosen = None;
            for insight in &insights {
                let payload = match distill(insight, source, window, self.backend.as_ref(), now_ms) {
                    Ok(p) => p,
                    Err(_) => {
                        self.dropped_relays += 1;
                        break;
                    }
                };
                let candidates: Vec<DestinationState> =
                    open.network.values().filter(|d| !open.sent.contains(&(payload.source_message_id, d.subgroup_id))).cloned().collect();
                if let Some(dest) = matchmake(&payload, &candidates, now_ms, min_interval_ms) {
                    chosen = Some((payload, dest));
                    break;
                }
            }
            let Some((payload, dest)) = chosen else { continue };

            let had_support = open.member_support.get(&dest).is_some_and(|s| s.contains(&payload.option));
            let dest_agent = self.plan.get(dest).map(|g| g.agent_id.clone()).unwrap_or_default();
            let deadline = open.deadline_ms;
            let question_id = open.question.id.clone();
            let (message, propagation) = match express(&payload, dest, &dest_agent, had_support, self.next_message_id, now_ms, deadline) {
                Ok(v) => v,
                Err(_) => {
                    self.dropped_relays += 1;
                    continue;
                }
            };
            self.next_message_id += 1;

            self.append(
                now_ms,
                Event::RelaySent(RelaySent { question_id: question_id.clone(), dest_subgroup_id: dest, payload: payload.clone() }),
            );
            self.append(
                now_ms,
                Event::RelayExpressed(RelayExpressed { question_id, message: message.clone(), propagation: propagation.clone() }),
            );
            let open = self.open.as_mut().expect("question open");
            open.sent.insert((payload.source_message_id, dest));
            let d = open.network.get_mut(&dest).expect("destination in network");
            d.last_relay_in_ms = Some(now_ms);
            d.options_seen.insert(payload.option);
            open.propagations.push(propagation);
            self.record_message(message);
        }
    }

    /// Appends the message to the transcript, delivers it to its subgroup
    /// and feeds its conviction events to the tracker.
    fn record_message(&mut self, message: Message) {
        let open = self.open.as_mut().expect("question open");
        let question_id = open.question.id.clone();
        let events = estimate(&message, &open.question.options, self.estimator.as_ref(), open.opened_ms);
        open.messages.push(message.clone());
        open.transcripts.entry(message.subgroup_id).or_default().push(message.clone());
        for e in &events {
            if !message.author.is_agent() {
                open.network.entry(e.subgroup_id).or_default().options_seen.insert(e.option);
                if e.strength > 0.0 {
                    open.member_support.entry(e.subgroup_id).or_default().insert(e.option);
                }
            }
            // events are stamped no later than the deadline and in clock order
            open.tracker.push(*e).expect("conviction events are ordered and within the deadline");
        }

        if !message.author.is_agent() {
            self.append(message.t_ms, Event::MessagePosted(MessagePosted { question_id: question_id.clone(), message: message.clone() }));
        }
        for event in events {
            self.append(message.t_ms, Event::ConvictionUpdated(ConvictionUpdated { question_id: question_id.clone(), event }));
        }
        self.deliver_to_subgroup(message.subgroup_id, ServerFrame::Message { message }, true);
    }

    pub fn post_message(&mut self, participant_id: &str, text: &str, t_ms: u64) -> Result<Message, OrchestratorError> {
        if text.trim().is_empty() {
            return Err(OrchestratorError::MessageInvalid("empty"));
        }
        if text.chars().count() > MAX_MESSAGE_CHARS {
            return Err(OrchestratorError::MessageInvalid("longer than 2000 characters"));
        }
        let subgroup_id = self.plan.subgroup_of(participant_id).ok_or_else(|| OrchestratorError::NotJoined(participant_id.into()))?;
        let Some(open) = self.open.as_ref() else {
            return Err(self.bad_state("post_message"));
        };
        let t = t_ms.max(self.clock_ms);
        if t > open.deadline_ms {
            return Err(OrchestratorError::DeadlinePassed { t_ms: t, deadline_ms: open.deadline_ms });
        }
        self.advance_to(t);
        let message = Message {
            id: self.next_message_id,
            subgroup_id,
            author: Author::Participant(participant_id.into()),
            text: text.to_string(),
            t_ms: t,
            relay_meta: None,
        };
        self.next_message_id += 1;
        self.record_message(message.clone());
        Ok(message)
    }

    /// Closes the open question: runs remaining relay cycles, reads the
    /// answer off the global series at the deadline (or at `t_ms` if the
    /// moderator closes early) and scores it.
    pub fn close_question(&mut self, t_ms: u64) -> Result<CloseOutcome, OrchestratorError> {
        if self.open.is_none() {
            return Err(self.bad_state("close_question"));
        }
        let t = t_ms.max(self.clock_ms);
        let deadline = self.open.as_ref().map(|q| q.deadline_ms).expect("question open");
        self.advance_to(t.min(deadline));
        let open = self.open.take().expect("question open");
        let evaluated_at_ms = t.min(open.deadline_ms) - open.opened_ms;
        let sentiment = open.tracker.snapshot(evaluated_at_ms);
        let selection = final_answer(&sentiment.global, evaluated_at_ms).expect("snapshot always has a sample at 0");
        let correct = selection.option == open.question.correct_option;
        let question_id = open.question.id.clone();

        self.append(
            t,
            Event::QuestionClosed(QuestionClosed {
                question_id: question_id.clone(),
                closed_ms: t,
                evaluated_at_ms,
                correct_option: open.question.correct_option,
            }),
        );
        self.append(t, Event::AnswerSelected(AnswerSelected { question_id: question_id.clone(), selection, correct }));
        self.closed.insert(
            question_id.clone(),
            QuestionRecord {
                question_id: question_id.clone(),
                selection,
                correct,
                evaluated_at_ms,
                half_life_s: self.config.conviction_half_life_s,
                sentiment,
                messages: open.messages,
                conviction: open.tracker.events().to_vec(),
                propagations: open.propagations,
            },
        );
        self.state = SessionState::QuestionClosed;
        self.broadcast(ServerFrame::Closed { question_id, selected_option: selection.option, no_signal: selection.no_signal });
        Ok(CloseOutcome { selection, correct })
    }

    /// Ends the session after the last question.
    pub fn finish(&mut self) -> Result<(), OrchestratorError> {
        match self.state {
            SessionState::QuestionClosed | SessionState::Lobby => {
                self.state = SessionState::Finished;
                Ok(())
            }
            _ => Err(self.bad_state("finish")),
        }
    }

    pub fn question_record(&self, question_id: &str) -> Option<&QuestionRecord> {
        self.closed.get(question_id)
    }

    pub fn generate_report(&self, question_id: &str) -> Result<ForensicReport, OrchestratorError> {
        self.generate_report_top_k(question_id, DEFAULT_RATIONALE_K)
    }

    pub fn generate_report_top_k(&self, question_id: &str, k: usize) -> Result<ForensicReport, OrchestratorError> {
        if self.config.question(question_id).is_none() {
            return Err(OrchestratorError::QuestionNotFound(question_id.into()));
        }
        self.closed.get(question_id).map(|r| build_report(r, k)).ok_or_else(|| self.bad_state("generate_report"))
    }

    /// Messages of the open question visible to one participant.
    pub fn visible_transcript(&self, participant_id: &str) -> Vec<Message> {
        let (Some(open), Some(g)) = (self.open.as_ref(), self.plan.subgroup_of(participant_id)) else {
            return Vec::new();
        };
        open.transcripts.get(&g).cloned().unwrap_or_default()
    }
}
