use std::collections::HashMap;
use std::sync::{Arc, Mutex, Weak};
use std::time::{Duration, Instant};

use tokio::sync::mpsc::UnboundedSender;

use csi_core::orchestrator::{Delivery, Recipient, Session, SessionState};

/// A session being served, with its wall clock and connected participants.
pub struct LiveSession {
    pub id: String,
    session: Mutex<Session>,
    started: Instant,
    /// Token → participant id.
    tokens: HashMap<String, String>,
    subscribers: Mutex<HashMap<String, UnboundedSender<String>>>,
}

impl LiveSession {
    pub fn new(session: Session, tokens: HashMap<String, String>) -> Self {
        Self { id: session.id().to_string(), session: Mutex::new(session), started: Instant::now(), tokens, subscribers: Mutex::default() }
    }

    /// Milliseconds since the session was created.
    pub fn now_ms(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    pub fn participant_for(&self, token: &str) -> Option<&str> {
        self.tokens.get(token).map(String::as_str)
    }

    pub fn subscribe(&self, participant: &str, tx: UnboundedSender<String>) {
        self.subscribers.lock().expect("subscriber lock").insert(participant.to_string(), tx);
    }

    pub fn unsubscribe(&self, participant: &str) {
        self.subscribers.lock().expect("subscriber lock").remove(participant);
    }

    /// Runs `f` against the session at the current time and fans out the
    /// frames it produced. Blocks; call from a blocking context.
    pub fn mutate<T>(&self, f: impl FnOnce(&mut Session, u64) -> T) -> T {
        let mut session = self.session.lock().expect("session lock");
        let out = f(&mut session, self.now_ms());
        let deliveries = session.drain_outbox();
        // still under the session lock, so frames leave in log order
        self.dispatch(deliveries);
        out
    }

    pub fn read<T>(&self, f: impl FnOnce(&Session) -> T) -> T {
        f(&self.session.lock().expect("session lock"))
    }

    fn dispatch(&self, deliveries: Vec<Delivery>) {
        let subscribers = self.subscribers.lock().expect("subscriber lock");
        for d in deliveries {
            let Recipient::Participant(p) = &d.recipient else { continue };
            if let Some(tx) = subscribers.get(p) {
                let text = serde_json::to_string(&d.frame).expect("frames serialize");
                let _ = tx.send(text);
            }
        }
    }

    /// Advances relay cycles and closes the open question once its
    /// deadline passes.
    pub fn tick(&self) {
        self.mutate(|s, now| match s.deadline_ms() {
            Some(deadline) if now >= deadline => {
                if let Err(e) = s.close_question(deadline) {
                    tracing::warn!(session = s.id(), "auto-close failed: {e}");
                }
            }
            Some(_) => s.advance_to(now),
            None => {}
        });
    }

    pub fn finished(&self) -> bool {
        self.read(|s| matches!(s.state(), SessionState::Finished))
    }
}

/// Ticks `live` every `period` until it is dropped or finished.
pub fn spawn_ticker(live: Weak<LiveSession>, period: Duration) {
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(period);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        loop {
            interval.tick().await;
            let Some(s) = live.upgrade() else { break };
            if s.finished() {
                break;
            }
            let s: Arc<LiveSession> = s;
            if tokio::task::spawn_blocking(move || s.tick()).await.is_err() {
                break;
            }
        }
    });
}
