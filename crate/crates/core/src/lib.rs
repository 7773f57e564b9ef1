//! Conversational swarm deliberation engine.
//!
//! A large group is split into small subgroups ([`partition`]), each with a
//! relay agent ([`relay`]) that carries well-supported arguments to other
//! subgroups. Conviction for each answer option is tracked from the
//! conversation ([`conviction`]) and the strongest option at the deadline
//! is the group's answer. [`orchestrator`] runs sessions and keeps the
//! replayable event log, [`baselines`] holds the individual and
//! wisdom-of-crowd statistics, and [`sim`] drives synthetic participants
//! through the whole pipeline.

pub mod baselines;
pub mod conviction;
#[cfg(feature = "llm")]
pub mod llm;
pub mod model;
pub mod orchestrator;
pub mod partition;
pub mod relay;
pub mod sim;
