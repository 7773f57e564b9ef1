//! Conviction tracking.
//!
//! Messages are scored into signed per-option [`ConvictionEvent`]s by an
//! [`Estimator`]. Events decay exponentially with a configurable half-life
//! and are summed per subgroup; the global series is the sum over
//! subgroups. At the deadline the option with the largest global value is
//! the group's answer.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Message, OptionLabel, SubgroupId};

pub const SAMPLE_CADENCE_MS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvictionEvent {
    pub subgroup_id: SubgroupId,
    pub option: OptionLabel,
    pub strength: f64,
    /// Milliseconds since the question opened.
    pub t_ms: u64,
    pub source_message_id: u64,
}

impl ConvictionEvent {
    pub fn scaled(self, c: f64) -> Self {
        Self { strength: self.strength * c, ..self }
    }
}

/// Scores free text into per-option support in `[-1, 1]`.
pub trait Estimator: Send + Sync {
    fn score(&self, text: &str, options: &[OptionLabel]) -> Vec<(OptionLabel, f64)>;
}

/// Rule-table estimator keyed on short cue phrases that precede an option
/// letter. Deliberately simple; see [`LexicalEstimator::RULES`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalEstimator;

impl LexicalEstimator {
    /// Cue phrase (lowercase words immediately before the option letter) and
    /// the strength it assigns.
    pub const RULES: &'static [(&'static [&'static str], f64)] = &[
        (&["not"], -1.0),
        (&["rule", "out"], -1.0),
        (&["ruled", "out"], -1.0),
        (&["ruling", "out"], -1.0),
        (&["vote"], 1.0),
        (&["vote", "for"], 1.0),
        (&["answer"], 1.0),
        (&["answer", "is"], 1.0),
        (&["think"], 1.0),
        (&["thinks"], 1.0),
        (&["think", "it's"], 1.0),
        (&["think", "it", "is"], 1.0),
        (&["maybe"], 0.4),
        (&["could", "be"], 0.4),
        (&["might", "be"], 0.4),
    ];
}

fn trim_token(raw: &str) -> &str {
    raw.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'').trim_matches('\'')
}

/// Option letters standing alone as a token, e.g. `H`, `(H)` or `H.`.
pub fn option_token(raw: &str) -> Option<OptionLabel> {
    let t = trim_token(raw);
    let mut chars = t.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => OptionLabel::from_char(c),
        _ => None,
    }
}

impl Estimator for LexicalEstimator {
    fn score(&self, text: &str, options: &[OptionLabel]) -> Vec<(OptionLabel, f64)> {
        let raw: Vec<&str> = text.split_whitespace().collect();
        let lower: Vec<String> = raw.iter().map(|t| trim_token(t).to_lowercase()).collect();
        let mut best: BTreeMap<OptionLabel, f64> = BTreeMap::new();

        for (i, tok) in raw.iter().enumerate() {
            let Some(opt) = option_token(tok) else { continue };
            if !options.contains(&opt) {
                continue;
            }
            for (cue, strength) in Self::RULES {
                if cue.len() > i || !lower[i - cue.len()..i].iter().zip(cue.iter()).all(|(a, b)| a == b) {
                    continue;
                }
                let slot = best.entry(opt).or_insert(0.0);
                // strongest magnitude wins; on equal magnitude a rule-out wins
                if strength.abs() > slot.abs() || (strength.abs() == slot.abs() && *strength < *slot) {
                    *slot = *strength;
                }
            }
        }
        best.into_iter().filter(|(_, s)| *s != 0.0).collect()
    }
}

/// Turns one message into conviction events. `opened_ms` is the session
/// time at which the question opened.
pub fn estimate(message: &Message, options: &[OptionLabel], estimator: &dyn Estimator, opened_ms: u64) -> Vec<ConvictionEvent> {
    estimator
        .score(&message.text, options)
        .into_iter()
        .map(|(option, strength)| ConvictionEvent {
            subgroup_id: message.subgroup_id,
            option,
            strength: strength.clamp(-1.0, 1.0),
            t_ms: message.t_ms.saturating_sub(opened_ms),
            source_message_id: message.id,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    Global,
    Subgroup(SubgroupId),
}

impl Serialize for Scope {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Scope::Global => s.serialize_str("GLOBAL"),
            Scope::Subgroup(id) => s.serialize_u32(*id),
        }
    }
}

impl<'de> Deserialize<'de> for Scope {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct ScopeVisitor;
        impl Visitor<'_> for ScopeVisitor {
            type Value = Scope;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"GLOBAL\" or a subgroup id")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Scope, E> {
                if v == "GLOBAL" {
                    Ok(Scope::Global)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Scope, E> {
                u32::try_from(v).map(Scope::Subgroup).map_err(|_| E::invalid_value(de::Unexpected::Unsigned(v), &self))
            }
        }
        d.deserialize_any(ScopeVisitor)
    }
}

/// Per-option values sampled on a fixed grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentSeries {
    pub scope: Scope,
    pub times: Vec<u64>,
    /// `values[option.index()][sample]`.
    pub values: Vec<Vec<f64>>,
}

/// One exported line: `{scope, option, samples: [[t_ms, value], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesExport {
    pub scope: Scope,
    pub option: OptionLabel,
    pub samples: Vec<(u64, f64)>,
}

impl SentimentSeries {
    fn zeros(scope: Scope, times: Vec<u64>) -> Self {
        let n = times.len();
        Self { scope, times, values: vec![vec![0.0; n]; 8] }
    }

    pub fn value(&self, option: OptionLabel, sample: usize) -> f64 {
        self.values[option.index()][sample]
    }

    /// Index of the last sample at or before `t_ms`.
    pub fn sample_at(&self, t_ms: u64) -> Option<usize> {
        self.times.iter().rposition(|t| *t <= t_ms)
    }

    pub fn export(&self) -> Vec<SeriesExport> {
        OptionLabel::ALL
            .iter()
            .map(|&option| SeriesExport {
                scope: self.scope,
                option,
                samples: self.times.iter().copied().zip(self.values[option.index()].iter().copied()).collect(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentSet {
    pub global: SentimentSeries,
    pub subgroups: Vec<SentimentSeries>,
}

impl SentimentSet {
    pub fn subgroup(&self, id: SubgroupId) -> Option<&SentimentSeries> {
        self.subgroups.iter().find(|s| s.scope == Scope::Subgroup(id))
    }

    pub fn export(&self) -> Vec<SeriesExport> {
        let mut out = self.global.export();
        for s in &self.subgroups {
            out.extend(s.export());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConvictionError {
    #[error("event at {t_ms} ms is after the deadline {deadline_ms} ms")]
    LateEvent { t_ms: u64, deadline_ms: u64 },
    #[error("event at {t_ms} ms arrived after an event at {last_ms} ms")]
    OutOfOrder { t_ms: u64, last_ms: u64 },
    #[error("sentiment series is empty")]
    NoSeries,
}

/// Sample grid: every cadence step from 0, plus the deadline itself.
pub fn sample_times(deadline_ms: u64) -> Vec<u64> {
    let mut t: Vec<u64> = (0..=deadline_ms).step_by(SAMPLE_CADENCE_MS as usize).collect();
    if t.last() != Some(&deadline_ms) {
        t.push(deadline_ms);
    }
    t
}

fn decay(strength: f64, age_ms: u64, half_life_ms: f64) -> f64 {
    strength * (-(age_ms as f64) / half_life_ms).exp2()
}

/// Single-writer accumulator over a time-ordered event stream.
#[derive(Debug, Clone)]
pub struct ConvictionTracker {
    half_life_ms: f64,
    deadline_ms: u64,
    subgroups: Vec<SubgroupId>,
    events: Vec<ConvictionEvent>,
}

impl ConvictionTracker {
    pub fn new(half_life_s: f64, deadline_ms: u64, subgroups: &[SubgroupId]) -> Self {
        let mut subgroups = subgroups.to_vec();
        subgroups.sort_unstable();
        subgroups.dedup();
        Self { half_life_ms: half_life_s * 1000.0, deadline_ms, subgroups, events: Vec::new() }
    }

    pub fn push(&mut self, event: ConvictionEvent) -> Result<(), ConvictionError> {
        if event.t_ms > self.deadline_ms {
            return Err(ConvictionError::LateEvent { t_ms: event.t_ms, deadline_ms: self.deadline_ms });
        }
        if let Some(last) = self.events.last() {
            if event.t_ms < last.t_ms {
                return Err(ConvictionError::OutOfOrder { t_ms: event.t_ms, last_ms: last.t_ms });
            }
        }
        if let Err(pos) = self.subgroups.binary_search(&event.subgroup_id) {
            self.subgroups.insert(pos, event.subgroup_id);
        }
        self.events.push(event);
        Ok(())
    }

    pub fn events(&self) -> &[ConvictionEvent] {
        &self.events
    }

    pub fn deadline_ms(&self) -> u64 {
        self.deadline_ms
    }

    /// Decayed value of one option in one subgroup at `t_ms`.
    pub fn value_at(&self, subgroup: SubgroupId, option: OptionLabel, t_ms: u64) -> f64 {
        self.events
            .iter()
            .take_while(|e| e.t_ms <= t_ms)
            .filter(|e| e.subgroup_id == subgroup && e.option == option)
            .map(|e| decay(e.strength, t_ms - e.t_ms, self.half_life_ms))
            .sum()
    }

    /// Samples every series on the grid from 0 up to `until_ms` (capped at the deadline).
    pub fn snapshot(&self, until_ms: u64) -> SentimentSet {
        let end = until_ms.min(self.deadline_ms);
        let times = sample_times(end);
        let mut subgroups: Vec<SentimentSeries> =
            self.subgroups.iter().map(|&id| SentimentSeries::zeros(Scope::Subgroup(id), times.clone())).collect();

        for e in &self.events {
            let Ok(g) = self.subgroups.binary_search(&e.subgroup_id) else { continue };
            let row = &mut subgroups[g].values[e.option.index()];
            let first = times.partition_point(|t| *t < e.t_ms);
            for (slot, &t) in row[first..].iter_mut().zip(&times[first..]) {
                *slot += decay(e.strength, t - e.t_ms, self.half_life_ms);
            }
        }

        let mut global = SentimentSeries::zeros(Scope::Global, times);
        for s in &subgroups {
            for (grow, srow) in global.values.iter_mut().zip(&s.values) {
                for (g, v) in grow.iter_mut().zip(srow) {
                    *g += v;
                }
            }
        }
        SentimentSet { global, subgroups }
    }
}

/// Accumulates an ordered event stream into sampled sentiment series from 0
/// to `deadline_ms`.
pub fn accumulate(
    events: &[ConvictionEvent],
    half_life_s: f64,
    deadline_ms: u64,
    subgroups: &[SubgroupId],
) -> Result<SentimentSet, ConvictionError> {
    let mut tracker = ConvictionTracker::new(half_life_s, deadline_ms, subgroups);
    for e in events {
        tracker.push(*e)?;
    }
    Ok(tracker.snapshot(deadline_ms))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnswerSelection {
    pub option: OptionLabel,
    pub value_at_deadline: f64,
    pub tie_broken: bool,
    pub no_signal: bool,
}

/// Picks the option with the largest global value at `deadline_ms`.
///
/// Exact ties go to the option that reached the tied value first, then to
/// the lowest label. If every value is zero the result is `A` flagged
/// `no_signal`.
pub fn final_answer(global: &SentimentSeries, deadline_ms: u64) -> Result<AnswerSelection, ConvictionError> {
    let at = global.sample_at(deadline_ms).ok_or(ConvictionError::NoSeries)?;
    let finals: Vec<f64> = OptionLabel::ALL.iter().map(|o| global.value(*o, at)).collect();

    if finals.iter().all(|v| *v == 0.0) {
        return Ok(AnswerSelection { option: OptionLabel::A, value_at_deadline: 0.0, tie_broken: false, no_signal: true });
    }

    let best = finals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<OptionLabel> = OptionLabel::ALL.iter().copied().filter(|o| finals[o.index()] == best).collect();
    if tied.len() == 1 {
        return Ok(AnswerSelection { option: tied[0], value_at_deadline: best, tie_broken: false, no_signal: false });
    }

    let first_reached = |o: OptionLabel| global.values[o.index()][..=at].iter().position(|v| *v >= best).unwrap_or(at);
    let option = tied.iter().copied().min_by_key(|o| (first_reached(*o), *o)).expect("tied is nonempty");
    Ok(AnswerSelection { option, value_at_deadline: best, tie_broken: true, no_signal: false })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::model::Author;
    use OptionLabel::*;

    fn score(text: &str) -> Vec<(OptionLabel, f64)> {
        LexicalEstimator.score(text, &OptionLabel::ALL)
    }

    fn ev(subgroup_id: SubgroupId, option: OptionLabel, strength: f64, t_ms: u64) -> ConvictionEvent {
        ConvictionEvent { subgroup_id, option, strength, t_ms, source_message_id: 0 }
    }

    #[test]
    fn lexical_cues() {
        assert_eq!(score("I vote H"), vec![(H, 1.0)]);
        assert_eq!(score("definitely not D"), vec![(D, -1.0)]);
        assert_eq!(score("the fan rotates each row"), vec![]);
        assert_eq!(score("maybe C, could be E"), vec![(C, 0.4), (E, 0.4)]);
        assert_eq!(score("maybe B... actually I think B"), vec![(B, 1.0)]);
        assert_eq!(score("I think it's G, rule out A"), vec![(A, -1.0), (G, 1.0)]);
        assert_eq!(score("Another group thinks H: I vote H because the fan turns"), vec![(H, 1.0)]);
    }

    #[test]
    fn lexical_ignores_bare_mentions_and_non_options() {
        assert_eq!(score("H looks nice"), vec![]);
        assert_eq!(score("I vote I"), vec![]);
        assert_eq!(score("vote for a better one"), vec![]);
        assert_eq!(LexicalEstimator.score("I vote H", &[A, B]), vec![]);
    }

    #[test]
    fn estimate_stamps_question_time() {
        let m = Message {
            id: 9,
            subgroup_id: 3,
            author: Author::Participant("p".into()),
            text: "I vote H".into(),
            t_ms: 15_000,
            relay_meta: None,
        };
        let evs = estimate(&m, &OptionLabel::ALL, &LexicalEstimator, 10_000);
        assert_eq!(evs, vec![ConvictionEvent { subgroup_id: 3, option: H, strength: 1.0, t_ms: 5_000, source_message_id: 9 }]);
    }

    #[test]
    fn half_life_halves() {
        let set = accumulate(&[ev(1, H, 1.0, 0)], 60.0, 240_000, &[1]).unwrap();
        assert_abs_diff_eq!(set.global.value(H, 60), 0.5, epsilon = 1e-12);
        assert_eq!(set.global.times.len(), 241);
    }

    #[test]
    fn no_events_is_all_zero() {
        let set = accumulate(&[], 60.0, 10_000, &[1, 2]).unwrap();
        assert!(set.global.values.iter().flatten().all(|v| *v == 0.0));
        assert_eq!(set.subgroups.len(), 2);
    }

    #[test]
    fn global_sums_subgroups() {
        let set = accumulate(&[ev(1, H, 1.0, 5000), ev(2, H, 1.0, 5000)], 60.0, 10_000, &[1, 2]).unwrap();
        assert_eq!(set.global.value(H, 5), 2.0);
    }

    #[test]
    fn late_and_unordered_events_rejected() {
        assert_eq!(
            accumulate(&[ev(1, H, 1.0, 10_001)], 60.0, 10_000, &[1]),
            Err(ConvictionError::LateEvent { t_ms: 10_001, deadline_ms: 10_000 })
        );
        assert!(matches!(accumulate(&[ev(1, H, 1.0, 5), ev(1, H, 1.0, 4)], 60.0, 10_000, &[1]), Err(ConvictionError::OutOfOrder { .. })));
    }

    #[test]
    fn deadline_off_grid_gets_a_sample() {
        assert_eq!(sample_times(2500), vec![0, 1000, 2000, 2500]);
    }

    #[test]
    fn later_leader_wins() {
        // D leads early, G overtakes late.
        let events = [
            ev(1, D, 1.0, 0),
            ev(2, D, 1.0, 10_000),
            ev(1, G, 1.0, 62_000),
            ev(3, D, 0.4, 80_000),
            ev(2, G, 1.0, 106_000),
            ev(3, G, 1.0, 150_000),
        ];
        let set = accumulate(&events, 60.0, 240_000, &[1, 2, 3]).unwrap();
        assert!(set.global.value(D, 60) > set.global.value(G, 60));
        let sel = final_answer(&set.global, 240_000).unwrap();
        assert_eq!(sel.option, G);
        assert!(!sel.tie_broken && !sel.no_signal);
    }

    #[test]
    fn tie_goes_to_first_to_reach() {
        let events = [ev(1, E, 1.0, 3000), ev(1, B, 1.0, 3000)];
        // B and E identical at every sample; lowest label breaks it.
        let set = accumulate(&events, 60.0, 10_000, &[1]).unwrap();
        let sel = final_answer(&set.global, 10_000).unwrap();
        assert_eq!((sel.option, sel.tie_broken), (B, true));

        let mut series = SentimentSeries::zeros(Scope::Global, vec![0, 1000, 2000]);
        series.values[E.index()] = vec![0.0, 0.0, 0.7];
        series.values[B.index()] = vec![0.0, 0.9, 0.7];
        series.values[H.index()] = vec![0.0, 0.0, 0.5];
        let sel = final_answer(&series, 2000).unwrap();
        assert_eq!((sel.option, sel.tie_broken), (B, true));
        series.values[B.index()] = vec![0.0, 0.0, 0.7];
        series.values[E.index()] = vec![0.8, 0.0, 0.7];
        assert_eq!(final_answer(&series, 2000).unwrap().option, E);
    }

    #[test]
    fn all_zero_is_no_signal() {
        let set = accumulate(&[], 60.0, 240_000, &[1]).unwrap();
        let sel = final_answer(&set.global, 240_000).unwrap();
        assert_eq!(sel, AnswerSelection { option: A, value_at_deadline: 0.0, tie_broken: false, no_signal: true });
    }

    #[test]
    fn negative_only_picks_least_negative() {
        let set = accumulate(&[ev(1, D, -1.0, 0)], 60.0, 1000, &[1]).unwrap();
        let sel = final_answer(&set.global, 1000).unwrap();
        assert_eq!((sel.option, sel.no_signal), (A, false));
    }

    #[test]
    fn empty_series_is_an_error() {
        let s = SentimentSeries { scope: Scope::Global, times: vec![], values: vec![vec![]; 8] };
        assert_eq!(final_answer(&s, 0), Err(ConvictionError::NoSeries));
    }

    #[test]
    fn export_shape() {
        let set = accumulate(&[ev(2, H, 1.0, 0)], 60.0, 2000, &[2]).unwrap();
        let json = serde_json::to_string(&set.global.export()[7]).unwrap();
        assert_eq!(json, r#"{"scope":"GLOBAL","option":"H","samples":[[0,1.0],[1000,0.9885140203528962],[2000,0.9771599684342459]]}"#);
        let sub = serde_json::to_value(&set.subgroups[0].export()[0]).unwrap();
        assert_eq!(sub["scope"], 2);
        let back: Vec<SeriesExport> = serde_json::from_str(&serde_json::to_string(&set.export()).unwrap()).unwrap();
        assert_eq!(back, set.export());
    }

    fn arb_events() -> impl Strategy<Value = Vec<ConvictionEvent>> {
        prop::collection::vec((1u32..5, 0usize..8, -1.0f64..1.0, 0u64..60_000), 0..40).prop_map(|mut v| {
            v.sort_by_key(|e| e.3);
            v.into_iter().map(|(g, o, s, t)| ev(g, OptionLabel::ALL[o], s, t)).collect()
        })
    }

    proptest! {
        #[test]
        fn global_is_pointwise_sum(events in arb_events()) {
            let set = accumulate(&events, 30.0, 60_000, &[1, 2, 3, 4]).unwrap();
            for o in 0..8 {
                for i in 0..set.global.times.len() {
                    let sum: f64 = set.subgroups.iter().map(|s| s.values[o][i]).sum();
                    prop_assert!((set.global.values[o][i] - sum).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn argmax_survives_positive_scaling(events in arb_events(), c in prop::sample::select(vec![0.1, 2.0, 10.0])) {
            let scaled: Vec<_> = events.iter().map(|e| e.scaled(c)).collect();
            let a = final_answer(&accumulate(&events, 30.0, 60_000, &[1]).unwrap().global, 60_000).unwrap();
            let b = final_answer(&accumulate(&scaled, 30.0, 60_000, &[1]).unwrap().global, 60_000).unwrap();
            prop_assert_eq!(a.option, b.option);
        }

        #[test]
        fn decays_without_new_events(strength in prop::sample::select(vec![-1.0, -0.4, 0.4, 1.0]), t0 in 0u64..5000) {
            let set = accumulate(&[ev(1, C, strength, t0)], 60.0, 120_000, &[1]).unwrap();
            let row = &set.global.values[C.index()];
            let start = set.global.sample_at(t0 + 999).unwrap();
            for w in row[start..].windows(2) {
                prop_assert!(w[1].abs() < w[0].abs());
            }
        }
    }
}
