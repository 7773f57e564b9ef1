//! Shared domain types: questions, participants, subgroups, messages and the
//! session configuration, plus configuration validation.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the eight answer labels `A`..`H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OptionLabel {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
}

impl OptionLabel {
    pub const ALL: [OptionLabel; 8] =
        [OptionLabel::A, OptionLabel::B, OptionLabel::C, OptionLabel::D, OptionLabel::E, OptionLabel::F, OptionLabel::G, OptionLabel::H];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_char(self) -> char {
        (b'A' + self as u8) as char
    }

    /// Parses a single uppercase letter `A`..`H`.
    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'A'..='H' => Self::from_index(c as usize - 'A' as usize),
            _ => None,
        }
    }
}

impl fmt::Display for OptionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid option label {0:?}")]
pub struct InvalidLabel(pub String);

impl FromStr for OptionLabel {
    type Err = InvalidLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let mut chars = t.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Self::from_char(c.to_ascii_uppercase()).ok_or_else(|| InvalidLabel(s.into())),
            _ => Err(InvalidLabel(s.into())),
        }
    }
}

pub const DEFAULT_TIME_LIMIT_S: u32 = 240;

fn default_time_limit() -> u32 {
    DEFAULT_TIME_LIMIT_S
}

fn default_options() -> Vec<OptionLabel> {
    OptionLabel::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    /// Prompt text or an opaque asset URI.
    pub prompt: String,
    #[serde(default = "default_options")]
    pub options: Vec<OptionLabel>,
    /// Never sent to participants.
    pub correct_option: OptionLabel,
    #[serde(default = "default_time_limit")]
    pub time_limit_s: u32,
}

impl Question {
    pub fn new(id: impl Into<String>, prompt: impl Into<String>, correct_option: OptionLabel) -> Self {
        Self {
            id: id.into(),
            prompt: prompt.into(),
            options: OptionLabel::ALL.to_vec(),
            correct_option,
            time_limit_s: DEFAULT_TIME_LIMIT_S,
        }
    }

    pub fn time_limit_ms(&self) -> u64 {
        u64::from(self.time_limit_s) * 1000
    }

    /// Participant-facing view of the question with the key removed.
    pub fn redacted(&self) -> PublicQuestion {
        PublicQuestion { id: self.id.clone(), prompt: self.prompt.clone(), options: self.options.clone(), time_limit_s: self.time_limit_s }
    }

    fn violations(&self, out: &mut Vec<Violation>) {
        let field = format!("questions[{}]", self.id);
        let distinct: HashSet<_> = self.options.iter().collect();
        if self.options.len() != 8 || distinct.len() != 8 {
            out.push(Violation::new(&field, Rule::QuestionOptions));
        }
        if !self.options.contains(&self.correct_option) {
            out.push(Violation::new(&field, Rule::KeyNotAnOption));
        }
        if self.time_limit_s == 0 {
            out.push(Violation::new(&field, Rule::TimeLimitNotPositive));
        }
    }
}

/// A question as shown to participants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicQuestion {
    pub id: String,
    pub prompt: String,
    pub options: Vec<OptionLabel>,
    pub time_limit_s: u32,
}

/// On-disk question bank: `{ "questions": [ ... ] }`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionBank {
    pub questions: Vec<Question>,
}

#[derive(Debug, Error)]
pub enum BankError {
    #[error("reading question bank: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing question bank: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid question bank: {0:?}")]
    Invalid(Vec<Violation>),
}

impl QuestionBank {
    pub fn from_json(s: &str) -> Result<Self, BankError> {
        let bank: QuestionBank = serde_json::from_str(s)?;
        let mut v = Vec::new();
        let mut seen = HashSet::new();
        for q in &bank.questions {
            q.violations(&mut v);
            if !seen.insert(q.id.as_str()) {
                v.push(Violation::new(&format!("questions[{}]", q.id), Rule::DuplicateQuestion));
            }
        }
        if v.is_empty() {
            Ok(bank)
        } else {
            Err(BankError::Invalid(v))
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BankError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipantKind {
    Human,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub kind: ParticipantKind,
    pub display_name: String,
}

impl Participant {
    pub fn synthetic(id: impl Into<String>) -> Self {
        let id = id.into();
        Self { display_name: id.clone(), id, kind: ParticipantKind::Synthetic }
    }
}

pub type SubgroupId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgroup {
    pub id: SubgroupId,
    pub member_ids: Vec<String>,
    pub agent_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    #[default]
    Lexical,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelayBackendKind {
    #[default]
    Stub,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub roster: Vec<Participant>,
    pub questions: Vec<Question>,
    pub subgroup_min: usize,
    pub subgroup_max: usize,
    pub subgroup_target: usize,
    /// Forces the number of subgroups instead of deriving it from the target size.
    pub subgroup_count: Option<usize>,
    pub conviction_half_life_s: f64,
    pub relay_min_interval_s: f64,
    /// Seconds between relay cycles of each agent; `None` disables relaying.
    pub relay_cadence_s: Option<f64>,
    pub estimator: EstimatorKind,
    pub relay_backend: RelayBackendKind,
    pub rng_seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            roster: Vec::new(),
            questions: Vec::new(),
            subgroup_min: 4,
            subgroup_max: 7,
            subgroup_target: 5,
            subgroup_count: None,
            conviction_half_life_s: 60.0,
            relay_min_interval_s: 15.0,
            relay_cadence_s: Some(10.0),
            estimator: EstimatorKind::Lexical,
            relay_backend: RelayBackendKind::Stub,
            rng_seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn with_roster(roster: Vec<Participant>, questions: Vec<Question>) -> Self {
        Self { roster, questions, ..Self::default() }
    }

    pub fn roster_ids(&self) -> Vec<String> {
        self.roster.iter().map(|p| p.id.clone()).collect()
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }
}

/// Names of the configuration rules that [`validate_config`] checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    RosterTooSmall,
    DuplicateParticipant,
    BoundsInverted,
    TargetOutOfRange,
    SubgroupCountInfeasible,
    HalfLifeNotPositive,
    IntervalNotPositive,
    CadenceNotPositive,
    QuestionOptions,
    KeyNotAnOption,
    TimeLimitNotPositive,
    DuplicateQuestion,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::RosterTooSmall => "roster-too-small",
            Rule::DuplicateParticipant => "duplicate-participant",
            Rule::BoundsInverted => "bounds-inverted",
            Rule::TargetOutOfRange => "target-out-of-range",
            Rule::SubgroupCountInfeasible => "subgroup-count-infeasible",
            Rule::HalfLifeNotPositive => "half-life-not-positive",
            Rule::IntervalNotPositive => "interval-not-positive",
            Rule::CadenceNotPositive => "cadence-not-positive",
            Rule::QuestionOptions => "question-options",
            Rule::KeyNotAnOption => "key-not-an-option",
            Rule::TimeLimitNotPositive => "time-limit-not-positive",
            Rule::DuplicateQuestion => "duplicate-question",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: Rule,
}

impl Violation {
    fn new(field: &str, rule: Rule) -> Self {
        Self { field: field.to_string(), rule }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Checks every [`SessionConfig`] invariant. An empty result means the
/// configuration is usable.
pub fn validate_config(config: &SessionConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = config.roster.len();
    let (min, max, target) = (config.subgroup_min, config.subgroup_max, config.subgroup_target);

    if min == 0 || min > max {
        out.push(Violation::new("subgroup_min", Rule::BoundsInverted));
    }
    if target < min || target > max {
        out.push(Violation::new("subgroup_target", Rule::TargetOutOfRange));
    }
    if !(n >= 2 * min || (min..=max).contains(&n)) {
        out.push(Violation::new("roster", Rule::RosterTooSmall));
    }
    if let Some(k) = config.subgroup_count {
        if k == 0 || n < k * min || n > k * max {
            out.push(Violation::new("subgroup_count", Rule::SubgroupCountInfeasible));
        }
    }

    let mut seen = HashSet::new();
    for p in &config.roster {
        if !seen.insert(p.id.as_str()) {
            out.push(Violation::new(&format!("roster[{}]", p.id), Rule::DuplicateParticipant));
        }
    }

    if !(config.conviction_half_life_s > 0.0 && config.conviction_half_life_s.is_finite()) {
        out.push(Violation::new("conviction_half_life_s", Rule::HalfLifeNotPositive));
    }
    if !(config.relay_min_interval_s > 0.0 && config.relay_min_interval_s.is_finite()) {
        out.push(Violation::new("relay_min_interval_s", Rule::IntervalNotPositive));
    }
    if let Some(c) = config.relay_cadence_s {
        if !(c > 0.0 && c.is_finite()) {
            out.push(Violation::new("relay_cadence_s", Rule::CadenceNotPositive));
        }
    }

    let mut qids = HashSet::new();
    for q in &config.questions {
        q.violations(&mut out);
        if !qids.insert(q.id.as_str()) {
            out.push(Violation::new(&format!("questions[{}]", q.id), Rule::DuplicateQuestion));
        }
    }
    out
}

/// Who wrote a message.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Author {
    Participant(String),
    Agent(String),
}

impl Author {
    pub fn id(&self) -> &str {
        match self {
            Author::Participant(id) | Author::Agent(id) => id,
        }
    }

    pub fn is_agent(&self) -> bool {
        matches!(self, Author::Agent(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationColor {
    /// The destination had no prior member support for the option.
    Introducing,
    Reinforcing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayMeta {
    pub source_subgroup_id: SubgroupId,
    pub option: OptionLabel,
    pub color: PropagationColor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: u64,
    pub subgroup_id: SubgroupId,
    pub author: Author,
    pub text: String,
    /// Milliseconds since the session was created.
    pub t_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relay_meta: Option<RelayMeta>,
}
