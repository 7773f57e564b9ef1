//! Synthetic participants and the end-to-end experiment harness.
//!
//! Each participant has a latent ability; the chance of favouring the key
//! on a question is `logistic(ability - difficulty)`. Ability is shifted by
//! bisection so that isolated answering hits a target accuracy. During
//! deliberation participants post their current favourite with a short
//! reason, and every argument they read for option `X` multiplies their
//! belief in `X` by `1 + strength * persuasibility`, where arguments for
//! the key are stronger by `truth_quality_bonus`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    difficulty_curve, iq_score, paired_t_test, per_question_accuracy, percentile, plurality, score_individuals, sign_test, woc_bootstrap,
    AnswerKey, BaselineError, DifficultyCurve, ResponseMatrix, ScoreDistribution, SignTest, TTest, WocParams,
};
use crate::conviction::{Estimator, LexicalEstimator};
use crate::model::{Author, OptionLabel, Participant, Question, SessionConfig};
use crate::orchestrator::{Delivery, OrchestratorError, Recipient, ServerFrame, Session};
use crate::relay::StubBackend;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("target accuracy {0} is at or below chance")]
    TargetBelowChance(f64),
    #[error("no questions")]
    NoQuestions,
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimModelConfig {
    /// Mean isolated accuracy the population is calibrated to.
    pub target_accuracy: f64,
    /// Standard deviation of latent ability, in logits.
    pub ability_sd: f64,
    /// Question difficulties are spread evenly over `±difficulty_spread` logits.
    pub difficulty_spread: f64,
    /// Share of the wrong-answer mass that sits on each question's lure.
    pub distractor_share: f64,
    pub argument_strength: f64,
    pub truth_quality_bonus: f64,
    /// Mean persuasibility; individual values are uniform on `[0, 2 * rate]`.
    pub persuasion_rate: f64,
    /// Mean posting rate; individual rates are uniform on `[0.5, 1.5]` times this.
    pub messages_per_min: f64,
    /// Weight of a participant's first pick in their working belief.
    pub initial_commitment: f64,
    pub read_delay_ms: u64,
}

impl Default for SimModelConfig {
    fn default() -> Self {
        Self {
            target_accuracy: 0.457,
            ability_sd: 1.0,
            difficulty_spread: 2.0,
            distractor_share: 0.5,
            argument_strength: 0.5,
            truth_quality_bonus: 0.5,
            persuasion_rate: 0.3,
            messages_per_min: 2.0,
            initial_commitment: 0.5,
            read_delay_ms: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimQuestion {
    pub question: Question,
    pub difficulty: f64,
    /// The wrong option that attracts most wrong answers.
    pub lure: OptionLabel,
}

/// Assigns evenly spread difficulties (easiest first) and a seeded lure to
/// each question.
pub fn prepare_questions(questions: &[Question], model: &SimModelConfig, seed: u64) -> Vec<SimQuestion> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = questions.len() as f64;
    questions
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let wrong: Vec<OptionLabel> = q.options.iter().copied().filter(|o| *o != q.correct_option).collect();
            let lure = if wrong.is_empty() { q.correct_option } else { wrong[rng.random_range(0..wrong.len())] };
            let difficulty = model.difficulty_spread * (2.0 * (i as f64 + 0.5) / n - 1.0);
            SimQuestion { question: q.clone(), difficulty, lure }
        })
        .collect()
}

/// A bank of `n` placeholder questions with random keys.
pub fn synthetic_questions(n: usize, seed: u64) -> Vec<Question> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0b4e);
    (1..=n)
        .map(|i| {
            let key = OptionLabel::ALL[rng.random_range(0..8)];
            Question::new(format!("q{i:02}"), format!("Synthetic matrix item {i}"), key)
        })
        .collect()
}

/// Probability vector over A..H.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Belief(pub [f64; 8]);

impl Belief {
    fn normalized(mut self) -> Self {
        let total: f64 = self.0.iter().sum();
        if total > 0.0 {
            self.0.iter_mut().for_each(|p| *p /= total);
        }
        self
    }

    pub fn get(&self, o: OptionLabel) -> f64 {
        self.0[o.index()]
    }

    /// Most likely option; lowest label on ties.
    pub fn modal(&self) -> OptionLabel {
        let mut best = 0;
        for i in 1..8 {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        OptionLabel::ALL[best]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> OptionLabel {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.0.iter().enumerate() {
            acc += p;
            if u < acc {
                return OptionLabel::ALL[i];
            }
        }
        self.modal()
    }

    fn reinforce(&mut self, o: OptionLabel, factor: f64) {
        self.0[o.index()] *= factor;
        *self = self.normalized();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParticipant {
    pub id: String,
    /// Latent ability in logits; infinite for a participant who always knows the key.
    pub ability: f64,
    /// Chance of favouring the key on a question of median difficulty.
    pub competence: f64,
    pub persuasibility: f64,
    /// Messages per minute.
    pub talkativeness: f64,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl SyntheticParticipant {
    pub fn p_correct(&self, q: &SimQuestion) -> f64 {
        logistic(self.ability - q.difficulty)
    }

    /// Isolated belief over the options of `q`.
    pub fn prior(&self, q: &SimQuestion, model: &SimModelConfig) -> Belief {
        let p = self.p_correct(q);
        let key = q.question.correct_option;
        let others: Vec<OptionLabel> = q.question.options.iter().copied().filter(|o| *o != key && *o != q.lure).collect();
        let mut b = [0.0; 8];
        b[key.index()] = p;
        let wrong = 1.0 - p;
        if q.lure == key {
            return Belief(b).normalized();
        }
        let lure_share = if others.is_empty() { 1.0 } else { model.distractor_share };
        b[q.lure.index()] += wrong * lure_share;
        for o in &others {
            b[o.index()] += wrong * (1.0 - lure_share) / others.len() as f64;
        }
        Belief(b).normalized()
    }
}

fn mean_p_correct(abilities: &[f64], questions: &[SimQuestion]) -> f64 {
    let total: f64 = abilities.iter().map(|a| questions.iter().map(|q| logistic(a - q.difficulty)).sum::<f64>()).sum();
    total / (abilities.len() * questions.len()) as f64
}

/// Draws `n` participants whose expected isolated accuracy on `questions`
/// equals `model.target_accuracy`.
pub fn calibrate(n: usize, questions: &[SimQuestion], model: &SimModelConfig, seed: u64) -> Result<Vec<SyntheticParticipant>, SimError> {
    if model.target_accuracy <= 1.0 / 8.0 {
        return Err(SimError::TargetBelowChance(model.target_accuracy));
    }
    if questions.is_empty() {
        return Err(SimError::NoQuestions);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let spread: Vec<f64> = z.iter().map(|z| z * model.ability_sd).collect();

    let shift = if model.target_accuracy >= 1.0 {
        f64::INFINITY
    } else {
        let (mut lo, mut hi) = (-30.0, 30.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let abilities: Vec<f64> = spread.iter().map(|s| s + mid).collect();
            if mean_p_correct(&abilities, questions) < model.target_accuracy {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };

    Ok(spread
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let ability = s + shift;
            let persuasibility = (rng.random::<f64>() * 2.0 * model.persuasion_rate).clamp(0.0, 1.0);
            let talkativeness = model.messages_per_min * rng.random_range(0.5..1.5);
            SyntheticParticipant { id: format!("p{:03}", i + 1), ability, competence: logistic(ability), persuasibility, talkativeness }
        })
        .collect())
}

pub fn answer_key(questions: &[SimQuestion]) -> AnswerKey {
    questions.iter().map(|q| (q.question.id.clone(), q.question.correct_option)).collect()
}

/// Every participant answers every question alone by sampling their prior.
pub fn run_individual(population: &[SyntheticParticipant], questions: &[SimQuestion], model: &SimModelConfig, seed: u64) -> ResponseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ResponseMatrix {
        respondents: population.iter().map(|p| p.id.clone()).collect(),
        questions: questions.iter().map(|q| q.question.id.clone()).collect(),
        choices: population.iter().map(|p| questions.iter().map(|q| Some(p.prior(q, model).sample(&mut rng))).collect()).collect(),
        elapsed_s: vec![Some(900.0); population.len()],
    }
}

const REASONS: [&str; 12] = [
    "the shapes rotate one step along each row",
    "the dot count grows by one in every column",
    "the shading alternates from left to right",
    "the outer frame keeps its shape while the inner figure flips",
    "adding the first two panels gives the third",
    "the lines that appear twice cancel out",
    "each row contains every texture exactly once",
    "the arrow turns a quarter each time",
    "the figures get larger down the column",
    "the missing panel mirrors the first one",
    "the number of sides increases across the row",
    "the pattern on the diagonal repeats",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsiQuestionOutcome {
    pub correct: bool,
    pub selected: OptionLabel,
    pub no_signal: bool,
    /// Plurality of everyone's first pick.
    pub initial_plurality_correct: bool,
    /// Plurality within each subgroup, then across subgroups.
    pub subgroup_plurality_correct: bool,
}

pub struct CsiRun {
    pub session: Session,
    pub outcomes: Vec<CsiQuestionOutcome>,
    /// Every frame the session emitted, when requested.
    pub deliveries: Vec<Delivery>,
}

impl CsiRun {
    pub fn accuracy(&self) -> f64 {
        self.outcomes.iter().filter(|o| o.correct).count() as f64 / self.outcomes.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Action {
    Post(usize),
    /// Reader index and id of the message being read.
    Read(usize, u64),
    Tick,
}

struct Agenda {
    heap: BinaryHeap<Reverse<(u64, u64, Action)>>,
    seq: u64,
}

impl Agenda {
    fn push(&mut self, t: u64, a: Action) {
        self.heap.push(Reverse((t, self.seq, a)));
        self.seq += 1;
    }
}

fn next_post_gap<R: Rng + ?Sized>(rate_per_min: f64, rng: &mut R) -> Option<u64> {
    if rate_per_min <= 0.0 {
        return None;
    }
    let exp = Exp::new(rate_per_min / 60_000.0).ok()?;
    Some(exp.sample(rng).ceil().max(1.0) as u64)
}

/// Runs every question through a live [`Session`] with synthetic
/// participants. `session` supplies the deliberation parameters; its roster
/// and questions are replaced.
pub fn run_csi(
    population: &[SyntheticParticipant],
    questions: &[SimQuestion],
    session: &SessionConfig,
    model: &SimModelConfig,
    seed: u64,
    keep_deliveries: bool,
) -> Result<CsiRun, SimError> {
    if questions.is_empty() {
        return Err(SimError::NoQuestions);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = SessionConfig {
        roster: population.iter().map(|p| Participant::synthetic(p.id.clone())).collect(),
        questions: questions.iter().map(|q| q.question.clone()).collect(),
        rng_seed: rng.random(),
        ..session.clone()
    };
    let reader = LexicalEstimator;
    let mut s = Session::create(format!("sim-{seed}"), config, Arc::new(LexicalEstimator), Arc::new(StubBackend))?;
    let index_of: std::collections::HashMap<&str, usize> = population.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    let subgroup_members: Vec<Vec<usize>> =
        s.plan().subgroups.iter().map(|g| g.member_ids.iter().map(|m| index_of[m.as_str()]).collect()).collect();
    let cadence_ms = session.relay_cadence_s.map(|c| (c * 1000.0).round().max(1.0) as u64);

    let mut outcomes = Vec::with_capacity(questions.len());
    let mut deliveries = Vec::new();
    let mut t0 = 0u64;
    for q in questions {
        let options = q.question.options.clone();
        let key = q.question.correct_option;
        s.open_question(&q.question.id, t0)?;
        let deadline = t0 + q.question.time_limit_ms();

        let picks: Vec<OptionLabel> = population.iter().map(|p| p.prior(q, model).sample(&mut rng)).collect();
        let mut beliefs: Vec<Belief> = population
            .iter()
            .zip(&picks)
            .map(|(p, pick)| {
                let prior = p.prior(q, model);
                let mut b = [0.0; 8];
                for (i, v) in b.iter_mut().enumerate() {
                    *v = (1.0 - model.initial_commitment) * prior.0[i];
                }
                b[pick.index()] += model.initial_commitment;
                Belief(b).normalized()
            })
            .collect();

        let initial_plurality_correct = plurality(&picks, &mut rng).map(|(o, _)| o == key).unwrap_or(false);
        let group_answers: Vec<OptionLabel> = subgroup_members
            .iter()
            .filter_map(|m| plurality(&m.iter().map(|i| picks[*i]).collect::<Vec<_>>(), &mut rng).ok().map(|(o, _)| o))
            .collect();
        let subgroup_plurality_correct = plurality(&group_answers, &mut rng).map(|(o, _)| o == key).unwrap_or(false);

        let mut agenda = Agenda { heap: BinaryHeap::new(), seq: 0 };
        for (i, p) in population.iter().enumerate() {
            if let Some(gap) = next_post_gap(p.talkativeness, &mut rng) {
                agenda.push(t0 + gap, Action::Post(i));
            }
        }
        if let Some(c) = cadence_ms {
            let mut t = t0 + c;
            while t <= deadline {
                agenda.push(t, Action::Tick);
                t += c;
            }
        }

        let mut parsed: std::collections::HashMap<u64, Vec<(OptionLabel, f64)>> = std::collections::HashMap::new();
        let mut route = |out: Vec<Delivery>, agenda: &mut Agenda, parsed: &mut std::collections::HashMap<u64, Vec<(OptionLabel, f64)>>| {
            for d in out {
                if let (Recipient::Participant(r), ServerFrame::Message { message }) = (&d.recipient, &d.frame) {
                    let own = matches!(&message.author, Author::Participant(a) if a == r);
                    let at = message.t_ms + model.read_delay_ms;
                    if !own && at <= deadline {
                        parsed.entry(message.id).or_insert_with(|| reader.score(&message.text, &options));
                        agenda.push(at, Action::Read(index_of[r.as_str()], message.id));
                    }
                }
                if keep_deliveries {
                    deliveries.push(d);
                }
            }
        };
        route(s.drain_outbox(), &mut agenda, &mut parsed);

        while let Some(Reverse((t, _, action))) = agenda.heap.pop() {
            if t > deadline {
                break;
            }
            match action {
                Action::Post(i) => {
                    let choice = beliefs[i].modal();
                    let text = format!("I vote {choice} because {}", REASONS[rng.random_range(0..REASONS.len())]);
                    s.post_message(&population[i].id, &text, t)?;
                    if let Some(gap) = next_post_gap(population[i].talkativeness, &mut rng) {
                        agenda.push(t + gap, Action::Post(i));
                    }
                }
                Action::Read(i, message_id) => {
                    for (o, score) in &parsed[&message_id] {
                        if *score > 0.0 {
                            let strength = model.argument_strength + if *o == key { model.truth_quality_bonus } else { 0.0 };
                            beliefs[i].reinforce(*o, 1.0 + strength * population[i].persuasibility);
                        }
                    }
                }
                Action::Tick => s.advance_to(t),
            }
            route(s.drain_outbox(), &mut agenda, &mut parsed);
        }

        let closed = s.close_question(deadline)?;
        route(s.drain_outbox(), &mut agenda, &mut parsed);
        outcomes.push(CsiQuestionOutcome {
            correct: closed.correct,
            selected: closed.selection.option,
            no_signal: closed.selection.no_signal,
            initial_plurality_correct,
            subgroup_plurality_correct,
        });
        t0 = deadline + 1000;
    }
    s.finish()?;
    Ok(CsiRun { session: s, outcomes, deliveries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub participants: usize,
    pub runs: usize,
    pub seed: u64,
    pub model: SimModelConfig,
    /// Deliberation parameters; roster and questions are filled per run.
    pub session: SessionConfig,
    pub woc: WocParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            participants: 35,
            runs: 50,
            seed: 0,
            model: SimModelConfig::default(),
            session: SessionConfig::default(),
            woc: WocParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub individual_mu: f64,
    pub individual_sigma: f64,
    pub woc: f64,
    pub csi: f64,
    pub initial_plurality: f64,
    pub subgroup_plurality: f64,
    pub individual_per_question: Vec<f64>,
    pub woc_per_question: Vec<f64>,
    pub csi_per_question: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub accuracy: f64,
    pub iq: Option<f64>,
    pub percentile: Option<f64>,
    pub per_question: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub better: String,
    pub worse: String,
    /// Paired over questions (mean accuracy per question across runs).
    pub t_test: Option<TTest>,
    /// Paired over runs.
    pub sign_test: SignTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub config: ExperimentConfig,
    pub question_ids: Vec<String>,
    pub individual_distribution: ScoreDistribution,
    pub individual: MethodSummary,
    pub woc: MethodSummary,
    pub csi: MethodSummary,
    pub comparisons: Vec<Comparison>,
    pub difficulty: Option<DifficultyCurve>,
    pub runs: Vec<RunResult>,
}

fn run_seeds(seed: u64, run: usize) -> [u64; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    [rng.random(), rng.random(), rng.random(), rng.random()]
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

fn column_means(rows: impl Iterator<Item = Vec<f64>>, n: usize) -> Vec<f64> {
    let mut sums = vec![0.0; n];
    let mut count = 0usize;
    for r in rows {
        sums.iter_mut().zip(&r).for_each(|(s, v)| *s += v);
        count += 1;
    }
    sums.iter().map(|s| s / count.max(1) as f64).collect()
}

/// Individual, wisdom-of-crowd and deliberation accuracy on the same
/// synthetic populations, `config.runs` times. `on_run` sees each finished
/// deliberation session (for exporting logs); runs execute in parallel.
pub fn compare(
    config: &ExperimentConfig,
    questions: &[Question],
    on_run: &(dyn Fn(usize, &Session) + Sync),
) -> Result<CompareSummary, SimError> {
    let sim_questions = prepare_questions(questions, &config.model, config.seed);
    let key = answer_key(&sim_questions);
    let nq = sim_questions.len();

    let runs: Vec<RunResult> = (0..config.runs)
        .into_par_iter()
        .map(|run| -> Result<RunResult, SimError> {
            let [pop_seed, ind_seed, woc_seed, csi_seed] = run_seeds(config.seed, run);
            let population = calibrate(config.participants, &sim_questions, &config.model, pop_seed)?;
            let matrix = run_individual(&population, &sim_questions, &config.model, ind_seed);
            let scores = score_individuals(&matrix, &key)?;
            let woc = woc_bootstrap(&matrix, &key, &WocParams { seed: woc_seed, ..config.woc })?;
            let csi = run_csi(&population, &sim_questions, &config.session, &config.model, csi_seed, false)?;
            on_run(run, &csi.session);
            let frac = |f: fn(&CsiQuestionOutcome) -> bool| csi.outcomes.iter().filter(|o| f(o)).count() as f64 / nq as f64;
            Ok(RunResult {
                run,
                individual_mu: scores.distribution.mu,
                individual_sigma: scores.distribution.sigma,
                woc: woc.overall,
                csi: csi.accuracy(),
                initial_plurality: frac(|o| o.initial_plurality_correct),
                subgroup_plurality: frac(|o| o.subgroup_plurality_correct),
                individual_per_question: per_question_accuracy(&matrix, &key)?,
                woc_per_question: woc.per_question,
                csi_per_question: csi.outcomes.iter().map(|o| f64::from(u8::from(o.correct))).collect(),
            })
        })
        .collect::<Result<_, _>>()?;

    let dist = ScoreDistribution {
        mu: mean(&runs.iter().map(|r| r.individual_mu).collect::<Vec<_>>()),
        sigma: mean(&runs.iter().map(|r| r.individual_sigma).collect::<Vec<_>>()),
        n: config.participants,
    };
    let summarize = |acc: Vec<f64>, pq: Vec<f64>| {
        let accuracy = mean(&acc);
        let iq = iq_score(accuracy, &dist).ok();
        MethodSummary { accuracy, iq, percentile: iq.map(percentile), per_question: pq }
    };
    let individual =
        summarize(runs.iter().map(|r| r.individual_mu).collect(), column_means(runs.iter().map(|r| r.individual_per_question.clone()), nq));
    let woc = summarize(runs.iter().map(|r| r.woc).collect(), column_means(runs.iter().map(|r| r.woc_per_question.clone()), nq));
    let csi = summarize(runs.iter().map(|r| r.csi).collect(), column_means(runs.iter().map(|r| r.csi_per_question.clone()), nq));

    let per_run = |f: fn(&RunResult) -> f64| runs.iter().map(f).collect::<Vec<f64>>();
    let compare_pair =
        |better: &str, a: &MethodSummary, ra: &[f64], worse: &str, b: &MethodSummary, rb: &[f64]| -> Result<Comparison, SimError> {
            Ok(Comparison {
                better: better.into(),
                worse: worse.into(),
                t_test: paired_t_test(&a.per_question, &b.per_question).ok(),
                sign_test: sign_test(ra, rb)?,
            })
        };
    let (ri, rw, rc) = (per_run(|r| r.individual_mu), per_run(|r| r.woc), per_run(|r| r.csi));
    let comparisons = vec![
        compare_pair("csi", &csi, &rc, "woc", &woc, &rw)?,
        compare_pair("csi", &csi, &rc, "individual", &individual, &ri)?,
        compare_pair("woc", &woc, &rw, "individual", &individual, &ri)?,
    ];

    let question_ids: Vec<String> = sim_questions.iter().map(|q| q.question.id.clone()).collect();
    let tagged = |v: &[f64]| question_ids.iter().cloned().zip(v.iter().copied()).collect::<Vec<_>>();
    let difficulty = difficulty_curve(&tagged(&individual.per_question), &tagged(&csi.per_question)).ok();

    Ok(CompareSummary {
        config: config.clone(),
        question_ids,
        individual_distribution: dist,
        individual,
        woc,
        csi,
        comparisons,
        difficulty,
        runs,
    })
}

impl CompareSummary {
    pub fn comparison(&self, better: &str, worse: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.better == better && c.worse == worse)
    }
}
