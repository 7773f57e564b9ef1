//! Baseline statistics: individual scoring, IQ conversion and percentiles,
//! bootstrap wisdom-of-crowd aggregation, significance tests and
//! difficulty curves.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::model::{OptionLabel, QuestionBank};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("answer key has no entry for question {0}")]
    KeyIncomplete(String),
    #[error("standard deviation is zero")]
    DegenerateDistribution,
    #[error("no votes")]
    NoVotes,
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two pairs, got {0}")]
    TooFewPairs(usize),
    #[error("every paired difference is zero")]
    DegeneratePairs,
    #[error("question sets differ")]
    QuestionMismatch,
    #[error("response matrix is empty")]
    EmptyMatrix,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {what}")]
    BadRow { row: usize, what: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Respondents × questions → chosen option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMatrix {
    pub respondents: Vec<String>,
    pub questions: Vec<String>,
    /// `choices[respondent][question]`; `None` is an unanswered cell.
    pub choices: Vec<Vec<Option<OptionLabel>>>,
    pub elapsed_s: Vec<Option<f64>>,
}

impl ResponseMatrix {
    pub fn n_respondents(&self) -> usize {
        self.respondents.len()
    }

    fn select(&self, keep: &[usize]) -> ResponseMatrix {
        ResponseMatrix {
            respondents: keep.iter().map(|&i| self.respondents[i].clone()).collect(),
            questions: self.questions.clone(),
            choices: keep.iter().map(|&i| self.choices[i].clone()).collect(),
            elapsed_s: keep.iter().map(|&i| self.elapsed_s[i]).collect(),
        }
    }

    /// Reads `respondent,elapsed_s,q1..qN` CSV.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, BaselineError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 {
            return Err(BaselineError::BadRow { row: 0, what: "expected respondent,elapsed_s,<questions>".into() });
        }
        let questions: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
        let mut m = ResponseMatrix { respondents: vec![], questions, choices: vec![], elapsed_s: vec![] };
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            m.respondents.push(rec.get(0).unwrap_or_default().to_string());
            let elapsed = rec.get(1).unwrap_or_default();
            m.elapsed_s.push(if elapsed.is_empty() {
                None
            } else {
                Some(elapsed.parse().map_err(|_| BaselineError::BadRow { row, what: format!("elapsed_s {elapsed:?}") })?)
            });
            let mut cells = Vec::with_capacity(m.questions.len());
            for j in 0..m.questions.len() {
                let cell = rec.get(j + 2).unwrap_or_default();
                cells.push(if cell.is_empty() {
                    None
                } else {
                    Some(cell.parse().map_err(|_| BaselineError::BadRow { row, what: format!("cell {cell:?}") })?)
                });
            }
            m.choices.push(cells);
        }
        Ok(m)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, BaselineError> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<(), BaselineError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["respondent".to_string(), "elapsed_s".to_string()];
        header.extend(self.questions.iter().cloned());
        w.write_record(&header)?;
        for (i, r) in self.respondents.iter().enumerate() {
            let mut row = vec![r.clone(), self.elapsed_s[i].map(|e| e.to_string()).unwrap_or_default()];
            row.extend(self.choices[i].iter().map(|c| c.map(|c| c.to_string()).unwrap_or_default()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub type AnswerKey = BTreeMap<String, OptionLabel>;

/// Reads an answer key: either `{"q1": "A", ...}` or a question bank.
pub fn load_key(path: impl AsRef<Path>) -> Result<AnswerKey, BaselineError> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(key) = serde_json::from_str::<AnswerKey>(&text) {
        return Ok(key);
    }
    let bank: QuestionBank = serde_json::from_str(&text)?;
    Ok(bank.questions.into_iter().map(|q| (q.id, q.correct_option)).collect())
}

fn key_for<'a>(matrix: &ResponseMatrix, key: &'a AnswerKey) -> Result<Vec<&'a OptionLabel>, BaselineError> {
    matrix.questions.iter().map(|q| key.get(q).ok_or_else(|| BaselineError::KeyIncomplete(q.clone()))).collect()
}

pub const DEFAULT_MIN_ELAPSED_S: f64 = 120.0;

/// Drops respondents who finished faster than `min_elapsed_s` or gave the
/// same option to every question. Returns the clean matrix and the ids
/// that were flagged.
pub fn filter_bad_actors(matrix: &ResponseMatrix, min_elapsed_s: f64) -> (ResponseMatrix, Vec<String>) {
    let mut keep = Vec::new();
    let mut flagged = Vec::new();
    for (i, id) in matrix.respondents.iter().enumerate() {
        let too_fast = matrix.elapsed_s[i].is_some_and(|e| e < min_elapsed_s);
        let answered: Vec<OptionLabel> = matrix.choices[i].iter().flatten().copied().collect();
        let uniform = answered.len() >= 2 && answered.iter().all(|a| *a == answered[0]);
        if too_fast || uniform {
            flagged.push(id.clone());
        } else {
            keep.push(i);
        }
    }
    (matrix.select(&keep), flagged)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaKind {
    #[default]
    Population,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub mu: f64,
    pub sigma: f64,
    pub n: usize,
}

impl ScoreDistribution {
    pub fn from_scores(scores: &[f64], kind: SigmaKind) -> Self {
        let n = scores.len();
        if n == 0 {
            return Self { mu: 0.0, sigma: 0.0, n };
        }
        let mu = scores.iter().sum::<f64>() / n as f64;
        let ss: f64 = scores.iter().map(|s| (s - mu).powi(2)).sum();
        let denom = match kind {
            SigmaKind::Population => n as f64,
            SigmaKind::Sample => (n as f64 - 1.0).max(1.0),
        };
        Self { mu, sigma: (ss / denom).sqrt(), n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualScores {
    pub fractions: Vec<f64>,
    pub distribution: ScoreDistribution,
    /// Respondents with unanswered cells (scored as incorrect).
    pub incomplete: Vec<String>,
}

pub fn score_individuals(matrix: &ResponseMatrix, key: &AnswerKey) -> Result<IndividualScores, BaselineError> {
    score_individuals_with(matrix, key, SigmaKind::Population)
}

pub fn score_individuals_with(matrix: &ResponseMatrix, key: &AnswerKey, kind: SigmaKind) -> Result<IndividualScores, BaselineError> {
    let answers = key_for(matrix, key)?;
    let nq = matrix.questions.len().max(1) as f64;
    let mut incomplete = Vec::new();
    let fractions: Vec<f64> = matrix
        .choices
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if row.iter().any(Option::is_none) {
                incomplete.push(matrix.respondents[i].clone());
            }
            row.iter().zip(&answers).filter(|(c, k)| c.as_ref() == Some(**k)).count() as f64 / nq
        })
        .collect();
    let distribution = ScoreDistribution::from_scores(&fractions, kind);
    Ok(IndividualScores { fractions, distribution, incomplete })
}

/// Fraction of respondents answering each question correctly.
pub fn per_question_accuracy(matrix: &ResponseMatrix, key: &AnswerKey) -> Result<Vec<f64>, BaselineError> {
    let answers = key_for(matrix, key)?;
    let n = matrix.n_respondents().max(1) as f64;
    Ok((0..matrix.questions.len())
        .map(|q| matrix.choices.iter().filter(|row| row[q].as_ref() == Some(answers[q])).count() as f64 / n)
        .collect())
}

/// Maps a fraction-correct score onto the IQ scale of `dist`:
/// `100 + 15 (x - mu) / sigma`.
pub fn iq_score(x: f64, dist: &ScoreDistribution) -> Result<f64, BaselineError> {
    if dist.sigma <= 0.0 || !dist.sigma.is_finite() {
        return Err(BaselineError::DegenerateDistribution);
    }
    Ok(100.0 + 15.0 * (x - dist.mu) / dist.sigma)
}

/// Percentile of `iq` on the standard IQ scale (mean 100, sd 15).
pub fn percentile(iq: f64) -> f64 {
    let std_normal = Normal::standard();
    std_normal.cdf((iq - 100.0) / 15.0) * 100.0
}

/// Modal option. Ties are broken uniformly at random and flagged.
pub fn plurality<R: Rng + ?Sized>(votes: &[OptionLabel], rng: &mut R) -> Result<(OptionLabel, bool), BaselineError> {
    let mut counts = [0usize; 8];
    for v in votes {
        counts[v.index()] += 1;
    }
    let best = *counts.iter().max().expect("eight counters");
    if best == 0 {
        return Err(BaselineError::NoVotes);
    }
    let tied: Vec<OptionLabel> = OptionLabel::ALL.iter().copied().filter(|o| counts[o.index()] == best).collect();
    if tied.len() == 1 {
        Ok((tied[0], false))
    } else {
        Ok((tied[rng.random_range(0..tied.len())], true))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WocParams {
    pub n_groups: usize,
    pub group_size_low: usize,
    pub group_size_high: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for WocParams {
    fn default() -> Self {
        Self { n_groups: 6, group_size_low: 5, group_size_high: 6, reps: 10_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WocResult {
    pub per_question: Vec<f64>,
    pub overall: f64,
    /// Accuracy of every repetition, in repetition order.
    pub rep_accuracy: Vec<f64>,
    /// Group-level plurality decisions that needed a random tie-break.
    pub group_ties: u64,
    /// Population-level decisions that needed a random tie-break.
    pub population_ties: u64,
}

struct RepOutcome {
    correct: Vec<bool>,
    group_ties: u64,
    population_ties: u64,
}

/// Random stream for one bootstrap repetition; independent of scheduling.
fn rep_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

fn woc_rep(matrix: &ResponseMatrix, answers: &[&OptionLabel], params: &WocParams, rep: usize) -> RepOutcome {
    let mut rng = rep_rng(params.seed, rep);
    let n = matrix.n_respondents();
    let groups: Vec<Vec<usize>> = (0..params.n_groups)
        .map(|_| {
            let size = rng.random_range(params.group_size_low..=params.group_size_high);
            (0..size).map(|_| rng.random_range(0..n)).collect()
        })
        .collect();

    let mut out = RepOutcome { correct: Vec::with_capacity(answers.len()), group_ties: 0, population_ties: 0 };
    let mut votes = Vec::new();
    for (q, key) in answers.iter().enumerate() {
        let mut group_answers = Vec::with_capacity(groups.len());
        for g in &groups {
            votes.clear();
            votes.extend(g.iter().filter_map(|&r| matrix.choices[r][q]));
            if let Ok((a, tie)) = plurality(&votes, &mut rng) {
                out.group_ties += u64::from(tie);
                group_answers.push(a);
            }
        }
        let answer = match plurality(&group_answers, &mut rng) {
            Ok((a, tie)) => {
                out.population_ties += u64::from(tie);
                Some(a)
            }
            Err(_) => None,
        };
        out.correct.push(answer.as_ref() == Some(*key));
    }
    out
}

/// Bootstrap wisdom-of-crowd accuracy.
///
/// Each repetition draws `n_groups` groups of respondents with replacement
/// (sizes uniform in `low..=high`), takes each group's plurality answer per
/// question, then the plurality across the group answers. Repetition `i`
/// uses its own random stream derived from `(seed, i)`, so results do not
/// depend on how repetitions are scheduled across threads.
pub fn woc_bootstrap(matrix: &ResponseMatrix, key: &AnswerKey, params: &WocParams) -> Result<WocResult, BaselineError> {
    if matrix.n_respondents() == 0 || matrix.questions.is_empty() {
        return Err(BaselineError::EmptyMatrix);
    }
    let answers = key_for(matrix, key)?;
    let reps: Vec<RepOutcome> = (0..params.reps).into_par_iter().map(|rep| woc_rep(matrix, &answers, params, rep)).collect();

    let nq = answers.len();
    let mut hits = vec![0u64; nq];
    let mut rep_accuracy = Vec::with_capacity(reps.len());
    let (mut group_ties, mut population_ties) = (0, 0);
    for r in &reps {
        for (h, c) in hits.iter_mut().zip(&r.correct) {
            *h += u64::from(*c);
        }
        rep_accuracy.push(r.correct.iter().filter(|c| **c).count() as f64 / nq as f64);
        group_ties += r.group_ties;
        population_ties += r.population_ties;
    }
    let denom = params.reps.max(1) as f64;
    let per_question: Vec<f64> = hits.iter().map(|h| *h as f64 / denom).collect();
    let overall = rep_accuracy.iter().sum::<f64>() / denom;
    Ok(WocResult { per_question, overall, rep_accuracy, group_ties, population_ties })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
    pub mean_diff: f64,
    pub n: usize,
}

/// Two-sided paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, BaselineError> {
    if a.len() != b.len() {
        return Err(BaselineError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(BaselineError::TooFewPairs(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().all(|x| *x == 0.0) {
        return Err(BaselineError::DegeneratePairs);
    }
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let df = nf - 1.0;
    if var == 0.0 {
        return Ok(TTest { t: mean.signum() * f64::INFINITY, p: 0.0, df, mean_diff: mean, n });
    }
    let t = mean / (var / nf).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest { t, p, df, mean_diff: mean, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    /// Pairs with `a > b`.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// Exact two-sided binomial p-value; ties are discarded.
    pub p: f64,
}

pub fn sign_test(a: &[f64], b: &[f64]) -> Result<SignTest, BaselineError> {
    if a.len() != b.len() {
        return Err(BaselineError::LengthMismatch(a.len(), b.len()));
    }
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let ties = a.len() - wins - losses;
    let n = wins + losses;
    let k = wins.min(losses);
    // P(X <= k) for X ~ Binomial(n, 1/2), accumulated in log space
    let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
    let mut ln_choose = 0.0f64;
    let mut tail = 0.0;
    for i in 0..=k {
        if i > 0 {
            ln_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        tail += (ln_choose + ln_half_n).exp();
    }
    let p = if n == 0 { 1.0 } else { (2.0 * tail).min(1.0) };
    Ok(SignTest { wins, losses, ties, p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRow {
    pub question_id: String,
    pub individual: f64,
    pub other: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfSummary {
    pub count: usize,
    pub individual_mean: f64,
    pub other_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyCurve {
    /// Easiest (highest individual accuracy) first.
    pub rows: Vec<DifficultyRow>,
    pub hardest_half: HalfSummary,
}

/// Orders questions by individual accuracy and summarizes the hardest half.
pub fn difficulty_curve(individual: &[(String, f64)], other: &[(String, f64)]) -> Result<DifficultyCurve, BaselineError> {
    let other_by_id: BTreeMap<&str, f64> = other.iter().map(|(q, a)| (q.as_str(), *a)).collect();
    if other_by_id.len() != individual.len() || other.len() != individual.len() {
        return Err(BaselineError::QuestionMismatch);
    }
    let mut rows = individual
        .iter()
        .map(|(q, a)| {
            let o = other_by_id.get(q.as_str()).ok_or(BaselineError::QuestionMismatch)?;
            Ok(DifficultyRow { question_id: q.clone(), individual: *a, other: *o })
        })
        .collect::<Result<Vec<_>, BaselineError>>()?;
    rows.sort_by(|a, b| b.individual.total_cmp(&a.individual));

    let count = (rows.len() / 2).max(rows.len().min(1));
    let hard = &rows[rows.len() - count..];
    let mean = |f: fn(&DifficultyRow) -> f64| if count == 0 { 0.0 } else { hard.iter().map(f).sum::<f64>() / count as f64 };
    let hardest_half = HalfSummary { count, individual_mean: mean(|r| r.individual), other_mean: mean(|r| r.other) };
    Ok(DifficultyCurve { rows, hardest_half })
}

/// Published summary of the human baseline cohort on a 36-item
/// matrix-reasoning test. Golden reference values, not response data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceCohort {
    pub questions: usize,
    pub individual_mean: f64,
    pub individual_sd: f64,
    pub woc_accuracy: f64,
    pub csi_accuracy: f64,
    pub hardest_half_individual: f64,
    pub hardest_half_csi: f64,
}

pub const REFERENCE_COHORT: ReferenceCohort = ReferenceCohort {
    questions: 36,
    individual_mean: 0.457,
    individual_sd: 0.186,
    woc_accuracy: 0.641,
    csi_accuracy: 0.805,
    hardest_half_individual: 0.295,
    hardest_half_csi: 0.701,
};

impl ReferenceCohort {
    pub fn distribution(&self) -> ScoreDistribution {
        ScoreDistribution { mu: self.individual_mean, sigma: self.individual_sd, n: 35 }
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;
    use OptionLabel::*;

    fn matrix(rows: &[(&str, Option<f64>, &[OptionLabel])]) -> ResponseMatrix {
        let nq = rows.first().map(|r| r.2.len()).unwrap_or(0);
        ResponseMatrix {
            respondents: rows.iter().map(|r| r.0.to_string()).collect(),
            questions: (1..=nq).map(|i| format!("q{i}")).collect(),
            choices: rows.iter().map(|r| r.2.iter().map(|c| Some(*c)).collect()).collect(),
            elapsed_s: rows.iter().map(|r| r.1).collect(),
        }
    }

    fn key(labels: &[OptionLabel]) -> AnswerKey {
        labels.iter().enumerate().map(|(i, l)| (format!("q{}", i + 1), *l)).collect()
    }

    #[test]
    fn bad_actor_rules() {
        let m = matrix(&[("uniform", Some(900.0), &[A, A, A]), ("fast", Some(30.0), &[A, B, C]), ("ok", Some(900.0), &[A, B, C])]);
        let (clean, flagged) = filter_bad_actors(&m, DEFAULT_MIN_ELAPSED_S);
        assert_eq!(flagged, vec!["uniform", "fast"]);
        assert_eq!(clean.respondents, vec!["ok"]);
    }

    #[test]
    fn scoring_arithmetic() {
        let m = matrix(&[("a", None, &[A, B, C, D, E]), ("b", None, &[A, B, H, D, E])]);
        let k = key(&[A, B, H, H, E]);
        let s = score_individuals(&m, &k).unwrap();
        assert_abs_diff_eq!(s.fractions[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(s.fractions[1], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(s.distribution.mu, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(s.distribution.sigma, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn two_respondents_mu_sigma() {
        let d = ScoreDistribution::from_scores(&[0.4, 0.6], SigmaKind::Population);
        assert_abs_diff_eq!(d.mu, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d.sigma, 0.1, epsilon = 1e-12);
        let d = ScoreDistribution::from_scores(&[1.0, 1.0, 1.0], SigmaKind::Population);
        assert_eq!((d.mu, d.sigma), (1.0, 0.0));
        let d = ScoreDistribution::from_scores(&[0.4, 0.6], SigmaKind::Sample);
        assert_abs_diff_eq!(d.sigma, 0.1f64 * 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn missing_cells_count_wrong() {
        let mut m = matrix(&[("a", None, &[A, B])]);
        m.choices[0][1] = None;
        let s = score_individuals(&m, &key(&[A, B])).unwrap();
        assert_eq!(s.fractions, vec![0.5]);
        assert_eq!(s.incomplete, vec!["a"]);
        assert!(matches!(score_individuals(&m, &key(&[A])), Err(BaselineError::KeyIncomplete(q)) if q == "q2"));
    }

    #[test]
    fn iq_golden_values() {
        let d = REFERENCE_COHORT.distribution();
        assert_abs_diff_eq!(iq_score(0.805, &d).unwrap(), 128.0645, epsilon = 1e-3);
        assert_abs_diff_eq!(iq_score(0.641, &d).unwrap(), 114.8387, epsilon = 1e-3);
        assert_eq!(iq_score(0.457, &d).unwrap(), 100.0);
        assert!(matches!(iq_score(0.5, &ScoreDistribution { mu: 0.5, sigma: 0.0, n: 3 }), Err(BaselineError::DegenerateDistribution)));
    }

    #[test]
    fn iq_is_affine() {
        let d = ScoreDistribution { mu: 0.42, sigma: 0.17, n: 10 };
        for k in -2..=2 {
            assert_abs_diff_eq!(iq_score(d.mu + k as f64 * d.sigma, &d).unwrap(), 100.0 + 15.0 * k as f64, epsilon = 1e-9);
        }
    }

    #[test]
    fn percentile_values() {
        assert_eq!(percentile(100.0), 50.0);
        assert!((96.5..=97.5).contains(&percentile(128.0)));
        assert!((83.5..=84.5).contains(&percentile(115.0)));
        assert_abs_diff_eq!(percentile(115.0), 84.134474606854, epsilon = 1e-7);
    }

    #[test]
    fn plurality_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(plurality(&[A, A, B], &mut rng).unwrap(), (A, false));
        let (w, tie) = plurality(&[A, B], &mut rng).unwrap();
        assert!(tie && (w == A || w == B));
        let again = plurality(&[A, B], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let first = plurality(&[A, B], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(again, first);
        assert!(matches!(plurality(&[], &mut rng), Err(BaselineError::NoVotes)));
    }

    #[test]
    fn tie_breaks_are_roughly_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = (0..4000).filter(|_| plurality(&[A, B], &mut rng).unwrap().0 == A).count();
        assert!((1800..2200).contains(&a), "{a}");
    }

    #[test]
    fn woc_all_correct() {
        let m = matrix(&[("a", None, &[A, B]), ("b", None, &[A, B]), ("c", None, &[A, B])]);
        let r = woc_bootstrap(&m, &key(&[A, B]), &WocParams { reps: 200, ..Default::default() }).unwrap();
        assert_eq!(r.overall, 1.0);
        assert_eq!(r.per_question, vec![1.0, 1.0]);
        assert_eq!(r.group_ties + r.population_ties, 0);
    }

    #[test]
    fn woc_is_seed_deterministic() {
        let m = matrix(&[("a", None, &[A, B]), ("b", None, &[C, B]), ("c", None, &[A, D]), ("d", None, &[E, E])]);
        let p = WocParams { reps: 500, seed: 7, ..Default::default() };
        let a = woc_bootstrap(&m, &key(&[A, B]), &p).unwrap();
        assert_eq!(a, woc_bootstrap(&m, &key(&[A, B]), &p).unwrap());
        assert_ne!(a.rep_accuracy, woc_bootstrap(&m, &key(&[A, B]), &WocParams { seed: 8, ..p }).unwrap().rep_accuracy);
    }

    #[test]
    fn woc_halves_agree() {
        let m = matrix(&[
            ("a", None, &[A, B, C]),
            ("b", None, &[C, B, C]),
            ("c", None, &[A, D, H]),
            ("d", None, &[E, E, C]),
            ("e", None, &[A, B, G]),
        ]);
        let r = woc_bootstrap(&m, &key(&[A, B, C]), &WocParams { reps: 4000, seed: 3, ..Default::default() }).unwrap();
        let (h1, h2) = r.rep_accuracy.split_at(2000);
        let mean = |h: &[f64]| h.iter().sum::<f64>() / h.len() as f64;
        let var = |h: &[f64]| {
            let m = mean(h);
            h.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (h.len() - 1) as f64
        };
        let se = (var(h1) / 2000.0 + var(h2) / 2000.0).sqrt();
        assert!((mean(h1) - mean(h2)).abs() < 3.0 * se);
    }

    #[test]
    fn t_test_small_case() {
        let t = paired_t_test(&[1.0, 1.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(t.t, 1.0, epsilon = 1e-12);
        // df = 2: p = 1 - t / sqrt(2 + t^2)
        assert_abs_diff_eq!(t.p, 1.0 - 1.0 / 3f64.sqrt(), epsilon = 1e-9);
        assert!(matches!(paired_t_test(&[1.0, 2.0], &[1.0, 2.0]), Err(BaselineError::DegeneratePairs)));
        assert!(matches!(paired_t_test(&[1.0], &[0.0]), Err(BaselineError::TooFewPairs(1))));
        assert!(matches!(paired_t_test(&[1.0, 2.0], &[0.0]), Err(BaselineError::LengthMismatch(2, 1))));
    }

    #[test]
    fn t_test_shift_goes_significant() {
        let mut last = 1.0;
        for n in [5usize, 20, 80] {
            let b: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
            let a: Vec<f64> = b.iter().enumerate().map(|(i, x)| x + 0.1 + if i % 2 == 0 { 0.05 } else { -0.05 }).collect();
            let p = paired_t_test(&a, &b).unwrap().p;
            assert!(p < last);
            last = p;
        }
        assert!(last < 1e-6);
        let exact = paired_t_test(&[1.5, 2.5, 3.5], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((exact.t, exact.p), (f64::INFINITY, 0.0));
    }

    #[test]
    fn sign_test_values() {
        // 9 of 10 wins: p = 2 * 11 / 1024
        let a: Vec<f64> = (0..10).map(|i| if i == 0 { 0.0 } else { 1.0 }).collect();
        let b = vec![0.5; 10];
        let s = sign_test(&a, &b).unwrap();
        assert_eq!((s.wins, s.losses, s.ties), (9, 1, 0));
        assert_abs_diff_eq!(s.p, 22.0 / 1024.0, epsilon = 1e-12);
        assert_eq!(sign_test(&[1.0], &[1.0]).unwrap().p, 1.0);
        assert_eq!(sign_test(&[1.0, 0.0], &[0.0, 1.0]).unwrap().p, 1.0);
    }

    #[test]
    fn difficulty_halves() {
        let ind: Vec<(String, f64)> = [0.9, 0.7, 0.3, 0.1].iter().enumerate().map(|(i, a)| (format!("q{i}"), *a)).collect();
        let c = difficulty_curve(&ind, &ind).unwrap();
        assert_abs_diff_eq!(c.hardest_half.individual_mean, 0.2, epsilon = 1e-12);
        assert_eq!(c.hardest_half.count, 2);
        assert_eq!(c.hardest_half.individual_mean, c.hardest_half.other_mean);
        assert_eq!(c.rows.iter().map(|r| r.question_id.as_str()).collect::<Vec<_>>(), ["q0", "q1", "q2", "q3"]);
        let shuffled: Vec<(String, f64)> = vec![ind[2].clone(), ind[0].clone(), ind[3].clone(), ind[1].clone()];
        assert_eq!(difficulty_curve(&shuffled, &ind).unwrap().rows, c.rows);
        assert!(matches!(difficulty_curve(&ind, &ind[..3]), Err(BaselineError::QuestionMismatch)));
    }

    #[test]
    fn csv_round_trip() {
        let text = "respondent,elapsed_s,q1,q2\nr1,900,A,\nr2,,h,C\n";
        let m = ResponseMatrix::from_csv(text.as_bytes()).unwrap();
        assert_eq!(m.choices, vec![vec![Some(A), None], vec![Some(H), Some(C)]]);
        assert_eq!(m.elapsed_s, vec![Some(900.0), None]);
        let mut out = Vec::new();
        m.to_csv(&mut out).unwrap();
        assert_eq!(ResponseMatrix::from_csv(out.as_slice()).unwrap(), m);
        assert!(ResponseMatrix::from_csv("respondent,elapsed_s,q1\nr1,1,Z\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn plurality_ignores_order(votes in prop::collection::vec(0usize..8, 1..20), seed in any::<u64>()) {
            let v: Vec<OptionLabel> = votes.iter().map(|i| OptionLabel::ALL[*i]).collect();
            let mut rev = v.clone();
            rev.reverse();
            let a = plurality(&v, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = plurality(&rev, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(a, b);
            let mut more = v.clone();
            more.push(a.0);
            let c = plurality(&more, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(c, (a.0, false));
        }

        #[test]
        fn percentile_is_monotone(a in 40.0f64..160.0, b in 40.0f64..160.0) {
            if a < b {
                prop_assert!(percentile(a) <= percentile(b));
            }
        }
    }
}
