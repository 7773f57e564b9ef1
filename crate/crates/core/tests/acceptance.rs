//! Exit criteria for the deliberation engine. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use csi_core::baselines::{iq_score, paired_t_test, percentile, sign_test, woc_bootstrap, ResponseMatrix, ScoreDistribution, WocParams};
use csi_core::conviction::LexicalEstimator;
use csi_core::model::{Author, OptionLabel, SessionConfig};
use csi_core::orchestrator::events::{decode_jsonl, Event, EventRecord};
use csi_core::orchestrator::replay::{recompute_colors, replay};
use csi_core::orchestrator::report::DEFAULT_RATIONALE_K;
use csi_core::orchestrator::{Recipient, ServerFrame};
use csi_core::partition::partition;
use csi_core::sim::{calibrate, compare, prepare_questions, run_csi, synthetic_questions, CsiRun, ExperimentConfig, SimModelConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------------------
// formula golden values

fn iq_golden() -> Outcome {
    let d = ScoreDistribution { mu: 0.457, sigma: 0.186, n: 35 };
    let csi = iq_score(0.805, &d).unwrap();
    let woc = iq_score(0.641, &d).unwrap();
    outcome((csi - 128.0).abs() <= 0.5 && (woc - 115.0).abs() <= 0.5, format!("iq(0.805)={csi:.4} iq(0.641)={woc:.4}"))
}

fn percentile_golden() -> Outcome {
    let (a, b, c) = (percentile(128.0), percentile(115.0), percentile(100.0));
    outcome((96.5..=97.5).contains(&a) && (83.5..=84.5).contains(&b) && c == 50.0, format!("p(128)={a:.3} p(115)={b:.3} p(100)={c}"))
}

// ---------------------------------------------------------------------------
// bootstrap vs exhaustive enumeration

/// Exact expected accuracy of two-groups-of-two hierarchical plurality,
/// enumerating every ordered draw of the four members and both rounds of
/// coin-flip tie breaks.
fn exhaustive_two_by_two(choices: &[Vec<OptionLabel>], key: &[OptionLabel]) -> f64 {
    let n = choices.len();
    let nq = key.len();
    let mut total = 0.0;
    for q in 0..nq {
        let mut p_correct = 0.0;
        let weight = 1.0 / (n.pow(4) as f64);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        // each group answer: either agreed or one of the two with 1/2
                        let g1: Vec<(OptionLabel, f64)> = pair_outcomes(choices[a][q], choices[b][q]);
                        let g2: Vec<(OptionLabel, f64)> = pair_outcomes(choices[c][q], choices[d][q]);
                        for (x, px) in &g1 {
                            for (y, py) in &g2 {
                                for (z, pz) in pair_outcomes(*x, *y) {
                                    if z == key[q] {
                                        p_correct += weight * px * py * pz;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        total += p_correct;
    }
    total / nq as f64
}

fn pair_outcomes(x: OptionLabel, y: OptionLabel) -> Vec<(OptionLabel, f64)> {
    if x == y {
        vec![(x, 1.0)]
    } else {
        vec![(x, 0.5), (y, 0.5)]
    }
}

fn bootstrap_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let instances = 40;
    for i in 0..instances {
        let n = rng.random_range(1..=5);
        let nq = rng.random_range(1..=3);
        let alphabet = rng.random_range(2..=4);
        let choices: Vec<Vec<OptionLabel>> =
            (0..n).map(|_| (0..nq).map(|_| OptionLabel::ALL[rng.random_range(0..alphabet)]).collect()).collect();
        let key: Vec<OptionLabel> = (0..nq).map(|_| OptionLabel::ALL[rng.random_range(0..alphabet)]).collect();
        let matrix = ResponseMatrix {
            respondents: (0..n).map(|r| format!("r{r}")).collect(),
            questions: (0..nq).map(|q| format!("q{q}")).collect(),
            choices: choices.iter().map(|row| row.iter().map(|c| Some(*c)).collect()).collect(),
            elapsed_s: vec![None; n],
        };
        let answer_key = (0..nq).map(|q| (format!("q{q}"), key[q])).collect();
        let params = WocParams { n_groups: 2, group_size_low: 2, group_size_high: 2, reps: 10_000, seed: i };
        let got = woc_bootstrap(&matrix, &answer_key, &params).unwrap().overall;
        worst = worst.max((got - exhaustive_two_by_two(&choices, &key)).abs());
    }
    outcome(worst <= 0.02, format!("{instances} instances, max |bootstrap - exact| = {worst:.4}"))
}

// ---------------------------------------------------------------------------
// partition

fn partition_reproduction() -> Outcome {
    let config = SessionConfig::default();
    let ids = |n: usize| (0..n).map(|i| format!("p{i}")).collect::<Vec<_>>();
    let plan = partition(&ids(35), &config).unwrap();
    let seven_fives = plan.sizes() == vec![5; 7];

    let mut off_sizes = Vec::new();
    let mut cover_errors = Vec::new();
    for n in 8..=300 {
        let roster = ids(n);
        let plan = match partition(&roster, &config) {
            Ok(p) => p,
            Err(e) => {
                cover_errors.push(format!("{n}: {e}"));
                continue;
            }
        };
        let members: Vec<&String> = plan.subgroups.iter().flat_map(|g| &g.member_ids).collect();
        let unique: BTreeSet<&String> = members.iter().copied().collect();
        if members.len() != n || unique.len() != n || roster.iter().any(|r| !unique.contains(r)) {
            cover_errors.push(format!("{n}: not a disjoint cover"));
        }
        if plan.sizes().iter().any(|s| *s != 5 && *s != 6) {
            off_sizes.push(format!("{n}->{:?}", plan.sizes()));
        }
    }
    let pass = seven_fives && off_sizes.is_empty() && cover_errors.is_empty();
    outcome(
        pass,
        format!(
            "35 -> {:?}; n in [8,300]: {} cover errors, sizes outside {{5,6}} at {}",
            plan.sizes(),
            cover_errors.len(),
            if off_sizes.is_empty() { "none".to_string() } else { off_sizes.join(" ") }
        ),
    )
}

// ---------------------------------------------------------------------------
// simulated session pool

struct PooledSession {
    run: CsiRun,
    records: Vec<EventRecord>,
}

fn session_pool(count: u64) -> Vec<PooledSession> {
    (0..count)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(8..=60);
            let nq = rng.random_range(1..=3);
            let model = SimModelConfig::default();
            let mut bank = synthetic_questions(nq, seed);
            for q in &mut bank {
                q.time_limit_s = rng.random_range(60..=240);
            }
            let questions = prepare_questions(&bank, &model, seed);
            let population = calibrate(n, &questions, &model, seed).unwrap();
            let session = SessionConfig {
                conviction_half_life_s: rng.random_range(20.0..120.0),
                relay_cadence_s: Some([5.0, 10.0, 20.0][rng.random_range(0..3)]),
                relay_min_interval_s: [5.0, 15.0, 30.0][rng.random_range(0..3)],
                ..SessionConfig::default()
            };
            let run = run_csi(&population, &questions, &session, &model, seed, true).unwrap();
            let records = decode_jsonl(&run.session.export_event_log()).unwrap();
            PooledSession { run, records }
        })
        .collect()
}

fn routing_isolation(pool: &[PooledSession]) -> Outcome {
    let mut checked = 0usize;
    let mut violations = 0usize;
    for s in pool {
        let plan = s.run.session.plan();
        for d in &s.run.deliveries {
            let ServerFrame::Message { message } = &d.frame else { continue };
            checked += 1;
            let recipient_group = match &d.recipient {
                Recipient::Participant(p) => plan.subgroup_of(p),
                Recipient::Agent(a) => plan.subgroups.iter().find(|g| &g.agent_id == a).map(|g| g.id),
            };
            let sender_ok = match &message.author {
                Author::Participant(p) => plan.subgroup_of(p) == Some(message.subgroup_id),
                Author::Agent(a) => {
                    plan.get(message.subgroup_id).is_some_and(|g| &g.agent_id == a)
                        && message.relay_meta.as_ref().is_some_and(|m| m.source_subgroup_id != message.subgroup_id)
                }
            };
            if recipient_group != Some(message.subgroup_id) || !sender_ok {
                violations += 1;
            }
        }
    }
    outcome(checked > 0 && violations == 0, format!("{} sessions, {checked} message deliveries, {violations} cross-subgroup", pool.len()))
}

fn no_new_content(pool: &[PooledSession]) -> Outcome {
    let mut relays = 0usize;
    let mut bad = 0usize;
    for s in pool {
        let mut by_group: BTreeMap<u32, Vec<String>> = BTreeMap::new();
        for r in &s.records {
            match &r.event {
                Event::QuestionOpened(_) => by_group.clear(),
                Event::MessagePosted(p) if !p.message.author.is_agent() => {
                    by_group.entry(p.message.subgroup_id).or_default().push(p.message.text.clone())
                }
                Event::RelaySent(sent) => {
                    relays += 1;
                    let source = by_group.get(&sent.payload.source_subgroup_id).map(Vec::as_slice).unwrap_or(&[]);
                    if !source.iter().any(|t| t.contains(&sent.payload.summary_text)) {
                        bad += 1;
                    }
                }
                _ => {}
            }
        }
    }
    outcome(relays > 0 && bad == 0, format!("{} sessions, {relays} relays, {bad} summaries not found in source subgroup", pool.len()))
}

fn color_correctness(pool: &[PooledSession]) -> Outcome {
    let checks: Vec<_> = pool.iter().flat_map(|s| recompute_colors(&s.records)).collect();
    let mismatches = checks.iter().filter(|c| c.stored != c.recomputed).count();
    let introducing = checks.iter().filter(|c| c.stored == csi_core::model::PropagationColor::Introducing).count();
    outcome(!checks.is_empty() && mismatches == 0, format!("{} relays ({introducing} introducing), {mismatches} mismatches", checks.len()))
}

fn argmax_invariance(pool: &[PooledSession]) -> Outcome {
    let mut changed = 0usize;
    let mut answers = 0usize;
    for s in pool {
        let base = replay(&s.records, None, DEFAULT_RATIONALE_K).unwrap();
        for c in [0.1, 2.0, 10.0] {
            let scaled: Vec<EventRecord> = s
                .records
                .iter()
                .cloned()
                .map(|mut r| {
                    if let Event::ConvictionUpdated(u) = &mut r.event {
                        u.event = u.event.scaled(c);
                    }
                    r
                })
                .collect();
            let again = replay(&scaled, None, DEFAULT_RATIONALE_K).unwrap();
            for (a, b) in base.questions.iter().zip(&again.questions) {
                answers += 1;
                if a.record.selection.option != b.record.selection.option {
                    changed += 1;
                }
            }
        }
    }
    outcome(answers > 0 && changed == 0, format!("{} sessions, {answers} scaled answers, {changed} changed", pool.len()))
}

fn replay_determinism(pool: &[PooledSession]) -> Outcome {
    let mut compared = 0usize;
    let mut diffs = Vec::new();
    for (i, s) in pool.iter().enumerate() {
        let live = &s.run.session;
        for estimator in [None, Some(&LexicalEstimator as &dyn csi_core::conviction::Estimator)] {
            let r = replay(&s.records, estimator, DEFAULT_RATIONALE_K).unwrap();
            for q in &r.questions {
                compared += 1;
                let id = &q.record.question_id;
                let rec = live.question_record(id).unwrap();
                let report = live.generate_report(id).unwrap();
                let same = serde_json::to_string(&q.record.selection).unwrap() == serde_json::to_string(&rec.selection).unwrap()
                    && serde_json::to_string(&q.record.sentiment.export()).unwrap()
                        == serde_json::to_string(&rec.sentiment.export()).unwrap()
                    && q.report.rationale_text == report.rationale_text
                    && serde_json::to_string(&q.report).unwrap() == serde_json::to_string(&report).unwrap();
                if !same {
                    diffs.push(format!("session {i} {id}"));
                }
            }
        }
    }
    outcome(
        compared > 0 && diffs.is_empty(),
        format!("{} sessions, {compared} question replays, {} differ {:?}", pool.len(), diffs.len(), diffs),
    )
}

// ---------------------------------------------------------------------------
// model-level ordering and relay ablation

fn model_ordering() -> Outcome {
    let questions = synthetic_questions(36, 42);
    let config = ExperimentConfig { participants: 35, runs: 50, seed: 42, ..ExperimentConfig::default() };
    assert_eq!(config.model.truth_quality_bonus, 0.5);
    assert_eq!(config.model.target_accuracy, 0.457);
    let with = compare(&config, &questions, &|_, _| {}).unwrap();
    let mut ablated = config.clone();
    ablated.session.relay_cadence_s = None;
    let without = compare(&ablated, &questions, &|_, _| {}).unwrap();

    let p = |s: &csi_core::sim::CompareSummary, a: &str, b: &str| s.comparison(a, b).unwrap().sign_test.p;
    let order = with.csi.accuracy > with.woc.accuracy && with.woc.accuracy > with.individual.accuracy;
    let sig = [p(&with, "csi", "woc"), p(&with, "woc", "individual"), p(&with, "csi", "individual")];
    let ablation_p = p(&without, "csi", "woc");
    let pass = order && sig.iter().all(|p| *p < 0.05) && ablation_p >= 0.05;
    let runs_sub: Vec<f64> = without.runs.iter().map(|r| r.subgroup_plurality).collect();
    let runs_csi: Vec<f64> = without.runs.iter().map(|r| r.csi).collect();
    let vs_sub = sign_test(&runs_csi, &runs_sub).unwrap();
    outcome(
        pass,
        format!(
            "ind={:.3} woc={:.3} csi={:.3} (sign p csi/woc={:.2e} woc/ind={:.2e} csi/ind={:.2e}); relays off: csi={:.3} vs woc sign p={:.2e} (need >= 0.05), vs subgroup plurality {:.3} sign p={:.2e}",
            with.individual.accuracy,
            with.woc.accuracy,
            with.csi.accuracy,
            sig[0],
            sig[1],
            sig[2],
            without.csi.accuracy,
            ablation_p,
            runs_sub.iter().sum::<f64>() / runs_sub.len() as f64,
            vs_sub.p,
        ),
    )
}

// ---------------------------------------------------------------------------
// t-test vs frozen independent oracle

#[derive(Deserialize)]
struct Fixture {
    a: Vec<f64>,
    b: Vec<f64>,
    t: f64,
    p: f64,
}

#[derive(Deserialize)]
struct Fixtures {
    fixtures: Vec<Fixture>,
}

fn t_test_oracle() -> Outcome {
    let data: Fixtures = serde_json::from_str(include_str!("fixtures/ttest_oracle.json")).unwrap();
    let (mut dt, mut dp) = (0.0f64, 0.0f64);
    for f in &data.fixtures {
        let r = paired_t_test(&f.a, &f.b).unwrap();
        dt = dt.max((r.t - f.t).abs());
        dp = dp.max((r.p - f.p).abs());
    }
    outcome(
        data.fixtures.len() == 20 && dt <= 1e-6 && dp <= 1e-4,
        format!("{} fixtures, max |dt|={dt:.2e} max |dp|={dp:.2e}", data.fixtures.len()),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        println!("{} {name}: {} [{:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    };

    report("iq golden values", &iq_golden);
    report("percentile golden values", &percentile_golden);
    report("bootstrap matches exhaustive enumeration", &bootstrap_oracle);
    report("partition reproduction", &partition_reproduction);

    let pool = session_pool(100);
    report("routing isolation", &|| routing_isolation(&pool));
    report("relays add no new content", &|| no_new_content(&pool));
    report("propagation colors recompute", &|| color_correctness(&pool));
    report("argmax invariant under conviction scaling", &|| argmax_invariance(&pool[..50]));
    report("replay determinism", &|| replay_determinism(&pool[..50]));

    report("model ordering and relay ablation", &model_ordering);
    report("paired t-test matches oracle", &t_test_oracle);

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
