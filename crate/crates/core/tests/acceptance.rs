//! Acceptance suite. Runs every criterion in order and prints one
//! `PASS`/`FAIL` line each; exits nonzero if any fails.
//!
//! Pass criterion numbers as arguments to run a subset:
//! `cargo test --test acceptance -- 6 7`.

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synsrl_core::corpus::{
    draw_pool, generate_synthetic, parse_spans, random_binary_tree, sample_fraction, strip_noisy_parses, Corpus,
    GenConfig, Instance, Split,
};
use synsrl_core::decode::{
    astar, decode, default_core_roles, gradient_inference, viterbi, ConstraintMode, ConstraintSet, DecodeOptions,
    DecoderKind,
};
use synsrl_core::evalmetrics::{evaluate, format_disagreement_delta, format_f1_delta, Averaging, EvalSummary};
use synsrl_core::objectives::{joint_loss, nll_loss, proximity_penalty, si_loss, JointWeights, SiCoefficient};
use synsrl_core::span_algebra::{
    disagreement_rate, extract_spans, inconsistency_score, ExtractMode, LabeledSpan, SpanSet, TagSet,
};
use synsrl_core::tagger::{backward, forward, init_params, EmissionMatrix, ModelDims, ModelParams};
use synsrl_core::train::{
    predict_with, prepare_corpus, train_joint_scratch, train_joint_ssl, train_supervised, train_supervised_continue,
    Objective, TrainConfig, TrainReport,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "decoder exactness", Duration::from_secs(60), decoder_exactness),
        (2, "gradient exactness", Duration::from_secs(120), gradient_exactness),
        (3, "formula identities", Duration::MAX, formula_identities),
        (4, "si sign law", Duration::MAX, si_sign_law),
        (5, "hard-constraint guarantee", Duration::MAX, hard_constraint_guarantee),
        (6, "joint vs baseline trend", Duration::from_secs(15 * 60), joint_trend),
        (7, "semi-supervised trend", Duration::MAX, ssl_trend),
        (8, "decoder comparison trend", Duration::MAX, decoder_trend),
        (9, "noise robustness", Duration::MAX, noise_robustness),
        (10, "manifest replay", Duration::MAX, manifest_replay),
    ];
    let selected: HashSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, limit, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = outcome.pass && in_time;
        let limit_note = if limit == Duration::MAX {
            String::new()
        } else {
            format!(" (limit {}s)", limit.as_secs())
        };
        println!(
            "criterion {id:>2} {name}: {} [{:.1}s{limit_note}] {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            outcome.detail
        );
        if !pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// Shared helpers.

fn random_emissions(n: usize, t: usize, rng: &mut ChaCha8Rng) -> EmissionMatrix {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..t).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
    EmissionMatrix::from_rows(&rows).unwrap()
}

fn random_parse(n: usize, rng: &mut ChaCha8Rng) -> SpanSet {
    let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
    parse_spans(&random_binary_tree(&words, rng))
}

fn tagsets() -> Vec<TagSet> {
    vec![
        TagSet::new(["ARG0", "ARG1"]).unwrap(),
        TagSet::new(["ARG0", "ARG1", "ARG2"]).unwrap(),
        TagSet::new(["ARG0", "V"]).unwrap(),
        TagSet::new(["ARG0", "ARG1", "V"]).unwrap(),
    ]
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------------------
// 1. Decoders against an exhaustive oracle written here, independent of the
// library's own enumerator.

/// Role of a tag and whether it begins a span, under the O / B-r / I-r layout.
fn tag_role(t: usize) -> Option<(usize, bool)> {
    (t > 0).then(|| ((t - 1) / 2, t % 2 == 1))
}

/// Spans of a BIO-valid sequence as (start, end, role).
fn oracle_spans(tags: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut out: Vec<(usize, usize, usize)> = Vec::new();
    for (i, &t) in tags.iter().enumerate() {
        match tag_role(t) {
            Some((r, true)) => out.push((i, i, r)),
            Some((_, false)) => out.last_mut().expect("valid sequence").1 = i,
            None => {}
        }
    }
    out
}

struct OracleProfile {
    syntactic: ConstraintMode,
    unique: bool,
}

/// Exhaustive argmax over BIO-valid sequences for several profiles at once.
/// Sequences are enumerated in lexicographic order and only a strictly better
/// score replaces the incumbent. With no feasible sequence the answer is the
/// best BIO-valid one, matching the decoders' degenerate fallback.
fn oracle(em: &EmissionMatrix, tagset: &TagSet, parse: &SpanSet, profiles: &[OracleProfile]) -> Vec<Vec<usize>> {
    let n = em.n();
    let t_count = em.num_tags();
    let core: Vec<usize> = default_core_roles(tagset);
    let predicate = tagset.predicate_role();
    let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; profiles.len()];
    let mut best_bio: Option<(f64, Vec<usize>)> = None;
    let mut tags = Vec::with_capacity(n);

    #[allow(clippy::too_many_arguments)]
    fn rec(
        tags: &mut Vec<usize>,
        n: usize,
        t_count: usize,
        em: &EmissionMatrix,
        parse: &SpanSet,
        core: &[usize],
        predicate: Option<usize>,
        profiles: &[OracleProfile],
        best: &mut [Option<(f64, Vec<usize>)>],
        best_bio: &mut Option<(f64, Vec<usize>)>,
    ) {
        if tags.len() == n {
            let ll: f64 = tags.iter().enumerate().map(|(i, &t)| em.logprob(i, t)).sum();
            if best_bio.as_ref().is_none_or(|(b, _)| ll > *b) {
                *best_bio = Some((ll, tags.clone()));
            }
            let spans = oracle_spans(tags);
            let syn_violations = spans
                .iter()
                .filter(|&&(s, e, r)| Some(r) != predicate && s != e && !parse.contains_bounds(s, e))
                .count();
            let unique_violations: usize = core
                .iter()
                .map(|&c| spans.iter().filter(|&&(_, _, r)| r == c).count().saturating_sub(1))
                .sum();
            for (p, slot) in profiles.iter().zip(best.iter_mut()) {
                let mut score = ll;
                match p.syntactic {
                    ConstraintMode::Hard if syn_violations > 0 => continue,
                    ConstraintMode::Penalty(w) => score -= w * syn_violations as f64,
                    _ => {}
                }
                if p.unique && unique_violations > 0 {
                    continue;
                }
                if slot.as_ref().is_none_or(|(b, _)| score > *b) {
                    *slot = Some((score, tags.clone()));
                }
            }
            return;
        }
        for t in 0..t_count {
            if let Some((r, false)) = tag_role(t) {
                match tags.last().and_then(|&p| tag_role(p)) {
                    Some((pr, _)) if pr == r => {}
                    _ => continue,
                }
            }
            tags.push(t);
            rec(tags, n, t_count, em, parse, core, predicate, profiles, best, best_bio);
            tags.pop();
        }
    }

    rec(
        &mut tags,
        n,
        t_count,
        em,
        parse,
        &core,
        predicate,
        profiles,
        &mut best,
        &mut best_bio,
    );
    let fallback = best_bio.expect("all-outside is valid").1;
    best.into_iter()
        .map(|b| b.map_or_else(|| fallback.clone(), |(_, t)| t))
        .collect()
}

fn decoder_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_001);
    let tagsets = tagsets();
    let profiles = [
        ("bio", ConstraintMode::Off, false),
        ("bio+syn-hard", ConstraintMode::Hard, false),
        ("bio+syn-penalty-0.5", ConstraintMode::Penalty(0.5), false),
        ("bio+syn-penalty-2", ConstraintMode::Penalty(2.0), false),
        ("bio+u-hard", ConstraintMode::Off, true),
    ];
    let oracle_profiles: Vec<OracleProfile> = profiles
        .iter()
        .map(|&(_, syntactic, unique)| OracleProfile { syntactic, unique })
        .collect();
    let instances = 1200;
    let mut checks = 0;
    let mut mismatches = Vec::new();
    for k in 0..instances {
        let ts = &tagsets[k % tagsets.len()];
        let n = rng.gen_range(1..=6);
        let em = if k % 10 == 9 {
            // Uniform rows: every sequence ties, so only the tie rule decides.
            EmissionMatrix::from_rows(&vec![vec![0.0; ts.len()]; n]).unwrap()
        } else {
            random_emissions(n, ts.len(), &mut rng)
        };
        let parse = random_parse(n, &mut rng);
        let expected = oracle(&em, ts, &parse, &oracle_profiles);
        let got_viterbi = viterbi(&em, ts, &ConstraintSet::bio()).unwrap().tags;
        checks += 1;
        if got_viterbi != expected[0] {
            mismatches.push(format!("viterbi #{k}"));
        }
        for (p, &(name, syntactic, unique)) in profiles.iter().enumerate() {
            let mut c = ConstraintSet::bio().with_syntactic(syntactic);
            if unique {
                c = c.with_unique_core(ConstraintMode::Hard, default_core_roles(ts));
            }
            let got = astar(&em, ts, &c, Some(&parse)).unwrap().tags;
            checks += 1;
            if got != expected[p] {
                mismatches.push(format!("astar {name} #{k}"));
            }
        }
    }
    Outcome::new(
        mismatches.is_empty(),
        format!(
            "{instances} instances, {checks} decoder/oracle comparisons, {} mismatches{}",
            mismatches.len(),
            mismatches.first().map_or(String::new(), |m| format!(" (first: {m})"))
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Central finite differences through the tagger.

fn tiny_instance(rng: &mut ChaCha8Rng, tagset: &TagSet) -> (Instance, Vec<usize>, Vec<usize>) {
    let n = rng.gen_range(1..=4);
    let tokens: Vec<String> = (0..n).map(|_| format!("tok{}", rng.gen_range(0..12))).collect();
    let predicate = rng.gen_range(0..n);
    let t = tagset.len();
    let random_seq = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.gen_range(0..t)).collect::<Vec<usize>>();
    let gold = random_seq(rng);
    let pred = random_seq(rng);
    (Instance::new(tokens, predicate, None, None).unwrap(), gold, pred)
}

/// Fraction of coordinates within relative error 1e-4, plus a count of
/// coordinates where either side is non-negligible.
fn fd_agreement(
    params: &ModelParams,
    analytic: &[f64],
    loss: &dyn Fn(&ModelParams) -> f64,
) -> (usize, usize, usize, f64) {
    let h = 1e-5;
    let mut ok = 0;
    let mut nontrivial = 0;
    let mut worst: f64 = 0.0;
    let mut p = params.clone();
    for i in 0..params.values.len() {
        let w = params.values[i];
        p.values[i] = w + h;
        let up = loss(&p);
        p.values[i] = w - h;
        let down = loss(&p);
        p.values[i] = w;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let scale = a.abs().max(numeric.abs());
        let rel = if scale < 1e-7 { 0.0 } else { (a - numeric).abs() / scale };
        if scale >= 1e-7 {
            nontrivial += 1;
        }
        if rel < 1e-4 {
            ok += 1;
        }
        worst = worst.max(rel);
    }
    (ok, params.values.len(), nontrivial, worst)
}

fn gradient_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_002);
    let tagset = TagSet::new(["ARG0", "ARG1"]).unwrap();
    let dims = ModelDims::new(16, 4, 4, tagset.len()).unwrap();
    let mut ok = 0;
    let mut total = 0;
    let mut nontrivial = 0;
    let mut worst: f64 = 0.0;
    let mut tally = |r: (usize, usize, usize, f64)| {
        ok += r.0;
        total += r.1;
        nontrivial += r.2;
        worst = worst.max(r.3);
    };
    for k in 0..6u64 {
        let mut params = init_params(dims, 100 + k);
        // Nonzero biases so every block is exercised away from its init.
        for v in params.values.iter_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
        let (inst, gold, pred) = tiny_instance(&mut rng, &tagset);
        let s: f64 = rng.gen_range(-1.0..1.0);
        type Objective<'a> = Box<dyn Fn(&EmissionMatrix) -> synsrl_core::objectives::LossValue + 'a>;
        let objectives: Vec<Objective> = vec![
            Box::new(|em| nll_loss(em, &gold).unwrap()),
            Box::new(|em| si_loss(em, &pred, s).unwrap()),
            Box::new(|em| joint_loss(em, Some(&gold), &pred, s, JointWeights::new(0.5, 0.5).unwrap()).unwrap()),
            Box::new(|em| joint_loss(em, Some(&gold), &pred, s, JointWeights::new(1.0, 1.0).unwrap()).unwrap()),
        ];
        for objective in &objectives {
            let em = forward(&params, &inst).unwrap();
            let analytic = backward(&params, &inst, &objective(&em).sensitivity).unwrap().values;
            let loss = |p: &ModelParams| objective(&forward(p, &inst).unwrap()).scalar;
            tally(fd_agreement(&params, &analytic, &loss));
        }
        let mut reference = params.clone();
        for v in reference.values.iter_mut() {
            *v += rng.gen_range(-0.5..0.5);
        }
        let beta = 0.7;
        let analytic = proximity_penalty(&params, &reference, beta).unwrap().param_gradient.unwrap();
        let loss = |p: &ModelParams| proximity_penalty(p, &reference, beta).unwrap().scalar;
        tally(fd_agreement(&params, &analytic, &loss));
    }
    let share = ok as f64 / total as f64;
    Outcome::new(
        share > 0.99,
        format!(
            "{ok}/{total} coordinates within 1e-4 ({:.3}%), {nontrivial} non-negligible, worst relative error {worst:.2e}",
            100.0 * share
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. Closed-form identities.

fn formula_identities() -> Outcome {
    let mut failures = Vec::new();
    // Score law, via the coefficient and via real span sets.
    let parse = SpanSet::parse([(0, 1), (2, 3), (4, 5), (0, 3), (0, 5)]);
    let cases = [
        (vec![LabeledSpan::role(0, 1, "ARG0"), LabeledSpan::role(2, 3, "ARG1")], 0.0),
        (vec![LabeledSpan::role(0, 3, "ARG0"), LabeledSpan::role(5, 5, "ARG1")], 0.0),
        (vec![LabeledSpan::role(0, 1, "ARG0"), LabeledSpan::role(2, 4, "ARG1")], 0.5),
        (vec![LabeledSpan::role(2, 3, "ARG0"), LabeledSpan::role(4, 4, "V"), LabeledSpan::role(1, 1, "ARG2"), LabeledSpan::role(5, 5, "ARG1")], 0.0),
        (vec![LabeledSpan::role(0, 1, "ARG0"), LabeledSpan::role(3, 4, "ARG1")], 0.5),
        (vec![LabeledSpan::role(1, 2, "ARG0")], 1.0),
    ];
    for (spans, d_expected) in cases {
        let srl = SpanSet::srl(spans).unwrap();
        let d = disagreement_rate(&srl, &parse);
        let expected_s = 2.0 * d_expected - 1.0;
        if d != d_expected
            || inconsistency_score(d) != expected_s
            || SiCoefficient::Score.coefficient(d) != expected_s
        {
            failures.push(format!("s at d={d_expected}"));
        }
    }
    for (d, s) in [(0.0, -1.0), (0.5, 0.0), (1.0, 1.0)] {
        if inconsistency_score(d) != s {
            failures.push(format!("s({d})"));
        }
    }

    // Joint loss is the weighted sum, coordinate-wise, in emission and
    // parameter space.
    let mut rng = ChaCha8Rng::seed_from_u64(20_003);
    let tagset = TagSet::new(["ARG0", "ARG1", "V"]).unwrap();
    let dims = ModelDims::new(32, 6, 5, tagset.len()).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..50u64 {
        let params = init_params(dims, k);
        let (inst, gold, pred) = tiny_instance(&mut rng, &tagset);
        let s: f64 = rng.gen_range(-1.0..=1.0);
        let (a1, a2) = (rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
        let em = forward(&params, &inst).unwrap();
        let nll = nll_loss(&em, &gold).unwrap();
        let si = si_loss(&em, &pred, s).unwrap();
        let joint = joint_loss(&em, Some(&gold), &pred, s, JointWeights::new(a1, a2).unwrap()).unwrap();
        worst = worst.max((joint.scalar - (a1 * nll.scalar + a2 * si.scalar)).abs());
        for i in 0..joint.sensitivity.values.len() {
            let combined = a1 * nll.sensitivity.values[i] + a2 * si.sensitivity.values[i];
            worst = worst.max((joint.sensitivity.values[i] - combined).abs());
        }
        let gj = backward(&params, &inst, &joint.sensitivity).unwrap().values;
        let gn = backward(&params, &inst, &nll.sensitivity).unwrap().values;
        let gs = backward(&params, &inst, &si.sensitivity).unwrap().values;
        for i in 0..gj.len() {
            worst = worst.max((gj[i] - (a1 * gn[i] + a2 * gs[i])).abs());
        }
    }
    if worst > 1e-10 {
        failures.push(format!("joint decomposition off by {worst:.2e}"));
    }

    // Delta rendering on reference baseline/joint pairs.
    let table = [
        (84.40, 84.75, 14.69, 14.48, "(+0.35)", "(−1.43%)"),
        (78.56, 79.09, 17.01, 16.25, "(+0.53)", "(−4.47%)"),
        (67.28, 68.02, 21.17, 20.49, "(+0.74)", "(−3.21%)"),
    ];
    for (bf, jf, bd, jd, f_text, d_text) in table {
        let f = format_f1_delta(bf, jf);
        let d = format_disagreement_delta(bd, jd);
        if f != f_text || d != d_text {
            failures.push(format!("delta {f} {d}, expected {f_text} {d_text}"));
        }
    }
    let rendered = format_disagreement_delta(17.01, 16.25);
    Outcome::new(
        failures.is_empty(),
        format!(
            "s = 2d - 1 at d in {{0, 0.5, 1}}; joint decomposition max error {worst:.1e}; 17.01 -> 16.25 renders {rendered}{}",
            if failures.is_empty() { String::new() } else { format!("; failures: {failures:?}") }
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. One SGD step on the SI loss moves log p(ŷ) against the sign of s.

fn si_sign_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_004);
    let tagset = TagSet::new(["ARG0", "ARG1", "V"]).unwrap();
    let dims = ModelDims::new(64, 4, 4, tagset.len()).unwrap();
    let lr = 1e-3;
    let mut exceptions = 0;
    let (mut negative, mut positive) = (0, 0);
    for k in 0..100u64 {
        let params = init_params(dims, 500 + k);
        let n = rng.gen_range(1..=8);
        let tokens: Vec<String> = (0..n).map(|_| format!("w{}", rng.gen_range(0..30))).collect();
        let inst = Instance::new(tokens, rng.gen_range(0..n), None, None).unwrap();
        let em = forward(&params, &inst).unwrap();
        let pred = viterbi(&em, &tagset, &ConstraintSet::bio()).unwrap().tags;
        let magnitude = rng.gen_range(0.05..=1.0);
        let s = if k % 2 == 0 { -magnitude } else { magnitude };
        let grads = backward(&params, &inst, &si_loss(&em, &pred, s).unwrap().sensitivity).unwrap();
        let mut stepped = params.clone();
        for (w, g) in stepped.values.iter_mut().zip(&grads.values) {
            *w -= lr * g;
        }
        let before = em.sequence_logprob(&pred);
        let after = forward(&stepped, &inst).unwrap().sequence_logprob(&pred);
        let holds = if s < 0.0 { after > before } else { after < before };
        if s < 0.0 {
            negative += 1;
        } else {
            positive += 1;
        }
        if !holds {
            exceptions += 1;
        }
    }
    Outcome::new(
        exceptions == 0,
        format!("100 instances ({negative} with s < 0, {positive} with s > 0), {exceptions} exceptions"),
    )
}

// ---------------------------------------------------------------------------
// Synthetic experiment setup shared by criteria 5 to 9.

const SEEDS: [u64; 3] = [1, 2, 3];
const CORPUS_SEED: u64 = 7;

struct Data {
    train: Corpus,
    train20: Corpus,
    dev: Corpus,
    test: Corpus,
    unlabeled: Corpus,
    tagset: TagSet,
}

fn corpus(n: usize, noise: f64, split: Split, offset: u64) -> Corpus {
    let config = GenConfig {
        n_instances: n,
        noise_rate: noise,
        seed: CORPUS_SEED.wrapping_add(offset << 32),
        ..GenConfig::default()
    };
    generate_synthetic(&config, split).unwrap().corpus
}

fn data() -> &'static Data {
    static DATA: OnceLock<Data> = OnceLock::new();
    DATA.get_or_init(|| {
        let train = corpus(2000, 0.1, Split::Train, 0);
        let tagset = train.tagset().unwrap();
        Data {
            train20: corpus(2000, 0.2, Split::Train, 0),
            dev: corpus(500, 0.1, Split::Dev, 1),
            test: corpus(500, 0.1, Split::Test, 2),
            unlabeled: corpus(2000, 0.1, Split::Unlabeled, 3),
            train,
            tagset,
        }
    })
}

#[derive(Clone)]
struct Run {
    params: ModelParams,
    report: TrainReport,
}

fn labeled(train: &Corpus, fraction: f64, seed: u64) -> Corpus {
    sample_fraction(train, fraction, seed).unwrap().labeled
}

fn supervised(train: &Corpus, fraction: f64, seed: u64) -> Run {
    let d = data();
    let config = TrainConfig {
        seed,
        labeled_fraction: fraction,
        ..TrainConfig::for_objective(Objective::Supervised)
    };
    let (params, report) = train_supervised(&labeled(train, fraction, seed), &d.dev, &d.tagset, &config).unwrap();
    Run { params, report }
}

fn joint_scratch(train: &Corpus, fraction: f64, seed: u64) -> Run {
    let d = data();
    let config = TrainConfig {
        seed,
        labeled_fraction: fraction,
        ..TrainConfig::for_objective(Objective::JointScratch)
    };
    let (params, report) = train_joint_scratch(&labeled(train, fraction, seed), &d.dev, &d.tagset, &config).unwrap();
    Run { params, report }
}

fn joint_ssl(train: &Corpus, start: &ModelParams, multiplier: usize, seed: u64) -> Run {
    let d = data();
    let labeled = labeled(train, 0.01, seed);
    let pool = draw_pool(&d.unlabeled, multiplier * labeled.len(), seed);
    let config = TrainConfig {
        seed,
        labeled_fraction: 0.01,
        unlabeled_multiplier: multiplier,
        ..TrainConfig::for_objective(Objective::JointSslContinue)
    };
    let (params, report) = train_joint_ssl(start, &labeled, &pool, &d.dev, &d.tagset, &config).unwrap();
    Run { params, report }
}

fn b1_runs() -> &'static Vec<Run> {
    static B1: OnceLock<Vec<Run>> = OnceLock::new();
    B1.get_or_init(|| SEEDS.iter().map(|&s| supervised(&data().train, 0.01, s)).collect())
}

fn f1(run: &Run) -> f64 {
    run.report.best_dev.f1
}

fn dis(run: &Run) -> f64 {
    run.report.best_dev.avg_disagreement.expect("dev carries parses")
}

// ---------------------------------------------------------------------------
// 5. Hard syntactic A* reaches zero disagreement; gradient inference never
// raises it.

fn per_instance_d(tags: &[usize], tagset: &TagSet, parse: &SpanSet) -> f64 {
    disagreement_rate(&extract_spans(tags, tagset, ExtractMode::Lenient).unwrap(), parse)
}

fn hard_constraint_guarantee() -> Outcome {
    let d = data();
    let clean = strip_noisy_parses(&d.test, &d.tagset).unwrap();
    let prepared = prepare_corpus(&clean, &d.tagset).unwrap();
    let golds: Vec<Vec<usize>> = prepared.iter().map(|p| p.gold.clone().unwrap()).collect();
    let parses: Vec<Option<SpanSet>> = prepared.iter().map(|p| p.parse.clone()).collect();
    let hard = DecodeOptions {
        decoder: DecoderKind::Astar,
        constraints: ConstraintSet::bio().with_syntactic(ConstraintMode::Hard),
        ..DecodeOptions::default()
    };
    let dims = TrainConfig::for_objective(Objective::Supervised).dims(&d.tagset).unwrap();
    let models = [("untrained", init_params(dims, 11)), ("B1 seed 1", b1_runs()[0].params.clone())];
    let mut corpus_rates = Vec::new();
    let mut increases = 0;
    let mut compared = 0;
    for (name, params) in &models {
        let preds = predict_with(params, &prepared, &d.tagset, &hard).unwrap();
        let summary = evaluate(&preds, &golds, &parses, &d.tagset, Averaging::Micro).unwrap();
        corpus_rates.push((name.to_string(), summary.avg_disagreement.unwrap()));
        for p in prepared.iter().filter(|p| p.parse.is_some()) {
            let parse = p.parse.as_ref().unwrap();
            let (em, _) = params.forward_tokens(&p.tokens, p.predicate).unwrap();
            let v = viterbi(&em, &d.tagset, &ConstraintSet::bio()).unwrap().tags;
            let g = gradient_inference(&em, &d.tagset, parse, 20, 0.1).unwrap().tags;
            compared += 1;
            if per_instance_d(&g, &d.tagset, parse) > per_instance_d(&v, &d.tagset, parse) {
                increases += 1;
            }
        }
    }
    // Random emissions and parses add instances the models would never produce.
    let mut rng = ChaCha8Rng::seed_from_u64(20_005);
    let mut random_nonzero = 0;
    for k in 0..500 {
        let ts = &tagsets()[k % 4];
        let n = rng.gen_range(1..=10);
        let em = random_emissions(n, ts.len(), &mut rng);
        let parse = random_parse(n, &mut rng);
        let c = ConstraintSet::bio().with_syntactic(ConstraintMode::Hard);
        let a = astar(&em, ts, &c, Some(&parse)).unwrap().tags;
        if per_instance_d(&a, ts, &parse) != 0.0 {
            random_nonzero += 1;
        }
        let v = viterbi(&em, ts, &ConstraintSet::bio()).unwrap().tags;
        let g = gradient_inference(&em, ts, &parse, 20, 0.1).unwrap().tags;
        compared += 1;
        if per_instance_d(&g, ts, &parse) > per_instance_d(&v, ts, &parse) {
            increases += 1;
        }
    }
    let all_zero = corpus_rates.iter().all(|(_, r)| *r == 0.0);
    Outcome::new(
        all_zero && random_nonzero == 0 && increases == 0,
        format!(
            "A* hard corpus disagreement {}; random instances with d > 0: {random_nonzero}/500; gradient inference raised d on {increases}/{compared} instances",
            corpus_rates
                .iter()
                .map(|(n, r)| format!("{n} {r:.1}%"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. J1/J10 against B1/B10.

fn joint_trend() -> Outcome {
    let d = data();
    let b1 = b1_runs();
    let j1: Vec<Run> = SEEDS.iter().map(|&s| joint_scratch(&d.train, 0.01, s)).collect();
    let b10: Vec<Run> = SEEDS.iter().map(|&s| supervised(&d.train, 0.1, s)).collect();
    let j10: Vec<Run> = SEEDS.iter().map(|&s| joint_scratch(&d.train, 0.1, s)).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, b, j) in [("1%", b1, &j1), ("10%", &b10, &j10)] {
        let (bf, jf) = (mean(b.iter().map(f1)), mean(j.iter().map(f1)));
        let (bd, jd) = (mean(b.iter().map(dis)), mean(j.iter().map(dis)));
        pass &= jf > bf && jd < bd;
        parts.push(format!(
            "{label}: F1 B {:.2} J {:.2} {}, disagreement B {bd:.2} J {jd:.2} {}",
            100.0 * bf,
            100.0 * jf,
            format_f1_delta(100.0 * bf, 100.0 * jf),
            format_disagreement_delta(bd, jd)
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

// ---------------------------------------------------------------------------
// 7. Continued training with the joint objective on parse-only pools.

struct SslRuns {
    further: Vec<Run>,
    /// Indexed by multiplier - 1, then seed.
    joint: Vec<Vec<Run>>,
}

fn ssl_runs() -> &'static SslRuns {
    static SSL: OnceLock<SslRuns> = OnceLock::new();
    SSL.get_or_init(|| {
        let d = data();
        let b1 = b1_runs();
        let further = SEEDS
            .iter()
            .zip(b1)
            .map(|(&seed, b)| {
                let config = TrainConfig {
                    seed,
                    labeled_fraction: 0.01,
                    ..TrainConfig::for_objective(Objective::SupervisedContinue)
                };
                let (params, report) =
                    train_supervised_continue(&b.params, &labeled(&d.train, 0.01, seed), &d.dev, &d.tagset, &config)
                        .unwrap();
                Run { params, report }
            })
            .collect();
        let joint = (1..=5)
            .map(|m| {
                SEEDS
                    .iter()
                    .zip(b1)
                    .map(|(&seed, b)| joint_ssl(&d.train, &b.params, m, seed))
                    .collect()
            })
            .collect();
        SslRuns { further, joint }
    })
}

fn ssl_trend() -> Outcome {
    let b1 = mean(b1_runs().iter().map(f1));
    let ssl = ssl_runs();
    let further = mean(ssl.further.iter().map(f1));
    let joint: Vec<f64> = ssl.joint.iter().map(|runs| mean(runs.iter().map(f1))).collect();
    let gains: Vec<f64> = joint.iter().map(|j| j - b1).collect();
    let j5 = joint[4];
    let beats = j5 > b1 && j5 > further;
    let monotone = gains.windows(2).all(|w| w[0] <= w[1]);
    let gain_text: Vec<String> = gains
        .iter()
        .enumerate()
        .map(|(i, g)| format!("{}x {:+.2}", i + 1, 100.0 * g))
        .collect();
    let mut detail = format!(
        "mean dev F1: B1 {:.2}, B1-further {:.2}, B1-J5x {:.2}; SSL gains {}",
        100.0 * b1,
        100.0 * further,
        100.0 * j5,
        gain_text.join(", ")
    );
    if monotone {
        detail.push_str("; gains weakly increasing");
    } else {
        detail.push_str("; EXCEPTION FLAGGED: gains not monotone, full reports follow");
        for (m, runs) in ssl.joint.iter().enumerate() {
            for run in runs {
                println!("# B1-J{}x report\n{}", m + 1, run.report.to_records());
            }
        }
    }
    Outcome::new(beats, detail)
}

// ---------------------------------------------------------------------------
// 8. Decoders on the best SSL model.

fn decoder_trend() -> Outcome {
    let d = data();
    let ssl = ssl_runs();
    let best = (0..ssl.joint.len())
        .max_by(|&a, &b| {
            let fa = mean(ssl.joint[a].iter().map(f1));
            let fb = mean(ssl.joint[b].iter().map(f1));
            fa.total_cmp(&fb).then(b.cmp(&a))
        })
        .unwrap();
    let kept = prepare_corpus(&d.test, &d.tagset).unwrap();
    let stripped = prepare_corpus(&strip_noisy_parses(&d.test, &d.tagset).unwrap(), &d.tagset).unwrap();
    let golds: Vec<Vec<usize>> = kept.iter().map(|p| p.gold.clone().unwrap()).collect();
    let parses: Vec<Option<SpanSet>> = kept.iter().map(|p| p.parse.clone()).collect();
    let score = |params: &ModelParams, input: &[synsrl_core::train::Prepared], options: &DecodeOptions| -> EvalSummary {
        let preds = predict_with(params, input, &d.tagset, options).unwrap();
        evaluate(&preds, &golds, &parses, &d.tagset, Averaging::Micro).unwrap()
    };
    let viterbi_opts = DecodeOptions::default();
    let gradient_opts = DecodeOptions {
        decoder: DecoderKind::Gradient,
        ..DecodeOptions::default()
    };
    let astar_opts = DecodeOptions {
        decoder: DecoderKind::Astar,
        constraints: ConstraintSet::bio().with_syntactic(ConstraintMode::Hard),
        ..DecodeOptions::default()
    };
    let (mut vit, mut grad, mut a_noisy, mut a_clean) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for run in &ssl.joint[best] {
        vit.push(score(&run.params, &kept, &viterbi_opts).f1);
        grad.push(score(&run.params, &stripped, &gradient_opts).f1);
        a_noisy.push(score(&run.params, &kept, &astar_opts).f1);
        a_clean.push(score(&run.params, &stripped, &astar_opts).f1);
    }
    let (vit, grad, a_noisy, a_clean) = (mean(vit), mean(grad), mean(a_noisy), mean(a_clean));
    // Sanity: the dispatcher's fallback for missing parses is plain Viterbi.
    let probe = &kept[0];
    let (em, _) = ssl.joint[best][0].params.forward_tokens(&probe.tokens, probe.predicate).unwrap();
    let fallback_ok = decode(&em, &d.tagset, None, &gradient_opts).unwrap().tags
        == viterbi(&em, &d.tagset, &ConstraintSet::bio()).unwrap().tags;
    Outcome::new(
        grad >= vit && a_noisy < a_clean && fallback_ok,
        format!(
            "best SSL model B1-J{}x, mean test F1: Viterbi {:.2}, gradient (noise-free parses) {:.2} {}, A* noisy parses {:.2}, A* stripped parses {:.2}",
            best + 1,
            100.0 * vit,
            100.0 * grad,
            format_f1_delta(100.0 * vit, 100.0 * grad),
            100.0 * a_noisy,
            100.0 * a_clean
        ),
    )
}

// ---------------------------------------------------------------------------
// 9. Joint scratch training on all labeled data at 10% and 20% parse noise.
// Dev stays at 10% noise so both runs are scored on the same instances. The
// 10%-labeled and semi-supervised pipelines are reported for information.

fn noise_robustness() -> Outcome {
    let d = data();
    let full = |train: &Corpus| mean(SEEDS.iter().map(|&s| f1(&joint_scratch(train, 1.0, s))));
    let (full10, full20) = (full(&d.train), full(&d.train20));
    let loss = 100.0 * (full10 - full20);
    let j10 = |train: &Corpus| mean(SEEDS.iter().map(|&s| f1(&joint_scratch(train, 0.1, s))));
    let j10_loss = 100.0 * (j10(&d.train) - j10(&d.train20));
    let ssl10 = mean(ssl_runs().joint[4].iter().map(f1));
    let ssl20 = mean(SEEDS.iter().map(|&seed| {
        let b1 = supervised(&d.train20, 0.01, seed);
        f1(&joint_ssl(&d.train20, &b1.params, 5, seed))
    }));
    let ssl_loss = 100.0 * (ssl10 - ssl20);
    Outcome::new(
        loss < 1.0,
        format!(
            "joint scratch, all labels: mean dev F1 {:.2} at 10% noise, {:.2} at 20%, loss {loss:.2} F1 (informational: 10% labels loss {j10_loss:.2}, B1-J5x loss {ssl_loss:.2})",
            100.0 * full10,
            100.0 * full20
        ),
    )
}

// ---------------------------------------------------------------------------
// 10. Every command replays bit-identically from its manifest.

fn synsrl(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_synsrl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn manifest_outputs(dir: &Path, manifest: &str) -> Vec<(String, Vec<u8>)> {
    let text = std::fs::read_to_string(dir.join(manifest)).unwrap();
    text.lines()
        .filter_map(|l| l.split_once('='))
        .filter(|(k, _)| k.starts_with("output.") && k.ends_with(".path"))
        .filter(|(_, p)| *p != "<stdout>")
        .map(|(_, p)| (p.to_string(), std::fs::read(dir.join(p)).unwrap()))
        .collect()
}

fn manifest_replay() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let commands: Vec<(Vec<&str>, &str)> = vec![
        (
            vec!["synth", "--out-dir", "data", "--n-train", "300", "--n-dev", "80", "--n-test", "80", "--n-unlabeled", "300"],
            "data/manifest.txt",
        ),
        (
            vec![
                "train", "--train", "data/train.txt", "--dev", "data/dev.txt", "--objective", "supervised",
                "--fraction", "0.1", "--max-epochs", "4", "--patience", "4", "--seeds", "1,2", "--out-dir", "runs",
                "--name", "b10",
            ],
            "runs/b10.manifest.txt",
        ),
        (
            vec![
                "train", "--train", "data/train.txt", "--dev", "data/dev.txt", "--unlabeled", "data/unlabeled.txt",
                "--objective", "joint-ssl", "--from", "runs/b10-seed{seed}.ckpt", "--fraction", "0.1",
                "--unlabeled-mult", "2", "--max-epochs", "2", "--patience", "2", "--seeds", "1,2", "--out-dir",
                "runs", "--name", "b10-j2x",
            ],
            "runs/b10-j2x.manifest.txt",
        ),
        (
            vec!["decode", "--checkpoint", "runs/b10-j2x-seed1.ckpt", "--input", "data/test.txt", "--out", "pred/viterbi.txt"],
            "pred/viterbi.txt.manifest.txt",
        ),
        (
            vec![
                "decode", "--checkpoint", "runs/b10-j2x-seed1.ckpt", "--input", "data/test.txt", "--out",
                "pred/astar.txt", "--decoder", "astar", "--constraints", "bio,syn,u", "--syntax-mode", "penalty:2",
                "--noisy-parses", "strip",
            ],
            "pred/astar.txt.manifest.txt",
        ),
        (
            vec![
                "decode", "--checkpoint", "runs/b10-j2x-seed1.ckpt", "--input", "data/test.txt", "--out",
                "pred/gradient.txt", "--decoder", "gradient",
            ],
            "pred/gradient.txt.manifest.txt",
        ),
        (
            vec![
                "eval", "--gold", "data/test.txt", "--pred", "B=pred/viterbi.txt", "--pred", "A=pred/astar.txt",
                "--pred", "G=pred/gradient.txt", "--baseline", "B", "--out", "pred/table.txt",
            ],
            "pred/table.txt.manifest.txt",
        ),
        (
            vec!["eval", "--gold", "data/test.txt", "--pred", "pred/viterbi.txt", "--format", "records", "--manifest", "stdout.manifest.txt"],
            "stdout.manifest.txt",
        ),
    ];
    let mut failures = Vec::new();
    let mut files = 0;
    for (args, manifest) in &commands {
        let out = synsrl(dir, args);
        if !out.status.success() {
            failures.push(format!("{} failed: {}", args[0], String::from_utf8_lossy(&out.stderr)));
            continue;
        }
        let before = manifest_outputs(dir, manifest);
        let manifest_before = std::fs::read(dir.join(manifest)).unwrap();
        let replay = synsrl(dir, &["replay", manifest]);
        if !replay.status.success() {
            failures.push(format!("replay {manifest}: {}", String::from_utf8_lossy(&replay.stderr)));
            continue;
        }
        let after = manifest_outputs(dir, manifest);
        files += after.len();
        if before != after || manifest_before != std::fs::read(dir.join(manifest)).unwrap() {
            failures.push(format!("replay {manifest} changed bytes"));
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "{} commands replayed, {files} output files byte-identical{}",
            commands.len(),
            if failures.is_empty() { String::new() } else { format!("; failures: {failures:?}") }
        ),
    )
}
