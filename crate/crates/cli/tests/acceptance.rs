//! Acceptance criteria, run in order with their runtime bounds. Each prints a
//! single PASS/FAIL line straight to stderr so it shows up even when output
//! is captured.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use packorder_core::metrics::{f1_scores, match_labels, ClassTally, Tallies};
use packorder_core::pipeline::{parse_detection, validate_plan, PipelineError, PlanCheck};
use packorder_core::planner::{exact_order, PairTable};
use packorder_core::preference::{MatrixOrigin, SurveySequence};
use packorder_core::scoring::score_indices;
use packorder_core::{
    build_matrix, plan_exact, plan_greedy, plan_local_search, plan_random, score, synth_corpus, AliasTable, ClassCatalog,
    ClassLabel, Direction, EvalReport, LogScore, PackingSequence, PreferenceMatrix, ReferenceLexicon, SceneStatus,
    SurveyCorpus, SynthSpec, ValidationPolicy,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Outcome);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn label(s: &str) -> ClassLabel {
    ClassLabel::new(s).unwrap()
}

fn catalog(n: usize) -> ClassCatalog {
    let names: Vec<String> = (0..n).map(|i| format!("class {i:02}")).collect();
    ClassCatalog::from_names(&names).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_corpus(rng: &mut ChaCha8Rng, n: usize, k: usize) -> SurveyCorpus {
    let cat = catalog(n);
    let sequences = (0..k)
        .map(|p| {
            let mut items = cat.labels().to_vec();
            items.shuffle(rng);
            items.truncate(rng.random_range(2..=n));
            SurveySequence {
                participant: format!("p{p}"),
                items,
            }
        })
        .collect();
    SurveyCorpus {
        direction: Direction::BottomFirst,
        sequences,
    }
}

/// Complementary matrix with probabilities drawn uniformly; with
/// `extremes`, some pairs are exactly 0 / 1 / 0.5.
#[allow(clippy::needless_range_loop)]
fn random_matrix(rng: &mut ChaCha8Rng, n: usize, extremes: bool) -> PreferenceMatrix {
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in i + 1..n {
            let p = if extremes && rng.random_bool(0.15) {
                [0.0, 1.0, 0.5][rng.random_range(0..3)]
            } else {
                rng.random_range(0.01..0.99)
            };
            rows[i][k] = p;
            rows[k][i] = 1.0 - p;
        }
    }
    PreferenceMatrix::from_probabilities(catalog(n), rows, MatrixOrigin::Built).unwrap()
}

/// Every pair of positions listed explicitly, then summed.
fn oracle_score(seq: &[usize], m: &PreferenceMatrix) -> f64 {
    let mut terms = Vec::new();
    for q in 0..seq.len() {
        for p in 0..q {
            if seq[p] != seq[q] {
                terms.push(m.prob(seq[p], seq[q]));
            }
        }
    }
    terms.iter().rev().map(|p| p.ln()).sum()
}

fn value(seq: &PackingSequence, m: &PreferenceMatrix) -> f64 {
    score(seq, m).unwrap().value.as_f64()
}

fn at_least(a: f64, b: f64) -> bool {
    a == b || a >= b - 1e-9 * (1.0 + b.abs())
}

fn c1_complementarity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut pairs = 0usize;
    for trial in 0..200 {
        let n = rng.random_range(2..=12);
        let k = rng.random_range(1..=40);
        let alpha = match trial % 4 {
            0 => 0.0,
            1 => 0.5,
            2 => 1.0,
            _ => rng.random_range(0.0..5.0),
        };
        let m = build_matrix(&random_corpus(&mut rng, n, k), alpha).map_err(|e| e.to_string())?;
        for i in 0..m.len() {
            for j in 0..m.len() {
                if i != j && m.observed(i, j) {
                    pairs += 1;
                    let sum = m.prob(i, j) + m.prob(j, i);
                    ensure((sum - 1.0).abs() <= 1e-9, || format!("trial {trial}: pair ({i},{j}) sums to {sum}"))?;
                }
            }
        }
    }
    Ok(format!("200 corpora, {pairs} observed ordered pairs"))
}

fn c2_score_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut infinite = 0;
    for trial in 0..500 {
        let n = rng.random_range(2..=10);
        let m = random_matrix(&mut rng, n, true);
        let l = rng.random_range(1..=10);
        let seq: Vec<usize> = (0..l).map(|_| rng.random_range(0..n)).collect();
        let got = score_indices(&seq, &m).value;
        let want = oracle_score(&seq, &m);
        match got {
            LogScore::NegInfinity => {
                infinite += 1;
                ensure(want == f64::NEG_INFINITY, || format!("trial {trial}: -inf vs {want}"))?;
            }
            LogScore::Finite(v) => ensure((v - want).abs() <= 1e-12, || format!("trial {trial}: {v} vs {want}"))?,
        }
        let by_label = score(&PackingSequence::from_indices(m.catalog(), &seq), &m).unwrap().value;
        ensure(by_label == got, || format!("trial {trial}: label path disagrees"))?;
    }
    Ok(format!("500 instances within 1e-12 ({infinite} at -inf)"))
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

fn c3_four_item_fixture() -> Outcome {
    let text = std::fs::read_to_string(fixtures().join("four_items.json")).map_err(|e| e.to_string())?;
    let m = PreferenceMatrix::from_json(&text).map_err(|e| e.to_string())?;
    let names = ["bottle", "apples", "bell pepper", "bananas"];
    let reference: Vec<ClassLabel> = names.iter().map(|n| label(n)).collect();
    let c = value(&PackingSequence::new(reference.clone()), &m);
    ensure((c - -0.978).abs() <= 0.05, || format!("C = {c}"))?;

    let all: Vec<usize> = (0..4).collect();
    let ranked: Vec<(f64, Vec<usize>)> = permutations(&all).into_iter().map(|p| (oracle_score(&p, &m), p)).collect();
    ensure(ranked.len() == 24, || "expected 24 permutations".into())?;
    let best = ranked.iter().max_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
    let best_labels: Vec<ClassLabel> = best.1.iter().map(|&i| m.catalog().get(i).unwrap().clone()).collect();
    ensure(best_labels == reference, || format!("enumerated optimum is {best_labels:?}"))?;

    let mut shuffled = reference.clone();
    shuffled.reverse();
    let planned = plan_exact(&shuffled, &m, 10).map_err(|e| e.to_string())?;
    ensure(planned.items() == &reference[..], || format!("plan_exact returned {planned}"))?;
    Ok(format!("C = {c:.4}, plan_exact = ({planned}), unique best of 24"))
}

/// Instance with n classes whose optimum is finite: uniform probabilities or
/// a smoothed random corpus.
fn finite_instance(rng: &mut ChaCha8Rng, n: usize, trial: usize) -> PreferenceMatrix {
    if trial % 2 == 0 {
        random_matrix(rng, n, false)
    } else {
        loop {
            let k = rng.random_range(3..=25);
            let corpus = random_corpus(rng, n, k);
            let m = build_matrix(&corpus, rng.random_range(0.1..2.0)).unwrap();
            if m.len() == n {
                return m;
            }
        }
    }
}

fn c4_planner_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut strict = 0;
    for trial in 0..100 {
        let m = finite_instance(&mut rng, 8, trial);
        let items = m.catalog().labels().to_vec();
        let seed = rng.random::<u64>();
        let exact = value(&plan_exact(&items, &m, 10).unwrap(), &m);
        let local = value(&plan_local_search(&items, &m, seed, 8).unwrap(), &m);
        let greedy = value(&plan_greedy(&items, &m).unwrap(), &m);
        ensure(at_least(exact, local), || format!("trial {trial}: exact {exact} < local {local}"))?;
        ensure(at_least(local, greedy), || format!("trial {trial}: local {local} < greedy {greedy}"))?;
        let flat = (0..8).all(|i| (0..8).all(|k| i == k || m.prob(i, k) == 0.5));
        if !flat {
            let mean = (0..50).map(|s| value(&plan_random(&items, seed.wrapping_add(s)).unwrap(), &m)).sum::<f64>() / 50.0;
            ensure(exact > mean, || format!("trial {trial}: exact {exact} <= random mean {mean}"))?;
            strict += 1;
        }
    }
    Ok(format!("100 instances with n = 8, exact > random mean on all {strict} non-uniform"))
}

fn c5_local_search_quality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut hits = 0;
    for trial in 0..200 {
        let n = rng.random_range(3..=8);
        let m = if trial % 3 == 2 {
            random_matrix(&mut rng, n, true)
        } else {
            finite_instance(&mut rng, n, trial)
        };
        let indices: Vec<usize> = (0..n).collect();
        let table = PairTable::new(&indices, &m);
        let optimum = table.objective(&exact_order(&table));
        let items = m.catalog().labels().to_vec();
        let local = plan_local_search(&items, &m, rng.random::<u64>(), 8).unwrap();
        let local_idx: Vec<usize> = local.items().iter().map(|l| m.index_of(l).unwrap()).collect();
        let got = table.objective(&local_idx);
        if !optimum.beats(&got) {
            hits += 1;
        }
    }
    let rate = hits as f64 / 200.0;
    ensure(rate >= 0.95, || format!("optimum matched on {hits}/200"))?;
    Ok(format!("optimum matched on {hits}/200 ({:.1}%)", rate * 100.0))
}

fn c6_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut subsets = 0;
    for trial in 0..50 {
        let n = rng.random_range(3..=10);
        let cat = catalog(n);
        let mut true_order: Vec<usize> = (0..n).collect();
        true_order.shuffle(&mut rng);
        let spec = SynthSpec {
            sets_per_participant: rng.random_range(1..=3),
            ..SynthSpec::new(0.0, rng.random_range(3..=30), rng.random::<u64>())
        };
        let corpus = synth_corpus(&cat, &true_order, &spec).map_err(|e| e.to_string())?;
        let m = build_matrix(&corpus, if trial % 2 == 0 { 0.0 } else { 1.0 }).map_err(|e| e.to_string())?;
        for seq in &corpus.sequences {
            let expected: Vec<ClassLabel> = true_order
                .iter()
                .map(|&i| cat.get(i).unwrap().clone())
                .filter(|l| seq.items.contains(l))
                .collect();
            let mut scrambled = seq.items.clone();
            scrambled.shuffle(&mut rng);
            let planned = plan_exact(&scrambled, &m, 10).map_err(|e| e.to_string())?;
            ensure(planned.items() == &expected[..], || format!("trial {trial}: got ({planned})"))?;
            subsets += 1;
        }
    }
    Ok(format!("50 trials, {subsets} sampled subsets reconstructed"))
}

fn run_evaluate(bin: &Path, out: &Path) -> Result<(), String> {
    let dir = fixtures().join("mock");
    let status = Command::new(bin)
        .args(["--quiet", "evaluate", "--provider", "mock"])
        .arg("--scenes")
        .arg(dir.join("scenes.json"))
        .arg("--matrix")
        .arg(dir.join("matrix.json"))
        .arg("--fixtures")
        .arg(dir.join("fixtures.json"))
        .arg("--aliases")
        .arg(dir.join("aliases.json"))
        .arg("--out")
        .arg(out)
        .env_remove("PACK_ORDER_API_KEY")
        .env("HTTPS_PROXY", "http://127.0.0.1:9")
        .env("HTTP_PROXY", "http://127.0.0.1:9")
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.success(), || format!("evaluate exited with {status}"))
}

fn c7_pipeline_determinism() -> Outcome {
    let bin = PathBuf::from(env!("CARGO_BIN_EXE_pack-order"));
    let golden_path = fixtures().join("mock").join("golden_report.json");
    let golden = std::fs::read(&golden_path).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for run in 1..=3 {
        let out = dir.path().join(format!("report{run}.json"));
        run_evaluate(&bin, &out)?;
        let bytes = std::fs::read(&out).map_err(|e| e.to_string())?;
        ensure(bytes == golden, || format!("run {run} differs from the golden report"))?;
    }

    let report = EvalReport::from_json(std::str::from_utf8(&golden).unwrap()).map_err(|e| e.to_string())?;
    ensure(report.provenance.provider.kind == packorder_core::ProviderKind::Mock, || "not a mock run".into())?;
    let policy = report.provenance.policy;
    let retried = report.scenes.iter().find(|s| {
        s.status == SceneStatus::Planned
            && s.attempts >= 2
            && matches!(
                validate_plan(&s.detected, &s.transcripts[1].response, &policy),
                Ok(PlanCheck::Retry { .. })
            )
    });
    ensure(retried.is_some(), || "no scene recovers after a failed 30% check".into())?;
    let exhausted = report.scenes.iter().filter(|s| s.status == SceneStatus::ValidationExhausted).count();
    ensure(exhausted >= 1, || "no validation-exhausted scene".into())?;
    Ok(format!(
        "3 runs byte-identical to the golden report; retry in {}, {exhausted} exhausted",
        retried.unwrap().id
    ))
}

fn sigma_lexicon() -> ReferenceLexicon {
    // 50 five-char and 50 ten-char entries: mean 7.5, sigma exactly 2.5
    let entries = (0..50)
        .map(|i| label(&format!("x{i:04}")))
        .chain((0..50).map(|i| label(&format!("y{i:09}"))))
        .collect();
    ReferenceLexicon::new(entries).unwrap()
}

fn c8_parsing() -> Outcome {
    let policy = ValidationPolicy::default();
    let lex = ReferenceLexicon::default();
    let labels = |names: &[&str]| names.iter().map(|n| label(n)).collect::<Vec<_>>();

    let got = parse_detection("apples, bananas", &lex, &policy).map_err(|e| e.to_string())?;
    ensure(got == labels(&["apples", "bananas"]), || format!("basic split gave {got:?}"))?;
    let got = parse_detection("  Apples ,BANANAS,, milk  ,apples", &lex, &policy).map_err(|e| e.to_string())?;
    ensure(got == labels(&["apples", "bananas", "milk", "apples"]), || format!("normalization gave {got:?}"))?;
    ensure(
        matches!(parse_detection("", &lex, &policy), Err(PipelineError::EmptyDetection { .. })),
        || "empty response accepted".into(),
    )?;

    let sigma = sigma_lexicon();
    ensure(sigma.sigma() == 2.5, || format!("sigma {}", sigma.sigma()))?;
    let got = parse_detection("eggs, the image clearly shows assorted beverages", &sigma, &policy).map_err(|e| e.to_string())?;
    ensure(got == labels(&["eggs"]), || format!("outlier kept: {got:?}"))?;
    let fifteen = "abcdefghijklmno";
    let sixteen = "abcdefghijklmnop";
    let got = parse_detection(&format!("{fifteen}, {sixteen}"), &sigma, &policy).map_err(|e| e.to_string())?;
    ensure(got == labels(&[fifteen]), || format!("boundary gave {got:?}"))?;
    ensure(
        matches!(parse_detection(sixteen, &sigma, &policy), Err(PipelineError::EmptyDetection { .. })),
        || "all-outlier response accepted".into(),
    )?;

    let detected = labels(&["canned beans", "eggs", "apples"]);
    match validate_plan(&detected, "Canned Beans (sturdy), eggs, oranges", &policy).map_err(|e| e.to_string())? {
        PlanCheck::Accepted { sequence, matched: 2 } => ensure(
            sequence.items() == &labels(&["canned beans (sturdy)", "eggs", "oranges"])[..],
            || format!("accepted {sequence}"),
        )?,
        other => return Err(format!("2/3 match gave {other:?}")),
    }
    let ten = labels(&["a1", "b1", "c1", "d1", "e1", "f1", "g1", "h1", "i1", "j1"]);
    ensure(
        matches!(validate_plan(&ten, "a1, b1, c1", &policy), Ok(PlanCheck::Retry { matched: 3 })),
        || "exactly 30% was accepted".into(),
    )?;
    Ok(format!("split, normalization, 6 sigma = {} boundary (15 kept, 16 dropped), 30% boundary", 6.0 * sigma.sigma()))
}

fn c9_swap_delta() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for trial in 0..1000 {
        let n = rng.random_range(2..=10);
        let m = random_matrix(&mut rng, n, false);
        let mut seq: Vec<usize> = (0..n).collect();
        seq.shuffle(&mut rng);
        seq.truncate(rng.random_range(2..=n));
        let p = rng.random_range(0..seq.len() - 1);
        let (a, b) = (seq[p], seq[p + 1]);
        let before = score_indices(&seq, &m).value.as_f64();
        seq.swap(p, p + 1);
        let after = score_indices(&seq, &m).value.as_f64();
        let expected = m.prob(b, a).ln() - m.prob(a, b).ln();
        let err = ((after - before) - expected).abs();
        worst = worst.max(err);
        ensure(err <= 1e-10, || format!("trial {trial}: error {err:e}"))?;
    }
    Ok(format!("1000 swaps, worst error {worst:.1e}"))
}

fn c10_metrics() -> Outcome {
    let none = AliasTable::new();
    let l = |names: &[&str]| names.iter().map(|n| label(n)).collect::<Vec<_>>();
    let mut acc = Tallies::default();
    acc.merge(&match_labels(&l(&["milk"]), &l(&["milk"]), &none, None));
    acc.merge(&match_labels(&l(&[]), &l(&["milk"]), &none, None));
    acc.merge(&match_labels(&l(&["milk"]), &l(&["eggs"]), &none, None));
    let m = f1_scores(&acc).map_err(|e| e.to_string())?;
    let milk = m.per_class["milk"];
    ensure(
        milk.precision == 0.5 && milk.recall == 0.5 && milk.f1 == 0.5,
        || format!("hand example gave {milk:?}"),
    )?;

    let perfect = match_labels(&l(&["apples", "eggs"]), &l(&["eggs", "apples"]), &none, None);
    let m = f1_scores(&perfect).map_err(|e| e.to_string())?;
    ensure(m.af1 == 1.0, || format!("perfect detection AF1 {}", m.af1))?;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for trial in 0..500 {
        let mut t = Tallies::default();
        for c in 0..rng.random_range(1..15) {
            let tally = ClassTally {
                tp: rng.random_range(0..10),
                fp: rng.random_range(0..10),
                fn_: rng.random_range(1..10),
            };
            t.classes.insert(format!("c{c}"), tally);
            t.truth_classes.insert(format!("c{c}"));
        }
        t.classes.insert("false only".into(), ClassTally { tp: 0, fp: 3, fn_: 0 });
        let m = f1_scores(&t).map_err(|e| e.to_string())?;
        let mean = t.truth_classes.iter().map(|c| m.per_class[c].f1).sum::<f64>() / t.truth_classes.len() as f64;
        ensure((m.af1 - mean).abs() <= 1e-12, || format!("trial {trial}: AF1 {} vs mean {mean}", m.af1))?;
    }
    Ok("hand example P = R = F1 = 0.5, perfect AF1 = 1, AF1 = mean F1 on 500 random tallies".into())
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 10] = [
        ("complementarity", 5, c1_complementarity),
        ("score oracle equivalence", 5, c2_score_oracle),
        ("four-item fixture", 1, c3_four_item_fixture),
        ("planner dominance", 30, c4_planner_dominance),
        ("local search quality", 30, c5_local_search_quality),
        ("recovery", 10, c6_recovery),
        ("pipeline determinism", 10, c7_pipeline_determinism),
        ("parsing", 1, c8_parsing),
        ("adjacent swap delta", 5, c9_swap_delta),
        ("metrics arithmetic", 1, c10_metrics),
    ];
    let mut failures = Vec::new();
    let mut stderr = std::io::stderr().lock();
    for (i, (name, bound, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = check();
        let elapsed = started.elapsed();
        let bound = Duration::from_secs(*bound);
        let outcome = outcome.and_then(|detail| {
            if elapsed < bound {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {elapsed:.2?}, bound {bound:?}"))
            }
        });
        let line = match &outcome {
            Ok(detail) => format!("PASS  criterion {:>2} {name} [{elapsed:.2?} < {bound:?}]: {detail}", i + 1),
            Err(why) => format!("FAIL  criterion {:>2} {name} [{elapsed:.2?}]: {why}", i + 1),
        };
        let _ = writeln!(stderr, "{line}");
        if outcome.is_err() {
            failures.push(line);
        }
    }
    assert!(failures.is_empty(), "{} criteria failed:\n{}", failures.len(), failures.join("\n"));
}
