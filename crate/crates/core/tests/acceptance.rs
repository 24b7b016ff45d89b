//! Acceptance criteria 1 to 9. Each test prints one PASS/FAIL line with the
//! measured figures before asserting. The line goes straight to the stderr
//! handle, which the test harness does not capture, so a plain `cargo test`
//! shows the whole scorecard.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use memsim::dataset::{audit, mix_eta, swi, EtaMode, FillerPool};
use memsim::hintgen::{GenerationParams, QaType};
use memsim::membench::{cosine, recall_at_k, run_bench, Backends, BenchConfig, Mechanism, RetrievalMethod, SystemClock};
use memsim::pipeline::{GenerateConfig, Pipeline};
use memsim::qa::{oracle_grade, Trajectory};
use memsim::sampler::{enumerate_joint, joint_probability, sample_profile, Generators, Profile};
use memsim::schema::{load_schema, Schema, Value};
use memsim::surface::llm::{ClientConfig, ChatClient, Prompts, Rewriter};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use common::{chat_stub, cli, Env};

fn report(n: u32, pass: bool, detail: impl AsRef<str>) {
    let line = format!("criterion {n} {}: {}\n", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    let _ = std::io::Write::write_all(&mut std::io::stderr(), line.as_bytes());
}

/// Explicit networks with at most 6 attributes of at most 4 values.
const NETWORKS: [&str; 3] = [
    // v-structure
    r#"
entities:
  self self "U"
attributes:
  self.a "A" categorical [x, y]
  self.b "B" categorical [x, y]
  self.c "C" categorical [p, q]
edges:
  self.a -> self.c
  self.b -> self.c
cpds:
  cpd self.a: {x: 0.3, y: 0.7}
  cpd self.b: {x: 0.6, y: 0.4}
  cpd self.c | self.a, self.b:
    when (self.a = x, self.b = x) -> {p: 0.9, q: 0.1}
    when (self.a = x, self.b = y) -> {p: 0.2, q: 0.8}
    when (self.a = y, self.b = x) -> {p: 0.5, q: 0.5}
    when (self.a = y, self.b = y) -> point q
"#,
    // chain over three-valued ordered levels
    r#"
entities:
  self self "U"
attributes:
  self.a "A" categorical ordered [lo, mid, hi]
  self.b "B" categorical ordered [lo, mid, hi]
  self.c "C" categorical ordered [lo, mid, hi]
edges:
  self.a -> self.b
  self.b -> self.c
cpds:
  cpd self.a: {lo: 0.5, mid: 0.3, hi: 0.2}
  cpd self.b | self.a:
    when (self.a = lo) -> {lo: 0.7, mid: 0.2, hi: 0.1}
    when (self.a = mid) -> {lo: 0.1, mid: 0.8, hi: 0.1}
    otherwise -> {lo: 0.05, mid: 0.15, hi: 0.8}
  cpd self.c | self.b:
    when (self.b = lo) -> point lo
    otherwise -> {lo: 0.25, mid: 0.25, hi: 0.5}
"#,
    // six attributes: integers, a deterministic copy and a constant
    r#"
entities:
  self self "U"
  friend_1 friend "F"
attributes:
  self.a "A" int_range 1 3
  self.b "B" int_range 1 3
  self.c "C" categorical [u, v]
  self.d "D" categorical [on]
  friend_1.e "E" int_range 0 1
  friend_1.f "F" int_range 0 1
edges:
  self.a -> self.b, self.c
  self.b -> self.d
  friend_1.e -> friend_1.f
cpds:
  cpd self.a: {1: 0.2, 2: 0.3, 3: 0.5}
  cpd self.b | self.a: deterministic copy
  cpd self.c | self.a:
    when (self.a = 1) -> {u: 0.1, v: 0.9}
    when (self.a = 2) -> uniform
    when (self.a = 3) -> {u: 0.75, v: 0.25}
  cpd self.d | self.b: deterministic const on
  cpd friend_1.e: uniform
  cpd friend_1.f | friend_1.e: deterministic copy
"#,
];

fn key(s: &Schema, p: &Profile) -> Vec<Value> {
    s.attributes.iter().map(|a| p.get(&a.attr_id).cloned().expect("complete profile")).collect()
}

/// Every assignment of the network's value spaces, enumerated by the test.
fn all_assignments(s: &Schema) -> Vec<Vec<Value>> {
    let spaces: Vec<Vec<Value>> = s.attributes.iter().map(|a| a.value_space.enumerate(1000).unwrap()).collect();
    let mut out = vec![Vec::new()];
    for space in spaces {
        out = out.into_iter().flat_map(|prefix| space.iter().map(move |v| [prefix.clone(), vec![v.clone()]].concat())).collect();
    }
    out
}

fn profile_of(s: &Schema, values: &[Value]) -> Profile {
    Profile { assignment: s.attributes.iter().map(|a| a.attr_id.clone()).zip(values.iter().cloned()).collect(), seed: 0 }
}

#[test]
fn criterion_1_ancestral_samples_match_the_joint() {
    let start = Instant::now();
    let n = 100_000u64;
    let mut worst: f64 = 0.0;
    for src in NETWORKS {
        let s = load_schema(src).unwrap();
        let exact = enumerate_joint(&s).unwrap();
        let mut counts: BTreeMap<Vec<Value>, u64> = BTreeMap::new();
        for seed in 0..n {
            *counts.entry(key(&s, &sample_profile(&s, seed, &Generators::empty()).unwrap())).or_default() += 1;
        }
        let mut keys: Vec<&Vec<Value>> = exact.mass.keys().chain(counts.keys()).collect();
        keys.sort();
        keys.dedup();
        let tv: f64 = keys
            .iter()
            .map(|k| (exact.get(k) - counts.get(*k).copied().unwrap_or(0) as f64 / n as f64).abs())
            .sum::<f64>()
            / 2.0;
        worst = worst.max(tv);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 0.01 && secs < 30.0;
    report(1, pass, format!("worst total variation {worst:.5} over 3 networks x {n} draws (limit 0.01), {secs:.1}s (limit 30s)"));
    assert!(pass);
}

#[test]
fn criterion_2_joint_factorizes() {
    let mut worst_sum: f64 = 0.0;
    let mut worst_cell: f64 = 0.0;
    for src in NETWORKS {
        let s = load_schema(src).unwrap();
        let exact = enumerate_joint(&s).unwrap();
        let mut total = 0.0;
        for values in all_assignments(&s) {
            let p = joint_probability(&s, &profile_of(&s, &values)).unwrap();
            total += p;
            worst_cell = worst_cell.max((p - exact.get(&values)).abs());
        }
        worst_sum = worst_sum.max((total - 1.0).abs());
    }
    // hand-multiplied cells of the v-structure and the chain
    let v = load_schema(NETWORKS[0]).unwrap();
    let x = |s: &str| Value::Text(s.into());
    let hand = [
        (vec![x("x"), x("x"), x("p")], 0.3 * 0.6 * 0.9),
        (vec![x("y"), x("y"), x("p")], 0.0),
        (vec![x("y"), x("x"), x("q")], 0.7 * 0.6 * 0.5),
    ];
    let mut worst_hand: f64 = 0.0;
    for (values, p) in hand {
        worst_hand = worst_hand.max((joint_probability(&v, &profile_of(&v, &values)).unwrap() - p).abs());
    }
    let chain = load_schema(NETWORKS[1]).unwrap();
    let cell = joint_probability(&chain, &profile_of(&chain, &[x("hi"), x("mid"), x("hi")])).unwrap();
    worst_hand = worst_hand.max((cell - 0.2 * 0.15 * 0.5).abs());

    let pass = worst_sum <= 1e-9 && worst_cell <= 1e-12 && worst_hand <= 1e-12;
    report(
        2,
        pass,
        format!("|sum - 1| <= {worst_sum:.1e} (limit 1e-9), per-assignment gap {worst_cell:.1e} (limit 1e-12), hand cells {worst_hand:.1e}"),
    );
    assert!(pass);
}

/// A random DAG as schema text: nodes n0.., edges only from lower to higher
/// numbers, plus optionally one edge back from a descendant to an ancestor.
fn dag_schema(rng: &mut rand_chacha::ChaCha8Rng, plant_cycle: bool) -> (String, Vec<(usize, usize)>) {
    let n = rng.gen_range(2..=50);
    // a random relabelling, so the numbering is not already a valid order
    let mut label: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(label.as_mut_slice(), rng);
    let mut edges = Vec::new();
    for to in 1..n {
        for from in 0..to {
            if rng.gen_bool(0.08) {
                edges.push((from, to));
            }
        }
    }
    if plant_cycle {
        // a path a -> ... -> b, closed by b -> a
        let a = rng.gen_range(0..n - 1);
        let b = rng.gen_range(a + 1..n);
        for (from, to) in [(a, b)].into_iter().chain(std::iter::once((b, a))) {
            if !edges.contains(&(from, to)) {
                edges.push((from, to));
            }
        }
    }
    let edges: Vec<(usize, usize)> = edges.into_iter().map(|(f, t)| (label[f], label[t])).collect();
    let mut text = String::from("entities:\n  self self \"U\"\nattributes:\n");
    for i in 0..n {
        text += &format!("  self.n{i} \"N{i}\" int_range 0 1\n");
    }
    text += "edges:\n";
    for (f, t) in &edges {
        text += &format!("  self.n{f} -> self.n{t}\n");
    }
    text += "cpds:\n";
    for i in 0..n {
        let parents: Vec<String> = edges.iter().filter(|e| e.1 == i).map(|e| format!("self.n{}", e.0)).collect();
        if parents.is_empty() {
            text += &format!("  cpd self.n{i}: uniform\n");
        } else {
            text += &format!("  cpd self.n{i} | {}: uniform\n", parents.join(", "));
        }
    }
    (text, edges)
}

#[test]
fn criterion_3_topological_order_and_cycle_rejection() {
    let start = Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut ordered = 0;
    for _ in 0..1000 {
        let (text, edges) = dag_schema(&mut rng, false);
        let s = load_schema(&text).unwrap();
        let pos: BTreeMap<&str, usize> = s.order().iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
        let ok = pos.len() == s.attributes.len()
            && edges.iter().all(|(f, t)| pos[format!("self.n{f}").as_str()] < pos[format!("self.n{t}").as_str()]);
        ordered += ok as usize;
    }
    let mut rejected = 0;
    for _ in 0..1000 {
        let (text, _) = dag_schema(&mut rng, true);
        rejected += matches!(load_schema(&text), Err(memsim::Error::Cycle(_))) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = ordered == 1000 && rejected == 1000 && secs < 10.0;
    report(3, pass, format!("{ordered}/1000 DAGs ordered, {rejected}/1000 cyclic graphs rejected, {secs:.1}s (limit 10s)"));
    assert!(pass);
}

#[test]
fn criterion_4_template_datasets_audit_clean() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds");
    let out_s = out.to_str().unwrap();
    let mut args = vec!["generate", "--seed", "404", "--out", out_s];
    let counts: Vec<String> = QaType::ALL.iter().map(|t| format!("{}=20", t.split_name())).collect();
    for c in &counts {
        args.extend(["--count", c.as_str()]);
    }
    let (gen_code, _) = cli(&args);
    let (audit_code, text) = cli(&["audit", "--dataset", out_s]);
    let rows: Vec<&str> = text.lines().filter(|l| QaType::ALL.iter().any(|t| l.starts_with(t.split_name()))).collect();
    let full = rows.len() == 6 && rows.iter().all(|l| l.split_whitespace().skip(1).collect::<Vec<_>>() == ["20", "100.0", "100.0", "100.0"]);

    // with a paraphrasing backend that sometimes drops the value
    let stub = chat_stub(|prompt| {
        let text = prompt.rsplit_once(": ").map(|x| x.1).unwrap_or(prompt).to_string();
        if prompt.starts_with("Write one short sentence") {
            format!("Lovely weather today. {text}")
        } else if text.len() % 3 == 0 {
            "I would rather not say.".to_string()
        } else {
            format!("Quick note: {text}")
        }
    });
    let env = Env::daily_life();
    let client = |url: &str| {
        ChatClient::new(ClientConfig { endpoint: url.into(), model: "stub".into(), backoff_ms: 1, ..Default::default() }).unwrap()
    };
    let rewriter = Rewriter::new(client(&stub.url), Prompts::shipped(), 2);
    let mut pipeline = Pipeline::new(&env.schema, &env.templates, &env.gens);
    pipeline.rewriter = Some(&rewriter);
    let (llm_ds, llm_report) = pipeline.generate(&GenerateConfig::uniform(3), 404).unwrap();
    let rw = llm_report.rewrite.clone().unwrap_or_default();
    let llm_audit = audit(&llm_ds).unwrap();

    let pass = gen_code == 0 && audit_code == 0 && full && rw.fallbacks > 0 && rw.accepted > 0 && llm_audit.all_ok();
    report(
        4,
        pass,
        format!(
            "template path: {} of 6 types at 100/100/100 over 120 trajectories; rewrite path: {} requests, {} accepted, {} fallbacks, audit clean: {}",
            rows.iter().filter(|l| l.ends_with("100.0")).count(),
            rw.requests,
            rw.accepted,
            rw.fallbacks,
            llm_audit.all_ok()
        ),
    );
    assert!(pass, "{text}");
}

/// The trajectory without message `drop`, indices and targets shifted.
fn without(t: &Trajectory, drop: usize) -> Trajectory {
    let mut t = t.clone();
    t.messages.remove(drop);
    for (i, m) in t.messages.iter_mut().enumerate() {
        m.index = i;
    }
    t.retrieval_target = t.retrieval_target.iter().filter(|&&i| i != drop).map(|&i| if i > drop { i - 1 } else { i }).collect();
    t
}

#[test]
fn criterion_5_targets_are_sufficient_and_necessary() {
    let env = Env::daily_life();
    let pipeline = env.pipeline();
    let config = GenerateConfig::default();
    let cases = std::cell::Cell::new(0usize);
    let failures = std::cell::RefCell::new(Vec::new());
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig { cases: 500, failure_persistence: None, ..Default::default() });
    let result = runner.run(&(any::<u64>(), 0..6usize), |(seed, ty)| {
        let (record, _) = pipeline.generate_one(QaType::ALL[ty], 0, &config, seed).unwrap();
        let t = &record.trajectory;
        let plan = &record.debug.as_ref().unwrap().plan;
        let whole = oracle_grade(t, plan).retrieval_ok;
        let each_removal_breaks = t.retrieval_target.iter().all(|&i| !oracle_grade(&without(t, i), plan).retrieval_ok);
        cases.set(cases.get() + 1);
        if !(whole && each_removal_breaks) {
            failures.borrow_mut().push(t.id.clone());
        }
        prop_assert!(whole && each_removal_breaks, "{} seed {seed}", t.id);
        Ok(())
    });
    let (cases, failures) = (cases.get(), failures.borrow().len());
    let pass = result.is_ok() && cases >= 500;
    report(5, pass, format!("{cases} generated trajectories, {failures} with a redundant or insufficient target"));
    assert!(pass, "{result:?}");
}

#[test]
fn criterion_6_eta_mixing() {
    let env = Env::daily_life();
    let mut ds = env.generate(20, 606);
    for records in ds.splits.values_mut() {
        records.retain(|r| r.trajectory.messages.len() == 8);
    }
    let before: Vec<_> = ds.records().map(|r| oracle_grade(&r.trajectory, &r.debug.as_ref().unwrap().plan)).collect();
    let mixed = mix_eta(&ds, &FillerPool::shipped(), 100, EtaMode::Total, 6).unwrap();
    let mut sizes_ok = true;
    let mut order_ok = true;
    for (orig, mix) in ds.records().zip(mixed.records()) {
        let (o, m) = (&orig.trajectory, &mix.trajectory);
        sizes_ok &= m.messages.len() == 800;
        let kept: Vec<_> = m
            .messages
            .iter()
            .filter(|x| o.messages.iter().any(|y| y.text == x.text && y.time == x.time))
            .map(|x| (&x.text, x.time, &x.place))
            .collect();
        let expected: Vec<_> = o.messages.iter().map(|x| (&x.text, x.time, &x.place)).collect();
        order_ok &= kept == expected && kept.len() * 100 == m.messages.len();
    }
    let after: Vec<_> = mixed.records().map(|r| oracle_grade(&r.trajectory, &r.debug.as_ref().unwrap().plan)).collect();
    let n = before.len();
    let pass = n > 0 && sizes_ok && order_ok && before == after && after.iter().all(|g| g.all_ok());
    report(
        6,
        pass,
        format!("{n} eight-message trajectories -> 800 messages each: {sizes_ok}; originals at 1% in order: {order_ok}; grades unchanged: {}", before == after),
    );
    assert!(pass);
}

#[test]
fn criterion_7_benchmark_orderings() {
    let start = Instant::now();
    let env = Env::daily_life();
    let ds = env.generate(20, 2026);
    let config = BenchConfig {
        mechanisms: vec![
            Mechanism::Oracle,
            Mechanism::None,
            Mechanism::Retrieved { k: 5, method: RetrievalMethod::Recency },
            Mechanism::Retrieved { k: 5, method: RetrievalMethod::Embedding },
        ],
        etas: vec![1, 100],
        seed: 2026,
        ..Default::default()
    };
    let backends = Backends::build(&config, &env.schema, &env.templates, &GenerationParams::default().factors).unwrap();
    let run = run_bench(&ds, &config, &backends, &SystemClock::default()).unwrap();
    let stat = |eta: u32, m: &str, f: fn(&memsim::membench::ReportRow) -> Option<memsim::membench::Stat>| {
        f(run.report.row(Some(eta), m, "all").unwrap()).unwrap().mean
    };
    let acc = |r: &memsim::membench::ReportRow| r.accuracy;
    let rec = |r: &memsim::membench::ReportRow| r.recall_at_5;
    let oracle = stat(1, "oracle", acc);
    let oracle100 = stat(100, "oracle", acc);
    let none = stat(1, "none", acc);
    let recency1 = stat(1, "retrieved(5, recency)", rec);
    let recency100 = stat(100, "retrieved(5, recency)", rec);
    let embedding100 = stat(100, "retrieved(5, embedding)", rec);
    let secs = start.elapsed().as_secs_f64();
    let checks = [
        oracle == 1.0 && oracle100 == 1.0,
        (0.15..=0.35).contains(&none),
        recency1 >= 0.5,
        recency100 <= 0.05,
        embedding100 > recency100,
        secs < 300.0,
    ];
    let pass = checks.iter().all(|c| *c);
    report(
        7,
        pass,
        format!(
            "oracle accuracy {oracle:.3}/{oracle100:.3} (want 1), none accuracy {none:.3} (want 0.15..0.35), recency recall {recency1:.3} at η=1 (want >= 0.5) and {recency100:.3} at η=100 (want <= 0.05), embedding recall {embedding100:.3} at η=100 (want > recency), {secs:.1}s"
        ),
    );
    assert!(pass, "{:?}\n{}", checks, run.report);
}

#[test]
fn criterion_8_metric_units() {
    let mut swi_gap: f64 = 0.0;
    for k in 1..=12usize {
        let samples: Vec<usize> = (0..k * 7).map(|i| i % k).collect();
        swi_gap = swi_gap.max((swi(samples) - (k as f64).ln()).abs());
    }
    let expected_cos = 32.0 / (14f64.sqrt() * 77f64.sqrt());
    let cos_gap = (cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap() - expected_cos).abs();
    let recall_ok = recall_at_k(&[3, 0, 1, 2, 4], &[3], 5) == 1.0
        && recall_at_k(&[2, 5, 6, 7, 8], &[1, 2], 5) == 0.5
        && recall_at_k(&[0, 1, 2, 3, 4, 5, 6, 7], &[0, 1, 2, 3, 4, 5, 6, 7], 5) == 0.625;
    let pass = swi_gap <= 1e-9 && cos_gap <= 1e-9 && recall_ok;
    report(8, pass, format!("SWI vs ln k gap {swi_gap:.1e}, cosine gap {cos_gap:.1e} (limits 1e-9), recall examples exact: {recall_ok}"));
    assert!(pass);
}

fn dir_bytes(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn criterion_9_generation_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "seed = 99\n[counts]\nsimple = 4\nconditional = 3\ncomparative = 3\naggregative = 3\npost_processing = 3\nnoisy = 3\n").unwrap();
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let (code, _) = cli(&["generate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", jobs]);
        assert_eq!(code, 0);
        dir_bytes(&out)
    };
    let a = run("a", "1");
    let b = run("b", "4");
    let identical = a == b;
    report(9, identical, format!("{} files compared across two runs (1 and 4 workers): identical = {identical}", a.len()));
    assert!(identical);
}
