mod common;

use std::sync::OnceLock;

use memsim::hintgen::QaType;
use memsim::pipeline::GenerateConfig;
use memsim::qa::{answer_text, derive_answer, oracle_grade, Provenance};
use memsim::surface::render_question;
use proptest::prelude::*;

use common::Env;

fn env() -> &'static Env {
    static ENV: OnceLock<Env> = OnceLock::new();
    ENV.get_or_init(Env::daily_life)
}

fn qa_type() -> impl Strategy<Value = QaType> {
    prop::sample::select(QaType::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 96, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn generated_trajectories_are_sound(ty in qa_type(), seed in any::<u64>()) {
        let (record, _) = env().pipeline().generate_one(ty, 0, &GenerateConfig::default(), seed).unwrap();
        let t = &record.trajectory;
        let debug = record.debug.as_ref().unwrap();
        prop_assert_eq!(t.qa_type, ty);
        prop_assert!(t.check(Some(debug.plan.target_hints.len()), Some(&debug.provenance)).is_ok());
        prop_assert!(oracle_grade(t, &debug.plan).all_ok());
        // exactly one option carries the answer
        prop_assert_eq!(t.choices.iter().filter(|c| **c == t.answer_text).count(), 1);
        prop_assert_eq!(&t.choices[t.correct_choice], &t.answer_text);
        // targets map one to one onto target hints
        let mut hints: Vec<usize> = debug.provenance.iter().filter_map(|p| match p {
            Provenance::Target { hint } => Some(*hint),
            _ => None,
        }).collect();
        hints.sort();
        prop_assert_eq!(hints, (0..debug.plan.target_hints.len()).collect::<Vec<_>>());
    }

    #[test]
    fn noise_never_changes_the_answer(ty in qa_type(), seed in any::<u64>()) {
        let (record, _) = env().pipeline().generate_one(ty, 0, &GenerateConfig::default(), seed).unwrap();
        let plan = &record.debug.as_ref().unwrap().plan;
        let mut quiet = plan.clone();
        quiet.noise_hints.clear();
        let with_noise = derive_answer(plan).map(|a| answer_text(&a)).unwrap();
        let without = derive_answer(&quiet).map(|a| answer_text(&a)).unwrap();
        prop_assert_eq!(&with_noise, &without);
        prop_assert_eq!(&with_noise, &record.trajectory.answer_text);
    }

    #[test]
    fn noisy_question_is_a_prefixed_multi_hop_question(seed in any::<u64>()) {
        let env = env();
        let (record, _) = env.pipeline().generate_one(QaType::Noisy, 0, &GenerateConfig::default(), seed).unwrap();
        let mut base = record.debug.as_ref().unwrap().plan.clone();
        base.qa_type = QaType::MultiHop;
        let plain = render_question(&base, &env.templates).unwrap();
        let question = &record.trajectory.question;
        let phrase = question.strip_suffix(&plain).and_then(|p| p.strip_suffix(' '));
        prop_assert!(phrase.is_some_and(|p| env.templates.noise_phrases().iter().any(|x| x == p)), "{question}");
    }

    #[test]
    fn generation_is_a_function_of_the_seed(ty in qa_type(), seed in any::<u64>(), index in 0usize..50) {
        let p = env().pipeline();
        let config = GenerateConfig::default();
        let a = p.generate_one(ty, index, &config, seed).unwrap();
        let b = p.generate_one(ty, index, &config, seed).unwrap();
        prop_assert_eq!(a.0.trajectory, b.0.trajectory);
    }
}

#[test]
fn datasets_are_independent_of_thread_count() {
    let env = env();
    let config = GenerateConfig::uniform(4);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| env.pipeline().generate(&config, 77).unwrap().0);
    let b = many.install(|| env.pipeline().generate(&config, 77).unwrap().0);
    let ta: Vec<_> = a.records().map(|r| &r.trajectory).collect();
    let tb: Vec<_> = b.records().map(|r| &r.trajectory).collect();
    assert_eq!(ta, tb);
    assert_eq!(a.len(), 24);
}

#[test]
fn ids_follow_split_and_index() {
    let ds = env().generate(3, 5);
    for (ty, records) in &ds.splits {
        let ids: Vec<&str> = records.iter().map(|r| r.trajectory.id.as_str()).collect();
        let expected: Vec<String> = (0..3).map(|i| format!("{}-{i:04}", ty.split_name())).collect();
        assert_eq!(ids, expected);
    }
}
