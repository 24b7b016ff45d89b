//! Raise the difficulty of a dataset by diluting each trajectory with
//! off-topic posts, and show that the question still has exactly the same
//! supporting messages.
//!
//!     cargo run --example mix_difficulty

use memsim::dataset::{audit, mix_eta, EtaMode, FillerPool};
use memsim::pipeline::{GenerateConfig, Pipeline};
use memsim::qa::format_time;
use memsim::sampler::Generators;
use memsim::schema::{load_schema, DAILY_LIFE_SCHEMA};
use memsim::surface::TemplateSet;

fn main() -> memsim::Result<()> {
    let schema = load_schema(DAILY_LIFE_SCHEMA)?;
    let templates = TemplateSet::daily_life();
    let gens = Generators::offline();
    let (vanilla, _) = Pipeline::new(&schema, &templates, &gens).generate(&GenerateConfig::uniform(2), 3)?;
    let pool = FillerPool::shipped();

    for (eta, mode) in [(1, EtaMode::Total), (10, EtaMode::Total), (100, EtaMode::Total), (25, EtaMode::Fraction)] {
        let mixed = mix_eta(&vanilla, &pool, eta, mode, 11)?;
        let messages: usize = mixed.records().map(|r| r.trajectory.messages.len()).sum();
        let ok = audit(&mixed)?.all_ok();
        println!("η = {eta:>3} ({mode:?}): {messages:>5} messages, audit passes: {ok}");
    }

    let mixed = mix_eta(&vanilla, &pool, 3, EtaMode::Total, 11)?;
    let t = &mixed.records().next().expect("non-empty").trajectory;
    println!("\n{} at η = 3:", t.id);
    for m in &t.messages {
        let mark = if t.retrieval_target.contains(&m.index) { "*" } else { " " };
        println!("{mark} [{}] {}", format_time(&m.time), m.text);
    }
    println!("Q: {}", t.question);

    // mixing starts from the filler-free trajectory, so levels compose
    assert_eq!(mix_eta(&mixed, &pool, 10, EtaMode::Total, 11)?, mix_eta(&vanilla, &pool, 10, EtaMode::Total, 11)?);
    Ok(())
}
