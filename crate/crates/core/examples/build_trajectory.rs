//! Build one complete trajectory: messages with times and places, the
//! question, four choices, and the check that the target messages are
//! sufficient and necessary. Then answer it with the template reader.
//!
//!     cargo run --example build_trajectory

use memsim::hintgen::{GenerationParams, QaType};
use memsim::pipeline::{GenerateConfig, Pipeline};
use memsim::qa::{choice_letter, format_time, oracle_grade};
use memsim::sampler::Generators;
use memsim::schema::{load_schema, DAILY_LIFE_SCHEMA};
use memsim::surface::{Reader, TemplateSet};

fn main() -> memsim::Result<()> {
    let schema = load_schema(DAILY_LIFE_SCHEMA)?;
    let templates = TemplateSet::daily_life();
    let gens = Generators::offline();
    let pipeline = Pipeline::new(&schema, &templates, &gens);
    let config = GenerateConfig::default();
    let reader = Reader::new(&schema, &templates, &GenerationParams::default().factors)?;

    for qa_type in [QaType::MultiHop, QaType::Comparative, QaType::PostProcessing] {
        let (record, report) = pipeline.generate_one(qa_type, 0, &config, 2024)?;
        let t = &record.trajectory;
        println!("== {} (accepted after {} seeds)", t.id, report.attempts);
        for m in &t.messages {
            let mark = if t.retrieval_target.contains(&m.index) { "*" } else { " " };
            println!("{mark} [{} | {}] {}", format_time(&m.time), m.place, m.text);
        }
        println!("Q: {}", t.question);
        for (i, c) in t.choices.iter().enumerate() {
            println!("   {}. {c}", choice_letter(i));
        }
        println!("answer: {} ({})", choice_letter(t.correct_choice), t.answer_text);

        let plan = &record.debug.as_ref().expect("pipeline keeps the plan").plan;
        println!("oracle: {:?}", oracle_grade(t, plan));

        let memory: Vec<&str> = t.messages.iter().map(|m| m.text.as_str()).collect();
        let picked = reader.answer(&memory, &t.question, &t.choices);
        println!("reader picks: {:?}\n", picked.map(choice_letter));
    }
    Ok(())
}
