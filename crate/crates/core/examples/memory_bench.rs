//! Benchmark the six memory mechanisms with the deterministic scripted
//! responder on a vanilla and a diluted dataset.
//!
//!     cargo run --release --example memory_bench

use memsim::hintgen::GenerationParams;
use memsim::membench::{run_bench, Backends, BenchConfig, Mechanism, RetrievalMethod, SystemClock};
use memsim::pipeline::{GenerateConfig, Pipeline};
use memsim::sampler::Generators;
use memsim::schema::{load_schema, DAILY_LIFE_SCHEMA};
use memsim::surface::TemplateSet;

fn main() -> memsim::Result<()> {
    let schema = load_schema(DAILY_LIFE_SCHEMA)?;
    let templates = TemplateSet::daily_life();
    let gens = Generators::offline();
    let (ds, _) = Pipeline::new(&schema, &templates, &gens).generate(&GenerateConfig::uniform(10), 5)?;

    let config = BenchConfig {
        mechanisms: vec![
            Mechanism::Full,
            Mechanism::Recent { k: 5 },
            Mechanism::Retrieved { k: 5, method: RetrievalMethod::Embedding },
            Mechanism::Retrieved { k: 5, method: RetrievalMethod::Recency },
            Mechanism::None,
            Mechanism::Noisy,
            Mechanism::Oracle,
        ],
        etas: vec![1, 20],
        seed: 5,
        ..Default::default()
    };
    let backends = Backends::build(&config, &schema, &templates, &GenerationParams::default().factors)?;
    let run = run_bench(&ds, &config, &backends, &SystemClock::default())?;
    for row in run.report.rows.iter().filter(|r| r.qa_type == "all") {
        let acc = row.accuracy.map_or(f64::NAN, |s| s.mean);
        let recall = row.recall_at_5.map_or("n/a".to_string(), |s| format!("{:.3}", s.mean));
        println!("η = {:>2}  {:<26} accuracy {acc:.3}  recall@5 {recall}", row.eta.unwrap_or(1), row.mechanism);
    }
    Ok(())
}
