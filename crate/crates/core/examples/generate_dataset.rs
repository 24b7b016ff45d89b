//! Generate a dataset with every question type, write it to disk, read it
//! back and audit it.
//!
//!     cargo run --example generate_dataset -- [output-dir]

use std::path::PathBuf;

use memsim::dataset::{audit, read_dataset, write_dataset};
use memsim::pipeline::{GenerateConfig, Pipeline};
use memsim::sampler::Generators;
use memsim::schema::{load_schema, DAILY_LIFE_SCHEMA};
use memsim::surface::TemplateSet;

fn main() -> memsim::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("memsim-example"));
    let schema = load_schema(DAILY_LIFE_SCHEMA)?;
    let templates = TemplateSet::daily_life();
    let gens = Generators::offline();
    let pipeline = Pipeline::new(&schema, &templates, &gens);

    let (dataset, report) = pipeline.generate(&GenerateConfig::uniform(10), 7)?;
    for (split, r) in &report.splits {
        println!("{split:<16} {} trajectories from {} seeds, rejected: {:?}", r.generated, r.attempts, r.rejections);
    }

    let manifest = write_dataset(&out, &dataset)?;
    println!("wrote {} messages ({:.2} tokens each) to {}", manifest.total.messages, manifest.total.tpm, out.display());

    let back = read_dataset(&out)?;
    assert_eq!(back.splits, dataset.splits);
    print!("{}", audit(&back)?);
    Ok(())
}
