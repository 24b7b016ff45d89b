//! Size and diversity statistics: tokens per message, Shannon-Wiener
//! diversity of profile values, and entity-mention diversity per 10,000
//! tokens of text.
//!
//!     cargo run --example dataset_stats

use memsim::dataset::{mix_eta, swi_profiles, swip, tpm, AttributeSet, EtaMode, FillerPool};
use memsim::pipeline::{GenerateConfig, Pipeline};
use memsim::sampler::{sample_profile, Generators, Profile};
use memsim::schema::{load_schema, DAILY_LIFE_SCHEMA};
use memsim::surface::TemplateSet;

fn main() -> memsim::Result<()> {
    let schema = load_schema(DAILY_LIFE_SCHEMA)?;
    let gens = Generators::offline();

    let profiles: Vec<Profile> = (0..500).map(|s| sample_profile(&schema, s, &gens)).collect::<memsim::Result<_>>()?;
    for set in [AttributeSet::RoleRelevant, AttributeSet::RoleIrrelevant, AttributeSet::All] {
        println!("SWI {set:?}: {:.3} nats", swi_profiles(&schema, &profiles, set));
    }

    let templates = TemplateSet::daily_life();
    let (ds, _) = Pipeline::new(&schema, &templates, &gens).generate(&GenerateConfig::uniform(10), 1)?;
    println!("tokens per message: {:.2}", tpm(ds.records().map(|r| &r.trajectory)));
    println!("SWIP: {:.3}", swip(&ds).expect("generated datasets keep provenance"));

    let diluted = mix_eta(&ds, &FillerPool::shipped(), 10, EtaMode::Total, 1)?;
    println!("SWIP at η = 10: {:.3}", swip(&diluted).expect("mixing keeps provenance"));
    Ok(())
}
