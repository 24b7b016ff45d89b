//! Plug a generator into an external CPD. Generators receive the parent
//! values and a seeded stream, so profiles stay reproducible.
//!
//!     cargo run --example custom_generator

use memsim::sampler::{sample_profile, GenRequest, Generators};
use memsim::schema::load_schema;
use memsim::rng::Stream;
use rand::seq::SliceRandom;

const SCHEMA: &str = r#"
entities:
  self self "User"
  pet_1 pet "Pet"
attributes:
  pet_1.species "Species" categorical [cat, dog]
  pet_1.name "Name" text pet_name
edges:
  pet_1.species -> pet_1.name
cpds:
  cpd pet_1.species: uniform
  cpd pet_1.name | pet_1.species: external pet_name
"#;

fn pet_name(req: &GenRequest<'_>, rng: &mut Stream) -> memsim::Result<String> {
    let pool: &[&str] = match req.parent("species").map(|v| v.to_string()).as_deref() {
        Some("cat") => &["Mochi", "Tofu", "Luna"],
        _ => &["Biscuit", "Rex", "Pepper"],
    };
    Ok(pool.choose(rng).expect("pool is non-empty").to_string())
}

fn main() -> memsim::Result<()> {
    let schema = load_schema(SCHEMA)?;

    // without a registration the external CPD cannot be sampled
    let err = sample_profile(&schema, 1, &Generators::empty()).unwrap_err();
    println!("no generator: {err}");

    let mut gens = Generators::empty();
    gens.register("pet_name", pet_name);
    for seed in 0..4 {
        let p = sample_profile(&schema, seed, &gens)?;
        println!("seed {seed}: a {} called {}", p.get("pet_1.species").unwrap(), p.get("pet_1.name").unwrap());
    }
    assert_eq!(sample_profile(&schema, 3, &gens)?, sample_profile(&schema, 3, &gens)?);
    Ok(())
}
