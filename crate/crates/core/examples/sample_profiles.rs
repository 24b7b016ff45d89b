//! Draw user profiles and check the sampler against exact enumeration of
//! the joint distribution on a small network.
//!
//!     cargo run --example sample_profiles

use std::collections::BTreeMap;

use memsim::sampler::{enumerate_joint, joint_probability, sample_profile, Generators};
use memsim::schema::{load_schema, Value, DAILY_LIFE_SCHEMA};

const NETWORK: &str = r#"
entities:
  self self "User"
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
    otherwise -> {p: 0.2, q: 0.8}
"#;

fn main() -> memsim::Result<()> {
    let daily = load_schema(DAILY_LIFE_SCHEMA)?;
    let profile = sample_profile(&daily, 7, &Generators::offline())?;
    println!("{}", profile.render(&daily).lines().take(2).collect::<Vec<_>>().join("\n"));

    let small = load_schema(NETWORK)?;
    let exact = enumerate_joint(&small)?;
    let n = 20_000;
    let mut seen: BTreeMap<Vec<Value>, usize> = BTreeMap::new();
    for seed in 0..n {
        let p = sample_profile(&small, seed, &Generators::empty())?;
        let key: Vec<Value> = exact.attributes.iter().map(|a| p.get(a).cloned().unwrap()).collect();
        *seen.entry(key).or_default() += 1;
    }
    let mut tv = 0.0;
    println!("{:<12} {:>8} {:>8}", "assignment", "exact", "sampled");
    for (assignment, mass) in &exact.mass {
        let freq = seen.get(assignment).copied().unwrap_or(0) as f64 / n as f64;
        tv += (mass - freq).abs() / 2.0;
        let label: Vec<String> = assignment.iter().map(|v| v.to_string()).collect();
        println!("{:<12} {mass:>8.4} {freq:>8.4}", label.join(","));
    }
    println!("total variation distance over {n} draws: {tv:.4}");

    let p = sample_profile(&small, 1, &Generators::empty())?;
    println!("P(profile drawn with seed 1) = {:.4}", joint_probability(&small, &p)?);
    Ok(())
}
