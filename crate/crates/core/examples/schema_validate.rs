//! Parse a schema, get its sampling order, round-trip it through the
//! canonical text form and see how a cycle is reported.
//!
//!     cargo run --example schema_validate

use memsim::schema::{load_schema, serialize_schema, DAILY_LIFE_SCHEMA};
use memsim::Error;

const SMALL: &str = r#"
entities:
  self self "User"
attributes:
  self.gender "Gender" categorical [male, female]
  self.age "Age" int_range 20 60
  self.name "Name" categorical ["Wei Zhang", "Qiang Wang", "Li Na", "Fang Liu"]
edges:
  self.gender -> self.name
cpds:
  cpd self.gender: {male: 0.5, female: 0.5}
  cpd self.age: range 25 45
  cpd self.name | self.gender:
    when (self.gender = male) -> uniform ["Wei Zhang", "Qiang Wang"]
    when (self.gender = female) -> uniform ["Li Na", "Fang Liu"]
"#;

const CYCLIC: &str = r#"
entities:
  self self "User"
attributes:
  self.a "A" int_range 0 1
  self.b "B" int_range 0 1
edges:
  self.a -> self.b
  self.b -> self.a
cpds:
  cpd self.a | self.b: deterministic copy
  cpd self.b | self.a: deterministic copy
"#;

fn main() -> memsim::Result<()> {
    let small = load_schema(SMALL)?;
    println!("sampling order: {}", small.order().join(" -> "));

    let canonical = serialize_schema(&small);
    println!("canonical form:\n{canonical}");
    assert_eq!(load_schema(&canonical)?, small);

    let daily = load_schema(DAILY_LIFE_SCHEMA)?;
    println!(
        "daily-life schema: {} entities, {} attributes, {} edges",
        daily.entities.len(),
        daily.attributes.len(),
        daily.edges.len()
    );

    match load_schema(CYCLIC) {
        Err(Error::Cycle(path)) => println!("cycle rejected: {}", path.join(" -> ")),
        other => println!("unexpected: {other:?}"),
    }
    Ok(())
}
