//! Ancestral sampling of profiles, exact joint probabilities, and brute-force
//! enumeration of the joint distribution for small explicit networks.

mod generators;

use std::collections::BTreeMap;
use std::fmt::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use generators::{GenRequest, Generator, Generators};
pub(crate) use generators::MONTHS;

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::schema::{Cpd, CpdBody, DeterministicFn, Distribution, Schema, Value, ValueSpace};

/// Upper bound on the product space `enumerate_joint` will walk.
pub const MAX_JOINT_STATES: u128 = 1_000_000;

/// One full assignment of values to the attributes of a schema.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub assignment: BTreeMap<String, Value>,
    pub seed: u64,
}

impl Profile {
    pub fn get(&self, attr_id: &str) -> Option<&Value> {
        self.assignment.get(attr_id)
    }

    /// Values grouped by entity, in schema declaration order.
    pub fn by_entity(&self, schema: &Schema) -> Vec<(String, Vec<(String, Value)>)> {
        schema
            .entities
            .iter()
            .map(|e| {
                let attrs = schema
                    .attributes_of(&e.entity_id)
                    .filter_map(|a| self.get(&a.attr_id).map(|v| (a.display_name.clone(), v.clone())))
                    .collect();
                (e.entity_id.clone(), attrs)
            })
            .collect()
    }

    /// Text rendering grouped by entity: `(Gender) male; (Name) Qiang Wang; ...`.
    pub fn render(&self, schema: &Schema) -> String {
        let mut out = String::new();
        for (entity_id, attrs) in self.by_entity(schema) {
            let title = schema.entity(&entity_id).map_or(entity_id.as_str(), |e| e.display_name.as_str());
            let _ = writeln!(out, "{title}:");
            let fields: Vec<String> = attrs.iter().map(|(k, v)| format!("({k}) {v};")).collect();
            let _ = writeln!(out, "{}\n", fields.join(" "));
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
        out
    }

    /// Every attribute present exactly once, every value inside its space.
    pub fn check(&self, schema: &Schema) -> Result<()> {
        if self.assignment.len() != schema.attributes.len() {
            return Err(Error::Invariant(format!(
                "profile has {} values for {} attributes",
                self.assignment.len(),
                schema.attributes.len()
            )));
        }
        for a in &schema.attributes {
            let v = self
                .get(&a.attr_id)
                .ok_or_else(|| Error::Invariant(format!("profile lacks `{}`", a.attr_id)))?;
            if !a.value_space.contains(v) {
                return Err(Error::Invariant(format!("`{}` = `{v}` is outside its space", a.attr_id)));
            }
        }
        Ok(())
    }
}

/// Draw from a distribution over `space`.
pub fn draw(dist: &Distribution, space: &ValueSpace, rng: &mut Stream) -> Result<Value> {
    match dist {
        Distribution::Weights(w) => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (v, p) in w {
                acc += p;
                if u < acc {
                    return Ok(v.clone());
                }
            }
            // rounding slack: last value with positive mass
            w.iter()
                .rev()
                .find(|(_, p)| *p > 0.0)
                .map(|(v, _)| v.clone())
                .ok_or_else(|| Error::Distribution("distribution without mass".into()))
        }
        Distribution::UniformOver(vals) => Ok(vals[rng.gen_range(0..vals.len())].clone()),
        Distribution::UniformSpace => match space {
            ValueSpace::Categorical { values, .. } => Ok(Value::Text(values[rng.gen_range(0..values.len())].clone())),
            ValueSpace::IntRange { min, max } => Ok(Value::Int(rng.gen_range(*min..=*max))),
            ValueSpace::Digits { len } => Ok(Value::Text(
                (0..*len).map(|_| char::from(b'0' + rng.gen_range(0..10u8))).collect(),
            )),
            ValueSpace::Text { .. } => Err(Error::Distribution("cannot draw uniformly from open text".into())),
        },
    }
}

fn parent_values<'a>(cpd: &Cpd, values: &'a BTreeMap<String, Value>) -> Result<Vec<&'a Value>> {
    cpd.parents
        .iter()
        .map(|p| {
            values
                .get(p)
                .ok_or_else(|| Error::Invariant(format!("parent `{p}` of `{}` not yet assigned", cpd.target)))
        })
        .collect()
}

fn missing_row(cpd: &Cpd, parents: &[&Value]) -> Error {
    Error::MissingRow {
        attr: cpd.target.clone(),
        parents: parents.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "),
    }
}

/// Month and day of a birthday such as `July 15th`.
pub fn parse_month_day(s: &str) -> Option<(u32, u32)> {
    let mut parts = s.split_whitespace();
    let month = parts.next()?;
    let m = MONTHS.iter().position(|x| x.eq_ignore_ascii_case(month))? as u32 + 1;
    let day: String = parts.next()?.chars().take_while(char::is_ascii_digit).collect();
    let d: u32 = day.parse().ok()?;
    (1..=31).contains(&d).then_some((m, d))
}

fn apply_filter(value: &str, filter: &str) -> Result<String> {
    Ok(match filter {
        "" => value.to_string(),
        "lower" => value.to_lowercase(),
        "slug" => crate::text::slug(value),
        "mmdd" => {
            let (m, d) = parse_month_day(value)
                .ok_or_else(|| Error::Validation(format!("`{value}` is not a month and day")))?;
            format!("{m:02}{d:02}")
        }
        other => return Err(Error::Validation(format!("unknown format filter `{other}`"))),
    })
}

/// Expand a `{i}` / `{i:filter}` pattern over parent values.
pub fn apply_format(pattern: &str, parents: &[&Value]) -> Result<String> {
    let mut out = String::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| Error::Validation(format!("unclosed `{{` in format `{pattern}`")))?;
        let inner = &rest[open + 1..open + close];
        let (idx, filter) = inner.split_once(':').unwrap_or((inner, ""));
        let i: usize = idx
            .parse()
            .map_err(|_| Error::Validation(format!("bad placeholder `{{{inner}}}` in `{pattern}`")))?;
        let v = parents
            .get(i)
            .ok_or_else(|| Error::Validation(format!("placeholder {{{i}}} has no parent")))?;
        out.push_str(&apply_filter(&v.to_string(), filter)?);
        rest = &rest[open + close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn deterministic(f: &DeterministicFn, parents: &[&Value]) -> Result<Value> {
    Ok(match f {
        DeterministicFn::Copy => parents[0].clone(),
        DeterministicFn::Const(v) => v.clone(),
        DeterministicFn::Format(p) => Value::Text(apply_format(p, parents)?),
    })
}

/// Ancestral sampling: attributes in topological order, each drawn from its
/// CPD given the already sampled parents, using a stream keyed by
/// `(seed, attr_id)`.
pub fn sample_profile(schema: &Schema, seed: u64, generators: &Generators) -> Result<Profile> {
    let mut values: BTreeMap<String, Value> = BTreeMap::new();
    for attr_id in schema.order() {
        let attr = schema.attribute(attr_id).expect("order lists schema attributes");
        let cpd = schema.cpd(attr_id).expect("validated schema has a CPD per attribute");
        let parents = parent_values(cpd, &values)?;
        let mut rng = stream(seed, attr_id);
        let v = match &cpd.body {
            CpdBody::Table { .. } => {
                let owned: Vec<Value> = parents.iter().map(|v| (*v).clone()).collect();
                let dist = cpd.row_for(&owned).ok_or_else(|| missing_row(cpd, &parents))?;
                draw(dist, &attr.value_space, &mut rng)?
            }
            CpdBody::Deterministic(f) => deterministic(f, &parents)?,
            CpdBody::External { template } => {
                let entity_type = schema.entity(&attr.entity_id).map_or("", |e| e.entity_type.as_str());
                let req = GenRequest {
                    template,
                    target: attr_id,
                    entity_type,
                    parents: cpd.parents.iter().map(String::as_str).zip(parents.iter().copied()).collect(),
                };
                attr.value_space.parse_value(&generators.generate(&req, &mut rng)?)?
            }
        };
        if !attr.value_space.contains(&v) {
            return Err(Error::Invariant(format!("`{attr_id}` sampled `{v}` outside its space")));
        }
        values.insert(attr_id.clone(), v);
    }
    Ok(Profile { assignment: values, seed })
}

/// `P(x_t | par(x_t))` for one attribute of an assignment.
fn local_probability(schema: &Schema, cpd: &Cpd, values: &BTreeMap<String, Value>) -> Result<f64> {
    let attr = schema.attribute(&cpd.target).expect("validated");
    let v = values
        .get(&cpd.target)
        .ok_or_else(|| Error::Invariant(format!("assignment lacks `{}`", cpd.target)))?;
    let parents = parent_values(cpd, values)?;
    Ok(match &cpd.body {
        CpdBody::Table { .. } => {
            let owned: Vec<Value> = parents.iter().map(|v| (*v).clone()).collect();
            let dist = cpd.row_for(&owned).ok_or_else(|| missing_row(cpd, &parents))?;
            dist.prob(v, &attr.value_space)
        }
        CpdBody::Deterministic(f) => {
            if deterministic(f, &parents)? == *v {
                1.0
            } else {
                0.0
            }
        }
        CpdBody::External { .. } => return Err(Error::ExternalCpd(cpd.target.clone())),
    })
}

/// Product of the local conditional probabilities of every attribute.
pub fn joint_probability(schema: &Schema, profile: &Profile) -> Result<f64> {
    let mut p = 1.0;
    for cpd in &schema.cpds {
        p *= local_probability(schema, cpd, &profile.assignment)?;
    }
    Ok(p)
}

/// The joint distribution as assignment (values in `attributes` order) to mass.
/// Assignments of zero mass are omitted.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTable {
    pub attributes: Vec<String>,
    pub mass: BTreeMap<Vec<Value>, f64>,
}

impl JointTable {
    pub fn total(&self) -> f64 {
        self.mass.values().sum()
    }

    pub fn get(&self, assignment: &[Value]) -> f64 {
        self.mass.get(assignment).copied().unwrap_or(0.0)
    }
}

/// Enumerate every assignment of a finite, fully explicit network by walking
/// the topological order and multiplying conditional probabilities.
pub fn enumerate_joint(schema: &Schema) -> Result<JointTable> {
    let mut states: u128 = 1;
    let mut spaces = BTreeMap::new();
    for a in &schema.attributes {
        if let Some(cpd) = schema.cpd(&a.attr_id) {
            if matches!(cpd.body, CpdBody::External { .. }) {
                return Err(Error::ExternalCpd(a.attr_id.clone()));
            }
        }
        let vals = a
            .value_space
            .enumerate(MAX_JOINT_STATES)
            .ok_or(Error::StateSpaceOverflow(a.value_space.cardinality().unwrap_or(u128::MAX)))?;
        states = states.saturating_mul(vals.len() as u128);
        if states > MAX_JOINT_STATES {
            return Err(Error::StateSpaceOverflow(states));
        }
        spaces.insert(a.attr_id.clone(), vals);
    }
    let attributes: Vec<String> = schema.attributes.iter().map(|a| a.attr_id.clone()).collect();
    let mut table = JointTable { attributes, mass: BTreeMap::new() };
    let mut partial = BTreeMap::new();
    walk(schema, &spaces, 0, 1.0, &mut partial, &mut table)?;
    Ok(table)
}

fn walk(
    schema: &Schema,
    spaces: &BTreeMap<String, Vec<Value>>,
    depth: usize,
    p: f64,
    partial: &mut BTreeMap<String, Value>,
    table: &mut JointTable,
) -> Result<()> {
    let Some(attr_id) = schema.order().get(depth) else {
        let key = table.attributes.iter().map(|a| partial[a].clone()).collect();
        *table.mass.entry(key).or_insert(0.0) += p;
        return Ok(());
    };
    let cpd = schema.cpd(attr_id).expect("validated");
    for v in &spaces[attr_id] {
        partial.insert(attr_id.clone(), v.clone());
        let local = local_probability(schema, cpd, partial)?;
        if local > 0.0 {
            walk(schema, spaces, depth + 1, p * local, partial, table)?;
        }
    }
    partial.remove(attr_id);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{load_schema, DAILY_LIFE_SCHEMA};

    const COPY_CHAIN: &str = r#"
entities:
  self self "U"
attributes:
  self.a "A" int_range 0 1
  self.b "B" int_range 0 1
edges:
  self.a -> self.b
cpds:
  cpd self.a: uniform
  cpd self.b | self.a: deterministic copy
"#;

    #[test]
    fn deterministic_copy_follows_parent() {
        let s = load_schema(COPY_CHAIN).unwrap();
        for seed in 0..50 {
            let p = sample_profile(&s, seed, &Generators::empty()).unwrap();
            assert_eq!(p.get("self.a"), p.get("self.b"));
        }
    }

    #[test]
    fn contradiction_has_zero_mass() {
        let s = load_schema(COPY_CHAIN).unwrap();
        let mut p = sample_profile(&s, 0, &Generators::empty()).unwrap();
        p.assignment.insert("self.a".into(), Value::Int(0));
        p.assignment.insert("self.b".into(), Value::Int(1));
        assert_eq!(joint_probability(&s, &p).unwrap(), 0.0);
        p.assignment.insert("self.b".into(), Value::Int(0));
        assert_eq!(joint_probability(&s, &p).unwrap(), 0.5);
    }

    #[test]
    fn independent_binaries_enumerate_to_quarters() {
        let s = load_schema(
            "entities:\n self self \"U\"\nattributes:\n self.x \"X\" int_range 0 1\n self.y \"Y\" int_range 0 1\ncpds:\n cpd self.x: uniform\n cpd self.y: uniform\n",
        )
        .unwrap();
        let j = enumerate_joint(&s).unwrap();
        assert_eq!(j.mass.len(), 4);
        assert!(j.mass.values().all(|p| (*p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn external_cpds_have_no_density() {
        let s = load_schema(DAILY_LIFE_SCHEMA).unwrap();
        let p = sample_profile(&s, 3, &Generators::offline()).unwrap();
        assert!(matches!(joint_probability(&s, &p), Err(Error::ExternalCpd(_))));
        assert!(matches!(enumerate_joint(&s), Err(Error::ExternalCpd(_))));
    }

    #[test]
    fn overflow_is_reported() {
        let s = load_schema(
            "entities:\n self self \"U\"\nattributes:\n self.x \"X\" digits 7\ncpds:\n cpd self.x: uniform\n",
        )
        .unwrap();
        assert!(matches!(enumerate_joint(&s), Err(Error::StateSpaceOverflow(_))));
    }

    #[test]
    fn daily_life_profiles_are_complete_and_reproducible() {
        let s = load_schema(DAILY_LIFE_SCHEMA).unwrap();
        let g = Generators::offline();
        for seed in 0..20 {
            let p = sample_profile(&s, seed, &g).unwrap();
            p.check(&s).unwrap();
            assert_eq!(p, sample_profile(&s, seed, &g).unwrap());
            for c in ["colleague_1", "colleague_2"] {
                assert_eq!(p.get(&format!("{c}.company")), p.get("self.company"));
            }
            let email = p.get("self.email").unwrap().to_string();
            assert!(email.ends_with(".com") && email.contains('@'), "{email}");
        }
        assert_ne!(sample_profile(&s, 1, &g).unwrap(), sample_profile(&s, 2, &g).unwrap());
    }

    #[test]
    fn missing_generator_is_reported() {
        let s = load_schema(DAILY_LIFE_SCHEMA).unwrap();
        assert!(matches!(sample_profile(&s, 0, &Generators::empty()), Err(Error::UnresolvedGenerator(_))));
    }

    #[test]
    fn missing_table_row_is_reported() {
        let s = load_schema(
            r#"
entities:
  self self "U"
attributes:
  self.a "A" categorical [x, y]
  self.b "B" categorical [p, q]
edges:
  self.a -> self.b
cpds:
  cpd self.a: point y
  cpd self.b | self.a:
    when (self.a = x) -> uniform
"#,
        )
        .unwrap();
        assert!(matches!(sample_profile(&s, 0, &Generators::empty()), Err(Error::MissingRow { .. })));
    }

    #[test]
    fn rendering_groups_by_entity() {
        let s = load_schema(DAILY_LIFE_SCHEMA).unwrap();
        let p = sample_profile(&s, 7, &Generators::offline()).unwrap();
        let text = p.render(&s);
        assert!(text.starts_with("User:\n(Gender) "), "{text}");
        assert!(text.contains("\n\nColleague 1:\n(Gender) "));
        assert_eq!(text.lines().filter(|l| l.ends_with(':')).count(), s.entities.len());
    }

    #[test]
    fn format_filters() {
        let name = Value::from("Qiang Wang");
        let bday = Value::from("December 1st");
        let co = Value::from("Huayin Financial Service Center");
        assert_eq!(
            apply_format("{0:slug}{1:mmdd}@{2:slug}.com", &[&name, &bday, &co]).unwrap(),
            "qiangwang1201@huayinfinancialservicecenter.com"
        );
        assert!(apply_format("{0:shout}", &[&name]).is_err());
    }
}
