//! Scenario schemas: entities, attributes, value spaces, causal edges and
//! conditional distributions of the relation network.
//!
//! A schema is loaded from the text format documented in
//! `docs/schema-format.md` ([`load_schema`]), checked for structural
//! consistency and acyclicity, and is immutable afterwards.

mod dag;
mod format;
mod parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dag::{topological_order, validate_dag};
pub use format::serialize_schema;

/// The daily-life scenario shipped with the crate.
pub const DAILY_LIFE_SCHEMA: &str = include_str!("../../data/daily_life.schema");

const PROB_TOLERANCE: f64 = 1e-9;

/// A concrete attribute value.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Text(String),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            Value::Text(s) => s.trim().parse().ok(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueSpace {
    Categorical { values: Vec<String>, ordered: bool },
    IntRange { min: i64, max: i64 },
    Digits { len: usize },
    Text { generator: String },
}

impl ValueSpace {
    fn check(&self, attr: &str) -> Result<()> {
        match self {
            ValueSpace::Categorical { values, .. } => {
                if values.is_empty() {
                    return Err(Error::Validation(format!("`{attr}`: categorical space is empty")));
                }
                let distinct: BTreeSet<_> = values.iter().collect();
                if distinct.len() != values.len() {
                    return Err(Error::Validation(format!("`{attr}`: duplicate categorical value")));
                }
            }
            ValueSpace::IntRange { min, max } if min > max => {
                return Err(Error::Validation(format!("`{attr}`: int_range {min} > {max}")));
            }
            ValueSpace::Digits { len: 0 } => {
                return Err(Error::Validation(format!("`{attr}`: digit string of length 0")));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn contains(&self, v: &Value) -> bool {
        match (self, v) {
            (ValueSpace::Categorical { values, .. }, Value::Text(s)) => values.contains(s),
            (ValueSpace::IntRange { min, max }, Value::Int(i)) => min <= i && i <= max,
            (ValueSpace::Digits { len }, Value::Text(s)) => {
                s.len() == *len && s.bytes().all(|b| b.is_ascii_digit())
            }
            (ValueSpace::Text { .. }, Value::Text(_)) => true,
            _ => false,
        }
    }

    /// Number of values, `None` for open text.
    pub fn cardinality(&self) -> Option<u128> {
        match self {
            ValueSpace::Categorical { values, .. } => Some(values.len() as u128),
            ValueSpace::IntRange { min, max } => Some((max - min) as u128 + 1),
            ValueSpace::Digits { len } => 10u128.checked_pow(*len as u32),
            ValueSpace::Text { .. } => None,
        }
    }

    /// All values in canonical order, when there are at most `limit` of them.
    pub fn enumerate(&self, limit: u128) -> Option<Vec<Value>> {
        let n = self.cardinality()?;
        if n > limit {
            return None;
        }
        Some(match self {
            ValueSpace::Categorical { values, .. } => values.iter().map(|s| Value::Text(s.clone())).collect(),
            ValueSpace::IntRange { min, max } => (*min..=*max).map(Value::Int).collect(),
            ValueSpace::Digits { len } => (0..n)
                .map(|i| Value::Text(format!("{:0width$}", i, width = *len)))
                .collect(),
            ValueSpace::Text { .. } => unreachable!(),
        })
    }

    /// Interpret a token from a schema or a rendered text as a value of this space.
    pub fn parse_value(&self, raw: &str) -> Result<Value> {
        let v = match self {
            ValueSpace::IntRange { .. } => Value::Int(
                raw.trim()
                    .parse()
                    .map_err(|_| Error::Validation(format!("`{raw}` is not an integer")))?,
            ),
            _ => Value::Text(raw.to_string()),
        };
        if !self.contains(&v) {
            return Err(Error::Validation(format!("`{raw}` is outside the value space")));
        }
        Ok(v)
    }

    /// Total order used by comparative and aggregative questions.
    pub fn order(&self) -> KeyOrder {
        match self {
            ValueSpace::IntRange { .. } => KeyOrder::Numeric,
            ValueSpace::Categorical { values, ordered: true } => KeyOrder::Ranked(values.clone()),
            _ => KeyOrder::Unordered,
        }
    }
}

/// How values of an attribute key compare.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyOrder {
    Numeric,
    Ranked(Vec<String>),
    Unordered,
}

impl KeyOrder {
    /// Sort key for a rendered value; `None` if the value cannot be ranked.
    pub fn rank(&self, value: &str) -> Option<i64> {
        match self {
            KeyOrder::Numeric => value.trim().parse().ok(),
            KeyOrder::Ranked(levels) => levels.iter().position(|l| l == value).map(|p| p as i64),
            KeyOrder::Unordered => None,
        }
    }

    pub fn is_ordered(&self) -> bool {
        !matches!(self, KeyOrder::Unordered)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityDef {
    pub entity_id: String,
    pub entity_type: String,
    pub display_name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub attr_id: String,
    pub entity_id: String,
    pub display_name: String,
    pub value_space: ValueSpace,
    pub shared_key: Option<String>,
}

impl AttributeDef {
    /// Local name: the part of the id after the entity prefix.
    pub fn local_name(&self) -> &str {
        self.attr_id
            .strip_prefix(&self.entity_id)
            .and_then(|s| s.strip_prefix('.'))
            .unwrap_or(&self.attr_id)
    }

    /// Semantic identity used to match the same attribute across entities.
    pub fn key(&self) -> &str {
        self.shared_key.as_deref().unwrap_or_else(|| self.local_name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum Distribution {
    Weights(Vec<(Value, f64)>),
    UniformOver(Vec<Value>),
    /// Uniform over the whole (finite) value space of the target.
    UniformSpace,
}

impl Distribution {
    pub fn point(v: Value) -> Self {
        Distribution::Weights(vec![(v, 1.0)])
    }

    /// Probability of `v` under this distribution for a target in `space`.
    pub fn prob(&self, v: &Value, space: &ValueSpace) -> f64 {
        match self {
            Distribution::Weights(w) => w.iter().filter(|(x, _)| x == v).map(|(_, p)| *p).sum(),
            Distribution::UniformOver(vals) => {
                if vals.contains(v) {
                    1.0 / vals.len() as f64
                } else {
                    0.0
                }
            }
            Distribution::UniformSpace => match space.cardinality() {
                Some(n) if space.contains(v) => 1.0 / n as f64,
                _ => 0.0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "fn", content = "arg", rename_all = "snake_case")]
pub enum DeterministicFn {
    Copy,
    Const(Value),
    /// `{0}`-style pattern over parent values with optional `:filter`s.
    Format(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub when: Vec<Value>,
    pub dist: Distribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CpdBody {
    Table {
        rows: Vec<TableRow>,
        otherwise: Option<Distribution>,
    },
    Deterministic(DeterministicFn),
    External { template: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cpd {
    pub target: String,
    pub parents: Vec<String>,
    pub body: CpdBody,
}

impl Cpd {
    /// Distribution for the realized parent values, for table bodies.
    pub fn row_for(&self, parent_values: &[Value]) -> Option<&Distribution> {
        match &self.body {
            CpdBody::Table { rows, otherwise } => rows
                .iter()
                .find(|r| r.when.as_slice() == parent_values)
                .map(|r| &r.dist)
                .or(otherwise.as_ref()),
            _ => None,
        }
    }
}

/// A validated relation network over attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    pub entities: Vec<EntityDef>,
    pub attributes: Vec<AttributeDef>,
    pub edges: Vec<(String, String)>,
    pub cpds: Vec<Cpd>,
    order: Vec<String>,
    attr_index: BTreeMap<String, usize>,
    entity_index: BTreeMap<String, usize>,
    cpd_index: BTreeMap<String, usize>,
}

/// Parse, resolve and validate schema text.
pub fn load_schema(source: &str) -> Result<Schema> {
    let raw = parse::parse(source)?;
    Schema::new(raw.entities, raw.attributes, raw.edges, raw.cpds)
}

impl Schema {
    pub fn new(
        entities: Vec<EntityDef>,
        attributes: Vec<AttributeDef>,
        edges: Vec<(String, String)>,
        cpds: Vec<Cpd>,
    ) -> Result<Self> {
        let mut entity_index = BTreeMap::new();
        for (i, e) in entities.iter().enumerate() {
            if entity_index.insert(e.entity_id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate entity `{}`", e.entity_id)));
            }
        }
        let mut attr_index = BTreeMap::new();
        for (i, a) in attributes.iter().enumerate() {
            if attr_index.insert(a.attr_id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate attribute `{}`", a.attr_id)));
            }
            if !entity_index.contains_key(&a.entity_id) {
                return Err(Error::Reference(format!(
                    "attribute `{}` belongs to unknown entity `{}`",
                    a.attr_id, a.entity_id
                )));
            }
            a.value_space.check(&a.attr_id)?;
        }
        let mut incoming: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (from, to) in &edges {
            for end in [from, to] {
                if !attr_index.contains_key(end) {
                    return Err(Error::Reference(format!("edge mentions unknown attribute `{end}`")));
                }
            }
            incoming.entry(to.clone()).or_default().insert(from.clone());
        }
        let mut cpd_index = BTreeMap::new();
        for (i, c) in cpds.iter().enumerate() {
            if !attr_index.contains_key(&c.target) {
                return Err(Error::Reference(format!("CPD for unknown attribute `{}`", c.target)));
            }
            if cpd_index.insert(c.target.clone(), i).is_some() {
                return Err(Error::Validation(format!("attribute `{}` has more than one CPD", c.target)));
            }
        }
        let mut schema = Schema {
            entities,
            attributes,
            edges,
            cpds,
            order: Vec::new(),
            attr_index,
            entity_index,
            cpd_index,
        };
        for a in &schema.attributes {
            let cpd = schema
                .cpd(&a.attr_id)
                .ok_or_else(|| Error::Validation(format!("attribute `{}` has no CPD", a.attr_id)))?;
            let declared: BTreeSet<&String> = cpd.parents.iter().collect();
            if declared.len() != cpd.parents.len() {
                return Err(Error::Validation(format!("CPD of `{}` repeats a parent", a.attr_id)));
            }
            let edged = incoming.get(&a.attr_id).cloned().unwrap_or_default();
            for p in &declared {
                if !edged.contains(*p) {
                    return Err(Error::Reference(format!(
                        "`{}` lists parent `{p}` but the edge {p} -> {} is missing",
                        a.attr_id, a.attr_id
                    )));
                }
            }
            for p in &edged {
                if !declared.contains(p) {
                    return Err(Error::Reference(format!(
                        "edge {p} -> {} is not reflected in its CPD parents",
                        a.attr_id
                    )));
                }
            }
            schema.check_cpd(a, cpd)?;
        }
        schema.order = validate_dag(&schema)?;
        Ok(schema)
    }

    fn check_cpd(&self, attr: &AttributeDef, cpd: &Cpd) -> Result<()> {
        let id = &attr.attr_id;
        let parent_spaces: Vec<&ValueSpace> = cpd
            .parents
            .iter()
            .map(|p| &self.attribute(p).expect("checked above").value_space)
            .collect();
        match &cpd.body {
            CpdBody::Table { rows, otherwise } => {
                if rows.is_empty() && otherwise.is_none() {
                    return Err(Error::Distribution(format!("`{id}`: empty table")));
                }
                let mut seen = BTreeSet::new();
                for row in rows {
                    if row.when.len() != cpd.parents.len() {
                        return Err(Error::Validation(format!(
                            "`{id}`: row has {} parent values, expected {}",
                            row.when.len(),
                            cpd.parents.len()
                        )));
                    }
                    for (v, space) in row.when.iter().zip(&parent_spaces) {
                        if !space.contains(v) {
                            return Err(Error::Validation(format!("`{id}`: parent value `{v}` outside its space")));
                        }
                    }
                    if !seen.insert(&row.when) {
                        return Err(Error::Validation(format!("`{id}`: duplicate table row")));
                    }
                    check_distribution(id, &row.dist, &attr.value_space)?;
                }
                if let Some(d) = otherwise {
                    check_distribution(id, d, &attr.value_space)?;
                }
            }
            CpdBody::Deterministic(f) => match f {
                DeterministicFn::Copy if cpd.parents.len() != 1 => {
                    return Err(Error::Validation(format!("`{id}`: copy needs exactly one parent")));
                }
                DeterministicFn::Const(v) if !attr.value_space.contains(v) => {
                    return Err(Error::Validation(format!("`{id}`: constant `{v}` outside its space")));
                }
                DeterministicFn::Format(pattern) => {
                    for idx in format_indices(pattern) {
                        if idx >= cpd.parents.len() {
                            return Err(Error::Validation(format!("`{id}`: format refers to parent {{{idx}}}")));
                        }
                    }
                }
                _ => {}
            },
            CpdBody::External { template } => {
                if template.is_empty() {
                    return Err(Error::Validation(format!("`{id}`: empty external template id")));
                }
            }
        }
        Ok(())
    }

    pub fn attribute(&self, attr_id: &str) -> Option<&AttributeDef> {
        self.attr_index.get(attr_id).map(|&i| &self.attributes[i])
    }

    pub fn entity(&self, entity_id: &str) -> Option<&EntityDef> {
        self.entity_index.get(entity_id).map(|&i| &self.entities[i])
    }

    pub fn cpd(&self, attr_id: &str) -> Option<&Cpd> {
        self.cpd_index.get(attr_id).map(|&i| &self.cpds[i])
    }

    /// Attributes in the validated topological order.
    pub fn order(&self) -> &[String] {
        &self.order
    }

    pub fn attributes_of<'a>(&'a self, entity_id: &'a str) -> impl Iterator<Item = &'a AttributeDef> + 'a {
        self.attributes.iter().filter(move |a| a.entity_id == entity_id)
    }

    pub fn entity_types(&self) -> BTreeSet<&str> {
        self.entities.iter().map(|e| e.entity_type.as_str()).collect()
    }

    /// Distinct (entity type, attribute) declarations; repeated entities of
    /// one type share a declaration.
    pub fn attribute_kinds(&self) -> BTreeSet<(String, String)> {
        self.attributes
            .iter()
            .map(|a| {
                let ty = self.entity(&a.entity_id).map(|e| e.entity_type.clone()).unwrap_or_default();
                (ty, a.local_name().to_string())
            })
            .collect()
    }

    /// Value space of the first attribute carrying `key`.
    pub fn key_space(&self, key: &str) -> Option<&ValueSpace> {
        self.attributes.iter().find(|a| a.key() == key).map(|a| &a.value_space)
    }

    pub fn key_orders(&self) -> BTreeMap<String, KeyOrder> {
        let mut out = BTreeMap::new();
        for a in &self.attributes {
            out.entry(a.key().to_string()).or_insert_with(|| a.value_space.order());
        }
        out
    }

    /// Attribute key for a display name as it appears in sentences.
    pub fn key_for_display(&self, display: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|a| a.display_name == display || crate::text::phrase_case(&a.display_name) == display)
            .map(|a| a.key())
    }

    pub fn display_for_key(&self, key: &str) -> Option<&str> {
        self.attributes.iter().find(|a| a.key() == key).map(|a| a.display_name.as_str())
    }

    pub fn has_external(&self) -> bool {
        self.cpds.iter().any(|c| matches!(c.body, CpdBody::External { .. }))
    }
}

fn check_distribution(attr: &str, d: &Distribution, space: &ValueSpace) -> Result<()> {
    match d {
        Distribution::Weights(w) => {
            if w.is_empty() {
                return Err(Error::Distribution(format!("`{attr}`: empty distribution")));
            }
            let mut seen = BTreeSet::new();
            let mut total = 0.0;
            for (v, p) in w {
                if !space.contains(v) {
                    return Err(Error::Validation(format!("`{attr}`: value `{v}` outside its space")));
                }
                if !seen.insert(v) {
                    return Err(Error::Distribution(format!("`{attr}`: value `{v}` listed twice")));
                }
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::Distribution(format!("`{attr}`: probability {p} outside [0, 1]")));
                }
                total += p;
            }
            if (total - 1.0).abs() > PROB_TOLERANCE {
                return Err(Error::Distribution(format!("`{attr}`: probabilities sum to {total}")));
            }
        }
        Distribution::UniformOver(vals) => {
            if vals.is_empty() {
                return Err(Error::Distribution(format!("`{attr}`: uniform over nothing")));
            }
            let distinct: BTreeSet<_> = vals.iter().collect();
            if distinct.len() != vals.len() {
                return Err(Error::Distribution(format!("`{attr}`: uniform list repeats a value")));
            }
            if let Some(v) = vals.iter().find(|v| !space.contains(v)) {
                return Err(Error::Validation(format!("`{attr}`: value `{v}` outside its space")));
            }
        }
        Distribution::UniformSpace => {
            if space.cardinality().is_none() {
                return Err(Error::Distribution(format!("`{attr}`: cannot be uniform over open text")));
            }
        }
    }
    Ok(())
}

/// Parent indices referenced by a format pattern.
pub(crate) fn format_indices(pattern: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        let Some(close) = rest[open..].find('}') else { break };
        let inner = &rest[open + 1..open + close];
        let idx = inner.split(':').next().unwrap_or("");
        if let Ok(i) = idx.parse() {
            out.push(i);
        }
        rest = &rest[open + close + 1..];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
entities:
  self self "User"
attributes:
  self.gender "Gender" categorical [male, female]
cpds:
  cpd self.gender: uniform
"#;

    #[test]
    fn minimal_schema_loads() {
        let s = load_schema(MINIMAL).unwrap();
        assert_eq!(s.attributes.len(), 1);
        assert!(s.edges.is_empty());
        assert_eq!(s.order(), ["self.gender"]);
    }

    #[test]
    fn parent_without_edge_is_a_reference_error() {
        let src = r#"
entities:
  self self "User"
attributes:
  self.education "Education" categorical [school, college]
  self.occupation "Occupation" categorical [clerk, engineer]
cpds:
  cpd self.education: uniform
  cpd self.occupation | self.education:
    when (self.education = school) -> {clerk: 1.0}
    when (self.education = college) -> {engineer: 1.0}
"#;
        assert!(matches!(load_schema(src), Err(Error::Reference(_))));
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let src = r#"
entities:
  self self "User"
attributes:
  self.gender "Gender" categorical [male, female]
cpds:
  cpd self.gender: {male: 0.5, female: 0.4}
"#;
        assert!(matches!(load_schema(src), Err(Error::Distribution(_))));
    }

    #[test]
    fn value_space_invariants() {
        for vs in [
            "categorical []",
            "categorical [a, a]",
            "int_range 5 3",
            "digits 0",
        ] {
            let src = format!(
                "entities:\n self self \"U\"\nattributes:\n self.x \"X\" {vs}\ncpds:\n cpd self.x: uniform\n"
            );
            assert!(load_schema(&src).is_err(), "{vs} accepted");
        }
    }

    #[test]
    fn missing_cpd_and_unknown_entity() {
        let src = "entities:\n self self \"U\"\nattributes:\n self.x \"X\" digits 3\n";
        assert!(matches!(load_schema(src), Err(Error::Validation(_))));
        let src = "entities:\n self self \"U\"\nattributes:\n other.x \"X\" digits 3\ncpds:\n cpd other.x: uniform\n";
        assert!(matches!(load_schema(src), Err(Error::Reference(_))));
    }

    #[test]
    fn uniform_over_text_is_rejected() {
        let src = "entities:\n self self \"U\"\nattributes:\n self.x \"X\" text blurb\ncpds:\n cpd self.x: uniform\n";
        assert!(matches!(load_schema(src), Err(Error::Distribution(_))));
    }

    #[test]
    fn daily_life_schema_counts() {
        let s = load_schema(DAILY_LIFE_SCHEMA).unwrap();
        assert_eq!(s.entities.len(), 11);
        assert_eq!(s.entity_types().len(), 7);
        assert_eq!(s.attribute_kinds().len(), 73);
    }

    #[test]
    fn key_orders() {
        let s = load_schema(DAILY_LIFE_SCHEMA).unwrap();
        let orders = s.key_orders();
        assert_eq!(orders["age"], KeyOrder::Numeric);
        assert!(matches!(&orders["education"], KeyOrder::Ranked(levels) if levels[0] == "Primary School"));
        assert_eq!(orders["hobbies"], KeyOrder::Unordered);
    }
}
