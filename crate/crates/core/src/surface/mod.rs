//! Natural-language surface: messages, questions and answer choices from
//! hints and plans, through a template set. An optional chat-completion
//! client can paraphrase the template output under value checks.

mod choices;
pub mod llm;
mod reader;
mod template;

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

pub use choices::render_choices;
pub use reader::Reader;
pub use template::Template;

use crate::error::{Error, Result};
use crate::hintgen::{EntityView, Hint, QaPlan, QaType, ReasoningFactor};
use crate::qa::{AggFunction, CmpOp, Direction};
use crate::sampler::Profile;
use crate::schema::Schema;
use crate::text::{capitalize, join_list};

/// Templates for the daily-life schema.
pub const DAILY_LIFE_TEMPLATES: &str = include_str!("../../data/templates.toml");
/// Chit-chat openers for noisy questions, one per line.
pub const NOISE_PHRASES: &str = include_str!("../../data/noise_phrases.txt");

const MESSAGE_SLOTS: &[&str] = &["entity", "Entity", "attribute", "value"];
const QUESTION_SLOTS: &[&str] =
    &["entity", "Entity", "entity2", "entities", "attribute", "attribute2", "a", "kind", "condition", "factor"];
const CONDITION_SLOTS: &[&str] = &["attribute", "value"];
const FACTOR_SLOTS: &[&str] = &["n"];

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTemplates {
    labels: BTreeMap<String, String>,
    #[serde(default)]
    kinds: BTreeMap<String, String>,
    messages: BTreeMap<String, String>,
    questions: BTreeMap<String, String>,
    #[serde(default)]
    conditions: BTreeMap<String, String>,
    #[serde(default)]
    factors: BTreeMap<String, String>,
}

fn compile(section: &str, raw: BTreeMap<String, String>, allowed: Option<&[&str]>) -> Result<BTreeMap<String, Template>> {
    raw.into_iter()
        .map(|(k, src)| {
            let t = Template::parse(&src)?;
            if let Some(allowed) = allowed {
                if let Some(bad) = t.slots().find(|s| !allowed.contains(s)) {
                    return Err(Error::Config(format!("[{section}] `{k}`: undeclared placeholder `{{{bad}}}`")));
                }
            }
            Ok((k, t))
        })
        .collect()
}

/// Message, question, condition and label templates plus the phrase pool
/// for noisy questions.
#[derive(Clone, Debug)]
pub struct TemplateSet {
    labels: BTreeMap<String, Template>,
    kinds: BTreeMap<String, String>,
    messages: BTreeMap<String, Template>,
    questions: BTreeMap<String, Template>,
    conditions: BTreeMap<String, Template>,
    factors: BTreeMap<String, Template>,
    noise_phrases: Vec<String>,
}

pub fn op_name(op: CmpOp) -> &'static str {
    match op {
        CmpOp::Lt => "lt",
        CmpOp::Le => "le",
        CmpOp::Gt => "gt",
        CmpOp::Ge => "ge",
        CmpOp::Eq => "eq",
    }
}

pub fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Max => "max",
        Direction::Min => "min",
    }
}

pub fn aggregation_name(f: &AggFunction) -> &'static str {
    match f {
        AggFunction::CountWhere { .. } => "count",
        AggFunction::Argmax => "argmax",
        AggFunction::Argmin => "argmin",
    }
}

/// Parse a phrase pool: one entry per non-blank line.
pub fn parse_lines(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
}

impl TemplateSet {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawTemplates = toml::from_str(text).map_err(|e| Error::Config(format!("templates: {e}")))?;
        let set = TemplateSet {
            labels: compile("labels", raw.labels, None)?,
            kinds: raw.kinds,
            messages: compile("messages", raw.messages, Some(MESSAGE_SLOTS))?,
            questions: compile("questions", raw.questions, Some(QUESTION_SLOTS))?,
            conditions: compile("conditions", raw.conditions, Some(CONDITION_SLOTS))?,
            factors: compile("factors", raw.factors, Some(FACTOR_SLOTS))?,
            noise_phrases: parse_lines(NOISE_PHRASES),
        };
        if !set.messages.contains_key("default") {
            return Err(Error::Config("[messages] needs a `default` template".into()));
        }
        Ok(set)
    }

    /// The shipped daily-life templates.
    pub fn daily_life() -> Self {
        Self::from_toml(DAILY_LIFE_TEMPLATES).expect("shipped templates parse")
    }

    pub fn with_noise_phrases(mut self, phrases: Vec<String>) -> Result<Self> {
        if phrases.is_empty() {
            return Err(Error::Config("noise phrase pool is empty".into()));
        }
        self.noise_phrases = phrases;
        Ok(self)
    }

    pub fn noise_phrases(&self) -> &[String] {
        &self.noise_phrases
    }

    pub fn label_template(&self, entity_type: &str) -> Result<&Template> {
        self.labels
            .get(entity_type)
            .ok_or_else(|| Error::MissingTemplate(format!("no label template for entity type `{entity_type}`")))
    }

    /// Noun used for an entity type in questions ("person", "event").
    pub fn kind(&self, entity_type: &str) -> String {
        self.kinds.get(entity_type).cloned().unwrap_or_else(|| entity_type.replace('_', " "))
    }

    fn lookup<'a>(map: &'a BTreeMap<String, Template>, keys: &[String]) -> Option<&'a Template> {
        keys.iter().find_map(|k| map.get(k))
    }

    pub fn message_template(&self, entity_type: &str, key: &str) -> Result<&Template> {
        let keys = [format!("{entity_type}/{key}"), entity_type.to_string(), format!("*/{key}"), "default".into()];
        Self::lookup(&self.messages, &keys)
            .ok_or_else(|| Error::MissingTemplate(format!("no message template for {entity_type}/{key}")))
    }

    /// Question template for `qa`, tried with `variant` first.
    pub fn question_template(&self, qa: &str, ty: &str, key: &str, variant: Option<&str>) -> Result<&Template> {
        let mut keys = Vec::new();
        for v in variant.into_iter().map(|v| format!("/{v}")).chain([String::new()]) {
            keys.extend([format!("{qa}/{ty}/{key}{v}"), format!("{qa}/{ty}{v}"), format!("{qa}/*/{key}{v}"), format!("{qa}{v}")]);
        }
        Self::lookup(&self.questions, &keys)
            .ok_or_else(|| Error::MissingTemplate(format!("no question template for {qa}/{ty}/{key}")))
    }

    pub fn condition_template(&self, key: &str, op: CmpOp) -> Result<&Template> {
        let op = op_name(op);
        Self::lookup(&self.conditions, &[format!("{key}/{op}"), op.to_string()])
            .ok_or_else(|| Error::MissingTemplate(format!("no condition template for {key}/{op}")))
    }

    pub fn factor_phrase(&self, f: &ReasoningFactor) -> Result<String> {
        let t = self
            .factors
            .get(f.id())
            .ok_or_else(|| Error::MissingTemplate(format!("no phrase for factor `{}`", f.id())))?;
        let n = match f {
            ReasoningFactor::DigitSumLastN { n } => n.to_string(),
            _ => String::new(),
        };
        t.render(&BTreeMap::from([("n", n)]))
    }

    /// Every entity type has a label built from its own attributes and every
    /// attribute has a message template.
    pub fn check_schema(&self, schema: &Schema) -> Result<()> {
        for e in &schema.entities {
            let t = self.label_template(&e.entity_type)?;
            let locals: BTreeSet<&str> = schema.attributes_of(&e.entity_id).map(|a| a.local_name()).collect();
            if let Some(bad) = t.slots().find(|s| !locals.contains(s)) {
                return Err(Error::Config(format!(
                    "label for `{}` uses `{{{bad}}}`, which is not one of its attributes",
                    e.entity_type
                )));
            }
        }
        for a in &schema.attributes {
            let ty = schema.entity(&a.entity_id).map(|e| e.entity_type.as_str()).unwrap_or_default();
            self.message_template(ty, a.key())?;
        }
        Ok(())
    }
}

/// How each entity of a profile is referred to. Entities whose label
/// collides with another's are marked ineligible.
pub fn entity_views(schema: &Schema, profile: &Profile, templates: &TemplateSet) -> Result<Vec<EntityView>> {
    let mut views = Vec::with_capacity(schema.entities.len());
    for e in &schema.entities {
        let t = templates.label_template(&e.entity_type)?;
        let mut vars = BTreeMap::new();
        let mut identity = BTreeSet::new();
        for slot in t.slots() {
            let attr = schema
                .attributes_of(&e.entity_id)
                .find(|a| a.local_name() == slot)
                .ok_or_else(|| Error::MissingTemplate(format!("label slot `{slot}` on `{}`", e.entity_id)))?;
            let value = profile.get(&attr.attr_id).map(|v| v.to_string()).unwrap_or_default();
            vars.insert(slot, value);
            identity.insert(attr.attr_id.clone());
        }
        let label = t.render(&vars)?.trim().to_string();
        views.push(EntityView {
            entity_id: e.entity_id.clone(),
            entity_type: e.entity_type.clone(),
            kind: templates.kind(&e.entity_type),
            label,
            identity,
            eligible: true,
        });
    }
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for v in &views {
        *seen.entry(reader::normalize_entity(&v.label)).or_default() += 1;
    }
    for v in &mut views {
        v.eligible = !v.label.is_empty() && seen[&reader::normalize_entity(&v.label)] == 1;
    }
    Ok(views)
}

/// One sentence stating a hint. It contains the value verbatim.
pub fn render_message(hint: &Hint, templates: &TemplateSet) -> Result<String> {
    if hint.label().trim().is_empty() {
        return Err(Error::MissingTemplate(format!("entity `{}` has an empty label", hint.entity_id)));
    }
    let t = templates.message_template(&hint.entity_type, &hint.key)?;
    let value = hint.value.to_string();
    let vars = BTreeMap::from([
        ("entity", hint.label().to_string()),
        ("Entity", capitalize(hint.label())),
        ("attribute", hint.attribute().to_string()),
        ("value", value.clone()),
    ]);
    let text = t.render(&vars)?;
    if !crate::text::contains_verbatim(&text, &value) {
        return Err(Error::Invariant(format!("message `{text}` lost the value `{value}`")));
    }
    Ok(text)
}

/// The question asked by a plan.
pub fn render_question(plan: &QaPlan, templates: &TemplateSet) -> Result<String> {
    let t = &plan.target_hints;
    let first = t.first().ok_or_else(|| Error::Invariant("plan without target hints".into()))?;
    let kind = plan.kind.clone().unwrap_or_else(|| templates.kind(&first.entity_type));
    let mut vars: BTreeMap<&str, String> = BTreeMap::from([("kind", kind.clone()), ("attribute", first.attribute().to_string())]);
    let q = match plan.qa_type {
        QaType::SingleHop => {
            vars.insert("entity", first.label().to_string());
            vars.insert("Entity", capitalize(first.label()));
            templates.question_template("single_hop", &first.entity_type, &first.key, None)?.render(&vars)?
        }
        QaType::MultiHop | QaType::Noisy | QaType::PostProcessing => {
            let target = t.get(1).ok_or_else(|| Error::Invariant("bridge plan needs two hints".into()))?;
            vars.insert("a", first.value.to_string());
            vars.insert("attribute2", target.attribute().to_string());
            let (qa, variant) = match plan.qa_type {
                QaType::PostProcessing => {
                    let f = plan
                        .reasoning_factor
                        .ok_or_else(|| Error::Invariant("post-processing plan without factor".into()))?;
                    vars.insert("factor", templates.factor_phrase(&f)?);
                    ("post_processing", Some(f.id()))
                }
                _ => ("multi_hop", None),
            };
            let q = templates.question_template(qa, &target.entity_type, &target.key, variant)?.render(&vars)?;
            if plan.qa_type == QaType::Noisy {
                let pool = templates.noise_phrases();
                if pool.is_empty() {
                    return Err(Error::Config("noise phrase pool is empty".into()));
                }
                format!("{} {q}", pool[(plan.variant % pool.len() as u64) as usize])
            } else {
                q
            }
        }
        QaType::Comparative => {
            let second = t.get(1).ok_or_else(|| Error::Invariant("comparative plan needs two hints".into()))?;
            let dir = plan.direction.ok_or_else(|| Error::Invariant("comparative plan without direction".into()))?;
            vars.insert("entity", first.label().to_string());
            vars.insert("Entity", capitalize(first.label()));
            vars.insert("entity2", second.label().to_string());
            templates.question_template("comparative", &kind, &first.key, Some(direction_name(dir)))?.render(&vars)?
        }
        QaType::Aggregative => {
            let agg = plan
                .aggregation
                .as_ref()
                .ok_or_else(|| Error::Invariant("aggregative plan without aggregation".into()))?;
            let labels: Vec<String> = t.iter().map(|h| h.label().to_string()).collect();
            vars.insert("entities", join_list(&labels));
            if let AggFunction::CountWhere { predicate } = &agg.function {
                let cond = templates.condition_template(&first.key, predicate.op)?;
                let cvars = BTreeMap::from([
                    ("attribute", first.attribute().to_string()),
                    ("value", predicate.threshold.clone()),
                ]);
                vars.insert("condition", cond.render(&cvars)?);
            }
            templates
                .question_template("aggregative", &kind, &first.key, Some(aggregation_name(&agg.function)))?
                .render(&vars)?
        }
    };
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hintgen::QaPlan;
    use crate::schema::{load_schema, Value, DAILY_LIFE_SCHEMA};

    fn hint(label: &str, ty: &str, key: &str, attr: &str, value: Value) -> Hint {
        Hint {
            entity_id: format!("{ty}_1"),
            attr_id: format!("{ty}_1.{key}"),
            entity_type: ty.into(),
            key: key.into(),
            display: (label.into(), attr.into()),
            value,
        }
    }

    fn plan(qa_type: QaType, target_hints: Vec<Hint>) -> QaPlan {
        QaPlan {
            qa_type,
            target_hints,
            noise_hints: vec![],
            bridge_entity: None,
            shared_key: None,
            reasoning_factor: None,
            aggregation: None,
            direction: None,
            order: None,
            kind: Some("person".into()),
            variant: 3,
            noise_requested: Default::default(),
        }
    }

    #[test]
    fn shipped_templates_cover_the_schema() {
        let s = load_schema(DAILY_LIFE_SCHEMA).unwrap();
        TemplateSet::daily_life().check_schema(&s).unwrap();
    }

    #[test]
    fn messages_carry_value_and_entity() {
        let t = TemplateSet::daily_life();
        let h = hint("my uncle Bob", "relative", "occupation", "occupation", "Driver".into());
        assert_eq!(render_message(&h, &t).unwrap(), "The occupation of my uncle Bob is Driver.");
        let h = hint("my colleague Wei Zhang", "colleague", "phone", "phone number", "15391721618".into());
        let m = render_message(&h, &t).unwrap();
        assert!(m.contains("15391721618") && m.contains("colleague"), "{m}");
        let h = hint("", "colleague", "age", "age", Value::Int(3));
        assert!(matches!(render_message(&h, &t), Err(Error::MissingTemplate(_))));
    }

    #[test]
    fn questions_of_each_shape() {
        let t = TemplateSet::daily_life();
        let cousin = hint("my cousin Wei Zhang", "relative", "age", "age", Value::Int(36));
        assert_eq!(render_question(&plan(QaType::SingleHop, vec![cousin.clone()]), &t).unwrap(), "How old is my cousin Wei Zhang now?");

        let edu = hint("my cousin Wei Zhang", "relative", "education", "education", "High School".into());
        let work = hint("my cousin Wei Zhang", "relative", "workplace", "workplace", "Shenzhen, Guangdong".into());
        let multi = plan(QaType::MultiHop, vec![edu.clone(), work.clone()]);
        let q = render_question(&multi, &t).unwrap();
        assert_eq!(q, "Where does the person whose education is High School work now?");

        let mut noisy = multi.clone();
        noisy.qa_type = QaType::Noisy;
        let nq = render_question(&noisy, &t).unwrap();
        let prefix = nq.strip_suffix(&q).unwrap();
        assert!(t.noise_phrases().contains(&prefix.trim_end().to_string()));

        let boss = hint("Yalin Zhao", "colleague", "age", "age", Value::Int(44));
        let cousin = hint("Wei Zhang", "relative", "age", "age", Value::Int(36));
        let mut cmp = plan(QaType::Comparative, vec![boss, cousin]);
        cmp.direction = Some(Direction::Max);
        assert_eq!(render_question(&cmp, &t).unwrap(), "Who is older, Yalin Zhao or Wei Zhang?");
    }
}
