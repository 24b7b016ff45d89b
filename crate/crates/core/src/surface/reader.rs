//! The template set read backwards: messages become facts and questions
//! become queries, so answers can be recomputed from text alone. This is
//! what the scripted responder uses to answer from memory.

use std::collections::{BTreeMap, BTreeSet};

use regex::{Regex, RegexSet};

use super::{aggregation_name, direction_name, Template, TemplateSet};
use crate::error::{Error, Result};
use crate::hintgen::ReasoningFactor;
use crate::qa::{answer_query, answer_text, AggFunction, CmpOp, Direction, Fact, Predicate, Query};
use crate::schema::{KeyOrder, Schema};
use crate::text::{phrase_case, split_list};

/// Entity references compare without regard to the case of their first
/// letter, since labels are capitalized at the start of a sentence.
pub(crate) fn normalize_entity(s: &str) -> String {
    let mut chars = s.trim().chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[derive(Clone, Debug)]
enum Shape {
    Fact { attribute: String },
    Lookup { attribute: String },
    Bridge { target_attribute: String, factor: Option<ReasoningFactor> },
    Compare { attribute: String, direction: Direction },
    Count { attribute: String, op: CmpOp },
    Extreme { attribute: String, function: AggFunction },
}

#[derive(Debug)]
struct Pattern {
    re: Regex,
    groups: Vec<String>,
    /// Entity named by the template itself ("My age is ..." names the user).
    entity: Option<String>,
    shape: Shape,
}

impl Pattern {
    fn captures(&self, text: &str) -> Option<BTreeMap<String, String>> {
        let caps = self.re.captures(text)?;
        let mut out: BTreeMap<String, String> = BTreeMap::new();
        for (i, name) in self.groups.iter().enumerate() {
            let raw = caps.name(&format!("g{i}"))?.as_str();
            let (slot, value) = match name.as_str() {
                "entity" | "Entity" => ("entity".to_string(), normalize_entity(raw)),
                other => (other.to_string(), raw.to_string()),
            };
            if out.get(&slot).is_some_and(|prev| *prev != value) {
                return None;
            }
            out.insert(slot, value);
        }
        if let Some(e) = &self.entity {
            out.entry("entity".into()).or_insert_with(|| normalize_entity(e));
        }
        Some(out)
    }
}

struct PatternSet {
    set: RegexSet,
    patterns: Vec<Pattern>,
}

impl PatternSet {
    fn new(patterns: Vec<Pattern>) -> Result<Self> {
        let set = RegexSet::new(patterns.iter().map(|p| p.re.as_str()))
            .map_err(|e| Error::Config(format!("template pattern: {e}")))?;
        Ok(PatternSet { set, patterns })
    }

    fn matches<'a>(&'a self, text: &'a str) -> impl Iterator<Item = (&'a Pattern, BTreeMap<String, String>)> + 'a {
        self.set
            .matches(text)
            .into_iter()
            .filter_map(move |i| self.patterns[i].captures(text).map(|c| (&self.patterns[i], c)))
    }
}

/// Recovers facts and queries from template-rendered text.
pub struct Reader {
    messages: PatternSet,
    questions: PatternSet,
    orders: BTreeMap<String, KeyOrder>,
}

impl std::fmt::Debug for Reader {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Reader")
            .field("message_patterns", &self.messages.patterns.len())
            .field("question_patterns", &self.questions.patterns.len())
            .finish()
    }
}

struct Builder<'a> {
    templates: &'a TemplateSet,
    seen: BTreeSet<(String, String)>,
    out: Vec<Pattern>,
}

impl Builder<'_> {
    fn add(&mut self, t: &Template, fixed: BTreeMap<&str, String>, entity_type: &str, shape: Shape) -> Result<()> {
        let entity = if t.has_slot("entity") || t.has_slot("Entity") || !matches!(shape, Shape::Fact { .. } | Shape::Lookup { .. }) {
            None
        } else {
            // the template names a fixed entity; only usable when its label is constant
            match self.templates.label_template(entity_type) {
                Ok(label) if label.slots().next().is_none() => Some(label.source().to_string()),
                _ => return Ok(()),
            }
        };
        let (src, groups) = t.pattern(&fixed);
        if !self.seen.insert((src.clone(), format!("{shape:?}"))) {
            return Ok(());
        }
        let re = Regex::new(&src).map_err(|e| Error::Config(format!("template `{}`: {e}", t.source())))?;
        self.out.push(Pattern { re, groups, entity, shape });
        Ok(())
    }
}

impl Reader {
    pub fn new(schema: &Schema, templates: &TemplateSet, factors: &[ReasoningFactor]) -> Result<Self> {
        let mut orders = BTreeMap::new();
        // (entity type, key, attribute phrase)
        let mut kinds: BTreeSet<(String, String, String)> = BTreeSet::new();
        for a in &schema.attributes {
            let phrase = phrase_case(&a.display_name);
            orders.entry(phrase.clone()).or_insert_with(|| a.value_space.order());
            let ty = schema.entity(&a.entity_id).map(|e| e.entity_type.clone()).unwrap_or_default();
            kinds.insert((ty, a.key().to_string(), phrase));
        }

        let mut msgs = Builder { templates, seen: BTreeSet::new(), out: Vec::new() };
        let mut qs = Builder { templates, seen: BTreeSet::new(), out: Vec::new() };
        for (ty, key, phrase) in &kinds {
            let attr = || BTreeMap::from([("attribute", phrase.clone())]);
            let t = templates.message_template(ty, key)?;
            msgs.add(t, attr(), ty, Shape::Fact { attribute: phrase.clone() })?;

            if let Ok(t) = templates.question_template("single_hop", ty, key, None) {
                qs.add(t, attr(), ty, Shape::Lookup { attribute: phrase.clone() })?;
            }
            let kind = templates.kind(ty);
            let bridge = || BTreeMap::from([("attribute2", phrase.clone()), ("kind", kind.clone())]);
            if let Ok(t) = templates.question_template("multi_hop", ty, key, None) {
                qs.add(t, bridge(), ty, Shape::Bridge { target_attribute: phrase.clone(), factor: None })?;
            }
            for f in factors {
                if let (Ok(t), Ok(phrase_f)) =
                    (templates.question_template("post_processing", ty, key, Some(f.id())), templates.factor_phrase(f))
                {
                    let mut fixed = bridge();
                    fixed.insert("factor", phrase_f);
                    qs.add(t, fixed, ty, Shape::Bridge { target_attribute: phrase.clone(), factor: Some(*f) })?;
                }
            }
            let group = || BTreeMap::from([("attribute", phrase.clone()), ("kind", kind.clone())]);
            for direction in [Direction::Max, Direction::Min] {
                if let Ok(t) = templates.question_template("comparative", &kind, key, Some(direction_name(direction))) {
                    qs.add(t, group(), ty, Shape::Compare { attribute: phrase.clone(), direction })?;
                }
            }
            for function in [AggFunction::Argmax, AggFunction::Argmin] {
                if let Ok(t) = templates.question_template("aggregative", &kind, key, Some(aggregation_name(&function))) {
                    qs.add(t, group(), ty, Shape::Extreme { attribute: phrase.clone(), function })?;
                }
            }
            let count = AggFunction::CountWhere { predicate: Predicate { op: CmpOp::Eq, threshold: String::new() } };
            if let Ok(t) = templates.question_template("aggregative", &kind, key, Some(aggregation_name(&count))) {
                for op in [CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Eq] {
                    let Ok(cond) = templates.condition_template(key, op) else { continue };
                    // the condition's {value} is the threshold; its {attribute} is fixed
                    let combined = Template::parse(&t.source().replace("{condition}", cond.source()))?;
                    qs.add(&combined, group(), ty, Shape::Count { attribute: phrase.clone(), op })?;
                }
            }
        }
        Ok(Reader { messages: PatternSet::new(msgs.out)?, questions: PatternSet::new(qs.out)?, orders })
    }

    /// Facts stated by one message; empty for text no template produces.
    pub fn facts(&self, text: &str) -> Vec<Fact> {
        let mut out: Vec<Fact> = self
            .messages
            .matches(text.trim())
            .filter_map(|(p, caps)| match &p.shape {
                Shape::Fact { attribute } => Some(Fact {
                    entity: caps.get("entity")?.clone(),
                    attribute: attribute.clone(),
                    value: caps.get("value")?.clone(),
                }),
                _ => None,
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Readings of a question, most literal first. A chit-chat opener before
    /// the question is skipped.
    pub fn queries(&self, question: &str) -> Vec<Query> {
        let q = question.trim();
        let mut starts = vec![0];
        for sep in [". ", "? ", "! "] {
            starts.extend(q.match_indices(sep).map(|(i, s)| i + s.len()));
        }
        starts.sort();
        let mut out = Vec::new();
        for s in starts {
            for (p, caps) in self.questions.matches(&q[s..]) {
                if let Some(query) = Self::query(&p.shape, &caps) {
                    if !out.contains(&query) {
                        out.push(query);
                    }
                }
            }
            if !out.is_empty() {
                break;
            }
        }
        out
    }

    fn query(shape: &Shape, caps: &BTreeMap<String, String>) -> Option<Query> {
        let get = |k: &str| caps.get(k).cloned();
        Some(match shape {
            Shape::Fact { .. } => return None,
            Shape::Lookup { attribute } => Query::Lookup { entity: get("entity")?, attribute: attribute.clone() },
            Shape::Bridge { target_attribute, factor } => Query::Bridge {
                ident_attribute: get("attribute")?,
                ident_value: get("a")?,
                target_attribute: target_attribute.clone(),
                factor: *factor,
            },
            Shape::Compare { attribute, direction } => Query::Compare {
                entities: vec![get("entity")?, normalize_entity(&get("entity2")?)],
                attribute: attribute.clone(),
                direction: *direction,
            },
            Shape::Count { attribute, op } => Query::Aggregate {
                entities: split_list(&get("entities")?).iter().map(|e| normalize_entity(e)).collect(),
                attribute: attribute.clone(),
                function: AggFunction::CountWhere { predicate: Predicate { op: *op, threshold: get("value")? } },
            },
            Shape::Extreme { attribute, function } => Query::Aggregate {
                entities: split_list(&get("entities")?).iter().map(|e| normalize_entity(e)).collect(),
                attribute: attribute.clone(),
                function: function.clone(),
            },
        })
    }

    /// Index of the choice the memory supports, if the facts read from it
    /// determine one answer that matches exactly one choice.
    pub fn answer(&self, memory: &[&str], question: &str, choices: &[String]) -> Option<usize> {
        let facts: Vec<Fact> = memory.iter().flat_map(|m| self.facts(m)).collect();
        for query in self.queries(question) {
            let Some(ans) = answer_query(&query, &facts, &self.orders) else { continue };
            let text = normalize_entity(&answer_text(&ans));
            let hits: Vec<usize> = (0..choices.len()).filter(|&i| normalize_entity(&choices[i]) == text).collect();
            if let [i] = hits.as_slice() {
                return Some(*i);
            }
        }
        None
    }
}
