//! Hint selection: which entities and attributes a trajectory is about, for
//! each question type, plus noise hints around them.

mod factors;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use factors::{ReasoningFactor, PARITY_CHOICES, SEASONS};

use crate::error::{Error, Result};
use crate::qa::{AggFunction, CmpOp, Direction, Predicate};
use crate::rng::stream;
use crate::sampler::Profile;
use crate::schema::{AttributeDef, KeyOrder, Schema, Value, ValueSpace};
use crate::text::{contains_verbatim, phrase_case};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaType {
    #[serde(alias = "simple")]
    SingleHop,
    #[serde(alias = "conditional")]
    MultiHop,
    Comparative,
    Aggregative,
    PostProcessing,
    Noisy,
}

impl QaType {
    pub const ALL: [QaType; 6] = [
        QaType::SingleHop,
        QaType::MultiHop,
        QaType::Comparative,
        QaType::Aggregative,
        QaType::PostProcessing,
        QaType::Noisy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QaType::SingleHop => "single_hop",
            QaType::MultiHop => "multi_hop",
            QaType::Comparative => "comparative",
            QaType::Aggregative => "aggregative",
            QaType::PostProcessing => "post_processing",
            QaType::Noisy => "noisy",
        }
    }

    /// Name of the dataset file holding this type.
    pub fn split_name(self) -> &'static str {
        match self {
            QaType::SingleHop => "simple",
            QaType::MultiHop => "conditional",
            QaType::Comparative => "comparative",
            QaType::Aggregative => "aggregative",
            QaType::PostProcessing => "post_processing",
            QaType::Noisy => "noisy",
        }
    }

    /// Number of target hints (and retrieval targets) for a plan of this type.
    pub fn target_arity(self, d: usize) -> usize {
        match self {
            QaType::SingleHop => 1,
            QaType::Aggregative => d,
            _ => 2,
        }
    }

    pub fn uses_bridge(self) -> bool {
        matches!(self, QaType::MultiHop | QaType::PostProcessing | QaType::Noisy)
    }
}

impl fmt::Display for QaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QaType {
    type Err = Error;

    /// Accepts both type names (`single_hop`) and split names (`simple`).
    fn from_str(s: &str) -> Result<Self> {
        QaType::ALL
            .into_iter()
            .find(|t| t.as_str() == s || t.split_name() == s)
            .ok_or_else(|| Error::Config(format!("unknown question type `{s}`")))
    }
}

/// A (entity, attribute, value) triple with the text used to talk about it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hint {
    pub entity_id: String,
    pub attr_id: String,
    pub entity_type: String,
    pub key: String,
    /// (entity label, attribute phrase) as they appear in sentences.
    pub display: (String, String),
    pub value: Value,
}

impl Hint {
    pub fn label(&self) -> &str {
        &self.display.0
    }

    pub fn attribute(&self) -> &str {
        &self.display.1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSide {
    EntitySide,
    AttributeSide,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseHint {
    pub side: NoiseSide,
    pub hint: Hint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationSpec {
    #[serde(flatten)]
    pub function: AggFunction,
    pub d: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseCounts {
    pub entity_side: usize,
    pub attribute_side: usize,
}

impl NoiseCounts {
    pub const fn new(entity_side: usize, attribute_side: usize) -> Self {
        NoiseCounts { entity_side, attribute_side }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaPlan {
    pub qa_type: QaType,
    pub target_hints: Vec<Hint>,
    pub noise_hints: Vec<NoiseHint>,
    pub bridge_entity: Option<String>,
    pub shared_key: Option<String>,
    pub reasoning_factor: Option<ReasoningFactor>,
    pub aggregation: Option<AggregationSpec>,
    pub direction: Option<Direction>,
    /// Order of the compared attribute, for comparative and aggregative plans.
    pub order: Option<KeyOrder>,
    /// Noun for the bridge entity in questions ("person", "event").
    pub kind: Option<String>,
    /// Seed for wording choices made at render time.
    pub variant: u64,
    pub noise_requested: NoiseCounts,
}

impl QaPlan {
    pub fn all_hints(&self) -> impl Iterator<Item = &Hint> {
        self.target_hints.iter().chain(self.noise_hints.iter().map(|n| &n.hint))
    }

    /// Noise actually supplied, which may fall short of the request.
    pub fn noise_supplied(&self) -> NoiseCounts {
        let count = |s| self.noise_hints.iter().filter(|n| n.side == s).count();
        NoiseCounts::new(count(NoiseSide::EntitySide), count(NoiseSide::AttributeSide))
    }

    /// Structural invariants of a plan of its type.
    pub fn check(&self) -> Result<()> {
        let d = self.aggregation.as_ref().map_or(0, |a| a.d);
        let want = self.qa_type.target_arity(d);
        if self.target_hints.len() != want {
            return Err(Error::Invariant(format!(
                "{} plan has {} target hints, expected {want}",
                self.qa_type,
                self.target_hints.len()
            )));
        }
        if self.qa_type == QaType::Aggregative && d < 3 {
            return Err(Error::Invariant(format!("aggregative plan with d = {d}")));
        }
        if self.qa_type.uses_bridge() {
            let bridge = self.bridge_entity.as_deref();
            if bridge.is_none() || self.target_hints.iter().any(|h| Some(h.entity_id.as_str()) != bridge) {
                return Err(Error::Invariant("bridge plan with hints on different entities".into()));
            }
        }
        if matches!(self.qa_type, QaType::Comparative | QaType::Aggregative) {
            let entities: BTreeSet<&str> = self.target_hints.iter().map(|h| h.entity_id.as_str()).collect();
            let keys: BTreeSet<&str> = self.target_hints.iter().map(|h| h.key.as_str()).collect();
            if entities.len() != self.target_hints.len() || keys.len() != 1 {
                return Err(Error::Invariant("group plan needs distinct entities sharing one key".into()));
            }
        }
        let targets: BTreeSet<(&str, &str)> =
            self.target_hints.iter().map(|h| (h.entity_id.as_str(), h.attr_id.as_str())).collect();
        let mut seen = BTreeSet::new();
        for n in &self.noise_hints {
            let pair = (n.hint.entity_id.as_str(), n.hint.attr_id.as_str());
            if targets.contains(&pair) || !seen.insert(pair) {
                return Err(Error::Invariant(format!("noise hint duplicates {}", n.hint.attr_id)));
            }
        }
        Ok(())
    }
}

fn default_noise() -> BTreeMap<QaType, NoiseCounts> {
    BTreeMap::from([
        (QaType::SingleHop, NoiseCounts::new(3, 4)),
        (QaType::MultiHop, NoiseCounts::new(3, 3)),
        (QaType::Comparative, NoiseCounts::new(2, 2)),
        (QaType::Aggregative, NoiseCounts::new(2, 2)),
        (QaType::PostProcessing, NoiseCounts::new(3, 3)),
        (QaType::Noisy, NoiseCounts::new(3, 3)),
    ])
}

fn default_group_exclude() -> Vec<String> {
    vec!["self".to_string()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub noise: BTreeMap<QaType, NoiseCounts>,
    pub aggregative_d: usize,
    pub retry_budget: usize,
    pub digit_sum_n: usize,
    pub factors: Vec<ReasoningFactor>,
    /// Entity types left out of comparative and aggregative groups.
    #[serde(default = "default_group_exclude")]
    pub group_exclude: Vec<String>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            noise: default_noise(),
            aggregative_d: 4,
            retry_budget: 20,
            digit_sum_n: 5,
            factors: ReasoningFactor::builtin(5),
            group_exclude: default_group_exclude(),
        }
    }
}

impl GenerationParams {
    pub fn noise_for(&self, t: QaType) -> NoiseCounts {
        self.noise.get(&t).copied().unwrap_or_default()
    }
}

/// How one entity of a profile is referred to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityView {
    pub entity_id: String,
    pub entity_type: String,
    pub kind: String,
    pub label: String,
    /// Attributes spelled out in the label; never asked about.
    pub identity: BTreeSet<String>,
    /// False when another entity renders to the same label.
    pub eligible: bool,
}

/// A profile together with the wording of its entities.
pub struct PlanContext<'a> {
    pub schema: &'a Schema,
    pub profile: &'a Profile,
    pub entities: Vec<EntityView>,
}

impl<'a> PlanContext<'a> {
    pub fn new(schema: &'a Schema, profile: &'a Profile, entities: Vec<EntityView>) -> Self {
        PlanContext { schema, profile, entities }
    }

    pub fn view(&self, entity_id: &str) -> Option<&EntityView> {
        self.entities.iter().find(|e| e.entity_id == entity_id)
    }

    pub fn hint(&self, view: &EntityView, attr: &AttributeDef) -> Hint {
        Hint {
            entity_id: view.entity_id.clone(),
            attr_id: attr.attr_id.clone(),
            entity_type: view.entity_type.clone(),
            key: attr.key().to_string(),
            display: (view.label.clone(), phrase_case(&attr.display_name)),
            value: self.profile.get(&attr.attr_id).cloned().unwrap_or(Value::Text(String::new())),
        }
    }

    /// Attributes of an entity that can be asked about.
    fn askable(&self, view: &'a EntityView) -> Vec<&'a AttributeDef> {
        if !view.eligible {
            return Vec::new();
        }
        self.schema
            .attributes_of(&view.entity_id)
            .filter(|a| !view.identity.contains(&a.attr_id))
            .filter(|a| match &a.value_space {
                ValueSpace::Categorical { values, .. } => values.len() >= 4,
                _ => true,
            })
            .filter(|a| {
                let v = self.profile.get(&a.attr_id).map(|v| v.to_string()).unwrap_or_default();
                !v.is_empty() && !contains_verbatim(&view.label, &v)
            })
            .collect()
    }

    /// Whether no other entity states the same value for an attribute of the
    /// same wording, so "the person whose X is V" names exactly one entity.
    fn identifies(&self, view: &EntityView, attr: &AttributeDef) -> bool {
        let phrase = phrase_case(&attr.display_name);
        let value = self.profile.get(&attr.attr_id);
        !self.schema.attributes.iter().any(|other| {
            other.entity_id != view.entity_id
                && phrase_case(&other.display_name) == phrase
                && self.profile.get(&other.attr_id).map(|v| v.to_string()) == value.map(|v| v.to_string())
        })
    }

    /// Ordering of attribute values by attribute phrase.
    pub fn orders(&self) -> BTreeMap<String, KeyOrder> {
        let mut out = BTreeMap::new();
        for a in &self.schema.attributes {
            out.entry(phrase_case(&a.display_name)).or_insert_with(|| a.value_space.order());
        }
        out
    }
}

fn insufficient(t: QaType, why: &str) -> Error {
    Error::InsufficientStructure(format!("{t}: {why}"))
}

/// Build the target hints of one question of type `qa_type`.
pub fn plan_qa(ctx: &PlanContext<'_>, qa_type: QaType, params: &GenerationParams, seed: u64) -> Result<QaPlan> {
    let mut rng = stream(seed, qa_type.as_str());
    let mut plan = QaPlan {
        qa_type,
        target_hints: Vec::new(),
        noise_hints: Vec::new(),
        bridge_entity: None,
        shared_key: None,
        reasoning_factor: None,
        aggregation: None,
        direction: None,
        order: None,
        kind: None,
        variant: rng.gen(),
        noise_requested: NoiseCounts::default(),
    };
    match qa_type {
        QaType::SingleHop => {
            let pool: Vec<Hint> = ctx
                .entities
                .iter()
                .flat_map(|v| ctx.askable(v).into_iter().map(move |a| (v, a)))
                .map(|(v, a)| ctx.hint(v, a))
                .collect();
            let h = pool.choose(&mut rng).ok_or_else(|| insufficient(qa_type, "no askable attribute"))?;
            plan.target_hints.push(h.clone());
        }
        QaType::MultiHop | QaType::Noisy | QaType::PostProcessing => {
            let mut triples = Vec::new();
            for v in &ctx.entities {
                let askable = ctx.askable(v);
                for ident in askable.iter().filter(|a| ctx.identifies(v, a)) {
                    let ident_value = ctx.profile.get(&ident.attr_id).map(|x| x.to_string()).unwrap_or_default();
                    for target in &askable {
                        if target.attr_id == ident.attr_id {
                            continue;
                        }
                        let value = ctx.profile.get(&target.attr_id).cloned().unwrap_or(Value::Int(0));
                        if contains_verbatim(&ident_value, &value.to_string()) {
                            continue;
                        }
                        if qa_type == QaType::PostProcessing {
                            for f in params.factors.iter().filter(|f| f.applies_to(&target.value_space, &value)) {
                                triples.push((v, *ident, *target, Some(*f)));
                            }
                        } else {
                            triples.push((v, *ident, *target, None));
                        }
                    }
                }
            }
            let (v, ident, target, factor) =
                triples.choose(&mut rng).ok_or_else(|| insufficient(qa_type, "no identifiable bridge entity"))?;
            plan.target_hints = vec![ctx.hint(v, ident), ctx.hint(v, target)];
            plan.bridge_entity = Some(v.entity_id.clone());
            plan.kind = Some(v.kind.clone());
            plan.reasoning_factor = *factor;
        }
        QaType::Comparative | QaType::Aggregative => {
            let d = if qa_type == QaType::Comparative { 2 } else { params.aggregative_d };
            if qa_type == QaType::Aggregative && d < 3 {
                return Err(Error::Config(format!("aggregative d must be at least 3, got {d}")));
            }
            let groups = groups(ctx, params, qa_type == QaType::Comparative, d);
            let keys: Vec<&(String, String)> = groups.keys().collect();
            let key = *keys.choose(&mut rng).ok_or_else(|| insufficient(qa_type, "no attribute shared widely enough"))?;
            let members = &groups[key];
            let order = ctx
                .schema
                .attribute(&members[0].1.attr_id)
                .map(|a| a.value_space.order())
                .unwrap_or(KeyOrder::Unordered);
            let rank = |h: &Hint| order.rank(&h.value.to_string());
            let hints: Vec<Hint> = members.iter().map(|(v, a)| ctx.hint(v, a)).collect();
            plan.shared_key = Some(key.1.clone());
            plan.kind = Some(key.0.clone());
            if qa_type == QaType::Comparative {
                let first = rng.gen_range(0..hints.len());
                let mut chosen = None;
                for _ in 0..params.retry_budget.max(1) {
                    let second = rng.gen_range(0..hints.len());
                    if second != first && rank(&hints[first]) != rank(&hints[second]) {
                        chosen = Some(second);
                        break;
                    }
                }
                let second = chosen.ok_or_else(|| {
                    Error::ExhaustedResampling(format!("no untied partner for {} on {}", hints[first].entity_id, key.1))
                })?;
                plan.target_hints = vec![hints[first].clone(), hints[second].clone()];
                plan.direction = Some(if rng.gen_bool(0.5) { Direction::Max } else { Direction::Min });
            } else {
                let mut picked: Vec<Hint> = hints.choose_multiple(&mut rng, d).cloned().collect();
                picked.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
                picked.shuffle(&mut rng);
                let function = aggregation(&picked, &order, &mut rng);
                plan.target_hints = picked;
                plan.aggregation = Some(AggregationSpec { function, d });
            }
            plan.order = Some(order);
        }
    }
    plan.check()?;
    Ok(plan)
}

/// Askable attributes grouped by (entity kind, key), keeping groups with at
/// least `min` members (and, when `ordered`, at least two distinct ranks).
fn groups<'a>(
    ctx: &'a PlanContext<'a>,
    params: &GenerationParams,
    ordered: bool,
    min: usize,
) -> BTreeMap<(String, String), Vec<(&'a EntityView, &'a AttributeDef)>> {
    let mut out: BTreeMap<(String, String), Vec<(&EntityView, &AttributeDef)>> = BTreeMap::new();
    for v in ctx.entities.iter().filter(|v| !params.group_exclude.contains(&v.entity_type)) {
        for a in ctx.askable(v) {
            // groups compare or count values, which needs a closed value space
            if matches!(a.value_space, ValueSpace::Text { .. } | ValueSpace::Digits { .. }) {
                continue;
            }
            if ordered && !a.value_space.order().is_ordered() {
                continue;
            }
            out.entry((v.kind.clone(), a.key().to_string())).or_default().push((v, a));
        }
    }
    out.retain(|_, members| {
        if members.len() < min {
            return false;
        }
        if !ordered {
            return true;
        }
        let order = members[0].1.value_space.order();
        let ranks: BTreeSet<Option<i64>> = members
            .iter()
            .map(|(_, a)| order.rank(&ctx.profile.get(&a.attr_id).map(|x| x.to_string()).unwrap_or_default()))
            .collect();
        ranks.len() >= 2
    });
    out
}

/// Choose an aggregation over the picked hints whose answer is well defined,
/// preferring counts strictly between 0 and d.
fn aggregation(hints: &[Hint], order: &KeyOrder, rng: &mut crate::rng::Stream) -> AggFunction {
    let values: Vec<String> = hints.iter().map(|h| h.value.to_string()).collect();
    let mut options: Vec<AggFunction> = Vec::new();
    if order.is_ordered() {
        let ranks: Vec<i64> = values.iter().filter_map(|v| order.rank(v)).collect();
        if ranks.len() == values.len() {
            let max = ranks.iter().max().copied();
            let min = ranks.iter().min().copied();
            if ranks.iter().filter(|r| Some(**r) == max).count() == 1 {
                options.push(AggFunction::Argmax);
            }
            if ranks.iter().filter(|r| Some(**r) == min).count() == 1 {
                options.push(AggFunction::Argmin);
            }
        }
    }
    let ops: &[CmpOp] = if order.is_ordered() { &[CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge] } else { &[CmpOp::Eq] };
    let thresholds: BTreeSet<&String> = values.iter().collect();
    let mut counts = Vec::new();
    let mut degenerate = Vec::new();
    for op in ops {
        for t in &thresholds {
            let predicate = Predicate { op: *op, threshold: (*t).clone() };
            let n = values.iter().filter(|v| predicate.eval(v, order) == Some(true)).count();
            if n > 0 && n < values.len() {
                counts.push(AggFunction::CountWhere { predicate });
            } else {
                degenerate.push(AggFunction::CountWhere { predicate });
            }
        }
    }
    if counts.is_empty() {
        counts = degenerate;
    }
    // counts and extremes are drawn with equal weight
    if !options.is_empty() && rng.gen_bool(0.5) {
        return options.choose(rng).cloned().expect("non-empty");
    }
    counts.choose(rng).cloned().expect("at least one threshold")
}

/// Add noise hints: other entities' values for the targeted keys (entity
/// side) and other attributes of the targeted entities (attribute side).
/// Supplies fewer than requested when the profile runs out.
pub fn infuse_noise(plan: &QaPlan, ctx: &PlanContext<'_>, counts: NoiseCounts, seed: u64) -> QaPlan {
    let mut rng = stream(seed, "noise");
    let mut out = plan.clone();
    out.noise_requested = counts;
    let targets: BTreeSet<(&str, &str)> =
        plan.target_hints.iter().map(|h| (h.entity_id.as_str(), h.attr_id.as_str())).collect();
    let target_entities: BTreeSet<&str> = plan.target_hints.iter().map(|h| h.entity_id.as_str()).collect();
    let target_keys: BTreeSet<&str> = plan.target_hints.iter().map(|h| h.key.as_str()).collect();
    let target_values: Vec<String> = plan.target_hints.iter().map(|h| h.value.to_string()).collect();
    // a noise message repeating a target value would look like a second source
    let echoes = |h: &Hint| {
        let v = h.value.to_string();
        target_values.iter().any(|t| contains_verbatim(&v, t) || contains_verbatim(h.label(), t))
    };
    let taken: BTreeSet<(String, String)> =
        plan.noise_hints.iter().map(|n| (n.hint.entity_id.clone(), n.hint.attr_id.clone())).collect();

    let mut entity_side = Vec::new();
    let mut attribute_side = Vec::new();
    for v in &ctx.entities {
        for a in ctx.askable(v) {
            let pair = (v.entity_id.as_str(), a.attr_id.as_str());
            if targets.contains(&pair) || taken.contains(&(pair.0.to_string(), pair.1.to_string())) {
                continue;
            }
            let hint = ctx.hint(v, a);
            if echoes(&hint) {
                continue;
            }
            if target_entities.contains(v.entity_id.as_str()) {
                attribute_side.push(hint);
            } else if target_keys.contains(a.key()) {
                entity_side.push(hint);
            }
        }
    }
    for (side, pool, n) in [
        (NoiseSide::EntitySide, entity_side, counts.entity_side),
        (NoiseSide::AttributeSide, attribute_side, counts.attribute_side),
    ] {
        for hint in pool.choose_multiple(&mut rng, n) {
            out.noise_hints.push(NoiseHint { side, hint: hint.clone() });
        }
    }
    out
}

/// Entity views with plain display names as labels, for schemas without
/// a template set.
pub fn plain_views(schema: &Schema) -> Vec<EntityView> {
    schema
        .entities
        .iter()
        .map(|e| EntityView {
            entity_id: e.entity_id.clone(),
            entity_type: e.entity_type.clone(),
            kind: e.entity_type.clone(),
            label: e.display_name.clone(),
            identity: BTreeSet::new(),
            eligible: true,
        })
        .collect()
}
