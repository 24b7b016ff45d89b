//! Ground-truth answers, trajectory assembly and the oracle grader.

mod logic;
mod timeline;

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDateTime;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use logic::{answer_query, AggFunction, Answer, CmpOp, Direction, Fact, Predicate, Query};
pub use timeline::{assign_timeline, format_time, parse_time, Timeline, TimelineConfig, TIME_FORMAT};

use crate::error::{Error, Result};
use crate::hintgen::{Hint, NoiseSide, QaPlan, QaType};
use crate::rng::stream;
use crate::schema::KeyOrder;
use crate::text::contains_verbatim;

/// Version tag written into every dataset record.
pub const FORMAT_VERSION: u32 = 1;

pub const SAME_CHOICE: &str = "Both are the same";
pub const NEITHER_CHOICE: &str = "Neither of them";

pub fn facts_of<'a>(hints: impl IntoIterator<Item = &'a Hint>) -> Vec<Fact> {
    hints
        .into_iter()
        .map(|h| Fact { entity: h.label().to_string(), attribute: h.attribute().to_string(), value: h.value.to_string() })
        .collect()
}

/// The question a plan asks, in terms of labels and attribute phrases.
pub fn query_for(plan: &QaPlan) -> Result<Query> {
    let t = &plan.target_hints;
    let first = t.first().ok_or_else(|| Error::Invariant("plan without target hints".into()))?;
    Ok(match plan.qa_type {
        QaType::SingleHop => Query::Lookup { entity: first.label().into(), attribute: first.attribute().into() },
        QaType::MultiHop | QaType::Noisy | QaType::PostProcessing => {
            let target = t.get(1).ok_or_else(|| Error::Invariant("bridge plan needs two hints".into()))?;
            Query::Bridge {
                ident_attribute: first.attribute().into(),
                ident_value: first.value.to_string(),
                target_attribute: target.attribute().into(),
                factor: plan.reasoning_factor,
            }
        }
        QaType::Comparative => Query::Compare {
            entities: t.iter().map(|h| h.label().to_string()).collect(),
            attribute: first.attribute().into(),
            direction: plan.direction.ok_or_else(|| Error::Invariant("comparative plan without direction".into()))?,
        },
        QaType::Aggregative => Query::Aggregate {
            entities: t.iter().map(|h| h.label().to_string()).collect(),
            attribute: first.attribute().into(),
            function: plan
                .aggregation
                .as_ref()
                .ok_or_else(|| Error::Invariant("aggregative plan without aggregation".into()))?
                .function
                .clone(),
        },
    })
}

/// Value orders a plan's answer depends on.
pub fn orders_of(plan: &QaPlan) -> BTreeMap<String, KeyOrder> {
    let mut out = BTreeMap::new();
    if let (Some(order), Some(h)) = (&plan.order, plan.target_hints.first()) {
        out.insert(h.attribute().to_string(), order.clone());
    }
    out
}

/// The ground truth, computed from the target hints alone.
pub fn derive_answer(plan: &QaPlan) -> Result<Answer> {
    let query = query_for(plan)?;
    answer_query(&query, &facts_of(&plan.target_hints), &orders_of(plan))
        .ok_or_else(|| Error::Inapplicable(format!("{} plan has no determined answer", plan.qa_type)))
}

/// How an answer is written in `answer_text` and in the choice list.
pub fn answer_text(answer: &Answer) -> String {
    match answer {
        Answer::Same => SAME_CHOICE.to_string(),
        other => other.raw(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub index: usize,
    pub text: String,
    #[serde(with = "timeline::serde_time")]
    pub time: NaiveDateTime,
    pub place: String,
}

/// Where a message came from; kept in the debug sidecar only.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    /// Index into `plan.target_hints`.
    Target { hint: usize },
    /// Index into `plan.noise_hints`.
    Noise { hint: usize, side: NoiseSide },
    Filler { pool_id: usize },
}

mod letter {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(i: &usize, s: S) -> Result<S::Ok, S::Error> {
        let c = char::from(b'A' + u8::try_from(*i).map_err(serde::ser::Error::custom)?);
        s.serialize_str(&c.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        let raw = String::deserialize(d)?;
        match raw.as_bytes() {
            [c @ b'A'..=b'Z'] => Ok((c - b'A') as usize),
            _ => Err(serde::de::Error::custom(format!("bad choice letter `{raw}`"))),
        }
    }
}

pub fn choice_letter(i: usize) -> char {
    char::from(b'A' + i as u8)
}

/// One evaluation instance: messages, question, answer, choices and the
/// indices of the messages needed to answer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub version: u32,
    pub id: String,
    pub qa_type: QaType,
    pub messages: Vec<Message>,
    pub question: String,
    pub answer_text: String,
    pub choices: Vec<String>,
    #[serde(with = "letter")]
    pub correct_choice: usize,
    pub retrieval_target: Vec<usize>,
    #[serde(with = "timeline::serde_time")]
    pub question_time: NaiveDateTime,
    pub seed: u64,
}

impl Trajectory {
    /// Structural invariants; `arity` is the expected retrieval-target size.
    pub fn check(&self, arity: Option<usize>, provenance: Option<&[Provenance]>) -> Result<()> {
        let bad = |m: String| Err(Error::Invariant(format!("{}: {m}", self.id)));
        for (i, m) in self.messages.iter().enumerate() {
            if m.index != i {
                return bad(format!("message {i} carries index {}", m.index));
            }
        }
        if self.messages.windows(2).any(|w| w[0].time > w[1].time) {
            return bad("messages out of chronological order".into());
        }
        if self.messages.last().is_some_and(|m| m.time > self.question_time) {
            return bad("question asked before the last message".into());
        }
        let targets: BTreeSet<usize> = self.retrieval_target.iter().copied().collect();
        if targets.len() != self.retrieval_target.len() || targets.iter().any(|&i| i >= self.messages.len()) {
            return bad(format!("retrieval target {:?} out of range or repeated", self.retrieval_target));
        }
        if let Some(n) = arity {
            if targets.len() != n {
                return bad(format!("retrieval target has {} entries, expected {n}", targets.len()));
            }
        }
        let distinct: BTreeSet<&String> = self.choices.iter().collect();
        if self.choices.len() != 4 || distinct.len() != 4 || self.correct_choice >= 4 {
            return bad("choices must be four distinct options".into());
        }
        if let Some(prov) = provenance {
            if prov.len() != self.messages.len() {
                return bad("provenance length differs from message count".into());
            }
            for (i, p) in prov.iter().enumerate() {
                if matches!(p, Provenance::Target { .. }) != targets.contains(&i) {
                    return bad(format!("message {i} target flag disagrees with provenance"));
                }
            }
        }
        Ok(())
    }
}

/// Generation-time record kept next to each trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDebug {
    pub id: String,
    pub plan: QaPlan,
    pub provenance: Vec<Provenance>,
}

/// Surface text for a plan: one message per hint in `plan.all_hints()` order.
#[derive(Clone, Debug, PartialEq)]
pub struct Rendered {
    pub messages: Vec<String>,
    pub question: String,
    pub choices: Vec<String>,
    pub correct: usize,
}

/// Put rendered messages on a timeline and build the trajectory. Hints are
/// assigned to time slots in seed order; retrieval targets follow them.
pub fn assemble_trajectory(
    id: &str,
    plan: &QaPlan,
    rendered: &Rendered,
    timeline: &TimelineConfig,
    seed: u64,
) -> Result<(Trajectory, TrajectoryDebug)> {
    let hints = plan.target_hints.len() + plan.noise_hints.len();
    if rendered.messages.len() != hints {
        return Err(Error::Invariant(format!(
            "{id}: {} rendered messages for {hints} hints",
            rendered.messages.len()
        )));
    }
    let mut slots: Vec<Provenance> = (0..plan.target_hints.len())
        .map(|hint| Provenance::Target { hint })
        .chain(plan.noise_hints.iter().enumerate().map(|(hint, n)| Provenance::Noise { hint, side: n.side }))
        .collect();
    if timeline.shuffle {
        slots.shuffle(&mut stream(seed, "slots"));
    }
    let tl = assign_timeline(slots.len(), timeline, seed)?;
    let text_of = |p: &Provenance| match p {
        Provenance::Target { hint } => rendered.messages[*hint].clone(),
        Provenance::Noise { hint, .. } => rendered.messages[plan.target_hints.len() + hint].clone(),
        Provenance::Filler { .. } => unreachable!("no filler at assembly"),
    };
    let messages: Vec<Message> = slots
        .iter()
        .enumerate()
        .map(|(index, p)| Message { index, text: text_of(p), time: tl.times[index], place: tl.places[index].clone() })
        .collect();
    let retrieval_target =
        slots.iter().enumerate().filter(|(_, p)| matches!(p, Provenance::Target { .. })).map(|(i, _)| i).collect();
    let answer = derive_answer(plan)?;
    let t = Trajectory {
        version: FORMAT_VERSION,
        id: id.to_string(),
        qa_type: plan.qa_type,
        messages,
        question: rendered.question.clone(),
        answer_text: answer_text(&answer),
        choices: rendered.choices.clone(),
        correct_choice: rendered.correct,
        retrieval_target,
        question_time: tl.question_time,
        seed,
    };
    let d = plan.aggregation.as_ref().map_or(0, |a| a.d);
    t.check(Some(plan.qa_type.target_arity(d)), Some(&slots))?;
    Ok((t, TrajectoryDebug { id: id.to_string(), plan: plan.clone(), provenance: slots }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeReport {
    pub answer_ok: bool,
    pub choice_ok: bool,
    pub retrieval_ok: bool,
}

impl GradeReport {
    pub fn all_ok(&self) -> bool {
        self.answer_ok && self.choice_ok && self.retrieval_ok
    }
}

/// Check a trajectory against its plan: the answer text is the derived
/// answer, exactly the marked choice carries it, and the targeted messages
/// are sufficient and necessary for it.
pub fn oracle_grade(t: &Trajectory, plan: &QaPlan) -> GradeReport {
    let expected = derive_answer(plan).map(|a| answer_text(&a)).ok();
    let answer_ok = expected.as_deref() == Some(t.answer_text.as_str());
    let choice_ok = expected.as_ref().is_some_and(|e| {
        let hits: Vec<usize> = (0..t.choices.len()).filter(|&i| &t.choices[i] == e).collect();
        hits == [t.correct_choice]
    });
    let texts: Vec<&str> = t.messages.iter().map(|m| m.text.as_str()).collect();
    let values: Vec<String> = plan.target_hints.iter().map(|h| h.value.to_string()).collect();
    let retrieval_ok = retrieval_holds(&texts, &t.retrieval_target, &values);
    GradeReport { answer_ok, choice_ok, retrieval_ok }
}

/// Sufficiency: each needed value can be matched to its own targeted message
/// containing it verbatim. Necessity: no untargeted message contains all
/// distinct needed values.
pub fn retrieval_holds(messages: &[&str], target: &[usize], values: &[String]) -> bool {
    let target_texts: Option<Vec<&str>> = target.iter().map(|&i| messages.get(i).copied()).collect();
    let Some(target_texts) = target_texts else { return false };
    if !perfect_matching(values, &target_texts) {
        return false;
    }
    let needed: BTreeSet<&String> = values.iter().collect();
    let targets: BTreeSet<usize> = target.iter().copied().collect();
    !messages
        .iter()
        .enumerate()
        .filter(|(i, _)| !targets.contains(i))
        .any(|(_, m)| needed.iter().all(|v| contains_verbatim(m, v)))
}

/// Whether every value can be assigned a distinct message containing it.
fn perfect_matching(values: &[String], texts: &[&str]) -> bool {
    if values.len() > texts.len() {
        return false;
    }
    fn augment(v: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &m in &adj[v] {
            if seen[m] {
                continue;
            }
            seen[m] = true;
            if owner[m].is_none_or(|o| augment(o, adj, seen, owner)) {
                owner[m] = Some(v);
                return true;
            }
        }
        false
    }
    let adj: Vec<Vec<usize>> = values
        .iter()
        .map(|v| (0..texts.len()).filter(|&m| contains_verbatim(texts[m], v)).collect())
        .collect();
    let mut owner = vec![None; texts.len()];
    (0..values.len()).all(|v| augment(v, &adj, &mut vec![false; texts.len()], &mut owner))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matching_needs_distinct_messages() {
        let values = vec!["High School".to_string(), "High School".to_string()];
        assert!(perfect_matching(&values, &["a High School", "b High School"]));
        assert!(!perfect_matching(&values, &["a High School", "b Master"]));
    }

    #[test]
    fn untargeted_copy_breaks_necessity() {
        let msgs = ["My cousin is 36.", "I like tea.", "Someone said 36."];
        assert!(retrieval_holds(&msgs[..2], &[0], &["36".into()]));
        assert!(!retrieval_holds(&msgs, &[0], &["36".into()]));
        assert!(!retrieval_holds(&msgs[..2], &[1], &["36".into()]));
        assert!(!retrieval_holds(&msgs[..2], &[5], &["36".into()]));
    }

    #[test]
    fn letters_round_trip() {
        #[derive(Serialize, Deserialize)]
        struct W(#[serde(with = "letter")] usize);
        assert_eq!(serde_json::to_string(&W(2)).unwrap(), "\"C\"");
        assert_eq!(serde_json::from_str::<W>("\"D\"").unwrap().0, 3);
        assert!(serde_json::from_str::<W>("\"DD\"").is_err());
    }
}
