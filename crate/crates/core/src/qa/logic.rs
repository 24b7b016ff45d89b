//! Answer semantics shared by ground-truth derivation, the hint invariants
//! and the scripted reader: a query evaluated over a set of facts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::hintgen::ReasoningFactor;
use crate::schema::KeyOrder;

/// One stated (entity, attribute, value), as text.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub entity: String,
    pub attribute: String,
    pub value: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Max,
    Min,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl CmpOp {
    pub fn needs_order(self) -> bool {
        self != CmpOp::Eq
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub op: CmpOp,
    pub threshold: String,
}

impl Predicate {
    pub fn eval(&self, value: &str, order: &KeyOrder) -> Option<bool> {
        if self.op == CmpOp::Eq {
            return Some(value == self.threshold);
        }
        let (v, t) = (order.rank(value)?, order.rank(&self.threshold)?);
        Some(match self.op {
            CmpOp::Lt => v < t,
            CmpOp::Le => v <= t,
            CmpOp::Gt => v > t,
            CmpOp::Ge => v >= t,
            CmpOp::Eq => unreachable!(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "function", rename_all = "snake_case")]
pub enum AggFunction {
    CountWhere { predicate: Predicate },
    Argmin,
    Argmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "query", rename_all = "snake_case")]
pub enum Query {
    Lookup {
        entity: String,
        attribute: String,
    },
    /// Find the one entity whose `ident_attribute` is `ident_value`, then read
    /// its `target_attribute`, optionally transformed by a factor.
    Bridge {
        ident_attribute: String,
        ident_value: String,
        target_attribute: String,
        factor: Option<ReasoningFactor>,
    },
    Compare {
        entities: Vec<String>,
        attribute: String,
        direction: Direction,
    },
    Aggregate {
        entities: Vec<String>,
        attribute: String,
        function: AggFunction,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Answer {
    Value(String),
    Entity(String),
    /// A comparison between equal values.
    Same,
    Count(usize),
    Derived(String),
}

impl Answer {
    /// The bare value, before any answer formatting.
    pub fn raw(&self) -> String {
        match self {
            Answer::Value(s) | Answer::Entity(s) | Answer::Derived(s) => s.clone(),
            Answer::Same => String::new(),
            Answer::Count(n) => n.to_string(),
        }
    }
}

fn lookup<'a>(facts: &'a [Fact], entity: &str, attribute: &str) -> Option<&'a str> {
    let values: BTreeSet<&str> = facts
        .iter()
        .filter(|f| f.entity == entity && f.attribute == attribute)
        .map(|f| f.value.as_str())
        .collect();
    match values.len() {
        1 => values.into_iter().next(),
        _ => None,
    }
}

/// Evaluate a query. `None` when the facts do not determine an answer:
/// something is missing, ambiguous or not comparable.
pub fn answer_query(query: &Query, facts: &[Fact], orders: &BTreeMap<String, KeyOrder>) -> Option<Answer> {
    let order_of = |attr: &str| orders.get(attr).cloned().unwrap_or(KeyOrder::Unordered);
    match query {
        Query::Lookup { entity, attribute } => lookup(facts, entity, attribute).map(|v| Answer::Value(v.to_string())),
        Query::Bridge { ident_attribute, ident_value, target_attribute, factor } => {
            let bridges: BTreeSet<&str> = facts
                .iter()
                .filter(|f| &f.attribute == ident_attribute && &f.value == ident_value)
                .map(|f| f.entity.as_str())
                .collect();
            if bridges.len() != 1 {
                return None;
            }
            let v = lookup(facts, bridges.first()?, target_attribute)?;
            match factor {
                None => Some(Answer::Value(v.to_string())),
                Some(f) => f.apply(v).ok().map(Answer::Derived),
            }
        }
        Query::Compare { entities, attribute, direction } => {
            let [a, b] = entities.as_slice() else { return None };
            if a == b {
                return None;
            }
            let order = order_of(attribute);
            let ra = order.rank(lookup(facts, a, attribute)?)?;
            let rb = order.rank(lookup(facts, b, attribute)?)?;
            Some(match (ra.cmp(&rb), direction) {
                (std::cmp::Ordering::Equal, _) => Answer::Same,
                (std::cmp::Ordering::Greater, Direction::Max) | (std::cmp::Ordering::Less, Direction::Min) => {
                    Answer::Entity(a.clone())
                }
                _ => Answer::Entity(b.clone()),
            })
        }
        Query::Aggregate { entities, attribute, function } => {
            let distinct: BTreeSet<&String> = entities.iter().collect();
            if distinct.len() != entities.len() || entities.is_empty() {
                return None;
            }
            let values: Vec<&str> = entities.iter().map(|e| lookup(facts, e, attribute)).collect::<Option<_>>()?;
            let order = order_of(attribute);
            match function {
                AggFunction::CountWhere { predicate } => {
                    let mut n = 0;
                    for v in &values {
                        if predicate.eval(v, &order)? {
                            n += 1;
                        }
                    }
                    Some(Answer::Count(n))
                }
                AggFunction::Argmax | AggFunction::Argmin => {
                    let ranks: Vec<i64> = values.iter().map(|v| order.rank(v)).collect::<Option<_>>()?;
                    let best = if matches!(function, AggFunction::Argmax) {
                        *ranks.iter().max()?
                    } else {
                        *ranks.iter().min()?
                    };
                    let winners: Vec<usize> = (0..ranks.len()).filter(|&i| ranks[i] == best).collect();
                    match winners.as_slice() {
                        [i] => Some(Answer::Entity(entities[*i].clone())),
                        _ => None,
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fact(e: &str, a: &str, v: &str) -> Fact {
        Fact { entity: e.into(), attribute: a.into(), value: v.into() }
    }

    fn orders() -> BTreeMap<String, KeyOrder> {
        let mut o = BTreeMap::new();
        o.insert("age".to_string(), KeyOrder::Numeric);
        o.insert(
            "education".to_string(),
            KeyOrder::Ranked(
                ["Primary School", "Middle School", "High School", "Bachelor", "Master", "PhD"]
                    .map(String::from)
                    .to_vec(),
            ),
        );
        o
    }

    #[test]
    fn comparative_picks_the_older() {
        let facts = [fact("Yalin Zhao", "age", "44"), fact("Wei Zhang", "age", "36")];
        let q = Query::Compare {
            entities: vec!["Yalin Zhao".into(), "Wei Zhang".into()],
            attribute: "age".into(),
            direction: Direction::Max,
        };
        assert_eq!(answer_query(&q, &facts, &orders()), Some(Answer::Entity("Yalin Zhao".into())));
        assert_eq!(answer_query(&q, &facts[..1], &orders()), None);
    }

    #[test]
    fn count_of_high_school_or_below() {
        let people = ["a", "b", "c", "d"];
        let edu = ["PhD", "Master", "High School", "High School"];
        let facts: Vec<Fact> = people.iter().zip(edu).map(|(p, e)| fact(p, "education", e)).collect();
        let q = Query::Aggregate {
            entities: people.map(String::from).to_vec(),
            attribute: "education".into(),
            function: AggFunction::CountWhere { predicate: Predicate { op: CmpOp::Le, threshold: "High School".into() } },
        };
        assert_eq!(answer_query(&q, &facts, &orders()), Some(Answer::Count(2)));
        for skip in 0..4 {
            let partial: Vec<Fact> = facts.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, f)| f.clone()).collect();
            assert_eq!(answer_query(&q, &partial, &orders()), None);
        }
    }

    #[test]
    fn bridge_requires_a_unique_identifier() {
        let facts = vec![
            fact("my cousin Wei Zhang", "education", "High School"),
            fact("my cousin Wei Zhang", "workplace", "Shanghai"),
        ];
        let q = Query::Bridge {
            ident_attribute: "education".into(),
            ident_value: "High School".into(),
            target_attribute: "workplace".into(),
            factor: None,
        };
        assert_eq!(answer_query(&q, &facts, &orders()), Some(Answer::Value("Shanghai".into())));
        let mut ambiguous = facts.clone();
        ambiguous.push(fact("my aunt Li Na", "education", "High School"));
        assert_eq!(answer_query(&q, &ambiguous, &orders()), None);
    }

    #[test]
    fn conflicting_facts_are_not_an_answer() {
        let facts = [fact("x", "age", "3"), fact("x", "age", "4")];
        let q = Query::Lookup { entity: "x".into(), attribute: "age".into() };
        assert_eq!(answer_query(&q, &facts, &orders()), None);
    }
}
