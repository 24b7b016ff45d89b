//! Distractor choices, by rule per answer kind and value space.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::hintgen::{QaPlan, ReasoningFactor, PARITY_CHOICES, SEASONS};
use crate::qa::{answer_text, Answer, NEITHER_CHOICE, SAME_CHOICE};
use crate::rng::{stream, Stream};
use crate::sampler::Profile;
use crate::schema::{Schema, ValueSpace};

/// Shown with argmax/argmin questions over fewer than four entities.
pub const NONE_CHOICE: &str = "None of them";

fn take_distinct(truth: &str, pool: Vec<String>, rng: &mut Stream) -> Vec<String> {
    let mut seen = BTreeSet::from([truth.to_string()]);
    let mut pool: Vec<String> = pool.into_iter().filter(|p| seen.insert(p.clone())).collect();
    pool.shuffle(rng);
    pool.truncate(3);
    pool
}

fn near_integers(truth: i64, lo: i64, hi: i64, rng: &mut Stream) -> Vec<String> {
    let near: Vec<String> = (truth - 3..=truth + 3)
        .filter(|v| *v != truth && (lo..=hi).contains(v))
        .map(|v| v.to_string())
        .collect();
    let mut out = take_distinct(&truth.to_string(), near, rng);
    if out.len() < 3 {
        let wide: Vec<String> = (lo..=hi.min(lo + 1000)).map(|v| v.to_string()).filter(|v| !out.contains(v)).collect();
        out.extend(take_distinct(&truth.to_string(), wide, rng).into_iter().take(3 - out.len()));
    }
    out
}

fn mutate_digits(truth: &str, rng: &mut Stream) -> Vec<String> {
    let digits: Vec<u8> = truth.bytes().collect();
    let mut out = BTreeSet::new();
    for _ in 0..200 {
        if out.len() == 3 {
            break;
        }
        let mut d = digits.clone();
        let changes = rng.gen_range(1..=2.min(d.len()));
        for _ in 0..changes {
            let i = rng.gen_range(0..d.len());
            d[i] = b'0' + (d[i] - b'0' + rng.gen_range(1..10)) % 10;
        }
        let s = String::from_utf8(d).expect("ascii digits");
        if s != truth {
            out.insert(s);
        }
    }
    let mut out: Vec<String> = out.into_iter().collect();
    out.shuffle(rng);
    out
}

/// Four options with exactly one equal to the answer text, shuffled by
/// seed. Open-text values take distractors from `alternatives`, profiles
/// sampled independently of the one the plan came from.
pub fn render_choices(
    answer: &Answer,
    plan: &QaPlan,
    schema: &Schema,
    alternatives: &[Profile],
    seed: u64,
) -> Result<(Vec<String>, usize)> {
    let mut rng = stream(seed, "choices");
    let truth = answer_text(answer);
    let target = plan.target_hints.last().ok_or_else(|| Error::Invariant("plan without target hints".into()))?;
    let labels: Vec<String> = plan.target_hints.iter().map(|h| h.label().to_string()).collect();
    let distractors: Vec<String> = match answer {
        Answer::Same | Answer::Entity(_) if plan.aggregation.is_none() => {
            let mut pool = labels.clone();
            pool.extend([SAME_CHOICE.to_string(), NEITHER_CHOICE.to_string()]);
            pool.into_iter().filter(|p| *p != truth).collect()
        }
        Answer::Entity(_) | Answer::Same => {
            let mut pool = take_distinct(&truth, labels, &mut rng);
            if pool.len() < 3 {
                pool.push(NONE_CHOICE.to_string());
            }
            pool
        }
        Answer::Count(n) => {
            let d = plan.aggregation.as_ref().map_or(plan.target_hints.len(), |a| a.d);
            let pool = (0..=d).filter(|k| k != n).map(|k| k.to_string()).collect();
            take_distinct(&truth, pool, &mut rng)
        }
        Answer::Derived(v) => match plan.reasoning_factor {
            Some(ReasoningFactor::SeasonOfBirthday) => SEASONS.iter().map(|s| s.to_string()).filter(|s| s != v).collect(),
            Some(ReasoningFactor::ParityOfInteger) => {
                PARITY_CHOICES.iter().map(|s| s.to_string()).filter(|s| s != v).collect()
            }
            _ => {
                let n: i64 = v.parse().map_err(|_| Error::CannotGenerateDistractors(format!("derived `{v}`")))?;
                near_integers(n, 0, i64::MAX / 2, &mut rng)
            }
        },
        Answer::Value(v) => {
            let attr = schema
                .attribute(&target.attr_id)
                .ok_or_else(|| Error::Reference(format!("unknown attribute `{}`", target.attr_id)))?;
            let alt = || -> Vec<String> {
                alternatives.iter().filter_map(|p| p.get(&attr.attr_id)).map(|x| x.to_string()).collect()
            };
            match &attr.value_space {
                ValueSpace::IntRange { min, max } => {
                    let n: i64 = v.parse().map_err(|_| Error::CannotGenerateDistractors(format!("`{v}` is not an integer")))?;
                    near_integers(n, *min, *max, &mut rng)
                }
                ValueSpace::Categorical { values, .. } => {
                    let mut pool = take_distinct(v, values.clone(), &mut rng);
                    if pool.len() < 3 {
                        pool.extend(take_distinct(v, alt(), &mut rng));
                    }
                    pool
                }
                ValueSpace::Digits { .. } => mutate_digits(v, &mut rng),
                ValueSpace::Text { .. } => take_distinct(v, alt(), &mut rng),
            }
        }
    };
    let mut options = take_distinct(&truth, distractors, &mut rng);
    if options.len() < 3 {
        return Err(Error::CannotGenerateDistractors(format!(
            "only {} distractor(s) for `{truth}` on {}",
            options.len(),
            target.attr_id
        )));
    }
    options.push(truth.clone());
    options.shuffle(&mut rng);
    let correct = options.iter().position(|o| *o == truth).expect("truth was pushed");
    Ok((options, correct))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hintgen::{AggregationSpec, Hint, QaType};
    use crate::qa::{AggFunction, CmpOp, Predicate};
    use crate::schema::{load_schema, Value};

    const S: &str = r#"
entities:
  a person "A"
  b person "B"
  c person "C"
  d person "D"
attributes:
  @person.age "Age" int_range 18 80
  @person.pet "Pet" categorical [cat, dog, fish, bird]
  @person.phone "Phone" digits 11
  @person.motto "Motto" text motto
cpds:
  cpd @person.age: uniform
  cpd @person.pet: uniform
  cpd @person.phone: uniform
  cpd @person.motto: external motto
"#;

    fn plan_on(attr: &str, value: Value) -> QaPlan {
        QaPlan {
            qa_type: QaType::SingleHop,
            target_hints: vec![Hint {
                entity_id: "a".into(),
                attr_id: format!("a.{attr}"),
                entity_type: "person".into(),
                key: attr.into(),
                display: ("A".into(), attr.into()),
                value,
            }],
            noise_hints: vec![],
            bridge_entity: None,
            shared_key: None,
            reasoning_factor: None,
            aggregation: None,
            direction: None,
            order: None,
            kind: None,
            variant: 0,
            noise_requested: Default::default(),
        }
    }

    fn sound(choices: &[String], correct: usize, truth: &str) {
        assert_eq!(choices.len(), 4);
        assert_eq!(choices.iter().collect::<BTreeSet<_>>().len(), 4, "{choices:?}");
        assert_eq!(choices.iter().filter(|c| *c == truth).count(), 1);
        assert_eq!(choices[correct], truth);
    }

    #[test]
    fn integer_distractors_are_near() {
        let s = load_schema(S).unwrap();
        let p = plan_on("age", Value::Int(36));
        for seed in 0..50 {
            let (c, i) = render_choices(&Answer::Value("36".into()), &p, &s, &[], seed).unwrap();
            sound(&c, i, "36");
            assert!(c.iter().all(|x| (33..=39).contains(&x.parse::<i64>().unwrap())));
        }
    }

    #[test]
    fn four_categories_are_all_shown() {
        let s = load_schema(S).unwrap();
        let p = plan_on("pet", "dog".into());
        let (c, i) = render_choices(&Answer::Value("dog".into()), &p, &s, &[], 1).unwrap();
        sound(&c, i, "dog");
        let mut sorted = c.clone();
        sorted.sort();
        assert_eq!(sorted, ["bird", "cat", "dog", "fish"]);
    }

    #[test]
    fn count_distractors_enumerated() {
        let s = load_schema(S).unwrap();
        let mut p = plan_on("age", Value::Int(1));
        p.qa_type = QaType::Aggregative;
        p.aggregation = Some(AggregationSpec {
            function: AggFunction::CountWhere { predicate: Predicate { op: CmpOp::Lt, threshold: "40".into() } },
            d: 4,
        });
        // every 3-subset of {0,1,3,4} is a valid distractor set; all should show up
        let mut seen = BTreeSet::new();
        for seed in 0..200 {
            let (c, i) = render_choices(&Answer::Count(2), &p, &s, &[], seed).unwrap();
            sound(&c, i, "2");
            let mut d: Vec<String> = c.into_iter().filter(|x| x != "2").collect();
            d.sort();
            assert!(d.iter().all(|x| ["0", "1", "3", "4"].contains(&x.as_str())));
            seen.insert(d);
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn digits_and_text() {
        let s = load_schema(S).unwrap();
        let p = plan_on("phone", "13225162475".into());
        let (c, i) = render_choices(&Answer::Value("13225162475".into()), &p, &s, &[], 3).unwrap();
        sound(&c, i, "13225162475");
        assert!(c.iter().all(|x| x.len() == 11));

        let p = plan_on("motto", "carpe diem".into());
        assert!(matches!(
            render_choices(&Answer::Value("carpe diem".into()), &p, &s, &[], 3),
            Err(Error::CannotGenerateDistractors(_))
        ));
        let alts: Vec<Profile> = ["a", "b", "c", "carpe diem"]
            .iter()
            .map(|m| Profile {
                assignment: [("a.motto".to_string(), Value::from(*m))].into_iter().collect(),
                seed: 0,
            })
            .collect();
        let (c, i) = render_choices(&Answer::Value("carpe diem".into()), &p, &s, &alts, 3).unwrap();
        sound(&c, i, "carpe diem");
    }
}
