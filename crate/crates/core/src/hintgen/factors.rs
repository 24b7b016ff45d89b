//! Reasoning factors: transforms applied to a retrieved value before it
//! becomes the answer of a post-processing question.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::parse_month_day;
use crate::schema::{Value, ValueSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "factor_id", rename_all = "snake_case")]
pub enum ReasoningFactor {
    /// Sum of the last `n` digits of a digit string.
    DigitSumLastN { n: usize },
    SeasonOfBirthday,
    /// Number of characters, spaces included.
    LengthOfString,
    ParityOfInteger,
}

pub const SEASONS: [&str; 4] = ["Spring", "Summer", "Autumn", "Winter"];
pub const PARITY_CHOICES: [&str; 4] = ["Odd", "Even", "Neither odd nor even", "Cannot be determined"];

impl ReasoningFactor {
    pub fn id(&self) -> &'static str {
        match self {
            ReasoningFactor::DigitSumLastN { .. } => "digit_sum_last_n",
            ReasoningFactor::SeasonOfBirthday => "season_of_birthday",
            ReasoningFactor::LengthOfString => "length_of_string",
            ReasoningFactor::ParityOfInteger => "parity_of_integer",
        }
    }

    pub fn builtin(digit_sum_n: usize) -> Vec<ReasoningFactor> {
        vec![
            ReasoningFactor::DigitSumLastN { n: digit_sum_n },
            ReasoningFactor::SeasonOfBirthday,
            ReasoningFactor::LengthOfString,
            ReasoningFactor::ParityOfInteger,
        ]
    }

    pub fn applies_to(&self, space: &ValueSpace, value: &Value) -> bool {
        match self {
            ReasoningFactor::DigitSumLastN { n } => {
                matches!(space, ValueSpace::Digits { len } if len >= n && *n > 0)
            }
            ReasoningFactor::SeasonOfBirthday => parse_month_day(&value.to_string()).is_some(),
            ReasoningFactor::LengthOfString => {
                matches!(space, ValueSpace::Text { .. } | ValueSpace::Categorical { .. })
            }
            ReasoningFactor::ParityOfInteger => matches!(space, ValueSpace::IntRange { .. }),
        }
    }

    pub fn apply(&self, value: &str) -> Result<String> {
        let bad = || Error::Inapplicable(format!("{} does not apply to `{value}`", self.id()));
        match self {
            ReasoningFactor::DigitSumLastN { n } => {
                let digits: Vec<u32> = value.chars().map(|c| c.to_digit(10)).collect::<Option<_>>().ok_or_else(bad)?;
                if digits.len() < *n || *n == 0 {
                    return Err(bad());
                }
                Ok(digits[digits.len() - n..].iter().sum::<u32>().to_string())
            }
            ReasoningFactor::SeasonOfBirthday => {
                let (m, _) = parse_month_day(value).ok_or_else(bad)?;
                Ok(SEASONS[match m {
                    3..=5 => 0,
                    6..=8 => 1,
                    9..=11 => 2,
                    _ => 3,
                }]
                .to_string())
            }
            ReasoningFactor::LengthOfString => {
                if value.is_empty() {
                    return Err(bad());
                }
                Ok(value.chars().count().to_string())
            }
            ReasoningFactor::ParityOfInteger => {
                let i: i64 = value.trim().parse().map_err(|_| bad())?;
                Ok(if i % 2 == 0 { "Even" } else { "Odd" }.to_string())
            }
        }
    }

    /// Whether the factor's output is a number (distractors by offset).
    pub fn numeric_output(&self) -> bool {
        matches!(self, ReasoningFactor::DigitSumLastN { .. } | ReasoningFactor::LengthOfString)
    }
}
