//! Timestamps and places for the messages of a trajectory.

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use rand::seq::{index::sample, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

/// Display format of message and question times: `April 1, 2024, Monday, 08:07`.
pub const TIME_FORMAT: &str = "%B %-d, %Y, %A, %H:%M";

pub fn format_time(t: &NaiveDateTime) -> String {
    t.format(TIME_FORMAT).to_string()
}

pub fn parse_time(s: &str) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, "%B %d, %Y, %A, %H:%M")
        .map_err(|e| Error::Validation(format!("bad timestamp `{s}`: {e}")))
}

pub(crate) mod serde_time {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_time(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let raw = String::deserialize(d)?;
        super::parse_time(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimelineConfig {
    pub start: NaiveDate,
    /// Inclusive range of messages per day.
    pub per_day: (u32, u32),
    /// Daytime window messages fall into.
    pub window: (NaiveTime, NaiveTime),
    pub default_place: String,
    /// Other places, used with probability `place_change`.
    pub places: Vec<String>,
    pub place_change: f64,
    /// Shuffle which hint lands in which time slot.
    pub shuffle: bool,
}

impl Default for TimelineConfig {
    fn default() -> Self {
        TimelineConfig {
            start: NaiveDate::from_ymd_opt(2024, 4, 1).expect("valid date"),
            per_day: (1, 3),
            window: (
                NaiveTime::from_hms_opt(8, 0, 0).expect("valid time"),
                NaiveTime::from_hms_opt(22, 0, 0).expect("valid time"),
            ),
            default_place: "Home".into(),
            places: ["Office", "Cafe", "Subway", "Gym", "Restaurant", "Park"].map(String::from).to_vec(),
            place_change: 0.3,
            shuffle: true,
        }
    }
}

impl TimelineConfig {
    fn window_minutes(&self) -> i64 {
        (self.window.1 - self.window.0).num_minutes()
    }

    pub fn check(&self) -> Result<()> {
        let (lo, hi) = self.per_day;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("messages per day range {lo}..={hi} is empty")));
        }
        if self.window_minutes() < hi as i64 {
            return Err(Error::Config("daytime window shorter than the busiest day".into()));
        }
        if !(0.0..=1.0).contains(&self.place_change) {
            return Err(Error::Config("place_change must be a probability".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Timeline {
    pub times: Vec<NaiveDateTime>,
    pub places: Vec<String>,
    pub question_time: NaiveDateTime,
}

/// Strictly increasing timestamps for `n` messages, starting at the configured
/// date, and a question time after the last of them.
pub fn assign_timeline(n: usize, config: &TimelineConfig, seed: u64) -> Result<Timeline> {
    config.check()?;
    let mut rng = stream(seed, "timeline");
    let mut times = Vec::with_capacity(n);
    let mut day = config.start;
    let window = config.window_minutes() as usize;
    while times.len() < n {
        let k = (rng.gen_range(config.per_day.0..=config.per_day.1) as usize).min(n - times.len());
        let mut minutes: Vec<usize> = sample(&mut rng, window, k).into_vec();
        minutes.sort_unstable();
        for m in minutes {
            times.push(day.and_time(config.window.0) + Duration::minutes(m as i64));
        }
        day = day.succ_opt().ok_or_else(|| Error::Config("timeline ran past the calendar".into()))?;
    }
    let places = (0..n)
        .map(|_| {
            if !config.places.is_empty() && rng.gen_bool(config.place_change) {
                config.places.choose(&mut rng).cloned().expect("non-empty")
            } else {
                config.default_place.clone()
            }
        })
        .collect();
    let last = times.last().copied().unwrap_or_else(|| config.start.and_time(config.window.0));
    let question_time = last + Duration::minutes(rng.gen_range(1..=240));
    Ok(Timeline { times, places, question_time })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Datelike;

    #[test]
    fn weekday_rendering() {
        let t = NaiveDate::from_ymd_opt(2024, 4, 1).unwrap().and_hms_opt(8, 7, 0).unwrap();
        assert_eq!(format_time(&t), "April 1, 2024, Monday, 08:07");
        assert_eq!(parse_time("April 1, 2024, Monday, 08:07").unwrap(), t);
    }

    #[test]
    fn single_message() {
        let tl = assign_timeline(1, &TimelineConfig::default(), 3).unwrap();
        assert_eq!(tl.times.len(), 1);
        assert_eq!(tl.times[0].date(), NaiveDate::from_ymd_opt(2024, 4, 1).unwrap());
        assert!(tl.question_time > tl.times[0]);
    }

    #[test]
    fn fifteen_messages_span_at_least_five_days() {
        for seed in 0..200 {
            let tl = assign_timeline(15, &TimelineConfig::default(), seed).unwrap();
            assert!(tl.times.windows(2).all(|w| w[0] < w[1]));
            let span = tl.times[14].date().num_days_from_ce() - tl.times[0].date().num_days_from_ce() + 1;
            assert!(span >= 5, "span {span}");
            assert!(tl.question_time > tl.times[14]);
        }
    }

    #[test]
    fn bad_configs_are_rejected() {
        let c = TimelineConfig { per_day: (3, 1), ..Default::default() };
        assert!(assign_timeline(2, &c, 0).is_err());
    }
}
