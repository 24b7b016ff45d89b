//! Dilution of trajectories with off-topic filler posts. η controls how much
//! filler goes in; mixing always starts from the filler-free trajectory, so
//! mixing twice equals mixing once with the second η.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Duration, NaiveDateTime, Timelike};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Eta, Record};
use crate::error::{Error, Result};
use crate::qa::{Message, Provenance, Trajectory};
use crate::rng::stream;
use crate::text::contains_verbatim;

pub const FILLER_POSTS: &str = include_str!("../../data/filler_posts.txt");

/// How η maps to a filler count for a trajectory of `n` messages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EtaMode {
    /// The mixed trajectory holds η·n messages.
    #[default]
    Total,
    /// Original messages make up η percent of the mixed trajectory.
    Fraction,
}

impl EtaMode {
    pub fn fillers(self, eta: u32, n: usize) -> Result<usize> {
        match self {
            EtaMode::Total if eta >= 1 => Ok(n * (eta as usize - 1)),
            EtaMode::Fraction if (1..=100).contains(&eta) => Ok((n * 100).div_ceil(eta as usize) - n),
            _ => Err(Error::Config(format!("η = {eta} is out of range for {self:?} mode"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FillerPool {
    pub posts: Vec<String>,
}

impl FillerPool {
    pub fn parse(text: &str) -> Result<Self> {
        let posts: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect();
        if posts.is_empty() {
            return Err(Error::EmptyPool);
        }
        Ok(FillerPool { posts })
    }

    pub fn shipped() -> Self {
        Self::parse(FILLER_POSTS).expect("shipped filler pool is non-empty")
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// The trajectory without fillers, plus the provenance of what is left.
fn strip(r: &Record) -> (Trajectory, Option<Vec<Provenance>>) {
    let mut t = r.trajectory.clone();
    let Some(prov) = r.provenance() else { return (t, None) };
    let keep: Vec<usize> = (0..prov.len()).filter(|i| !matches!(prov[*i], Provenance::Filler { .. })).collect();
    if keep.len() == prov.len() {
        return (t, Some(prov.to_vec()));
    }
    let new_index = |old: usize| keep.binary_search(&old).ok();
    t.retrieval_target = t.retrieval_target.iter().filter_map(|&i| new_index(i)).collect();
    t.messages = keep.iter().map(|&i| t.messages[i].clone()).collect();
    for (i, m) in t.messages.iter_mut().enumerate() {
        m.index = i;
    }
    (t, Some(keep.iter().map(|&i| prov[i].clone()).collect()))
}

fn floor_minute(t: NaiveDateTime) -> NaiveDateTime {
    t.with_second(0).and_then(|t| t.with_nanosecond(0)).unwrap_or(t)
}

fn mix_one(r: &Record, pool: &FillerPool, eta: u32, mode: EtaMode, seed: u64) -> Result<Record> {
    let (base, prov) = strip(r);
    let n = base.messages.len();
    let f = mode.fillers(eta, n)?;
    if f == 0 {
        let debug = r.debug.clone().map(|mut d| {
            d.provenance = prov.unwrap_or_default();
            d
        });
        return Ok(Record { trajectory: base, debug });
    }

    // Fillers must not repeat anything the question could be answered from.
    let mut protected: Vec<String> = base.choices.clone();
    match &r.debug {
        Some(d) => protected.extend(d.plan.all_hints().flat_map(|h| [h.value.to_string(), h.label().to_string()])),
        None => protected.extend(base.retrieval_target.iter().flat_map(|&i| {
            crate::text::tokenize(&base.messages[i].text)
                .into_iter()
                .filter(|w| w.chars().any(|c| c.is_ascii_digit()))
                .map(String::from)
                .collect::<Vec<_>>()
        })),
    }
    let allowed: Vec<usize> =
        (0..pool.posts.len()).filter(|&i| !protected.iter().any(|p| contains_verbatim(&pool.posts[i], p))).collect();
    if allowed.is_empty() {
        return Err(Error::EmptyPool);
    }

    let mut rng = stream(seed, &format!("mix/{}", base.id));
    let total = n + f;
    let filler_slots: BTreeSet<usize> = sample(&mut rng, total, f).into_iter().collect();
    let mut originals = base.messages.iter().enumerate();
    let mut layout: Vec<Result<usize, usize>> = Vec::with_capacity(total); // Ok(original) or Err(pool id)
    for pos in 0..total {
        if filler_slots.contains(&pos) {
            layout.push(Err(allowed[rng.gen_range(0..allowed.len())]));
        } else {
            layout.push(Ok(originals.next().expect("slot count matches").0));
        }
    }

    let first = base.messages.first().map(|m| m.time).unwrap_or(base.question_time);
    let mut messages = Vec::with_capacity(total);
    let mut provenance = Vec::with_capacity(total);
    let mut targets = Vec::new();
    let mut pos = 0;
    while pos < total {
        match layout[pos] {
            Ok(orig) => {
                let m = &base.messages[orig];
                if base.retrieval_target.contains(&orig) {
                    targets.push(pos);
                }
                messages.push(Message { index: pos, ..m.clone() });
                if let Some(p) = &prov {
                    provenance.push(p[orig].clone());
                }
                pos += 1;
            }
            Err(_) => {
                let run_end = (pos..total).find(|&j| layout[j].is_ok()).unwrap_or(total);
                let prev = messages.last().map(|m: &Message| (m.time, m.place.clone()));
                let next = layout.get(run_end).map(|l| &base.messages[*l.as_ref().expect("run ends at an original")]);
                let lo = prev.as_ref().map_or(first - Duration::days(1), |p| p.0);
                let hi = next.map_or(base.question_time, |m| m.time).max(lo);
                let place = prev.map(|p| p.1).or_else(|| next.map(|m| m.place.clone())).unwrap_or_default();
                let k = (run_end - pos) as i64;
                let span = (hi - lo).num_seconds();
                for j in 0..k {
                    let Err(pool_id) = layout[pos] else { unreachable!() };
                    let time = floor_minute(lo + Duration::seconds(span * (j + 1) / (k + 1))).max(lo);
                    messages.push(Message { index: pos, text: pool.posts[pool_id].clone(), time, place: place.clone() });
                    provenance.push(Provenance::Filler { pool_id });
                    pos += 1;
                }
            }
        }
    }

    let trajectory = Trajectory { messages, retrieval_target: targets, ..base };
    let debug = r.debug.clone().map(|mut d| {
        d.provenance = provenance;
        d
    });
    trajectory.check(None, debug.as_ref().map(|d| d.provenance.as_slice()))?;
    Ok(Record { trajectory, debug })
}

/// Mixes every trajectory of the dataset with filler posts. η = 1 returns
/// the filler-free dataset.
pub fn mix_eta(ds: &Dataset, pool: &FillerPool, eta: u32, mode: EtaMode, seed: u64) -> Result<Dataset> {
    let mut out = Dataset { eta: Some(Eta { value: eta, mode, seed }), ..ds.clone() };
    for records in out.splits.values_mut() {
        *records = records.iter().map(|r| mix_one(r, pool, eta, mode, seed)).collect::<Result<_>>()?;
    }
    if eta == 1 && mode == EtaMode::Total || eta == 100 && mode == EtaMode::Fraction {
        out.eta = None;
    }
    Ok(out)
}
