//! Dataset statistics: message length and Shannon-Wiener diversity of
//! attribute values and entity mentions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::qa::{Provenance, Trajectory};
use crate::sampler::Profile;
use crate::schema::Schema;
use crate::text::token_count;

/// Mean tokens per message over all trajectories.
pub fn tpm<'a>(trajs: impl IntoIterator<Item = &'a Trajectory>) -> f64 {
    let (mut tokens, mut messages) = (0usize, 0usize);
    for t in trajs {
        messages += t.messages.len();
        tokens += t.messages.iter().map(|m| token_count(&m.text)).sum::<usize>();
    }
    if messages == 0 {
        0.0
    } else {
        tokens as f64 / messages as f64
    }
}

/// Shannon-Wiener index of a sample, in nats.
pub fn swi<T: Ord>(samples: impl IntoIterator<Item = T>) -> f64 {
    let mut counts: BTreeMap<T, usize> = BTreeMap::new();
    let mut n = 0usize;
    for s in samples {
        *counts.entry(s).or_default() += 1;
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    -counts.values().map(|&c| c as f64 / n).map(|p| p * p.ln()).sum::<f64>()
}

/// Which attributes an SWI figure averages over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeSet {
    /// Attributes whose distribution depends on another attribute.
    RoleRelevant,
    /// Root attributes, drawn independently of everything else.
    RoleIrrelevant,
    All,
}

/// Attribute ids in the set, in schema order.
pub fn role_split(schema: &Schema, set: AttributeSet) -> Vec<String> {
    schema
        .attributes
        .iter()
        .map(|a| a.attr_id.clone())
        .filter(|id| {
            let has_parent = schema.edges.iter().any(|(_, to)| to == id);
            match set {
                AttributeSet::RoleRelevant => has_parent,
                AttributeSet::RoleIrrelevant => !has_parent,
                AttributeSet::All => true,
            }
        })
        .collect()
}

/// Mean per-attribute SWI of the values the profiles take.
pub fn swi_profiles(schema: &Schema, profiles: &[Profile], set: AttributeSet) -> f64 {
    let attrs = role_split(schema, set);
    if attrs.is_empty() {
        return 0.0;
    }
    let total: f64 =
        attrs.iter().map(|a| swi(profiles.iter().filter_map(|p| p.get(a)).map(|v| v.to_string()))).sum();
    total / attrs.len() as f64
}

/// SWI of entity mentions scaled to 10,000 tokens of text.
pub fn swip_of<S: AsRef<str>>(mentions: &[S], tokens: usize) -> f64 {
    if tokens == 0 {
        return 0.0;
    }
    swi(mentions.iter().map(AsRef::as_ref)) * 10_000.0 / tokens as f64
}

/// SWIP of a dataset: every target and noise message mentions the entity
/// of its hint, fillers mention none. `None` without debug sidecars.
pub fn swip(ds: &Dataset) -> Option<f64> {
    let mut mentions = Vec::new();
    let mut tokens = 0;
    for r in ds.records() {
        let d = r.debug.as_ref()?;
        tokens += r.trajectory.messages.iter().map(|m| token_count(&m.text)).sum::<usize>();
        for p in &d.provenance {
            let hint = match p {
                Provenance::Target { hint } => d.plan.target_hints.get(*hint),
                Provenance::Noise { hint, .. } => d.plan.noise_hints.get(*hint).map(|n| &n.hint),
                Provenance::Filler { .. } => None,
            };
            if let Some(h) = hint {
                mentions.push(h.label().to_string());
            }
        }
    }
    Some(swip_of(&mentions, tokens))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swi_of_uniform_is_log_n() {
        assert!((swi(["a", "b", "c", "d"]) - 4f64.ln()).abs() < 1e-12);
        assert_eq!(swi(["a", "a"]), 0.0);
        assert_eq!(swi(Vec::<u8>::new()), 0.0);
    }

    #[test]
    fn swip_scales_per_ten_thousand_tokens() {
        let m = ["a", "b"];
        assert!((swip_of(&m, 10_000) - 2f64.ln()).abs() < 1e-12);
        assert!((swip_of(&m, 20_000) - 2f64.ln() / 2.0).abs() < 1e-12);
    }
}
