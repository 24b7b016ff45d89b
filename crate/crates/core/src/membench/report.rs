//! Per mechanism and question type summaries: mean ± sample standard
//! deviation across contiguous batches of episodes.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{EpisodeResult, RECALL_K};
use crate::hintgen::QaType;

pub const DEFAULT_BATCHES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    /// Values the statistic was computed from.
    pub n: usize,
}

impl Stat {
    /// Splits `values` into `batches` contiguous, near-equal groups and
    /// summarizes the group means. `None` for an empty sample.
    pub fn batched(values: &[f64], batches: usize) -> Option<Stat> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let b = batches.clamp(1, n);
        let means: Vec<f64> = (0..b)
            .map(|i| {
                let chunk = &values[i * n / b..(i + 1) * n / b];
                chunk.iter().sum::<f64>() / chunk.len() as f64
            })
            .collect();
        let mean = means.iter().sum::<f64>() / b as f64;
        let std = if b < 2 {
            0.0
        } else {
            (means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1) as f64).sqrt()
        };
        Some(Stat { mean, std, n })
    }

    fn show(s: Option<Stat>, scale: f64) -> String {
        match s {
            Some(s) => format!("{:.3}±{:.3}", s.mean * scale, s.std * scale),
            None => "n/a".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub eta: Option<u32>,
    pub mechanism: String,
    pub qa_type: String,
    pub episodes: usize,
    pub errored: usize,
    pub accuracy: Option<Stat>,
    pub recall_at_5: Option<Stat>,
    pub response_seconds: Option<Stat>,
    pub adaptation_seconds: Option<Stat>,
    /// Some target is larger than 5, so recall cannot reach 1 there.
    pub recall_capped: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub batches: usize,
    pub rows: Vec<ReportRow>,
}

impl BenchReport {
    pub fn row(&self, eta: Option<u32>, mechanism: &str, qa_type: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.eta == eta && r.mechanism == mechanism && r.qa_type == qa_type)
    }

    /// Whether any episode failed to produce an answer.
    pub fn partial(&self) -> bool {
        self.rows.iter().any(|r| r.errored > 0)
    }
}

fn row(eta: Option<u32>, mechanism: String, qa_type: String, rs: &[&EpisodeResult], batches: usize) -> ReportRow {
    let ok: Vec<&&EpisodeResult> = rs.iter().filter(|r| r.error.is_none()).collect();
    let collect = |f: &dyn Fn(&EpisodeResult) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
    ReportRow {
        eta,
        mechanism,
        qa_type,
        episodes: rs.len(),
        errored: rs.len() - ok.len(),
        accuracy: Stat::batched(&collect(&|r| Some(if r.correct { 1.0 } else { 0.0 })), batches),
        recall_at_5: Stat::batched(&collect(&|r| r.recall_at_5), batches),
        response_seconds: Stat::batched(&collect(&|r| Some(r.response_seconds)), batches),
        adaptation_seconds: Stat::batched(&collect(&|r| Some(r.adaptation_seconds_per_message)), batches),
        recall_capped: ok.iter().any(|r| r.recall_at_5.is_some() && r.target_size > RECALL_K),
    }
}

/// One row per mechanism and question type, plus an "all" row per
/// mechanism. Mechanisms keep their first-seen order.
pub fn aggregate_report(results: &[EpisodeResult], eta: Option<u32>, batches: usize) -> BenchReport {
    let mut mechanisms: Vec<String> = Vec::new();
    for r in results {
        let m = r.mechanism.to_string();
        if !mechanisms.contains(&m) {
            mechanisms.push(m);
        }
    }
    let mut rows = Vec::new();
    for m in mechanisms {
        let mine: Vec<&EpisodeResult> = results.iter().filter(|r| r.mechanism.to_string() == m).collect();
        for t in QaType::ALL {
            let of_type: Vec<&EpisodeResult> = mine.iter().copied().filter(|r| r.qa_type == t).collect();
            if !of_type.is_empty() {
                rows.push(row(eta, m.clone(), t.split_name().to_string(), &of_type, batches));
            }
        }
        rows.push(row(eta, m.clone(), "all".into(), &mine, batches));
    }
    BenchReport { batches, rows }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>4}  {:<24} {:<16} {:>5} {:>4}  {:<13} {:<14} {:<15} {:<15}",
            "eta", "mechanism", "type", "n", "err", "accuracy", "recall@5", "response ms", "adaptation ms"
        )?;
        let mut capped = false;
        for r in &self.rows {
            let eta = r.eta.map_or("-".to_string(), |e| e.to_string());
            let mut recall = Stat::show(r.recall_at_5, 1.0);
            if r.recall_capped {
                recall.push('*');
                capped = true;
            }
            writeln!(
                f,
                "{:>4}  {:<24} {:<16} {:>5} {:>4}  {:<13} {:<14} {:<15} {:<15}",
                eta,
                r.mechanism,
                r.qa_type,
                r.episodes,
                r.errored,
                Stat::show(r.accuracy, 1.0),
                recall,
                Stat::show(r.response_seconds, 1e3),
                Stat::show(r.adaptation_seconds, 1e3)
            )?;
        }
        writeln!(f, "mean±std over up to {} contiguous batches of episodes", self.batches)?;
        if capped {
            writeln!(f, "* some targets exceed {RECALL_K} messages, so recall@{RECALL_K} is capped below 1 there")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batching_examples() {
        let all = vec![1.0; 20];
        let s = Stat::batched(&all, 10).unwrap();
        assert_eq!((s.mean, s.std), (1.0, 0.0));
        let alt: Vec<f64> = (0..8).map(|i| (i % 2) as f64).collect();
        let s = Stat::batched(&alt, 2).unwrap();
        assert_eq!((s.mean, s.std), (0.5, 0.0));
        assert!(Stat::batched(&[], 10).is_none());
        let s = Stat::batched(&[0.0, 1.0], 10).unwrap();
        assert!((s.std - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }
}
