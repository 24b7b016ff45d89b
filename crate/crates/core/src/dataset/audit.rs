//! Re-grades every trajectory against its plan and reports pass rates per
//! question type.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::qa::oracle_grade;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub split: String,
    pub trajectories: usize,
    pub answer_ok: usize,
    pub choice_ok: usize,
    pub retrieval_ok: usize,
    /// Ids of trajectories failing any check.
    pub failures: Vec<String>,
}

impl AuditRow {
    fn pct(&self, k: usize) -> f64 {
        if self.trajectories == 0 {
            100.0
        } else {
            100.0 * k as f64 / self.trajectories as f64
        }
    }

    pub fn answer_pct(&self) -> f64 {
        self.pct(self.answer_ok)
    }

    pub fn choice_pct(&self) -> f64 {
        self.pct(self.choice_ok)
    }

    pub fn retrieval_pct(&self) -> f64 {
        self.pct(self.retrieval_ok)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    pub total: AuditRow,
}

impl AuditReport {
    pub fn all_ok(&self) -> bool {
        self.total.failures.is_empty()
    }
}

/// Needs the debug sidecar for every record.
pub fn audit(ds: &Dataset) -> Result<AuditReport> {
    let mut report = AuditReport { total: AuditRow { split: "total".into(), ..Default::default() }, ..Default::default() };
    for (t, records) in &ds.splits {
        let mut row = AuditRow { split: t.split_name().to_string(), ..Default::default() };
        for r in records {
            let d = r
                .debug
                .as_ref()
                .ok_or_else(|| Error::MissingSidecar(format!("{}.debug.jsonl", t.split_name()).into()))?;
            let g = oracle_grade(&r.trajectory, &d.plan);
            row.trajectories += 1;
            row.answer_ok += g.answer_ok as usize;
            row.choice_ok += g.choice_ok as usize;
            row.retrieval_ok += g.retrieval_ok as usize;
            if !g.all_ok() {
                row.failures.push(r.trajectory.id.clone());
            }
        }
        report.total.trajectories += row.trajectories;
        report.total.answer_ok += row.answer_ok;
        report.total.choice_ok += row.choice_ok;
        report.total.retrieval_ok += row.retrieval_ok;
        report.total.failures.extend(row.failures.iter().cloned());
        report.rows.push(row);
    }
    Ok(report)
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16} {:>6} {:>9} {:>9} {:>10}", "type", "n", "answer%", "choice%", "retrieval%")?;
        for row in self.rows.iter().chain([&self.total]) {
            writeln!(
                f,
                "{:<16} {:>6} {:>9.1} {:>9.1} {:>10.1}",
                row.split,
                row.trajectories,
                row.answer_pct(),
                row.choice_pct(),
                row.retrieval_pct()
            )?;
        }
        Ok(())
    }
}
