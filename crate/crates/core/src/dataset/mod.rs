//! Datasets on disk: one JSONL file per question type, an optional debug
//! sidecar per type with plans and provenance, and a manifest.

mod audit;
mod mix;
mod stats;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hintgen::QaType;
use crate::qa::{Trajectory, TrajectoryDebug, FORMAT_VERSION};
use crate::text::token_count;

pub use audit::{audit, AuditReport, AuditRow};
pub use mix::{mix_eta, EtaMode, FillerPool, FILLER_POSTS};
pub use stats::{role_split, swi, swi_profiles, swip, swip_of, tpm, AttributeSet};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub trajectory: Trajectory,
    pub debug: Option<TrajectoryDebug>,
}

impl Record {
    pub fn provenance(&self) -> Option<&[crate::qa::Provenance]> {
        self.debug.as_ref().map(|d| d.provenance.as_slice())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub splits: BTreeMap<QaType, Vec<Record>>,
    pub seed: Option<u64>,
    pub config_digest: Option<String>,
    pub eta: Option<Eta>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eta {
    pub value: u32,
    pub mode: EtaMode,
    pub seed: u64,
}

impl Dataset {
    pub fn records(&self) -> impl Iterator<Item = &Record> {
        self.splits.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.splits.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_debug(&self) -> bool {
        self.records().all(|r| r.debug.is_some())
    }

    pub fn manifest(&self) -> Manifest {
        let splits: BTreeMap<String, SplitStats> = self
            .splits
            .iter()
            .map(|(t, rs)| (t.split_name().to_string(), SplitStats::of(rs.iter().map(|r| &r.trajectory))))
            .collect();
        Manifest {
            version: FORMAT_VERSION,
            seed: self.seed,
            config_digest: self.config_digest.clone(),
            eta: self.eta,
            total: SplitStats::of(self.records().map(|r| &r.trajectory)),
            splits,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub trajectories: usize,
    pub messages: usize,
    pub questions: usize,
    pub tokens: usize,
    /// Mean tokens per message.
    pub tpm: f64,
}

impl SplitStats {
    pub fn of<'a>(trajs: impl Iterator<Item = &'a Trajectory>) -> Self {
        let mut s = SplitStats::default();
        for t in trajs {
            s.trajectories += 1;
            s.questions += 1;
            s.messages += t.messages.len();
            s.tokens += t.messages.iter().map(|m| token_count(&m.text)).sum::<usize>();
        }
        s.tpm = if s.messages == 0 { 0.0 } else { s.tokens as f64 / s.messages as f64 };
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub seed: Option<u64>,
    pub config_digest: Option<String>,
    pub eta: Option<Eta>,
    pub splits: BTreeMap<String, SplitStats>,
    pub total: SplitStats,
}

/// Hex SHA-256 of a configuration file, stored in the manifest so a dataset
/// can be traced back to what produced it.
pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn split_path(dir: &Path, t: QaType, debug: bool) -> PathBuf {
    let suffix = if debug { ".debug.jsonl" } else { ".jsonl" };
    dir.join(format!("{}{suffix}", t.split_name()))
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: format!("{}: {e}", path.display()),
        })?);
    }
    Ok(out)
}

/// Writes every split, the sidecars when all records carry one, and the
/// manifest. Output bytes depend only on the dataset.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (t, records) in &ds.splits {
        write_jsonl(&split_path(dir, *t, false), records.iter().map(|r| &r.trajectory))?;
        let sidecar = split_path(dir, *t, true);
        if records.iter().all(|r| r.debug.is_some()) {
            write_jsonl(&sidecar, records.iter().filter_map(|r| r.debug.as_ref()))?;
        } else if sidecar.exists() {
            fs::remove_file(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        }
    }
    let manifest = ds.manifest();
    let path = dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads whatever splits the directory holds. Records from a different
/// format version are refused.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST);
    let manifest: Option<Manifest> = if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };
    if let Some(m) = &manifest {
        if m.version != FORMAT_VERSION {
            return Err(Error::VersionMismatch { found: m.version, expected: FORMAT_VERSION });
        }
    }
    let mut ds = Dataset {
        seed: manifest.as_ref().and_then(|m| m.seed),
        config_digest: manifest.as_ref().and_then(|m| m.config_digest.clone()),
        eta: manifest.as_ref().and_then(|m| m.eta),
        ..Default::default()
    };
    for t in QaType::ALL {
        let path = split_path(dir, t, false);
        if !path.exists() {
            continue;
        }
        let trajs: Vec<Trajectory> = read_jsonl(&path)?;
        if let Some(bad) = trajs.iter().find(|t| t.version != FORMAT_VERSION) {
            return Err(Error::VersionMismatch { found: bad.version, expected: FORMAT_VERSION });
        }
        let sidecar = split_path(dir, t, true);
        let debug: Vec<Option<TrajectoryDebug>> = if sidecar.exists() {
            let d: Vec<TrajectoryDebug> = read_jsonl(&sidecar)?;
            if d.len() != trajs.len() || d.iter().zip(&trajs).any(|(d, t)| d.id != t.id) {
                return Err(Error::Validation(format!("{} does not match {}", sidecar.display(), path.display())));
            }
            d.into_iter().map(Some).collect()
        } else {
            vec![None; trajs.len()]
        };
        let records = trajs.into_iter().zip(debug).map(|(trajectory, debug)| Record { trajectory, debug }).collect();
        ds.splits.insert(t, records);
    }
    if ds.splits.is_empty() {
        return Err(Error::Validation(format!("no dataset files in {}", dir.display())));
    }
    Ok(ds)
}

/// The debug sidecar is needed for provenance-based statistics and audits.
pub fn require_debug(ds: &Dataset, dir: &Path) -> Result<()> {
    for (t, records) in &ds.splits {
        if records.iter().any(|r| r.debug.is_none()) {
            return Err(Error::MissingSidecar(split_path(dir, *t, true)));
        }
    }
    Ok(())
}
