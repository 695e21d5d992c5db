//! Analyst label decisions and their append-only log.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "category", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Category {
    /// A new attack class.
    Malicious { name: String },
    UnseenBenign,
    /// Dropped from retraining.
    TemporaryAnomaly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDecision {
    pub cluster_id: u64,
    #[serde(flatten)]
    pub category: Category,
    pub analyst: String,
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
}

impl LabelDecision {
    pub fn now(cluster_id: u64, category: Category, analyst: &str) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0.0, |d| d.as_secs_f64());
        LabelDecision {
            cluster_id,
            category,
            analyst: analyst.to_string(),
            timestamp,
        }
    }
}

/// Line-delimited JSON, one decision per line, synced on every append.
#[derive(Debug)]
pub struct DecisionLog {
    path: PathBuf,
    file: File,
}

impl DecisionLog {
    /// Opens (creating if needed) the log and replays its decisions.
    pub fn open(path: &Path) -> Result<(Self, Vec<LabelDecision>)> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let decisions = Self::replay(path)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok((
            DecisionLog {
                path: path.to_path_buf(),
                file,
            },
            decisions,
        ))
    }

    pub fn replay(path: &Path) -> Result<Vec<LabelDecision>> {
        let f = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(path, e)),
        };
        let mut out = Vec::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| Error::Malformed {
                location: format!("{}:{}", path.display(), n + 1),
                reason: e.to_string(),
            })?);
        }
        Ok(out)
    }

    pub fn append(&mut self, d: &LabelDecision) -> Result<()> {
        let mut line = serde_json::to_string(d).map_err(|e| Error::Invalid(e.to_string()))?;
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        self.file.sync_data().map_err(|e| Error::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_format_and_replay() {
        let d = LabelDecision {
            cluster_id: 3,
            category: Category::Malicious { name: "attack-X".into() },
            analyst: "ana".into(),
            timestamp: 12.5,
        };
        let json = serde_json::to_value(&d).unwrap();
        assert_eq!(json["category"], "MALICIOUS");
        assert_eq!(json["name"], "attack-X");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log").join("decisions.jsonl");
        {
            let (mut log, prior) = DecisionLog::open(&p).unwrap();
            assert!(prior.is_empty());
            log.append(&d).unwrap();
            log.append(&LabelDecision { cluster_id: 4, category: Category::TemporaryAnomaly, ..d.clone() }).unwrap();
        }
        let (_, replayed) = DecisionLog::open(&p).unwrap();
        assert_eq!(replayed.len(), 2);
        assert_eq!(replayed[0], d);
        assert_eq!(replayed[1].category, Category::TemporaryAnomaly);
    }
}
