//! On-disk checkpoint store: `checkpoints/<generation>/<hash>.ckpt`, the
//! generation's training manifest next to it, and a `SERVING` pointer
//! replaced atomically by write-and-rename.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::Detector;
use crate::ingest::{load_manifest, write_manifest, LabeledFlow};

pub const SERVING: &str = "SERVING";
pub const TRAIN_MANIFEST: &str = "train.manifest";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredCheckpoint {
    pub generation: u64,
    pub hash: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct CheckpointStore {
    dir: PathBuf,
    retain: usize,
}

impl CheckpointStore {
    /// Store under `<state_dir>/checkpoints`, keeping the last `retain`
    /// generations.
    pub fn new(state_dir: &Path, retain: usize) -> Result<Self> {
        let dir = state_dir.join("checkpoints");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(CheckpointStore {
            dir,
            retain: retain.max(1),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn save(&self, generation: u64, detector: &Detector, training: &[LabeledFlow]) -> Result<StoredCheckpoint> {
        let gen_dir = self.dir.join(generation.to_string());
        std::fs::create_dir_all(&gen_dir).map_err(|e| Error::io(&gen_dir, e))?;
        let (bytes, hash) = detector.encode()?;
        let path = gen_dir.join(format!("{hash}.ckpt"));
        let tmp = gen_dir.join(format!(".{hash}.ckpt.tmp"));
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        write_manifest(&gen_dir.join(TRAIN_MANIFEST), training)?;
        Ok(StoredCheckpoint { generation, hash, path })
    }

    /// Points `SERVING` at `ckpt`, then prunes old generations.
    pub fn promote(&self, ckpt: &StoredCheckpoint) -> Result<()> {
        let target = self.dir.join(SERVING);
        let tmp = self.dir.join(".SERVING.tmp");
        let rel = format!("{}/{}.ckpt\n", ckpt.generation, ckpt.hash);
        std::fs::write(&tmp, rel).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))?;
        self.prune(ckpt.generation)
    }

    pub fn serving(&self) -> Result<Option<StoredCheckpoint>> {
        let pointer = self.dir.join(SERVING);
        let text = match std::fs::read_to_string(&pointer) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&pointer, e)),
        };
        let rel = text.trim();
        let malformed = || Error::Malformed {
            location: pointer.display().to_string(),
            reason: format!("expected `<generation>/<hash>.ckpt`, got `{rel}`"),
        };
        let (g, file) = rel.split_once('/').ok_or_else(malformed)?;
        let generation: u64 = g.parse().map_err(|_| malformed())?;
        let hash = file.strip_suffix(".ckpt").ok_or_else(malformed)?.to_string();
        Ok(Some(StoredCheckpoint {
            generation,
            hash,
            path: self.dir.join(rel),
        }))
    }

    pub fn load(&self, ckpt: &StoredCheckpoint) -> Result<Detector> {
        let d = Detector::load(&ckpt.path)?;
        if d.hash() != ckpt.hash {
            return Err(Error::Malformed {
                location: ckpt.path.display().to_string(),
                reason: "file name does not match the parameter hash".into(),
            });
        }
        Ok(d)
    }

    pub fn load_training(&self, generation: u64) -> Result<Vec<LabeledFlow>> {
        load_manifest(&self.dir.join(generation.to_string()).join(TRAIN_MANIFEST), None)
    }

    pub fn generations(&self) -> Result<Vec<u64>> {
        let mut out: Vec<u64> = std::fs::read_dir(&self.dir)
            .map_err(|e| Error::io(&self.dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().to_str().and_then(|s| s.parse().ok()))
            .collect();
        out.sort_unstable();
        Ok(out)
    }

    fn prune(&self, serving: u64) -> Result<()> {
        let gens = self.generations()?;
        let keep_from = gens.len().saturating_sub(self.retain);
        for g in &gens[..keep_from] {
            if *g != serving {
                let d = self.dir.join(g.to_string());
                std::fs::remove_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            }
        }
        Ok(())
    }
}
