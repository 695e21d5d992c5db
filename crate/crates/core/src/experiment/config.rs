//! The single declarative run configuration (TOML). Every default can be
//! overridden; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::PosttrainConfig;
use crate::error::{Error, Result};
use crate::heads::{HeadType, OpenSetConfig};
use crate::ingest::SyntheticProfile;
use crate::lifecycle::LifecycleConfig;
use crate::neural::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Label pool; empty means every profile (minus the benign class unless
    /// `include_benign`).
    pub pool: Vec<String>,
    /// Synthetic profile file; the built-in desk pool when absent.
    pub profiles: Option<PathBuf>,
    /// Fixed known subset for single runs; the grid enumerates subsets.
    pub known: Vec<String>,
    pub novelty: Option<String>,
    pub unknown_train: Option<String>,
    pub heads: Vec<HeadType>,
    pub include_benign: bool,
    pub benign_label: String,
    pub subset_size: usize,
    pub seeds: Vec<u64>,
    pub flows_per_class: usize,
    /// Leading share of each class's flows used for training.
    pub train_fraction: f64,
    pub posttrain_enabled: bool,
    pub train: TrainConfig,
    pub open_set: OpenSetConfig,
    pub posttrain: PosttrainConfig,
    pub lifecycle: LifecycleConfig,
    pub serve: ServeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pool: Vec::new(),
            profiles: None,
            known: Vec::new(),
            novelty: None,
            unknown_train: None,
            heads: vec![HeadType::Doc, HeadType::DocPp, HeadType::OpenMax],
            include_benign: false,
            benign_label: "BENIGN".into(),
            subset_size: 4,
            seeds: vec![0],
            flows_per_class: 500,
            train_fraction: 0.8,
            posttrain_enabled: true,
            train: TrainConfig::default(),
            open_set: OpenSetConfig::default(),
            posttrain: PosttrainConfig::default(),
            lifecycle: LifecycleConfig::default(),
            serve: ServeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeConfig {
    pub bind: String,
    /// Required value of the `x-api-token` header when set.
    pub token: Option<String>,
    /// Root of the checkpoint store and decision log.
    pub state_dir: PathBuf,
    /// Capture (`.pcap`) or manifest scored at startup, if any.
    pub replay: Option<PathBuf>,
    /// Experiment report directory served as the latest report.
    pub report_dir: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            bind: "127.0.0.1:8080".into(),
            token: None,
            state_dir: PathBuf::from("state"),
            replay: None,
            report_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a config file; relative profile paths resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(p) = &cfg.profiles {
            if p.is_relative() {
                cfg.profiles = Some(path.parent().unwrap_or(Path::new(".")).join(p));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads.is_empty() {
            return Err(Error::Config("at least one head is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.subset_size == 0 {
            return Err(Error::Config("subset_size must be positive".into()));
        }
        if self.flows_per_class < 2 {
            return Err(Error::Config("flows_per_class must be at least 2".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        if let Some(n) = &self.novelty {
            if self.known.contains(n) {
                return Err(Error::Config(format!("novelty label `{n}` is also known")));
            }
        }
        if let Some(u) = &self.unknown_train {
            if self.known.contains(u) || self.novelty.as_ref() == Some(u) {
                return Err(Error::Config(format!(
                    "unknown-train label `{u}` must differ from the known and novelty labels"
                )));
            }
        }
        if !self.include_benign && self.pool.contains(&self.benign_label) {
            return Err(Error::Config(format!(
                "benign label `{}` is in the pool but include_benign is false",
                self.benign_label
            )));
        }
        Ok(())
    }

    pub fn load_profiles(&self) -> Result<Vec<SyntheticProfile>> {
        match &self.profiles {
            Some(p) => SyntheticProfile::load_file(p),
            None => Ok(SyntheticProfile::desk_pool()),
        }
    }

    /// Profiles of the resolved label pool, in pool order.
    pub fn pool_profiles(&self) -> Result<Vec<SyntheticProfile>> {
        let all = self.load_profiles()?;
        if self.pool.is_empty() {
            return Ok(all
                .into_iter()
                .filter(|p| self.include_benign || p.class_name != self.benign_label)
                .collect());
        }
        let missing: Vec<String> = self
            .pool
            .iter()
            .filter(|l| !all.iter().any(|p| &p.class_name == *l))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::UnknownLabels(missing));
        }
        Ok(self
            .pool
            .iter()
            .map(|l| all.iter().find(|p| &p.class_name == l).expect("checked").clone())
            .collect())
    }

    /// Column suffix of the benign-excluded mode.
    pub fn mode_suffix(&self) -> &'static str {
        if self.include_benign {
            ""
        } else {
            "_NN"
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let cfg = RunConfig::from_toml(
            "heads = [\"DOC++\"]\nseeds = [3, 4]\n[train]\nepochs = 2\n[open_set]\nthreshold = 0.7\n[open_set.openmax]\nalpha = 1\n",
        )
        .unwrap();
        assert_eq!(cfg.heads, vec![HeadType::DocPp]);
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.open_set.threshold, 0.7);
        assert_eq!(cfg.open_set.openmax.alpha, 1);
        assert_eq!(cfg.pool_profiles().unwrap().len(), 6);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("[train]\nepochz = 1"), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("known = [\"a\"]\nnovelty = \"a\"").is_err());
        assert!(RunConfig::from_toml("known = [\"a\"]\nnovelty = \"b\"\nunknown_train = \"b\"").is_err());
        assert!(RunConfig::from_toml("pool = [\"BENIGN\"]").is_err());
        let cfg = RunConfig::from_toml("pool = [\"nope\"]").unwrap();
        assert!(matches!(cfg.pool_profiles(), Err(Error::UnknownLabels(_))));
    }
}
