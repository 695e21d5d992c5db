//! A trained network bundled with its class list and open-set head state.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FlowTensor, LabeledFlow};
use crate::neural::checkpoint::{self, CheckpointHeader};
use crate::neural::{
    train, Activations, Architecture, HeadKind, ModelParams, SparseInput, Target, TrainConfig, TrainReport,
    TrainSample,
};

use super::openmax::{openmax_fit, recalibrate, OpenMaxConfig, WeibullClassModel};
use super::{argmax, doc_predict, docpp_prepare_targets, openmax_predict, HeadType, OpenSetConfig, OpenSetVerdict,
    RejectionThreshold, UNKNOWN_TRAIN};

/// Head state stored in the checkpoint header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenSetState {
    pub head: HeadType,
    pub thresholds: RejectionThreshold,
    pub openmax: OpenMaxConfig,
    /// One model per class; empty until fitted.
    #[serde(default)]
    pub weibull: Vec<WeibullClassModel>,
    /// Labeled post-train centroids in the particularized space.
    #[serde(default)]
    pub centroids: BTreeMap<String, Vec<f32>>,
}

/// A verdict with the particularized-layer vector that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub verdict: OpenSetVerdict,
    pub particularized: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    params: ModelParams,
    classes: Vec<String>,
    state: OpenSetState,
}

pub fn head_kind(head: HeadType) -> HeadKind {
    match head {
        HeadType::Doc | HeadType::DocPp => HeadKind::Sigmoid1vr,
        HeadType::OpenMax => HeadKind::Softmax,
    }
}

fn state_for(head: HeadType, classes: &[String], cfg: &OpenSetConfig) -> Result<OpenSetState> {
    cfg.openmax.validate(classes.len())?;
    Ok(OpenSetState {
        head,
        thresholds: RejectionThreshold::resolve(cfg.threshold, &cfg.per_class_thresholds, classes)?,
        openmax: cfg.openmax,
        weibull: Vec::new(),
        centroids: BTreeMap::new(),
    })
}

fn check_classes(classes: &[String]) -> Result<()> {
    if classes.is_empty() {
        return Err(Error::Config("at least one known class is required".into()));
    }
    let mut seen = BTreeSet::new();
    for c in classes {
        if c == UNKNOWN_TRAIN {
            return Err(Error::Config(format!("`{UNKNOWN_TRAIN}` cannot be a known class")));
        }
        if !seen.insert(c) {
            return Err(Error::DuplicateClass(c.clone()));
        }
    }
    Ok(())
}

impl Detector {
    /// Freshly initialized network for `classes`.
    pub fn untrained(classes: Vec<String>, head: HeadType, cfg: &OpenSetConfig, seed: u64) -> Result<Self> {
        check_classes(&classes)?;
        let arch = Architecture::standard(classes.len(), head_kind(head));
        Ok(Detector {
            state: state_for(head, &classes, cfg)?,
            params: ModelParams::init(arch, seed),
            classes,
        })
    }

    pub fn from_parts(params: ModelParams, classes: Vec<String>, state: OpenSetState) -> Result<Self> {
        check_classes(&classes)?;
        if params.arch.classes != classes.len() || params.arch.head != head_kind(state.head) {
            return Err(Error::Shape {
                expected: format!("{} classes with a {:?} head", classes.len(), head_kind(state.head)),
                actual: format!("{} classes with a {:?} head", params.arch.classes, params.arch.head),
            });
        }
        if state.thresholds.len() != classes.len() {
            return Err(Error::Shape {
                expected: format!("{} thresholds", classes.len()),
                actual: state.thresholds.len().to_string(),
            });
        }
        if !state.weibull.is_empty() && state.weibull.len() != classes.len() {
            return Err(Error::Shape {
                expected: format!("{} Weibull models", classes.len()),
                actual: state.weibull.len().to_string(),
            });
        }
        Ok(Detector { params, classes, state })
    }

    /// Warm start for a grown class list: the current weights with freshly
    /// initialized output units for the appended classes.
    pub fn warm_start(&self, classes: Vec<String>, cfg: &OpenSetConfig, seed: u64) -> Result<Self> {
        check_classes(&classes)?;
        if classes.len() < self.classes.len() || classes[..self.classes.len()] != self.classes[..] {
            return Err(Error::Invalid("warm start requires the current classes as a prefix".into()));
        }
        Ok(Detector {
            params: self.params.with_extra_classes(classes.len() - self.classes.len(), seed),
            state: state_for(self.state.head, &classes, cfg)?,
            classes,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn state(&self) -> &OpenSetState {
        &self.state
    }

    pub fn head(&self) -> HeadType {
        self.state.head
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    pub fn set_params(&mut self, params: ModelParams) -> Result<()> {
        if params.arch != self.params.arch {
            return Err(Error::Shape {
                expected: format!("{:?}", self.params.arch),
                actual: format!("{:?}", params.arch),
            });
        }
        self.params = params;
        Ok(())
    }

    pub fn set_centroids(&mut self, centroids: BTreeMap<String, Vec<f32>>) {
        self.state.centroids = centroids;
    }

    /// Training samples for this head. DOC++ additionally accepts the
    /// reserved unknown-train label; other labels outside the class list are
    /// rejected with the offenders listed.
    pub fn training_samples(&self, flows: &[LabeledFlow]) -> Result<Vec<TrainSample>> {
        let targets = if self.state.head == HeadType::DocPp {
            docpp_prepare_targets(flows, &self.classes, UNKNOWN_TRAIN)?
        } else {
            let unknown: BTreeSet<&str> = flows
                .iter()
                .filter(|f| self.class_index(&f.label).is_none())
                .map(|f| f.label.as_str())
                .collect();
            if !unknown.is_empty() {
                return Err(Error::UnknownLabels(unknown.into_iter().map(String::from).collect()));
            }
            flows
                .iter()
                .map(|f| Target::Class(self.class_index(&f.label).expect("checked")))
                .collect()
        };
        Ok(flows
            .iter()
            .zip(targets)
            .map(|(f, target)| TrainSample {
                input: SparseInput::from(&f.tensor),
                target,
            })
            .collect())
    }

    /// Trains the network with its head loss, then refits the head.
    pub fn train(&mut self, flows: &[LabeledFlow], cfg: &TrainConfig) -> Result<TrainReport> {
        let samples = self.training_samples(flows)?;
        let (params, report) = train(self.params.clone(), &samples, cfg)?;
        self.params = params;
        self.refit_head(flows)?;
        Ok(report)
    }

    /// Fits the OpenMax tail models from the correctly classified training
    /// flows. A no-op for the sigmoid heads.
    pub fn refit_head(&mut self, flows: &[LabeledFlow]) -> Result<()> {
        if self.state.head != HeadType::OpenMax {
            return Ok(());
        }
        let mut per_class: Vec<(String, Vec<Vec<f32>>)> =
            self.classes.iter().map(|c| (c.clone(), Vec::new())).collect();
        for f in flows {
            let Some(c) = self.class_index(&f.label) else { continue };
            let act = self.params.forward_one(&SparseInput::from(&f.tensor))?;
            if argmax(&act.head_out) == c {
                per_class[c].1.push(act.penultimate);
            }
        }
        self.state.weibull = openmax_fit(&per_class, &self.state.openmax)?;
        Ok(())
    }

    pub fn activations(&self, tensor: &FlowTensor) -> Result<Activations> {
        self.params.forward_one(&SparseInput::from(tensor))
    }

    pub fn verdict(&self, act: &Activations) -> Result<OpenSetVerdict> {
        match self.state.head {
            HeadType::Doc | HeadType::DocPp => Ok(doc_predict(&act.head_out, &self.state.thresholds, self.state.head)),
            HeadType::OpenMax => {
                if self.state.weibull.is_empty() {
                    return Err(Error::Invalid("OpenMax head has not been fitted".into()));
                }
                Ok(openmax_predict(&act.penultimate, &self.state.weibull, &self.state.openmax))
            }
        }
    }

    /// Particularized-layer vector: the penultimate layer for DOC and DOC++,
    /// the recalibrated known activations for a fitted OpenMax head.
    pub fn particularized(&self, act: &Activations) -> Vec<f32> {
        if self.state.head == HeadType::OpenMax && !self.state.weibull.is_empty() {
            recalibrate(&act.penultimate, &self.state.weibull, &self.state.openmax)
                .known
                .iter()
                .map(|&x| x as f32)
                .collect()
        } else {
            act.penultimate.clone()
        }
    }

    pub fn classify(&self, tensor: &FlowTensor) -> Result<OpenSetVerdict> {
        self.verdict(&self.activations(tensor)?)
    }

    pub fn score(&self, tensor: &FlowTensor) -> Result<Scored> {
        let act = self.activations(tensor)?;
        Ok(Scored {
            verdict: self.verdict(&act)?,
            particularized: self.particularized(&act),
        })
    }

    pub fn score_all<'a>(&self, tensors: impl IntoIterator<Item = &'a FlowTensor>) -> Result<Vec<Scored>> {
        tensors.into_iter().map(|t| self.score(t)).collect()
    }

    pub fn predicted_label(&self, verdict: &OpenSetVerdict) -> Option<&str> {
        match verdict.decision {
            super::Decision::Known(c) => Some(&self.classes[c]),
            super::Decision::Unknown => None,
        }
    }

    pub fn hash(&self) -> String {
        checkpoint::blob_hash(&self.params)
    }

    pub fn encode(&self) -> Result<(Vec<u8>, String)> {
        let open_set = serde_json::to_value(&self.state).map_err(|e| Error::Invalid(e.to_string()))?;
        checkpoint::encode(&self.params, &self.classes, open_set)
    }

    /// Writes the checkpoint and returns its blob hash.
    pub fn save(&self, path: &Path) -> Result<String> {
        let (bytes, hash) = self.encode()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        Ok(hash)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (params, header) = checkpoint::decode(bytes)?;
        Self::from_header(params, header)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Malformed { reason, .. } => Error::Malformed {
                location: path.display().to_string(),
                reason,
            },
            other => other,
        })
    }

    fn from_header(params: ModelParams, header: CheckpointHeader) -> Result<Self> {
        let state: OpenSetState = serde_json::from_value(header.open_set).map_err(|e| Error::Malformed {
            location: "checkpoint header".into(),
            reason: format!("open-set state: {e}"),
        })?;
        Self::from_parts(params, header.classes, state)
    }
}
