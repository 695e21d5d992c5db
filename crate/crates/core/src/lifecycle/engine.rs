//! The lifecycle state machine behind the service: verdicts feed the
//! novelty buffer, full buffers are clustered, analysts decide clusters, and
//! decided clusters become the next generation's training set.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use crate::cluster::cluster_novelties;
use crate::error::{Error, Result};
use crate::heads::{Detector, OpenSetVerdict, UNKNOWN_TRAIN};
use crate::ingest::{load_manifest, read_records, write_manifest, write_records, FlowSource, LabeledFlow, ManifestRecord,
    ManifestSource};

use super::buffer::{BufferedFlow, IngestOutcome, NoveltyBuffer, ObservedFlow};
use super::decisions::{Category, DecisionLog, LabelDecision};
use super::deploy::{Deployment, DeploymentStatus, RetrainPlan, RetrainSettings, SwapOutcome};
use super::store::CheckpointStore;
use super::{BenignMode, LifecycleConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyCluster {
    pub id: u64,
    /// Generation of the model whose rejections were clustered.
    pub generation: u64,
    pub size: usize,
    pub centroid: Vec<f32>,
    pub members: Vec<String>,
    pub silhouette: f64,
    pub nearest_known: Option<String>,
    pub decision: Option<LabelDecision>,
}

/// Pure decision application: the next class list and training set.
///
/// Malicious clusters become (or join) a new class named by the decision;
/// unseen-benign clusters join the benign class when benign traffic is
/// trained on, or go to the side benign set otherwise; temporary anomalies
/// are dropped. Members no longer buffered are skipped.
pub fn apply_decisions(
    decisions: &[LabelDecision],
    clusters: &BTreeMap<u64, NoveltyCluster>,
    flows: &HashMap<&str, &ObservedFlow>,
    base: &[LabeledFlow],
    classes: &[String],
    benign: &BenignMode,
) -> Result<RetrainPlan> {
    let mut seen = BTreeSet::new();
    let mut next_classes = classes.to_vec();
    let mut training = base.to_vec();
    let mut side_benign = Vec::new();
    for d in decisions {
        if !seen.insert(d.cluster_id) {
            return Err(Error::Conflict(format!("cluster {} has more than one decision", d.cluster_id)));
        }
        let cluster = clusters
            .get(&d.cluster_id)
            .ok_or_else(|| Error::NotFound(format!("cluster {}", d.cluster_id)))?;
        let target = match &d.category {
            Category::Malicious { name } => {
                if classes.contains(name) {
                    return Err(Error::Conflict(format!("class `{name}` already exists")));
                }
                Some((name.clone(), true))
            }
            Category::UnseenBenign => match benign {
                BenignMode::Included { label } => Some((label.clone(), true)),
                BenignMode::Excluded { label } => Some((label.clone(), false)),
            },
            Category::TemporaryAnomaly => None,
        };
        let Some((label, trained)) = target else { continue };
        if trained && !next_classes.contains(&label) {
            next_classes.push(label.clone());
        }
        let out = if trained { &mut training } else { &mut side_benign };
        for id in &cluster.members {
            match flows.get(id.as_str()) {
                Some(f) => out.push(LabeledFlow {
                    id: f.id.clone(),
                    key: f.key,
                    tensor: f.tensor.clone(),
                    label: label.clone(),
                    source: f.source,
                }),
                None => tracing::warn!(flow = %id, cluster = d.cluster_id, "member no longer buffered"),
            }
        }
    }
    Ok(RetrainPlan {
        classes: next_classes,
        training,
        side_benign,
        applied_clusters: seen.into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserveOutcome {
    pub verdict: OpenSetVerdict,
    pub label: Option<String>,
    pub generation: u64,
    pub ingest: IngestOutcome,
    /// Clusters created by a clustering job this observation triggered.
    pub new_clusters: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleView {
    pub id: String,
    pub key: String,
    pub packet_count: usize,
    pub source: FlowSource,
    /// First 64 bytes of the flow as hex.
    pub hex_preview: String,
    /// The same bytes with non-printable bytes shown as `.`.
    pub ascii_preview: String,
    pub scores: Vec<f32>,
    pub unknown_score: Option<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifecycleStatus {
    #[serde(flatten)]
    pub deployment: DeploymentStatus,
    pub buffered: usize,
    pub evicted: u64,
    pub known_verdicts: u64,
    pub clusters: usize,
    pub undecided_clusters: usize,
    pub decisions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainReport {
    pub generation: u64,
    pub hash: String,
    pub previous_hash: String,
    pub classes: Vec<String>,
    pub training_flows: usize,
    pub side_benign_flows: usize,
    pub manifest: PathBuf,
    pub applied_clusters: Vec<u64>,
    /// Buffered flows the new model now accepts as known.
    pub rescored_known: usize,
    pub pipeline: crate::experiment::PipelineOutcome,
}

struct State {
    buffer: NoveltyBuffer,
    clusters: BTreeMap<u64, NoveltyCluster>,
    next_cluster_id: u64,
    log: DecisionLog,
    history: Vec<LabelDecision>,
    training: Vec<LabeledFlow>,
    last_retrain: Option<RetrainReport>,
}

pub struct Lifecycle {
    deployment: Arc<Deployment>,
    state: Mutex<State>,
    dir: PathBuf,
    cfg: LifecycleConfig,
    retrain: RetrainSettings,
    benign: BenignMode,
    retrain_lock: Mutex<()>,
}

const CLUSTERS_FILE: &str = "clusters.json";
const BUFFER_FILE: &str = "buffer.manifest";

fn novelty_dir(state_dir: &Path) -> PathBuf {
    state_dir.join("novelty")
}

impl Lifecycle {
    /// Stores `detector` as generation 0 under `state_dir` and serves it.
    pub fn bootstrap(
        state_dir: &Path,
        detector: Detector,
        training: &[LabeledFlow],
        cfg: LifecycleConfig,
        retrain: RetrainSettings,
        benign: BenignMode,
    ) -> Result<Self> {
        let store = CheckpointStore::new(state_dir, cfg.retain)?;
        let deployment = Deployment::bootstrap(store, detector, training)?;
        Self::assemble(state_dir, deployment, cfg, retrain, benign)
    }

    /// Resumes from the serving checkpoint, the persisted novelty state and
    /// the decision log.
    pub fn open(state_dir: &Path, cfg: LifecycleConfig, retrain: RetrainSettings, benign: BenignMode) -> Result<Self> {
        let store = CheckpointStore::new(state_dir, cfg.retain)?;
        let deployment = Deployment::open(store)?;
        Self::assemble(state_dir, deployment, cfg, retrain, benign)
    }

    fn assemble(
        state_dir: &Path,
        deployment: Deployment,
        cfg: LifecycleConfig,
        retrain: RetrainSettings,
        benign: BenignMode,
    ) -> Result<Self> {
        let dir = novelty_dir(state_dir);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let active = deployment.active();
        let training = deployment.store().load_training(active.checkpoint.generation)?;
        let (log, history) = DecisionLog::open(&state_dir.join("decisions.jsonl"))?;
        let mut clusters: BTreeMap<u64, NoveltyCluster> = match std::fs::read(dir.join(CLUSTERS_FILE)) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| Error::Malformed {
                location: dir.join(CLUSTERS_FILE).display().to_string(),
                reason: e.to_string(),
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(Error::io(dir.join(CLUSTERS_FILE), e)),
        };
        // The log is authoritative for decisions.
        for d in &history {
            if let Some(c) = clusters.get_mut(&d.cluster_id) {
                c.decision = Some(d.clone());
            }
        }
        let mut buffer = NoveltyBuffer::new(cfg.capacity, cfg.trigger_threshold);
        let buffer_path = dir.join(BUFFER_FILE);
        if buffer_path.exists() {
            let flows = load_manifest(&buffer_path, None)?;
            let mut entries = Vec::with_capacity(flows.len());
            for f in flows {
                let scored = active.detector.score(&f.tensor)?;
                entries.push(BufferedFlow {
                    flow: ObservedFlow { id: f.id, key: f.key, tensor: f.tensor, source: f.source },
                    verdict: scored.verdict,
                    particularized: scored.particularized,
                    generation: active.checkpoint.generation,
                });
            }
            buffer.replace_all(entries);
        }
        let next_cluster_id = clusters
            .keys()
            .copied()
            .chain(history.iter().map(|d| d.cluster_id))
            .max()
            .map_or(0, |m| m + 1);
        Ok(Lifecycle {
            deployment: Arc::new(deployment),
            state: Mutex::new(State {
                buffer,
                clusters,
                next_cluster_id,
                log,
                history,
                training,
                last_retrain: None,
            }),
            dir,
            cfg,
            retrain,
            benign,
            retrain_lock: Mutex::new(()),
        })
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().expect("lifecycle state lock")
    }

    pub fn deployment(&self) -> &Deployment {
        &self.deployment
    }

    /// Scores one flow with the active model and buffers it if rejected;
    /// runs the clustering job when this flow triggered it.
    pub fn observe(&self, flow: ObservedFlow) -> Result<ObserveOutcome> {
        let active = self.deployment.active();
        let scored = active.detector.score(&flow.tensor)?;
        let label = active.detector.predicted_label(&scored.verdict).map(String::from);
        let mut st = self.lock();
        let ingest = st.buffer.ingest_verdict(BufferedFlow {
            flow,
            verdict: scored.verdict.clone(),
            particularized: scored.particularized,
            generation: active.checkpoint.generation,
        });
        let new_clusters = if st.buffer.is_scheduled() {
            self.cluster_locked(&mut st)?
        } else {
            Vec::new()
        };
        Ok(ObserveOutcome {
            verdict: scored.verdict,
            label,
            generation: active.checkpoint.generation,
            ingest,
            new_clusters,
        })
    }

    /// Clusters the buffer now, whether or not the trigger was reached.
    pub fn cluster_now(&self) -> Result<Vec<u64>> {
        let mut st = self.lock();
        st.buffer.force_schedule();
        self.cluster_locked(&mut st)
    }

    /// Re-clusters every buffered flow outside decided clusters; undecided
    /// clusters are replaced.
    fn cluster_locked(&self, st: &mut State) -> Result<Vec<u64>> {
        if !st.buffer.take_job() {
            return Ok(Vec::new());
        }
        st.clusters.retain(|_, c| c.decision.is_some());
        let decided: BTreeSet<&str> = st
            .clusters
            .values()
            .flat_map(|c| c.members.iter().map(String::as_str))
            .collect();
        let pending: Vec<&BufferedFlow> = st.buffer.iter().filter(|f| !decided.contains(f.flow.id.as_str())).collect();
        if pending.is_empty() {
            return Ok(Vec::new());
        }
        let ids: Vec<String> = pending.iter().map(|f| f.flow.id.clone()).collect();
        let points: Vec<Vec<f32>> = pending.iter().map(|f| f.particularized.clone()).collect();
        let generation = pending.iter().map(|f| f.generation).max().unwrap_or(0);
        let active = self.deployment.active();
        let known: Vec<(String, Vec<f32>)> = active
            .detector
            .state()
            .centroids
            .iter()
            .map(|(l, c)| (l.clone(), c.clone()))
            .collect();
        let records = cluster_novelties(&ids, &points, &known, self.cfg.cluster_seed)?;
        let mut created = Vec::new();
        for r in records {
            let id = st.next_cluster_id;
            st.next_cluster_id += 1;
            st.clusters.insert(
                id,
                NoveltyCluster {
                    id,
                    generation,
                    size: r.size,
                    centroid: r.centroid,
                    members: r.members,
                    silhouette: r.silhouette,
                    nearest_known: r.nearest_known,
                    decision: None,
                },
            );
            created.push(id);
        }
        tracing::info!(clusters = created.len(), flows = ids.len(), "novelty clustering done");
        self.persist(st)?;
        Ok(created)
    }

    fn persist(&self, st: &State) -> Result<()> {
        let tmp = self.dir.join(".clusters.json.tmp");
        let bytes = serde_json::to_vec_pretty(&st.clusters).map_err(|e| Error::Invalid(e.to_string()))?;
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, self.dir.join(CLUSTERS_FILE)).map_err(|e| Error::io(self.dir.join(CLUSTERS_FILE), e))?;
        let records: Vec<ManifestRecord> = st
            .buffer
            .iter()
            .map(|f| ManifestRecord {
                id: f.flow.id.clone(),
                label: UNKNOWN_TRAIN.to_string(),
                source: ManifestSource::Inline(f.flow.tensor.clone()),
                key: Some(f.flow.key),
                origin: Some(f.flow.source),
            })
            .collect();
        let tmp = self.dir.join(".buffer.manifest.tmp");
        write_records(&tmp, &records)?;
        std::fs::rename(&tmp, self.dir.join(BUFFER_FILE)).map_err(|e| Error::io(self.dir.join(BUFFER_FILE), e))
    }

    pub fn clusters(&self) -> Vec<NoveltyCluster> {
        self.lock().clusters.values().cloned().collect()
    }

    pub fn cluster(&self, id: u64) -> Result<NoveltyCluster> {
        self.lock()
            .clusters
            .get(&id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("cluster {id}")))
    }

    pub fn cluster_samples(&self, id: u64, limit: usize) -> Result<Vec<SampleView>> {
        let st = self.lock();
        let c = st.clusters.get(&id).ok_or_else(|| Error::NotFound(format!("cluster {id}")))?;
        Ok(c.members
            .iter()
            .filter_map(|m| st.buffer.get(m))
            .take(limit)
            .map(|f| {
                let bytes = &f.flow.tensor.raw()[..64];
                SampleView {
                    id: f.flow.id.clone(),
                    key: f.flow.key.to_string(),
                    packet_count: f.flow.tensor.packet_count(),
                    source: f.flow.source,
                    hex_preview: hex::encode(bytes),
                    ascii_preview: bytes
                        .iter()
                        .map(|&b| if b.is_ascii_graphic() || b == b' ' { b as char } else { '.' })
                        .collect(),
                    scores: f.verdict.scores.clone(),
                    unknown_score: f.verdict.unknown_score,
                }
            })
            .collect())
    }

    /// Records an analyst decision. Conflicts: the cluster already has a
    /// decision, or a malicious name is already a known class.
    pub fn decide(&self, cluster_id: u64, category: Category, analyst: &str) -> Result<LabelDecision> {
        if let Category::Malicious { name } = &category {
            let name = name.trim();
            if name.is_empty() || name == UNKNOWN_TRAIN || name.contains(['\t', '\n']) {
                return Err(Error::Invalid(format!("`{name}` is not a usable class name")));
            }
        }
        let category = match category {
            Category::Malicious { name } => Category::Malicious { name: name.trim().to_string() },
            other => other,
        };
        let mut st = self.lock();
        let c = st
            .clusters
            .get(&cluster_id)
            .ok_or_else(|| Error::NotFound(format!("cluster {cluster_id}")))?;
        if let Some(d) = &c.decision {
            return Err(Error::Conflict(format!("cluster {cluster_id} was already decided by {}", d.analyst)));
        }
        if let Category::Malicious { name } = &category {
            let active = self.deployment.active();
            if active.detector.classes().contains(name) || *name == self.benign.label() {
                return Err(Error::Conflict(format!("class `{name}` already exists")));
            }
        }
        let d = LabelDecision::now(cluster_id, category, analyst);
        st.log.append(&d)?;
        st.history.push(d.clone());
        st.clusters.get_mut(&cluster_id).expect("checked").decision = Some(d.clone());
        self.persist(&st)?;
        Ok(d)
    }

    pub fn decisions(&self) -> Vec<LabelDecision> {
        self.lock().history.clone()
    }

    fn plan_locked(&self, st: &State) -> Result<RetrainPlan> {
        let decisions: Vec<LabelDecision> = st.clusters.values().filter_map(|c| c.decision.clone()).collect();
        let flows: HashMap<&str, &ObservedFlow> = st.buffer.iter().map(|f| (f.flow.id.as_str(), &f.flow)).collect();
        let active = self.deployment.active();
        apply_decisions(&decisions, &st.clusters, &flows, &st.training, active.detector.classes(), &self.benign)
    }

    /// The next generation's training set from the current decisions.
    pub fn plan(&self) -> Result<RetrainPlan> {
        let st = self.lock();
        self.plan_locked(&st)
    }

    /// Builds the retrain manifest, retrains a passive clone and swaps it
    /// in. Verdicts keep flowing from the active model meanwhile. After the
    /// swap, decided clusters leave the buffer and the remaining flows are
    /// re-scored by the new model.
    pub fn retrain(&self) -> Result<RetrainReport> {
        let _exclusive = self
            .retrain_lock
            .try_lock()
            .map_err(|_| Error::Conflict("a retrain is already running".into()))?;
        let plan = {
            let st = self.lock();
            self.plan_locked(&st)?
        };
        let next_gen = self.deployment.active().checkpoint.generation + 1;
        let manifests = self.dir.parent().unwrap_or(&self.dir).join("manifests");
        std::fs::create_dir_all(&manifests).map_err(|e| Error::io(&manifests, e))?;
        let manifest = manifests.join(format!("gen-{next_gen}.manifest"));
        write_manifest(&manifest, &plan.training)?;
        if !plan.side_benign.is_empty() {
            let side = manifests.join("benign.manifest");
            let mut records = if side.exists() { read_records(&side)? } else { Vec::new() };
            records.extend(plan.side_benign.iter().map(ManifestRecord::inline));
            write_records(&side, &records)?;
        }
        let swap: SwapOutcome = self.deployment.retrain_and_swap(&plan, &self.retrain)?;
        let active = self.deployment.active();
        let mut st = self.lock();
        let applied: BTreeSet<u64> = plan.applied_clusters.iter().copied().collect();
        let consumed: BTreeSet<String> = st
            .clusters
            .values()
            .filter(|c| applied.contains(&c.id))
            .flat_map(|c| c.members.iter().cloned())
            .collect();
        st.clusters.retain(|id, c| !applied.contains(id) && c.decision.is_some());
        let mut rescored_known = 0;
        let remaining: Vec<BufferedFlow> = st
            .buffer
            .drain()
            .into_iter()
            .filter(|f| !consumed.contains(&f.flow.id))
            .map(|f| {
                let s = active.detector.score(&f.flow.tensor)?;
                Ok(BufferedFlow {
                    verdict: s.verdict,
                    particularized: s.particularized,
                    generation: active.checkpoint.generation,
                    flow: f.flow,
                })
            })
            .collect::<Result<_>>()?;
        let remaining: Vec<BufferedFlow> = remaining
            .into_iter()
            .filter(|f| {
                let unknown = f.verdict.is_unknown();
                rescored_known += usize::from(!unknown);
                unknown
            })
            .collect();
        st.buffer.replace_all(remaining);
        st.training = plan.training.clone();
        let report = RetrainReport {
            generation: swap.checkpoint.generation,
            hash: swap.checkpoint.hash.clone(),
            previous_hash: swap.previous.hash.clone(),
            classes: plan.classes.clone(),
            training_flows: plan.training.len(),
            side_benign_flows: plan.side_benign.len(),
            manifest,
            applied_clusters: plan.applied_clusters.clone(),
            rescored_known,
            pipeline: swap.pipeline,
        };
        st.last_retrain = Some(report.clone());
        if st.buffer.len() >= self.cfg.trigger_threshold {
            st.buffer.force_schedule();
        }
        self.persist(&st)?;
        Ok(report)
    }

    pub fn last_retrain(&self) -> Option<RetrainReport> {
        self.lock().last_retrain.clone()
    }

    pub fn status(&self) -> LifecycleStatus {
        let st = self.lock();
        LifecycleStatus {
            deployment: self.deployment.status(),
            buffered: st.buffer.len(),
            evicted: st.buffer.evicted(),
            known_verdicts: st.buffer.known_seen(),
            clusters: st.clusters.len(),
            undecided_clusters: st.clusters.values().filter(|c| c.decision.is_none()).count(),
            decisions: st.history.len(),
        }
    }
}
