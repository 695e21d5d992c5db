//! The experiment grid: every (novelty label, known subset) combination of
//! the pool, for every head and seed; DOC++ additionally for every choice of
//! unknown-train label.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans, posttrain, training_quality, distinct_points, ClusterQuality, CoClusterRun};
use crate::error::{Error, Result};
use crate::heads::{evaluate_open_set, Detector, HeadType, LabelTally, NoveltyTally, UNKNOWN_TRAIN};
use crate::ingest::{generate_synthetic, LabeledFlow};

use super::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Experiment {
    pub seed: u64,
    pub head: HeadType,
    pub known: Vec<String>,
    pub novelty: String,
    pub unknown_train: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    #[serde(flatten)]
    pub experiment: Experiment,
    pub closed: Vec<LabelTally>,
    pub open: NoveltyTally,
    pub closed_post: Option<Vec<LabelTally>>,
    pub open_post: Option<NoveltyTally>,
    pub quality_before: Option<ClusterQuality>,
    pub quality_after: Option<ClusterQuality>,
    /// Joint clustering of all labels held out of training.
    pub co_cluster: Option<CoClusterRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceRecord {
    #[serde(flatten)]
    pub experiment: Experiment,
    pub train_flows: usize,
    pub train_secs: f64,
    pub train_secs_per_1000: f64,
    pub eval_flows: usize,
    pub eval_secs_per_1000: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutput {
    pub records: Vec<ExperimentRecord>,
    pub resources: Vec<ResourceRecord>,
    /// Peak resident set size in KiB, where the platform reports it.
    pub peak_rss_kib: Option<u64>,
}

/// All k-subsets of `items`, lexicographic by position.
pub fn combinations<T: Clone>(items: &[T], k: usize) -> Vec<Vec<T>> {
    fn rec<T: Clone>(items: &[T], k: usize, start: usize, cur: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i].clone());
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::with_capacity(k), &mut out);
    out
}

/// The experiments of `cfg` over `pool`: the configured single run when a
/// known subset and novelty label are given, the exhaustive grid otherwise.
pub fn enumerate(cfg: &RunConfig, pool: &[String]) -> Result<Vec<Experiment>> {
    let single = !cfg.known.is_empty();
    if single && cfg.novelty.is_none() {
        return Err(Error::Config("a fixed known subset needs a novelty label".into()));
    }
    if !single && pool.len() < cfg.subset_size + 1 {
        return Err(Error::Config(format!(
            "pool of {} labels is too small for subsets of {} plus a novelty label",
            pool.len(),
            cfg.subset_size
        )));
    }
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        let combos: Vec<(String, Vec<String>)> = if single {
            vec![(cfg.novelty.clone().expect("checked"), cfg.known.clone())]
        } else {
            pool.iter()
                .flat_map(|n| {
                    let rest: Vec<String> = pool.iter().filter(|l| *l != n).cloned().collect();
                    combinations(&rest, cfg.subset_size).into_iter().map(move |k| (n.clone(), k))
                })
                .collect()
        };
        for (novelty, known) in combos {
            for &head in &cfg.heads {
                if head != HeadType::DocPp {
                    out.push(Experiment { seed, head, known: known.clone(), novelty: novelty.clone(), unknown_train: None });
                    continue;
                }
                let candidates: Vec<String> = match &cfg.unknown_train {
                    Some(u) => vec![u.clone()],
                    None => pool.iter().filter(|l| !known.contains(l) && **l != novelty).cloned().collect(),
                };
                if candidates.is_empty() {
                    return Err(Error::Config(
                        "DOC++ needs an unknown-train label outside the known subset and the novelty label".into(),
                    ));
                }
                for u in candidates {
                    out.push(Experiment {
                        seed,
                        head,
                        known: known.clone(),
                        novelty: novelty.clone(),
                        unknown_train: Some(u),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Per-label train/test split of one seed's data.
pub struct SplitData {
    pub train: BTreeMap<String, Vec<LabeledFlow>>,
    pub test: BTreeMap<String, Vec<LabeledFlow>>,
}

impl SplitData {
    pub fn generate(cfg: &RunConfig, seed: u64) -> Result<Self> {
        let flows = generate_synthetic(&cfg.pool_profiles()?, cfg.flows_per_class, seed)?;
        Ok(Self::split(flows, cfg.train_fraction))
    }

    /// Leading `fraction` of each label's flows train, the rest test.
    pub fn split(flows: Vec<LabeledFlow>, fraction: f64) -> Self {
        let mut by: BTreeMap<String, Vec<LabeledFlow>> = BTreeMap::new();
        for f in flows {
            by.entry(f.label.clone()).or_default().push(f);
        }
        let mut train = BTreeMap::new();
        let mut test = BTreeMap::new();
        for (label, mut v) in by {
            let n = ((v.len() as f64 * fraction).floor() as usize).clamp(1, v.len().saturating_sub(1).max(1));
            let t = v.split_off(n);
            train.insert(label.clone(), v);
            test.insert(label, t);
        }
        SplitData { train, test }
    }

    fn get<'a>(map: &'a BTreeMap<String, Vec<LabeledFlow>>, label: &str) -> Result<&'a [LabeledFlow]> {
        map.get(label)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownLabels(vec![label.to_string()]))
    }

    pub fn training_set(&self, e: &Experiment) -> Result<Vec<LabeledFlow>> {
        let mut out = Vec::new();
        for k in &e.known {
            out.extend_from_slice(Self::get(&self.train, k)?);
        }
        if let Some(u) = &e.unknown_train {
            out.extend(Self::get(&self.train, u)?.iter().cloned().map(|mut f| {
                f.label = UNKNOWN_TRAIN.to_string();
                f
            }));
        }
        Ok(out)
    }

    pub fn known_test(&self, e: &Experiment) -> Result<Vec<LabeledFlow>> {
        let mut out = Vec::new();
        for k in &e.known {
            out.extend_from_slice(Self::get(&self.test, k)?);
        }
        Ok(out)
    }

    pub fn novelty_test(&self, e: &Experiment) -> Result<&[LabeledFlow]> {
        Self::get(&self.test, &e.novelty)
    }
}

fn co_cluster(detector: &Detector, data: &SplitData, e: &Experiment, seed: u64) -> Result<Option<CoClusterRun>> {
    let held: Vec<&String> = data
        .test
        .keys()
        .filter(|l| !e.known.contains(l) && e.unknown_train.as_ref() != Some(*l))
        .collect();
    if held.len() < 2 {
        return Ok(None);
    }
    let mut labels = Vec::new();
    let mut points = Vec::new();
    for l in &held {
        for f in &data.test[*l] {
            labels.push((*l).clone());
            points.push(detector.particularized(&detector.activations(&f.tensor)?));
        }
    }
    if distinct_points(&points) < held.len() {
        return Ok(None);
    }
    let model = kmeans(&points, held.len(), seed)?;
    Ok(Some(CoClusterRun {
        samples: labels.into_iter().zip(model.assignment).collect(),
    }))
}

fn open_tally(mut acc: crate::heads::OpenSetAccuracy, novelty: &str) -> Result<(Vec<LabelTally>, NoveltyTally)> {
    let open = acc
        .open
        .pop()
        .ok_or_else(|| Error::Invalid(format!("no test flows for novelty label `{novelty}`")))?;
    Ok((acc.closed, open))
}

/// Trains and evaluates one experiment.
pub fn run_one(cfg: &RunConfig, data: &SplitData, e: &Experiment) -> Result<(ExperimentRecord, ResourceRecord)> {
    let train_set = data.training_set(e)?;
    let known_test = data.known_test(e)?;
    let novelty_test = data.novelty_test(e)?;
    let train_cfg = crate::neural::TrainConfig { seed: e.seed, ..cfg.train.clone() };
    let mut detector = Detector::untrained(e.known.clone(), e.head, &cfg.open_set, e.seed)?;
    let started = Instant::now();
    detector.train(&train_set, &train_cfg)?;
    let train_secs = started.elapsed().as_secs_f64();
    let started = Instant::now();
    let (closed, open) = open_tally(evaluate_open_set(&detector, &known_test, novelty_test)?, &e.novelty)?;
    let eval_secs = started.elapsed().as_secs_f64();
    let mut record = ExperimentRecord {
        experiment: e.clone(),
        closed,
        open,
        closed_post: None,
        open_post: None,
        quality_before: None,
        quality_after: None,
        co_cluster: None,
    };
    if cfg.posttrain_enabled {
        let pt = crate::cluster::PosttrainConfig { seed: e.seed, ..cfg.posttrain.clone() };
        record.quality_before = Some(training_quality(&detector, &train_set, pt.seed)?);
        posttrain(&mut detector, &train_set, &train_cfg, &pt)?;
        record.quality_after = Some(training_quality(&detector, &train_set, pt.seed)?);
        let (c, o) = open_tally(evaluate_open_set(&detector, &known_test, novelty_test)?, &e.novelty)?;
        record.closed_post = Some(c);
        record.open_post = Some(o);
    }
    record.co_cluster = co_cluster(&detector, data, e, e.seed)?;
    let eval_flows = known_test.len() + novelty_test.len();
    let resources = ResourceRecord {
        experiment: e.clone(),
        train_flows: train_set.len(),
        train_secs,
        train_secs_per_1000: train_secs * 1000.0 / train_set.len() as f64,
        eval_flows,
        eval_secs_per_1000: eval_secs * 1000.0 / eval_flows.max(1) as f64,
    };
    Ok((record, resources))
}

pub fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
}

/// Runs every experiment of `cfg` in enumeration order.
pub fn run_experiment_grid(cfg: &RunConfig) -> Result<GridOutput> {
    cfg.validate()?;
    let pool: Vec<String> = cfg.pool_profiles()?.into_iter().map(|p| p.class_name).collect();
    let experiments = enumerate(cfg, &pool)?;
    let mut records = Vec::with_capacity(experiments.len());
    let mut resources = Vec::with_capacity(experiments.len());
    let mut data: Option<(u64, SplitData)> = None;
    for (i, e) in experiments.iter().enumerate() {
        if data.as_ref().is_none_or(|(s, _)| *s != e.seed) {
            data = Some((e.seed, SplitData::generate(cfg, e.seed)?));
        }
        let (record, res) = run_one(cfg, &data.as_ref().expect("generated").1, e)?;
        tracing::info!(
            n = i + 1,
            of = experiments.len(),
            head = %e.head,
            novelty = %e.novelty,
            rejected = record.open.percent(),
            "experiment done"
        );
        records.push(record);
        resources.push(res);
    }
    Ok(GridOutput {
        records,
        resources,
        peak_rss_kib: peak_rss_kib(),
    })
}
