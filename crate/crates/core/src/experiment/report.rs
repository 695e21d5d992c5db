//! Report tables: per-label averages, accuracy CDFs and their areas,
//! similarity groups, and a separate resource file.
//!
//! Everything except `resources.json` is a pure function of the experiment
//! records, formatted with fixed precision, so fixed seeds reproduce the
//! files byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::{
    similarity_by_clustering, similarity_by_misclassification, CoClusterSimilarity, SimilarLabel, SimilarityGroup,
    ACCEPT_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::heads::{HeadType, LabelTally, NoveltyTally};

use super::grid::{ExperimentRecord, GridOutput};

/// Ascending (percentile, accuracy) points of the empirical distribution of
/// per-experiment accuracies; the i-th of n sorted values sits at 100 i / n.
pub fn cdf_series(accuracies: &[f64]) -> Vec<(f64, f64)> {
    let mut a = accuracies.to_vec();
    a.sort_by(f64::total_cmp);
    let n = a.len() as f64;
    a.into_iter()
        .enumerate()
        .map(|(i, acc)| (100.0 * (i + 1) as f64 / n, acc))
        .collect()
}

/// Area under the empirical CDF of accuracies over [0, 100], normalized to
/// [0, 1]. Lower is better: mass concentrated at high accuracy.
pub fn cdf_auc(accuracies: &[f64]) -> f64 {
    if accuracies.is_empty() {
        return f64::NAN;
    }
    accuracies.iter().map(|a| (100.0 - a) / 100.0).sum::<f64>() / accuracies.len() as f64
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-label accuracies of the experiments of one head.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HeadSummary {
    pub closed: BTreeMap<String, f64>,
    pub open: BTreeMap<String, f64>,
    pub open_grouped: BTreeMap<String, f64>,
    pub closed_post: BTreeMap<String, f64>,
    pub open_post: BTreeMap<String, f64>,
    pub auc: BTreeMap<String, f64>,
    /// AUC of all open-set accuracies of the head pooled.
    pub auc_all: f64,
    pub mean_open: f64,
    pub quality_before: Option<(f64, f64)>,
    pub quality_after: Option<(f64, f64)>,
    pub similarity: Vec<SimilarityGroup>,
    pub co_clustering: Vec<CoClusterSimilarity>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub labels: Vec<String>,
    pub mode_suffix: String,
    pub experiments: usize,
    pub heads: BTreeMap<HeadType, HeadSummary>,
}

fn closed_by_label<'a>(tallies: impl Iterator<Item = &'a Vec<LabelTally>>) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in tallies.flatten() {
        acc.entry(t.label.clone()).or_default().push(t.percent());
    }
    acc.into_iter().map(|(l, v)| (l, mean(&v).expect("non-empty"))).collect()
}

fn open_by_label<'a>(tallies: impl Iterator<Item = &'a NoveltyTally>, f: impl Fn(&NoveltyTally) -> f64) -> BTreeMap<String, Vec<f64>> {
    let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in tallies {
        acc.entry(t.label.clone()).or_default().push(f(t));
    }
    acc
}

fn means(m: BTreeMap<String, Vec<f64>>) -> BTreeMap<String, f64> {
    m.into_iter().map(|(l, v)| (l, mean(&v).expect("non-empty"))).collect()
}

fn summarize_head(records: &[&ExperimentRecord]) -> HeadSummary {
    let open_raw = open_by_label(records.iter().map(|r| &r.open), NoveltyTally::percent);
    let similarity = similarity_by_misclassification(
        &records.iter().map(|r| r.open.clone()).collect::<Vec<_>>(),
        ACCEPT_THRESHOLD,
    );
    let groups: BTreeMap<&str, BTreeSet<String>> = similarity.iter().map(|g| (g.label.as_str(), g.group())).collect();
    let grouped = open_by_label(records.iter().map(|r| &r.open), |t| {
        t.grouped_percent(groups.get(t.label.as_str()).unwrap_or(&BTreeSet::new()))
    });
    let all: Vec<f64> = open_raw.values().flatten().copied().collect();
    let quality = |pick: fn(&ExperimentRecord) -> Option<crate::cluster::ClusterQuality>| {
        let q: Vec<_> = records.iter().filter_map(|r| pick(r)).collect();
        (!q.is_empty()).then(|| {
            (
                q.iter().map(|q| q.completeness).sum::<f64>() / q.len() as f64,
                q.iter().map(|q| q.homogeneity).sum::<f64>() / q.len() as f64,
            )
        })
    };
    let co_runs: Vec<_> = records.iter().filter_map(|r| r.co_cluster.clone()).collect();
    HeadSummary {
        closed: closed_by_label(records.iter().map(|r| &r.closed)),
        closed_post: closed_by_label(records.iter().filter_map(|r| r.closed_post.as_ref())),
        open_post: means(open_by_label(records.iter().filter_map(|r| r.open_post.as_ref()), NoveltyTally::percent)),
        auc: open_raw.iter().map(|(l, v)| (l.clone(), cdf_auc(v))).collect(),
        auc_all: cdf_auc(&all),
        mean_open: mean(&all).unwrap_or(f64::NAN),
        open: means(open_raw),
        open_grouped: means(grouped),
        quality_before: quality(|r| r.quality_before),
        quality_after: quality(|r| r.quality_after),
        similarity,
        co_clustering: similarity_by_clustering(&co_runs),
    }
}

pub fn summarize(records: &[ExperimentRecord], labels: &[String], mode_suffix: &str) -> ExperimentReport {
    let mut by_head: BTreeMap<HeadType, Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        by_head.entry(r.experiment.head).or_default().push(r);
    }
    ExperimentReport {
        labels: labels.to_vec(),
        mode_suffix: mode_suffix.to_string(),
        experiments: records.len(),
        heads: by_head.into_iter().map(|(h, rs)| (h, summarize_head(&rs))).collect(),
    }
}

fn cell(v: Option<&f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.2}"),
        _ => "N/A".into(),
    }
}

fn table(report: &ExperimentReport, pick: fn(&HeadSummary) -> &BTreeMap<String, f64>) -> String {
    let mut s = String::from("label");
    for h in report.heads.keys() {
        let _ = write!(s, ",{}{}", h.name(), report.mode_suffix);
    }
    s.push('\n');
    for l in &report.labels {
        s.push_str(l);
        for summary in report.heads.values() {
            let _ = write!(s, ",{}", cell(pick(summary).get(l)));
        }
        s.push('\n');
    }
    s
}

fn similar_list(v: &[SimilarLabel]) -> String {
    v.iter().map(|s| format!("{}:{:.2}", s.label, s.percent)).collect::<Vec<_>>().join(";")
}

fn write(dir: &Path, name: &str, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    files.push(p);
    Ok(())
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Invalid(e.to_string()))
}

/// Writes every report file into `dir` and returns the deterministic ones
/// (everything but `resources.json`), in write order.
pub fn write_report(dir: &Path, output: &GridOutput, labels: &[String], mode_suffix: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let report = summarize(&output.records, labels, mode_suffix);
    let mut files = Vec::new();
    write(dir, "closed_set.csv", &table(&report, |h| &h.closed), &mut files)?;
    write(dir, "open_set.csv", &table(&report, |h| &h.open), &mut files)?;
    write(dir, "open_set_grouped.csv", &table(&report, |h| &h.open_grouped), &mut files)?;
    if report.heads.values().any(|h| !h.open_post.is_empty()) {
        write(dir, "closed_set_post.csv", &table(&report, |h| &h.closed_post), &mut files)?;
        write(dir, "open_set_post.csv", &table(&report, |h| &h.open_post), &mut files)?;
    }
    let mut auc = table(&report, |h| &h.auc);
    auc.push_str("ALL");
    for h in report.heads.values() {
        let _ = write!(auc, ",{:.4}", h.auc_all);
    }
    auc.push('\n');
    write(dir, "auc.csv", &auc, &mut files)?;

    let mut q = String::from("head,completeness_before,completeness_after,homogeneity_before,homogeneity_after\n");
    for (head, h) in &report.heads {
        if let (Some(b), Some(a)) = (h.quality_before, h.quality_after) {
            let _ = writeln!(q, "{}{},{:.4},{:.4},{:.4},{:.4}", head.name(), report.mode_suffix, b.0, a.0, b.1, a.1);
        }
    }
    write(dir, "quality.csv", &q, &mut files)?;

    let mut sim = String::from("head,label,experiments,accepted_percent,similar\n");
    let mut co = String::from("head,label,similar\n");
    for (head, h) in &report.heads {
        for g in &h.similarity {
            let _ = writeln!(sim, "{},{},{},{:.2},{}", head.name(), g.label, g.experiments, g.accepted_percent, similar_list(&g.similar));
        }
        for c in &h.co_clustering {
            let _ = writeln!(co, "{},{},{}", head.name(), c.label, similar_list(&c.similar));
        }
    }
    write(dir, "similarity_misclassification.csv", &sim, &mut files)?;
    write(dir, "similarity_clustering.csv", &co, &mut files)?;

    let cdf_dir = dir.join("cdf");
    std::fs::create_dir_all(&cdf_dir).map_err(|e| Error::io(&cdf_dir, e))?;
    let mut by: BTreeMap<(HeadType, &str), Vec<f64>> = BTreeMap::new();
    for r in &output.records {
        by.entry((r.experiment.head, r.open.label.as_str())).or_default().push(r.open.percent());
    }
    for ((head, label), acc) in &by {
        let mut s = String::from("percentile,accuracy\n");
        for (p, a) in cdf_series(acc) {
            let _ = writeln!(s, "{p:.2},{a:.2}");
        }
        write(&cdf_dir, &format!("{}_{}.csv", head.name(), label), &s, &mut files)?;
    }

    let mut lines = String::new();
    for r in &output.records {
        lines.push_str(&serde_json::to_string(r).map_err(|e| Error::Invalid(e.to_string()))?);
        lines.push('\n');
    }
    write(dir, "experiments.jsonl", &lines, &mut files)?;
    write(dir, "report.json", &json(&report)?, &mut files)?;

    #[derive(Serialize)]
    struct Resources<'a> {
        peak_rss_kib: Option<u64>,
        experiments: &'a [super::grid::ResourceRecord],
    }
    let p = dir.join("resources.json");
    let text = json(&Resources {
        peak_rss_kib: output.peak_rss_kib,
        experiments: &output.resources,
    })?;
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    Ok(files)
}
