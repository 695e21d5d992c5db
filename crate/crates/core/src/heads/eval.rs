//! Closed-set and open-set accuracy tallies.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::LabeledFlow;

use super::{check_eval_labels, Decision, Detector, OpenSetVerdict};

/// Closed-set outcome for one known label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTally {
    pub label: String,
    pub correct: usize,
    pub total: usize,
}

impl LabelTally {
    pub fn percent(&self) -> f64 {
        percent(self.correct, self.total)
    }
}

/// Open-set outcome for one novelty label; `absorbed` counts the flows each
/// known class wrongly accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoveltyTally {
    pub label: String,
    pub rejected: usize,
    pub total: usize,
    pub absorbed: BTreeMap<String, usize>,
}

impl NoveltyTally {
    pub fn percent(&self) -> f64 {
        percent(self.rejected, self.total)
    }

    /// Accuracy when acceptance into any class of `group` also counts as
    /// correct.
    pub fn grouped_percent(&self, group: &BTreeSet<String>) -> f64 {
        let extra: usize = self
            .absorbed
            .iter()
            .filter(|(c, _)| group.contains(*c))
            .map(|(_, n)| n)
            .sum();
        percent(self.rejected + extra, self.total)
    }
}

fn percent(n: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * n as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OpenSetAccuracy {
    pub closed: Vec<LabelTally>,
    pub open: Vec<NoveltyTally>,
}

/// Tallies verdicts already computed for each flow, in input order.
pub fn tally_verdicts(
    classes: &[String],
    known: &[(&str, &OpenSetVerdict)],
    novelty: &[(&str, &OpenSetVerdict)],
) -> Result<OpenSetAccuracy> {
    let known_labels: BTreeSet<&str> = known.iter().map(|(l, _)| *l).collect();
    let novelty_labels: BTreeSet<&str> = novelty.iter().map(|(l, _)| *l).collect();
    if let Some(bad) = known_labels.iter().find(|l| !classes.iter().any(|c| c == *l)) {
        return Err(Error::UnknownLabels(vec![bad.to_string()]));
    }
    let overlap: Vec<String> = novelty_labels
        .iter()
        .filter(|l| classes.iter().any(|c| c == *l))
        .map(|l| l.to_string())
        .collect();
    if !overlap.is_empty() {
        return Err(Error::Invalid(format!(
            "novelty labels overlap the known classes: {}",
            overlap.join(", ")
        )));
    }
    let mut closed: BTreeMap<&str, LabelTally> = BTreeMap::new();
    for (label, v) in known {
        let t = closed.entry(label).or_insert_with(|| LabelTally {
            label: label.to_string(),
            correct: 0,
            total: 0,
        });
        t.total += 1;
        if matches!(v.decision, Decision::Known(c) if classes[c] == *label) {
            t.correct += 1;
        }
    }
    let mut open: BTreeMap<&str, NoveltyTally> = BTreeMap::new();
    for (label, v) in novelty {
        let t = open.entry(label).or_insert_with(|| NoveltyTally {
            label: label.to_string(),
            rejected: 0,
            total: 0,
            absorbed: BTreeMap::new(),
        });
        t.total += 1;
        match v.decision {
            Decision::Unknown => t.rejected += 1,
            Decision::Known(c) => *t.absorbed.entry(classes[c].clone()).or_default() += 1,
        }
    }
    Ok(OpenSetAccuracy {
        closed: closed.into_values().collect(),
        open: open.into_values().collect(),
    })
}

/// Closed-set accuracy of each known label and rejection rate of each
/// novelty label.
pub fn evaluate_open_set(
    detector: &Detector,
    known_test: &[LabeledFlow],
    novelty_test: &[LabeledFlow],
) -> Result<OpenSetAccuracy> {
    check_eval_labels(known_test)?;
    check_eval_labels(novelty_test)?;
    let kv = known_test
        .iter()
        .map(|f| detector.classify(&f.tensor))
        .collect::<Result<Vec<_>>>()?;
    let nv = novelty_test
        .iter()
        .map(|f| detector.classify(&f.tensor))
        .collect::<Result<Vec<_>>>()?;
    let known: Vec<(&str, &OpenSetVerdict)> = known_test.iter().map(|f| f.label.as_str()).zip(&kv).collect();
    let novelty: Vec<(&str, &OpenSetVerdict)> = novelty_test.iter().map(|f| f.label.as_str()).zip(&nv).collect();
    tally_verdicts(detector.classes(), &known, &novelty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::HeadType;
    use proptest::prelude::*;

    fn v(decision: Decision) -> OpenSetVerdict {
        OpenSetVerdict {
            decision,
            scores: vec![],
            unknown_score: None,
            head: HeadType::Doc,
        }
    }

    fn classes() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn all_rejected_and_all_absorbed() {
        let u = v(Decision::Unknown);
        let k = v(Decision::Known(1));
        let r = tally_verdicts(&classes(), &[], &[("x", &u), ("x", &u)]).unwrap();
        assert_eq!(r.open[0].percent(), 100.0);
        let r = tally_verdicts(&classes(), &[], &[("x", &k), ("x", &k)]).unwrap();
        assert_eq!(r.open[0].percent(), 0.0);
        assert_eq!(r.open[0].absorbed["b"], 2);
        assert_eq!(r.open[0].grouped_percent(&["b".to_string()].into()), 100.0);
    }

    #[test]
    fn overlap_is_an_error() {
        let u = v(Decision::Unknown);
        assert!(tally_verdicts(&classes(), &[("a", &u)], &[("a", &u)]).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force_count(rows in proptest::collection::vec((0usize..2, 0usize..3, any::<bool>()), 1..60)) {
            // (true label index, decision code 0|1 = class, 2 = unknown, is novelty)
            let novelty_names = ["x", "y"];
            let verdicts: Vec<OpenSetVerdict> = rows.iter()
                .map(|(_, d, _)| v(if *d == 2 { Decision::Unknown } else { Decision::Known(*d) }))
                .collect();
            let cls = classes();
            let mut known = vec![];
            let mut novelty = vec![];
            for ((l, _, is_nov), verdict) in rows.iter().zip(&verdicts) {
                if *is_nov { novelty.push((novelty_names[*l], verdict)) } else { known.push((cls[*l].as_str(), verdict)) }
            }
            let r = tally_verdicts(&cls, &known, &novelty).unwrap();
            for t in &r.closed {
                let li = cls.iter().position(|c| *c == t.label).unwrap();
                let total = rows.iter().filter(|(l, _, n)| !n && *l == li).count();
                let correct = rows.iter().filter(|(l, d, n)| !n && *l == li && *d == li).count();
                prop_assert_eq!((t.correct, t.total), (correct, total));
            }
            for t in &r.open {
                let li = novelty_names.iter().position(|c| *c == t.label).unwrap();
                let total = rows.iter().filter(|(l, _, n)| *n && *l == li).count();
                let rejected = rows.iter().filter(|(l, d, n)| *n && *l == li && *d == 2).count();
                prop_assert_eq!((t.rejected, t.total), (rejected, total));
                prop_assert!((0.0..=100.0).contains(&t.percent()));
            }
        }
    }
}
