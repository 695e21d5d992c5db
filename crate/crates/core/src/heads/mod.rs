//! Open-set decision procedures: DOC, DOC++ and OpenMax.

mod detector;
mod eval;
pub mod openmax;
pub mod weibull;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::LabeledFlow;
use crate::neural::Target;

pub use detector::{head_kind, Detector, OpenSetState, Scored};
pub use eval::{evaluate_open_set, tally_verdicts, LabelTally, NoveltyTally, OpenSetAccuracy};
pub use openmax::{Distance, OpenMaxConfig, WeibullClassModel};

/// Reserved label of DOC++ unknown-train samples.
pub const UNKNOWN_TRAIN: &str = "UNKNOWN_TRAIN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HeadType {
    #[serde(rename = "DOC", alias = "doc")]
    Doc,
    #[serde(rename = "DOC++", alias = "docpp", alias = "DOCPP")]
    DocPp,
    #[serde(rename = "OpenMax", alias = "openmax", alias = "OPENMAX")]
    OpenMax,
}

impl HeadType {
    pub fn name(self) -> &'static str {
        match self {
            HeadType::Doc => "DOC",
            HeadType::DocPp => "DOC++",
            HeadType::OpenMax => "OpenMax",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "doc" => Ok(HeadType::Doc),
            "doc++" | "docpp" => Ok(HeadType::DocPp),
            "openmax" => Ok(HeadType::OpenMax),
            other => Err(Error::Config(format!("unknown head `{other}`"))),
        }
    }
}

impl std::fmt::Display for HeadType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Known(usize),
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenSetVerdict {
    pub decision: Decision,
    /// Per-class scores: sigmoids for DOC/DOC++, K+1 softmax restricted to
    /// the known classes for OpenMax.
    pub scores: Vec<f32>,
    /// OpenMax unknown probability.
    pub unknown_score: Option<f32>,
    pub head: HeadType,
}

impl OpenSetVerdict {
    pub fn is_unknown(&self) -> bool {
        self.decision == Decision::Unknown
    }
}

/// Per-class rejection thresholds, each in (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionThreshold(Vec<f32>);

impl RejectionThreshold {
    pub fn global(t: f32, classes: usize) -> Result<Self> {
        Self::per_class(vec![t; classes])
    }

    pub fn per_class(t: Vec<f32>) -> Result<Self> {
        if let Some(bad) = t.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::Config(format!("rejection threshold {bad} outside (0, 1)")));
        }
        Ok(RejectionThreshold(t))
    }

    /// Global threshold with named per-class overrides.
    pub fn resolve(global: f32, overrides: &BTreeMap<String, f32>, classes: &[String]) -> Result<Self> {
        if let Some(name) = overrides.keys().find(|k| !classes.contains(k)) {
            return Err(Error::Config(format!("threshold override for unknown class `{name}`")));
        }
        Self::per_class(classes.iter().map(|c| overrides.get(c).copied().unwrap_or(global)).collect())
    }

    pub fn get(&self, class: usize) -> f32 {
        self.0[class]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Open-set head settings shared by all heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpenSetConfig {
    pub threshold: f32,
    pub per_class_thresholds: BTreeMap<String, f32>,
    pub openmax: OpenMaxConfig,
}

impl Default for OpenSetConfig {
    fn default() -> Self {
        OpenSetConfig {
            threshold: 0.5,
            per_class_thresholds: BTreeMap::new(),
            openmax: OpenMaxConfig::default(),
        }
    }
}

/// Argmax with ties to the lowest index.
pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// DOC rule: the argmax class unless its score falls below its threshold.
pub fn doc_predict(scores: &[f32], thresholds: &RejectionThreshold, head: HeadType) -> OpenSetVerdict {
    let best = argmax(scores);
    let decision = if scores[best] < thresholds.get(best) {
        Decision::Unknown
    } else {
        Decision::Known(best)
    };
    OpenSetVerdict {
        decision,
        scores: scores.to_vec(),
        unknown_score: None,
        head,
    }
}

/// OpenMax rule on the penultimate activations.
pub fn openmax_predict(penultimate: &[f32], models: &[WeibullClassModel], cfg: &OpenMaxConfig) -> OpenSetVerdict {
    let r = openmax::recalibrate(penultimate, models, cfg);
    let probs = openmax::openmax_probabilities(&r);
    let k = penultimate.len();
    let best_all = probs
        .iter()
        .enumerate()
        .fold(0, |b, (i, &p)| if p > probs[b] { i } else { b });
    let known: Vec<f32> = probs[..k].iter().map(|&p| p as f32).collect();
    let best_known = argmax(&known);
    let decision = if best_all == k || probs[best_known] < cfg.threshold as f64 {
        Decision::Unknown
    } else {
        Decision::Known(best_known)
    };
    OpenSetVerdict {
        decision,
        scores: known,
        unknown_score: Some(probs[k] as f32),
        head: HeadType::OpenMax,
    }
}

/// Training targets for DOC++: known labels one-hot, the reserved
/// unknown-train label all-zero.
pub fn docpp_prepare_targets(flows: &[LabeledFlow], classes: &[String], reserved: &str) -> Result<Vec<Target>> {
    let mut extra: Vec<&str> = flows
        .iter()
        .map(|f| f.label.as_str())
        .filter(|l| !classes.iter().any(|c| c == l))
        .collect();
    extra.sort_unstable();
    extra.dedup();
    if extra.len() > 1 || extra.iter().any(|l| *l != reserved) {
        return Err(Error::Invalid(format!(
            "DOC++ training accepts only the known labels plus `{reserved}`; found extra labels {}",
            extra.join(", ")
        )));
    }
    Ok(flows
        .iter()
        .map(|f| match classes.iter().position(|c| *c == f.label) {
            Some(i) => Target::Class(i),
            None => Target::Unknown,
        })
        .collect())
}

/// Evaluation sets must never contain the unknown-train label.
pub fn check_eval_labels(flows: &[LabeledFlow]) -> Result<()> {
    if flows.iter().any(|f| f.label == UNKNOWN_TRAIN) {
        return Err(Error::Invalid(format!("evaluation data contains the reserved label `{UNKNOWN_TRAIN}`")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::openmax::{openmax_probabilities, recalibrate};
    use crate::ingest::{FlowKey, FlowSource, FlowTensor};
    use proptest::prelude::*;

    fn t(v: f32) -> RejectionThreshold {
        RejectionThreshold::global(v, 4).unwrap()
    }

    #[test]
    fn doc_examples() {
        assert_eq!(doc_predict(&[0.9, 0.1, 0.1, 0.1], &t(0.5), HeadType::Doc).decision, Decision::Known(0));
        assert_eq!(doc_predict(&[0.2; 4], &t(0.5), HeadType::Doc).decision, Decision::Unknown);
        assert_eq!(doc_predict(&[0.6, 0.6, 0.1, 0.1], &t(0.5), HeadType::Doc).decision, Decision::Known(0));
    }

    #[test]
    fn thresholds_validate_and_resolve() {
        assert!(RejectionThreshold::global(1.0, 2).is_err());
        assert!(RejectionThreshold::global(0.0, 2).is_err());
        let classes = vec!["a".to_string(), "b".to_string()];
        let r = RejectionThreshold::resolve(0.5, &[("b".to_string(), 0.8)].into(), &classes).unwrap();
        assert_eq!((r.get(0), r.get(1)), (0.5, 0.8));
        assert!(RejectionThreshold::resolve(0.5, &[("z".to_string(), 0.8)].into(), &classes).is_err());
    }

    fn flow(label: &str) -> LabeledFlow {
        LabeledFlow {
            id: label.into(),
            key: FlowKey::unspecified(),
            tensor: FlowTensor::zeros(),
            label: label.into(),
            source: FlowSource::Synthetic,
        }
    }

    #[test]
    fn docpp_targets() {
        let classes: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let ts = docpp_prepare_targets(&[flow("c"), flow(UNKNOWN_TRAIN)], &classes, UNKNOWN_TRAIN).unwrap();
        assert_eq!(ts[0].to_vector(4), vec![0, 0, 1, 0]);
        assert_eq!(ts[1].to_vector(4), vec![0, 0, 0, 0]);
        assert!(docpp_prepare_targets(&[flow(UNKNOWN_TRAIN), flow("zz")], &classes, UNKNOWN_TRAIN).is_err());
        assert!(check_eval_labels(&[flow("a"), flow(UNKNOWN_TRAIN)]).is_err());
        assert!(check_eval_labels(&[flow("a")]).is_ok());
    }

    #[test]
    fn openmax_limit_case_moves_all_mass_to_unknown() {
        let models = vec![
            WeibullClassModel { mav: vec![0.0, 0.0], shape: 1.0, scale: 1e-12, shift: 0.0 },
            WeibullClassModel { mav: vec![0.0, 0.0], shape: 1.0, scale: 1e-12, shift: 0.0 },
        ];
        let cfg = OpenMaxConfig { alpha: 1, ..Default::default() };
        let v = openmax_predict(&[8.0, 0.0], &models, &cfg);
        assert_eq!(v.decision, Decision::Unknown);
        assert!(v.unknown_score.unwrap() > 0.99);
    }

    fn random_models(k: usize) -> impl Strategy<Value = Vec<WeibullClassModel>> {
        proptest::collection::vec(
            (proptest::collection::vec(-5.0f32..5.0, k), 0.3f64..5.0, 0.1f64..4.0, -1.0f64..2.0),
            k,
        )
        .prop_map(|ms| {
            ms.into_iter()
                .map(|(mav, shape, scale, shift)| WeibullClassModel { mav, shape, scale, shift })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn doc_rejection_monotone_in_threshold(scores in proptest::collection::vec(0.001f32..0.999, 4),
                                               lo in 0.01f32..0.98, bump in 0.0f32..0.5) {
            let hi = (lo + bump).min(0.99);
            let at_lo = doc_predict(&scores, &t(lo), HeadType::Doc);
            let at_hi = doc_predict(&scores, &t(hi), HeadType::Doc);
            if at_lo.is_unknown() {
                prop_assert!(at_hi.is_unknown());
            }
        }

        #[test]
        fn openmax_conserves_activation_mass((v, models, alpha) in (1usize..=5).prop_flat_map(|k|
            (proptest::collection::vec(-10.0f32..10.0, k), random_models(k), 1..=k))) {
            let cfg = OpenMaxConfig { alpha, ..Default::default() };
            let r = recalibrate(&v, &models, &cfg);
            let before: f64 = v.iter().map(|&x| x as f64).sum();
            let after: f64 = r.known.iter().sum::<f64>() + r.unknown;
            prop_assert!((before - after).abs() < 1e-6);
        }

        #[test]
        fn openmax_zero_cdf_keeps_softmax_argmax(v in proptest::collection::vec(-10.0f32..10.0, 2..6)) {
            // Shift beyond any reachable distance makes every CDF zero.
            let models: Vec<_> = v.iter().map(|_| WeibullClassModel {
                mav: vec![0.0; v.len()], shape: 2.0, scale: 1.0, shift: 1e6 }).collect();
            let cfg = OpenMaxConfig { alpha: v.len(), ..Default::default() };
            let r = recalibrate(&v, &models, &cfg);
            prop_assert!(r.weights.iter().all(|&w| w == 0.0));
            let probs = openmax_probabilities(&r);
            let known: Vec<f32> = probs[..v.len()].iter().map(|&p| p as f32).collect();
            let m = v.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let plain: Vec<f32> = v.iter().map(|x| (x - m).exp()).collect();
            prop_assert_eq!(argmax(&known), argmax(&plain));
        }
    }
}
