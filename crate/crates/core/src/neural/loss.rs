//! Batch losses. All three return sums over samples (and classes), computed
//! in f64.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Clamp applied to probabilities inside logarithms.
pub const LOG_EPS: f64 = 1e-7;

/// Per-sample training target: a one-hot class, or the all-zero row used
/// for DOC++ unknown-train samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Class(usize),
    Unknown,
}

impl Target {
    pub fn to_vector(self, k: usize) -> Vec<u8> {
        let mut v = vec![0u8; k];
        if let Target::Class(c) = self {
            v[c] = 1;
        }
        v
    }

    /// Parses a {0,1} target row with at most one 1.
    pub fn from_vector(v: &[u8]) -> Result<Self> {
        if v.iter().any(|&x| x > 1) {
            return Err(Error::Invalid("target entries must be 0 or 1".into()));
        }
        let ones: Vec<usize> = v.iter().enumerate().filter(|(_, &x)| x == 1).map(|(i, _)| i).collect();
        match ones.as_slice() {
            [] => Ok(Target::Unknown),
            [c] => Ok(Target::Class(*c)),
            _ => Err(Error::Invalid("target row has more than one positive entry".into())),
        }
    }

    pub fn indicator(self, class: usize) -> f64 {
        match self {
            Target::Class(c) if c == class => 1.0,
            _ => 0.0,
        }
    }
}

fn clamp(p: f64) -> f64 {
    p.clamp(LOG_EPS, 1.0 - LOG_EPS)
}

fn check_len(outputs: usize, targets: usize) -> Result<()> {
    if outputs != targets {
        return Err(Error::Shape {
            expected: format!("{targets} outputs"),
            actual: format!("{outputs}"),
        });
    }
    Ok(())
}

/// 1-vs-rest loss: sum over samples and classes of
/// `-t log p - (1 - t) log(1 - p)`.
pub fn loss_1vr(head_out: &[Vec<f32>], targets: &[Target]) -> Result<f64> {
    check_len(head_out.len(), targets.len())?;
    let mut total = 0.0;
    for (p, t) in head_out.iter().zip(targets) {
        for (class, &pc) in p.iter().enumerate() {
            let pc = clamp(pc as f64);
            let y = t.indicator(class);
            total += -y * pc.ln() - (1.0 - y) * (1.0 - pc).ln();
        }
    }
    Ok(total)
}

/// Softmax cross-entropy on probability rows. Unknown targets are invalid.
pub fn loss_softmax_ce(head_out: &[Vec<f32>], targets: &[Target]) -> Result<f64> {
    check_len(head_out.len(), targets.len())?;
    let mut total = 0.0;
    for (p, t) in head_out.iter().zip(targets) {
        match *t {
            Target::Class(c) => total -= clamp(p[c] as f64).ln(),
            Target::Unknown => {
                return Err(Error::Invalid("softmax cross-entropy needs a class target".into()));
            }
        }
    }
    Ok(total)
}

/// Centroid loss: sum of squared distances from each particularized vector
/// to the centroid of its label.
pub fn loss_posttrain<L>(penultimate: &[Vec<f32>], labels: &[L], centroids: &HashMap<L, Vec<f32>>) -> Result<f64>
where
    L: std::hash::Hash + Eq + std::fmt::Display,
{
    check_len(penultimate.len(), labels.len())?;
    let mut total = 0.0;
    for (x, label) in penultimate.iter().zip(labels) {
        let c = centroids.get(label).ok_or_else(|| Error::MissingCentroid(label.to_string()))?;
        total += x.iter().zip(c).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum::<f64>();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_vs_rest_hand_values() {
        let l = loss_1vr(&[vec![0.5, 0.5]], &[Target::Class(0)]).unwrap();
        assert!((l - 4.0f64.ln()).abs() < 1e-6 && (l - 1.3863).abs() < 1e-4);
        let u = loss_1vr(&[vec![0.5, 0.5]], &[Target::Unknown]).unwrap();
        assert!((u - 2.0 * -(0.5f64.ln())).abs() < 1e-6);
        let near = loss_1vr(&[vec![1.0 - 1e-7, 1e-7, 1e-7]], &[Target::Class(0)]).unwrap();
        assert!(near < 1e-5);
    }

    #[test]
    fn clamping_never_produces_nan() {
        let l = loss_1vr(&[vec![0.0, 1.0]], &[Target::Class(0)]).unwrap();
        assert!(l.is_finite());
        let s = loss_softmax_ce(&[vec![0.0, 1.0]], &[Target::Class(0)]).unwrap();
        assert!(s.is_finite());
    }

    #[test]
    fn softmax_ce_hand_values() {
        let l = loss_softmax_ce(&[vec![0.25; 4]], &[Target::Class(2)]).unwrap();
        assert!((l - 4.0f64.ln()).abs() < 1e-9);
        let near = loss_softmax_ce(&[vec![1.0 - 1e-7, 1e-7]], &[Target::Class(0)]).unwrap();
        assert!(near < 1e-6);
        assert!(loss_softmax_ce(&[vec![0.5, 0.5]], &[Target::Unknown]).is_err());
    }

    #[test]
    fn posttrain_hand_values() {
        let centroids: HashMap<&str, Vec<f32>> = [("a", vec![1.0, 2.0]), ("b", vec![0.0, 0.0])].into();
        assert_eq!(loss_posttrain(&[vec![1.0, 2.0]], &["a"], &centroids).unwrap(), 0.0);
        assert_eq!(loss_posttrain(&[vec![2.0, 0.0]], &["b"], &centroids).unwrap(), 4.0);
        assert!(matches!(
            loss_posttrain(&[vec![0.0, 0.0]], &["c"], &centroids),
            Err(Error::MissingCentroid(_))
        ));
    }

    #[test]
    fn target_vectors() {
        assert_eq!(Target::Class(2).to_vector(4), vec![0, 0, 1, 0]);
        assert_eq!(Target::Unknown.to_vector(4), vec![0; 4]);
        assert_eq!(Target::from_vector(&[0, 1, 0]).unwrap(), Target::Class(1));
        assert_eq!(Target::from_vector(&[0, 0]).unwrap(), Target::Unknown);
        assert!(Target::from_vector(&[1, 1]).is_err());
    }
}
