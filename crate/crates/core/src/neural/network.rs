use crate::error::{Error, Result};

use super::arch::HeadKind;
use super::input::SparseInput;
use super::loss::{Target, LOG_EPS};
use super::params::ModelParams;

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    /// Winning position per conv channel (lowest position on ties).
    pub conv_argmax: Vec<usize>,
    pub pooled: Vec<f32>,
    pub hidden_pre: Vec<f32>,
    pub hidden: Vec<f32>,
    /// The K-unit penultimate layer (pre-activation logits).
    pub penultimate: Vec<f32>,
    pub head_out: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadLoss {
    OneVsRest,
    SoftmaxCe,
}

impl HeadLoss {
    pub fn for_head(head: HeadKind) -> Self {
        match head {
            HeadKind::Sigmoid1vr => HeadLoss::OneVsRest,
            HeadKind::Softmax => HeadLoss::SoftmaxCe,
        }
    }
}

/// Head loss, optionally plus `lambda` times the centroid loss. Centroids are
/// given per sample; samples with `None` contribute no centroid term.
#[derive(Debug, Clone, Copy)]
pub struct LossSpec<'a> {
    pub head: HeadLoss,
    pub posttrain: Option<(f32, &'a [Option<Vec<f32>>])>,
}

impl<'a> LossSpec<'a> {
    pub fn head_only(head: HeadLoss) -> Self {
        LossSpec { head, posttrain: None }
    }
}

pub(crate) fn sigmoid(z: f32) -> f32 {
    (1.0 / (1.0 + (-(z as f64)).exp())) as f32
}

pub(crate) fn softmax(z: &[f32]) -> Vec<f32> {
    let m = z.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let e: Vec<f64> = z.iter().map(|&v| (v as f64 - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| (v / s) as f32).collect()
}

fn relu6(x: f32) -> f32 {
    x.clamp(0.0, 6.0)
}

impl ModelParams {
    fn check_input(&self, x: &SparseInput) -> Result<()> {
        if x.rows() != self.arch.rows || x.cols() != self.arch.cols {
            return Err(Error::Shape {
                expected: format!("{}x{}", self.arch.rows, self.arch.cols),
                actual: format!("{}x{}", x.rows(), x.cols()),
            });
        }
        Ok(())
    }

    pub fn forward_one(&self, x: &SparseInput) -> Result<Activations> {
        self.check_input(x)?;
        let a = &self.arch;
        let (ch, cols, positions) = (a.channels, a.cols, a.positions());

        let mut conv = Vec::with_capacity(positions * ch);
        for _ in 0..positions {
            conv.extend_from_slice(&self.conv_b);
        }
        for r in 0..a.rows {
            // Offsets o with 0 <= r - o < positions.
            let o_lo = (r + 1).saturating_sub(positions);
            let o_hi = r.min(a.kernel - 1);
            if o_lo > o_hi {
                continue;
            }
            for (col, v) in x.row(r) {
                for o in o_lo..=o_hi {
                    let p = r - o;
                    let w = &self.conv_w[(o * cols + col) * ch..(o * cols + col + 1) * ch];
                    let out = &mut conv[p * ch..(p + 1) * ch];
                    for (acc, wc) in out.iter_mut().zip(w) {
                        *acc += v * wc;
                    }
                }
            }
        }

        let mut conv_argmax = vec![0usize; ch];
        let mut pooled = conv[..ch].to_vec();
        for p in 1..positions {
            for c in 0..ch {
                let v = conv[p * ch + c];
                if v > pooled[c] {
                    pooled[c] = v;
                    conv_argmax[c] = p;
                }
            }
        }

        let hidden_pre: Vec<f32> = (0..a.hidden)
            .map(|j| {
                let w = &self.fc1_w[j * ch..(j + 1) * ch];
                self.fc1_b[j] + w.iter().zip(&pooled).map(|(w, x)| w * x).sum::<f32>()
            })
            .collect();
        let hidden: Vec<f32> = hidden_pre.iter().map(|&v| relu6(v)).collect();

        let penultimate: Vec<f32> = (0..a.classes)
            .map(|k| {
                let w = &self.fc2_w[k * a.hidden..(k + 1) * a.hidden];
                self.fc2_b[k] + w.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f32>()
            })
            .collect();
        let head_out = match a.head {
            HeadKind::Sigmoid1vr => penultimate.iter().map(|&z| sigmoid(z)).collect(),
            HeadKind::Softmax => softmax(&penultimate),
        };
        Ok(Activations {
            conv_argmax,
            pooled,
            hidden_pre,
            hidden,
            penultimate,
            head_out,
        })
    }

    pub fn forward(&self, batch: &[SparseInput]) -> Result<Vec<Activations>> {
        if batch.is_empty() {
            return Err(Error::Invalid("empty batch".into()));
        }
        batch.iter().map(|x| self.forward_one(x)).collect()
    }

    /// Loss (summed over the batch) and its gradient with respect to every
    /// parameter.
    pub fn backward(&self, batch: &[SparseInput], targets: &[Target], spec: &LossSpec) -> Result<(f64, ModelParams)> {
        let refs: Vec<&SparseInput> = batch.iter().collect();
        self.backward_refs(&refs, targets, spec)
    }

    pub(crate) fn backward_refs(
        &self,
        batch: &[&SparseInput],
        targets: &[Target],
        spec: &LossSpec,
    ) -> Result<(f64, ModelParams)> {
        if batch.len() != targets.len() {
            return Err(Error::Shape {
                expected: format!("{} targets", batch.len()),
                actual: format!("{}", targets.len()),
            });
        }
        if let Some((_, c)) = spec.posttrain {
            if c.len() != batch.len() {
                return Err(Error::Shape {
                    expected: format!("{} centroids", batch.len()),
                    actual: format!("{}", c.len()),
                });
            }
        }
        match (spec.head, self.arch.head) {
            (HeadLoss::OneVsRest, HeadKind::Sigmoid1vr) | (HeadLoss::SoftmaxCe, HeadKind::Softmax) => {}
            (h, k) => return Err(Error::Invalid(format!("loss {h:?} does not match head {k:?}"))),
        }
        let mut grad = ModelParams::zeros(self.arch);
        let mut total = 0.0f64;
        for (i, (x, t)) in batch.iter().zip(targets).enumerate() {
            let act = self.forward_one(x)?;
            let mut dz = vec![0f32; self.arch.classes];
            match spec.head {
                HeadLoss::OneVsRest => {
                    for (k, &z) in act.penultimate.iter().enumerate() {
                        let p = 1.0 / (1.0 + (-(z as f64)).exp());
                        let y = t.indicator(k);
                        let pc = p.clamp(LOG_EPS, 1.0 - LOG_EPS);
                        total += -y * pc.ln() - (1.0 - y) * (1.0 - pc).ln();
                        dz[k] = (p - y) as f32;
                    }
                }
                HeadLoss::SoftmaxCe => {
                    let Target::Class(c) = *t else {
                        return Err(Error::Invalid("softmax cross-entropy needs a class target".into()));
                    };
                    total -= (act.head_out[c] as f64).clamp(LOG_EPS, 1.0 - LOG_EPS).ln();
                    for (k, &p) in act.head_out.iter().enumerate() {
                        dz[k] = p - if k == c { 1.0 } else { 0.0 };
                    }
                }
            }
            if let Some((lambda, centroids)) = spec.posttrain {
                if let Some(c) = &centroids[i] {
                    for (k, (&z, &ck)) in act.penultimate.iter().zip(c).enumerate() {
                        let d = z - ck;
                        total += lambda as f64 * (d as f64) * (d as f64);
                        dz[k] += 2.0 * lambda * d;
                    }
                }
            }
            self.accumulate(x, &act, &dz, &mut grad);
        }
        Ok((total, grad))
    }

    fn accumulate(&self, x: &SparseInput, act: &Activations, dz: &[f32], g: &mut ModelParams) {
        let a = &self.arch;
        let (ch, hid) = (a.channels, a.hidden);

        let mut dh = vec![0f32; hid];
        for (k, &d) in dz.iter().enumerate() {
            g.fc2_b[k] += d;
            let w = &self.fc2_w[k * hid..(k + 1) * hid];
            let gw = &mut g.fc2_w[k * hid..(k + 1) * hid];
            for j in 0..hid {
                gw[j] += d * act.hidden[j];
                dh[j] += d * w[j];
            }
        }
        let mut dpool = vec![0f32; ch];
        for j in 0..hid {
            let pre = act.hidden_pre[j];
            if !(pre > 0.0 && pre < 6.0) {
                continue;
            }
            let d = dh[j];
            g.fc1_b[j] += d;
            let w = &self.fc1_w[j * ch..(j + 1) * ch];
            let gw = &mut g.fc1_w[j * ch..(j + 1) * ch];
            for c in 0..ch {
                gw[c] += d * act.pooled[c];
                dpool[c] += d * w[c];
            }
        }
        for c in 0..ch {
            let d = dpool[c];
            if d == 0.0 {
                continue;
            }
            g.conv_b[c] += d;
            let p = act.conv_argmax[c];
            for o in 0..a.kernel {
                for (col, v) in x.row(p + o) {
                    g.conv_w[(o * a.cols + col) * ch + c] += d * v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Architecture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_arch(head: HeadKind) -> Architecture {
        Architecture {
            rows: 5,
            cols: 10,
            kernel: 2,
            channels: 3,
            hidden: 8,
            classes: 3,
            head,
        }
    }

    fn random_input(rng: &mut ChaCha8Rng, a: &Architecture) -> SparseInput {
        let dense: Vec<f32> = (0..a.rows * a.cols)
            .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) })
            .collect();
        SparseInput::from_dense(a.rows, a.cols, &dense)
    }

    /// Straight-line dense reimplementation of the forward pass.
    fn dense_forward(p: &ModelParams, x: &[f32]) -> (Vec<f64>, Vec<f64>) {
        let a = p.arch;
        let mut pooled = vec![f64::NEG_INFINITY; a.channels];
        for pos in 0..a.positions() {
            for c in 0..a.channels {
                let mut s = p.conv_b[c] as f64;
                for o in 0..a.kernel {
                    for col in 0..a.cols {
                        s += p.conv_w[(o * a.cols + col) * a.channels + c] as f64 * x[(pos + o) * a.cols + col] as f64;
                    }
                }
                pooled[c] = pooled[c].max(s);
            }
        }
        let h: Vec<f64> = (0..a.hidden)
            .map(|j| {
                let s: f64 = (0..a.channels).map(|c| p.fc1_w[j * a.channels + c] as f64 * pooled[c]).sum();
                (s + p.fc1_b[j] as f64).clamp(0.0, 6.0)
            })
            .collect();
        let z: Vec<f64> = (0..a.classes)
            .map(|k| {
                let s: f64 = (0..a.hidden).map(|j| p.fc2_w[k * a.hidden + j] as f64 * h[j]).sum();
                s + p.fc2_b[k] as f64
            })
            .collect();
        let out = match a.head {
            HeadKind::Sigmoid1vr => z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect(),
            HeadKind::Softmax => {
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
                let s: f64 = e.iter().sum();
                e.iter().map(|v| v / s).collect()
            }
        };
        (z, out)
    }

    #[test]
    fn zero_params_give_uniform_heads() {
        let x = SparseInput::from_dense(100, 200, &vec![0.3; 20_000]);
        let sig = ModelParams::zeros(Architecture::standard(4, HeadKind::Sigmoid1vr));
        assert!(sig.forward_one(&x).unwrap().head_out.iter().all(|&v| v == 0.5));
        let soft = ModelParams::zeros(Architecture::standard(4, HeadKind::Softmax));
        assert!(soft.forward_one(&x).unwrap().head_out.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn matches_dense_reimplementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for head in [HeadKind::Sigmoid1vr, HeadKind::Softmax] {
            let arch = Architecture { rows: 30, cols: 40, kernel: 6, channels: 4, hidden: 16, classes: 4, head };
            let p = ModelParams::init(arch, 17);
            for _ in 0..5 {
                let x = random_input(&mut rng, &arch);
                let act = p.forward_one(&x).unwrap();
                let (z, out) = dense_forward(&p, &x.to_dense());
                for k in 0..arch.classes {
                    assert!((act.penultimate[k] as f64 - z[k]).abs() < 1e-6, "{} vs {}", act.penultimate[k], z[k]);
                    assert!((act.head_out[k] as f64 - out[k]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn relu6_range_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let arch = small_arch(HeadKind::Sigmoid1vr);
        let mut p = ModelParams::init(arch, 1);
        for w in p.fc1_w.iter_mut() {
            *w *= 50.0;
        }
        for _ in 0..20 {
            let act = p.forward_one(&random_input(&mut rng, &arch)).unwrap();
            assert!(act.hidden.iter().all(|h| (0.0..=6.0).contains(h)));
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = ModelParams::zeros(small_arch(HeadKind::Softmax));
        let x = SparseInput::from_dense(4, 10, &[0.0; 40]);
        assert!(matches!(p.forward_one(&x), Err(Error::Shape { .. })));
        assert!(p.forward(&[]).is_err());
    }

    #[test]
    fn posttrain_term_vanishes_on_centroids() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let arch = small_arch(HeadKind::Sigmoid1vr);
        let p = ModelParams::init(arch, 2);
        let batch: Vec<_> = (0..4).map(|_| random_input(&mut rng, &arch)).collect();
        let targets = vec![Target::Class(0), Target::Class(1), Target::Class(2), Target::Class(0)];
        let centroids: Vec<Option<Vec<f32>>> =
            batch.iter().map(|x| Some(p.forward_one(x).unwrap().penultimate)).collect();
        let (l_head, g_head) = p.backward(&batch, &targets, &LossSpec::head_only(HeadLoss::OneVsRest)).unwrap();
        let spec = LossSpec { head: HeadLoss::OneVsRest, posttrain: Some((0.7, &centroids)) };
        let (l_all, g_all) = p.backward(&batch, &targets, &spec).unwrap();
        assert_eq!(l_head, l_all);
        assert_eq!(g_head, g_all);
    }

    #[test]
    fn single_sigmoid_gradient_is_p_minus_target() {
        // One unit everywhere; d loss / d fc2_b equals p - t.
        let arch = Architecture { rows: 1, cols: 1, kernel: 1, channels: 1, hidden: 1, classes: 1, head: HeadKind::Sigmoid1vr };
        let mut p = ModelParams::zeros(arch);
        p.conv_w[0] = 0.8;
        p.fc1_w[0] = 1.5;
        p.fc2_w[0] = -0.7;
        p.fc2_b[0] = 0.2;
        let x = SparseInput::from_dense(1, 1, &[0.5]);
        for t in [Target::Class(0), Target::Unknown] {
            let (_, g) = p.backward(std::slice::from_ref(&x), &[t], &LossSpec::head_only(HeadLoss::OneVsRest)).unwrap();
            let act = p.forward_one(&x).unwrap();
            let delta = act.head_out[0] - t.indicator(0) as f32;
            assert!((g.fc2_b[0] - delta).abs() < 1e-6);
            assert!((g.fc2_w[0] - delta * act.hidden[0]).abs() < 1e-6);
            if t == Target::Unknown {
                assert!(g.fc2_b[0] > 0.0, "unknown sample pushes the sigmoid down");
            }
        }
    }

    #[test]
    fn mismatched_loss_and_head_rejected() {
        let p = ModelParams::zeros(small_arch(HeadKind::Softmax));
        let x = SparseInput::from_dense(5, 10, &[0.1; 50]);
        assert!(p.backward(&[x.clone()], &[Target::Class(0)], &LossSpec::head_only(HeadLoss::OneVsRest)).is_err());
        assert!(p.backward(&[x], &[Target::Unknown], &LossSpec::head_only(HeadLoss::SoftmaxCe)).is_err());
    }
}
