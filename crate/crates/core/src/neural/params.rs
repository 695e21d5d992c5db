use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::Architecture;

/// Weights and biases of every layer.
///
/// Layouts: `conv_w[(offset * cols + col) * channels + channel]`,
/// `fc1_w[unit * channels + channel]`, `fc2_w[class * hidden + unit]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub rng_seed: u64,
    pub conv_w: Vec<f32>,
    pub conv_b: Vec<f32>,
    pub fc1_w: Vec<f32>,
    pub fc1_b: Vec<f32>,
    pub fc2_w: Vec<f32>,
    pub fc2_b: Vec<f32>,
}

pub(crate) const ARRAY_NAMES: [&str; 6] = ["conv_w", "conv_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b"];

fn he_uniform(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f32> {
    let bound = (6.0 / fan_in as f64).sqrt() as f32;
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

impl ModelParams {
    pub fn zeros(arch: Architecture) -> Self {
        ModelParams {
            arch,
            rng_seed: 0,
            conv_w: vec![0.0; arch.conv_len()],
            conv_b: vec![0.0; arch.channels],
            fc1_w: vec![0.0; arch.hidden * arch.channels],
            fc1_b: vec![0.0; arch.hidden],
            fc2_w: vec![0.0; arch.classes * arch.hidden],
            fc2_b: vec![0.0; arch.classes],
        }
    }

    /// Uniform He-style initialization scaled by each layer's fan-in; zero
    /// biases.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(arch);
        p.rng_seed = seed;
        p.conv_w = he_uniform(&mut rng, arch.conv_len(), arch.kernel * arch.cols);
        p.fc1_w = he_uniform(&mut rng, arch.hidden * arch.channels, arch.channels);
        p.fc2_w = he_uniform(&mut rng, arch.classes * arch.hidden, arch.hidden);
        p
    }

    /// Copy with `extra` freshly initialized output classes appended.
    pub fn with_extra_classes(&self, extra: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = self.clone();
        p.arch.classes += extra;
        p.fc2_w.extend(he_uniform(&mut rng, extra * self.arch.hidden, self.arch.hidden));
        p.fc2_b.extend(std::iter::repeat_n(0.0, extra));
        p
    }

    pub fn arrays(&self) -> [&[f32]; 6] {
        [&self.conv_w, &self.conv_b, &self.fc1_w, &self.fc1_b, &self.fc2_w, &self.fc2_b]
    }

    pub fn arrays_mut(&mut self) -> [&mut Vec<f32>; 6] {
        [
            &mut self.conv_w,
            &mut self.conv_b,
            &mut self.fc1_w,
            &mut self.fc1_b,
            &mut self.fc2_w,
            &mut self.fc2_b,
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.arrays().iter().all(|a| a.iter().all(|v| v.is_finite()))
    }

    pub fn fill(&mut self, value: f32) {
        for a in self.arrays_mut() {
            a.fill(value);
        }
    }

    /// Little-endian f32 blob of all arrays in declaration order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.arrays().iter().flat_map(|a| a.iter()).flat_map(|v| v.to_le_bytes()).collect()
    }
}
