use serde::{Deserialize, Serialize};

use super::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

pub struct Adam {
    cfg: AdamConfig,
    m: ModelParams,
    v: ModelParams,
    step: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, like: &ModelParams) -> Self {
        Adam {
            cfg,
            m: ModelParams::zeros(like.arch),
            v: ModelParams::zeros(like.arch),
            step: 0,
        }
    }

    /// Applies `grad * scale` as one bias-corrected Adam step.
    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams, scale: f32) {
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        let lr = c.learning_rate * bc2.sqrt() / bc1;
        for (((p, g), m), v) in params
            .arrays_mut()
            .into_iter()
            .zip(grad.arrays())
            .zip(self.m.arrays_mut())
            .zip(self.v.arrays_mut())
        {
            for i in 0..p.len() {
                let gi = g[i] * scale;
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                p[i] -= lr * m[i] / (v[i].sqrt() + c.epsilon);
            }
        }
    }
}
