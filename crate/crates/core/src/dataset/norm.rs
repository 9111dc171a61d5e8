use serde::{Deserialize, Serialize};

use crate::env::Trajectory;
use crate::error::{Error, Result};

/// Lower bound applied to every standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-dimension mean and standard deviation of dataset states and actions.
///
/// Goals are positions, so they are normalized with the first two state dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub action_mean: Vec<f64>,
    pub action_std: Vec<f64>,
}

/// Streaming mean/variance (Welford), population variance.
#[derive(Default, Clone)]
struct Moments {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn push(&mut self, x: &[f32]) {
        if self.mean.is_empty() {
            self.mean = vec![0.0; x.len()];
            self.m2 = vec![0.0; x.len()];
        }
        self.n += 1;
        let n = self.n as f64;
        for (i, &v) in x.iter().enumerate() {
            let v = v as f64;
            let d = v - self.mean[i];
            self.mean[i] += d / n;
            self.m2[i] += d * (v - self.mean[i]);
        }
    }

    fn finish(self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n as f64;
        let std = self.m2.iter().map(|m| (m / n).sqrt().max(STD_FLOOR)).collect();
        (self.mean, std)
    }
}

impl NormStats {
    pub fn fit(trajectories: &[Trajectory]) -> Result<Self> {
        let mut states = Moments::default();
        let mut actions = Moments::default();
        for t in trajectories {
            for s in &t.states {
                states.push(&s.to_array());
            }
            for a in &t.actions {
                actions.push(a);
            }
        }
        if states.n == 0 || actions.n == 0 {
            return Err(Error::config("cannot fit normalization stats on an empty dataset"));
        }
        let (state_mean, state_std) = states.finish();
        let (action_mean, action_std) = actions.finish();
        Ok(Self {
            state_mean,
            state_std,
            action_mean,
            action_std,
        })
    }

    /// Identity transform for the given dimensions.
    pub fn identity(state_dim: usize, action_dim: usize) -> Self {
        Self {
            state_mean: vec![0.0; state_dim],
            state_std: vec![1.0; state_dim],
            action_mean: vec![0.0; action_dim],
            action_std: vec![1.0; action_dim],
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_mean.len()
    }

    pub fn action_dim(&self) -> usize {
        self.action_mean.len()
    }

    pub fn is_valid(&self) -> bool {
        self.state_mean.len() == self.state_std.len()
            && self.action_mean.len() == self.action_std.len()
            && self.state_std.iter().chain(&self.action_std).all(|&s| s >= STD_FLOOR)
            && self
                .state_mean
                .iter()
                .chain(&self.action_mean)
                .all(|m| m.is_finite())
    }

    pub fn normalize_state(&self, x: &[f32], out: &mut [f32]) {
        affine(x, &self.state_mean, &self.state_std, out, false)
    }

    pub fn denormalize_state(&self, x: &[f32], out: &mut [f32]) {
        affine(x, &self.state_mean, &self.state_std, out, true)
    }

    pub fn normalize_goal(&self, x: &[f32], out: &mut [f32]) {
        let n = x.len();
        affine(x, &self.state_mean[..n], &self.state_std[..n], out, false)
    }

    pub fn denormalize_goal(&self, x: &[f32], out: &mut [f32]) {
        let n = x.len();
        affine(x, &self.state_mean[..n], &self.state_std[..n], out, true)
    }

    pub fn normalize_action(&self, x: &[f32], out: &mut [f32]) {
        affine(x, &self.action_mean, &self.action_std, out, false)
    }

    pub fn denormalize_action(&self, x: &[f32], out: &mut [f32]) {
        affine(x, &self.action_mean, &self.action_std, out, true)
    }
}

fn affine(x: &[f32], mean: &[f64], std: &[f64], out: &mut [f32], invert: bool) {
    debug_assert_eq!(x.len(), mean.len());
    for i in 0..x.len() {
        let v = x[i] as f64;
        out[i] = if invert {
            v * std[i] + mean[i]
        } else {
            (v - mean[i]) / std[i]
        } as f32;
    }
}
