//! Column-grouped, normalized training tables and minibatch sampling.
//!
//! States and goals are normalized. Actions already live in `[-1, 1]` and are
//! kept raw, so a policy's output is directly the commanded action.

use rand::Rng;

use super::norm::NormStats;
use super::relabel::{GcslSample, KappaSample};
use crate::error::{Error, Result};

pub const STATE_DIM: usize = 4;
pub const ACTION_DIM: usize = 2;
pub const GOAL_DIM: usize = 2;

/// Width of a flattened `κ^(n)`.
pub fn kappa_width(n: usize) -> usize {
    STATE_DIM * (n + 1) + GOAL_DIM
}

/// Rows of relabeled samples in normalized space, one block per column group.
///
/// A GCSL table is a depth-0 table whose goal column holds `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaBatch {
    /// Source row of each entry.
    pub indices: Vec<usize>,
    pub s_t: Vec<f32>,
    pub a_t: Vec<f32>,
    /// One block per sub-goal level, nearest horizon first.
    pub subgoals: Vec<Vec<f32>>,
    pub g: Vec<f32>,
}

/// The full table is just a batch holding every row once.
pub type KappaTable = KappaBatch;

impl KappaBatch {
    fn with_capacity(depth: usize, rows: usize) -> Self {
        Self {
            indices: Vec::with_capacity(rows),
            s_t: Vec::with_capacity(rows * STATE_DIM),
            a_t: Vec::with_capacity(rows * ACTION_DIM),
            subgoals: vec![Vec::with_capacity(rows * STATE_DIM); depth],
            g: Vec::with_capacity(rows * GOAL_DIM),
        }
    }

    /// Normalizes relabeled samples into a table.
    pub fn from_samples(samples: &[KappaSample], norm: &NormStats) -> Result<Self> {
        let depth = samples.first().map_or(0, KappaSample::depth);
        let mut t = Self::with_capacity(depth, samples.len());
        let mut buf = [0.0f32; STATE_DIM];
        for (i, s) in samples.iter().enumerate() {
            if s.depth() != depth {
                return Err(Error::shape(format!(
                    "sample {i} has depth {}, expected {depth}",
                    s.depth()
                )));
            }
            t.indices.push(i);
            push_state(&mut t.s_t, &s.s_t, norm, &mut buf);
            for (block, sg) in t.subgoals.iter_mut().zip(&s.subgoals) {
                push_state(block, sg, norm, &mut buf);
            }
            t.a_t.extend_from_slice(&s.a_t);
            push_goal(&mut t.g, &s.g, norm);
        }
        Ok(t)
    }

    pub fn from_gcsl(samples: &[GcslSample], norm: &NormStats) -> Self {
        let mut t = Self::with_capacity(0, samples.len());
        let mut buf = [0.0f32; STATE_DIM];
        for (i, s) in samples.iter().enumerate() {
            t.indices.push(i);
            push_state(&mut t.s_t, &s.s, norm, &mut buf);
            t.a_t.extend_from_slice(&s.a);
            push_goal(&mut t.g, &s.e, norm);
        }
        t
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.subgoals.len()
    }

    /// Sub-goal block for 0-based level `level` counted farthest first.
    pub fn level(&self, level: usize) -> &[f32] {
        &self.subgoals[self.depth() - 1 - level]
    }

    /// Row-major `κ^(n)` for every row: `(s_t, n farthest sub-goals nearest first, g)`.
    pub fn kappa(&self, n: usize) -> Vec<f32> {
        assert!(n <= self.depth(), "κ^({n}) requested from depth {}", self.depth());
        let w = kappa_width(n);
        let blocks = &self.subgoals[self.depth() - n..];
        let mut out = Vec::with_capacity(self.len() * w);
        for r in 0..self.len() {
            out.extend_from_slice(&self.s_t[r * STATE_DIM..][..STATE_DIM]);
            for b in blocks {
                out.extend_from_slice(&b[r * STATE_DIM..][..STATE_DIM]);
            }
            out.extend_from_slice(&self.g[r * GOAL_DIM..][..GOAL_DIM]);
        }
        out
    }

    /// Copies the listed rows into a new batch.
    pub fn gather(&self, rows: &[usize]) -> Self {
        let mut b = Self::with_capacity(self.depth(), rows.len());
        for &r in rows {
            b.indices.push(self.indices[r]);
            b.s_t.extend_from_slice(&self.s_t[r * STATE_DIM..][..STATE_DIM]);
            b.a_t.extend_from_slice(&self.a_t[r * ACTION_DIM..][..ACTION_DIM]);
            for (dst, src) in b.subgoals.iter_mut().zip(&self.subgoals) {
                dst.extend_from_slice(&src[r * STATE_DIM..][..STATE_DIM]);
            }
            b.g.extend_from_slice(&self.g[r * GOAL_DIM..][..GOAL_DIM]);
        }
        b
    }
}

fn push_state(out: &mut Vec<f32>, x: &[f32; STATE_DIM], norm: &NormStats, buf: &mut [f32; STATE_DIM]) {
    norm.normalize_state(x, buf);
    out.extend_from_slice(buf);
}

fn push_goal(out: &mut Vec<f32>, x: &[f32; GOAL_DIM], norm: &NormStats) {
    let mut buf = [0.0f32; GOAL_DIM];
    norm.normalize_goal(x, &mut buf);
    out.extend_from_slice(&buf);
}

/// Draws `batch_size` rows uniformly with replacement.
pub fn sample_batch<R: Rng + ?Sized>(
    table: &KappaTable,
    batch_size: usize,
    rng: &mut R,
) -> Result<KappaBatch> {
    if table.is_empty() {
        return Err(Error::config("cannot sample from an empty dataset"));
    }
    if batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let rows: Vec<usize> = (0..batch_size)
        .map(|_| rng.random_range(0..table.len()))
        .collect();
    Ok(table.gather(&rows))
}
