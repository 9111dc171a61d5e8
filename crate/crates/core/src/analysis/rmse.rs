//! Compounding-error study: chain skip-step predictions and compare them with
//! ground truth at multiples of the lowest horizon.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{NormStats, STATE_DIM};
use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::learner::DynamicsStack;
use crate::planner::plan_kappa_batch;

/// Predicts the state `horizon()` steps ahead, in environment units.
pub trait SkipStepPredictor {
    fn horizon(&self) -> usize;
    fn label(&self) -> String;
    /// `batch` rows of next states for `batch` rows of states and goals.
    fn predict_next(&self, states: &[f32], goals: &[f32], batch: usize) -> Result<Vec<f32>>;
}

impl SkipStepPredictor for DynamicsStack {
    fn horizon(&self) -> usize {
        self.spec.lowest_horizon()
    }

    fn label(&self) -> String {
        self.spec.label()
    }

    /// Full recursive plan; the nearest sub-goal is the prediction.
    fn predict_next(&self, states: &[f32], goals: &[f32], batch: usize) -> Result<Vec<f32>> {
        let k0 = normalized_kappa0(&self.norm, states, goals, batch);
        let kappa = plan_kappa_batch(self, &k0, batch)?;
        let w = kappa.len() / batch.max(1);
        let mut out = vec![0.0f32; batch * STATE_DIM];
        for r in 0..batch {
            let nearest = &kappa[r * w + STATE_DIM..r * w + 2 * STATE_DIM];
            self.norm
                .denormalize_state(nearest, &mut out[r * STATE_DIM..(r + 1) * STATE_DIM]);
        }
        Ok(out)
    }
}

fn normalized_kappa0(norm: &NormStats, states: &[f32], goals: &[f32], batch: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; batch * (STATE_DIM + 2)];
    for r in 0..batch {
        let row = &mut out[r * (STATE_DIM + 2)..(r + 1) * (STATE_DIM + 2)];
        norm.normalize_state(&states[r * STATE_DIM..(r + 1) * STATE_DIM], &mut row[..STATE_DIM]);
        norm.normalize_goal(&goals[r * 2..(r + 1) * 2], &mut row[STATE_DIM..]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseCurve {
    pub label: String,
    pub offsets: Vec<usize>,
    pub rmse: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Rollouts (or seeds, for averaged curves) behind each point.
    pub count: usize,
}

impl RmseCurve {
    /// Pointwise mean over curves with identical offsets; stderr across curves.
    pub fn average(curves: &[RmseCurve]) -> Result<RmseCurve> {
        let first = curves
            .first()
            .ok_or_else(|| Error::config("no curves to average"))?;
        if curves.iter().any(|c| c.offsets != first.offsets) {
            return Err(Error::config("curves have different offsets"));
        }
        let n = curves.len() as f64;
        let mut rmse = Vec::with_capacity(first.offsets.len());
        let mut stderr = Vec::with_capacity(first.offsets.len());
        for j in 0..first.offsets.len() {
            let m = curves.iter().map(|c| c.rmse[j]).sum::<f64>() / n;
            let var = if curves.len() > 1 {
                curves.iter().map(|c| (c.rmse[j] - m).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            rmse.push(m);
            stderr.push((var / n).sqrt());
        }
        Ok(RmseCurve {
            label: first.label.clone(),
            offsets: first.offsets.clone(),
            rmse,
            stderr,
            count: curves.len(),
        })
    }

    pub fn at(&self, offset: usize) -> Option<f64> {
        self.offsets.iter().position(|&o| o == offset).map(|j| self.rmse[j])
    }

    /// Mean RMSE over offsets in `[lo, hi]`.
    pub fn mean_between(&self, lo: usize, hi: usize) -> Option<f64> {
        let v: Vec<f64> = self
            .offsets
            .iter()
            .zip(&self.rmse)
            .filter(|(&o, _)| o >= lo && o <= hi)
            .map(|(_, &r)| r)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Chains predictions from every `stride`-th start with room for `h_max` steps.
///
/// Each chain is seeded with the true `s_t` and the trajectory's final position
/// as goal; only the predicted lowest-level state is fed forward. The value at
/// offset `j·k` is `sqrt(mean over rollouts and state dims of squared error)`.
pub fn rollout_rmse<P: SkipStepPredictor + ?Sized>(
    predictor: &P,
    trajs: &[Trajectory],
    h_max: usize,
    stride: usize,
) -> Result<RmseCurve> {
    let k = predictor.horizon();
    if k == 0 || h_max == 0 || h_max % k != 0 {
        return Err(Error::config(format!(
            "H_max={h_max} must be a positive multiple of the lowest horizon k={k}"
        )));
    }
    if stride == 0 {
        return Err(Error::config("start stride must be positive"));
    }
    // (trajectory, start) pairs
    let starts: Vec<(usize, usize)> = trajs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| {
            let last = t.len().saturating_sub(h_max + 1);
            let n = if t.len() > h_max { last / stride + 1 } else { 0 };
            (0..n).map(move |j| (i, j * stride))
        })
        .collect();
    if starts.is_empty() {
        return Err(Error::config(format!(
            "no evaluation trajectory is longer than H_max={h_max}"
        )));
    }
    let batch = starts.len();
    let mut cur = Vec::with_capacity(batch * STATE_DIM);
    let mut goals = Vec::with_capacity(batch * 2);
    for &(i, t) in &starts {
        cur.extend_from_slice(&trajs[i].states[t].to_array());
        goals.extend_from_slice(&trajs[i].achieved_goal());
    }
    let steps = h_max / k;
    let mut offsets = Vec::with_capacity(steps);
    let mut rmse = Vec::with_capacity(steps);
    let mut stderr = Vec::with_capacity(steps);
    for j in 1..=steps {
        cur = predictor.predict_next(&cur, &goals, batch)?;
        let off = j * k;
        let per_rollout: Vec<f64> = starts
            .iter()
            .enumerate()
            .map(|(r, &(i, t))| {
                let truth = trajs[i].states[t + off].to_array();
                (0..STATE_DIM)
                    .map(|d| (cur[r * STATE_DIM + d] as f64 - truth[d] as f64).powi(2))
                    .sum::<f64>()
                    / STATE_DIM as f64
            })
            .collect();
        let n = batch as f64;
        let mse = per_rollout.iter().sum::<f64>() / n;
        let var = if batch > 1 {
            per_rollout.iter().map(|e| (e - mse).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let r = mse.sqrt();
        offsets.push(off);
        rmse.push(r);
        stderr.push(if r > 0.0 { (var / n).sqrt() / (2.0 * r) } else { 0.0 });
    }
    Ok(RmseCurve {
        label: predictor.label(),
        offsets,
        rmse,
        stderr,
        count: batch,
    })
}

/// `config,offset,rmse,stderr`.
pub fn write_rmse_csv<W: Write>(w: W, curves: &[RmseCurve]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["config", "offset", "rmse", "stderr"])?;
    for c in curves {
        for j in 0..c.offsets.len() {
            out.serialize((&c.label, c.offsets[j], c.rmse[j], c.stderr[j]))?;
        }
    }
    out.flush()?;
    Ok(())
}
