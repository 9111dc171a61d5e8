//! Skip-step hindsight relabeling.
//!
//! A spec with top horizon `K` and depth `N` attaches `N` sub-goal states to
//! every timestep `t`: level `n` (0-based, farthest first) sits at offset
//! `K / 2^n`, clamped to the final index. Samples store them nearest first,
//! which is also the order they appear in model inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::Trajectory;
use crate::error::{Error, Result};

/// Where the conditioning goal of a relabeled sample comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalMode {
    /// Final position of the trajectory.
    #[default]
    FinalState,
    /// Position of a uniformly drawn state at index `>= min(t + K, T - 1)`.
    FutureRandom,
}

impl std::str::FromStr for GoalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "final_state" => Ok(Self::FinalState),
            "future_random" => Ok(Self::FutureRandom),
            other => Err(Error::config(format!(
                "unknown goal mode `{other}` (expected final_state or future_random)"
            ))),
        }
    }
}

impl std::fmt::Display for GoalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::FinalState => "final_state",
            Self::FutureRandom => "future_random",
        })
    }
}

/// Top skip step `K`, recursion depth `N` and goal source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelabelSpec {
    #[serde(rename = "K")]
    pub top_horizon: usize,
    #[serde(rename = "N")]
    pub depth: usize,
    #[serde(default)]
    pub goal_mode: GoalMode,
}

impl RelabelSpec {
    /// Validated spec with the default goal mode.
    pub fn new(top_horizon: usize, depth: usize) -> Result<Self> {
        let spec = Self {
            top_horizon,
            depth,
            goal_mode: GoalMode::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_goal_mode(mut self, mode: GoalMode) -> Self {
        self.goal_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        horizons(self).map(|_| ())
    }

    /// Lowest-level skip step `K / 2^(N-1)`.
    pub fn lowest_horizon(&self) -> usize {
        self.top_horizon >> (self.depth - 1)
    }

    /// Label like `[8,16,32]`: horizons in increasing order.
    pub fn label(&self) -> String {
        let mut h = horizons(self).unwrap_or_default();
        h.reverse();
        let parts: Vec<String> = h.iter().map(usize::to_string).collect();
        format!("[{}]", parts.join(","))
    }
}

/// Sub-goal offsets `[K, K/2, ..., K/2^(N-1)]` for levels `0..N`.
pub fn horizons(spec: &RelabelSpec) -> Result<Vec<usize>> {
    let (k, n) = (spec.top_horizon, spec.depth);
    if k == 0 || n == 0 {
        return Err(Error::config(format!(
            "K and N must be positive (got K={k}, N={n})"
        )));
    }
    if n > 63 || k % (1usize << (n - 1)) != 0 {
        return Err(Error::config(format!(
            "K={k} must be divisible by 2^(N-1) = 2^{} so the lowest horizon is integral",
            n - 1
        )));
    }
    Ok((0..n).map(|level| k >> level).collect())
}

/// Sub-goal indices for timestep `t` of a length-`len` trajectory, nearest first.
pub fn subgoal_indices(len: usize, t: usize, horizons: &[usize]) -> Vec<usize> {
    horizons
        .iter()
        .rev()
        .map(|&h| (t + h).min(len - 1))
        .collect()
}

/// One relabeled training tuple `(a_t, κ^(N))`.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaSample {
    pub t: usize,
    pub s_t: [f32; 4],
    pub a_t: [f32; 2],
    /// `N` sub-goal states, nearest horizon first.
    pub subgoals: Vec<[f32; 4]>,
    /// Trajectory indices of `subgoals`.
    pub subgoal_indices: Vec<usize>,
    pub g: [f32; 2],
    pub goal_index: usize,
}

impl KappaSample {
    pub fn depth(&self) -> usize {
        self.subgoals.len()
    }

    /// Flattened `κ^(n) = (s_t, sub-goals of the n farthest levels nearest first, g)`.
    ///
    /// `κ^(0) = (s_t, g)` and `κ^(n)` inserts the level-`n-1` state right after `s_t`.
    pub fn kappa(&self, n: usize) -> Vec<f32> {
        assert!(n <= self.depth(), "κ^({n}) requested from a depth-{} sample", self.depth());
        let mut out = Vec::with_capacity(4 * (n + 1) + 2);
        out.extend_from_slice(&self.s_t);
        for sg in &self.subgoals[self.depth() - n..] {
            out.extend_from_slice(sg);
        }
        out.extend_from_slice(&self.g);
        out
    }
}

/// Relabels every timestep `t in [0, T-1]` of a trajectory.
///
/// Trajectories with fewer than two states are skipped with a warning.
pub fn relabel_trajectory<R: Rng + ?Sized>(
    traj: &Trajectory,
    spec: &RelabelSpec,
    rng: &mut R,
) -> Result<Vec<KappaSample>> {
    let hs = horizons(spec)?;
    let len = traj.len();
    if len < 2 {
        log::warn!("skipping trajectory with {len} state(s) during relabeling");
        return Ok(Vec::new());
    }
    if traj.actions.len() != len {
        return Err(Error::shape(format!(
            "trajectory has {len} states but {} actions",
            traj.actions.len()
        )));
    }
    let final_idx = len - 1;
    let mut out = Vec::with_capacity(len);
    for t in 0..len {
        let idx = subgoal_indices(len, t, &hs);
        let goal_index = match spec.goal_mode {
            GoalMode::FinalState => final_idx,
            GoalMode::FutureRandom => {
                let lo = (t + spec.top_horizon).min(final_idx);
                rng.random_range(lo..=final_idx)
            }
        };
        out.push(KappaSample {
            t,
            s_t: traj.states[t].to_array(),
            a_t: traj.actions[t],
            subgoals: idx.iter().map(|&i| traj.states[i].to_array()).collect(),
            subgoal_indices: idx,
            g: traj.states[goal_index].pos,
            goal_index,
        });
    }
    Ok(out)
}

/// Flat goal-conditioned sample `(s, a, e)` for the GCSL baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct GcslSample {
    pub t: usize,
    pub s: [f32; 4],
    pub a: [f32; 2],
    pub e: [f32; 2],
    pub goal_index: usize,
}

/// For each `t < T-1`, draws the goal from a uniform index in `(t, T-1]`.
pub fn gcsl_relabel<R: Rng + ?Sized>(traj: &Trajectory, rng: &mut R) -> Vec<GcslSample> {
    let len = traj.len();
    if len < 2 {
        log::warn!("skipping trajectory with {len} state(s) during relabeling");
        return Vec::new();
    }
    (0..len - 1)
        .map(|t| {
            let j = rng.random_range(t + 1..len);
            GcslSample {
                t,
                s: traj.states[t].to_array(),
                a: traj.actions[t],
                e: traj.states[j].pos,
                goal_index: j,
            }
        })
        .collect()
}

/// Relabels every trajectory; trajectory `i` draws goals from stream `(seed, i)`.
pub fn relabel_dataset(
    trajs: &[Trajectory],
    spec: &RelabelSpec,
    seed: u64,
) -> Result<Vec<KappaSample>> {
    let parts: Vec<Vec<KappaSample>> = trajs
        .par_iter()
        .enumerate()
        .map(|(i, t)| relabel_trajectory(t, spec, &mut stream(seed, i)))
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

/// GCSL relabeling of every trajectory with per-trajectory streams.
pub fn gcsl_relabel_dataset(trajs: &[Trajectory], seed: u64) -> Vec<GcslSample> {
    let parts: Vec<Vec<GcslSample>> = trajs
        .par_iter()
        .enumerate()
        .map(|(i, t)| gcsl_relabel(t, &mut stream(seed, i)))
        .collect();
    parts.concat()
}

fn stream(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::PointState;

    fn ramp(len: usize) -> Trajectory {
        Trajectory {
            states: (0..len)
                .map(|i| PointState {
                    pos: [i as f32, 0.5],
                    vel: [0.0, 0.0],
                })
                .collect(),
            actions: vec![[0.0, 0.0]; len],
        }
    }

    #[test]
    fn horizon_examples() {
        assert_eq!(horizons(&RelabelSpec::new(32, 3).unwrap()).unwrap(), vec![32, 16, 8]);
        assert_eq!(horizons(&RelabelSpec::new(32, 1).unwrap()).unwrap(), vec![32]);
        assert_eq!(horizons(&RelabelSpec::new(8, 4).unwrap()).unwrap(), vec![8, 4, 2, 1]);
    }

    #[test]
    fn horizon_errors() {
        assert!(RelabelSpec::new(32, 7).is_err());
        assert!(RelabelSpec::new(12, 4).is_err());
        assert!(RelabelSpec::new(0, 1).is_err());
        assert!(RelabelSpec::new(8, 0).is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(RelabelSpec::new(32, 1).unwrap().label(), "[32]");
        assert_eq!(RelabelSpec::new(32, 3).unwrap().label(), "[8,16,32]");
    }

    #[test]
    fn interior_sample_indices() {
        let spec = RelabelSpec::new(32, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = ramp(100);
        let samples = relabel_trajectory(&traj, &spec, &mut rng).unwrap();
        assert_eq!(samples.len(), 100);
        let s = &samples[50];
        assert_eq!(s.subgoal_indices, vec![66, 82]);
        assert_eq!(
            s.kappa(2),
            vec![50.0, 0.5, 0.0, 0.0, 66.0, 0.5, 0.0, 0.0, 82.0, 0.5, 0.0, 0.0, 99.0, 0.5]
        );
    }

    #[test]
    fn end_of_trajectory_clamps() {
        let spec = RelabelSpec::new(32, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let samples = relabel_trajectory(&ramp(60), &spec, &mut rng).unwrap();
        assert_eq!(samples[50].subgoal_indices, vec![59, 59]);
    }

    #[test]
    fn kappa_nesting_inserts_one_state() {
        let spec = RelabelSpec::new(16, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = &relabel_trajectory(&ramp(40), &spec, &mut rng).unwrap()[3];
        for n in 1..=3 {
            let (big, small) = (s.kappa(n), s.kappa(n - 1));
            assert_eq!(big.len(), small.len() + 4);
            assert_eq!(&big[..4], &small[..4]);
            assert_eq!(&big[8..], &small[4..]);
        }
    }

    #[test]
    fn future_random_goal_window() {
        let spec = RelabelSpec::new(8, 1)
            .unwrap()
            .with_goal_mode(GoalMode::FutureRandom);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in relabel_trajectory(&ramp(30), &spec, &mut rng).unwrap() {
            assert!(s.goal_index >= (s.t + 8).min(29) && s.goal_index <= 29);
            assert_eq!(s.g[0], s.goal_index as f32);
        }
    }

    #[test]
    fn short_trajectories_are_skipped() {
        let spec = RelabelSpec::new(8, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(relabel_trajectory(&ramp(1), &spec, &mut rng).unwrap().is_empty());
        assert!(gcsl_relabel(&ramp(1), &mut rng).is_empty());
    }

    #[test]
    fn gcsl_goals_lie_strictly_ahead() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let traj = ramp(12);
        let samples = gcsl_relabel(&traj, &mut rng);
        assert_eq!(samples.len(), 11);
        for s in &samples {
            assert!(s.goal_index > s.t && s.goal_index <= 11);
        }
        assert_eq!(samples[10].goal_index, 11);
    }
}
