//! Recursive sub-goal planning, action extraction and closed-loop rollouts.
//!
//! Planning runs in normalized space. Starting from `κ̂^(0) = (s, g)`, model
//! `f_n` predicts the level `n-1` sub-goal from `κ̂^(n-1)` and the prediction
//! is inserted right after `s`, so `κ̂^(N)` ends up ordered nearest first.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{kappa_width, NormStats, ACTION_DIM, STATE_DIM};
use crate::env::{env_step, success, Goal, Maze, PointState, Trajectory};
use crate::error::{Error, Result};
use crate::learner::{Bundle, DynamicsStack, GoalPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub replan_every: usize,
    pub max_steps: usize,
    /// Actions are clipped to `[-action_clip, action_clip]`.
    pub action_clip: f32,
}

impl PlannerConfig {
    pub fn new(max_steps: usize) -> Self {
        Self {
            replan_every: 1,
            max_steps,
            action_clip: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replan_every == 0 || self.max_steps == 0 {
            return Err(Error::config("replan_every and max_steps must be at least 1"));
        }
        if !(self.action_clip > 0.0) {
            return Err(Error::config("action_clip must be positive"));
        }
        Ok(())
    }
}

/// A stack of level models, level 0 being the farthest horizon.
pub trait LevelModels {
    fn depth(&self) -> usize;
    /// Normalized predictions of level `level` for `batch` rows of `κ^(level)`.
    fn forward_level(&self, level: usize, x: &[f32], batch: usize) -> Result<Vec<f32>>;
}

impl LevelModels for DynamicsStack {
    fn depth(&self) -> usize {
        self.models.len()
    }

    fn forward_level(&self, level: usize, x: &[f32], batch: usize) -> Result<Vec<f32>> {
        self.models[level].forward(x, batch)
    }
}

/// Expands normalized `κ̂^(0)` rows to `κ̂^(N)` rows, one level at a time.
pub fn plan_kappa_batch<M: LevelModels + ?Sized>(
    models: &M,
    kappa0: &[f32],
    batch: usize,
) -> Result<Vec<f32>> {
    if kappa0.len() != batch * kappa_width(0) {
        return Err(Error::config(format!(
            "κ^(0) batch has {} values, expected {}",
            kappa0.len(),
            batch * kappa_width(0)
        )));
    }
    let mut kappa = kappa0.to_vec();
    for level in 0..models.depth() {
        let w = kappa_width(level);
        let pred = models.forward_level(level, &kappa, batch)?;
        if pred.len() != batch * STATE_DIM {
            return Err(Error::config(format!(
                "level {level} returned {} values for {batch} rows",
                pred.len()
            )));
        }
        if pred.iter().any(|v| !v.is_finite()) {
            return Err(Error::Planning(format!("level {level} predicted a non-finite sub-goal")));
        }
        let mut next = Vec::with_capacity(batch * (w + STATE_DIM));
        for r in 0..batch {
            let row = &kappa[r * w..(r + 1) * w];
            next.extend_from_slice(&row[..STATE_DIM]);
            next.extend_from_slice(&pred[r * STATE_DIM..(r + 1) * STATE_DIM]);
            next.extend_from_slice(&row[STATE_DIM..]);
        }
        kappa = next;
    }
    Ok(kappa)
}

/// Normalized `κ^(0) = (s, g)` for one state.
pub fn kappa0(norm: &NormStats, s: &PointState, g: [f32; 2]) -> Vec<f32> {
    let mut out = vec![0.0f32; kappa_width(0)];
    norm.normalize_state(&s.to_array(), &mut out[..STATE_DIM]);
    norm.normalize_goal(&g, &mut out[STATE_DIM..]);
    out
}

/// Planned sub-goals, nearest first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Plan {
    /// In model input space.
    pub normalized: Vec<[f32; 4]>,
    /// In environment units.
    pub subgoals: Vec<[f32; 4]>,
}

impl Plan {
    fn from_kappa(kappa: &[f32], depth: usize, norm: &NormStats) -> Self {
        let normalized: Vec<[f32; 4]> = kappa[STATE_DIM..STATE_DIM * (depth + 1)]
            .chunks_exact(STATE_DIM)
            .map(|c| [c[0], c[1], c[2], c[3]])
            .collect();
        let subgoals = normalized
            .iter()
            .map(|c| {
                let mut raw = [0.0f32; 4];
                norm.denormalize_state(c, &mut raw);
                raw
            })
            .collect();
        Self {
            normalized,
            subgoals,
        }
    }

    /// Normalized `κ̂` for the current state and goal around the cached sub-goals.
    pub fn kappa(&self, norm: &NormStats, s: &PointState, g: [f32; 2]) -> Vec<f32> {
        let k0 = kappa0(norm, s, g);
        let mut out = Vec::with_capacity(kappa_width(self.normalized.len()));
        out.extend_from_slice(&k0[..STATE_DIM]);
        for sg in &self.normalized {
            out.extend_from_slice(sg);
        }
        out.extend_from_slice(&k0[STATE_DIM..]);
        out
    }
}

/// Runs `f_1..f_N` on `(s, g)`; exactly `N` forward passes.
pub fn plan_subgoals<M: LevelModels + ?Sized>(
    models: &M,
    norm: &NormStats,
    s: &PointState,
    g: [f32; 2],
) -> Result<Plan> {
    let kappa = plan_kappa_batch(models, &kappa0(norm, s, g), 1)?;
    Ok(Plan::from_kappa(&kappa, models.depth(), norm))
}

/// `clip(π(κ̂))`; exactly one forward pass.
pub fn act(policy: &GoalPolicy, kappa_hat: &[f32]) -> Result<[f32; 2]> {
    let w = kappa_width(policy.depth);
    if kappa_hat.len() != w || policy.net.input_dim() != w {
        return Err(Error::config(format!(
            "policy expects κ of width {w}, got {}",
            kappa_hat.len()
        )));
    }
    let out = policy.net.forward(kappa_hat, 1)?;
    debug_assert_eq!(out.len(), ACTION_DIM);
    Ok([out[0].clamp(-1.0, 1.0), out[1].clamp(-1.0, 1.0)])
}

/// Anything that can plan and act in a maze.
pub trait Agent {
    /// Fresh plan for `(s, g)`. Agents without a planner return an empty plan.
    fn plan(&self, s: &PointState, g: [f32; 2]) -> Result<Plan>;
    /// Action given the current state and a possibly cached plan.
    fn act(&self, s: &PointState, g: [f32; 2], plan: &Plan) -> Result<[f32; 2]>;
}

impl Agent for Bundle {
    fn plan(&self, s: &PointState, g: [f32; 2]) -> Result<Plan> {
        match &self.stack {
            Some(stack) => plan_subgoals(stack, &self.norm, s, g),
            None => Ok(Plan::default()),
        }
    }

    fn act(&self, s: &PointState, g: [f32; 2], plan: &Plan) -> Result<[f32; 2]> {
        act(&self.policy, &plan.kappa(&self.norm, s, g))
    }
}

/// One decision of a rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTrace {
    pub step: usize,
    pub state: [f32; 4],
    /// Sub-goals in environment units, nearest first.
    pub subgoals: Vec<[f32; 4]>,
    pub goal: [f32; 2],
    pub action: [f32; 2],
    pub replanned: bool,
    pub latency_us: f64,
}

pub fn write_traces_jsonl<W: Write>(mut w: W, traces: &[PlanTrace]) -> std::io::Result<()> {
    for t in traces {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// Visited states and applied actions; the terminal state has no action.
    pub trajectory: Trajectory,
    pub traces: Vec<PlanTrace>,
    pub success: bool,
    /// Why the episode stopped early, if a planning or stepping error occurred.
    pub failure: Option<String>,
}

impl Episode {
    pub fn steps(&self) -> usize {
        self.trajectory.actions.len()
    }
}

/// Plans, acts and steps until the goal is reached or `max_steps` actions were taken.
pub fn rollout<A: Agent + ?Sized>(
    maze: &Maze,
    agent: &A,
    start: PointState,
    goal: &Goal,
    cfg: &PlannerConfig,
) -> Result<Episode> {
    cfg.validate()?;
    let mut ep = Episode {
        trajectory: Trajectory {
            states: vec![start],
            actions: Vec::new(),
        },
        traces: Vec::new(),
        success: success(&start, goal),
        failure: None,
    };
    let mut s = start;
    let mut plan: Option<Plan> = None;
    let mut step = 0;
    while !ep.success && step < cfg.max_steps {
        let t0 = Instant::now();
        let replanned = plan.is_none() || step % cfg.replan_every == 0;
        if replanned {
            match agent.plan(&s, goal.pos) {
                Ok(p) => plan = Some(p),
                Err(e) => {
                    ep.failure = Some(e.to_string());
                    break;
                }
            }
        }
        let current = plan.as_ref().expect("plan set above");
        let a = match agent.act(&s, goal.pos, current) {
            Ok(a) => a.map(|v| v.clamp(-cfg.action_clip, cfg.action_clip)),
            Err(e) => {
                ep.failure = Some(e.to_string());
                break;
            }
        };
        let latency_us = t0.elapsed().as_secs_f64() * 1e6;
        ep.traces.push(PlanTrace {
            step,
            state: s.to_array(),
            subgoals: current.subgoals.clone(),
            goal: goal.pos,
            action: a,
            replanned,
            latency_us,
        });
        s = match env_step(maze, &s, a) {
            Ok(next) => next,
            Err(e) => {
                ep.failure = Some(e.to_string());
                break;
            }
        };
        ep.trajectory.actions.push(a);
        ep.trajectory.states.push(s);
        ep.success = success(&s, goal);
        step += 1;
    }
    Ok(ep)
}


#[cfg(test)]
mod tests {
    use std::cell::RefCell;

    use super::*;
    use crate::dataset::RelabelSpec;
    use crate::learner::{untrained_rsp, TrainConfig};
    use crate::nn::Mlp;

    fn norm() -> NormStats {
        NormStats {
            state_mean: vec![5.0, 1.5, 0.2, -0.1],
            state_std: vec![2.0, 0.5, 0.4, 0.4],
            action_mean: vec![0.0, 0.0],
            action_std: vec![1.0, 1.0],
        }
    }

    fn small_bundle(k: usize, n: usize, seed: u64) -> Bundle {
        let cfg = TrainConfig {
            hidden: vec![16, 16],
            seed,
            ..TrainConfig::desk()
        };
        let (stack, policy) = untrained_rsp(&norm(), &RelabelSpec::new(k, n).unwrap(), &cfg).unwrap();
        Bundle::rsp(stack, policy)
    }

    struct Recorder<'a> {
        inner: &'a DynamicsStack,
        calls: RefCell<Vec<(usize, usize)>>,
    }

    impl LevelModels for Recorder<'_> {
        fn depth(&self) -> usize {
            self.inner.depth()
        }

        fn forward_level(&self, level: usize, x: &[f32], batch: usize) -> Result<Vec<f32>> {
            self.calls.borrow_mut().push((level, x.len() / batch));
            self.inner.forward_level(level, x, batch)
        }
    }

    #[test]
    fn zero_model_predicts_the_state_mean() {
        let mut b = small_bundle(8, 1, 0);
        let stack = b.stack.as_mut().unwrap();
        stack.models[0] = Mlp::zeros(&[6, 4, 4, 4]).unwrap();
        let p = plan_subgoals(stack, &b.norm, &PointState::at_rest([3.3, 1.2]), [7.5, 1.5]).unwrap();
        assert_eq!(p.subgoals, vec![[5.0, 1.5, 0.2, -0.1]]);
    }

    #[test]
    fn levels_run_farthest_first_with_growing_inputs() {
        let b = small_bundle(16, 3, 1);
        let rec = Recorder {
            inner: b.stack.as_ref().unwrap(),
            calls: RefCell::new(Vec::new()),
        };
        let p = plan_subgoals(&rec, &b.norm, &PointState::at_rest([2.0, 1.0]), [9.0, 1.0]).unwrap();
        assert_eq!(*rec.calls.borrow(), vec![(0, 6), (1, 10), (2, 14)]);
        assert_eq!(p.subgoals.len(), 3);
    }

    /// Layer `out = scale * x[offset..offset+4] + bias` through two identity ReLU layers.
    fn picker(input: usize, offset: usize, scale: f32, bias: f32) -> Mlp {
        let mut w0 = vec![0.0; 4 * input];
        for i in 0..4 {
            w0[i * input + offset + i] = 1.0;
        }
        let eye: Vec<f32> = (0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect();
        let w2: Vec<f32> = eye.iter().map(|v| v * scale).collect();
        Mlp::from_parts(
            &[input, 4, 4, 4],
            vec![w0, eye, w2],
            vec![vec![0.0; 4], vec![0.0; 4], vec![bias; 4]],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn hand_built_chain() {
        let stack = DynamicsStack {
            spec: RelabelSpec::new(4, 2).unwrap(),
            // f_1(κ0) = 2 s + 1, f_2(κ1) = 0.5 ŝ_far
            models: vec![picker(6, 0, 2.0, 1.0), picker(10, 4, 0.5, 0.0)],
            norm: NormStats::identity(4, 2),
        };
        let s = PointState {
            pos: [1.0, 2.0],
            vel: [0.5, 0.25],
        };
        let p = plan_subgoals(&stack, &stack.norm, &s, [8.0, 8.0]).unwrap();
        assert_eq!(p.subgoals, vec![[1.5, 2.5, 1.0, 0.75], [3.0, 5.0, 2.0, 1.5]]);
        assert_eq!(
            p.kappa(&stack.norm, &s, [8.0, 8.0]),
            vec![1.0, 2.0, 0.5, 0.25, 1.5, 2.5, 1.0, 0.75, 3.0, 5.0, 2.0, 1.5, 8.0, 8.0]
        );
    }

    #[test]
    fn action_clipping_and_zero_policy() {
        let mut policy = GoalPolicy {
            net: Mlp::zeros(&[10, 4, 4, 2]).unwrap(),
            depth: 1,
            norm: norm(),
        };
        let k = vec![0.3f32; 10];
        assert_eq!(act(&policy, &k).unwrap(), [0.0, 0.0]);
        policy.net.biases_mut(2).copy_from_slice(&[3.0, -7.0]);
        assert_eq!(act(&policy, &k).unwrap(), [1.0, -1.0]);
        assert!(matches!(act(&policy, &[0.0; 6]), Err(Error::Config(_))));
    }

    #[test]
    fn act_is_deterministic() {
        let b = small_bundle(8, 2, 4);
        let k: Vec<f32> = (0..14).map(|i| i as f32 * 0.1 - 0.5).collect();
        assert_eq!(act(&b.policy, &k).unwrap(), act(&b.policy, &k).unwrap());
    }

    #[test]
    fn start_inside_goal_succeeds_immediately() {
        let m = Maze::preset("corridor").unwrap();
        let b = small_bundle(8, 1, 0);
        let s = PointState::at_rest([10.5, 1.5]);
        let ep = rollout(&m, &b, s, &Goal::new([10.7, 1.5]), &PlannerConfig::new(50)).unwrap();
        assert!(ep.success);
        assert_eq!(ep.steps(), 0);
        assert!(ep.traces.is_empty());
    }

    #[test]
    fn cached_plans_only_diverge_after_a_cached_step() {
        let m = Maze::preset("corridor").unwrap();
        let b = small_bundle(8, 2, 7);
        let start = PointState::at_rest([5.5, 1.5]);
        let goal = Goal::new([60.5, 1.5]);
        let every = rollout(&m, &b, start, &goal, &PlannerConfig::new(12)).unwrap();
        let cfg4 = PlannerConfig {
            replan_every: 4,
            ..PlannerConfig::new(12)
        };
        let cached = rollout(&m, &b, start, &goal, &cfg4).unwrap();
        assert_eq!(every.trajectory.actions[0], cached.trajectory.actions[0]);
        assert_eq!(every.traces[0].subgoals, cached.traces[0].subgoals);
        let flags: Vec<bool> = cached.traces.iter().map(|t| t.replanned).collect();
        assert_eq!(&flags[..5], &[true, false, false, false, true]);
        assert_eq!(cached.traces[1].subgoals, cached.traces[0].subgoals);
        assert!(every.traces.iter().all(|t| t.replanned));
        assert!(every.trajectory.replays_exactly(&m));
        assert!(cached.trajectory.replays_exactly(&m));
    }

    struct Broken;

    impl LevelModels for Broken {
        fn depth(&self) -> usize {
            1
        }

        fn forward_level(&self, _: usize, _: &[f32], batch: usize) -> Result<Vec<f32>> {
            Ok(vec![f32::NAN; batch * STATE_DIM])
        }
    }

    #[test]
    fn non_finite_predictions_are_planning_errors() {
        let r = plan_subgoals(&Broken, &norm(), &PointState::at_rest([1.5, 1.5]), [3.0, 1.5]);
        assert!(matches!(r, Err(Error::Planning(_))));
    }

    #[test]
    fn traces_export_as_json_lines() {
        let m = Maze::preset("corridor").unwrap();
        let b = small_bundle(8, 1, 0);
        let ep = rollout(&m, &b, PointState::at_rest([5.5, 1.5]), &Goal::new([40.5, 1.5]), &PlannerConfig::new(3)).unwrap();
        let mut out = Vec::new();
        write_traces_jsonl(&mut out, &ep.traces).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 3);
        let first: PlanTrace = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first, ep.traces[0]);
    }
}
