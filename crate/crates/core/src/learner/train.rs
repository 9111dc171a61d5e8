//! Supervised training of the dynamics stack, the goal-conditioned policy and
//! the flat GCSL baseline.
//!
//! Every model is a head reading one `κ^(n)` block of a shared minibatch and
//! regressing one target column under MSE. All heads step once per iteration
//! from the same batch. Inputs only ever come from dataset columns.

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    gcsl_relabel_dataset, kappa_width, relabel_dataset, sample_batch, Dataset, KappaBatch,
    KappaTable, NormStats, RelabelSpec, ACTION_DIM, STATE_DIM,
};
use crate::error::{Error, Result};
use crate::nn::{gaussian_nll_as_mse, AdamState, Mlp, TrainSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_max: f64,
    pub total_steps: u64,
    pub dropout: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Full-scale settings: batch 16384, two 1024-unit hidden layers.
    fn default() -> Self {
        Self {
            batch_size: 16384,
            lr_max: 1e-3,
            total_steps: 100_000,
            dropout: 0.0,
            hidden: vec![1024, 1024],
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Desk-scale settings: two 256-unit hidden layers, small batches.
    pub fn desk() -> Self {
        Self {
            batch_size: 256,
            total_steps: 20_000,
            hidden: vec![256, 256],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.total_steps == 0 {
            return Err(Error::config("batch_size and total_steps must be positive"));
        }
        if !(self.lr_max > 0.0 && self.lr_max.is_finite()) {
            return Err(Error::config(format!("lr_max must be positive, got {}", self.lr_max)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.hidden.len() != 2 || self.hidden.contains(&0) {
            return Err(Error::config(format!(
                "exactly two positive hidden widths are required, got {:?}",
                self.hidden
            )));
        }
        Ok(())
    }

    fn dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend_from_slice(&self.hidden);
        d.push(output);
        d
    }
}

/// Coarse-grained dynamics models `f_1..f_N`, farthest horizon first.
///
/// `f_n` maps normalized `κ^(n-1)` to the normalized sub-goal `K/2^(n-1)` steps ahead.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsStack {
    pub spec: RelabelSpec,
    pub models: Vec<Mlp>,
    pub norm: NormStats,
}

impl DynamicsStack {
    pub fn depth(&self) -> usize {
        self.models.len()
    }

    /// Checks that model `f_n` reads `κ^(n-1)` and emits a state.
    pub fn validate(&self) -> Result<()> {
        if self.models.len() != self.spec.depth {
            return Err(Error::config(format!(
                "stack holds {} models but N={}",
                self.models.len(),
                self.spec.depth
            )));
        }
        for (i, m) in self.models.iter().enumerate() {
            if m.input_dim() != kappa_width(i) || m.output_dim() != STATE_DIM {
                return Err(Error::config(format!(
                    "f_{} has dims {}->{}, expected {}->{STATE_DIM}",
                    i + 1,
                    m.input_dim(),
                    m.output_dim(),
                    kappa_width(i)
                )));
            }
        }
        Ok(())
    }
}

/// Action head reading normalized `κ^(depth)`. GCSL policies have depth 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalPolicy {
    pub net: Mlp,
    pub depth: usize,
    pub norm: NormStats,
}

impl GoalPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.net.input_dim() != kappa_width(self.depth) || self.net.output_dim() != ACTION_DIM {
            return Err(Error::config(format!(
                "policy has dims {}->{}, expected {}->{ACTION_DIM}",
                self.net.input_dim(),
                self.net.output_dim(),
                kappa_width(self.depth)
            )));
        }
        Ok(())
    }
}

/// Per-step training losses of every model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub model_ids: Vec<String>,
    /// `(step, index into model_ids, loss)`.
    pub rows: Vec<(u64, usize, f32)>,
}

impl LossTrace {
    /// Losses of one model in step order.
    pub fn series(&self, model_id: &str) -> Vec<f32> {
        let Some(k) = self.model_ids.iter().position(|m| m == model_id) else {
            return Vec::new();
        };
        self.rows.iter().filter(|r| r.1 == k).map(|r| r.2).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "model_id", "loss"])?;
        for &(step, k, loss) in &self.rows {
            out.serialize((step, &self.model_ids[k], loss))?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    /// Sub-goal at 0-based level counted farthest first.
    Level(usize),
    Action,
}

/// Seed tag for the stream a head draws its init and dropout masks from.
/// Batches use tag 0, so heads never share a stream with the sampler.
fn head_tag(target: Target) -> u64 {
    match target {
        Target::Level(l) => 1 + l as u64,
        Target::Action => 1 << 32,
    }
}

struct Head {
    id: String,
    kappa_n: usize,
    target: Target,
    net: Mlp,
    adam: AdamState,
    rng: ChaCha8Rng,
}

impl Head {
    fn new(id: String, kappa_n: usize, target: Target, cfg: &TrainConfig) -> Result<Self> {
        let out = match target {
            Target::Level(_) => STATE_DIM,
            Target::Action => ACTION_DIM,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(head_tag(target));
        let net = Mlp::new(&cfg.dims(kappa_width(kappa_n), out), rng.next_u64())?
            .with_dropout(cfg.dropout)?;
        let adam = AdamState::for_mlp(&net);
        Ok(Self {
            id,
            kappa_n,
            target,
            net,
            adam,
            rng,
        })
    }

    fn step(&mut self, batch: &KappaBatch, step: u64, lr: f64) -> Result<f32> {
        let x = batch.kappa(self.kappa_n);
        let target = match self.target {
            Target::Level(l) => batch.level(l),
            Target::Action => &batch.a_t,
        };
        let (pred, cache) = self.net.forward_train(&x, batch.len(), Some(&mut self.rng))?;
        let (loss, d_pred) = gaussian_nll_as_mse(&pred, target)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                step,
                what: format!("{} loss", self.id),
            });
        }
        let grads = self.net.backward(&cache, &d_pred)?;
        self.adam.step(&mut self.net, &grads, lr).map_err(|e| match e {
            Error::NonFinite { what, .. } => Error::NonFinite {
                step,
                what: format!("{}: {what}", self.id),
            },
            other => other,
        })?;
        Ok(loss as f32)
    }
}

fn run(table: &KappaTable, heads: &mut [Head], cfg: &TrainConfig) -> Result<LossTrace> {
    cfg.validate()?;
    for h in heads.iter() {
        if let Target::Level(l) = h.target {
            if l >= table.depth() {
                return Err(Error::config(format!(
                    "{} needs sub-goal level {l} but samples carry {}",
                    h.id,
                    table.depth()
                )));
            }
        }
        if h.kappa_n > table.depth() {
            return Err(Error::config(format!(
                "{} reads κ^({}) but samples carry depth {}",
                h.id,
                h.kappa_n,
                table.depth()
            )));
        }
    }
    let schedule = TrainSchedule::cosine(cfg.lr_max, cfg.total_steps);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    batch_rng.set_stream(0);
    let mut trace = LossTrace {
        model_ids: heads.iter().map(|h| h.id.clone()).collect(),
        rows: Vec::with_capacity(cfg.total_steps as usize * heads.len()),
    };
    for step in 0..cfg.total_steps {
        let batch = sample_batch(table, cfg.batch_size, &mut batch_rng)?;
        let lr = schedule.lr(step);
        let losses: Vec<f32> = heads
            .par_iter_mut()
            .map(|h| h.step(&batch, step, lr))
            .collect::<Result<_>>()?;
        trace
            .rows
            .extend(losses.into_iter().enumerate().map(|(k, l)| (step, k, l)));
    }
    Ok(trace)
}

fn stack_heads(spec: &RelabelSpec, cfg: &TrainConfig) -> Result<Vec<Head>> {
    spec.validate()?;
    (0..spec.depth)
        .map(|l| Head::new(format!("f{}", l + 1), l, Target::Level(l), cfg))
        .collect()
}

fn policy_head(id: &str, depth: usize, cfg: &TrainConfig) -> Result<Head> {
    Head::new(id.to_owned(), depth, Target::Action, cfg)
}

fn check_depth(table: &KappaTable, spec: &RelabelSpec) -> Result<()> {
    if table.depth() != spec.depth {
        return Err(Error::config(format!(
            "samples were relabeled with depth {} but N={}",
            table.depth(),
            spec.depth
        )));
    }
    Ok(())
}

fn into_stack(heads: Vec<Head>, spec: &RelabelSpec, norm: &NormStats) -> DynamicsStack {
    DynamicsStack {
        spec: *spec,
        models: heads.into_iter().map(|h| h.net).collect(),
        norm: norm.clone(),
    }
}

/// Trains `f_1..f_N` under teacher forcing.
pub fn train_dynamics_stack(
    table: &KappaTable,
    norm: &NormStats,
    spec: &RelabelSpec,
    cfg: &TrainConfig,
) -> Result<(DynamicsStack, LossTrace)> {
    check_depth(table, spec)?;
    let mut heads = stack_heads(spec, cfg)?;
    let trace = run(table, &mut heads, cfg)?;
    Ok((into_stack(heads, spec, norm), trace))
}

/// Trains `π(a_t | κ^(N))` on ground-truth sub-goals.
pub fn train_policy(
    table: &KappaTable,
    norm: &NormStats,
    spec: &RelabelSpec,
    cfg: &TrainConfig,
) -> Result<(GoalPolicy, LossTrace)> {
    check_depth(table, spec)?;
    let mut heads = vec![policy_head("pi", spec.depth, cfg)?];
    let trace = run(table, &mut heads, cfg)?;
    let net = heads.pop().expect("one head").net;
    Ok((
        GoalPolicy {
            net,
            depth: spec.depth,
            norm: norm.clone(),
        },
        trace,
    ))
}

/// Trains the stack and the policy jointly, one step each per shared batch.
///
/// Each model draws from its own random stream, so the result equals training
/// the stack and the policy separately with the same config.
pub fn train_rsp(
    table: &KappaTable,
    norm: &NormStats,
    spec: &RelabelSpec,
    cfg: &TrainConfig,
) -> Result<(DynamicsStack, GoalPolicy, LossTrace)> {
    check_depth(table, spec)?;
    let mut heads = stack_heads(spec, cfg)?;
    heads.push(policy_head("pi", spec.depth, cfg)?);
    let trace = run(table, &mut heads, cfg)?;
    let pi = heads.pop().expect("policy head");
    let policy = GoalPolicy {
        net: pi.net,
        depth: spec.depth,
        norm: norm.clone(),
    };
    Ok((into_stack(heads, spec, norm), policy, trace))
}

/// Freshly initialized stack and policy with the shapes `spec` and `cfg` imply.
pub fn untrained_rsp(
    norm: &NormStats,
    spec: &RelabelSpec,
    cfg: &TrainConfig,
) -> Result<(DynamicsStack, GoalPolicy)> {
    cfg.validate()?;
    let heads = stack_heads(spec, cfg)?;
    let pi = policy_head("pi", spec.depth, cfg)?;
    let policy = GoalPolicy {
        net: pi.net,
        depth: spec.depth,
        norm: norm.clone(),
    };
    Ok((into_stack(heads, spec, norm), policy))
}

/// Trains the flat `π(a | s, e)` baseline on a depth-0 table.
pub fn train_gcsl(
    table: &KappaTable,
    norm: &NormStats,
    cfg: &TrainConfig,
) -> Result<(GoalPolicy, LossTrace)> {
    if table.depth() != 0 {
        return Err(Error::config("GCSL expects a depth-0 table of (s, a, e) rows"));
    }
    let mut heads = vec![policy_head("gcsl", 0, cfg)?];
    let trace = run(table, &mut heads, cfg)?;
    let net = heads.pop().expect("one head").net;
    Ok((
        GoalPolicy {
            net,
            depth: 0,
            norm: norm.clone(),
        },
        trace,
    ))
}

/// Relabels a dataset for RSP and normalizes it with the dataset's stats.
pub fn rsp_table(ds: &Dataset, spec: &RelabelSpec, seed: u64) -> Result<KappaTable> {
    let samples = relabel_dataset(&ds.trajectories, spec, seed)?;
    if samples.is_empty() {
        return Err(Error::config("no trajectory has at least two states"));
    }
    KappaTable::from_samples(&samples, &ds.norm)
}

/// Relabels a dataset for GCSL.
pub fn gcsl_table(ds: &Dataset, seed: u64) -> Result<KappaTable> {
    let samples = gcsl_relabel_dataset(&ds.trajectories, seed);
    if samples.is_empty() {
        return Err(Error::config("no trajectory has at least two states"));
    }
    Ok(KappaTable::from_gcsl(&samples, &ds.norm))
}

/// Mean squared error of `net(κ^(n))` against a target block over a whole table.
pub fn table_mse(net: &Mlp, table: &KappaTable, kappa_n: usize, target: &[f32]) -> Result<f64> {
    let pred = net.forward(&table.kappa(kappa_n), table.len())?;
    Ok(gaussian_nll_as_mse(&pred, target)?.0)
}
