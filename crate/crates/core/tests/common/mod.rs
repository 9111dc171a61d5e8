//! Independent reference computations shared by the integration tests and
//! the acceptance suite.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsp_core::env::{Maze, PointState, Trajectory};
use rsp_core::nn::Mlp;

/// Scalar loss `0.5 * mean((y - t)^2)` over all outputs, matching the trainer's
/// normalization (unit-variance Gaussian NLL up to a constant).
pub fn mse_loss(y: &[f64], t: &[f64]) -> f64 {
    0.5 * y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

/// Worst relative disagreement between `backward` and central differences
/// of [`mse_loss`] over every parameter, with dropout masks held fixed.
pub fn gradient_check(
    net: &Mlp<f64>,
    x: &[f64],
    batch: usize,
    target: &[f64],
    masks: &[Option<Vec<f64>>],
) -> f64 {
    let loss = |m: &Mlp<f64>| {
        let (y, _) = m.forward_with_masks(x, batch, masks.to_vec()).unwrap();
        mse_loss(&y, target)
    };
    let (y, cache) = net.forward_with_masks(x, batch, masks.to_vec()).unwrap();
    let d_out: Vec<f64> = y
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b) / y.len() as f64)
        .collect();
    let grads = net.backward(&cache, &d_out).unwrap();
    let analytic: Vec<f64> = grads.slices().concat();

    let h = 1e-5;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    let mut k = 0;
    for s in 0..net.param_slices().len() {
        for i in 0..net.param_slices()[s].len() {
            let orig = probe.param_slices_mut()[s][i];
            probe.param_slices_mut()[s][i] = orig + h;
            let up = loss(&probe);
            probe.param_slices_mut()[s][i] = orig - h;
            let down = loss(&probe);
            probe.param_slices_mut()[s][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k];
            // floor keeps gradients that are zero up to roundoff from dividing by ~0
            let scale = a.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max((a - numeric).abs() / scale);
            k += 1;
        }
    }
    assert_eq!(k, analytic.len());
    worst
}

/// Horizons `K, K/2, ...` for depth `n`, or `None` when one is not integral.
pub fn brute_horizons(k: usize, n: usize) -> Option<Vec<usize>> {
    if k == 0 || n == 0 {
        return None;
    }
    let mut out = Vec::new();
    let mut h = k as f64;
    for _ in 0..n {
        if h.fract() != 0.0 || h < 1.0 {
            return None;
        }
        out.push(h as usize);
        h /= 2.0;
    }
    Some(out)
}

/// Sub-goal indices of step `t`, nearest first, enumerated from the definition.
pub fn brute_subgoal_indices(len: usize, t: usize, k: usize, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = brute_horizons(k, n)
        .unwrap()
        .into_iter()
        .map(|h| if t + h > len - 1 { len - 1 } else { t + h })
        .collect();
    idx.reverse();
    idx
}

/// `κ^(m)` of step `t` built directly from trajectory states.
pub fn brute_kappa(traj: &Trajectory, t: usize, k: usize, n: usize, m: usize, goal_index: usize) -> Vec<f32> {
    let mut v: Vec<f32> = traj.states[t].to_array().to_vec();
    // the m farthest levels are levels 1..=m; nearest first means level m first
    let hs = brute_horizons(k, n).unwrap();
    for level in (0..m).rev() {
        let j = (t + hs[level]).min(traj.len() - 1);
        v.extend_from_slice(&traj.states[j].to_array());
    }
    v.extend_from_slice(&traj.states[goal_index].pos);
    v
}

/// Random state/action trajectory (states need not be physically consistent).
pub fn random_trajectory(rng: &mut ChaCha8Rng, len: usize) -> Trajectory {
    Trajectory {
        states: (0..len)
            .map(|_| PointState {
                pos: [rng.random_range(1.0..9.0), rng.random_range(1.0..9.0)],
                vel: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            })
            .collect(),
        actions: (0..len)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect(),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two-pass (mean, then centered second moment) population statistics per column.
pub fn two_pass_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let std: Vec<f64> = (0..d)
        .map(|j| (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    (mean, std)
}

/// Longest BFS distance between two open cells.
pub fn diameter(maze: &Maze) -> u32 {
    maze.open_cells()
        .iter()
        .map(|&c| maze.bfs_distances(c).into_iter().flatten().max().unwrap_or(0))
        .max()
        .unwrap_or(0)
}
