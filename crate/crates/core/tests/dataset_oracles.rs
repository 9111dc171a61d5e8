mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsp_core::dataset::{
    dataset_file_size, gcsl_relabel, relabel_trajectory, sample_batch, subgoal_indices, write_dataset,
    Dataset, KappaTable, NormStats, RelabelSpec,
};
use rsp_core::env::{scripted_collect, CollectStyle, Maze};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use common::{brute_horizons, brute_kappa, brute_subgoal_indices, random_trajectory, rng, two_pass_stats};

#[test]
fn relabel_indices_match_enumeration() {
    let mut r = rng(1);
    let trajs: Vec<_> = (0..100)
        .map(|_| {
            let len = rand::Rng::random_range(&mut r, 2..=40);
            random_trajectory(&mut r, len)
        })
        .collect();
    for k in 1..=32 {
        for n in 1..=6 {
            let Some(hs) = brute_horizons(k, n) else {
                assert!(RelabelSpec::new(k, n).is_err(), "K={k} N={n}");
                continue;
            };
            let spec = RelabelSpec::new(k, n).unwrap();
            for traj in &trajs {
                let samples = relabel_trajectory(traj, &spec, &mut rng(0)).unwrap();
                for (t, s) in samples.iter().enumerate() {
                    assert_eq!(s.subgoal_indices, brute_subgoal_indices(traj.len(), t, k, n));
                    assert_eq!(subgoal_indices(traj.len(), t, &hs), s.subgoal_indices);
                    assert_eq!(s.kappa(n), brute_kappa(traj, t, k, n, n, traj.len() - 1));
                }
            }
        }
    }
}

#[test]
fn gcsl_future_indices_are_uniform() {
    let mut r = rng(2);
    let traj = random_trajectory(&mut r, 30);
    let t = 7;
    let cells = traj.len() - 1 - t;
    let mut counts = vec![0f64; cells];
    let draws = 10_000;
    let mut g = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..draws {
        let s = &gcsl_relabel(&traj, &mut g)[t];
        counts[s.goal_index - t - 1] += 1.0;
    }
    let expect = draws as f64 / cells as f64;
    let stat: f64 = counts.iter().map(|c| (c - expect).powi(2) / expect).sum();
    let p = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat);
    assert!(p > 0.01, "chi-square {stat:.2}, p = {p:.4}");
}

#[test]
fn norm_matches_two_pass_oracle() {
    let m = Maze::preset("medium").unwrap();
    let trajs = scripted_collect(&m, CollectStyle::Play, 12, 300, 4).unwrap();
    let norm = NormStats::fit(&trajs).unwrap();
    let states: Vec<Vec<f64>> = trajs
        .iter()
        .flat_map(|t| t.states.iter().map(|s| s.to_array().iter().map(|&v| v as f64).collect()))
        .collect();
    let actions: Vec<Vec<f64>> = trajs
        .iter()
        .flat_map(|t| t.actions.iter().map(|a| a.iter().map(|&v| v as f64).collect()))
        .collect();
    for (rows, mean, std) in [
        (&states, &norm.state_mean, &norm.state_std),
        (&actions, &norm.action_mean, &norm.action_std),
    ] {
        let (m2, s2) = two_pass_stats(rows);
        for j in 0..m2.len() {
            assert!((mean[j] - m2[j]).abs() <= 1e-6 * m2[j].abs().max(1.0));
            assert!((std[j] - s2[j].max(rsp_core::dataset::STD_FLOOR)).abs() <= 1e-6 * s2[j].max(1.0));
        }
    }
}

#[test]
fn sampling_is_uniform_over_rows() {
    let mut r = rng(6);
    let traj = random_trajectory(&mut r, 40);
    let samples = relabel_trajectory(&traj, &RelabelSpec::new(8, 2).unwrap(), &mut rng(0)).unwrap();
    let table = KappaTable::from_samples(&samples, &NormStats::identity(4, 2)).unwrap();
    let n = table.len();
    let mut counts = vec![0u32; n];
    let mut g = ChaCha8Rng::seed_from_u64(7);
    let draws = 100_000;
    for _ in 0..draws / 100 {
        for &i in &sample_batch(&table, 100, &mut g).unwrap().indices {
            counts[i] += 1;
        }
    }
    let p = 1.0 / n as f64;
    let (mu, sd) = (draws as f64 * p, (draws as f64 * p * (1.0 - p)).sqrt());
    for (i, &c) in counts.iter().enumerate() {
        assert!((c as f64 - mu).abs() <= 3.0 * sd, "row {i}: {c} draws, expected {mu:.0} ± {:.0}", 3.0 * sd);
    }
}

#[test]
fn corridor_file_size_matches_header_formula() {
    let m = Maze::preset("corridor").unwrap();
    let ds = Dataset::new(scripted_collect(&m, CollectStyle::Diverse, 64, 500, 1).unwrap(), Some("corridor".into())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.rspd");
    write_dataset(&p, &ds).unwrap();
    let header = serde_json::to_vec(&ds.header()).unwrap();
    let steps: usize = ds.trajectories.iter().map(|t| t.len()).sum();
    // magic, u32 header length, JSON header, f32 states (4) and actions (2)
    let expect = 5 + 4 + header.len() + 4 * steps * (4 + 2);
    assert_eq!(std::fs::metadata(&p).unwrap().len() as usize, expect);
    assert_eq!(dataset_file_size(header.len(), steps), expect);
}

proptest! {
    #[test]
    fn indices_clamp_and_grow_with_horizon(len in 2usize..80, t_frac in 0.0f64..1.0, k_exp in 0u32..6, n in 1usize..5) {
        let k = 1usize << k_exp;
        prop_assume!(brute_horizons(k, n).is_some());
        let t = ((len - 1) as f64 * t_frac) as usize;
        let idx = subgoal_indices(len, t, &brute_horizons(k, n).unwrap());
        prop_assert_eq!(idx.len(), n);
        for w in idx.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        let last = len - 1;
        prop_assert!(idx.iter().all(|&i| i <= last && (i > t || t == last)));
        prop_assert_eq!(idx[n - 1], (t + k).min(last));
    }

    #[test]
    fn kappa_levels_nest(seed in 0u64..500, len in 2usize..50, n in 1usize..5) {
        let k = 16;
        let mut r = rng(seed);
        let traj = random_trajectory(&mut r, len);
        let samples = relabel_trajectory(&traj, &RelabelSpec::new(k, n).unwrap(), &mut rng(seed)).unwrap();
        for s in &samples {
            for m in 0..n {
                let (a, b) = (s.kappa(m), s.kappa(m + 1));
                prop_assert_eq!(b.len(), a.len() + 4);
                // κ^(m+1) = κ^(m) with one state inserted right after s_t
                prop_assert_eq!(&b[..4], &a[..4]);
                prop_assert_eq!(&b[8..], &a[4..]);
            }
        }
    }
}
