use rsp_core::analysis::{evaluate, EvalConfig, GoalSpec};
use rsp_core::dataset::{gcsl_relabel_dataset, relabel_dataset, Dataset, KappaTable, RelabelSpec};
use rsp_core::env::{collect_with, scripted_collect, CollectConfig, CollectStyle, Maze, PRESET_NAMES};
use rsp_core::learner::{gcsl_table, rsp_table, table_mse, train_gcsl, train_rsp, Bundle, TrainConfig};
use rsp_core::planner::PlannerConfig;

fn corridor(n: usize, seed: u64) -> Dataset {
    let m = Maze::preset("corridor").unwrap();
    // at the default noise the cross-strip velocity is pure noise and caps the explained variance
    let cfg = CollectConfig {
        action_noise: 0.05,
        ..CollectConfig::new(CollectStyle::Diverse, n, 1000, seed)
    };
    Dataset::new(collect_with(&m, &cfg).unwrap(), Some("corridor".into())).unwrap()
}

/// Mean per-column variance of a row-major block.
fn column_variance(block: &[f32], width: usize) -> f64 {
    let rows = block.len() / width;
    (0..width)
        .map(|j| {
            let col: Vec<f64> = (0..rows).map(|r| block[r * width + j] as f64).collect();
            let mu = col.iter().sum::<f64>() / rows as f64;
            col.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / rows as f64
        })
        .sum::<f64>()
        / width as f64
}

fn cfg(steps: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 64,
        total_steps: steps,
        ..TrainConfig::desk()
    }
}

#[test]
fn corridor_models_explain_held_out_variance() {
    let train = corridor(200, 1);
    let held = corridor(40, 77);
    let spec = RelabelSpec::new(32, 1).unwrap();
    let c = cfg(10_000);

    let (stack, policy, _) = train_rsp(&rsp_table(&train, &spec, 0).unwrap(), &train.norm, &spec, &c).unwrap();
    let (gcsl, _) = train_gcsl(&gcsl_table(&train, 0).unwrap(), &train.norm, &c).unwrap();

    let ht = KappaTable::from_samples(&relabel_dataset(&held.trajectories, &spec, 5).unwrap(), &train.norm).unwrap();
    let f1 = table_mse(&stack.models[0], &ht, 0, ht.level(0)).unwrap() / column_variance(ht.level(0), 4);
    let pi = table_mse(&policy.net, &ht, 1, &ht.a_t).unwrap() / column_variance(&ht.a_t, 2);
    let hg = KappaTable::from_gcsl(&gcsl_relabel_dataset(&held.trajectories, 5), &train.norm);
    let g = table_mse(&gcsl.net, &hg, 0, &hg.a_t).unwrap() / column_variance(&hg.a_t, 2);
    eprintln!("held-out mse / variance: f1 {f1:.3}, policy {pi:.3}, gcsl {g:.3}");
    assert!(f1 < 0.2, "f1 {f1}");
    assert!(pi < 0.3, "policy {pi}");
    assert!(g < 0.4, "gcsl {g}");

    let mut bundle = Bundle::rsp(stack, policy);
    bundle.env = Some("corridor".into());
    let report = evaluate(
        &bundle,
        &Maze::preset("corridor").unwrap(),
        &EvalConfig {
            episodes: 100,
            seeds: vec![0],
            goals: GoalSpec::Designated,
            planner: PlannerConfig::new(1000),
        },
    )
    .unwrap();
    eprintln!("corridor success {:.2}", report.success_rate);
    assert!(report.success_rate >= 0.8, "success {}", report.success_rate);
}

#[test]
fn loss_falls_on_every_preset() {
    for name in PRESET_NAMES {
        let m = Maze::preset(name).unwrap();
        let ds = Dataset::new(scripted_collect(&m, CollectStyle::Play, 8, 300, 2).unwrap(), None).unwrap();
        let spec = RelabelSpec::new(16, 2).unwrap();
        let c = TrainConfig {
            hidden: vec![64, 64],
            batch_size: 32,
            total_steps: 600,
            ..TrainConfig::desk()
        };
        let (_, _, trace) = train_rsp(&rsp_table(&ds, &spec, 0).unwrap(), &ds.norm, &spec, &c).unwrap();
        for id in ["f1", "f2", "pi"] {
            let s = trace.series(id);
            let head = s[..50].iter().sum::<f32>() / 50.0;
            let tail = s[s.len() - 50..].iter().sum::<f32>() / 50.0;
            assert!(tail < head, "{name} {id}: {head} -> {tail}");
        }
    }
}
