use std::collections::HashMap;
use std::fs;
use std::sync::Arc;

use knapzero::arena::{round_robin, AgentSpec};
use knapzero::instances::{read_instances, write_instances};
use knapzero::mcts::MctsConfig;
use knapzero::nn::load_checkpoint;
use knapzero::rating::{fit_elo, heatmap, predicted_win_prob};
use knapzero::trainer::{train_to_dir, RunOptions, TrainConfig, TrainError, METRICS_FILE};
use knapzero::generate_weakly_correlated;

fn small() -> TrainConfig {
    let mut cfg = TrainConfig {
        n: 8,
        hidden_width: 6,
        total_games: 48,
        games_per_optimization: 8,
        eval_interval_games: 16,
        eval_games: 6,
        buffer_capacity: 200,
        optimization_steps: 4,
        batch_size: 16,
        seed: 21,
        workers: 1,
        ..Default::default()
    };
    cfg.mcts.iterations = 8;
    cfg
}

fn strip_wall_time(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

#[test]
fn interrupted_run_resumes_bit_exactly() {
    let cfg = small();
    let straight = tempfile::tempdir().unwrap();
    train_to_dir(&cfg, straight.path(), RunOptions::default(), |_| {}).unwrap();

    let split = tempfile::tempdir().unwrap();
    let first = RunOptions { resume: false, stop_after_phase: Some(3) };
    let partial = train_to_dir(&cfg, split.path(), first, |_| {}).unwrap();
    assert_eq!(partial.metrics.len(), 3);
    let second = RunOptions { resume: true, stop_after_phase: None };
    let resumed = train_to_dir(&cfg, split.path(), second, |_| {}).unwrap();
    assert_eq!(resumed.metrics.len(), 6);

    for file in ["best.ckpt", "last.ckpt"] {
        assert_eq!(fs::read(straight.path().join(file)).unwrap(), fs::read(split.path().join(file)).unwrap(), "{file}");
    }
    let a = fs::read_to_string(straight.path().join(METRICS_FILE)).unwrap();
    let b = fs::read_to_string(split.path().join(METRICS_FILE)).unwrap();
    assert_eq!(strip_wall_time(&a), strip_wall_time(&b));
    assert_eq!(a.lines().count(), 7);
}

#[test]
fn resume_guards() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let err = train_to_dir(&cfg, dir.path(), RunOptions { resume: true, stop_after_phase: None }, |_| {}).unwrap_err();
    assert!(matches!(err, TrainError::Resume(_)));

    train_to_dir(&cfg, dir.path(), RunOptions { resume: false, stop_after_phase: Some(1) }, |_| {}).unwrap();
    let again = train_to_dir(&cfg, dir.path(), RunOptions::default(), |_| {}).unwrap_err();
    assert!(matches!(again, TrainError::Resume(_)));
    let other = TrainConfig { seed: 22, ..cfg };
    let mismatch = train_to_dir(&other, dir.path(), RunOptions { resume: true, stop_after_phase: None }, |_| {});
    assert!(matches!(mismatch, Err(TrainError::Resume(_))));
}

#[test]
fn best_checkpoint_is_monotone_and_loadable() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let mut evals = Vec::new();
    let out = train_to_dir(&cfg, dir.path(), RunOptions::default(), |row| {
        if let Some(e) = row.eval_win_rate {
            evals.push(e);
        }
    })
    .unwrap();
    assert_eq!(evals.len(), 3);
    let best = load_checkpoint(&dir.path().join("best.ckpt")).unwrap();
    assert_eq!(best.meta.eval_score, evals.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    assert!(best.meta.eval_score >= evals[0]);
    assert_eq!(best.net, out.best.net);
    let spec = AgentSpec::from_checkpoint("trained", &dir.path().join("best.ckpt"), MctsConfig::default()).unwrap();
    assert_eq!(spec.hidden_width(), Some(6));
}

#[test]
fn tournament_to_ratings() {
    let nets: Vec<AgentSpec> = [2usize, 8]
        .iter()
        .map(|&h| {
            let net = knapzero::nn::Mlp::new(8, h, h as u64).unwrap();
            AgentSpec::net(format!("N{h}"), Arc::new(net), MctsConfig { iterations: 4, ..Default::default() })
        })
        .chain([AgentSpec::greedy(), AgentSpec::random(3)])
        .collect();
    let (m, log) = round_robin(&nets, 8, 10, 1).unwrap();
    assert_eq!(log.len(), 6 * 10);
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                let p = m.observed(i, j).unwrap();
                assert!((p + m.observed(j, i).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }
    let table = fit_elo(&m).unwrap();
    assert!(table.ratings.iter().sum::<f64>().abs() < 1e-6);
    let sizes: HashMap<String, usize> = [("N2".to_string(), 2), ("N8".to_string(), 8)].into();
    let cells = heatmap(&m, &sizes);
    assert_eq!(cells.len(), 2);
    assert_eq!(cells[0].predicted, predicted_win_prob(2, 8));
}

#[test]
fn instance_file_round_trip() {
    let insts: Vec<_> = (0..5).map(|s| generate_weakly_correlated(12, s).unwrap()).collect();
    let mut buf = Vec::new();
    write_instances(&mut buf, &insts).unwrap();
    assert_eq!(read_instances(&buf[..]).unwrap(), insts);
}
