use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use knapzero::instances::read_instances;
use knapzero_cli::{RunManifest, MANIFEST_FILE, OUT_DIR_ENV};

fn knapzero(args: &[&str], stdin: &str, cwd: &Path) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_knapzero"))
        .args(args)
        .current_dir(cwd)
        .env_remove(OUT_DIR_ENV)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &str = "n=8\nhidden_width=4\ntotal_games=32\ngames_per_optimization=8\neval_interval=16\n\
eval_games=4\nmcts_iters=6\noptimization_steps=2\nbatch_size=8\nreplicas=1\n";

#[test]
fn gen_writes_reproducible_instances() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.jsonl", "b.jsonl"] {
        let o = knapzero(&["gen", "--n", "16", "--count", "100", "--seed", "7", "--out", name], "", dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.jsonl")).unwrap());
    let insts = read_instances(&a[..]).unwrap();
    assert_eq!(insts.len(), 100);
    for inst in &insts {
        assert_eq!(inst.n(), 16);
        assert_eq!(inst.capacity(), 4.0);
    }
    let m = RunManifest::read(&dir.path().join("a.jsonl.manifest.json")).unwrap();
    assert_eq!(m.status, "complete");
    assert_eq!(m.seeds["seed"], 7);
}

#[test]
fn gen_rejects_bad_sizes() {
    let dir = tempfile::tempdir().unwrap();
    for n in ["0", "65"] {
        let o = knapzero(&["gen", "--n", n], "", dir.path());
        assert_eq!(o.status.code(), Some(1));
        assert!(String::from_utf8_lossy(&o.stderr).contains("--n"));
    }
    let o = knapzero(&["gen"], "", dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn default_output_dir_and_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let o = knapzero(&["gen", "--n", "4"], "", dir.path());
    assert!(o.status.success());
    assert!(dir.path().join("runs/gen/instances.jsonl").exists());

    let o = Command::new(env!("CARGO_BIN_EXE_knapzero"))
        .args(["gen", "--n", "4"])
        .current_dir(dir.path())
        .env(OUT_DIR_ENV, "elsewhere")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("elsewhere/instances.jsonl").exists());
}

#[test]
fn train_dry_run_echoes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = knapzero(&["train", "--dry-run", "--out-dir", "t"], "", dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    for line in ["total_games=40000", "eval_interval=4000", "mcts_iters=40", "eval_games=200"] {
        assert!(text.lines().any(|l| l == line), "missing {line}");
    }
    assert!(text.contains("phases=1000 evaluations=10"));
    assert!(!dir.path().join("t/replica-0").exists());
    let m = RunManifest::read(&dir.path().join("t").join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.config["total_games"], "40000");
}

#[test]
fn train_rejects_inconsistent_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let o = knapzero(&["train", "--dry-run", "--total-games", "1001"], "", dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn tiny_training_run_and_resume_guard() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.txt"), TINY).unwrap();
    let o = knapzero(&["train", "--config", "tiny.txt", "--seed", "4", "--out-dir", "run"], "", dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = dir.path().join("run/replica-0");
    let metrics = fs::read_to_string(rep.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4 + 1);
    assert!(rep.join("best.ckpt").exists());
    let m = RunManifest::read(&dir.path().join("run").join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.status, "complete");
    assert!(m.artifacts.iter().any(|p| p.ends_with("best.ckpt")));

    // A fresh run over an existing one must not silently overwrite it.
    let again = knapzero(&["train", "--config", "tiny.txt", "--seed", "4", "--out-dir", "run"], "", dir.path());
    assert!(!again.status.success());
    let m = RunManifest::read(&dir.path().join("run").join(MANIFEST_FILE)).unwrap();
    assert!(m.status.starts_with("failed"));
    let other_seed = knapzero(&["train", "--config", "tiny.txt", "--seed", "5", "--out-dir", "run", "--resume"], "", dir.path());
    assert!(!other_seed.status.success());
}

#[test]
fn tournament_writes_log_and_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.txt"), TINY).unwrap();
    for h in ["2", "4", "8"] {
        let out = format!("n{h}");
        let o = knapzero(&["train", "--config", "tiny.txt", "--hidden", h, "--out-dir", &out], "", dir.path());
        assert!(o.status.success());
    }
    let agents = "a=n2/replica-0/best.ckpt,b=n4/replica-0/best.ckpt,c=n8/replica-0/best.ckpt";
    let o = knapzero(&["tournament", "--agents", agents, "--games-per-pair", "10", "--out-dir", "t"], "", dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = dir.path().join("t");
    let log = fs::read_to_string(t.join("match_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 3 * 10);
    let heat = fs::read_to_string(t.join("heatmap.csv")).unwrap();
    let header: Vec<&str> = heat.lines().next().unwrap().split(',').collect();
    assert!(header.contains(&"observed_p") && header.contains(&"predicted_p"));
    assert_eq!(heat.lines().count(), 1 + 6);
    assert!(t.join("size_law.csv").exists());
    let ratings: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.join("ratings.json")).unwrap()).unwrap();
    assert!(ratings["size_law"]["slope"].is_number());

    let rerun = knapzero(&["rerun", "t/manifest.json", "--out-dir", "t2"], "", dir.path());
    assert!(rerun.status.success());
    assert_eq!(log, fs::read_to_string(dir.path().join("t2/match_log.csv")).unwrap());
}

#[test]
fn tournament_argument_errors() {
    let dir = tempfile::tempdir().unwrap();
    let dup = knapzero(&["tournament", "--agents", "greedy,greedy"], "", dir.path());
    assert_eq!(dup.status.code(), Some(1));
    let odd = knapzero(&["tournament", "--agents", "greedy,random", "--games-per-pair", "3"], "", dir.path());
    assert_eq!(odd.status.code(), Some(1));
    let missing = knapzero(&["tournament", "--agents", "greedy,x=nowhere.ckpt", "--out-dir", "t"], "", dir.path());
    assert_eq!(missing.status.code(), Some(2));
    let o = knapzero(&["tournament", "--agents", "greedy", "--agents", "random", "--n", "6", "--games-per-pair", "4", "--out-dir", "gr"], "", dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("size law: skipped"));
}

#[test]
fn play_reprompts_on_illegal_moves_and_reports_winner() {
    let dir = tempfile::tempdir().unwrap();
    let script = "x\n0\n0\n1\n2\n3\n4\n5\n";
    let args = ["play", "--agent", "greedy", "--n", "6", "--seed", "3", "--out-dir", "p"];
    let o = knapzero(&args, script, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("not a move"));
    assert!(text.contains("illegal: item owned"));
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("game over after two passes:"), "{last}");
    assert!(last.contains("win") || last.contains("draw"));
    assert!(dir.path().join("p/game.json").exists());

    let again = knapzero(&args, script, dir.path());
    assert_eq!(stdout(&again), text);
}

#[test]
fn play_fails_cleanly_when_input_ends() {
    let dir = tempfile::tempdir().unwrap();
    let o = knapzero(&["play", "--n", "6", "--out-dir", "p"], "", dir.path());
    assert_eq!(o.status.code(), Some(2));
    let m = RunManifest::read(&dir.path().join("p").join(MANIFEST_FILE)).unwrap();
    assert!(m.status.starts_with("failed"));
}
