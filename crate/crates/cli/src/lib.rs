//! Command-line front end: instance generation, training, tournaments and
//! interactive play.
//!
//! Every command writes a `manifest.json` describing the run. The output
//! directory comes from `--out-dir`, else `KNAPZERO_OUT_DIR`, else
//! `runs/<command>`.

mod manifest;
mod play;

pub use manifest::{RunManifest, MANIFEST_FILE};
pub use play::play_interactive;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use knapzero::arena::{match_log_csv, round_robin, AgentKind, AgentSpec};
use knapzero::instances::write_instances;
use knapzero::mcts::{MctsConfig, SelectionMode};
use knapzero::nn::load_checkpoint;
use knapzero::rating::{fit_elo, fit_size_law, heatmap, heatmap_csv, ratings_csv, RatingError};
use knapzero::trainer::{replica_seed, train_to_dir, RunOptions, TrainConfig, TrainError};
use knapzero::{generate_weakly_correlated, rng};
use serde_json::json;

pub const OUT_DIR_ENV: &str = "KNAPZERO_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "knapzero", version, about = "Self-play training and tournaments for the two-player knapsack game")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write seeded weakly correlated instances, one JSON record per line.
    Gen(GenArgs),
    /// Train networks by self-play.
    Train(TrainArgs),
    /// Round-robin tournament with Elo and size-law fits.
    Tournament(TournamentArgs),
    /// Play against an agent in the terminal.
    Play(PlayArgs),
    /// Repeat the run described by a manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; defaults to instances.jsonl in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat key=value config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "hidden")]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub total_games: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Print the resolved config and schedule without training.
    #[arg(long)]
    pub dry_run: bool,
    /// Continue the runs saved in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct TournamentArgs {
    /// greedy, random, minimax, a checkpoint path, or label=path.
    #[arg(long, value_delimiter = ',', required = true)]
    pub agents: Vec<String>,
    #[arg(long, default_value_t = 200)]
    pub games_per_pair: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Item count; required only when no checkpoint fixes it.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 40)]
    pub mcts_iters: usize,
    /// Net agents sample from the search policy instead of playing argmax.
    #[arg(long)]
    pub sample: bool,
    /// Treat networks of equal hidden width as replicas and pool them.
    #[arg(long)]
    pub pool: bool,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlayArgs {
    /// greedy, random, minimax or a checkpoint path.
    #[arg(long, default_value = "greedy")]
    pub agent: String,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Let the agent move first.
    #[arg(long)]
    pub agent_first: bool,
    #[arg(long, default_value_t = 40)]
    pub mcts_iters: usize,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    /// Write into this directory instead of the original one.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Failure classes, mapped to exit codes 1 and 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

pub fn resolve_out_dir(flag: Option<&Path>, command: &str) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| Path::new("runs").join(command)),
    }
}

/// Parse and run. `args` excludes the program name.
pub fn run(args: &[String], input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(std::iter::once("knapzero".to_string()).chain(args.iter().cloned())) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                write!(out, "{e}")?;
                return Ok(());
            }
            return Err(usage(e.to_string()));
        }
    };
    match cli.command {
        Command::Gen(a) => cmd_gen(&a, args, out),
        Command::Train(a) => cmd_train(&a, args, out),
        Command::Tournament(a) => cmd_tournament(&a, args, out),
        Command::Play(a) => cmd_play(&a, args, input, out),
        Command::Rerun(a) => cmd_rerun(&a, input, out),
    }
}

/// Run `body`, then write the manifest with its final status.
fn with_manifest(
    mut manifest: RunManifest,
    path: &Path,
    body: impl FnOnce(&mut RunManifest) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let result = body(&mut manifest);
    manifest.status = match &result {
        Ok(()) => "complete".into(),
        Err(e) => format!("failed: {e}"),
    };
    let written = manifest.write(path).with_context(|| format!("writing {}", path.display()));
    result?;
    written?;
    Ok(())
}

fn cmd_gen(a: &GenArgs, args: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    if a.n == 0 || a.n > knapzero::game::MAX_ITEMS {
        return Err(usage(format!("--n must be in 1..={}", knapzero::game::MAX_ITEMS)));
    }
    if a.count == 0 {
        return Err(usage("--count must be positive"));
    }
    let target = match &a.out {
        Some(p) => p.clone(),
        None => resolve_out_dir(a.out_dir.as_deref(), "gen").join("instances.jsonl"),
    };
    let manifest_path = {
        let mut p = target.as_os_str().to_owned();
        p.push(".manifest.json");
        PathBuf::from(p)
    };
    let mut m = RunManifest::new("gen", args);
    m.config = json!({ "n": a.n, "count": a.count, "seed": a.seed, "out": target });
    m.seeds.insert("seed".into(), a.seed);
    with_manifest(m, &manifest_path, |m| {
        let insts = (0..a.count as u64)
            .map(|k| generate_weakly_correlated(a.n, rng::derive_seed(a.seed, k)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| usage(e.to_string()))?;
        let mut buf = Vec::new();
        write_instances(&mut buf, &insts)?;
        if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        write_atomic(&target, &buf).with_context(|| format!("writing {}", target.display()))?;
        m.artifacts.push(target.clone());
        writeln!(out, "wrote {} instances to {}", a.count, target.display())?;
        Ok(())
    })
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    if let Some(v) = a.n {
        cfg.n = v;
    }
    if let Some(v) = a.hidden {
        cfg.hidden_width = v;
    }
    if let Some(v) = a.total_games {
        cfg.total_games = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.replicas {
        cfg.replicas = v;
    }
    if let Some(v) = a.workers {
        cfg.workers = v;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn config_json(text: &str) -> serde_json::Value {
    let map: BTreeMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
    json!(map)
}

pub fn replica_dir(out_dir: &Path, r: usize) -> PathBuf {
    out_dir.join(format!("replica-{r}"))
}

fn cmd_train(a: &TrainArgs, args: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = train_config(a)?;
    let schedule = cfg.schedule().map_err(|e| usage(e.to_string()))?;
    let out_dir = resolve_out_dir(a.out_dir.as_deref(), "train");
    let text = cfg.to_config_text();
    write!(out, "{text}")?;
    writeln!(
        out,
        "schedule: phases={} evaluations={} optimization_steps={} replicas={}",
        schedule.phases, schedule.evaluations, schedule.optimization_steps, cfg.replicas
    )?;
    let mut m = RunManifest::new("train", args);
    m.config_path = a.config.clone();
    m.config = config_json(&text);
    for r in 0..cfg.replicas {
        m.seeds.insert(format!("replica-{r}"), replica_seed(cfg.seed, r));
    }
    with_manifest(m, &out_dir.join(MANIFEST_FILE), |m| {
        if a.dry_run {
            return Ok(());
        }
        for r in 0..cfg.replicas {
            let dir = replica_dir(&out_dir, r);
            let rc = TrainConfig { seed: replica_seed(cfg.seed, r), ..cfg };
            let opts = RunOptions { resume: a.resume, stop_after_phase: None };
            let mut progress = Vec::new();
            let result = train_to_dir(&rc, &dir, opts, |row| {
                if let Some(e) = row.eval_win_rate {
                    progress.push(format!(
                        "replica {r} games {} loss {:.4} eval {:.4}",
                        row.games_played, row.mean_loss, e
                    ));
                }
            });
            for line in &progress {
                writeln!(out, "{line}")?;
            }
            for f in ["best.ckpt", "last.ckpt", "metrics.csv", "train_state.bin", "config.txt"] {
                if dir.join(f).exists() {
                    m.artifacts.push(dir.join(f));
                }
            }
            let outcome = result.map_err(|e| match e {
                TrainError::Config(msg) => usage(msg),
                other => CliError::Runtime(anyhow!(other)),
            })?;
            writeln!(
                out,
                "replica {r}: best eval {:.4} at {} games -> {}",
                outcome.best.meta.eval_score,
                outcome.best.meta.games_played,
                dir.join("best.ckpt").display()
            )?;
        }
        Ok(())
    })
}

fn builtin_agent(name: &str, seed: u64) -> Option<AgentSpec> {
    match name {
        "greedy" => Some(AgentSpec::greedy()),
        "random" => Some(AgentSpec::random(rng::derive_tagged(seed, "random-agent"))),
        "minimax" => Some(AgentSpec::minimax()),
        _ => None,
    }
}

fn load_net_agent(label: &str, path: &Path, mcts: MctsConfig, mode: SelectionMode) -> Result<AgentSpec, CliError> {
    let ck = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(AgentSpec { label: label.to_string(), kind: AgentKind::Net { net: Arc::new(ck.net), mcts, mode }, group: None })
}

fn net_items(spec: &AgentSpec) -> Option<usize> {
    match &spec.kind {
        AgentKind::Net { net, .. } => Some(net.n()),
        _ => None,
    }
}

/// Item count shared by every network agent, or `fallback` if none.
fn common_n(agents: &[AgentSpec], fallback: Option<usize>) -> Result<usize, CliError> {
    let mut n = fallback;
    let mut source = "--n".to_string();
    for a in agents {
        if let Some(k) = net_items(a) {
            match n {
                Some(prev) if prev != k => {
                    return Err(usage(format!("mismatched n: {} plays {k} items, {source} has {prev}", a.label)));
                }
                _ => {
                    n = Some(k);
                    source = a.label.clone();
                }
            }
        }
    }
    Ok(n.unwrap_or(16))
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    match workers {
        Some(w) if w > 0 => Ok(rayon::ThreadPoolBuilder::new().num_threads(w).build()?.install(f)),
        _ => Ok(f()),
    }
}

fn cmd_tournament(a: &TournamentArgs, args: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    if a.games_per_pair == 0 || a.games_per_pair % 2 != 0 {
        return Err(usage("--games-per-pair must be a positive even number"));
    }
    let mcts = MctsConfig { iterations: a.mcts_iters, ..Default::default() };
    mcts.validate().map_err(|e| usage(e.to_string()))?;
    let mode = if a.sample { SelectionMode::Sample } else { SelectionMode::Argmax };
    let mut agents = Vec::new();
    for token in &a.agents {
        let spec = match builtin_agent(token, a.seed) {
            Some(s) => s,
            None => {
                let (label, path) = token.split_once('=').unwrap_or((token.as_str(), token.as_str()));
                load_net_agent(label, Path::new(path), mcts, mode)?
            }
        };
        if agents.iter().any(|x: &AgentSpec| x.label == spec.label) {
            return Err(usage(format!("duplicate agent label {:?}", spec.label)));
        }
        agents.push(spec);
    }
    if agents.len() < 2 {
        return Err(usage("a tournament needs at least two agents"));
    }
    let n = common_n(&agents, a.n)?;
    for spec in &agents {
        spec.instantiate(n).map_err(|e| usage(e.to_string()))?;
    }
    let widths: HashMap<String, usize> =
        agents.iter().filter_map(|s| s.hidden_width().map(|w| (s.label.clone(), w))).collect();
    if a.pool {
        for s in agents.iter_mut() {
            if let Some(w) = s.hidden_width() {
                s.group = Some(format!("N{w}"));
            }
        }
    }
    let out_dir = resolve_out_dir(a.out_dir.as_deref(), "tournament");
    let mut m = RunManifest::new("tournament", args);
    m.config = json!({
        "agents": a.agents, "games_per_pair": a.games_per_pair, "n": n,
        "mcts_iters": a.mcts_iters, "sample": a.sample, "pool": a.pool,
    });
    m.seeds.insert("seed".into(), a.seed);
    with_manifest(m, &out_dir.join(MANIFEST_FILE), |m| {
        let (matrix, log) = in_pool(a.workers, || round_robin(&agents, n, a.games_per_pair, a.seed))?
            .map_err(|e| anyhow!(e))?;
        let (rated, sizes) = if a.pool {
            let groups: Vec<String> = agents.iter().map(|s| s.group.clone().unwrap_or_else(|| s.label.clone())).collect();
            let sizes: HashMap<String, usize> =
                agents.iter().filter_map(|s| Some((s.group.clone()?, s.hidden_width()?))).collect();
            (matrix.pooled(&groups), sizes)
        } else {
            (matrix.clone(), widths.clone())
        };
        let table = fit_elo(&rated).map_err(|e| anyhow!(e))?;
        let fit = match fit_size_law(&table, &sizes) {
            Ok(f) => Some(f),
            Err(RatingError::TooFewSizes { .. }) => None,
            Err(e) => return Err(anyhow!(e).into()),
        };
        let cells = heatmap(&rated, &sizes);
        let report = json!({
            "ratings": table,
            "size_law": fit,
            "size_law_note": if fit.is_none() { Some("fewer than three distinct hidden widths") } else { None },
        });
        fs::create_dir_all(&out_dir)?;
        let mut files: Vec<(&str, String)> = vec![
            ("match_log.csv", match_log_csv(&log)),
            ("win_matrix.csv", matrix.to_csv()),
            ("win_matrix.json", matrix.to_json()),
            ("ratings.csv", ratings_csv(&table, &sizes)),
            ("ratings.json", serde_json::to_string_pretty(&report).expect("report serializes")),
            ("heatmap.csv", heatmap_csv(&cells)),
        ];
        if a.pool {
            files.push(("pooled_matrix.csv", rated.to_csv()));
            files.push(("pooled_matrix.json", rated.to_json()));
        }
        if let Some(f) = &fit {
            let mut s = format!("slope,intercept\n{},{}\nlabel,hidden_width,rating,residual\n", f.slope, f.intercept);
            for p in &f.points {
                s.push_str(&format!("{},{},{},{}\n", p.label, p.hidden_width, p.rating, p.residual));
            }
            files.push(("size_law.csv", s));
        }
        for (name, body) in files {
            let path = out_dir.join(name);
            write_atomic(&path, body.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
            m.artifacts.push(path);
        }
        writeln!(out, "{} games on {n}-item instances", log.len())?;
        for (l, r) in table.labels.iter().zip(&table.ratings) {
            writeln!(out, "{l:>24}  {r:>8.1}")?;
        }
        match &fit {
            Some(f) => writeln!(out, "size law: rating = {:.1} * log10(N) + {:.1}", f.slope, f.intercept)?,
            None => writeln!(out, "size law: skipped (fewer than three distinct hidden widths)")?,
        }
        writeln!(out, "results in {}", out_dir.display())?;
        Ok(())
    })
}

fn cmd_play(a: &PlayArgs, args: &[String], input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let mcts = MctsConfig { iterations: a.mcts_iters, ..Default::default() };
    mcts.validate().map_err(|e| usage(e.to_string()))?;
    let spec = match builtin_agent(&a.agent, a.seed) {
        Some(s) => s,
        None => load_net_agent(&a.agent, Path::new(&a.agent), mcts, SelectionMode::Argmax)?,
    };
    let n = net_items(&spec).unwrap_or(a.n);
    if n == 0 || n > knapzero::game::MAX_ITEMS {
        return Err(usage(format!("--n must be in 1..={}", knapzero::game::MAX_ITEMS)));
    }
    let mut agent = spec.instantiate(n).map_err(|e| usage(e.to_string()))?;
    let out_dir = resolve_out_dir(a.out_dir.as_deref(), "play");
    let mut m = RunManifest::new("play", args);
    m.config = json!({ "agent": a.agent, "n": n, "agent_first": a.agent_first, "mcts_iters": a.mcts_iters });
    m.seeds.insert("seed".into(), a.seed);
    with_manifest(m, &out_dir.join(MANIFEST_FILE), |m| {
        let human = if a.agent_first { 1 } else { 0 };
        let record = play_interactive(agent.as_mut(), n, a.seed, human, input, out)?;
        fs::create_dir_all(&out_dir)?;
        let path = out_dir.join("game.json");
        write_atomic(&path, format!("{}\n", record.to_line()).as_bytes())?;
        m.artifacts.push(path);
        Ok(())
    })
}

/// Replace any output location in `args` with `out_dir`.
fn redirect(args: &[String], out_dir: &Path) -> Vec<String> {
    let mut kept = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        if a == "--out-dir" || a == "--out" {
            skip = true;
            continue;
        }
        if a.starts_with("--out-dir=") || a.starts_with("--out=") {
            continue;
        }
        kept.push(a.clone());
    }
    kept.push("--out-dir".into());
    kept.push(out_dir.display().to_string());
    kept
}

fn cmd_rerun(a: &RerunArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let m = RunManifest::read(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    if m.args.first().map(String::as_str) == Some("rerun") {
        return Err(usage("manifest records a rerun; point at the original run's manifest"));
    }
    let args = match &a.out_dir {
        Some(d) => redirect(&m.args, d),
        None => m.args.clone(),
    };
    writeln!(out, "rerunning: knapzero {}", args.join(" "))?;
    run(&args, input, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn parse_errors_are_usage_errors() {
        let mut out = Vec::new();
        let err = run(&args("gen --count 3"), &mut &b""[..], &mut out).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let err = run(&args("frobnicate"), &mut &b""[..], &mut out).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(run(&args("--help"), &mut &b""[..], &mut out).is_ok());
    }

    #[test]
    fn redirect_replaces_outputs() {
        let a = args("gen --n 4 --out x.jsonl --seed 2");
        assert_eq!(redirect(&a, Path::new("d")), args("gen --n 4 --seed 2 --out-dir d"));
        let b = args("train --out-dir=old --hidden 4");
        assert_eq!(redirect(&b, Path::new("new")), args("train --hidden 4 --out-dir new"));
    }

    #[test]
    fn config_flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        fs::write(&path, "hidden_width=8\ntotal_games=400\nseed=3\n").unwrap();
        let a = TrainArgs {
            config: Some(path),
            n: None,
            hidden: Some(12),
            total_games: None,
            seed: None,
            replicas: None,
            workers: None,
            out_dir: None,
            dry_run: true,
            resume: false,
        };
        let cfg = train_config(&a).unwrap();
        assert_eq!((cfg.hidden_width, cfg.total_games, cfg.seed), (12, 400, 3));
    }

    #[test]
    fn mismatched_items_rejected() {
        let net = |n| AgentSpec::net(format!("n{n}"), Arc::new(knapzero::nn::Mlp::new(n, 2, 0).unwrap()), MctsConfig::default());
        assert_eq!(common_n(&[net(8), AgentSpec::greedy()], None).unwrap(), 8);
        assert_eq!(common_n(&[AgentSpec::greedy(), AgentSpec::random(1)], None).unwrap(), 16);
        assert!(matches!(common_n(&[net(8), net(10)], None), Err(CliError::Usage(_))));
        assert!(matches!(common_n(&[net(8)], Some(9)), Err(CliError::Usage(_))));
    }
}
