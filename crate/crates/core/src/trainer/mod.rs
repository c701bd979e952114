//! Self-play training.
//!
//! A run is a sequence of phases. Each phase plays
//! `games_per_optimization` self-play games with the current network,
//! appends their positions to the replay buffer and takes a fixed number of
//! Adam steps on random batches. Every `eval_interval_games` games the
//! current network plays the greedy agent; the best scoring network is
//! kept, while training always continues from the latest one.

mod buffer;
mod config;
mod selfplay;
mod state;

pub use buffer::ReplayBuffer;
pub use config::{Schedule, TrainConfig};
pub use selfplay::{evaluate_agent_vs_greedy, evaluate_vs_greedy, play_selfplay_game};

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::arena::ArenaError;
use crate::game::GameError;
use crate::mcts::MctsError;
use crate::nn::{save_checkpoint, Adam, Checkpoint, CheckpointError, CheckpointMeta, Mlp, NetError};
use crate::rng;
use state::SavedState;

pub const METRICS_FILE: &str = "metrics.csv";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const STATE_FILE: &str = "train_state.bin";
pub const CONFIG_SNAPSHOT: &str = "config.txt";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Arena(#[from] ArenaError),
    #[error(transparent)]
    Search(#[from] MctsError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("cannot resume: {0}")]
    Resume(String),
    #[error("corrupt training state: {0}")]
    CorruptState(String),
}

impl TrainError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub phase: u64,
    pub games_played: u64,
    pub mean_loss: f64,
    pub eval_win_rate: Option<f64>,
    /// Seconds since the run started.
    pub wall_time: f64,
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from("phase,games_played,mean_loss,eval_win_rate,wall_time\n");
    for r in rows {
        let eval = r.eval_win_rate.map_or(String::new(), |e| e.to_string());
        s.push_str(&format!("{},{},{},{},{:.3}\n", r.phase, r.games_played, r.mean_loss, eval, r.wall_time));
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Highest evaluation score; the final network when nothing was evaluated.
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub metrics: Vec<MetricsRow>,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Continue from the state file in the output directory.
    pub resume: bool,
    /// Stop (with state saved) once this many phases are done.
    pub stop_after_phase: Option<u64>,
}

struct Seeds {
    init: u64,
    selfplay: u64,
    batches: u64,
    eval: u64,
}

impl Seeds {
    fn new(seed: u64) -> Self {
        Self {
            init: rng::derive_tagged(seed, "init"),
            selfplay: rng::derive_tagged(seed, "selfplay"),
            batches: rng::derive_tagged(seed, "batches"),
            eval: rng::derive_tagged(seed, "eval"),
        }
    }
}

struct Trainer {
    cfg: TrainConfig,
    seeds: Seeds,
    net: Mlp,
    adam: Adam,
    buffer: ReplayBuffer,
    phase: u64,
    games_played: u64,
    best: Option<Checkpoint>,
    metrics: Vec<MetricsRow>,
    wall_offset: f64,
    last_eval: Option<f64>,
}

impl Trainer {
    fn fresh(cfg: TrainConfig) -> Result<Self, TrainError> {
        let seeds = Seeds::new(cfg.seed);
        let net = Mlp::new(cfg.n, cfg.hidden_width, seeds.init)?;
        let adam = Adam::new(cfg.adam, net.params().len());
        Ok(Self {
            cfg,
            seeds,
            net,
            adam,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            phase: 0,
            games_played: 0,
            best: None,
            metrics: Vec::new(),
            wall_offset: 0.0,
            last_eval: None,
        })
    }

    fn from_saved(cfg: TrainConfig, s: SavedState) -> Result<Self, TrainError> {
        if s.fingerprint != cfg.fingerprint() {
            return Err(TrainError::Resume("saved state was produced by a different config".into()));
        }
        s.current.ensure_items(cfg.n)?;
        if s.current.net.hidden_width() != cfg.hidden_width {
            return Err(TrainError::Resume("hidden width differs from saved state".into()));
        }
        let last_eval = s.metrics.last().and_then(|r| r.eval_win_rate);
        Ok(Self {
            cfg,
            seeds: Seeds::new(cfg.seed),
            net: s.current.net,
            adam: s.adam,
            buffer: s.buffer,
            phase: s.phase,
            games_played: s.games_played,
            best: s.best,
            metrics: s.metrics,
            wall_offset: s.wall_time,
            last_eval,
        })
    }

    fn saved(&self, wall_time: f64) -> SavedState {
        SavedState {
            fingerprint: self.cfg.fingerprint(),
            phase: self.phase,
            games_played: self.games_played,
            wall_time,
            current: self.last_checkpoint(),
            best: self.best.clone(),
            adam: self.adam.clone(),
            buffer: self.buffer.clone(),
            metrics: self.metrics.clone(),
        }
    }

    fn last_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            net: self.net.clone(),
            meta: CheckpointMeta {
                seed: self.cfg.seed,
                games_played: self.games_played,
                eval_score: self.last_eval.unwrap_or(f64::NAN),
            },
        }
    }

    fn run_phase(&mut self, started: Instant) -> Result<(MetricsRow, bool), TrainError> {
        let cfg = &self.cfg;
        let first = self.games_played;
        let net = &self.net;
        let games: Vec<_> = (first..first + cfg.games_per_optimization)
            .into_par_iter()
            .map(|g| play_selfplay_game(net, cfg.n, &cfg.mcts, rng::derive_seed(self.seeds.selfplay, g)))
            .collect::<Result<_, _>>()?;
        for (_, samples) in games {
            self.buffer.extend(samples);
        }

        let mut batch_rng = rng::seeded(rng::derive_seed(self.seeds.batches, self.phase));
        let mut loss_sum = 0.0;
        for _ in 0..cfg.optimization_steps {
            let batch = self.buffer.sample(cfg.batch_size, &mut batch_rng);
            if batch.is_empty() {
                break;
            }
            let (grad, loss) = self.net.gradient(&batch)?;
            self.adam.step(&mut self.net, &grad);
            loss_sum += loss;
        }
        let mean_loss = if cfg.optimization_steps > 0 && !self.buffer.is_empty() {
            loss_sum / cfg.optimization_steps as f64
        } else {
            f64::NAN
        };

        self.phase += 1;
        self.games_played += cfg.games_per_optimization;
        let mut improved = false;
        self.last_eval = None;
        if self.games_played % cfg.eval_interval_games == 0 {
            let score = evaluate_vs_greedy(Arc::new(self.net.clone()), cfg.eval_games, &cfg.mcts, self.seeds.eval)?;
            self.last_eval = Some(score);
            if self.best.as_ref().is_none_or(|b| score > b.meta.eval_score) {
                self.best = Some(self.last_checkpoint());
                improved = true;
            }
        }
        let row = MetricsRow {
            phase: self.phase,
            games_played: self.games_played,
            mean_loss,
            eval_win_rate: self.last_eval,
            wall_time: self.wall_offset + started.elapsed().as_secs_f64(),
        };
        self.metrics.push(row.clone());
        Ok((row, improved))
    }

    fn outcome(&self) -> Result<TrainOutcome, TrainError> {
        let last = self.last_checkpoint();
        Ok(TrainOutcome {
            best: self.best.clone().unwrap_or_else(|| last.clone()),
            last,
            metrics: self.metrics.clone(),
            schedule: self.cfg.schedule()?,
        })
    }
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, TrainError> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| TrainError::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Train in memory, without writing any files.
pub fn training_loop(cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    training_loop_with(cfg, |_| {})
}

/// As [`training_loop`], calling `on_phase` after every phase.
pub fn training_loop_with(
    cfg: &TrainConfig,
    mut on_phase: impl FnMut(&MetricsRow) + Send,
) -> Result<TrainOutcome, TrainError> {
    let schedule = cfg.schedule()?;
    with_workers(cfg.workers, || {
        let mut t = Trainer::fresh(*cfg)?;
        let started = Instant::now();
        while t.phase < schedule.phases {
            let (row, _) = t.run_phase(started)?;
            on_phase(&row);
        }
        t.outcome()
    })?
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), TrainError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).and_then(|_| fs::rename(&tmp, path)).map_err(|e| TrainError::io(path, e))
}

/// Train with all artifacts in `dir`: `metrics.csv`, `last.ckpt` (every
/// phase), `best.ckpt`, a config snapshot and a resumable state file
/// written at every evaluation point and at the end.
pub fn train_to_dir(
    cfg: &TrainConfig,
    dir: &Path,
    opts: RunOptions,
    mut on_phase: impl FnMut(&MetricsRow) + Send,
) -> Result<TrainOutcome, TrainError> {
    let schedule = cfg.schedule()?;
    fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
    let state_path = dir.join(STATE_FILE);
    with_workers(cfg.workers, || {
        let mut t = if opts.resume {
            if !state_path.exists() {
                return Err(TrainError::Resume(format!("no {STATE_FILE} in {}", dir.display())));
            }
            Trainer::from_saved(*cfg, SavedState::load(&state_path, cfg.adam)?)?
        } else {
            if state_path.exists() {
                return Err(TrainError::Resume(format!(
                    "{} already holds a training run; resume it or pick another directory",
                    dir.display()
                )));
            }
            Trainer::fresh(*cfg)?
        };
        write_atomic(&dir.join(CONFIG_SNAPSHOT), cfg.to_config_text().as_bytes())?;
        write_atomic(&dir.join(METRICS_FILE), metrics_csv(&t.metrics).as_bytes())?;
        let started = Instant::now();
        let stop = opts.stop_after_phase.unwrap_or(u64::MAX).min(schedule.phases);
        while t.phase < stop {
            let (row, improved) = t.run_phase(started)?;
            write_atomic(&dir.join(METRICS_FILE), metrics_csv(&t.metrics).as_bytes())?;
            save_checkpoint(&dir.join(LAST_CHECKPOINT), &t.last_checkpoint())?;
            if improved {
                save_checkpoint(&dir.join(BEST_CHECKPOINT), t.best.as_ref().expect("just improved"))?;
            }
            if row.eval_win_rate.is_some() || t.phase == stop {
                t.saved(t.wall_offset + started.elapsed().as_secs_f64()).save(&state_path)?;
            }
            on_phase(&row);
        }
        if t.best.is_none() && t.phase == schedule.phases {
            save_checkpoint(&dir.join(BEST_CHECKPOINT), &t.last_checkpoint())?;
        }
        t.outcome()
    })?
}

/// Seed of replica `r` of a run seeded with `seed`.
pub fn replica_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        rng::derive_seed(rng::derive_tagged(seed, "replica"), r as u64)
    }
}
