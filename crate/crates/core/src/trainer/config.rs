use std::fmt::Write as _;

use crate::mcts::{MctsConfig, RootNoise, UnvisitedValue};
use crate::nn::AdamConfig;

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub n: usize,
    pub hidden_width: usize,
    pub total_games: u64,
    pub games_per_optimization: u64,
    pub eval_interval_games: u64,
    pub eval_games: usize,
    pub mcts: MctsConfig,
    pub replicas: usize,
    pub buffer_capacity: usize,
    /// Adam steps after each block of self-play games.
    pub optimization_steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Self-play and evaluation threads; 0 uses every core. Results do not
    /// depend on this.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n: 16,
            hidden_width: 32,
            total_games: 40_000,
            games_per_optimization: 40,
            eval_interval_games: 4_000,
            eval_games: 200,
            mcts: MctsConfig::default(),
            replicas: 4,
            buffer_capacity: 100_000,
            optimization_steps: 50,
            batch_size: 128,
            adam: AdamConfig::default(),
            seed: 0,
            workers: 0,
        }
    }
}

/// Phase counts implied by a config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub phases: u64,
    pub evaluations: u64,
    /// `games_played` after which each evaluation runs.
    pub eval_points: Vec<u64>,
    pub optimization_steps: u64,
}

fn bad(msg: impl Into<String>) -> TrainError {
    TrainError::Config(msg.into())
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.n == 0 || self.n > crate::game::MAX_ITEMS {
            return Err(bad(format!("n must be in 1..={}", crate::game::MAX_ITEMS)));
        }
        if self.hidden_width == 0 {
            return Err(bad("hidden_width must be positive"));
        }
        if self.games_per_optimization == 0 {
            return Err(bad("games_per_optimization must be positive"));
        }
        if self.total_games == 0 || self.total_games % self.games_per_optimization != 0 {
            return Err(bad(format!(
                "total_games ({}) must be a positive multiple of games_per_optimization ({})",
                self.total_games, self.games_per_optimization
            )));
        }
        if self.eval_interval_games == 0 || self.eval_interval_games % self.games_per_optimization != 0 {
            return Err(bad(format!(
                "eval_interval ({}) must be a positive multiple of games_per_optimization ({})",
                self.eval_interval_games, self.games_per_optimization
            )));
        }
        if self.eval_games < 2 || self.eval_games % 2 != 0 {
            return Err(bad("eval_games must be even and at least 2"));
        }
        if self.replicas == 0 {
            return Err(bad("replicas must be positive"));
        }
        if self.buffer_capacity == 0 || self.batch_size == 0 {
            return Err(bad("buffer_capacity and batch_size must be positive"));
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return Err(bad("learning_rate must be positive and betas in [0, 1)"));
        }
        if !(a.epsilon > 0.0) || !(a.weight_decay >= 0.0) {
            return Err(bad("epsilon must be positive and weight_decay non-negative"));
        }
        self.mcts.validate().map_err(|e| bad(e.to_string()))
    }

    pub fn schedule(&self) -> Result<Schedule, TrainError> {
        self.validate()?;
        let phases = self.total_games / self.games_per_optimization;
        let eval_points: Vec<u64> = (1..=self.total_games / self.eval_interval_games)
            .map(|k| k * self.eval_interval_games)
            .collect();
        Ok(Schedule {
            phases,
            evaluations: eval_points.len() as u64,
            eval_points,
            optimization_steps: phases * self.optimization_steps as u64,
        })
    }

    /// Flat `key=value` text listing every field.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").unwrap();
        kv("n", self.n.to_string());
        kv("hidden_width", self.hidden_width.to_string());
        kv("total_games", self.total_games.to_string());
        kv("games_per_optimization", self.games_per_optimization.to_string());
        kv("eval_interval", self.eval_interval_games.to_string());
        kv("eval_games", self.eval_games.to_string());
        kv("mcts_iters", self.mcts.iterations.to_string());
        kv("c_puct", self.mcts.c_puct.to_string());
        kv("temperature", self.mcts.temperature.to_string());
        kv(
            "unvisited_value",
            match self.mcts.unvisited {
                UnvisitedValue::Constant(v) => v.to_string(),
                UnvisitedValue::ParentMean => "parent".into(),
            },
        );
        let (alpha, fraction) = self.mcts.root_noise.map_or((0.0, 0.0), |r| (r.alpha, r.fraction));
        kv("root_noise_alpha", alpha.to_string());
        kv("root_noise_fraction", fraction.to_string());
        kv("replicas", self.replicas.to_string());
        kv("buffer_capacity", self.buffer_capacity.to_string());
        kv("optimization_steps", self.optimization_steps.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("learning_rate", self.adam.learning_rate.to_string());
        kv("beta1", self.adam.beta1.to_string());
        kv("beta2", self.adam.beta2.to_string());
        kv("epsilon", self.adam.epsilon.to_string());
        kv("weight_decay", self.adam.weight_decay.to_string());
        kv("seed", self.seed.to_string());
        kv("workers", self.workers.to_string());
        s
    }

    /// Set one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, TrainError> {
            value.parse().map_err(|_| bad(format!("bad value for {key}: {value:?}")))
        }
        let mut noise = self.mcts.root_noise.unwrap_or(RootNoise { alpha: 0.0, fraction: 0.0 });
        match key {
            "n" => self.n = num(key, value)?,
            "hidden_width" => self.hidden_width = num(key, value)?,
            "total_games" => self.total_games = num(key, value)?,
            "games_per_optimization" => self.games_per_optimization = num(key, value)?,
            "eval_interval" => self.eval_interval_games = num(key, value)?,
            "eval_games" => self.eval_games = num(key, value)?,
            "mcts_iters" => self.mcts.iterations = num(key, value)?,
            "c_puct" => self.mcts.c_puct = num(key, value)?,
            "temperature" => self.mcts.temperature = num(key, value)?,
            "unvisited_value" => {
                self.mcts.unvisited = if value == "parent" {
                    UnvisitedValue::ParentMean
                } else {
                    UnvisitedValue::Constant(num(key, value)?)
                }
            }
            "root_noise_alpha" => noise.alpha = num(key, value)?,
            "root_noise_fraction" => noise.fraction = num(key, value)?,
            "replicas" => self.replicas = num(key, value)?,
            "buffer_capacity" => self.buffer_capacity = num(key, value)?,
            "optimization_steps" => self.optimization_steps = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "learning_rate" => self.adam.learning_rate = num(key, value)?,
            "beta1" => self.adam.beta1 = num(key, value)?,
            "beta2" => self.adam.beta2 = num(key, value)?,
            "epsilon" => self.adam.epsilon = num(key, value)?,
            "weight_decay" => self.adam.weight_decay = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            _ => return Err(bad(format!("unknown config key {key:?}"))),
        }
        if key.starts_with("root_noise_") {
            self.mcts.root_noise = (noise.alpha != 0.0 || noise.fraction != 0.0).then_some(noise);
        }
        Ok(())
    }

    /// Apply a config file on top of `self`. Blank lines and `#` comments
    /// are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), TrainError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| bad(format!("line {}: {}", lineno + 1, e.to_string().trim_start_matches("invalid config: "))))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, TrainError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Identifies everything that affects training results (all fields
    /// except `workers`).
    pub fn fingerprint(&self) -> u64 {
        let text = Self { workers: 0, ..*self }.to_config_text();
        crate::rng::derive_tagged(0, &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule() {
        let s = TrainConfig::default().schedule().unwrap();
        assert_eq!(s.phases, 1000);
        assert_eq!(s.evaluations, 10);
        assert_eq!(s.eval_points.first(), Some(&4000));
        assert_eq!(s.eval_points.last(), Some(&40_000));
    }

    #[test]
    fn rejects_ragged_schedules() {
        let cfg = TrainConfig { total_games: 1010, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(TrainError::Config(_))));
        let cfg = TrainConfig { eval_interval_games: 100, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig { eval_games: 7, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = TrainConfig { hidden_width: 7, seed: 99, ..Default::default() };
        cfg.mcts.root_noise = Some(RootNoise { alpha: 0.3, fraction: 0.25 });
        cfg.mcts.unvisited = UnvisitedValue::ParentMean;
        cfg.adam.learning_rate = 3e-4;
        let back = TrainConfig::from_text(&cfg.to_config_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn default_text_echoes_schedule() {
        let text = TrainConfig::default().to_config_text();
        for line in ["total_games=40000", "eval_interval=4000", "mcts_iters=40"] {
            assert!(text.lines().any(|l| l == line), "{line}");
        }
    }

    #[test]
    fn comments_and_errors() {
        let cfg = TrainConfig::from_text("# schedule\n\ntotal_games = 2000  # desk scale\n").unwrap();
        assert_eq!(cfg.total_games, 2000);
        let err = TrainConfig::from_text("n = 8\nbogus = 1\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(TrainConfig::from_text("n 8").is_err());
        assert!(TrainConfig::from_text("n = eight").is_err());
    }

    #[test]
    fn fingerprint_ignores_workers() {
        let a = TrainConfig::default();
        let b = TrainConfig { workers: 8, ..a };
        let c = TrainConfig { seed: 1, ..a };
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
