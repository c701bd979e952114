use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::game::{GameRecord, GameState, Move};
use crate::instances::{generate_weakly_correlated, Instance};
use crate::rng;

use super::{Agent, AgentSpec, ArenaError};

/// Play one game with `agents[0]` moving first. Forced passes are applied
/// by the harness and appear in the record.
pub fn play_game(agents: [&mut dyn Agent; 2], inst: Arc<Instance>, game_seed: u64) -> Result<GameRecord, ArenaError> {
    let [first, second] = agents;
    let mut players: [&mut dyn Agent; 2] = [first, second];
    let mut st = GameState::new(inst.clone())?;
    let mut moves = Vec::new();
    for _ in 0..st.skip_forced_passes() {
        moves.push(Move::Pass);
    }
    for p in players.iter_mut() {
        p.begin_game(&st, game_seed);
    }
    while !st.is_terminal() {
        let mover = st.to_move();
        let mv = players[mover].choose(&st)?;
        let Move::Take(item) = mv else {
            unreachable!("harness only asks agents at decision states")
        };
        st = st.apply_move(mv).map_err(|source| ArenaError::IllegalMove {
            label: format!("seat {mover}"),
            source,
        })?;
        moves.push(mv);
        for p in players.iter_mut() {
            p.observe(item)?;
        }
        for _ in 0..st.skip_forced_passes() {
            moves.push(Move::Pass);
        }
    }
    Ok(GameRecord {
        instance_seed: inst.seed(),
        n: inst.n(),
        moves,
        scores: st.outcome()?.scores(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchGame {
    pub instance_seed: u64,
    pub first_mover: String,
    pub agent_a: String,
    pub agent_b: String,
    pub score_a: f64,
    #[serde(skip)]
    pub record: Option<GameRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub score_a: f64,
    pub score_b: f64,
    pub games: Vec<MatchGame>,
}

impl MatchResult {
    pub fn fraction_a(&self) -> f64 {
        self.score_a / self.games.len() as f64
    }
}

/// Seed of the instance used by games `2k` and `2k + 1` of a match.
pub fn pair_instance_seed(seed: u64, pair: u64) -> u64 {
    rng::derive_seed(seed, pair)
}

/// Play `games` games between `a` and `b` on `n`-item instances.
///
/// Games come in mirrored pairs: both games of a pair use the same
/// instance, with `a` moving first in the even game and `b` in the odd one.
/// Games run in parallel on the current rayon pool; results do not depend
/// on the pool size.
pub fn play_match(a: &AgentSpec, b: &AgentSpec, n: usize, games: usize, seed: u64) -> Result<MatchResult, ArenaError> {
    a.instantiate(n)?;
    b.instantiate(n)?;
    let played: Vec<MatchGame> = (0..games)
        .into_par_iter()
        .map(|g| -> Result<MatchGame, ArenaError> {
            let inst_seed = pair_instance_seed(seed, (g / 2) as u64);
            let inst = Arc::new(
                generate_weakly_correlated(n, inst_seed).expect("n validated by instantiate"),
            );
            let mut agent_a = a.instantiate(n)?;
            let mut agent_b = b.instantiate(n)?;
            let a_first = g % 2 == 0;
            let record = if a_first {
                play_game([agent_a.as_mut(), agent_b.as_mut()], inst, inst_seed)?
            } else {
                play_game([agent_b.as_mut(), agent_a.as_mut()], inst, inst_seed)?
            };
            let score_a = record.scores[if a_first { 0 } else { 1 }];
            Ok(MatchGame {
                instance_seed: inst_seed,
                first_mover: if a_first { a.label.clone() } else { b.label.clone() },
                agent_a: a.label.clone(),
                agent_b: b.label.clone(),
                score_a,
                record: Some(record),
            })
        })
        .collect::<Result<_, _>>()?;
    let score_a: f64 = played.iter().map(|g| g.score_a).sum();
    Ok(MatchResult { score_a, score_b: games as f64 - score_a, games: played })
}

/// Pairwise scores: `wins[i][j]` is what agent `i` scored against `j` over
/// `games[i][j]` games.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinMatrix {
    pub labels: Vec<String>,
    pub wins: Vec<Vec<f64>>,
    pub games: Vec<Vec<u64>>,
}

impl WinMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let k = labels.len();
        Self { labels, wins: vec![vec![0.0; k]; k], games: vec![vec![0; k]; k] }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Record `count` games between `i` and `j` in which `i` scored `score_i`.
    pub fn record(&mut self, i: usize, j: usize, score_i: f64, count: u64) {
        assert_ne!(i, j, "diagonal is unused");
        self.wins[i][j] += score_i;
        self.wins[j][i] += count as f64 - score_i;
        self.games[i][j] += count;
        self.games[j][i] += count;
    }

    /// Observed score fraction of `i` against `j`.
    pub fn observed(&self, i: usize, j: usize) -> Option<f64> {
        (self.games[i][j] > 0).then(|| self.wins[i][j] / self.games[i][j] as f64)
    }

    /// Merge agents that share a group name; cells become the pooled mean
    /// over every cross-pairing of group members.
    pub fn pooled(&self, groups: &[String]) -> WinMatrix {
        assert_eq!(groups.len(), self.len());
        let mut names: Vec<String> = Vec::new();
        for g in groups {
            if !names.contains(g) {
                names.push(g.clone());
            }
        }
        let idx: Vec<usize> = groups.iter().map(|g| names.iter().position(|x| x == g).unwrap()).collect();
        let mut out = WinMatrix::new(names);
        for i in 0..self.len() {
            for j in 0..self.len() {
                if idx[i] != idx[j] {
                    out.wins[idx[i]][idx[j]] += self.wins[i][j];
                    out.games[idx[i]][idx[j]] += self.games[i][j];
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("agent_i,agent_j,score_i,games,observed_p\n");
        for i in 0..self.len() {
            for j in 0..self.len() {
                if let Some(p) = self.observed(i, j) {
                    s.push_str(&format!(
                        "{},{},{},{},{}\n",
                        self.labels[i], self.labels[j], self.wins[i][j], self.games[i][j], p
                    ));
                }
            }
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serializes")
    }
}

/// Every pair of agents plays `games_per_pair` games on the same seeded
/// instance sequence. Pairs inside one replica group are skipped. Returns
/// the per-agent matrix and every game in the order played.
pub fn round_robin(
    agents: &[AgentSpec],
    n: usize,
    games_per_pair: usize,
    seed: u64,
) -> Result<(WinMatrix, Vec<MatchGame>), ArenaError> {
    if agents.len() < 2 {
        return Err(ArenaError::TooFewAgents);
    }
    let mut matrix = WinMatrix::new(agents.iter().map(|a| a.label.clone()).collect());
    let mut log = Vec::new();
    for i in 0..agents.len() {
        for j in i + 1..agents.len() {
            if agents[i].group.is_some() && agents[i].group == agents[j].group {
                continue;
            }
            let result = play_match(&agents[i], &agents[j], n, games_per_pair, seed)?;
            matrix.record(i, j, result.score_a, games_per_pair as u64);
            log.extend(result.games);
        }
    }
    Ok((matrix, log))
}

/// CSV match log with columns instance_seed, first_mover, agent_a, agent_b, score_a.
pub fn match_log_csv(games: &[MatchGame]) -> String {
    let mut s = String::from("instance_seed,first_mover,agent_a,agent_b,score_a\n");
    for g in games {
        s.push_str(&format!("{},{},{},{},{}\n", g.instance_seed, g.first_mover, g.agent_a, g.agent_b, g.score_a));
    }
    s
}
