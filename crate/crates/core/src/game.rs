//! The two-player competitive knapsack game.
//!
//! Players alternate drafting items from a shared pool, each under their own
//! weight limit. A player with no item that fits must pass, and two passes in
//! a row end the game. The larger collected value wins; an exact tie is a
//! draw worth one half to each side.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instances::Instance;

/// Item pools are tracked as bitsets.
pub const MAX_ITEMS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("game is over")]
    Terminal,
    #[error("game is not over yet")]
    NotTerminal,
    #[error("illegal: item {0} does not exist")]
    NoSuchItem(usize),
    #[error("illegal: item owned (item {0})")]
    ItemOwned(usize),
    #[error("illegal: item {0} exceeds the weight limit")]
    OverCapacity(usize),
    #[error("illegal: pass while item {0} still fits")]
    VoluntaryPass(usize),
    #[error("instance has {0} items, more than the supported {MAX_ITEMS}")]
    TooManyItems(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    Take(usize),
    Pass,
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::Take(i) => write!(f, "{i}"),
            Move::Pass => write!(f, "P"),
        }
    }
}

impl std::str::FromStr for Move {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "P" | "p" | "pass" => Ok(Move::Pass),
            t => t.parse().map(Move::Take).map_err(|_| format!("not a move: {t:?}")),
        }
    }
}

/// Final scores, indexed by player.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    scores: [f64; 2],
}

impl Outcome {
    pub fn score_for(&self, player: usize) -> f64 {
        self.scores[player]
    }

    pub fn scores(&self) -> [f64; 2] {
        self.scores
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    inst: Arc<Instance>,
    taken: [u64; 2],
    weight: [f64; 2],
    value: [f64; 2],
    to_move: usize,
    passes: u8,
}

impl GameState {
    pub fn new(inst: Arc<Instance>) -> Result<Self, GameError> {
        if inst.n() > MAX_ITEMS {
            return Err(GameError::TooManyItems(inst.n()));
        }
        Ok(Self {
            inst,
            taken: [0; 2],
            weight: [0.0; 2],
            value: [0.0; 2],
            to_move: 0,
            passes: 0,
        })
    }

    pub fn instance(&self) -> &Arc<Instance> {
        &self.inst
    }

    pub fn n(&self) -> usize {
        self.inst.n()
    }

    pub fn to_move(&self) -> usize {
        self.to_move
    }

    pub fn consecutive_passes(&self) -> u8 {
        self.passes
    }

    pub fn taken(&self, player: usize) -> u64 {
        self.taken[player]
    }

    pub fn player_weight(&self, player: usize) -> f64 {
        self.weight[player]
    }

    pub fn player_value(&self, player: usize) -> f64 {
        self.value[player]
    }

    pub fn owner(&self, item: usize) -> Option<usize> {
        let bit = 1u64 << item;
        (0..2).find(|&p| self.taken[p] & bit != 0)
    }

    pub fn is_terminal(&self) -> bool {
        self.passes >= 2
    }

    fn fits(&self, item: usize) -> bool {
        let bit = 1u64 << item;
        (self.taken[0] | self.taken[1]) & bit == 0
            && self.weight[self.to_move] + self.inst.weights()[item] <= self.inst.capacity()
    }

    /// Items the player to move may take, as a mask over item indices.
    pub fn legal_mask(&self) -> Vec<bool> {
        (0..self.n()).map(|i| !self.is_terminal() && self.fits(i)).collect()
    }

    /// True when the player to move has nothing that fits.
    pub fn must_pass(&self) -> bool {
        !self.is_terminal() && !(0..self.n()).any(|i| self.fits(i))
    }

    pub fn legal_moves(&self) -> Result<Vec<Move>, GameError> {
        if self.is_terminal() {
            return Err(GameError::Terminal);
        }
        let takes: Vec<Move> = (0..self.n()).filter(|&i| self.fits(i)).map(Move::Take).collect();
        if takes.is_empty() {
            Ok(vec![Move::Pass])
        } else {
            Ok(takes)
        }
    }

    pub fn check_move(&self, mv: Move) -> Result<(), GameError> {
        if self.is_terminal() {
            return Err(GameError::Terminal);
        }
        match mv {
            Move::Take(i) if i >= self.n() => Err(GameError::NoSuchItem(i)),
            Move::Take(i) if self.owner(i).is_some() => Err(GameError::ItemOwned(i)),
            Move::Take(i) if !self.fits(i) => Err(GameError::OverCapacity(i)),
            Move::Take(_) => Ok(()),
            Move::Pass => match (0..self.n()).find(|&i| self.fits(i)) {
                Some(i) => Err(GameError::VoluntaryPass(i)),
                None => Ok(()),
            },
        }
    }

    pub fn apply_move(&self, mv: Move) -> Result<GameState, GameError> {
        self.check_move(mv)?;
        let mut next = self.clone();
        match mv {
            Move::Take(i) => {
                let p = self.to_move;
                next.taken[p] |= 1 << i;
                next.weight[p] += self.inst.weights()[i];
                next.value[p] += self.inst.values()[i];
                next.passes = 0;
            }
            Move::Pass => next.passes += 1,
        }
        next.to_move = 1 - self.to_move;
        Ok(next)
    }

    /// Apply forced passes until a player has a real choice or the game ends.
    /// Returns the passes applied.
    pub fn skip_forced_passes(&mut self) -> usize {
        let mut count = 0;
        while self.must_pass() {
            *self = self.apply_move(Move::Pass).expect("forced pass is legal");
            count += 1;
        }
        count
    }

    pub fn outcome(&self) -> Result<Outcome, GameError> {
        if !self.is_terminal() {
            return Err(GameError::NotTerminal);
        }
        let (a, b) = (self.value[0], self.value[1]);
        let scores = if a > b {
            [1.0, 0.0]
        } else if b > a {
            [0.0, 1.0]
        } else {
            [0.5, 0.5]
        };
        Ok(Outcome { scores })
    }

    /// Network input: weights, values, items held by the player to move,
    /// items held by the opponent.
    pub fn encode(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(4 * n);
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(self.inst.weights());
        out.extend_from_slice(self.inst.values());
        let me = self.taken[self.to_move];
        let them = self.taken[1 - self.to_move];
        let n = self.n();
        out.extend((0..n).map(|i| ((me >> i) & 1) as f64));
        out.extend((0..n).map(|i| ((them >> i) & 1) as f64));
    }
}

impl fmt::Display for GameState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "item  value   weight  owner")?;
        for i in 0..self.n() {
            let owner = match self.owner(i) {
                Some(p) => format!("P{p}"),
                None => "-".into(),
            };
            writeln!(
                f,
                "{:>4}  {:.4}  {:.4}  {}",
                i,
                self.inst.values()[i],
                self.inst.weights()[i],
                owner
            )?;
        }
        for p in 0..2 {
            writeln!(
                f,
                "P{p}: value {:.4}, weight {:.4} / {}",
                self.value[p],
                self.weight[p],
                self.inst.capacity()
            )?;
        }
        write!(f, "to move: P{}", self.to_move)
    }
}

/// A finished game: which instance, who moved first, the moves, the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub instance_seed: u64,
    pub n: usize,
    pub moves: Vec<Move>,
    pub scores: [f64; 2],
}

impl GameRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("game record serializes")
    }

    pub fn parse_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }

    /// Replay the moves from a fresh game on `inst`.
    pub fn replay(&self, inst: Arc<Instance>) -> Result<GameState, GameError> {
        let mut st = GameState::new(inst)?;
        for &mv in &self.moves {
            st = st.apply_move(mv)?;
        }
        Ok(st)
    }
}
