//! Agents and the machinery for pitting them against each other.

mod minimax;
mod tournament;

pub use minimax::{minimax_value, MinimaxEvaluator, MinimaxSolver, MINIMAX_MAX_ITEMS};
pub use tournament::{
    match_log_csv, pair_instance_seed, play_game, play_match, round_robin, MatchGame, MatchResult, WinMatrix,
};

use std::path::Path;
use std::sync::Arc;

use rand::Rng as _;
use thiserror::Error;

use crate::game::{GameError, GameState, Move};
use crate::mcts::{sample_move, MctsConfig, MctsError, SearchTree, SelectionMode};
use crate::nn::{load_checkpoint, CheckpointError, Mlp};
use crate::rng::{self, Rng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArenaError {
    #[error("{0} items is too many for the exact solver (max {MINIMAX_MAX_ITEMS})")]
    TooLargeForMinimax(usize),
    #[error("agent {label} plays {found}-item games, match uses {expected}")]
    ItemMismatch { label: String, expected: usize, found: usize },
    #[error("agent {label} chose an illegal move: {source}")]
    IllegalMove { label: String, source: GameError },
    #[error("a tournament needs at least two agents")]
    TooFewAgents,
    #[error("cannot load agent {label}: {reason}")]
    Load { label: String, reason: String },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Search(#[from] MctsError),
}

/// A player. Agents see every decision state of their own and are told
/// about every take so search trees can follow the game.
pub trait Agent {
    fn begin_game(&mut self, st: &GameState, game_seed: u64);

    /// Pick a move for a state with at least one legal take.
    fn choose(&mut self, st: &GameState) -> Result<Move, ArenaError>;

    /// A take by either player has just been applied.
    fn observe(&mut self, _item: usize) -> Result<(), ArenaError> {
        Ok(())
    }
}

/// Always takes the fitting item with the best value/weight ratio.
#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyAgent;

pub fn greedy_move(st: &GameState) -> Result<Move, GameError> {
    let mut best: Option<usize> = None;
    let mut best_ratio = f64::NEG_INFINITY;
    for mv in st.legal_moves()? {
        if let Move::Take(i) = mv {
            let r = st.instance().ratio(i);
            if r > best_ratio {
                best_ratio = r;
                best = Some(i);
            }
        }
    }
    Ok(best.map_or(Move::Pass, Move::Take))
}

impl Agent for GreedyAgent {
    fn begin_game(&mut self, _st: &GameState, _game_seed: u64) {}

    fn choose(&mut self, st: &GameState) -> Result<Move, ArenaError> {
        Ok(greedy_move(st)?)
    }
}

/// Uniformly random legal take.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    seed: u64,
    rng: Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: rng::seeded(seed) }
    }
}

impl Agent for RandomAgent {
    fn begin_game(&mut self, _st: &GameState, game_seed: u64) {
        self.rng = rng::seeded(rng::derive_seed(self.seed, game_seed));
    }

    fn choose(&mut self, st: &GameState) -> Result<Move, ArenaError> {
        let moves = st.legal_moves()?;
        Ok(moves[self.rng.random_range(0..moves.len())])
    }
}

/// Plays an exactly optimal move (small games only).
#[derive(Debug, Default)]
pub struct MinimaxAgent {
    solver: MinimaxSolver,
}

impl Agent for MinimaxAgent {
    fn begin_game(&mut self, _st: &GameState, _game_seed: u64) {
        self.solver.clear();
    }

    fn choose(&mut self, st: &GameState) -> Result<Move, ArenaError> {
        self.solver.best_move(st)
    }
}

/// Network-guided tree search that keeps its tree across turns.
#[derive(Debug, Clone)]
pub struct NetAgent {
    net: Arc<Mlp>,
    cfg: MctsConfig,
    mode: SelectionMode,
    tree: Option<SearchTree>,
    rng: Rng,
}

impl NetAgent {
    pub fn new(net: Arc<Mlp>, cfg: MctsConfig, mode: SelectionMode) -> Self {
        Self { net, cfg, mode, tree: None, rng: rng::seeded(0) }
    }
}

impl Agent for NetAgent {
    fn begin_game(&mut self, st: &GameState, game_seed: u64) {
        self.tree = Some(SearchTree::new(st.clone()));
        self.rng = rng::seeded(rng::derive_tagged(game_seed, "net-agent"));
    }

    fn choose(&mut self, st: &GameState) -> Result<Move, ArenaError> {
        let tree = self.tree.get_or_insert_with(|| SearchTree::new(st.clone()));
        if tree.root().state != *st {
            *tree = SearchTree::new(st.clone());
        }
        let pi = tree.run_search(&*self.net, &self.cfg, &mut self.rng)?;
        Ok(Move::Take(sample_move(&pi, self.mode, &mut self.rng)))
    }

    fn observe(&mut self, item: usize) -> Result<(), ArenaError> {
        if let Some(tree) = &mut self.tree {
            tree.advance_root(item)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum AgentKind {
    Net { net: Arc<Mlp>, mcts: MctsConfig, mode: SelectionMode },
    Greedy,
    Random { seed: u64 },
    Minimax,
}

/// A named, instantiable agent description.
#[derive(Debug, Clone)]
pub struct AgentSpec {
    pub label: String,
    pub kind: AgentKind,
    /// Replicas of the same network size share a group; tournaments can
    /// pool their results.
    pub group: Option<String>,
}

impl AgentSpec {
    pub fn greedy() -> Self {
        Self { label: "greedy".into(), kind: AgentKind::Greedy, group: None }
    }

    pub fn random(seed: u64) -> Self {
        Self { label: "random".into(), kind: AgentKind::Random { seed }, group: None }
    }

    pub fn minimax() -> Self {
        Self { label: "minimax".into(), kind: AgentKind::Minimax, group: None }
    }

    /// Net agent playing the argmax of its search policy.
    pub fn net(label: impl Into<String>, net: Arc<Mlp>, mcts: MctsConfig) -> Self {
        Self {
            label: label.into(),
            kind: AgentKind::Net { net, mcts, mode: SelectionMode::Argmax },
            group: None,
        }
    }

    pub fn from_checkpoint(label: impl Into<String>, path: &Path, mcts: MctsConfig) -> Result<Self, ArenaError> {
        let label = label.into();
        let ck = load_checkpoint(path).map_err(|e: CheckpointError| ArenaError::Load {
            label: label.clone(),
            reason: e.to_string(),
        })?;
        Ok(Self::net(label, Arc::new(ck.net), mcts))
    }

    pub fn with_group(mut self, group: impl Into<String>) -> Self {
        self.group = Some(group.into());
        self
    }

    /// Hidden width for network agents.
    pub fn hidden_width(&self) -> Option<usize> {
        match &self.kind {
            AgentKind::Net { net, .. } => Some(net.hidden_width()),
            _ => None,
        }
    }

    pub fn instantiate(&self, n: usize) -> Result<Box<dyn Agent + Send>, ArenaError> {
        Ok(match &self.kind {
            AgentKind::Net { net, mcts, mode } => {
                if net.n() != n {
                    return Err(ArenaError::ItemMismatch { label: self.label.clone(), expected: n, found: net.n() });
                }
                mcts.validate()?;
                Box::new(NetAgent::new(net.clone(), *mcts, *mode))
            }
            AgentKind::Greedy => Box::new(GreedyAgent),
            AgentKind::Random { seed } => Box::new(RandomAgent::new(*seed)),
            AgentKind::Minimax => {
                if n > MINIMAX_MAX_ITEMS {
                    return Err(ArenaError::TooLargeForMinimax(n));
                }
                Box::new(MinimaxAgent::default())
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate_weakly_correlated, Instance};
    use proptest::prelude::*;

    #[test]
    fn greedy_examples() {
        let st = GameState::new(Arc::new(generate_weakly_correlated(16, 3).unwrap())).unwrap();
        assert_eq!(greedy_move(&st).unwrap(), Move::Take(0));

        // only item 5 fits
        let w = vec![0.9, 0.9, 0.9, 0.9, 0.9, 0.2];
        let v = vec![0.99, 0.98, 0.97, 0.96, 0.95, 0.1];
        let st = GameState::new(Arc::new(Instance::new(v, w, 0.5, 0).unwrap())).unwrap();
        assert_eq!(greedy_move(&st).unwrap(), Move::Take(5));

        let st = GameState::new(Arc::new(Instance::new(vec![0.9], vec![5.0], 4.0, 0).unwrap())).unwrap();
        assert_eq!(greedy_move(&st).unwrap(), Move::Pass);
    }

    #[test]
    fn net_agent_rejects_wrong_item_count() {
        let spec = AgentSpec::net("n16", Arc::new(Mlp::new(16, 4, 0).unwrap()), MctsConfig::default());
        assert!(matches!(spec.instantiate(8), Err(ArenaError::ItemMismatch { .. })));
        assert!(spec.instantiate(16).is_ok());
        assert!(matches!(AgentSpec::minimax().instantiate(16), Err(ArenaError::TooLargeForMinimax(16))));
    }

    proptest! {
        #[test]
        fn greedy_only_plays_legal_moves(seed in any::<u64>(), plies in 0usize..30) {
            let mut r = rng::seeded(seed);
            let mut st = GameState::new(Arc::new(generate_weakly_correlated(16, seed).unwrap())).unwrap();
            for _ in 0..plies {
                if st.is_terminal() { break; }
                let moves = st.legal_moves().unwrap();
                st = st.apply_move(moves[r.random_range(0..moves.len())]).unwrap();
            }
            if !st.is_terminal() {
                let mv = greedy_move(&st).unwrap();
                prop_assert!(st.check_move(mv).is_ok());
            }
        }
    }
}
