use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use crate::game::{GameState, Move};
use crate::instances::Instance;
use crate::mcts::{Evaluation, Evaluator};

use super::ArenaError;

/// Largest game the exact solver accepts (about 3^n ownership states).
pub const MINIMAX_MAX_ITEMS: usize = 12;

type Key = (u64, u64, u8, u8);

/// Exact game values for one instance, memoized on ownership, mover and
/// pass counter.
#[derive(Debug, Default)]
pub struct MinimaxSolver {
    memo: HashMap<Key, f64>,
}

impl MinimaxSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn states_cached(&self) -> usize {
        self.memo.len()
    }

    /// Expected score of the player to move under optimal play by both
    /// sides. The cache is only valid for a single instance; call
    /// [`MinimaxSolver::clear`] before switching.
    pub fn value(&mut self, st: &GameState) -> Result<f64, ArenaError> {
        if st.n() > MINIMAX_MAX_ITEMS {
            return Err(ArenaError::TooLargeForMinimax(st.n()));
        }
        Ok(self.solve(st))
    }

    pub fn clear(&mut self) {
        self.memo.clear();
    }

    fn solve(&mut self, st: &GameState) -> f64 {
        if st.is_terminal() {
            return st.outcome().expect("terminal").score_for(st.to_move());
        }
        let key = (st.taken(0), st.taken(1), st.to_move() as u8, st.consecutive_passes());
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let mut best = f64::NEG_INFINITY;
        for mv in st.legal_moves().expect("not terminal") {
            let next = st.apply_move(mv).expect("legal");
            // apply_move always hands the turn over
            let v = 1.0 - self.solve(&next);
            if v > best {
                best = v;
            }
        }
        self.memo.insert(key, best);
        best
    }

    /// Value-maximizing move; ties go to the lowest item index.
    pub fn best_move(&mut self, st: &GameState) -> Result<Move, ArenaError> {
        let moves = st.legal_moves()?;
        let mut best = (moves[0], f64::NEG_INFINITY);
        for mv in moves {
            let v = 1.0 - self.value(&st.apply_move(mv)?)?;
            if v > best.1 {
                best = (mv, v);
            }
        }
        Ok(best.0)
    }
}

/// Exact value with `n <= 12`.
pub fn minimax_value(st: &GameState) -> Result<f64, ArenaError> {
    MinimaxSolver::new().value(st)
}

/// Search evaluator returning exact values and uniform priors.
#[derive(Debug, Default)]
pub struct MinimaxEvaluator {
    cache: RefCell<(Option<Arc<Instance>>, MinimaxSolver)>,
}

impl MinimaxEvaluator {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Evaluator for MinimaxEvaluator {
    fn evaluate(&self, st: &GameState) -> Evaluation {
        let mut cache = self.cache.borrow_mut();
        let (inst, solver) = &mut *cache;
        if !inst.as_ref().is_some_and(|i| Arc::ptr_eq(i, st.instance())) {
            solver.clear();
            *inst = Some(st.instance().clone());
        }
        let value = solver.value(st).expect("minimax evaluator used on a small game");
        let mask = st.legal_mask();
        let k = mask.iter().filter(|&&b| b).count().max(1) as f64;
        Evaluation { priors: mask.iter().map(|&b| if b { 1.0 / k } else { 0.0 }).collect(), value }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::generate_weakly_correlated;

    fn state(items: &[(f64, f64)], cap: f64) -> GameState {
        GameState::new(Arc::new(Instance::from_items(items, cap, 0).unwrap())).unwrap()
    }

    /// Full game-tree search without any caching.
    fn plain_negamax(st: &GameState) -> f64 {
        if st.is_terminal() {
            return st.outcome().unwrap().score_for(st.to_move());
        }
        st.legal_moves()
            .unwrap()
            .into_iter()
            .map(|mv| 1.0 - plain_negamax(&st.apply_move(mv).unwrap()))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn first_player_takes_the_better_item() {
        let st = state(&[(0.9, 0.5), (0.8, 0.5)], 0.5);
        assert_eq!(minimax_value(&st).unwrap(), 1.0);
        assert_eq!(MinimaxSolver::new().best_move(&st).unwrap(), Move::Take(0));
    }

    #[test]
    fn nobody_can_move_is_a_draw() {
        let st = state(&[(0.9, 5.0)], 4.0);
        assert_eq!(minimax_value(&st).unwrap(), 0.5);
    }

    #[test]
    fn rejects_large_games() {
        let st = GameState::new(Arc::new(generate_weakly_correlated(13, 0).unwrap())).unwrap();
        assert_eq!(minimax_value(&st), Err(ArenaError::TooLargeForMinimax(13)));
    }

    #[test]
    fn memoized_equals_plain_search() {
        for seed in 0..50 {
            let st = GameState::new(Arc::new(generate_weakly_correlated(6, seed).unwrap())).unwrap();
            assert_eq!(minimax_value(&st).unwrap(), plain_negamax(&st), "seed {seed}");
        }
    }

    #[test]
    fn values_are_antisymmetric_along_optimal_line() {
        for seed in 0..20 {
            let mut st = GameState::new(Arc::new(generate_weakly_correlated(7, seed).unwrap())).unwrap();
            let mut solver = MinimaxSolver::new();
            let root = solver.value(&st).unwrap();
            let mover = st.to_move();
            while !st.is_terminal() {
                let v = solver.value(&st).unwrap();
                let mv = solver.best_move(&st).unwrap();
                let next = st.apply_move(mv).unwrap();
                assert_eq!(1.0 - solver.value(&next).unwrap(), v);
                st = next;
            }
            assert_eq!(st.outcome().unwrap().score_for(mover), root);
        }
    }
}
