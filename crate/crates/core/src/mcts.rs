//! PUCT tree search with tree reuse between turns.
//!
//! Nodes hold decision states only: after every take, forced passes are
//! applied immediately, so a child may have the same player to move as its
//! parent. Each node's statistics are from the viewpoint of its own player
//! to move; backups translate through player 0's score so that a change of
//! mover flips `v` to `1 - v` and an unchanged mover keeps it.

use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;
use thiserror::Error;

use crate::game::{GameError, GameState, Move};
use crate::nn::Mlp;
use crate::rng::Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MctsError {
    #[error("search root is terminal")]
    TerminalRoot,
    #[error("search root has no decision (forced pass)")]
    ForcedPassRoot,
    #[error("invalid search config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Value assumed for a child that has never been visited.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnvisitedValue {
    Constant(f64),
    /// The parent's own mean score.
    ParentMean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootNoise {
    pub alpha: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MctsConfig {
    pub iterations: usize,
    pub c_puct: f64,
    pub temperature: f64,
    pub unvisited: UnvisitedValue,
    pub root_noise: Option<RootNoise>,
}

impl Default for MctsConfig {
    fn default() -> Self {
        Self {
            iterations: 40,
            c_puct: 1.5,
            temperature: 1.0,
            unvisited: UnvisitedValue::Constant(0.5),
            root_noise: None,
        }
    }
}

impl MctsConfig {
    pub fn validate(&self) -> Result<(), MctsError> {
        if self.iterations == 0 {
            return Err(MctsError::InvalidConfig("iterations must be at least 1"));
        }
        if !(self.c_puct > 0.0 && self.c_puct.is_finite()) {
            return Err(MctsError::InvalidConfig("c_puct must be positive"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(MctsError::InvalidConfig("temperature must be positive"));
        }
        if let Some(RootNoise { alpha, fraction }) = self.root_noise {
            if !(alpha > 0.0) || !(0.0..=1.0).contains(&fraction) {
                return Err(MctsError::InvalidConfig("root noise needs alpha > 0 and fraction in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Prior over items (zero on illegal items) and the expected score of the
/// player to move.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub priors: Vec<f64>,
    pub value: f64,
}

pub trait Evaluator {
    /// Called only on non-terminal states with at least one legal take.
    fn evaluate(&self, st: &GameState) -> Evaluation;
}

impl Evaluator for Mlp {
    fn evaluate(&self, st: &GameState) -> Evaluation {
        let out = self
            .forward(&st.encode(), &st.legal_mask())
            .expect("decision state matches network dimensions");
        Evaluation { priors: out.policy, value: out.value }
    }
}

/// Uniform priors and a neutral value; useful as a baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformEvaluator;

impl Evaluator for UniformEvaluator {
    fn evaluate(&self, st: &GameState) -> Evaluation {
        let mask = st.legal_mask();
        let k = mask.iter().filter(|&&b| b).count() as f64;
        Evaluation { priors: mask.iter().map(|&b| if b { 1.0 / k } else { 0.0 }).collect(), value: 0.5 }
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
pub struct Edge {
    pub item: usize,
    pub prior: f64,
    pub child: Option<NodeId>,
}

#[derive(Debug, Clone)]
pub struct SearchNode {
    pub state: GameState,
    pub visits: u32,
    /// Sum of backed-up scores, from this node's mover's viewpoint.
    pub total: f64,
    pub edges: Vec<Edge>,
}

impl SearchNode {
    fn fresh(state: GameState) -> Self {
        Self { state, visits: 0, total: 0.0, edges: Vec::new() }
    }

    pub fn mean(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.total / self.visits as f64
        }
    }

    fn is_expanded(&self) -> bool {
        self.visits > 0
    }
}

/// Exploration bonus `c * P * sqrt(sum N) / (1 + N_a)`.
pub fn exploration_bonus(c: f64, prior: f64, sibling_visits: u32, visits: u32) -> f64 {
    c * prior * (sibling_visits as f64).sqrt() / (1.0 + visits as f64)
}

/// Evaluation (greedy argmax) or training (sample) move choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    Sample,
    Argmax,
}

#[derive(Serialize)]
struct TraceChild {
    item: usize,
    prior: f64,
    visits: u32,
    q: Option<f64>,
}

#[derive(Serialize)]
struct TraceRecord {
    to_move: usize,
    visits: u32,
    q: f64,
    children: Vec<TraceChild>,
}

#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
    root: NodeId,
}

impl SearchTree {
    pub fn new(state: GameState) -> Self {
        Self { nodes: vec![SearchNode::fresh(state)], root: 0 }
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[self.root]
    }

    pub fn node(&self, id: NodeId) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Mean score of `child` from the viewpoint of `parent`'s mover.
    fn child_value(&self, parent: &SearchNode, child: &SearchNode) -> f64 {
        let q = child.mean();
        if child.state.to_move() == parent.state.to_move() {
            q
        } else {
            1.0 - q
        }
    }

    /// Index into `edges` of the child maximizing `Q + U`; lowest item wins ties.
    pub fn select_child(&self, id: NodeId, cfg: &MctsConfig) -> usize {
        let node = &self.nodes[id];
        let sibling_visits: u32 = node
            .edges
            .iter()
            .filter_map(|e| e.child.map(|c| self.nodes[c].visits))
            .sum();
        let unvisited = match cfg.unvisited {
            UnvisitedValue::Constant(q) => q,
            UnvisitedValue::ParentMean => node.mean(),
        };
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (k, e) in node.edges.iter().enumerate() {
            let (q, visits) = match e.child {
                Some(c) if self.nodes[c].visits > 0 => {
                    (self.child_value(node, &self.nodes[c]), self.nodes[c].visits)
                }
                _ => (unvisited, 0),
            };
            let score = q + exploration_bonus(cfg.c_puct, e.prior, sibling_visits, visits);
            if score > best_score {
                best_score = score;
                best = k;
            }
        }
        best
    }

    /// Set statistics of a newly reached node and return its value.
    fn expand(&mut self, id: NodeId, eval: &dyn Evaluator) -> f64 {
        let node = &mut self.nodes[id];
        let value = if node.state.is_terminal() {
            let outcome = node.state.outcome().expect("terminal");
            outcome.score_for(node.state.to_move())
        } else {
            let ev = eval.evaluate(&node.state);
            let mask = node.state.legal_mask();
            let mass: f64 = (0..mask.len()).filter(|&i| mask[i]).map(|i| ev.priors[i]).sum();
            let k = mask.iter().filter(|&&b| b).count() as f64;
            node.edges = (0..mask.len())
                .filter(|&i| mask[i])
                .map(|i| Edge {
                    item: i,
                    prior: if mass > 0.0 { ev.priors[i] / mass } else { 1.0 / k },
                    child: None,
                })
                .collect();
            ev.value
        };
        node.visits = 1;
        node.total = value;
        value
    }

    fn backup(&mut self, path: &[NodeId], leaf_mover: usize, value: f64) {
        let for_p0 = if leaf_mover == 0 { value } else { 1.0 - value };
        for &id in path {
            let node = &mut self.nodes[id];
            node.visits += 1;
            node.total += if node.state.to_move() == 0 { for_p0 } else { 1.0 - for_p0 };
        }
    }

    fn child_state(state: &GameState, item: usize) -> Result<GameState, GameError> {
        let mut next = state.apply_move(Move::Take(item))?;
        next.skip_forced_passes();
        Ok(next)
    }

    fn simulate(&mut self, eval: &dyn Evaluator, cfg: &MctsConfig) {
        let mut path = vec![self.root];
        let mut id = self.root;
        loop {
            let k = self.select_child(id, cfg);
            let edge = &self.nodes[id].edges[k];
            let child = match edge.child {
                Some(c) => c,
                None => {
                    let state = Self::child_state(&self.nodes[id].state, edge.item)
                        .expect("edges hold legal takes");
                    self.nodes.push(SearchNode::fresh(state));
                    let c = self.nodes.len() - 1;
                    self.nodes[id].edges[k].child = Some(c);
                    c
                }
            };
            if !self.nodes[child].is_expanded() {
                let v = self.expand(child, eval);
                let mover = self.nodes[child].state.to_move();
                self.backup(&path, mover, v);
                return;
            }
            if self.nodes[child].state.is_terminal() {
                let node = &self.nodes[child];
                let v = node.state.outcome().expect("terminal").score_for(node.state.to_move());
                let mover = node.state.to_move();
                path.push(child);
                self.backup(&path, mover, v);
                return;
            }
            path.push(child);
            id = child;
        }
    }

    fn add_root_noise(&mut self, noise: RootNoise, rng: &mut Rng) {
        let gamma = Gamma::new(noise.alpha, 1.0).expect("validated alpha");
        let root = &mut self.nodes[self.root];
        let draws: Vec<f64> = root.edges.iter().map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        if sum <= 0.0 {
            return;
        }
        for (e, d) in root.edges.iter_mut().zip(draws) {
            e.prior = (1.0 - noise.fraction) * e.prior + noise.fraction * d / sum;
        }
    }

    /// Run `cfg.iterations` simulations from the root and return the
    /// improved policy over items.
    ///
    /// A fresh root is expanded first, which counts as one visit, so a new
    /// tree ends with `iterations + 1` root visits.
    pub fn run_search(
        &mut self,
        eval: &dyn Evaluator,
        cfg: &MctsConfig,
        rng: &mut Rng,
    ) -> Result<Vec<f64>, MctsError> {
        cfg.validate()?;
        let root = &self.nodes[self.root];
        if root.state.is_terminal() {
            return Err(MctsError::TerminalRoot);
        }
        if root.state.must_pass() {
            return Err(MctsError::ForcedPassRoot);
        }
        if !root.is_expanded() {
            self.expand(self.root, eval);
        }
        if let Some(noise) = cfg.root_noise {
            self.add_root_noise(noise, rng);
        }
        for _ in 0..cfg.iterations {
            self.simulate(eval, cfg);
        }
        Ok(self.improved_policy(cfg.temperature))
    }

    /// Root visit counts as an item distribution, `pi_i ~ N_i^(1/tau)`.
    pub fn improved_policy(&self, temperature: f64) -> Vec<f64> {
        let root = &self.nodes[self.root];
        let mut counts = vec![0.0; root.state.n()];
        for e in &root.edges {
            if let Some(c) = e.child {
                counts[e.item] = self.nodes[c].visits as f64;
            }
        }
        policy_from_visits(&counts, temperature)
    }

    /// Make the child reached by taking `item` the new root, dropping every
    /// other subtree. An unexplored action yields a fresh root.
    pub fn advance_root(&mut self, item: usize) -> Result<(), MctsError> {
        let root = &self.nodes[self.root];
        let existing = root.edges.iter().find(|e| e.item == item).and_then(|e| e.child);
        match existing {
            Some(child) => {
                self.compact_from(child);
                Ok(())
            }
            None => {
                let state = Self::child_state(&root.state, item)?;
                *self = Self::new(state);
                Ok(())
            }
        }
    }

    fn compact_from(&mut self, new_root: NodeId) {
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut order = vec![new_root];
        remap[new_root] = 0;
        let mut head = 0;
        while head < order.len() {
            let id = order[head];
            head += 1;
            for e in &self.nodes[id].edges {
                if let Some(c) = e.child {
                    remap[c] = order.len();
                    order.push(c);
                }
            }
        }
        let mut old: Vec<Option<SearchNode>> = std::mem::take(&mut self.nodes).into_iter().map(Some).collect();
        self.nodes = order
            .iter()
            .map(|&id| {
                let mut node = old[id].take().expect("each node kept once");
                for e in &mut node.edges {
                    e.child = e.child.map(|c| remap[c]);
                }
                node
            })
            .collect();
        self.root = 0;
    }

    /// One JSON line describing the root's children, for debugging.
    pub fn trace_record(&self) -> String {
        let root = &self.nodes[self.root];
        let rec = TraceRecord {
            to_move: root.state.to_move(),
            visits: root.visits,
            q: root.mean(),
            children: root
                .edges
                .iter()
                .map(|e| {
                    let child = e.child.map(|c| &self.nodes[c]).filter(|c| c.visits > 0);
                    TraceChild {
                        item: e.item,
                        prior: e.prior,
                        visits: child.map_or(0, |c| c.visits),
                        q: child.map(|c| self.child_value(root, c)),
                    }
                })
                .collect(),
        };
        serde_json::to_string(&rec).expect("trace serializes")
    }
}

/// `pi_i ~ N_i^(1/tau)`, computed relative to the largest count.
pub fn policy_from_visits(counts: &[f64], temperature: f64) -> Vec<f64> {
    let max = counts.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return vec![0.0; counts.len()];
    }
    let scaled: Vec<f64> = counts.iter().map(|&c| (c / max).powf(1.0 / temperature)).collect();
    let z: f64 = scaled.iter().sum();
    scaled.into_iter().map(|x| x / z).collect()
}

/// Pick an item from an improved policy.
pub fn sample_move(pi: &[f64], mode: SelectionMode, rng: &mut Rng) -> usize {
    match mode {
        SelectionMode::Argmax => {
            let mut best = 0;
            for (i, &p) in pi.iter().enumerate() {
                if p > pi[best] {
                    best = i;
                }
            }
            best
        }
        SelectionMode::Sample => {
            let total: f64 = pi.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut last = 0;
            for (i, &p) in pi.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                last = i;
                if u < p {
                    return i;
                }
                u -= p;
            }
            last
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate_weakly_correlated, Instance};
    use crate::rng::seeded;
    use std::sync::Arc;

    fn fresh(n: usize, seed: u64) -> GameState {
        GameState::new(Arc::new(generate_weakly_correlated(n, seed).unwrap())).unwrap()
    }

    #[test]
    fn bonus_examples() {
        assert_eq!(exploration_bonus(1.0, 0.5, 16, 0), 2.0);
        assert_eq!(exploration_bonus(2.0, 0.25, 16, 3), 0.5);
    }

    #[test]
    fn unvisited_sibling_preferred_at_equal_q() {
        let st = GameState::new(Arc::new(Instance::from_items(&[(0.6, 0.5), (0.5, 0.5)], 1.0, 0).unwrap())).unwrap();
        let mut tree = SearchTree::new(st.clone());
        // Root with two edges, equal priors; child 0 visited 5 times with Q = 0.5.
        tree.nodes[0].visits = 6;
        tree.nodes[0].total = 3.0;
        let mut child = SearchNode::fresh(SearchTree::child_state(&st, 0).unwrap());
        child.visits = 5;
        child.total = 2.5;
        tree.nodes.push(child);
        tree.nodes[0].edges = vec![
            Edge { item: 0, prior: 0.5, child: Some(1) },
            Edge { item: 1, prior: 0.5, child: None },
        ];
        assert_eq!(tree.select_child(0, &MctsConfig::default()), 1);
    }

    #[test]
    fn ties_break_to_lowest_item() {
        let mut tree = SearchTree::new(fresh(6, 1));
        tree.expand(0, &UniformEvaluator);
        assert_eq!(tree.select_child(0, &MctsConfig::default()), 0);
    }

    #[test]
    fn policy_from_counts() {
        assert_eq!(policy_from_visits(&[10.0, 30.0, 0.0], 1.0), vec![0.25, 0.75, 0.0]);
        let sharp = policy_from_visits(&[10.0, 30.0, 0.0], 0.5);
        assert!((sharp[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn fresh_root_visits_are_iterations_plus_one() {
        let net = Mlp::new(8, 8, 1).unwrap();
        let mut tree = SearchTree::new(fresh(8, 2));
        let cfg = MctsConfig { iterations: 40, ..Default::default() };
        let pi = tree.run_search(&net, &cfg, &mut seeded(0)).unwrap();
        assert_eq!(tree.root().visits, 41);
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let child_sum: u32 = tree.root().edges.iter().filter_map(|e| e.child).map(|c| tree.node(c).visits).sum();
        assert_eq!(child_sum, 40);
    }

    #[test]
    fn single_legal_move_gives_one_hot() {
        // P0 holds nothing; only item 1 fits (item 0 too heavy).
        let inst = Instance::new(vec![0.9, 0.3], vec![0.5, 0.31], 0.4, 0).unwrap();
        let st = GameState::new(Arc::new(inst)).unwrap();
        let mut tree = SearchTree::new(st);
        let pi = tree.run_search(&UniformEvaluator, &MctsConfig::default(), &mut seeded(0)).unwrap();
        assert_eq!(pi, vec![0.0, 1.0]);
    }

    #[test]
    fn terminal_and_forced_roots_rejected() {
        let inst = Arc::new(Instance::new(vec![0.9], vec![5.0], 4.0, 0).unwrap());
        let st = GameState::new(inst).unwrap();
        let mut tree = SearchTree::new(st.clone());
        let cfg = MctsConfig::default();
        assert_eq!(tree.run_search(&UniformEvaluator, &cfg, &mut seeded(0)), Err(MctsError::ForcedPassRoot));
        let done = st.apply_move(Move::Pass).unwrap().apply_move(Move::Pass).unwrap();
        let mut tree = SearchTree::new(done);
        assert_eq!(tree.run_search(&UniformEvaluator, &cfg, &mut seeded(0)), Err(MctsError::TerminalRoot));
    }

    #[test]
    fn argmax_and_sampling() {
        let mut r = seeded(5);
        assert_eq!(sample_move(&[0.25, 0.75, 0.0], SelectionMode::Argmax, &mut r), 1);
        assert_eq!(sample_move(&[0.0, 0.0, 1.0], SelectionMode::Argmax, &mut r), 2);
        assert_eq!(sample_move(&[0.0, 0.0, 1.0], SelectionMode::Sample, &mut r), 2);
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            counts[sample_move(&[0.25, 0.75, 0.0], SelectionMode::Sample, &mut r)] += 1;
        }
        assert_eq!(counts[2], 0);
        assert!((counts[0] as f64 / 10_000.0 - 0.25).abs() < 0.02);
        assert!((counts[1] as f64 / 10_000.0 - 0.75).abs() < 0.02);
    }

    #[test]
    fn advance_keeps_subtree_statistics() {
        let net = Mlp::new(8, 8, 3).unwrap();
        let mut tree = SearchTree::new(fresh(8, 4));
        let cfg = MctsConfig { iterations: 200, ..Default::default() };
        tree.run_search(&net, &cfg, &mut seeded(0)).unwrap();
        let e = tree.root().edges.iter().max_by_key(|e| e.child.map_or(0, |c| tree.node(c).visits)).unwrap().clone();
        let child = e.child.unwrap();
        let kept_visits = tree.node(child).visits;
        let kept_total = tree.node(child).total;
        let subtree = count_subtree(&tree, child);
        tree.advance_root(e.item).unwrap();
        assert_eq!(tree.root().visits, kept_visits);
        assert_eq!(tree.root().total, kept_total);
        assert_eq!(tree.node_count(), subtree);

        // second step along the line
        let e2 = tree.root().edges.iter().find(|e| e.child.is_some()).unwrap().clone();
        let sub2 = count_subtree(&tree, e2.child.unwrap());
        tree.advance_root(e2.item).unwrap();
        assert_eq!(tree.node_count(), sub2);
    }

    #[test]
    fn advance_to_unexplored_action_is_fresh() {
        let mut tree = SearchTree::new(fresh(8, 5));
        tree.advance_root(7).unwrap();
        assert_eq!(tree.root().visits, 0);
        assert_eq!(tree.node_count(), 1);
        assert_eq!(tree.root().state.owner(7), Some(0));
    }

    fn count_subtree(tree: &SearchTree, id: NodeId) -> usize {
        1 + tree.node(id).edges.iter().filter_map(|e| e.child).map(|c| count_subtree(tree, c)).sum::<usize>()
    }

    /// Sum of backed-up values, checked by walking the tree.
    fn check_conservation(tree: &SearchTree, id: NodeId) {
        let node = tree.node(id);
        assert!((0.0..=1.0 + 1e-12).contains(&node.mean()), "Q out of range");
        if node.state.is_terminal() || node.edges.is_empty() {
            return;
        }
        let visited: Vec<&SearchNode> = node.edges.iter().filter_map(|e| e.child).map(|c| tree.node(c)).collect();
        let child_visits: u32 = visited.iter().map(|c| c.visits).sum();
        assert_eq!(node.visits, child_visits + 1);
        for e in &node.edges {
            if let Some(c) = e.child {
                check_conservation(tree, c);
            }
        }
    }

    #[test]
    fn statistics_are_conserved() {
        let net = Mlp::new(10, 6, 9).unwrap();
        for seed in 0..5 {
            let mut tree = SearchTree::new(fresh(10, seed));
            tree.run_search(&net, &MctsConfig { iterations: 300, ..Default::default() }, &mut seeded(seed)).unwrap();
            check_conservation(&tree, tree.root);
        }
    }

    #[test]
    fn perspective_flip_on_terminal_playout() {
        // One item: P0 takes it, then both players are forced to pass.
        let inst = Instance::new(vec![0.5], vec![0.4], 1.0, 0).unwrap();
        let st = GameState::new(Arc::new(inst)).unwrap();
        let mut tree = SearchTree::new(st);
        tree.run_search(&UniformEvaluator, &MctsConfig { iterations: 3, ..Default::default() }, &mut seeded(0)).unwrap();
        let c = tree.root().edges[0].child.unwrap();
        let child = tree.node(c);
        assert!(child.state.is_terminal());
        // both forced passes applied: P1 is to move at the end and has lost
        assert_eq!(child.state.to_move(), 1);
        assert_eq!(child.mean(), 0.0);
        // root (P0 to move) received the same playouts as wins as well
        assert_eq!(tree.root().total, 0.5 + 3.0);
    }

    #[test]
    fn trace_is_json() {
        let mut tree = SearchTree::new(fresh(6, 1));
        tree.run_search(&UniformEvaluator, &MctsConfig::default(), &mut seeded(0)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&tree.trace_record()).unwrap();
        assert_eq!(v["visits"], 41);
    }

    #[test]
    fn root_noise_keeps_priors_normalized() {
        let cfg = MctsConfig { root_noise: Some(RootNoise { alpha: 0.3, fraction: 0.25 }), ..Default::default() };
        let mut tree = SearchTree::new(fresh(8, 1));
        tree.run_search(&UniformEvaluator, &cfg, &mut seeded(3)).unwrap();
        let s: f64 = tree.root().edges.iter().map(|e| e.prior).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
