use std::sync::Arc;

use crate::arena::{play_match, AgentSpec};
use crate::game::{GameRecord, GameState, Move};
use crate::instances::generate_weakly_correlated;
use crate::mcts::{sample_move, MctsConfig, SearchTree, SelectionMode};
use crate::nn::{Mlp, TrainingSample};
use crate::rng;

use super::TrainError;

/// One game of the net against itself on a fresh instance drawn from
/// `seed`. Each seat keeps its own tree; moves are sampled from the
/// improved policy. Every decision state becomes a sample whose outcome is
/// the final score of that state's mover.
pub fn play_selfplay_game(
    net: &Mlp,
    n: usize,
    mcts: &MctsConfig,
    seed: u64,
) -> Result<(GameRecord, Vec<TrainingSample>), TrainError> {
    let inst = Arc::new(generate_weakly_correlated(n, seed).map_err(|e| TrainError::Config(e.to_string()))?);
    let mut rng = rng::seeded(rng::derive_tagged(seed, "selfplay-moves"));
    let mut st = GameState::new(inst.clone())?;
    let mut moves = vec![Move::Pass; st.skip_forced_passes()];
    let mut trees = [SearchTree::new(st.clone()), SearchTree::new(st.clone())];
    let mut pending: Vec<(usize, TrainingSample)> = Vec::new();
    while !st.is_terminal() {
        let mover = st.to_move();
        let pi = trees[mover].run_search(net, mcts, &mut rng)?;
        let legal = st.legal_mask();
        pending.push((mover, TrainingSample { state: st.encode(), policy: pi.clone(), outcome: f64::NAN, legal }));
        let item = sample_move(&pi, SelectionMode::Sample, &mut rng);
        st = st.apply_move(Move::Take(item))?;
        moves.push(Move::Take(item));
        moves.extend(std::iter::repeat_n(Move::Pass, st.skip_forced_passes()));
        for t in &mut trees {
            t.advance_root(item)?;
        }
    }
    let outcome = st.outcome()?;
    let samples = pending
        .into_iter()
        .map(|(mover, mut s)| {
            s.outcome = outcome.score_for(mover);
            s
        })
        .collect();
    let record = GameRecord { instance_seed: inst.seed(), n, moves, scores: outcome.scores() };
    Ok((record, samples))
}

/// Mean score of `net` (argmax play, no root noise) against the greedy
/// agent over `games` mirrored games.
pub fn evaluate_vs_greedy(net: Arc<Mlp>, games: usize, mcts: &MctsConfig, seed: u64) -> Result<f64, TrainError> {
    let n = net.n();
    let mcts = MctsConfig { root_noise: None, ..*mcts };
    evaluate_agent_vs_greedy(&AgentSpec::net("net", net, mcts), n, games, seed)
}

/// Same harness for any agent.
pub fn evaluate_agent_vs_greedy(agent: &AgentSpec, n: usize, games: usize, seed: u64) -> Result<f64, TrainError> {
    if games < 2 || games % 2 != 0 {
        return Err(TrainError::Config(format!("evaluation needs an even number of games, got {games}")));
    }
    Ok(play_match(agent, &AgentSpec::greedy(), n, games, seed)?.fraction_a())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_consistent_with_the_game() {
        let net = Mlp::new(10, 8, 1).unwrap();
        let mcts = MctsConfig { iterations: 12, ..Default::default() };
        for seed in 0..8 {
            let (rec, samples) = play_selfplay_game(&net, 10, &mcts, seed).unwrap();
            assert!(!samples.is_empty() && samples.len() <= 20);
            let takes = rec.moves.iter().filter(|m| matches!(m, Move::Take(_))).count();
            assert_eq!(takes, samples.len());
            let inst = Arc::new(generate_weakly_correlated(10, seed).unwrap());
            let end = rec.replay(inst.clone()).unwrap();
            assert_eq!(end.outcome().unwrap().scores(), rec.scores);

            let mut st = GameState::new(inst).unwrap();
            st.skip_forced_passes();
            let mut k = 0;
            for mv in &rec.moves {
                if let Move::Take(_) = mv {
                    let s = &samples[k];
                    assert_eq!(s.state, st.encode());
                    assert_eq!(s.legal, st.legal_mask());
                    assert_eq!(s.outcome, rec.scores[st.to_move()]);
                    assert!((s.policy.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    for (p, l) in s.policy.iter().zip(&s.legal) {
                        assert!(*l || *p == 0.0);
                    }
                    k += 1;
                }
                st = st.apply_move(*mv).unwrap();
            }
            let mut zs: Vec<f64> = samples.iter().map(|s| s.outcome).collect();
            zs.sort_by(f64::total_cmp);
            zs.dedup();
            assert!(zs.len() <= 2);
            assert!(zs.iter().all(|z| [0.0, 0.5, 1.0].contains(z)));
        }
    }

    #[test]
    fn selfplay_is_deterministic() {
        let net = Mlp::new(8, 4, 2).unwrap();
        let mcts = MctsConfig { iterations: 8, ..Default::default() };
        let a = play_selfplay_game(&net, 8, &mcts, 5).unwrap();
        let b = play_selfplay_game(&net, 8, &mcts, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn greedy_against_itself_is_exactly_even() {
        let s = evaluate_agent_vs_greedy(&AgentSpec::greedy(), 16, 40, 11).unwrap();
        assert_eq!(s, 0.5);
        assert!(evaluate_agent_vs_greedy(&AgentSpec::greedy(), 16, 3, 0).is_err());
    }

    #[test]
    fn evaluation_score_granularity() {
        let net = Arc::new(Mlp::new(8, 4, 0).unwrap());
        let mcts = MctsConfig { iterations: 4, ..Default::default() };
        let s = evaluate_vs_greedy(net.clone(), 20, &mcts, 1).unwrap();
        assert!((0.0..=1.0).contains(&s));
        assert_eq!((s * 40.0).fract(), 0.0);
        assert_eq!(s, evaluate_vs_greedy(net, 20, &mcts, 1).unwrap());
    }

    #[test]
    fn single_item_game_yields_at_most_one_sample() {
        let net = Mlp::new(1, 2, 0).unwrap();
        let (_, samples) = play_selfplay_game(&net, 1, &MctsConfig::default(), 0).unwrap();
        assert!(samples.len() <= 1);
    }
}
