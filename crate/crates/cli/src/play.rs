use std::io::{BufRead, Write};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use knapzero::arena::Agent;
use knapzero::{generate_weakly_correlated, GameRecord, GameState, Move};

/// Interactive game of a human against `agent` on the instance drawn from
/// `seed`. Malformed or illegal input is reported and asked again.
pub fn play_interactive(
    agent: &mut dyn Agent,
    n: usize,
    seed: u64,
    human_seat: usize,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> anyhow::Result<GameRecord> {
    let inst = Arc::new(generate_weakly_correlated(n, seed)?);
    let mut st = GameState::new(inst.clone())?;
    let mut moves = Vec::new();
    agent.begin_game(&st, seed);
    writeln!(out, "you are P{human_seat}; capacity {} each", inst.capacity())?;
    while !st.is_terminal() {
        let mover = st.to_move();
        if st.must_pass() {
            let who = if mover == human_seat { "you pass".to_string() } else { format!("P{mover} passes") };
            writeln!(out, "no item fits: {who}")?;
            st = st.apply_move(Move::Pass)?;
            moves.push(Move::Pass);
            continue;
        }
        let mv = if mover == human_seat {
            writeln!(out, "{st}")?;
            read_move(&st, input, out)?
        } else {
            let mv = agent.choose(&st).map_err(|e| anyhow!("agent failed: {e}"))?;
            writeln!(out, "P{mover} plays {mv}")?;
            mv
        };
        st = st.apply_move(mv)?;
        moves.push(mv);
        if let Move::Take(item) = mv {
            agent.observe(item).map_err(|e| anyhow!("agent failed: {e}"))?;
        }
    }
    writeln!(out, "{st}")?;
    let outcome = st.outcome()?;
    let [s0, s1] = outcome.scores();
    let verdict = if s0 == s1 {
        "draw".to_string()
    } else {
        let winner = if s0 > s1 { 0 } else { 1 };
        if winner == human_seat { "you win".to_string() } else { format!("P{winner} wins") }
    };
    writeln!(out, "game over after two passes: {verdict} (scores {s0} / {s1})")?;
    Ok(GameRecord { instance_seed: seed, n, moves, scores: outcome.scores() })
}

fn read_move(st: &GameState, input: &mut dyn BufRead, out: &mut dyn Write) -> anyhow::Result<Move> {
    loop {
        write!(out, "your move (item index)> ")?;
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line).context("reading move")? == 0 {
            return Err(anyhow!("input ended before the game finished"));
        }
        let text = line.trim();
        let mv = match text.parse::<Move>() {
            Ok(mv) => mv,
            Err(_) => {
                writeln!(out, "not a move: {text:?}; enter an item index")?;
                continue;
            }
        };
        match st.check_move(mv) {
            Ok(()) => return Ok(mv),
            Err(e) => writeln!(out, "{e}")?,
        }
    }
}
