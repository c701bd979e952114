//! Self-play training and rating for the two-player competitive knapsack
//! game.
//!
//! Networks of different hidden widths learn the game through PUCT tree
//! search and self-play, then meet in round-robin tournaments whose results
//! are fitted with Elo ratings and a logarithmic size law.

pub mod arena;
pub mod game;
pub mod instances;
pub mod mcts;
pub mod nn;
pub mod rng;
pub mod rating;
pub mod solvers;
pub mod trainer;

pub use game::{GameError, GameRecord, GameState, Move, Outcome};
pub use instances::{generate_weakly_correlated, Instance, InstanceError};
