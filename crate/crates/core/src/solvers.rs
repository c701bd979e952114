//! Single-player knapsack solvers used as test oracles.

use thiserror::Error;

use crate::instances::Instance;

/// Largest instance `brute_force_optimal` will enumerate.
pub const BRUTE_FORCE_MAX_ITEMS: usize = 20;
pub const DEFAULT_RESOLUTION: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("{n} items exceeds the enumeration bound of {max}")]
    TooManyItems { n: usize, max: usize },
    #[error("resolution {0} is below the minimum of 1000 buckets per unit weight")]
    ResolutionTooLow(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Chosen item indices, ascending.
    pub chosen: Vec<usize>,
    pub total_value: f64,
    pub total_weight: f64,
}

impl Selection {
    fn from_indices(inst: &Instance, chosen: Vec<usize>) -> Self {
        let total_value = chosen.iter().map(|&i| inst.values()[i]).sum();
        let total_weight = chosen.iter().map(|&i| inst.weights()[i]).sum();
        Self { chosen, total_value, total_weight }
    }
}

/// Exact optimum by enumerating every subset.
///
/// Equal-value subsets are resolved in favour of the lexicographically
/// smallest ascending index list.
pub fn brute_force_optimal(inst: &Instance) -> Result<Selection, SolverError> {
    let n = inst.n();
    if n > BRUTE_FORCE_MAX_ITEMS {
        return Err(SolverError::TooManyItems { n, max: BRUTE_FORCE_MAX_ITEMS });
    }
    let (values, weights, cap) = (inst.values(), inst.weights(), inst.capacity());
    let mut best_mask = 0u32;
    let mut best_value = 0.0;
    for mask in 1u32..(1u32 << n) {
        let mut w = 0.0;
        let mut v = 0.0;
        for i in 0..n {
            if mask & (1 << i) != 0 {
                w += weights[i];
                v += values[i];
            }
        }
        if w > cap {
            continue;
        }
        if v > best_value || (v == best_value && lex_less(mask, best_mask)) {
            best_value = v;
            best_mask = mask;
        }
    }
    let chosen = (0..n).filter(|i| best_mask & (1 << i) != 0).collect();
    Ok(Selection::from_indices(inst, chosen))
}

/// Compare two index sets as ascending sequences.
fn lex_less(a: u32, b: u32) -> bool {
    if a == b {
        return false;
    }
    let diff = a ^ b;
    let first = diff.trailing_zeros();
    // The set containing the first differing index has the smaller element
    // there, unless the other set has run out (a prefix sorts first).
    let a_has = a & (1 << first) != 0;
    let below = (1u32 << first) - 1;
    let rest_other = if a_has { b & !below & !(1 << first) } else { a & !below & !(1 << first) };
    if a_has {
        // b skips `first`; b is smaller only if it has ended (is a prefix).
        rest_other != 0
    } else {
        rest_other == 0
    }
}

/// Dynamic programme over discretized values.
///
/// Values are floored onto a grid of `resolution` steps per unit; for every
/// reachable grid total the table keeps the lightest set, using the exact
/// continuous weights. The best feasible entry is returned, so selections
/// always respect the true capacity and fall short of the continuous
/// optimum by less than `n / resolution`.
pub fn dp_optimal(inst: &Instance, resolution: usize) -> Result<Selection, SolverError> {
    if resolution < 1000 {
        return Err(SolverError::ResolutionTooLow(resolution));
    }
    let res = resolution as f64;
    let n = inst.n();
    let (values, weights, cap) = (inst.values(), inst.weights(), inst.capacity());
    let grid: Vec<usize> = values.iter().map(|&v| (v * res).floor().max(0.0) as usize).collect();
    let top: usize = grid.iter().sum();
    let width = top + 1;
    // lightest[t]: least weight of a set whose grid values sum to t, and
    // the exact value of that set; keep[i * width + t] marks item i taken
    let mut lightest = vec![f64::INFINITY; width];
    let mut exact = vec![0.0f64; width];
    let mut keep = vec![false; n * width];
    lightest[0] = 0.0;
    for i in 0..n {
        let g = grid[i];
        for t in (g..=top).rev() {
            let cand = lightest[t - g] + weights[i];
            if cand < lightest[t] {
                lightest[t] = cand;
                exact[t] = exact[t - g] + values[i];
                keep[i * width + t] = true;
            }
        }
    }
    let mut best_t = 0;
    for t in 1..width {
        if lightest[t] <= cap && exact[t] > exact[best_t] {
            best_t = t;
        }
    }
    let mut chosen = Vec::new();
    let mut t = best_t;
    for i in (0..n).rev() {
        if keep[i * width + t] {
            chosen.push(i);
            t -= grid[i];
        }
    }
    chosen.reverse();
    Ok(Selection::from_indices(inst, chosen))
}

/// Take items in ratio order while they fit.
pub fn greedy_single_player(inst: &Instance) -> Selection {
    let mut room = inst.capacity();
    let mut chosen = Vec::new();
    for i in 0..inst.n() {
        if inst.weights()[i] <= room {
            room -= inst.weights()[i];
            chosen.push(i);
        }
    }
    Selection::from_indices(inst, chosen)
}
