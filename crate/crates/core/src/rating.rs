//! Elo ratings from win matrices and the logarithmic size law.
//!
//! Ratings use the base-10, 400-point logistic scale: a 400 point gap means
//! 10:1 odds. If ratings follow `400 log10(N) + k`, the expected score of a
//! network of width `N_A` against one of width `N_B` reduces to
//! `N_A / (N_A + N_B)`.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::arena::WinMatrix;

pub const ELO_SCALE: f64 = 400.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RatingError {
    #[error("comparison graph is disconnected: components {0:?}")]
    Disconnected(Vec<Vec<String>>),
    #[error("need at least {need} distinct sizes, got {got}")]
    TooFewSizes { need: usize, got: usize },
    #[error("no hidden width given for {0}")]
    MissingSize(String),
    #[error("rating fit did not converge (gradient norm {0:e})")]
    NotConverged(f64),
    #[error("empty win matrix")]
    Empty,
}

/// Expected score of a player rated `r_a` against one rated `r_b`.
pub fn elo_expected(r_a: f64, r_b: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf((r_b - r_a) / ELO_SCALE))
}

/// Predicted score of a width-`n_a` network against a width-`n_b` one.
pub fn predicted_win_prob(n_a: usize, n_b: usize) -> f64 {
    assert!(n_a >= 1 && n_b >= 1, "hidden widths are positive");
    n_a as f64 / (n_a + n_b) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EloTable {
    pub labels: Vec<String>,
    /// Mean-zero ratings, aligned with `labels`.
    pub ratings: Vec<f64>,
}

impl EloTable {
    pub fn rating(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|i| self.ratings[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Pseudo-wins added to each ordered pair that has played.
    pub pseudo_wins: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { pseudo_wins: 0.5, tolerance: 1e-8, max_iterations: 200 }
    }
}

fn components(m: &WinMatrix) -> Vec<Vec<usize>> {
    let k = m.len();
    let mut comp = vec![usize::MAX; k];
    let mut out = Vec::new();
    for start in 0..k {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        comp[start] = id;
        let mut head = 0;
        while head < members.len() {
            let i = members[head];
            head += 1;
            for j in 0..k {
                if comp[j] == usize::MAX && m.games[i][j] > 0 {
                    comp[j] = id;
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Solve `a x = b` for a small dense symmetric positive definite system.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let k = b.len();
    for col in 0..k {
        let pivot = (col..k).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..k {
            let f = a[row][col] / a[col][col];
            for c in col..k {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let s: f64 = (row + 1..k).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Maximum-likelihood Bradley-Terry ratings with default smoothing.
pub fn fit_elo(m: &WinMatrix) -> Result<EloTable, RatingError> {
    fit_elo_with(m, &FitOptions::default())
}

/// Newton's method on the Bradley-Terry log-likelihood (draws count as
/// half-wins). Stops once the gradient, normalized per game, is below
/// `opts.tolerance`. Ratings are recentered to mean zero.
pub fn fit_elo_with(m: &WinMatrix, opts: &FitOptions) -> Result<EloTable, RatingError> {
    let k = m.len();
    if k == 0 {
        return Err(RatingError::Empty);
    }
    let comps = components(m);
    if comps.len() > 1 {
        return Err(RatingError::Disconnected(
            comps.iter().map(|c| c.iter().map(|&i| m.labels[i].clone()).collect()).collect(),
        ));
    }
    let mut wins = vec![vec![0.0; k]; k];
    let mut games = vec![vec![0.0; k]; k];
    let mut total_games = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j && m.games[i][j] > 0 {
                wins[i][j] = m.wins[i][j] + opts.pseudo_wins;
                games[i][j] = m.games[i][j] as f64 + 2.0 * opts.pseudo_wins;
                total_games += games[i][j];
            }
        }
    }
    // natural-log strengths; rating = theta * 400 / ln 10
    let mut theta = vec![0.0; k];
    let norm = total_games.max(1.0);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let mut grad = vec![0.0; k];
        let mut hess = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                if games[i][j] == 0.0 {
                    continue;
                }
                let p = logistic(theta[i] - theta[j]);
                grad[i] += wins[i][j] - games[i][j] * p;
                let w = games[i][j] * p * (1.0 - p);
                hess[i][i] += w;
                hess[i][j] -= w;
            }
        }
        grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt() / norm;
        if grad_norm < opts.tolerance {
            break;
        }
        // pin the free translation by adding the all-ones direction
        let scale = hess.iter().map(|r| r.iter().map(|x| x.abs()).fold(0.0, f64::max)).fold(1.0, f64::max);
        for row in hess.iter_mut() {
            for x in row.iter_mut() {
                *x += scale / k as f64;
            }
        }
        let step = solve_dense(hess, grad);
        for (t, s) in theta.iter_mut().zip(step) {
            *t += s;
        }
        let mean = theta.iter().sum::<f64>() / k as f64;
        theta.iter_mut().for_each(|t| *t -= mean);
    }
    if !(grad_norm < opts.tolerance) {
        return Err(RatingError::NotConverged(grad_norm));
    }
    let to_elo = ELO_SCALE / std::f64::consts::LN_10;
    Ok(EloTable { labels: m.labels.clone(), ratings: theta.iter().map(|t| t * to_elo).collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeLawFit {
    /// Elo points per decade of hidden width.
    pub slope: f64,
    pub intercept: f64,
    pub points: Vec<SizeLawPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeLawPoint {
    pub label: String,
    pub hidden_width: usize,
    pub rating: f64,
    pub residual: f64,
}

impl SizeLawFit {
    pub fn predict(&self, hidden_width: usize) -> f64 {
        self.slope * (hidden_width as f64).log10() + self.intercept
    }
}

/// Least-squares fit of rating against `log10(N)` over the labelled agents
/// that have a size. Needs at least three distinct sizes.
pub fn fit_size_law(table: &EloTable, sizes: &HashMap<String, usize>) -> Result<SizeLawFit, RatingError> {
    let pts: Vec<(String, usize, f64)> = table
        .labels
        .iter()
        .zip(&table.ratings)
        .filter_map(|(l, &r)| sizes.get(l).map(|&n| (l.clone(), n, r)))
        .collect();
    let mut distinct: Vec<usize> = pts.iter().map(|p| p.1).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(RatingError::TooFewSizes { need: 3, got: distinct.len() });
    }
    let xs: Vec<f64> = pts.iter().map(|p| (p.1 as f64).log10()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let c = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / c;
    let my = ys.iter().sum::<f64>() / c;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let points = pts
        .into_iter()
        .zip(&xs)
        .map(|((label, hidden_width, rating), x)| SizeLawPoint {
            label,
            hidden_width,
            rating,
            residual: rating - (slope * x + intercept),
        })
        .collect();
    Ok(SizeLawFit { slope, intercept, points })
}

/// Observed vs predicted score for every ordered pair of sized agents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapCell {
    pub label_a: String,
    pub label_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub observed: f64,
    pub predicted: f64,
    pub abs_deviation: f64,
}

pub fn heatmap(m: &WinMatrix, sizes: &HashMap<String, usize>) -> Vec<HeatmapCell> {
    let mut cells = Vec::new();
    for i in 0..m.len() {
        for j in 0..m.len() {
            let (Some(&n_a), Some(&n_b)) = (sizes.get(&m.labels[i]), sizes.get(&m.labels[j])) else {
                continue;
            };
            if let Some(observed) = m.observed(i, j) {
                let predicted = predicted_win_prob(n_a, n_b);
                cells.push(HeatmapCell {
                    label_a: m.labels[i].clone(),
                    label_b: m.labels[j].clone(),
                    n_a,
                    n_b,
                    observed,
                    predicted,
                    abs_deviation: (observed - predicted).abs(),
                });
            }
        }
    }
    cells
}

pub fn heatmap_csv(cells: &[HeatmapCell]) -> String {
    let mut s = String::from("label_a,label_b,n_a,n_b,observed_p,predicted_p,abs_deviation\n");
    for c in cells {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.label_a, c.label_b, c.n_a, c.n_b, c.observed, c.predicted, c.abs_deviation
        ));
    }
    s
}

/// Rating report: one row per agent with its predicted score against every
/// other sized agent.
pub fn ratings_csv(table: &EloTable, sizes: &HashMap<String, usize>) -> String {
    let mut s = String::from("label,hidden_width,rating,predicted_vs_each\n");
    for (l, r) in table.labels.iter().zip(&table.ratings) {
        let n = sizes.get(l);
        let preds: Vec<String> = match n {
            Some(&na) => table
                .labels
                .iter()
                .filter(|o| *o != l)
                .filter_map(|o| sizes.get(o).map(|&nb| format!("{o}:{:.6}", predicted_win_prob(na, nb))))
                .collect(),
            None => Vec::new(),
        };
        s.push_str(&format!(
            "{},{},{},{}\n",
            l,
            n.map_or(String::new(), |x| x.to_string()),
            r,
            preds.join(";")
        ));
    }
    s
}
