//! Characteristic-function games over prosumer coalitions: value
//! construction from dispatch costs, excess machinery, the nucleolus and the
//! Shapley value.
//!
//! The nucleolus follows the sequential linear-programming scheme: minimize
//! the worst excess over all proper coalitions, pin the coalitions that are
//! tight at every optimum (identified by their dual multipliers, with a
//! perturbation re-solve as fallback), and repeat on the remainder until the
//! payoff vector is uniquely determined.

use crate::dispatch::{CostEvaluator, DispatchError};
use crate::lp::{solve_lp, LpProblem, LpRow, LpStatus};
use crate::model::Coalition;
use rayon::prelude::*;
use thiserror::Error;

/// Enumeration guard: games and nucleolus runs refuse more players than
/// this by default, since both scale as `2^n`.
pub const DEFAULT_PLAYER_CAP: usize = 20;

/// Duals this large cannot be interior-point noise; fix without re-solving.
const TRUSTED_DUAL: f64 = 1e-5;
const TIGHT_SLACK_TOL: f64 = 1e-6;
const FALLBACK_SLACK_TOL: f64 = 1e-7;
const PERTURBATION: f64 = 1e-6;
const OBJECTIVE_SHIFT_TOL: f64 = 5e-9;
const RANK_PIVOT_TOL: f64 = 1e-9;

/// A transferable-utility game: `values[mask]` is the worth of the
/// coalition with that member bitmask.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionGame {
    pub n_players: usize,
    /// `2^n` coalition values in £, indexed by bitmask.
    pub values: Vec<f64>,
    /// Standalone dispatch cost per player, £ (zeros for abstract games).
    pub singleton_costs: Vec<f64>,
}

impl CoalitionGame {
    /// Builds a game from raw values; `values[0]` must be zero.
    pub fn from_values(n_players: usize, values: Vec<f64>) -> Result<Self, GameError> {
        if values.len() != 1usize << n_players {
            return Err(GameError::WrongValueCount {
                n_players,
                expected: 1usize << n_players,
                actual: values.len(),
            });
        }
        if values[0] != 0.0 {
            return Err(GameError::NonZeroEmptyValue(values[0]));
        }
        Ok(CoalitionGame {
            n_players,
            values,
            singleton_costs: vec![0.0; n_players],
        })
    }

    pub fn grand_coalition(&self) -> Coalition {
        Coalition::grand(self.n_players)
    }

    /// Exact value lookup for a coalition.
    pub fn value(&self, coalition: Coalition) -> f64 {
        assert!(
            coalition.is_subset_of(self.grand_coalition()),
            "coalition {coalition} out of range for {}-player game",
            self.n_players
        );
        self.values[coalition.mask() as usize]
    }
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error(
        "{n} prosumers exceed the exact-enumeration cap of {cap}; \
         use the clustered pipeline for games this large"
    )]
    CapExceeded { n: usize, cap: usize },
    #[error("{n_players}-player game needs {expected} values, got {actual}")]
    WrongValueCount {
        n_players: usize,
        expected: usize,
        actual: usize,
    },
    #[error("empty coalition must have value 0, got {0}")]
    NonZeroEmptyValue(f64),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
}

/// Builds the prosumer game: `v(S) = sum_i C({i}) - C(S)` for every
/// coalition, from memoized dispatch costs. Exactly `2^n - 1` LP solves on
/// a fresh evaluator; singleton values come out exactly zero.
pub fn build_game(evaluator: &CostEvaluator) -> Result<CoalitionGame, GameError> {
    build_game_capped(evaluator, DEFAULT_PLAYER_CAP)
}

pub fn build_game_capped(
    evaluator: &CostEvaluator,
    cap: usize,
) -> Result<CoalitionGame, GameError> {
    let n = evaluator.scenario().n_prosumers();
    // Enumeration indexes values by u64 bitmask; 63 is the hard ceiling
    // regardless of how far the caller raises the cap.
    if n > cap || n > 63 {
        return Err(GameError::CapExceeded { n, cap: cap.min(63) });
    }

    let singleton_costs = (0..n)
        .map(|i| evaluator.cost(Coalition::singleton(i)))
        .collect::<Result<Vec<f64>, _>>()?;

    let values = (0u64..1u64 << n)
        .into_par_iter()
        .map(|mask| {
            if mask == 0 {
                return Ok(0.0);
            }
            let coalition = Coalition::from_mask(mask);
            let joint = evaluator.cost(coalition)?;
            let separate: f64 = coalition.members().iter().map(|&i| singleton_costs[i]).sum();
            Ok(separate - joint)
        })
        .collect::<Result<Vec<f64>, DispatchError>>()?;

    Ok(CoalitionGame {
        n_players: n,
        values,
        singleton_costs,
    })
}

/// Lookup wrapper with the operation-level name.
pub fn coalition_value(coalition: Coalition, game: &CoalitionGame) -> f64 {
    game.value(coalition)
}

/// How a payoff vector came about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Nucleolus,
    Shapley,
    Declustered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoffAllocation {
    pub payoffs: Vec<f64>,
    pub provenance: Provenance,
}

impl PayoffAllocation {
    pub fn total(&self) -> f64 {
        self.payoffs.iter().sum()
    }
}

/// Coalition dissatisfaction: `v(S) - sum_{i in S} x_i`.
pub fn excess(payoffs: &[f64], coalition: Coalition, game: &CoalitionGame) -> f64 {
    assert_eq!(payoffs.len(), game.n_players);
    let paid: f64 = coalition.members().iter().map(|&i| payoffs[i]).sum();
    game.value(coalition) - paid
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImputationViolation {
    /// Payoffs do not sum to the grand-coalition value.
    Efficiency { total: f64, expected: f64 },
    /// A player receives less than standing alone is worth.
    Rationality {
        player: usize,
        payoff: f64,
        singleton_value: f64,
    },
}

/// Checks efficiency (within 1e-6) and individual rationality (within
/// 1e-9), returning every violation.
pub fn is_imputation(payoffs: &[f64], game: &CoalitionGame) -> (bool, Vec<ImputationViolation>) {
    assert_eq!(payoffs.len(), game.n_players);
    let mut violations = Vec::new();
    let total: f64 = payoffs.iter().sum();
    let expected = game.value(game.grand_coalition());
    if (total - expected).abs() > 1e-6 {
        violations.push(ImputationViolation::Efficiency { total, expected });
    }
    for (i, &x) in payoffs.iter().enumerate() {
        let v_i = game.value(Coalition::singleton(i));
        if x < v_i - 1e-9 {
            violations.push(ImputationViolation::Rationality {
                player: i,
                payoff: x,
                singleton_value: v_i,
            });
        }
    }
    (violations.is_empty(), violations)
}

/// Worst-case dissatisfaction over every coalition.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub max_excess: f64,
    pub argmax: Coalition,
}

/// Exact maximum excess over all `2^n` coalitions (ties resolve to the
/// lowest bitmask).
pub fn stability_report(payoffs: &[f64], game: &CoalitionGame) -> StabilityReport {
    assert_eq!(payoffs.len(), game.n_players);
    let mut max_excess = f64::NEG_INFINITY;
    let mut argmax = Coalition::empty();
    for mask in 0..(1u64 << game.n_players) {
        let coalition = Coalition::from_mask(mask);
        let e = excess(payoffs, coalition, game);
        if e > max_excess {
            max_excess = e;
            argmax = coalition;
        }
    }
    StabilityReport { max_excess, argmax }
}

#[derive(Debug, Error)]
pub enum NucleolusError {
    #[error("nucleolus needs at least 2 players, got {0}")]
    TooFewPlayers(usize),
    #[error("{n} players exceed the nucleolus enumeration cap of {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("LP in round {round} ended {status:?}")]
    RoundNotOptimal { round: usize, status: LpStatus },
    #[error("LP in round {round} failed: {source}")]
    RoundFailed {
        round: usize,
        source: crate::lp::LpError,
    },
    #[error(
        "no new tight coalitions in round {round} (rank {rank} of {n}); \
         tight-set identification tolerances failed"
    )]
    RankStagnation { round: usize, rank: usize, n: usize },
    #[error("imputation set is empty: v(N) falls {surplus:.3e} short of the singleton sum")]
    EmptyImputationSet { surplus: f64 },
    #[error("fixed equality system became inconsistent (residual {residual:.3e})")]
    InconsistentSystem { residual: f64 },
}

/// Nucleolus computation summary.
#[derive(Debug, Clone)]
pub struct NucleolusOutcome {
    pub allocation: PayoffAllocation,
    /// Sequential minimization rounds performed.
    pub rounds: usize,
    /// LP solves, including any perturbation re-solves.
    pub lp_solves: usize,
    /// Maximum excess of the returned allocation over all coalitions.
    pub max_excess: f64,
}

/// Computes the nucleolus: the imputation whose sorted excess vector is
/// lexicographically minimal.
///
/// Round LP: `min eps` s.t. `x(N) = v(N)`, `x_i >= v({i})`, and
/// `v(S) - x(S) <= eps` for every not-yet-fixed proper coalition, plus the
/// equalities accumulated from earlier rounds. Coalitions binding at every
/// optimum are fixed at the round's level; coalitions whose excess becomes
/// implied by the equality system leave the active set. Terminates when the
/// equalities pin `x` (rank `n`).
pub fn nucleolus(game: &CoalitionGame) -> Result<NucleolusOutcome, NucleolusError> {
    nucleolus_capped(game, DEFAULT_PLAYER_CAP)
}

pub fn nucleolus_capped(
    game: &CoalitionGame,
    cap: usize,
) -> Result<NucleolusOutcome, NucleolusError> {
    let n = game.n_players;
    if n < 2 {
        return Err(NucleolusError::TooFewPlayers(n));
    }
    if n > cap || n > 63 {
        return Err(NucleolusError::CapExceeded { n, cap: cap.min(63) });
    }

    let grand_mask = Coalition::grand(n).mask();
    let v = |mask: u64| game.values[mask as usize];
    let singleton_values: Vec<f64> = (0..n).map(|i| v(1u64 << i)).collect();

    // Degenerate imputation set: when the grand coalition is worth no more
    // than its members alone (up to dispatch-solver noise, possibly a hair
    // below), the only imputation is the singleton-value point and the LP
    // rounds would chase noise or report a spurious infeasibility.
    let singleton_sum: f64 = singleton_values.iter().sum();
    let surplus = v(grand_mask) - singleton_sum;
    if surplus < -1e-6 {
        return Err(NucleolusError::EmptyImputationSet { surplus });
    }
    if surplus <= 1e-9 {
        let payoffs: Vec<f64> = singleton_values
            .iter()
            .map(|v_i| v_i + surplus / n as f64)
            .collect();
        let report = stability_report(&payoffs, game);
        return Ok(NucleolusOutcome {
            allocation: PayoffAllocation {
                payoffs,
                provenance: Provenance::Nucleolus,
            },
            rounds: 0,
            lp_solves: 0,
            max_excess: report.max_excess,
        });
    }

    // Equality system E x = f, seeded with efficiency.
    let mut eq_rows: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut eq_rhs: Vec<f64> = vec![v(grand_mask)];
    let mut ir_fixed = vec![false; n];

    let mut active: Vec<u64> = (1..grand_mask).collect();
    let mut rounds = 0usize;
    let mut lp_solves = 0usize;

    loop {
        let mut basis = RowBasis::from_rows(&eq_rows);
        if basis.rank == n {
            break;
        }
        if active.is_empty() {
            return Err(NucleolusError::RankStagnation {
                round: rounds,
                rank: basis.rank,
                n,
            });
        }
        rounds += 1;

        // Drop coalitions whose excess is already implied by the equalities.
        active.retain(|&mask| !basis.contains(&indicator(mask, n)));
        if active.is_empty() {
            continue;
        }

        let lp = round_lp(n, &eq_rows, &eq_rhs, &singleton_values, &ir_fixed, &active, &v);
        let sol = solve_lp(&lp.problem).map_err(|source| NucleolusError::RoundFailed {
            round: rounds,
            source,
        })?;
        lp_solves += 1;
        if sol.status != LpStatus::Optimal {
            return Err(NucleolusError::RoundNotOptimal {
                round: rounds,
                status: sol.status,
            });
        }
        let eps = sol.primal[n];

        // A constraint may be fixed only if it binds at every optimum.
        // Positive duals certify that in exact arithmetic; numerically, a
        // small dual can be interior-point noise on a merely-active row, and
        // fixing such a row corrupts later rounds. Clearly-large duals are
        // trusted outright; borderline candidates are simply left active —
        // they come back around either clearly binding or clearly slack once
        // the trusted fixes shrink the problem. (Stationarity in eps makes
        // the excess duals sum to one, so a trusted candidate exists unless
        // the duals are spread over tens of thousands of tied rows.)
        let mut newly_fixed: Vec<u64> = Vec::new();
        for (pos, &mask) in active.iter().enumerate() {
            let row = lp.excess_row_start + pos;
            let dual = sol.row_duals[row];
            let slack = excess_slack(&sol.primal, mask, eps, v(mask));
            if dual >= TRUSTED_DUAL && slack <= TIGHT_SLACK_TOL {
                newly_fixed.push(mask);
            }
        }
        // Binding individual-rationality rows pin that payoff outright.
        let mut newly_ir: Vec<usize> = Vec::new();
        for (pos, &i) in lp.ir_players.iter().enumerate() {
            let row = lp.ir_row_start + pos;
            let dual = sol.row_duals[row];
            let slack = sol.primal[i] - singleton_values[i];
            if -dual >= TRUSTED_DUAL && slack <= TIGHT_SLACK_TOL {
                newly_ir.push(i);
            }
        }

        if newly_fixed.is_empty() && newly_ir.is_empty() {
            // No trusted duals: fall back to perturbation re-solves on the
            // near-tight rows (relax the bound by a hair; a binding row
            // moves the optimum, noise does not).
            let mut confirm_binding = |problem: &LpProblem, row: usize, relax_upper: bool| {
                let mut relaxed = problem.clone();
                if relax_upper {
                    relaxed.rows[row].hi += PERTURBATION;
                } else {
                    relaxed.rows[row].lo -= PERTURBATION;
                }
                let probe = solve_lp(&relaxed).map_err(|source| NucleolusError::RoundFailed {
                    round: rounds,
                    source,
                })?;
                lp_solves += 1;
                Ok::<bool, NucleolusError>(
                    probe.status == LpStatus::Optimal
                        && probe.primal[n] < eps - OBJECTIVE_SHIFT_TOL,
                )
            };
            for (pos, &mask) in active.iter().enumerate() {
                let slack = excess_slack(&sol.primal, mask, eps, v(mask));
                if slack <= FALLBACK_SLACK_TOL
                    && confirm_binding(&lp.problem, lp.excess_row_start + pos, true)?
                {
                    newly_fixed.push(mask);
                }
            }
            for (pos, &i) in lp.ir_players.iter().enumerate() {
                let slack = sol.primal[i] - singleton_values[i];
                if slack <= FALLBACK_SLACK_TOL
                    && confirm_binding(&lp.problem, lp.ir_row_start + pos, false)?
                {
                    newly_ir.push(i);
                }
            }
            if newly_fixed.is_empty() && newly_ir.is_empty() {
                return Err(NucleolusError::RankStagnation {
                    round: rounds,
                    rank: basis.rank,
                    n,
                });
            }
        }

        // Record only rank-increasing equalities: a dependent row's level is
        // already implied, and its separately-measured eps would disagree at
        // solver-noise scale, poisoning later rounds with an infeasible
        // equality system.
        for &mask in &newly_fixed {
            if basis.insert(indicator(mask, n)) {
                eq_rows.push(indicator(mask, n));
                eq_rhs.push(v(mask) - eps);
            }
        }
        for &i in &newly_ir {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            ir_fixed[i] = true;
            if basis.insert(row.clone()) {
                eq_rows.push(row);
                eq_rhs.push(singleton_values[i]);
            }
        }
        active.retain(|mask| !newly_fixed.contains(mask));
    }

    let payoffs = solve_equalities(&eq_rows, &eq_rhs, n)?;
    let report = stability_report(&payoffs, game);
    Ok(NucleolusOutcome {
        allocation: PayoffAllocation {
            payoffs,
            provenance: Provenance::Nucleolus,
        },
        rounds,
        lp_solves,
        max_excess: report.max_excess,
    })
}

struct RoundLp {
    problem: LpProblem,
    ir_players: Vec<usize>,
    ir_row_start: usize,
    excess_row_start: usize,
}

fn round_lp(
    n: usize,
    eq_rows: &[Vec<f64>],
    eq_rhs: &[f64],
    singleton_values: &[f64],
    ir_fixed: &[bool],
    active: &[u64],
    v: &dyn Fn(u64) -> f64,
) -> RoundLp {
    // Variables: x_0..x_{n-1} free, eps at index n.
    let mut problem = LpProblem::new(n + 1);
    problem.objective[n] = 1.0;

    for (row, &rhs) in eq_rows.iter().zip(eq_rhs) {
        let coeffs: Vec<(usize, f64)> = row
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(j, &c)| (j, c))
            .collect();
        problem.rows.push(LpRow::eq(coeffs, rhs));
    }

    let ir_players: Vec<usize> = (0..n).filter(|&i| !ir_fixed[i]).collect();
    let ir_row_start = problem.rows.len();
    for &i in &ir_players {
        problem.rows.push(LpRow::ge(vec![(i, 1.0)], singleton_values[i]));
    }

    let excess_row_start = problem.rows.len();
    for &mask in active {
        let mut coeffs: Vec<(usize, f64)> = Coalition::from_mask(mask)
            .members()
            .into_iter()
            .map(|i| (i, -1.0))
            .collect();
        coeffs.push((n, -1.0));
        problem.rows.push(LpRow::le(coeffs, -v(mask)));
    }

    RoundLp {
        problem,
        ir_players,
        ir_row_start,
        excess_row_start,
    }
}

fn excess_slack(primal: &[f64], mask: u64, eps: f64, value: f64) -> f64 {
    let paid: f64 = Coalition::from_mask(mask)
        .members()
        .into_iter()
        .map(|i| primal[i])
        .sum();
    // Slack of `v(S) - x(S) <= eps`.
    eps - (value - paid)
}

fn indicator(mask: u64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if mask & (1u64 << i) != 0 { 1.0 } else { 0.0 })
        .collect()
}

/// Row-echelon basis for span and rank queries over small dense systems.
struct RowBasis {
    /// Reduced rows, each with its pivot column.
    rows: Vec<(usize, Vec<f64>)>,
    rank: usize,
}

impl RowBasis {
    fn from_rows(rows: &[Vec<f64>]) -> Self {
        let mut basis = RowBasis {
            rows: Vec::new(),
            rank: 0,
        };
        for row in rows {
            basis.insert(row.clone());
        }
        basis
    }

    /// Reduces `row` against the basis; returns the residual if independent.
    fn reduce(&self, mut row: Vec<f64>) -> Option<(usize, Vec<f64>)> {
        for (pivot, basis_row) in &self.rows {
            let factor = row[*pivot];
            if factor != 0.0 {
                for (r, b) in row.iter_mut().zip(basis_row) {
                    *r -= factor * b;
                }
            }
        }
        let (pivot, magnitude) = row
            .iter()
            .enumerate()
            .map(|(j, &x)| (j, x.abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        if magnitude <= RANK_PIVOT_TOL {
            return None;
        }
        let scale = row[pivot];
        for x in row.iter_mut() {
            *x /= scale;
        }
        Some((pivot, row))
    }

    fn insert(&mut self, row: Vec<f64>) -> bool {
        match self.reduce(row) {
            Some((pivot, reduced)) => {
                self.rows.push((pivot, reduced));
                self.rank += 1;
                true
            }
            None => false,
        }
    }

    fn contains(&self, row: &[f64]) -> bool {
        self.reduce(row.to_vec()).is_none()
    }
}

/// Solves the accumulated equality system; requires full column rank.
fn solve_equalities(
    eq_rows: &[Vec<f64>],
    eq_rhs: &[f64],
    n: usize,
) -> Result<Vec<f64>, NucleolusError> {
    // Gaussian elimination with partial pivoting on the augmented system.
    let mut rows: Vec<Vec<f64>> = eq_rows
        .iter()
        .zip(eq_rhs)
        .map(|(r, &b)| {
            let mut row = r.clone();
            row.push(b);
            row
        })
        .collect();
    let m = rows.len();
    let mut pivot_of_col = vec![usize::MAX; n];
    let mut next_row = 0usize;
    for col in 0..n {
        let Some(best) = (next_row..m)
            .filter(|&r| rows[r][col].abs() > RANK_PIVOT_TOL)
            .max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs()))
        else {
            continue;
        };
        rows.swap(next_row, best);
        let pivot_value = rows[next_row][col];
        for x in rows[next_row].iter_mut() {
            *x /= pivot_value;
        }
        for r in 0..m {
            if r != next_row && rows[r][col] != 0.0 {
                let factor = rows[r][col];
                let pivot_row = rows[next_row].clone();
                for (x, p) in rows[r].iter_mut().zip(&pivot_row) {
                    *x -= factor * p;
                }
            }
        }
        pivot_of_col[col] = next_row;
        next_row += 1;
        if next_row == m {
            break;
        }
    }

    let mut x = vec![0.0; n];
    for col in 0..n {
        let r = pivot_of_col[col];
        if r == usize::MAX {
            return Err(NucleolusError::RankStagnation {
                round: 0,
                rank: next_row,
                n,
            });
        }
        x[col] = rows[r][n];
    }

    // Consistency: every original equality must hold at the solution.
    let mut residual = 0.0f64;
    for (row, &rhs) in eq_rows.iter().zip(eq_rhs) {
        let lhs: f64 = row.iter().zip(&x).map(|(a, xi)| a * xi).sum();
        residual = residual.max((lhs - rhs).abs());
    }
    if residual > 1e-6 {
        return Err(NucleolusError::InconsistentSystem { residual });
    }
    Ok(x)
}

/// Exact Shapley value via subset-weighted marginal contributions.
///
/// `phi_i = sum_{S not containing i} |S|!(n-1-|S|)!/n! * (v(S+i) - v(S))`.
pub fn shapley(game: &CoalitionGame) -> PayoffAllocation {
    let n = game.n_players;
    let weights: Vec<f64> = (0..n)
        .map(|s| 1.0 / (n as f64 * binomial(n - 1, s)))
        .collect();
    let mut payoffs = vec![0.0; n];
    for mask in 0..(1u64 << n) {
        let size = mask.count_ones() as usize;
        for (i, payoff) in payoffs.iter_mut().enumerate() {
            let bit = 1u64 << i;
            if mask & bit == 0 {
                let marginal = game.values[(mask | bit) as usize] - game.values[mask as usize];
                *payoff += weights[size] * marginal;
            }
        }
    }
    PayoffAllocation {
        payoffs,
        provenance: Provenance::Shapley,
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k.min(n));
    let mut result = 1.0f64;
    for j in 0..k {
        result *= (n - j) as f64 / (j + 1) as f64;
    }
    result
}

/// Serializes a game to the `players=N` + `mask,value` line format.
pub fn write_game_text(game: &CoalitionGame) -> String {
    let mut out = String::new();
    out.push_str(&format!("players={}\n", game.n_players));
    for (mask, value) in game.values.iter().enumerate() {
        out.push_str(&format!("{mask},{value}\n"));
    }
    out
}

#[derive(Debug, Error)]
pub enum GameFileError {
    #[error("line 1: expected header `players=N`, got `{0}`")]
    BadHeader(String),
    #[error("line {line}: expected `mask,value`, got `{content}`")]
    BadLine { line: usize, content: String },
    #[error("line {line}: mask {mask} out of range for {n_players} players")]
    MaskOutOfRange {
        line: usize,
        mask: u64,
        n_players: usize,
    },
    #[error("line {line}: duplicate mask {mask}")]
    DuplicateMask { line: usize, mask: u64 },
    #[error("missing value for mask {0}")]
    MissingMask(u64),
    #[error("player count {0} exceeds the representable maximum")]
    TooManyPlayers(usize),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Parses the text format written by [`write_game_text`]. Every mask must
/// appear exactly once; blank lines and `#` comments are ignored.
pub fn parse_game_text(text: &str) -> Result<CoalitionGame, GameFileError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(idx, l)| (idx + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (_, header) = lines
        .next()
        .ok_or_else(|| GameFileError::BadHeader(String::new()))?;
    let n_players: usize = header
        .strip_prefix("players=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| GameFileError::BadHeader(header.to_string()))?;
    if n_players > Coalition::MAX_PLAYERS {
        return Err(GameFileError::TooManyPlayers(n_players));
    }

    let size = 1usize << n_players;
    let mut values = vec![f64::NAN; size];
    for (line, content) in lines {
        let parsed = content.split_once(',').and_then(|(m, v)| {
            Some((m.trim().parse::<u64>().ok()?, v.trim().parse::<f64>().ok()?))
        });
        let Some((mask, value)) = parsed else {
            return Err(GameFileError::BadLine {
                line,
                content: content.to_string(),
            });
        };
        if mask as usize >= size {
            return Err(GameFileError::MaskOutOfRange {
                line,
                mask,
                n_players,
            });
        }
        if !values[mask as usize].is_nan() {
            return Err(GameFileError::DuplicateMask { line, mask });
        }
        values[mask as usize] = value;
    }
    if let Some(mask) = values.iter().position(|v| v.is_nan()) {
        return Err(GameFileError::MissingMask(mask as u64));
    }
    Ok(CoalitionGame::from_values(n_players, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_scenario, Prosumer, Scenario, TariffSchedule};

    fn abstract_game(n: usize, assign: &[(u64, f64)]) -> CoalitionGame {
        let mut values = vec![0.0; 1 << n];
        for &(mask, v) in assign {
            values[mask as usize] = v;
        }
        CoalitionGame::from_values(n, values).unwrap()
    }

    /// 3-player game used across tests; nucleolus is (0.45, 0.30, 0.25)
    /// (two hand-worked rounds: first {3} and {1,2} bind at -0.25, then
    /// {1,3} and {2} bind at -0.30).
    fn asymmetric_three() -> CoalitionGame {
        abstract_game(
            3,
            &[(0b011, 0.5), (0b101, 0.4), (0b110, 0.2), (0b111, 1.0)],
        )
    }

    #[test]
    fn single_prosumer_game_is_zero() {
        let s = validate_scenario(Scenario {
            prosumers: vec![Prosumer::new("a", vec![1.0, 1.0])],
            tariff: TariffSchedule::flat(2, 0.1, 0.05),
            horizon: 2,
            interval_hours: 0.5,
        })
        .unwrap();
        let eval = CostEvaluator::new(&s);
        let game = build_game(&eval).unwrap();
        assert_eq!(game.values, vec![0.0, 0.0]);
        assert_eq!(eval.lp_solves(), 1);
    }

    #[test]
    fn identical_inflexible_prosumers_create_no_value() {
        let s = validate_scenario(Scenario {
            prosumers: vec![
                Prosumer::new("a", vec![1.0, 0.5]),
                Prosumer::new("b", vec![1.0, 0.5]),
            ],
            tariff: TariffSchedule::flat(2, 0.1681, 0.0485),
            horizon: 2,
            interval_hours: 0.5,
        })
        .unwrap();
        let eval = CostEvaluator::new(&s);
        let game = build_game(&eval).unwrap();
        for &v in &game.values {
            assert!(v.abs() < 1e-7, "expected zero value, got {v}");
        }
        assert_eq!(eval.lp_solves(), 3);
    }

    #[test]
    fn generator_consumer_pair_value_is_price_spread_times_matched_energy() {
        let s = validate_scenario(Scenario {
            prosumers: vec![
                Prosumer::new("gen", vec![-1.0, -1.0]),
                Prosumer::new("con", vec![1.0, 1.0]),
            ],
            tariff: TariffSchedule::flat(2, 0.1681, 0.0485),
            horizon: 2,
            interval_hours: 0.5,
        })
        .unwrap();
        let eval = CostEvaluator::new(&s);
        let game = build_game(&eval).unwrap();
        assert_eq!(game.value(Coalition::singleton(0)), 0.0);
        assert_eq!(game.value(Coalition::singleton(1)), 0.0);
        let expected = (0.1681 - 0.0485) * 2.0;
        assert!((game.value(Coalition::grand(2)) - expected).abs() < 1e-6);
    }

    #[test]
    fn cap_refusal_mentions_clustered_pipeline() {
        let n = 3;
        let s = validate_scenario(Scenario {
            prosumers: (0..n)
                .map(|i| Prosumer::new(format!("p{i}"), vec![1.0]))
                .collect(),
            tariff: TariffSchedule::flat(1, 0.1, 0.05),
            horizon: 1,
            interval_hours: 0.5,
        })
        .unwrap();
        let eval = CostEvaluator::new(&s);
        let err = build_game_capped(&eval, 2).unwrap_err();
        assert!(err.to_string().contains("clustered pipeline"));
    }

    #[test]
    fn excess_of_zero_vector_is_the_value() {
        let game = abstract_game(2, &[(0b11, 0.4)]);
        assert_eq!(excess(&[0.0, 0.0], Coalition::from_mask(0b11), &game), 0.4);
        assert_eq!(excess(&[0.0, 0.0], Coalition::empty(), &game), 0.0);
    }

    #[test]
    fn excess_of_grand_coalition_vanishes_for_efficient_allocations() {
        let game = abstract_game(2, &[(0b11, 1.0)]);
        assert_eq!(excess(&[0.6, 0.4], Coalition::grand(2), &game), 0.0);
    }

    #[test]
    fn imputation_checks() {
        let game = abstract_game(2, &[(0b11, 1.0)]);
        let (ok, v) = is_imputation(&[0.5, 0.5], &game);
        assert!(ok && v.is_empty());

        let (ok, v) = is_imputation(&[0.5, 0.4], &game);
        assert!(!ok);
        assert!(matches!(v[0], ImputationViolation::Efficiency { .. }));

        let (ok, v) = is_imputation(&[1.01, -0.01], &game);
        assert!(!ok);
        assert!(v
            .iter()
            .any(|x| matches!(x, ImputationViolation::Rationality { player: 1, .. })));
    }

    #[test]
    fn two_player_nucleolus_splits_evenly() {
        let game = abstract_game(2, &[(0b11, 1.0)]);
        let out = nucleolus(&game).unwrap();
        assert!((out.allocation.payoffs[0] - 0.5).abs() < 1e-7);
        assert!((out.allocation.payoffs[1] - 0.5).abs() < 1e-7);
        assert!(out.max_excess <= 1e-6);
    }

    #[test]
    fn symmetric_three_player_nucleolus_is_equal_split() {
        for a in [0.0, 0.3, 0.6, 1.0] {
            let game = abstract_game(
                3,
                &[(0b011, a), (0b101, a), (0b110, a), (0b111, 1.0)],
            );
            let out = nucleolus(&game).unwrap();
            for &x in &out.allocation.payoffs {
                assert!((x - 1.0 / 3.0).abs() < 1e-6, "a={a}, got {:?}", out.allocation);
            }
        }
    }

    #[test]
    fn asymmetric_three_player_nucleolus() {
        let out = nucleolus(&asymmetric_three()).unwrap();
        let expected = [0.45, 0.30, 0.25];
        for (x, e) in out.allocation.payoffs.iter().zip(expected) {
            assert!((x - e).abs() < 1e-6, "got {:?}", out.allocation.payoffs);
        }
        assert!(out.max_excess <= 1e-6);
        let (ok, _) = is_imputation(&out.allocation.payoffs, &asymmetric_three());
        assert!(ok);
    }

    #[test]
    fn nucleolus_commutes_with_player_relabeling() {
        let base = asymmetric_three();
        // Swap players 0 and 2.
        let perm = [2usize, 1, 0];
        let mut values = vec![0.0; 8];
        for mask in 0..8u64 {
            let mut permuted = 0u64;
            for i in 0..3 {
                if mask & (1 << i) != 0 {
                    permuted |= 1 << perm[i];
                }
            }
            values[permuted as usize] = base.values[mask as usize];
        }
        let permuted_game = CoalitionGame::from_values(3, values).unwrap();
        let u_base = nucleolus(&base).unwrap().allocation.payoffs;
        let u_perm = nucleolus(&permuted_game).unwrap().allocation.payoffs;
        for i in 0..3 {
            assert!((u_base[i] - u_perm[perm[i]]).abs() < 1e-9);
        }
    }

    #[test]
    fn inessential_game_short_circuits_to_singleton_point() {
        // Dispatch noise can leave v(N) a hair below zero on games with no
        // cooperative value; the imputation point is still well defined.
        let game = abstract_game(2, &[(0b11, -5e-10)]);
        let out = nucleolus(&game).unwrap();
        assert_eq!(out.lp_solves, 0);
        assert!((out.allocation.payoffs[0] + 2.5e-10).abs() < 1e-12);
        assert!((out.allocation.total() - -5e-10).abs() < 1e-15);

        // A genuinely empty imputation set is an error, not a guess.
        let game = abstract_game(2, &[(0b11, -1e-3)]);
        assert!(matches!(
            nucleolus(&game),
            Err(NucleolusError::EmptyImputationSet { .. })
        ));
    }

    #[test]
    fn nucleolus_rejects_single_player() {
        let game = abstract_game(1, &[]);
        assert!(matches!(
            nucleolus(&game),
            Err(NucleolusError::TooFewPlayers(1))
        ));
    }

    #[test]
    fn shapley_two_player_and_dummy() {
        let game = abstract_game(2, &[(0b11, 1.0)]);
        let phi = shapley(&game).payoffs;
        assert!((phi[0] - 0.5).abs() < 1e-12 && (phi[1] - 0.5).abs() < 1e-12);

        // Player 2 contributes nothing anywhere: v(S + {2}) = v(S) for all S.
        let game = abstract_game(3, &[(0b011, 0.5), (0b111, 0.5)]);
        let phi = shapley(&game).payoffs;
        assert!(phi[2].abs() < 1e-12, "dummy player got {}", phi[2]);
    }

    #[test]
    fn shapley_matches_hand_worked_permutation_average() {
        let phi = shapley(&asymmetric_three()).payoffs;
        let expected = [2.5 / 6.0, 1.9 / 6.0, 1.6 / 6.0];
        for (p, e) in phi.iter().zip(expected) {
            assert!((p - e).abs() < 1e-12);
        }
        let total: f64 = phi.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stability_report_flags_defecting_coalition() {
        let game = abstract_game(2, &[(0b11, 1.0)]);
        let report = stability_report(&[0.0, 0.0], &game);
        assert_eq!(report.max_excess, 1.0);
        assert_eq!(report.argmax, Coalition::grand(2));

        // Empty-core game: the pair {1,2} is worth more than the grand
        // coalition can pay, so any efficient allocation leaves it sore.
        let game = abstract_game(3, &[(0b011, 1.2), (0b111, 1.0)]);
        let phi = shapley(&game).payoffs;
        let report = stability_report(&phi, &game);
        assert!(report.max_excess > 0.0);
        assert_eq!(report.argmax, Coalition::from_mask(0b011));
    }

    #[test]
    fn game_text_roundtrip_and_errors() {
        let game = asymmetric_three();
        let text = write_game_text(&game);
        let parsed = parse_game_text(&text).unwrap();
        assert_eq!(parsed.n_players, 3);
        assert_eq!(parsed.values, game.values);

        assert!(matches!(
            parse_game_text("players=x\n"),
            Err(GameFileError::BadHeader(_))
        ));
        let missing = "players=2\n0,0\n1,0\n2,0\n";
        assert!(matches!(
            parse_game_text(missing),
            Err(GameFileError::MissingMask(3))
        ));
        let dup = "players=1\n0,0\n1,1\n1,2\n";
        assert!(matches!(
            parse_game_text(dup),
            Err(GameFileError::DuplicateMask { mask: 1, .. })
        ));
    }
}
