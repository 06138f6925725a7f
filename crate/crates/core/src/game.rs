//! Small-scale game solvers.
//!
//! Everything here is derivative-free and deterministic: a golden-section
//! line search is the only univariate primitive, coordinate descent built on
//! it handles boxes, enumeration handles finite action sets. On top of those
//! sit Gauss-Seidel best-response iteration for Nash equilibria, fictitious
//! play for zero-sum matrix games, and nested search for Stackelberg games.

use thiserror::Error;

/// Interval contraction factor of the golden-section search.
pub const GOLDEN_RATIO_CONJUGATE: f64 = 0.618_033_988_749_894_9;

const DESCENT_SWEEPS: usize = 50;
const DESCENT_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("empty interval")]
    EmptyInterval,
    #[error("invalid tolerance")]
    InvalidTolerance,
    #[error("unknown player {0}")]
    UnknownPlayer(usize),
    #[error("dimension error")]
    Dimension,
}

/// Minimizes a univariate function on `[a, b]` to within `tol` on the
/// argument, returning the bracket midpoint.
///
/// Uses at most `ceil(log((b - a) / tol) / log(1 / r)) + 2` evaluations,
/// where `r` is the golden-ratio conjugate. The function is assumed
/// unimodal on the interval; on plateaus the left subinterval is kept, so
/// the search is deterministic.
pub fn golden_section(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, GameError> {
    if !a.is_finite() || !b.is_finite() || a >= b {
        return Err(GameError::EmptyInterval);
    }
    if !tol.is_finite() || tol <= 0.0 {
        return Err(GameError::InvalidTolerance);
    }
    let r = GOLDEN_RATIO_CONJUGATE;
    let mut lo = a;
    let mut hi = b;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A player's admissible strategies: a coordinate box or a finite action list.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategySet {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Finite(Vec<Vec<f64>>),
}

impl StrategySet {
    pub fn interval(lower: f64, upper: f64) -> Self {
        StrategySet::Box {
            lower: vec![lower],
            upper: vec![upper],
        }
    }

    pub fn finite_scalars(actions: &[f64]) -> Self {
        StrategySet::Finite(actions.iter().map(|&a| vec![a]).collect())
    }

    pub fn validate(&self) -> Result<(), GameError> {
        match self {
            StrategySet::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(GameError::Dimension);
                }
                for (lo, hi) in lower.iter().zip(upper.iter()) {
                    if !lo.is_finite() || !hi.is_finite() || lo > hi {
                        return Err(GameError::Dimension);
                    }
                }
                Ok(())
            }
            StrategySet::Finite(actions) => {
                let dim = actions.first().map(|a| a.len()).ok_or(GameError::Dimension)?;
                if dim == 0 {
                    return Err(GameError::Dimension);
                }
                for a in actions {
                    if a.len() != dim || a.iter().any(|v| !v.is_finite()) {
                        return Err(GameError::Dimension);
                    }
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            StrategySet::Box { lower, .. } => lower.len(),
            StrategySet::Finite(actions) => actions.first().map(|a| a.len()).unwrap_or(0),
        }
    }

    /// Clamps into the box, or snaps to the nearest listed action.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, GameError> {
        if x.len() != self.dim() {
            return Err(GameError::Dimension);
        }
        match self {
            StrategySet::Box { lower, upper } => Ok(x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
                .collect()),
            StrategySet::Finite(actions) => {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (k, a) in actions.iter().enumerate() {
                    let d: f64 = a.iter().zip(x.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
                    if d < best_d {
                        best_d = d;
                        best = k;
                    }
                }
                Ok(actions[best].clone())
            }
        }
    }
}

/// Cost function of one player: `(own candidate strategy, full profile)` to
/// cost. Implementations must read the player's own strategy from the first
/// argument; the player's slot in the profile holds the incumbent value.
pub type CostFn = Box<dyn Fn(&[f64], &[Vec<f64>]) -> f64>;

pub struct PlayerProblem {
    pub name: String,
    pub strategy_set: StrategySet,
    pub cost: CostFn,
}

impl PlayerProblem {
    pub fn new(name: &str, strategy_set: StrategySet, cost: CostFn) -> Self {
        PlayerProblem {
            name: name.to_string(),
            strategy_set,
            cost,
        }
    }
}

#[derive(Default)]
pub struct GameProblem {
    pub players: Vec<PlayerProblem>,
}

impl GameProblem {
    pub fn new(players: Vec<PlayerProblem>) -> Self {
        GameProblem { players }
    }
}

/// Minimizes player `i`'s cost with every other strategy in `profile` held
/// fixed. Finite sets are enumerated (first minimum wins); boxes use
/// coordinate-wise golden-section descent.
pub fn best_response(
    game: &GameProblem,
    i: usize,
    profile: &[Vec<f64>],
) -> Result<Vec<f64>, GameError> {
    let player = game.players.get(i).ok_or(GameError::UnknownPlayer(i))?;
    if profile.len() != game.players.len() {
        return Err(GameError::Dimension);
    }
    player.strategy_set.validate()?;
    match &player.strategy_set {
        StrategySet::Finite(actions) => {
            let mut best = None;
            let mut best_cost = f64::INFINITY;
            for action in actions {
                let c = (player.cost)(action, profile);
                if c < best_cost {
                    best_cost = c;
                    best = Some(action.clone());
                }
            }
            best.ok_or(GameError::Dimension)
        }
        StrategySet::Box { lower, upper } => {
            let mut x = player.strategy_set.project(&profile[i])?;
            for _ in 0..DESCENT_SWEEPS {
                let mut moved = 0.0_f64;
                for k in 0..x.len() {
                    if upper[k] - lower[k] <= DESCENT_TOL {
                        x[k] = 0.5 * (lower[k] + upper[k]);
                        continue;
                    }
                    let current = (player.cost)(&x, profile);
                    let candidate = golden_section(
                        |v| {
                            let mut y = x.clone();
                            y[k] = v;
                            (player.cost)(&y, profile)
                        },
                        lower[k],
                        upper[k],
                        DESCENT_TOL,
                    )?;
                    let mut y = x.clone();
                    y[k] = candidate;
                    if (player.cost)(&y, profile) < current {
                        moved = moved.max((candidate - x[k]).abs());
                        x[k] = candidate;
                    }
                }
                if moved <= DESCENT_TOL {
                    break;
                }
            }
            Ok(x)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub profile: Vec<Vec<f64>>,
    /// Largest cost any player could still save by deviating unilaterally.
    pub residual: f64,
    /// Completed Gauss-Seidel sweeps.
    pub iterations: usize,
    pub converged: bool,
}

/// Gauss-Seidel best-response iteration.
///
/// After each sweep the profile is frozen and re-audited with independent
/// best-response calls; the reported residual is the worst unilateral
/// improvement still available. Non-convergence within `max_iter` sweeps is
/// reported through the `converged` flag, not an error.
pub fn nash_solve(
    game: &GameProblem,
    init: &[Vec<f64>],
    tol: f64,
    max_iter: usize,
) -> Result<EquilibriumResult, GameError> {
    if !tol.is_finite() || tol < 0.0 {
        return Err(GameError::InvalidTolerance);
    }
    if init.len() != game.players.len() {
        return Err(GameError::Dimension);
    }
    let mut profile: Vec<Vec<f64>> = Vec::with_capacity(init.len());
    for (player, start) in game.players.iter().zip(init.iter()) {
        player.strategy_set.validate()?;
        profile.push(player.strategy_set.project(start)?);
    }
    if game.players.is_empty() {
        return Ok(EquilibriumResult {
            profile,
            residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iter.max(1) {
        for i in 0..game.players.len() {
            profile[i] = best_response(game, i, &profile)?;
        }
        residual = 0.0;
        for (i, player) in game.players.iter().enumerate() {
            let br = best_response(game, i, &profile)?;
            let own = (player.cost)(&profile[i], &profile);
            let best = (player.cost)(&br, &profile);
            residual = residual.max(own - best);
        }
        if residual <= tol {
            return Ok(EquilibriumResult {
                profile,
                residual,
                iterations: iteration,
                converged: true,
            });
        }
    }
    Ok(EquilibriumResult {
        profile,
        residual,
        iterations: max_iter.max(1),
        converged: false,
    })
}

/// Enumerates all pure Nash equilibria of a bimatrix game given as cost
/// tables (row player picks the row, both players minimize).
pub fn pure_nash_enumerate(
    row_costs: &[Vec<f64>],
    col_costs: &[Vec<f64>],
) -> Result<Vec<(usize, usize)>, GameError> {
    let m = row_costs.len();
    if m == 0 || col_costs.len() != m {
        return Err(GameError::Dimension);
    }
    let n = row_costs[0].len();
    if n == 0 {
        return Err(GameError::Dimension);
    }
    for (r, c) in row_costs.iter().zip(col_costs.iter()) {
        if r.len() != n || c.len() != n {
            return Err(GameError::Dimension);
        }
        if r.iter().chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(GameError::Dimension);
        }
    }
    let mut out = Vec::new();
    for i in 0..m {
        for j in 0..n {
            let row_best = (0..m).all(|k| row_costs[i][j] <= row_costs[k][j]);
            let col_best = (0..n).all(|k| col_costs[i][j] <= col_costs[i][k]);
            if row_best && col_best {
                out.push((i, j));
            }
        }
    }
    Ok(out)
}

/// Zero-sum matrix game: the row player maximizes `payoff`, the column
/// player minimizes it.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSumMatrixGame {
    pub payoff: Vec<Vec<f64>>,
}

impl ZeroSumMatrixGame {
    pub fn new(payoff: Vec<Vec<f64>>) -> Result<Self, GameError> {
        let m = payoff.len();
        if m == 0 || payoff[0].is_empty() {
            return Err(GameError::Dimension);
        }
        let n = payoff[0].len();
        for row in &payoff {
            if row.len() != n || row.iter().any(|v| !v.is_finite()) {
                return Err(GameError::Dimension);
            }
        }
        Ok(ZeroSumMatrixGame { payoff })
    }

    fn shape(&self) -> (usize, usize) {
        (self.payoff.len(), self.payoff[0].len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleResult {
    pub row_strategy: Vec<f64>,
    pub col_strategy: Vec<f64>,
    /// Empirical game value under the averaged strategies.
    pub value: f64,
    /// Upper bound on how far the strategy pair is from the saddle point:
    /// best row payoff against the column average minus worst column payoff
    /// against the row average.
    pub exploitability: f64,
}

/// Fictitious play: both players repeatedly best-respond to the opponent's
/// empirical mixture, starting from the first action.
pub fn saddle_solve(game: &ZeroSumMatrixGame, iterations: usize) -> Result<SaddleResult, GameError> {
    if iterations == 0 {
        return Err(GameError::InvalidTolerance);
    }
    let (m, n) = game.shape();
    let a = &game.payoff;
    let mut row_counts = vec![0.0_f64; m];
    let mut col_counts = vec![0.0_f64; n];
    row_counts[0] += 1.0;
    col_counts[0] += 1.0;

    for _ in 1..iterations {
        let mut br_row = 0;
        let mut best_gain = f64::NEG_INFINITY;
        for i in 0..m {
            let gain: f64 = (0..n).map(|j| a[i][j] * col_counts[j]).sum();
            if gain > best_gain {
                best_gain = gain;
                br_row = i;
            }
        }
        let mut br_col = 0;
        let mut best_loss = f64::INFINITY;
        for j in 0..n {
            let loss: f64 = (0..m).map(|i| row_counts[i] * a[i][j]).sum();
            if loss < best_loss {
                best_loss = loss;
                br_col = j;
            }
        }
        row_counts[br_row] += 1.0;
        col_counts[br_col] += 1.0;
    }

    let total: f64 = iterations as f64;
    let x: Vec<f64> = row_counts.iter().map(|c| c / total).collect();
    let y: Vec<f64> = col_counts.iter().map(|c| c / total).collect();

    let value: f64 = (0..m)
        .map(|i| (0..n).map(|j| x[i] * a[i][j] * y[j]).sum::<f64>())
        .sum();
    let best_row = (0..m)
        .map(|i| (0..n).map(|j| a[i][j] * y[j]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let best_col = (0..n)
        .map(|j| (0..m).map(|i| x[i] * a[i][j]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);

    Ok(SaddleResult {
        row_strategy: x,
        col_strategy: y,
        value,
        exploitability: best_row - best_col,
    })
}

/// Leader-follower game. Both objectives are costs over
/// `(leader strategy, follower strategy)`.
pub struct BilevelProblem {
    pub leader_set: StrategySet,
    pub follower_set: StrategySet,
    pub leader_cost: Box<dyn Fn(&[f64], &[f64]) -> f64>,
    pub follower_cost: Box<dyn Fn(&[f64], &[f64]) -> f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackelbergResult {
    pub leader: Vec<f64>,
    pub follower: Vec<f64>,
    pub leader_cost: f64,
}

pub(crate) fn coordinate_descent(
    lower: &[f64],
    upper: &[f64],
    start: Vec<f64>,
    f: &dyn Fn(&[f64]) -> f64,
    tol: f64,
) -> Result<Vec<f64>, GameError> {
    let mut x = start;
    for _ in 0..DESCENT_SWEEPS {
        let mut moved = 0.0_f64;
        for k in 0..x.len() {
            if upper[k] - lower[k] <= tol {
                x[k] = 0.5 * (lower[k] + upper[k]);
                continue;
            }
            let current = f(&x);
            let candidate = golden_section(
                |v| {
                    let mut y = x.clone();
                    y[k] = v;
                    f(&y)
                },
                lower[k],
                upper[k],
                tol,
            )?;
            let mut y = x.clone();
            y[k] = candidate;
            if f(&y) < current {
                moved = moved.max((candidate - x[k]).abs());
                x[k] = candidate;
            }
        }
        if moved <= tol {
            break;
        }
    }
    Ok(x)
}

pub(crate) fn box_center(lower: &[f64], upper: &[f64]) -> Vec<f64> {
    lower
        .iter()
        .zip(upper.iter())
        .map(|(&lo, &hi)| 0.5 * (lo + hi))
        .collect()
}

/// Best follower reply to a fixed leader strategy, breaking follower ties in
/// the leader's favor.
fn follower_react(p: &BilevelProblem, x: &[f64], tol: f64) -> Result<Vec<f64>, GameError> {
    match &p.follower_set {
        StrategySet::Finite(actions) => {
            let mut f_min = f64::INFINITY;
            for action in actions {
                f_min = f_min.min((p.follower_cost)(x, action));
            }
            let tie = 1e-9 * (1.0 + f_min.abs());
            let mut best: Option<&Vec<f64>> = None;
            let mut best_leader = f64::INFINITY;
            for action in actions {
                if (p.follower_cost)(x, action) <= f_min + tie {
                    let lc = (p.leader_cost)(x, action);
                    if lc < best_leader {
                        best_leader = lc;
                        best = Some(action);
                    }
                }
            }
            best.cloned().ok_or(GameError::Dimension)
        }
        StrategySet::Box { lower, upper } => {
            let follower = |y: &[f64]| (p.follower_cost)(x, y);
            let y1 = coordinate_descent(lower, upper, box_center(lower, upper), &follower, tol)?;
            let f_star = follower(&y1);
            let tie = 1e-9 * (1.0 + f_star.abs());
            let optimistic = |y: &[f64]| {
                let slack = (follower(y) - f_star - tie).max(0.0);
                (p.leader_cost)(x, y) + 1e8 * slack * slack
            };
            let y2 = coordinate_descent(lower, upper, y1.clone(), &optimistic, tol)?;
            if follower(&y2) <= f_star + 10.0 * tie
                && (p.leader_cost)(x, &y2) < (p.leader_cost)(x, &y1)
            {
                Ok(y2)
            } else {
                Ok(y1)
            }
        }
    }
}

/// Solves the leader's problem by search over its strategy set, with the
/// follower replying optimally (and optimistically) at every probe.
pub fn stackelberg_solve(p: &BilevelProblem, tol: f64) -> Result<StackelbergResult, GameError> {
    if !tol.is_finite() || tol <= 0.0 {
        return Err(GameError::InvalidTolerance);
    }
    p.leader_set.validate()?;
    p.follower_set.validate()?;

    let leader = match &p.leader_set {
        StrategySet::Finite(actions) => {
            let mut best = None;
            let mut best_cost = f64::INFINITY;
            for action in actions {
                let y = follower_react(p, action, tol)?;
                let c = (p.leader_cost)(action, &y);
                if c < best_cost {
                    best_cost = c;
                    best = Some(action.clone());
                }
            }
            best.ok_or(GameError::Dimension)?
        }
        StrategySet::Box { lower, upper } => {
            let objective = |x: &[f64]| match follower_react(p, x, tol) {
                Ok(y) => (p.leader_cost)(x, &y),
                Err(_) => f64::INFINITY,
            };
            coordinate_descent(lower, upper, box_center(lower, upper), &objective, tol)?
        }
    };
    let follower = follower_react(p, &leader, tol)?;
    let leader_cost = (p.leader_cost)(&leader, &follower);
    Ok(StackelbergResult {
        leader,
        follower,
        leader_cost,
    })
}
