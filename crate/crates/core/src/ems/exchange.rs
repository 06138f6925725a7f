//! Utility-connection layer: exchange-flow equilibrium.
//!
//! Each networked micro energy internet picks its own signed exchange
//! profile (per carrier, per step, within bounds) to minimize its operating
//! cost given what the others trade. The settled profile is the Nash
//! equilibrium of that game. An autonomous system trades nothing, so its
//! schedule is identically zero without running a solve.

use super::EmsError;
use crate::game::{nash_solve, GameProblem, PlayerProblem, StrategySet};
use crate::model::{Carrier, OperationMode, PerCarrier, CARRIER_COUNT};
use std::cell::RefCell;
use std::collections::HashMap;

/// Operating cost of one internet as a function of its own flattened
/// exchange vector and the other internets' vectors (self omitted, original
/// order otherwise preserved).
pub type ExchangeCostFn = Box<dyn Fn(&[f64], &[Vec<f64>]) -> f64>;

/// Exchange vectors are flattened carrier-major: entry `c * horizon + t`.
pub struct MeiAgent {
    pub name: String,
    pub horizon: usize,
    /// Per-carrier symmetric flow bound, kW.
    pub bounds: PerCarrier<f64>,
    pub cost: ExchangeCostFn,
}

impl MeiAgent {
    pub fn new(name: &str, horizon: usize, bounds: PerCarrier<f64>, cost: ExchangeCostFn) -> Self {
        MeiAgent {
            name: name.to_string(),
            horizon,
            bounds,
            cost,
        }
    }

    /// Wraps the cost in a cache keyed on every strategy quantized to
    /// 1e-6 kW, so repeated best-response probes of an expensive inner
    /// dispatch are computed once.
    pub fn memoized(
        name: &str,
        horizon: usize,
        bounds: PerCarrier<f64>,
        cost: ExchangeCostFn,
    ) -> Self {
        let cache: RefCell<HashMap<Vec<i64>, f64>> = RefCell::new(HashMap::new());
        let wrapped = move |own: &[f64], others: &[Vec<f64>]| {
            let mut key: Vec<i64> = Vec::with_capacity(
                own.len() + others.iter().map(Vec::len).sum::<usize>(),
            );
            for v in own.iter().chain(others.iter().flatten()) {
                key.push((v * 1e6).round() as i64);
            }
            if let Some(&cached) = cache.borrow().get(&key) {
                return cached;
            }
            let value = cost(own, others);
            cache.borrow_mut().insert(key, value);
            value
        };
        MeiAgent::new(name, horizon, bounds, Box::new(wrapped))
    }

    fn dim(&self) -> usize {
        CARRIER_COUNT * self.horizon
    }
}

/// Settled exchange flows, one signed series per participant and carrier.
/// Positive values are inflows into the participant.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeSchedule {
    pub pairs: Vec<String>,
    pub horizon: usize,
    pub flows: Vec<PerCarrier<Vec<f64>>>,
    pub bounds: Vec<PerCarrier<f64>>,
    pub converged: bool,
    pub residual: f64,
}

impl ExchangeSchedule {
    pub fn zero(pairs: Vec<String>, horizon: usize, bounds: Vec<PerCarrier<f64>>) -> Self {
        let flows = pairs
            .iter()
            .map(|_| PerCarrier::splat(vec![0.0; horizon]))
            .collect();
        ExchangeSchedule {
            pairs,
            horizon,
            flows,
            bounds,
            converged: true,
            residual: 0.0,
        }
    }

    /// A schedule with no participants, for single-internet dispatch.
    pub fn empty(horizon: usize) -> Self {
        ExchangeSchedule::zero(Vec::new(), horizon, Vec::new())
    }

    pub fn flow(&self, pair: usize, c: Carrier, t: usize) -> f64 {
        self.flows[pair].get(c)[t]
    }

    pub fn is_identically_zero(&self) -> bool {
        self.flows
            .iter()
            .all(|f| f.iter().all(|(_, series)| series.iter().all(|v| *v == 0.0)))
    }
}

/// Settles exchange flows among the participants.
///
/// Autonomous mode short-circuits to the zero schedule. Otherwise one
/// box-constrained player per internet enters a Gauss-Seidel best-response
/// solve; non-convergence is reported through the schedule's flag rather
/// than an error.
pub fn exchange_equilibrium(
    meis: Vec<MeiAgent>,
    mode: OperationMode,
    tol: f64,
) -> Result<ExchangeSchedule, EmsError> {
    if meis.is_empty() {
        return Err(EmsError::Dimension);
    }
    let horizon = meis[0].horizon;
    if meis.iter().any(|m| m.horizon != horizon) {
        return Err(EmsError::InconsistentHorizon);
    }
    for agent in &meis {
        for (_, b) in agent.bounds.iter() {
            if !b.is_finite() || *b < 0.0 {
                return Err(EmsError::InvalidParameter(
                    "exchange bounds must be nonnegative".into(),
                ));
            }
        }
    }
    let pairs: Vec<String> = meis.iter().map(|m| m.name.clone()).collect();
    let bounds: Vec<PerCarrier<f64>> = meis.iter().map(|m| m.bounds.clone()).collect();
    if mode == OperationMode::Autonomous || horizon == 0 {
        return Ok(ExchangeSchedule::zero(pairs, horizon, bounds));
    }

    let n = meis.len();
    let players: Vec<PlayerProblem> = meis
        .into_iter()
        .enumerate()
        .map(|(i, agent)| {
            let dim = agent.dim();
            let mut lower = vec![0.0; dim];
            let mut upper = vec![0.0; dim];
            for c in Carrier::ALL {
                let b = *agent.bounds.get(c);
                for t in 0..agent.horizon {
                    lower[c.index() * agent.horizon + t] = -b;
                    upper[c.index() * agent.horizon + t] = b;
                }
            }
            let cost_fn = agent.cost;
            let cost = move |own: &[f64], profile: &[Vec<f64>]| {
                let others: Vec<Vec<f64>> = profile
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, s)| s.clone())
                    .collect();
                cost_fn(own, &others)
            };
            PlayerProblem::new(&agent.name, StrategySet::Box { lower, upper }, Box::new(cost))
        })
        .collect();

    let game = GameProblem::new(players);
    let init: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![0.0; CARRIER_COUNT * horizon])
        .collect();
    let result = nash_solve(&game, &init, tol, 60)?;

    let flows = result
        .profile
        .iter()
        .map(|strategy| {
            PerCarrier::from_fn(|c| {
                strategy[c.index() * horizon..(c.index() + 1) * horizon].to_vec()
            })
        })
        .collect();
    Ok(ExchangeSchedule {
        pairs,
        horizon,
        flows,
        bounds,
        converged: result.converged,
        residual: result.residual,
    })
}
