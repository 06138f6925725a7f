//! Bi-objective planning: cost versus emissions.
//!
//! A planning problem carries two scalar objectives over a box of sizing
//! variables. The front of efficient trade-offs is traced by weighted
//! scalarization, and a single build recommendation is picked from it by
//! maximizing the product of savings relative to a worst-case anchor point,
//! which keeps the choice invariant under affine rescaling of either
//! objective. Hub component portfolios reuse the same machinery over
//! exhaustively enumerated subsets.

use crate::game::{box_center, coordinate_descent, golden_section, GameError};
use crate::model::{demand_series_name, Carrier, PortVector, Scenario};
use thiserror::Error;

/// Quadratic penalty weight applied to constraint violations inside
/// scalarized solves.
const PENALTY_WEIGHT: f64 = 1e6;
/// Violation magnitude up to which a returned point still counts as feasible.
const FEASIBILITY_TOL: f64 = 1e-6;
const SEARCH_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no weights")]
    NoWeights,
    #[error("weight outside unit interval")]
    WeightOutOfRange,
    #[error("empty Pareto front")]
    EmptyFront,
    #[error("invalid disagreement point")]
    InvalidDisagreement,
    #[error("infeasible demand")]
    InfeasibleDemand,
    #[error("catalog too large")]
    CatalogTooLarge,
    #[error("dimension error")]
    Dimension,
    #[error(transparent)]
    Search(#[from] GameError),
}

pub type ObjectiveFn = Box<dyn Fn(&[f64]) -> f64>;
pub type ConstraintFn = Box<dyn Fn(&[f64]) -> f64>;

/// Two objectives over a box, with optional equality (`g(x) = 0`) and
/// inequality (`h(x) <= 0`) constraints.
pub struct BiObjectiveProblem {
    /// First objective, in currency.
    pub cost: ObjectiveFn,
    /// Second objective, in kg CO2.
    pub emission: ObjectiveFn,
    pub equalities: Vec<ConstraintFn>,
    pub inequalities: Vec<ConstraintFn>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BiObjectiveProblem {
    pub fn unconstrained(
        cost: ObjectiveFn,
        emission: ObjectiveFn,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Self {
        BiObjectiveProblem {
            cost,
            emission,
            equalities: Vec::new(),
            inequalities: Vec::new(),
            lower,
            upper,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn validate(&self) -> Result<(), PlanError> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(PlanError::Dimension);
        }
        for (lo, hi) in self.lower.iter().zip(self.upper.iter()) {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(PlanError::Dimension);
            }
        }
        Ok(())
    }

    fn penalty(&self, x: &[f64]) -> f64 {
        let mut p = 0.0;
        for g in &self.equalities {
            let v = g(x);
            p += v * v;
        }
        for h in &self.inequalities {
            let v = h(x).max(0.0);
            p += v * v;
        }
        PENALTY_WEIGHT * p
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.equalities.iter().all(|g| g(x).abs() <= tol)
            && self.inequalities.iter().all(|h| h(x) <= tol)
    }

    /// Sampled extreme values of one raw objective over the box, used to
    /// normalize both objectives onto a comparable scale. Normalizing by a
    /// sampled minimum and span makes the scalarization indifferent to
    /// affine rescaling of the raw objectives.
    fn objective_range(&self, which: Objective) -> Result<(f64, f64), PlanError> {
        let f = |x: &[f64]| match which {
            Objective::Cost => (self.cost)(x),
            Objective::Emission => (self.emission)(x),
        };
        let center = box_center(&self.lower, &self.upper);
        let at_min = coordinate_descent(
            &self.lower,
            &self.upper,
            center.clone(),
            &|x: &[f64]| f(x),
            SEARCH_TOL,
        )?;
        let at_max = coordinate_descent(
            &self.lower,
            &self.upper,
            center.clone(),
            &|x: &[f64]| -f(x),
            SEARCH_TOL,
        )?;
        let mut lo = f(&at_min);
        let mut hi = f(&at_max);
        for probe in [&center, &self.lower, &self.upper] {
            let v = f(probe);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok((lo, hi))
    }

    fn scalarizer(&self) -> Result<Scalarizer<'_>, PlanError> {
        let (c_lo, c_hi) = self.objective_range(Objective::Cost)?;
        let (e_lo, e_hi) = self.objective_range(Objective::Emission)?;
        Ok(Scalarizer {
            problem: self,
            cost_lo: c_lo,
            cost_span: (c_hi - c_lo).max(f64::MIN_POSITIVE),
            emission_lo: e_lo,
            emission_span: (e_hi - e_lo).max(f64::MIN_POSITIVE),
        })
    }
}

#[derive(Clone, Copy)]
enum Objective {
    Cost,
    Emission,
}

struct Scalarizer<'a> {
    problem: &'a BiObjectiveProblem,
    cost_lo: f64,
    cost_span: f64,
    emission_lo: f64,
    emission_span: f64,
}

impl Scalarizer<'_> {
    fn solve_weight(&self, lambda: f64) -> Result<Vec<f64>, PlanError> {
        let p = self.problem;
        let objective = |x: &[f64]| {
            let c = ((p.cost)(x) - self.cost_lo) / self.cost_span;
            let e = ((p.emission)(x) - self.emission_lo) / self.emission_span;
            lambda * c + (1.0 - lambda) * e + p.penalty(x)
        };
        let start = box_center(&p.lower, &p.upper);
        Ok(coordinate_descent(
            &p.lower,
            &p.upper,
            start,
            &objective,
            SEARCH_TOL,
        )?)
    }
}

/// One efficient design: the decision vector, its raw objective values, and
/// the scalarization weight that produced it (absent for points found by
/// other means, such as subset enumeration or direct product search).
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub x: Vec<f64>,
    pub cost: f64,
    pub emission: f64,
    pub weight: Option<f64>,
}

/// Mutually nondominated points, sorted by cost ascending.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParetoFront {
    pub points: Vec<ParetoPoint>,
}

impl ParetoFront {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Dominance-filters candidates and sorts the survivors by cost. Exact
/// duplicates in objective space collapse to their first occurrence.
fn build_front(mut candidates: Vec<ParetoPoint>) -> ParetoFront {
    candidates.sort_by(|a, b| {
        let ka = (a.weight.unwrap_or(f64::INFINITY), a.cost);
        let kb = (b.weight.unwrap_or(f64::INFINITY), b.cost);
        ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut kept: Vec<ParetoPoint> = Vec::new();
    for cand in candidates {
        if kept
            .iter()
            .any(|k| {
                dominates((k.cost, k.emission), (cand.cost, cand.emission))
                    || (k.cost == cand.cost && k.emission == cand.emission)
            })
        {
            continue;
        }
        kept.retain(|k| !dominates((cand.cost, cand.emission), (k.cost, k.emission)));
        kept.push(cand);
    }
    kept.sort_by(|a, b| {
        (a.cost, a.emission)
            .partial_cmp(&(b.cost, b.emission))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    ParetoFront { points: kept }
}

/// Traces the trade-off front by minimizing `w * cost + (1 - w) * emission`
/// (both normalized) for every supplied weight. Infeasible minimizers are
/// dropped; dominated ones are filtered.
pub fn pareto_sweep(p: &BiObjectiveProblem, weights: &[f64]) -> Result<ParetoFront, PlanError> {
    p.validate()?;
    if weights.is_empty() {
        return Err(PlanError::NoWeights);
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0 || *w > 1.0) {
        return Err(PlanError::WeightOutOfRange);
    }
    let scalarizer = p.scalarizer()?;
    let mut candidates = Vec::with_capacity(weights.len());
    for &w in weights {
        let x = scalarizer.solve_weight(w)?;
        if !p.is_feasible(&x, FEASIBILITY_TOL) {
            continue;
        }
        candidates.push(ParetoPoint {
            cost: (p.cost)(&x),
            emission: (p.emission)(&x),
            x,
            weight: Some(w),
        });
    }
    Ok(build_front(candidates))
}

/// Anchor from which savings are measured: the componentwise worst value
/// over the front (its nadir).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisagreementPoint {
    pub cost: f64,
    pub emission: f64,
}

pub fn disagreement_point(front: &ParetoFront) -> Result<DisagreementPoint, PlanError> {
    if front.is_empty() {
        return Err(PlanError::EmptyFront);
    }
    Ok(DisagreementPoint {
        cost: front.points.iter().map(|p| p.cost).fold(f64::NEG_INFINITY, f64::max),
        emission: front
            .points
            .iter()
            .map(|p| p.emission)
            .fold(f64::NEG_INFINITY, f64::max),
    })
}

/// The selected compromise design.
#[derive(Debug, Clone, PartialEq)]
pub struct BargainResult {
    pub x: Vec<f64>,
    pub cost: f64,
    pub emission: f64,
    /// Product of savings `(d.cost - cost) * (d.emission - emission)`.
    pub product: f64,
    /// Scalarization weight at which the winner was found, when applicable.
    pub weight: Option<f64>,
}

fn gains_product(d: &DisagreementPoint, cost: f64, emission: f64) -> f64 {
    (d.cost - cost).max(0.0) * (d.emission - emission).max(0.0)
}

fn best_front_candidate(front: &ParetoFront, d: &DisagreementPoint) -> Option<BargainResult> {
    let mut best: Option<BargainResult> = None;
    for pt in &front.points {
        let product = gains_product(d, pt.cost, pt.emission);
        if best.as_ref().map_or(true, |b| product > b.product) {
            best = Some(BargainResult {
                x: pt.x.clone(),
                cost: pt.cost,
                emission: pt.emission,
                product,
                weight: pt.weight,
            });
        }
    }
    best
}

/// Picks the design maximizing the product of savings against `d`.
///
/// Every stored front point competes; a golden-section search over the
/// scalarization weight and a direct product-maximizing descent propose
/// additional candidates, which win only when they beat the best stored
/// point by a clear relative margin. Comparing raw products keeps the
/// selection invariant under a joint affine rescaling of an objective and
/// its anchor coordinate.
pub fn nash_bargain(
    p: &BiObjectiveProblem,
    front: &ParetoFront,
    d: &DisagreementPoint,
    tol: f64,
) -> Result<BargainResult, PlanError> {
    p.validate()?;
    if !tol.is_finite() || tol <= 0.0 {
        return Err(PlanError::Search(GameError::InvalidTolerance));
    }
    let slack_cost = 1e-9 * (1.0 + d.cost.abs());
    let slack_emission = 1e-9 * (1.0 + d.emission.abs());
    for pt in &front.points {
        if pt.cost > d.cost + slack_cost || pt.emission > d.emission + slack_emission {
            return Err(PlanError::InvalidDisagreement);
        }
    }

    let mut best = best_front_candidate(front, d);

    // the acceptance margin scales like the product itself, so the winner is
    // unchanged when objective and anchor are rescaled together
    let front_scale = {
        let min_cost = front.points.iter().map(|p| p.cost).fold(d.cost, f64::min);
        let min_emission = front
            .points
            .iter()
            .map(|p| p.emission)
            .fold(d.emission, f64::min);
        gains_product(d, min_cost, min_emission)
    };
    // a candidate found by continuous search replaces the best front point
    // only when its product clears this margin, so the selection among front
    // points stays stable under affine objective rescaling even when the
    // front is sampled densely
    let margin = |incumbent: f64| 1e-6 * (incumbent.abs() + front_scale).max(f64::MIN_POSITIVE);

    let consider = |x: Vec<f64>, weight: Option<f64>, best: &mut Option<BargainResult>| {
        if !p.is_feasible(&x, FEASIBILITY_TOL) {
            return;
        }
        let cost = (p.cost)(&x);
        let emission = (p.emission)(&x);
        if cost > d.cost + slack_cost || emission > d.emission + slack_emission {
            return;
        }
        let product = gains_product(d, cost, emission);
        let wins = match best.as_ref() {
            None => true,
            Some(b) => product > b.product + margin(b.product),
        };
        if wins {
            *best = Some(BargainResult {
                x,
                cost,
                emission,
                product,
                weight,
            });
        }
    };

    let scalarizer = p.scalarizer()?;
    let lambda_star = golden_section(
        |w| match scalarizer.solve_weight(w) {
            Ok(x) => -gains_product(d, (p.cost)(&x), (p.emission)(&x)) + p.penalty(&x),
            Err(_) => f64::INFINITY,
        },
        0.0,
        1.0,
        tol,
    )?;
    if let Ok(x) = scalarizer.solve_weight(lambda_star) {
        consider(x, Some(lambda_star), &mut best);
    }

    let direct_objective = |x: &[f64]| {
        -gains_product(d, (p.cost)(x), (p.emission)(x)) + p.penalty(x)
    };
    let mut starts = vec![box_center(&p.lower, &p.upper)];
    if let Some(b) = best.as_ref() {
        starts.push(b.x.clone());
    }
    for start in starts {
        let x = coordinate_descent(&p.lower, &p.upper, start, &direct_objective, tol)?;
        consider(x, None, &mut best);
    }

    best.ok_or(PlanError::EmptyFront)
}

/// A buildable hub component: what it can deliver at peak per carrier and
/// what it costs to install, run, and emit.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentOption {
    pub name: String,
    pub capital_cost: f64,
    pub operating_cost: f64,
    pub emission_kg: f64,
    pub capability: PortVector,
}

impl ComponentOption {
    pub fn new(
        name: &str,
        capital_cost: f64,
        operating_cost: f64,
        emission_kg: f64,
        capability: PortVector,
    ) -> Self {
        ComponentOption {
            name: name.to_string(),
            capital_cost,
            operating_cost,
            emission_kg,
            capability,
        }
    }

    fn total_cost(&self) -> f64 {
        self.capital_cost + self.operating_cost
    }
}

const MAX_CATALOG: usize = 20;

/// Peak positive demand per carrier over the scenario horizon.
fn peak_demand(scenario: &Scenario) -> PortVector {
    let mut peak = PortVector::ZERO;
    for c in Carrier::ALL {
        let name = demand_series_name(c);
        if let Some(series) = scenario.profiles.get(name) {
            let m = series.iter().copied().fold(0.0_f64, f64::max);
            peak.set(c, m);
        }
    }
    peak
}

/// Sizes a hub by exhaustive subset enumeration: every subset whose combined
/// capability covers peak demand enters the trade-off, and the compromise
/// subset is picked by the same product-of-savings rule. Returns the chosen
/// component names together with the bargain record (whose decision vector
/// is a 0/1 indicator per catalog entry).
pub fn plan_hub_portfolio(
    catalog: &[ComponentOption],
    scenario: &Scenario,
) -> Result<(Vec<String>, BargainResult), PlanError> {
    if catalog.len() > MAX_CATALOG {
        return Err(PlanError::CatalogTooLarge);
    }
    let peak = peak_demand(scenario);
    let mut candidates = Vec::new();
    for mask in 0u32..(1u32 << catalog.len()) {
        let mut capability = PortVector::ZERO;
        let mut cost = 0.0;
        let mut emission = 0.0;
        for (k, item) in catalog.iter().enumerate() {
            if mask & (1 << k) != 0 {
                capability += item.capability;
                cost += item.total_cost();
                emission += item.emission_kg;
            }
        }
        let feasible = Carrier::ALL
            .iter()
            .all(|&c| capability.get(c) + 1e-9 >= peak.get(c));
        if !feasible {
            continue;
        }
        let x: Vec<f64> = (0..catalog.len())
            .map(|k| if mask & (1 << k) != 0 { 1.0 } else { 0.0 })
            .collect();
        candidates.push(ParetoPoint {
            x,
            cost,
            emission,
            weight: None,
        });
    }
    if candidates.is_empty() {
        return Err(PlanError::InfeasibleDemand);
    }
    let front = build_front(candidates);
    let d = disagreement_point(&front)?;
    let best = best_front_candidate(&front, &d).ok_or(PlanError::EmptyFront)?;
    let selected = catalog
        .iter()
        .enumerate()
        .filter(|(k, _)| best.x[*k] > 0.5)
        .map(|(_, item)| item.name.clone())
        .collect();
    Ok((selected, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NetworkTopology, OperationMode, PerCarrier, Profiles};

    fn quadratic_problem() -> BiObjectiveProblem {
        BiObjectiveProblem::unconstrained(
            Box::new(|x: &[f64]| x[0] * x[0]),
            Box::new(|x: &[f64]| (x[0] - 1.0) * (x[0] - 1.0)),
            vec![0.0],
            vec![1.0],
        )
    }

    #[test]
    fn pareto_sweep_quadratic_endpoints_and_middle() {
        let p = quadratic_problem();
        let front = pareto_sweep(&p, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(front.len(), 3);
        let xs: Vec<f64> = front.points.iter().map(|pt| pt.x[0]).collect();
        assert!((xs[0] - 0.0).abs() <= 1e-6, "xs = {xs:?}");
        assert!((xs[1] - 0.5).abs() <= 1e-6, "xs = {xs:?}");
        assert!((xs[2] - 1.0).abs() <= 1e-6, "xs = {xs:?}");
        for w in front.points.windows(2) {
            assert!(w[0].cost <= w[1].cost);
        }
    }

    #[test]
    fn pareto_sweep_single_weight_is_single_minimizer() {
        let p = quadratic_problem();
        let front = pareto_sweep(&p, &[1.0]).unwrap();
        assert_eq!(front.len(), 1);
        assert!((front.points[0].x[0]).abs() <= 1e-6);
        assert_eq!(front.points[0].weight, Some(1.0));
    }

    #[test]
    fn pareto_sweep_rejects_empty_and_out_of_range_weights() {
        let p = quadratic_problem();
        assert_eq!(pareto_sweep(&p, &[]).unwrap_err(), PlanError::NoWeights);
        assert_eq!(
            pareto_sweep(&p, &[0.5, 1.5]).unwrap_err(),
            PlanError::WeightOutOfRange
        );
    }

    #[test]
    fn pareto_sweep_drops_infeasible_points() {
        let mut p = quadratic_problem();
        // forbid the left half of the box
        p.inequalities.push(Box::new(|x: &[f64]| 0.6 - x[0]));
        let front = pareto_sweep(&p, &[0.0, 0.5, 1.0]).unwrap();
        assert!(front.points.iter().all(|pt| pt.x[0] >= 0.6 - 1e-6));
    }

    #[test]
    fn disagreement_point_is_componentwise_max() {
        let front = ParetoFront {
            points: vec![
                ParetoPoint {
                    x: vec![0.0],
                    cost: 0.0,
                    emission: 4.0,
                    weight: None,
                },
                ParetoPoint {
                    x: vec![1.0],
                    cost: 4.0,
                    emission: 0.0,
                    weight: None,
                },
            ],
        };
        let d = disagreement_point(&front).unwrap();
        assert_eq!(d.cost, 4.0);
        assert_eq!(d.emission, 4.0);
        assert_eq!(
            disagreement_point(&ParetoFront::default()).unwrap_err(),
            PlanError::EmptyFront
        );
    }

    #[test]
    fn disagreement_point_singleton() {
        let front = ParetoFront {
            points: vec![ParetoPoint {
                x: vec![2.0],
                cost: 3.0,
                emission: 7.0,
                weight: Some(0.5),
            }],
        };
        let d = disagreement_point(&front).unwrap();
        assert_eq!((d.cost, d.emission), (3.0, 7.0));
    }

    #[test]
    fn nash_bargain_symmetric_linear_exchange() {
        let p = BiObjectiveProblem::unconstrained(
            Box::new(|x: &[f64]| x[0]),
            Box::new(|x: &[f64]| 1.0 - x[0]),
            vec![0.0],
            vec![1.0],
        );
        let front = pareto_sweep(&p, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let d = DisagreementPoint {
            cost: 1.0,
            emission: 1.0,
        };
        let r = nash_bargain(&p, &front, &d, 1e-8).unwrap();
        assert!((r.x[0] - 0.5).abs() <= 1e-6, "x = {}", r.x[0]);
        assert!((r.product - 0.25).abs() <= 1e-6);
    }

    #[test]
    fn nash_bargain_rejects_dominated_anchor() {
        let p = quadratic_problem();
        let front = pareto_sweep(&p, &[0.0, 0.5, 1.0]).unwrap();
        let d = DisagreementPoint {
            cost: 0.1,
            emission: 0.1,
        };
        assert_eq!(
            nash_bargain(&p, &front, &d, 1e-8).unwrap_err(),
            PlanError::InvalidDisagreement
        );
    }

    #[test]
    fn nash_bargain_argmax_survives_affine_rescaling() {
        let base = BiObjectiveProblem::unconstrained(
            Box::new(|x: &[f64]| (x[0] - 1.0) * (x[0] - 1.0)),
            Box::new(|x: &[f64]| (x[0] + 1.0) * (x[0] + 1.0)),
            vec![-1.0],
            vec![1.0],
        );
        let scaled = BiObjectiveProblem::unconstrained(
            Box::new(|x: &[f64]| 2.0 * (x[0] - 1.0) * (x[0] - 1.0) + 3.0),
            Box::new(|x: &[f64]| (x[0] + 1.0) * (x[0] + 1.0)),
            vec![-1.0],
            vec![1.0],
        );
        let weights: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let front_base = pareto_sweep(&base, &weights).unwrap();
        let front_scaled = pareto_sweep(&scaled, &weights).unwrap();
        let d_base = DisagreementPoint {
            cost: 4.0,
            emission: 9.0,
        };
        let d_scaled = DisagreementPoint {
            cost: 2.0 * 4.0 + 3.0,
            emission: 9.0,
        };
        let r_base = nash_bargain(&base, &front_base, &d_base, 1e-8).unwrap();
        let r_scaled = nash_bargain(&scaled, &front_scaled, &d_scaled, 1e-8).unwrap();
        // the same candidate must win in both runs; its coordinates agree to
        // solver tolerance, far inside the 0.1 spacing between front points
        assert_eq!(r_base.weight, r_scaled.weight);
        assert!(
            (r_base.x[0] - r_scaled.x[0]).abs() <= 1e-7,
            "{} vs {}",
            r_base.x[0],
            r_scaled.x[0]
        );
    }

    #[test]
    fn nash_bargain_symmetric_problem_balances_normalized_objectives() {
        let p = BiObjectiveProblem::unconstrained(
            Box::new(|x: &[f64]| (x[0] - 1.0) * (x[0] - 1.0)),
            Box::new(|x: &[f64]| (x[0] + 1.0) * (x[0] + 1.0)),
            vec![-1.0],
            vec![1.0],
        );
        let weights: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let front = pareto_sweep(&p, &weights).unwrap();
        let d = DisagreementPoint {
            cost: 4.0,
            emission: 4.0,
        };
        let r = nash_bargain(&p, &front, &d, 1e-8).unwrap();
        // both objectives span [0, 4] on the box, so normalized balance
        // means |f1 - f2| / 4 small
        assert!((r.cost - r.emission).abs() / 4.0 <= 1e-6);
    }

    #[test]
    fn nash_bargain_result_not_dominated_by_front() {
        let p = quadratic_problem();
        let weights: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let front = pareto_sweep(&p, &weights).unwrap();
        let d = disagreement_point(&front).unwrap();
        let r = nash_bargain(&p, &front, &d, 1e-8).unwrap();
        for pt in &front.points {
            assert!(!dominates((pt.cost, pt.emission), (r.cost, r.emission)));
        }
        assert!(r.product >= 0.0);
    }

    fn planning_scenario(peaks: [f64; 4]) -> Scenario {
        let mut profiles = Profiles::new(3);
        for (i, c) in Carrier::ALL.into_iter().enumerate() {
            profiles
                .insert(demand_series_name(c), vec![peaks[i] / 2.0, peaks[i], 0.0])
                .unwrap();
        }
        Scenario {
            name: "plan".into(),
            topology: NetworkTopology::new(),
            devices: Vec::new(),
            profiles,
            prices: PerCarrier::splat(Vec::new()),
            mode: OperationMode::Autonomous,
            self_use: true,
            dt_hours: 1.0,
            demand_node: None,
            utility_node: None,
            ems: None,
        }
    }

    #[test]
    fn portfolio_empty_catalog_zero_demand() {
        let scenario = planning_scenario([0.0; 4]);
        let (selected, result) = plan_hub_portfolio(&[], &scenario).unwrap();
        assert!(selected.is_empty());
        assert_eq!((result.cost, result.emission), (0.0, 0.0));
    }

    #[test]
    fn portfolio_single_component_forced() {
        let scenario = planning_scenario([10.0, 0.0, 0.0, 0.0]);
        let catalog = vec![ComponentOption::new(
            "pv",
            100.0,
            5.0,
            0.0,
            PortVector::from_array([10.0, 0.0, 0.0, 0.0]),
        )];
        let (selected, result) = plan_hub_portfolio(&catalog, &scenario).unwrap();
        assert_eq!(selected, vec!["pv".to_string()]);
        assert_eq!(result.cost, 105.0);
    }

    #[test]
    fn portfolio_infeasible_demand() {
        let scenario = planning_scenario([10.0, 0.0, 0.0, 0.0]);
        let catalog = vec![ComponentOption::new(
            "small",
            10.0,
            0.0,
            1.0,
            PortVector::from_array([5.0, 0.0, 0.0, 0.0]),
        )];
        assert_eq!(
            plan_hub_portfolio(&catalog, &scenario).unwrap_err(),
            PlanError::InfeasibleDemand
        );
    }

    #[test]
    fn portfolio_matches_exhaustive_enumeration() {
        let scenario = planning_scenario([12.0, 6.0, 0.0, 0.0]);
        let catalog = vec![
            ComponentOption::new("chp", 80.0, 10.0, 50.0, PortVector::from_array([8.0, 6.0, 0.0, 0.0])),
            ComponentOption::new("pv", 60.0, 2.0, 0.0, PortVector::from_array([6.0, 0.0, 0.0, 0.0])),
            ComponentOption::new("boiler", 30.0, 5.0, 30.0, PortVector::from_array([0.0, 7.0, 0.0, 0.0])),
            ComponentOption::new("battery", 40.0, 1.0, 5.0, PortVector::from_array([5.0, 0.0, 0.0, 0.0])),
            ComponentOption::new("diesel", 50.0, 20.0, 90.0, PortVector::from_array([12.0, 0.0, 0.0, 0.0])),
        ];
        let (selected, got) = plan_hub_portfolio(&catalog, &scenario).unwrap();

        // independent oracle: rank all feasible subsets by product of
        // savings against the nadir of the nondominated set
        let mut feasible: Vec<(u32, f64, f64)> = Vec::new();
        for mask in 0u32..32 {
            let mut cap = [0.0f64; 4];
            let mut cost = 0.0;
            let mut emission = 0.0;
            for (k, item) in catalog.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    for (slot, c) in cap.iter_mut().zip(Carrier::ALL) {
                        *slot += item.capability.get(c);
                    }
                    cost += item.capital_cost + item.operating_cost;
                    emission += item.emission_kg;
                }
            }
            if cap[0] >= 12.0 && cap[1] >= 6.0 {
                feasible.push((mask, cost, emission));
            }
        }
        let efficient: Vec<&(u32, f64, f64)> = feasible
            .iter()
            .filter(|(_, c, e)| {
                !feasible
                    .iter()
                    .any(|(_, c2, e2)| c2 <= c && e2 <= e && (c2 < c || e2 < e))
            })
            .collect();
        let dc = efficient.iter().map(|(_, c, _)| *c).fold(f64::NEG_INFINITY, f64::max);
        let de = efficient.iter().map(|(_, _, e)| *e).fold(f64::NEG_INFINITY, f64::max);
        let (oracle_mask, ..) = **efficient
            .iter()
            .max_by(|(_, c1, e1), (_, c2, e2)| {
                ((dc - c1) * (de - e1))
                    .partial_cmp(&((dc - c2) * (de - e2)))
                    .unwrap()
            })
            .unwrap();

        let got_mask: u32 = got
            .x
            .iter()
            .enumerate()
            .map(|(k, v)| if *v > 0.5 { 1u32 << k } else { 0 })
            .sum();
        assert_eq!(got_mask, oracle_mask, "selected {selected:?}");
    }
}
