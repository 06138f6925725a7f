//! Intra-network layer: joint multi-carrier dispatch.
//!
//! Storage schedules are the only free decision variables. Given a candidate
//! storage schedule, every step completes deterministically in merit order:
//! fixed injections and demand come first, then storage acts, hubs convert
//! to cover remaining shortfalls, gas generation tops up where it is cheaper
//! than importing (or where feasibility demands it), the utility connection
//! absorbs what bounds allow, surplus from curtailable sources is curtailed,
//! and leftover heat or cooling is vented. Link flows are then routed over a
//! spanning forest per carrier and checked against capacities. The storage
//! schedule itself is chosen by coordinate descent on total operating cost
//! with a stiff penalty on any unresolved imbalance, so storage stays idle
//! unless moving it strictly helps.

use super::exchange::ExchangeSchedule;
use super::EmsError;
use crate::devices::{
    chimney_output, dual_role_plant, full_spectrum_output, st_caes_charge, st_caes_discharge,
    DeviceKind, GasChpSpec, SolarKind, StCaesSpec, StCaesState,
};
use crate::game::{coordinate_descent, stackelberg_solve, BilevelProblem, StrategySet};
use crate::model::{
    balance_residual, demand_series_name, Carrier, NetworkState, NodeId, OperationMode,
    PerCarrier, PortVector, Scenario,
};
use std::collections::BTreeMap;
use std::rc::Rc;

const IMBALANCE_TOL_KW: f64 = 1e-9;
const PENALTY_WEIGHT: f64 = 1e9;
const SCHEDULE_TOL_KW: f64 = 1e-6;

/// Complete dispatch solution over a horizon.
///
/// Every collection is indexed by step. Device outputs are net injections
/// (negative when the device consumes), utility exchange is positive for
/// imports, and vented power is surplus heat or cooling released without
/// serving demand. Storage tables hold end-of-step contents.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchSetpoints {
    pub steps: usize,
    pub dt_hours: f64,
    pub device_output: Vec<BTreeMap<String, PortVector>>,
    /// Net injection per node after demand, exchange, curtailment, venting.
    pub node_injections: Vec<Vec<PortVector>>,
    pub hub_inputs: Vec<Vec<PortVector>>,
    pub link_flows: Vec<Vec<f64>>,
    pub utility_exchange: Vec<PortVector>,
    pub vented: Vec<PortVector>,
    pub served_demand: Vec<PortVector>,
    pub storage_air_kwh: Vec<BTreeMap<String, f64>>,
    pub storage_thermal_kwh: Vec<BTreeMap<String, f64>>,
    /// Worst node/carrier imbalance per step, from an independent recheck.
    pub step_residual_kw: Vec<f64>,
    pub max_residual_kw: f64,
    pub total_cost: f64,
}

struct SimulationOutcome {
    setpoints: DispatchSetpoints,
    cost: f64,
    infeasible_kw: f64,
    first_bad_step: Option<usize>,
    /// Leftover carrier totals per step after completion (positive means
    /// surplus nothing could absorb, negative unserved shortfall).
    unresolved: Vec<PortVector>,
    curtailed_elec: Vec<f64>,
}

struct DispatchContext<'a> {
    scenario: &'a Scenario,
    exchange: &'a ExchangeSchedule,
    horizon: usize,
    bounds: PerCarrier<f64>,
    caes: Vec<(usize, StCaesSpec)>,
    chp: Vec<(usize, GasChpSpec)>,
    exchange_node: Option<NodeId>,
}

impl<'a> DispatchContext<'a> {
    fn new(
        scenario: &'a Scenario,
        exchange: &'a ExchangeSchedule,
        horizon: usize,
    ) -> Result<Self, EmsError> {
        scenario.validate()?;
        if horizon > scenario.horizon() {
            return Err(EmsError::InconsistentHorizon);
        }
        if !exchange.pairs.is_empty() && exchange.horizon < horizon {
            return Err(EmsError::InconsistentHorizon);
        }
        let has_demand = Carrier::ALL.iter().any(|&c| {
            scenario
                .profiles
                .get(demand_series_name(c))
                .map(|s| s.iter().any(|v| *v != 0.0))
                .unwrap_or(false)
        });
        if has_demand && scenario.demand_node.is_none() {
            return Err(EmsError::InvalidParameter(
                "scenario has demand but no demand node".into(),
            ));
        }
        let bounds = match scenario.mode {
            OperationMode::Autonomous => PerCarrier::splat(0.0),
            OperationMode::GridConnected => scenario
                .ems
                .as_ref()
                .map(|e| e.exchange_bound_kw.clone())
                .unwrap_or_else(|| PerCarrier::splat(0.0)),
        };
        let caes = scenario
            .devices
            .iter()
            .enumerate()
            .filter_map(|(i, d)| match &d.kind {
                DeviceKind::StCaes(spec) => Some((i, spec.clone())),
                _ => None,
            })
            .collect();
        let chp = scenario
            .devices
            .iter()
            .enumerate()
            .filter_map(|(i, d)| match &d.kind {
                DeviceKind::GasChp(spec) => Some((i, spec.clone())),
                _ => None,
            })
            .collect();
        let exchange_node = scenario
            .utility_node
            .or_else(|| scenario.topology.nodes().first().map(|n| n.id));
        Ok(DispatchContext {
            scenario,
            exchange,
            horizon,
            bounds,
            caes,
            chp,
            exchange_node,
        })
    }

    fn price(&self, c: Carrier, t: usize) -> f64 {
        self.scenario
            .prices
            .get(c)
            .get(t)
            .copied()
            .unwrap_or(0.0)
    }

    fn schedule_dim(&self) -> usize {
        self.caes.len() * self.horizon
    }

    fn schedule_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lower = Vec::with_capacity(self.schedule_dim());
        let mut upper = Vec::with_capacity(self.schedule_dim());
        for (_, spec) in &self.caes {
            for _ in 0..self.horizon {
                lower.push(-spec.max_discharge_kw);
                upper.push(spec.max_charge_kw);
            }
        }
        (lower, upper)
    }
}

fn totals(r: &[PortVector]) -> PortVector {
    r.iter().fold(PortVector::ZERO, |acc, v| acc + *v)
}

/// One step's mutable accounting: `injections` is what the balance check
/// will see as node injections, `residual` additionally carries hub
/// conversion effects so completion can read live shortfalls.
struct StepBooks {
    injections: Vec<PortVector>,
    residual: Vec<PortVector>,
    hub_inputs: Vec<PortVector>,
    device_out: BTreeMap<String, PortVector>,
    utility: PortVector,
    vented: PortVector,
    /// Remaining curtailable headroom per (device index, carrier).
    curtail_pool: Vec<(usize, Carrier, f64)>,
    cost: f64,
}

impl StepBooks {
    fn inject(&mut self, node: NodeId, delta: PortVector) {
        self.injections[node.value()] += delta;
        self.residual[node.value()] += delta;
    }
}

fn solar_step_output(
    spec: &crate::devices::SolarSourceSpec,
    irradiance: f64,
) -> Result<PortVector, EmsError> {
    Ok(match spec.kind {
        SolarKind::Photovoltaic => PortVector::new().with(
            Carrier::Electricity,
            (irradiance.max(0.0) * spec.area_m2 * spec.efficiency / 1000.0).min(spec.rated_kw),
        ),
        SolarKind::Chimney => {
            PortVector::new().with(Carrier::Electricity, chimney_output(irradiance, spec))
        }
        SolarKind::FullSpectrum => {
            let (elec, heat) = full_spectrum_output(irradiance, spec)?;
            PortVector::new()
                .with(Carrier::Electricity, elec)
                .with(Carrier::Heat, heat)
        }
    })
}

fn utility_pass(ctx: &DispatchContext, books: &mut StepBooks, t: usize) {
    let Some(node) = ctx.exchange_node else {
        return;
    };
    for c in Carrier::ALL {
        let bound = *ctx.bounds.get(c);
        let headroom = bound - books.utility.get(c).abs();
        if headroom <= 0.0 {
            continue;
        }
        let total = totals(&books.residual).get(c);
        let transfer = if total < 0.0 {
            (-total).min(headroom)
        } else if total > 0.0 {
            -total.min(headroom)
        } else {
            0.0
        };
        if transfer != 0.0 {
            books.utility.set(c, books.utility.get(c) + transfer);
            books.cost += ctx.price(c, t) * transfer * ctx.scenario.dt_hours;
            let mut delta = PortVector::ZERO;
            delta.set(c, transfer);
            books.inject(node, delta);
        }
    }
}

/// Gas generation pass. The economic pass covers heat unconditionally (no
/// other completion stage can) and electricity only when gas-fired energy
/// is no costlier than importing; the rescue pass covers any shortfall the
/// utility connection could not, regardless of price.
fn chp_pass(
    ctx: &DispatchContext,
    books: &mut StepBooks,
    t: usize,
    rescue: bool,
    pinned: Option<&[f64]>,
) {
    if pinned.is_some() && rescue {
        return;
    }
    for (ci, (di, spec)) in ctx.chp.iter().enumerate() {
        let device = &ctx.scenario.devices[*di];
        let already = books
            .device_out
            .get(&device.id)
            .map(|o| -o.get(Carrier::Gas))
            .unwrap_or(0.0);
        let headroom = spec.max_gas_kw - already;
        if headroom <= 0.0 {
            continue;
        }
        let gas = if let Some(pin) = pinned {
            pin[ci * ctx.horizon + t].clamp(0.0, headroom)
        } else {
            let total = totals(&books.residual);
            let elec_short = (-total.get(Carrier::Electricity)).max(0.0);
            let heat_short = (-total.get(Carrier::Heat)).max(0.0);
            let mut gas = if spec.heat_efficiency > 0.0 {
                heat_short / spec.heat_efficiency
            } else {
                0.0
            };
            let covers_elec = rescue
                || ctx.price(Carrier::Gas, t) / spec.elec_efficiency
                    <= ctx.price(Carrier::Electricity, t) + 1e-12;
            if covers_elec {
                gas = gas.max(elec_short / spec.elec_efficiency);
            }
            gas.min(headroom)
        };
        if gas <= 0.0 {
            continue;
        }
        let out = PortVector::new()
            .with(Carrier::Gas, -gas)
            .with(Carrier::Electricity, spec.elec_efficiency * gas)
            .with(Carrier::Heat, spec.heat_efficiency * gas);
        books.inject(device.node, out);
        *books
            .device_out
            .entry(device.id.clone())
            .or_insert(PortVector::ZERO) += out;
    }
}

/// Routes per-carrier node imbalances over a spanning forest of the links
/// serving that carrier. Returns the unresolved imbalance in kW.
fn route_links(ctx: &DispatchContext, books: &StepBooks, flows: &mut [f64]) -> f64 {
    let topology = &ctx.scenario.topology;
    let n = topology.node_count();
    let mut unresolved = 0.0;
    for c in Carrier::ALL {
        let mut imbalance: Vec<f64> = books.residual.iter().map(|r| r.get(c)).collect();
        if imbalance.iter().all(|v| v.abs() <= IMBALANCE_TOL_KW) {
            continue;
        }
        // adjacency over usable links of this carrier
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (li, link) in topology.links.iter().enumerate() {
            if link.carrier == c && link.capacity_kw > 0.0 {
                adjacency[link.from.value()].push((link.to.value(), li));
                adjacency[link.to.value()].push((link.from.value(), li));
            }
        }
        let mut visited = vec![false; n];
        for root in 0..n {
            if visited[root] {
                continue;
            }
            // breadth-first tree rooted here
            visited[root] = true;
            let mut order = vec![root];
            let mut parent_edge: Vec<Option<(usize, usize)>> = vec![None; n];
            let mut head = 0;
            while head < order.len() {
                let node = order[head];
                head += 1;
                for &(next, li) in &adjacency[node] {
                    if !visited[next] {
                        visited[next] = true;
                        parent_edge[next] = Some((node, li));
                        order.push(next);
                    }
                }
            }
            let component_sum: f64 = order.iter().map(|&k| imbalance[k]).sum();
            if component_sum.abs() > IMBALANCE_TOL_KW {
                unresolved += component_sum.abs();
            }
            // push surpluses rootward, leaves first
            for &node in order.iter().rev() {
                let Some((parent, li)) = parent_edge[node] else {
                    continue;
                };
                let carry = imbalance[node];
                imbalance[node] = 0.0;
                imbalance[parent] += carry;
                let link = &topology.links[li];
                let signed = if link.from.value() == node { carry } else { -carry };
                flows[li] += signed;
                let excess = flows[li].abs() - link.capacity_kw;
                if excess > IMBALANCE_TOL_KW {
                    unresolved += excess;
                }
            }
        }
    }
    unresolved
}

fn simulate_schedule(
    ctx: &DispatchContext,
    u: &[f64],
    pinned_chp: Option<&[f64]>,
) -> Result<SimulationOutcome, EmsError> {
    let scenario = ctx.scenario;
    let topology = &scenario.topology;
    let n_nodes = topology.node_count();
    let dt = scenario.dt_hours;
    let mut states: Vec<StCaesState> = ctx.caes.iter().map(|(_, s)| s.state).collect();

    let mut setpoints = DispatchSetpoints {
        steps: ctx.horizon,
        dt_hours: dt,
        device_output: Vec::with_capacity(ctx.horizon),
        node_injections: Vec::with_capacity(ctx.horizon),
        hub_inputs: Vec::with_capacity(ctx.horizon),
        link_flows: Vec::with_capacity(ctx.horizon),
        utility_exchange: Vec::with_capacity(ctx.horizon),
        vented: Vec::with_capacity(ctx.horizon),
        served_demand: Vec::with_capacity(ctx.horizon),
        storage_air_kwh: Vec::with_capacity(ctx.horizon),
        storage_thermal_kwh: Vec::with_capacity(ctx.horizon),
        step_residual_kw: Vec::with_capacity(ctx.horizon),
        max_residual_kw: 0.0,
        total_cost: 0.0,
    };
    let mut total_cost = 0.0;
    let mut infeasible_kw = 0.0;
    let mut first_bad_step = None;
    let mut unresolved = Vec::with_capacity(ctx.horizon);
    let mut curtailed_elec = Vec::with_capacity(ctx.horizon);

    for t in 0..ctx.horizon {
        let mut books = StepBooks {
            injections: vec![PortVector::ZERO; n_nodes],
            residual: vec![PortVector::ZERO; n_nodes],
            hub_inputs: vec![PortVector::ZERO; topology.hubs.len()],
            device_out: BTreeMap::new(),
            utility: PortVector::ZERO,
            vented: PortVector::ZERO,
            curtail_pool: Vec::new(),
            cost: 0.0,
        };

        // fixed injections
        for (di, device) in scenario.devices.iter().enumerate() {
            let out = match &device.kind {
                DeviceKind::Solar(spec) => {
                    let out = solar_step_output(spec, scenario.profiles.irradiance(t))?;
                    books
                        .curtail_pool
                        .push((di, Carrier::Electricity, out.get(Carrier::Electricity)));
                    out
                }
                DeviceKind::Plant(spec) => dual_role_plant(spec),
                DeviceKind::NetProfile(spec) => {
                    let mut out = PortVector::ZERO;
                    for (c, series) in spec.series.iter() {
                        if let Some(name) = series {
                            let v = scenario.profiles.get(name).and_then(|s| s.get(t));
                            out.set(c, v.copied().unwrap_or(0.0) * spec.scale);
                        }
                    }
                    if spec.curtailable {
                        for c in [Carrier::Electricity, Carrier::Gas] {
                            if out.get(c) > 0.0 {
                                books.curtail_pool.push((di, c, out.get(c)));
                            }
                        }
                    }
                    out
                }
                DeviceKind::GasChp(_) | DeviceKind::StCaes(_) => PortVector::ZERO,
            };
            books.inject(device.node, out);
            books.device_out.insert(device.id.clone(), out);
        }

        // demand as negative injection
        let mut demand = PortVector::ZERO;
        for c in Carrier::ALL {
            demand.set(c, scenario.profiles.demand(c, t));
        }
        if let Some(node) = scenario.demand_node {
            books.inject(node, -demand);
        }

        // pinned exchange with other internets
        if let Some(node) = ctx.exchange_node {
            for pair in 0..ctx.exchange.pairs.len() {
                let mut delta = PortVector::ZERO;
                for c in Carrier::ALL {
                    delta.set(c, ctx.exchange.flow(pair, c, t));
                }
                books.inject(node, delta);
            }
        }

        // storage acts on its commanded schedule
        for (k, (di, spec)) in ctx.caes.iter().enumerate() {
            let device = &scenario.devices[*di];
            let command = u[k * ctx.horizon + t].clamp(-spec.max_discharge_kw, spec.max_charge_kw);
            let solar_heat = spec
                .solar_heat_series
                .as_ref()
                .and_then(|name| scenario.profiles.get(name))
                .and_then(|s| s.get(t))
                .copied()
                .unwrap_or(0.0)
                .max(0.0);
            let out = if command >= 0.0 {
                let (next, accepted_elec, _) =
                    st_caes_charge(&states[k], command, solar_heat, dt)?;
                states[k] = next;
                PortVector::new().with(Carrier::Electricity, -accepted_elec)
            } else {
                let total = totals(&books.residual);
                let heat_req = (-total.get(Carrier::Heat)).max(0.0);
                let cool_req = (-total.get(Carrier::Cooling)).max(0.0);
                // cap the electric draw at what demand plus export can take,
                // so discharging never strands surplus on the network
                let elec_room = (-total.get(Carrier::Electricity)).max(0.0)
                    + *ctx.bounds.get(Carrier::Electricity);
                let (next, delivered) =
                    st_caes_discharge(&states[k], (-command).min(elec_room), heat_req, cool_req, dt)?;
                states[k] = next;
                delivered
            };
            books.inject(device.node, out);
            *books
                .device_out
                .entry(device.id.clone())
                .or_insert(PortVector::ZERO) += out;
        }

        // hubs convert electricity or gas into whatever is short
        for (hi, hub) in topology.hubs.iter().enumerate() {
            for input_carrier in [Carrier::Gas, Carrier::Electricity] {
                let total = totals(&books.residual);
                let mut need = 0.0_f64;
                for output_carrier in Carrier::ALL {
                    let gain = hub.coupling.get(output_carrier, input_carrier);
                    if gain > 0.0 {
                        let short = (-total.get(output_carrier)).max(0.0);
                        need = need.max(short / gain);
                    }
                }
                if need <= 0.0 {
                    continue;
                }
                let drawn = books.hub_inputs[hi].get(input_carrier) + need;
                books.hub_inputs[hi].set(input_carrier, drawn);
                let mut delta = PortVector::new().with(input_carrier, -need);
                for output_carrier in Carrier::ALL {
                    let gain = hub.coupling.get(output_carrier, input_carrier);
                    delta.set(output_carrier, delta.get(output_carrier) + gain * need);
                }
                // hub conversion shows up in the balance through hub_inputs,
                // so only the live residual moves here
                books.residual[hub.node.value()] += delta;
            }
        }

        chp_pass(ctx, &mut books, t, false, pinned_chp);
        utility_pass(ctx, &mut books, t);
        chp_pass(ctx, &mut books, t, true, pinned_chp);
        utility_pass(ctx, &mut books, t);

        // curtail surplus from willing sources
        let mut step_curtailed_elec = 0.0;
        for c in [Carrier::Electricity, Carrier::Gas] {
            let mut surplus = totals(&books.residual).get(c);
            if surplus <= IMBALANCE_TOL_KW {
                continue;
            }
            for (di, pool_carrier, headroom) in books.curtail_pool.iter_mut() {
                if *pool_carrier != c || surplus <= 0.0 {
                    continue;
                }
                let cut = headroom.min(surplus);
                if cut <= 0.0 {
                    continue;
                }
                *headroom -= cut;
                surplus -= cut;
                if c == Carrier::Electricity {
                    step_curtailed_elec += cut;
                }
                let device = &scenario.devices[*di];
                let mut delta = PortVector::ZERO;
                delta.set(c, -cut);
                books.injections[device.node.value()] += delta;
                books.residual[device.node.value()] += delta;
                *books
                    .device_out
                    .get_mut(&device.id)
                    .expect("curtailable device was dispatched") += delta;
            }
        }

        // vent leftover heat and cooling where it sits
        for c in [Carrier::Heat, Carrier::Cooling] {
            let mut surplus = totals(&books.residual).get(c);
            if surplus <= IMBALANCE_TOL_KW {
                continue;
            }
            for node in 0..n_nodes {
                if surplus <= 0.0 {
                    break;
                }
                let local = books.residual[node].get(c);
                if local <= 0.0 {
                    continue;
                }
                let cut = local.min(surplus);
                let mut delta = PortVector::ZERO;
                delta.set(c, -cut);
                books.injections[node] += delta;
                books.residual[node] += delta;
                books.vented.set(c, books.vented.get(c) + cut);
                surplus -= cut;
            }
        }

        // whatever totals remain cannot be served or absorbed
        let step_unresolved = totals(&books.residual);
        let leftover: f64 = Carrier::ALL
            .iter()
            .map(|&c| step_unresolved.get(c).abs())
            .sum();
        let mut step_infeasible = if leftover > IMBALANCE_TOL_KW {
            leftover
        } else {
            0.0
        };

        let mut flows = vec![0.0; topology.links.len()];
        step_infeasible += route_links(ctx, &books, &mut flows);
        if step_infeasible > 0.0 {
            infeasible_kw += step_infeasible;
            if first_bad_step.is_none() && step_infeasible > SCHEDULE_TOL_KW {
                first_bad_step = Some(t);
            }
        }

        total_cost += books.cost;
        unresolved.push(step_unresolved);
        curtailed_elec.push(step_curtailed_elec);
        setpoints.device_output.push(books.device_out);
        setpoints.node_injections.push(books.injections);
        setpoints.hub_inputs.push(books.hub_inputs);
        setpoints.link_flows.push(flows);
        setpoints.utility_exchange.push(books.utility);
        setpoints.vented.push(books.vented);
        setpoints.served_demand.push(demand);
        let mut air = BTreeMap::new();
        let mut thermal = BTreeMap::new();
        for (k, (di, _)) in ctx.caes.iter().enumerate() {
            let id = scenario.devices[*di].id.clone();
            air.insert(id.clone(), states[k].air_store_kwh);
            thermal.insert(id, states[k].thermal_store_kwh);
        }
        setpoints.storage_air_kwh.push(air);
        setpoints.storage_thermal_kwh.push(thermal);
        setpoints.step_residual_kw.push(0.0);
    }

    setpoints.total_cost = total_cost;
    Ok(SimulationOutcome {
        setpoints,
        cost: total_cost,
        infeasible_kw,
        first_bad_step,
        unresolved,
        curtailed_elec,
    })
}

/// Storage schedule seeded from an idle-storage run: request discharge where
/// shortfalls remained, charge where surplus was curtailed. Magnitudes are
/// refined by the descent afterwards; a nonzero discharge request also lets
/// earlier charge moves show their value through the penalty term.
fn shortfall_seed(ctx: &DispatchContext, base: &SimulationOutcome) -> Vec<f64> {
    let mut u = vec![0.0; ctx.schedule_dim()];
    for (k, (_, spec)) in ctx.caes.iter().enumerate() {
        for t in 0..ctx.horizon {
            let left = base.unresolved[t];
            let elec_short = (-left.get(Carrier::Electricity)).max(0.0);
            let thermal_short = (-left.get(Carrier::Heat)).max(0.0)
                + (-left.get(Carrier::Cooling)).max(0.0);
            let command = if elec_short > 0.0 {
                -elec_short
            } else if thermal_short > 0.0 {
                // any negative command unlocks thermal delivery
                -1e-3
            } else {
                base.curtailed_elec[t]
            };
            u[k * ctx.horizon + t] =
                command.clamp(-spec.max_discharge_kw, spec.max_charge_kw);
        }
    }
    u
}

/// Storage schedule seeded from the electricity tariff: charge through the
/// cheap quartile, discharge through the expensive one.
fn arbitrage_seed(ctx: &DispatchContext) -> Option<Vec<f64>> {
    let prices: Vec<f64> = (0..ctx.horizon)
        .map(|t| ctx.price(Carrier::Electricity, t))
        .collect();
    let lo = prices.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = prices.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return None;
    }
    let cheap = lo + 0.25 * (hi - lo);
    let dear = lo + 0.75 * (hi - lo);
    let mut u = vec![0.0; ctx.schedule_dim()];
    for (k, (_, spec)) in ctx.caes.iter().enumerate() {
        for (t, &p) in prices.iter().enumerate() {
            u[k * ctx.horizon + t] = if p <= cheap {
                spec.max_charge_kw
            } else if p >= dear {
                -spec.max_discharge_kw
            } else {
                0.0
            };
        }
    }
    Some(u)
}

/// Rebuilds each step as a network state and verifies carrier balance at
/// every node through the model-level residual check.
fn audit_residuals(
    scenario: &Scenario,
    setpoints: &mut DispatchSetpoints,
) -> Result<(), EmsError> {
    let topology = &scenario.topology;
    let mut worst = 0.0_f64;
    for t in 0..setpoints.steps {
        let mut state = NetworkState::zero(topology);
        state.hub_inputs = setpoints.hub_inputs[t].clone();
        state.link_flows = setpoints.link_flows[t].clone();
        for (node, injection) in topology.nodes().iter().zip(&setpoints.node_injections[t]) {
            state.add_injection(node.id, *injection);
        }
        let residual = balance_residual(topology, &state)?;
        let step_worst = residual
            .values()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()));
        setpoints.step_residual_kw[t] = step_worst;
        worst = worst.max(step_worst);
    }
    setpoints.max_residual_kw = worst;
    Ok(())
}

/// Cooperative dispatch: one joint cost minimization across all devices.
///
/// Pinned exchange flows (from the utility-connection layer) enter as fixed
/// injections; the utility slack itself stays within the scenario's bounds
/// and is free only in grid-connected mode. Returns an error naming the
/// first step at which demand cannot be served within device capabilities
/// and bounds.
pub fn iopf_cooperative(
    scenario: &Scenario,
    exchange: &ExchangeSchedule,
    horizon: usize,
) -> Result<DispatchSetpoints, EmsError> {
    let ctx = DispatchContext::new(scenario, exchange, horizon)?;

    let schedule = if ctx.schedule_dim() == 0 {
        Vec::new()
    } else {
        let (lower, upper) = ctx.schedule_bounds();
        let objective = |u: &[f64]| match simulate_schedule(&ctx, u, None) {
            Ok(outcome) => {
                outcome.cost + PENALTY_WEIGHT * outcome.infeasible_kw * outcome.infeasible_kw
            }
            Err(_) => f64::INFINITY,
        };
        let zeros = vec![0.0; ctx.schedule_dim()];
        let mut starts = vec![zeros.clone()];
        if let Ok(base) = simulate_schedule(&ctx, &zeros, None) {
            let seed = shortfall_seed(&ctx, &base);
            if seed != zeros {
                starts.push(seed);
            }
        }
        if let Some(seed) = arbitrage_seed(&ctx) {
            if seed != zeros {
                starts.push(seed);
            }
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for start in starts {
            let candidate = coordinate_descent(&lower, &upper, start, &objective, SCHEDULE_TOL_KW)?;
            let score = objective(&candidate);
            if best.as_ref().map_or(true, |(s, _)| score < *s) {
                best = Some((score, candidate));
            }
        }
        best.expect("descent ran from at least one start").1
    };

    let outcome = simulate_schedule(&ctx, &schedule, None)?;
    if outcome.infeasible_kw > SCHEDULE_TOL_KW {
        return Err(EmsError::InfeasibleDispatch(
            outcome.first_bad_step.unwrap_or(0),
        ));
    }
    let mut setpoints = outcome.setpoints;
    audit_residuals(scenario, &mut setpoints)?;
    Ok(setpoints)
}

/// One side of a leader-follower dispatch: a setpoint space and an operating
/// cost over (own setpoints, counterpart setpoints).
pub struct InfrastructureAgent {
    pub name: String,
    pub strategy: StrategySet,
    pub cost: Box<dyn Fn(&[f64], &[f64]) -> f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackelbergDispatch {
    pub leader_setpoints: Vec<f64>,
    pub follower_setpoints: Vec<f64>,
    pub leader_cost: f64,
    pub follower_cost: f64,
}

/// Leader-follower dispatch across two coupled infrastructures: the leader
/// commits its setpoints first, anticipating the follower's best response.
pub fn iopf_stackelberg(
    leader: InfrastructureAgent,
    follower: InfrastructureAgent,
    tol: f64,
) -> Result<StackelbergDispatch, EmsError> {
    let follower_cost_fn = follower.cost;
    let problem = BilevelProblem {
        leader_set: leader.strategy,
        follower_set: follower.strategy,
        leader_cost: leader.cost,
        follower_cost: Box::new(move |x: &[f64], y: &[f64]| follower_cost_fn(y, x)),
    };
    let result = stackelberg_solve(&problem, tol)?;
    let follower_cost = (problem.follower_cost)(&result.leader, &result.follower);
    Ok(StackelbergDispatch {
        leader_setpoints: result.leader,
        follower_setpoints: result.follower,
        leader_cost: result.leader_cost,
        follower_cost,
    })
}

/// Shared system objective used by both sides of the scenario-level
/// leader-follower split. Rebuilds the dispatch context per evaluation so the
/// closures can own it.
struct ScheduleEvaluator {
    scenario: Scenario,
    exchange: ExchangeSchedule,
    horizon: usize,
}

impl ScheduleEvaluator {
    fn objective(&self, storage: &[f64], generation: &[f64]) -> f64 {
        let Ok(ctx) = DispatchContext::new(&self.scenario, &self.exchange, self.horizon) else {
            return f64::INFINITY;
        };
        match simulate_schedule(&ctx, storage, Some(generation)) {
            Ok(o) => o.cost + PENALTY_WEIGHT * o.infeasible_kw * o.infeasible_kw,
            Err(_) => f64::INFINITY,
        }
    }
}

/// Splits a scenario's dispatch into a leader-follower game: the storage
/// fleet commits its charge and discharge schedule first, and gas generation
/// reacts with a firing schedule. Both sides minimise the same system cost,
/// so the solution is a sequential-play counterpart of the cooperative
/// dispatch. Requires at least one storage device and one gas generator.
pub fn scenario_stackelberg(
    scenario: &Scenario,
    exchange: &ExchangeSchedule,
    horizon: usize,
    tol: f64,
) -> Result<(StackelbergDispatch, DispatchSetpoints), EmsError> {
    let ctx = DispatchContext::new(scenario, exchange, horizon)?;
    if ctx.caes.is_empty() || ctx.chp.is_empty() {
        return Err(EmsError::InvalidParameter(
            "leader-follower dispatch needs a storage device and a gas generator".into(),
        ));
    }
    let (lower, upper) = ctx.schedule_bounds();
    let mut gen_lower = Vec::with_capacity(ctx.chp.len() * horizon);
    let mut gen_upper = Vec::with_capacity(ctx.chp.len() * horizon);
    for (_, spec) in &ctx.chp {
        for _ in 0..horizon {
            gen_lower.push(0.0);
            gen_upper.push(spec.max_gas_kw);
        }
    }

    let evaluator = Rc::new(ScheduleEvaluator {
        scenario: scenario.clone(),
        exchange: exchange.clone(),
        horizon,
    });
    let for_leader = Rc::clone(&evaluator);
    let leader = InfrastructureAgent {
        name: "storage".into(),
        strategy: StrategySet::Box { lower, upper },
        cost: Box::new(move |own, other| for_leader.objective(own, other)),
    };
    let for_follower = evaluator;
    let follower = InfrastructureAgent {
        name: "gas-generation".into(),
        strategy: StrategySet::Box {
            lower: gen_lower,
            upper: gen_upper,
        },
        cost: Box::new(move |own, other| for_follower.objective(other, own)),
    };
    let result = iopf_stackelberg(leader, follower, tol)?;

    let outcome = simulate_schedule(&ctx, &result.leader_setpoints, Some(&result.follower_setpoints))?;
    if outcome.infeasible_kw > SCHEDULE_TOL_KW {
        return Err(EmsError::InfeasibleDispatch(
            outcome.first_bad_step.unwrap_or(0),
        ));
    }
    let mut setpoints = outcome.setpoints;
    audit_residuals(scenario, &mut setpoints)?;
    Ok((result, setpoints))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::{DeviceSpec, DualRolePlantSpec, GasChpSpec, SolarSourceSpec};
    use crate::model::{
        CarrierSet, CouplingMatrix, EmsConfig, NetworkTopology, Profiles, IRRADIANCE_SERIES,
    };

    fn empty_exchange(horizon: usize) -> ExchangeSchedule {
        ExchangeSchedule::empty(horizon)
    }

    fn base_scenario(horizon: usize) -> Scenario {
        let mut topology = NetworkTopology::new();
        let node = topology.add_node("site", CarrierSet::all()).unwrap();
        Scenario {
            name: "test".into(),
            topology,
            devices: Vec::new(),
            profiles: Profiles::new(horizon),
            prices: PerCarrier::splat(vec![0.0; horizon]),
            mode: OperationMode::Autonomous,
            self_use: true,
            dt_hours: 1.0,
            demand_node: Some(node),
            utility_node: Some(node),
            ems: None,
        }
    }

    fn caes_spec(air0: f64, cap: f64) -> StCaesSpec {
        StCaesSpec {
            state: StCaesState::new(air0, cap, 0.0, cap, 0.9, 0.05, 0.0, 0.8, 0.0, 0.1).unwrap(),
            max_charge_kw: 50.0,
            max_discharge_kw: 50.0,
            solar_heat_series: None,
        }
    }

    #[test]
    fn idle_system_dispatches_nothing() {
        let scenario = base_scenario(4);
        let result = iopf_cooperative(&scenario, &empty_exchange(4), 4).unwrap();
        assert_eq!(result.total_cost, 0.0);
        assert_eq!(result.max_residual_kw, 0.0);
        assert!(result.utility_exchange.iter().all(|v| *v == PortVector::ZERO));
    }

    #[test]
    fn pv_covers_flat_load_and_storage_stays_idle() {
        let mut scenario = base_scenario(3);
        let node = scenario.topology.node_by_name("site").unwrap();
        scenario
            .profiles
            .insert(IRRADIANCE_SERIES, vec![1000.0; 3])
            .unwrap();
        // 10 m2 at 100% would be 10 kW; use efficiency for exactly 5 kW
        scenario.devices.push(DeviceSpec {
            id: "pv1".into(),
            node,
            kind: DeviceKind::Solar(SolarSourceSpec::new(
                SolarKind::Photovoltaic,
                20.0,
                0.5,
                10.0,
            )),
        });
        scenario.devices.push(DeviceSpec {
            id: "store1".into(),
            node,
            kind: DeviceKind::StCaes(caes_spec(40.0, 100.0)),
        });
        scenario
            .profiles
            .insert(demand_series_name(Carrier::Electricity), vec![5.0; 3])
            .unwrap();
        let result = iopf_cooperative(&scenario, &empty_exchange(3), 3).unwrap();
        assert!(result.max_residual_kw <= 1e-9);
        for t in 0..3 {
            let pv = result.device_output[t]["pv1"].get(Carrier::Electricity);
            assert!((pv - 5.0).abs() <= 1e-9, "pv at {t} was {pv}");
            let store = result.device_output[t]["store1"];
            assert!(store.abs_max() <= 1e-9, "storage moved at {t}: {store:?}");
            assert!((result.storage_air_kwh[t]["store1"] - 40.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn surplus_solar_is_curtailed_when_islanded() {
        let mut scenario = base_scenario(2);
        let node = scenario.topology.node_by_name("site").unwrap();
        scenario
            .profiles
            .insert(IRRADIANCE_SERIES, vec![1000.0; 2])
            .unwrap();
        scenario.devices.push(DeviceSpec {
            id: "pv1".into(),
            node,
            kind: DeviceKind::Solar(SolarSourceSpec::new(
                SolarKind::Photovoltaic,
                20.0,
                0.5,
                10.0,
            )),
        });
        scenario
            .profiles
            .insert(demand_series_name(Carrier::Electricity), vec![2.0; 2])
            .unwrap();
        let result = iopf_cooperative(&scenario, &empty_exchange(2), 2).unwrap();
        assert!(result.max_residual_kw <= 1e-9);
        for t in 0..2 {
            let pv = result.device_output[t]["pv1"].get(Carrier::Electricity);
            assert!((pv - 2.0).abs() <= 1e-9, "curtailed output was {pv}");
        }
    }

    #[test]
    fn chp_covers_heat_and_byproduct_electricity_is_used() {
        let mut scenario = base_scenario(2);
        let node = scenario.topology.node_by_name("site").unwrap();
        scenario.mode = OperationMode::GridConnected;
        scenario.ems = Some(EmsConfig {
            exchange_bound_kw: PerCarrier::splat(100.0),
            ..EmsConfig::locked_step(1.0)
        });
        scenario.devices.push(DeviceSpec {
            id: "chp1".into(),
            node,
            kind: DeviceKind::GasChp(GasChpSpec {
                elec_efficiency: 0.4,
                heat_efficiency: 0.5,
                max_gas_kw: 100.0,
            }),
        });
        scenario
            .profiles
            .insert(demand_series_name(Carrier::Heat), vec![10.0; 2])
            .unwrap();
        scenario
            .profiles
            .insert(demand_series_name(Carrier::Electricity), vec![3.0; 2])
            .unwrap();
        // gas cheap enough that gas-fired electricity beats importing
        *scenario.prices.get_mut(Carrier::Gas) = vec![0.2; 2];
        *scenario.prices.get_mut(Carrier::Electricity) = vec![1.0; 2];
        let result = iopf_cooperative(&scenario, &empty_exchange(2), 2).unwrap();
        assert!(result.max_residual_kw <= 1e-9);
        // heat-driven size: 10 / 0.5 = 20 kW gas, 8 kW electric byproduct
        let chp = result.device_output[0]["chp1"];
        assert!((chp.get(Carrier::Gas) + 20.0).abs() <= 1e-9);
        assert!((chp.get(Carrier::Heat) - 10.0).abs() <= 1e-9);
        assert!((chp.get(Carrier::Electricity) - 8.0).abs() <= 1e-9);
        // 5 kW of byproduct beyond demand is exported, 20 kW gas imported
        let exchange = result.utility_exchange[0];
        assert!((exchange.get(Carrier::Electricity) + 5.0).abs() <= 1e-9);
        assert!((exchange.get(Carrier::Gas) - 20.0).abs() <= 1e-9);
        // cost: 20 kWh gas at 0.2 minus 5 kWh electricity at 1.0, per step
        assert!((result.total_cost - 2.0 * (4.0 - 5.0)).abs() <= 1e-9);
    }

    #[test]
    fn expensive_gas_defers_electricity_to_imports() {
        let mut scenario = base_scenario(1);
        let node = scenario.topology.node_by_name("site").unwrap();
        scenario.mode = OperationMode::GridConnected;
        scenario.ems = Some(EmsConfig {
            exchange_bound_kw: PerCarrier::splat(100.0),
            ..EmsConfig::locked_step(1.0)
        });
        scenario.devices.push(DeviceSpec {
            id: "chp1".into(),
            node,
            kind: DeviceKind::GasChp(GasChpSpec {
                elec_efficiency: 0.4,
                heat_efficiency: 0.5,
                max_gas_kw: 100.0,
            }),
        });
        scenario
            .profiles
            .insert(demand_series_name(Carrier::Electricity), vec![8.0])
            .unwrap();
        // gas-fired electricity would cost 2.5 per kWh against 1.0 imported
        *scenario.prices.get_mut(Carrier::Gas) = vec![1.0];
        *scenario.prices.get_mut(Carrier::Electricity) = vec![1.0];
        let result = iopf_cooperative(&scenario, &empty_exchange(1), 1).unwrap();
        assert!(result.max_residual_kw <= 1e-9);
        assert_eq!(result.device_output[0]["chp1"], PortVector::ZERO);
        assert!((result.utility_exchange[0].get(Carrier::Electricity) - 8.0).abs() <= 1e-9);
        assert!((result.total_cost - 8.0).abs() <= 1e-9);
    }

    #[test]
    fn hub_converts_gas_to_heat_and_chp_stays_out() {
        let mut scenario = base_scenario(1);
        let node = scenario.topology.node_by_name("site").unwrap();
        scenario.mode = OperationMode::GridConnected;
        scenario.ems = Some(EmsConfig {
            exchange_bound_kw: PerCarrier::splat(100.0),
            ..EmsConfig::locked_step(1.0)
        });
        let boiler = CouplingMatrix::from_entries(&[(Carrier::Heat, Carrier::Gas, 0.9)]).unwrap();
        scenario.topology.add_hub("boiler1", node, boiler).unwrap();
        scenario
            .profiles
            .insert(demand_series_name(Carrier::Heat), vec![9.0])
            .unwrap();
        *scenario.prices.get_mut(Carrier::Gas) = vec![0.5];
        let result = iopf_cooperative(&scenario, &empty_exchange(1), 1).unwrap();
        assert!(result.max_residual_kw <= 1e-9);
        assert!((result.hub_inputs[0][0].get(Carrier::Gas) - 10.0).abs() <= 1e-9);
        assert!((result.utility_exchange[0].get(Carrier::Gas) - 10.0).abs() <= 1e-9);
        assert!((result.total_cost - 5.0).abs() <= 1e-9);
    }

    #[test]
    fn unservable_demand_names_the_step() {
        let mut scenario = base_scenario(3);
        scenario
            .profiles
            .insert(demand_series_name(Carrier::Electricity), vec![0.0, 5.0, 5.0])
            .unwrap();
        let err = iopf_cooperative(&scenario, &empty_exchange(3), 3).unwrap_err();
        assert_eq!(err, EmsError::InfeasibleDispatch(1));
        assert_eq!(err.to_string(), "infeasible dispatch at step 1");
    }

    #[test]
    fn storage_bridges_an_islanded_night() {
        let mut scenario = base_scenario(2);
        let node = scenario.topology.node_by_name("site").unwrap();
        scenario
            .profiles
            .insert(IRRADIANCE_SERIES, vec![1000.0, 0.0])
            .unwrap();
        scenario.devices.push(DeviceSpec {
            id: "pv1".into(),
            node,
            kind: DeviceKind::Solar(SolarSourceSpec::new(
                SolarKind::Photovoltaic,
                30.0,
                0.5,
                40.0,
            )),
        });
        scenario.devices.push(DeviceSpec {
            id: "store1".into(),
            node,
            kind: DeviceKind::StCaes(caes_spec(0.0, 100.0)),
        });
        scenario
            .profiles
            .insert(demand_series_name(Carrier::Electricity), vec![5.0, 5.0])
            .unwrap();
        let result = iopf_cooperative(&scenario, &empty_exchange(2), 2).unwrap();
        assert!(result.max_residual_kw <= 1e-9);
        let charge = result.device_output[0]["store1"].get(Carrier::Electricity);
        let discharge = result.device_output[1]["store1"].get(Carrier::Electricity);
        assert!(charge < -1e-6, "expected daytime charging, got {charge}");
        assert!((discharge - 5.0).abs() <= 1e-6, "night delivery was {discharge}");
    }

    #[test]
    fn link_routes_remote_generation_to_demand() {
        let mut scenario = base_scenario(1);
        let site = scenario.topology.node_by_name("site").unwrap();
        let plant_node = scenario
            .topology
            .add_node("plant", CarrierSet::all())
            .unwrap();
        scenario
            .topology
            .add_link("tie", plant_node, site, Carrier::Electricity, 50.0)
            .unwrap();
        scenario.devices.push(DeviceSpec {
            id: "plant1".into(),
            node: plant_node,
            kind: DeviceKind::Plant(DualRolePlantSpec::generator(7.0, 0.0)),
        });
        scenario
            .profiles
            .insert(demand_series_name(Carrier::Electricity), vec![7.0])
            .unwrap();
        let result = iopf_cooperative(&scenario, &empty_exchange(1), 1).unwrap();
        assert!(result.max_residual_kw <= 1e-9);
        assert!((result.link_flows[0][0] - 7.0).abs() <= 1e-9);
    }

    #[test]
    fn saturated_link_is_infeasible() {
        let mut scenario = base_scenario(1);
        let site = scenario.topology.node_by_name("site").unwrap();
        let plant_node = scenario
            .topology
            .add_node("plant", CarrierSet::all())
            .unwrap();
        scenario
            .topology
            .add_link("tie", plant_node, site, Carrier::Electricity, 3.0)
            .unwrap();
        scenario.devices.push(DeviceSpec {
            id: "plant1".into(),
            node: plant_node,
            kind: DeviceKind::Plant(DualRolePlantSpec::generator(7.0, 0.0)),
        });
        scenario
            .profiles
            .insert(demand_series_name(Carrier::Electricity), vec![7.0])
            .unwrap();
        let err = iopf_cooperative(&scenario, &empty_exchange(1), 1).unwrap_err();
        assert_eq!(err, EmsError::InfeasibleDispatch(0));
    }

    #[test]
    fn generator_plant_heat_byproduct_is_vented() {
        let mut scenario = base_scenario(1);
        let node = scenario.topology.node_by_name("site").unwrap();
        scenario.devices.push(DeviceSpec {
            id: "plant1".into(),
            node,
            kind: DeviceKind::Plant(DualRolePlantSpec::generator(5.0, 8.0)),
        });
        scenario
            .profiles
            .insert(demand_series_name(Carrier::Electricity), vec![5.0])
            .unwrap();
        scenario
            .profiles
            .insert(demand_series_name(Carrier::Heat), vec![3.0])
            .unwrap();
        let result = iopf_cooperative(&scenario, &empty_exchange(1), 1).unwrap();
        assert!(result.max_residual_kw <= 1e-9);
        assert!((result.vented[0].get(Carrier::Heat) - 5.0).abs() <= 1e-9);
    }

    #[test]
    fn stackelberg_quadratic_toy_matches_closed_form() {
        let leader = InfrastructureAgent {
            name: "heat-seller".into(),
            strategy: StrategySet::interval(0.0, 1.0),
            cost: Box::new(|own: &[f64], other: &[f64]| {
                (own[0] - 1.0).powi(2) + other[0] * other[0]
            }),
        };
        let follower = InfrastructureAgent {
            name: "electricity-dispatcher".into(),
            strategy: StrategySet::interval(0.0, 1.0),
            cost: Box::new(|own: &[f64], other: &[f64]| (own[0] - other[0]).powi(2)),
        };
        let result = iopf_stackelberg(leader, follower, 1e-8).unwrap();
        assert!((result.leader_setpoints[0] - 0.5).abs() <= 1e-5);
        assert!((result.follower_setpoints[0] - 0.5).abs() <= 1e-5);
    }

    #[test]
    fn stackelberg_decouples_independent_follower() {
        let leader = InfrastructureAgent {
            name: "leader".into(),
            strategy: StrategySet::interval(-2.0, 2.0),
            cost: Box::new(|own: &[f64], _: &[f64]| (own[0] - 1.5).powi(2)),
        };
        let follower = InfrastructureAgent {
            name: "follower".into(),
            strategy: StrategySet::interval(-2.0, 2.0),
            cost: Box::new(|own: &[f64], _: &[f64]| (own[0] + 0.5).powi(2)),
        };
        let result = iopf_stackelberg(leader, follower, 1e-8).unwrap();
        assert!((result.leader_setpoints[0] - 1.5).abs() <= 1e-5);
        assert!((result.follower_setpoints[0] + 0.5).abs() <= 1e-5);
    }

    #[test]
    fn stackelberg_discrete_tariff_matches_enumeration() {
        // leader picks a tariff from {0.2, 0.5, 0.8}; follower consumes
        // q = 1 - tariff; leader profit = tariff * q, cost = -profit
        let leader = InfrastructureAgent {
            name: "tariff".into(),
            strategy: StrategySet::finite_scalars(&[0.2, 0.5, 0.8]),
            cost: Box::new(|own: &[f64], other: &[f64]| -(own[0] * other[0])),
        };
        let follower = InfrastructureAgent {
            name: "consumer".into(),
            strategy: StrategySet::interval(0.0, 1.0),
            cost: Box::new(|own: &[f64], other: &[f64]| {
                // quadratic utility with unit satiation minus tariff payment
                0.5 * own[0] * own[0] - own[0] + other[0] * own[0]
            }),
        };
        let result = iopf_stackelberg(leader, follower, 1e-8).unwrap();
        // enumeration: tariff 0.2 -> profit 0.16; 0.5 -> 0.25; 0.8 -> 0.16
        assert_eq!(result.leader_setpoints, vec![0.5]);
        assert!((result.follower_setpoints[0] - 0.5).abs() <= 1e-5);
    }

    fn storage_and_generation_toy(horizon: usize) -> Scenario {
        let mut scenario = base_scenario(horizon);
        let node = scenario.topology.node_by_name("site").unwrap();
        scenario.mode = OperationMode::GridConnected;
        // heat cannot be imported, so the heat floor pins the gas burn
        scenario.ems = Some(EmsConfig {
            exchange_bound_kw: PerCarrier::from_fn(|c| match c {
                Carrier::Electricity | Carrier::Gas => 100.0,
                _ => 0.0,
            }),
            ..EmsConfig::locked_step(1.0)
        });
        scenario.devices.push(DeviceSpec {
            id: "chp1".into(),
            node,
            kind: DeviceKind::GasChp(GasChpSpec {
                elec_efficiency: 0.4,
                heat_efficiency: 0.5,
                max_gas_kw: 100.0,
            }),
        });
        scenario.devices.push(DeviceSpec {
            id: "caes1".into(),
            node,
            kind: DeviceKind::StCaes(caes_spec(0.0, 10.0)),
        });
        scenario
            .profiles
            .insert(demand_series_name(Carrier::Heat), vec![10.0; horizon])
            .unwrap();
        scenario
            .profiles
            .insert(demand_series_name(Carrier::Electricity), vec![3.0; horizon])
            .unwrap();
        // gas-fired electricity costs 0.5 / 0.4 = 1.25, above the import
        // price, so overfiring past the heat floor never pays
        *scenario.prices.get_mut(Carrier::Gas) = vec![0.5; horizon];
        *scenario.prices.get_mut(Carrier::Electricity) = vec![1.0; horizon];
        scenario
    }

    #[test]
    fn storage_led_game_matches_cooperative_dispatch() {
        let scenario = storage_and_generation_toy(2);
        let coop = iopf_cooperative(&scenario, &empty_exchange(2), 2).unwrap();
        // heat floor burns 20 kW gas; 8 kW electric byproduct covers demand
        // and exports 5 kW, so each step costs 20 * 0.5 - 5 * 1.0 = 5
        assert!((coop.total_cost - 10.0).abs() <= 1e-9);

        let (game, setpoints) =
            scenario_stackelberg(&scenario, &empty_exchange(2), 2, 1e-6).unwrap();
        assert!(setpoints.max_residual_kw <= 1e-9);
        assert!((setpoints.total_cost - coop.total_cost).abs() <= 1e-3);
        // flat prices leave no arbitrage, and the round trip loses energy,
        // so the storage leader stays idle
        for u in &game.leader_setpoints {
            assert!(u.abs() <= 1e-3);
        }
        // the generation follower settles on the heat floor
        for g in &game.follower_setpoints {
            assert!((g - 20.0).abs() <= 1e-3);
        }
    }

    #[test]
    fn storage_led_game_requires_both_roles() {
        let mut scenario = storage_and_generation_toy(2);
        scenario.devices.retain(|d| d.id != "caes1");
        let err = scenario_stackelberg(&scenario, &empty_exchange(2), 2, 1e-6).unwrap_err();
        assert!(matches!(err, EmsError::InvalidParameter(_)));
    }
}
