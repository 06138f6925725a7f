//! Network primitives: energy carriers, port vectors, hub coupling matrices,
//! topology, nodal balance accounting, and scenario-level design checks.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use thiserror::Error;

use crate::devices::{DeviceKind, DeviceSpec};

/// Number of energy carriers handled by the toolkit.
pub const CARRIER_COUNT: usize = 4;

/// Energy carriers, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Carrier {
    Electricity,
    Heat,
    Cooling,
    Gas,
}

impl Carrier {
    pub const ALL: [Carrier; CARRIER_COUNT] = [
        Carrier::Electricity,
        Carrier::Heat,
        Carrier::Cooling,
        Carrier::Gas,
    ];

    pub fn index(self) -> usize {
        match self {
            Carrier::Electricity => 0,
            Carrier::Heat => 1,
            Carrier::Cooling => 2,
            Carrier::Gas => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Carrier> {
        Carrier::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Carrier::Electricity => "electricity",
            Carrier::Heat => "heat",
            Carrier::Cooling => "cooling",
            Carrier::Gas => "gas",
        }
    }

    pub fn parse(s: &str) -> Option<Carrier> {
        match s {
            "electricity" => Some(Carrier::Electricity),
            "heat" => Some(Carrier::Heat),
            "cooling" => Some(Carrier::Cooling),
            "gas" => Some(Carrier::Gas),
            _ => None,
        }
    }
}

impl fmt::Display for Carrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Signed per-carrier power (kW) or energy (kWh) bundle.
///
/// Positive entries are injections into a node, negative entries are
/// withdrawals; demand is carried as negative injection.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PortVector([f64; CARRIER_COUNT]);

impl PortVector {
    pub const ZERO: PortVector = PortVector([0.0; CARRIER_COUNT]);

    pub fn new() -> Self {
        Self::ZERO
    }

    pub fn from_array(values: [f64; CARRIER_COUNT]) -> Self {
        PortVector(values)
    }

    pub fn get(&self, c: Carrier) -> f64 {
        self.0[c.index()]
    }

    pub fn set(&mut self, c: Carrier, value: f64) {
        self.0[c.index()] = value;
    }

    /// Builder-style setter.
    pub fn with(mut self, c: Carrier, value: f64) -> Self {
        self.set(c, value);
        self
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn abs_max(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self, eps: f64) -> bool {
        self.abs_max() <= eps
    }

    /// Entrywise maximum with zero: keeps injections, drops withdrawals.
    pub fn positive_part(&self) -> PortVector {
        PortVector(self.0.map(|v| v.max(0.0)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Carrier, f64)> + '_ {
        Carrier::ALL.iter().map(move |&c| (c, self.get(c)))
    }
}

impl Add for PortVector {
    type Output = PortVector;
    fn add(self, rhs: PortVector) -> PortVector {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0.iter()) {
            *o += r;
        }
        PortVector(out)
    }
}

impl AddAssign for PortVector {
    fn add_assign(&mut self, rhs: PortVector) {
        *self = *self + rhs;
    }
}

impl Sub for PortVector {
    type Output = PortVector;
    fn sub(self, rhs: PortVector) -> PortVector {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0.iter()) {
            *o -= r;
        }
        PortVector(out)
    }
}

impl SubAssign for PortVector {
    fn sub_assign(&mut self, rhs: PortVector) {
        *self = *self - rhs;
    }
}

impl Mul<f64> for PortVector {
    type Output = PortVector;
    fn mul(self, rhs: f64) -> PortVector {
        PortVector(self.0.map(|v| v * rhs))
    }
}

impl Neg for PortVector {
    type Output = PortVector;
    fn neg(self) -> PortVector {
        PortVector(self.0.map(|v| -v))
    }
}

/// Compact set of carriers served at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CarrierSet(u8);

impl CarrierSet {
    pub fn empty() -> Self {
        CarrierSet(0)
    }

    pub fn all() -> Self {
        CarrierSet(0b1111)
    }

    pub fn from_slice(carriers: &[Carrier]) -> Self {
        let mut set = CarrierSet::empty();
        for &c in carriers {
            set.insert(c);
        }
        set
    }

    pub fn insert(&mut self, c: Carrier) {
        self.0 |= 1 << c.index();
    }

    pub fn contains(&self, c: Carrier) -> bool {
        self.0 & (1 << c.index()) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = Carrier> + '_ {
        Carrier::ALL.iter().copied().filter(move |&c| self.contains(c))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("hub input must be nonnegative")]
    NegativeHubInput,
    #[error("coupling entry must lie in [0, 1]")]
    CouplingEntryOutOfRange,
    #[error("hub column exceeds unity")]
    CouplingColumnExceedsUnity,
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("dimension error")]
    Dimension,
    #[error("value must be finite")]
    NotFinite,
    #[error("link capacity must be nonnegative")]
    NegativeCapacity,
    #[error("carrier `{carrier}` not served at node `{node}`")]
    CarrierNotServed { node: String, carrier: Carrier },
    #[error("time step must be positive")]
    NonPositiveTimeStep,
    #[error("profile `{0}` length does not match scenario horizon")]
    ProfileLength(String),
    #[error("device error at `{device}`: {source}")]
    Device {
        device: String,
        source: crate::devices::DeviceError,
    },
}

/// Hub coupling matrix: `entry[out][in]` is the fraction of carrier `in`
/// consumed at the hub input that emerges as carrier `out`.
///
/// Entries lie in `[0, 1]` and each input column sums to at most one, so a
/// hub can split and convert energy but never create it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingMatrix {
    entries: [[f64; CARRIER_COUNT]; CARRIER_COUNT],
}

impl CouplingMatrix {
    pub fn zero() -> Self {
        CouplingMatrix {
            entries: [[0.0; CARRIER_COUNT]; CARRIER_COUNT],
        }
    }

    pub fn new(entries: [[f64; CARRIER_COUNT]; CARRIER_COUNT]) -> Result<Self, ModelError> {
        let m = CouplingMatrix { entries };
        m.validate()?;
        Ok(m)
    }

    pub fn from_entries(entries: &[(Carrier, Carrier, f64)]) -> Result<Self, ModelError> {
        let mut m = [[0.0; CARRIER_COUNT]; CARRIER_COUNT];
        for &(out, input, v) in entries {
            m[out.index()][input.index()] = v;
        }
        Self::new(m)
    }

    fn validate(&self) -> Result<(), ModelError> {
        for row in &self.entries {
            for &v in row {
                if !v.is_finite() {
                    return Err(ModelError::NotFinite);
                }
                if !(0.0..=1.0).contains(&v) {
                    return Err(ModelError::CouplingEntryOutOfRange);
                }
            }
        }
        for input in Carrier::ALL {
            if self.column_sum(input) > 1.0 {
                return Err(ModelError::CouplingColumnExceedsUnity);
            }
        }
        Ok(())
    }

    pub fn get(&self, out: Carrier, input: Carrier) -> f64 {
        self.entries[out.index()][input.index()]
    }

    pub fn column_sum(&self, input: Carrier) -> f64 {
        Carrier::ALL
            .iter()
            .map(|&out| self.entries[out.index()][input.index()])
            .sum()
    }
}

/// Converts a nonnegative hub input bundle into the output bundle.
pub fn hub_output(coupling: &CouplingMatrix, input: PortVector) -> Result<PortVector, ModelError> {
    if !input.is_finite() {
        return Err(ModelError::NotFinite);
    }
    if Carrier::ALL.iter().any(|&c| input.get(c) < 0.0) {
        return Err(ModelError::NegativeHubInput);
    }
    let mut out = PortVector::new();
    for o in Carrier::ALL {
        let mut acc = 0.0;
        for i in Carrier::ALL {
            acc += coupling.get(o, i) * input.get(i);
        }
        out.set(o, acc);
    }
    Ok(out)
}

/// Index into a topology's node table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn value(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub carriers: CarrierSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub from: NodeId,
    pub to: NodeId,
    pub carrier: Carrier,
    pub capacity_kw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hub {
    pub name: String,
    pub node: NodeId,
    pub coupling: CouplingMatrix,
}

/// Nodes, directed links, and coupling hubs of one micro energy internet.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkTopology {
    nodes: Vec<Node>,
    names: BTreeMap<String, NodeId>,
    pub links: Vec<Link>,
    pub hubs: Vec<Hub>,
}

impl NetworkTopology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: &str, carriers: CarrierSet) -> Result<NodeId, ModelError> {
        if self.names.contains_key(name) {
            return Err(ModelError::DuplicateNode(name.to_string()));
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            id,
            name: name.to_string(),
            carriers,
        });
        self.names.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0)
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.names.get(name).copied()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn add_link(
        &mut self,
        name: &str,
        from: NodeId,
        to: NodeId,
        carrier: Carrier,
        capacity_kw: f64,
    ) -> Result<(), ModelError> {
        for end in [from, to] {
            let node = self
                .node(end)
                .ok_or_else(|| ModelError::UnknownNode(format!("#{}", end.0)))?;
            if !node.carriers.contains(carrier) {
                return Err(ModelError::CarrierNotServed {
                    node: node.name.clone(),
                    carrier,
                });
            }
        }
        if !capacity_kw.is_finite() {
            return Err(ModelError::NotFinite);
        }
        if capacity_kw < 0.0 {
            return Err(ModelError::NegativeCapacity);
        }
        self.links.push(Link {
            name: name.to_string(),
            from,
            to,
            carrier,
            capacity_kw,
        });
        Ok(())
    }

    pub fn add_hub(
        &mut self,
        name: &str,
        node: NodeId,
        coupling: CouplingMatrix,
    ) -> Result<(), ModelError> {
        if self.node(node).is_none() {
            return Err(ModelError::UnknownNode(format!("#{}", node.0)));
        }
        self.hubs.push(Hub {
            name: name.to_string(),
            node,
            coupling,
        });
        Ok(())
    }
}

/// Flow realization over a topology for a single time step: device and demand
/// injections per node, hub input draws, and signed link flows (positive in
/// the link's `from -> to` direction).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub injections: BTreeMap<NodeId, PortVector>,
    pub hub_inputs: Vec<PortVector>,
    pub link_flows: Vec<f64>,
}

impl NetworkState {
    pub fn zero(topology: &NetworkTopology) -> Self {
        NetworkState {
            injections: BTreeMap::new(),
            hub_inputs: vec![PortVector::ZERO; topology.hubs.len()],
            link_flows: vec![0.0; topology.links.len()],
        }
    }

    pub fn with_injections(
        topology: &NetworkTopology,
        injections: BTreeMap<NodeId, PortVector>,
    ) -> Self {
        let mut s = Self::zero(topology);
        s.injections = injections;
        s
    }

    pub fn add_injection(&mut self, node: NodeId, delta: PortVector) {
        let entry = self.injections.entry(node).or_insert(PortVector::ZERO);
        *entry += delta;
    }
}

/// Per-node, per-carrier imbalance of a flow state.
///
/// The residual at a node sums its injections and local hub outputs, then
/// subtracts hub input draws and net link outflow. An all-zero map is a
/// balanced operating state.
pub fn balance_residual(
    topology: &NetworkTopology,
    state: &NetworkState,
) -> Result<BTreeMap<(NodeId, Carrier), f64>, ModelError> {
    if state.hub_inputs.len() != topology.hubs.len()
        || state.link_flows.len() != topology.links.len()
    {
        return Err(ModelError::Dimension);
    }
    for (&node, inj) in &state.injections {
        if topology.node(node).is_none() {
            return Err(ModelError::UnknownNode(format!("#{}", node.0)));
        }
        if !inj.is_finite() {
            return Err(ModelError::NotFinite);
        }
    }
    for flow in &state.link_flows {
        if !flow.is_finite() {
            return Err(ModelError::NotFinite);
        }
    }

    let mut residual = BTreeMap::new();
    for node in &topology.nodes {
        let mut acc = PortVector::ZERO;
        if let Some(inj) = state.injections.get(&node.id) {
            acc += *inj;
        }
        for (hub, input) in topology.hubs.iter().zip(state.hub_inputs.iter()) {
            if hub.node == node.id {
                acc += hub_output(&hub.coupling, *input)?;
                acc -= *input;
            }
        }
        for (link, &flow) in topology.links.iter().zip(state.link_flows.iter()) {
            if link.from == node.id {
                let mut delta = PortVector::ZERO;
                delta.set(link.carrier, flow);
                acc -= delta;
            }
            if link.to == node.id {
                let mut delta = PortVector::ZERO;
                delta.set(link.carrier, flow);
                acc += delta;
            }
        }
        for c in Carrier::ALL {
            residual.insert((node.id, c), acc.get(c));
        }
    }
    Ok(residual)
}

/// Connection state toward the surrounding utilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperationMode {
    Autonomous,
    GridConnected,
}

impl OperationMode {
    pub fn name(self) -> &'static str {
        match self {
            OperationMode::Autonomous => "autonomous",
            OperationMode::GridConnected => "grid_connected",
        }
    }
}

impl fmt::Display for OperationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fixed-size per-carrier table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerCarrier<T> {
    items: [T; CARRIER_COUNT],
}

impl<T> PerCarrier<T> {
    pub fn from_fn(mut f: impl FnMut(Carrier) -> T) -> Self {
        PerCarrier {
            items: [
                f(Carrier::Electricity),
                f(Carrier::Heat),
                f(Carrier::Cooling),
                f(Carrier::Gas),
            ],
        }
    }

    pub fn get(&self, c: Carrier) -> &T {
        &self.items[c.index()]
    }

    pub fn get_mut(&mut self, c: Carrier) -> &mut T {
        &mut self.items[c.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Carrier, &T)> {
        Carrier::ALL.iter().map(move |&c| (c, self.get(c)))
    }
}

impl<T: Clone> PerCarrier<T> {
    pub fn splat(value: T) -> Self {
        PerCarrier::from_fn(|_| value.clone())
    }
}

pub const IRRADIANCE_SERIES: &str = "irradiance";

pub fn demand_series_name(c: Carrier) -> &'static str {
    match c {
        Carrier::Electricity => "demand_electricity",
        Carrier::Heat => "demand_heat",
        Carrier::Cooling => "demand_cooling",
        Carrier::Gas => "demand_gas",
    }
}

/// Named time-series table; every series shares the scenario horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Profiles {
    horizon: usize,
    series: BTreeMap<String, Vec<f64>>,
}

impl Profiles {
    pub fn new(horizon: usize) -> Self {
        Profiles {
            horizon,
            series: BTreeMap::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn insert(&mut self, name: &str, values: Vec<f64>) -> Result<(), ModelError> {
        if values.len() != self.horizon {
            return Err(ModelError::ProfileLength(name.to_string()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NotFinite);
        }
        self.series.insert(name.to_string(), values);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.series.get(name).map(|v| v.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(|s| s.as_str())
    }

    /// Irradiance in W/m² at step `t`, zero when no series is present.
    pub fn irradiance(&self, t: usize) -> f64 {
        self.series
            .get(IRRADIANCE_SERIES)
            .and_then(|s| s.get(t))
            .copied()
            .unwrap_or(0.0)
    }

    /// Demand in kW for carrier `c` at step `t`, zero when absent.
    pub fn demand(&self, c: Carrier, t: usize) -> f64 {
        self.series
            .get(demand_series_name(c))
            .and_then(|s| s.get(t))
            .copied()
            .unwrap_or(0.0)
    }
}

/// Energy-management configuration carried by a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct EmsConfig {
    /// Thermal-layer update period, hours.
    pub slow_step_h: f64,
    /// Gas-layer update period, hours.
    pub medium_step_h: f64,
    /// Electric-layer update period, hours.
    pub fast_step_h: f64,
    /// Per-carrier utility exchange magnitude bound, kW.
    pub exchange_bound_kw: PerCarrier<f64>,
    /// Disturbance attenuation level for the control layer.
    pub gamma: Option<f64>,
}

impl EmsConfig {
    /// All layers update every `dt` hours and no exchange is allowed.
    pub fn locked_step(dt: f64) -> Self {
        EmsConfig {
            slow_step_h: dt,
            medium_step_h: dt,
            fast_step_h: dt,
            exchange_bound_kw: PerCarrier::splat(0.0),
            gamma: None,
        }
    }
}

/// A complete study case: topology, devices, profiles, prices, and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub topology: NetworkTopology,
    pub devices: Vec<DeviceSpec>,
    pub profiles: Profiles,
    /// Utility tariff per carrier, currency per kWh, one entry per step.
    pub prices: PerCarrier<Vec<f64>>,
    pub mode: OperationMode,
    /// Prefer consuming locally generated energy before exchanging it.
    pub self_use: bool,
    pub dt_hours: f64,
    /// Node where the scenario-level demand profiles are drawn.
    pub demand_node: Option<NodeId>,
    /// Node where utility exchange enters the network.
    pub utility_node: Option<NodeId>,
    pub ems: Option<EmsConfig>,
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.profiles.horizon()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.dt_hours.is_finite() || self.dt_hours <= 0.0 {
            return Err(ModelError::NonPositiveTimeStep);
        }
        for (c, series) in self.prices.iter() {
            if series.len() != self.horizon() {
                return Err(ModelError::ProfileLength(format!("price_{}", c)));
            }
            if series.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NotFinite);
            }
        }
        for node in [self.demand_node, self.utility_node].into_iter().flatten() {
            if self.topology.node(node).is_none() {
                return Err(ModelError::UnknownNode(format!("#{}", node.value())));
            }
        }
        for device in &self.devices {
            if self.topology.node(device.node).is_none() {
                return Err(ModelError::UnknownNode(format!("#{}", device.node.value())));
            }
            device.kind.validate().map_err(|source| ModelError::Device {
                device: device.id.clone(),
                source,
            })?;
            if let DeviceKind::StCaes(spec) = &device.kind {
                if let Some(name) = &spec.solar_heat_series {
                    if self.profiles.get(name).is_none() {
                        return Err(ModelError::ProfileLength(name.clone()));
                    }
                }
            }
            if let DeviceKind::NetProfile(profile) = &device.kind {
                for (_, series) in profile.series.iter() {
                    if let Some(name) = series {
                        if self.profiles.get(name).is_none() {
                            return Err(ModelError::ProfileLength(name.clone()));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Outcome of the five structural design checks for a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipleReport {
    /// At least one clean (solar-driven) source is present.
    pub clean_source: bool,
    /// At least one storage device with positive capacity is present.
    pub storage: bool,
    /// Electricity can be converted to heat and to cooling somewhere.
    pub conversion_paths: bool,
    /// The scenario prefers self-use of local generation.
    pub self_use: bool,
    /// An energy-management configuration is present.
    pub ems: bool,
}

impl PrincipleReport {
    pub fn all_satisfied(&self) -> bool {
        self.clean_source && self.storage && self.conversion_paths && self.self_use && self.ems
    }
}

/// Checks the five structural design principles.
///
/// The checks are existential over devices and hubs, so adding equipment to a
/// satisfying scenario can never revoke a satisfied principle.
pub fn check_design_principles(scenario: &Scenario) -> PrincipleReport {
    let mut clean_source = false;
    let mut storage = false;
    let mut elec_to_heat = false;
    let mut elec_to_cool = false;

    for device in &scenario.devices {
        match &device.kind {
            DeviceKind::Solar(_) => clean_source = true,
            DeviceKind::Plant(spec) => {
                if spec.is_generator() {
                    clean_source = true;
                }
            }
            DeviceKind::StCaes(spec) => {
                let s = &spec.state;
                if s.air_capacity_kwh > 0.0 || s.thermal_capacity_kwh > 0.0 {
                    storage = true;
                }
                if s.eta_h > 0.0 {
                    elec_to_heat = true;
                }
                if s.eta_c > 0.0 && s.kappa > 0.0 {
                    elec_to_cool = true;
                }
            }
            _ => {}
        }
    }

    for hub in &scenario.topology.hubs {
        if hub.coupling.get(Carrier::Heat, Carrier::Electricity) > 0.0 {
            elec_to_heat = true;
        }
        if hub.coupling.get(Carrier::Cooling, Carrier::Electricity) > 0.0 {
            elec_to_cool = true;
        }
    }

    PrincipleReport {
        clean_source,
        storage,
        conversion_paths: elec_to_heat && elec_to_cool,
        self_use: scenario.self_use,
        ems: scenario.ems.is_some(),
    }
}
