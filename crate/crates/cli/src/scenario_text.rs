//! Sectioned key-value scenario documents.
//!
//! A document is line oriented. `[scenario]`, `[profiles]`, `[prices]`, and
//! `[ems]` appear at most once; `[node X]`, `[link X]`, `[hub X]`,
//! `[device X]`, `[component X]`, and `[dynamics X]` carry an id. Entries are
//! `key = value`, lists are comma separated, `#` starts a comment, keys are
//! case sensitive, and unknown sections or keys are errors. All numbers are
//! quantized to nine significant digits while parsing, which makes a parse,
//! serialize, parse cycle a fixed point.
//!
//! Section order is free except that every name reference (nodes, profile
//! series) is resolved after the whole document is read.
//!
//! Hub sections couple carriers with `out_from_in` keys, for example
//! `heat_from_gas = 0.9`. Device sections carry a `kind` whose remaining keys
//! mirror the device parameters in `mei_core::devices`.

use crate::num::{format_number, quantize};
use mei_core::devices::{
    DeviceKind, DeviceSpec, DualRolePlantSpec, GasChpSpec, NetProfileSpec, SolarKind,
    SolarSourceSpec, StCaesSpec, StCaesState,
};
use mei_core::ems::DeviceDynamics;
use mei_core::model::{
    Carrier, CarrierSet, CouplingMatrix, EmsConfig, NetworkTopology, OperationMode, PerCarrier,
    Profiles, Scenario,
};
use mei_core::planner::ComponentOption;
use nalgebra::DMatrix;
use std::collections::BTreeSet;
use std::fmt;

/// Parse failure with a message that names the offending line and section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError(pub String);

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ParseError {}

fn fail<T>(message: String) -> Result<T, ParseError> {
    Err(ParseError(message))
}

/// A scenario document: the study case itself plus the planning catalog and
/// the fast device dynamics that ride along in their own sections.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBundle {
    pub scenario: Scenario,
    pub catalog: Vec<ComponentOption>,
    pub dynamics: Vec<NamedDynamics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedDynamics {
    pub name: String,
    pub model: DeviceDynamics,
}

const SECTION_KINDS: [&str; 10] = [
    "scenario",
    "profiles",
    "prices",
    "ems",
    "node",
    "link",
    "hub",
    "device",
    "component",
    "dynamics",
];

fn takes_id(kind: &str) -> bool {
    matches!(
        kind,
        "node" | "link" | "hub" | "device" | "component" | "dynamics"
    )
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct RawSection {
    kind: String,
    id: Option<String>,
    line: usize,
    entries: Vec<Entry>,
}

impl RawSection {
    fn label(&self) -> String {
        match &self.id {
            Some(id) => format!("[{} {}]", self.kind, id),
            None => format!("[{}]", self.kind),
        }
    }
}

fn lex(text: &str) -> Result<Vec<RawSection>, ParseError> {
    let mut sections: Vec<RawSection> = Vec::new();
    for (index, raw_line) in text.lines().enumerate() {
        let line = index + 1;
        let stripped = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let trimmed = stripped.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(inner) = trimmed.strip_prefix('[') {
            let Some(inner) = inner.strip_suffix(']') else {
                return fail(format!("line {}: malformed section header", line));
            };
            let mut words = inner.split_whitespace();
            let kind = words.next().unwrap_or("").to_string();
            let id = words.next().map(str::to_string);
            if words.next().is_some() {
                return fail(format!("line {}: malformed section header", line));
            }
            if !SECTION_KINDS.contains(&kind.as_str()) {
                return fail(format!("line {}: unknown section [{}]", line, kind));
            }
            match (&id, takes_id(&kind)) {
                (None, true) => {
                    return fail(format!("line {}: section [{}] needs an id", line, kind))
                }
                (Some(_), false) => {
                    return fail(format!("line {}: section [{}] takes no id", line, kind))
                }
                _ => {}
            }
            if let Some(id) = &id {
                if !valid_name(id) {
                    return fail(format!(
                        "line {}: id `{}` may only use letters, digits, `_`, and `-`",
                        line, id
                    ));
                }
            }
            sections.push(RawSection {
                kind,
                id,
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return fail(format!("line {}: expected `key = value`", line));
        };
        let Some(section) = sections.last_mut() else {
            return fail(format!("line {}: entry before any section header", line));
        };
        let key = key.trim().to_string();
        if !valid_name(&key) {
            return fail(format!("line {}: bad key `{}`", line, key));
        }
        if let Some(previous) = section.entries.iter().find(|e| e.key == key) {
            return fail(format!(
                "line {}: key `{}` already set at line {} in {}",
                line,
                key,
                previous.line,
                section.label()
            ));
        }
        section.entries.push(Entry {
            key,
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(sections)
}

/// Tracks which entries a section builder consumed so leftovers can be
/// reported as unknown keys.
struct KeyBag<'a> {
    section: &'a RawSection,
    used: Vec<bool>,
}

impl<'a> KeyBag<'a> {
    fn new(section: &'a RawSection) -> Self {
        KeyBag {
            section,
            used: vec![false; section.entries.len()],
        }
    }

    fn take(&mut self, key: &str) -> Option<(&'a str, usize)> {
        for (i, entry) in self.section.entries.iter().enumerate() {
            if entry.key == key && !self.used[i] {
                self.used[i] = true;
                return Some((entry.value.as_str(), entry.line));
            }
        }
        None
    }

    fn require(&mut self, key: &str) -> Result<(&'a str, usize), ParseError> {
        self.take(key).ok_or_else(|| {
            ParseError(format!(
                "line {}: {} is missing `{}`",
                self.section.line,
                self.section.label(),
                key
            ))
        })
    }

    /// Remaining entries in file order, consuming them.
    fn drain(&mut self) -> Vec<&'a Entry> {
        let mut rest = Vec::new();
        for (i, entry) in self.section.entries.iter().enumerate() {
            if !self.used[i] {
                self.used[i] = true;
                rest.push(entry);
            }
        }
        rest
    }

    fn finish(self) -> Result<(), ParseError> {
        for (i, entry) in self.section.entries.iter().enumerate() {
            if !self.used[i] {
                return fail(format!(
                    "line {}: unknown key `{}` in {}",
                    entry.line,
                    entry.key,
                    self.section.label()
                ));
            }
        }
        Ok(())
    }
}

fn parse_number(value: &str, line: usize) -> Result<f64, ParseError> {
    let parsed: f64 = value
        .parse()
        .map_err(|_| ParseError(format!("line {}: `{}` is not a number", line, value)))?;
    if !parsed.is_finite() {
        return fail(format!("line {}: `{}` is not finite", line, value));
    }
    Ok(quantize(parsed))
}

fn parse_count(value: &str, line: usize) -> Result<usize, ParseError> {
    value
        .parse()
        .map_err(|_| ParseError(format!("line {}: `{}` is not a count", line, value)))
}

fn parse_bool(value: &str, line: usize) -> Result<bool, ParseError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => fail(format!("line {}: `{}` is not `true` or `false`", line, value)),
    }
}

fn parse_list(value: &str, line: usize) -> Result<Vec<f64>, ParseError> {
    value
        .split(',')
        .map(|item| parse_number(item.trim(), line))
        .collect()
}

fn parse_carrier(value: &str, line: usize) -> Result<Carrier, ParseError> {
    Carrier::parse(value).ok_or_else(|| {
        ParseError(format!(
            "line {}: unknown carrier `{}` (electricity, heat, cooling, gas)",
            line, value
        ))
    })
}

fn parse_matrix(value: &str, line: usize) -> Result<DMatrix<f64>, ParseError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for row_text in value.split(';') {
        rows.push(parse_list(row_text, line)?);
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return fail(format!("line {}: matrix rows differ in length", line));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(flat.len() / cols, cols, &flat))
}

fn resolve_node(
    topology: &NetworkTopology,
    name: &str,
    line: usize,
) -> Result<mei_core::model::NodeId, ParseError> {
    topology
        .node_by_name(name)
        .ok_or_else(|| ParseError(format!("line {}: unknown node `{}`", line, name)))
}

fn first_of_kind<'a>(
    sections: &'a [RawSection],
    kind: &str,
) -> Result<Option<&'a RawSection>, ParseError> {
    let mut found = None;
    for section in sections.iter().filter(|s| s.kind == kind) {
        if let Some(first) = found {
            let first: &RawSection = first;
            return fail(format!(
                "line {}: [{}] already given at line {}",
                section.line, kind, first.line
            ));
        }
        found = Some(section);
    }
    Ok(found)
}

fn check_unique_ids(sections: &[RawSection], kind: &str) -> Result<(), ParseError> {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for section in sections.iter().filter(|s| s.kind == kind) {
        let id = section.id.as_deref().unwrap_or("");
        if !seen.insert(id) {
            return fail(format!(
                "line {}: duplicate {} `{}`",
                section.line, kind, id
            ));
        }
    }
    Ok(())
}

pub fn parse_scenario(text: &str) -> Result<ScenarioBundle, ParseError> {
    let sections = lex(text)?;
    for kind in ["node", "link", "hub", "device", "component", "dynamics"] {
        check_unique_ids(&sections, kind)?;
    }

    // [scenario]
    let Some(head) = first_of_kind(&sections, "scenario")? else {
        return fail("missing [scenario] section".into());
    };
    let mut bag = KeyBag::new(head);
    let name = bag.require("name")?.0.to_string();
    if !valid_name(&name) {
        return fail(format!(
            "line {}: id `{}` may only use letters, digits, `_`, and `-`",
            head.line, name
        ));
    }
    let (mode_text, mode_line) = bag.require("mode")?;
    let mode = match mode_text {
        "autonomous" => OperationMode::Autonomous,
        "grid_connected" => OperationMode::GridConnected,
        other => {
            return fail(format!(
                "line {}: unknown mode `{}` (autonomous, grid_connected)",
                mode_line, other
            ))
        }
    };
    let (dt_text, dt_line) = bag.require("dt_hours")?;
    let dt_hours = parse_number(dt_text, dt_line)?;
    if dt_hours <= 0.0 {
        return fail(format!("line {}: dt_hours must be positive", dt_line));
    }
    let self_use = match bag.take("self_use") {
        Some((v, l)) => parse_bool(v, l)?,
        None => true,
    };
    let demand_node_name = bag.take("demand_node").map(|(v, l)| (v.to_string(), l));
    let utility_node_name = bag.take("utility_node").map(|(v, l)| (v.to_string(), l));
    bag.finish()?;

    // [profiles]
    let mut profiles = Profiles::new(0);
    let mut horizon = 0usize;
    if let Some(section) = first_of_kind(&sections, "profiles")? {
        let mut bag = KeyBag::new(section);
        let (h_text, h_line) = bag.require("horizon")?;
        horizon = parse_count(h_text, h_line)?;
        profiles = Profiles::new(horizon);
        for entry in bag.drain() {
            let series = parse_list(&entry.value, entry.line)?;
            if series.len() != horizon {
                return fail(format!(
                    "line {}: series `{}` has {} values, horizon is {}",
                    entry.line,
                    entry.key,
                    series.len(),
                    horizon
                ));
            }
            profiles
                .insert(&entry.key, series)
                .map_err(|e| ParseError(format!("line {}: {}", entry.line, e)))?;
        }
        bag.finish()?;
    }

    // [prices]: absent carriers price at zero; a single value repeats
    let mut prices = PerCarrier::splat(vec![0.0; horizon]);
    if let Some(section) = first_of_kind(&sections, "prices")? {
        let mut bag = KeyBag::new(section);
        for carrier in Carrier::ALL {
            if let Some((value, line)) = bag.take(carrier.name()) {
                let list = parse_list(value, line)?;
                let series = if list.len() == 1 {
                    vec![list[0]; horizon]
                } else if list.len() == horizon {
                    list
                } else {
                    return fail(format!(
                        "line {}: price `{}` has {} values, horizon is {}",
                        line,
                        carrier.name(),
                        list.len(),
                        horizon
                    ));
                };
                *prices.get_mut(carrier) = series;
            }
        }
        bag.finish()?;
    }

    // [ems]
    let mut ems = None;
    if let Some(section) = first_of_kind(&sections, "ems")? {
        let mut bag = KeyBag::new(section);
        let step = |bag: &mut KeyBag, key: &str| -> Result<f64, ParseError> {
            match bag.take(key) {
                Some((v, l)) => parse_number(v, l),
                None => Ok(dt_hours),
            }
        };
        let slow_step_h = step(&mut bag, "slow_step_h")?;
        let medium_step_h = step(&mut bag, "medium_step_h")?;
        let fast_step_h = step(&mut bag, "fast_step_h")?;
        let mut exchange_bound_kw = PerCarrier::splat(0.0);
        for carrier in Carrier::ALL {
            let key = format!("exchange_{}_kw", carrier.name());
            if let Some((v, l)) = bag.take(&key) {
                *exchange_bound_kw.get_mut(carrier) = parse_number(v, l)?;
            }
        }
        let gamma = match bag.take("gamma") {
            Some((v, l)) => Some(parse_number(v, l)?),
            None => None,
        };
        bag.finish()?;
        ems = Some(EmsConfig {
            slow_step_h,
            medium_step_h,
            fast_step_h,
            exchange_bound_kw,
            gamma,
        });
    }

    // [node X]
    let mut topology = NetworkTopology::new();
    for section in sections.iter().filter(|s| s.kind == "node") {
        let id = section.id.as_deref().unwrap_or("");
        let mut bag = KeyBag::new(section);
        let carriers = match bag.take("carriers") {
            Some((value, line)) => {
                let mut set = CarrierSet::empty();
                for item in value.split(',') {
                    set.insert(parse_carrier(item.trim(), line)?);
                }
                set
            }
            None => CarrierSet::all(),
        };
        bag.finish()?;
        topology
            .add_node(id, carriers)
            .map_err(|e| ParseError(format!("line {}: {}", section.line, e)))?;
    }
    // [link X]
    let mut links = Vec::new();
    for section in sections.iter().filter(|s| s.kind == "link") {
        let id = section.id.as_deref().unwrap_or("");
        let mut bag = KeyBag::new(section);
        let (from_text, from_line) = bag.require("from")?;
        let (to_text, to_line) = bag.require("to")?;
        let (carrier_text, carrier_line) = bag.require("carrier")?;
        let (cap_text, cap_line) = bag.require("capacity_kw")?;
        bag.finish()?;
        links.push((
            id.to_string(),
            resolve_node(&topology, from_text, from_line)?,
            resolve_node(&topology, to_text, to_line)?,
            parse_carrier(carrier_text, carrier_line)?,
            parse_number(cap_text, cap_line)?,
            section.line,
        ));
    }
    for (id, from, to, carrier, capacity, line) in links {
        topology
            .add_link(&id, from, to, carrier, capacity)
            .map_err(|e| ParseError(format!("line {}: {}", line, e)))?;
    }

    // [hub X]: coupling keys look like `heat_from_gas`
    let mut hubs = Vec::new();
    for section in sections.iter().filter(|s| s.kind == "hub") {
        let id = section.id.as_deref().unwrap_or("");
        let mut bag = KeyBag::new(section);
        let (node_text, node_line) = bag.require("node")?;
        let node = resolve_node(&topology, node_text, node_line)?;
        let mut entries: Vec<(Carrier, Carrier, f64)> = Vec::new();
        let mut column_sums = PerCarrier::splat(0.0_f64);
        for entry in bag.drain() {
            let Some((out_text, in_text)) = entry.key.split_once("_from_") else {
                return fail(format!(
                    "line {}: unknown key `{}` in {} (coupling keys look like `heat_from_gas`)",
                    entry.line,
                    entry.key,
                    section.label()
                ));
            };
            let out = parse_carrier(out_text, entry.line)?;
            let input = parse_carrier(in_text, entry.line)?;
            let gain = parse_number(&entry.value, entry.line)?;
            if !(0.0..=1.0).contains(&gain) {
                return fail(format!(
                    "line {}: coupling gain must lie in [0, 1]",
                    entry.line
                ));
            }
            *column_sums.get_mut(input) += gain;
            if *column_sums.get(input) > 1.0 {
                return fail(format!("hub column exceeds unity at line {}", entry.line));
            }
            entries.push((out, input, gain));
        }
        bag.finish()?;
        let coupling = CouplingMatrix::from_entries(&entries)
            .map_err(|e| ParseError(format!("line {}: {}", section.line, e)))?;
        hubs.push((id.to_string(), node, coupling, section.line));
    }
    for (id, node, coupling, line) in hubs {
        topology
            .add_hub(&id, node, coupling)
            .map_err(|e| ParseError(format!("line {}: {}", line, e)))?;
    }

    // [device X]
    let mut devices = Vec::new();
    for section in sections.iter().filter(|s| s.kind == "device") {
        let id = section.id.as_deref().unwrap_or("");
        let mut bag = KeyBag::new(section);
        let (kind_text, kind_line) = bag.require("kind")?;
        let (node_text, node_line) = bag.require("node")?;
        let node = resolve_node(&topology, node_text, node_line)?;
        let kind = parse_device_kind(kind_text, kind_line, &mut bag)?;
        bag.finish()?;
        kind.validate()
            .map_err(|e| ParseError(format!("line {}: device `{}`: {}", section.line, id, e)))?;
        devices.push(DeviceSpec {
            id: id.to_string(),
            node,
            kind,
        });
    }

    // [component X]
    let mut catalog = Vec::new();
    for section in sections.iter().filter(|s| s.kind == "component") {
        let id = section.id.as_deref().unwrap_or("");
        let mut bag = KeyBag::new(section);
        let mut number = |key: &str, default: f64| -> Result<f64, ParseError> {
            match bag.take(key) {
                Some((v, l)) => parse_number(v, l),
                None => Ok(default),
            }
        };
        let capital_cost = number("capital_cost", 0.0)?;
        let operating_cost = number("operating_cost", 0.0)?;
        let emission_kg = number("emission_kg", 0.0)?;
        let mut capability = mei_core::model::PortVector::ZERO;
        for carrier in Carrier::ALL {
            let key = format!("{}_kw", carrier.name());
            if let Some((v, l)) = bag.take(&key) {
                capability.set(carrier, parse_number(v, l)?);
            }
        }
        bag.finish()?;
        catalog.push(ComponentOption::new(
            id,
            capital_cost,
            operating_cost,
            emission_kg,
            capability,
        ));
    }

    // [dynamics X]
    let mut dynamics = Vec::new();
    for section in sections.iter().filter(|s| s.kind == "dynamics") {
        let id = section.id.as_deref().unwrap_or("");
        let mut bag = KeyBag::new(section);
        let mut matrix = |key: &str| -> Result<DMatrix<f64>, ParseError> {
            let (v, l) = bag.require(key)?;
            parse_matrix(v, l)
        };
        let a = matrix("a")?;
        let b1 = matrix("b1")?;
        let b2 = matrix("b2")?;
        let c = matrix("c")?;
        let d = matrix("d")?;
        bag.finish()?;
        let model = DeviceDynamics::new(a, b1, b2, c, d)
            .map_err(|e| ParseError(format!("line {}: dynamics `{}`: {}", section.line, id, e)))?;
        dynamics.push(NamedDynamics {
            name: id.to_string(),
            model,
        });
    }

    let demand_node = match demand_node_name {
        Some((name, line)) => Some(resolve_node(&topology, &name, line)?),
        None => None,
    };
    let utility_node = match utility_node_name {
        Some((name, line)) => Some(resolve_node(&topology, &name, line)?),
        None => None,
    };
    let scenario = Scenario {
        name,
        topology,
        devices,
        profiles,
        prices,
        mode,
        self_use,
        dt_hours,
        demand_node,
        utility_node,
        ems,
    };
    scenario
        .validate()
        .map_err(|e| ParseError(format!("scenario `{}` invalid: {}", scenario.name, e)))?;
    Ok(ScenarioBundle {
        scenario,
        catalog,
        dynamics,
    })
}

fn parse_device_kind(
    kind: &str,
    kind_line: usize,
    bag: &mut KeyBag,
) -> Result<DeviceKind, ParseError> {
    let mut number = |key: &str| -> Result<f64, ParseError> {
        let (v, l) = bag.require(key)?;
        parse_number(v, l)
    };
    match kind {
        "pv" | "chimney" => {
            let solar_kind = if kind == "pv" {
                SolarKind::Photovoltaic
            } else {
                SolarKind::Chimney
            };
            let rated_kw = number("rated_kw")?;
            let efficiency = number("efficiency")?;
            let area_m2 = number("area_m2")?;
            Ok(DeviceKind::Solar(SolarSourceSpec::new(
                solar_kind, rated_kw, efficiency, area_m2,
            )))
        }
        "full_spectrum" => {
            let rated_kw = number("rated_kw")?;
            let efficiency = number("efficiency")?;
            let area_m2 = number("area_m2")?;
            let thermal_efficiency = number("thermal_efficiency")?;
            let mut spec = SolarSourceSpec::new(SolarKind::FullSpectrum, rated_kw, efficiency, area_m2)
                .with_thermal_efficiency(thermal_efficiency);
            if let Some((v, l)) = bag.take("pv_fraction") {
                spec.pv_fraction = parse_number(v, l)?;
                let (v, l) = bag.require("thermal_fraction")?;
                spec.thermal_fraction = parse_number(v, l)?;
            }
            Ok(DeviceKind::Solar(spec))
        }
        "st_caes" => {
            let state = StCaesState::new(
                number("air_store_kwh")?,
                number("air_capacity_kwh")?,
                number("thermal_store_kwh")?,
                number("thermal_capacity_kwh")?,
                number("eta_c")?,
                number("eta_h")?,
                number("lambda")?,
                number("eta_t")?,
                number("beta")?,
                number("kappa")?,
            )
            .map_err(|e| ParseError(format!("line {}: {}", kind_line, e)))?;
            let max_charge_kw = number("max_charge_kw")?;
            let max_discharge_kw = number("max_discharge_kw")?;
            let solar_heat_series = bag.take("solar_heat_series").map(|(v, _)| v.to_string());
            Ok(DeviceKind::StCaes(StCaesSpec {
                state,
                max_charge_kw,
                max_discharge_kw,
                solar_heat_series,
            }))
        }
        "plant_load" => Ok(DeviceKind::Plant(DualRolePlantSpec::load(number(
            "load_kw",
        )?))),
        "plant_generator" => {
            let gen_elec_kw = number("gen_elec_kw")?;
            let gen_heat_kw = number("gen_heat_kw")?;
            Ok(DeviceKind::Plant(DualRolePlantSpec::generator(
                gen_elec_kw,
                gen_heat_kw,
            )))
        }
        "gas_chp" => Ok(DeviceKind::GasChp(GasChpSpec {
            elec_efficiency: number("elec_efficiency")?,
            heat_efficiency: number("heat_efficiency")?,
            max_gas_kw: number("max_gas_kw")?,
        })),
        "profile" => {
            let mut series = PerCarrier::splat(None);
            for carrier in Carrier::ALL {
                let key = format!("{}_series", carrier.name());
                if let Some((v, _)) = bag.take(&key) {
                    *series.get_mut(carrier) = Some(v.to_string());
                }
            }
            let scale = match bag.take("scale") {
                Some((v, l)) => parse_number(v, l)?,
                None => 1.0,
            };
            let curtailable = match bag.take("curtailable") {
                Some((v, l)) => parse_bool(v, l)?,
                None => false,
            };
            Ok(DeviceKind::NetProfile(NetProfileSpec {
                series,
                scale,
                curtailable,
            }))
        }
        other => fail(format!("line {}: unknown device kind `{}`", kind_line, other)),
    }
}

fn push_line(out: &mut String, key: &str, value: &str) {
    out.push_str(key);
    out.push_str(" = ");
    out.push_str(value);
    out.push('\n');
}

fn number_line(out: &mut String, key: &str, value: f64) {
    push_line(out, key, &format_number(value));
}

fn list_text(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format_number(*v))
        .collect::<Vec<_>>()
        .join(", ")
}

fn matrix_text(m: &DMatrix<f64>) -> String {
    (0..m.nrows())
        .map(|r| {
            (0..m.ncols())
                .map(|c| format_number(m[(r, c)]))
                .collect::<Vec<_>>()
                .join(", ")
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Canonical document text for a bundle. Parsing the result reproduces the
/// bundle exactly.
pub fn serialize_scenario(bundle: &ScenarioBundle) -> String {
    let scenario = &bundle.scenario;
    let topology = &scenario.topology;
    let mut out = String::new();

    out.push_str("[scenario]\n");
    push_line(&mut out, "name", &scenario.name);
    push_line(&mut out, "mode", scenario.mode.name());
    number_line(&mut out, "dt_hours", scenario.dt_hours);
    push_line(&mut out, "self_use", if scenario.self_use { "true" } else { "false" });
    if let Some(node) = scenario.demand_node {
        push_line(&mut out, "demand_node", &topology.node(node).expect("demand node").name);
    }
    if let Some(node) = scenario.utility_node {
        push_line(&mut out, "utility_node", &topology.node(node).expect("utility node").name);
    }

    out.push_str("\n[profiles]\n");
    push_line(&mut out, "horizon", &scenario.profiles.horizon().to_string());
    let names: Vec<String> = scenario.profiles.names().map(str::to_string).collect();
    for name in names {
        let series = scenario.profiles.get(&name).expect("listed series");
        push_line(&mut out, &name, &list_text(series));
    }

    out.push_str("\n[prices]\n");
    for (carrier, series) in scenario.prices.iter() {
        push_line(&mut out, carrier.name(), &list_text(series));
    }

    if let Some(ems) = &scenario.ems {
        out.push_str("\n[ems]\n");
        number_line(&mut out, "slow_step_h", ems.slow_step_h);
        number_line(&mut out, "medium_step_h", ems.medium_step_h);
        number_line(&mut out, "fast_step_h", ems.fast_step_h);
        for (carrier, bound) in ems.exchange_bound_kw.iter() {
            number_line(&mut out, &format!("exchange_{}_kw", carrier.name()), *bound);
        }
        if let Some(gamma) = ems.gamma {
            number_line(&mut out, "gamma", gamma);
        }
    }

    for node in topology.nodes() {
        out.push_str(&format!("\n[node {}]\n", node.name));
        let carriers: Vec<&str> = node.carriers.iter().map(Carrier::name).collect();
        push_line(&mut out, "carriers", &carriers.join(", "));
    }

    for link in &topology.links {
        out.push_str(&format!("\n[link {}]\n", link.name));
        push_line(&mut out, "from", &topology.node(link.from).expect("link end").name);
        push_line(&mut out, "to", &topology.node(link.to).expect("link end").name);
        push_line(&mut out, "carrier", link.carrier.name());
        number_line(&mut out, "capacity_kw", link.capacity_kw);
    }

    for hub in &topology.hubs {
        out.push_str(&format!("\n[hub {}]\n", hub.name));
        push_line(&mut out, "node", &topology.node(hub.node).expect("hub node").name);
        for output in Carrier::ALL {
            for input in Carrier::ALL {
                let gain = hub.coupling.get(output, input);
                if gain != 0.0 {
                    let key = format!("{}_from_{}", output.name(), input.name());
                    number_line(&mut out, &key, gain);
                }
            }
        }
    }

    for device in &scenario.devices {
        out.push_str(&format!("\n[device {}]\n", device.id));
        push_line(&mut out, "kind", device_kind_token(&device.kind));
        push_line(&mut out, "node", &topology.node(device.node).expect("device node").name);
        serialize_device_kind(&mut out, &device.kind);
    }

    for item in &bundle.catalog {
        out.push_str(&format!("\n[component {}]\n", item.name));
        number_line(&mut out, "capital_cost", item.capital_cost);
        number_line(&mut out, "operating_cost", item.operating_cost);
        number_line(&mut out, "emission_kg", item.emission_kg);
        for carrier in Carrier::ALL {
            let kw = item.capability.get(carrier);
            if kw != 0.0 {
                number_line(&mut out, &format!("{}_kw", carrier.name()), kw);
            }
        }
    }

    for entry in &bundle.dynamics {
        out.push_str(&format!("\n[dynamics {}]\n", entry.name));
        push_line(&mut out, "a", &matrix_text(&entry.model.a));
        push_line(&mut out, "b1", &matrix_text(&entry.model.b1));
        push_line(&mut out, "b2", &matrix_text(&entry.model.b2));
        push_line(&mut out, "c", &matrix_text(&entry.model.c));
        push_line(&mut out, "d", &matrix_text(&entry.model.d));
    }

    out
}

fn device_kind_token(kind: &DeviceKind) -> &'static str {
    match kind {
        DeviceKind::Solar(spec) => match spec.kind {
            SolarKind::Photovoltaic => "pv",
            SolarKind::Chimney => "chimney",
            SolarKind::FullSpectrum => "full_spectrum",
        },
        DeviceKind::StCaes(_) => "st_caes",
        DeviceKind::Plant(spec) => {
            if spec.is_generator() {
                "plant_generator"
            } else {
                "plant_load"
            }
        }
        DeviceKind::GasChp(_) => "gas_chp",
        DeviceKind::NetProfile(_) => "profile",
    }
}

fn serialize_device_kind(out: &mut String, kind: &DeviceKind) {
    match kind {
        DeviceKind::Solar(spec) => {
            number_line(out, "rated_kw", spec.rated_kw);
            number_line(out, "efficiency", spec.efficiency);
            number_line(out, "area_m2", spec.area_m2);
            if spec.kind == SolarKind::FullSpectrum {
                number_line(out, "thermal_efficiency", spec.thermal_efficiency);
                number_line(out, "pv_fraction", spec.pv_fraction);
                number_line(out, "thermal_fraction", spec.thermal_fraction);
            }
        }
        DeviceKind::StCaes(spec) => {
            let s = &spec.state;
            number_line(out, "air_store_kwh", s.air_store_kwh);
            number_line(out, "air_capacity_kwh", s.air_capacity_kwh);
            number_line(out, "thermal_store_kwh", s.thermal_store_kwh);
            number_line(out, "thermal_capacity_kwh", s.thermal_capacity_kwh);
            number_line(out, "eta_c", s.eta_c);
            number_line(out, "eta_h", s.eta_h);
            number_line(out, "lambda", s.lambda);
            number_line(out, "eta_t", s.eta_t);
            number_line(out, "beta", s.beta);
            number_line(out, "kappa", s.kappa);
            number_line(out, "max_charge_kw", spec.max_charge_kw);
            number_line(out, "max_discharge_kw", spec.max_discharge_kw);
            if let Some(series) = &spec.solar_heat_series {
                push_line(out, "solar_heat_series", series);
            }
        }
        DeviceKind::Plant(spec) => {
            if spec.is_generator() {
                number_line(out, "gen_elec_kw", spec.gen_elec_kw);
                number_line(out, "gen_heat_kw", spec.gen_heat_kw);
            } else {
                number_line(out, "load_kw", spec.load_kw);
            }
        }
        DeviceKind::GasChp(spec) => {
            number_line(out, "elec_efficiency", spec.elec_efficiency);
            number_line(out, "heat_efficiency", spec.heat_efficiency);
            number_line(out, "max_gas_kw", spec.max_gas_kw);
        }
        DeviceKind::NetProfile(spec) => {
            for (carrier, series) in spec.series.iter() {
                if let Some(name) = series {
                    push_line(out, &format!("{}_series", carrier.name()), name);
                }
            }
            number_line(out, "scale", spec.scale);
            push_line(out, "curtailable", if spec.curtailable { "true" } else { "false" });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[scenario]
name = tiny
mode = autonomous
dt_hours = 1

[profiles]
horizon = 2
demand_electricity = 1.5, 2

[node campus]
carriers = electricity, heat
";

    fn with_demand_node(doc: &str) -> String {
        doc.replace("dt_hours = 1", "dt_hours = 1\ndemand_node = campus")
    }

    #[test]
    fn minimal_document_parses() {
        let doc = with_demand_node(MINIMAL);
        let bundle = parse_scenario(&doc).unwrap();
        assert_eq!(bundle.scenario.name, "tiny");
        assert_eq!(bundle.scenario.topology.node_count(), 1);
        assert_eq!(bundle.scenario.horizon(), 2);
        assert_eq!(
            bundle.scenario.profiles.get("demand_electricity").unwrap(),
            &[1.5, 2.0]
        );
    }

    #[test]
    fn parse_serialize_parse_is_fixed_point() {
        let doc = "\
[scenario]
name = round-trip
mode = grid_connected
dt_hours = 0.25
self_use = false
demand_node = campus
utility_node = campus

[profiles]
horizon = 3
demand_electricity = 1, 2.000000001, 0.333333333333
irradiance = 0, 850, 120

[prices]
electricity = 0.8, 0.2, 0.5
gas = 0.3

[ems]
slow_step_h = 0.25
exchange_electricity_kw = 100
exchange_gas_kw = 50
gamma = 2

[node campus]
carriers = electricity, heat, cooling, gas

[node annex]
carriers = electricity

[link tie]
from = campus
to = annex
carrier = electricity
capacity_kw = 75

[hub boiler]
node = campus
heat_from_gas = 0.9

[device pv1]
kind = pv
node = campus
rated_kw = 45
efficiency = 0.17
area_m2 = 207

[device store]
kind = st_caes
node = campus
air_store_kwh = 10
air_capacity_kwh = 100
thermal_store_kwh = 0
thermal_capacity_kwh = 50
eta_c = 0.72
eta_h = 0.25
lambda = 0.01
eta_t = 0.6
beta = 0.5
kappa = 0.1
max_charge_kw = 30
max_discharge_kw = 25

[component chp-a]
capital_cost = 1000
operating_cost = 120
emission_kg = 300
electricity_kw = 40
heat_kw = 50

[dynamics governor]
a = 0, 1; -1, -2
b1 = 0.5; 0
b2 = 0; 1
c = 1, 0; 0, 1; 0, 0
d = 0; 0; 1
";
        let first = parse_scenario(doc).unwrap();
        let text = serialize_scenario(&first);
        let second = parse_scenario(&text).unwrap();
        assert_eq!(first, second);
        // serializing again is byte-identical
        assert_eq!(serialize_scenario(&second), text);
    }

    #[test]
    fn hub_column_over_unity_names_the_line() {
        let doc = "\
[scenario]
name = bad-hub
mode = autonomous
dt_hours = 1

[profiles]
horizon = 1

[node campus]

[hub boiler]
node = campus
heat_from_gas = 0.7
electricity_from_gas = 0.5
";
        let err = parse_scenario(doc).unwrap_err();
        assert_eq!(err.to_string(), "hub column exceeds unity at line 14");
    }

    #[test]
    fn unknown_key_is_an_error() {
        let doc = with_demand_node(MINIMAL).replace(
            "carriers = electricity, heat",
            "carriers = electricity, heat\nvoltage = 400",
        );
        let err = parse_scenario(&doc).unwrap_err();
        assert!(err.to_string().contains("unknown key `voltage`"), "{}", err);
        assert!(err.to_string().contains("[node campus]"), "{}", err);
    }

    #[test]
    fn duplicate_device_id_is_an_error() {
        let doc = format!(
            "{}\n[device d1]\nkind = plant_load\nnode = campus\nload_kw = 5\n\n[device d1]\nkind = plant_load\nnode = campus\nload_kw = 6\n",
            with_demand_node(MINIMAL)
        );
        let err = parse_scenario(&doc).unwrap_err();
        assert!(err.to_string().contains("duplicate device `d1`"), "{}", err);
    }

    #[test]
    fn unknown_section_is_an_error() {
        let doc = format!("{}\n[weather]\nrain = 1\n", with_demand_node(MINIMAL));
        let err = parse_scenario(&doc).unwrap_err();
        assert!(err.to_string().contains("unknown section [weather]"), "{}", err);
    }

    #[test]
    fn unknown_node_reference_names_line() {
        let doc = MINIMAL.replace("dt_hours = 1", "dt_hours = 1\ndemand_node = mars");
        let err = parse_scenario(&doc).unwrap_err();
        assert!(err.to_string().contains("unknown node `mars`"), "{}", err);
        assert!(err.to_string().contains("line 5"), "{}", err);
    }

    #[test]
    fn numbers_quantize_while_parsing() {
        let doc = with_demand_node(MINIMAL).replace("1.5, 2", "0.12345678912345, 2");
        let bundle = parse_scenario(&doc).unwrap();
        let series = bundle.scenario.profiles.get("demand_electricity").unwrap();
        assert_eq!(series[0], 0.123456789);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let doc = "\
# study case
[scenario]
name = tiny   # short name
mode = autonomous
dt_hours = 1

[profiles]
horizon = 1

[node campus]
";
        let bundle = parse_scenario(doc).unwrap();
        assert_eq!(bundle.scenario.name, "tiny");
    }
}
