//! Command pipelines behind the CLI verbs.
//!
//! Each runner returns the text it would print on success, so commands stay
//! testable without spawning a process. Failures carry an exit code: 1 for
//! anything wrong with the input, 2 when the input is well-formed but the
//! requested run has no feasible answer.

use crate::num::format_number;
use crate::report::{emit_report, summary_text, RunReport, WriteError};
use crate::scenario_text::{parse_scenario, ParseError, ScenarioBundle};
use mei_core::ems::{
    decide_mode, iopf_cooperative, scenario_stackelberg, timescale_schedule, AttenuationLevel,
    ControlLaw, EmsError, ExchangeSchedule, LayerTimescales,
};
use mei_core::model::{Carrier, OperationMode, PerCarrier};
use mei_core::planner::{plan_hub_portfolio, PlanError};
use std::fmt;
use std::fs;
use std::path::Path;

/// Equilibrium tolerance for the leader-follower dispatch game.
const STACKELBERG_TOL: f64 = 1e-6;

#[derive(Debug)]
pub enum CliError {
    /// The document does not parse; exit 1.
    Parse(ParseError),
    /// The document parses but the request cannot be set up; exit 1.
    Invalid(String),
    /// Well-posed request with no feasible answer; exit 2.
    Infeasible(String),
    /// Report files could not be written; exit 1.
    Io(WriteError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Infeasible(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(e) => e.fmt(f),
            CliError::Invalid(m) => f.write_str(m),
            CliError::Infeasible(m) => f.write_str(m),
            CliError::Io(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for CliError {}

fn dispatch_failure(err: EmsError) -> CliError {
    match err {
        EmsError::InfeasibleDispatch(_) | EmsError::AttenuationInfeasible => {
            CliError::Infeasible(err.to_string())
        }
        other => CliError::Invalid(other.to_string()),
    }
}

fn plan_failure(err: PlanError) -> CliError {
    match err {
        PlanError::InfeasibleDemand => CliError::Infeasible(err.to_string()),
        other => CliError::Invalid(other.to_string()),
    }
}

pub fn load_bundle(path: &Path) -> Result<ScenarioBundle, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read {}: {}", path.display(), e)))?;
    parse_scenario(&text).map_err(CliError::Parse)
}

/// `validate <file>`: parse, run the model checks, report what was found.
pub fn run_validate(path: &Path) -> Result<String, CliError> {
    let bundle = load_bundle(path)?;
    let s = &bundle.scenario;
    let mut out = String::new();
    out.push_str(&format!("scenario `{}` valid\n", s.name));
    out.push_str(&format!("mode: {}\n", s.mode.name()));
    out.push_str(&format!(
        "horizon: {} steps of {} h\n",
        s.horizon(),
        format_number(s.dt_hours)
    ));
    out.push_str(&format!("nodes: {}\n", s.topology.node_count()));
    out.push_str(&format!("links: {}\n", s.topology.links.len()));
    out.push_str(&format!("hubs: {}\n", s.topology.hubs.len()));
    out.push_str(&format!("devices: {}\n", s.devices.len()));
    out.push_str(&format!("catalog components: {}\n", bundle.catalog.len()));
    out.push_str(&format!("dynamics models: {}\n", bundle.dynamics.len()));
    Ok(out)
}

/// `plan <file>`: pick the component portfolio that covers peak demand with
/// the best balance of cost and emissions.
pub fn run_plan(path: &Path) -> Result<String, CliError> {
    let bundle = load_bundle(path)?;
    if bundle.catalog.is_empty() {
        return Err(CliError::Invalid(format!(
            "scenario `{}` has no component sections to plan from",
            bundle.scenario.name
        )));
    }
    let (selected, outcome) =
        plan_hub_portfolio(&bundle.catalog, &bundle.scenario).map_err(plan_failure)?;
    let mut out = String::from(
        "component,capital_cost,operating_cost,emission_kg,electricity_kw,heat_kw,cooling_kw,gas_kw\n",
    );
    for item in bundle.catalog.iter().filter(|i| selected.contains(&i.name)) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            item.name,
            format_number(item.capital_cost),
            format_number(item.operating_cost),
            format_number(item.emission_kg),
            format_number(item.capability.get(Carrier::Electricity)),
            format_number(item.capability.get(Carrier::Heat)),
            format_number(item.capability.get(Carrier::Cooling)),
            format_number(item.capability.get(Carrier::Gas)),
        ));
    }
    out.push_str(&format!("portfolio cost: {}\n", format_number(outcome.cost)));
    out.push_str(&format!(
        "portfolio emission_kg: {}\n",
        format_number(outcome.emission)
    ));
    out.push_str(&format!(
        "bargain product: {}\n",
        format_number(outcome.product)
    ));
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct DispatchArgs {
    pub hours: f64,
    pub islanded: bool,
    pub stackelberg: bool,
}

fn step_count(hours: f64, dt_hours: f64, available: usize) -> Result<usize, CliError> {
    if !hours.is_finite() || hours <= 0.0 {
        return Err(CliError::Invalid("run length must be positive".into()));
    }
    let steps = (hours / dt_hours).round();
    if steps < 1.0 || (steps * dt_hours - hours).abs() > 1e-9 {
        return Err(CliError::Invalid(format!(
            "run length {} h is not a whole number of {} h steps",
            format_number(hours),
            format_number(dt_hours)
        )));
    }
    let steps = steps as usize;
    if steps > available {
        return Err(CliError::Invalid(format!(
            "profiles cover {} steps, requested {}",
            available, steps
        )));
    }
    Ok(steps)
}

/// `dispatch <file> --hours N [--islanded] [--stackelberg] --out DIR`.
///
/// Settles the operation mode, folds the single-network exchange schedule to
/// its empty form, dispatches cooperatively (or as a storage-led game), and
/// writes the report artifacts into `out`.
pub fn run_dispatch(path: &Path, args: DispatchArgs, out: &Path) -> Result<String, CliError> {
    let bundle = load_bundle(path)?;
    let mut scenario = bundle.scenario;
    let steps = step_count(args.hours, scenario.dt_hours, scenario.horizon())?;

    if let Some(ems) = &scenario.ems {
        let ts = LayerTimescales {
            slow_h: ems.slow_step_h,
            medium_h: ems.medium_step_h,
            fast_h: ems.fast_step_h,
        };
        timescale_schedule(&ts, steps as f64 * scenario.dt_hours).map_err(|e| {
            CliError::Invalid(format!("run length does not fit the update layers: {}", e))
        })?;
    }

    let configured = scenario
        .ems
        .as_ref()
        .map(|e| e.exchange_bound_kw.clone())
        .unwrap_or_else(|| PerCarrier::splat(0.0));
    let islanded = args.islanded || scenario.mode == OperationMode::Autonomous;
    let (mode, bounds) = decide_mode(&scenario.prices, &scenario.profiles, islanded, &configured)
        .map_err(dispatch_failure)?;
    scenario.mode = mode;
    if let Some(ems) = &mut scenario.ems {
        ems.exchange_bound_kw = bounds;
    }

    let exchange = ExchangeSchedule::empty(steps);
    let setpoints = if args.stackelberg {
        scenario_stackelberg(&scenario, &exchange, steps, STACKELBERG_TOL)
            .map(|(_, sp)| sp)
            .map_err(dispatch_failure)?
    } else {
        iopf_cooperative(&scenario, &exchange, steps).map_err(dispatch_failure)?
    };

    let report = RunReport::from_dispatch(&scenario, &exchange, &setpoints).map_err(dispatch_failure)?;
    let paths = emit_report(&report, out).map_err(CliError::Io)?;

    let mut text = summary_text(&report);
    for p in paths {
        text.push_str(&format!("wrote {}\n", p.display()));
    }
    Ok(text)
}

fn gain_text(name: &str, law: &ControlLaw) -> String {
    let mut out = format!("model {}\n", name);
    out.push_str(&format!("attenuation level: {}\n", format_number(law.gamma)));
    for r in 0..law.gain.nrows() {
        let row: Vec<String> = (0..law.gain.ncols())
            .map(|c| format_number(law.gain[(r, c)]))
            .collect();
        out.push_str(&format!("gain row {}: {}\n", r, row.join(", ")));
    }
    out
}

/// `control <file> --gamma G`: synthesize disturbance-attenuating state
/// feedback for every dynamics section. Without the flag, the ems section's
/// configured level applies.
pub fn run_control(path: &Path, gamma: Option<f64>) -> Result<String, CliError> {
    let bundle = load_bundle(path)?;
    if bundle.dynamics.is_empty() {
        return Err(CliError::Invalid(format!(
            "scenario `{}` has no dynamics sections to control",
            bundle.scenario.name
        )));
    }
    let gamma = gamma
        .or_else(|| bundle.scenario.ems.as_ref().and_then(|e| e.gamma))
        .ok_or_else(|| {
            CliError::Invalid("no attenuation level: pass --gamma or set one in [ems]".into())
        })?;
    let level = AttenuationLevel::new(gamma).map_err(dispatch_failure)?;
    let mut out = String::new();
    for named in &bundle.dynamics {
        let law = mei_core::ems::hinf_synthesize(&named.model, level).map_err(dispatch_failure)?;
        out.push_str(&gain_text(&named.name, &law));
    }
    Ok(out)
}
