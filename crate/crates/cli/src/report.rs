//! Run reports: CSV tables, summary text, and plot data.
//!
//! All emitters are pure string builders over a [`RunReport`], so repeated
//! runs of the same scenario produce byte-identical artifacts. Numbers use
//! the shared nine-digit form; energy totals print in MWh with two decimals,
//! halves rounding away from zero.

use crate::num::{format_mwh, format_number};
use mei_core::devices::{DeviceKind, SolarKind};
use mei_core::ems::{DispatchSetpoints, EmsError, ExchangeSchedule};
use mei_core::model::{
    balance_residual, check_design_principles, demand_series_name, hub_output, Carrier,
    NetworkState, OperationMode, PortVector, PrincipleReport, Scenario,
};
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Everything one dispatch run leaves behind, ready for serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario_name: String,
    pub mode: OperationMode,
    pub dt_hours: f64,
    pub steps: usize,
    /// Device ids in scenario order; every table row order follows this.
    pub device_names: Vec<String>,
    pub device_power: Vec<BTreeMap<String, PortVector>>,
    pub hub_names: Vec<String>,
    /// Net hub injection per step and hub: conversion output minus drawn input.
    pub hub_net: Vec<Vec<PortVector>>,
    pub served_demand: Vec<PortVector>,
    pub vented: Vec<PortVector>,
    pub utility_exchange: Vec<PortVector>,
    pub pair_names: Vec<String>,
    pub pair_flows: Vec<Vec<PortVector>>,
    pub storage_names: Vec<String>,
    pub storage_air_kwh: Vec<Vec<f64>>,
    pub storage_thermal_kwh: Vec<Vec<f64>>,
    pub node_names: Vec<String>,
    pub residuals: Vec<Vec<PortVector>>,
    pub max_residual_kw: f64,
    pub total_cost: f64,
    /// Cumulative photovoltaic electricity over the run, kWh.
    pub pv_generation_kwh: f64,
    pub demand_kwh: PortVector,
    pub served_kwh: PortVector,
    pub principles: PrincipleReport,
}

impl RunReport {
    /// Assembles the report from a finished dispatch, recomputing per-node
    /// balance residuals from the recorded injections.
    pub fn from_dispatch(
        scenario: &Scenario,
        exchange: &ExchangeSchedule,
        setpoints: &DispatchSetpoints,
    ) -> Result<RunReport, EmsError> {
        let topology = &scenario.topology;
        let steps = setpoints.steps;
        let dt = setpoints.dt_hours;

        let device_names: Vec<String> = scenario.devices.iter().map(|d| d.id.clone()).collect();
        let mut device_power = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut row = setpoints.device_output[t].clone();
            for name in &device_names {
                row.entry(name.clone()).or_insert(PortVector::ZERO);
            }
            device_power.push(row);
        }

        let hub_names: Vec<String> = topology.hubs.iter().map(|h| h.name.clone()).collect();
        let mut hub_net = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut row = Vec::with_capacity(topology.hubs.len());
            for (hi, hub) in topology.hubs.iter().enumerate() {
                let input = setpoints.hub_inputs[t][hi];
                let output = hub_output(&hub.coupling, input)?;
                row.push(output - input);
            }
            hub_net.push(row);
        }

        let mut residuals = Vec::with_capacity(steps);
        let mut max_residual_kw = 0.0_f64;
        for t in 0..steps {
            let mut state = NetworkState::zero(topology);
            state.hub_inputs = setpoints.hub_inputs[t].clone();
            state.link_flows = setpoints.link_flows[t].clone();
            for (node, injection) in topology.nodes().iter().zip(&setpoints.node_injections[t]) {
                state.add_injection(node.id, *injection);
            }
            let by_key = balance_residual(topology, &state)?;
            let mut row = vec![PortVector::ZERO; topology.node_count()];
            for ((node, carrier), value) in by_key {
                row[node.value()].set(carrier, value);
                max_residual_kw = max_residual_kw.max(value.abs());
            }
            residuals.push(row);
        }

        let mut pv_generation_kwh = 0.0;
        for device in &scenario.devices {
            let is_pv = matches!(&device.kind, DeviceKind::Solar(s) if s.kind == SolarKind::Photovoltaic);
            if !is_pv {
                continue;
            }
            for row in &device_power {
                pv_generation_kwh += row[&device.id].get(Carrier::Electricity) * dt;
            }
        }

        let mut demand_kwh = PortVector::ZERO;
        for c in Carrier::ALL {
            if let Some(series) = scenario.profiles.get(demand_series_name(c)) {
                let total: f64 = series.iter().take(steps).sum();
                demand_kwh.set(c, total * dt);
            }
        }
        let served_kwh = setpoints
            .served_demand
            .iter()
            .fold(PortVector::ZERO, |acc, v| acc + *v * dt);

        let storage_names: Vec<String> = setpoints
            .storage_air_kwh
            .first()
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default();
        let storage_air_kwh = setpoints
            .storage_air_kwh
            .iter()
            .map(|m| m.values().copied().collect())
            .collect();
        let storage_thermal_kwh = setpoints
            .storage_thermal_kwh
            .iter()
            .map(|m| m.values().copied().collect())
            .collect();

        let pair_flows = (0..steps)
            .map(|t| {
                (0..exchange.pairs.len())
                    .map(|p| {
                        let mut v = PortVector::ZERO;
                        for c in Carrier::ALL {
                            v.set(c, exchange.flow(p, c, t));
                        }
                        v
                    })
                    .collect()
            })
            .collect();

        Ok(RunReport {
            scenario_name: scenario.name.clone(),
            mode: scenario.mode,
            dt_hours: dt,
            steps,
            device_names,
            device_power,
            hub_names,
            hub_net,
            served_demand: setpoints.served_demand.clone(),
            vented: setpoints.vented.clone(),
            utility_exchange: setpoints.utility_exchange.clone(),
            pair_names: exchange.pairs.clone(),
            pair_flows,
            storage_names,
            storage_air_kwh,
            storage_thermal_kwh,
            node_names: topology.nodes().iter().map(|n| n.name.clone()).collect(),
            residuals,
            max_residual_kw,
            total_cost: setpoints.total_cost,
            pv_generation_kwh,
            demand_kwh,
            served_kwh,
            principles: check_design_principles(scenario),
        })
    }
}

fn push_row(out: &mut String, step: usize, name: &str, carrier: Carrier, value: f64) {
    out.push_str(&format!(
        "{},{},{},{}\n",
        step,
        name,
        carrier.name(),
        format_number(value)
    ));
}

/// Long-format dispatch table: device rows carry net injections, the demand
/// and vent pseudo-rows carry withdrawals as negative power, hub rows carry
/// the conversion's net effect.
pub fn dispatch_csv(report: &RunReport) -> String {
    let mut out = String::from("step,name,carrier,power_kw\n");
    for t in 0..report.steps {
        for name in &report.device_names {
            let power = report.device_power[t][name];
            for c in Carrier::ALL {
                push_row(&mut out, t, name, c, power.get(c));
            }
        }
        for (hi, name) in report.hub_names.iter().enumerate() {
            for c in Carrier::ALL {
                push_row(&mut out, t, name, c, report.hub_net[t][hi].get(c));
            }
        }
        for c in Carrier::ALL {
            push_row(&mut out, t, "demand", c, -report.served_demand[t].get(c));
        }
        for c in Carrier::ALL {
            push_row(&mut out, t, "vent", c, -report.vented[t].get(c));
        }
    }
    out
}

/// Utility and peer exchange flows; positive values flow into this network.
pub fn exchange_csv(report: &RunReport) -> String {
    let mut out = String::from("step,counterparty,carrier,flow_kw\n");
    for t in 0..report.steps {
        for c in Carrier::ALL {
            push_row(&mut out, t, "utility", c, report.utility_exchange[t].get(c));
        }
        for (p, name) in report.pair_names.iter().enumerate() {
            for c in Carrier::ALL {
                push_row(&mut out, t, name, c, report.pair_flows[t][p].get(c));
            }
        }
    }
    out
}

pub fn storage_csv(report: &RunReport) -> String {
    let mut out = String::from("step,device,air_kwh,thermal_kwh\n");
    for t in 0..report.steps {
        for (i, name) in report.storage_names.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                t,
                name,
                format_number(report.storage_air_kwh[t][i]),
                format_number(report.storage_thermal_kwh[t][i])
            ));
        }
    }
    out
}

pub fn residuals_csv(report: &RunReport) -> String {
    let mut out = String::from("step,node,carrier,residual_kw\n");
    for t in 0..report.steps {
        for (n, name) in report.node_names.iter().enumerate() {
            for c in Carrier::ALL {
                push_row(&mut out, t, name, c, report.residuals[t][n].get(c));
            }
        }
    }
    out
}

fn principle_line(out: &mut String, name: &str, ok: bool) {
    out.push_str(&format!(
        "principle {}: {}\n",
        name,
        if ok { "pass" } else { "fail" }
    ));
}

/// Human-readable run summary. Energy totals are column sums of the CSV
/// tables converted to MWh.
pub fn summary_text(report: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("scenario: {}\n", report.scenario_name));
    out.push_str(&format!("mode: {}\n", report.mode.name()));
    out.push_str(&format!("steps: {}\n", report.steps));
    out.push_str(&format!("step_hours: {}\n", format_number(report.dt_hours)));
    out.push_str(&format!("total cost: {}\n", format_number(report.total_cost)));
    out.push_str(&format!(
        "max residual_kw: {}\n",
        format_number(report.max_residual_kw)
    ));
    out.push_str(&format!(
        "cumulative PV generation: {} MWh\n",
        format_mwh(report.pv_generation_kwh / 1000.0)
    ));
    for c in Carrier::ALL {
        out.push_str(&format!(
            "total demand {}: {} MWh\n",
            c.name(),
            format_mwh(report.demand_kwh.get(c) / 1000.0)
        ));
        out.push_str(&format!(
            "total served {}: {} MWh\n",
            c.name(),
            format_mwh(report.served_kwh.get(c) / 1000.0)
        ));
    }
    let p = &report.principles;
    principle_line(&mut out, "clean_source", p.clean_source);
    principle_line(&mut out, "storage", p.storage);
    principle_line(&mut out, "conversion_paths", p.conversion_paths);
    principle_line(&mut out, "self_use", p.self_use);
    principle_line(&mut out, "ems", p.ems);
    out.push_str(&format!(
        "principles: {}\n",
        if p.all_satisfied() { "satisfied" } else { "violated" }
    ));
    out
}

/// Series names in plot-data order, shared by the header comment and rows.
fn plot_series(report: &RunReport) -> Vec<String> {
    let mut names = Vec::new();
    for device in &report.device_names {
        for c in Carrier::ALL {
            names.push(format!("{}_{}", device, c.name()));
        }
    }
    for hub in &report.hub_names {
        for c in Carrier::ALL {
            names.push(format!("{}_{}", hub, c.name()));
        }
    }
    for c in Carrier::ALL {
        names.push(format!("demand_{}", c.name()));
    }
    for c in Carrier::ALL {
        names.push(format!("vent_{}", c.name()));
    }
    for c in Carrier::ALL {
        names.push(format!("utility_{}", c.name()));
    }
    for pair in &report.pair_names {
        for c in Carrier::ALL {
            names.push(format!("exchange_{}_{}", pair, c.name()));
        }
    }
    for storage in &report.storage_names {
        names.push(format!("{}_air_kwh", storage));
        names.push(format!("{}_thermal_kwh", storage));
    }
    names
}

fn plot_value(report: &RunReport, t: usize, index: usize) -> f64 {
    let devices = report.device_names.len() * 4;
    let hubs = report.hub_names.len() * 4;
    let pairs = report.pair_names.len() * 4;
    let mut i = index;
    if i < devices {
        let name = &report.device_names[i / 4];
        return report.device_power[t][name].get(Carrier::ALL[i % 4]);
    }
    i -= devices;
    if i < hubs {
        return report.hub_net[t][i / 4].get(Carrier::ALL[i % 4]);
    }
    i -= hubs;
    if i < 4 {
        return -report.served_demand[t].get(Carrier::ALL[i]);
    }
    i -= 4;
    if i < 4 {
        return -report.vented[t].get(Carrier::ALL[i]);
    }
    i -= 4;
    if i < 4 {
        return report.utility_exchange[t].get(Carrier::ALL[i]);
    }
    i -= 4;
    if i < pairs {
        return report.pair_flows[t][i / 4].get(Carrier::ALL[i % 4]);
    }
    i -= pairs;
    if i % 2 == 0 {
        report.storage_air_kwh[t][i / 2]
    } else {
        report.storage_thermal_kwh[t][i / 2]
    }
}

/// Long-format plot data: a comment line naming every series, then one row
/// per step and series.
pub fn plotdata_csv(report: &RunReport) -> String {
    let series = plot_series(report);
    let mut out = format!("# series: {}\n", series.join(", "));
    out.push_str("step,series,value\n");
    for t in 0..report.steps {
        for (i, name) in series.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                t,
                name,
                format_number(plot_value(report, t, i))
            ));
        }
    }
    out
}

/// Failure to write one report artifact.
#[derive(Debug)]
pub struct WriteError {
    pub path: PathBuf,
    pub source: io::Error,
}

impl fmt::Display for WriteError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cannot write {}: {}", self.path.display(), self.source)
    }
}

impl std::error::Error for WriteError {}

fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<PathBuf, WriteError> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|source| WriteError {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes the CSV tables, summary, and plot data into `dir`, creating it if
/// needed. Returns the written paths in a fixed order.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>, WriteError> {
    fs::create_dir_all(dir).map_err(|source| WriteError {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(vec![
        write_artifact(dir, "dispatch.csv", &dispatch_csv(report))?,
        write_artifact(dir, "exchange.csv", &exchange_csv(report))?,
        write_artifact(dir, "storage.csv", &storage_csv(report))?,
        write_artifact(dir, "residuals.csv", &residuals_csv(report))?,
        write_artifact(dir, "summary.txt", &summary_text(report))?,
        write_artifact(dir, "plotdata.csv", &plotdata_csv(report))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_report() -> RunReport {
        let mut power = BTreeMap::new();
        power.insert(
            "pv1".to_string(),
            PortVector::new().with(Carrier::Electricity, 2.5),
        );
        RunReport {
            scenario_name: "tiny".into(),
            mode: OperationMode::Autonomous,
            dt_hours: 1.0,
            steps: 2,
            device_names: vec!["pv1".into()],
            device_power: vec![power.clone(), power],
            hub_names: Vec::new(),
            hub_net: vec![Vec::new(), Vec::new()],
            served_demand: vec![PortVector::new().with(Carrier::Electricity, 2.5); 2],
            vented: vec![PortVector::ZERO; 2],
            utility_exchange: vec![PortVector::ZERO; 2],
            pair_names: Vec::new(),
            pair_flows: vec![Vec::new(), Vec::new()],
            storage_names: Vec::new(),
            storage_air_kwh: vec![Vec::new(), Vec::new()],
            storage_thermal_kwh: vec![Vec::new(), Vec::new()],
            node_names: vec!["campus".into()],
            residuals: vec![vec![PortVector::ZERO], vec![PortVector::ZERO]],
            max_residual_kw: 0.0,
            total_cost: 0.0,
            pv_generation_kwh: 5.0,
            demand_kwh: PortVector::new().with(Carrier::Electricity, 5.0),
            served_kwh: PortVector::new().with(Carrier::Electricity, 5.0),
            principles: PrincipleReport {
                clean_source: true,
                storage: false,
                conversion_paths: false,
                self_use: true,
                ems: false,
            },
        }
    }

    #[test]
    fn dispatch_table_has_one_row_per_step_name_carrier() {
        let report = tiny_report();
        let csv = dispatch_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        // header + 2 steps x (1 device + demand + vent) x 4 carriers
        assert_eq!(lines.len(), 1 + 2 * 3 * 4);
        assert_eq!(lines[0], "step,name,carrier,power_kw");
        assert_eq!(lines[1], "0,pv1,electricity,2.5");
        assert!(lines.contains(&"0,demand,electricity,-2.5"));
    }

    #[test]
    fn summary_formats_the_reference_total() {
        let mut report = tiny_report();
        report.pv_generation_kwh = 109_910.0;
        let summary = summary_text(&report);
        assert!(
            summary.contains("cumulative PV generation: 109.91 MWh\n"),
            "{}",
            summary
        );
        assert!(summary.contains("principle clean_source: pass\n"));
        assert!(summary.contains("principle storage: fail\n"));
        assert!(summary.contains("principles: violated\n"));
    }

    #[test]
    fn plotdata_row_count_is_steps_times_series() {
        let report = tiny_report();
        let text = plotdata_csv(&report);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# series: "));
        assert_eq!(lines[1], "step,series,value");
        let series_count = lines[0].trim_start_matches("# series: ").split(", ").count();
        assert_eq!(lines.len(), 2 + report.steps * series_count);
    }

    #[test]
    fn empty_report_emits_headers_only() {
        let report = RunReport {
            steps: 0,
            device_names: Vec::new(),
            device_power: Vec::new(),
            hub_net: Vec::new(),
            served_demand: Vec::new(),
            vented: Vec::new(),
            utility_exchange: Vec::new(),
            pair_flows: Vec::new(),
            storage_air_kwh: Vec::new(),
            storage_thermal_kwh: Vec::new(),
            residuals: Vec::new(),
            pv_generation_kwh: 0.0,
            demand_kwh: PortVector::ZERO,
            served_kwh: PortVector::ZERO,
            ..tiny_report()
        };
        assert_eq!(dispatch_csv(&report), "step,name,carrier,power_kw\n");
        assert_eq!(exchange_csv(&report), "step,counterparty,carrier,flow_kw\n");
        assert_eq!(storage_csv(&report), "step,device,air_kwh,thermal_kwh\n");
        let summary = summary_text(&report);
        assert!(summary.contains("cumulative PV generation: 0.00 MWh\n"));
        assert!(summary.contains("total served electricity: 0.00 MWh\n"));
    }
}
