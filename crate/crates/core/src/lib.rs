//! Modeling and operations toolkit for multi-carrier micro energy internets.
//!
//! A micro energy internet (MEI) couples electricity, heat, cooling, and gas
//! through energy hubs, distributed renewable sources, and storage. This crate
//! provides the building blocks to describe such systems and operate them:
//!
//! * [`model`]: carriers, port vectors, hub coupling matrices, network
//!   topology, nodal balance accounting, and design-principle checks.
//! * [`devices`]: source and storage models: trigeneration compressed-air
//!   storage, photovoltaics, solar chimneys, full-spectrum collectors, and a
//!   dual-role industrial plant.
//! * [`game`]: small-scale game solvers: golden-section line search,
//!   best-response iteration for Nash equilibria, fictitious play for
//!   zero-sum matrix games, and bilevel Stackelberg search.
//! * [`planner`]: bi-objective planning: weighted Pareto sweeps, nadir
//!   disagreement points, Nash bargaining, and hub portfolio selection.
//! * [`ems`]: the three-layer energy management stack: operation-mode
//!   decisions and exchange equilibria, integrated optimal power flow
//!   dispatch, nested timescales, and H-infinity disturbance-attenuating
//!   control of fast device dynamics.
//!
//! All quantities use kW for power, kWh for energy, and hours for time.
//! Demand is represented as negative injection throughout.

pub mod devices;
pub mod ems;
pub mod game;
pub mod model;
pub mod planner;
