//! Hierarchical energy management.
//!
//! Decisions cascade through three layers. The utility-connection layer
//! picks the operation mode and, when several internets share a utility
//! network, settles their exchange flows as a Nash equilibrium
//! ([`mode`], [`exchange`]). The intra-network layer turns a scenario plus
//! settled exchanges into per-step dispatch setpoints that balance every
//! carrier at every node ([`dispatch`], with [`timescale`] describing how
//! often each carrier's setpoints may move). The component layer synthesizes
//! disturbance-attenuating state feedback for individual devices so they
//! track those setpoints ([`control`]).

pub mod control;
pub mod dispatch;
pub mod exchange;
pub mod mode;
pub mod timescale;

pub use control::{
    dissipation_check, hinf_synthesize, simulate_closed_loop, AttenuationLevel, ControlLaw,
    DeviceDynamics, Trajectory,
};
pub use dispatch::{
    iopf_cooperative, iopf_stackelberg, scenario_stackelberg, DispatchSetpoints,
    InfrastructureAgent, StackelbergDispatch,
};
pub use exchange::{exchange_equilibrium, ExchangeSchedule, MeiAgent};
pub use mode::decide_mode;
pub use timescale::{timescale_schedule, LayerSchedule, LayerTimescales};

use crate::devices::DeviceError;
use crate::game::GameError;
use crate::model::ModelError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmsError {
    #[error("inconsistent horizon")]
    InconsistentHorizon,
    #[error("horizon misaligned")]
    HorizonMisaligned,
    #[error("infeasible dispatch at step {0}")]
    InfeasibleDispatch(usize),
    #[error("attenuation level infeasible")]
    AttenuationInfeasible,
    #[error("dimension error")]
    Dimension,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Game(#[from] GameError),
}
