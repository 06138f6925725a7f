//! Source, storage, and plant models.
//!
//! The centerpiece is a trigeneration compressed-air storage hub that charges
//! two buckets (a compressed-air store plus a thermal store fed by compression
//! heat and collected solar heat) and discharges electricity, heat, and
//! cooling. Solar sources cover photovoltaics, solar chimneys, and
//! full-spectrum collectors that split irradiance between a photovoltaic band
//! and an infrared thermal band.

use thiserror::Error;

use crate::model::{Carrier, NodeId, PerCarrier, PortVector};

/// Fraction of solar irradiance in the ultraviolet and visible band usable by
/// photovoltaic conversion in a full-spectrum collector.
pub const FULL_SPECTRUM_PV_FRACTION: f64 = 0.58;
/// Fraction of solar irradiance in the infrared band captured as heat.
pub const FULL_SPECTRUM_THERMAL_FRACTION: f64 = 0.42;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("negative charge power")]
    NegativeChargePower,
    #[error("negative discharge request")]
    NegativeDischargeRequest,
    #[error("spectrum split undefined for this source")]
    SpectrumSplitUndefined,
    #[error("time step must be positive")]
    InvalidTimeStep,
    #[error("value must be finite")]
    NotFinite,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// State and parameters of a trigeneration compressed-air storage hub.
///
/// Charging compresses air (efficiency `eta_c`) and captures compression heat
/// (`eta_h`) alongside collected solar heat into a thermal store. Discharging
/// expands stored air through a turbine (`eta_t`), optionally boosted by
/// thermal-store preheat (`beta` extra kWh of electricity per kWh of preheat),
/// and recovers cooling from the expanded air (`kappa` kWh per kWh of air
/// draw). `lambda` is the per-step standing loss applied to both stores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StCaesState {
    pub air_store_kwh: f64,
    pub air_capacity_kwh: f64,
    pub thermal_store_kwh: f64,
    pub thermal_capacity_kwh: f64,
    pub eta_c: f64,
    pub eta_h: f64,
    pub lambda: f64,
    pub eta_t: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl StCaesState {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        air_store_kwh: f64,
        air_capacity_kwh: f64,
        thermal_store_kwh: f64,
        thermal_capacity_kwh: f64,
        eta_c: f64,
        eta_h: f64,
        lambda: f64,
        eta_t: f64,
        beta: f64,
        kappa: f64,
    ) -> Result<Self, DeviceError> {
        let state = StCaesState {
            air_store_kwh,
            air_capacity_kwh,
            thermal_store_kwh,
            thermal_capacity_kwh,
            eta_c,
            eta_h,
            lambda,
            eta_t,
            beta,
            kappa,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let fields = [
            self.air_store_kwh,
            self.air_capacity_kwh,
            self.thermal_store_kwh,
            self.thermal_capacity_kwh,
            self.eta_c,
            self.eta_h,
            self.lambda,
            self.eta_t,
            self.beta,
            self.kappa,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(DeviceError::NotFinite);
        }
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(DeviceError::InvalidParameter(what.to_string()))
            }
        };
        check(self.air_capacity_kwh >= 0.0, "air capacity must be nonnegative")?;
        check(
            self.thermal_capacity_kwh >= 0.0,
            "thermal capacity must be nonnegative",
        )?;
        check(
            (0.0..=self.air_capacity_kwh).contains(&self.air_store_kwh),
            "air store must lie within [0, capacity]",
        )?;
        check(
            (0.0..=self.thermal_capacity_kwh).contains(&self.thermal_store_kwh),
            "thermal store must lie within [0, capacity]",
        )?;
        check(
            self.eta_c > 0.0 && self.eta_c <= 1.0,
            "compression efficiency must lie in (0, 1]",
        )?;
        check(
            (0.0..1.0).contains(&self.eta_h),
            "heat capture fraction must lie in [0, 1)",
        )?;
        check(
            self.eta_c + self.eta_h <= 1.0,
            "compression and heat capture fractions must sum to at most one",
        )?;
        check(
            (0.0..1.0).contains(&self.lambda),
            "standing loss must lie in [0, 1)",
        )?;
        check(
            self.eta_t > 0.0 && self.eta_t <= 1.0,
            "turbine efficiency must lie in (0, 1]",
        )?;
        check(
            (0.0..=1.0).contains(&self.beta),
            "preheat boost must lie in [0, 1]",
        )?;
        check(self.kappa >= 0.0, "cooling recovery must be nonnegative")?;
        check(
            self.eta_t + self.kappa <= 1.0,
            "turbine plus cooling recovery must not exceed one",
        )?;
        Ok(())
    }

    fn decayed(mut self) -> Self {
        self.air_store_kwh *= 1.0 - self.lambda;
        self.thermal_store_kwh *= 1.0 - self.lambda;
        self
    }
}

/// One charging step.
///
/// Returns the new state plus the accepted electric and solar-heat powers in
/// kW. Acceptance scales down when a store saturates: the air path gates the
/// electric input, the thermal path gates the combined compression-heat and
/// solar-heat inflow.
pub fn st_caes_charge(
    state: &StCaesState,
    elec_in_kw: f64,
    solar_heat_kw: f64,
    dt_h: f64,
) -> Result<(StCaesState, f64, f64), DeviceError> {
    if !elec_in_kw.is_finite() || !solar_heat_kw.is_finite() || !dt_h.is_finite() {
        return Err(DeviceError::NotFinite);
    }
    if elec_in_kw < 0.0 || solar_heat_kw < 0.0 {
        return Err(DeviceError::NegativeChargePower);
    }
    if dt_h < 0.0 {
        return Err(DeviceError::InvalidTimeStep);
    }
    if dt_h == 0.0 {
        return Ok((*state, 0.0, 0.0));
    }

    let mut s = state.decayed();

    let air_headroom = s.air_capacity_kwh - s.air_store_kwh;
    let air_attempt = s.eta_c * elec_in_kw * dt_h;
    let accepted_elec = if air_attempt <= air_headroom {
        elec_in_kw
    } else {
        air_headroom / (s.eta_c * dt_h)
    };
    s.air_store_kwh = (s.air_store_kwh + s.eta_c * accepted_elec * dt_h).min(s.air_capacity_kwh);

    let thermal_headroom = s.thermal_capacity_kwh - s.thermal_store_kwh;
    let inflow_kw = s.eta_h * accepted_elec + solar_heat_kw;
    let scale = if inflow_kw * dt_h <= thermal_headroom || inflow_kw == 0.0 {
        1.0
    } else {
        thermal_headroom / (inflow_kw * dt_h)
    };
    s.thermal_store_kwh =
        (s.thermal_store_kwh + inflow_kw * scale * dt_h).min(s.thermal_capacity_kwh);
    let accepted_heat = solar_heat_kw * scale;

    Ok((s, accepted_elec, accepted_heat))
}

/// One discharging step.
///
/// Serves the electric request first (turbine draw on the air store, then
/// preheat boost from the thermal store), recovers cooling from the air draw,
/// and serves the heat request from the remaining thermal store. Returns the
/// new state and the delivered powers in kW; delivery never exceeds the
/// request on any carrier.
pub fn st_caes_discharge(
    state: &StCaesState,
    elec_req_kw: f64,
    heat_req_kw: f64,
    cool_req_kw: f64,
    dt_h: f64,
) -> Result<(StCaesState, PortVector), DeviceError> {
    if ![elec_req_kw, heat_req_kw, cool_req_kw, dt_h]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(DeviceError::NotFinite);
    }
    if elec_req_kw < 0.0 || heat_req_kw < 0.0 || cool_req_kw < 0.0 {
        return Err(DeviceError::NegativeDischargeRequest);
    }
    if dt_h <= 0.0 {
        return Err(DeviceError::InvalidTimeStep);
    }

    let mut s = state.decayed();

    let elec_target = elec_req_kw * dt_h;
    let air_draw = s.air_store_kwh.min(elec_target / s.eta_t);
    let mut elec = s.eta_t * air_draw;
    s.air_store_kwh -= air_draw;

    let shortfall = elec_target - elec;
    if s.beta > 0.0 && shortfall > 0.0 {
        let preheat = s.thermal_store_kwh.min(shortfall / s.beta);
        elec += s.beta * preheat;
        s.thermal_store_kwh -= preheat;
    }

    let cooling = (s.kappa * air_draw).min(cool_req_kw * dt_h);
    let heat = s.thermal_store_kwh.min(heat_req_kw * dt_h);
    s.thermal_store_kwh -= heat;

    let delivered = PortVector::new()
        .with(Carrier::Electricity, elec / dt_h)
        .with(Carrier::Heat, heat / dt_h)
        .with(Carrier::Cooling, cooling / dt_h);
    Ok((s, delivered))
}

/// Solar source families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolarKind {
    Photovoltaic,
    Chimney,
    FullSpectrum,
}

impl SolarKind {
    pub fn name(self) -> &'static str {
        match self {
            SolarKind::Photovoltaic => "pv",
            SolarKind::Chimney => "chimney",
            SolarKind::FullSpectrum => "full_spectrum",
        }
    }
}

/// Parameters shared by the solar source families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarSourceSpec {
    pub kind: SolarKind,
    pub rated_kw: f64,
    /// Conversion efficiency of the (photovoltaic) electric path.
    pub efficiency: f64,
    /// Conversion efficiency of the thermal path (full-spectrum only).
    pub thermal_efficiency: f64,
    pub area_m2: f64,
    /// Irradiance fraction feeding the electric path (full-spectrum only).
    pub pv_fraction: f64,
    /// Irradiance fraction feeding the thermal path (full-spectrum only).
    pub thermal_fraction: f64,
}

impl SolarSourceSpec {
    pub fn new(kind: SolarKind, rated_kw: f64, efficiency: f64, area_m2: f64) -> Self {
        SolarSourceSpec {
            kind,
            rated_kw,
            efficiency,
            thermal_efficiency: efficiency,
            area_m2,
            pv_fraction: FULL_SPECTRUM_PV_FRACTION,
            thermal_fraction: FULL_SPECTRUM_THERMAL_FRACTION,
        }
    }

    pub fn with_thermal_efficiency(mut self, eta: f64) -> Self {
        self.thermal_efficiency = eta;
        self
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let fields = [
            self.rated_kw,
            self.efficiency,
            self.thermal_efficiency,
            self.area_m2,
            self.pv_fraction,
            self.thermal_fraction,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(DeviceError::NotFinite);
        }
        if self.rated_kw < 0.0 || self.area_m2 < 0.0 {
            return Err(DeviceError::InvalidParameter(
                "rating and area must be nonnegative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.efficiency)
            || !(0.0..=1.0).contains(&self.thermal_efficiency)
        {
            return Err(DeviceError::InvalidParameter(
                "conversion efficiency must lie in [0, 1]".into(),
            ));
        }
        if (self.pv_fraction + self.thermal_fraction - 1.0).abs() > 1e-12
            || self.pv_fraction < 0.0
            || self.thermal_fraction < 0.0
        {
            return Err(DeviceError::InvalidParameter(
                "spectrum fractions must be nonnegative and sum to one".into(),
            ));
        }
        Ok(())
    }

    /// Reference photovoltaic array sized so the reference-year profile
    /// yields roughly 80 MWh of annual energy on the Qinghai plateau.
    pub fn qinghai_photovoltaic() -> Self {
        SolarSourceSpec::new(SolarKind::Photovoltaic, 45.0, 0.17, 207.0)
    }
}

/// Instantaneous electric and thermal output of a full-spectrum collector,
/// in kW, from irradiance in W/m².
pub fn full_spectrum_output(
    irradiance_w_m2: f64,
    spec: &SolarSourceSpec,
) -> Result<(f64, f64), DeviceError> {
    if spec.kind != SolarKind::FullSpectrum {
        return Err(DeviceError::SpectrumSplitUndefined);
    }
    let s = irradiance_w_m2.max(0.0);
    let elec = spec.pv_fraction * s * spec.area_m2 * spec.efficiency / 1000.0;
    let heat = spec.thermal_fraction * s * spec.area_m2 * spec.thermal_efficiency / 1000.0;
    Ok((elec, heat))
}

/// Photovoltaic output series in kW from an irradiance series in W/m²,
/// clipped at the rated power.
pub fn pv_output(irradiance_w_m2: &[f64], spec: &SolarSourceSpec) -> Vec<f64> {
    irradiance_w_m2
        .iter()
        .map(|&s| {
            (s.max(0.0) * spec.area_m2 * spec.efficiency / 1000.0).min(spec.rated_kw)
        })
        .collect()
}

/// Solar chimney electric output in kW, clipped to `[0, rated]`.
pub fn chimney_output(irradiance_w_m2: f64, spec: &SolarSourceSpec) -> f64 {
    (spec.efficiency * irradiance_w_m2.max(0.0) * spec.area_m2 / 1000.0).min(spec.rated_kw)
}

/// Role of the dual-role industrial plant in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantMode {
    /// The plant draws electricity as a controllable load.
    Load,
    /// The plant's solar-thermal block produces electricity and heat.
    Generator,
}

/// A solar-thermal industrial plant that acts either as an electric load or
/// as a combined electricity-and-heat generator backed by a molten-salt
/// store held at its temperature setpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualRolePlantSpec {
    pub mode: PlantMode,
    pub load_kw: f64,
    pub gen_elec_kw: f64,
    pub gen_heat_kw: f64,
    pub salt_setpoint_c: f64,
    pub salt_tolerance_c: f64,
}

impl DualRolePlantSpec {
    pub fn load(load_kw: f64) -> Self {
        DualRolePlantSpec {
            mode: PlantMode::Load,
            load_kw,
            gen_elec_kw: 0.0,
            gen_heat_kw: 0.0,
            salt_setpoint_c: 600.0,
            salt_tolerance_c: 2.0,
        }
    }

    pub fn generator(gen_elec_kw: f64, gen_heat_kw: f64) -> Self {
        DualRolePlantSpec {
            mode: PlantMode::Generator,
            load_kw: 0.0,
            gen_elec_kw,
            gen_heat_kw,
            salt_setpoint_c: 600.0,
            salt_tolerance_c: 2.0,
        }
    }

    pub fn is_generator(&self) -> bool {
        self.mode == PlantMode::Generator
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let fields = [
            self.load_kw,
            self.gen_elec_kw,
            self.gen_heat_kw,
            self.salt_setpoint_c,
            self.salt_tolerance_c,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(DeviceError::NotFinite);
        }
        if self.load_kw < 0.0 || self.gen_elec_kw < 0.0 || self.gen_heat_kw < 0.0 {
            return Err(DeviceError::InvalidParameter(
                "plant powers must be nonnegative".into(),
            ));
        }
        if self.salt_tolerance_c < 0.0 {
            return Err(DeviceError::InvalidParameter(
                "salt temperature tolerance must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Net injection of the plant at one step: a negative electric entry in load
/// mode, positive electricity and heat in generator mode.
pub fn dual_role_plant(spec: &DualRolePlantSpec) -> PortVector {
    match spec.mode {
        PlantMode::Load => PortVector::new().with(Carrier::Electricity, -spec.load_kw),
        PlantMode::Generator => PortVector::new()
            .with(Carrier::Electricity, spec.gen_elec_kw)
            .with(Carrier::Heat, spec.gen_heat_kw),
    }
}

/// Gas-fired combined heat and power unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasChpSpec {
    pub elec_efficiency: f64,
    pub heat_efficiency: f64,
    pub max_gas_kw: f64,
}

impl GasChpSpec {
    pub fn validate(&self) -> Result<(), DeviceError> {
        if ![self.elec_efficiency, self.heat_efficiency, self.max_gas_kw]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(DeviceError::NotFinite);
        }
        if self.elec_efficiency <= 0.0
            || self.heat_efficiency < 0.0
            || self.elec_efficiency + self.heat_efficiency > 1.0
        {
            return Err(DeviceError::InvalidParameter(
                "generation efficiencies must be positive and sum to at most one".into(),
            ));
        }
        if self.max_gas_kw < 0.0 {
            return Err(DeviceError::InvalidParameter(
                "gas rating must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Fixed net-injection profile device (building-integrated generation,
/// aggregated sub-loads, and similar).
#[derive(Debug, Clone, PartialEq)]
pub struct NetProfileSpec {
    /// Profile name per carrier; absent carriers inject nothing.
    pub series: PerCarrier<Option<String>>,
    pub scale: f64,
    /// Positive injections may be curtailed by the dispatcher.
    pub curtailable: bool,
}

impl NetProfileSpec {
    pub fn validate(&self) -> Result<(), DeviceError> {
        if !self.scale.is_finite() {
            return Err(DeviceError::NotFinite);
        }
        Ok(())
    }
}

/// Trigeneration storage device parameters inside a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct StCaesSpec {
    /// Initial state and physical parameters.
    pub state: StCaesState,
    pub max_charge_kw: f64,
    pub max_discharge_kw: f64,
    /// Optional profile of collected solar heat fed to the thermal store
    /// while charging, kW.
    pub solar_heat_series: Option<String>,
}

impl StCaesSpec {
    pub fn validate(&self) -> Result<(), DeviceError> {
        self.state.validate()?;
        if !self.max_charge_kw.is_finite() || !self.max_discharge_kw.is_finite() {
            return Err(DeviceError::NotFinite);
        }
        if self.max_charge_kw < 0.0 || self.max_discharge_kw < 0.0 {
            return Err(DeviceError::InvalidParameter(
                "charge and discharge ratings must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeviceKind {
    Solar(SolarSourceSpec),
    StCaes(StCaesSpec),
    Plant(DualRolePlantSpec),
    GasChp(GasChpSpec),
    NetProfile(NetProfileSpec),
}

impl DeviceKind {
    pub fn validate(&self) -> Result<(), DeviceError> {
        match self {
            DeviceKind::Solar(s) => s.validate(),
            DeviceKind::StCaes(s) => s.validate(),
            DeviceKind::Plant(s) => s.validate(),
            DeviceKind::GasChp(s) => s.validate(),
            DeviceKind::NetProfile(s) => s.validate(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            DeviceKind::Solar(s) => s.kind.name(),
            DeviceKind::StCaes(_) => "st_caes",
            DeviceKind::Plant(_) => "plant",
            DeviceKind::GasChp(_) => "gas_chp",
            DeviceKind::NetProfile(_) => "profile",
        }
    }

    /// Whether the device can inject power into the network.
    pub fn is_source(&self) -> bool {
        match self {
            DeviceKind::Solar(_) => true,
            DeviceKind::StCaes(_) => true,
            DeviceKind::Plant(spec) => spec.is_generator(),
            DeviceKind::GasChp(_) => true,
            DeviceKind::NetProfile(_) => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    pub id: String,
    pub node: NodeId,
    pub kind: DeviceKind,
}

/// Deterministic hourly irradiance for one reference year on the Qinghai
/// plateau, W/m²: a half-sine day shape scaled by a seasonal envelope.
pub fn reference_year_irradiance() -> Vec<f64> {
    let mut out = Vec::with_capacity(8760);
    for day in 0..365u32 {
        let season = 0.78
            + 0.22
                * (2.0 * std::f64::consts::PI * (day as f64 - 172.0) / 365.0).cos();
        for hour in 0..24u32 {
            let value = if (6..=18).contains(&hour) {
                let phase = std::f64::consts::PI * (hour as f64 - 6.0) / 12.0;
                1050.0 * season * phase.sin()
            } else {
                0.0
            };
            out.push(value);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn store(air: f64, thermal: f64) -> StCaesState {
        StCaesState::new(air, 100.0, thermal, 50.0, 0.72, 0.25, 0.0, 0.6, 0.0, 0.1).unwrap()
    }

    #[test]
    fn state_rejects_efficiency_sum_over_one() {
        let err = StCaesState::new(0.0, 10.0, 0.0, 10.0, 0.8, 0.3, 0.0, 0.6, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, DeviceError::InvalidParameter(_)));
    }

    #[test]
    fn state_rejects_store_above_capacity() {
        let err = StCaesState::new(11.0, 10.0, 0.0, 10.0, 0.7, 0.2, 0.0, 0.6, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, DeviceError::InvalidParameter(_)));
    }

    #[test]
    fn charge_splits_input_between_stores() {
        let s = store(0.0, 0.0);
        let (after, elec, heat) = st_caes_charge(&s, 10.0, 4.0, 1.0).unwrap();
        assert_relative_eq!(after.air_store_kwh, 7.2, max_relative = 1e-12);
        assert_relative_eq!(after.thermal_store_kwh, 0.25 * 10.0 + 4.0, max_relative = 1e-12);
        assert_eq!(elec, 10.0);
        assert_eq!(heat, 4.0);
    }

    #[test]
    fn charge_full_air_store_accepts_zero_elec() {
        let s = store(100.0, 0.0);
        let (after, elec, heat) = st_caes_charge(&s, 10.0, 4.0, 1.0).unwrap();
        assert_eq!(elec, 0.0);
        assert_eq!(heat, 4.0);
        assert_eq!(after.air_store_kwh, 100.0);
        assert_relative_eq!(after.thermal_store_kwh, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn charge_scales_elec_when_air_saturates() {
        let s = store(96.4, 0.0);
        let (after, elec, _) = st_caes_charge(&s, 10.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(elec, 3.6 / 0.72, max_relative = 1e-12);
        assert_relative_eq!(after.air_store_kwh, 100.0, max_relative = 1e-12);
    }

    #[test]
    fn charge_scales_heat_when_thermal_saturates() {
        let s = store(0.0, 48.0);
        let (after, elec, heat) = st_caes_charge(&s, 4.0, 3.0, 1.0).unwrap();
        assert_eq!(elec, 4.0);
        let inflow = 0.25 * 4.0 + 3.0;
        let scale = 2.0 / inflow;
        assert_relative_eq!(heat, 3.0 * scale, max_relative = 1e-12);
        assert_relative_eq!(after.thermal_store_kwh, 50.0, max_relative = 1e-12);
    }

    #[test]
    fn idle_step_decays_stores() {
        let mut s = store(50.0, 20.0);
        s.lambda = 0.01;
        let (after, elec, heat) = st_caes_charge(&s, 0.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(after.air_store_kwh, 49.5, max_relative = 1e-12);
        assert_relative_eq!(after.thermal_store_kwh, 19.8, max_relative = 1e-12);
        assert_eq!((elec, heat), (0.0, 0.0));
    }

    #[test]
    fn charge_rejects_negative_power() {
        let s = store(0.0, 0.0);
        assert_eq!(
            st_caes_charge(&s, -1.0, 0.0, 1.0).unwrap_err(),
            DeviceError::NegativeChargePower
        );
    }

    #[test]
    fn discharge_drains_air_through_turbine() {
        let s = store(100.0, 0.0);
        let (after, delivered) = st_caes_discharge(&s, 1000.0, 0.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(delivered.get(Carrier::Electricity), 60.0, max_relative = 1e-12);
        assert_eq!(after.air_store_kwh, 0.0);
    }

    #[test]
    fn discharge_serves_heat_from_thermal_store() {
        let s = store(0.0, 30.0);
        let (after, delivered) = st_caes_discharge(&s, 0.0, 12.0, 0.0, 1.0).unwrap();
        assert_eq!(delivered.get(Carrier::Heat), 12.0);
        assert_relative_eq!(after.thermal_store_kwh, 18.0, max_relative = 1e-12);
    }

    #[test]
    fn discharge_recovers_cooling_from_air_draw() {
        let s = store(100.0, 0.0);
        let (_, delivered) = st_caes_discharge(&s, 6.0, 0.0, 100.0, 1.0).unwrap();
        let air_draw = 6.0 / 0.6;
        assert_relative_eq!(
            delivered.get(Carrier::Cooling),
            0.1 * air_draw,
            max_relative = 1e-12
        );
    }

    #[test]
    fn discharge_empty_stores_delivers_nothing() {
        let s = store(0.0, 0.0);
        let (_, delivered) = st_caes_discharge(&s, 5.0, 5.0, 5.0, 1.0).unwrap();
        assert_eq!(delivered, PortVector::ZERO);
    }

    #[test]
    fn discharge_zero_requests_only_decay() {
        let mut s = store(10.0, 10.0);
        s.lambda = 0.02;
        let (after, delivered) = st_caes_discharge(&s, 0.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(delivered, PortVector::ZERO);
        assert_relative_eq!(after.air_store_kwh, 9.8, max_relative = 1e-12);
    }

    #[test]
    fn discharge_rejects_negative_request() {
        let s = store(10.0, 10.0);
        assert_eq!(
            st_caes_discharge(&s, 0.0, -0.1, 0.0, 1.0).unwrap_err(),
            DeviceError::NegativeDischargeRequest
        );
    }

    #[test]
    fn round_trip_efficiency_is_compression_times_turbine() {
        let s = StCaesState::new(0.0, 1000.0, 0.0, 0.0, 0.72, 0.0, 0.0, 0.6, 0.0, 0.0).unwrap();
        let input = 100.0;
        let (charged, accepted, _) = st_caes_charge(&s, input, 0.0, 1.0).unwrap();
        assert_eq!(accepted, input);
        let (emptied, delivered) = st_caes_discharge(&charged, 1e6, 0.0, 0.0, 1.0).unwrap();
        let out = delivered.get(Carrier::Electricity);
        assert!((out - 0.72 * 0.6 * input).abs() < 1e-9);
        assert_eq!(emptied.air_store_kwh, 0.0);
    }

    #[test]
    fn preheat_boost_tops_up_electric_delivery() {
        let s = StCaesState::new(10.0, 100.0, 20.0, 50.0, 0.7, 0.2, 0.0, 0.5, 0.3, 0.0).unwrap();
        let (after, delivered) = st_caes_discharge(&s, 8.0, 0.0, 0.0, 1.0).unwrap();
        let from_air = 0.5 * 10.0;
        let shortfall = 8.0 - from_air;
        let preheat = (shortfall / 0.3_f64).min(20.0);
        assert_relative_eq!(
            delivered.get(Carrier::Electricity),
            from_air + 0.3 * preheat,
            max_relative = 1e-12
        );
        assert_relative_eq!(after.thermal_store_kwh, 20.0 - preheat, max_relative = 1e-12);
    }

    #[test]
    fn full_spectrum_splits_bands() {
        let spec = SolarSourceSpec::new(SolarKind::FullSpectrum, 100.0, 0.2, 2.0)
            .with_thermal_efficiency(0.5);
        let (elec, heat) = full_spectrum_output(500.0, &spec).unwrap();
        assert_relative_eq!(elec, 0.116, max_relative = 1e-12);
        assert_relative_eq!(heat, 0.21, max_relative = 1e-12);
    }

    #[test]
    fn full_spectrum_unit_efficiency_recovers_fractions() {
        let spec = SolarSourceSpec::new(SolarKind::FullSpectrum, 100.0, 1.0, 1.0);
        let (elec, heat) = full_spectrum_output(1000.0, &spec).unwrap();
        assert_relative_eq!(elec, 0.58, max_relative = 1e-12);
        assert_relative_eq!(heat, 0.42, max_relative = 1e-12);
    }

    #[test]
    fn full_spectrum_rejects_other_kinds() {
        let spec = SolarSourceSpec::new(SolarKind::Photovoltaic, 10.0, 0.2, 10.0);
        assert_eq!(
            full_spectrum_output(500.0, &spec).unwrap_err(),
            DeviceError::SpectrumSplitUndefined
        );
    }

    #[test]
    fn pv_output_clips_at_rating() {
        let spec = SolarSourceSpec::new(SolarKind::Photovoltaic, 1.0, 0.2, 10.0);
        let series = pv_output(&[0.0, 200.0, 1000.0], &spec);
        assert_eq!(series[0], 0.0);
        assert_relative_eq!(series[1], 0.4, max_relative = 1e-12);
        assert_eq!(series[2], 1.0);
    }

    #[test]
    fn chimney_output_matches_linear_law() {
        let spec = SolarSourceSpec::new(SolarKind::Chimney, 10.0, 0.01, 100.0);
        assert_relative_eq!(chimney_output(800.0, &spec), 0.8, max_relative = 1e-12);
        assert_eq!(chimney_output(0.0, &spec), 0.0);
    }

    #[test]
    fn plant_load_mode_draws_electricity() {
        let p = DualRolePlantSpec::load(50.0);
        assert_eq!(
            dual_role_plant(&p),
            PortVector::new().with(Carrier::Electricity, -50.0)
        );
        assert_eq!(p.salt_setpoint_c, 600.0);
        assert_eq!(p.salt_tolerance_c, 2.0);
    }

    #[test]
    fn plant_generator_mode_injects_heat_and_power() {
        let p = DualRolePlantSpec::generator(5.0, 8.0);
        let out = dual_role_plant(&p);
        assert_eq!(out.get(Carrier::Electricity), 5.0);
        assert_eq!(out.get(Carrier::Heat), 8.0);
    }

    #[test]
    fn reference_year_shape() {
        let profile = reference_year_irradiance();
        assert_eq!(profile.len(), 8760);
        assert!(profile.iter().all(|&v| (0.0..=1100.0).contains(&v)));
        assert_eq!(profile[0], 0.0);
        assert!(profile[172 * 24 + 12] > 1000.0);
    }

    #[test]
    fn reference_pv_annual_energy_near_eighty_mwh() {
        let profile = reference_year_irradiance();
        let spec = SolarSourceSpec::qinghai_photovoltaic();
        let annual: f64 = pv_output(&profile, &spec).iter().sum();
        assert!(
            (annual - 80_000.0).abs() <= 800.0,
            "annual PV energy {annual} kWh out of band"
        );
    }
}
