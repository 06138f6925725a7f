//! Layered update periods for the intra-network dispatch.
//!
//! Thermal flows move slowly, gas faster, electricity fastest. Each layer
//! refreshes its setpoints on its own period; the periods nest as integer
//! multiples so that whenever a slow layer updates, the faster ones do too.

use super::EmsError;
use crate::model::EmsConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerTimescales {
    /// Thermal-layer update period, hours.
    pub slow_h: f64,
    /// Gas-layer update period, hours.
    pub medium_h: f64,
    /// Electric-layer update period, hours.
    pub fast_h: f64,
}

fn is_integer_multiple(big: f64, small: f64) -> bool {
    let ratio = big / small;
    (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0)
}

impl LayerTimescales {
    pub fn new(slow_h: f64, medium_h: f64, fast_h: f64) -> Result<Self, EmsError> {
        let ts = LayerTimescales {
            slow_h,
            medium_h,
            fast_h,
        };
        ts.validate()?;
        Ok(ts)
    }

    pub fn from_config(cfg: &EmsConfig) -> Result<Self, EmsError> {
        LayerTimescales::new(cfg.slow_step_h, cfg.medium_step_h, cfg.fast_step_h)
    }

    pub fn validate(&self) -> Result<(), EmsError> {
        let steps = [self.slow_h, self.medium_h, self.fast_h];
        if steps.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(EmsError::InvalidParameter(
                "layer periods must be positive".into(),
            ));
        }
        if self.slow_h < self.medium_h || self.medium_h < self.fast_h {
            return Err(EmsError::InvalidParameter(
                "layer periods must not speed up from thermal to electric".into(),
            ));
        }
        if !is_integer_multiple(self.slow_h, self.medium_h)
            || !is_integer_multiple(self.medium_h, self.fast_h)
        {
            return Err(EmsError::InvalidParameter(
                "layer periods must nest as integer multiples".into(),
            ));
        }
        Ok(())
    }
}

/// Update instants per layer, in hours from the start of the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSchedule {
    pub slow_instants_h: Vec<f64>,
    pub medium_instants_h: Vec<f64>,
    pub fast_instants_h: Vec<f64>,
}

impl LayerSchedule {
    /// Whether `t` is an update instant of the given list, to 1e-9 h.
    pub fn contains(instants: &[f64], t: f64) -> bool {
        instants.iter().any(|i| (i - t).abs() <= 1e-9)
    }
}

/// Expands the per-layer update instants over a horizon.
pub fn timescale_schedule(
    ts: &LayerTimescales,
    horizon_h: f64,
) -> Result<LayerSchedule, EmsError> {
    ts.validate()?;
    if !horizon_h.is_finite() || horizon_h <= 0.0 || !is_integer_multiple(horizon_h, ts.slow_h) {
        return Err(EmsError::HorizonMisaligned);
    }
    let instants = |step: f64| {
        let n = (horizon_h / step).round() as usize;
        (0..n).map(|k| k as f64 * step).collect::<Vec<f64>>()
    };
    Ok(LayerSchedule {
        slow_instants_h: instants(ts.slow_h),
        medium_instants_h: instants(ts.medium_h),
        fast_instants_h: instants(ts.fast_h),
    })
}
