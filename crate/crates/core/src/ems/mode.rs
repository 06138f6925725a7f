//! Utility-connection layer: operation-mode selection.

use super::EmsError;
use crate::model::{OperationMode, PerCarrier, Profiles};

/// Chooses the operation mode and the utility exchange envelope.
///
/// An islanded system runs autonomously with every exchange bound forced to
/// zero; otherwise the configured bounds pass through unchanged. Price
/// series must cover exactly the forecast horizon.
pub fn decide_mode(
    prices: &PerCarrier<Vec<f64>>,
    forecasts: &Profiles,
    islanded: bool,
    configured_bounds: &PerCarrier<f64>,
) -> Result<(OperationMode, PerCarrier<f64>), EmsError> {
    let horizon = forecasts.horizon();
    for (_, series) in prices.iter() {
        if series.len() != horizon {
            return Err(EmsError::InconsistentHorizon);
        }
    }
    for (_, bound) in configured_bounds.iter() {
        if !bound.is_finite() || *bound < 0.0 {
            return Err(EmsError::InvalidParameter(
                "exchange bounds must be nonnegative".into(),
            ));
        }
    }
    Ok(if islanded {
        (OperationMode::Autonomous, PerCarrier::splat(0.0))
    } else {
        (OperationMode::GridConnected, configured_bounds.clone())
    })
}
