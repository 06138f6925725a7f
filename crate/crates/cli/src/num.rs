//! Deterministic number handling for scenario files and reports.
//!
//! Every number is quantized to nine significant digits the moment it is
//! parsed, so a scenario survives a parse, serialize, parse cycle without
//! drift. Serialization uses the shortest decimal form that reads back to
//! the same value, which for a quantized value never needs more than the
//! nine digits it was built from.

/// Rounds to nine significant decimal digits.
pub fn quantize(value: f64) -> f64 {
    if value == 0.0 || !value.is_finite() {
        return value;
    }
    format!("{:.8e}", value).parse().expect("fixed-format float")
}

/// Shortest decimal form of an already-quantized value. Negative zero prints
/// as plain zero.
pub fn format_number(value: f64) -> String {
    if value == 0.0 {
        return "0".into();
    }
    let magnitude = value.abs();
    if magnitude >= 1e15 || magnitude < 1e-5 {
        // exponent form keeps extreme magnitudes readable and short
        format!("{:e}", value)
    } else {
        format!("{}", value)
    }
}

/// Energy total in MWh with exactly two decimals, rounding halves away from
/// zero. The arithmetic runs on the quantized decimal digit string, so a
/// stored value intended as 1.005 rounds up to 1.01 even though the nearest
/// binary float sits just below it.
pub fn format_mwh(mwh: f64) -> String {
    let negative = mwh < 0.0;
    let text = format!("{:.8e}", mwh.abs());
    let (mantissa, exponent) = text.split_once('e').expect("fixed-format float");
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let exponent: i32 = exponent.parse().expect("fixed-format exponent");
    debug_assert_eq!(digits.len(), 9);
    let value: i128 = digits.parse().expect("mantissa digits");

    // value * 10^(exponent - 8) MWh, wanted in half-up hundredths
    let shift = exponent - 6;
    let hundredths = if shift >= 0 {
        if shift > 24 {
            // far beyond any representable fractional part
            i128::MAX
        } else {
            value.saturating_mul(10i128.pow(shift as u32))
        }
    } else if shift < -24 {
        0
    } else {
        let divisor = 10i128.pow((-shift) as u32);
        let quotient = value / divisor;
        let remainder = value % divisor;
        quotient + if 2 * remainder >= divisor { 1 } else { 0 }
    };

    let sign = if negative && hundredths > 0 { "-" } else { "" };
    format!("{}{}.{:02}", sign, hundredths / 100, hundredths % 100)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_is_idempotent() {
        for v in [0.1, 1.0 / 3.0, 123456.789123, -9.87654321e-7, 0.0, -0.0] {
            let once = quantize(v);
            assert_eq!(quantize(once), once);
        }
    }

    #[test]
    fn format_round_trips_quantized_values() {
        for v in [0.1, 1.0 / 3.0, 45.0, -207.5, 1.00500,
                  3.33333333e-9, 9.87654321e17] {
            let q = quantize(v);
            let text = format_number(q);
            let back: f64 = text.parse().unwrap();
            assert_eq!(quantize(back), q, "text {}", text);
        }
    }

    #[test]
    fn mwh_rounds_half_away_from_zero() {
        assert_eq!(format_mwh(1.005), "1.01");
        assert_eq!(format_mwh(-1.005), "-1.01");
        assert_eq!(format_mwh(1.00499999), "1.00");
        assert_eq!(format_mwh(109.91), "109.91");
        assert_eq!(format_mwh(109.914999), "109.91");
        assert_eq!(format_mwh(109.915), "109.92");
        assert_eq!(format_mwh(0.0), "0.00");
        assert_eq!(format_mwh(-0.0001), "0.00");
        assert_eq!(format_mwh(20.88), "20.88");
    }

    #[test]
    fn mwh_handles_large_and_tiny_magnitudes() {
        assert_eq!(format_mwh(1.23456789e12), "1234567890000.00");
        assert_eq!(format_mwh(4.0e-30), "0.00");
    }
}
