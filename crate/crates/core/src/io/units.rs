//! Quantities with explicit unit suffixes, converted to SI.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    /// Ordinary frequency (Hz), not angular.
    Frequency,
    Power,
    Time,
    Pressure,
    Mass,
    Density,
    Temperature,
    /// Bare numbers only.
    Dimensionless,
    /// Any known unit; the number is returned in the unit's SI base.
    Any,
}

const UNITS: &[(&str, Dimension, f64)] = &[
    ("pm", Dimension::Length, 1e-12),
    ("nm", Dimension::Length, 1e-9),
    ("um", Dimension::Length, 1e-6),
    ("µm", Dimension::Length, 1e-6),
    ("μm", Dimension::Length, 1e-6),
    ("mm", Dimension::Length, 1e-3),
    ("cm", Dimension::Length, 1e-2),
    ("m", Dimension::Length, 1.0),
    ("Hz", Dimension::Frequency, 1.0),
    ("kHz", Dimension::Frequency, 1e3),
    ("MHz", Dimension::Frequency, 1e6),
    ("GHz", Dimension::Frequency, 1e9),
    ("nW", Dimension::Power, 1e-9),
    ("uW", Dimension::Power, 1e-6),
    ("µW", Dimension::Power, 1e-6),
    ("μW", Dimension::Power, 1e-6),
    ("mW", Dimension::Power, 1e-3),
    ("W", Dimension::Power, 1.0),
    ("ps", Dimension::Time, 1e-12),
    ("ns", Dimension::Time, 1e-9),
    ("us", Dimension::Time, 1e-6),
    ("µs", Dimension::Time, 1e-6),
    ("μs", Dimension::Time, 1e-6),
    ("ms", Dimension::Time, 1e-3),
    ("s", Dimension::Time, 1.0),
    ("Pa", Dimension::Pressure, 1.0),
    ("kPa", Dimension::Pressure, 1e3),
    ("MPa", Dimension::Pressure, 1e6),
    ("GPa", Dimension::Pressure, 1e9),
    ("pg", Dimension::Mass, 1e-15),
    ("ng", Dimension::Mass, 1e-12),
    ("ug", Dimension::Mass, 1e-9),
    ("µg", Dimension::Mass, 1e-9),
    ("mg", Dimension::Mass, 1e-6),
    ("g", Dimension::Mass, 1e-3),
    ("kg", Dimension::Mass, 1.0),
    ("kg/m3", Dimension::Density, 1.0),
    ("kg/m^3", Dimension::Density, 1.0),
    ("kg/m³", Dimension::Density, 1.0),
    ("g/cm3", Dimension::Density, 1e3),
    ("g/cm^3", Dimension::Density, 1e3),
    ("g/cm³", Dimension::Density, 1e3),
    ("K", Dimension::Temperature, 1.0),
];

/// Parses `"104 nm"`, `"83kHz"`, `"1.5e-3"` and the like.
///
/// A bare number is taken as already SI. A unit of the wrong dimension is an
/// error.
pub fn parse_quantity(text: &str, dimension: Dimension) -> Result<f64> {
    let s = text.trim();
    let split = s
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit() || c == '.' || c == '+' || c == '-' || c == '_')
                && !((c == 'e' || c == 'E') && s[i + 1..].starts_with(|n: char| n.is_ascii_digit() || n == '-' || n == '+'))
        })
        .map_or(s.len(), |(i, _)| i);
    let (number, unit) = (s[..split].replace('_', ""), s[split..].trim());
    let value: f64 = number
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("`{text}` does not start with a number")))?;
    if unit.is_empty() {
        return Ok(value);
    }
    let &(_, dim, factor) = UNITS
        .iter()
        .find(|(name, _, _)| *name == unit)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown unit `{unit}` in `{text}`")))?;
    if dimension != Dimension::Any && dim != dimension {
        return Err(Error::InvalidArgument(format!(
            "`{text}`: expected a {dimension:?} quantity, got a {dim:?} unit"
        )));
    }
    Ok(value * factor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes() {
        assert_eq!(parse_quantity("104 nm", Dimension::Length).unwrap(), 104e-9);
        assert_eq!(parse_quantity("90mm", Dimension::Length).unwrap(), 0.09);
        assert_eq!(parse_quantity("1.5 µm", Dimension::Length).unwrap(), 1.5e-6);
        assert_eq!(parse_quantity("83 kHz", Dimension::Frequency).unwrap(), 83e3);
        assert_eq!(parse_quantity("130 uW", Dimension::Power).unwrap(), 130e-6);
        assert_eq!(parse_quantity("4.79 us", Dimension::Time).unwrap(), 4.79e-6);
        assert_eq!(parse_quantity("0.825 GPa", Dimension::Pressure).unwrap(), 0.825e9);
        assert_eq!(parse_quantity("1e-3", Dimension::Length).unwrap(), 1e-3);
        assert_eq!(parse_quantity("2.5e3 Hz", Dimension::Frequency).unwrap(), 2.5e3);
        assert_eq!(parse_quantity("-3 mm", Dimension::Any).unwrap(), -3e-3);
    }

    #[test]
    fn rejects() {
        assert!(parse_quantity("5 kHz", Dimension::Length).is_err());
        assert!(parse_quantity("nm", Dimension::Length).is_err());
        assert!(parse_quantity("3 furlongs", Dimension::Length).is_err());
        assert!(parse_quantity("3 nm", Dimension::Dimensionless).is_err());
    }
}
