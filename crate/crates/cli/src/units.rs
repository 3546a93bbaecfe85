//! Quantities with explicit units, e.g. `"0.1 dm^2/s"` or `"1e4 mD"`.
//!
//! Values are converted to SI at load time. Temperatures are the exception:
//! the core works in °C, so `K` is shifted rather than scaled.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Time,
    /// Volumetric rate per unit depth (m²/s).
    AreaRate,
    /// Volumetric heat capacity (J/(m³·K)).
    HeatCapacity,
    /// Thermal conductivity (W/(m·K)).
    Conductivity,
    Viscosity,
    Permeability,
    Pressure,
    Temperature,
    Angle,
}

impl Dimension {
    pub fn si_unit(self) -> &'static str {
        match self {
            Dimension::Length => "m",
            Dimension::Time => "s",
            Dimension::AreaRate => "m^2/s",
            Dimension::HeatCapacity => "J/m^3/K",
            Dimension::Conductivity => "W/m/K",
            Dimension::Viscosity => "Pa*s",
            Dimension::Permeability => "m^2",
            Dimension::Pressure => "Pa",
            Dimension::Temperature => "C",
            Dimension::Angle => "rad",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UnitError {
    #[error("expected \"<number> <unit>\", got {0:?}")]
    Format(String),
    #[error("{0:?} is not a number")]
    Number(String),
    #[error("unknown {dim} unit {unit:?} (SI unit is {si})")]
    Unit { dim: &'static str, unit: String, si: &'static str },
}

const YEAR: f64 = dfmheat::SECONDS_PER_YEAR;
const DARCY: f64 = 9.869_233e-13;

/// `(scale, offset)` so that `si = value * scale + offset`.
fn lookup(dim: Dimension, unit: &str) -> Option<(f64, f64)> {
    use Dimension::*;
    let scale = match (dim, unit) {
        (Length, "m") => 1.0,
        (Length, "km") => 1e3,
        (Length, "dm") => 0.1,
        (Length, "cm") => 1e-2,
        (Length, "mm") => 1e-3,
        (Time, "s") => 1.0,
        (Time, "min") => 60.0,
        (Time, "h") => 3600.0,
        (Time, "d" | "day" | "days") => 86_400.0,
        (Time, "yr" | "year" | "years" | "a") => YEAR,
        (AreaRate, "m^2/s") => 1.0,
        (AreaRate, "dm^2/s" | "l/s/m") => 1e-2,
        (AreaRate, "cm^2/s") => 1e-4,
        (AreaRate, "m^2/d") => 1.0 / 86_400.0,
        (HeatCapacity, "J/m^3/K" | "J/m^3K") => 1.0,
        (HeatCapacity, "kJ/m^3/K" | "kJ/m^3K") => 1e3,
        (HeatCapacity, "MJ/m^3/K" | "MJ/m^3K") => 1e6,
        (Conductivity, "W/m/K" | "W/mK" | "J/m/K/s" | "J/mKs") => 1.0,
        (Viscosity, "Pas") => 1.0,
        (Viscosity, "mPas" | "cP") => 1e-3,
        (Viscosity, "P") => 0.1,
        (Permeability, "m^2") => 1.0,
        (Permeability, "D" | "darcy") => DARCY,
        (Permeability, "mD" | "md" | "millidarcy") => DARCY * 1e-3,
        (Pressure, "Pa") => 1.0,
        (Pressure, "kPa") => 1e3,
        (Pressure, "MPa") => 1e6,
        (Pressure, "bar") => 1e5,
        (Temperature, "C" | "°C" | "degC") => 1.0,
        (Temperature, "K") => return Some((1.0, -dfmheat::upscale::KELVIN_OFFSET)),
        (Angle, "rad") => 1.0,
        (Angle, "deg" | "°") => std::f64::consts::PI / 180.0,
        _ => return None,
    };
    Some((scale, 0.0))
}

/// Drops whitespace, multiplication marks and brackets, and maps
/// superscripts, so that `kJ/(m³·K)` and `kJ/m^3K` compare equal.
fn normalize(unit: &str) -> String {
    unit.chars()
        .filter(|c| !c.is_whitespace() && !matches!(c, '*' | '·' | '(' | ')'))
        .flat_map(|c| match c {
            '²' => vec!['^', '2'],
            '³' => vec!['^', '3'],
            c => vec![c],
        })
        .collect()
}

fn dim_name(dim: Dimension) -> &'static str {
    match dim {
        Dimension::Length => "length",
        Dimension::Time => "time",
        Dimension::AreaRate => "rate",
        Dimension::HeatCapacity => "heat capacity",
        Dimension::Conductivity => "conductivity",
        Dimension::Viscosity => "viscosity",
        Dimension::Permeability => "permeability",
        Dimension::Pressure => "pressure",
        Dimension::Temperature => "temperature",
        Dimension::Angle => "angle",
    }
}

/// Parses `"<number> <unit>"` into SI (°C for temperatures).
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, UnitError> {
    let text = text.trim();
    let (num, unit) = text.split_once(char::is_whitespace).ok_or_else(|| UnitError::Format(text.into()))?;
    let value: f64 = num.parse().map_err(|_| UnitError::Number(num.into()))?;
    if !value.is_finite() {
        return Err(UnitError::Number(num.into()));
    }
    let unit = normalize(unit);
    let (scale, offset) = lookup(dim, &unit).ok_or(UnitError::Unit { dim: dim_name(dim), unit, si: dim.si_unit() })?;
    Ok(value * scale + offset)
}

macro_rules! quantity {
    ($(#[$m:meta])* $name:ident, $dim:expr) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
        pub struct $name(pub f64);

        impl $name {
            pub const DIMENSION: Dimension = $dim;

            pub fn si(self) -> f64 {
                self.0
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                parse_quantity(&text, $dim).map($name).map_err(D::Error::custom)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_string())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{} {}", self.0, $dim.si_unit())
            }
        }
    };
}

quantity!(Length, Dimension::Length);
quantity!(Time, Dimension::Time);
quantity!(AreaRate, Dimension::AreaRate);
quantity!(HeatCapacity, Dimension::HeatCapacity);
quantity!(Conductivity, Dimension::Conductivity);
quantity!(Viscosity, Dimension::Viscosity);
quantity!(Permeability, Dimension::Permeability);
quantity!(Pressure, Dimension::Pressure);
quantity!(
    /// Stored in °C.
    Temperature,
    Dimension::Temperature
);
quantity!(Angle, Dimension::Angle);
